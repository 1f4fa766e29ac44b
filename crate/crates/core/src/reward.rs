//! Designer reward functions `g(v, p)` and the virtual values built on them.

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};

/// Reward classes with distinct optimal-mechanism structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardClass {
    WelfareLike,
    RevenueLike,
    PositiveTradeoff,
    NegativeTradeoff,
}

impl RewardClass {
    pub fn name(self) -> &'static str {
        match self {
            RewardClass::WelfareLike => "welfare_like",
            RewardClass::RevenueLike => "revenue_like",
            RewardClass::PositiveTradeoff => "positive_tradeoff",
            RewardClass::NegativeTradeoff => "negative_tradeoff",
        }
    }
}

/// Per-day designer reward.
///
/// Linear rewards are stored as `alpha * v + beta * p`; a negative tradeoff
/// therefore carries `beta < 0` here even though configs supply it with a
/// positive `beta` and an explicit minus sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewardConfig", into = "RewardConfig")]
pub enum RewardFn {
    /// `g(v, p) = f(v)` with `f` non-decreasing, piecewise linear through
    /// the given points.
    Welfare {
        points: Vec<[f64; 2]>,
    },
    Linear {
        alpha: f64,
        beta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardConfig {
    Linear {
        alpha: f64,
        beta: f64,
    },
    /// `g(v, p) = alpha * v - beta * p` with `alpha >= beta > 0`.
    NegativeTradeoff {
        alpha: f64,
        beta: f64,
    },
    Welfare {
        f_points: Vec<[f64; 2]>,
    },
}

impl TryFrom<RewardConfig> for RewardFn {
    type Error = Error;

    fn try_from(cfg: RewardConfig) -> Result<Self> {
        match cfg {
            RewardConfig::Linear { alpha, beta } => RewardFn::linear(alpha, beta),
            RewardConfig::NegativeTradeoff { alpha, beta } => {
                RewardFn::negative_tradeoff(alpha, beta)
            }
            RewardConfig::Welfare { f_points } => RewardFn::welfare(f_points),
        }
    }
}

impl From<RewardFn> for RewardConfig {
    fn from(g: RewardFn) -> Self {
        match g {
            RewardFn::Welfare { points } => RewardConfig::Welfare { f_points: points },
            RewardFn::Linear { alpha, beta } => RewardConfig::Linear { alpha, beta },
        }
    }
}

impl RewardFn {
    pub fn linear(alpha: f64, beta: f64) -> Result<Self> {
        let g = RewardFn::Linear { alpha, beta };
        g.class()?;
        Ok(g)
    }

    /// `alpha * v - beta * p` from the positive pair `(alpha, beta)`.
    pub fn negative_tradeoff(alpha: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidReward(format!(
                "negative tradeoff needs beta > 0, got {beta}"
            )));
        }
        Self::linear(alpha, -beta)
    }

    pub fn revenue() -> Self {
        RewardFn::Linear {
            alpha: 0.0,
            beta: 1.0,
        }
    }

    pub fn consumer_surplus() -> Self {
        RewardFn::Linear {
            alpha: 1.0,
            beta: -1.0,
        }
    }

    /// Social welfare `g(v, p) = v`.
    pub fn welfare_identity() -> Self {
        RewardFn::Linear {
            alpha: 1.0,
            beta: 0.0,
        }
    }

    /// Tabulated welfare-like reward. A leading `(0, 0)` point is implied when
    /// the table starts above zero.
    pub fn welfare(mut points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidReward("welfare table is empty".into()));
        }
        if points
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::InvalidReward(
                "welfare table has non-finite entries".into(),
            ));
        }
        if points[0][0] < 0.0 {
            return Err(Error::InvalidReward(
                "valuations must be nonnegative".into(),
            ));
        }
        if points[0][0] > 0.0 {
            points.insert(0, [0.0, 0.0]);
        }
        if points[0][1] != 0.0 {
            return Err(Error::InvalidReward(format!(
                "g(0, 0) must be 0, table gives f(0) = {}",
                points[0][1]
            )));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1][0] > w[0][0]) {
                return Err(Error::InvalidReward(format!(
                    "f_points[{}]: valuations must be strictly increasing",
                    i + 1
                )));
            }
            if w[1][1] < w[0][1] {
                return Err(Error::InvalidReward(format!(
                    "f_points[{}]: welfare-like f must be non-decreasing",
                    i + 1
                )));
            }
        }
        Ok(RewardFn::Welfare { points })
    }

    pub fn class(&self) -> Result<RewardClass> {
        match *self {
            RewardFn::Welfare { .. } => Ok(RewardClass::WelfareLike),
            RewardFn::Linear { alpha, beta } => {
                if !alpha.is_finite() || !beta.is_finite() {
                    return Err(Error::InvalidReward("non-finite coefficients".into()));
                }
                if alpha == 0.0 && beta > 0.0 {
                    Ok(RewardClass::RevenueLike)
                } else if alpha > 0.0 && beta > 0.0 {
                    Ok(RewardClass::PositiveTradeoff)
                } else if alpha > 0.0 && beta == 0.0 {
                    Ok(RewardClass::WelfareLike)
                } else if alpha > 0.0 && beta < 0.0 && alpha >= -beta {
                    Ok(RewardClass::NegativeTradeoff)
                } else {
                    Err(Error::InvalidReward(format!(
                        "g(v, p) = {alpha} v + {beta} p is outside the supported classes"
                    )))
                }
            }
        }
    }

    /// Coefficient of the payment; zero for welfare-like rewards.
    pub fn payment_coef(&self) -> f64 {
        match self {
            RewardFn::Welfare { .. } => 0.0,
            RewardFn::Linear { beta, .. } => *beta,
        }
    }

    /// The valuation part `g(v, 0)`.
    pub fn value_part(&self, v: f64) -> f64 {
        match self {
            RewardFn::Welfare { points } => interpolate(points, v),
            RewardFn::Linear { alpha, .. } => alpha * v,
        }
    }

    pub fn eval(&self, v: f64, p: f64) -> f64 {
        self.value_part(v) + self.payment_coef() * p
    }

    /// Valuations where the value part changes slope.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RewardFn::Welfare { points } => points.iter().map(|p| p[0]).collect(),
            RewardFn::Linear { .. } => Vec::new(),
        }
    }

    /// `(alpha, beta)` when linear.
    pub fn as_linear(&self) -> Option<(f64, f64)> {
        match *self {
            RewardFn::Linear { alpha, beta } => Some((alpha, beta)),
            RewardFn::Welfare { .. } => None,
        }
    }
}

/// Piecewise-linear lookup, constant beyond the last point.
fn interpolate(points: &[[f64; 2]], v: f64) -> f64 {
    let j = points.partition_point(|p| p[0] <= v);
    if j == 0 {
        return points[0][1];
    }
    if j == points.len() {
        return points[j - 1][1];
    }
    let ([v0, f0], [v1, f1]) = (points[j - 1], points[j]);
    f0 + (v - v0) / (v1 - v0) * (f1 - f0)
}

/// Myerson's revenue virtual value `v - (1 - F(v)) / f(v)`.
pub fn revenue_virtual_value(d: &Distribution, v: f64) -> Result<f64> {
    if !d.contains(v) {
        return Err(Error::OutOfSupport {
            v,
            lo: d.lo(),
            hi: d.hi(),
        });
    }
    let f = d.pdf_clamped(v);
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::SingularVirtualValue { v });
    }
    Ok(v - (1.0 - d.cdf(v)) / f)
}

/// `g(v, phi(v))`: the virtual value optimised by fixed-rate auctions.
pub fn fr_virtual_value(g: &RewardFn, d: &Distribution, v: f64) -> Result<f64> {
    match g {
        RewardFn::Welfare { .. } => Ok(g.value_part(v)),
        RewardFn::Linear { .. } => Ok(g.eval(v, revenue_virtual_value(d, v)?)),
    }
}

/// `g(v, phi(v) / (n - 1))` for negative-tradeoff rewards at horizon `n`.
pub fn horizon_virtual_value(g: &RewardFn, d: &Distribution, n: usize, v: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::HorizonTooSmall { n, min: 2 });
    }
    require_class(g, RewardClass::NegativeTradeoff)?;
    let phi = revenue_virtual_value(d, v)?;
    Ok(g.eval(v, phi / (n - 1) as f64))
}

pub(crate) fn require_class(g: &RewardFn, expected: RewardClass) -> Result<()> {
    let actual = g.class()?;
    if actual != expected {
        return Err(Error::ClassMismatch {
            expected: expected.name(),
            actual: actual.name(),
        });
    }
    Ok(())
}

/// A virtual value that is affine in `v` on a uniform prior, as
/// `(slope, intercept)`. On `Uniform[lo, hi]`, `phi(v) = 2v - hi`.
pub(crate) fn affine_on_uniform(
    g: &RewardFn,
    d: &Distribution,
    payment_scale: f64,
) -> Option<(f64, f64)> {
    let (_, hi) = d.as_uniform()?;
    let (alpha, beta) = g.as_linear()?;
    let b = beta * payment_scale;
    Some((alpha + 2.0 * b, -b * hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn u01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(RewardFn::linear(3.0, 2.0).unwrap().eval(1.0, 2.0), 7.0);
        assert_abs_diff_eq!(RewardFn::consumer_surplus().eval(0.75, 0.5), 0.25);
        let w = RewardFn::welfare(vec![[0.0, 0.0], [10.0, 10.0]]).unwrap();
        assert_eq!(w.eval(4.0, 999.0), 4.0);
    }

    #[test]
    fn classification() {
        assert_eq!(
            RewardFn::revenue().class().unwrap(),
            RewardClass::RevenueLike
        );
        assert_eq!(
            RewardFn::linear(3.0, 2.0).unwrap().class().unwrap(),
            RewardClass::PositiveTradeoff
        );
        assert_eq!(
            RewardFn::consumer_surplus().class().unwrap(),
            RewardClass::NegativeTradeoff
        );
        assert_eq!(
            RewardFn::negative_tradeoff(2.0, 1.0).unwrap(),
            RewardFn::Linear {
                alpha: 2.0,
                beta: -1.0
            }
        );
        // alpha < |beta| is not a negative tradeoff
        assert!(RewardFn::negative_tradeoff(1.0, 2.0).is_err());
        assert!(RewardFn::linear(-1.0, 1.0).is_err());
        assert!(RewardFn::welfare(vec![[0.0, 0.0], [1.0, -1.0]]).is_err());
        assert!(RewardFn::welfare(vec![[0.0, 1.0], [1.0, 2.0]]).is_err());
    }

    #[test]
    fn reward_config_parsing() {
        let g: RewardFn =
            serde_json::from_str(r#"{"class":"negative_tradeoff","alpha":1,"beta":1}"#).unwrap();
        assert_eq!(g, RewardFn::consumer_surplus());
        let g: RewardFn =
            serde_json::from_str(r#"{"class":"welfare","f_points":[[1,1],[2,3]]}"#).unwrap();
        assert_eq!(g.eval(0.5, 0.0), 0.5);
        assert_eq!(g.eval(1.5, 0.0), 2.0);
    }

    #[test]
    fn revenue_virtual_value_examples() {
        assert_abs_diff_eq!(revenue_virtual_value(&u01(), 0.75).unwrap(), 0.5);
        assert_abs_diff_eq!(revenue_virtual_value(&u01(), 0.5).unwrap(), 0.0);
        let d = Distribution::uniform(0.0, 8.0).unwrap();
        assert_abs_diff_eq!(revenue_virtual_value(&d, 8.0).unwrap(), 8.0);
        assert!(revenue_virtual_value(&u01(), 1.5).is_err());
    }

    #[test]
    fn fr_virtual_value_examples() {
        let g = RewardFn::linear(3.0, 2.0).unwrap();
        assert_abs_diff_eq!(fr_virtual_value(&g, &u01(), 1.0).unwrap(), 5.0);
        assert_abs_diff_eq!(
            fr_virtual_value(&RewardFn::consumer_surplus(), &u01(), 0.3).unwrap(),
            0.7,
            epsilon = 1e-12
        );
        let w = RewardFn::welfare(vec![[0.0, 0.0], [10.0, 10.0]]).unwrap();
        let d = Distribution::uniform(0.0, 10.0).unwrap();
        assert_eq!(fr_virtual_value(&w, &d, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn horizon_virtual_value_examples() {
        let cs = RewardFn::consumer_surplus();
        assert_abs_diff_eq!(horizon_virtual_value(&cs, &u01(), 4, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(horizon_virtual_value(&cs, &u01(), 2, 0.25).unwrap(), 0.75);
        for i in 0..=10 {
            let v = i as f64 / 10.0;
            assert_abs_diff_eq!(
                horizon_virtual_value(&cs, &u01(), 3, v).unwrap(),
                0.5,
                epsilon = 1e-12
            );
        }
        assert_eq!(
            horizon_virtual_value(&cs, &u01(), 1, 0.5),
            Err(Error::HorizonTooSmall { n: 1, min: 2 })
        );
        assert!(matches!(
            horizon_virtual_value(&RewardFn::revenue(), &u01(), 3, 0.5),
            Err(Error::ClassMismatch { .. })
        ));
    }

    #[test]
    fn horizon_virtual_value_nonnegative_for_long_horizons() {
        let cs = RewardFn::consumer_surplus();
        for n in 4..40 {
            for i in 0..=200 {
                let v = i as f64 / 200.0;
                assert!(horizon_virtual_value(&cs, &u01(), n, v).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn affine_form_matches_pointwise() {
        let d = Distribution::uniform(1.0, 4.0).unwrap();
        let g = RewardFn::linear(3.0, 2.0).unwrap();
        let (s, c) = affine_on_uniform(&g, &d, 1.0).unwrap();
        for i in 0..=30 {
            let v = 1.0 + 0.1 * i as f64;
            assert_abs_diff_eq!(
                s * v + c,
                fr_virtual_value(&g, &d, v).unwrap(),
                epsilon = 1e-9
            );
        }
    }

    proptest! {
        #[test]
        fn linear_in_payment(a in 0.0f64..5.0, b in -5.0f64..5.0, v in 0.0f64..10.0,
                             p1 in 0.0f64..10.0, p2 in 0.0f64..10.0) {
            let g = RewardFn::Linear { alpha: a, beta: b };
            let lhs = g.eval(v, p1) + g.eval(v, p2);
            let rhs = g.eval(v, p1 + p2) + g.eval(v, 0.0);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn uniform_virtual_value_closed_form(lo in 0.0f64..5.0, w in 0.1f64..5.0, t in 0.0f64..1.0) {
            let d = Distribution::uniform(lo, lo + w).unwrap();
            let v = lo + t * w;
            prop_assert!((revenue_virtual_value(&d, v).unwrap() - (2.0 * v - (lo + w))).abs() < 1e-9);
        }
    }
}
