//! Ironing: monotone rearrangement of a virtual value in quantile space.
//!
//! For `h(q) = theta(F^-1(q))` we integrate `H(q) = int_0^q h`, take the
//! lower convex hull `Psi` of `H`, and use its slope `psi` as the ironed
//! value. The grid path samples `h` at `m` cell midpoints; the affine path is
//! exact for affine `theta` on a uniform prior.

use serde::Serialize;

use crate::dist::Distribution;
use crate::error::{Error, Result};

pub const DEFAULT_IRON_GRID: usize = 10_000;

/// Absolute tolerance when comparing ironed values against a level.
pub const LEVEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct IronedFn {
    dist: Distribution,
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    /// `psi[j]` is the hull slope on cell `[j/m, (j+1)/m]`, attached to the
    /// cell midpoint; `cum` and `hull` hold `H` and `Psi` at the `m + 1`
    /// cell edges.
    Grid {
        psi: Vec<f64>,
        cum: Vec<f64>,
        hull: Vec<f64>,
    },
    /// `slope * v + intercept` with `slope >= 0`.
    Affine { slope: f64, intercept: f64 },
}

/// How virtual values are ironed by the mechanism builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "m")]
pub enum IroningMode {
    /// Numerical ironing on `m` quantile cells.
    Grid(usize),
    /// Closed form when the prior is uniform and the reward linear; falls back
    /// to `Grid(DEFAULT_IRON_GRID)` otherwise.
    Analytic,
}

impl Default for IroningMode {
    fn default() -> Self {
        IroningMode::Grid(DEFAULT_IRON_GRID)
    }
}

/// Irons `theta` against `d` on `m` quantile cells.
pub fn iron(theta: impl Fn(f64) -> Result<f64>, d: &Distribution, m: usize) -> Result<IronedFn> {
    if m < 16 {
        return Err(Error::InvalidDistribution(format!(
            "ironing grid needs at least 16 cells, got {m}"
        )));
    }
    let inv_m = 1.0 / m as f64;
    let mut h = Vec::with_capacity(m);
    for j in 0..m {
        let v = d.quantile((j as f64 + 0.5) * inv_m);
        let value = theta(v)?;
        if !value.is_finite() {
            return Err(Error::NonFinite { v, value });
        }
        h.push(value);
    }

    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for &x in &h {
        acc += x * inv_m;
        cum.push(acc);
    }

    let vertices = lower_hull(&cum);
    let mut psi = vec![0.0; m];
    let mut hull = vec![0.0; m + 1];
    for w in vertices.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (cum[b] - cum[a]) / ((b - a) as f64 * inv_m);
        for j in a..b {
            psi[j] = slope;
            hull[j] = cum[a] + slope * ((j - a) as f64 * inv_m);
        }
    }
    hull[m] = cum[m];
    Ok(IronedFn {
        dist: d.clone(),
        repr: Repr::Grid { psi, cum, hull },
    })
}

/// Irons `slope * v + intercept` on a uniform prior in closed form: the
/// identity when non-decreasing, otherwise the constant mean.
pub fn iron_affine(slope: f64, intercept: f64, d: &Distribution) -> Result<IronedFn> {
    let (lo, hi) = d.as_uniform().ok_or_else(|| {
        Error::InvalidDistribution("closed-form ironing needs a uniform prior".into())
    })?;
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(Error::NonFinite {
            v: lo,
            value: slope * lo + intercept,
        });
    }
    let repr = if slope >= 0.0 {
        Repr::Affine { slope, intercept }
    } else {
        Repr::Affine {
            slope: 0.0,
            intercept: slope * 0.5 * (lo + hi) + intercept,
        }
    };
    Ok(IronedFn {
        dist: d.clone(),
        repr,
    })
}

/// Indices of the lower convex hull of `(j / m, ys[j])` by a monotone-chain
/// scan. Points are evenly spaced so cross products reduce to second
/// differences.
fn lower_hull(ys: &[f64]) -> Vec<usize> {
    let mut st: Vec<usize> = Vec::with_capacity(ys.len());
    for i in 0..ys.len() {
        while st.len() >= 2 {
            let (a, b) = (st[st.len() - 2], st[st.len() - 1]);
            // drop b when it lies on or above the chord a -> i
            let lhs = (ys[b] - ys[a]) * (i - a) as f64;
            let rhs = (ys[i] - ys[a]) * (b - a) as f64;
            if lhs >= rhs {
                st.pop();
            } else {
                break;
            }
        }
        st.push(i);
    }
    st
}

impl IronedFn {
    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    /// `psi(q)`: piecewise-linear through the cell midpoints, extended
    /// linearly to the ends.
    pub fn at_quantile(&self, q: f64) -> f64 {
        match &self.repr {
            Repr::Affine { slope, intercept } => slope * self.dist.quantile(q) + intercept,
            Repr::Grid { psi, .. } => {
                let m = psi.len();
                let t = q.clamp(0.0, 1.0) * m as f64 - 0.5;
                if t <= 0.0 {
                    return psi[0] + (psi[1] - psi[0]) * t;
                }
                let last = (m - 1) as f64;
                if t >= last {
                    return psi[m - 1] + (psi[m - 1] - psi[m - 2]) * (t - last);
                }
                let j = t.floor() as usize;
                let frac = t - j as f64;
                psi[j] + frac * (psi[j + 1] - psi[j])
            }
        }
    }

    /// `theta_bar(v) = psi(F(v))` for `v` clamped into the support.
    pub fn value(&self, v: f64) -> f64 {
        match &self.repr {
            Repr::Affine { slope, intercept } => {
                slope * v.clamp(self.dist.lo(), self.dist.hi()) + intercept
            }
            Repr::Grid { .. } => self.at_quantile(self.dist.cdf(v)),
        }
    }

    /// `theta_bar(v)`, rejecting valuations outside the support.
    pub fn eval(&self, v: f64) -> Result<f64> {
        if !self.dist.contains(v) {
            return Err(Error::OutOfSupport {
                v,
                lo: self.dist.lo(),
                hi: self.dist.hi(),
            });
        }
        Ok(self.value(v))
    }

    pub fn min_value(&self) -> f64 {
        self.at_quantile(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.at_quantile(1.0)
    }

    /// `sup {v : theta_bar(v) <= y}`, or `None` when the set is empty. Levels
    /// within [`LEVEL_TOL`] of `y` count as equal, so a flat stretch at `y`
    /// is included up to its right end.
    pub fn level_sup(&self, y: f64) -> Option<f64> {
        let (lo, hi) = (self.dist.lo(), self.dist.hi());
        match &self.repr {
            Repr::Affine { slope, intercept } => {
                if *slope == 0.0 || intercept + slope * hi <= y + LEVEL_TOL {
                    return (intercept + slope * lo <= y + LEVEL_TOL).then_some(hi);
                }
                let v = (y - intercept) / slope;
                if v < lo {
                    (intercept + slope * lo <= y + LEVEL_TOL).then_some(lo)
                } else {
                    Some(v.min(hi))
                }
            }
            Repr::Grid { psi, .. } => {
                let m = psi.len();
                let yt = y + LEVEL_TOL;
                if self.at_quantile(0.0) > yt {
                    return None;
                }
                if self.at_quantile(1.0) <= yt {
                    return Some(hi);
                }
                // nodes: t = -0.5 (q = 0), t = j for midpoints, t = m - 0.5 (q = 1)
                let node = |k: isize| -> (f64, f64) {
                    if k < 0 {
                        (-0.5, self.at_quantile(0.0))
                    } else if k as usize >= m {
                        (m as f64 - 0.5, self.at_quantile(1.0))
                    } else {
                        (k as f64, psi[k as usize])
                    }
                };
                let last_le = psi.partition_point(|&x| x <= yt) as isize - 1;
                let (t0, y0) = node(last_le);
                let (t1, y1) = node(last_le + 1);
                let frac = ((y - y0) / (y1 - y0)).clamp(0.0, 1.0);
                let t = t0 + frac * (t1 - t0);
                let q = ((t + 0.5) / m as f64).clamp(0.0, 1.0);
                Some(self.dist.quantile_sup(q))
            }
        }
    }

    /// `sup {v : theta_bar(v) <= y}`, and `0` when the set is empty.
    pub fn sup_inverse(&self, y: f64) -> f64 {
        self.level_sup(y).unwrap_or(0.0)
    }

    /// Valuation threshold for level `y`: like [`Self::sup_inverse`], but an
    /// empty set maps to the bottom of the support.
    pub fn threshold(&self, y: f64) -> f64 {
        self.level_sup(y).unwrap_or(self.dist.lo())
    }

    /// `int psi(q) dq` over `[qa, qb]`, i.e. `Psi(qb) - Psi(qa)`.
    pub fn integral_quantile(&self, qa: f64, qb: f64) -> f64 {
        let (qa, qb) = (qa.clamp(0.0, 1.0), qb.clamp(0.0, 1.0));
        if qb <= qa {
            return 0.0;
        }
        match &self.repr {
            Repr::Affine { slope, intercept } => {
                let (lo, hi) = (self.dist.lo(), self.dist.hi());
                let quantile_integral = lo * (qb - qa) + (hi - lo) * 0.5 * (qb * qb - qa * qa);
                slope * quantile_integral + intercept * (qb - qa)
            }
            Repr::Grid { hull, .. } => self.hull_at(hull, qb) - self.hull_at(hull, qa),
        }
    }

    /// `E[theta_bar(v) ; a < v <= b]` (an unnormalised partial expectation).
    pub fn integral_between(&self, a: f64, b: f64) -> f64 {
        self.integral_quantile(self.dist.cdf(a), self.dist.cdf(b))
    }

    fn hull_at(&self, hull: &[f64], q: f64) -> f64 {
        let m = hull.len() - 1;
        let t = q * m as f64;
        let j = (t.floor() as usize).min(m - 1);
        let frac = t - j as f64;
        hull[j] + frac * (hull[j + 1] - hull[j])
    }

    /// Number of quantile cells, `None` for the closed form.
    pub fn grid_size(&self) -> Option<usize> {
        match &self.repr {
            Repr::Grid { psi, .. } => Some(psi.len()),
            Repr::Affine { .. } => None,
        }
    }

    /// `H` at the cell edges `j / m`.
    pub fn cumulative(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Grid { cum, .. } => Some(cum),
            Repr::Affine { .. } => None,
        }
    }

    /// `Psi` at the cell edges `j / m`.
    pub fn hull(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Grid { hull, .. } => Some(hull),
            Repr::Affine { .. } => None,
        }
    }

    /// Per-cell ironed slopes.
    pub fn cell_values(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Grid { psi, .. } => Some(psi),
            Repr::Affine { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn u01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    /// Greatest convex minorant by brute force over all chords.
    fn gcm_oracle(ys: &[f64]) -> Vec<f64> {
        let n = ys.len();
        (0..n)
            .map(|k| {
                let mut best = ys[k];
                for i in 0..=k {
                    for j in k..n {
                        if i == j {
                            continue;
                        }
                        let t = (k - i) as f64 / (j - i) as f64;
                        best = best.min(ys[i] + t * (ys[j] - ys[i]));
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn increasing_theta_is_unchanged() {
        let f = iron(|v| Ok(2.0 * v - 1.0), &u01(), DEFAULT_IRON_GRID).unwrap();
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            assert_abs_diff_eq!(f.eval(v).unwrap(), 2.0 * v - 1.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(f.eval(0.25).unwrap(), -0.5, epsilon = 1e-9);
    }

    #[test]
    fn decreasing_theta_irons_to_mean() {
        let f = iron(|v| Ok(1.0 - v), &u01(), DEFAULT_IRON_GRID).unwrap();
        for i in 0..=100 {
            assert_abs_diff_eq!(f.eval(i as f64 / 100.0).unwrap(), 0.5, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(f.eval(0.9).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn step_down_irons_to_chord() {
        let theta = |v: f64| Ok(if v <= 0.5 { 1.0 } else { 0.0 });
        let m = 64;
        let f = iron(theta, &u01(), m).unwrap();
        // H(q) = min(q, 0.5); the convex minorant is the chord 0.5 q.
        let cum = f.cumulative().unwrap();
        let oracle = gcm_oracle(cum);
        for (j, (&h, &o)) in f.hull().unwrap().iter().zip(&oracle).enumerate() {
            assert_abs_diff_eq!(h, o, epsilon = 1e-12);
            assert_abs_diff_eq!(h, 0.5 * j as f64 / m as f64, epsilon = 1e-12);
        }
        for i in 0..=20 {
            assert_abs_diff_eq!(f.eval(i as f64 / 20.0).unwrap(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn eval_rejects_out_of_support() {
        let f = iron(Ok, &u01(), 32).unwrap();
        assert!(f.eval(1.5).is_err());
        assert!(iron(Ok, &u01(), 8).is_err());
        assert!(matches!(
            iron(|v| Ok(1.0 / (v - v)), &u01(), 32),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn sup_inverse_examples() {
        let f = iron(|v| Ok((v + 1.0) / 3.0), &u01(), DEFAULT_IRON_GRID).unwrap();
        assert_abs_diff_eq!(f.eval(0.5).unwrap(), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(f.sup_inverse(0.5), 0.5, epsilon = 1e-9);
        let c = iron(|v| Ok(1.0 - v), &u01(), DEFAULT_IRON_GRID).unwrap();
        assert_eq!(c.sup_inverse(0.5), 1.0);
        let r = iron(|v| Ok(2.0 * v - 1.0), &u01(), DEFAULT_IRON_GRID).unwrap();
        assert_eq!(r.sup_inverse(-5.0), 0.0);
    }

    #[test]
    fn affine_path_matches_grid_path() {
        let d = u01();
        for &(s, c) in &[(2.0, -1.0), (-1.0, 1.0), (1.0 / 3.0, 1.0 / 3.0), (0.0, 0.5)] {
            let a = iron_affine(s, c, &d).unwrap();
            let g = iron(|v| Ok(s * v + c), &d, DEFAULT_IRON_GRID).unwrap();
            for i in 0..=50 {
                let v = i as f64 / 50.0;
                assert_abs_diff_eq!(a.value(v), g.value(v), epsilon = 1e-9);
            }
            for &y in &[-2.0, 0.0, 0.25, 0.5, 0.75, 2.0] {
                assert_abs_diff_eq!(a.sup_inverse(y), g.sup_inverse(y), epsilon = 1e-9);
            }
            assert_abs_diff_eq!(
                a.integral_between(0.2, 0.7),
                g.integral_between(0.2, 0.7),
                epsilon = 1e-9
            );
        }
        assert_abs_diff_eq!(
            iron_affine(1.0 / 3.0, 1.0 / 3.0, &d)
                .unwrap()
                .sup_inverse(0.5),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_prior_flat_gap_uses_sup() {
        // no mass on (1, 2): the level set of a constant extends past the gap
        let d = Distribution::grid(&[[0.0, 0.0], [1.0, 0.5], [2.0, 0.5], [3.0, 1.0]]).unwrap();
        let f = iron(Ok, &d, 64).unwrap();
        let t = f.sup_inverse(f.value(1.0));
        assert!((1.0 - 1e-9..=2.0 + 1e-9).contains(&t), "{t}");
    }

    fn arb_theta() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 2..12)
    }

    /// Piecewise-constant theta on equal valuation blocks of [0, 1].
    fn blocks(vals: &[f64]) -> impl Fn(f64) -> Result<f64> + '_ {
        move |v: f64| {
            let k = ((v * vals.len() as f64) as usize).min(vals.len() - 1);
            Ok(vals[k])
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ironed_is_monotone_and_minorant(vals in arb_theta()) {
            let f = iron(blocks(&vals), &u01(), 512).unwrap();
            let psi = f.cell_values().unwrap();
            prop_assert!(psi.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            for (h, c) in f.hull().unwrap().iter().zip(f.cumulative().unwrap()) {
                prop_assert!(*h <= c + 1e-12);
            }
            let (cum, hull) = (f.cumulative().unwrap(), f.hull().unwrap());
            prop_assert!((cum[cum.len() - 1] - hull[hull.len() - 1]).abs() < 1e-12);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=400 {
                let x = f.value(i as f64 / 400.0);
                prop_assert!(x >= prev - 1e-12);
                prev = x;
            }
        }

        #[test]
        fn hull_matches_brute_force(vals in arb_theta()) {
            let f = iron(blocks(&vals), &u01(), 48).unwrap();
            let oracle = gcm_oracle(f.cumulative().unwrap());
            for (a, b) in f.hull().unwrap().iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
