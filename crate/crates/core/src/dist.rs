//! Valuation priors.
//!
//! Two families are supported: `Uniform(lo, hi)` with closed-form access, and a
//! custom prior given by a piecewise-linear CDF through user-supplied knots.
//! Both live on a single bounded interval `[lo, hi]` with `lo >= 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of knots used when tabulating a CDF closure.
pub const DEFAULT_GRID_POINTS: usize = 10_000;

/// A valuation prior supported on a single bounded interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionConfig", into = "DistributionConfig")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Grid(CdfGrid),
}

/// Piecewise-linear CDF through strictly increasing valuation knots.
///
/// The density is constant on every segment, so the prior is a finite mixture
/// of uniforms and conditional means are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

/// Structured-text form of a [`Distribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    Uniform { lo: f64, hi: f64 },
    Grid { cdf_points: Vec<[f64; 2]> },
}

impl TryFrom<DistributionConfig> for Distribution {
    type Error = Error;

    fn try_from(cfg: DistributionConfig) -> Result<Self> {
        match cfg {
            DistributionConfig::Uniform { lo, hi } => Distribution::uniform(lo, hi),
            DistributionConfig::Grid { cdf_points } => {
                CdfGrid::from_cdf_points(&cdf_points).map(Distribution::Grid)
            }
        }
    }
}

impl From<Distribution> for DistributionConfig {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Uniform { lo, hi } => DistributionConfig::Uniform { lo, hi },
            Distribution::Grid(g) => DistributionConfig::Grid {
                cdf_points: g.knots.iter().zip(&g.cdf).map(|(&v, &f)| [v, f]).collect(),
            },
        }
    }
}

fn check_support(lo: f64, hi: f64) -> Result<()> {
    if lo.is_infinite() || hi.is_infinite() {
        return Err(Error::UnboundedSupport);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "support bounds must be finite, got [{lo}, {hi}]"
        )));
    }
    if lo < 0.0 {
        return Err(Error::InvalidDistribution(format!(
            "valuations are nonnegative, got lo = {lo}"
        )));
    }
    if lo >= hi {
        return Err(Error::InvalidDistribution(format!(
            "empty support [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl CdfGrid {
    /// Builds a prior from `[v, F(v)]` pairs. The first pair must have
    /// `F = 0` and the last `F = 1` (within 1e-9; snapped exactly).
    pub fn from_cdf_points(points: &[[f64; 2]]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidDistribution(
                "grid needs at least two cdf points".into(),
            ));
        }
        let knots: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let mut cdf: Vec<f64> = points.iter().map(|p| p[1]).collect();
        check_support(knots[0], knots[knots.len() - 1])?;
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidDistribution(format!(
                    "cdf_points[{}]: valuations must be strictly increasing",
                    i + 1
                )));
            }
        }
        for (i, &f) in cdf.iter().enumerate() {
            if !f.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&f) {
                return Err(Error::InvalidDistribution(format!(
                    "cdf_points[{i}]: probability {f} outside [0, 1]"
                )));
            }
        }
        for (i, w) in cdf.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::InvalidDistribution(format!(
                    "cdf_points[{}]: cdf must be non-decreasing",
                    i + 1
                )));
            }
        }
        let last = cdf.len() - 1;
        if cdf[0].abs() > 1e-9 || (cdf[last] - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(
                "cdf must start at 0 and end at 1".into(),
            ));
        }
        cdf[0] = 0.0;
        cdf[last] = 1.0;
        for f in cdf.iter_mut() {
            *f = f.clamp(0.0, 1.0);
        }
        Ok(CdfGrid { knots, cdf })
    }

    /// Tabulates `cdf` at `k` evenly spaced valuations on `[lo, hi]`.
    pub fn from_cdf_fn(cdf: impl Fn(f64) -> f64, lo: f64, hi: f64, k: usize) -> Result<Self> {
        check_support(lo, hi)?;
        if k < 2 {
            return Err(Error::InvalidDistribution("need at least two knots".into()));
        }
        let points: Vec<[f64; 2]> = (0..k)
            .map(|i| {
                let v = if i == k - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (k - 1) as f64
                };
                [v, cdf(v)]
            })
            .collect();
        Self::from_cdf_points(&points)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index of the segment `[knots[i], knots[i+1])` holding `v`; the last
    /// segment is closed.
    fn segment(&self, v: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= v);
        i.saturating_sub(1).min(self.knots.len() - 2)
    }

    fn seg_density(&self, i: usize) -> f64 {
        (self.cdf[i + 1] - self.cdf[i]) / (self.knots[i + 1] - self.knots[i])
    }

    fn cdf_at(&self, v: f64) -> f64 {
        if v <= self.knots[0] {
            return 0.0;
        }
        if v >= self.knots[self.knots.len() - 1] {
            return 1.0;
        }
        let i = self.segment(v);
        let t = (v - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
        (self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])).clamp(0.0, 1.0)
    }

    fn quantile_at(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        // smallest v with F(v) >= q
        let j = self.cdf.partition_point(|&f| f < q);
        if j == 0 {
            return self.knots[0];
        }
        if j >= self.cdf.len() {
            return self.knots[self.knots.len() - 1];
        }
        let (f0, f1) = (self.cdf[j - 1], self.cdf[j]);
        let (v0, v1) = (self.knots[j - 1], self.knots[j]);
        if f1 <= f0 {
            return v1;
        }
        v0 + (q - f0) / (f1 - f0) * (v1 - v0)
    }

    fn cond_mass_and_moment(&self, a: f64, b: f64) -> (f64, f64) {
        let mut mass = 0.0;
        let mut moment = 0.0;
        for i in 0..self.knots.len() - 1 {
            let l = self.knots[i].max(a);
            let r = self.knots[i + 1].min(b);
            if r <= l {
                continue;
            }
            let m = self.seg_density(i) * (r - l);
            mass += m;
            moment += m * 0.5 * (l + r);
        }
        (mass, moment)
    }
}

/// A discrete prior: strictly increasing points with masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGrid {
    points: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteGrid {
    pub fn new(points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::InvalidDistribution(
                "discrete grid needs matching nonempty points and masses".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDistribution(
                "discrete points must be strictly increasing".into(),
            ));
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidDistribution("negative mass".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteGrid { points, masses })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.masses.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, m)| v * m).sum()
    }
}

impl Distribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_support(lo, hi)?;
        Ok(Distribution::Uniform { lo, hi })
    }

    pub fn grid(points: &[[f64; 2]]) -> Result<Self> {
        CdfGrid::from_cdf_points(points).map(Distribution::Grid)
    }

    pub fn lo(&self) -> f64 {
        match self {
            Distribution::Uniform { lo, .. } => *lo,
            Distribution::Grid(g) => g.knots[0],
        }
    }

    pub fn hi(&self) -> f64 {
        match self {
            Distribution::Uniform { hi, .. } => *hi,
            Distribution::Grid(g) => g.knots[g.knots.len() - 1],
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo() && v <= self.hi()
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            Distribution::Grid(g) => g.cdf_at(v),
        }
    }

    /// Density; right-continuous at grid knots, zero outside the support.
    pub fn pdf(&self, v: f64) -> f64 {
        if !self.contains(v) {
            return 0.0;
        }
        match self {
            Distribution::Uniform { lo, hi } => 1.0 / (hi - lo),
            Distribution::Grid(g) => g.seg_density(g.segment(v)),
        }
    }

    /// Density used by virtual values: a zero density is replaced by the
    /// nearest positive segment density.
    pub(crate) fn pdf_clamped(&self, v: f64) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => 1.0 / (hi - lo),
            Distribution::Grid(g) => {
                let i = g.segment(v.clamp(self.lo(), self.hi()));
                let d = g.seg_density(i);
                if d > 0.0 {
                    return d;
                }
                let n = g.knots.len() - 1;
                for off in 1..n {
                    if i >= off && g.seg_density(i - off) > 0.0 {
                        return g.seg_density(i - off);
                    }
                    if i + off < n && g.seg_density(i + off) > 0.0 {
                        return g.seg_density(i + off);
                    }
                }
                0.0
            }
        }
    }

    /// Generalized inverse: the smallest `v` with `F(v) >= q`.
    pub fn quantile(&self, q: f64) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => lo + q.clamp(0.0, 1.0) * (hi - lo),
            Distribution::Grid(g) => g.quantile_at(q),
        }
    }

    /// The largest `v` with `F(v) <= q`; differs from [`Self::quantile`] only
    /// across zero-density gaps.
    pub fn quantile_sup(&self, q: f64) -> f64 {
        match self {
            Distribution::Uniform { .. } => self.quantile(q),
            Distribution::Grid(g) => {
                let j = g.cdf.partition_point(|&f| f <= q);
                if j >= g.cdf.len() {
                    return self.hi();
                }
                if j == 0 {
                    return self.lo();
                }
                let (f0, f1) = (g.cdf[j - 1], g.cdf[j]);
                let (v0, v1) = (g.knots[j - 1], g.knots[j]);
                v0 + (q - f0) / (f1 - f0) * (v1 - v0)
            }
        }
    }

    /// `Pr[a <= v <= b]`, zero when `a >= b`.
    pub fn interval_prob(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        (self.cdf(b) - self.cdf(a)).clamp(0.0, 1.0)
    }

    /// `E[v | a <= v <= b]`.
    pub fn cond_mean(&self, a: f64, b: f64) -> Result<f64> {
        let a = a.max(self.lo());
        let b = b.min(self.hi());
        match self {
            Distribution::Uniform { .. } => {
                if !(b > a) {
                    return Err(Error::EmptyInterval { a, b });
                }
                Ok(0.5 * (a + b))
            }
            Distribution::Grid(g) => {
                let (mass, moment) = g.cond_mass_and_moment(a, b);
                if !(mass > 0.0) {
                    return Err(Error::EmptyInterval { a, b });
                }
                Ok((moment / mass).clamp(a, b))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.cond_mean(self.lo(), self.hi())
            .expect("support always carries unit mass")
    }

    /// Inverse-transform sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `k` equal-mass atoms at the quantile midpoints `(i + 1/2) / k`.
    pub fn discretize(&self, k: usize) -> Result<DiscreteGrid> {
        if k < 2 {
            return Err(Error::InvalidDistribution(format!(
                "discretize needs k >= 2, got {k}"
            )));
        }
        let points = (0..k)
            .map(|i| self.quantile((i as f64 + 0.5) / k as f64))
            .collect();
        let mut masses = vec![1.0 / k as f64; k];
        // absorb the rounding residue so the masses sum to one
        let residue = 1.0 - masses.iter().sum::<f64>();
        masses[k - 1] += residue;
        DiscreteGrid::new(points, masses)
    }

    /// Interior points where the density may change.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Distribution::Uniform { .. } => Vec::new(),
            Distribution::Grid(g) => g.knots[1..g.knots.len() - 1].to_vec(),
        }
    }

    /// `(lo, hi)` when the prior is uniform.
    pub fn as_uniform(&self) -> Option<(f64, f64)> {
        match self {
            Distribution::Uniform { lo, hi } => Some((*lo, *hi)),
            Distribution::Grid(_) => None,
        }
    }
}

/// Priors indexed by horizon: `get(h)` is the prior of the agent who arrives
/// with `h` days left.
/// Serialised as the list `D_n, ..., D_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Distribution>", into = "Vec<Distribution>")]
pub struct HorizonPriors {
    by_horizon: Vec<Distribution>,
}

impl TryFrom<Vec<Distribution>> for HorizonPriors {
    type Error = Error;

    fn try_from(ds: Vec<Distribution>) -> Result<Self> {
        HorizonPriors::from_descending(ds)
    }
}

impl From<HorizonPriors> for Vec<Distribution> {
    fn from(p: HorizonPriors) -> Self {
        let mut ds = p.by_horizon;
        ds.reverse();
        ds
    }
}

impl HorizonPriors {
    /// The same prior at every horizon `1..=n`.
    pub fn iid(d: Distribution, n: usize) -> Self {
        HorizonPriors {
            by_horizon: vec![d; n.max(1)],
        }
    }

    /// From a list ordered `D_n, ..., D_1`.
    pub fn from_descending(mut ds: Vec<Distribution>) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::InvalidDistribution("no distributions given".into()));
        }
        ds.reverse();
        Ok(HorizonPriors { by_horizon: ds })
    }

    pub fn horizon(&self) -> usize {
        self.by_horizon.len()
    }

    /// Prior at horizon `h` (`1 <= h <= horizon`).
    pub fn get(&self, h: usize) -> &Distribution {
        &self.by_horizon[h - 1]
    }

    pub fn is_iid(&self) -> bool {
        self.by_horizon.windows(2).all(|w| w[0] == w[1])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Distribution)> {
        self.by_horizon.iter().enumerate().map(|(i, d)| (i + 1, d))
    }
}
