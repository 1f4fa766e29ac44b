//! Finite-menu stagewise auctions with seller cost.
//!
//! A menu partitions the support into adjacent intervals, each carrying an
//! allocation and a payment schedule. A stagewise-IR agent can only accept a
//! schedule whose running average payment never exceeds their valuation (the
//! schedule's *filter*); among acceptable schedules they maximise total
//! utility. Turning the agent away at zero payment is always available.

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::fixed_rate::CostFn;
use crate::reward::RewardFn;

/// Utilities within this distance are treated as tied.
pub const UTIL_TOL: f64 = 1e-9;
/// Slack when testing `filter <= v`.
pub const FILTER_TOL: f64 = 1e-12;

/// Per-day payments for an allocation of `per_day.len()` days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PaymentSchedule {
    per_day: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PaymentSchedule {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        PaymentSchedule::new(v)
    }
}

impl From<PaymentSchedule> for Vec<f64> {
    fn from(s: PaymentSchedule) -> Self {
        s.per_day
    }
}

impl PaymentSchedule {
    pub fn new(per_day: Vec<f64>) -> Result<Self> {
        if let Some((i, p)) = per_day
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::InvalidSchedule(format!(
                "day {} payment {p} must be finite and nonnegative",
                i + 1
            )));
        }
        Ok(PaymentSchedule { per_day })
    }

    /// No allocation, no payment.
    pub fn empty() -> Self {
        PaymentSchedule {
            per_day: Vec::new(),
        }
    }

    /// `total` split evenly over `alloc` days.
    pub fn fixed_rate(total: f64, alloc: usize) -> Result<Self> {
        if alloc == 0 {
            return if total == 0.0 {
                Ok(Self::empty())
            } else {
                Err(Error::InvalidSchedule(
                    "zero allocation cannot carry a payment".into(),
                ))
            };
        }
        Self::new(vec![total / alloc as f64; alloc])
    }

    /// Everything on day one.
    pub fn upfront(amount: f64, alloc: usize) -> Result<Self> {
        if alloc == 0 {
            return Self::fixed_rate(amount, 0);
        }
        let mut per_day = vec![0.0; alloc];
        per_day[0] = amount;
        Self::new(per_day)
    }

    /// Canonical two-parameter form: `filter` on day one, the rest of `total`
    /// spread evenly. Requires `total / alloc <= filter <= total`.
    pub fn canonical(total: f64, filter: f64, alloc: usize) -> Result<Self> {
        if alloc == 0 {
            if total != 0.0 || filter != 0.0 {
                return Err(Error::InvalidSchedule(
                    "zero allocation cannot carry a payment".into(),
                ));
            }
            return Ok(Self::empty());
        }
        let tol = 1e-9 * (1.0 + total.abs());
        if filter > total + tol || filter * alloc as f64 + tol < total {
            return Err(Error::InvalidSchedule(format!(
                "filter {filter} must lie in [total/alloc, total] = [{}, {total}]",
                total / alloc as f64
            )));
        }
        if alloc == 1 {
            return Self::new(vec![total]);
        }
        let first = filter.min(total);
        let rest = ((total - first) / (alloc - 1) as f64).max(0.0);
        let mut per_day = vec![rest; alloc];
        per_day[0] = first;
        Self::new(per_day)
    }

    pub fn per_day(&self) -> &[f64] {
        &self.per_day
    }

    pub fn alloc(&self) -> usize {
        self.per_day.len()
    }

    pub fn total(&self) -> f64 {
        self.per_day.iter().sum()
    }

    /// Highest cumulative average payment over all prefixes; `0` when empty.
    pub fn filter(&self) -> f64 {
        let mut acc = 0.0;
        let mut best: f64 = 0.0;
        for (l, p) in self.per_day.iter().enumerate() {
            acc += p;
            best = best.max(acc / (l + 1) as f64);
        }
        best
    }

    /// Cumulative utility `l * v - sum_{i <= l} p_i` after each day.
    pub fn cumulative_utility(&self, v: f64) -> Vec<f64> {
        let mut acc = 0.0;
        self.per_day
            .iter()
            .enumerate()
            .map(|(l, p)| {
                acc += p;
                (l + 1) as f64 * v - acc
            })
            .collect()
    }
}

/// One bid interval `[left, right)` of a menu (the last one is closed).
#[derive(Debug, Clone, PartialEq)]
pub struct MenuEntry {
    pub left: f64,
    pub right: f64,
    schedule: PaymentSchedule,
    total: f64,
    filter: f64,
}

impl MenuEntry {
    pub fn new(left: f64, right: f64, schedule: PaymentSchedule) -> Result<Self> {
        if !(left < right) {
            return Err(Error::MalformedMenu(format!(
                "entry interval [{left}, {right}) is empty"
            )));
        }
        Ok(MenuEntry {
            left,
            right,
            total: schedule.total(),
            filter: schedule.filter(),
            schedule,
        })
    }

    pub fn alloc(&self) -> usize {
        self.schedule.alloc()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn filter(&self) -> f64 {
        self.filter
    }

    pub fn schedule(&self) -> &PaymentSchedule {
        &self.schedule
    }

    /// Total utility of this bid for valuation `v`, ignoring the filter.
    pub fn utility(&self, v: f64) -> f64 {
        self.alloc() as f64 * v - self.total
    }

    pub fn accepts(&self, v: f64) -> bool {
        self.filter <= v + FILTER_TOL
    }
}

/// The designer's objective, used for seller-favourable tie-breaking and for
/// reward accounting.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub reward: &'a RewardFn,
    pub cost: &'a CostFn,
}

impl Objective<'_> {
    /// `sum_i g(v, p_i) - c(x)`; linear rewards make this depend on the
    /// schedule only through its total.
    pub fn outcome_reward(&self, v: f64, alloc: usize, total: f64) -> Result<f64> {
        let gross = alloc as f64 * self.reward.value_part(v) + self.reward.payment_coef() * total;
        Ok(gross - self.cost.eval(alloc)?)
    }
}

/// What an agent ends up with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponse {
    /// Chosen entry; `None` when the agent is turned away.
    pub chosen_entry: Option<usize>,
    pub alloc: usize,
    pub total: f64,
    pub utility: f64,
    /// Entries whose filter the agent passes.
    pub feasible_set: Vec<usize>,
}

/// `(entry, alloc, total)`; no entry means walking away.
type Candidate = (Option<usize>, usize, f64);

/// A horizon-`n` menu of adjacent bid intervals covering the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SwacRecord", into = "SwacRecord")]
pub struct FiniteMenuSwac {
    horizon: usize,
    entries: Vec<MenuEntry>,
    outside_option: bool,
}

/// Serialized form: each entry is described by `(total, filter)` and
/// expands to the canonical schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwacRecord {
    pub horizon: usize,
    pub entries: Vec<EntryRecord>,
    #[serde(default = "default_true")]
    pub outside_option: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    pub left: f64,
    pub right: f64,
    pub alloc: usize,
    pub total: f64,
    pub filter: f64,
}

fn default_true() -> bool {
    true
}

impl TryFrom<SwacRecord> for FiniteMenuSwac {
    type Error = Error;

    fn try_from(r: SwacRecord) -> Result<Self> {
        let entries = r
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                PaymentSchedule::canonical(e.total, e.filter, e.alloc)
                    .and_then(|s| MenuEntry::new(e.left, e.right, s))
                    .map_err(|err| Error::MalformedMenu(format!("entries[{i}]: {err}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = FiniteMenuSwac::new(r.horizon, entries)?;
        m.outside_option = r.outside_option;
        Ok(m)
    }
}

impl From<FiniteMenuSwac> for SwacRecord {
    fn from(m: FiniteMenuSwac) -> Self {
        SwacRecord {
            horizon: m.horizon,
            entries: m
                .entries
                .iter()
                .map(|e| EntryRecord {
                    left: e.left,
                    right: e.right,
                    alloc: e.alloc(),
                    total: e.total,
                    filter: e.filter,
                })
                .collect(),
            outside_option: m.outside_option,
        }
    }
}

impl FiniteMenuSwac {
    pub fn new(horizon: usize, entries: Vec<MenuEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::MalformedMenu("menu has no entries".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.alloc() > horizon {
                return Err(Error::MalformedMenu(format!(
                    "entries[{i}]: allocation {} exceeds horizon {horizon}",
                    e.alloc()
                )));
            }
        }
        for (i, w) in entries.windows(2).enumerate() {
            let gap = (w[1].left - w[0].right).abs();
            if gap > 1e-12 * (1.0 + w[0].right.abs()) {
                return Err(Error::MalformedMenu(format!(
                    "entries[{}] starts at {} but entries[{i}] ends at {}",
                    i + 1,
                    w[1].left,
                    w[0].right
                )));
            }
        }
        Ok(FiniteMenuSwac {
            horizon,
            entries,
            outside_option: true,
        })
    }

    /// Disables the implicit zero-allocation option.
    pub fn without_outside_option(mut self) -> Self {
        self.outside_option = false;
        self
    }

    /// Checks that the menu spans exactly the support of `d`.
    pub fn check_covers(&self, d: &Distribution) -> Result<()> {
        let tol = 1e-9 * (1.0 + d.hi().abs());
        if (self.lo() - d.lo()).abs() > tol || (self.hi() - d.hi()).abs() > tol {
            return Err(Error::MalformedMenu(format!(
                "menu spans [{}, {}] but the support is [{}, {}]",
                self.lo(),
                self.hi(),
                d.lo(),
                d.hi()
            )));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn entries(&self) -> &[MenuEntry] {
        &self.entries
    }

    pub fn has_outside_option(&self) -> bool {
        self.outside_option
    }

    pub fn lo(&self) -> f64 {
        self.entries[0].left
    }

    pub fn hi(&self) -> f64 {
        self.entries[self.entries.len() - 1].right
    }

    /// Index of the bid interval holding `v`.
    pub fn entry_for(&self, v: f64) -> Option<usize> {
        if v < self.lo() || v > self.hi() {
            return None;
        }
        let i = self.entries.partition_point(|e| e.left <= v);
        Some(i.saturating_sub(1))
    }

    pub fn feasible_set(&self, v: f64) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].accepts(v))
            .collect()
    }

    /// Stagewise-IR best response at `v`: maximise utility over acceptable
    /// entries (and turning away); break ties by designer reward when an
    /// objective is supplied, then by lowest entry index with turning away
    /// last.
    pub fn best_response(&self, v: f64, objective: Option<&Objective>) -> Result<BestResponse> {
        let feasible = self.feasible_set(v);
        let mut cands: Vec<Candidate> = feasible
            .iter()
            .map(|&i| (Some(i), self.entries[i].alloc(), self.entries[i].total))
            .collect();
        if self.outside_option {
            cands.push((None, 0, 0.0));
        }
        if cands.is_empty() {
            return Err(Error::IrViolation { v });
        }
        let best_u = cands
            .iter()
            .map(|&(_, x, p)| x as f64 * v - p)
            .fold(f64::NEG_INFINITY, f64::max);
        let tied = cands
            .into_iter()
            .filter(|&(_, x, p)| x as f64 * v - p >= best_u - UTIL_TOL);
        let (chosen, alloc, total) = match objective {
            None => tied
                .into_iter()
                .next()
                .expect("the maximiser is tied with itself"),
            Some(obj) => {
                let mut best = None::<(Candidate, f64)>;
                for c in tied {
                    let r = obj.outcome_reward(v, c.1, c.2)?;
                    if best.as_ref().is_none_or(|(_, br)| r > br + UTIL_TOL) {
                        best = Some((c, r));
                    }
                }
                best.expect("nonempty").0
            }
        };
        Ok(BestResponse {
            chosen_entry: chosen,
            alloc,
            total,
            utility: alloc as f64 * v - total,
            feasible_set: feasible,
        })
    }

    /// Designer reward `sum_i g(v, p_i) - c(x)` at the agent's best response.
    pub fn designer_reward(&self, g: &RewardFn, c: &CostFn, v: f64) -> Result<f64> {
        let obj = Objective { reward: g, cost: c };
        let br = self.best_response(v, Some(&obj))?;
        obj.outcome_reward(v, br.alloc, br.total)
    }

    /// Valuations where the best response may change: interval ends, filters,
    /// pairwise indifference points, and kinks of the prior and reward.
    fn breakpoints(&self, g: &RewardFn, d: &Distribution) -> Vec<f64> {
        let (lo, hi) = (d.lo(), d.hi());
        let mut pts = vec![lo, hi];
        let bids: Vec<(f64, f64)> = self
            .entries
            .iter()
            .map(|e| (e.alloc() as f64, e.total))
            .chain(std::iter::once((0.0, 0.0)))
            .collect();
        for e in &self.entries {
            pts.extend([e.left, e.right, e.filter]);
        }
        for (i, &(xi, pi)) in bids.iter().enumerate() {
            for &(xj, pj) in &bids[i + 1..] {
                if xi != xj {
                    pts.push((pi - pj) / (xi - xj));
                }
            }
        }
        pts.extend(d.breakpoints());
        pts.extend(g.breakpoints());
        pts.retain(|p| p.is_finite() && *p >= lo && *p <= hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `E_{v ~ d}[designer reward]` by exact piecewise integration: between
    /// consecutive breakpoints the best response is fixed and the reward is
    /// affine in `v`, so it is evaluated at the conditional mean.
    pub fn expected_reward(&self, g: &RewardFn, c: &CostFn, d: &Distribution) -> Result<f64> {
        let obj = Objective { reward: g, cost: c };
        let pts = self.breakpoints(g, d);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let prob = d.interval_prob(a, b);
            if prob <= 0.0 {
                continue;
            }
            let br = self.best_response(0.5 * (a + b), Some(&obj))?;
            let mean = d.cond_mean(a, b)?;
            total += prob * obj.outcome_reward(mean, br.alloc, br.total)?;
        }
        Ok(total)
    }
}

/// `k` evenly spaced valuations from `lo` to `hi` inclusive.
pub fn support_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k)
            .map(|i| {
                if i == k - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (k - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthViolation {
    pub v: f64,
    pub own_entry: Option<usize>,
    pub chosen_entry: Option<usize>,
    /// Utility gained by misreporting.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthfulReport {
    pub grid_size: usize,
    pub violations: Vec<TruthViolation>,
}

impl TruthfulReport {
    pub fn truthful(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that truthful bidding is weakly dominant at every grid valuation.
/// Bidding truthfully yields the own entry when its filter admits `v`, and
/// otherwise the agent refuses the agreement and walks away with zero. A
/// violation is a feasible bid that pays strictly more than that.
pub fn audit_truthful(m: &FiniteMenuSwac, grid: usize) -> Result<TruthfulReport> {
    let mut violations = Vec::new();
    for v in support_grid(m.lo(), m.hi(), grid) {
        let br = m.best_response(v, None)?;
        let own = m.entry_for(v);
        let own_u = match own.map(|i| &m.entries[i]) {
            Some(e) if e.accepts(v) => Some(e.utility(v)),
            _ if m.outside_option => Some(0.0),
            _ => None,
        };
        let ok = matches!(own_u, Some(u) if u >= br.utility - UTIL_TOL);
        if !ok {
            violations.push(TruthViolation {
                v,
                own_entry: own,
                chosen_entry: br.chosen_entry,
                gain: br.utility - own_u.unwrap_or(f64::NEG_INFINITY),
            });
        }
    }
    Ok(TruthfulReport {
        grid_size: grid,
        violations,
    })
}

/// Realised outcome at one valuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointOutcome {
    pub v: f64,
    pub alloc: usize,
    pub total: f64,
    pub filter: f64,
    pub reward: f64,
}

/// Best-response outcome at each point, with the designer's net reward.
pub fn point_outcomes(
    m: &FiniteMenuSwac,
    g: &RewardFn,
    c: &CostFn,
    points: &[f64],
) -> Result<Vec<PointOutcome>> {
    let obj = Objective { reward: g, cost: c };
    points
        .iter()
        .map(|&v| {
            let br = m.best_response(v, Some(&obj))?;
            Ok(PointOutcome {
                v,
                alloc: br.alloc,
                total: br.total,
                filter: br.chosen_entry.map_or(0.0, |i| m.entries[i].filter),
                reward: obj.outcome_reward(v, br.alloc, br.total)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub grid_size: usize,
    pub allocation_violations: usize,
    pub reward_violations: usize,
    /// First violating pair `(w, v)` with `w < v`, in grid order.
    pub allocation_witness: Option<(PointOutcome, PointOutcome)>,
    pub reward_witness: Option<(PointOutcome, PointOutcome)>,
}

impl MonotoneReport {
    pub fn allocation_monotone(&self) -> bool {
        self.allocation_violations == 0
    }

    pub fn reward_monotone(&self) -> bool {
        self.reward_violations == 0
    }
}

pub fn audit_monotone(
    m: &FiniteMenuSwac,
    g: &RewardFn,
    c: &CostFn,
    grid: usize,
) -> Result<MonotoneReport> {
    audit_monotone_at(m, g, c, &support_grid(m.lo(), m.hi(), grid))
}

/// Allocation and reward monotonicity over all ordered pairs of `points`.
pub fn audit_monotone_at(
    m: &FiniteMenuSwac,
    g: &RewardFn,
    c: &CostFn,
    points: &[f64],
) -> Result<MonotoneReport> {
    let mut pts = points.to_vec();
    pts.sort_by(f64::total_cmp);
    let outs = point_outcomes(m, g, c, &pts)?;
    let mut report = MonotoneReport {
        grid_size: pts.len(),
        allocation_violations: 0,
        reward_violations: 0,
        allocation_witness: None,
        reward_witness: None,
    };
    for (i, w) in outs.iter().enumerate() {
        for v in &outs[i + 1..] {
            if w.v >= v.v {
                continue;
            }
            if w.alloc > v.alloc {
                report.allocation_violations += 1;
                report.allocation_witness.get_or_insert((*w, *v));
            }
            if w.reward > v.reward + 1e-9 {
                report.reward_violations += 1;
                report.reward_witness.get_or_insert((*w, *v));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropsReport {
    pub grid_size: usize,
    pub truthful: bool,
    /// Equal-allocation pairs checked / violations of "higher type pays less".
    pub equal_alloc_pairs: usize,
    pub payment_order_violations: usize,
    /// Bid pairs x grid pairs checked / violations of the benefit-swap inequality.
    pub benefit_swap_checks: usize,
    pub benefit_swap_violations: usize,
    /// Allocation inversions checked / inversions not explained by a filter.
    pub inversions: usize,
    pub filter_violations: usize,
}

impl PropsReport {
    pub fn passed(&self) -> bool {
        self.payment_order_violations == 0
            && self.benefit_swap_violations == 0
            && self.filter_violations == 0
    }
}

/// Structural checks for truthful menus over grid pairs `w < v`:
///
/// * equal allocations imply `total(w) >= total(v)`;
/// * for bids `b, b'` with `x(b) > x(b')`, switching from `b` to `b'` helps
///   `w` strictly more than it helps `v` (checked on consecutive grid pairs);
/// * whenever `x(w) > x(v)`, agent `w` would gain by taking `v`'s bid but is
///   filtered out: `p(v) >= F(v) > w`.
pub fn audit_props(
    m: &FiniteMenuSwac,
    g: &RewardFn,
    c: &CostFn,
    grid: usize,
) -> Result<PropsReport> {
    let pts = support_grid(m.lo(), m.hi(), grid);
    let truthful = audit_truthful(m, grid)?.truthful();
    let outs = point_outcomes(m, g, c, &pts)?;
    let mut r = PropsReport {
        grid_size: grid,
        truthful,
        equal_alloc_pairs: 0,
        payment_order_violations: 0,
        benefit_swap_checks: 0,
        benefit_swap_violations: 0,
        inversions: 0,
        filter_violations: 0,
    };
    let tol = 1e-9;
    for (i, w) in outs.iter().enumerate() {
        for v in &outs[i + 1..] {
            if w.alloc == v.alloc && w.alloc > 0 {
                r.equal_alloc_pairs += 1;
                if w.total < v.total - tol {
                    r.payment_order_violations += 1;
                }
            }
            if w.alloc > v.alloc {
                r.inversions += 1;
                let gain = (v.alloc as f64 * w.v - v.total) - (w.alloc as f64 * w.v - w.total);
                let filtered = v.filter > w.v && v.total >= v.filter - tol;
                if !(gain > 0.0 && filtered) {
                    r.filter_violations += 1;
                }
            }
        }
    }
    let bids: Vec<(f64, f64)> = m
        .entries
        .iter()
        .map(|e| (e.alloc() as f64, e.total))
        .chain(std::iter::once((0.0, 0.0)))
        .collect();
    for &(xb, pb) in &bids {
        for &(xb2, pb2) in &bids {
            if xb <= xb2 {
                continue;
            }
            for wv in pts.windows(2) {
                let (w, v) = (wv[0], wv[1]);
                r.benefit_swap_checks += 1;
                let dw = (xb2 * w - pb2) - (xb * w - pb);
                let dv = (xb2 * v - pb2) - (xb * v - pb);
                if !(dw > dv) {
                    r.benefit_swap_violations += 1;
                }
            }
        }
    }
    Ok(r)
}

/// The non-monotone truthful menu on `Uniform[0, 8]`: six days at 2 per day
/// below 4, five days for 4 upfront from 4 on.
pub fn example_menu() -> FiniteMenuSwac {
    let low = MenuEntry::new(0.0, 4.0, PaymentSchedule::fixed_rate(12.0, 6).unwrap()).unwrap();
    let high = MenuEntry::new(4.0, 8.0, PaymentSchedule::upfront(4.0, 5).unwrap()).unwrap();
    FiniteMenuSwac::new(6, vec![low, high]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn u01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn filter_examples() {
        let f = |p: &[f64]| PaymentSchedule::new(p.to_vec()).unwrap().filter();
        assert_abs_diff_eq!(f(&[3.0, 4.0, 2.0]), 3.5);
        assert_eq!(f(&[4.0, 0.0, 0.0, 0.0, 0.0]), 4.0);
        assert_eq!(f(&[2.0; 6]), 2.0);
        assert_eq!(PaymentSchedule::empty().filter(), 0.0);
        assert!(PaymentSchedule::new(vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn canonical_schedule_keeps_total_and_filter() {
        let s = PaymentSchedule::canonical(9.0, 3.5, 3).unwrap();
        assert_eq!(s.per_day(), &[3.5, 2.75, 2.75]);
        assert_abs_diff_eq!(s.total(), 9.0);
        assert_abs_diff_eq!(s.filter(), 3.5);
        assert!(PaymentSchedule::canonical(9.0, 2.0, 3).is_err());
        assert!(PaymentSchedule::canonical(9.0, 10.0, 3).is_err());
    }

    #[test]
    fn best_response_example_menu() {
        let m = example_menu();
        let br = m.best_response(3.0, None).unwrap();
        assert_eq!((br.chosen_entry, br.alloc), (Some(0), 6));
        assert_abs_diff_eq!(br.utility, 6.0);
        let br = m.best_response(4.0, None).unwrap();
        assert_eq!((br.chosen_entry, br.alloc), (Some(1), 5));
        assert_abs_diff_eq!(br.utility, 16.0);
        // 5 * 3.9 - 4 beats 6 * 3.9 - 12, but the upfront 4 filters 3.9 out
        let br = m.best_response(3.9, None).unwrap();
        assert_eq!(br.chosen_entry, Some(0));
        assert_eq!(br.feasible_set, vec![0]);
    }

    #[test]
    fn no_outside_option_can_violate_ir() {
        let e = MenuEntry::new(0.0, 1.0, PaymentSchedule::upfront(0.5, 1).unwrap()).unwrap();
        let m = FiniteMenuSwac::new(1, vec![e])
            .unwrap()
            .without_outside_option();
        assert_eq!(
            m.best_response(0.2, None),
            Err(Error::IrViolation { v: 0.2 })
        );
        assert!(m.best_response(0.7, None).is_ok());
    }

    #[test]
    fn designer_reward_examples() {
        let m = example_menu();
        let c = CostFn::zero(6);
        let rev = RewardFn::revenue();
        assert_abs_diff_eq!(m.designer_reward(&rev, &c, 3.0).unwrap(), 12.0);
        assert_abs_diff_eq!(m.designer_reward(&rev, &c, 4.0).unwrap(), 4.0);
        let free = FiniteMenuSwac::new(
            1,
            vec![MenuEntry::new(0.0, 1.0, PaymentSchedule::new(vec![0.0]).unwrap()).unwrap()],
        )
        .unwrap();
        assert_abs_diff_eq!(
            free.designer_reward(&RewardFn::consumer_surplus(), &CostFn::zero(1), 0.6)
                .unwrap(),
            0.6
        );
    }

    #[test]
    fn expected_reward_examples() {
        let d8 = Distribution::uniform(0.0, 8.0).unwrap();
        let m = example_menu();
        let got = m
            .expected_reward(&RewardFn::revenue(), &CostFn::zero(6), &d8)
            .unwrap();
        // types below 2 fail the six-day filter and walk away
        assert_abs_diff_eq!(got, 0.25 * 12.0 + 0.5 * 4.0, epsilon = 1e-12);

        let free = FiniteMenuSwac::new(
            1,
            vec![MenuEntry::new(0.0, 1.0, PaymentSchedule::new(vec![0.0]).unwrap()).unwrap()],
        )
        .unwrap();
        let got = free
            .expected_reward(&RewardFn::consumer_surplus(), &CostFn::zero(1), &u01())
            .unwrap();
        assert_abs_diff_eq!(got, 0.5, epsilon = 1e-12);

        let nothing = FiniteMenuSwac::new(
            1,
            vec![MenuEntry::new(0.0, 1.0, PaymentSchedule::empty()).unwrap()],
        )
        .unwrap();
        assert_eq!(
            nothing
                .expected_reward(&RewardFn::revenue(), &CostFn::zero(1), &u01())
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn audits_on_example_menu() {
        let m = example_menu();
        let t = audit_truthful(&m, 1000).unwrap();
        assert!(t.truthful(), "{:?}", t.violations.first());
        let rev = RewardFn::revenue();
        let c = CostFn::zero(6);
        let mono = audit_monotone(&m, &rev, &c, 1000).unwrap();
        assert!(!mono.allocation_monotone());
        assert!(!mono.reward_monotone());
        let at = audit_monotone_at(&m, &rev, &c, &[3.0, 4.0]).unwrap();
        let (w, v) = at.allocation_witness.unwrap();
        assert_eq!((w.v, v.v, w.alloc, v.alloc), (3.0, 4.0, 6, 5));
        let (w, v) = at.reward_witness.unwrap();
        assert_eq!((w.reward, v.reward), (12.0, 4.0));
        let props = audit_props(&m, &rev, &c, 1000).unwrap();
        assert!(props.passed(), "{props:?}");
        assert!(props.inversions > 0);
    }

    #[test]
    fn audit_flags_untruthful_menu() {
        // the low interval gets two free days, the high interval one free day
        let a = MenuEntry::new(0.0, 0.5, PaymentSchedule::new(vec![0.0, 0.0]).unwrap()).unwrap();
        let b = MenuEntry::new(0.5, 1.0, PaymentSchedule::new(vec![0.0]).unwrap()).unwrap();
        let m = FiniteMenuSwac::new(2, vec![a, b]).unwrap();
        let t = audit_truthful(&m, 101).unwrap();
        assert!(!t.truthful());
        assert!(t
            .violations
            .iter()
            .all(|x| x.v >= 0.5 && x.chosen_entry == Some(0)));
    }

    #[test]
    fn serde_round_trip() {
        let m = example_menu();
        let json = serde_json::to_string(&m).unwrap();
        let back: FiniteMenuSwac = serde_json::from_str(&json).unwrap();
        assert_eq!(back.entries().len(), 2);
        for (a, b) in m.entries().iter().zip(back.entries()) {
            assert_eq!(a.alloc(), b.alloc());
            assert_abs_diff_eq!(a.total(), b.total());
            assert_abs_diff_eq!(a.filter(), b.filter());
        }
        let bad =
            r#"{"horizon":2,"entries":[{"left":0,"right":1,"alloc":3,"total":0,"filter":0}]}"#;
        assert!(serde_json::from_str::<FiniteMenuSwac>(bad).is_err());
        let gap = r#"{"horizon":2,"entries":[{"left":0,"right":0.4,"alloc":1,"total":0,"filter":0},
                      {"left":0.5,"right":1,"alloc":1,"total":0,"filter":0}]}"#;
        assert!(serde_json::from_str::<FiniteMenuSwac>(gap).is_err());
    }

    /// Random menu on [0, 1] with canonical schedules.
    pub(crate) fn random_menu(rng: &mut ChaCha8Rng, horizon: usize) -> FiniteMenuSwac {
        let k = rng.random_range(1..=4);
        let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut bounds = vec![0.0];
        bounds.extend(cuts);
        bounds.push(1.0);
        let entries = bounds
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let alloc = rng.random_range(0..=horizon);
                let sched = if alloc == 0 {
                    PaymentSchedule::empty()
                } else {
                    let total = rng.random::<f64>() * alloc as f64;
                    let lo = total / alloc as f64;
                    let filter = lo + rng.random::<f64>() * (total - lo);
                    PaymentSchedule::canonical(total, filter, alloc).unwrap()
                };
                MenuEntry::new(w[0], w[1], sched).unwrap()
            })
            .collect();
        FiniteMenuSwac::new(horizon, entries).unwrap()
    }

    #[test]
    fn benefit_swap_holds_on_random_menus() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let m = random_menu(&mut rng, 4);
            let r = audit_props(&m, &RewardFn::revenue(), &CostFn::zero(4), 100).unwrap();
            assert_eq!(r.benefit_swap_violations, 0);
        }
    }

    #[test]
    fn expected_reward_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = u01();
        let g = RewardFn::linear(1.0, 0.5).unwrap();
        let c = CostFn::new(vec![0.0, 0.1, 0.3, 0.3]).unwrap();
        for _ in 0..3 {
            let m = random_menu(&mut rng, 3);
            let exact = m.expected_reward(&g, &c, &d).unwrap();
            let n = 1_000_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let r = m.designer_reward(&g, &c, d.sample(&mut rng)).unwrap();
                s += r;
                s2 += r * r;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(
                (mean - exact).abs() <= 3.0 * se + 1e-12,
                "{mean} vs {exact} (se {se})"
            );
        }
    }

    proptest! {
        #[test]
        fn feasible_sets_grow_and_utility_is_nonnegative(seed in 0u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_menu(&mut rng, 4);
            let (w, v) = (a.min(b), a.max(b));
            let (fw, fv) = (m.feasible_set(w), m.feasible_set(v));
            prop_assert!(fw.iter().all(|i| fv.contains(i)));
            let (bw, bv) = (m.best_response(w, None).unwrap(), m.best_response(v, None).unwrap());
            prop_assert!(bw.utility >= 0.0 && bv.utility >= 0.0);
            prop_assert!(bv.utility >= bw.utility - 1e-12);
            // cumulative-utility test agrees with the filter test
            for e in m.entries() {
                let stagewise = e.schedule().cumulative_utility(v).iter().all(|&u| u >= -1e-9);
                prop_assert_eq!(stagewise, e.accepts(v) || (e.filter() - v).abs() < 1e-9);
            }
        }
    }
}
