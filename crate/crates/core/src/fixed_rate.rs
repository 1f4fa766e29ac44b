//! Optimal fixed-rate rental: per-horizon allocation intervals over the
//! ironed virtual value, Myerson payments and the reward table.

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, HorizonPriors};
use crate::error::{Error, Result};
use crate::ironing::{iron, iron_affine, IronedFn, IroningMode, LEVEL_TOL};
use crate::reward::{affine_on_uniform, fr_virtual_value, RewardFn};
use crate::swac::{FiniteMenuSwac, MenuEntry, PaymentSchedule};

const TABLE_TOL: f64 = 1e-9;

/// Production cost `c(0..=n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CostFn {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for CostFn {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        CostFn::new(v)
    }
}

impl From<CostFn> for Vec<f64> {
    fn from(c: CostFn) -> Self {
        c.values
    }
}

impl CostFn {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            None => return Err(Error::InvalidCost("empty cost table".into())),
            Some(&c0) if c0 != 0.0 => {
                return Err(Error::InvalidCost(format!("c(0) = {c0}, expected 0")))
            }
            _ => {}
        }
        if let Some(x) = values.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidCost(format!("c({x}) is not finite")));
        }
        if let Some(x) = values.windows(2).position(|w| w[1] < w[0] - TABLE_TOL) {
            return Err(Error::InvalidCost(format!(
                "c({}) < c({x}): cost must be non-decreasing",
                x + 1
            )));
        }
        Ok(CostFn { values })
    }

    /// Zero cost for up to `n` units.
    pub fn zero(n: usize) -> Self {
        CostFn {
            values: vec![0.0; n + 1],
        }
    }

    /// The over-time cost at horizon `h`: `c(x) = R[h-1] - R[h-max(x,1)]`.
    pub fn over_time(r: &RewardTable, h: usize) -> Result<Self> {
        if h == 0 || h > r.horizon() {
            return Err(Error::InvalidRewardTable(format!(
                "horizon {h} outside 1..={}",
                r.horizon()
            )));
        }
        let values = (0..=h).map(|x| over_time_cost(r, h, x)).collect();
        CostFn::new(values)
    }

    /// Largest allocation the table covers.
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: usize) -> Result<f64> {
        self.values.get(x).copied().ok_or_else(|| {
            Error::InvalidCost(format!(
                "allocation {x} exceeds cost horizon {}",
                self.horizon()
            ))
        })
    }
}

/// `R[0..=n]`: expected reward of the optimal continuation per horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RewardTable {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for RewardTable {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        RewardTable::new(v)
    }
}

impl From<RewardTable> for Vec<f64> {
    fn from(r: RewardTable) -> Self {
        r.values
    }
}

impl RewardTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            None => return Err(Error::InvalidRewardTable("empty table".into())),
            Some(&r0) if r0 != 0.0 => {
                return Err(Error::InvalidRewardTable(format!(
                    "R[0] = {r0}, expected 0"
                )))
            }
            _ => {}
        }
        if let Some(h) = values.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidRewardTable(format!("R[{h}] is not finite")));
        }
        if let Some(h) = values.windows(2).position(|w| w[1] < w[0] - TABLE_TOL) {
            return Err(Error::InvalidRewardTable(format!(
                "R[{}] < R[{h}]: rewards must be non-decreasing in the horizon",
                h + 1
            )));
        }
        Ok(RewardTable { values })
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, h: usize) -> f64 {
        self.values[h]
    }
}

/// `R[h-1] - R[h-max(x,1)]`.
pub fn over_time_cost(r: &RewardTable, h: usize, x: usize) -> f64 {
    debug_assert!(h >= 1 && x <= h);
    r.values[h - 1] - r.values[h - x.max(1)]
}

/// One allocation interval `(left, right]` of ironed virtual values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanInterval {
    pub left: f64,
    /// `None` when unbounded above.
    #[serde(serialize_with = "ser_unbounded")]
    pub right: f64,
    pub alloc: usize,
    /// Total payment; `None` for intervals no valuation lands in.
    pub pay: Option<f64>,
    /// Valuations mapped into the interval: `(v_left, v_right]`.
    pub v_left: f64,
    pub v_right: f64,
    pub prob: f64,
}

fn ser_unbounded<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_some(x)
    } else {
        s.serialize_none()
    }
}

/// Algorithm output for a single horizon.
#[derive(Debug, Clone)]
pub struct HorizonPlan {
    horizon: usize,
    ironed: IronedFn,
    intervals: Vec<PlanInterval>,
    zero_upper: f64,
    zero_prob: f64,
}

impl HorizonPlan {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn ironed(&self) -> &IronedFn {
        &self.ironed
    }

    pub fn intervals(&self) -> &[PlanInterval] {
        &self.intervals
    }

    pub fn distribution(&self) -> &Distribution {
        self.ironed.distribution()
    }

    /// Probability that the arriving agent is turned away.
    pub fn zero_prob(&self) -> f64 {
        self.zero_prob
    }

    /// Allocation assigned to ironed virtual value `q`; `(left, right]`
    /// membership with [`LEVEL_TOL`] slack.
    pub fn alloc_for_virtual(&self, q: f64) -> usize {
        for j in &self.intervals {
            if q <= j.left + LEVEL_TOL {
                return 0;
            }
            if q <= j.right + LEVEL_TOL {
                return j.alloc;
            }
        }
        0
    }

    /// The interval a valuation falls into, if any agent of positive
    /// probability is served there.
    fn paid_interval(&self, v: f64) -> Option<&PlanInterval> {
        if v <= self.zero_upper && self.zero_prob > 0.0 {
            return None;
        }
        self.intervals
            .iter()
            .filter(|j| j.pay.is_some())
            .find(|j| v <= j.v_right)
            .or_else(|| self.intervals.iter().rev().find(|j| j.pay.is_some()))
    }
}

/// Options for [`precompute_fixed_rate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedRateOptions {
    pub ironing: IroningMode,
    /// Subtract the first served allocation's payment from every payment.
    /// Only meaningful when the reward decreases in payment and every type
    /// is served.
    pub normalize_base_payment: bool,
}

/// Plans for horizons `1..=n` and the reward table.
#[derive(Debug, Clone)]
pub struct FixedRatePlans {
    plans: Vec<HorizonPlan>,
    rewards: RewardTable,
    reward_fn: RewardFn,
}

impl FixedRatePlans {
    pub fn horizon(&self) -> usize {
        self.plans.len()
    }

    /// Plan at horizon `h` (`1 <= h <= n`).
    pub fn plan(&self, h: usize) -> &HorizonPlan {
        &self.plans[h - 1]
    }

    pub fn plans(&self) -> &[HorizonPlan] {
        &self.plans
    }

    pub fn rewards(&self) -> &RewardTable {
        &self.rewards
    }

    pub fn reward_fn(&self) -> &RewardFn {
        &self.reward_fn
    }

    /// Over-time cost at horizon `h`.
    pub fn cost(&self, h: usize) -> CostFn {
        CostFn::over_time(&self.rewards, h).expect("reward table validated")
    }
}

/// Ironed fixed-rate virtual value `g(v, phi(v))` for one prior.
pub fn fixed_rate_ironed(g: &RewardFn, d: &Distribution, mode: IroningMode) -> Result<IronedFn> {
    if let IroningMode::Analytic = mode {
        if let Some((slope, intercept)) = affine_on_uniform(g, d, 1.0) {
            return iron_affine(slope, intercept, d);
        }
    }
    let m = match mode {
        IroningMode::Grid(m) => m,
        IroningMode::Analytic => crate::ironing::DEFAULT_IRON_GRID,
    };
    iron(|v| fr_virtual_value(g, d, v), d, m)
}

#[derive(Debug, Clone, Copy)]
struct QInterval {
    left: f64,
    right: f64,
    alloc: usize,
}

/// Lower edge for extending an allocation-`i` interval of horizon `h-1`
/// to allocation `i+1` at horizon `h`: beyond it `i+1` units beat one unit.
fn extension_floor(r: &[f64], h: usize, i: usize) -> f64 {
    (r[h - 1] - r[h - 1 - i]) / i as f64
}

/// The same edge shifted by one unit, `(R[h-1] - R[h-i]) / (i-1)`; it is
/// not the point where `i+1` units overtake one unit.
fn shifted_floor(r: &[f64], h: usize, i: usize) -> f64 {
    if i < 2 {
        f64::NEG_INFINITY
    } else {
        (r[h - 1] - r[h - i]) / (i - 1) as f64
    }
}

fn build_intervals(
    prev: &[QInterval],
    r: &[f64],
    h: usize,
    floor: fn(&[f64], usize, usize) -> f64,
) -> Vec<QInterval> {
    let mut last_right = (1..h)
        .map(|y| (r[h - 1] - r[h - 1 - y]) / y as f64)
        .fold(f64::INFINITY, f64::min);
    let mut out = vec![QInterval {
        left: 0.0,
        right: last_right,
        alloc: 1,
    }];
    for j in prev {
        let lft = j.left.max(floor(r, h, j.alloc)).max(last_right);
        if lft < j.right {
            out.push(QInterval {
                left: lft,
                right: j.right,
                alloc: j.alloc + 1,
            });
            last_right = j.right;
        }
    }
    out
}

/// Allocations from interval tables built with [`shifted_floor`] instead of
/// [`extension_floor`]. Kept for comparison in tests.
#[doc(hidden)]
pub fn shifted_interval_allocs(r: &RewardTable, h: usize, qs: &[f64]) -> Vec<usize> {
    let mut prev = Vec::new();
    for k in 1..=h {
        prev = build_intervals(&prev, r.values(), k, shifted_floor);
    }
    qs.iter()
        .map(|&q| {
            for j in &prev {
                if q <= j.left + LEVEL_TOL {
                    return 0;
                }
                if q <= j.right + LEVEL_TOL {
                    return j.alloc;
                }
            }
            0
        })
        .collect()
}

/// Runs the interval recursion and the payment/reward pass for horizons
/// `1..=priors.horizon()`.
pub fn precompute_fixed_rate(
    priors: &HorizonPriors,
    g: &RewardFn,
    opts: FixedRateOptions,
) -> Result<FixedRatePlans> {
    g.class()?;
    let n = priors.horizon();
    if opts.normalize_base_payment && g.payment_coef() >= 0.0 {
        return Err(Error::config(
            "normalize_base_payment",
            "requires a reward that decreases in payment",
        ));
    }
    let mut r = vec![0.0; n + 1];
    let mut prev: Vec<QInterval> = Vec::new();
    let mut plans = Vec::with_capacity(n);
    for h in 1..=n {
        let d = priors.get(h);
        let ironed = fixed_rate_ironed(g, d, opts.ironing)?;
        let qs = build_intervals(&prev, &r, h, extension_floor);
        let plan = set_payments_and_reward(h, ironed, &qs, &mut r, g, opts)?;
        plans.push(plan);
        prev = qs;
    }
    let rewards = RewardTable::new(r)?;
    Ok(FixedRatePlans {
        plans,
        rewards,
        reward_fn: g.clone(),
    })
}

fn set_payments_and_reward(
    h: usize,
    ironed: IronedFn,
    qs: &[QInterval],
    r: &mut [f64],
    g: &RewardFn,
    opts: FixedRateOptions,
) -> Result<HorizonPlan> {
    let d = ironed.distribution().clone();
    let zero_upper = ironed.threshold(0.0);
    let zero_prob = d.cdf(zero_upper);
    let mut rh = zero_prob * r[h - 1];
    let (mut prev_alloc, mut pay) = (0usize, 0.0);
    let mut intervals = Vec::with_capacity(qs.len());
    for q in qs {
        let v_left = ironed.threshold(q.left);
        let v_right = if q.right.is_finite() {
            ironed.threshold(q.right)
        } else {
            d.hi()
        };
        let prob = d.interval_prob(v_left, v_right);
        let mut paid = None;
        if prob > 0.0 {
            pay += v_left * (q.alloc - prev_alloc) as f64;
            paid = Some(pay);
            rh += ironed.integral_between(v_left, v_right) * q.alloc as f64 + prob * r[h - q.alloc];
            prev_alloc = q.alloc;
        }
        intervals.push(PlanInterval {
            left: q.left,
            right: q.right,
            alloc: q.alloc,
            pay: paid,
            v_left,
            v_right,
            prob,
        });
    }
    if opts.normalize_base_payment {
        if zero_prob > 0.0 {
            return Err(Error::config(
                "normalize_base_payment",
                format!("horizon {h} turns away a positive mass of agents"),
            ));
        }
        if let Some(base) = intervals.iter().find_map(|j| j.pay) {
            let beta = g.payment_coef();
            for j in intervals.iter_mut() {
                if let Some(p) = j.pay.as_mut() {
                    *p -= base;
                    rh -= beta * base * j.prob;
                }
            }
        }
    }
    r[h] = rh;
    Ok(HorizonPlan {
        horizon: h,
        ironed,
        intervals,
        zero_upper,
        zero_prob,
    })
}

/// Sells the interval's allocation at its total payment split equally over
/// the rental, or nothing.
pub fn run_fixed_rate_auction(plan: &HorizonPlan, v: f64) -> Result<(usize, PaymentSchedule)> {
    let d = plan.distribution();
    if !d.contains(v) {
        return Err(Error::OutOfSupport {
            v,
            lo: d.lo(),
            hi: d.hi(),
        });
    }
    match plan.paid_interval(v) {
        Some(j) => Ok((
            j.alloc,
            PaymentSchedule::fixed_rate(j.pay.unwrap_or(0.0), j.alloc)?,
        )),
        None => Ok((0, PaymentSchedule::empty())),
    }
}

/// The plan as a valuation-space menu.
pub fn as_menu(plan: &HorizonPlan) -> Result<FiniteMenuSwac> {
    let d = plan.distribution();
    let mut starts: Vec<(f64, usize, f64)> = Vec::new();
    if plan.zero_prob > 0.0 {
        starts.push((d.lo(), 0, 0.0));
    }
    for j in &plan.intervals {
        if let Some(p) = j.pay {
            starts.push((j.v_left, j.alloc, p));
        }
    }
    if starts.is_empty() {
        starts.push((d.lo(), 0, 0.0));
    }
    starts[0].0 = d.lo();
    let mut entries = Vec::with_capacity(starts.len());
    for (k, &(left, alloc, total)) in starts.iter().enumerate() {
        let right = starts.get(k + 1).map_or(d.hi(), |s| s.0);
        if right <= left && k + 1 < starts.len() {
            continue;
        }
        let left = entries.last().map_or(left, |e: &MenuEntry| e.right);
        entries.push(MenuEntry::new(
            left,
            right.max(left),
            PaymentSchedule::fixed_rate(total, alloc)?,
        )?);
    }
    FiniteMenuSwac::new(plan.horizon, entries)
}
