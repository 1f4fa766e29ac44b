//! One-or-all threshold auctions for negative-tradeoff rewards with i.i.d.
//! agents: either one free day, or the whole remaining horizon for a single
//! upfront charge.

use serde::Serialize;

use crate::dist::{Distribution, HorizonPriors};
use crate::error::{Error, Result};
use crate::fixed_rate::{CostFn, RewardTable};
use crate::ironing::{iron, iron_affine, IronedFn, IroningMode, DEFAULT_IRON_GRID};
use crate::reward::{
    affine_on_uniform, horizon_virtual_value, require_class, RewardClass, RewardFn,
};
use crate::swac::{
    audit_monotone, audit_truthful, support_grid, FiniteMenuSwac, MenuEntry, PaymentSchedule,
};

/// Output of the threshold precomputation for horizons `1..=n`.
#[derive(Debug, Clone)]
pub struct ThresholdPlan {
    dist: Distribution,
    reward_fn: RewardFn,
    /// `taus[h]` for `h >= 2`; entries 0 and 1 are unused.
    taus: Vec<f64>,
    /// `ironed[h]` for `h >= 2`.
    ironed: Vec<Option<IronedFn>>,
    rewards: RewardTable,
}

impl ThresholdPlan {
    pub fn horizon(&self) -> usize {
        self.rewards.horizon()
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    pub fn reward_fn(&self) -> &RewardFn {
        &self.reward_fn
    }

    pub fn rewards(&self) -> &RewardTable {
        &self.rewards
    }

    /// Sell-all threshold at horizon `h`; `None` for `h < 2`.
    pub fn tau(&self, h: usize) -> Option<f64> {
        (h >= 2).then(|| self.taus[h])
    }

    /// Horizon-specific ironed virtual value at `h >= 2`.
    pub fn ironed(&self, h: usize) -> Option<&IronedFn> {
        self.ironed.get(h).and_then(Option::as_ref)
    }

    /// Over-time cost at horizon `h`.
    pub fn cost(&self, h: usize) -> CostFn {
        CostFn::over_time(&self.rewards, h).expect("reward table validated")
    }

    /// Whether a type at `v` rents every remaining day at horizon `h`.
    fn sells_all(&self, h: usize, v: f64) -> bool {
        h >= 2 && self.taus[h] < self.dist.hi() && v >= self.taus[h]
    }
}

fn horizon_ironed(g: &RewardFn, d: &Distribution, h: usize, mode: IroningMode) -> Result<IronedFn> {
    if let IroningMode::Analytic = mode {
        if let Some((slope, intercept)) = affine_on_uniform(g, d, 1.0 / (h - 1) as f64) {
            return iron_affine(slope, intercept, d);
        }
    }
    let m = match mode {
        IroningMode::Grid(m) => m,
        IroningMode::Analytic => DEFAULT_IRON_GRID,
    };
    iron(|v| horizon_virtual_value(g, d, h, v), d, m)
}

/// `int_a^b v dF`.
fn partial_mean(d: &Distribution, a: f64, b: f64) -> Result<f64> {
    let p = d.interval_prob(a, b);
    if p > 0.0 {
        Ok(d.cond_mean(a, b)? * p)
    } else {
        Ok(0.0)
    }
}

/// Thresholds and reward table for the one-or-all mechanism.
pub fn precompute_threshold(
    priors: &HorizonPriors,
    g: &RewardFn,
    mode: IroningMode,
) -> Result<ThresholdPlan> {
    if !priors.is_iid() {
        return Err(Error::NotIid);
    }
    require_class(g, RewardClass::NegativeTradeoff)?;
    let (alpha, neg_beta) = g.as_linear().expect("negative tradeoff is linear");
    let beta = -neg_beta;
    let n = priors.horizon();
    let d = priors.get(1).clone();
    let (lo, hi) = (d.lo(), d.hi());
    let mut r = vec![0.0; n + 1];
    let mut taus = vec![f64::NAN; n + 1];
    let mut ironed = vec![None, None];
    r[1] = alpha * d.mean();
    for i in 2..=n {
        let phi = horizon_ironed(g, &d, i, mode)?;
        let tau = phi.threshold(r[i - 1] / (i - 1) as f64);
        let below = d.cdf(tau);
        let above = 1.0 - below;
        r[i] = alpha * partial_mean(&d, lo, tau)?
            + r[i - 1] * below
            + alpha * i as f64 * partial_mean(&d, tau, hi)?
            - beta * tau * above;
        taus[i] = tau;
        ironed.push(Some(phi));
    }
    Ok(ThresholdPlan {
        dist: d,
        reward_fn: g.clone(),
        taus,
        ironed,
        rewards: RewardTable::new(r)?,
    })
}

/// One free day below the threshold, otherwise every remaining day for the
/// threshold paid upfront.
pub fn run_threshold_auction(
    plan: &ThresholdPlan,
    h: usize,
    v: f64,
) -> Result<(usize, PaymentSchedule)> {
    if h == 0 || h > plan.horizon() {
        return Err(Error::HorizonTooSmall { n: h, min: 1 });
    }
    let d = &plan.dist;
    if !d.contains(v) {
        return Err(Error::OutOfSupport {
            v,
            lo: d.lo(),
            hi: d.hi(),
        });
    }
    if plan.sells_all(h, v) {
        Ok((h, PaymentSchedule::upfront(plan.taus[h], h)?))
    } else {
        Ok((1, PaymentSchedule::fixed_rate(0.0, 1)?))
    }
}

/// The horizon-`h` auction as a valuation-space menu.
pub fn threshold_menu(plan: &ThresholdPlan, h: usize) -> Result<FiniteMenuSwac> {
    if h == 0 || h > plan.horizon() {
        return Err(Error::HorizonTooSmall { n: h, min: 1 });
    }
    let (lo, hi) = (plan.dist.lo(), plan.dist.hi());
    let free = PaymentSchedule::fixed_rate(0.0, 1)?;
    let tau = if h >= 2 { plan.taus[h] } else { hi };
    let entries = if tau >= hi {
        vec![MenuEntry::new(lo, hi, free)?]
    } else if tau <= lo {
        vec![MenuEntry::new(lo, hi, PaymentSchedule::upfront(tau, h)?)?]
    } else {
        vec![
            MenuEntry::new(lo, tau, free)?,
            MenuEntry::new(tau, hi, PaymentSchedule::upfront(tau, h)?)?,
        ]
    };
    FiniteMenuSwac::new(h, entries)
}

/// Closed-form recursion for consumer surplus on `Uniform[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformRecurrence {
    /// `taus[i]` for `i >= 2`; entries 0 and 1 are unused.
    pub taus: Vec<f64>,
    /// `ells[i] = R_i / i` for `i >= 1`; entry 0 is unused.
    pub ells: Vec<f64>,
}

impl UniformRecurrence {
    pub fn horizon(&self) -> usize {
        self.ells.len() - 1
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.ells[i] * i as f64
    }

    /// `R_i / (0.5 i)`: the gap over the best fixed-rate mechanism.
    pub fn ratio(&self, i: usize) -> f64 {
        2.0 * self.ells[i]
    }

    /// First horizon at which `ell_i >= level`.
    pub fn first_reaching(&self, level: f64) -> Option<usize> {
        (1..=self.horizon()).find(|&i| self.ells[i] >= level)
    }
}

/// Iterates `tau_i = (R_{i-1} - 1) / (i - 3)` and
/// `ell_i = (tau/(2i) + (i-1)/i ell_{i-1}) tau + ((tau+1)/2 - tau/i)(1 - tau)`
/// from `ell_1 = ell_2 = ell_3 = 1/2`, `tau_2 = tau_3 = 1`.
pub fn uniform_recurrence(n: usize) -> UniformRecurrence {
    let n = n.max(3);
    let mut taus = vec![f64::NAN; n + 1];
    let mut ells = vec![f64::NAN; n + 1];
    ells[1] = 0.5;
    ells[2] = 0.5;
    ells[3] = 0.5;
    taus[2] = 1.0;
    taus[3] = 1.0;
    for i in 4..=n {
        let fi = i as f64;
        let r_prev = ells[i - 1] * (fi - 1.0);
        let tau = ((r_prev - 1.0) / (fi - 3.0)).clamp(0.0, 1.0);
        ells[i] = (tau / (2.0 * fi) + (fi - 1.0) / fi * ells[i - 1]) * tau
            + ((tau + 1.0) / 2.0 - tau / fi) * (1.0 - tau);
        taus[i] = tau;
    }
    UniformRecurrence { taus, ells }
}

/// Structural checks on a threshold plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdAudit {
    /// Horizons whose menu fails the truthfulness audit.
    pub untruthful_horizons: Vec<usize>,
    /// Horizons at which some type gets no unit.
    pub unserved_horizons: Vec<usize>,
    /// Horizons `i` with `R[i]/i < R[i-1]/(i-1) - 1e-9`.
    pub average_drops: Vec<usize>,
    /// Horizons whose menu allocates something other than 1 or `h`.
    pub not_one_or_all: Vec<usize>,
    /// Horizons at which the designer's reward is non-monotone in `v`.
    pub reward_non_monotone: Vec<usize>,
}

impl ThresholdAudit {
    pub fn passed(&self) -> bool {
        self.untruthful_horizons.is_empty()
            && self.unserved_horizons.is_empty()
            && self.average_drops.is_empty()
            && self.not_one_or_all.is_empty()
    }
}

pub fn audit_threshold_structure(plan: &ThresholdPlan, grid: usize) -> Result<ThresholdAudit> {
    let mut a = ThresholdAudit {
        untruthful_horizons: Vec::new(),
        unserved_horizons: Vec::new(),
        average_drops: Vec::new(),
        not_one_or_all: Vec::new(),
        reward_non_monotone: Vec::new(),
    };
    let r = plan.rewards.values();
    for h in 1..=plan.horizon() {
        let menu = threshold_menu(plan, h)?;
        if !audit_truthful(&menu, grid)?.truthful() {
            a.untruthful_horizons.push(h);
        }
        let c = plan.cost(h);
        let mono = audit_monotone(&menu, &plan.reward_fn, &c, grid)?;
        // the auction's own allocation: an agent indifferent between its
        // entry and walking away takes the entry
        let allocs = support_grid(menu.lo(), menu.hi(), grid)
            .into_iter()
            .map(|v| menu.best_response(v, None).map(|b| b.alloc))
            .collect::<Result<Vec<_>>>()?;
        if allocs.contains(&0) {
            a.unserved_horizons.push(h);
        }
        if allocs.iter().any(|&x| x != 1 && x != h) {
            a.not_one_or_all.push(h);
        }
        if !mono.reward_monotone() {
            a.reward_non_monotone.push(h);
        }
        if h >= 2 && r[h] / (h as f64) < r[h - 1] / (h - 1) as f64 - 1e-9 {
            a.average_drops.push(h);
        }
    }
    Ok(a)
}
