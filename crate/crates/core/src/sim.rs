//! Monte-Carlo rental game: one agent arrives per day, and a free asset is
//! offered through the SWAC for the number of days left.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::HorizonPriors;
use crate::error::{Error, Result};
use crate::fixed_rate::{CostFn, FixedRatePlans, RewardTable};
use crate::reward::RewardFn;
use crate::swac::{FiniteMenuSwac, Objective};
use crate::threshold::{threshold_menu, ThresholdPlan};

/// One SWAC per horizon. Costs for tie-breaking come from the reward table
/// when one is attached, and are zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MechanismRecord", into = "MechanismRecord")]
pub struct RentalMechanism {
    /// `by_horizon[h - 1]` runs when `h` days are left.
    by_horizon: Vec<FiniteMenuSwac>,
    rewards: Option<RewardTable>,
}

/// Serialised form: SWACs listed from horizon `n` down to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismRecord {
    pub swacs: Vec<FiniteMenuSwac>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardTable>,
}

impl TryFrom<MechanismRecord> for RentalMechanism {
    type Error = Error;

    fn try_from(r: MechanismRecord) -> Result<Self> {
        RentalMechanism::new(r.swacs, r.rewards)
    }
}

impl From<RentalMechanism> for MechanismRecord {
    fn from(m: RentalMechanism) -> Self {
        let mut swacs = m.by_horizon;
        swacs.reverse();
        MechanismRecord {
            swacs,
            rewards: m.rewards,
        }
    }
}

impl RentalMechanism {
    /// `swacs` ordered from horizon `n` down to 1.
    pub fn new(mut swacs: Vec<FiniteMenuSwac>, rewards: Option<RewardTable>) -> Result<Self> {
        let n = swacs.len();
        if n == 0 {
            return Err(Error::MalformedMenu("mechanism has no SWACs".into()));
        }
        for (i, s) in swacs.iter().enumerate() {
            if s.horizon() != n - i {
                return Err(Error::MalformedMenu(format!(
                    "swacs[{i}] has horizon {}, expected {}",
                    s.horizon(),
                    n - i
                )));
            }
        }
        if let Some(r) = &rewards {
            if r.horizon() < n {
                return Err(Error::InvalidRewardTable(format!(
                    "reward table covers {} horizons, mechanism has {n}",
                    r.horizon()
                )));
            }
        }
        swacs.reverse();
        Ok(RentalMechanism {
            by_horizon: swacs,
            rewards,
        })
    }

    pub fn from_fixed_rate(p: &FixedRatePlans) -> Result<Self> {
        let swacs = p
            .plans()
            .iter()
            .rev()
            .map(crate::fixed_rate::as_menu)
            .collect::<Result<Vec<_>>>()?;
        RentalMechanism::new(swacs, Some(p.rewards().clone()))
    }

    pub fn from_threshold(p: &ThresholdPlan) -> Result<Self> {
        let swacs = (1..=p.horizon())
            .rev()
            .map(|h| threshold_menu(p, h))
            .collect::<Result<Vec<_>>>()?;
        RentalMechanism::new(swacs, Some(p.rewards().clone()))
    }

    pub fn horizon(&self) -> usize {
        self.by_horizon.len()
    }

    pub fn swac(&self, h: usize) -> &FiniteMenuSwac {
        &self.by_horizon[h - 1]
    }

    pub fn rewards(&self) -> Option<&RewardTable> {
        self.rewards.as_ref()
    }

    pub fn cost(&self, h: usize) -> CostFn {
        match &self.rewards {
            Some(r) => CostFn::over_time(r, h).expect("validated against the horizon"),
            None => CostFn::zero(h),
        }
    }
}

/// One day of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// 1-based calendar day.
    pub day: usize,
    /// Days left including this one.
    pub horizon: usize,
    /// The agent arriving today (sampled even when the asset is taken).
    pub valuation: f64,
    /// Whether the asset was free when the agent arrived.
    pub available: bool,
    /// Index of the tenancy occupying the asset today.
    pub tenancy: Option<usize>,
    pub payment: f64,
    pub reward: f64,
}

/// One rental agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tenancy {
    pub start_day: usize,
    pub valuation: f64,
    pub payments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub reward_fn: RewardFn,
    pub days: Vec<DayRecord>,
    pub tenancies: Vec<Tenancy>,
    pub total_reward: f64,
}

/// Runs one episode from horizon `n` to 1.
pub fn run_episode(
    m: &RentalMechanism,
    ds: &HorizonPriors,
    g: &RewardFn,
    rng: &mut ChaCha8Rng,
) -> Result<RunLog> {
    let n = m.horizon();
    let mut days: Vec<DayRecord> = Vec::with_capacity(n);
    let mut tenancies: Vec<Tenancy> = Vec::new();
    // (tenancy index, first day) of the agreement holding the asset
    let mut active: Option<(usize, usize)> = None;
    for day in 1..=n {
        let h = n - day + 1;
        let v = ds.get(h).sample(rng);
        if let Some((t, start)) = active {
            if day - start >= tenancies[t].payments.len() {
                active = None;
            }
        }
        let available = active.is_none();
        if available {
            let swac = m.swac(h);
            let cost = m.cost(h);
            let obj = Objective {
                reward: g,
                cost: &cost,
            };
            let br = swac.best_response(v, Some(&obj))?;
            if let Some(i) = br.chosen_entry.filter(|_| br.alloc > 0) {
                tenancies.push(Tenancy {
                    start_day: day,
                    valuation: v,
                    payments: swac.entries()[i].schedule().per_day().to_vec(),
                });
                active = Some((tenancies.len() - 1, day));
            }
        }
        let (tenancy, payment, reward) = match active {
            Some((t, start)) => {
                let p = tenancies[t].payments[day - start];
                (Some(t), p, g.eval(tenancies[t].valuation, p))
            }
            None => (None, 0.0, 0.0),
        };
        days.push(DayRecord {
            day,
            horizon: h,
            valuation: v,
            available,
            tenancy,
            payment,
            reward,
        });
    }
    let total_reward = days.iter().map(|d| d.reward).sum();
    Ok(RunLog {
        reward_fn: g.clone(),
        days,
        tenancies,
        total_reward,
    })
}

/// Generator for episode `e`: the seed picks the key, the episode the stream.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub episodes: u64,
    pub mean: f64,
    pub stderr: f64,
    /// Logs of the first episodes, in episode order.
    pub logs: Vec<RunLog>,
}

/// Pairwise summation, so the result does not depend on thread count.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error of the total reward over `episodes` runs,
/// keeping the first `keep_logs` logs.
pub fn simulate(
    m: &RentalMechanism,
    ds: &HorizonPriors,
    g: &RewardFn,
    seed: u64,
    episodes: u64,
    keep_logs: usize,
) -> Result<SimSummary> {
    if episodes == 0 {
        return Err(Error::config("episodes", "must be at least 1"));
    }
    if ds.horizon() < m.horizon() {
        return Err(Error::config(
            "distributions",
            format!(
                "{} priors for a horizon-{} mechanism",
                ds.horizon(),
                m.horizon()
            ),
        ));
    }
    let totals: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|e| run_episode(m, ds, g, &mut episode_rng(seed, e)).map(|log| log.total_reward))
        .collect::<Result<_>>()?;
    let logs = (0..episodes.min(keep_logs as u64))
        .map(|e| run_episode(m, ds, g, &mut episode_rng(seed, e)))
        .collect::<Result<Vec<_>>>()?;
    let k = totals.len() as f64;
    let mean = pairwise_sum(&totals) / k;
    let sq: Vec<f64> = totals.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if totals.len() > 1 {
        pairwise_sum(&sq) / (k - 1.0)
    } else {
        0.0
    };
    Ok(SimSummary {
        episodes,
        mean,
        stderr: (var / k).sqrt(),
        logs,
    })
}

/// Inconsistencies found by [`replay`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub availability_errors: Vec<String>,
    pub ir_violations: Vec<String>,
    pub reward_errors: Vec<String>,
}

impl ReplayReport {
    pub fn consistent(&self) -> bool {
        self.availability_errors.is_empty()
            && self.ir_violations.is_empty()
            && self.reward_errors.is_empty()
    }
}

/// Re-derives occupancy, stagewise IR and reward arithmetic from a log.
pub fn replay(log: &RunLog) -> ReplayReport {
    let mut rep = ReplayReport::default();
    let n = log.days.len();
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; n + 1];
    for (t, ten) in log.tenancies.iter().enumerate() {
        let len = ten.payments.len();
        if len == 0 || ten.start_day == 0 || ten.start_day + len - 1 > n {
            rep.availability_errors.push(format!(
                "tenancy {t}: {len} days from day {} do not fit in {n} days",
                ten.start_day
            ));
            continue;
        }
        for (i, slot) in owner[ten.start_day..ten.start_day + len]
            .iter_mut()
            .enumerate()
        {
            if let Some((other, _)) = slot {
                rep.availability_errors.push(format!(
                    "day {}: tenancies {other} and {t} overlap",
                    ten.start_day + i
                ));
            }
            *slot = Some((t, i));
        }
        let mut paid = 0.0;
        for (i, p) in ten.payments.iter().enumerate() {
            paid += p;
            let u = (i + 1) as f64 * ten.valuation - paid;
            if u < -1e-9 {
                rep.ir_violations.push(format!(
                    "tenancy {t}: cumulative utility {u} on its day {}",
                    i + 1
                ));
            }
        }
    }
    for (k, d) in log.days.iter().enumerate() {
        let expected = owner[k + 1];
        if d.day != k + 1 || d.horizon != n - k {
            rep.availability_errors
                .push(format!("record {k}: day/horizon out of sequence"));
        }
        if d.tenancy != expected.map(|(t, _)| t) {
            rep.availability_errors.push(format!(
                "day {}: recorded tenancy {:?}, expected {:?}",
                d.day,
                d.tenancy,
                expected.map(|(t, _)| t)
            ));
            continue;
        }
        let starts_today = matches!(expected, Some((_, 0)));
        let free = expected.is_none() || starts_today;
        if d.available != free {
            rep.availability_errors.push(format!(
                "day {}: availability {} but occupancy implies {free}",
                d.day, d.available
            ));
        }
        if starts_today {
            let t = expected.unwrap().0;
            if log.tenancies[t].valuation != d.valuation {
                rep.availability_errors.push(format!(
                    "day {}: tenancy {t} valuation differs from the arriving agent",
                    d.day
                ));
            }
        }
        let (pay, rew) = match expected {
            Some((t, i)) => {
                let p = log.tenancies[t].payments[i];
                (p, log.reward_fn.eval(log.tenancies[t].valuation, p))
            }
            None => (0.0, 0.0),
        };
        if d.payment != pay {
            rep.reward_errors.push(format!(
                "day {}: payment {} but the schedule says {pay}",
                d.day, d.payment
            ));
        }
        if (d.reward - rew).abs() > 1e-12 * (1.0 + rew.abs()) {
            rep.reward_errors.push(format!(
                "day {}: reward {} but g gives {rew}",
                d.day, d.reward
            ));
        }
    }
    let total: f64 = log.days.iter().map(|d| d.reward).sum();
    if (total - log.total_reward).abs() > 1e-9 * (1.0 + total.abs()) {
        rep.reward_errors.push(format!(
            "total reward {} but the days sum to {total}",
            log.total_reward
        ));
    }
    rep
}
