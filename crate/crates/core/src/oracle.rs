//! Exhaustive optimisation on small discrete instances, used as ground truth
//! for the algorithmic mechanisms.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::DiscreteGrid;
use crate::error::{Error, Result};
use crate::fixed_rate::CostFn;
use crate::ironing::IronedFn;
use crate::reward::RewardFn;
use crate::swac::{FiniteMenuSwac, MenuEntry, Objective, PaymentSchedule, FILTER_TOL, UTIL_TOL};

pub const MAX_TYPES: usize = 12;
pub const MAX_LEVELS: usize = 12;
pub const MAX_HORIZON: usize = 4;

/// A finite type space with a finite set of payment levels.
#[derive(Debug, Clone)]
pub struct DiscreteSetting {
    pub grid: DiscreteGrid,
    pub horizon: usize,
    /// Allowed totals and filters, sorted and nonnegative.
    pub payment_levels: Vec<f64>,
    pub reward: RewardFn,
    pub cost: CostFn,
}

impl DiscreteSetting {
    pub fn new(
        grid: DiscreteGrid,
        horizon: usize,
        mut payment_levels: Vec<f64>,
        reward: RewardFn,
        cost: CostFn,
    ) -> Result<Self> {
        payment_levels.sort_by(f64::total_cmp);
        payment_levels.dedup();
        if payment_levels.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidSchedule(
                "payment levels must be finite and nonnegative".into(),
            ));
        }
        if cost.horizon() < horizon {
            return Err(Error::InvalidCost(format!(
                "cost covers {} units, horizon is {horizon}",
                cost.horizon()
            )));
        }
        let s = DiscreteSetting {
            grid,
            horizon,
            payment_levels,
            reward,
            cost,
        };
        if s.grid.len() > MAX_TYPES || s.payment_levels.len() > MAX_LEVELS || horizon > MAX_HORIZON
        {
            return Err(Error::TooLarge(format!(
                "{} types, {} payment levels, horizon {horizon} (limits {MAX_TYPES}, {MAX_LEVELS}, \
                 {MAX_HORIZON}); about {:.3e} candidate menus",
                s.grid.len(),
                s.payment_levels.len(),
                s.candidate_menus()
            )));
        }
        Ok(s)
    }

    /// Size of the unpruned search space: options per type to the number
    /// of types.
    pub fn candidate_menus(&self) -> f64 {
        (self.options().len() as f64).powi(self.grid.len() as i32)
    }

    /// Every `(alloc, total, filter)` a type can be assigned.
    pub fn options(&self) -> Vec<OracleOption> {
        let mut out = vec![OracleOption {
            alloc: 0,
            total: 0.0,
            filter: 0.0,
        }];
        for alloc in 1..=self.horizon {
            for &total in &self.payment_levels {
                let floor = total / alloc as f64;
                let mut filters: Vec<f64> = self
                    .payment_levels
                    .iter()
                    .copied()
                    .filter(|&f| f >= floor && f <= total)
                    .collect();
                if alloc == 1 {
                    filters = vec![total];
                } else {
                    filters.push(floor);
                }
                filters.sort_by(f64::total_cmp);
                filters.dedup();
                out.extend(filters.into_iter().map(|filter| OracleOption {
                    alloc,
                    total,
                    filter,
                }));
            }
        }
        out
    }

    fn objective(&self) -> Objective<'_> {
        Objective {
            reward: &self.reward,
            cost: &self.cost,
        }
    }
}

/// One menu option: allocation, total payment and filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleOption {
    pub alloc: usize,
    pub total: f64,
    pub filter: f64,
}

impl OracleOption {
    fn schedule(&self) -> Result<PaymentSchedule> {
        if self.alloc == 0 {
            Ok(PaymentSchedule::empty())
        } else {
            PaymentSchedule::canonical(self.total, self.filter, self.alloc)
        }
    }
}

/// Optimal menu found by exhaustive search.
#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    /// Option assigned to each type, in grid order.
    pub assignment: Vec<OracleOption>,
    /// Expected reward when every type best-responds to the menu.
    pub reward: f64,
    /// Search nodes visited.
    pub nodes: u64,
}

/// Builds a menu offering `options[i]` on a cell around `points[i]`.
pub fn menu_from_assignment(
    points: &[f64],
    horizon: usize,
    options: &[OracleOption],
) -> Result<FiniteMenuSwac> {
    let k = points.len();
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(points[0]);
    for w in points.windows(2) {
        bounds.push(0.5 * (w[0] + w[1]));
    }
    bounds.push(if k > 1 {
        points[k - 1]
    } else {
        points[0] + 1.0
    });
    let entries = options
        .iter()
        .enumerate()
        .map(|(i, o)| MenuEntry::new(bounds[i], bounds[i + 1], o.schedule()?))
        .collect::<Result<Vec<_>>>()?;
    FiniteMenuSwac::new(horizon, entries)
}

/// `sum mass(v) * designer_reward(v)` over the grid.
pub fn discrete_reward(
    m: &FiniteMenuSwac,
    g: &RewardFn,
    c: &CostFn,
    grid: &DiscreteGrid,
) -> Result<f64> {
    grid.iter()
        .map(|(v, mass)| Ok(mass * m.designer_reward(g, c, v)?))
        .sum()
}

struct Search<'a> {
    points: &'a [f64],
    masses: &'a [f64],
    /// Per type: options the type can accept, best reward first.
    order: Vec<Vec<usize>>,
    util: Vec<Vec<f64>>,
    feasible: Vec<Vec<bool>>,
    reward: Vec<Vec<f64>>,
}

impl Search<'_> {
    fn compatible(&self, t: usize, o: usize, assigned: &[usize]) -> bool {
        assigned.iter().enumerate().all(|(s, &a)| {
            !(self.feasible[s][o] && self.util[s][o] > self.util[s][a] + UTIL_TOL)
                && !(self.feasible[t][a] && self.util[t][a] > self.util[t][o] + UTIL_TOL)
        })
    }

    /// Admissible bound on the remaining types' reward.
    fn bound(&self, assigned: &[usize]) -> f64 {
        (assigned.len()..self.points.len())
            .map(|r| {
                let floor = assigned
                    .iter()
                    .filter(|&&a| self.feasible[r][a])
                    .map(|&a| self.util[r][a])
                    .fold(0.0, f64::max);
                self.order[r]
                    .iter()
                    .find(|&&o| {
                        self.util[r][o] >= floor - UTIL_TOL
                            && assigned.iter().enumerate().all(|(s, &a)| {
                                !(self.feasible[s][o]
                                    && self.util[s][o] > self.util[s][a] + UTIL_TOL)
                            })
                    })
                    .map_or(f64::NEG_INFINITY, |&o| self.masses[r] * self.reward[r][o])
            })
            .sum()
    }

    fn dfs(
        &self,
        assigned: &mut Vec<usize>,
        value: f64,
        best: &mut (f64, Vec<usize>),
        nodes: &mut u64,
    ) {
        *nodes += 1;
        let t = assigned.len();
        if t == self.points.len() {
            if value > best.0 + 1e-12 {
                *best = (value, assigned.clone());
            }
            return;
        }
        if value + self.bound(assigned) <= best.0 + 1e-12 {
            return;
        }
        for &o in &self.order[t] {
            if !self.compatible(t, o, assigned) {
                continue;
            }
            assigned.push(o);
            self.dfs(
                assigned,
                value + self.masses[t] * self.reward[t][o],
                best,
                nodes,
            );
            assigned.pop();
        }
    }
}

/// Searches all per-type assignments in which every type weakly prefers its
/// own option to any other assigned option it can accept (and to walking
/// away). Any menu induces such an assignment through its best responses,
/// so this covers every menu over the option set. The winner is re-evaluated
/// with the best-response engine.
pub fn brute_force_menu(s: &DiscreteSetting) -> Result<OracleResult> {
    let options = s.options();
    let obj = s.objective();
    let points = s.grid.points();
    let k = points.len();
    let mut util = vec![vec![0.0; options.len()]; k];
    let mut feasible = vec![vec![false; options.len()]; k];
    let mut reward = vec![vec![0.0; options.len()]; k];
    let mut order = Vec::with_capacity(k);
    for (t, &v) in points.iter().enumerate() {
        for (i, o) in options.iter().enumerate() {
            util[t][i] = o.alloc as f64 * v - o.total;
            feasible[t][i] = o.alloc == 0 || o.filter <= v + FILTER_TOL;
            reward[t][i] = obj.outcome_reward(v, o.alloc, o.total)?;
        }
        let mut idx: Vec<usize> = (0..options.len()).filter(|&i| feasible[t][i]).collect();
        idx.sort_by(|&a, &b| reward[t][b].total_cmp(&reward[t][a]).then(a.cmp(&b)));
        order.push(idx);
    }
    let search = Search {
        points,
        masses: s.grid.masses(),
        order,
        util,
        feasible,
        reward,
    };
    // Split on the first type's option; each branch searches independently
    // and the reduction keeps the earliest branch among equal optima.
    let branches: Vec<(f64, Vec<usize>, u64)> = search.order[0]
        .par_iter()
        .map(|&o| {
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let mut nodes = 0;
            let mut assigned = vec![o];
            search.dfs(
                &mut assigned,
                search.masses[0] * search.reward[0][o],
                &mut best,
                &mut nodes,
            );
            (best.0, best.1, nodes)
        })
        .collect();
    let nodes = branches.iter().map(|b| b.2).sum();
    let (declared, winner, _) = branches
        .into_iter()
        .filter(|b| !b.1.is_empty())
        .fold(None::<(f64, Vec<usize>, u64)>, |acc, b| match acc {
            Some(a) if a.0 >= b.0 - 1e-12 => Some(a),
            _ => Some(b),
        })
        .ok_or_else(|| Error::Invariant("no admissible assignment".into()))?;
    let assignment: Vec<OracleOption> = winner.iter().map(|&i| options[i]).collect();
    let menu = menu_from_assignment(points, s.horizon, &assignment)?;
    let reward = discrete_reward(&menu, &s.reward, &s.cost, &s.grid)?;
    if reward < declared - 1e-9 {
        return Err(Error::Invariant(format!(
            "engine reward {reward} below search value {declared}"
        )));
    }
    Ok(OracleResult {
        assignment,
        reward,
        nodes,
    })
}

/// Pointwise smallest maximiser of `phibar(v) x - c(x)` over `x = 0..=n`.
pub fn dp_virtual_welfare(phi: &IronedFn, c: &CostFn, points: &[f64]) -> Vec<usize> {
    points
        .iter()
        .map(|&v| {
            let q = phi.value(v);
            let mut best = (0, 0.0 - c.values()[0]);
            for x in 1..=c.horizon() {
                let val = q * x as f64 - c.values()[x];
                if val > best.1 + 1e-12 {
                    best = (x, val);
                }
            }
            best.0
        })
        .collect()
}
