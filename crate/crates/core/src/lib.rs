//! Optimal rental mechanisms for agents with stagewise individual rationality.

// `!(a > b)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod fixed_rate;
pub mod ironing;
pub mod oracle;
pub mod reward;
pub mod sim;
pub mod swac;
pub mod threshold;

pub use dist::{DiscreteGrid, Distribution, HorizonPriors};
pub use error::{Error, Result};
pub use fixed_rate::{
    as_menu, over_time_cost, precompute_fixed_rate, run_fixed_rate_auction, CostFn,
    FixedRateOptions, FixedRatePlans, HorizonPlan, PlanInterval, RewardTable,
};
pub use ironing::{iron, iron_affine, IronedFn, IroningMode};
pub use oracle::{
    brute_force_menu, discrete_reward, dp_virtual_welfare, DiscreteSetting, OracleResult,
};
pub use reward::{RewardClass, RewardFn};
pub use sim::{replay, simulate, RentalMechanism, RunLog, SimSummary};
pub use swac::{
    audit_monotone, audit_monotone_at, audit_props, audit_truthful, example_menu, support_grid,
    BestResponse, FiniteMenuSwac, MenuEntry, Objective, PaymentSchedule,
};
pub use threshold::{
    audit_threshold_structure, precompute_threshold, run_threshold_auction, threshold_menu,
    uniform_recurrence, ThresholdPlan, UniformRecurrence,
};
