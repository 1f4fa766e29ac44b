//! CSV rows emitted by the subcommands. Floats are written in shortest
//! round-trip form, so re-reading a table reproduces it exactly.

use std::io::{Read, Write};

use rental_core::sim::RunLog;
use rental_core::{FixedRatePlans, ThresholdPlan};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// One allocation interval of a fixed-rate plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub horizon: usize,
    /// Ironed virtual value range `(left, right]`; `right` empty when unbounded.
    pub left: f64,
    pub right: Option<f64>,
    pub alloc: usize,
    /// Empty for intervals no valuation maps into.
    pub pay: Option<f64>,
    pub v_left: f64,
    pub v_right: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub horizon: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub horizon: usize,
    /// Empty at horizon 1, which always sells one free day.
    pub tau: Option<f64>,
    pub reward: f64,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub r_threshold: f64,
    pub r_fixed_rate: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IronRow {
    pub v: f64,
    pub theta: f64,
    pub theta_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRow {
    pub episode: usize,
    pub day: usize,
    pub horizon: usize,
    pub valuation: f64,
    pub available: bool,
    pub tenancy: Option<usize>,
    pub payment: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub horizon: usize,
    pub entries: usize,
    pub truthful: bool,
    pub truth_violations: usize,
    pub allocation_monotone: bool,
    pub reward_monotone: bool,
    pub props_passed: bool,
}

pub fn interval_rows(p: &FixedRatePlans) -> Vec<IntervalRow> {
    p.plans()
        .iter()
        .flat_map(|plan| {
            plan.intervals().iter().map(move |j| IntervalRow {
                horizon: plan.horizon(),
                left: j.left,
                right: j.right.is_finite().then_some(j.right),
                alloc: j.alloc,
                pay: j.pay,
                v_left: j.v_left,
                v_right: j.v_right,
                prob: j.prob,
            })
        })
        .collect()
}

pub fn reward_rows(values: &[f64]) -> Vec<RewardRow> {
    values
        .iter()
        .enumerate()
        .map(|(horizon, &reward)| RewardRow { horizon, reward })
        .collect()
}

pub fn threshold_rows(p: &ThresholdPlan) -> Vec<ThresholdRow> {
    (1..=p.horizon())
        .map(|h| {
            let reward = p.rewards().get(h);
            ThresholdRow {
                horizon: h,
                tau: p.tau(h),
                reward,
                average: reward / h as f64,
            }
        })
        .collect()
}

pub fn day_rows(logs: &[RunLog]) -> Vec<DayRow> {
    logs.iter()
        .enumerate()
        .flat_map(|(episode, log)| {
            log.days.iter().map(move |d| DayRow {
                episode,
                day: d.day,
                horizon: d.horizon,
                valuation: d.valuation,
                available: d.available,
                tenancy: d.tenancy,
                payment: d.payment,
                reward: d.reward,
            })
        })
        .collect()
}

pub fn write_csv<T: Serialize>(w: impl Write, rows: &[T]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(r: impl Read) -> csv::Result<Vec<T>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub fn to_csv_string<T: Serialize>(rows: &[T]) -> csv::Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
