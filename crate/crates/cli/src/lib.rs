//! Command-line front end: experiment configs, CSV tables and subcommands.

pub mod app;
pub mod config;
pub mod tables;

pub use app::{run, Cli, PlanBundle};
pub use config::{ExperimentConfig, MechanismChoice};

/// 1 for bad input of any kind, 2 when an internal invariant broke.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e
        .chain()
        .find_map(|c| c.downcast_ref::<rental_core::Error>())
    {
        Some(err) if !err.is_validation() => 2,
        _ => 1,
    }
}
