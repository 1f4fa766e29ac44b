//! Subcommand definitions and their implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rental_core::fixed_rate::fixed_rate_ironed;
use rental_core::oracle::{menu_from_assignment, MAX_LEVELS};
use rental_core::reward::{fr_virtual_value, horizon_virtual_value};
use rental_core::{
    audit_monotone, audit_monotone_at, audit_props, audit_truthful, brute_force_menu,
    discrete_reward, example_menu, precompute_fixed_rate, precompute_threshold, replay, simulate,
    support_grid, uniform_recurrence, CostFn, DiscreteSetting, Distribution, Error,
    FixedRateOptions, HorizonPriors, IroningMode, RentalMechanism, RewardFn,
};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, ExperimentConfig, MechanismChoice};
use crate::tables::{self, AuditRow, GapRow, IronRow};

#[derive(Debug, Parser)]
#[command(
    name = "rental",
    version,
    about = "Optimal rental mechanisms for stagewise-IR agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed-rate plans for every horizon; writes a plan bundle plus interval and reward CSVs.
    ComputeFixedRate(ComputeArgs),
    /// One-or-all threshold plans (negative tradeoff, i.i.d. agents).
    ComputeThreshold(ComputeThresholdArgs),
    /// Monte-Carlo run of a plan bundle.
    Simulate(SimulateArgs),
    /// Truthfulness, monotonicity and structural audits per horizon.
    Audit(AuditArgs),
    /// Brute-force optimum on a discretised prior against the algorithm's menu.
    OracleCompare(OracleArgs),
    /// Threshold vs fixed-rate reward on Uniform[0,1] consumer surplus.
    GapTable(GapArgs),
    /// Raw and ironed virtual values on a valuation grid.
    IronDump(IronArgs),
    /// Audits the built-in six-day menu that is truthful but not monotone.
    #[command(name = "example-1-1")]
    Example11(ExampleArgs),
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComputeThresholdArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Plan bundle; when omitted only the threshold table is printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub mech: PathBuf,
    /// Defaults to the value stored in the bundle.
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-day CSV of the first `--logs` episodes.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub logs: usize,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
pub struct Source {
    #[arg(long, group = "source")]
    pub config: Option<PathBuf>,
    #[arg(long, group = "source")]
    pub mech: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[arg(long)]
    pub n_max: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IronArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to the config horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
}

/// Everything `simulate` and `audit` need, as written by the compute commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanBundle {
    pub family: String,
    pub reward: RewardFn,
    /// Ordered `D_n, ..., D_1`.
    pub distributions: HorizonPriors,
    pub seed: u64,
    pub episodes: u64,
    pub mechanism: RentalMechanism,
}

impl PlanBundle {
    fn new(cfg: &ExperimentConfig, family: &str, mechanism: RentalMechanism) -> Self {
        PlanBundle {
            family: family.into(),
            reward: cfg.reward.clone(),
            distributions: cfg.priors(),
            seed: cfg.seed,
            episodes: cfg.episodes,
            mechanism,
        }
    }
}

fn invariant(msg: impl Into<String>) -> anyhow::Error {
    Error::Invariant(msg.into()).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    tables::write_csv(&mut w, rows).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

/// Table to `path` if given, else to stdout.
fn emit_table<T: Serialize>(out: &mut dyn Write, path: Option<&Path>, rows: &[T]) -> Result<()> {
    match path {
        Some(p) => {
            write_table(p, rows)?;
            writeln!(out, "wrote {} rows to {}", rows.len(), p.display())?;
        }
        None => tables::write_csv(&mut *out, rows)?,
    }
    Ok(())
}

fn table_dir(cfg: &ExperimentConfig, out: &Path) -> PathBuf {
    cfg.outputs.dir.clone().unwrap_or_else(|| {
        out.parent()
            .filter(|d| !d.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    })
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::ComputeFixedRate(a) => compute_fixed_rate(a, out),
        Command::ComputeThreshold(a) => compute_threshold(a, out),
        Command::Simulate(a) => run_simulation(a, out),
        Command::Audit(a) => audit(a, out),
        Command::OracleCompare(a) => oracle_compare(a, out),
        Command::GapTable(a) => gap_table(a, out),
        Command::IronDump(a) => iron_dump(a, out),
        Command::Example11(a) => example(a, out),
    }
}

fn compute_fixed_rate(a: ComputeArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let plans = precompute_fixed_rate(&cfg.priors(), &cfg.reward, cfg.fixed_rate_options())?;
    let bundle = PlanBundle::new(
        &cfg,
        "fixed_rate",
        RentalMechanism::from_fixed_rate(&plans)?,
    );
    write_json(&a.out, &bundle)?;
    let dir = table_dir(&cfg, &a.out);
    write_table(&dir.join("intervals.csv"), &tables::interval_rows(&plans))?;
    write_table(
        &dir.join("rewards.csv"),
        &tables::reward_rows(plans.rewards().values()),
    )?;
    writeln!(
        out,
        "fixed-rate plans for n = {}: R[n] = {}",
        cfg.horizon,
        plans.rewards().get(cfg.horizon)
    )?;
    writeln!(
        out,
        "wrote {}, {}, {}",
        a.out.display(),
        dir.join("intervals.csv").display(),
        dir.join("rewards.csv").display()
    )?;
    Ok(())
}

fn compute_threshold(a: ComputeThresholdArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let plan = precompute_threshold(&cfg.priors(), &cfg.reward, cfg.ironing)?;
    let rows = tables::threshold_rows(&plan);
    match &a.out {
        Some(path) => {
            let bundle =
                PlanBundle::new(&cfg, "threshold", RentalMechanism::from_threshold(&plan)?);
            write_json(path, &bundle)?;
            let csv = table_dir(&cfg, path).join("thresholds.csv");
            write_table(&csv, &rows)?;
            writeln!(
                out,
                "threshold plans for n = {}: R[n] = {}",
                cfg.horizon,
                plan.rewards().get(cfg.horizon)
            )?;
            writeln!(out, "wrote {}, {}", path.display(), csv.display())?;
        }
        None => tables::write_csv(&mut *out, &rows)?,
    }
    Ok(())
}

fn run_simulation(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let b: PlanBundle = read_json(&a.mech)?;
    let episodes = a.episodes.unwrap_or(b.episodes);
    let seed = a.seed.unwrap_or(b.seed);
    let keep = if a.out.is_some() {
        a.logs
    } else {
        a.logs.min(1)
    };
    let s = simulate(
        &b.mechanism,
        &b.distributions,
        &b.reward,
        seed,
        episodes,
        keep,
    )?;
    for (e, log) in s.logs.iter().enumerate() {
        let r = replay(log);
        if !r.consistent() {
            return Err(invariant(format!("episode {e} fails replay: {r:?}")));
        }
    }
    writeln!(out, "episodes {} seed {seed}", s.episodes)?;
    writeln!(out, "mean {} stderr {}", s.mean, s.stderr)?;
    if let Some(r) = b.mechanism.rewards() {
        let target = r.get(b.mechanism.horizon());
        let z = if s.stderr > 0.0 {
            (s.mean - target) / s.stderr
        } else {
            0.0
        };
        writeln!(out, "analytic {target} z {z:.3}")?;
    }
    if let Some(path) = &a.out {
        let rows = tables::day_rows(&s.logs);
        write_table(path, &rows)?;
        writeln!(
            out,
            "wrote {} day records to {}",
            rows.len(),
            path.display()
        )?;
    }
    Ok(())
}

fn mechanism_from_config(cfg: &ExperimentConfig) -> Result<RentalMechanism> {
    Ok(match &cfg.mechanism {
        MechanismChoice::FixedRate => {
            let plans =
                precompute_fixed_rate(&cfg.priors(), &cfg.reward, cfg.fixed_rate_options())?;
            RentalMechanism::from_fixed_rate(&plans)?
        }
        MechanismChoice::Threshold => RentalMechanism::from_threshold(&precompute_threshold(
            &cfg.priors(),
            &cfg.reward,
            cfg.ironing,
        )?)?,
        MechanismChoice::CustomMenu { .. } => cfg.custom_mechanism()?.expect("custom menu"),
    })
}

fn audit(a: AuditArgs, out: &mut dyn Write) -> Result<()> {
    let (family, m, g, grid) = match (&a.source.config, &a.source.mech) {
        (Some(path), _) => {
            let cfg = ExperimentConfig::load(path)?;
            let m = mechanism_from_config(&cfg)?;
            (
                cfg.mechanism.name().to_string(),
                m,
                cfg.reward,
                cfg.audit_grid,
            )
        }
        (None, Some(path)) => {
            let b: PlanBundle = read_json(path)?;
            (b.family, b.mechanism, b.reward, 1000)
        }
        (None, None) => bail!("need --config or --mech"),
    };
    let grid = a.grid.unwrap_or(grid);
    let mut rows = Vec::new();
    for h in (1..=m.horizon()).rev() {
        let menu = m.swac(h);
        let c = m.cost(h);
        let t = audit_truthful(menu, grid)?;
        let mono = audit_monotone(menu, &g, &c, grid)?;
        let props = audit_props(menu, &g, &c, grid.min(300))?;
        rows.push(AuditRow {
            horizon: h,
            entries: menu.entries().len(),
            truthful: t.truthful(),
            truth_violations: t.violations.len(),
            allocation_monotone: mono.allocation_monotone(),
            reward_monotone: mono.reward_monotone(),
            props_passed: props.passed(),
        });
    }
    emit_table(out, a.out.as_deref(), &rows)?;
    // menus built by the algorithms must pass; custom menus are only reported
    if family != "custom_menu" {
        if let Some(r) = rows
            .iter()
            .find(|r| !(r.truthful && r.allocation_monotone && r.props_passed))
        {
            return Err(invariant(format!(
                "{family} menu at horizon {} fails its audit: {r:?}",
                r.horizon
            )));
        }
    }
    Ok(())
}

/// Payment levels: zero plus every grid point, dropping the lowest points
/// when that exceeds the oracle's level budget.
fn oracle_levels(points: &[f64]) -> Vec<f64> {
    let mut levels = vec![0.0];
    let skip = (points.len() + 1).saturating_sub(MAX_LEVELS);
    levels.extend(points.iter().skip(skip).filter(|&&p| p > 0.0));
    levels
}

fn oracle_compare(a: OracleArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let n = cfg.horizon;
    let m = mechanism_from_config(&cfg)?;
    let d = cfg.priors().get(n).clone();
    let grid = d.discretize(a.k)?;
    let c = m.cost(n);
    let alg = discrete_reward(m.swac(n), &cfg.reward, &c, &grid)?;
    let levels = oracle_levels(grid.points());
    let setting = DiscreteSetting::new(grid, n, levels, cfg.reward.clone(), c)?;
    let best = brute_force_menu(&setting)?;
    let bound = 2.0 * n as f64 / a.k as f64;
    let gap = best.reward - alg;
    writeln!(out, "k {} n {n} mechanism {}", a.k, cfg.mechanism.name())?;
    writeln!(out, "oracle {}", best.reward)?;
    writeln!(out, "algorithm {alg}")?;
    writeln!(
        out,
        "gap {gap} bound {bound} within_bound {}",
        yes_no(gap.abs() <= bound)
    )?;
    writeln!(out, "nodes {}", best.nodes)?;
    let witness = menu_from_assignment(setting.grid.points(), n, &best.assignment)?;
    writeln!(out, "witness {}", serde_json::to_string(&witness)?)?;
    Ok(())
}

fn gap_table(a: GapArgs, out: &mut dyn Write) -> Result<()> {
    if a.n_max == 0 {
        return Err(Error::Config {
            path: "--n-max".into(),
            msg: "must be at least 1".into(),
        }
        .into());
    }
    let rec = uniform_recurrence(a.n_max);
    let d = Distribution::uniform(0.0, 1.0)?;
    let fixed = precompute_fixed_rate(
        &HorizonPriors::iid(d, a.n_max),
        &RewardFn::consumer_surplus(),
        FixedRateOptions {
            ironing: IroningMode::Analytic,
            ..Default::default()
        },
    )?;
    let rows: Vec<GapRow> = (1..=a.n_max)
        .map(|n| {
            let (rt, rf) = (rec.reward(n), fixed.rewards().get(n));
            GapRow {
                n,
                r_threshold: rt,
                r_fixed_rate: rf,
                ratio: rt / rf,
            }
        })
        .collect();
    emit_table(out, a.out.as_deref(), &rows)
}

fn iron_dump(a: IronArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let h = a.horizon.unwrap_or(cfg.horizon);
    if h == 0 || h > cfg.horizon {
        return Err(Error::Config {
            path: "--horizon".into(),
            msg: format!("must be in 1..={}", cfg.horizon),
        }
        .into());
    }
    let g = &cfg.reward;
    let d = cfg.priors().get(h).clone();
    let pts = support_grid(d.lo(), d.hi(), a.points.max(2));
    let rows = if cfg.mechanism == MechanismChoice::Threshold {
        if h < 2 {
            return Err(Error::HorizonTooSmall { n: h, min: 2 }.into());
        }
        let plan = precompute_threshold(&HorizonPriors::iid(d.clone(), h), g, cfg.ironing)?;
        let phi = plan.ironed(h).expect("h >= 2");
        pts.iter()
            .map(|&v| {
                Ok(IronRow {
                    v,
                    theta: horizon_virtual_value(g, &d, h, v)?,
                    theta_bar: phi.eval(v)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let phi = fixed_rate_ironed(g, &d, cfg.ironing)?;
        pts.iter()
            .map(|&v| {
                Ok(IronRow {
                    v,
                    theta: fr_virtual_value(g, &d, v)?,
                    theta_bar: phi.eval(v)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    emit_table(out, a.out.as_deref(), &rows)
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn example(a: ExampleArgs, out: &mut dyn Write) -> Result<()> {
    let m = example_menu();
    let g = RewardFn::revenue();
    let c = CostFn::zero(m.horizon());
    let t = audit_truthful(&m, a.grid)?;
    let full = audit_monotone(&m, &g, &c, a.grid)?;
    let pair = audit_monotone_at(&m, &g, &c, &[3.0, 4.0])?;
    writeln!(out, "menu {}", serde_json::to_string(&m)?)?;
    writeln!(
        out,
        "truthful={} ({} violations on a {}-point grid)",
        yes_no(t.truthful()),
        t.violations.len(),
        a.grid
    )?;
    writeln!(
        out,
        "allocation-monotone={}",
        yes_no(full.allocation_monotone())
    )?;
    if let Some((w, v)) = pair.allocation_witness {
        writeln!(
            out,
            "  witness v={} rents {} days, v={} rents {} days",
            w.v, w.alloc, v.v, v.alloc
        )?;
    }
    writeln!(out, "reward-monotone={}", yes_no(full.reward_monotone()))?;
    if let Some((w, v)) = pair.reward_witness {
        writeln!(
            out,
            "  rewards {} at v={}, {} at v={}",
            w.reward, w.v, v.reward, v.v
        )?;
    }
    let d = Distribution::uniform(0.0, 8.0)?;
    writeln!(
        out,
        "expected reward on Uniform[0,8]: {}",
        m.expected_reward(&g, &c, &d)?
    )?;
    if !t.truthful() || full.allocation_monotone() || full.reward_monotone() {
        return Err(invariant(
            "example menu audit no longer matches its known profile",
        ));
    }
    Ok(())
}
