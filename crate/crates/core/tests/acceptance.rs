//! Acceptance suite: one pass/fail line per criterion, non-zero exit on failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rental_core::{
    as_menu, audit_monotone, audit_monotone_at, audit_props, audit_threshold_structure,
    audit_truthful, brute_force_menu, discrete_reward, example_menu, iron, precompute_fixed_rate,
    precompute_threshold, simulate, support_grid, threshold_menu, uniform_recurrence, CostFn,
    DiscreteSetting, Distribution, FiniteMenuSwac, FixedRateOptions, HorizonPriors, IroningMode,
    MenuEntry, PaymentSchedule, RentalMechanism, RewardFn,
};

/// First horizon at which the recurrence's gap ratio exceeds 1.9, recorded
/// from the first run; `ell` first reaches 0.99 at 10098.
const GAP_HORIZON: usize = 418;

type Outcome = Result<String, String>;

/// Name, check and time budget.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn u01() -> Distribution {
    Distribution::uniform(0.0, 1.0).unwrap()
}

fn err(e: rental_core::Error) -> String {
    e.to_string()
}

fn example_1_1() -> Outcome {
    let m = example_menu();
    let g = RewardFn::revenue();
    let c = CostFn::zero(6);
    let t = audit_truthful(&m, 1000).map_err(err)?;
    check(
        t.truthful() && t.violations.is_empty(),
        format!("{} truthfulness violations", t.violations.len()),
    )?;
    let r = audit_monotone_at(&m, &g, &c, &[3.0, 4.0]).map_err(err)?;
    let (w, v) = r.allocation_witness.ok_or("no allocation witness")?;
    check(
        (w.v, v.v, w.alloc, v.alloc) == (3.0, 4.0, 6, 5),
        format!("allocation witness {w:?} {v:?}"),
    )?;
    let (w, v) = r.reward_witness.ok_or("no reward witness")?;
    check(
        (w.reward, v.reward) == (12.0, 4.0),
        format!("rewards ({}, {})", w.reward, v.reward),
    )?;
    let full = audit_monotone(&m, &g, &c, 1000).map_err(err)?;
    check(
        !full.allocation_monotone() && !full.reward_monotone(),
        "full grid audit looks monotone",
    )?;
    Ok("truthful=yes (0 violations), allocation-monotone=no at (3,4), rewards (12, 4)".into())
}

fn threshold_values() -> Outcome {
    let expected_r = [0.5, 1.0, 1.5, 2.125];
    let expected_tau = [(2, 1.0), (3, 1.0), (4, 0.5)];
    for (mode, tol) in [
        (IroningMode::Grid(10_000), 1e-6),
        (IroningMode::Analytic, 1e-12),
    ] {
        let p = precompute_threshold(
            &HorizonPriors::iid(u01(), 4),
            &RewardFn::consumer_surplus(),
            mode,
        )
        .map_err(err)?;
        for (i, want) in expected_r.iter().enumerate() {
            let got = p.rewards().get(i + 1);
            check(
                (got - want).abs() <= tol,
                format!("{mode:?}: R[{}] = {got}", i + 1),
            )?;
        }
        for (h, want) in expected_tau {
            let got = p.tau(h).ok_or(format!("no tau at {h}"))?;
            check(
                (got - want).abs() <= tol,
                format!("{mode:?}: tau[{h}] = {got}"),
            )?;
        }
    }
    Ok("R = 0.5, 1, 1.5, 2.125 and tau = 1, 1, 0.5 (grid 1e-6, analytic 1e-12)".into())
}

fn fixed_rate_baseline() -> Outcome {
    let n = 50;
    for mode in [IroningMode::Grid(10_000), IroningMode::Analytic] {
        let opts = FixedRateOptions {
            ironing: mode,
            ..Default::default()
        };
        let p = precompute_fixed_rate(
            &HorizonPriors::iid(u01(), n),
            &RewardFn::consumer_surplus(),
            opts,
        )
        .map_err(err)?;
        for h in 1..=n {
            let menu = as_menu(p.plan(h)).map_err(err)?;
            let one_free = menu
                .entries()
                .iter()
                .all(|e| e.alloc() == 1 && e.total() == 0.0);
            check(
                one_free && menu.entries().len() == 1,
                format!("{mode:?}: horizon {h} menu {menu:?}"),
            )?;
            let r = p.rewards().get(h);
            check(
                (r - 0.5 * h as f64).abs() <= 1e-9,
                format!("{mode:?}: R[{h}] = {r}"),
            )?;
        }
    }
    Ok(format!(
        "one free unit at every horizon, R[h] = 0.5h for h <= {n}"
    ))
}

fn gap_convergence() -> Outcome {
    let n = 100_000;
    let r = uniform_recurrence(n);
    for i in 2..=n {
        check(r.ells[i] >= r.ells[i - 1], format!("ell drops at {i}"))?;
        check(r.ells[i] <= 1.0, format!("ell[{i}] = {} > 1", r.ells[i]))?;
    }
    // ell_1 = ell_2 = ell_3, so the ratio column can only rise from n = 4 on
    for i in 4..=n {
        check(
            r.ratio(i) > r.ratio(i - 1),
            format!("ratio not increasing at {i}"),
        )?;
    }
    let ratio = r.ratio(GAP_HORIZON);
    check(ratio > 1.9, format!("ratio at {GAP_HORIZON} is {ratio}"))?;
    check(
        r.ratio(GAP_HORIZON - 1) <= 1.9,
        "recorded horizon is not the first crossing",
    )?;
    Ok(format!(
        "ratio {ratio:.6} at n = {GAP_HORIZON}, ell reaches 0.99 at n = {}, ratio {:.6} at n = {n}",
        r.first_reaching(0.99).unwrap_or(0),
        r.ratio(n)
    ))
}

fn monte_carlo() -> Outcome {
    let episodes = 1_000_000;
    let g = RewardFn::consumer_surplus();
    let mut lines = Vec::new();

    let ds = HorizonPriors::iid(u01(), 4);
    let tp = precompute_threshold(&ds, &g, IroningMode::Analytic).map_err(err)?;
    let m = RentalMechanism::from_threshold(&tp).map_err(err)?;
    let s = simulate(&m, &ds, &g, 7, episodes, 0).map_err(err)?;
    let target = tp.rewards().get(4);
    check(
        (s.mean - target).abs() <= 3.0 * s.stderr,
        format!("threshold: {} vs {target} (se {})", s.mean, s.stderr),
    )?;
    lines.push(format!(
        "threshold {:.5} +- {:.5} vs {target}",
        s.mean, s.stderr
    ));

    let ds = HorizonPriors::iid(u01(), 10);
    let opts = FixedRateOptions {
        ironing: IroningMode::Analytic,
        ..Default::default()
    };
    let fp = precompute_fixed_rate(&ds, &g, opts).map_err(err)?;
    let m = RentalMechanism::from_fixed_rate(&fp).map_err(err)?;
    let s = simulate(&m, &ds, &g, 8, episodes, 0).map_err(err)?;
    let target = fp.rewards().get(10);
    check(
        (s.mean - target).abs() <= 3.0 * s.stderr,
        format!("fixed-rate: {} vs {target} (se {})", s.mean, s.stderr),
    )?;
    lines.push(format!(
        "fixed-rate {:.5} +- {:.5} vs {target}",
        s.mean, s.stderr
    ));
    Ok(lines.join(", "))
}

fn oracle_equivalence() -> Outcome {
    let k = 8;
    let g = RewardFn::consumer_surplus();
    let mut gaps = Vec::new();
    for n in 1..=3 {
        let plan = precompute_threshold(&HorizonPriors::iid(u01(), n), &g, IroningMode::Analytic)
            .map_err(err)?;
        let grid = u01().discretize(k).map_err(err)?;
        let mut levels = vec![0.0];
        levels.extend(grid.points());
        let c = plan.cost(n);
        let alg =
            discrete_reward(&threshold_menu(&plan, n).map_err(err)?, &g, &c, &grid).map_err(err)?;
        let s = DiscreteSetting::new(grid, n, levels, g.clone(), c).map_err(err)?;
        let best = brute_force_menu(&s).map_err(err)?.reward;
        let bound = 2.0 * n as f64 / k as f64;
        check(
            best >= alg - bound,
            format!("n={n}: oracle {best} below mechanism {alg}"),
        )?;
        check(
            best - alg <= bound,
            format!("n={n}: oracle {best} vs mechanism {alg}, bound {bound}"),
        )?;
        gaps.push(format!("n={n} gap {:.4}", best - alg));
    }
    Ok(format!("k = {k}: {}", gaps.join(", ")))
}

fn random_prior(rng: &mut ChaCha8Rng) -> Distribution {
    let lo = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..2.0)
    };
    if rng.random_bool(0.5) {
        return Distribution::uniform(lo, lo + rng.random_range(0.5..4.0)).unwrap();
    }
    let mut pts = vec![[lo, 0.0]];
    let (mut v, mut f) = (lo, 0.0);
    for _ in 0..rng.random_range(2..6) {
        v += rng.random_range(0.2..1.5);
        f += rng.random_range(0.05..1.0);
        pts.push([v, f]);
    }
    for p in pts.iter_mut() {
        p[1] /= f;
    }
    Distribution::grid(&pts).unwrap()
}

fn random_negative_tradeoff(rng: &mut ChaCha8Rng) -> RewardFn {
    let a = rng.random_range(0.5..2.0);
    RewardFn::negative_tradeoff(a, rng.random_range(0.1..=a)).unwrap()
}

fn random_reward(rng: &mut ChaCha8Rng) -> RewardFn {
    match rng.random_range(0..4) {
        0 => RewardFn::revenue(),
        1 => RewardFn::linear(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)).unwrap(),
        2 => RewardFn::welfare_identity(),
        _ => random_negative_tradeoff(rng),
    }
}

fn random_menu(rng: &mut ChaCha8Rng) -> FiniteMenuSwac {
    let h = rng.random_range(1..=5);
    let k = rng.random_range(1..=4);
    let mut cuts: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let entries = cuts
        .iter()
        .enumerate()
        .map(|(j, &left)| {
            let right = cuts.get(j + 1).copied().unwrap_or(10.0);
            let alloc = rng.random_range(1..=h);
            let per_day: Vec<f64> = (0..alloc).map(|_| rng.random_range(0.0..3.0)).collect();
            MenuEntry::new(left, right, PaymentSchedule::new(per_day).unwrap()).unwrap()
        })
        .collect();
    FiniteMenuSwac::new(h, entries).unwrap()
}

const CASES: usize = 100;

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // fixed-rate outputs: audits and Myerson payments
    let mut menus = 0;
    for case in 0..CASES {
        let g = random_reward(&mut rng);
        let d = random_prior(&mut rng);
        let n = rng.random_range(1..=6);
        let opts = FixedRateOptions {
            ironing: IroningMode::Grid(2_000),
            ..Default::default()
        };
        let p = precompute_fixed_rate(&HorizonPriors::iid(d, n), &g, opts).map_err(err)?;
        for h in 1..=n {
            let plan = p.plan(h);
            let mut prev = (0usize, 0.0);
            for j in plan.intervals().iter().filter(|j| j.pay.is_some()) {
                let pay = j.pay.unwrap();
                let want = prev.1 + (j.alloc - prev.0) as f64 * j.v_left;
                check(
                    (pay - want).abs() <= 1e-9,
                    format!("fixed-rate case {case} h={h}: payment {pay} vs {want}"),
                )?;
                prev = (j.alloc, pay);
            }
            let menu = as_menu(plan).map_err(err)?;
            let c = p.cost(h);
            check(
                audit_truthful(&menu, 300).map_err(err)?.truthful(),
                format!("fixed-rate case {case} h={h}: untruthful"),
            )?;
            check(
                audit_monotone(&menu, &g, &c, 300)
                    .map_err(err)?
                    .allocation_monotone(),
                format!("fixed-rate case {case} h={h}: allocation not monotone"),
            )?;
            check(
                audit_props(&menu, &g, &c, 200).map_err(err)?.passed(),
                format!("fixed-rate case {case} h={h}: props"),
            )?;
            menus += 1;
        }
    }

    // threshold plans: one-or-all, everyone served, average reward non-decreasing,
    // and the emitted menus pass the structural audits
    for case in 0..CASES {
        let d = random_prior(&mut rng);
        let g = random_negative_tradeoff(&mut rng);
        let n = rng.random_range(2..=7);
        let p = precompute_threshold(&HorizonPriors::iid(d, n), &g, IroningMode::Grid(2_000))
            .map_err(err)?;
        let a = audit_threshold_structure(&p, 200).map_err(err)?;
        check(a.passed(), format!("threshold case {case}: {a:?}"))?;
        for h in 1..=n {
            let menu = threshold_menu(&p, h).map_err(err)?;
            check(
                audit_props(&menu, &g, &p.cost(h), 200)
                    .map_err(err)?
                    .passed(),
                format!("threshold case {case} h={h}: props"),
            )?;
            menus += 1;
        }
    }

    // ironing: monotone, a convex minorant, mean preserving, flat where ironed
    for case in 0..CASES {
        let d = random_prior(&mut rng);
        let vals: Vec<f64> = (0..rng.random_range(2..12))
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let (lo, hi) = (d.lo(), d.hi());
        let theta = |v: f64| {
            let k = (((v - lo) / (hi - lo) * vals.len() as f64) as usize).min(vals.len() - 1);
            Ok(vals[k])
        };
        let f = iron(theta, &d, 512).map_err(err)?;
        let (psi, cum, hull) = (
            f.cell_values().unwrap(),
            f.cumulative().unwrap(),
            f.hull().unwrap(),
        );
        check(
            psi.windows(2).all(|w| w[1] >= w[0] - 1e-12),
            format!("ironing case {case}: not monotone"),
        )?;
        check(
            hull.iter().zip(cum).all(|(h, c)| *h <= c + 1e-12),
            format!("ironing case {case}: hull above H"),
        )?;
        let m = cum.len() - 1;
        check(
            (cum[m] - hull[m]).abs() <= 1e-12,
            format!("ironing case {case}: mean not preserved"),
        )?;
        for j in 1..m {
            if hull[j] < cum[j] - 1e-9 {
                check(
                    (psi[j] - psi[j - 1]).abs() <= 1e-9,
                    format!("ironing case {case}: slope changes inside an ironed interval"),
                )?;
            }
        }
    }

    // feasible sets grow with the valuation
    for case in 0..CASES {
        let menu = random_menu(&mut rng);
        let pts = support_grid(menu.lo(), menu.hi(), 200);
        for w in pts.windows(2) {
            let (a, b) = (menu.feasible_set(w[0]), menu.feasible_set(w[1]));
            check(
                a.iter().all(|i| b.contains(i)),
                format!("menu case {case}: feasible set shrinks at {}", w[1]),
            )?;
        }
    }

    Ok(format!(
        "{CASES} cases per suite, {menus} emitted menus audited"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("example menu audit", example_1_1, Duration::from_secs(1)),
        (
            "threshold values on Uniform[0,1]",
            threshold_values,
            Duration::from_secs(5),
        ),
        (
            "fixed-rate baseline n=50",
            fixed_rate_baseline,
            Duration::from_secs(5),
        ),
        ("gap convergence", gap_convergence, Duration::from_secs(1)),
        (
            "Monte-Carlo consistency",
            monte_carlo,
            Duration::from_secs(60),
        ),
        (
            "oracle equivalence",
            oracle_equivalence,
            Duration::from_secs(120),
        ),
        ("property suites", property_suites, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > *budget => Err(format!("{msg}; over budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg} ({took:.2?})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg} ({took:.2?})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
