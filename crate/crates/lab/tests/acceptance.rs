//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use perpetual_core::analysis::{self, FitKind};
use perpetual_core::green::{self, Coefficient};
use perpetual_core::homogenization::{diffusivity_bounds, effective_diffusivity, multiscale_diffusivity};
use perpetual_core::kernel::{self, Grid};
use perpetual_core::martingale::{self, BracketEnvelope};
use perpetual_core::potential::MIN_GRID_POINTS;
use perpetual_core::pressure::{self, Classification};
use perpetual_core::sde::{self, path_rng, SimulationPlan};
use perpetual_core::stats::Z95;
use perpetual_core::{Harmonic, MultiScalePotential, PeriodicPotential, ScaleSchedule, TrigSeries};
use perpetual_lab::runner::PoolRunner;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sin() -> TrigSeries {
    TrigSeries::new(0.0, vec![Harmonic::new(1, 0.0, 1.0)]).unwrap()
}

fn sin_scales(n_max: usize) -> MultiScalePotential {
    MultiScalePotential::self_similar(PeriodicPotential::sine(1, 1.0), ScaleSchedule::geometric(8).unwrap(), n_max)
        .unwrap()
}

fn runner() -> PoolRunner {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    PoolRunner::new(threads).unwrap()
}

fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..60 {
        term *= (x / 2.0) * (x / 2.0) / (m as f64 * m as f64);
        sum += term;
    }
    sum
}

fn ac1() -> Outcome {
    let zero = effective_diffusivity(&TrigSeries::zero()).value;
    let d = effective_diffusivity(&sin()).value;
    let exact = bessel_i0(2.0).powi(-2);
    check(
        (zero - 1.0).abs() < 1e-12 && (d - exact).abs() < 1e-8,
        format!("D(0) = {zero}, D(sin) = {d:.12} vs {exact:.12}"),
    )
}

fn ac2() -> Outcome {
    let mut rng = path_rng(2024, 0);
    let mut worst = f64::INFINITY;
    for case in 0..20 {
        let scales = rng.random_range(1..=4);
        let pots: Vec<PeriodicPotential> = (0..scales)
            .map(|_| {
                let h = (0..rng.random_range(1..=3))
                    .map(|_| {
                        Harmonic::new(rng.random_range(1..5), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6))
                    })
                    .collect();
                PeriodicPotential::new(h).unwrap()
            })
            .collect();
        let ratios = (0..4).map(|_| rng.random_range(3u64..12)).collect();
        let msp = MultiScalePotential::new(pots, false, ScaleSchedule::explicit(ratios).unwrap(), scales - 1).unwrap();
        let c = msp.model_constants(MIN_GRID_POINTS).unwrap().conservative();
        for n in 0..=msp.n_max() {
            let d = multiscale_diffusivity(&msp, n).unwrap().value;
            let (lo, hi) = diffusivity_bounds(n + 1, &c, msp.schedule()).unwrap();
            if !(lo..=hi).contains(&d) {
                return Err(format!("instance {case}, n = {n}: {lo} <= {d} <= {hi} fails"));
            }
            worst = worst.min((d - lo).min(hi - d) / d);
        }
    }
    Ok(format!("20 instances inside their brackets, smallest relative margin {worst:.3e}"))
}

fn ac3(pool: &PoolRunner) -> Outcome {
    let zero = MultiScalePotential::zero(ScaleSchedule::geometric(8).unwrap(), 0).unwrap();
    let plan = SimulationPlan::new(0.01, 100_000, 3, f64::INFINITY, 0);
    let s = sde::sample_exit_times(&zero, &plan, &[1.0, 2.0], pool).unwrap();
    let errs: Vec<f64> = s.iter().map(|e| (e.mean / (e.radius * e.radius) - 1.0).abs()).collect();
    check(
        errs.iter().all(|e| *e < 0.02),
        format!(
            "E[tau(1)] = {:.4}, E[tau(2)] = {:.4}, relative errors {:.4}, {:.4}",
            s[0].mean, s[1].mean, errs[0], errs[1]
        ),
    )
}

fn ac4(pool: &PoolRunner) -> Outcome {
    let msp = sin_scales(1);
    let plan = SimulationPlan::new(0.01, 100, 4, f64::INFINITY, 1);
    let s = sde::sample_exit_times(&msp, &plan, &[8.0, 64.0], pool).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for e in &s {
        let p = analysis::predict_exit(&msp, e.radius).unwrap();
        ok &= p.contains(e.mean) && !e.warning;
        detail.push(format!(
            "r = {}: mean {:.4e}, prediction {:.4e}, factor {:.3e}",
            e.radius, e.mean, p.prediction, p.factor
        ));
    }
    check(ok, detail.join("; "))
}

fn ac5(pool: &PoolRunner) -> Outcome {
    // paths still inside at the horizon count with their censoring time, so the
    // estimated mean, and the exponent taken from it, are biased downwards
    let msp = sin_scales(2);
    let r = msp.radius(3);
    let plan = SimulationPlan::new(0.01, 40, 5, 2.0 * r * r, 2);
    let s = &sde::sample_exit_times(&msp, &plan, &[r], pool).unwrap()[0];
    let fit = analysis::fit_exponents(FitKind::ExitTime, &[r], &[s.mean], Some(&[s.std_error])).unwrap();
    let (nu, se) = (fit.pointwise[0], fit.pointwise_se[0]);
    check(
        nu - Z95 * se > 0.0,
        format!("r = {r}: nu1 = {nu:.4} +- {se:.4}, {} of {} paths censored at {}", s.truncated, s.count, s.cap),
    )
}

fn ac6(pool: &PoolRunner) -> Outcome {
    let msp = sin_scales(2);
    let times = [msp.radius(1).powi(2), msp.radius(2).powi(2)];
    let plan = SimulationPlan::new(0.01, 1000, 6, times[1], 2);
    let m = sde::simulate_msd(&msp, &plan, &times, pool).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (j, t) in times.iter().enumerate() {
        let env = analysis::msd_envelope(&msp, *t).unwrap();
        ok &= env.contains(m.mean[j]);
        detail.push(format!("t = {t}: {:.4e} in [{:.4e}, {:.4e}]", m.mean[j], env.lower, env.upper));
    }
    check(ok, detail.join("; "))
}

fn ac7() -> Outcome {
    let u = TrigSeries::new(0.0, vec![Harmonic::new(1, 0.0, 1.0), Harmonic::new(81, 0.0, -1.0)]).unwrap();
    let n = 10;
    let d81 = pressure::sup_defect(&u, 81, n).unwrap().value;
    let d3 = pressure::sup_defect(&u, 3, n).unwrap().value;
    let a81 = pressure::anomaly_index(&u, 81, 4).unwrap();
    let a3 = pressure::anomaly_index(&u, 3, 10).unwrap();
    let a2 = pressure::anomaly_index(&u, 2, 8).unwrap();
    let a27 = pressure::anomaly_index(&u, 27, 4).unwrap();
    let ok = d81 <= 4.0 / n as f64
        && d3 <= 8.0 / n as f64
        && a81.classification == Classification::Normal
        && a3.classification == Classification::Normal
        && a2.classification == Classification::Anomalous
        && a2.index > 2.0 * a2.residual;
    check(
        ok,
        format!(
            "R=81: {} d_10 = {d81:.4}; R=3: {} d_10 = {d3:.4}; R=2: {} index {:.4} residual {:.4}; R=27 (reported): {} index {:.4}",
            a81.classification.name(),
            a3.classification.name(),
            a2.classification.name(),
            a2.index,
            a2.residual,
            a27.classification.name(),
            a27.index
        ),
    )
}

fn random_coefficient<R: Rng>(rng: &mut R) -> Coefficient {
    let cells = rng.random_range(1..=16);
    let values = (0..cells).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
    Coefficient::uniform(values).unwrap()
}

fn ac8() -> Outcome {
    let mut rng = path_rng(8, 0);
    let mut max_ratio = 0.0f64;
    for _ in 0..2000 {
        let c = random_coefficient(&mut rng);
        let (x, y) = (rng.random_range(0.001..0.999), rng.random_range(0.001..0.999));
        if x != y {
            max_ratio = max_ratio.max(green::tiger_ratio(&c, x, y).unwrap());
        }
    }
    let one = Coefficient::constant(1.0).unwrap();
    let mut closed = 0.0f64;
    for _ in 0..200 {
        let (a, b) = (rng.random_range(0.001..0.999), rng.random_range(0.001..0.999));
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        if x != y {
            closed = closed.max((green::tiger_ratio(&one, x, y).unwrap() - (1.0 + 2.0 * (y - x))).abs());
        }
    }
    let sharp = green::tiger_ratio(&one, 0.0025, 0.9975).unwrap();
    let values: Vec<f64> = (0..8).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
    let lam = Coefficient::uniform(values.clone()).unwrap();
    let mu = Coefficient::uniform(values.iter().map(|v| v * rng.random_range(0.25..4.0)).collect()).unwrap();
    let pairs: Vec<(f64, f64)> = (0..1000)
        .map(|_| (rng.random_range(0.001..0.999), rng.random_range(0.001..0.999)))
        .filter(|(x, y)| x != y)
        .collect();
    let stab = green::stability_ratio(&lam, &mu, &pairs).unwrap();
    check(
        max_ratio <= 3.0 + 1e-9 && closed < 1e-6 && sharp >= 2.99 && stab.violations == 0,
        format!("max ratio {max_ratio:.6}, closed-form error {closed:.2e}, sharpness {sharp:.4}, {} violations over {} pairs", stab.violations, pairs.len()),
    )
}

fn ac9() -> Outcome {
    let mut rng = path_rng(9, 0);
    for _ in 0..20 {
        let f2 = rng.random_range(0.1..3.0);
        let env = BracketEnvelope::new(f2 + rng.random_range(0.0..3.0), f2, rng.random_range(0.0..5.0)).unwrap();
        let t = rng.random_range(0.1..50.0);
        let limit = env.lambda_limit();
        let hi = if limit.is_finite() { 0.999 * limit } else { 4.0 };
        for i in 0..50 {
            let lambda = -hi + 2.0 * hi * i as f64 / 49.0;
            let bound = martingale::laplace_bound(&env, lambda, t).unwrap();
            if martingale::saturating_laplace(&env, lambda, t) > bound * (1.0 + 1e-12) {
                return Err(format!("{env:?}, lambda = {lambda}: Gaussian transform exceeds the bound"));
            }
        }
    }
    let flat = BracketEnvelope::new(1.3, 1.3, 2.0).unwrap();
    for i in 0..50 {
        let lambda = -4.0 + 8.0 * i as f64 / 49.0;
        let (b, e) = (
            martingale::laplace_bound(&flat, lambda, 7.0).unwrap(),
            martingale::saturating_laplace(&flat, lambda, 7.0),
        );
        if (b - e).abs() > 1e-12 * e {
            return Err(format!("f1 = f2, lambda = {lambda}: {b} vs {e}"));
        }
    }
    for y in [-0.35, -0.2, -0.05] {
        for mu in 0..=200 {
            let (lhs, rhs) = martingale::lemma_series(y, mu as f64).unwrap();
            if lhs > rhs || lhs.is_nan() {
                return Err(format!("lemma fails at y = {y}, mu = {mu}: {lhs} > {rhs}"));
            }
        }
    }
    Ok("20 envelopes x 50 lambdas bounded, equality for f1 = f2, lemma holds on 603 points".into())
}

fn ac10() -> Outcome {
    let t = 16.0;
    let p = kernel::solve_forward(&TrigSeries::zero(), 0.0, t, Grid { half_width: 32.0, dx: 0.025, dt: None }).unwrap();
    let var = t + p.initial_variance;
    let err = p
        .nodes
        .iter()
        .zip(&p.log_density)
        .filter(|(y, _)| y.abs() <= 4.0 * var.sqrt())
        .map(|(y, l)| {
            let g = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - y * y / (2.0 * var);
            (l - g).exp_m1().abs()
        })
        .fold(0.0, f64::max);
    let rep = kernel::davies_check(&sin(), &[(16.0, 8.0), (64.0, 24.0), (256.0, 64.0)], 0.025, 1.0).unwrap();
    let ratios: Vec<String> = rep.points.iter().map(|p| format!("{:.4}", p.ratio)).collect();
    let c2 = rep.fitted_c2;
    check(
        err < 1e-3 && rep.monotone && c2.is_finite() && rep.contained(c2),
        format!(
            "flat error {err:.2e}; ratios {} (|ratio - 1| decreasing: {}); C2 = {c2:.4} contains every in-window point: {}",
            ratios.join(", "),
            rep.monotone,
            rep.contained(c2)
        ),
    )
}

fn ac11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let pot = |n: &str| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../potentials").join(n).to_str().unwrap().to_string()
    };
    let records = dir.path().join("records.jsonl");
    let records = records.to_str().unwrap().to_string();
    let msd_args =
        ["msd", "--potential", &pot("sin_rho8_2.toml"), "--times", "2,8,32", "--paths", "400"].map(String::from);
    let out = Command::new(env!("CARGO_BIN_EXE_perpetual"))
        .args(["--seed", "11", "--out", &records])
        .args(&msd_args)
        .output()
        .unwrap();
    if !out.status.success() {
        return Err("could not write the analyze input".into());
    }
    let runs: Vec<Vec<String>> = vec![
        vec!["diffusivity".into(), "--potential".into(), pot("sin_rho8_3.toml")],
        ["exit-time", "--potential", &pot("sin_rho8_2.toml"), "--radii", "2,8", "--paths", "300"]
            .map(String::from)
            .to_vec(),
        msd_args.to_vec(),
        ["tail", "--potential", &pot("sin.toml"), "--t", "4", "--h", "0.5,1,2", "--paths", "500"]
            .map(String::from)
            .to_vec(),
        ["pressure", "--potential", &pot("sin81.toml"), "--ratio", "3", "--n-max", "4"].map(String::from).to_vec(),
        ["green-check", "--cases", "300", "--pairs", "200"].map(String::from).to_vec(),
        ["martingale-check", "--potential", &pot("sin_rho8_2.toml"), "--t", "16", "--paths", "300"]
            .map(String::from)
            .to_vec(),
        ["kernel", "--potential", &pot("sin.toml"), "--points", "4:2,8:4", "--dx", "0.05"].map(String::from).to_vec(),
        vec!["analyze".into(), "--input".into(), records],
    ];
    let mut failures = Vec::new();
    for args in &runs {
        for format in ["json", "csv"] {
            let outputs: Vec<_> = ["1", "2", "8"]
                .iter()
                .map(|th| {
                    Command::new(env!("CARGO_BIN_EXE_perpetual"))
                        .args(["--seed", "11", "--threads", th, "--format", format])
                        .args(args)
                        .output()
                        .unwrap()
                })
                .collect();
            let code = outputs[0].status.code();
            let same = outputs.iter().all(|o| o.stdout == outputs[0].stdout && o.status.code() == code);
            if !same || outputs[0].stdout.is_empty() || !matches!(code, Some(0) | Some(3)) {
                failures.push(format!("{} ({format})", args[0]));
            }
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} subcommands x 2 formats identical over 1, 2, 8 workers", runs.len())
        } else {
            format!("differs: {}", failures.join(", "))
        },
    )
}

fn main() {
    let pool = runner();
    let criteria: Vec<Criterion> = vec![
        ("AC1", Box::new(ac1)),
        ("AC2", Box::new(ac2)),
        ("AC3", Box::new(|| ac3(&pool))),
        ("AC4", Box::new(|| ac4(&pool))),
        ("AC5", Box::new(|| ac5(&pool))),
        ("AC6", Box::new(|| ac6(&pool))),
        ("AC7", Box::new(ac7)),
        ("AC8", Box::new(ac8)),
        ("AC9", Box::new(ac9)),
        ("AC10", Box::new(ac10)),
        ("AC11", Box::new(ac11)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("{name} PASS ({secs:.1} s) {d}"),
            Err(d) => {
                failed += 1;
                println!("{name} FAIL ({secs:.1} s) {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
