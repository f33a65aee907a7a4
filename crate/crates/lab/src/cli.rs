//! The `perpetual` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perpetual_core::analysis::{self, FitKind, TailWindow};
use perpetual_core::green::{self, Coefficient};
use perpetual_core::homogenization::{self, effective_diffusivity};
use perpetual_core::kernel::{self, DaviesPoint};
use perpetual_core::martingale::{self, BracketEnvelope, Verdict};
use perpetual_core::potential::MIN_GRID_POINTS;
use perpetual_core::pressure::{self, Classification};
use perpetual_core::sde::{self, path_rng, SimulationPlan};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{CoefficientSpec, PotentialSpec};
use crate::plot::{emit_plot, PlotSpec, Series};
use crate::record::{num, RunRecord, Table, VERSION};
use crate::runner::{resolve_threads, PoolRunner};
use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "perpetual", version, about = "Diffusions in multi-scale periodic potentials")]
pub struct Cli {
    /// Master seed of every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads [default: $PERPETUAL_THREADS, else all cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file [default: stdout].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Append to --out instead of truncating it.
    #[arg(long, global = true)]
    pub append: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Exit with status 3 when a statistical check fails.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Also write an SVG plot here.
    #[arg(long, global = true)]
    pub plot: Option<PathBuf>,
    /// Record the wall time; records then differ from run to run.
    #[arg(long, global = true)]
    pub wall_time: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct McArgs {
    /// Number of paths.
    #[arg(long, default_value_t = 10_000)]
    pub paths: u64,
    /// Euler step.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Scales kept in the simulation [default: the file's n_max].
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective diffusivity D(V_0^n) and its multi-scale bounds.
    Diffusivity {
        #[arg(long)]
        potential: PathBuf,
        /// Top scale [default: n_max].
        #[arg(long)]
        n: Option<usize>,
    },
    /// Mean exit times from balls around the origin.
    ExitTime {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
        /// Hard time cap per path.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Mean squared displacement at checkpoints.
    Msd {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Tail probabilities P(|y_t| >= h).
    Tail {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        h: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
        /// Constant of the predicted log-tail.
        #[arg(long, default_value_t = 1.0)]
        c6: f64,
    },
    /// Symmetrized Birkhoff pressure and normal/anomalous classification.
    Pressure {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        ratio: u64,
        #[arg(long)]
        n_max: usize,
        #[arg(long, default_value_t = pressure::TOL_INDEX)]
        tol: f64,
    },
    /// Sub-harmonic ratio and Green function stability.
    GreenCheck {
        /// Coefficient file; random coefficients when absent.
        #[arg(long)]
        lambda: Option<PathBuf>,
        /// Second coefficient for the stability check; a random perturbation of lambda when absent.
        #[arg(long)]
        mu: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        cases: usize,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
    },
    /// Laplace bound for a bracket envelope, or on a simulated martingale with --potential.
    MartingaleCheck {
        #[arg(long)]
        f1: Option<f64>,
        #[arg(long)]
        f2: Option<f64>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        t: f64,
        /// `lo:hi:count` or a comma list [default: points spread over the domain of the bound].
        #[arg(long)]
        lambda_grid: Option<String>,
        #[arg(long)]
        potential: Option<PathBuf>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Heat kernel against the homogenized Gaussian envelope.
    Kernel {
        #[arg(long)]
        potential: PathBuf,
        /// `t:offset` pairs.
        #[arg(long, value_delimiter = ',', default_values_t = ["16:8".to_string(), "64:24".to_string(), "256:64".to_string()])]
        points: Vec<String>,
        #[arg(long, default_value_t = 0.025)]
        dx: f64,
        /// Window constant C.
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        /// Directory for per-point CSV profiles.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Exponent fits over exit-time and msd records.
    Analyze {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Diffusivity { .. } => "diffusivity",
            Command::ExitTime { .. } => "exit-time",
            Command::Msd { .. } => "msd",
            Command::Tail { .. } => "tail",
            Command::Pressure { .. } => "pressure",
            Command::GreenCheck { .. } => "green-check",
            Command::MartingaleCheck { .. } => "martingale-check",
            Command::Kernel { .. } => "kernel",
            Command::Analyze { .. } => "analyze",
        }
    }
}

/// Everything a subcommand produces.
pub struct Outcome {
    pub config: Value,
    pub payload: Value,
    pub table: Table,
    pub plot: Option<(Vec<Series>, PlotSpec)>,
    /// Set when a statistical check did not pass.
    pub failure: Option<String>,
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn plan(mc: &McArgs, seed: u64, horizon: f64, file_n_max: usize) -> Result<SimulationPlan, LabError> {
    let n_max = mc.n_max.unwrap_or(file_n_max);
    if n_max > file_n_max {
        return Err(LabError::Usage(format!("--n-max {n_max} exceeds the file's n_max {file_n_max}")));
    }
    Ok(SimulationPlan::new(mc.dt, mc.paths, seed, horizon, n_max))
}

fn mc_config(mc: &McArgs, n_max: usize) -> Value {
    json!({ "paths": mc.paths, "dt": mc.dt, "n_max": mc.n_max.unwrap_or(n_max) })
}

fn load_potential(path: &Path) -> Result<PotentialSpec, LabError> {
    PotentialSpec::load(path)
}

fn diffusivity(potential: &Path, n: Option<usize>) -> Result<Outcome, LabError> {
    let spec = load_potential(potential)?;
    let msp = spec.build()?;
    let n = n.unwrap_or(msp.n_max());
    let d = homogenization::multiscale_diffusivity(&msp, n)?;
    let c = msp.model_constants(MIN_GRID_POINTS)?.conservative();
    let (lo, hi) = homogenization::diffusivity_bounds(n + 1, &c, msp.schedule())?;
    let payload = json!({
        "n": n, "value": d.value, "lower_bound": lo, "upper_bound": hi, "error_estimate": d.error_estimate,
    });
    let mut table = Table::new(&["n", "value", "lower_bound", "upper_bound", "error_estimate"]);
    table.push([n.to_string(), num(d.value), num(lo), num(hi), num(d.error_estimate)]);
    let failure = (!(d.value >= lo && d.value <= hi)).then(|| format!("D = {} outside [{lo}, {hi}]", d.value));
    Ok(Outcome { config: json!({ "potential": spec, "n": n }), payload, table, plot: None, failure })
}

fn exit_time(
    potential: &Path,
    radii: &[f64],
    mc: &McArgs,
    horizon: Option<f64>,
    seed: u64,
    runner: &PoolRunner,
) -> Result<Outcome, LabError> {
    let spec = load_potential(potential)?;
    let msp = spec.build()?;
    let horizon = horizon.unwrap_or(f64::INFINITY);
    let plan = plan(mc, seed, horizon, msp.n_max())?;
    let summaries = sde::sample_exit_times(&msp, &plan, radii, runner)?;
    let cut = msp.truncated(plan.n_max)?;
    let mut rows = Vec::new();
    let mut table =
        Table::new(&["radius", "mean", "std_error", "truncated", "nu1", "nu1_se", "prediction", "factor", "contains"]);
    let mut failure = None;
    for s in &summaries {
        let prediction = analysis::predict_exit(&cut, s.radius).ok();
        let fit = if s.radius > 1.0 {
            analysis::fit_exponents(FitKind::ExitTime, &[s.radius], &[s.mean], Some(&[s.std_error])).ok()
        } else {
            None
        };
        let (nu1, nu1_se) = fit.map_or((f64::NAN, f64::NAN), |f| (f.pointwise[0], f.pointwise_se[0]));
        if s.warning {
            failure = Some(format!("{:.2}% of paths hit the cap at r = {}", 100.0 * s.truncated_fraction(), s.radius));
        }
        if let Some(p) = &prediction {
            if !p.contains(s.mean) {
                failure = Some(format!("mean exit time {} at r = {} outside the predicted band", s.mean, s.radius));
            }
        }
        table.push([
            num(s.radius),
            num(s.mean),
            num(s.std_error),
            s.truncated.to_string(),
            num(nu1),
            num(nu1_se),
            prediction.as_ref().map_or(String::new(), |p| num(p.prediction)),
            prediction.as_ref().map_or(String::new(), |p| num(p.factor)),
            prediction.as_ref().map_or(String::new(), |p| p.contains(s.mean).to_string()),
        ]);
        rows.push(json!({
            "radius": s.radius, "mean": s.mean, "std_error": s.std_error, "count": s.count,
            "truncated": s.truncated, "cap": finite(s.cap), "warning": s.warning,
            "nu1": finite(nu1), "nu1_se": finite(nu1_se),
            "prediction": prediction.map(|p| json!({
                "value": p.prediction, "factor": p.factor, "n_ef": p.n_ef,
                "diffusivity": p.diffusivity, "contains": p.contains(s.mean),
            })),
        }));
    }
    let plot = Some((
        vec![
            Series::new("E[tau]", summaries.iter().map(|s| (s.radius, s.mean)).collect()),
            Series::new("r^2", summaries.iter().map(|s| (s.radius, s.radius * s.radius)).collect()),
        ],
        PlotSpec::log_log("mean exit time", "r", "E[tau(0,r)]"),
    ));
    let mut config = json!({ "potential": spec, "radii": radii, "horizon": finite(horizon) });
    config["mc"] = mc_config(mc, msp.n_max());
    Ok(Outcome { config, payload: json!({ "radii": rows }), table, plot, failure })
}

fn msd(potential: &Path, times: &[f64], mc: &McArgs, seed: u64, runner: &PoolRunner) -> Result<Outcome, LabError> {
    let spec = load_potential(potential)?;
    let msp = spec.build()?;
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let plan = plan(mc, seed, horizon, msp.n_max())?;
    let series = sde::simulate_msd(&msp, &plan, times, runner)?;
    let cut = msp.truncated(plan.n_max)?;
    let mut rows = Vec::new();
    let mut table = Table::new(&["t", "mean", "std_error", "lower", "upper", "contains", "degenerate"]);
    let mut failure = None;
    for i in 0..series.checkpoints.len() {
        let (t, m, se) = (series.checkpoints[i], series.mean[i], series.std_error[i]);
        let env = analysis::msd_envelope(&cut, t).ok();
        if let Some(e) = &env {
            if !e.contains(m) {
                failure = Some(format!("E[y_t^2] = {m} at t = {t} outside [{}, {}]", e.lower, e.upper));
            }
        }
        table.push([
            num(t),
            num(m),
            num(se),
            env.map_or(String::new(), |e| num(e.lower)),
            env.map_or(String::new(), |e| num(e.upper)),
            env.map_or(String::new(), |e| e.contains(m).to_string()),
            env.map_or(String::new(), |e| e.degenerate.to_string()),
        ]);
        rows.push(json!({
            "t": t, "mean": m, "std_error": se,
            "envelope": env.map(|e| json!({
                "lower": e.lower, "upper": e.upper, "n_ef": e.counts.n_ef, "n_flu": e.counts.n_flu,
                "n_per": e.counts.n_per, "diffusivity": e.diffusivity, "degenerate": e.degenerate,
                "contains": e.contains(m),
            })),
        }));
    }
    let plot = Some((
        vec![Series::new("E[y_t^2]", series.checkpoints.iter().copied().zip(series.mean.iter().copied()).collect())],
        PlotSpec::log_log("mean squared displacement", "t", "E[y_t^2]"),
    ));
    let mut config = json!({ "potential": spec, "times": times });
    config["mc"] = mc_config(mc, msp.n_max());
    Ok(Outcome { config, payload: json!({ "count": series.count, "checkpoints": rows }), table, plot, failure })
}

fn tail(
    potential: &Path,
    t: f64,
    h: &[f64],
    mc: &McArgs,
    c6: f64,
    seed: u64,
    runner: &PoolRunner,
) -> Result<Outcome, LabError> {
    let spec = load_potential(potential)?;
    let msp = spec.build()?;
    let plan = plan(mc, seed, t, msp.n_max())?;
    let est = sde::estimate_tail(&msp, &plan, t, h, runner)?;
    let lambda = effective_diffusivity(&spec.base()?).value;
    let rho = spec.geometric_rho();
    let mut rows = Vec::new();
    let mut table = Table::new(&["h", "exceedances", "probability", "lower", "upper", "sparse", "predicted_log"]);
    let mut failure = None;
    for i in 0..est.h.len() {
        let pred = rho.and_then(|r| analysis::tail_prediction(lambda, r, t, est.h[i], c6, &TailWindow::default()).ok());
        if est.sparse[i] {
            failure = Some(format!("fewer than {} exceedances at h = {}", sde::SPARSE_BIN, est.h[i]));
        }
        table.push([
            num(est.h[i]),
            est.exceedances[i].to_string(),
            num(est.probability[i]),
            num(est.lower[i]),
            num(est.upper[i]),
            est.sparse[i].to_string(),
            pred.map_or(String::new(), |p| num(p.value)),
        ]);
        rows.push(json!({
            "h": est.h[i], "exceedances": est.exceedances[i], "probability": est.probability[i],
            "lower": est.lower[i], "upper": est.upper[i], "sparse": est.sparse[i],
            "prediction": pred.map(|p| json!({ "log_bound": p.value, "nu3": p.nu3, "n_ef": p.n_ef, "in_window": p.in_window })),
        }));
    }
    let mut config = json!({ "potential": spec, "t": t, "h": h, "c6": c6 });
    config["mc"] = mc_config(mc, msp.n_max());
    let plot = Some((
        vec![Series::new("P(|y_t| >= h)", est.h.iter().copied().zip(est.probability.iter().copied()).collect())],
        PlotSpec {
            title: "tail".into(),
            x_label: "h".into(),
            y_label: "probability".into(),
            log_x: false,
            log_y: true,
        },
    ));
    Ok(Outcome { config, payload: json!({ "t": t, "count": est.count, "levels": rows }), table, plot, failure })
}

fn pressure_cmd(potential: &Path, ratio: u64, n_max: usize, tol: f64) -> Result<Outcome, LabError> {
    let spec = load_potential(potential)?;
    let u = spec.base()?;
    let rep = pressure::anomaly_index_with(&u, ratio, n_max, tol)?;
    let mut table = Table::new(&["n", "p_n", "p_n_error", "d_n", "n_d_n"]);
    for (i, p) in rep.index_series.iter().enumerate() {
        let n = i + 1;
        let d = rep.defects.iter().find(|d| d.n == n).map(|d| d.value);
        table.push([
            n.to_string(),
            num(*p),
            num(rep.index_errors[i]),
            d.map_or(String::new(), num),
            d.map_or(String::new(), |d| num(n as f64 * d)),
        ]);
    }
    let payload = json!({
        "ratio": ratio,
        "p_n": rep.index_series,
        "p_n_errors": rep.index_errors,
        "extrapolated": rep.extrapolated,
        "index": rep.index,
        "residual": rep.residual,
        "d_n": rep.defects.iter().map(|d| json!({ "n": d.n, "value": d.value, "random_starts": d.random_starts })).collect::<Vec<_>>(),
        "defect_slope": finite(rep.defect_slope),
        "classification": rep.classification.name(),
    });
    let failure =
        (rep.classification == Classification::Inconclusive).then(|| "classification is inconclusive".to_string());
    let plot = Some((
        vec![Series::new("p_n", rep.index_series.iter().enumerate().map(|(i, p)| ((i + 1) as f64, *p)).collect())],
        PlotSpec {
            title: "pressure index".into(),
            x_label: "n".into(),
            y_label: "p_n".into(),
            log_x: false,
            log_y: false,
        },
    ));
    Ok(Outcome {
        config: json!({ "potential": spec, "ratio": ratio, "n_max": n_max, "tol": tol }),
        payload,
        table,
        plot,
        failure,
    })
}

/// Piecewise-constant coefficient with 1..=16 cells and values log-uniform in `[10^-2, 10^2]`.
fn random_coefficient<R: Rng>(rng: &mut R) -> Result<Coefficient, LabError> {
    let cells = rng.random_range(1..=16);
    let mut breaks: Vec<f64> = (0..cells - 1).map(|_| rng.random::<f64>()).collect();
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let values = (0..breaks.len() - 1).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
    Ok(Coefficient::piecewise(breaks, values)?)
}

fn interior_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    loop {
        let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
        if x > 0.0 && y > 0.0 && x != y {
            return (x, y);
        }
    }
}

fn green_check(
    lambda: Option<&Path>,
    mu: Option<&Path>,
    cases: usize,
    pairs: usize,
    seed: u64,
) -> Result<Outcome, LabError> {
    let mut rng = path_rng(seed, 0);
    let lam_spec = lambda.map(CoefficientSpec::load).transpose()?;
    let mu_spec = mu.map(CoefficientSpec::load).transpose()?;
    let fixed = lam_spec.as_ref().map(|s| s.build()).transpose()?;
    let mut max_ratio = 0.0f64;
    let mut argmax = (f64::NAN, f64::NAN);
    for _ in 0..cases {
        let c = match &fixed {
            Some(c) => c.clone(),
            None => random_coefficient(&mut rng)?,
        };
        let (x, y) = interior_pair(&mut rng);
        let r = green::tiger_ratio(&c, x, y)?;
        if r > max_ratio {
            max_ratio = r;
            argmax = (x, y);
        }
    }
    let base = match &fixed {
        Some(c) => c.clone(),
        None => random_coefficient(&mut rng)?,
    };
    let other = match &mu_spec {
        Some(s) => s.build()?,
        None => {
            let values = base.values().iter().map(|v| v * 2f64.powf(rng.random_range(-1.0..1.0))).collect();
            Coefficient::piecewise(base.breaks().to_vec(), values)?
        }
    };
    let pair_list: Vec<(f64, f64)> = (0..pairs).map(|_| interior_pair(&mut rng)).collect();
    let stab = green::stability_ratio(&base, &other, &pair_list)?;
    let mut table = Table::new(&["check", "value", "x", "y"]);
    table.push(["max_ratio".into(), num(max_ratio), num(argmax.0), num(argmax.1)]);
    table.push(["contrast".into(), num(stab.contrast), String::new(), String::new()]);
    table.push(["worst_margin".into(), num(stab.worst_margin), num(stab.worst_pair.0), num(stab.worst_pair.1)]);
    table.push(["violations".into(), stab.violations.to_string(), String::new(), String::new()]);
    let payload = json!({
        "cases": cases,
        "max_ratio": max_ratio,
        "argmax": [argmax.0, argmax.1],
        "stability": {
            "contrast": stab.contrast, "worst_margin": stab.worst_margin,
            "worst_pair": [stab.worst_pair.0, stab.worst_pair.1], "violations": stab.violations, "pairs": stab.pairs,
        },
    });
    let failure = if max_ratio > 3.0 + 1e-9 {
        Some(format!("ratio {max_ratio} exceeds 3"))
    } else if stab.violations > 0 {
        Some(format!("{} stability violations", stab.violations))
    } else {
        None
    };
    let config = json!({ "lambda": lam_spec, "mu": mu_spec, "cases": cases, "pairs": pairs });
    Ok(Outcome { config, payload, table, plot: None, failure })
}

fn lambda_grid(text: Option<&str>, limit: f64) -> Result<Vec<f64>, LabError> {
    let bad = |s: &str| LabError::Usage(format!("cannot read --lambda-grid {s}"));
    match text {
        None => {
            let hi = if limit.is_finite() { 0.99 * limit } else { 2.0 };
            Ok((0..50).map(|i| -hi + 2.0 * hi * i as f64 / 49.0).collect())
        }
        Some(s) if s.contains(':') => {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(bad(s));
            }
            let lo: f64 = parts[0].parse().map_err(|_| bad(s))?;
            let hi: f64 = parts[1].parse().map_err(|_| bad(s))?;
            let n: usize = parts[2].parse().map_err(|_| bad(s))?;
            if n < 2 {
                return Ok(vec![lo]);
            }
            Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
        }
        Some(s) => s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad(s))).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn martingale_check(
    f1: Option<f64>,
    f2: Option<f64>,
    t0: Option<f64>,
    t: f64,
    grid: Option<&str>,
    potential: Option<&Path>,
    mc: &McArgs,
    seed: u64,
    runner: &PoolRunner,
) -> Result<Outcome, LabError> {
    let mut table = Table::new(&["lambda", "exact", "bound", "margin"]);
    if let Some(path) = potential {
        let spec = load_potential(path)?;
        let msp = spec.build()?;
        let plan = plan(mc, seed, t, msp.n_max())?;
        let probe = match grid {
            Some(g) => lambda_grid(Some(g), f64::INFINITY)?,
            None => Vec::new(),
        };
        let rep = martingale::verify_on_sde_martingale(&msp, &plan, &probe, runner)?;
        let mut failure = None;
        let mut checks = Vec::new();
        for c in &rep.checks {
            if c.verdict == Verdict::Violated {
                failure = Some(format!("E[exp(lambda M_t)] exceeds the bound at lambda = {}", c.lambda));
            }
            table.push([num(c.lambda), num(c.empirical), num(c.bound), num(c.bound - c.empirical)]);
            checks.push(json!({
                "lambda": c.lambda, "empirical": c.empirical, "std_error": c.std_error,
                "bound": finite(c.bound), "verdict": format!("{:?}", c.verdict),
            }));
        }
        let e = rep.envelope;
        let payload = json!({
            "envelope": { "f1": e.f1, "f2": e.f2, "t0": e.t0 },
            "t": rep.t, "times": rep.times, "mean_bracket": rep.mean_bracket, "checks": checks,
        });
        let used: Vec<f64> = rep.checks.iter().map(|c| c.lambda).collect();
        let mut config = json!({ "potential": spec, "t": t, "lambda_grid": used });
        config["mc"] = mc_config(mc, msp.n_max());
        return Ok(Outcome { config, payload, table, plot: None, failure });
    }
    let missing = || LabError::Usage("--f1, --f2 and --t0 are required without --potential".into());
    let env = BracketEnvelope::new(f1.ok_or_else(missing)?, f2.ok_or_else(missing)?, t0.ok_or_else(missing)?)?;
    let lambdas = lambda_grid(grid, env.lambda_limit())?;
    let mut rows = Vec::new();
    let mut failure = None;
    for &l in &lambdas {
        let exact = martingale::saturating_laplace(&env, l, t);
        match martingale::laplace_bound(&env, l, t) {
            Ok(bound) => {
                if exact > bound * (1.0 + 1e-12) {
                    failure = Some(format!("exact transform exceeds the bound at lambda = {l}"));
                }
                table.push([num(l), num(exact), num(bound), num(bound - exact)]);
                rows.push(json!({ "lambda": l, "exact": exact, "bound": bound, "margin": bound - exact }));
            }
            Err(_) => {
                table.push([num(l), num(exact), String::new(), String::new()]);
                rows.push(json!({ "lambda": l, "exact": exact, "bound": null, "margin": null }));
            }
        }
    }
    let payload = json!({
        "envelope": { "f1": env.f1, "f2": env.f2, "t0": env.t0 },
        "degenerate": env.is_degenerate(), "lambda_limit": finite(env.lambda_limit()), "rows": rows,
    });
    let config = json!({ "f1": env.f1, "f2": env.f2, "t0": env.t0, "t": t, "lambda_grid": lambdas });
    Ok(Outcome { config, payload, table, plot: None, failure })
}

fn parse_points(points: &[String]) -> Result<Vec<(f64, f64)>, LabError> {
    points
        .iter()
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| LabError::Usage(format!("point {p} is not t:offset")))?;
            let t = a.trim().parse().map_err(|_| LabError::Usage(format!("bad time in {p}")))?;
            let d = b.trim().parse().map_err(|_| LabError::Usage(format!("bad offset in {p}")))?;
            Ok((t, d))
        })
        .collect()
}

fn kernel_cmd(
    potential: &Path,
    points: &[String],
    dx: f64,
    window: f64,
    profiles: Option<&Path>,
    runner: &PoolRunner,
) -> Result<Outcome, LabError> {
    let spec = load_potential(potential)?;
    let u = spec.base()?;
    let schedule = parse_points(points)?;
    let solved: Vec<(DaviesPoint, kernel::KernelProfile)> = runner.install(|| {
        schedule.par_iter().map(|&(t, d)| kernel::davies_point(&u, t, d, dx, window)).collect::<Result<Vec<_>, _>>()
    })?;
    if let Some(dir) = profiles {
        std::fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("{}: {e}", dir.display())))?;
        for (p, prof) in &solved {
            let mut t = Table::new(&["y", "log_density"]);
            for (y, l) in prof.nodes.iter().zip(&prof.log_density) {
                t.push([num(*y), num(*l)]);
            }
            let path = dir.join(format!("profile_t{}_d{}.csv", num(p.t), num(p.offset)));
            let file = std::fs::File::create(&path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
            t.write(file)?;
        }
    }
    let report = kernel::summarize(&u, window, solved.into_iter().map(|p| p.0).collect());
    let contained = report.contained(report.fitted_c2);
    let mut table = Table::new(&["t", "offset", "log_density", "ratio", "c2", "regime"]);
    let mut rows = Vec::new();
    for p in &report.points {
        table.push([num(p.t), num(p.offset), num(p.log_density), num(p.ratio), num(p.c2), p.tag.name().into()]);
        rows.push(json!({
            "t": p.t, "offset": p.offset, "log_density": p.log_density, "ratio": p.ratio,
            "c2": p.c2, "regime": p.tag.name(),
        }));
    }
    let failure = if !report.monotone {
        Some("|ratio - 1| does not decrease along the schedule".to_string())
    } else if !contained {
        Some("fitted C2 does not contain every in-window point".to_string())
    } else {
        None
    };
    let payload = json!({
        "diffusivity": report.diffusivity, "points": rows, "fitted_c2": report.fitted_c2,
        "contained": contained, "monotone": report.monotone,
    });
    let config = json!({ "potential": spec, "points": schedule, "dx": dx, "window": window });
    Ok(Outcome { config, payload, table, plot: None, failure })
}

fn analyze(input: &Path) -> Result<Outcome, LabError> {
    let text = std::fs::read_to_string(input).map_err(|e| LabError::Io(format!("{}: {e}", input.display())))?;
    let records = RunRecord::parse_lines(&text)?;
    let mut fits = Vec::new();
    let mut series = Vec::new();
    let mut table = Table::new(&["record", "kind", "x", "y", "pointwise", "pointwise_se"]);
    let mut failure = None;
    for (i, r) in records.iter().enumerate() {
        let (kind, key, xkey, rows) = match r.subcommand.as_str() {
            "exit-time" => (FitKind::ExitTime, "radii", "radius", &r.payload["radii"]),
            "msd" => (FitKind::Msd, "checkpoints", "t", &r.payload["checkpoints"]),
            _ => continue,
        };
        let rows = rows.as_array().ok_or_else(|| LabError::Config(format!("record {} has no {key}", i + 1)))?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut se = Vec::new();
        for row in rows {
            let (Some(a), Some(b)) = (row[xkey].as_f64(), row["mean"].as_f64()) else { continue };
            let check =
                if kind == FitKind::ExitTime { &row["prediction"]["contains"] } else { &row["envelope"]["contains"] };
            if check == &Value::Bool(false) {
                failure = Some(format!("record {}: {xkey} = {a} falls outside its prediction", i + 1));
            }
            if a > 1.0 && b > 0.0 {
                x.push(a);
                y.push(b);
                se.push(row["std_error"].as_f64().unwrap_or(0.0));
            }
        }
        if x.is_empty() {
            continue;
        }
        let fit = analysis::fit_exponents(kind, &x, &y, Some(&se))?;
        for j in 0..x.len() {
            table.push([
                (i + 1).to_string(),
                r.subcommand.clone(),
                num(x[j]),
                num(y[j]),
                num(fit.pointwise[j]),
                num(fit.pointwise_se[j]),
            ]);
        }
        series.push(Series::new(
            format!("{} #{}", r.subcommand, i + 1),
            x.iter().copied().zip(y.iter().copied()).collect(),
        ));
        fits.push(json!({
            "record": i + 1, "subcommand": r.subcommand, "seed": r.seed, "abscissae": x, "ordinates": y,
            "pointwise": fit.pointwise, "pointwise_se": fit.pointwise_se,
            "slope": finite(fit.slope), "slope_se": finite(fit.slope_se), "slope_exponent": finite(fit.slope_exponent()),
        }));
    }
    if fits.is_empty() {
        return Err(LabError::Usage("no exit-time or msd records with abscissae above 1".into()));
    }
    let plot = Some((series, PlotSpec::log_log("exponent fits", "r or t", "E[tau] or E[y^2]")));
    Ok(Outcome { config: json!({ "records": records.len() }), payload: json!({ "fits": fits }), table, plot, failure })
}

fn execute(cli: &Cli, runner: &PoolRunner) -> Result<Outcome, LabError> {
    let seed = cli.seed;
    match &cli.command {
        Command::Diffusivity { potential, n } => diffusivity(potential, *n),
        Command::ExitTime { potential, radii, mc, horizon } => exit_time(potential, radii, mc, *horizon, seed, runner),
        Command::Msd { potential, times, mc } => msd(potential, times, mc, seed, runner),
        Command::Tail { potential, t, h, mc, c6 } => tail(potential, *t, h, mc, *c6, seed, runner),
        Command::Pressure { potential, ratio, n_max, tol } => pressure_cmd(potential, *ratio, *n_max, *tol),
        Command::GreenCheck { lambda, mu, cases, pairs } => {
            green_check(lambda.as_deref(), mu.as_deref(), *cases, *pairs, seed)
        }
        Command::MartingaleCheck { f1, f2, t0, t, lambda_grid, potential, mc } => {
            martingale_check(*f1, *f2, *t0, *t, lambda_grid.as_deref(), potential.as_deref(), mc, seed, runner)
        }
        Command::Kernel { potential, points, dx, window, profiles } => {
            kernel_cmd(potential, points, *dx, *window, profiles.as_deref(), runner)
        }
        Command::Analyze { input } => analyze(input),
    }
}

fn write_output(cli: &Cli, outcome: &Outcome, record: &RunRecord) -> Result<(), LabError> {
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(path) => {
            let file = std::fs::OpenOptions::new()
                .create(true)
                .write(true)
                .append(cli.append)
                .truncate(!cli.append)
                .open(path)
                .map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
            Box::new(std::io::BufWriter::new(file))
        }
        None => Box::new(std::io::stdout().lock()),
    };
    match cli.format {
        Format::Json => writeln!(sink, "{}", record.to_line()?)?,
        Format::Csv => outcome.table.write(&mut sink)?,
    }
    sink.flush()?;
    if let Some(path) = &cli.plot {
        let (series, spec) =
            outcome.plot.as_ref().ok_or_else(|| LabError::Usage(format!("{} has no plot", cli.command.name())))?;
        emit_plot(series, spec, path)?;
    }
    Ok(())
}

/// Runs one invocation and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("perpetual {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<(), LabError> {
    let runner = PoolRunner::new(resolve_threads(cli.threads)?)?;
    let start = Instant::now();
    let outcome = execute(cli, &runner)?;
    let record = RunRecord {
        subcommand: cli.command.name().to_string(),
        config: outcome.config.clone(),
        seed: cli.seed,
        version: VERSION.to_string(),
        wall_time: cli.wall_time.then(|| start.elapsed().as_secs_f64()),
        payload: outcome.payload.clone(),
    };
    write_output(cli, &outcome, &record)?;
    match (&outcome.failure, cli.strict) {
        (Some(msg), true) => Err(LabError::Statistical(msg.clone())),
        (Some(msg), false) => {
            eprintln!("warning: {msg}");
            Ok(())
        }
        _ => Ok(()),
    }
}
