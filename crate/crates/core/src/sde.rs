//! Euler–Maruyama Monte Carlo for `dy = dω − ∇V(y) dt` started at 0.
//!
//! Every path draws from its own ChaCha8 stream selected by the path index, and
//! per-path results are reduced in index order. Scheduling paths on any number
//! of workers therefore gives the same bits; see [`PathRunner`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{argument, Result};
use crate::homogenization;
use crate::potential::{MultiScalePotential, MIN_GRID_POINTS};
use crate::stats::{self, Moments};

/// Bridge crossing probabilities below this are treated as zero without drawing.
pub const BRIDGE_FLOOR: f64 = 1e-12;

/// Exit times are censored at `TRUNCATION_FACTOR · r² / D_lower`.
pub const TRUNCATION_FACTOR: f64 = 1e4;

/// Fraction of truncated paths above which a summary carries a warning.
pub const TRUNCATION_WARNING: f64 = 0.01;

/// Tail-truncation error tolerated over the simulated region.
pub const TRUNCATION_TOLERANCE: f64 = 1e-3;

/// Exceedance count below which a tail bin is widened and flagged.
pub const SPARSE_BIN: u64 = 10;

/// Monte Carlo configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub dt: f64,
    pub n_paths: u64,
    pub master_seed: u64,
    /// Simulated time never exceeds this.
    pub horizon: f64,
    /// Highest scale kept in the drift.
    pub n_max: usize,
    pub bridge_correction: bool,
}

impl SimulationPlan {
    pub fn new(dt: f64, n_paths: u64, master_seed: u64, horizon: f64, n_max: usize) -> Self {
        Self { dt, n_paths, master_seed, horizon, n_max, bridge_correction: true }
    }

    /// Checks the step size against the finest period and returns the model cut at `n_max`.
    pub fn prepare(&self, msp: &MultiScalePotential) -> Result<MultiScalePotential> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(argument("dt must be positive"));
        }
        if self.n_paths == 0 {
            return Err(argument("n_paths must be >= 1"));
        }
        if !(self.horizon > 0.0) {
            return Err(argument("horizon must be positive"));
        }
        let cut = msp.truncated(self.n_max)?;
        let period = cut.finest_period(self.n_max);
        if self.dt > period * period / 100.0 {
            return Err(argument(format!(
                "dt = {} exceeds finest period^2/100 = {}",
                self.dt,
                period * period / 100.0
            )));
        }
        Ok(cut)
    }

    fn steps(&self, t: f64) -> u64 {
        (t / self.dt).round() as u64
    }
}

/// Schedules independent per-path work and returns results in index order.
pub trait PathRunner {
    fn map_paths<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

/// Runs paths one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl PathRunner for Sequential {
    fn map_paths<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

/// The random stream of path `index`.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// `∇V` flattened into `(ω, a, b)` terms with `ω = 2πk/R`.
#[derive(Debug, Clone)]
pub struct Drift {
    terms: Vec<(f64, f64, f64)>,
}

impl Drift {
    pub fn new(msp: &MultiScalePotential) -> Self {
        let mut terms = Vec::new();
        for k in 0..=msp.n_max() {
            if let Some(u) = msp.scale(k) {
                let r = msp.radius(k);
                for h in u.harmonics() {
                    if h.cos != 0.0 || h.sin != 0.0 {
                        terms.push((2.0 * PI * h.frequency as f64 / r, h.cos, h.sin));
                    }
                }
            }
        }
        Self { terms }
    }

    #[inline]
    pub fn gradient(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(w, a, b) in &self.terms {
            let (s, c) = (w * x).sin_cos();
            acc += w * (b * c - a * s);
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Mean exit time of `B(0, r)` with its accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitTimeSummary {
    pub radius: f64,
    /// Mean over all paths; truncated paths contribute their censoring time.
    pub mean: f64,
    pub std_error: f64,
    pub count: u64,
    pub truncated: u64,
    /// Censoring time applied to this radius.
    pub cap: f64,
    /// More than [`TRUNCATION_WARNING`] of the paths were truncated.
    pub warning: bool,
}

impl ExitTimeSummary {
    pub fn truncated_fraction(&self) -> f64 {
        self.truncated as f64 / self.count as f64
    }
}

/// Lower bound on `D(V_0^{n_max})` used to size the censoring time.
fn diffusivity_floor(msp: &MultiScalePotential) -> Result<f64> {
    let c = msp.model_constants(MIN_GRID_POINTS)?;
    let (lo, _) = homogenization::diffusivity_bounds(msp.n_max() + 1, &c, msp.schedule())?;
    Ok(lo)
}

/// Samples `τ(0, r)` for every radius jointly, one path per index.
pub fn sample_exit_times<R: PathRunner>(
    msp: &MultiScalePotential,
    plan: &SimulationPlan,
    radii: &[f64],
    runner: &R,
) -> Result<Vec<ExitTimeSummary>> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(argument("radii must be positive and finite"));
    }
    let cut = plan.prepare(msp)?;
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    if cut.truncation_error_bound(r_max) >= TRUNCATION_TOLERANCE {
        return Err(argument("n_max too small: tail truncation error over the ball exceeds 1e-3"));
    }
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| radii[i]).collect();
    let floor = diffusivity_floor(&cut)?;
    let caps: Vec<f64> = sorted.iter().map(|r| (TRUNCATION_FACTOR * r * r / floor).min(plan.horizon)).collect();
    let cap_steps: Vec<u64> = caps.iter().map(|&c| (c / plan.dt).floor().max(1.0) as u64).collect();
    let drift = Drift::new(&cut);

    let paths = runner.map_paths(plan.n_paths, |i| {
        let mut rng = path_rng(plan.master_seed, i);
        exit_path(&drift, plan, &sorted, &cap_steps, &mut rng)
    });

    let mut out = vec![None; radii.len()];
    for (slot, &orig) in order.iter().enumerate() {
        let mut m = Moments::default();
        let mut truncated = 0;
        for p in &paths {
            let (steps, hit) = p[slot];
            m.push(steps as f64 * plan.dt);
            if !hit {
                truncated += 1;
            }
        }
        let count = m.count();
        out[orig] = Some(ExitTimeSummary {
            radius: sorted[slot],
            mean: m.mean(),
            std_error: m.std_error(),
            count,
            truncated,
            cap: cap_steps[slot] as f64 * plan.dt,
            warning: truncated as f64 > TRUNCATION_WARNING * count as f64,
        });
    }
    Ok(out.into_iter().map(|s| s.unwrap()).collect())
}

/// Per radius (ascending): exit step and whether the exit was observed.
fn exit_path(
    drift: &Drift,
    plan: &SimulationPlan,
    radii: &[f64],
    caps: &[u64],
    rng: &mut ChaCha8Rng,
) -> Vec<(u64, bool)> {
    let mut result = Vec::with_capacity(radii.len());
    let dt = plan.dt;
    let sq = dt.sqrt();
    let (mut y, mut step) = (0.0f64, 0u64);
    let mut pending = 0;
    while pending < radii.len() {
        let z: f64 = rng.sample(StandardNormal);
        let y1 = y - drift.gradient(y) * dt + sq * z;
        step += 1;
        while pending < radii.len() && y1.abs() >= radii[pending] {
            result.push((step, true));
            pending += 1;
        }
        if plan.bridge_correction && pending < radii.len() {
            let crossing =
                |r: f64| ((-2.0 * (r - y) * (r - y1) / dt).exp() + (-2.0 * (r + y) * (r + y1) / dt).exp()).min(1.0);
            if crossing(radii[pending]) > BRIDGE_FLOOR {
                let u: f64 = rng.random();
                while pending < radii.len() && u < crossing(radii[pending]) {
                    result.push((step, true));
                    pending += 1;
                }
            }
        }
        y = y1;
        while pending < radii.len() && step >= caps[pending] {
            result.push((step, false));
            pending += 1;
        }
    }
    result
}

/// Positions `y_t` of every path at the given times, indexed `[path][time]`.
pub fn simulate_positions<R: PathRunner>(
    msp: &MultiScalePotential,
    plan: &SimulationPlan,
    times: &[f64],
    runner: &R,
) -> Result<Vec<Vec<f64>>> {
    let cut = plan.prepare(msp)?;
    if times.is_empty() {
        return Err(argument("at least one checkpoint is required"));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(argument("checkpoints must be strictly increasing"));
        }
    }
    if !(times[0] > 0.0) {
        return Err(argument("checkpoints must be positive"));
    }
    let last = *times.last().unwrap();
    if last > plan.horizon {
        return Err(argument(format!("checkpoint {last} lies beyond the horizon {}", plan.horizon)));
    }
    let drift = Drift::new(&cut);
    let steps: Vec<u64> = times.iter().map(|&t| plan.steps(t).max(1)).collect();
    let dt = plan.dt;
    let sq = dt.sqrt();
    Ok(runner.map_paths(plan.n_paths, |i| {
        let mut rng = path_rng(plan.master_seed, i);
        let mut out = Vec::with_capacity(steps.len());
        let (mut y, mut step) = (0.0f64, 0u64);
        for &target in &steps {
            while step < target {
                let z: f64 = rng.sample(StandardNormal);
                y += -drift.gradient(y) * dt + sq * z;
                step += 1;
            }
            out.push(y);
        }
        out
    }))
}

/// `E[y_t²]` at a list of checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdSeries {
    pub checkpoints: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub count: u64,
}

pub fn simulate_msd<R: PathRunner>(
    msp: &MultiScalePotential,
    plan: &SimulationPlan,
    checkpoints: &[f64],
    runner: &R,
) -> Result<MsdSeries> {
    let paths = simulate_positions(msp, plan, checkpoints, runner)?;
    let mut mean = Vec::with_capacity(checkpoints.len());
    let mut std_error = Vec::with_capacity(checkpoints.len());
    for j in 0..checkpoints.len() {
        let m: Moments = paths.iter().map(|p| p[j] * p[j]).collect();
        mean.push(m.mean());
        std_error.push(m.std_error());
    }
    Ok(MsdSeries { checkpoints: checkpoints.to_vec(), mean, std_error, count: plan.n_paths })
}

/// Empirical `P(|y_t| ≥ h)` with Wilson intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub t: f64,
    pub h: Vec<f64>,
    pub exceedances: Vec<u64>,
    pub probability: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Bins with fewer than [`SPARSE_BIN`] exceedances, reported at 99.9%.
    pub sparse: Vec<bool>,
    pub count: u64,
}

pub fn estimate_tail<R: PathRunner>(
    msp: &MultiScalePotential,
    plan: &SimulationPlan,
    t: f64,
    h_grid: &[f64],
    runner: &R,
) -> Result<TailEstimate> {
    if h_grid.iter().any(|h| !(*h >= 0.0)) {
        return Err(argument("tail levels must be nonnegative"));
    }
    let cut = msp.truncated(plan.n_max)?;
    let reach = cut.truncation_box(TRUNCATION_TOLERANCE);
    if let Some(h) = h_grid.iter().find(|&&h| h > reach) {
        return Err(argument(format!("tail level {h} lies outside the simulation box {reach}")));
    }
    let paths = simulate_positions(msp, plan, &[t], runner)?;
    let mut h: Vec<f64> = h_grid.to_vec();
    h.sort_by(f64::total_cmp);
    let n = plan.n_paths;
    let mut est = TailEstimate {
        t,
        h: h.clone(),
        exceedances: Vec::new(),
        probability: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        sparse: Vec::new(),
        count: n,
    };
    for &level in &h {
        let k = paths.iter().filter(|p| p[0].abs() >= level).count() as u64;
        let sparse = k < SPARSE_BIN;
        let z = if sparse { stats::Z999 } else { stats::Z95 };
        let (lo, hi) = stats::wilson_interval(k, n, z);
        est.exceedances.push(k);
        est.probability.push(k as f64 / n as f64);
        est.lower.push(lo);
        est.upper.push(hi);
        est.sparse.push(sparse);
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{PeriodicPotential, ScaleSchedule};

    fn free() -> MultiScalePotential {
        MultiScalePotential::zero(ScaleSchedule::geometric(8).unwrap(), 0).unwrap()
    }

    #[test]
    fn free_exit_time_is_r_squared() {
        let plan = SimulationPlan::new(1e-3, 4000, 11, 1e3, 0);
        let s = sample_exit_times(&free(), &plan, &[1.0, 0.5], &Sequential).unwrap();
        assert_eq!(s[1].radius, 0.5);
        for e in &s {
            let target = e.radius * e.radius;
            assert!((e.mean - target).abs() < 4.0 * e.std_error + 0.01 * target, "{e:?}");
            assert_eq!(e.truncated, 0);
        }
    }

    #[test]
    fn streams_are_independent_of_order() {
        let plan = SimulationPlan::new(1e-2, 16, 3, 10.0, 0);
        let a = simulate_positions(&free(), &plan, &[1.0, 2.0], &Sequential).unwrap();
        let mut rng = path_rng(3, 5);
        let first: f64 = rng.sample(StandardNormal);
        assert_eq!(a[5][0].to_bits(), {
            let mut y = first * 0.1;
            for _ in 1..100 {
                let z: f64 = rng.sample(StandardNormal);
                y += 0.1 * z;
            }
            y.to_bits()
        });
    }

    #[test]
    fn dt_must_resolve_finest_period() {
        let sched = ScaleSchedule::geometric(8).unwrap();
        let v = MultiScalePotential::self_similar(PeriodicPotential::sine(1, 1.0), sched, 1).unwrap();
        let plan = SimulationPlan::new(0.02, 10, 1, 10.0, 1);
        assert!(simulate_msd(&v, &plan, &[1.0], &Sequential).is_err());
        let plan = SimulationPlan::new(0.01, 10, 1, 10.0, 1);
        assert!(simulate_msd(&v, &plan, &[1.0], &Sequential).is_ok());
        assert!(simulate_msd(&v, &plan, &[11.0], &Sequential).is_err());
    }

    #[test]
    fn tail_at_zero_is_one() {
        let plan = SimulationPlan::new(1e-2, 200, 9, 10.0, 0);
        let t = estimate_tail(&free(), &plan, 1.0, &[0.0, 1.0, 3.0], &Sequential).unwrap();
        assert_eq!(t.probability[0], 1.0);
        assert!(t.probability[1] >= t.probability[2]);
    }
}
