//! Topological pressure of the torus maps `x ↦ Rx` from Birkhoff sums.
//!
//! Points of the torus are `u64` phases (`x = phase / 2^64`), so `R^k x mod 1`
//! is an exact wrapping multiplication however large `R^k` gets.

use alloc::vec::Vec;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Result};
use crate::potential::TrigSeries;
use crate::quadrature::{GaussLegendre, DEFAULT_ORDER};
use crate::stats;

/// Elementary (single-harmonic) evaluations allowed per deterministic estimate.
pub const EVALUATION_BUDGET: f64 = 1e8;

/// Quadrature panels per oscillation of the fastest Birkhoff term.
pub const PANELS_PER_OSCILLATION: f64 = 16.0;

/// Sample count of the Monte Carlo fallback.
pub const MC_SAMPLES: usize = 1 << 20;

/// Default threshold on the symmetrized pressure for calling a potential normal.
pub const TOL_INDEX: f64 = 0.02;

const MC_SEED: u64 = 0x005e_ed0f_b12c_40ff;

#[inline]
fn to_phase(x: f64) -> u64 {
    (x * 18446744073709551616.0) as u64
}

/// `Σ_{k<n} U(R^k x)` at phase `p`.
#[inline]
fn birkhoff(u: &TrigSeries, ratio: u64, n: usize, mut p: u64) -> f64 {
    let mut acc = 0.0;
    for _ in 0..n {
        acc += u.value_at_phase(p);
        p = p.wrapping_mul(ratio);
    }
    acc
}

fn harmonic_count(u: &TrigSeries) -> f64 {
    u.harmonics().iter().filter(|h| h.cos != 0.0 || h.sin != 0.0).count().max(1) as f64
}

/// Highest frequency of the Birkhoff sum, `k_max R^{n−1}`, as a float.
fn top_frequency(u: &TrigSeries, ratio: u64, n: usize) -> f64 {
    u.max_frequency().max(1) as f64 * (ratio as f64).powi(n as i32 - 1)
}

/// One value `p_n = (1/n) ln ∫ exp(Σ_{k<n} U(R^k x)) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressurePoint {
    pub n: usize,
    pub value: f64,
    /// Zero for quadrature, the delta-method error for Monte Carlo.
    pub std_error: f64,
    pub monte_carlo: bool,
}

fn check(ratio: u64, n: usize) -> Result<()> {
    if ratio < 2 {
        return Err(argument("pressure needs R >= 2"));
    }
    if n == 0 {
        return Err(argument("Birkhoff length n must be >= 1"));
    }
    Ok(())
}

fn quadrature_panels(u: &TrigSeries, ratio: u64, n: usize) -> Option<usize> {
    let panels = (PANELS_PER_OSCILLATION * top_frequency(u, ratio, n)).ceil();
    let cost = panels * DEFAULT_ORDER as f64 * n as f64 * harmonic_count(u);
    (cost <= EVALUATION_BUDGET).then_some(panels as usize)
}

pub fn birkhoff_pressure(u: &TrigSeries, ratio: u64, n: usize) -> Result<PressurePoint> {
    check(ratio, n)?;
    if u.is_constant() {
        return Ok(PressurePoint { n, value: u.mean(), std_error: 0.0, monte_carlo: false });
    }
    // the constant term leaves the integral unchanged up to the exact shift n·c
    let centered = u.with_constant(0.0);
    let nf = n as f64;
    match quadrature_panels(u, ratio, n) {
        Some(panels) => {
            let rule = GaussLegendre::new(DEFAULT_ORDER);
            let ln = rule.composite_log_exp(0.0, 1.0, panels, |x| birkhoff(&centered, ratio, n, to_phase(x)));
            Ok(PressurePoint { n, value: ln / nf + u.mean(), std_error: 0.0, monte_carlo: false })
        }
        None => {
            let (ln, se) = monte_carlo_log_integral(&centered, ratio, n, 1.0);
            Ok(PressurePoint { n, value: ln / nf + u.mean(), std_error: se / nf, monte_carlo: true })
        }
    }
}

/// `ln mean exp(sign · S_n)` over fixed uniform phases, with its delta-method error.
fn monte_carlo_log_integral(u: &TrigSeries, ratio: u64, n: usize, sign: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED);
    let values: Vec<f64> = (0..MC_SAMPLES).map(|_| sign * birkhoff(u, ratio, n, rng.random())).collect();
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m: stats::Moments = values.iter().map(|v| (v - peak).exp()).collect();
    let mean = m.mean();
    (mean.ln() + peak, m.std_error() / mean)
}

/// `p_n` for `n = 1..=n_max` with the fit `p_n ≈ P + a/n` over the three largest `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureEstimate {
    pub ratio: u64,
    pub points: Vec<PressurePoint>,
    pub extrapolated: f64,
    pub residual: f64,
}

pub fn pressure_series(u: &TrigSeries, ratio: u64, n_max: usize) -> Result<PressureEstimate> {
    check(ratio, n_max)?;
    let points = (1..=n_max).map(|n| birkhoff_pressure(u, ratio, n)).collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let errors: Vec<f64> = points.iter().map(|p| p.std_error).collect();
    let (extrapolated, residual) = extrapolate(&values, &errors);
    Ok(PressureEstimate { ratio, points, extrapolated, residual })
}

/// Fits `v_n = P + a/n` on the last three entries (index `i` holds `n = i + 1`).
fn extrapolate(values: &[f64], errors: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 1 {
        return (values[0], errors[0]);
    }
    let start = m.saturating_sub(3);
    let x: Vec<f64> = (start..m).map(|i| 1.0 / (i + 1) as f64).collect();
    let y = &values[start..m];
    let (p, a, _) = stats::linear_fit(&x, y);
    let rss: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - p - a * xi).powi(2)).sum();
    let fit = if x.len() > 2 { (rss / (x.len() - 2) as f64).sqrt() } else { 0.0 };
    (p, fit.max(errors[m - 1]))
}

/// Lower bound on `d_n = ‖(1/n) Σ_{k<n} (U(R^k x) − ∫U)‖_∞` from a search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupDefect {
    pub n: usize,
    pub value: f64,
    /// The maximizer, as a torus phase.
    pub argmax: u64,
    /// Starts came from random phases because the full grid was over budget.
    pub random_starts: bool,
}

/// Searched sup of the centered Birkhoff average. Always a lower bound of the true sup.
pub fn sup_defect(u: &TrigSeries, ratio: u64, n: usize) -> Result<SupDefect> {
    check(ratio, n)?;
    let centered = u.with_constant(0.0);
    if centered.is_constant() {
        return Ok(SupDefect { n, value: 0.0, argmax: 0, random_starts: false });
    }
    let nf = n as f64;
    let h = harmonic_count(u);
    let f = |p: u64| (birkhoff(&centered, ratio, n, p) / nf).abs();
    let top = top_frequency(u, ratio, n);
    let grid = (PANELS_PER_OSCILLATION * top).ceil();
    let per_eval = nf * h;
    let random_starts = grid * per_eval > EVALUATION_BUDGET / 2.0;
    const KEEP: usize = 16;
    let mut best: Vec<(f64, u64)> = Vec::with_capacity(KEEP + 1);
    let mut offer = |v: f64, p: u64| {
        if best.len() < KEEP || v > best[best.len() - 1].0 {
            let pos = best.partition_point(|b| b.0 >= v);
            best.insert(pos, (v, p));
            best.truncate(KEEP);
        }
    };
    if random_starts {
        let starts = ((EVALUATION_BUDGET / 4.0) / per_eval) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED ^ ratio ^ ((n as u64) << 32));
        for _ in 0..starts {
            let p: u64 = rng.random();
            offer(f(p), p);
        }
    } else {
        let g = grid as u64;
        let step = u64::MAX / g;
        for i in 0..g {
            let p = i.wrapping_mul(step);
            offer(f(p), p);
        }
    }
    // coarse-to-fine pattern search around each kept start
    let finest = (18446744073709551616.0 / (top * 64.0)).max(1.0);
    let mut winner = (0.0f64, 0u64);
    for &(v0, p0) in &best {
        let (mut v, mut p) = (v0, p0);
        let mut delta = 18446744073709551616.0 / 64.0;
        while delta >= finest {
            let d = delta as u64;
            let center = p;
            for j in -32i64..=32 {
                let q = center.wrapping_add((j as u64).wrapping_mul(d));
                let fq = f(q);
                if fq > v {
                    v = fq;
                    p = q;
                }
            }
            delta /= 8.0;
        }
        if v > winner.0 {
            winner = (v, p);
        }
    }
    Ok(SupDefect { n, value: winner.0, argmax: winner.1, random_starts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Normal,
    Anomalous,
    Inconclusive,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Normal => "Normal",
            Classification::Anomalous => "Anomalous",
            Classification::Inconclusive => "Inconclusive",
        }
    }
}

/// Symmetrized pressure `P_R(2U) + P_R(−2U)` and the normality diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub ratio: u64,
    /// `p_n(2U) + p_n(−2U)` for `n = 1..=n_max`.
    pub index_series: Vec<f64>,
    pub index_errors: Vec<f64>,
    /// The raw `P + a/n` extrapolation, which noise can push slightly below zero.
    pub extrapolated: f64,
    /// `max(extrapolated, 0)`, since the symmetrized pressure is nonnegative.
    pub index: f64,
    pub residual: f64,
    pub defects: Vec<SupDefect>,
    /// Log-log slope of `d_n` over the upper half of the `n` range.
    pub defect_slope: f64,
    pub classification: Classification,
}

/// `(p_n(2U) + p_n(−2U), error)` with both signs on the same nodes or samples.
fn symmetrized(u: &TrigSeries, ratio: u64, n: usize) -> (f64, f64) {
    let centered = u.with_constant(0.0);
    if centered.is_constant() {
        return (0.0, 0.0);
    }
    let doubled = centered.scaled(2.0);
    let nf = n as f64;
    match quadrature_panels(&doubled, ratio, n) {
        Some(panels) => {
            let rule = GaussLegendre::new(DEFAULT_ORDER);
            let plus = rule.composite_log_exp(0.0, 1.0, panels, |x| birkhoff(&doubled, ratio, n, to_phase(x)));
            let minus = rule.composite_log_exp(0.0, 1.0, panels, |x| -birkhoff(&doubled, ratio, n, to_phase(x)));
            ((plus + minus) / nf, 0.0)
        }
        None => {
            let (plus, se_p) = monte_carlo_log_integral(&doubled, ratio, n, 1.0);
            let (minus, se_m) = monte_carlo_log_integral(&doubled, ratio, n, -1.0);
            ((plus + minus) / nf, (se_p * se_p + se_m * se_m).sqrt() / nf)
        }
    }
}

pub fn anomaly_index(u: &TrigSeries, ratio: u64, n_max: usize) -> Result<AnomalyReport> {
    anomaly_index_with(u, ratio, n_max, TOL_INDEX)
}

pub fn anomaly_index_with(u: &TrigSeries, ratio: u64, n_max: usize, tol_index: f64) -> Result<AnomalyReport> {
    check(ratio, n_max)?;
    let mut index_series = Vec::with_capacity(n_max);
    let mut index_errors = Vec::with_capacity(n_max);
    let mut defects = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let (v, e) = symmetrized(u, ratio, n);
        index_series.push(v);
        index_errors.push(e);
        defects.push(sup_defect(u, ratio, n)?);
    }
    let (extrapolated, residual) = extrapolate(&index_series, &index_errors);
    let index = extrapolated.max(0.0);
    let half = n_max / 2;
    let defect_slope = if n_max - half >= 2 && defects[half..].iter().all(|d| d.value > 0.0) {
        let x: Vec<f64> = defects[half..].iter().map(|d| (d.n as f64).ln()).collect();
        let y: Vec<f64> = defects[half..].iter().map(|d| d.value.ln()).collect();
        stats::linear_fit(&x, &y).1
    } else if defects.iter().all(|d| d.value == 0.0) {
        f64::NEG_INFINITY
    } else {
        f64::NAN
    };
    let classification = if index < tol_index && defect_slope < -0.5 {
        Classification::Normal
    } else if index > tol_index && index > 2.0 * residual {
        Classification::Anomalous
    } else {
        Classification::Inconclusive
    };
    Ok(AnomalyReport {
        ratio,
        index_series,
        index_errors,
        extrapolated,
        index,
        residual,
        defects,
        defect_slope,
        classification,
    })
}
