//! Laplace-transform and tail bounds for martingales with a two-rate bracket envelope.
//!
//! The envelope `(f1, f2, t0)` says the conditional bracket grows at rate at most
//! `f1` before `t0` and `f2` after. The reference process used throughout the
//! tests is the Gaussian martingale whose bracket meets the envelope exactly,
//! `M_t ~ N(0, f1 min(t, t0) + f2 (t − t0)^+)`.

use alloc::vec::Vec;
use core::f64::consts::E;
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{argument, Error, Result};
use crate::homogenization;
use crate::potential::{Harmonic, MultiScalePotential, TrigSeries};
use crate::quadrature::Neumaier;
use crate::sde::{path_rng, Drift, PathRunner, SimulationPlan};
use crate::stats::{self, Moments};

/// Bracket envelope `f(s) = f1` for `s < t0`, `f2` afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketEnvelope {
    pub f1: f64,
    pub f2: f64,
    pub t0: f64,
}

impl BracketEnvelope {
    pub fn new(f1: f64, f2: f64, t0: f64) -> Result<Self> {
        if !(f2 > 0.0 && f1 >= f2 && f1.is_finite()) {
            return Err(argument("envelope needs 0 < f2 <= f1"));
        }
        if !(t0 >= 0.0 && t0.is_finite()) {
            return Err(argument("envelope needs t0 >= 0"));
        }
        Ok(Self { f1, f2, t0 })
    }

    /// `f1 = f2` (or `t0 = 0`): the bracket is deterministic at a single rate.
    pub fn is_degenerate(&self) -> bool {
        self.f1 == self.f2 || self.t0 == 0.0
    }

    fn excess(&self) -> f64 {
        (self.f1 - self.f2) * self.t0
    }

    /// `∫_0^t f(s) ds`.
    pub fn bracket(&self, t: f64) -> f64 {
        self.f1 * t.min(self.t0) + self.f2 * (t - self.t0).max(0.0)
    }

    /// `(2e(f1 − f2)t0)^{−1/2}`, infinite for a degenerate envelope.
    pub fn lambda_limit(&self) -> f64 {
        if self.is_degenerate() {
            f64::INFINITY
        } else {
            (2.0 * E * self.excess()).powf(-0.5)
        }
    }

    /// `(2e(f1 − f2)t0)^{−1}`.
    pub fn nu_limit(&self) -> f64 {
        if self.is_degenerate() {
            f64::INFINITY
        } else {
            1.0 / (2.0 * E * self.excess())
        }
    }

    /// `g(λ) = 1 / (1 − λ²(f1 − f2) t0 e)`.
    pub fn g(&self, lambda: f64) -> f64 {
        1.0 / (1.0 - lambda * lambda * self.excess() * E)
    }
}

/// `e^{3(1−1/g)} exp(g λ² f2 t / 2)` for `|λ| < (2e(f1−f2)t0)^{−1/2}`.
pub fn laplace_bound(env: &BracketEnvelope, lambda: f64, t: f64) -> Result<f64> {
    let limit = env.lambda_limit();
    if !(lambda.abs() < limit) {
        return Err(Error::Domain { what: "lambda", value: lambda, limit });
    }
    if !(t >= 0.0) {
        return Err(argument("time must be nonnegative"));
    }
    let g = env.g(lambda);
    debug_assert!((1.0..=2.0).contains(&g));
    Ok((3.0 * (1.0 - 1.0 / g)).exp() * (0.5 * g * lambda * lambda * env.f2 * t).exp())
}

/// `E[e^{λ M_t}]` for the Gaussian martingale saturating the envelope.
pub fn saturating_laplace(env: &BracketEnvelope, lambda: f64, t: f64) -> f64 {
    (0.5 * lambda * lambda * env.bracket(t)).exp()
}

/// `exp(ν f2 t) exp(ν t0 (f1−f2)) / ((f1−f2) ν t0)²` for `0 < ν < (2e(f1−f2)t0)^{−1}`.
pub fn bracket_exp_bound(env: &BracketEnvelope, nu: f64, t: f64) -> Result<f64> {
    if env.is_degenerate() {
        return Err(argument("the bracket bound is undefined when f1 = f2 or t0 = 0"));
    }
    let limit = env.nu_limit();
    if !(nu > 0.0 && nu < limit) {
        return Err(Error::Domain { what: "nu", value: nu, limit });
    }
    let x = env.excess() * nu;
    Ok((nu * env.f2 * t).exp() * x.exp() / (x * x))
}

/// `exp(ν ⟨M⟩_t)` for the saturating martingale, whose bracket is deterministic.
pub fn saturating_bracket_exp(env: &BracketEnvelope, nu: f64, t: f64) -> f64 {
    (nu * env.bracket(t)).exp()
}

/// `C1 = (2e(f1−f2)t0)^{1/2} / f2`.
pub fn tail_constant(env: &BracketEnvelope) -> f64 {
    (2.0 * E * env.excess()).sqrt() / env.f2
}

/// `e^{1.5 r²} exp(−(1 − r²) x² / (2 f2 t))` with `r = C1 x / t < 1`.
pub fn tail_bound(env: &BracketEnvelope, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && x >= 0.0) {
        return Err(argument("tail bound needs t > 0 and x >= 0"));
    }
    let r = tail_constant(env) * x / t;
    if !(r < 1.0) {
        return Err(Error::Domain { what: "r", value: r, limit: 1.0 });
    }
    let r2 = r * r;
    Ok((1.5 * r2).exp() * (-(1.0 - r2) * x * x / (2.0 * env.f2 * t)).exp())
}

/// `P(M_t ≥ x)` for the saturating martingale.
pub fn saturating_tail(env: &BracketEnvelope, x: f64, t: f64) -> f64 {
    stats::normal_sf(x / env.bracket(t).sqrt())
}

/// Both sides of `Σ_{m ≤ [μ]} ([μ]−m)^m y^m / m! ≤ e^{y[μ]} / y²` for `−1/e < y < 0`.
///
/// The alternating sum cancels catastrophically for large `[μ]`, so the left side
/// comes from the recurrence `I_n = Σ_{j=1}^{n} y^{j−1}/(j−1)! · I_{n−j}`, `I_0 = 1`
/// (from the generating function `1 / (1 − z e^{yz})`), with compensated sums.
pub fn lemma_series(y: f64, mu: f64) -> Result<(f64, f64)> {
    if !(y > -1.0 / E && y < 0.0) {
        return Err(Error::Domain { what: "y", value: y, limit: if y >= 0.0 { 0.0 } else { -1.0 / E } });
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(argument("mu must be finite and nonnegative"));
    }
    let n = mu.floor() as usize;
    // c[j] = y^j / j!
    let mut c = Vec::with_capacity(n + 1);
    c.push(1.0);
    for j in 1..=n {
        let prev: f64 = c[j - 1];
        c.push(prev * y / j as f64);
    }
    let mut series = Vec::with_capacity(n + 1);
    series.push(1.0);
    for k in 1..=n {
        let mut acc = Neumaier::default();
        for j in 1..=k {
            acc.add(c[j - 1] * series[k - j]);
        }
        series.push(acc.value());
    }
    let nf = n as f64;
    Ok((series[n], (y * nf).exp() / (y * y)))
}

/// Direct evaluation of the left side, only trustworthy for small `[μ]`.
pub fn lemma_series_direct(y: f64, mu: f64) -> f64 {
    let n = mu.floor() as usize;
    let mut acc = Neumaier::default();
    let mut fact = 1.0;
    for m in 0..=n {
        if m > 0 {
            fact *= m as f64;
        }
        acc.add(((n - m) as f64).powi(m as i32) * y.powi(m as i32) / fact);
    }
    acc.value()
}

/// Verdict for one `λ` of the Monte Carlo check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Upper 95% limit of the estimate is below the bound.
    Holds,
    /// The confidence interval straddles the bound.
    Inconclusive,
    /// Lower 95% limit exceeds the bound.
    Violated,
    /// `λ` lies outside the bound's domain.
    OutOfDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceCheck {
    pub lambda: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

/// Envelope fitted on a simulated `M_t = F_W(y_t)` and the resulting checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub envelope: BracketEnvelope,
    pub t: f64,
    /// Mean bracket `E⟨M⟩` at the recording times.
    pub times: Vec<f64>,
    pub mean_bracket: Vec<f64>,
    pub checks: Vec<LaplaceCheck>,
}

/// `V_0^{n_max}` as a series on its full period `R_{n_max}`.
fn unit_period_series(msp: &MultiScalePotential) -> Result<(TrigSeries, f64)> {
    let top = msp.n_max();
    let length = msp.radius(top);
    let mut harmonics = Vec::new();
    let mut constant = 0.0;
    for k in 0..=top {
        if let Some(u) = msp.scale(k) {
            let mult = (length / msp.radius(k)) as u32;
            constant += u.mean();
            for h in u.harmonics() {
                harmonics.push(Harmonic::new(h.frequency * mult, h.cos, h.sin));
            }
        }
    }
    Ok((TrigSeries::new(constant, harmonics)?, length))
}

/// Simulates `M_t = F_W(y_t)` for `W = V_0^{n_max}` (one or two scales) and checks
/// `E[e^{λ M_t}]` against [`laplace_bound`] with `f1 = sup F'²`, `f2 = D(W)` and
/// the smallest `t0` whose envelope dominates the measured mean bracket.
/// An empty `lambdas` checks `±{1/4, 1/2, 3/4, 19/20}` of the domain limit
/// (`±{1/2, 1, 3/2, 2}` when the fitted envelope is degenerate).
pub fn verify_on_sde_martingale<R: PathRunner>(
    msp: &MultiScalePotential,
    plan: &SimulationPlan,
    lambdas: &[f64],
    runner: &R,
) -> Result<MartingaleReport> {
    if msp.n_max() > 1 {
        return Err(argument("the martingale check takes one or two scales"));
    }
    let cut = plan.prepare(msp)?;
    let (w, length) = unit_period_series(&cut)?;
    let f = homogenization::corrector(&w, length)?;
    let (lo, hi) = w.extremes(crate::potential::MIN_GRID_POINTS);
    let mean_exp = f.total_mass() / length;
    let f1 = ((2.0 * hi).exp() / mean_exp).powi(2).max(((2.0 * lo).exp() / mean_exp).powi(2));
    let f2 = homogenization::effective_diffusivity(&w).value;

    let t = plan.horizon;
    let steps = (t / plan.dt).round() as u64;
    let records = 16u64.min(steps);
    let every = steps / records;
    let drift = Drift::new(&cut);
    let dt = plan.dt;
    let sq = dt.sqrt();
    let paths = runner.map_paths(plan.n_paths, |i| {
        let mut rng = path_rng(plan.master_seed, i);
        let mut y = 0.0f64;
        let mut bracket = Neumaier::default();
        let mut marks = Vec::with_capacity(records as usize);
        for s in 1..=steps {
            let d = f.derivative(y);
            bracket.add(d * d * dt);
            let z: f64 = rng.sample(StandardNormal);
            y += -drift.gradient(y) * dt + sq * z;
            if s % every == 0 && marks.len() < records as usize {
                marks.push(bracket.value());
            }
        }
        (f.value(y), marks)
    });
    let times: Vec<f64> = (1..=records).map(|k| (k * every) as f64 * dt).collect();
    let mean_bracket: Vec<f64> =
        (0..records as usize).map(|k| paths.iter().map(|p| p.1[k]).collect::<Moments>().mean()).collect();
    let t0 = if f1 > f2 {
        times.iter().zip(&mean_bracket).map(|(s, b)| ((b - f2 * s) / (f1 - f2)).min(*s)).fold(0.0, f64::max)
    } else {
        0.0
    };
    let envelope = BracketEnvelope::new(f1, f2.min(f1), t0)?;
    let grid: Vec<f64> = if lambdas.is_empty() {
        let limit = envelope.lambda_limit();
        let scale = if limit.is_finite() { limit } else { 2.0 };
        let fractions: [f64; 4] = if limit.is_finite() { [0.25, 0.5, 0.75, 0.95] } else { [0.25, 0.5, 0.75, 1.0] };
        fractions.iter().rev().map(|f| -f * scale).chain(fractions.iter().map(|f| f * scale)).collect()
    } else {
        lambdas.to_vec()
    };
    let checks = grid
        .iter()
        .map(|&lambda| {
            let m: Moments = paths.iter().map(|p| (lambda * p.0).exp()).collect();
            let (empirical, std_error) = (m.mean(), m.std_error());
            match laplace_bound(&envelope, lambda, t) {
                Ok(bound) => {
                    let verdict = if empirical + stats::Z95 * std_error <= bound {
                        Verdict::Holds
                    } else if empirical - stats::Z95 * std_error > bound {
                        Verdict::Violated
                    } else {
                        Verdict::Inconclusive
                    };
                    LaplaceCheck { lambda, empirical, std_error, bound, verdict }
                }
                Err(_) => LaplaceCheck { lambda, empirical, std_error, bound: f64::NAN, verdict: Verdict::OutOfDomain },
            }
        })
        .collect();
    Ok(MartingaleReport { envelope, t, times, mean_bracket, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_envelope_is_gaussian() {
        let env = BracketEnvelope::new(1.5, 1.5, 2.0).unwrap();
        for lambda in [0.1, -0.7, 3.0] {
            let b = laplace_bound(&env, lambda, 4.0).unwrap();
            assert!((b / saturating_laplace(&env, lambda, 4.0) - 1.0).abs() < 1e-12);
        }
        assert!(bracket_exp_bound(&env, 0.1, 1.0).is_err());
    }

    #[test]
    fn bound_dominates_saturating_martingale() {
        let env = BracketEnvelope::new(2.0, 1.0, 1.0).unwrap();
        let g = env.g(0.3);
        assert!((g - 1.0 / (1.0 - 0.09 * E)).abs() < 1e-15);
        assert!(laplace_bound(&env, 0.3, 10.0).unwrap() >= saturating_laplace(&env, 0.3, 10.0));
        assert!((laplace_bound(&env, 1e-9, 10.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(laplace_bound(&env, 0.5, 10.0).is_err());
    }

    #[test]
    fn bracket_bound_arithmetic() {
        let env = BracketEnvelope::new(2.0, 1.0, 1.0).unwrap();
        let v = bracket_exp_bound(&env, 0.1, 10.0).unwrap();
        assert!((v - 1.1f64.exp() * 100.0).abs() < 1e-10);
        assert!(bracket_exp_bound(&env, 0.19, 10.0).is_err());
        assert!(bracket_exp_bound(&env, 1e-6, 10.0).unwrap() > 1e10);
    }

    #[test]
    fn tail_bound_basics() {
        let env = BracketEnvelope::new(2.0, 1.0, 1.0).unwrap();
        assert_eq!(tail_bound(&env, 0.0, 5.0).unwrap(), 1.0);
        assert!(tail_bound(&env, 10.0, 5.0).is_err());
        let x = 2.0;
        assert!(tail_bound(&env, x, 10.0).unwrap() >= saturating_tail(&env, x, 10.0));
    }

    #[test]
    fn lemma_small_cases() {
        let (lhs, rhs) = lemma_series(-0.2, 5.0).unwrap();
        assert!((lhs - 0.3694).abs() < 1e-12, "{lhs}");
        assert!((rhs - (-1.0f64).exp() / 0.04).abs() < 1e-12);
        let (lhs, rhs) = lemma_series(-0.3, 0.5).unwrap();
        assert_eq!(lhs, 1.0);
        assert!(rhs > 1.0);
        assert!(lemma_series(-0.4, 3.0).is_err());
        assert!(lemma_series(0.1, 3.0).is_err());
        for mu in 0..12 {
            let (lhs, _) = lemma_series(-0.05, mu as f64).unwrap();
            assert!((lhs - lemma_series_direct(-0.05, mu as f64)).abs() < 1e-14);
        }
    }
}
