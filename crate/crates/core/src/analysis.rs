//! Effective-scale counting, exit-time and MSD predictions, and exponent fits.
//!
//! Constants that the theory leaves unquantified (the `C_i`, window constants)
//! are plain arguments here; only `C_τ` and the MSD constants 24 and 500 are
//! fixed.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{argument, Error, Result};
use crate::homogenization::{self, Diffusivity};
use crate::potential::{ModelConstants, MultiScalePotential, ScaleSchedule, MIN_GRID_POINTS};
use crate::stats;

/// Lower MSD constant `1/24`.
pub const MSD_LOWER: f64 = 1.0 / 24.0;
/// Upper MSD constant `500`.
pub const MSD_UPPER: f64 = 500.0;
/// The `10^4` in the definition of `n_per`.
pub const PERTURBATION_MARGIN: f64 = 1e4;

/// `n_ef(r) = sup{n ≥ 0 : R_n ≤ r}`.
pub fn effective_scales(schedule: &ScaleSchedule, r: f64) -> Result<usize> {
    if !(r >= 1.0) {
        return Err(argument("effective scale count needs r >= 1"));
    }
    Ok(schedule.radii().iter().take_while(|&&rk| rk as f64 <= r).count() - 1)
}

/// `n_flu(t) = sup{n ≥ 0 : R_n² ≤ t}`.
pub fn fluctuating_scales(schedule: &ScaleSchedule, t: f64) -> Result<usize> {
    if !(t >= 1.0) {
        return Err(argument("fluctuating scale count needs t >= 1"));
    }
    Ok(schedule.radii().iter().take_while(|&&rk| (rk as f64) * (rk as f64) <= t).count() - 1)
}

/// The three scale counts attached to an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleCount {
    pub n_ef: usize,
    pub n_flu: usize,
    pub n_per: usize,
}

/// `D(V_0^n)`; for a finite (non-cycled) model the scales past `n_max` vanish,
/// so `n` is clamped to `n_max`.
pub fn diffusivity_upto(msp: &MultiScalePotential, n: usize) -> Result<Diffusivity> {
    if n > msp.n_max() {
        if msp.has_tail() {
            return Err(argument(format!("D(V_0^{n}) needs n_max >= {n}")));
        }
        return homogenization::multiscale_diffusivity(msp, msp.n_max());
    }
    homogenization::multiscale_diffusivity(msp, n)
}

fn rho_min(msp: &MultiScalePotential) -> f64 {
    msp.schedule().rho_min_upto(msp.n_max() + 1) as f64
}

/// `C_τ = 4 e^{6(K0 + K1/(ρ_min − 1))}`.
pub fn tau_constant(c: &ModelConstants, rho_min: f64) -> f64 {
    4.0 * (6.0 * (c.k0 + c.k1 / (rho_min - 1.0))).exp()
}

/// `r² / D(V_0^{n_ef(r)})` and the factor `C_τ` bracketing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitPrediction {
    pub prediction: f64,
    pub factor: f64,
    pub n_ef: usize,
    pub diffusivity: f64,
}

impl ExitPrediction {
    pub fn contains(&self, mean: f64) -> bool {
        mean >= self.prediction / self.factor && mean <= self.prediction * self.factor
    }
}

pub fn predict_exit(msp: &MultiScalePotential, r: f64) -> Result<ExitPrediction> {
    let n_ef = effective_scales(msp.schedule(), r)?;
    let d = diffusivity_upto(msp, n_ef)?.value;
    let c = msp.model_constants(MIN_GRID_POINTS)?;
    Ok(ExitPrediction { prediction: r * r / d, factor: tau_constant(&c, rho_min(msp)), n_ef, diffusivity: d })
}

/// Default `C1 = 6 (K0 + K1)` for [`exponent_bounds_nu1`]; a heuristic.
pub fn default_c1(c: &ModelConstants) -> f64 {
    6.0 * (c.k0 + c.k1)
}

/// Bracket on `ν₁`:
/// `−ln λ_max/ln ρ_max − C1/(ρ_min ln ρ_max) ≤ ν₁ ≤ −ln λ_min/ln ρ_min + C1/(ρ_min ln ρ_min)`.
pub fn exponent_bounds_nu1(c: &ModelConstants, schedule: &ScaleSchedule, c1: Option<f64>) -> (f64, f64) {
    let c1 = c1.unwrap_or_else(|| default_c1(c));
    let (lo_rho, hi_rho) = (schedule.rho_min() as f64, schedule.rho_max() as f64);
    let lower = -c.lambda_max.ln() / hi_rho.ln() - c1 / (lo_rho * hi_rho.ln());
    let upper = -c.lambda_min.ln() / lo_rho.ln() + c1 / (lo_rho * lo_rho.ln());
    (lower, upper)
}

/// Which power law the ordinates follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// `E[τ(0,r)] = r^{2+ν₁}`.
    ExitTime,
    /// `E[y_t²] = t^{1−ν₂/2}`.
    Msd,
}

/// Pointwise exponents and the log-log regression slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub kind: FitKind,
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub pointwise: Vec<f64>,
    /// Delta-method standard errors, zero when none were supplied.
    pub pointwise_se: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
}

impl ExponentFit {
    /// Ordinate reconstructed from the pointwise exponent at index `i`.
    pub fn invert(&self, i: usize) -> f64 {
        let x = self.abscissae[i];
        match self.kind {
            FitKind::ExitTime => x.powf(2.0 + self.pointwise[i]),
            FitKind::Msd => x.powf(1.0 - self.pointwise[i] / 2.0),
        }
    }

    /// Exponent implied by the regression slope.
    pub fn slope_exponent(&self) -> f64 {
        match self.kind {
            FitKind::ExitTime => self.slope - 2.0,
            FitKind::Msd => 2.0 * (1.0 - self.slope),
        }
    }
}

pub fn fit_exponents(
    kind: FitKind,
    abscissae: &[f64],
    ordinates: &[f64],
    std_errors: Option<&[f64]>,
) -> Result<ExponentFit> {
    if abscissae.len() != ordinates.len() || abscissae.is_empty() {
        return Err(argument("abscissae and ordinates must be nonempty and of equal length"));
    }
    if std_errors.is_some_and(|s| s.len() != ordinates.len()) {
        return Err(argument("standard errors must match the ordinates"));
    }
    if ordinates.iter().any(|y| !(*y > 0.0)) {
        return Err(argument("ordinates must be positive"));
    }
    if abscissae.iter().any(|x| !(*x > 1.0)) {
        return Err(argument("abscissae must exceed 1"));
    }
    let lx: Vec<f64> = abscissae.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ordinates.iter().map(|y| y.ln()).collect();
    let scale = match kind {
        FitKind::ExitTime => 1.0,
        FitKind::Msd => 2.0,
    };
    let mut pointwise = Vec::with_capacity(lx.len());
    let mut pointwise_se = Vec::with_capacity(lx.len());
    for i in 0..lx.len() {
        let ratio = ly[i] / lx[i];
        pointwise.push(match kind {
            FitKind::ExitTime => ratio - 2.0,
            FitKind::Msd => 2.0 * (1.0 - ratio),
        });
        let se = std_errors.map_or(0.0, |s| s[i] / ordinates[i] / lx[i] * scale);
        pointwise_se.push(se);
    }
    let (slope, slope_se) = if lx.len() >= 2 {
        let (_, b, se) = stats::linear_fit(&lx, &ly);
        (b, se)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ExponentFit {
        kind,
        abscissae: abscissae.to_vec(),
        ordinates: ordinates.to_vec(),
        pointwise,
        pointwise_se,
        slope,
        slope_se,
    })
}

/// Two-sided MSD envelope at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdEnvelope {
    pub lower: f64,
    pub upper: f64,
    pub counts: ScaleCount,
    pub diffusivity: f64,
    /// No `n ≤ n_flu` met the `n_per` condition; `n_per = n_flu` was used.
    pub degenerate: bool,
}

impl MsdEnvelope {
    pub fn contains(&self, msd: f64) -> bool {
        msd >= self.lower && msd <= self.upper
    }
}

pub fn msd_envelope(msp: &MultiScalePotential, t: f64) -> Result<MsdEnvelope> {
    let r1 = msp.schedule().radius(1).ok_or_else(|| argument("schedule has no R_1"))? as f64;
    if !(t >= r1 * r1) {
        return Err(Error::Domain { what: "t", value: t, limit: r1 * r1 });
    }
    let n_flu = fluctuating_scales(msp.schedule(), t)?;
    let n_ef = effective_scales(msp.schedule(), t.sqrt())?;
    let d = diffusivity_upto(msp, n_flu)?.value;
    let k0 = msp.model_constants(MIN_GRID_POINTS)?.k0;
    let mut n_per = None;
    for n in 0..=n_flu {
        let r = msp.radius(n_flu - n);
        if r * r * (14.0 * n as f64 * k0).exp() * PERTURBATION_MARGIN <= t * d {
            n_per = Some(n);
            break;
        }
    }
    let degenerate = n_per.is_none();
    let n_per = n_per.unwrap_or(n_flu);
    let spread = (8.0 * n_per as f64 * k0).exp();
    Ok(MsdEnvelope {
        lower: MSD_LOWER / spread * d * t,
        upper: MSD_UPPER * spread * d * t,
        counts: ScaleCount { n_ef, n_flu, n_per },
        diffusivity: d,
        degenerate,
    })
}

/// `ν_ef(t) = ln(1/λ_ef) / ln ρ_ef` with `ρ_ef^{n} = R_n`, `λ_ef^{n+1} = D(V_0^n)`, `n = n_flu(t)`.
pub fn predict_nu_ef(msp: &MultiScalePotential, t: f64) -> Result<f64> {
    let n = fluctuating_scales(msp.schedule(), t)?;
    if n == 0 {
        return Err(argument("no scale is homogenized yet (n_ef = 0); nu_ef is undefined"));
    }
    let d = diffusivity_upto(msp, n)?.value;
    let rho_ef = msp.radius(n).ln() / n as f64;
    let lambda_ef = d.ln() / (n + 1) as f64;
    Ok(-lambda_ef / rho_ef)
}

/// The three walk dimensions from exit times, MSD and tails.
pub fn walk_dimensions(lambda: f64, rho: f64) -> Result<(f64, f64, f64)> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Domain { what: "lambda", value: lambda, limit: 1.0 });
    }
    if !(rho >= 2.0) {
        return Err(Error::Domain { what: "rho", value: rho, limit: 2.0 });
    }
    let (ll, lr) = (lambda.ln(), rho.ln());
    let d1 = 2.0 / (1.0 + ll / (2.0 * lr));
    let d2 = 2.0 - ll / lr;
    let d3 = 1.0 + 1.0 / (1.0 + ll / (lr - 0.5 * ll));
    Ok((d1, d2, d3))
}

/// Constants of the tail window `t/h ≥ C5`, `h²/t ≥ C3 (t/h)^{ln λ/(2 ln ρ) + C4/(ln ρ)²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailWindow {
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl Default for TailWindow {
    fn default() -> Self {
        Self { c3: 1.0, c4: 0.0, c5: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPrediction {
    /// Upper bound on `ln P[|y_t| ≥ h]`.
    pub value: f64,
    pub nu3: f64,
    /// `sup{n : ρ^n ≤ t/h}`.
    pub n_ef: usize,
    pub in_window: bool,
}

/// `−C6 (h²/t) (t/h)^{ν₃}` with `ν₃ = −ln λ / ln ρ`.
pub fn tail_prediction(lambda: f64, rho: f64, t: f64, h: f64, c6: f64, window: &TailWindow) -> Result<TailPrediction> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Domain { what: "lambda", value: lambda, limit: 1.0 });
    }
    if !(rho >= 2.0) {
        return Err(Error::Domain { what: "rho", value: rho, limit: 2.0 });
    }
    if !(t > 0.0 && h > 0.0) {
        return Err(argument("tail prediction needs t > 0 and h > 0"));
    }
    let (ll, lr) = (lambda.ln(), rho.ln());
    let nu3 = -ll / lr;
    let ratio = t / h;
    let n_ef = if ratio >= 1.0 { (ratio.ln() / lr + 1e-12).floor() as usize } else { 0 };
    let exponent = ll / (2.0 * lr) + window.c4 / (lr * lr);
    let in_window = ratio >= window.c5 && h * h / t >= window.c3 * ratio.powf(exponent);
    Ok(TailPrediction { value: -c6 * h * h / t * ratio.powf(nu3), nu3, n_ef, in_window })
}

fn weak_check(rho: f64, alpha: f64, lambda: f64, arg: f64) -> Result<()> {
    if !(alpha > 1.0) {
        return Err(Error::Domain { what: "alpha", value: alpha, limit: 1.0 });
    }
    if !(rho > 1.0) {
        return Err(Error::Domain { what: "rho", value: rho, limit: 1.0 });
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Domain { what: "lambda", value: lambda, limit: 1.0 });
    }
    if !(arg > 1.0) {
        return Err(Error::Domain { what: "argument", value: arg, limit: 1.0 });
    }
    Ok(())
}

/// `f(t) = (ln t)^{1/α} ln(1/λ) (2 ln ρ)^{−1/α}`, the log-correction of the MSD under fast separation.
pub fn weak_anomaly_predict(rho: f64, alpha: f64, lambda: f64, t: f64) -> Result<f64> {
    weak_check(rho, alpha, lambda, t)?;
    Ok((t.ln() / (2.0 * rho.ln())).powf(1.0 / alpha) * (1.0 / lambda).ln())
}

/// `g(r) = (ln r)^{1/α} ln(1/λ) (ln ρ)^{−1/α}`, the exit-time analogue.
pub fn weak_anomaly_exit(rho: f64, alpha: f64, lambda: f64, r: f64) -> Result<f64> {
    weak_check(rho, alpha, lambda, r)?;
    Ok((r.ln() / rho.ln()).powf(1.0 / alpha) * (1.0 / lambda).ln())
}

/// `k(x) = λ^{−(x / ln ρ)^{1/α}}`.
pub fn weak_anomaly_k(rho: f64, alpha: f64, lambda: f64, x: f64) -> Result<f64> {
    weak_check(rho, alpha, lambda, 2.0)?;
    if !(x >= 0.0) {
        return Err(argument("k(x) needs x >= 0"));
    }
    Ok(lambda.powf(-(x / rho.ln()).powf(1.0 / alpha)))
}
