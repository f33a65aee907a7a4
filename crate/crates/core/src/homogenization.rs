//! Effective diffusivities, harmonic coordinates and the scale-separation bounds.
//!
//! In one dimension the homogenized coefficient of `½Δ − ∇U·∇` is
//! `D(U) = (∫ e^{2U} ∫ e^{−2U})^{-1}`. Both integrals are taken in log space so
//! deep potentials do not overflow.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{argument, Error, Result};
use crate::potential::{ModelConstants, MultiScalePotential, ScaleSchedule, TrigSeries};
use crate::quadrature::{GaussLegendre, DEFAULT_ORDER};

/// Panels per oscillation of the highest harmonic.
pub const PANELS_PER_PERIOD: usize = 64;

/// Cap on integrand evaluations for a single diffusivity.
pub const EVALUATION_BUDGET: u64 = 100_000_000;

/// A diffusivity in `(0, 1]` with a quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusivity {
    pub value: f64,
    /// `|D_h − D_{2h}|` from a run on half as many panels.
    pub error_estimate: f64,
}

impl Diffusivity {
    pub const ONE: Diffusivity = Diffusivity { value: 1.0, error_estimate: 0.0 };
}

fn log_moments<G: Fn(f64) -> f64>(rule: &GaussLegendre, length: f64, panels: usize, g: G) -> f64 {
    let plus = rule.composite_log_exp(0.0, length, panels, |x| 2.0 * g(x));
    let minus = rule.composite_log_exp(0.0, length, panels, |x| -2.0 * g(x));
    // D = L^2 / (∫e^{2g} ∫e^{-2g}) over one period of length L
    (2.0 * length.ln() - plus - minus).exp()
}

fn with_refinement<G: Fn(f64) -> f64 + Copy>(length: f64, panels: usize, g: G) -> Diffusivity {
    let rule = GaussLegendre::new(DEFAULT_ORDER);
    let fine = log_moments(&rule, length, panels, g).min(1.0);
    let coarse = log_moments(&rule, length, (panels / 2).max(1), g).min(1.0);
    Diffusivity { value: fine, error_estimate: (fine - coarse).abs() }
}

/// `D(U)` for a single 1-periodic potential.
pub fn effective_diffusivity<S: AsRef<TrigSeries> + ?Sized>(u: &S) -> Diffusivity {
    let u = u.as_ref();
    if u.is_constant() {
        return Diffusivity::ONE;
    }
    let panels = PANELS_PER_PERIOD * u.max_frequency() as usize;
    let centered = u.with_constant(0.0);
    with_refinement(1.0, panels, |x| centered.value(x))
}

/// `D(V_0^n)` computed over one full period `[0, R_n]`.
pub fn multiscale_diffusivity(msp: &MultiScalePotential, n: usize) -> Result<Diffusivity> {
    if n > msp.n_max() {
        return Err(argument(format!("n = {n} exceeds n_max = {}", msp.n_max())));
    }
    let freq = msp.max_spatial_frequency(n);
    if freq == 0.0 {
        return Ok(Diffusivity::ONE);
    }
    let length = msp.radius(n);
    let panels = (PANELS_PER_PERIOD as f64 * freq * length).ceil().max(PANELS_PER_PERIOD as f64);
    // both signs, plus the half-resolution estimate
    let evaluations = panels * DEFAULT_ORDER as f64 * 3.0;
    if evaluations > EVALUATION_BUDGET as f64 {
        return Err(Error::Resource(format!(
            "D(V_0^{n}) needs {evaluations:.3e} evaluations over a period of {length}; lower n"
        )));
    }
    Ok(with_refinement(length, panels as usize, |x| msp.value_unchecked(x, 0, n)))
}

/// `((λ_min e^{−4K1/ρ_min})^n, min(1, (λ_max e^{4K1/ρ_min})^n))` for `V_0^{n−1}`.
///
/// `ρ_min` is taken over the ratios `r_1..r_{n−1}` that actually separate the
/// `n` scales, so a single scale gives `(λ_min, λ_max)`.
pub fn diffusivity_bounds(n: usize, c: &ModelConstants, schedule: &ScaleSchedule) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(argument("diffusivity bounds need n >= 1"));
    }
    let rho = schedule.rho_min_upto(n - 1) as f64;
    let spread = (4.0 * c.k1 / rho).exp();
    let lower = (c.lambda_min / spread).powi(n as i32);
    let upper = (c.lambda_max * spread).powi(n as i32).min(1.0);
    Ok((lower, upper))
}

/// Harmonic coordinate `F(x) = R ∫_0^x e^{2P(y/R)} dy / ∫_0^R e^{2P(y/R)} dy`.
///
/// `F` is stored as cumulative cell integrals; inside a cell the remaining
/// partial integral is evaluated with the same Gauss rule, so `F` is exact to
/// quadrature accuracy and strictly increasing.
#[derive(Debug, Clone)]
pub struct Corrector {
    potential: TrigSeries,
    period: f64,
    shift: f64,
    cumulative: Vec<f64>,
    mass: f64,
    rule: GaussLegendre,
}

/// `F^P` on period `R`.
pub fn corrector<S: AsRef<TrigSeries> + ?Sized>(p: &S, period: f64) -> Result<Corrector> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(argument("corrector period must be positive"));
    }
    let potential = p.as_ref().clone();
    let cells = PANELS_PER_PERIOD * (potential.max_frequency() as usize).max(1);
    let shift = potential.mean() + potential.coefficient_l1();
    let rule = GaussLegendre::new(DEFAULT_ORDER);
    let h = 1.0 / cells as f64;
    let mut cumulative = Vec::with_capacity(cells + 1);
    let mut acc = crate::quadrature::Neumaier::default();
    cumulative.push(0.0);
    for i in 0..cells {
        let lo = i as f64 * h;
        acc.add(rule.integrate(lo, lo + h, |s| (2.0 * (potential.value(s) - shift)).exp()));
        cumulative.push(acc.value());
    }
    let mass = *cumulative.last().unwrap();
    Ok(Corrector { potential, period, shift, cumulative, mass, rule })
}

impl Corrector {
    pub fn period(&self) -> f64 {
        self.period
    }

    /// `∫_0^R e^{2P(y/R)} dy`.
    pub fn total_mass(&self) -> f64 {
        self.mass * self.period * (2.0 * self.shift).exp()
    }

    /// `F(x)`, extended by `F(x + kR) = F(x) + kR`.
    pub fn value(&self, x: f64) -> f64 {
        let s = x / self.period;
        let whole = s.floor();
        let u = s - whole;
        let cells = self.cumulative.len() - 1;
        let pos = u * cells as f64;
        let i = (pos.floor() as usize).min(cells - 1);
        let lo = i as f64 / cells as f64;
        let partial = if u > lo {
            self.rule.integrate(lo, u, |t| (2.0 * (self.potential.value(t) - self.shift)).exp())
        } else {
            0.0
        };
        self.period * (whole + (self.cumulative[i] + partial) / self.mass)
    }

    /// `F'(x) = e^{2P(x/R)} / mean(e^{2P})`.
    pub fn derivative(&self, x: f64) -> f64 {
        (2.0 * (self.potential.value(x / self.period) - self.shift)).exp() / self.mass
    }

    /// `χ(x) = x − F(x)`.
    pub fn chi(&self, x: f64) -> f64 {
        x - self.value(x)
    }
}

/// `(|∫ g f(R·) − ∫g ∫f|, ‖g'‖_∞ / R · ∫|f|)` on the unit torus.
pub fn mixing_defect(g: &TrigSeries, f: &TrigSeries, ratio: u64) -> Result<(f64, f64)> {
    if ratio == 0 {
        return Err(argument("mixing ratio must be >= 1"));
    }
    let rule = GaussLegendre::new(DEFAULT_ORDER);
    let top = (g.max_frequency() as u64).max(ratio * f.max_frequency() as u64).max(1);
    let panels = PANELS_PER_PERIOD * top as usize;
    let r = ratio as f64;
    let joint = rule.composite(0.0, 1.0, panels, |x| g.value(x) * f.value(r * x));
    let defect = (joint - g.mean() * f.mean()).abs();
    // |f| has kinks, so it gets a finer grid than the smooth product
    let abs_panels = 16 * PANELS_PER_PERIOD * (f.max_frequency() as usize).max(1);
    let l1 = rule.composite(0.0, 1.0, abs_panels, |x| f.value(x).abs());
    let bound = g.lipschitz(crate::potential::MIN_GRID_POINTS) / r * l1;
    Ok((defect, bound))
}
