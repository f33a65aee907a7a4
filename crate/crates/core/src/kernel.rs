//! Transition density of `dy = dω − U'(y) dt` for a single periodic `U`.
//!
//! The unknown is the density `p` with respect to `m_U(dy) = e^{−2U(y)} dy / Z`,
//! `Z = ∫_0^1 e^{−2U}`, which solves `e^{−2U} ∂_t p = ½ ∂_y(e^{−2U} ∂_y p)`.
//! The conservative three-point discretization is advanced with Crank–Nicolson
//! on a truncated interval with absorbing ends.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

use crate::error::{argument, Error, Result};
use crate::homogenization::effective_diffusivity;
use crate::potential::TrigSeries;
use crate::quadrature::{GaussLegendre, Neumaier, DEFAULT_ORDER};

/// Mass allowed to leave through the absorbing ends.
pub const LEAK_TOLERANCE: f64 = 1e-3;
/// Grid points per period of the highest harmonic, at least.
pub const POINTS_PER_PERIOD: f64 = 20.0;
/// Half-width of the domain in units of `√t`, beyond the farthest target.
pub const WIDTH_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub half_width: f64,
    pub dx: f64,
    /// `None` uses `dt = dx²`.
    pub dt: Option<f64>,
}

/// `ln p(t, x0, ·)` on the grid `x0 − L + i dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProfile {
    pub x0: f64,
    pub t: f64,
    pub dx: f64,
    pub nodes: Vec<f64>,
    pub log_density: Vec<f64>,
    /// `∫ p dm_U` at time `t`.
    pub mass: f64,
    /// Variance of the initial Gaussian in `y`.
    pub initial_variance: f64,
}

impl KernelProfile {
    /// Linear interpolation of `ln p`.
    pub fn log_density_at(&self, y: f64) -> Result<f64> {
        let s = (y - self.nodes[0]) / self.dx;
        let last = self.nodes.len() - 1;
        if !(s >= 0.0 && s <= last as f64) {
            return Err(argument(format!("point {y} is outside the computed domain")));
        }
        let i = (s.floor() as usize).min(last - 1);
        let w = s - i as f64;
        Ok((1.0 - w) * self.log_density[i] + w * self.log_density[i + 1])
    }
}

/// `∫_0^1 e^{−2U}`.
pub fn normalizer(u: &TrigSeries) -> f64 {
    let panels = 64 * u.max_frequency().max(1) as usize;
    GaussLegendre::new(DEFAULT_ORDER).composite(0.0, 1.0, panels, |z| (-2.0 * u.value(z)).exp())
}

/// Solves for `p(t, x0, ·)` starting from a Gaussian of standard deviation `2 dx`.
pub fn solve_forward(u: &TrigSeries, x0: f64, t: f64, grid: Grid) -> Result<KernelProfile> {
    let Grid { half_width, dx, dt } = grid;
    if !(t > 0.0 && t.is_finite()) {
        return Err(argument("time must be positive"));
    }
    if !(dx > 0.0 && half_width > 0.0) {
        return Err(argument("grid spacing and half-width must be positive"));
    }
    let finest = 1.0 / u.max_frequency().max(1) as f64;
    if dx > finest / POINTS_PER_PERIOD {
        return Err(Error::Resolution(format!(
            "dx = {dx} leaves fewer than {POINTS_PER_PERIOD} points per period {finest}"
        )));
    }
    if half_width < WIDTH_SIGMAS * t.sqrt() {
        return Err(Error::Resolution(format!("half-width {half_width} is below {WIDTH_SIGMAS}√t")));
    }
    let dt = dt.unwrap_or(dx * dx);
    let cells = (2.0 * half_width / dx).round() as usize;
    if cells < 4 {
        return Err(argument("grid has too few cells"));
    }
    let steps = (t / dt).ceil() as usize;
    let dt = t / steps as f64;
    let z = normalizer(u);
    let nodes: Vec<f64> = (0..=cells).map(|i| x0 - half_width + i as f64 * dx).collect();
    let m: Vec<f64> = nodes.iter().map(|&y| (-2.0 * u.value(y)).exp()).collect();
    let w: Vec<f64> = nodes.windows(2).map(|s| (-2.0 * u.value(0.5 * (s[0] + s[1]))).exp()).collect();

    let sigma0 = 2.0 * dx;
    let mut p: Vec<f64> = nodes
        .iter()
        .zip(&m)
        .map(|(&y, &mi)| {
            let q = (-(y - x0).powi(2) / (2.0 * sigma0 * sigma0)).exp();
            q / mi
        })
        .collect();
    let first = p.len() - 1;
    p[0] = 0.0;
    p[first] = 0.0;
    let mass = |p: &[f64]| {
        let mut acc = Neumaier::default();
        for (pi, mi) in p.iter().zip(&m) {
            acc.add(pi * mi);
        }
        acc.value() * dx / z
    };
    let m0 = mass(&p);
    p.iter_mut().for_each(|v| *v /= m0);
    let mut log_scale = 0.0f64;

    // interior unknowns 1..cells−1; A_i = κ[−w_{i−½}, w_{i−½} + w_{i+½}, −w_{i+½}]
    let n = cells - 1;
    let kappa = 0.25 * dt / (dx * dx);
    let lower: Vec<f64> = (0..n).map(|k| -kappa * w[k]).collect();
    let upper: Vec<f64> = (0..n).map(|k| -kappa * w[k + 1]).collect();
    let diag: Vec<f64> = (0..n).map(|k| m[k + 1] + kappa * (w[k] + w[k + 1])).collect();
    // Thomas factorization, reused every step
    let mut c_star = Vec::with_capacity(n);
    let mut denom = Vec::with_capacity(n);
    for k in 0..n {
        let d = if k == 0 { diag[0] } else { diag[k] - lower[k] * c_star[k - 1] };
        denom.push(d);
        c_star.push(upper[k] / d);
    }
    let mut rhs = alloc::vec![0.0; n];
    for _ in 0..steps {
        for k in 0..n {
            let i = k + 1;
            let flux = w[i] * (p[i + 1] - p[i]) - w[i - 1] * (p[i] - p[i - 1]);
            rhs[k] = m[i] * p[i] + kappa * flux;
        }
        for k in 0..n {
            let prev = if k == 0 { 0.0 } else { rhs[k - 1] };
            rhs[k] = (rhs[k] - lower[k] * prev) / denom[k];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            rhs[k] -= c_star[k] * rhs[k + 1];
        }
        p[1..=n].copy_from_slice(&rhs);
        let top = p.iter().fold(0.0f64, |a, &b| a.max(b));
        if !(top > 1e-100 && top < 1e100) {
            if !(top > 0.0 && top.is_finite()) {
                return Err(Error::Resolution("density lost positivity".into()));
            }
            p.iter_mut().for_each(|v| *v /= top);
            log_scale += top.ln();
        }
    }
    let final_mass = mass(&p) * log_scale.exp();
    if !(final_mass >= 1.0 - LEAK_TOLERANCE) {
        return Err(Error::Resolution(format!("{:.3e} of the mass leaked through the ends", 1.0 - final_mass)));
    }
    let log_density = p.iter().map(|v| v.ln() + log_scale).collect();
    Ok(KernelProfile { x0, t, dx, nodes, log_density, mass: final_mass, initial_variance: sigma0 * sigma0 })
}

/// Where a point `(t, Δ)` sits relative to the window constant `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeTag {
    /// `C|Δ| ≥ t`.
    LargeDeviation,
    /// `C√t ≥ |Δ|`.
    Diagonal,
    Homogenization,
}

impl RegimeTag {
    pub fn name(self) -> &'static str {
        match self {
            RegimeTag::LargeDeviation => "large-deviation",
            RegimeTag::Diagonal => "diagonal",
            RegimeTag::Homogenization => "homogenization",
        }
    }
}

pub fn regime(t: f64, offset: f64, window: f64) -> RegimeTag {
    let d = offset.abs();
    if window * d >= t {
        RegimeTag::LargeDeviation
    } else if window * t.sqrt() >= d {
        RegimeTag::Diagonal
    } else {
        RegimeTag::Homogenization
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
    /// `C2 (|Δ|/t + √t/|Δ|)`.
    pub e: f64,
    pub tag: RegimeTag,
    /// Inside the homogenization window with `E ≤ 1/10`.
    pub binding: bool,
}

/// `(2πtD)^{−1/2} exp(−(1 ± E) Δ² / (2Dt))` with `D = D(U)`.
pub fn homogenized_envelope(u: &TrigSeries, t: f64, x: f64, y: f64, window: f64, c2: f64) -> Result<Envelope> {
    let d = effective_diffusivity(u).value;
    envelope_with(d, t, y - x, window, c2)
}

fn envelope_with(d: f64, t: f64, offset: f64, window: f64, c2: f64) -> Result<Envelope> {
    if !(t > 0.0 && offset != 0.0 && window > 0.0 && c2 >= 0.0) {
        return Err(argument("envelope needs t > 0, a nonzero offset and positive constants"));
    }
    let delta = offset.abs();
    let e = c2 * (delta / t + t.sqrt() / delta);
    let pref = (2.0 * PI * t * d).powf(-0.5);
    let x = delta * delta / (2.0 * d * t);
    let tag = regime(t, delta, window);
    Ok(Envelope {
        lower: pref * (-(1.0 + e) * x).exp(),
        upper: pref * (-(1.0 - e) * x).exp(),
        e,
        tag,
        binding: tag == RegimeTag::Homogenization && e <= 0.1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaviesPoint {
    pub t: f64,
    pub offset: f64,
    pub log_density: f64,
    /// `ln p / (−Δ²/(2Dt))`.
    pub ratio: f64,
    /// Smallest `C2` for which this point lies inside the envelope.
    pub c2: f64,
    pub tag: RegimeTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaviesReport {
    pub diffusivity: f64,
    pub window: f64,
    pub points: Vec<DaviesPoint>,
    /// Max of the pointwise `C2` over points in the homogenization window.
    pub fitted_c2: f64,
    /// `|ratio − 1|` decreases along the given order.
    pub monotone: bool,
}

/// Solves from `x0 = 0` and compares `ln p(t, 0, Δ)` with the homogenized Gaussian.
pub fn davies_point(u: &TrigSeries, t: f64, offset: f64, dx: f64, window: f64) -> Result<(DaviesPoint, KernelProfile)> {
    if offset == 0.0 {
        return Err(argument("offsets must be nonzero"));
    }
    let d = effective_diffusivity(u).value;
    let half = offset.abs() + WIDTH_SIGMAS * t.sqrt() + 10.0;
    let profile = solve_forward(u, 0.0, t, Grid { half_width: half, dx, dt: None })?;
    let lp = profile.log_density_at(offset)?;
    let x = offset * offset / (2.0 * d * t);
    let lpref = -0.5 * (2.0 * PI * t * d).ln();
    let z = (lpref - lp) / x;
    let scale = offset.abs() / t + t.sqrt() / offset.abs();
    let point = DaviesPoint {
        t,
        offset,
        log_density: lp,
        ratio: lp / -x,
        c2: (z - 1.0).abs() / scale,
        tag: regime(t, offset, window),
    };
    Ok((point, profile))
}

/// Fits `C2` over the points in the homogenization window and checks the trend.
pub fn summarize(u: &TrigSeries, window: f64, points: Vec<DaviesPoint>) -> DaviesReport {
    let fitted_c2 = points.iter().filter(|p| p.tag == RegimeTag::Homogenization).map(|p| p.c2).fold(0.0, f64::max);
    let monotone = points.windows(2).all(|w| (w[1].ratio - 1.0).abs() < (w[0].ratio - 1.0).abs());
    DaviesReport { diffusivity: effective_diffusivity(u).value, window, points, fitted_c2, monotone }
}

impl DaviesReport {
    /// Both envelope inequalities at every in-window point with the given `C2`.
    pub fn contained(&self, c2: f64) -> bool {
        self.points.iter().filter(|p| p.tag == RegimeTag::Homogenization).all(|p| {
            envelope_with(self.diffusivity, p.t, p.offset, self.window, c2).is_ok_and(|e| {
                let lp = p.log_density;
                lp <= e.upper.ln() + 1e-12 && lp >= e.lower.ln() - 1e-12
            })
        })
    }
}

/// [`davies_point`] over a schedule, in order.
pub fn davies_check(u: &TrigSeries, points: &[(f64, f64)], dx: f64, window: f64) -> Result<DaviesReport> {
    let solved = points
        .iter()
        .map(|&(t, offset)| davies_point(u, t, offset, dx, window).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(u, window, solved))
}
