//! Periodic potentials, scale schedules and multi-scale superpositions.
//!
//! A [`PeriodicPotential`] is a finite trigonometric series on the unit torus
//! normalized so that `U(0) = 0`. A [`MultiScalePotential`] stacks such
//! potentials on the radii of a [`ScaleSchedule`]:
//! `V(x) = Σ_{k=0}^{n_max} U_k(x / R_k)`.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Deref;
use num_traits::Float;

use crate::error::{argument, Error, Result};
use crate::homogenization;

const TAU: f64 = 2.0 * PI;

/// Largest radius kept exactly representable as an `f64`.
pub const MAX_RADIUS: u64 = 1 << 53;

/// Inflation applied by [`ModelConstants::conservative`].
pub const SAFETY_FACTOR: f64 = 1.01;

/// Minimum grid density (points per unit period per unit frequency).
pub const MIN_GRID_POINTS: usize = 1024;

/// Relative error allowed between two quadratures of the same diffusivity.
pub const QUADRATURE_SLACK: f64 = 1e-9;

#[inline]
fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// One term `a cos(2πkx) + b sin(2πkx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub frequency: u32,
    pub cos: f64,
    pub sin: f64,
}

impl Harmonic {
    pub fn new(frequency: u32, cos: f64, sin: f64) -> Self {
        Self { frequency, cos, sin }
    }
}

/// A real trigonometric polynomial of period 1 with an arbitrary constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    constant: f64,
    harmonics: Vec<Harmonic>,
}

impl TrigSeries {
    pub fn new(constant: f64, harmonics: Vec<Harmonic>) -> Result<Self> {
        if !constant.is_finite() {
            return Err(argument("constant term must be finite"));
        }
        for h in &harmonics {
            if h.frequency == 0 {
                return Err(argument("harmonic frequencies must be >= 1; use the constant term instead"));
            }
            if !(h.cos.is_finite() && h.sin.is_finite()) {
                return Err(argument("harmonic coefficients must be finite"));
            }
        }
        Ok(Self { constant, harmonics })
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, harmonics: Vec::new() }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    /// The constant term, which is also the mean over one period.
    pub fn mean(&self) -> f64 {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.harmonics.iter().all(|h| h.cos == 0.0 && h.sin == 0.0)
    }

    pub fn max_frequency(&self) -> u32 {
        self.harmonics.iter().filter(|h| h.cos != 0.0 || h.sin != 0.0).map(|h| h.frequency).max().unwrap_or(0)
    }

    /// `Σ (|a_k| + |b_k|)`, an upper bound for `sup |U − mean|`.
    pub fn coefficient_l1(&self) -> f64 {
        self.harmonics.iter().map(|h| h.cos.abs() + h.sin.abs()).sum()
    }

    pub fn value(&self, x: f64) -> f64 {
        let t = frac(x);
        let mut acc = 0.0;
        for h in &self.harmonics {
            let (s, c) = (TAU * frac(h.frequency as f64 * t)).sin_cos();
            acc += h.cos * c + h.sin * s;
        }
        acc + self.constant
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let t = frac(x);
        let mut acc = 0.0;
        for h in &self.harmonics {
            let w = TAU * h.frequency as f64;
            let (s, c) = (TAU * frac(h.frequency as f64 * t)).sin_cos();
            acc += w * (h.sin * c - h.cos * s);
        }
        acc
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let t = frac(x);
        let mut acc = 0.0;
        for h in &self.harmonics {
            let w = TAU * h.frequency as f64;
            let (s, c) = (TAU * frac(h.frequency as f64 * t)).sin_cos();
            acc -= w * w * (h.cos * c + h.sin * s);
        }
        acc
    }

    /// Value at the torus point `phase / 2^64`.
    ///
    /// Multiplying the phase by an integer is exact modulo 1, which is what the
    /// Birkhoff sums of the expanding maps `x ↦ Rx` need.
    pub fn value_at_phase(&self, phase: u64) -> f64 {
        let mut acc = 0.0;
        for h in &self.harmonics {
            let p = (h.frequency as u64).wrapping_mul(phase);
            let (s, c) = (TAU * phase_to_unit(p)).sin_cos();
            acc += h.cos * c + h.sin * s;
        }
        acc + self.constant
    }

    /// `U(x + shift)` as a new series.
    pub fn translated(&self, shift: f64) -> Self {
        let harmonics = self
            .harmonics
            .iter()
            .map(|h| {
                let (s, c) = (TAU * frac(h.frequency as f64 * frac(shift))).sin_cos();
                Harmonic::new(h.frequency, h.cos * c + h.sin * s, h.sin * c - h.cos * s)
            })
            .collect();
        Self { constant: self.constant, harmonics }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            constant: self.constant * factor,
            harmonics: self
                .harmonics
                .iter()
                .map(|h| Harmonic::new(h.frequency, h.cos * factor, h.sin * factor))
                .collect(),
        }
    }

    pub fn with_constant(&self, constant: f64) -> Self {
        Self { constant, harmonics: self.harmonics.clone() }
    }

    /// `(inf, sup)` over one period from a grid of `grid_points · max_frequency`
    /// points, with the extreme grid cells refined by golden-section search.
    pub fn extremes(&self, grid_points: usize) -> (f64, f64) {
        if self.is_constant() {
            return (self.constant, self.constant);
        }
        let n = grid_points.max(MIN_GRID_POINTS) * self.max_frequency() as usize;
        let (lo, hi) = grid_extremes(n, |x| self.value(x));
        (lo, hi)
    }

    /// `sup U − inf U`.
    pub fn oscillation(&self, grid_points: usize) -> f64 {
        let (lo, hi) = self.extremes(grid_points);
        hi - lo
    }

    /// `sup |U'|`, the Lipschitz constant on the torus.
    pub fn lipschitz(&self, grid_points: usize) -> f64 {
        if self.is_constant() {
            return 0.0;
        }
        let n = grid_points.max(MIN_GRID_POINTS) * self.max_frequency() as usize;
        let (lo, hi) = grid_extremes(n, |x| self.derivative(x));
        hi.max(-lo)
    }

    /// `sup |U|`.
    pub fn sup_norm(&self, grid_points: usize) -> f64 {
        let (lo, hi) = self.extremes(grid_points);
        hi.abs().max(lo.abs())
    }
}

#[inline]
pub(crate) fn phase_to_unit(p: u64) -> f64 {
    (p >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Grid scan over [0, 1) followed by golden-section refinement of both extremes.
fn grid_extremes<F: Fn(f64) -> f64>(n: usize, f: F) -> (f64, f64) {
    let h = 1.0 / n as f64;
    let (mut imin, mut imax) = (0usize, 0usize);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let v = f(i as f64 * h);
        if v < vmin {
            vmin = v;
            imin = i;
        }
        if v > vmax {
            vmax = v;
            imax = i;
        }
    }
    let refine = |i: usize, sign: f64| {
        let center = i as f64 * h;
        golden_max(center - h, center + h, |x| sign * f(x)) * sign
    };
    (vmin.min(refine(imin, -1.0)), vmax.max(refine(imax, 1.0)))
}

fn golden_max<F: Fn(f64) -> f64>(mut a: f64, mut b: f64, f: F) -> f64 {
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    fc.max(fd)
}

/// A smooth 1-periodic potential with `U(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential(TrigSeries);

impl PeriodicPotential {
    /// Builds the potential; the constant term is set to `−Σ a_k` so that `U(0) = 0`.
    pub fn new(harmonics: Vec<Harmonic>) -> Result<Self> {
        let mut series = TrigSeries::new(0.0, harmonics)?;
        let mut offset = 0.0;
        for h in &series.harmonics {
            offset += h.cos;
        }
        series.constant = -offset;
        Ok(Self(series))
    }

    pub fn zero() -> Self {
        Self(TrigSeries::zero())
    }

    /// `amplitude · sin(2π k x)`.
    pub fn sine(frequency: u32, amplitude: f64) -> Self {
        Self(TrigSeries { constant: 0.0, harmonics: alloc::vec![Harmonic::new(frequency, 0.0, amplitude)] })
    }

    pub fn series(&self) -> &TrigSeries {
        &self.0
    }

    pub fn into_series(self) -> TrigSeries {
        self.0
    }
}

impl Deref for PeriodicPotential {
    type Target = TrigSeries;

    fn deref(&self) -> &TrigSeries {
        &self.0
    }
}

impl AsRef<TrigSeries> for PeriodicPotential {
    fn as_ref(&self) -> &TrigSeries {
        &self.0
    }
}

impl AsRef<TrigSeries> for TrigSeries {
    fn as_ref(&self) -> &TrigSeries {
        self
    }
}

/// How the ratios `r_k = R_k / R_{k-1}` are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    Explicit,
    Geometric {
        rho: u64,
    },
    /// `R_n = R_{n-1} · ⌊ρ^{n^α} / R_{n-1}⌋`.
    Stretched {
        rho: f64,
        alpha: f64,
    },
}

/// Integer scale ratios and the radii they generate, `R_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSchedule {
    kind: ScheduleKind,
    ratios: Vec<u64>,
    radii: Vec<u64>,
}

impl ScaleSchedule {
    pub fn explicit(ratios: Vec<u64>) -> Result<Self> {
        Self::from_ratios(ScheduleKind::Explicit, ratios)
    }

    /// Constant ratio `rho`, generated until the radius would exceed [`MAX_RADIUS`].
    pub fn geometric(rho: u64) -> Result<Self> {
        if rho < 2 {
            return Err(argument("scale ratio rho must be >= 2"));
        }
        let mut ratios = Vec::new();
        let mut r: u64 = 1;
        while let Some(next) = r.checked_mul(rho).filter(|&v| v <= MAX_RADIUS) {
            ratios.push(rho);
            r = next;
        }
        Self::from_ratios(ScheduleKind::Geometric { rho }, ratios)
    }

    /// Fast separation `R_n = R_{n-1} ⌊ρ^{n^α} / R_{n-1}⌋`, generated while radii stay below [`MAX_RADIUS`].
    pub fn stretched(rho: f64, alpha: f64) -> Result<Self> {
        if !(rho > 1.0 && alpha > 1.0 && rho.is_finite() && alpha.is_finite()) {
            return Err(argument("stretched schedule needs rho > 1 and alpha > 1"));
        }
        let mut ratios = Vec::new();
        let mut r: u64 = 1;
        for n in 1u32.. {
            let exponent = (n as f64).powf(alpha);
            if exponent * rho.ln() > (MAX_RADIUS as f64).ln() + 1.0 {
                break;
            }
            // the relative nudge keeps exact powers such as 2^4 from rounding down
            let ratio = (rho.powf(exponent) / r as f64 * (1.0 + 1e-12)).floor();
            if ratio < 2.0 {
                return Err(argument("stretched schedule produced a ratio below 2; increase rho"));
            }
            match r.checked_mul(ratio as u64).filter(|&v| v <= MAX_RADIUS) {
                Some(next) => {
                    ratios.push(ratio as u64);
                    r = next;
                }
                None => break,
            }
        }
        Self::from_ratios(ScheduleKind::Stretched { rho, alpha }, ratios)
    }

    fn from_ratios(kind: ScheduleKind, ratios: Vec<u64>) -> Result<Self> {
        let mut radii = Vec::with_capacity(ratios.len() + 1);
        radii.push(1u64);
        for &r in &ratios {
            if r < 2 {
                return Err(argument("every scale ratio must be an integer >= 2"));
            }
            let last = *radii.last().unwrap();
            let next = last
                .checked_mul(r)
                .filter(|&v| v <= MAX_RADIUS)
                .ok_or_else(|| argument("scale radii overflow the exactly representable range"))?;
            radii.push(next);
        }
        Ok(Self { kind, ratios, radii })
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// Number of known ratios; radii are known for `0..=depth()`.
    pub fn depth(&self) -> usize {
        self.ratios.len()
    }

    pub fn radius(&self, k: usize) -> Option<u64> {
        self.radii.get(k).copied()
    }

    pub fn radii(&self) -> &[u64] {
        &self.radii
    }

    /// `r_k` for `k ≥ 1`.
    pub fn ratio(&self, k: usize) -> Option<u64> {
        k.checked_sub(1).and_then(|i| self.ratios.get(i).copied())
    }

    pub fn ratios(&self) -> &[u64] {
        &self.ratios
    }

    /// `ρ_min` over ratios `r_1..=r_levels` (all known ratios when `levels` exceeds the depth).
    pub fn rho_min_upto(&self, levels: usize) -> u64 {
        self.ratios[..levels.min(self.ratios.len())].iter().copied().min().unwrap_or(u64::MAX)
    }

    pub fn rho_max_upto(&self, levels: usize) -> u64 {
        self.ratios[..levels.min(self.ratios.len())].iter().copied().max().unwrap_or(0)
    }

    pub fn rho_min(&self) -> u64 {
        self.rho_min_upto(self.ratios.len())
    }

    pub fn rho_max(&self) -> u64 {
        self.rho_max_upto(self.ratios.len())
    }
}

/// Uniform constants of a multi-scale model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConstants {
    /// `sup_k Osc(U_k)`.
    pub k0: f64,
    /// `sup_k sup |U_k'|`.
    pub k1: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ModelConstants {
    pub fn new(k0: f64, k1: f64, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(k0 >= 0.0 && k1 >= 0.0 && k0.is_finite() && k1.is_finite()) {
            return Err(argument("K0 and K1 must be finite and nonnegative"));
        }
        if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max <= 1.0) {
            return Err(argument("need 0 < lambda_min <= lambda_max <= 1"));
        }
        Ok(Self { k0, k1, lambda_min, lambda_max })
    }

    /// Copy with `K0`, `K1` inflated by [`SAFETY_FACTOR`] and the `λ` range widened by
    /// [`QUADRATURE_SLACK`], for use in one-sided bounds.
    pub fn conservative(&self) -> Self {
        Self {
            k0: self.k0 * SAFETY_FACTOR,
            k1: self.k1 * SAFETY_FACTOR,
            lambda_min: self.lambda_min * (1.0 - QUADRATURE_SLACK),
            lambda_max: (self.lambda_max * (1.0 + QUADRATURE_SLACK)).min(1.0),
        }
    }

    /// `λ_max < 1`: every scale slows the diffusion down.
    pub fn is_subdiffusive(&self) -> bool {
        self.lambda_max < 1.0
    }
}

/// Result of [`MultiScalePotential::tail_oscillation_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailOscillation {
    /// `Osc(U_{n+1}) + r Σ_{k≥n+2} sup|U_k'| / R_k`.
    pub value: f64,
    /// `K0 + K1 / (ρ_min − 1)`.
    pub uniform: f64,
}

/// `V(x) = Σ_{k=0}^{n_max} U_k(x / R_k)`.
///
/// Potentials are either one per scale (scales past the list are zero) or a finite
/// set repeated cyclically, in which case `V` is the truncation of an infinite sum.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScalePotential {
    potentials: Vec<PeriodicPotential>,
    cycled: bool,
    schedule: ScaleSchedule,
    n_max: usize,
}

impl MultiScalePotential {
    pub fn new(
        potentials: Vec<PeriodicPotential>,
        cycled: bool,
        schedule: ScaleSchedule,
        n_max: usize,
    ) -> Result<Self> {
        if potentials.is_empty() {
            return Err(argument("at least one potential is required"));
        }
        if schedule.depth() < n_max + 1 {
            return Err(argument("the schedule must provide radii up to R_{n_max+1}"));
        }
        Ok(Self { potentials, cycled, schedule, n_max })
    }

    /// The same potential on every scale `0..=n_max` and zero beyond.
    pub fn self_similar(u: PeriodicPotential, schedule: ScaleSchedule, n_max: usize) -> Result<Self> {
        Self::new(alloc::vec![u; n_max + 1], false, schedule, n_max)
    }

    pub fn zero(schedule: ScaleSchedule, n_max: usize) -> Result<Self> {
        Self::new(alloc::vec![PeriodicPotential::zero()], false, schedule, n_max)
    }

    pub fn schedule(&self) -> &ScaleSchedule {
        &self.schedule
    }

    /// The same model cut at a lower level; dropped scales count as tail.
    pub fn truncated(&self, n_max: usize) -> Result<Self> {
        if n_max > self.n_max {
            return Err(argument("truncation level above n_max"));
        }
        Ok(Self { n_max, ..self.clone() })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn is_cycled(&self) -> bool {
        self.cycled
    }

    pub fn potentials(&self) -> &[PeriodicPotential] {
        &self.potentials
    }

    /// `U_k`, or `None` when the scale carries no potential.
    pub fn scale(&self, k: usize) -> Option<&PeriodicPotential> {
        let u = if self.cycled { self.potentials.get(k % self.potentials.len()) } else { self.potentials.get(k) };
        u.filter(|u| !u.is_constant())
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.schedule.radii[k] as f64
    }

    fn check_range(&self, lo: usize, hi: usize) -> Result<()> {
        if lo > hi || hi > self.n_max {
            return Err(argument("need 0 <= n_lo <= n_hi <= n_max"));
        }
        Ok(())
    }

    /// `V_{lo}^{hi}(x) = Σ_{k=lo}^{hi} U_k(x / R_k)`.
    pub fn eval_potential(&self, x: f64, lo: usize, hi: usize) -> Result<f64> {
        self.check_range(lo, hi)?;
        Ok(self.value_unchecked(x, lo, hi))
    }

    /// `∇V_{lo}^{hi}(x)`.
    pub fn eval_gradient(&self, x: f64, lo: usize, hi: usize) -> Result<f64> {
        self.check_range(lo, hi)?;
        Ok(self.gradient_unchecked(x, lo, hi))
    }

    pub(crate) fn value_unchecked(&self, x: f64, lo: usize, hi: usize) -> f64 {
        let mut acc = 0.0;
        for k in lo..=hi {
            if let Some(u) = self.scale(k) {
                acc += u.value(x / self.radius(k));
            }
        }
        acc
    }

    pub(crate) fn gradient_unchecked(&self, x: f64, lo: usize, hi: usize) -> f64 {
        let mut acc = 0.0;
        for k in lo..=hi {
            if let Some(u) = self.scale(k) {
                let r = self.radius(k);
                acc += u.derivative(x / r) / r;
            }
        }
        acc
    }

    /// Highest spatial frequency `max_k kmax_k / R_k` among scales `0..=upto`.
    pub fn max_spatial_frequency(&self, upto: usize) -> f64 {
        (0..=upto.min(self.n_max))
            .filter_map(|k| self.scale(k).map(|u| u.max_frequency() as f64 / self.radius(k)))
            .fold(0.0, f64::max)
    }

    /// Shortest period present among scales `0..=upto`, infinite for `V ≡ 0`.
    pub fn finest_period(&self, upto: usize) -> f64 {
        let f = self.max_spatial_frequency(upto);
        if f > 0.0 {
            1.0 / f
        } else {
            f64::INFINITY
        }
    }

    /// Whether potentials beyond `n_max` are dropped by the truncation.
    pub fn has_tail(&self) -> bool {
        if self.cycled {
            return self.potentials.iter().any(|u| !u.is_constant());
        }
        self.potentials.iter().skip(self.n_max + 1).any(|u| !u.is_constant())
    }

    /// Bound on `sup_{|x| ≤ x_max} |V_{n_max+1}^∞(x)|`:
    /// `K1 x_max / R_{n_max+1} · ρ_min / (ρ_min − 1)`, zero when nothing is truncated.
    pub fn truncation_error_bound(&self, x_max: f64) -> f64 {
        if !self.has_tail() {
            return 0.0;
        }
        let k1 = self
            .potentials
            .iter()
            .skip(if self.cycled { 0 } else { self.n_max + 1 })
            .map(|u| u.lipschitz(MIN_GRID_POINTS))
            .fold(0.0, f64::max);
        let rho = self.schedule.rho_min() as f64;
        k1 * x_max.abs() / self.radius(self.n_max + 1) * rho / (rho - 1.0)
    }

    /// Largest `|x|` for which the truncation error stays below `tol`.
    pub fn truncation_box(&self, tol: f64) -> f64 {
        let per_unit = self.truncation_error_bound(1.0);
        if per_unit == 0.0 {
            f64::INFINITY
        } else {
            tol / per_unit
        }
    }

    fn constant_scales(&self) -> impl Iterator<Item = &PeriodicPotential> {
        let count = if self.cycled { self.potentials.len() } else { self.n_max + 1 };
        let zero = &ZERO;
        (0..count).map(move |k| if self.cycled { &self.potentials[k] } else { self.potentials.get(k).unwrap_or(zero) })
    }

    /// Grid estimates of `K0`, `K1` and the per-scale diffusivity range over scales `0..=n_max`.
    pub fn model_constants(&self, grid_points: usize) -> Result<ModelConstants> {
        if grid_points < MIN_GRID_POINTS {
            return Err(argument("grid_points must be >= 1024"));
        }
        let (mut k0, mut k1) = (0.0f64, 0.0f64);
        let (mut lmin, mut lmax) = (f64::INFINITY, 0.0f64);
        for u in self.constant_scales() {
            k0 = k0.max(u.oscillation(grid_points));
            k1 = k1.max(u.lipschitz(grid_points));
            let d = homogenization::effective_diffusivity(u).value;
            lmin = lmin.min(d);
            lmax = lmax.max(d);
        }
        ModelConstants::new(k0, k1, lmin, lmax)
    }

    /// Oscillation of the non-homogenized scales seen inside `B(0, r)` when `n` scales are effective.
    pub fn tail_oscillation_bound(&self, r: f64, n: usize) -> Result<TailOscillation> {
        let depth = self.schedule.depth();
        if n + 1 > depth {
            return Err(argument("scale index beyond the schedule depth"));
        }
        if !(r >= 0.0 && r < self.radius(n + 1)) {
            return Err(Error::Domain { what: "r", value: r, limit: self.radius(n + 1) });
        }
        let stats = |k: usize| -> (f64, f64) {
            match self.scale_beyond_truncation(k) {
                Some(u) => (u.oscillation(MIN_GRID_POINTS), u.lipschitz(MIN_GRID_POINTS)),
                None => (0.0, 0.0),
            }
        };
        let (osc_next, _) = stats(n + 1);
        let mut drift = 0.0;
        for k in n + 2..=depth {
            drift += stats(k).1 / self.radius(k);
        }
        let (k0, k1) = self.potentials.iter().fold((0.0f64, 0.0f64), |(a, b), u| {
            (a.max(u.oscillation(MIN_GRID_POINTS)), b.max(u.lipschitz(MIN_GRID_POINTS)))
        });
        let rho = self.schedule.rho_min() as f64;
        if self.cycled {
            // scales past the schedule depth, bounded geometrically
            drift += k1 / self.radius(depth) / (rho - 1.0);
        }
        Ok(TailOscillation { value: osc_next + r * drift, uniform: k0 + k1 / (rho - 1.0) })
    }

    /// `U_k` of the untruncated model (cycled sets continue past `n_max`).
    fn scale_beyond_truncation(&self, k: usize) -> Option<&PeriodicPotential> {
        self.scale(k)
    }
}

static ZERO: PeriodicPotential = PeriodicPotential(TrigSeries { constant: 0.0, harmonics: Vec::new() });

impl core::fmt::Display for ScaleSchedule {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match &self.kind {
            ScheduleKind::Explicit => write!(f, "explicit{:?}", self.ratios),
            ScheduleKind::Geometric { rho } => write!(f, "geometric(rho={rho})"),
            ScheduleKind::Stretched { rho, alpha } => write!(f, "stretched(rho={rho}, alpha={alpha})"),
        }
    }
}

impl ScheduleKind {
    pub fn name(&self) -> alloc::string::String {
        match self {
            ScheduleKind::Explicit => "explicit".to_string(),
            ScheduleKind::Geometric { .. } => "geometric".to_string(),
            ScheduleKind::Stretched { .. } => "stretched".to_string(),
        }
    }
}
