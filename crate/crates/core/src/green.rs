//! Dirichlet Green functions of `−(λ u')'` on `(0, 1)`.
//!
//! With the resistance `m(x) = ∫_0^x dz/λ` and `M = m(1)`,
//! `G(x, y) = m(x∧y) (M − m(x∨y)) / M`. Coefficients are piecewise constant, so
//! `m` is exact and `λ ∂_z G(x, ·)` is constant on either side of `x`.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{argument, Result};
use crate::potential::TrigSeries;
use crate::quadrature::{GaussLegendre, Neumaier, DEFAULT_ORDER};

/// Minimum number of cells when a smooth coefficient is discretized.
pub const MIN_CELLS: usize = 1 << 14;

/// A strictly positive, piecewise-constant coefficient on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    breaks: Vec<f64>,
    values: Vec<f64>,
    /// `m` at each break.
    resistance: Vec<f64>,
    /// Sup relative deviation of the source function from the cell values, zero if exact.
    approximation_error: f64,
}

impl Coefficient {
    /// Values on the cells `[breaks[i], breaks[i+1])`; breaks run from 0 to 1.
    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(argument("need one more break than values"));
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(argument("breaks must start at 0 and end at 1"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(argument("breaks must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(argument("coefficient values must be positive and finite"));
        }
        let mut resistance = Vec::with_capacity(breaks.len());
        let mut acc = Neumaier::default();
        resistance.push(0.0);
        for (w, v) in breaks.windows(2).zip(&values) {
            acc.add((w[1] - w[0]) / v);
            resistance.push(acc.value());
        }
        Ok(Self { breaks, values, resistance, approximation_error: 0.0 })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::piecewise(alloc::vec![0.0, 1.0], alloc::vec![value])
    }

    /// Uniform cells on `[0, 1]`.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let breaks = (0..=n).map(|i| i as f64 / n as f64).collect();
        Self::piecewise(breaks, values)
    }

    /// Discretizes the smooth `λ(x) = s(x)` (periodic series read on `[0, 1]`) on
    /// `cells ≥ 2^14` uniform cells. Each cell carries the harmonic mean of `λ`,
    /// so `m` is exact at the breaks up to quadrature error.
    pub fn from_series(series: &TrigSeries, cells: usize) -> Result<Self> {
        let cells = cells.max(MIN_CELLS);
        let (lo, _) = series.extremes(crate::potential::MIN_GRID_POINTS);
        if !(lo > 0.0) {
            return Err(argument(format!("coefficient must be positive; its infimum is {lo}")));
        }
        let rule = GaussLegendre::new(DEFAULT_ORDER);
        let h = 1.0 / cells as f64;
        let values: Vec<f64> = (0..cells)
            .map(|i| {
                let a = i as f64 * h;
                h / rule.integrate(a, a + h, |z| 1.0 / series.value(z))
            })
            .collect();
        let mut c = Self::uniform(values)?;
        c.approximation_error = series.lipschitz(crate::potential::MIN_GRID_POINTS) * h / lo;
        Ok(c)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn approximation_error(&self) -> f64 {
        self.approximation_error
    }

    fn cell(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x).clamp(1, self.values.len()) - 1
    }

    pub fn value(&self, x: f64) -> f64 {
        self.values[self.cell(x)]
    }

    /// `m(x) = ∫_0^x dz / λ`.
    pub fn resistance(&self, x: f64) -> f64 {
        let i = self.cell(x);
        self.resistance[i] + (x - self.breaks[i]) / self.values[i]
    }

    pub fn total_resistance(&self) -> f64 {
        *self.resistance.last().unwrap()
    }

    /// Same shape, multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut c = Self::piecewise(self.breaks.clone(), self.values.iter().map(|v| v * factor).collect())?;
        c.approximation_error = self.approximation_error;
        Ok(c)
    }

    /// `sup max(μ/λ, λ/μ)` over the common refinement of both cell partitions.
    pub fn contrast(&self, other: &Coefficient) -> f64 {
        let mut points: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut s = 1.0f64;
        for w in points.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let r = self.value(mid) / other.value(mid);
            s = s.max(r).max(1.0 / r);
        }
        s
    }
}

fn interior(x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(argument(format!("point {x} is not in the open interval (0, 1)")));
    }
    Ok(())
}

/// `G_λ(x, y)`.
pub fn green_value(c: &Coefficient, x: f64, y: f64) -> Result<f64> {
    interior(x)?;
    interior(y)?;
    let total = c.total_resistance();
    let (lo, hi) = (c.resistance(x.min(y)), c.resistance(x.max(y)));
    Ok(lo * (total - hi) / total)
}

/// `∫ λ |∂G(x,·) ∂G(y,·)| / ∫ λ ∂G(x,·) ∂G(y,·)`, at most 3.
pub fn tiger_ratio(c: &Coefficient, x: f64, y: f64) -> Result<f64> {
    interior(x)?;
    interior(y)?;
    if x == y {
        return Err(argument("tiger ratio needs distinct points"));
    }
    let total = c.total_resistance();
    let a = c.resistance(x.min(y)) / total;
    let b = c.resistance(x.max(y)) / total;
    // λ∂G(p,·) is 1 − s_p left of p and −s_p right of it; each band contributes
    // (product of the two constants) × (resistance of the band)
    let bands = [((1.0 - a) * (1.0 - b), a), (-a * (1.0 - b), b - a), (a * b, 1.0 - b)];
    let signed: f64 = bands.iter().map(|(p, w)| p * w).sum();
    let absolute: f64 = bands.iter().map(|(p, w)| p.abs() * w).sum();
    Ok(absolute / signed)
}

/// Outcome of comparing `G_μ / G_λ` with `S^{±3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub contrast: f64,
    /// `min over pairs of 3 ln S − |ln(G_μ/G_λ)|`; negative means a violation.
    pub worst_margin: f64,
    pub worst_pair: (f64, f64),
    pub violations: usize,
    pub pairs: usize,
}

pub fn stability_ratio(lambda: &Coefficient, mu: &Coefficient, pairs: &[(f64, f64)]) -> Result<StabilityReport> {
    let s = lambda.contrast(mu);
    let allowed = 3.0 * s.ln();
    let mut report = StabilityReport {
        contrast: s,
        worst_margin: f64::INFINITY,
        worst_pair: (f64::NAN, f64::NAN),
        violations: 0,
        pairs: pairs.len(),
    };
    for &(x, y) in pairs {
        let ratio = green_value(mu, x, y)? / green_value(lambda, x, y)?;
        let margin = allowed - ratio.ln().abs();
        if margin < -1e-12 {
            report.violations += 1;
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_pair = (x, y);
        }
    }
    Ok(report)
}
