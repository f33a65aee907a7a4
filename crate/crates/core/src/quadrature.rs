//! Composite Gauss–Legendre quadrature with a fixed reduction tree.
//!
//! Panel sums are accumulated in blocks of [`BLOCK`] panels and the block sums
//! are then combined pairwise, so a given `(interval, panels, rule)` always
//! produces the same bits regardless of how the caller schedules work.

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

/// Panels per block before the pairwise stage.
pub const BLOCK: usize = 1024;

/// Default number of nodes per panel.
pub const DEFAULT_ORDER: usize = 8;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integral of `f` over a single interval `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Composite rule over `panels` equal panels of `[a, b]`.
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        reduce_blocks(panels, |p| {
            let lo = a + h * p as f64;
            self.integrate(lo, lo + h, &mut f)
        })
    }

    /// Composite rule returning `ln ∫ exp(g)` without overflow.
    ///
    /// Each panel is shifted by its own maximum and the panels are merged with
    /// the same fixed tree as [`GaussLegendre::composite`].
    pub fn composite_log_exp<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut g: F) -> f64 {
        let h = (b - a) / panels as f64;
        let half = 0.5 * h;
        let mut values = alloc::vec![0.0; self.order()];
        let mut blocks: Vec<LogSum> = Vec::with_capacity(panels.div_ceil(BLOCK));
        let mut p = 0;
        while p < panels {
            let end = (p + BLOCK).min(panels);
            let mut block = LogSum::EMPTY;
            for q in p..end {
                let mid = a + h * q as f64 + half;
                let mut peak = f64::NEG_INFINITY;
                for (v, x) in values.iter_mut().zip(&self.nodes) {
                    *v = g(mid + half * x);
                    peak = peak.max(*v);
                }
                let mut s = 0.0;
                for (v, w) in values.iter().zip(&self.weights) {
                    s += w * (v - peak).exp();
                }
                block = block.merge(LogSum { shift: peak, sum: s * half });
            }
            blocks.push(block);
            p = end;
        }
        pairwise_log(&blocks).ln()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A positive sum stored as `sum · e^shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSum {
    pub shift: f64,
    pub sum: f64,
}

impl LogSum {
    pub const EMPTY: LogSum = LogSum { shift: f64::NEG_INFINITY, sum: 0.0 };

    pub fn merge(self, other: LogSum) -> LogSum {
        if self.sum == 0.0 {
            return other;
        }
        if other.sum == 0.0 {
            return self;
        }
        let shift = self.shift.max(other.shift);
        LogSum { shift, sum: self.sum * (self.shift - shift).exp() + other.sum * (other.shift - shift).exp() }
    }

    /// Natural logarithm of the represented value.
    pub fn ln(self) -> f64 {
        self.sum.ln() + self.shift
    }
}

fn pairwise_log(parts: &[LogSum]) -> LogSum {
    match parts.len() {
        0 => LogSum::EMPTY,
        1 => parts[0],
        n => pairwise_log(&parts[..n / 2]).merge(pairwise_log(&parts[n / 2..])),
    }
}

/// Sums `term(0..count)` in blocks of [`BLOCK`], then pairwise over blocks.
pub fn reduce_blocks<F: FnMut(usize) -> f64>(count: usize, mut term: F) -> f64 {
    let mut blocks = Vec::with_capacity(count.div_ceil(BLOCK));
    let mut p = 0;
    while p < count {
        let end = (p + BLOCK).min(count);
        let mut acc = Neumaier::default();
        for q in p..end {
            acc.add(term(q));
        }
        blocks.push(acc.value());
        p = end;
    }
    pairwise_sum(&blocks)
}

/// Recursive pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Compensated (Kahan–Babuška–Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the highest exact degree for 8 nodes
        let v = rule.integrate(0.0, 1.0, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-15);
        let w: f64 = rule.weights().iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_rule_has_center_node() {
        let rule = GaussLegendre::new(5);
        assert_eq!(rule.nodes()[2], 0.0);
        let v = rule.integrate(-1.0, 1.0, |x| x.powi(8));
        assert!((v - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn composite_periodic_integral() {
        let rule = GaussLegendre::new(DEFAULT_ORDER);
        let v = rule.composite(0.0, 1.0, 64, |x| (2.0 * PI * x).sin().powi(2));
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn log_exp_matches_direct_and_survives_overflow() {
        let rule = GaussLegendre::new(DEFAULT_ORDER);
        let direct = rule.composite(0.0, 1.0, 128, |x| (3.0 * (2.0 * PI * x).sin()).exp()).ln();
        let logged = rule.composite_log_exp(0.0, 1.0, 128, |x| 3.0 * (2.0 * PI * x).sin());
        assert!((direct - logged).abs() < 1e-13);
        let big = rule.composite_log_exp(0.0, 1.0, 128, |x| 1000.0 + (2.0 * PI * x).sin());
        assert!((big - 1000.0 - bessel_i0_ln(1.0)).abs() < 1e-12);
    }

    fn bessel_i0_ln(c: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= (c / 2.0) * (c / 2.0) / (k as f64 * k as f64);
            sum += term;
        }
        sum.ln()
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let mut acc = Neumaier::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            acc.add(x);
        }
        assert_eq!(acc.value(), 2.0);
    }
}
