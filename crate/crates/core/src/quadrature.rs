//! Gauss–Legendre quadrature: nodes and weights, adaptive panel refinement on
//! an interval, and composite tensor-product grids on boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes an `n`-point rule by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
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

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over [a, b] with this rule mapped affinely.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Legendre polynomial P_n(x) and its derivative by the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
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

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
    pub panels: usize,
}

/// Adaptive Gauss–Legendre integration by panel bisection.
///
/// A panel is accepted when the 10-point value on it agrees with the sum over
/// its two halves to within `max(abs_tol, rel_tol * |value|)` scaled by the
/// panel's share of the interval.
#[derive(Debug, Clone)]
pub struct Adaptive {
    rule: GaussLegendre,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for Adaptive {
    fn default() -> Self {
        Self::new(1e-13, 1e-12)
    }
}

impl Adaptive {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            rule: GaussLegendre::new(10),
            abs_tol,
            rel_tol,
            max_panels: 1 << 14,
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> QuadResult {
        if a == b {
            return QuadResult {
                value: 0.0,
                error_estimate: 0.0,
                converged: true,
                panels: 0,
            };
        }
        let total = b - a;
        // A first coarse pass fixes the relative target.
        let coarse: f64 = (0..8)
            .map(|k| {
                let lo = a + total * k as f64 / 8.0;
                let hi = a + total * (k + 1) as f64 / 8.0;
                self.rule.integrate(&f, lo, hi)
            })
            .sum();
        let target = self.abs_tol.max(self.rel_tol * coarse.abs());

        let mut stack: Vec<(f64, f64, f64)> = (0..8)
            .rev()
            .map(|k| {
                let lo = a + total * k as f64 / 8.0;
                let hi = a + total * (k + 1) as f64 / 8.0;
                (lo, hi, self.rule.integrate(&f, lo, hi))
            })
            .collect();
        let mut value = 0.0;
        let mut err = 0.0;
        let mut panels = 0usize;
        let mut converged = true;
        while let Some((lo, hi, whole)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let left = self.rule.integrate(&f, lo, mid);
            let right = self.rule.integrate(&f, mid, hi);
            let diff = (left + right - whole).abs();
            let share = ((hi - lo) / total).abs();
            let out_of_budget = panels + stack.len() >= self.max_panels;
            if diff <= target * share || (hi - lo).abs() < 1e-12 * total.abs() || out_of_budget {
                if out_of_budget && diff > target * share {
                    converged = false;
                }
                value += left + right;
                err += diff;
                panels += 1;
            } else {
                stack.push((mid, hi, right));
                stack.push((lo, mid, left));
            }
        }
        if !value.is_finite() {
            converged = false;
        }
        QuadResult {
            value,
            error_estimate: err,
            converged,
            panels,
        }
    }
}

/// One axis of a composite Gauss–Legendre grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Axis {
    /// `panels` equal panels on [lo, hi] with an `order`-point rule each.
    pub fn uniform(lo: f64, hi: f64, panels: usize, order: usize) -> Self {
        let breaks: Vec<f64> = (0..=panels)
            .map(|k| lo + (hi - lo) * k as f64 / panels as f64)
            .collect();
        Self::from_breakpoints(&breaks, order)
    }

    /// Composite rule over consecutive breakpoints (sorted, duplicates dropped).
    pub fn from_breakpoints(breaks: &[f64], order: usize) -> Self {
        let mut b: Vec<f64> = breaks.to_vec();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
        let rule = GaussLegendre::new(order);
        let mut nodes = Vec::with_capacity(b.len().saturating_sub(1) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in b.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&x, &wt) in rule.nodes().iter().zip(rule.weights()) {
                nodes.push(mid + half * x);
                weights.push(wt * half);
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Tensor product of axes. Nodes are enumerated with the first axis varying
/// slowest (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    pub axes: Vec<Axis>,
}

impl TensorGrid {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    /// Same axis repeated `dim` times.
    pub fn cube(axis: Axis, dim: usize) -> Self {
        Self {
            axes: vec![axis; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes node `flat` into `point` and returns its weight.
    pub fn node(&self, mut flat: usize, point: &mut [f64]) -> f64 {
        let mut w = 1.0;
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let i = flat % axis.len();
            flat /= axis.len();
            point[k] = axis.nodes[i];
            w *= axis.weights[i];
        }
        w
    }

    /// All node weights in enumeration order.
    pub fn weights(&self) -> Vec<f64> {
        let mut point = vec![0.0; self.dim()];
        (0..self.len()).map(|i| self.node(i, &mut point)).collect()
    }

    /// Evaluates `f` at every node (in parallel) and returns values in
    /// enumeration order.
    pub fn evaluate<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        use rayon::prelude::*;
        let dim = self.dim();
        (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |point, i| {
                    self.node(i, point);
                    f(point)
                },
            )
            .collect()
    }

    /// Weighted sum of `f` over the grid; the reduction runs in node order.
    pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> f64 {
        let values = self.evaluate(f);
        self.weighted_sum(&values)
    }

    /// Σ w_i v_i in node order.
    pub fn weighted_sum(&self, values: &[f64]) -> f64 {
        let mut point = vec![0.0; self.dim()];
        values
            .iter()
            .enumerate()
            .map(|(i, v)| self.node(i, &mut point) * v)
            .sum()
    }
}

/// Resolution of a composite tensor grid: panels per axis and points per panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub panels: usize,
    pub order: usize,
    /// When set, the computation is repeated with twice the panels and fails
    /// if the relative disagreement exceeds this value.
    #[serde(default)]
    pub richardson_tol: Option<f64>,
}

impl GridSpec {
    /// Default resolution: ~400 nodes per axis at d = 1, ~200 at d = 2, ~60 beyond.
    pub fn default_for_dim(d: usize) -> Self {
        let panels = match d {
            1 => 100,
            2 => 50,
            _ => 15,
        };
        Self {
            panels,
            order: 4,
            richardson_tol: None,
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            panels: self.panels * 2,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels == 0 || self.order == 0 {
            return Err(Error::GridTooCoarse(format!(
                "panels = {} and order = {} must both be positive",
                self.panels, self.order
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} weight sum {s}");
            // degree 2n-1 is exact
            let deg = 2 * n - 2;
            let exact = 2.0 / (deg as f64 + 1.0);
            let got = rule.integrate(|x| x.powi(deg as i32), -1.0, 1.0);
            assert!((got - exact).abs() < 1e-12, "n={n} got {got} exact {exact}");
        }
    }

    #[test]
    fn adaptive_handles_kinks() {
        let q = Adaptive::default().integrate(|x: f64| x.abs(), -1.0, 2.0);
        assert!(q.converged);
        assert!((q.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn adaptive_reports_non_convergence() {
        let mut a = Adaptive::new(1e-30, 1e-30);
        a.max_panels = 16;
        let q = a.integrate(|x: f64| (1.0 / x.abs().max(1e-300)).sqrt(), -1.0, 1.0);
        assert!(!q.converged);
    }

    #[test]
    fn tensor_grid_gaussian_mass() {
        let axis = Axis::uniform(-8.0, 8.0, 40, 6);
        let grid = TensorGrid::cube(axis, 2);
        let v = grid.integrate(|x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / (2.0 * std::f64::consts::PI));
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_deduplicate() {
        let axis = Axis::from_breakpoints(&[1.0, 0.0, 0.5, 0.5, 1.0], 3);
        assert_eq!(axis.len(), 6);
        assert!((axis.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-15);
    }
}
