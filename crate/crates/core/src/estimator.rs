//! Parzen–Rosenblatt estimator f̂_h(x) = (n h^d)^-1 Σ_i K((x - X_i)/h).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::ProductKernel;
use crate::quadrature::TensorGrid;
use crate::sample::Sample;

/// h = A (d² n)^(-1/(2β+d)).
pub fn oracle_bandwidth(n: usize, d: usize, beta: f64, a: f64) -> f64 {
    let (n, d) = (n as f64, d as f64);
    a * (d * d * n).powf(-1.0 / (2.0 * beta + d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BandwidthPolicy {
    Oracle {
        #[serde(rename = "A")]
        a: f64,
    },
    Fixed {
        h_fixed: f64,
    },
}

impl BandwidthPolicy {
    pub fn resolve(&self, n: usize, d: usize, beta: f64) -> Result<f64> {
        let h = match *self {
            Self::Oracle { a } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidParameter(format!("A must be positive, got {a}")));
                }
                if !(beta > 1.0) {
                    return Err(Error::InvalidParameter(format!("beta must exceed 1, got {beta}")));
                }
                oracle_bandwidth(n, d, beta, a)
            }
            Self::Fixed { h_fixed } => h_fixed,
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
        }
        Ok(h)
    }
}

/// A fitted estimator. The sample is stored sorted by its first coordinate so
/// bounded kernels only visit the points whose first coordinate is in range.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    sample: Sample,
    kernel: ProductKernel,
    bandwidth: f64,
    positive_part: bool,
    norm: f64,
}

/// Fits the estimator. The positive part is applied by default for kernels
/// of order above two.
pub fn fit(sample: &Sample, kernel: ProductKernel, policy: &BandwidthPolicy, beta: f64) -> Result<KdeModel> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    check_dim(kernel.dim(), sample.dim())?;
    let h = policy.resolve(sample.len(), sample.dim(), beta)?;
    let positive_part = kernel.base().order() > 2;
    Ok(KdeModel {
        norm: 1.0 / (sample.len() as f64 * h.powi(sample.dim() as i32)),
        sample: sample.sorted_by_first(),
        kernel,
        bandwidth: h,
        positive_part,
    })
}

impl KdeModel {
    pub fn with_positive_part(mut self, on: bool) -> Self {
        self.positive_part = on;
        self
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn positive_part(&self) -> bool {
        self.positive_part
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.sample.dim()
    }

    pub fn n(&self) -> usize {
        self.sample.len()
    }

    /// The stored (sorted) sample.
    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    /// Row range whose first coordinate may lie within the kernel support of x0.
    fn candidate_rows(&self, x0: f64) -> std::ops::Range<usize> {
        let Some(r) = self.kernel.base().support_radius() else {
            return 0..self.sample.len();
        };
        let reach = self.bandwidth * r * (1.0 + 1e-9) + 1e-300;
        let d = self.sample.dim();
        let data = self.sample.as_slice();
        let n = self.sample.len();
        let lo = partition(n, |i| data[i * d] < x0 - reach);
        let hi = partition(n, |i| data[i * d] <= x0 + reach);
        lo..hi.max(lo)
    }

    /// Unnormalised kernel sum Σ_i K((x - X_i)/h), in stored order.
    fn kernel_sum(&self, x: &[f64], u: &mut [f64]) -> f64 {
        let h = self.bandwidth;
        let mut sum = 0.0;
        for i in self.candidate_rows(x[0]) {
            let xi = self.sample.row(i);
            for ((ua, &xa), &xia) in u.iter_mut().zip(x).zip(xi) {
                *ua = (xa - xia) / h;
            }
            sum += self.kernel.eval_unchecked(u);
        }
        sum
    }

    fn finish(&self, sum: f64) -> f64 {
        let v = sum * self.norm;
        if self.positive_part {
            v.max(0.0)
        } else {
            v
        }
    }

    /// Estimate without the positive part, whatever the model flag.
    pub fn evaluate_raw(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut u = vec![0.0; x.len()];
        Ok(self.kernel_sum(x, &mut u) * self.norm)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.evaluate_unchecked(x))
    }

    #[inline]
    pub fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        let mut u = vec![0.0; x.len()];
        self.finish(self.kernel_sum(x, &mut u))
    }

    /// Row-wise [`evaluate`](Self::evaluate); identical values in any thread count.
    pub fn evaluate_batch(&self, points: &Sample) -> Result<Vec<f64>> {
        check_dim(self.dim(), points.dim())?;
        Ok(points
            .as_slice()
            .par_chunks_exact(points.dim())
            .map(|x| self.evaluate_unchecked(x))
            .collect())
    }

    /// The estimate at every node of `grid`, in node order, bit-identical to
    /// calling [`evaluate`](Self::evaluate) per node.
    pub fn evaluate_grid(&self, grid: &TensorGrid) -> Result<Vec<f64>> {
        check_dim(self.dim(), grid.dim())?;
        let Some(r) = self.kernel.base().support_radius() else {
            return Ok(grid.evaluate(|x| self.evaluate_unchecked(x)));
        };
        let d = self.dim();
        let h = self.bandwidth;
        let reach = h * r * (1.0 + 1e-9) + 1e-300;
        let mut sums = vec![0.0; grid.len()];
        let strides: Vec<usize> = (0..d)
            .map(|a| grid.axes[a + 1..].iter().map(|ax| ax.len()).product())
            .collect();
        let mut per_axis: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
        for xi in self.sample.rows() {
            let mut empty = false;
            for (a, list) in per_axis.iter_mut().enumerate() {
                list.clear();
                let nodes = &grid.axes[a].nodes;
                let lo = nodes.partition_point(|&t| t < xi[a] - reach);
                let hi = nodes.partition_point(|&t| t <= xi[a] + reach);
                for (k, &t) in nodes.iter().enumerate().take(hi).skip(lo) {
                    let u = (t - xi[a]) / h;
                    if u.abs() > r {
                        continue;
                    }
                    list.push((k, u));
                }
                if list.is_empty() {
                    empty = true;
                    break;
                }
            }
            if empty {
                continue;
            }
            scatter(&self.kernel, &per_axis, &strides, &mut sums);
        }
        Ok(sums.into_iter().map(|s| self.finish(s)).collect())
    }
}

/// Adds Π_a G(u_a) to every tensor node spanned by the per-axis lists.
fn scatter(kernel: &ProductKernel, per_axis: &[Vec<(usize, f64)>], strides: &[usize], sums: &mut [f64]) {
    let d = per_axis.len();
    let mut pos = vec![0usize; d];
    let base = kernel.base();
    loop {
        let mut prod = 1.0;
        let mut flat = 0;
        for a in 0..d {
            let (k, u) = per_axis[a][pos[a]];
            prod *= base.eval(u);
            flat += k * strides[a];
        }
        sums[flat] += prod;
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            pos[a] += 1;
            if pos[a] < per_axis[a].len() {
                break;
            }
            pos[a] = 0;
        }
    }
}

/// First index in 0..n for which `pred` is false; `pred` must be monotone.
fn partition(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel1D;
    use crate::quadrature::Axis;
    use proptest::prelude::*;

    fn epa(d: usize) -> ProductKernel {
        ProductKernel::new(Kernel1D::epanechnikov(), d).unwrap()
    }

    fn fixed(h: f64) -> BandwidthPolicy {
        BandwidthPolicy::Fixed { h_fixed: h }
    }

    #[test]
    fn oracle_bandwidth_examples() {
        assert!((oracle_bandwidth(1024, 1, 2.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((oracle_bandwidth(16, 2, 2.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(oracle_bandwidth(16, 2, 2.0, 2.0), 2.0 * oracle_bandwidth(16, 2, 2.0, 1.0));
    }

    #[test]
    fn fit_examples() {
        let s = Sample::new(1, (0..1024).map(|i| i as f64 / 1024.0).collect()).unwrap();
        assert_eq!(fit(&s, epa(1), &fixed(0.3), 2.0).unwrap().bandwidth(), 0.3);
        let m = fit(&s, epa(1), &BandwidthPolicy::Oracle { a: 1.0 }, 2.0).unwrap();
        assert!((m.bandwidth() - 0.25).abs() < 1e-15);
        assert!(!m.positive_part());
        let one = Sample::new(1, vec![0.0]).unwrap();
        let m = fit(&one, epa(1), &fixed(1.0), 2.0).unwrap();
        assert_eq!(m.evaluate(&[0.0]).unwrap(), 0.75);
        assert_eq!(m.evaluate(&[1.5]).unwrap(), 0.0);
        assert!(m.evaluate(&[0.0, 0.0]).is_err());
        assert!(fit(&one, epa(2), &fixed(1.0), 2.0).is_err());
        assert!(fit(&one, epa(1), &fixed(0.0), 2.0).is_err());
    }

    #[test]
    fn higher_order_kernel_goes_negative_without_positive_part() {
        let k = ProductKernel::new(Kernel1D::higher_order(4).unwrap(), 1).unwrap();
        let s = Sample::new(1, vec![0.0, 0.05]).unwrap();
        let m = fit(&s, k, &fixed(1.0), 4.0).unwrap();
        assert!(m.positive_part());
        let raw = m.evaluate_raw(&[0.95]).unwrap();
        assert!(raw < 0.0, "raw={raw}");
        assert_eq!(m.evaluate(&[0.95]).unwrap(), 0.0);
    }

    #[test]
    fn batch_matches_loop() {
        let s = crate::density::BaseGaussian::new(2, 1.0).unwrap().sample(500, 3).unwrap();
        let m = fit(&s, epa(2), &fixed(0.4), 2.0).unwrap();
        let q = crate::density::BaseGaussian::new(2, 1.0).unwrap().sample(100, 4).unwrap();
        let batch = m.evaluate_batch(&q).unwrap();
        for (row, &b) in q.rows().zip(&batch) {
            assert!((m.evaluate(row).unwrap() - b).abs() <= 1e-14);
        }
        let dup = Sample::new(2, [q.row(0), q.row(0)].concat()).unwrap();
        let v = m.evaluate_batch(&dup).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(m.evaluate_batch(&Sample::new(2, q.row(5).to_vec()).unwrap()).unwrap()[0], batch[5]);
    }

    #[test]
    fn grid_scatter_is_bit_identical() {
        for (d, kernel) in [(1, Kernel1D::epanechnikov()), (2, Kernel1D::higher_order(4).unwrap()), (3, Kernel1D::epanechnikov())] {
            let s = crate::density::BaseGaussian::new(d, 1.0).unwrap().sample(300, 8).unwrap();
            let m = fit(&s, ProductKernel::new(kernel, d).unwrap(), &fixed(0.5), 2.0).unwrap();
            let grid = TensorGrid::cube(Axis::uniform(-4.0, 4.0, 9, 3), d);
            let fast = m.evaluate_grid(&grid).unwrap();
            let slow = grid.evaluate(|x| m.evaluate(x).unwrap());
            assert_eq!(fast, slow, "d={d}");
        }
    }

    #[test]
    fn integrates_to_one() {
        for d in 1..=2 {
            let s = crate::density::BaseGaussian::new(d, 1.0).unwrap().sample(200, 1).unwrap();
            let h = 0.6;
            let m = fit(&s, epa(d), &fixed(h), 2.0).unwrap();
            let (lo, hi) = s.as_slice().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            // panel breaks at every kernel support edge make the rule exact
            let mut breaks = vec![lo - h, hi + h];
            for &v in s.as_slice() {
                breaks.push(v - h);
                breaks.push(v + h);
            }
            let axis = Axis::from_breakpoints(&breaks, 2);
            let grid = TensorGrid::cube(axis, d);
            let total = grid.weighted_sum(&m.evaluate_grid(&grid).unwrap());
            assert!((total - 1.0).abs() < 1e-6, "d={d} total={total}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn translation_equivariance(
            pts in prop::collection::vec(-2.0f64..2.0, 2..40),
            shift in -3.0f64..3.0,
            x in -2.5f64..2.5,
            h in 0.2f64..1.5,
        ) {
            let s = Sample::new(1, pts.clone()).unwrap();
            let t = Sample::new(1, pts.iter().map(|v| v + shift).collect()).unwrap();
            let a = fit(&s, epa(1), &fixed(h), 2.0).unwrap().evaluate(&[x]).unwrap();
            let b = fit(&t, epa(1), &fixed(h), 2.0).unwrap().evaluate(&[x + shift]).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0) * 10.0, "a={} b={}", a, b);
        }

        #[test]
        fn bandwidth_scaling(
            pts in prop::collection::vec(-2.0f64..2.0, 4..40),
            c in prop::sample::select(vec![0.5f64, 2.0, 4.0, 0.25]),
            x in -2.0f64..2.0,
            y in -2.0f64..2.0,
        ) {
            let d = 2;
            let h = 0.75;
            let s = Sample::new(d, pts.iter().copied().take(pts.len() / 2 * 2).collect()).unwrap();
            let sc = Sample::new(d, s.as_slice().iter().map(|v| v * c).collect()).unwrap();
            let a = fit(&s, epa(d), &fixed(h), 2.0).unwrap().evaluate(&[x, y]).unwrap();
            let b = fit(&sc, epa(d), &fixed(c * h), 2.0).unwrap().evaluate(&[c * x, c * y]).unwrap();
            prop_assert!((b - a / (c * c)).abs() <= 1e-12 * a.abs() / (c * c) + 1e-300);
        }

        #[test]
        fn positive_part_dominance(
            pts in prop::collection::vec(-1.0f64..1.0, 1..20),
            x in -2.0f64..2.0,
        ) {
            let k = ProductKernel::new(Kernel1D::higher_order(4).unwrap(), 1).unwrap();
            let s = Sample::new(1, pts).unwrap();
            let m = fit(&s, k, &fixed(0.5), 4.0).unwrap();
            let raw = m.evaluate_raw(&[x]).unwrap();
            let pos = m.evaluate(&[x]).unwrap();
            prop_assert!(pos >= 0.0);
            if raw >= 0.0 {
                prop_assert_eq!(pos, raw);
            }
        }
    }
}
