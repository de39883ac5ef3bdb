//! Univariate kernels of a given order and their isotropic products.
//!
//! A kernel of order β integrates to one and has vanishing moments
//! ∫ u^j G(u) du = 0 for 0 < j ≤ ⌊β⌋, where ⌊β⌋ is the largest integer
//! strictly below β. For integer orders ℓ that means moments 1..ℓ-1 vanish,
//! and the ℓ-th absolute moment is merely finite. Epanechnikov and Gaussian
//! are order 2; higher orders come from an orthonormal Legendre sum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quadrature::{Adaptive, Axis, TensorGrid};

/// Moment tolerance used when none is given.
pub const DEFAULT_MOMENT_TOL: f64 = 1e-8;

/// Truncation radius for integrating the Gaussian profile.
pub const GAUSSIAN_TRUNCATION: f64 = 10.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Shape of a univariate kernel profile.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Epanechnikov,
    Gaussian,
    /// Polynomial on [-1, 1] in the monomial basis, zero outside.
    Polynomial(Vec<f64>),
}

/// Univariate kernel G with its order and cached ∫G².
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    name: String,
    profile: Profile,
    order: usize,
    support_radius: Option<f64>,
    l2_norm_sq: f64,
}

impl Kernel1D {
    /// 0.75 (1 - u²) on |u| ≤ 1.
    pub fn epanechnikov() -> Self {
        Self::with_profile("epanechnikov".into(), Profile::Epanechnikov, 2, Some(1.0))
    }

    /// Standard normal density.
    pub fn gaussian() -> Self {
        Self::with_profile("gaussian".into(), Profile::Gaussian, 2, None)
    }

    /// Symmetric polynomial kernel on [-1, 1] of order at least `ell`.
    ///
    /// G(u) = Σ_k φ_k(0) φ_k(u) over the orthonormal Legendre polynomials
    /// φ_k = sqrt((2k+1)/2) P_k of degree k ≤ L - 2, where L is `ell` rounded up
    /// to an even number. Odd-degree terms vanish because φ_k(0) = 0, so the
    /// kernel is even and its moments 1..L-1 are zero.
    pub fn higher_order(ell: usize) -> Result<Self> {
        if ell < 2 {
            return Err(Error::InvalidParameter(format!(
                "kernel order must be at least 2, got {ell}"
            )));
        }
        let order = ell + ell % 2;
        let degree = order - 2;
        let legendre = legendre_coefficients(degree);
        let mut coeffs = vec![0.0; degree + 1];
        for (k, pk) in legendre.iter().enumerate() {
            let at_zero = pk[0];
            if at_zero == 0.0 {
                continue;
            }
            let scale = (2.0 * k as f64 + 1.0) / 2.0 * at_zero;
            for (c, &p) in coeffs.iter_mut().zip(pk) {
                *c += scale * p;
            }
        }
        Ok(Self::with_profile(
            format!("order{order}"),
            Profile::Polynomial(coeffs),
            order,
            Some(1.0),
        ))
    }

    fn with_profile(name: String, profile: Profile, order: usize, support_radius: Option<f64>) -> Self {
        let mut k = Self {
            name,
            profile,
            order,
            support_radius,
            l2_norm_sq: 0.0,
        };
        let (lo, hi) = k.integration_range();
        k.l2_norm_sq = Adaptive::default()
            .integrate(|u| {
                let g = k.eval(u);
                g * g
            }, lo, hi)
            .value;
        k
    }

    /// Parses "epanechnikov", "gaussian" or "order<ℓ>".
    pub fn from_name(name: &str) -> Result<Self> {
        name.parse()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Declared order β (moments 1..β-1 vanish).
    pub fn order(&self) -> usize {
        self.order
    }

    /// `None` for unbounded support.
    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    /// ∫ G².
    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_norm_sq
    }

    /// Interval over which integrals of G are computed.
    pub fn integration_range(&self) -> (f64, f64) {
        let r = self.support_radius.unwrap_or(GAUSSIAN_TRUNCATION);
        (-r, r)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.profile {
            Profile::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Profile::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Profile::Polynomial(c) => {
                if u.abs() <= 1.0 {
                    c.iter().rev().fold(0.0, |acc, &a| acc * u + a)
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Kernel1D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        match name.as_str() {
            "epanechnikov" => Ok(Self::epanechnikov()),
            "gaussian" => Ok(Self::gaussian()),
            other => match other.strip_prefix("order").map(str::parse::<usize>) {
                Some(Ok(ell)) => Self::higher_order(ell),
                _ => Err(Error::Config(format!(
                    "unknown kernel {s:?}; expected epanechnikov, gaussian or order<N>"
                ))),
            },
        }
    }
}

impl fmt::Display for Kernel1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Monomial coefficients of P_0..=P_degree.
fn legendre_coefficients(degree: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        polys.push(vec![0.0, 1.0]);
    }
    for k in 2..=degree {
        let kf = k as f64;
        let mut next = vec![0.0; k + 1];
        for (i, &c) in polys[k - 1].iter().enumerate() {
            next[i + 1] += (2.0 * kf - 1.0) / kf * c;
        }
        for (i, &c) in polys[k - 2].iter().enumerate() {
            next[i] -= (kf - 1.0) / kf * c;
        }
        polys.push(next);
    }
    polys
}

/// Moment check of a univariate kernel against a declared order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub kernel: String,
    pub order: usize,
    pub tolerance: f64,
    /// |∫G - 1|.
    pub integral_one_err: f64,
    /// |∫u^j G| for j = 1..order-1.
    pub moment_errs: Vec<f64>,
    /// ∫|u|^order |G|, which must be finite.
    pub beta_moment: f64,
    /// Mass-weighted tail bound beyond the truncation radius (unbounded kernels).
    pub truncation_tail_bound: Option<f64>,
    pub converged: bool,
    pub passed: bool,
}

/// Checks the moment conditions of a kernel of order `ell` by quadrature.
pub fn verify_order(k: &Kernel1D, ell: usize, tol: f64) -> Result<MomentReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if ell == 0 {
        return Err(Error::InvalidParameter("order must be positive".into()));
    }
    let quad = Adaptive::new(1e-15, 1e-13);
    let (lo, hi) = k.integration_range();
    let mut converged = true;
    let mut integrate = |f: &dyn Fn(f64) -> f64| {
        let r = quad.integrate(f, lo, hi);
        converged &= r.converged;
        r.value
    };

    let integral_one_err = (integrate(&|u| k.eval(u)) - 1.0).abs();
    let moment_errs: Vec<f64> = (1..ell)
        .map(|j| integrate(&|u| u.powi(j as i32) * k.eval(u)).abs())
        .collect();
    let beta_moment = integrate(&|u| u.abs().powi(ell as i32) * k.eval(u).abs());
    let finite = beta_moment.is_finite();

    let truncation_tail_bound = match k.support_radius() {
        Some(_) => None,
        None => {
            // both tails, heaviest moment that was checked
            let tail = quad.integrate(
                |u| u.powi(ell as i32) * k.eval(u).abs(),
                hi,
                hi + 30.0,
            );
            converged &= tail.converged;
            Some(2.0 * tail.value)
        }
    };

    let passed = converged
        && finite
        && integral_one_err < tol
        && moment_errs.iter().all(|&e| e < tol)
        && truncation_tail_bound.is_none_or(|t| t < tol);
    Ok(MomentReport {
        kernel: k.name().to_string(),
        order: ell,
        tolerance: tol,
        integral_one_err,
        moment_errs,
        beta_moment,
        truncation_tail_bound,
        converged,
        passed,
    })
}

/// Isotropic product kernel K(u) = G(u_1)···G(u_d).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    base: Kernel1D,
    dim: usize,
}

impl ProductKernel {
    pub fn new(base: Kernel1D, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { base, dim })
    }

    pub fn base(&self) -> &Kernel1D {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.dim, u.len())?;
        Ok(self.eval_unchecked(u))
    }

    /// Product of profile values, exactly zero once a coordinate leaves the support.
    #[inline]
    pub fn eval_unchecked(&self, u: &[f64]) -> f64 {
        let radius = self.base.support_radius;
        let mut prod = 1.0;
        for &ui in u {
            if radius.is_some_and(|r| ui.abs() > r) {
                return 0.0;
            }
            prod *= self.base.eval(ui);
        }
        prod
    }

    /// ∫K² = (∫G²)^d.
    pub fn l2_norm_sq(&self) -> f64 {
        self.base.l2_norm_sq.powi(self.dim as i32)
    }

    /// ∫K² by tensor quadrature, for cross-checking the product identity.
    pub fn l2_norm_sq_quadrature(&self, panels: usize, order: usize) -> Result<f64> {
        if self.dim > 3 {
            return Err(Error::InvalidParameter(format!(
                "tensor quadrature limited to d <= 3, got {}",
                self.dim
            )));
        }
        let (lo, hi) = self.base.integration_range();
        let grid = TensorGrid::cube(Axis::uniform(lo, hi, panels, order), self.dim);
        Ok(grid.integrate(|u| {
            let k = self.eval_unchecked(u);
            k * k
        }))
    }
}

/// Gaussian density φ(u).
#[inline]
pub fn std_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn epanechnikov_values() {
        let k = Kernel1D::epanechnikov();
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(1.5), 0.0);
        assert!((k.l2_norm_sq() - 0.6).abs() < 1e-14);
        assert_eq!(k.order(), 2);
        assert_eq!(k.support_radius(), Some(1.0));
    }

    #[test]
    fn gaussian_values() {
        let k = Kernel1D::gaussian();
        assert!((k.eval(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert!(k.support_radius().is_none());
        let r = verify_order(&k, 2, 1e-8).unwrap();
        assert!(r.integral_one_err < 1e-10);
        assert!(r.moment_errs[0] < 1e-12);
        assert!(r.passed);
        assert!(r.truncation_tail_bound.unwrap() < 1e-20);
        // ∫G² = 1/(2√π)
        assert!((k.l2_norm_sq() - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn epanechnikov_order_checks() {
        let k = Kernel1D::epanechnikov();
        let two = verify_order(&k, 2, 1e-8).unwrap();
        assert!(two.passed);
        assert!((two.beta_moment - 0.2).abs() < 1e-12);
        let four = verify_order(&k, 4, 1e-8).unwrap();
        assert!(!four.passed);
        // 0.75 (2/3 - 2/5)
        assert!((four.moment_errs[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn legendre_kernels() {
        let two = Kernel1D::higher_order(2).unwrap();
        assert!(verify_order(&two, 2, 1e-8).unwrap().passed);

        let four = Kernel1D::higher_order(4).unwrap();
        let r = verify_order(&four, 4, 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.moment_errs[1] < 1e-8);
        // 9/8 - 15/8 u²
        assert!((four.eval(0.0) - 1.125).abs() < 1e-14);
        assert!((four.eval(0.5) - (1.125 - 15.0 / 32.0)).abs() < 1e-14);
        assert!((-100..=100).any(|i| four.eval(i as f64 / 100.0) < 0.0));

        let three = Kernel1D::higher_order(3).unwrap();
        assert_eq!(three.order(), 4);
        assert_eq!(three, four);

        for ell in [6, 8] {
            let k = Kernel1D::higher_order(ell).unwrap();
            assert!(verify_order(&k, ell, 1e-8).unwrap().passed);
        }
        assert!(Kernel1D::higher_order(1).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!(Kernel1D::from_name("Epanechnikov").unwrap().name(), "epanechnikov");
        assert_eq!(Kernel1D::from_name("order6").unwrap().order(), 6);
        assert!(Kernel1D::from_name("triweight").is_err());
        assert!(Kernel1D::from_name("order1").is_err());
    }

    #[test]
    fn product_kernel_examples() {
        let k = ProductKernel::new(Kernel1D::epanechnikov(), 3).unwrap();
        assert!((k.eval(&[0.0, 0.0, 0.0]).unwrap() - 0.421_875).abs() < 1e-15);
        let k2 = ProductKernel::new(Kernel1D::epanechnikov(), 2).unwrap();
        assert_eq!(k2.eval(&[0.0, 1.5]).unwrap(), 0.0);
        assert!(matches!(k2.eval(&[0.0]), Err(Error::DimensionMismatch { .. })));
        let g = ProductKernel::new(Kernel1D::gaussian(), 1).unwrap();
        assert_eq!(g.eval(&[0.3]).unwrap(), Kernel1D::gaussian().eval(0.3));
    }

    #[test]
    fn product_l2_matches_tensor_quadrature() {
        for base in [Kernel1D::epanechnikov(), Kernel1D::gaussian(), Kernel1D::higher_order(4).unwrap()] {
            for d in 1..=3 {
                let k = ProductKernel::new(base.clone(), d).unwrap();
                let q = k.l2_norm_sq_quadrature(if d == 3 { 10 } else { 16 }, 10).unwrap();
                let rel = (q - k.l2_norm_sq()).abs() / k.l2_norm_sq();
                assert!(rel < 1e-8, "{} d={d} rel={rel}", base.name());
            }
        }
    }

    #[test]
    fn kernels_are_symmetric() {
        for k in [
            Kernel1D::epanechnikov(),
            Kernel1D::gaussian(),
            Kernel1D::higher_order(4).unwrap(),
            Kernel1D::higher_order(6).unwrap(),
        ] {
            for i in 0..=300 {
                let u = i as f64 / 100.0;
                assert_eq!(k.eval(u), k.eval(-u), "{} at {u}", k.name());
            }
        }
    }
}
