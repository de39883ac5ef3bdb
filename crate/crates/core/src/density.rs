//! The Gaussian base density, the compactly supported bump, and the family of
//! perturbed densities used as hard instances for the lower bound.
//!
//! The perturbed density is
//!
//! ```text
//! f_ω(x) = f_0(x) + Σ_j ω(j) γ_{m,j}(x),
//! γ_{m,j}(x) = m^-β Γ(m x - j),   Γ(u) = d C Π_i Γ_0(u_i),
//! ```
//!
//! with j ranging over {1..m}^d. Γ_0 is the derivative of the smooth bump
//! exp(-1/(1-4u²)) on (-1/2, 1/2), scaled by 1/a. Being a derivative of a
//! compactly supported function it integrates to zero, so every f_ω has unit
//! mass. It changes sign, which is what makes the unit mass possible.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::std_normal_pdf;
use crate::quadrature::{Adaptive, Axis, TensorGrid};
use crate::sample::Sample;
use crate::seed::{derive_seed, rng_for};

/// Rows drawn per independently seeded chunk.
pub const SAMPLE_CHUNK: usize = 1024;

/// Rejection sampling aborts below this acceptance probability.
pub const ACCEPTANCE_FLOOR: f64 = 0.01;

/// Slack factor applied to the Hölder margin when fixing the bump scale.
pub const HOLDER_SLACK: f64 = 0.9;

/// Smoothness class parameters (β, C, p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NikolskiiParams {
    pub beta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub p: f64,
}

impl NikolskiiParams {
    pub fn new(beta: f64, c: f64, p: f64) -> Result<Self> {
        let params = Self { beta, c, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must exceed 1, got {}", self.beta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must lie in [2, inf), got {}", self.p)));
        }
        Ok(())
    }

    /// Largest integer strictly below β.
    pub fn floor_beta(&self) -> usize {
        strict_floor(self.beta)
    }
}

/// Largest integer strictly less than `x` (for x > 0).
pub fn strict_floor(x: f64) -> usize {
    (x.ceil() - 1.0).max(0.0) as usize
}

/// Anything that can be evaluated as a density on R^d.
pub trait Density: Sync {
    fn dim(&self) -> usize;

    fn eval_unchecked(&self, x: &[f64]) -> f64;

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval_unchecked(x))
    }
}

/// f_0(x) = σ^-d Π φ(x_i / σ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseGaussian {
    pub dim: usize,
    pub sigma: f64,
}

impl BaseGaussian {
    pub fn new(dim: usize, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { dim, sigma })
    }

    /// Exact i.i.d. draws, generated in seeded chunks of [`SAMPLE_CHUNK`] rows.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        let chunks: Vec<Vec<f64>> = chunk_sizes(n)
            .into_par_iter()
            .map(|(c, rows)| {
                let mut rng = rng_for(seed, &[c as u64]);
                let mut out = Vec::with_capacity(rows * self.dim);
                for _ in 0..rows * self.dim {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(self.sigma * z);
                }
                out
            })
            .collect();
        Sample::new(self.dim, chunks.concat())
    }

    /// Smallest value of f_0 over the box [-r, r]^d.
    pub fn inf_on_cube(&self, r: f64) -> f64 {
        (std_normal_pdf(r / self.sigma) / self.sigma).powi(self.dim as i32)
    }
}

impl Density for BaseGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|&xi| std_normal_pdf(xi / self.sigma) / self.sigma)
            .product()
    }
}

fn chunk_sizes(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(SAMPLE_CHUNK))
        .map(|c| (c, SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK)))
        .collect()
}

/// g(u) = exp(-1/(1-4u²)) and its first four derivatives, zero outside (-1/2, 1/2).
pub fn smooth_step_derivatives(u: f64) -> [f64; 5] {
    let s = 1.0 - 4.0 * u * u;
    if s <= 0.0 || 1.0 / s > 700.0 {
        return [0.0; 5];
    }
    let is = 1.0 / s;
    let (is2, is3) = (is * is, is * is * is);
    let (is4, is5) = (is3 * is, is3 * is2);
    let (u2, u3, u4) = (u * u, u * u * u, u * u * u * u);
    // derivatives of q = -1/s
    let q1 = -8.0 * u * is2;
    let q2 = -8.0 * is2 - 128.0 * u2 * is3;
    let q3 = -384.0 * u * is3 - 3072.0 * u3 * is4;
    let q4 = -384.0 * is3 - 18432.0 * u2 * is4 - 98304.0 * u4 * is5;
    let g = (-is).exp();
    [
        g,
        q1 * g,
        (q2 + q1 * q1) * g,
        (q3 + 3.0 * q1 * q2 + q1 * q1 * q1) * g,
        (q4 + 4.0 * q1 * q3 + 3.0 * q2 * q2 + 6.0 * q1 * q1 * q2 + q1.powi(4)) * g,
    ]
}

/// k-th derivative of g; closed form up to 4, central differences beyond.
fn smooth_step_derivative(k: usize, u: f64) -> f64 {
    if k <= 4 {
        return smooth_step_derivatives(u)[k];
    }
    let h = 1e-3;
    (smooth_step_derivative(k - 1, u + h) - smooth_step_derivative(k - 1, u - h)) / (2.0 * h)
}

/// Γ_0(u) = a^-1 g'(u) for the smooth step g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub scale_a: f64,
    /// Smoothness the scale was fitted for.
    pub beta: f64,
}

/// Norms of Γ_0 needed by the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpNorms {
    /// ‖Γ_0‖_∞ by grid maximisation.
    pub sup: f64,
    /// ‖Γ_0‖_2².
    pub l2_sq: f64,
    /// ‖Γ_0‖_p.
    pub lp: f64,
    pub p: f64,
}

impl Bump {
    #[inline]
    pub fn profile(&self, u: f64) -> f64 {
        if u.abs() >= 0.5 {
            return 0.0;
        }
        smooth_step_derivatives(u)[1] / self.scale_a
    }

    /// k-th derivative of Γ_0.
    pub fn derivative(&self, k: usize, u: f64) -> f64 {
        if u.abs() >= 0.5 {
            return 0.0;
        }
        smooth_step_derivative(k + 1, u) / self.scale_a
    }

    /// Hölder quotient |Γ_0^(ℓ)(u) - Γ_0^(ℓ)(u')| / |u - u'|^(β-ℓ) at ℓ = ⌊β⌋.
    pub fn holder_ratio(&self, u: f64, v: f64) -> f64 {
        let ell = strict_floor(self.beta);
        let e = self.beta - ell as f64;
        (self.derivative(ell, u) - self.derivative(ell, v)).abs() / (u - v).abs().powf(e)
    }

    pub fn norms(&self, p: f64) -> BumpNorms {
        let sup = (0..=20_000)
            .map(|i| self.profile(-0.5 + i as f64 / 20_000.0).abs())
            .fold(0.0, f64::max);
        let quad = Adaptive::new(0.0, 1e-12);
        let l2_sq = quad.integrate(|u| self.profile(u).powi(2), -0.5, 0.5).value;
        let lp = quad
            .integrate(|u| self.profile(u).abs().powf(p), -0.5, 0.5)
            .value
            .powf(1.0 / p);
        BumpNorms { sup, l2_sq, lp, p }
    }
}

/// Builds Γ_0 with the smallest scale `a` for which the Hölder quotient of
/// the top derivative ℓ = ⌊β⌋ stays below 1/2 with 10% slack.
///
/// Only ℓ = ⌊β⌋ is constrained: for lower orders the exponent β - ℓ exceeds
/// one, and such a quotient is unbounded for any non-constant function.
pub fn make_bump(beta: f64) -> Result<Bump> {
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must exceed 1, got {beta}")));
    }
    let ell = strict_floor(beta);
    let e = beta - ell as f64;
    let top = |u: f64| smooth_step_derivative(ell + 1, u);
    let holder = if (e - 1.0).abs() < 1e-12 {
        // Lipschitz constant of the top derivative.
        let h = 1e-5;
        (1..20_000)
            .map(|i| {
                let u = -0.5 + i as f64 / 20_000.0;
                ((top(u + h) - top(u - h)) / (2.0 * h)).abs()
            })
            .fold(0.0, f64::max)
    } else {
        let grid: Vec<(f64, f64)> = (0..=2000)
            .map(|i| {
                let u = -0.5 + i as f64 / 2000.0;
                (u, top(u))
            })
            .collect();
        let mut best: f64 = 0.0;
        for (i, &(u, fu)) in grid.iter().enumerate() {
            for &(v, fv) in &grid[i + 1..] {
                best = best.max((fu - fv).abs() / (v - u).powf(e));
            }
        }
        best
    };
    Ok(Bump {
        scale_a: holder / (0.5 * HOLDER_SLACK),
        beta,
    })
}

/// The single perturbation m^-β d C Π Γ_0(m x_i - j_i), with j ∈ {1..m}^d.
pub fn eval_perturbation(
    m: usize,
    j: &[usize],
    x: &[f64],
    params: &NikolskiiParams,
    bump: &Bump,
) -> Result<f64> {
    check_dim(j.len(), x.len())?;
    if m == 0 || j.iter().any(|&ji| ji == 0 || ji > m) {
        return Err(Error::IndexOutOfRange {
            index: j.to_vec(),
            m,
        });
    }
    let mf = m as f64;
    let mut prod = (x.len() as f64) * params.c * mf.powf(-params.beta);
    for (&ji, &xi) in j.iter().zip(x) {
        prod *= bump.profile(mf * xi - ji as f64);
    }
    Ok(prod)
}

/// Minimal number of cells per axis keeping f_ω nonnegative:
/// [d C (σ ‖Γ_0‖_∞ / φ(1/σ))^d]^(1/β).
pub fn positivity_min_m(params: &NikolskiiParams, base: &BaseGaussian, bump_sup: f64) -> f64 {
    let d = base.dim as f64;
    let ratio = base.sigma * bump_sup / std_normal_pdf(1.0 / base.sigma);
    (d * params.c * ratio.powf(d)).powf(1.0 / params.beta)
}

/// How the binary vector ω is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum OmegaSpec {
    Zeros,
    Ones,
    Bits(Vec<bool>),
    /// Independent Bernoulli(density) bits from a seed.
    Random { seed: u64, density: f64 },
}

impl OmegaSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "zeros" => return Ok(Self::Zeros),
            "ones" => return Ok(Self::Ones),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("random:") {
            let mut parts = rest.split(':');
            let seed = parts.next().and_then(|t| t.parse::<u64>().ok());
            let density = parts.next().and_then(|t| t.parse::<f64>().ok());
            return match (seed, density, parts.next()) {
                (Some(seed), Some(density), None) if (0.0..=1.0).contains(&density) => {
                    Ok(Self::Random { seed, density })
                }
                _ => Err(Error::Config(format!(
                    "omega {s:?}: expected random:<seed>:<density in [0,1]>"
                ))),
            };
        }
        if !s.is_empty() && s.bytes().all(|b| b == b'0' || b == b'1') {
            return Ok(Self::Bits(s.bytes().map(|b| b == b'1').collect()));
        }
        Err(Error::Config(format!(
            "omega {s:?}: expected a bitstring, zeros, ones or random:<seed>:<density>"
        )))
    }

    /// Materialises ω for `cells` = m^d cells.
    pub fn resolve(&self, cells: usize) -> Result<Vec<bool>> {
        match self {
            Self::Zeros => Ok(vec![false; cells]),
            Self::Ones => Ok(vec![true; cells]),
            Self::Bits(b) if b.len() == cells => Ok(b.clone()),
            Self::Bits(b) => Err(Error::OmegaLength {
                expected: cells,
                got: b.len(),
            }),
            Self::Random { seed, density } => {
                let mut rng = rng_for(*seed, &[]);
                Ok((0..cells).map(|_| rng.random::<f64>() < *density).collect())
            }
        }
    }
}

/// Renders ω as a 0/1 string.
pub fn omega_to_string(omega: &[bool]) -> String {
    omega.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// f_ω = f_0 + Σ_j ω(j) γ_{m,j}.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDensity {
    base: BaseGaussian,
    params: NikolskiiParams,
    m: usize,
    omega: Vec<bool>,
    bump: Bump,
    bump_sup: f64,
    warning: Option<String>,
}

impl PerturbedDensity {
    /// Builds f_ω. `omega` is indexed row-major over {1..m}^d with the first
    /// coordinate most significant. Falling below the positivity threshold
    /// only records a warning.
    pub fn new(
        base: BaseGaussian,
        params: NikolskiiParams,
        m: usize,
        omega: Vec<bool>,
        bump: Bump,
    ) -> Result<Self> {
        params.validate()?;
        if m == 0 {
            return Err(Error::InvalidParameter("m must be positive".into()));
        }
        let cells = cell_count(m, base.dim)?;
        if omega.len() != cells {
            return Err(Error::OmegaLength {
                expected: cells,
                got: omega.len(),
            });
        }
        let bump_sup = bump.norms(params.p).sup;
        let threshold = positivity_min_m(&params, &base, bump_sup);
        let warning = ((m as f64) <= threshold && omega.iter().any(|&b| b)).then(|| {
            format!("m = {m} does not exceed the positivity threshold {threshold:.4}; f_omega may be negative")
        });
        Ok(Self {
            base,
            params,
            m,
            omega,
            bump,
            bump_sup,
            warning,
        })
    }

    pub fn base(&self) -> &BaseGaussian {
        &self.base
    }

    pub fn params(&self) -> &NikolskiiParams {
        &self.params
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn omega(&self) -> &[bool] {
        &self.omega
    }

    pub fn bump(&self) -> &Bump {
        &self.bump
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Copy with a different ω (same length).
    pub fn with_omega(&self, omega: Vec<bool>) -> Result<Self> {
        if omega.len() != self.omega.len() {
            return Err(Error::OmegaLength {
                expected: self.omega.len(),
                got: omega.len(),
            });
        }
        Ok(Self {
            omega,
            ..self.clone()
        })
    }

    /// Row-major cell index of j ∈ {1..m}^d.
    pub fn cell_index(&self, j: &[usize]) -> usize {
        j.iter().fold(0, |acc, &ji| acc * self.m + (ji - 1))
    }

    /// Σ_j ω(j) γ_{m,j}(x). At most one cell is active at any x.
    #[inline]
    pub fn perturbation(&self, x: &[f64]) -> f64 {
        let mf = self.m as f64;
        let mut idx = 0usize;
        let mut prod = 1.0;
        for &xi in x {
            let t = mf * xi;
            let j = t.round();
            if j < 1.0 || j > mf {
                return 0.0;
            }
            let v = self.bump.profile(t - j);
            if v == 0.0 {
                return 0.0;
            }
            prod *= v;
            idx = idx * self.m + (j as usize - 1);
        }
        if !self.omega[idx] {
            return 0.0;
        }
        (x.len() as f64) * self.params.c * mf.powf(-self.params.beta) * prod
    }

    /// Upper edge of the perturbed region on every axis, 1 + 1/(2m).
    pub fn region_hi(&self) -> f64 {
        1.0 + 0.5 / self.m as f64
    }

    /// Envelope constant M with f_ω ≤ M f_0 everywhere.
    pub fn envelope(&self) -> f64 {
        if !self.omega.iter().any(|&b| b) {
            return 1.0;
        }
        let d = self.base.dim as f64;
        let sup_pert = d * self.params.c * (self.m as f64).powf(-self.params.beta) * self.bump_sup.powf(d);
        1.0 + sup_pert / self.base.inf_on_cube(self.region_hi())
    }

    /// I.i.d. draws by rejection from M f_0, in seeded chunks.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        let envelope = self.envelope();
        if 1.0 / envelope < ACCEPTANCE_FLOOR {
            return Err(Error::LowAcceptance {
                rate: 1.0 / envelope,
                floor: ACCEPTANCE_FLOOR,
            });
        }
        let d = self.base.dim;
        let chunks: Result<Vec<Vec<f64>>> = chunk_sizes(n)
            .into_par_iter()
            .map(|(c, rows)| {
                let mut rng = rng_for(seed, &[c as u64]);
                let mut out = Vec::with_capacity(rows * d);
                let mut x = vec![0.0; d];
                let mut proposals = 0usize;
                while out.len() < rows * d {
                    for xi in x.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *xi = self.base.sigma * z;
                    }
                    proposals += 1;
                    let u: f64 = rng.random();
                    if u * envelope * self.base.eval_unchecked(&x) <= self.eval_unchecked(&x) {
                        out.extend_from_slice(&x);
                    }
                    if proposals > 1000 && (out.len() / d) as f64 / (proposals as f64) < ACCEPTANCE_FLOOR {
                        return Err(Error::LowAcceptance {
                            rate: (out.len() / d) as f64 / proposals as f64,
                            floor: ACCEPTANCE_FLOOR,
                        });
                    }
                }
                Ok(out)
            })
            .collect();
        Sample::new(d, chunks?.concat())
    }
}

impl Density for PerturbedDensity {
    fn dim(&self) -> usize {
        self.base.dim
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.base.eval_unchecked(x) + self.perturbation(x)
    }
}

pub(crate) fn cell_count(m: usize, d: usize) -> Result<usize> {
    u32::try_from(d)
        .ok()
        .and_then(|d| m.checked_pow(d))
        .filter(|&c| c <= 1 << 26)
        .ok_or_else(|| Error::InvalidParameter(format!("m^d = {m}^{d} cells is not addressable")))
}

/// Either the plain Gaussian or a perturbed member of the family.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueDensity {
    Base(BaseGaussian),
    Perturbed(PerturbedDensity),
}

impl TrueDensity {
    pub fn sigma(&self) -> f64 {
        match self {
            Self::Base(b) => b.sigma,
            Self::Perturbed(p) => p.base.sigma,
        }
    }

    /// Per-axis upper edge of the perturbed region, if any cell is active.
    pub fn perturbed_region_hi(&self) -> Option<f64> {
        match self {
            Self::Perturbed(p) if p.omega.iter().any(|&b| b) => Some(p.region_hi()),
            _ => None,
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        match self {
            Self::Base(b) => b.sample(n, seed),
            Self::Perturbed(p) => p.sample(n, seed),
        }
    }
}

impl Density for TrueDensity {
    fn dim(&self) -> usize {
        match self {
            Self::Base(b) => b.dim,
            Self::Perturbed(p) => p.base.dim,
        }
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Self::Base(b) => b.eval_unchecked(x),
            Self::Perturbed(p) => p.eval_unchecked(x),
        }
    }
}

/// Resolution of the validity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationGrid {
    /// Panel width, in units of σ, away from the perturbed cells.
    pub step: f64,
    /// Panels per perturbation cell and axis.
    pub cell_panels: usize,
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Allowed |∫f - 1|.
    pub tolerance: f64,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self {
            step: 0.25,
            cell_panels: 4,
            order: 6,
            tolerance: 1e-6,
        }
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub min_value_on_grid: f64,
    pub integral_est: f64,
    /// |integral - integral at doubled resolution|.
    pub integral_err: f64,
    /// Smoothness condition on the top derivative, checked at d = 1 only.
    pub nikolskii_margin_ok: Option<bool>,
    pub nikolskii_max_ratio: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

fn validation_axis(f: &PerturbedDensity, grid: &ValidationGrid, refine: usize) -> Axis {
    let sigma = f.base.sigma;
    let lo = -6.0 * sigma;
    let hi = (6.0 * sigma).max(f.region_hi() + 0.5);
    let step = grid.step * sigma / refine as f64;
    let outer = ((hi - lo) / step).ceil() as usize;
    let mut breaks: Vec<f64> = (0..=outer).map(|k| (lo + k as f64 * step).min(hi)).collect();
    let mf = f.m as f64;
    let sub = grid.cell_panels * refine;
    for j in 1..=f.m {
        let left = (j as f64 - 0.5) / mf;
        for k in 0..=sub {
            breaks.push(left + k as f64 / (sub as f64 * mf));
        }
    }
    Axis::from_breakpoints(&breaks, grid.order)
}

/// Checks nonnegativity, unit mass and (at d = 1) the smoothness margin.
pub fn validate(f: &PerturbedDensity, grid: &ValidationGrid) -> Result<ValidityReport> {
    let d = f.base.dim;
    if d > 3 {
        return Err(Error::InvalidParameter(format!(
            "validation quadrature is limited to d <= 3, got {d}"
        )));
    }
    if grid.order < 2 || grid.cell_panels == 0 || !(grid.step > 0.0 && grid.step <= 1.0) {
        return Err(Error::GridTooCoarse(format!(
            "need order >= 2, cell_panels >= 1 and 0 < step <= 1 (in units of sigma), got {grid:?}"
        )));
    }
    let tensor = |refine| TensorGrid::cube(validation_axis(f, grid, refine), d);
    let coarse = tensor(1);
    let values = coarse.evaluate(|x| f.eval_unchecked(x));
    let min_value_on_grid = values.iter().copied().fold(f64::INFINITY, f64::min);
    let integral_est = coarse.weighted_sum(&values);
    let integral_err = if d <= 2 {
        (tensor(2).integrate(|x| f.eval_unchecked(x)) - integral_est).abs()
    } else {
        0.0
    };
    let (nikolskii_margin_ok, nikolskii_max_ratio) = if d == 1 {
        let ratio = nikolskii_ratio_1d(f);
        (Some(ratio <= f.params.c), Some(ratio))
    } else {
        (None, None)
    };
    let passed = min_value_on_grid >= 0.0 && (integral_est - 1.0).abs() <= grid.tolerance;
    Ok(ValidityReport {
        min_value_on_grid,
        integral_est,
        integral_err,
        nikolskii_margin_ok,
        nikolskii_max_ratio,
        tolerance: grid.tolerance,
        passed,
    })
}

/// Probabilists' Hermite polynomial He_k(y).
fn hermite(k: usize, y: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, y);
    if k == 0 {
        return 1.0;
    }
    for i in 1..k {
        let h2 = y * h1 - i as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// s-th derivative of a one-dimensional f_ω.
fn derivative_1d(f: &PerturbedDensity, s: usize, x: f64) -> f64 {
    let sigma = f.base.sigma;
    let y = x / sigma;
    let sign = if s.is_multiple_of(2) { 1.0 } else { -1.0 };
    let base = sign * hermite(s, y) * std_normal_pdf(y) / sigma.powi(s as i32 + 1);
    let mf = f.m as f64;
    let t = mf * x;
    let j = t.round();
    let pert = if j >= 1.0 && j <= mf && f.omega[j as usize - 1] {
        f.params.c * mf.powf(-f.params.beta + s as f64) * f.bump.derivative(s, t - j)
    } else {
        0.0
    };
    base + pert
}

/// max over shifts t of ‖f^(s)(· + t) - f^(s)‖_p / |t|^(β - s), s = ⌊β⌋.
fn nikolskii_ratio_1d(f: &PerturbedDensity) -> f64 {
    let s = f.params.floor_beta();
    let e = f.params.beta - s as f64;
    let p = f.params.p;
    let mf = f.m as f64;
    let shifts: Vec<f64> = (0..13).map(|k| 10f64.powf(-3.0 + k as f64 * 0.25)).collect();
    shifts
        .par_iter()
        .map(|&t| {
            let lo = -8.0 * f.base.sigma - t;
            let hi = 8.0 * f.base.sigma + f.region_hi();
            let mut breaks: Vec<f64> = (0..=400).map(|k| lo + (hi - lo) * k as f64 / 400.0).collect();
            for j in 0..=f.m {
                let edge = (j as f64 + 0.5) / mf;
                for k in 0..8 {
                    breaks.push(edge + k as f64 / (8.0 * mf));
                    breaks.push(edge + k as f64 / (8.0 * mf) - t);
                }
            }
            let axis = Axis::from_breakpoints(&breaks, 8);
            let norm = axis
                .integrate(|x| (derivative_1d(f, s, x + t) - derivative_1d(f, s, x)).abs().powf(p))
                .powf(1.0 / p);
            norm / t.powf(e)
        })
        .reduce(|| 0.0, f64::max)
}

/// Seed used for the `k`-th random ω drawn from `master`.
pub fn omega_seed(master: u64, k: u64) -> u64 {
    derive_seed(master, &[0x0_6d65_6761, k])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NikolskiiParams {
        NikolskiiParams::new(2.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn base_values() {
        let f = BaseGaussian::new(1, 1.0).unwrap();
        assert!((f.eval(&[0.0]).unwrap() - 0.398_942_280_4).abs() < 1e-10);
        let f2 = BaseGaussian::new(2, 1.0).unwrap();
        assert!((f2.eval(&[0.0, 0.0]).unwrap() - 0.159_154_943_1).abs() < 1e-10);
        assert!(f2.eval(&[40.0, 0.0]).unwrap() < 1e-300);
        assert!(f2.eval(&[0.0]).is_err());
        assert!(BaseGaussian::new(1, 0.0).is_err());
    }

    #[test]
    fn smooth_step_derivatives_match_finite_differences() {
        let h = 1e-5;
        for i in 1..40 {
            let u = -0.49 + i as f64 * 0.0245;
            let d = smooth_step_derivatives(u);
            let (dp, dm) = (smooth_step_derivatives(u + h), smooth_step_derivatives(u - h));
            for k in 0..4 {
                let fd = (dp[k] - dm[k]) / (2.0 * h);
                let scale = d[k + 1].abs().max(1.0);
                assert!((fd - d[k + 1]).abs() < 1e-5 * scale, "k={k} u={u} fd={fd} exact={}", d[k + 1]);
            }
        }
    }

    #[test]
    fn bump_examples() {
        let b = make_bump(2.0).unwrap();
        assert_eq!(b.profile(0.0), 0.0);
        assert_eq!(b.profile(0.5), 0.0);
        assert_eq!(b.profile(-0.7), 0.0);
        let q = Adaptive::new(0.0, 1e-13).integrate(|u| b.profile(u), -0.5, 0.5);
        assert!(q.value.abs() < 1e-10);
        assert!(b.scale_a > 0.0);
        // sign change: derivative of an even bump
        assert!(b.profile(-0.2) > 0.0 && b.profile(0.2) < 0.0);
    }

    #[test]
    fn bump_holder_margin_on_random_pairs() {
        use rand::Rng;
        for beta in [1.5, 2.0, 2.5, 3.0] {
            let b = make_bump(beta).unwrap();
            let mut rng = rng_for(11, &[]);
            let worst = (0..1000)
                .map(|_| {
                    let u: f64 = rng.random_range(-0.6..0.6);
                    let v: f64 = rng.random_range(-0.6..0.6);
                    b.holder_ratio(u, v)
                })
                .fold(0.0, f64::max);
            assert!(worst <= 0.5, "beta={beta} worst={worst}");
            assert!(worst > 0.05, "beta={beta}: margin should not be vacuous, worst={worst}");
        }
    }

    #[test]
    fn perturbation_examples() {
        let b = make_bump(2.0).unwrap();
        let p = params();
        for m in [4, 8] {
            assert_eq!(eval_perturbation(m, &[2], &[2.0 / m as f64], &p, &b).unwrap(), 0.0);
            // outside the cell
            assert_eq!(eval_perturbation(m, &[2], &[3.0 / m as f64], &p, &b).unwrap(), 0.0);
        }
        let v = eval_perturbation(4, &[2], &[0.4375], &p, &b).unwrap();
        let expected = 4f64.powi(-2) * b.profile(-0.25);
        assert!((v - expected).abs() <= 1e-15 * expected.abs());
        assert!(v != 0.0);
        assert!(eval_perturbation(4, &[5], &[0.4], &p, &b).is_err());
        assert!(eval_perturbation(4, &[0], &[0.4], &p, &b).is_err());
    }

    #[test]
    fn perturbed_density_sums_terms() {
        let b = make_bump(2.0).unwrap();
        let p = params();
        let base = BaseGaussian::new(1, 1.0).unwrap();
        let zeros = PerturbedDensity::new(base, p, 8, vec![false; 8], b).unwrap();
        for i in 0..50 {
            let x = [-1.0 + i as f64 * 0.05];
            assert_eq!(zeros.eval(&x).unwrap(), base.eval(&x).unwrap());
        }
        let mut omega = vec![false; 8];
        omega[2] = true;
        let one = PerturbedDensity::new(base, p, 8, omega, b).unwrap();
        let x = [3.2 / 8.0];
        let expected = base.eval(&x).unwrap() + eval_perturbation(8, &[3], &x, &p, &b).unwrap();
        assert!((one.eval(&x).unwrap() - expected).abs() < 1e-16);
        assert!(PerturbedDensity::new(base, p, 8, vec![true; 7], b).is_err());
    }

    #[test]
    fn disjoint_supports_and_zero_mean() {
        let b = make_bump(2.0).unwrap();
        let p = params();
        let m = 8;
        for i in 0..=4000 {
            let x = -0.1 + 1.3 * i as f64 / 4000.0;
            let active: usize = (1..=m)
                .filter(|&j| eval_perturbation(m, &[j], &[x], &p, &b).unwrap() != 0.0)
                .count();
            assert!(active <= 1, "x={x}");
        }
        for j in 1..=m {
            let lo = (j as f64 - 0.5) / m as f64;
            let q = Adaptive::new(0.0, 1e-13)
                .integrate(|x| eval_perturbation(m, &[j], &[x], &p, &b).unwrap(), lo, lo + 1.0 / m as f64);
            assert!(q.value.abs() < 1e-10);
        }
    }

    #[test]
    fn perturbation_norm_scaling() {
        let b = make_bump(2.0).unwrap();
        let p = params();
        for d in 1..=2usize {
            let norms = b.norms(p.p);
            let gamma_norm = d as f64 * p.c * norms.lp.powi(d as i32);
            for m in [4usize, 8] {
                let j = vec![2usize; d];
                let lo = 1.5 / m as f64;
                let axis = Axis::uniform(lo, lo + 1.0 / m as f64, 32, 12);
                let grid = TensorGrid::cube(axis, d);
                let norm = grid
                    .integrate(|x| eval_perturbation(m, &j, x, &p, &b).unwrap().abs().powf(p.p))
                    .powf(1.0 / p.p);
                let expected = (m as f64).powf(-p.beta - d as f64 / p.p) * gamma_norm;
                assert!((norm / expected - 1.0).abs() < 1e-8, "d={d} m={m} ratio={}", norm / expected);
            }
        }
    }

    #[test]
    fn positivity_threshold() {
        let p = NikolskiiParams::new(3.0, 1.0, 2.0).unwrap();
        let base = BaseGaussian::new(1, 1.0).unwrap();
        // inputs with d C (σ sup / φ(1/σ))^d = 1
        let sup = std_normal_pdf(1.0);
        assert!((positivity_min_m(&p, &base, sup) - 1.0).abs() < 1e-14);
        let big = NikolskiiParams::new(1e6, 1.0, 2.0).unwrap();
        assert!((positivity_min_m(&big, &base, 5.0 * sup) - 1.0).abs() < 1e-5);
        // grid-max oracle for ‖Γ_0‖_∞
        let b = make_bump(2.0).unwrap();
        let sup_grid = (0..=100_000)
            .map(|i| b.profile(-0.5 + i as f64 / 100_000.0).abs())
            .fold(0.0, f64::max);
        let expected = (sup_grid / std_normal_pdf(1.0)).sqrt();
        let got = positivity_min_m(&params(), &base, b.norms(2.0).sup);
        assert!((got / expected - 1.0).abs() < 1e-6);
    }

    #[test]
    fn validate_base_and_perturbed() {
        let b = make_bump(2.0).unwrap();
        let p = params();
        let base = BaseGaussian::new(1, 1.0).unwrap();
        let plain = PerturbedDensity::new(base, p, 1, vec![false], b).unwrap();
        let r = validate(&plain, &ValidationGrid::default()).unwrap();
        assert!(r.passed && r.min_value_on_grid > 0.0);
        assert!((r.integral_est - 1.0).abs() < 1e-6);

        let f = PerturbedDensity::new(base, p, 8, OmegaSpec::Ones.resolve(8).unwrap(), b).unwrap();
        assert!(f.warning().is_none());
        let r = validate(&f, &ValidationGrid::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.integral_est - 1.0).abs() <= 1e-6);
        assert_eq!(r.nikolskii_margin_ok, Some(true));

        let base2 = BaseGaussian::new(2, 1.0).unwrap();
        let f2 = PerturbedDensity::new(base2, p, 4, OmegaSpec::parse("random:3:0.5").unwrap().resolve(16).unwrap(), b)
            .unwrap();
        let r2 = validate(&f2, &ValidationGrid::default()).unwrap();
        assert!(r2.passed, "{r2:?}");
        assert_eq!(r2.nikolskii_margin_ok, None);
    }

    #[test]
    fn validate_flags_negative_density() {
        // A bump scaled far beyond the admissible size: m sits below the threshold.
        let b = Bump {
            scale_a: 1e-3,
            beta: 2.0,
        };
        let p = NikolskiiParams::new(2.0, 5.0, 2.0).unwrap();
        let base = BaseGaussian::new(1, 0.3).unwrap();
        let f = PerturbedDensity::new(base, p, 2, vec![true, true], b).unwrap();
        assert!(f.warning().is_some());
        let r = validate(&f, &ValidationGrid::default()).unwrap();
        assert!(r.min_value_on_grid < 0.0);
        assert!(!r.passed);
        assert!(matches!(
            validate(&f, &ValidationGrid { order: 1, ..Default::default() }),
            Err(Error::GridTooCoarse(_))
        ));
    }

    #[test]
    fn omega_parsing() {
        assert_eq!(OmegaSpec::parse("0110").unwrap().resolve(4).unwrap(), vec![false, true, true, false]);
        assert!(OmegaSpec::parse("0110").unwrap().resolve(8).is_err());
        let r = OmegaSpec::parse("random:5:0.5").unwrap();
        assert_eq!(r.resolve(64).unwrap(), r.resolve(64).unwrap());
        assert!(OmegaSpec::parse("random:5").is_err());
        assert!(OmegaSpec::parse("random:5:1.5").is_err());
        assert!(OmegaSpec::parse("01x").is_err());
        assert_eq!(omega_to_string(&[true, false]), "10");
    }

    #[test]
    fn sampling_contract() {
        let base = BaseGaussian::new(2, 1.5).unwrap();
        assert!(base.sample(0, 1).is_err());
        let s = base.sample(3000, 9).unwrap();
        assert_eq!(s.len(), 3000);
        assert_eq!(s, base.sample(3000, 9).unwrap());
        let var: f64 = s.as_slice().iter().map(|v| v * v).sum::<f64>() / 6000.0;
        assert!((var - 2.25).abs() < 0.15);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        assert_eq!(pool.install(|| base.sample(3000, 9).unwrap()), s);
    }
}
