//! L^p risk of the estimator: quadrature and importance-sampled norms,
//! replicate Monte Carlo, the exact bias/variance split, rate sweeps and
//! log–log slope fits.
//!
//! Seeds: replicate r of a risk estimate with seed s draws its sample from
//! `derive_seed(s, [r, 0])` and its Monte Carlo nodes from
//! `derive_seed(s, [r, 1])`. Sweep cell i runs with seed
//! `derive_seed(master, [i])`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Integration, SweepConfig};
use crate::density::{BaseGaussian, Density, TrueDensity};
use crate::error::{Error, Result};
use crate::estimator::{fit, BandwidthPolicy, KdeModel};
use crate::kernel::{Kernel1D, ProductKernel};
use crate::quadrature::{Axis, GridSpec, TensorGrid};
use crate::seed::derive_seed;

/// Effective support half-width in units of σ.
pub const SUPPORT_SIGMAS: f64 = 6.0;

/// Padding used for kernels without compact support, in bandwidths.
pub const UNBOUNDED_PAD: f64 = 4.0;

/// Per-axis integration interval: [-6σ, 6σ], extended over the perturbed
/// region when it is active, then padded by the kernel reach.
pub fn integration_box(f: &TrueDensity, pad: f64) -> (f64, f64) {
    let s = SUPPORT_SIGMAS * f.sigma();
    let hi = f.perturbed_region_hi().map_or(s, |r| r.max(s));
    (-s - pad, hi + pad)
}

fn kernel_pad(kernel: &ProductKernel, h: f64) -> f64 {
    h * kernel.base().support_radius().unwrap_or(UNBOUNDED_PAD)
}

fn risk_grid(d: usize, lo: f64, hi: f64, spec: &GridSpec) -> Result<TensorGrid> {
    spec.validate()?;
    if d > 3 {
        return Err(Error::GridTooCoarse(format!("grid integration supports d <= 3, got {d}")));
    }
    Ok(TensorGrid::cube(Axis::uniform(lo, hi, spec.panels, spec.order), d))
}

fn lp_norm(grid: &TensorGrid, a: &[f64], b: &[f64], p: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).collect();
    grid.weighted_sum(&diff).powf(1.0 / p)
}

/// Truth and node set for grid integration at one bandwidth.
struct GridCache {
    grid: TensorGrid,
    truth: Vec<f64>,
}

impl GridCache {
    fn new(f: &TrueDensity, kernel: &ProductKernel, h: f64, spec: &GridSpec) -> Result<Self> {
        let (lo, hi) = integration_box(f, kernel_pad(kernel, h));
        let grid = risk_grid(f.dim(), lo, hi, spec)?;
        let truth = grid.evaluate(|x| f.eval_unchecked(x));
        Ok(Self { grid, truth })
    }

    fn error(&self, model: &KdeModel, p: f64) -> Result<f64> {
        Ok(lp_norm(&self.grid, &model.evaluate_grid(&self.grid)?, &self.truth, p))
    }
}

/// (Σ_i w_i |f̂(x_i) - f(x_i)|^p)^(1/p) over a tensor grid on the effective
/// support. With `richardson_tol` set, the value is recomputed on a grid
/// with twice the panels and rejected if the two disagree.
pub fn lp_error_grid(f: &TrueDensity, model: &KdeModel, p: f64, spec: &GridSpec) -> Result<f64> {
    crate::error::check_dim(f.dim(), model.dim())?;
    let value = GridCache::new(f, model.kernel(), model.bandwidth(), spec)?.error(model, p)?;
    if let Some(tol) = spec.richardson_tol {
        let fine = GridCache::new(f, model.kernel(), model.bandwidth(), &spec.refined())?.error(model, p)?;
        let rel = (value - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
        if rel > tol {
            return Err(Error::GridTooCoarse(format!(
                "grid {value:.6e} vs refined {fine:.6e}: relative gap {rel:.3e} exceeds {tol:.1e}"
            )));
        }
    }
    Ok(value)
}

/// L^p distance between two functions on the grid used for `f`.
pub fn lp_distance_grid<F, G>(f: &TrueDensity, a: F, b: G, pad: f64, p: f64, spec: &GridSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    let (lo, hi) = integration_box(f, pad);
    let grid = risk_grid(f.dim(), lo, hi, spec)?;
    Ok(lp_norm(&grid, &grid.evaluate(a), &grid.evaluate(b), p))
}

/// Importance-sampled L^p error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McError {
    pub estimate: f64,
    pub std_err: f64,
    /// (Σ t)² / Σ t² over the integrand terms.
    pub ess: f64,
    /// ESS below 10% of the draws.
    pub degenerate: bool,
}

/// ((1/N) Σ |f̂ - f|^p(Z)/q(Z))^(1/p) with Z drawn from a centred Gaussian
/// of scale `proposal_scale · σ`.
pub fn lp_error_mc(
    f: &TrueDensity,
    model: &KdeModel,
    p: f64,
    n_mc: usize,
    proposal_scale: f64,
    seed: u64,
) -> Result<McError> {
    crate::error::check_dim(f.dim(), model.dim())?;
    if n_mc < 2 {
        return Err(Error::InvalidParameter("n_mc must be at least 2".into()));
    }
    let q = BaseGaussian::new(f.dim(), proposal_scale * f.sigma())?;
    let z = q.sample(n_mc, seed)?;
    let terms: Vec<f64> = z
        .as_slice()
        .par_chunks_exact(z.dim())
        .map(|x| (model.evaluate_unchecked(x) - f.eval_unchecked(x)).abs().powf(p) / q.eval_unchecked(x))
        .collect();
    let n = n_mc as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sq = terms.iter().map(|t| t * t).sum::<f64>();
    let ess = if sq > 0.0 { (mean * n).powi(2) / sq } else { n };
    let estimate = mean.powf(1.0 / p);
    let std_err = if mean > 0.0 {
        estimate / (p * mean) * (var / n).sqrt()
    } else {
        0.0
    };
    Ok(McError {
        estimate,
        std_err,
        ess,
        degenerate: ess < 0.1 * n,
    })
}

/// Everything an L^p risk estimate needs besides n and the seed.
#[derive(Debug, Clone)]
pub struct RiskSetup {
    pub density: TrueDensity,
    pub kernel: ProductKernel,
    pub policy: BandwidthPolicy,
    pub beta: f64,
    pub p: f64,
    pub integration: Integration,
    pub positive_part: Option<bool>,
}

impl RiskSetup {
    /// Builds the setup of a sweep at dimension `d`.
    pub fn from_config(cfg: &SweepConfig, d: usize) -> Result<Self> {
        let density = cfg.density.with_dim(d).build()?;
        Ok(Self {
            kernel: ProductKernel::new(Kernel1D::from_name(&cfg.kernel)?, d)?,
            density,
            policy: cfg.bandwidth,
            beta: cfg.density.beta,
            p: cfg.p,
            integration: cfg.integration,
            positive_part: cfg.positive_part,
        })
    }

    fn fit(&self, n: usize, seed: u64) -> Result<KdeModel> {
        let sample = self.density.sample(n, seed)?;
        let model = fit(&sample, self.kernel.clone(), &self.policy, self.beta)?;
        Ok(match self.positive_part {
            Some(on) => model.with_positive_part(on),
            None => model,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    pub p: f64,
    pub h: f64,
    pub replicates: usize,
    pub mean_lp_error: f64,
    /// Sample standard deviation over replicates divided by √replicates.
    pub std_err: f64,
    pub integration_mode: String,
    pub seed: u64,
    /// Replicates whose Monte Carlo norm had a degenerate effective sample size.
    #[serde(default)]
    pub degenerate_replicates: usize,
}

/// Mean and standard error over values, summed in index order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean L^p error over independent samples of size n.
pub fn estimate_risk(setup: &RiskSetup, n: usize, replicates: usize, seed: u64) -> Result<RiskReport> {
    if replicates < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 replicates, got {replicates}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let d = setup.density.dim();
    let h = setup.policy.resolve(n, d, setup.beta)?;
    let (errors, degenerate_replicates) = match setup.integration {
        Integration::Grid { grid } => {
            let spec = grid.unwrap_or_else(|| GridSpec::default_for_dim(d));
            let cache = GridCache::new(&setup.density, &setup.kernel, h, &spec)?;
            if spec.richardson_tol.is_some() {
                lp_error_grid(&setup.density, &setup.fit(n, derive_seed(seed, &[0, 0]))?, setup.p, &spec)?;
            }
            let errors = (0..replicates)
                .into_par_iter()
                .map(|r| cache.error(&setup.fit(n, derive_seed(seed, &[r as u64, 0]))?, setup.p))
                .collect::<Result<Vec<f64>>>()?;
            (errors, 0)
        }
        Integration::Mc { n_mc, proposal_scale } => {
            let results = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let model = setup.fit(n, derive_seed(seed, &[r as u64, 0]))?;
                    lp_error_mc(&setup.density, &model, setup.p, n_mc, proposal_scale, derive_seed(seed, &[r as u64, 1]))
                })
                .collect::<Result<Vec<McError>>>()?;
            let degenerate = results.iter().filter(|e| e.degenerate).count();
            (results.into_iter().map(|e| e.estimate).collect(), degenerate)
        }
    };
    let (mean_lp_error, std_err) = mean_and_se(&errors);
    Ok(RiskReport {
        n,
        d,
        beta: setup.beta,
        p: setup.p,
        h,
        replicates,
        mean_lp_error,
        std_err,
        integration_mode: setup.integration.label().into(),
        seed,
        degenerate_replicates,
    })
}

/// (K_h * f)(x) = ∫ K(u) f(x - h u) du by tensor Gauss–Legendre.
pub fn smoothed_density(f: &TrueDensity, kernel: &ProductKernel, h: f64, x: &[f64], rule: &TensorGrid) -> f64 {
    let mut y = vec![0.0; x.len()];
    let mut u = vec![0.0; x.len()];
    let mut total = 0.0;
    for i in 0..rule.len() {
        let w = rule.node(i, &mut u);
        for ((yi, &xi), &ui) in y.iter_mut().zip(x).zip(&u) {
            *yi = xi - h * ui;
        }
        total += w * kernel.eval_unchecked(&u) * f.eval_unchecked(&y);
    }
    total
}

fn convolution_rule(kernel: &ProductKernel) -> TensorGrid {
    let d = kernel.dim();
    let (lo, hi) = kernel.base().integration_range();
    let panels = match (kernel.base().support_radius(), d) {
        (Some(_), 1) => 8,
        (Some(_), _) => 4,
        (None, 1) => 32,
        (None, _) => 16,
    };
    TensorGrid::cube(Axis::uniform(lo, hi, panels, 10), d)
}

/// ‖K_h * f - f‖_p by quadrature, without sampling.
pub fn exact_bias(f: &TrueDensity, kernel: &ProductKernel, h: f64, p: f64, spec: &GridSpec) -> Result<f64> {
    crate::error::check_dim(f.dim(), kernel.dim())?;
    if f.dim() > 2 {
        return Err(Error::InvalidParameter(format!("exact bias needs d <= 2, got {}", f.dim())));
    }
    let cache = GridCache::new(f, kernel, h, spec)?;
    let rule = convolution_rule(kernel);
    let smooth = cache.grid.evaluate(|x| smoothed_density(f, kernel, h, x, &rule));
    Ok(lp_norm(&cache.grid, &smooth, &cache.truth, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub n: usize,
    pub d: usize,
    pub h: f64,
    pub p: f64,
    pub replicates: usize,
    /// ‖K_h * f - f‖_p by quadrature.
    pub bias_term: f64,
    /// Mean of ‖f̂ - K_h * f‖_p over replicates.
    pub variance_term: f64,
    pub variance_term_se: f64,
    /// Mean of ‖f̂ - f‖_p over replicates.
    pub total_error: f64,
    pub total_error_se: f64,
    /// Mean of ‖f̂ - K_h * f‖_2² over replicates.
    pub integrated_variance: f64,
    pub integrated_variance_se: f64,
    /// (∫G²)^d / (n h^d).
    pub variance_constant: f64,
    /// (∫K²)/(n h^d) - ∫(K_h * f)²/n, the exact integrated variance.
    pub integrated_variance_exact: f64,
    /// total ≤ bias + variance + 3 se.
    pub triangle_ok: bool,
}

/// Splits the error of the raw (not positive-part) estimator into the exact
/// bias ‖K_h * f - f‖_p and replicate fluctuations around K_h * f.
#[allow(clippy::too_many_arguments)]
pub fn bias_variance_decompose(
    f: &TrueDensity,
    kernel: &ProductKernel,
    n: usize,
    h: f64,
    p: f64,
    spec: &GridSpec,
    replicates: usize,
    seed: u64,
) -> Result<BiasVarianceReport> {
    let d = f.dim();
    crate::error::check_dim(d, kernel.dim())?;
    if d > 2 {
        return Err(Error::InvalidParameter(format!("bias/variance split needs d <= 2, got {d}")));
    }
    if replicates < 2 || n == 0 || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need replicates >= 2, n >= 1 and h > 0 (got {replicates}, {n}, {h})"
        )));
    }
    let cache = GridCache::new(f, kernel, h, spec)?;
    let rule = convolution_rule(kernel);
    let smooth = cache.grid.evaluate(|x| smoothed_density(f, kernel, h, x, &rule));
    if smooth.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailed("non-finite smoothed density".into()));
    }
    let bias_term = lp_norm(&cache.grid, &smooth, &cache.truth, p);
    let policy = BandwidthPolicy::Fixed { h_fixed: h };
    let per_rep = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let sample = f.sample(n, derive_seed(seed, &[r as u64, 0]))?;
            let model = fit(&sample, kernel.clone(), &policy, 2.0)?.with_positive_part(false);
            let est = model.evaluate_grid(&cache.grid)?;
            Ok((
                lp_norm(&cache.grid, &est, &smooth, p),
                lp_norm(&cache.grid, &est, &cache.truth, p),
                lp_norm(&cache.grid, &est, &smooth, 2.0).powi(2),
            ))
        })
        .collect::<Result<Vec<(f64, f64, f64)>>>()?;
    let (variance_term, variance_term_se) = mean_and_se(&per_rep.iter().map(|t| t.0).collect::<Vec<_>>());
    let (total_error, total_error_se) = mean_and_se(&per_rep.iter().map(|t| t.1).collect::<Vec<_>>());
    let (integrated_variance, integrated_variance_se) = mean_and_se(&per_rep.iter().map(|t| t.2).collect::<Vec<_>>());
    let nh = n as f64 * h.powi(d as i32);
    let variance_constant = kernel.l2_norm_sq() / nh;
    let smooth_sq: Vec<f64> = smooth.iter().map(|v| v * v).collect();
    let integrated_variance_exact = variance_constant - cache.grid.weighted_sum(&smooth_sq) / n as f64;
    Ok(BiasVarianceReport {
        n,
        d,
        h,
        p,
        replicates,
        bias_term,
        variance_term,
        variance_term_se,
        total_error,
        total_error_se,
        integrated_variance,
        integrated_variance_se,
        variance_constant,
        integrated_variance_exact,
        triangle_ok: total_error <= bias_term + variance_term + 3.0 * total_error_se,
    })
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    pub p: f64,
    pub h: f64,
    pub replicates: usize,
    pub mean_error: f64,
    pub std_err: f64,
    pub mode: String,
    pub seed: u64,
}

impl From<&RiskReport> for SweepRow {
    fn from(r: &RiskReport) -> Self {
        Self {
            n: r.n,
            d: r.d,
            beta: r.beta,
            p: r.p,
            h: r.h,
            replicates: r.replicates,
            mean_error: r.mean_lp_error,
            std_err: r.std_err,
            mode: r.integration_mode.clone(),
            seed: r.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub n: usize,
    pub d: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub config: SweepConfig,
    pub rows: Vec<RiskReport>,
    pub failures: Vec<CellFailure>,
}

impl SweepTable {
    pub fn csv_rows(&self) -> Vec<SweepRow> {
        self.rows.iter().map(SweepRow::from).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.csv_rows(), out)
    }
}

pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Config(format!("writing table: {e}")))?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing table: {e}")))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Config(format!("reading table: {e}"))))
        .collect()
}

/// One risk estimate per (n, d) cell. Failing cells are recorded and skipped.
pub fn rate_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, cell) in cfg.grid.iter().enumerate() {
        let outcome = RiskSetup::from_config(cfg, cell.d)
            .and_then(|setup| estimate_risk(&setup, cell.n, cfg.replicates, derive_seed(cfg.seed, &[i as u64])));
        match outcome {
            Ok(report) => rows.push(report),
            Err(e) => failures.push(CellFailure {
                n: cell.n,
                d: cell.d,
                error: e.to_string(),
            }),
        }
    }
    Ok(SweepTable {
        config: cfg.clone(),
        rows,
        failures,
    })
}

/// Ordinary least-squares line y = intercept + slope x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::DegenerateAbscissa);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(LineFit { slope, intercept, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub d: usize,
    pub beta: f64,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// -β/(2β+d).
    pub theory_slope: f64,
    pub abs_dev: f64,
}

pub fn theory_slope(beta: f64, d: usize) -> f64 {
    -beta / (2.0 * beta + d as f64)
}

fn rows_at_dim(rows: &[SweepRow], d: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let sel: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.d == d && r.mean_error.is_finite() && r.mean_error > 0.0)
        .collect();
    let beta = sel
        .first()
        .map(|r| r.beta)
        .ok_or_else(|| Error::InvalidParameter(format!("no usable rows at d = {d}")))?;
    if sel.iter().any(|r| r.beta != beta) {
        return Err(Error::InvalidParameter(format!("rows at d = {d} mix several beta values")));
    }
    Ok((
        sel.iter().map(|r| (r.n as f64).ln()).collect(),
        sel.iter().map(|r| r.mean_error.ln()).collect(),
        beta,
    ))
}

/// Slope of log mean error against log n at fixed d.
pub fn fit_slope(rows: &[SweepRow], d: usize) -> Result<SlopeFit> {
    let (x, y, beta) = rows_at_dim(rows, d)?;
    if x.len() < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 points at d = {d}, got {}", x.len())));
    }
    let line = fit_line(&x, &y)?;
    let theory = theory_slope(beta, d);
    Ok(SlopeFit {
        d,
        beta,
        points: x.len(),
        slope: line.slope,
        intercept: line.intercept,
        r_squared: line.r_squared,
        theory_slope: theory,
        abs_dev: (line.slope - theory).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub log_n: f64,
    pub log_error: f64,
    /// Theory line through the centroid of the points.
    pub theory: f64,
}

pub fn plot_rows(rows: &[SweepRow], d: usize) -> Result<Vec<PlotRow>> {
    let (x, y, beta) = rows_at_dim(rows, d)?;
    let k = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let s = theory_slope(beta, d);
    Ok(x.iter()
        .zip(&y)
        .map(|(&log_n, &log_error)| PlotRow {
            log_n,
            log_error,
            theory: my + s * (log_n - mx),
        })
        .collect())
}
