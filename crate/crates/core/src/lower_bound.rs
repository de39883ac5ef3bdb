//! Packing, separation and Kullback–Leibler bookkeeping for the minimax lower
//! bound, assembled into a numerically checked certificate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{
    cell_count, make_bump, omega_to_string, positivity_min_m, validate, BaseGaussian, BumpNorms, Density,
    NikolskiiParams, PerturbedDensity, TrueDensity, ValidationGrid,
};
use crate::error::{Error, Result};
use crate::kernel::std_normal_pdf;
use crate::quadrature::{Axis, TensorGrid};
use crate::rates::minimax_rate;
use crate::seed::rng_for;

/// Default KL budget fraction, strictly below 1/8.
pub const DEFAULT_ALPHA: f64 = 0.12;

/// Default codebook cap.
pub const DEFAULT_MAX_WORDS: usize = 64;

/// Proposal budget for the greedy packing.
pub const PROPOSAL_BUDGET: usize = 200_000;

/// Number of differing positions.
pub fn hamming(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Codebook(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Packed(Vec<u64>);

impl Packed {
    fn from_bits(bits: &[bool]) -> Self {
        let mut out = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out[i / 64] |= 1 << (i % 64);
            }
        }
        Self(out)
    }

    fn distance(&self, other: &Self) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }
}

/// Binary words of length m^d with a guaranteed pairwise Hamming distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub m: usize,
    pub d: usize,
    pub words: Vec<Vec<bool>>,
    pub min_pairwise_hamming: usize,
    /// ⌈m^d / 8⌉.
    pub required_hamming: usize,
    /// ln of the packing size exp(m^d/8), i.e. m^d/8.
    pub log_target_size: f64,
    pub target_size: f64,
    pub capped: bool,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Independent O(M²) recomputation of the minimum pairwise distance.
    pub fn recheck(&self) -> Result<usize> {
        let mut best = usize::MAX;
        for (i, a) in self.words.iter().enumerate() {
            for b in &self.words[i + 1..] {
                best = best.min(hamming(a, b)?);
            }
        }
        Ok(best)
    }
}

/// Greedy randomised packing: uniform proposals are kept when at distance at
/// least ⌈m^d/8⌉ from every kept word. Starts from the all-zeros word.
pub fn vg_codebook(m: usize, d: usize, max_words: usize, seed: u64) -> Result<Codebook> {
    if m < 8 {
        return Err(Error::InvalidParameter(format!("codebook needs m >= 8, got {m}")));
    }
    let len = cell_count(m, d)?;
    let log_target_size = len as f64 / 8.0;
    let target_size = log_target_size.exp();
    let required = len.div_ceil(8);
    let goal = if log_target_size > 700.0 {
        max_words
    } else {
        max_words.min(target_size.ceil() as usize)
    };
    let mut rng = rng_for(seed, &[0x636f_6465]);
    let mut words = vec![vec![false; len]];
    let mut packed = vec![Packed::from_bits(&words[0])];
    let mut proposals = 0;
    while words.len() < goal && proposals < PROPOSAL_BUDGET {
        proposals += 1;
        let cand: Vec<bool> = (0..len).map(|_| rng.random::<bool>()).collect();
        let p = Packed::from_bits(&cand);
        if packed.iter().all(|q| q.distance(&p) >= required) {
            words.push(cand);
            packed.push(p);
        }
    }
    if goal >= 2 && words.len() < 2 {
        return Err(Error::Codebook(format!(
            "only {} word(s) after {proposals} proposals",
            words.len()
        )));
    }
    let mut min_pairwise_hamming = usize::MAX;
    for (i, a) in packed.iter().enumerate() {
        for b in &packed[i + 1..] {
            min_pairwise_hamming = min_pairwise_hamming.min(a.distance(b));
        }
    }
    if words.len() < 2 {
        min_pairwise_hamming = 0;
    }
    Ok(Codebook {
        m,
        d,
        capped: (max_words as f64) < target_size,
        words,
        min_pairwise_hamming,
        required_hamming: required,
        log_target_size,
        target_size,
    })
}

/// 2τ = 8^(-1/p) d C m^-β ‖Γ_0‖_p^d.
pub fn separation_lower(m: f64, d: usize, params: &NikolskiiParams, gamma0_pnorm: f64) -> f64 {
    8f64.powf(-1.0 / params.p) * d as f64 * params.c * m.powf(-params.beta) * gamma0_pnorm.powi(d as i32)
}

/// Closed form m^(-β-d/p) H^(1/p) d C ‖Γ_0‖_p^d.
pub fn lp_distance_closed_form(m: usize, hamming: usize, d: usize, params: &NikolskiiParams, gamma0_pnorm: f64) -> f64 {
    let mf = m as f64;
    mf.powf(-params.beta - d as f64 / params.p)
        * (hamming as f64).powf(1.0 / params.p)
        * d as f64
        * params.c
        * gamma0_pnorm.powi(d as i32)
}

/// Tensor grid over [1/(2m), 1 + 1/(2m)]^d with panels aligned to the cells.
pub fn cell_grid(m: usize, d: usize, panels_per_cell: usize, order: usize) -> TensorGrid {
    let mf = m as f64;
    let k = panels_per_cell * m;
    let breaks: Vec<f64> = (0..=k).map(|i| 0.5 / mf + i as f64 / (panels_per_cell as f64 * mf)).collect();
    TensorGrid::cube(Axis::from_breakpoints(&breaks, order), d)
}

/// Gauss–Legendre panels per cell and axis for per-cell integrals.
pub const CELL_PANELS: usize = 32;

/// ∫ g over each cell of the m^d partition, in row-major cell order.
pub fn per_cell_integrals<F: Fn(&[f64]) -> f64 + Sync>(m: usize, d: usize, g: F) -> Vec<f64> {
    let mf = m as f64;
    let cells = m.pow(d as u32);
    (0..cells)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let mut axes = Vec::with_capacity(d);
            for _ in 0..d {
                let j = (rest % m + 1) as f64;
                rest /= m;
                axes.push(Axis::uniform((j - 0.5) / mf, (j + 0.5) / mf, CELL_PANELS, 8));
            }
            axes.reverse();
            TensorGrid::new(axes).integrate(&g)
        })
        .collect()
}

/// ‖f_ω - f_ω'‖_p by quadrature over the perturbed region.
pub fn lp_distance_pair(f: &PerturbedDensity, g: &PerturbedDensity, p: f64, panels_per_cell: usize) -> Result<f64> {
    let d = f.base().dim;
    if d != g.base().dim || f.m() != g.m() {
        return Err(Error::InvalidParameter("densities come from different families".into()));
    }
    if d > 3 {
        return Err(Error::InvalidParameter(format!("quadrature distance needs d <= 3, got {d}")));
    }
    if panels_per_cell == 0 {
        return Err(Error::GridTooCoarse("need at least one panel per cell".into()));
    }
    let grid = cell_grid(f.m(), d, panels_per_cell, 8);
    let v = grid.integrate(|x| (f.perturbation(x) - g.perturbation(x)).abs().powf(p));
    if !v.is_finite() {
        return Err(Error::QuadratureFailed("non-finite L^p distance".into()));
    }
    Ok(v.powf(1.0 / p))
}

/// Monte Carlo estimate of KL(f, g) = E_f[log f/g] with its standard error.
pub fn kl_mc(f: &TrueDensity, g: &dyn Density, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    if n_mc < 2 {
        return Err(Error::InvalidParameter("n_mc must be at least 2".into()));
    }
    let draws = f.sample(n_mc, seed)?;
    let logs: Vec<f64> = draws
        .as_slice()
        .par_chunks_exact(draws.dim())
        .map(|x| (f.eval_unchecked(x) / g.eval_unchecked(x)).ln())
        .collect();
    if let Some(i) = logs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogRatio {
            location: draws.row(i).to_vec(),
        });
    }
    let n = n_mc as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// σ ‖Γ_0‖_2² / φ(1/σ).
fn kl_base(sigma: f64, gamma0_l2sq: f64) -> f64 {
    sigma * gamma0_l2sq / std_normal_pdf(1.0 / sigma)
}

/// n (σ‖Γ_0‖_2²/φ(1/σ))^d d² C² m^-2β.
pub fn kl_upper_bound(n: f64, d: usize, sigma: f64, c: f64, m: f64, beta: f64, gamma0_l2sq: f64) -> f64 {
    let df = d as f64;
    n * kl_base(sigma, gamma0_l2sq).powf(df) * df * df * c * c * m.powf(-2.0 * beta)
}

/// Admissible range of m as printed: (positivity threshold, KL ceiling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MWindow {
    pub m_lo: f64,
    pub m_hi: f64,
    pub empty: bool,
}

/// The window as printed, with the ceiling [(d²n) B^d / (8C)²]^(1/(2β+d)).
pub fn m_window(n: f64, d: usize, params: &NikolskiiParams, sigma: f64, norms: &BumpNorms) -> Result<MWindow> {
    let base = BaseGaussian::new(d, sigma)?;
    let m_lo = positivity_min_m(params, &base, norms.sup);
    let df = d as f64;
    let m_hi = (df * df * n * kl_base(sigma, norms.l2_sq).powf(df) / (8.0 * params.c).powi(2))
        .powf(1.0 / (2.0 * params.beta + df));
    Ok(MWindow {
        m_lo,
        m_hi,
        empty: m_lo >= m_hi,
    })
}

/// Smallest m with kl_upper_bound(n, ...) ≤ α m^d / 8:
/// (8 n B^d d² C² / α)^(1/(2β+d)).
pub fn kl_floor(n: f64, d: usize, params: &NikolskiiParams, sigma: f64, gamma0_l2sq: f64, alpha: f64) -> f64 {
    let df = d as f64;
    (8.0 * n * kl_base(sigma, gamma0_l2sq).powf(df) * df * df * params.c * params.c / alpha)
        .powf(1.0 / (2.0 * params.beta + df))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaConstants {
    pub kappa: f64,
    pub kappa_d: f64,
    pub n_star: f64,
}

/// κ, κ_d and n*, with n* evaluated in log space.
pub fn kappa_constants(d: usize, params: &NikolskiiParams, sigma: f64, norms: &BumpNorms) -> KappaConstants {
    let df = d as f64;
    let beta = params.beta;
    let kappa = 1.0 / kl_base(sigma, norms.l2_sq);
    let e = 2.0 * beta + df;
    let kappa_d = (64.0 * params.c * params.c).powf(1.0 / e) * kappa.powf(df / e);
    let ln_inner = -(df + 1.0) * e * norms.lp.ln()
        + (4.0 * beta + df) * params.c.ln()
        + df * (df + beta) * (sigma / std_normal_pdf(1.0 / sigma)).ln();
    let ln_n_star = 64f64.ln() - df * norms.l2_sq.ln() + ln_inner / beta;
    KappaConstants {
        kappa,
        kappa_d,
        n_star: ln_n_star.exp(),
    }
}

/// n* alone.
pub fn n_star(d: usize, params: &NikolskiiParams, sigma: f64, norms: &BumpNorms) -> f64 {
    kappa_constants(d, params, sigma, norms).n_star
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateInputs {
    pub n: f64,
    pub d: usize,
    pub beta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub sigma: f64,
    pub p: f64,
    pub max_words: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    /// Every codebook density is a valid density and m exceeds the positivity threshold.
    pub validity: bool,
    /// Every pair is at least 2τ apart.
    pub separation: bool,
    /// Average KL over the alternatives is within α m^d / 8.
    pub kl: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCertificate {
    pub inputs: CertificateInputs,
    /// "quadrature" for d ≤ 2, "formula" beyond.
    pub mode: String,
    pub bump_scale_a: f64,
    pub bump_norms: BumpNorms,
    pub kappa: KappaConstants,
    pub m_chosen: usize,
    pub m_window: (f64, f64),
    pub m_window_empty: bool,
    pub m_in_window: bool,
    pub m_positivity: f64,
    pub m_kl_floor: f64,
    pub m_prescribed: f64,
    pub codebook_size: usize,
    pub codebook_capped: bool,
    pub codebook_target_log_size: f64,
    pub codebook_min_hamming: usize,
    pub codebook_required_hamming: usize,
    pub codebook_words: Vec<String>,
    pub separation_2tau: f64,
    pub min_pair_distance: f64,
    pub min_pair_distance_closed_form: f64,
    /// Mean per-sample KL bound over the alternatives, times n.
    pub kl_avg: f64,
    /// Mean exact KL over the alternatives (quadrature mode), times n.
    pub kl_avg_quadrature: Option<f64>,
    /// kl_upper_bound with every cell active.
    pub kl_all_cells_bound: f64,
    /// α m^d / 8.
    pub kl_budget: f64,
    /// α ln(codebook size).
    pub kl_budget_capped: f64,
    pub min_density_value: f64,
    pub max_integral_err: f64,
    pub conditions: Conditions,
    pub rate_value: f64,
    pub constant_a_lb: f64,
    /// A ψ_{nd}; the universal factor c(1/8) is left symbolic.
    pub lower_bound_value: f64,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Per-alternative bound n Σ_j ω(j) ∫γ_j²/f_0, using the infimum of f_0 over each cell.
fn kl_bound_word(word: &[bool], m: usize, d: usize, params: &NikolskiiParams, sigma: f64, norms: &BumpNorms) -> f64 {
    let mf = m as f64;
    let df = d as f64;
    let cell_energy = (df * params.c).powi(2) * mf.powf(-2.0 * params.beta - df) * norms.l2_sq.powi(d as i32);
    let mut total = 0.0;
    for (idx, _) in word.iter().enumerate().filter(|(_, &b)| b) {
        let mut rest = idx;
        let mut inv_f0 = 1.0;
        for _ in 0..d {
            let j = rest % m + 1;
            rest /= m;
            let edge = (j as f64 + 0.5) / mf;
            inv_f0 *= sigma / std_normal_pdf(edge / sigma);
        }
        total += cell_energy * inv_f0;
    }
    total
}

/// Builds f_ω for every codebook word and checks the three conditions.
pub fn build_certificate(inputs: &CertificateInputs) -> Result<LowerBoundCertificate> {
    let CertificateInputs { n, d, beta, c, sigma, p, max_words, seed, alpha } = *inputs;
    let params = NikolskiiParams::new(beta, c, p)?;
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::InvalidParameter(format!("n must be at least 1, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 0.125) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1/8), got {alpha}")));
    }
    let base = BaseGaussian::new(d, sigma)?;
    let bump = make_bump(beta)?;
    let norms = bump.norms(p);
    let kappa = kappa_constants(d, &params, sigma, &norms);
    let window = m_window(n, d, &params, sigma, &norms)?;
    let m_kl_floor = kl_floor(n, d, &params, sigma, norms.l2_sq, alpha);
    let df = d as f64;
    let m_prescribed =
        norms.lp.powf((df + 1.0) / beta) / kappa.kappa_d * (df * df * n).powf(1.0 / (2.0 * beta + df));
    let m = ((window.m_lo.floor() as usize) + 1).max(m_kl_floor.ceil() as usize).max(8);
    let m_in_window = (m as f64) > window.m_lo && (m as f64) <= window.m_hi;

    let mut warnings = Vec::new();
    let mut failures = Vec::new();
    if n <= kappa.n_star {
        warnings.push(format!("n = {n} does not exceed n* = {:.4e}", kappa.n_star));
    }
    if !m_in_window {
        warnings.push(format!(
            "m = {m} lies outside the printed window ({:.4}, {:.4}]",
            window.m_lo, window.m_hi
        ));
    }

    let codebook = vg_codebook(m, d, max_words.max(1), seed)?;
    let alternatives = codebook.len().saturating_sub(1);
    if alternatives == 0 {
        failures.push("separation: codebook has no alternatives, condition is vacuous".into());
    }
    let quadrature = d <= 2;
    let densities: Vec<PerturbedDensity> = codebook
        .words
        .iter()
        .map(|w| PerturbedDensity::new(base, params, m, w.clone(), bump))
        .collect::<Result<_>>()?;

    // (1) validity
    let m_positivity = window.m_lo;
    let mut validity = (m as f64) > m_positivity;
    if !validity {
        failures.push(format!("validity: m = {m} does not exceed {m_positivity:.4}"));
    }
    let (mut min_density_value, mut max_integral_err) = (f64::INFINITY, 0.0f64);
    if quadrature {
        let reports: Vec<_> = densities
            .par_iter()
            .map(|f| validate(f, &ValidationGrid::default()))
            .collect::<Result<_>>()?;
        for (k, r) in reports.iter().enumerate() {
            min_density_value = min_density_value.min(r.min_value_on_grid);
            max_integral_err = max_integral_err.max((r.integral_est - 1.0).abs());
            if !r.passed || r.nikolskii_margin_ok == Some(false) {
                validity = false;
                failures.push(format!("validity: word {k} fails ({r:?})"));
            }
        }
    } else {
        // f_ω ≥ f_0 - sup|perturbation| on the perturbed region
        let sup = df * c * (m as f64).powf(-beta) * norms.sup.powi(d as i32);
        min_density_value = base.inf_on_cube(1.0 + 0.5 / m as f64) - sup;
        if min_density_value < 0.0 {
            validity = false;
            failures.push("validity: analytic lower bound on f_omega is negative".into());
        }
    }

    // (2) separation
    let separation_2tau = separation_lower(m as f64, d, &params, norms.lp);
    let min_pair_distance_closed_form = if alternatives > 0 {
        lp_distance_closed_form(m, codebook.min_pairwise_hamming, d, &params, norms.lp)
    } else {
        0.0
    };
    let ones = densities[0].with_omega(vec![true; densities[0].omega().len()])?;
    let min_pair_distance = if quadrature && alternatives > 0 {
        let energy = per_cell_integrals(m, d, |x| ones.perturbation(x).abs().powf(p));
        let pairs: Vec<(usize, usize)> = (0..codebook.len())
            .flat_map(|i| (i + 1..codebook.len()).map(move |j| (i, j)))
            .collect();
        pairs
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (&codebook.words[i], &codebook.words[j]);
                let s: f64 = energy.iter().zip(a.iter().zip(b)).filter(|(_, (x, y))| x != y).map(|(e, _)| e).sum();
                s.powf(1.0 / p)
            })
            .fold(f64::INFINITY, f64::min)
    } else {
        min_pair_distance_closed_form
    };
    let separation = alternatives > 0 && min_pair_distance >= (1.0 - 1e-9) * separation_2tau;
    if alternatives > 0 && !separation {
        failures.push(format!(
            "separation: min distance {min_pair_distance:.6e} below 2tau = {separation_2tau:.6e}"
        ));
    }

    // (3) KL budget
    let kl_budget = alpha * codebook.log_target_size;
    let kl_budget_capped = alpha * (codebook.len() as f64).ln();
    let kl_avg = if alternatives > 0 {
        codebook.words[1..]
            .iter()
            .map(|w| n * kl_bound_word(w, m, d, &params, sigma, &norms))
            .sum::<f64>()
            / alternatives as f64
    } else {
        0.0
    };
    let kl_avg_quadrature = (quadrature && alternatives > 0).then(|| {
        let cell_kl = per_cell_integrals(m, d, |x| {
            let f0 = base.eval_unchecked(x);
            let fw = f0 + ones.perturbation(x);
            if fw > 0.0 {
                fw * (fw / f0).ln() - (fw - f0)
            } else {
                0.0
            }
        });
        codebook.words[1..]
            .iter()
            .map(|w| n * w.iter().zip(&cell_kl).filter(|(b, _)| **b).map(|(_, k)| k).sum::<f64>())
            .sum::<f64>()
            / alternatives as f64
    });
    let kl = alternatives > 0 && kl_avg <= kl_budget;
    if alternatives > 0 && !kl {
        failures.push(format!("kl: average bound {kl_avg:.6e} exceeds budget {kl_budget:.6e}"));
    }

    let rate_value = minimax_rate(n, d, beta);
    let constant_a_lb = c / 2.0 * 8f64.powf(-1.0 / p) * kappa.kappa.powf(-beta);
    let conditions = Conditions { validity, separation, kl };
    Ok(LowerBoundCertificate {
        inputs: *inputs,
        mode: if quadrature { "quadrature" } else { "formula" }.into(),
        bump_scale_a: bump.scale_a,
        bump_norms: norms,
        kappa,
        m_chosen: m,
        m_window: (window.m_lo, window.m_hi),
        m_window_empty: window.empty,
        m_in_window,
        m_positivity,
        m_kl_floor,
        m_prescribed,
        codebook_size: codebook.len(),
        codebook_capped: codebook.capped,
        codebook_target_log_size: codebook.log_target_size,
        codebook_min_hamming: codebook.min_pairwise_hamming,
        codebook_required_hamming: codebook.required_hamming,
        codebook_words: codebook.words.iter().map(|w| omega_to_string(w)).collect(),
        separation_2tau,
        min_pair_distance,
        min_pair_distance_closed_form,
        kl_avg,
        kl_avg_quadrature,
        kl_all_cells_bound: kl_upper_bound(n, d, sigma, c, m as f64, beta, norms.l2_sq),
        kl_budget,
        kl_budget_capped,
        min_density_value,
        max_integral_err,
        conditions,
        rate_value,
        constant_a_lb,
        lower_bound_value: constant_a_lb * rate_value,
        warnings,
        failures,
        passed: validity && separation && kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        s.bytes().map(|b| b == b'1').collect()
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&bits("0000"), &bits("0000")).unwrap(), 0);
        assert_eq!(hamming(&bits("0101"), &bits("1010")).unwrap(), 4);
        assert_eq!(hamming(&bits("0011"), &bits("0001")).unwrap(), 1);
        assert!(hamming(&bits("01"), &bits("011")).is_err());
    }

    #[test]
    fn packed_distance_matches_hamming() {
        let mut rng = rng_for(4, &[]);
        for len in [1usize, 63, 64, 65, 200] {
            let a: Vec<bool> = (0..len).map(|_| rng.random()).collect();
            let b: Vec<bool> = (0..len).map(|_| rng.random()).collect();
            assert_eq!(Packed::from_bits(&a).distance(&Packed::from_bits(&b)), hamming(&a, &b).unwrap());
        }
    }

    #[test]
    fn codebook_examples() {
        let cb = vg_codebook(8, 1, 64, 1).unwrap();
        assert!(cb.len() >= 3);
        assert!(cb.min_pairwise_hamming >= 1);
        assert!(!cb.capped);
        assert!(cb.words[0].iter().all(|&b| !b));
        assert_eq!(cb.recheck().unwrap(), cb.min_pairwise_hamming);
        assert_eq!(cb.log_target_size, 1.0);

        let capped = vg_codebook(8, 1, 2, 1).unwrap();
        assert!(capped.capped);
        assert_eq!(capped.len(), 2);

        let big = vg_codebook(16, 2, 64, 5).unwrap();
        assert_eq!(big.len(), 64);
        assert!(big.recheck().unwrap() >= 32);
        assert_eq!(big.log_target_size, 32.0);
        assert!(vg_codebook(4, 1, 64, 1).is_err());
        assert_eq!(vg_codebook(16, 2, 64, 5).unwrap(), big);
    }

    #[test]
    fn exhaustive_packing_exists_for_m8() {
        // three words of length 8 at distance >= 1 trivially exist; check the
        // greedy result against brute force over {0,1}^8 for distance 2
        let words: Vec<u32> = (0..256).collect();
        let mut kept: Vec<u32> = vec![0];
        for &w in &words {
            if kept.iter().all(|&k| (k ^ w).count_ones() >= 1) {
                kept.push(w);
            }
        }
        assert!(kept.len() >= 3);
    }

    #[test]
    fn separation_examples() {
        let p = NikolskiiParams::new(2.0, 1.0, 2.0).unwrap();
        assert!((separation_lower(1.0, 1, &p, 1.0) - 0.353_553_390_593_273_8).abs() < 1e-15);
        let p2 = NikolskiiParams::new(2.0, 2.0, 2.0).unwrap();
        assert_eq!(separation_lower(3.0, 2, &p2, 0.7), 2.0 * separation_lower(3.0, 2, &p, 0.7));
        assert!(separation_lower(1e8, 1, &p, 1.0) < 1e-15);
    }

    #[test]
    fn distance_pair_matches_closed_form() {
        let params = NikolskiiParams::new(2.0, 1.0, 2.0).unwrap();
        let bump = make_bump(2.0).unwrap();
        let base = BaseGaussian::new(1, 1.0).unwrap();
        let norms = bump.norms(2.0);
        let f = PerturbedDensity::new(base, params, 8, vec![false; 8], bump).unwrap();
        assert_eq!(lp_distance_pair(&f, &f, 2.0, 4).unwrap(), 0.0);
        let mut last = 0.0;
        let mut w = vec![false; 8];
        for h in 1..=8 {
            w[h - 1] = true;
            let g = f.with_omega(w.clone()).unwrap();
            let dist = lp_distance_pair(&f, &g, 2.0, 16).unwrap();
            let exact = lp_distance_closed_form(8, h, 1, &params, norms.lp);
            assert!((dist / exact - 1.0).abs() < 1e-6, "h={h} ratio={}", dist / exact);
            assert!(dist > last);
            last = dist;
        }
    }

    #[test]
    fn kl_bound_examples() {
        assert_eq!(kl_upper_bound(0.0, 1, 1.0, 1.0, 8.0, 2.0, 0.1), 0.0);
        let one = kl_upper_bound(1.0, 2, 1.3, 0.7, 8.0, 2.0, 0.1);
        assert!((kl_upper_bound(10.0, 2, 1.3, 0.7, 8.0, 2.0, 0.1) - 10.0 * one).abs() < 1e-15 * one * 10.0);
        let l2 = make_bump(2.0).unwrap().norms(2.0).l2_sq;
        let expected = l2 / std_normal_pdf(1.0) * 64f64.powi(-2) * 1e6;
        assert!((kl_upper_bound(1e6, 1, 1.0, 1.0, 8.0, 2.0, l2) / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kl_floor_makes_bound_fit_budget() {
        let params = NikolskiiParams::new(2.0, 1.0, 2.0).unwrap();
        let norms = make_bump(2.0).unwrap().norms(2.0);
        for d in 1..=3 {
            let m = kl_floor(1e6, d, &params, 1.0, norms.l2_sq, DEFAULT_ALPHA);
            let lhs = kl_upper_bound(1e6, d, 1.0, 1.0, m, 2.0, norms.l2_sq);
            let rhs = DEFAULT_ALPHA * m.powi(d as i32) / 8.0;
            assert!((lhs / rhs - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn window_edges() {
        let params = NikolskiiParams::new(2.0, 1.0, 2.0).unwrap();
        let norms = make_bump(2.0).unwrap().norms(2.0);
        let small = m_window(10.0, 1, &params, 1.0, &norms).unwrap();
        assert!(small.empty);
        let a = m_window(1e6, 1, &params, 1.0, &norms).unwrap();
        let b = m_window(32e6, 1, &params, 1.0, &norms).unwrap();
        assert!((b.m_hi / a.m_hi - 2.0).abs() < 1e-12);
        assert_eq!(a.m_lo, b.m_lo);
        let huge = m_window(1e300, 1, &params, 1.0, &norms).unwrap();
        assert!(!huge.empty);
    }

    #[test]
    fn n_star_behaviour() {
        let norms = make_bump(2.0).unwrap().norms(2.0);
        let p1 = NikolskiiParams::new(2.0, 1.0, 2.0).unwrap();
        let p2 = NikolskiiParams::new(2.0, 2.0, 2.0).unwrap();
        let (a, b) = (n_star(1, &p1, 1.0, &norms), n_star(1, &p2, 1.0, &norms));
        assert!(b > a && a.is_finite() && a > 0.0);
        assert!(n_star(2, &p1, 1.0, &norms) > a);
        // direct evaluation of the printed expression at d = 1
        let s = 1.0 / std_normal_pdf(1.0);
        let direct = 64.0 / norms.l2_sq * (norms.lp.powf(-2.0 * 5.0) * s.powf(3.0)).powf(0.5);
        assert!((a / direct - 1.0).abs() < 1e-12);
        let k = kappa_constants(1, &p1, 1.0, &norms);
        assert!((k.kappa - std_normal_pdf(1.0) / norms.l2_sq).abs() < 1e-9 * k.kappa);
    }

    #[test]
    fn kl_mc_of_identical_laws_is_zero() {
        let base = BaseGaussian::new(1, 1.0).unwrap();
        let (est, se) = kl_mc(&TrueDensity::Base(base), &base, 4000, 2).unwrap();
        assert_eq!(est, 0.0);
        assert_eq!(se, 0.0);
        assert!(kl_mc(&TrueDensity::Base(base), &base, 1, 2).is_err());
    }

    #[test]
    fn certificate_examples() {
        let inputs = CertificateInputs {
            n: 1024.0,
            d: 1,
            beta: 2.0,
            c: 1.0,
            sigma: 1.0,
            p: 2.0,
            max_words: 64,
            seed: 1,
            alpha: DEFAULT_ALPHA,
        };
        let cert = build_certificate(&inputs).unwrap();
        assert!((cert.rate_value - 0.0625).abs() < 1e-15);
        assert!(cert.passed, "{:?}", cert.failures);

        let vacuous = build_certificate(&CertificateInputs { max_words: 1, ..inputs }).unwrap();
        assert!(!vacuous.passed);
        assert!(!vacuous.conditions.separation);
        assert!(vacuous.failures.iter().any(|f| f.contains("vacuous")));

        let formula = build_certificate(&CertificateInputs { d: 3, ..inputs }).unwrap();
        assert_eq!(formula.mode, "formula");
    }

    #[test]
    fn certificate_monotone_in_n() {
        let mut prev = true;
        for k in 0..5 {
            let cert = build_certificate(&CertificateInputs {
                n: 1e4 * 2f64.powi(k),
                d: 2,
                beta: 2.0,
                c: 1.0,
                sigma: 1.0,
                p: 2.0,
                max_words: 16,
                seed: 9,
                alpha: DEFAULT_ALPHA,
            })
            .unwrap();
            assert!(!prev || cert.passed, "k={k}: {:?}", cert.failures);
            prev = cert.passed;
        }
    }
}
