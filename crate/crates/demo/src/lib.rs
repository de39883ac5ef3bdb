//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the page slices it into
//! series. The `*_inner` functions carry the logic and are testable natively.

use wasm_bindgen::prelude::*;

use hdkde::density::{make_bump, BaseGaussian, Density, NikolskiiParams, OmegaSpec, PerturbedDensity, TrueDensity};
use hdkde::estimator::{fit, BandwidthPolicy};
use hdkde::kernel::{Kernel1D, ProductKernel};
use hdkde::rates::{log_minimax_rate, DimSchedule};

const MAX_POINTS: usize = 4096;
const MAX_SAMPLE: usize = 200_000;

fn check_points(points: usize) -> Result<(), String> {
    if (2..=MAX_POINTS).contains(&points) {
        Ok(())
    } else {
        Err(format!("points must lie in 2..={MAX_POINTS}, got {points}"))
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
}

/// `[x0, y0, x1, y1, ...]` for the named univariate kernel on [-3, 3].
pub fn kernel_curve_inner(name: &str, points: usize) -> Result<Vec<f64>, String> {
    check_points(points)?;
    let k = Kernel1D::from_name(name).map_err(|e| e.to_string())?;
    Ok(linspace(-3.0, 3.0, points).flat_map(|x| [x, k.eval(x)]).collect())
}

/// `[x, estimate, truth]` triples on [-3, 3] for a KDE fitted to n draws
/// from the d = 1 construction with m = 8 cells and random ω.
///
/// `strength` is the perturbation constant C; 0 samples f_0 itself.
pub fn kde_curve_inner(kernel: &str, n: usize, h: f64, strength: f64, seed: u32, points: usize) -> Result<Vec<f64>, String> {
    check_points(points)?;
    if !(1..=MAX_SAMPLE).contains(&n) {
        return Err(format!("n must lie in 1..={MAX_SAMPLE}, got {n}"));
    }
    let err = |e: hdkde::Error| e.to_string();
    let base = BaseGaussian::new(1, 1.0).map_err(err)?;
    let truth = if strength > 0.0 {
        let params = NikolskiiParams::new(2.0, strength, 2.0).map_err(err)?;
        let omega = OmegaSpec::Random {
            seed: seed as u64,
            density: 0.5,
        }
        .resolve(8)
        .map_err(err)?;
        let f = PerturbedDensity::new(base, params, 8, omega, make_bump(2.0).map_err(err)?).map_err(err)?;
        if let Some(w) = f.warning() {
            return Err(w.to_string());
        }
        TrueDensity::Perturbed(f)
    } else {
        TrueDensity::Base(base)
    };
    let sample = truth.sample(n, seed as u64).map_err(err)?;
    let kernel = ProductKernel::new(Kernel1D::from_name(kernel).map_err(err)?, 1).map_err(err)?;
    let model = fit(&sample, kernel, &BandwidthPolicy::Fixed { h_fixed: h }, 2.0).map_err(err)?;
    let mut out = Vec::with_capacity(3 * points);
    for x in linspace(-3.0, 3.0, points) {
        out.extend([x, model.evaluate_unchecked(&[x]), truth.eval_unchecked(&[x])]);
    }
    Ok(out)
}

/// `[log2 n, ψ_fixed, ψ_sub, ψ_log]` rows for n = 2^1 .. 2^max_log2_n, where
/// the schedules are d = 1, d = floor(fraction · threshold) and d = ceil(ln n).
pub fn rate_curve_inner(beta: f64, fraction: f64, max_log2_n: u32) -> Result<Vec<f64>, String> {
    if !(beta > 0.0 && beta.is_finite()) || !(fraction > 0.0 && fraction.is_finite()) {
        return Err("beta and fraction must be positive".into());
    }
    if !(2..=4096).contains(&max_log2_n) {
        return Err(format!("max_log2_n must lie in 2..=4096, got {max_log2_n}"));
    }
    let schedules = [
        DimSchedule::Constant { d: 1 },
        DimSchedule::ThresholdFraction { c: fraction },
        DimSchedule::LogN,
    ];
    let mut out = Vec::with_capacity(4 * max_log2_n as usize);
    for k in 1..=max_log2_n {
        let ln_n = k as f64 * std::f64::consts::LN_2;
        out.push(k as f64);
        out.extend(schedules.map(|s| log_minimax_rate(ln_n, s.dim(ln_n, beta), beta).exp()));
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn kernel_curve(name: &str, points: usize) -> Result<Vec<f64>, JsValue> {
    kernel_curve_inner(name, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn kde_curve(kernel: &str, n: usize, h: f64, strength: f64, seed: u32, points: usize) -> Result<Vec<f64>, JsValue> {
    kde_curve_inner(kernel, n, h, strength, seed, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rate_curve(beta: f64, fraction: f64, max_log2_n: u32) -> Result<Vec<f64>, JsValue> {
    rate_curve_inner(beta, fraction, max_log2_n).map_err(|e| JsValue::from_str(&e))
}
