//! Closed-form rate calculus. Everything is computed in log space so that
//! d^d stays finite for large d.

use serde::{Deserialize, Serialize};

/// ψ_{n,d} = (d^d n^-β)^(1/(2β+d)).
pub fn minimax_rate(n: f64, d: usize, beta: f64) -> f64 {
    log_minimax_rate(n.ln(), d, beta).exp()
}

/// ln ψ as a function of ln n, usable when n itself overflows.
pub fn log_minimax_rate(ln_n: f64, d: usize, beta: f64) -> f64 {
    let df = d as f64;
    (df * df.ln() - beta * ln_n) / (2.0 * beta + df)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: f64,
    pub d: usize,
    pub beta: f64,
    pub psi: f64,
}

/// Principal branch of the Lambert W function on [0, ∞).
pub fn lambert_w(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return x;
    }
    let mut w = x.ln_1p();
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-16 * w.abs().max(1e-300) {
            break;
        }
    }
    w
}

/// β ln n / W(β ln n), the dimension growth below which the rate still vanishes.
pub fn consistency_threshold(n: f64, beta: f64) -> f64 {
    threshold_from_log(n.ln(), beta)
}

/// [`consistency_threshold`] from ln n.
pub fn threshold_from_log(ln_n: f64, beta: f64) -> f64 {
    let z = beta * ln_n;
    z / lambert_w(z)
}

/// A dimension schedule n ↦ d(n), expressed through ln n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimSchedule {
    Constant { d: usize },
    /// ⌊c · threshold(n)⌋, at least 1.
    ThresholdFraction { c: f64 },
    /// ⌈ln n⌉.
    LogN,
}

impl DimSchedule {
    pub fn dim(&self, ln_n: f64, beta: f64) -> usize {
        match *self {
            Self::Constant { d } => d,
            Self::ThresholdFraction { c } => ((c * threshold_from_log(ln_n, beta)).floor() as usize).max(1),
            Self::LogN => (ln_n.ceil() as usize).max(1),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Constant { d } => format!("d={d}"),
            Self::ThresholdFraction { c } => format!("floor({c}*threshold)"),
            Self::LogN => "ceil(ln n)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub ln_n: f64,
    pub d: usize,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub schedule: String,
    pub rows: Vec<RateRow>,
    /// ψ strictly decreasing over the grid.
    pub decreasing: bool,
    /// ψ never decreasing over the grid.
    pub non_decreasing: bool,
}

/// ψ_{n, d(n)} over a grid of ln n.
pub fn rate_tends_to_zero(ln_n_grid: &[f64], schedule: DimSchedule, beta: f64) -> RateTable {
    let rows: Vec<RateRow> = ln_n_grid
        .iter()
        .map(|&ln_n| {
            let d = schedule.dim(ln_n, beta);
            RateRow {
                ln_n,
                d,
                psi: log_minimax_rate(ln_n, d, beta).exp(),
            }
        })
        .collect();
    let decreasing = rows.windows(2).all(|w| w[1].psi < w[0].psi);
    let non_decreasing = rows.windows(2).all(|w| w[1].psi >= w[0].psi);
    RateTable {
        schedule: schedule.label(),
        rows,
        decreasing,
        non_decreasing,
    }
}

/// Bias shape d h^β, with the unstated class constant set to one.
pub fn bias_bound(h: f64, d: usize, beta: f64) -> f64 {
    d as f64 * h.powf(beta)
}

/// Integrated variance constant at p = 2: (∫G²)^d / (n h^d).
pub fn variance_bound(n: f64, h: f64, d: usize, k_l2sq: f64) -> f64 {
    k_l2sq.powi(d as i32) / (n * h.powi(d as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rate_examples() {
        assert!((minimax_rate(1024.0, 1, 2.0) - 0.0625).abs() < 1e-15);
        assert!((minimax_rate(64.0, 2, 2.0) - 2f64.powf(-5.0 / 3.0)).abs() < 1e-15);
        assert!((minimax_rate(256.0, 4, 2.0) - 0.5).abs() < 1e-15);
        // finite where d^d overflows
        assert!(minimax_rate(1e300, 400, 2.0).is_finite());
    }

    #[test]
    fn rate_factorises() {
        for &(n, d, beta) in &[(100.0f64, 3usize, 2.5), (1e6, 7, 1.5), (5e3, 1, 4.0)] {
            let e = 2.0 * beta + d as f64;
            let direct = n.powf(-beta / e) * (d as f64).powf(d as f64 / e);
            assert!((minimax_rate(n, d, beta) / direct - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn lambert_examples() {
        assert_eq!(lambert_w(0.0), 0.0);
        assert!((lambert_w(std::f64::consts::E) - 1.0).abs() < 1e-15);
        assert!((lambert_w(1.0) - 0.567_143_290_409_784).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((e / lambert_w(e) - e).abs() < 1e-14);
    }

    #[test]
    fn lambert_inverse_on_log_grid() {
        for k in 0..=120 {
            let x = 10f64.powf(-6.0 + k as f64 * 0.1);
            let w = lambert_w(x);
            assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0), "x={x}");
        }
    }

    #[test]
    fn lambert_series_gap_shrinks() {
        let gaps: Vec<f64> = (1..=3)
            .map(|k| {
                let ln_n = 10f64.powi(k) * std::f64::consts::LN_10;
                let (l1, l2) = (ln_n.ln(), ln_n.ln().ln());
                (lambert_w(ln_n) - (l1 - l2)).abs()
            })
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    }

    #[test]
    fn threshold_is_increasing() {
        let t: Vec<f64> = (2..60).map(|k| consistency_threshold(2f64.powi(k), 2.0)).collect();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let z = 2.0 * 1e6f64.ln();
        assert!((consistency_threshold(1e6, 2.0) - z / lambert_w(z)).abs() < 1e-12);
    }

    #[test]
    fn schedules() {
        let grid: Vec<f64> = (10..=40).map(|k| k as f64 * std::f64::consts::LN_2).collect();
        let fixed = rate_tends_to_zero(&grid, DimSchedule::Constant { d: 1 }, 2.0);
        assert!(fixed.decreasing);
        let sub = rate_tends_to_zero(&grid, DimSchedule::ThresholdFraction { c: 0.5 }, 2.0);
        let (first, last) = (sub.rows[0].psi, sub.rows.last().unwrap().psi);
        assert!(last < first && last < 0.5);
        let fast = rate_tends_to_zero(&grid, DimSchedule::LogN, 2.0);
        let tail = &fast.rows[fast.rows.len() / 2..];
        assert!(tail.iter().all(|r| r.psi > 1.0));
    }

    #[test]
    fn bound_examples() {
        assert!((variance_bound(1e4, 0.25, 1, 0.6) - 2.4e-4).abs() < 1e-18);
        assert_eq!(bias_bound(0.3, 4, 2.0), 2.0 * bias_bound(0.3, 2, 2.0));
        assert!((bias_bound(0.2, 1, 2.0) / bias_bound(0.1, 1, 2.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_bandwidth_balances_terms() {
        let ratios: Vec<f64> = [1usize, 2, 3, 5, 8]
            .iter()
            .flat_map(|&d| [1e3, 1e5, 1e8].map(move |n: f64| (d, n)))
            .map(|(d, n): (usize, f64)| {
                let beta = 2.0;
                let h = (((d * d) as f64) * n).powf(-1.0 / (2.0 * beta + d as f64));
                let sd = (1.0 / (n * h.powi(d as i32))).sqrt();
                bias_bound(h, d, beta) / sd
            })
            .collect();
        // d h^β / (n h^d)^-1/2 = d h^(β + d/2) n^(1/2) = 1 at this h
        for r in ratios {
            assert!((r - 1.0).abs() < 1e-9, "{r}");
        }
    }

    proptest! {
        #[test]
        fn lambert_is_inverse(x in 0.0f64..1e8) {
            let w = lambert_w(x);
            prop_assert!(w >= 0.0);
            prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0));
        }
    }
}
