//! Parsers for the `--n-grid` and `--grid` arguments.

use crate::error::{CliError, CliResult};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// ln of one grid term: a plain number or `b^k`.
fn ln_term(t: &str) -> CliResult<f64> {
    let t = t.trim();
    let bad = || usage(format!("bad n-grid term {t:?}"));
    let ln = match t.split_once('^') {
        Some((b, k)) => {
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let k: f64 = k.trim().parse().map_err(|_| bad())?;
            k * b.ln()
        }
        None => t.parse::<f64>().map_err(|_| bad())?.ln(),
    };
    if ln.is_finite() && ln > 0.0 {
        Ok(ln)
    } else {
        Err(usage(format!("n-grid term {t:?} must exceed 1")))
    }
}

/// Parses an n grid into ln n values.
///
/// Accepted forms: `1e3,1e6,2^40` or `b^a..b^c[:step]`, the latter stepping
/// the exponent.
pub fn parse_n_grid(spec: &str) -> CliResult<Vec<f64>> {
    if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, s)) => (hi, s.trim().parse::<f64>().map_err(|_| usage(format!("bad step {s:?}")))?),
            None => (rest, 1.0),
        };
        let split = |t: &str| -> CliResult<(f64, f64)> {
            let (b, k) = t
                .trim()
                .split_once('^')
                .ok_or_else(|| usage(format!("range ends must look like b^k, got {t:?}")))?;
            let b: f64 = b.parse().map_err(|_| usage(format!("bad base {b:?}")))?;
            let k: f64 = k.parse().map_err(|_| usage(format!("bad exponent {k:?}")))?;
            Ok((b, k))
        };
        let ((b0, k0), (b1, k1)) = (split(lo)?, split(hi)?);
        if b0 != b1 || !(b0 > 1.0) || k1 < k0 || !(step > 0.0) {
            return Err(usage(format!("bad n-grid range {spec:?}")));
        }
        let count = ((k1 - k0) / step + 1e-9).floor() as usize + 1;
        return (0..count).map(|i| ln_term(&format!("{b0}^{}", k0 + i as f64 * step))).collect();
    }
    let grid: Vec<f64> = spec.split(',').map(ln_term).collect::<CliResult<_>>()?;
    if grid.is_empty() {
        return Err(usage("empty n-grid"));
    }
    Ok(grid)
}

/// Parses `lo:hi:count` (shared by every axis) or `d` comma-separated axes.
pub fn parse_point_grid(spec: &str, d: usize) -> CliResult<Vec<Vec<f64>>> {
    let axes: Vec<&str> = spec.split(',').collect();
    if axes.len() != 1 && axes.len() != d {
        return Err(usage(format!("grid lists {} axes but the sample has d = {d}", axes.len())));
    }
    let parse_axis = |a: &str| -> CliResult<Vec<f64>> {
        let parts: Vec<&str> = a.split(':').map(str::trim).collect();
        let [lo, hi, k] = parts[..] else {
            return Err(usage(format!("grid axis must be lo:hi:count, got {a:?}")));
        };
        let lo: f64 = lo.parse().map_err(|_| usage(format!("bad grid bound {lo:?}")))?;
        let hi: f64 = hi.parse().map_err(|_| usage(format!("bad grid bound {hi:?}")))?;
        let k: usize = k.parse().map_err(|_| usage(format!("bad grid count {k:?}")))?;
        if k == 0 || !(hi >= lo) || (k == 1 && hi != lo) {
            return Err(usage(format!("bad grid axis {a:?}")));
        }
        Ok((0..k)
            .map(|i| if k == 1 { lo } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
            .collect())
    };
    let parsed: Vec<Vec<f64>> = axes.iter().map(|a| parse_axis(a)).collect::<CliResult<_>>()?;
    Ok(if parsed.len() == 1 { vec![parsed[0].clone(); d] } else { parsed })
}

/// Row-major product of the axes, first coordinate slowest.
pub fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    points
}
