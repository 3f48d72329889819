//! Weighted least-squares fitting of variogram families.
//!
//! Nugget and amplitude enter every family linearly, so for a fixed shape
//! parameter (range or exponent) they are solved exactly under
//! non-negativity. The shape parameter is then found by a bounded
//! Nelder–Mead search from five deterministic starts.

use super::variogram::{unit_shape, EmpiricalVariogram, FittedVariogram, VariogramFamily};
use crate::error::{Error, Result};

const N_STARTS: usize = 5;
const EXPONENT_BOUNDS: (f64, f64) = (1e-3, 2.0 - 1e-3);
/// Range bounds relative to the largest binned lag.
const RANGE_BOUNDS: (f64, f64) = (1e-3, 10.0);

pub fn fit_variogram(ev: &EmpiricalVariogram, family: VariogramFamily) -> Result<FittedVariogram> {
    let needed = family.n_params();
    if ev.n_bins() < needed {
        return Err(Error::DegenerateVariogram {
            family: family.name(),
            bins: ev.n_bins(),
            needed,
        });
    }
    let weights: Vec<f64> = ev.counts().iter().map(|&c| c as f64).collect();
    let lags = ev.lags();
    let gamma = ev.gamma();

    let profile = |shape: f64| -> (f64, f64, f64) {
        let basis: Vec<f64> = lags.iter().map(|&h| unit_shape(family, h, shape)).collect();
        nnls_two(&weights, &basis, gamma)
    };

    if family == VariogramFamily::Linear {
        let (nugget, slope, _) = profile(0.0);
        return Ok(FittedVariogram::Linear { nugget, slope });
    }

    // Search in a transformed coordinate: log-range for bounded families.
    let (lo, hi, to_shape): (f64, f64, fn(f64) -> f64) = match family {
        VariogramFamily::Power => (EXPONENT_BOUNDS.0, EXPONENT_BOUNDS.1, |t| t),
        _ => {
            let h_last = *lags.last().expect("at least three bins");
            ((RANGE_BOUNDS.0 * h_last).ln(), (RANGE_BOUNDS.1 * h_last).ln(), f64::exp)
        }
    };
    let objective = |t: f64| profile(to_shape(t.clamp(lo, hi))).2;

    let mut best: Option<(f64, f64)> = None;
    for s in 0..N_STARTS {
        let start = lo + (hi - lo) * (s as f64 + 0.5) / N_STARTS as f64;
        let step = 0.1 * (hi - lo);
        let (t, cost) = nelder_mead_1d(&objective, start, step, lo, hi);
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((t, cost));
        }
    }
    let (t, _) = best.expect("at least one start");
    let shape = to_shape(t);
    let (nugget, amplitude, _) = profile(shape);
    Ok(FittedVariogram::from_parts(family, nugget, amplitude, shape))
}

/// Minimizes `Σ w (a + b·f − y)²` over `a, b ≥ 0`. Returns `(a, b, cost)`.
fn nnls_two(w: &[f64], f: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let cost = |a: f64, b: f64| -> f64 {
        w.iter().zip(f).zip(y).map(|((&wi, &fi), &yi)| wi * (a + b * fi - yi).powi(2)).sum()
    };
    let sw: f64 = w.iter().sum();
    let swf: f64 = w.iter().zip(f).map(|(a, b)| a * b).sum();
    let swff: f64 = w.iter().zip(f).map(|(a, b)| a * b * b).sum();
    let swy: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    let swfy: f64 = w.iter().zip(f).zip(y).map(|((a, b), c)| a * b * c).sum();

    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(4);
    let det = sw * swff - swf * swf;
    if det > 1e-12 * sw * swff.max(f64::MIN_POSITIVE) {
        let a = (swy * swff - swf * swfy) / det;
        let b = (sw * swfy - swf * swy) / det;
        if a >= 0.0 && b >= 0.0 {
            candidates.push((a, b));
        }
    }
    if swff > 0.0 {
        candidates.push((0.0, (swfy / swff).max(0.0)));
    }
    candidates.push(((swy / sw).max(0.0), 0.0));

    candidates
        .into_iter()
        .map(|(a, b)| (a, b, cost(a, b)))
        .fold(None::<(f64, f64, f64)>, |acc, c| match acc {
            Some(best) if best.2 <= c.2 => Some(best),
            _ => Some(c),
        })
        .expect("the constant candidate always exists")
}

/// Nelder–Mead on a bounded interval; points outside `[lo, hi]` are clamped.
fn nelder_mead_1d(f: &impl Fn(f64) -> f64, x0: f64, step: f64, lo: f64, hi: f64) -> (f64, f64) {
    const MAX_ITER: usize = 500;
    let clamp = |x: f64| x.clamp(lo, hi);
    let x1 = if x0 + step <= hi { x0 + step } else { x0 - step };
    let mut simplex = [(clamp(x0), f(clamp(x0))), (clamp(x1), f(clamp(x1)))];
    let tol = 1e-12 * (hi - lo).abs().max(1.0);
    for _ in 0..MAX_ITER {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        let [(xb, fb), (xw, fw)] = simplex;
        if (xw - xb).abs() < tol {
            break;
        }
        // The centroid of the best vertex alone is the vertex itself in 1-D.
        let xr = clamp(xb + (xb - xw));
        let fr = f(xr);
        if fr < fb {
            let xe = clamp(xb + 2.0 * (xb - xw));
            let fe = f(xe);
            simplex[1] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < fw {
            simplex[1] = (xr, fr);
        } else {
            // Inside contraction; in 1-D it coincides with a shrink.
            let xc = xb + 0.5 * (xw - xb);
            simplex[1] = (xc, f(xc));
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    simplex[0]
}
