//! Shared numerical kernels: composite Simpson quadrature with Richardson
//! doubling, bracketed root finding, and small fitting helpers.

use crate::error::{Error, Result};

/// Hard cap on Simpson panels per segment.
pub const MAX_PANELS: usize = 1 << 14;

/// Convergence target for quadrature doubling.
pub const QUAD_TOL: f64 = 1e-9;

/// Time tolerance for monotone root finding along the flow.
pub const ROOT_TOL: f64 = 1e-9;

/// Iteration cap for bracketed root finding.
pub const ROOT_MAX_ITER: usize = 60;

/// Composite Simpson on `[a, b]` with `panels` panels (2·panels+1 nodes).
/// Returns the estimate together with the sampled node values so a doubling
/// step can reuse them.
fn simpson_pass<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    panels: usize,
    prev: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let n = 2 * panels; // subintervals
    let h = (b - a) / n as f64;
    let mut vals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        // Reuse every other node from the previous (half-resolution) pass.
        if let Some(p) = prev {
            if i % 2 == 0 {
                vals.push(p[i / 2]);
                continue;
            }
        }
        let x = if i == n { b } else { a + i as f64 * h };
        vals.push(f(x)?);
    }
    let mut acc = vals[0] + vals[n];
    for (i, v) in vals.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok((acc * h / 3.0, vals))
}

/// Composite Simpson with Richardson doubling on one smooth segment.
///
/// Doubles the panel count until successive estimates differ by less than
/// `tol`, the improvement plateaus (the difference stops shrinking, which
/// happens once evaluation noise dominates), or the panel cap is reached.
pub fn simpson_segment<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    start_panels: usize,
    tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels = start_panels.max(2);
    let (mut est, mut vals) = simpson_pass(f, a, b, panels, None)?;
    let mut prev_delta = f64::INFINITY;
    while panels < MAX_PANELS {
        panels *= 2;
        let (next, nvals) = simpson_pass(f, a, b, panels, Some(&vals))?;
        let delta = (next - est).abs();
        est = next;
        vals = nvals;
        if delta < tol {
            break;
        }
        // Plateau: no longer gaining a factor of two per doubling.
        if delta > prev_delta * 0.5 {
            break;
        }
        prev_delta = delta;
    }
    Ok(est)
}

/// Composite Simpson over `[a, b]` split at the supplied breakpoints.
///
/// Breakpoints mark known kinks of the integrand (cut-locus and gluing
/// crossings); Simpson converges quickly on each smooth piece.
pub fn simpson_adaptive<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    start_panels: usize,
    tol: f64,
    breakpoints: &[f64],
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&s| s > lo + 1e-13 && s < hi - 1e-13)
        .collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup_by(|p, q| (*p - *q).abs() < 1e-12);

    let mut total = 0.0;
    let mut left = lo;
    let seg_tol = tol / (cuts.len() + 1) as f64;
    for cut in cuts.into_iter().chain(std::iter::once(hi)) {
        total += simpson_segment(f, left, cut, start_panels, seg_tol)?;
        left = cut;
    }
    Ok(sign * total)
}

/// Bracketed root finding: Illinois-damped regula falsi with a bisection
/// safeguard. Requires a sign change on `[lo, hi]`; converges to `tol` in
/// the argument within `max_iter` iterations.
pub fn bracket_root<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoBracket { lo, hi, flo: fa, fhi: fb });
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        // Secant proposal, clamped away from the endpoints; fall back to the
        // midpoint when the update degenerates.
        let mut m = b - fb * (b - a) / (fb - fa);
        if !m.is_finite() || m <= a.min(b) || m >= a.max(b) {
            m = 0.5 * (a + b);
        }
        let fm = f(m)?;
        if fm == 0.0 || (b - a).abs() < tol {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = m;
            fb = fm;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Least-squares slope of `y` against `x`. Returns `None` with fewer than
/// two points.
pub fn linear_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Deterministic 64-bit mixer used for stride-style subsampling offsets.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
