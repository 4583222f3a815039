//! Scalar root finding for monotone functions.

/// Safeguarded Newton on a bracket `[lo, hi]` with `f(lo) < 0 < f(hi)`
/// (or the reverse). Falls back to bisection whenever a Newton step leaves
/// the bracket or does not halve the residual.
pub(crate) fn bracketed_newton<F>(mut f: F, mut lo: f64, mut hi: f64, x0: f64, tol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let increasing = flo < 0.0;
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    let mut last_abs = f64::INFINITY;
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if !fx.is_finite() {
            return None;
        }
        if fx.abs() <= tol {
            return Some(x);
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let use_newton = dfx.is_finite() && dfx != 0.0 && newton > lo && newton < hi && fx.abs() < 0.5 * last_abs;
        last_abs = fx.abs();
        let next = if use_newton { newton } else { 0.5 * (lo + hi) };
        if next == x || hi - lo <= f64::EPSILON * x.abs().max(1e-300) {
            return Some(x);
        }
        x = next;
    }
    None
}
