//! Bracketed root finding for monotone scalar functions.

use crate::error::{Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`; stops when the bracket
/// is narrower than `width`. Returns the midpoint of the final bracket.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, width: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo:e}, {hi:e}]: f = ({flo:e}, {fhi:e})"
        )));
    }
    for _ in 0..400 {
        if (hi - lo).abs() <= width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expands `hi` geometrically (`lo + step·2^k`) until `f(hi)` has the
/// opposite sign of `f(lo)` or `limit` is passed.
pub fn scan_bracket<F: FnMut(f64) -> f64>(mut f: F, lo: f64, step: f64, limit: f64) -> Result<(f64, f64)> {
    let flo = f(lo);
    let mut width = step;
    let mut prev = lo;
    loop {
        let hi = (lo + width).min(limit);
        let fhi = f(hi);
        if fhi.signum() != flo.signum() || fhi == 0.0 {
            return Ok((prev, hi));
        }
        if hi >= limit {
            return Err(Error::Bracket(format!("no sign change up to {limit:e}")));
        }
        prev = hi;
        width *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn no_sign_change() {
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12), Err(Error::Bracket(_))));
    }

    #[test]
    fn scan_then_bisect() {
        let (lo, hi) = scan_bracket(|x| x - 100.0, 0.0, 1.0, 1e6).unwrap();
        assert!(lo <= 100.0 && hi >= 100.0);
        assert!(scan_bracket(|x| x + 1.0, 0.0, 1.0, 10.0).is_err());
    }
}
