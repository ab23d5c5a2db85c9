//! Bracketed one-dimensional root finding and sign-change scans.

/// Bisection on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite sign
/// (or one of them zero). Stops when the bracket is narrower than `xtol`.
pub fn bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    let fb = f(b);
    if fb == 0.0 {
        return b;
    }
    debug_assert!(
        fa.signum() != fb.signum(),
        "bisect: bracket does not change sign"
    );
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= xtol || mid == a || mid == b {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Bisection on a boolean predicate: `pred(lo)` and `pred(hi)` must differ.
/// Returns the boundary point to within `xtol`, reported on the `hi` side.
pub fn bisect_predicate<P>(mut pred: P, mut lo: f64, mut hi: f64, xtol: f64) -> f64
where
    P: FnMut(f64) -> bool,
{
    let at_lo = pred(lo);
    for _ in 0..200 {
        if (hi - lo).abs() <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid) == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Walks `start, start + step, ...` up to `stop` and returns the first
/// sub-interval on which `f` goes from `< 0` to `> 0` (or from `> 0` to `< 0`
/// when `rising` is false).
pub fn scan_for_crossing<F>(
    mut f: F,
    start: f64,
    stop: f64,
    step: f64,
    rising: bool,
) -> Option<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let n = ((stop - start) / step).floor() as usize;
    let mut x_prev = start;
    let mut f_prev = f(start);
    for i in 1..=n + 1 {
        let x = (start + i as f64 * step).min(stop);
        let fx = f(x);
        let crossed = if rising {
            f_prev < 0.0 && fx >= 0.0
        } else {
            f_prev > 0.0 && fx <= 0.0
        };
        if crossed {
            return Some((x_prev, x));
        }
        if x >= stop {
            break;
        }
        x_prev = x;
        f_prev = fx;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let x = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((x - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn scan_locates_first_rising_crossing() {
        // sin crosses upward at 0 (excluded, start) and 2pi.
        let (a, b) = scan_for_crossing(|x| x.sin(), 0.1, 10.0, 0.01, true).unwrap();
        assert!(a <= 2.0 * std::f64::consts::PI && b >= 2.0 * std::f64::consts::PI);
        assert!(scan_for_crossing(|x| x + 1.0, 0.0, 1.0, 0.1, true).is_none());
    }

    #[test]
    fn predicate_boundary() {
        let x = bisect_predicate(|x| x > 0.3, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-9);
    }
}
