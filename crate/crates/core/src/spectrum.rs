//! Stability spectra of twisted states, certified suprema over all modes,
//! threshold radii, and eigenvalues of alternative triplet couplings.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwistError};
use crate::kernel::{w_hat, Coefficients, IndicatorKernel, Params, Sign};
use crate::roots;

/// Hard cap on the number of modes any supremum scan evaluates.
pub const MAX_MODES: i64 = 1 << 26;

/// Step of the coarse `r` scans that bracket thresholds.
pub const THRESHOLD_SCAN_STEP: f64 = 1e-3;

/// Bisection tolerance in `r` for all thresholds.
pub const THRESHOLD_XTOL: f64 = 1e-11;

/// Where a supremum over the spectrum is attained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupLocation {
    Mode(i64),
    /// The accumulation point `k -> infinity` (not an eigenvalue).
    Tail,
}

impl SupLocation {
    pub fn mode(self) -> Option<i64> {
        match self {
            SupLocation::Mode(k) => Some(k),
            SupLocation::Tail => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub q: u32,
    pub p: Params,
    pub sign: Sign,
    /// `(k, sign * c1(q, k, p))` for `k = 1..=K`. Each value has
    /// multiplicity 2 in the full problem.
    pub eigenvalues: Vec<(i64, f64)>,
    pub sup_value: f64,
    pub sup_attained_at: SupLocation,
    pub tail: f64,
    /// Bound on `|c1(k) - tail|` for every unlisted `k > K`.
    pub truncation_bound: f64,
}

impl SpectrumReport {
    pub fn modes(&self) -> i64 {
        self.eigenvalues.len() as i64
    }
}

/// `sup_{j > k} |c1(q, j) - tail|` is at most this (requires `k >= q`).
pub fn tail_bound(q: i64, k: i64) -> f64 {
    let (a, b) = ((k + 1 - q) as f64, (k + 1 + q) as f64);
    (1.0 / a + 1.0 / b) / (2.0 * PI)
}

/// Number of modes after which the tail bound is below `tol`.
pub fn truncation_for(q: u32, tol: f64) -> i64 {
    let q = q as i64;
    let by_tol = (1.0 / (PI * tol)).ceil().min(MAX_MODES as f64) as i64 + q;
    (4 * q).max(by_tol).max(64)
}

pub(crate) struct ModeScan {
    pub sup: f64,
    pub at: SupLocation,
    pub bound: f64,
}

/// Supremum of `eval(k)` over `k >= 1` (skipping `exclude`), where
/// `eval(k) -> tail` with the standard tail bound. Stops as soon as the
/// listed maximum provably dominates every unlisted mode, or when the tail
/// bound drops below `tol`.
pub(crate) fn scan_sup<F>(
    eval: F,
    tail: f64,
    q: u32,
    tol: f64,
    exclude: Option<i64>,
    mut sink: Option<&mut Vec<(i64, f64)>>,
) -> ModeScan
where
    F: Fn(i64) -> f64,
{
    let k_final = truncation_for(q, tol);
    let mut k_hi = (4 * q as i64).max(64).min(k_final);
    let mut k_done = 0;
    let mut best = f64::NEG_INFINITY;
    let mut best_k = 0;
    loop {
        for k in k_done + 1..=k_hi {
            let v = eval(k);
            if let Some(s) = sink.as_deref_mut() {
                s.push((k, v));
            }
            if Some(k) != exclude && v > best {
                best = v;
                best_k = k;
            }
        }
        k_done = k_hi;
        let bound = tail_bound(q as i64, k_hi);
        if best > tail + bound {
            return ModeScan {
                sup: best,
                at: SupLocation::Mode(best_k),
                bound,
            };
        }
        if k_hi >= k_final {
            let (sup, at) = if best >= tail {
                (best, SupLocation::Mode(best_k))
            } else {
                (tail, SupLocation::Tail)
            };
            return ModeScan { sup, at, bound };
        }
        k_hi = (2 * k_hi).min(k_final);
    }
}

/// True iff `eval(k) < level` for every `k >= 1` and the tail stays below
/// `level` too. Decided exactly unless the tail sits within `MAX_MODES`
/// resolution of `level`, in which case the answer is `false`.
pub(crate) fn all_below<F>(eval: F, tail: f64, q: u32, level: f64) -> bool
where
    F: Fn(i64) -> f64,
{
    if tail >= level {
        return false;
    }
    let q = q as i64;
    let mut k_done = 0;
    let mut k_hi = (4 * q).max(64);
    loop {
        for k in k_done + 1..=k_hi {
            if eval(k) >= level {
                return false;
            }
        }
        k_done = k_hi;
        if tail + tail_bound(q, k_hi) < level {
            return true;
        }
        if k_hi >= MAX_MODES {
            return false;
        }
        k_hi = (2 * k_hi).min(MAX_MODES);
    }
}

fn check_q(q: u32) -> Result<()> {
    if q == 0 {
        Err(TwistError::InvalidArgument(
            "twist number q must be positive".into(),
        ))
    } else {
        Ok(())
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(TwistError::InvalidArgument(format!(
            "tolerance must be positive (got {tol})"
        )))
    }
}

/// Eigenvalue sequence of the `q`-twisted state with a supremum certified to
/// within `tol`. The repulsive sign negates every eigenvalue.
pub fn spectrum_report(q: u32, p: &Params, sign: Sign, tol: f64) -> Result<SpectrumReport> {
    check_q(q)?;
    check_tol(tol)?;
    let kern = IndicatorKernel { r: p.r() };
    let c = Coefficients::new(&kern, p.lambda(), p.mu());
    let s = sign.factor();
    let qi = q as i64;
    let tail = s * c.tail(qi);
    let mut eigenvalues = Vec::new();
    let scan = scan_sup(
        |k| s * c.c1(qi, k),
        tail,
        q,
        tol,
        None,
        Some(&mut eigenvalues),
    );
    Ok(SpectrumReport {
        q,
        p: *p,
        sign,
        eigenvalues,
        sup_value: scan.sup,
        sup_attained_at: scan.at,
        tail,
        truncation_bound: scan.bound,
    })
}

/// Supremum and its location without materializing the eigenvalue list.
pub fn sup_eigenvalue(q: u32, p: &Params, sign: Sign, tol: f64) -> Result<(f64, SupLocation)> {
    check_q(q)?;
    check_tol(tol)?;
    let kern = IndicatorKernel { r: p.r() };
    let c = Coefficients::new(&kern, p.lambda(), p.mu());
    let s = sign.factor();
    let qi = q as i64;
    let scan = scan_sup(|k| s * c.c1(qi, k), s * c.tail(qi), q, tol, None, None);
    Ok((scan.sup, scan.at))
}

/// Supremum of the spectrum with the critical mode `ell` removed.
pub fn kappa(q: u32, ell: i64, p: &Params, sign: Sign, tol: f64) -> Result<f64> {
    check_q(q)?;
    check_tol(tol)?;
    if ell < 1 {
        return Err(TwistError::InvalidArgument(format!(
            "critical mode must be >= 1 (got {ell})"
        )));
    }
    let kern = IndicatorKernel { r: p.r() };
    let c = Coefficients::new(&kern, p.lambda(), p.mu());
    let s = sign.factor();
    let qi = q as i64;
    Ok(scan_sup(|k| s * c.c1(qi, k), s * c.tail(qi), q, tol, Some(ell), None).sup)
}

/// Exact mode of the largest eigenvalue (ties resolved to the smaller `k`),
/// or `Tail` when no mode provably dominates the accumulation point.
pub fn leading_mode(q: u32, p: &Params, sign: Sign) -> SupLocation {
    let kern = IndicatorKernel { r: p.r() };
    let c = Coefficients::new(&kern, p.lambda(), p.mu());
    let s = sign.factor();
    let qi = q as i64;
    scan_sup(|k| s * c.c1(qi, k), s * c.tail(qi), q, 1e-9, None, None).at
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    AttractiveR0,
    RepulsiveR0,
    RStar,
}

/// True iff every eigenvalue of the repulsive pairwise model is negative,
/// i.e. every `c1(q, k, (r, 0, 0))` is positive.
pub fn repulsive_stable(q: u32, r: f64) -> bool {
    let kern = IndicatorKernel { r };
    let c = Coefficients::new(&kern, 0.0, 0.0);
    let qi = q as i64;
    all_below(|k| -c.c1(qi, k), -c.tail(qi), q, 0.0)
}

fn scan_grid(start: f64, stop: f64) -> impl Iterator<Item = f64> {
    let n = ((stop - start) / THRESHOLD_SCAN_STEP).round() as usize;
    (0..=n).map(move |i| start + i as f64 * THRESHOLD_SCAN_STEP)
}

/// Stability window `(lo, hi)` of the `q`-twisted state in the repulsive
/// pairwise model: the first maximal `r`-interval on which all eigenvalues
/// are negative.
pub fn repulsive_window(q: u32) -> Result<(f64, f64)> {
    check_q(q)?;
    if q == 1 {
        return Err(TwistError::NoBifurcation(
            "the 1-twisted state of the repulsive model has no stability window to leave".into(),
        ));
    }
    let grid: Vec<f64> = scan_grid(THRESHOLD_SCAN_STEP, 0.5).collect();
    let first_in = grid
        .iter()
        .position(|&r| repulsive_stable(q, r))
        .ok_or_else(|| {
            TwistError::NoThreshold(format!("repulsive {q}-twisted state is never stable"))
        })?;
    let lo = if first_in == 0 {
        grid[0]
    } else {
        roots::bisect_predicate(
            |r| repulsive_stable(q, r),
            grid[first_in - 1],
            grid[first_in],
            THRESHOLD_XTOL,
        )
    };
    let hi = match grid[first_in..]
        .iter()
        .position(|&r| !repulsive_stable(q, r))
    {
        Some(off) => {
            let j = first_in + off;
            roots::bisect_predicate(
                |r| !repulsive_stable(q, r),
                grid[j - 1],
                grid[j],
                THRESHOLD_XTOL,
            )
        }
        None => 0.5,
    };
    Ok((lo, hi))
}

/// Threshold radius of the given kind for the `q`-twisted state.
pub fn threshold(q: u32, kind: ThresholdKind) -> Result<f64> {
    check_q(q)?;
    match kind {
        ThresholdKind::AttractiveR0 => {
            let f =
                |r: f64| w_hat(r, q as i64 - 1) + w_hat(r, q as i64 + 1) - 2.0 * w_hat(r, q as i64);
            let (a, b) =
                roots::scan_for_crossing(f, THRESHOLD_SCAN_STEP, 0.5, THRESHOLD_SCAN_STEP, true)
                    .ok_or_else(|| {
                        TwistError::NoThreshold(format!("c1({q}, 1) never becomes positive"))
                    })?;
            Ok(roots::bisect(f, a, b, THRESHOLD_XTOL))
        }
        ThresholdKind::RepulsiveR0 => Ok(repulsive_window(q)?.0),
        ThresholdKind::RStar => Ok(r_star(q)),
    }
}

fn leads_with_q(q: u32, r: f64) -> bool {
    Params::pairwise(r)
        .map(|p| leading_mode(q, &p, Sign::Attractive) == SupLocation::Mode(q as i64))
        .unwrap_or(false)
}

/// Numerical estimate of the smallest `r` above which mode `q` carries the
/// largest eigenvalue: scans down from `1/2` and refines the first failure.
fn r_star(q: u32) -> f64 {
    let grid: Vec<f64> = scan_grid(THRESHOLD_SCAN_STEP, 0.5).collect();
    let mut last_ok = 0.5;
    for &r in grid.iter().rev() {
        if leads_with_q(q, r) {
            last_ok = r;
        } else {
            return roots::bisect_predicate(|x| leads_with_q(q, x), r, last_ok, 1e-8);
        }
    }
    last_ok
}

/// `2/(pi q) <= 2r - sin(2 pi r)/pi`; when true, mode `q` carries the
/// largest eigenvalue.
pub fn sufficient_condition(q: u32, r: f64) -> bool {
    2.0 / (PI * q as f64) <= 2.0 * r - (2.0 * PI * r).sin() / PI
}

/// Alternative triplet-type couplings whose twisted-state spectra are
/// available in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum AltCoupling {
    /// `(d+1)`-way coupling through a single kernel of a linear combination
    /// of positions; `m_last` is the integer coefficient of the receiving
    /// oscillator.
    GeneralD { d: u32, m_last: i64 },
    /// Product of two pairwise kernels.
    Product4,
    /// Product of three pairwise kernels (all three oscillators mutually
    /// close); the mode sum is truncated at `|l| <= truncation`.
    Triangle { truncation: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltEigenvalue {
    pub value: f64,
    /// Certified bound on the truncation error (0 for closed forms).
    pub tail_bound: f64,
}

/// Eigenvalue of mode `k >= 0` at the `q`-twisted state for an alternative
/// coupling. Mode 0 is the phase-shift direction and always gives 0.
pub fn alt_eigenvalue(family: AltCoupling, q: u32, r: f64, k: i64) -> Result<AltEigenvalue> {
    check_q(q)?;
    if !(r > 0.0 && r <= 0.5) {
        return Err(TwistError::InvalidRange(r));
    }
    if k < 0 {
        return Err(TwistError::InvalidArgument(format!(
            "mode index must be >= 0 (got {k})"
        )));
    }
    let qi = q as i64;
    let w = |j: i64| w_hat(r, j);
    let exact = |value| {
        Ok(AltEigenvalue {
            value,
            tail_bound: 0.0,
        })
    };
    match family {
        AltCoupling::GeneralD { d, m_last } => {
            if d < 2 || m_last == 0 {
                return Err(TwistError::InvalidArgument(format!(
                    "general coupling needs d >= 2 and a nonzero coefficient (got d = {d}, m = {m_last})"
                )));
            }
            if k == 0 {
                return exact(0.0);
            }
            exact(0.5 * m_last as f64 * w(qi))
        }
        AltCoupling::Product4 => {
            if k == 0 {
                return exact(0.0);
            }
            exact(0.25 * w(qi) * (w(qi + k) + w(qi - k) - 2.0 * w(qi)))
        }
        AltCoupling::Triangle { truncation: l_max } => {
            if l_max <= qi + k {
                return Err(TwistError::InvalidArgument(format!(
                    "triangle truncation must exceed q + k = {} (got {l_max})",
                    qi + k
                )));
            }
            if k == 0 {
                return exact(0.0);
            }
            let sum: f64 = (-l_max..=l_max)
                .map(|l| {
                    w(-k + l - qi) * w(l + qi)
                        + w(-k + l + qi) * w(l - qi)
                        + w(l - qi) * w(k + qi + l)
                        + w(l + qi) * w(k - qi + l)
                        - 4.0 * w(l - qi) * w(l + qi)
                })
                .sum();
            Ok(AltEigenvalue {
                value: sum / 8.0,
                tail_bound: 8.0 / (PI * PI * (l_max - qi - k) as f64),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_to_all_spectrum() {
        let rep =
            spectrum_report(3, &Params::pairwise(0.5).unwrap(), Sign::Attractive, 1e-6).unwrap();
        assert_eq!(rep.sup_attained_at, SupLocation::Mode(3));
        assert!((rep.sup_value - 0.5).abs() < 1e-14);
        for &(k, v) in &rep.eigenvalues {
            if k != 3 {
                assert!(v.abs() < 1e-14, "k = {k}: {v}");
            }
        }
        let kap = kappa(
            3,
            3,
            &Params::pairwise(0.5).unwrap(),
            Sign::Attractive,
            1e-6,
        )
        .unwrap();
        assert!(kap.abs() < 1e-14);
    }

    #[test]
    fn truncation_formula() {
        assert_eq!(truncation_for(5, 1.0), 64);
        assert_eq!(truncation_for(100, 1.0), 400);
        assert_eq!(truncation_for(5, 1e-4), (1e4 / PI).ceil() as i64 + 5);
    }

    #[test]
    fn repulsive_q1_has_no_threshold() {
        assert!(matches!(
            threshold(1, ThresholdKind::RepulsiveR0),
            Err(TwistError::NoBifurcation(_))
        ));
    }

    #[test]
    fn sufficient_condition_cases() {
        assert!(sufficient_condition(2, 0.5));
        assert!(!sufficient_condition(1, 0.01));
    }

    #[test]
    fn alt_families_at_zero_mode() {
        for fam in [
            AltCoupling::GeneralD { d: 2, m_last: -2 },
            AltCoupling::Product4,
            AltCoupling::Triangle { truncation: 50 },
        ] {
            assert_eq!(alt_eigenvalue(fam, 2, 0.2, 0).unwrap().value, 0.0);
        }
        let v = alt_eigenvalue(AltCoupling::Product4, 3, 0.5, 2)
            .unwrap()
            .value;
        assert!(v.abs() < 1e-15);
    }
}
