//! Pitchfork coefficients along parameter curves through a critical point of
//! the twisted-state spectrum, branch approximations, and `(r, lambda)`
//! stability maps.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwistError};
use crate::kernel::{
    self, big_h, w_hat, Coefficients, FourierKernel, IndicatorKernel, Params, Sign,
};
use crate::roots;
use crate::spectrum::{self, SupLocation};

/// `|c1(q, ell, p0)|` must be below this for `p0` to count as critical.
pub const CROSSING_TOL: f64 = 1e-6;

/// `|gamma1|` below this is reported as degenerate.
pub const GAMMA1_DEGENERACY: f64 = 1e-10;

/// Tolerance used for certified suprema inside this module.
const SUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    RLinear,
    LambdaLinear,
    MixedLinear,
    TFamily,
}

/// A straight parameter curve `s -> base + s * direction` through a point at
/// which exactly one mode `ell` of the `q`-twisted state is critical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub family: CurveFamily,
    pub base: Params,
    /// `(dr/ds, dlambda/ds, dmu/ds)`.
    pub direction: [f64; 3],
    /// Trade-off parameter of the t-family (0 otherwise).
    pub t: f64,
    pub q: u32,
    pub ell: i64,
    pub sign: Sign,
}

impl CurveSpec {
    /// Validates the base point and resolves the critical mode. With `ell`
    /// omitted, the unique mode with `|c1| < CROSSING_TOL` is used.
    pub fn new(
        family: CurveFamily,
        base: Params,
        direction: [f64; 3],
        q: u32,
        ell: Option<i64>,
        sign: Sign,
    ) -> Result<Self> {
        if q == 0 {
            return Err(TwistError::InvalidArgument(
                "twist number q must be positive".into(),
            ));
        }
        if base.r() >= 0.5 {
            return Err(TwistError::InvalidArgument(
                "curve base must lie strictly inside the parameter space (r < 1/2)".into(),
            ));
        }
        if direction.iter().any(|d| !d.is_finite()) || direction.iter().all(|&d| d == 0.0) {
            return Err(TwistError::InvalidArgument(
                "curve direction must be finite and nonzero".into(),
            ));
        }
        let ell = match ell {
            Some(l) if l < 1 => {
                return Err(TwistError::InvalidArgument(format!(
                    "critical mode must be >= 1 (got {l})"
                )))
            }
            Some(l) => {
                let v = kernel::c1(q, l, &base).abs();
                if v >= CROSSING_TOL {
                    return Err(TwistError::NotCritical(v));
                }
                l
            }
            None => detect_critical_mode(q, &base)?,
        };
        Ok(CurveSpec {
            family,
            base,
            direction,
            t: 0.0,
            q,
            ell,
            sign,
        })
    }

    pub fn r_linear(q: u32, base: Params, ell: Option<i64>, sign: Sign) -> Result<Self> {
        CurveSpec::new(CurveFamily::RLinear, base, [1.0, 0.0, 0.0], q, ell, sign)
    }

    pub fn lambda_linear(q: u32, base: Params, ell: Option<i64>, sign: Sign) -> Result<Self> {
        CurveSpec::new(
            CurveFamily::LambdaLinear,
            base,
            [0.0, 1.0, 0.0],
            q,
            ell,
            sign,
        )
    }

    /// `p(s) = (r0, 4s - 2t + H(q, r0)/4, 2s + 4t)`, critical in mode `q`.
    pub fn t_family(q: u32, r0: f64, t: f64) -> Result<Self> {
        let h = big_h(q, r0)?;
        let base = Params::new(r0, -2.0 * t + h / 4.0, 4.0 * t)?;
        let mut c = CurveSpec::new(
            CurveFamily::TFamily,
            base,
            [0.0, 4.0, 2.0],
            q,
            Some(q as i64),
            Sign::Attractive,
        )?;
        c.t = t;
        Ok(c)
    }

    /// Parameters at curve position `s`.
    pub fn at(&self, s: f64) -> Result<Params> {
        let [dr, dl, dm] = self.direction;
        Params::new(
            self.base.r() + s * dr,
            self.base.lambda() + s * dl,
            self.base.mu() + s * dm,
        )
    }
}

/// The unique mode `k >= 1` with `|c1(q, k, p)| < CROSSING_TOL`.
pub fn detect_critical_mode(q: u32, p: &Params) -> Result<i64> {
    let kern = IndicatorKernel { r: p.r() };
    let c = Coefficients::new(&kern, p.lambda(), p.mu());
    let qi = q as i64;
    let tail = c.tail(qi);
    if tail.abs() < CROSSING_TOL {
        return Err(TwistError::AmbiguousCriticalMode(vec![]));
    }
    // Beyond k_max every |c1| exceeds |tail| - bound > CROSSING_TOL.
    let mut k_max = (4 * qi).max(64);
    while spectrum::tail_bound(qi, k_max) > tail.abs() - CROSSING_TOL {
        k_max *= 2;
        if k_max > spectrum::MAX_MODES {
            return Err(TwistError::ResourceLimit(
                "critical mode search exceeds the mode cap".into(),
            ));
        }
    }
    let mut hits = Vec::new();
    let mut closest = f64::INFINITY;
    for k in 1..=k_max {
        let v = c.c1(qi, k).abs();
        closest = closest.min(v);
        if v < CROSSING_TOL {
            hits.push(k);
        }
    }
    match hits.len() {
        0 => Err(TwistError::NotCritical(closest)),
        1 => Ok(hits[0]),
        _ => Err(TwistError::AmbiguousCriticalMode(hits)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Supercritical,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchSide {
    SNegative,
    SPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub q: u32,
    pub ell: i64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub criticality: Criticality,
    pub branch_side: BranchSide,
    /// Supremum of the spectrum without mode `ell` at the base point.
    pub kappa_at_bifurcation: f64,
    /// `2 gamma1`: predicted critical eigenvalue along the branch per unit `a^2`.
    pub branch_eig_coefficient: f64,
    /// `c2(q, ell) / c1(q, 2 ell)` at the base point.
    pub second_harmonic_ratio: f64,
    /// Set when `gamma2` vanishes (the eigenvalue crosses with zero speed).
    pub degenerate_crossing: bool,
}

impl BifurcationReport {
    /// Assembles a report from the two coefficients; `kappa` is supplied by
    /// the caller since it depends on the mode set of the kernel.
    pub fn from_coefficients(
        q: u32,
        ell: i64,
        gamma1: f64,
        gamma2: f64,
        ratio: f64,
        kappa: f64,
    ) -> Self {
        let criticality = if gamma1.abs() < GAMMA1_DEGENERACY {
            Criticality::Degenerate
        } else if gamma1 > 0.0 {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        };
        let branch_side = if gamma2 / gamma1 > 0.0 {
            BranchSide::SNegative
        } else {
            BranchSide::SPositive
        };
        BifurcationReport {
            q,
            ell,
            gamma1,
            gamma2,
            criticality,
            branch_side,
            kappa_at_bifurcation: kappa,
            branch_eig_coefficient: 2.0 * gamma1,
            second_harmonic_ratio: ratio,
            degenerate_crossing: gamma2.abs() < kernel::DEGENERACY_TOL,
        }
    }
}

/// `(gamma1, gamma2, c2/c1(2 ell))` for the curve evaluated with an
/// arbitrary kernel in place of the continuum one.
pub fn gamma_coefficients<K: FourierKernel + ?Sized>(
    kern: &K,
    curve: &CurveSpec,
) -> Result<(f64, f64, f64)> {
    let p = curve.base;
    let c = Coefficients::new(kern, p.lambda(), p.mu());
    let (q, ell) = (curve.q as i64, curve.ell);
    let s = curve.sign.factor();
    let c1_2l = c.c1(q, 2 * ell);
    if c1_2l.abs() < kernel::DEGENERACY_TOL {
        return Err(TwistError::SecondHarmonicResonance { q: curve.q, ell });
    }
    let ratio = c.c2(q, ell) / c1_2l;
    let gamma1 = s * 0.5 * (c.c5(q, ell) - ratio * c.c3(q, 2 * ell, ell));
    let [dr, dl, dm] = curve.direction;
    let gamma2 = s * (dr * c.c1_dr(q, ell) + dl * c.c1_dlambda(q) + dm * c.c1_dmu(q));
    Ok((gamma1, gamma2, ratio))
}

/// Cubic and parameter-slope coefficients of the reduced bifurcation
/// equation `a (gamma1 a^2 + gamma2 s) = 0` along `curve`.
pub fn gamma_pair(curve: &CurveSpec) -> Result<BifurcationReport> {
    let kern = IndicatorKernel { r: curve.base.r() };
    let (g1, g2, ratio) = gamma_coefficients(&kern, curve)?;
    let kappa = spectrum::kappa(curve.q, curve.ell, &curve.base, curve.sign, SUP_TOL)?;
    Ok(BifurcationReport::from_coefficients(
        curve.q, curve.ell, g1, g2, ratio, kappa,
    ))
}

/// `gamma1` along the t-family as the affine function `gamma1(0) + t X`.
pub fn gamma1_t(q: u32, r0: f64, t: f64) -> Result<f64> {
    let base = gamma_pair(&CurveSpec::t_family(q, r0, 0.0)?)?;
    Ok(base.gamma1 + t * kernel::cap_x(q, r0)?)
}

/// Leading branch amplitude `sqrt(-gamma2 s / gamma1)`.
pub fn a_app(report: &BifurcationReport, s: f64) -> Result<f64> {
    if report.gamma1.abs() < GAMMA1_DEGENERACY {
        return Err(TwistError::DegenerateGamma1(report.gamma1));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let v = -report.gamma2 * s / report.gamma1;
    if v < 0.0 {
        return Err(TwistError::BranchAbsent { s });
    }
    Ok(v.sqrt())
}

/// Predicted critical eigenvalue at branch amplitude `a`: `2 gamma1 a^2`.
pub fn branch_eigenvalue_prediction(report: &BifurcationReport, a: f64) -> f64 {
    report.branch_eig_coefficient * a * a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchProfile {
    pub q: u32,
    pub ell: i64,
    pub a: f64,
    pub order: u8,
    /// Amplitude of the `sin(2 pi 2 ell x)` correction (0 for order 1).
    pub z2_coefficient: f64,
    /// `(x_j, profile(x_j))` with `x_j = j / grid_size`.
    pub sampled_values: Vec<(f64, f64)>,
}

impl BranchProfile {
    pub fn values(&self) -> Vec<f64> {
        self.sampled_values.iter().map(|&(_, v)| v).collect()
    }
}

/// Branch profile from its coefficients: `2 pi q x + a sin(2 pi ell x)` plus,
/// at order 2, `-(a^2/2) ratio sin(2 pi 2 ell x)`.
pub fn profile_from_ratio(
    q: u32,
    ell: i64,
    ratio: f64,
    a: f64,
    order: u8,
    grid_size: usize,
) -> Result<BranchProfile> {
    if !(order == 1 || order == 2) {
        return Err(TwistError::InvalidArgument(format!(
            "profile order must be 1 or 2 (got {order})"
        )));
    }
    if grid_size == 0 {
        return Err(TwistError::InvalidArgument(
            "grid size must be positive".into(),
        ));
    }
    let z2 = if order == 2 {
        -0.5 * a * a * ratio
    } else {
        0.0
    };
    let sampled_values = (0..grid_size)
        .map(|j| {
            let x = j as f64 / grid_size as f64;
            let mut v = 2.0 * PI * q as f64 * x;
            if a != 0.0 {
                v += a * (2.0 * PI * ell as f64 * x).sin();
            }
            if z2 != 0.0 {
                v += z2 * (4.0 * PI * ell as f64 * x).sin();
            }
            (x, v)
        })
        .collect();
    Ok(BranchProfile {
        q,
        ell,
        a,
        order,
        z2_coefficient: z2,
        sampled_values,
    })
}

/// First- or second-order approximation of the bifurcating equilibrium with
/// mode-`ell` amplitude `a`, sampled at `x_j = j / grid_size`.
pub fn branch_profile(
    curve: &CurveSpec,
    a: f64,
    order: u8,
    grid_size: usize,
) -> Result<BranchProfile> {
    let p = curve.base;
    let kern = IndicatorKernel { r: p.r() };
    let c = Coefficients::new(&kern, p.lambda(), p.mu());
    let (q, ell) = (curve.q as i64, curve.ell);
    let c1_2l = c.c1(q, 2 * ell);
    if c1_2l.abs() < kernel::DEGENERACY_TOL {
        return Err(TwistError::SecondHarmonicResonance { q: curve.q, ell });
    }
    profile_from_ratio(curve.q, ell, c.c2(q, ell) / c1_2l, a, order, grid_size)
}

/// Inclusive uniform grid `start..=stop` with `n >= 2` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn new(start: f64, stop: f64, n: usize) -> Result<Self> {
        if n < 2 || !(start < stop) || !start.is_finite() || !stop.is_finite() {
            return Err(TwistError::InvalidArgument(format!(
                "grid axis needs start < stop and at least 2 points (got {start}:{stop}:{n})"
            )));
        }
        Ok(GridAxis { start, stop, n })
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.stop
        } else {
            self.start + (self.stop - self.start) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.stop - self.start) / (self.n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFlag {
    /// The kernel coefficient `W(q)` vanishes: `lambda` does not move the spectrum.
    DegenerateKernel,
    /// The supremum sits at the accumulation point, no isolated mode crosses.
    TailCrossing,
    /// `c1(q, 2 ell)` vanishes at the crossing.
    SecondHarmonicResonance,
    /// Several modes cross simultaneously.
    AmbiguousMode,
}

/// Point of the zero contour of the maximal eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub r: f64,
    pub lambda: f64,
    /// Critical mode at the crossing.
    pub ell: Option<i64>,
    pub gamma1: Option<f64>,
    pub criticality: Option<Criticality>,
    /// `lambda0(q, r)` for comparison (defined when `W(q) != 0`).
    pub lambda0: Option<f64>,
    pub flag: Option<MapFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub q: u32,
    pub r_axis: GridAxis,
    pub lambda_axis: GridAxis,
    /// `max_eigenvalue[i][j]` at `(r_i, lambda_j)`, `mu = 0`.
    pub max_eigenvalue: Vec<Vec<f64>>,
    /// Leading mode at `(r_i, lambda_j)` (`None` at the accumulation point).
    pub leading_mode: Vec<Vec<Option<i64>>>,
    /// Crossings at fixed `r_i` (exact in `lambda`).
    pub column_crossings: Vec<BoundaryPoint>,
    /// Crossings at fixed `lambda_j` (bisection in `r`).
    pub row_crossings: Vec<BoundaryPoint>,
}

/// Leading eigenvalue of the `q`-twisted state with `lambda = mu = 0` and its
/// location, resolved to `SUP_TOL`.
fn sup_pairwise(q: u32, r: f64) -> Result<(f64, SupLocation)> {
    spectrum::sup_eigenvalue(q, &Params::pairwise(r)?, Sign::Attractive, SUP_TOL)
}

/// The critical mode at a contour point: every eigenvalue shifts by the same
/// `-lambda W(q)`, so the leading mode does not depend on `lambda`.
fn classify_crossing(q: u32, r: f64, lambda: f64, loc: SupLocation) -> BoundaryPoint {
    let lambda0 = kernel::lambda0(q, r).ok();
    let mut point = BoundaryPoint {
        r,
        lambda,
        ell: None,
        gamma1: None,
        criticality: None,
        lambda0,
        flag: None,
    };
    let ell = match loc {
        SupLocation::Tail => {
            point.flag = Some(MapFlag::TailCrossing);
            return point;
        }
        SupLocation::Mode(k) => k,
    };
    point.ell = Some(ell);
    let report = Params::new(r, lambda, 0.0).and_then(|base| {
        // The base is critical by construction; skip the mode search.
        let curve = CurveSpec {
            family: CurveFamily::LambdaLinear,
            base,
            direction: [0.0, 1.0, 0.0],
            t: 0.0,
            q,
            ell,
            sign: Sign::Attractive,
        };
        let kern = IndicatorKernel { r };
        gamma_coefficients(&kern, &curve)
    });
    match report {
        Ok((g1, _, _)) => {
            point.gamma1 = Some(g1);
            point.criticality =
                Some(BifurcationReport::from_coefficients(q, ell, g1, 1.0, 0.0, 0.0).criticality);
        }
        Err(TwistError::SecondHarmonicResonance { .. }) => {
            point.flag = Some(MapFlag::SecondHarmonicResonance)
        }
        Err(_) => point.flag = Some(MapFlag::AmbiguousMode),
    }
    point
}

/// Maximal eigenvalue of the `q`-twisted state over an `(r, lambda)` grid
/// with `mu = 0`, plus the classified zero contour.
pub fn stability_map(q: u32, r_axis: GridAxis, lambda_axis: GridAxis) -> Result<StabilityMap> {
    if q == 0 {
        return Err(TwistError::InvalidArgument(
            "twist number q must be positive".into(),
        ));
    }
    if r_axis.start <= 0.0 || r_axis.stop > 0.5 {
        return Err(TwistError::InvalidRange(if r_axis.start <= 0.0 {
            r_axis.start
        } else {
            r_axis.stop
        }));
    }
    let qi = q as i64;
    let columns: Vec<(f64, SupLocation)> = r_axis
        .values()
        .into_par_iter()
        .map(|r| sup_pairwise(q, r))
        .collect::<Result<_>>()?;
    let lambdas = lambda_axis.values();

    let mut max_eigenvalue = Vec::with_capacity(r_axis.n);
    let mut leading_mode = Vec::with_capacity(r_axis.n);
    let mut column_crossings = Vec::new();
    for (i, &(sup0, loc)) in columns.iter().enumerate() {
        let r = r_axis.value(i);
        let wq = w_hat(r, qi);
        max_eigenvalue.push(lambdas.iter().map(|&l| sup0 - l * wq).collect::<Vec<_>>());
        leading_mode.push(vec![loc.mode(); lambdas.len()]);
        if wq.abs() < kernel::DEGENERACY_TOL {
            column_crossings.push(BoundaryPoint {
                r,
                lambda: f64::NAN,
                ell: loc.mode(),
                gamma1: None,
                criticality: None,
                lambda0: None,
                flag: Some(MapFlag::DegenerateKernel),
            });
            continue;
        }
        let lambda_c = sup0 / wq;
        if lambda_c >= lambda_axis.start && lambda_c <= lambda_axis.stop {
            column_crossings.push(classify_crossing(q, r, lambda_c, loc));
        }
    }

    let row_crossings: Vec<BoundaryPoint> = lambdas
        .par_iter()
        .map(|&lambda| {
            let mut found = Vec::new();
            for i in 1..r_axis.n {
                let fa = columns[i - 1].0 - lambda * w_hat(r_axis.value(i - 1), qi);
                let fb = columns[i].0 - lambda * w_hat(r_axis.value(i), qi);
                if (fa < 0.0) == (fb < 0.0) {
                    continue;
                }
                let f = |r: f64| {
                    sup_pairwise(q, r)
                        .map(|(s, _)| s - lambda * w_hat(r, qi))
                        .unwrap_or(f64::NAN)
                };
                let r_c = roots::bisect(f, r_axis.value(i - 1), r_axis.value(i), 1e-10);
                let loc = sup_pairwise(q, r_c)
                    .map(|(_, l)| l)
                    .unwrap_or(SupLocation::Tail);
                found.push(classify_crossing(q, r_c, lambda, loc));
            }
            found
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    Ok(StabilityMap {
        q,
        r_axis,
        lambda_axis,
        max_eigenvalue,
        leading_mode,
        column_crossings,
        row_crossings,
    })
}
