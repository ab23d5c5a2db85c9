//! The indicator ring kernel, its Fourier coefficients, the linearization
//! coefficients `c1..c6` and the scaling functions built from them.
//!
//! Every coefficient is a finite linear combination of Fourier coefficients
//! of the kernel. The combinations are written once, generically over
//! [`FourierKernel`], so the same algebra serves the continuum kernel and the
//! lattice kernel of a finite ring.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwistError};
use crate::roots;

/// Denominators below this magnitude are treated as exact zeros.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Parameter triple `(r, lambda, mu)`: coupling range, triplet strength and
/// quadruplet strength. `0 < r <= 1/2` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct Params {
    r: f64,
    lambda: f64,
    mu: f64,
}

#[derive(Deserialize)]
struct RawParams {
    r: f64,
    #[serde(default)]
    lambda: f64,
    #[serde(default)]
    mu: f64,
}

impl TryFrom<RawParams> for Params {
    type Error = TwistError;
    fn try_from(raw: RawParams) -> Result<Self> {
        Params::new(raw.r, raw.lambda, raw.mu)
    }
}

impl Params {
    pub fn new(r: f64, lambda: f64, mu: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 0.5) {
            return Err(TwistError::InvalidRange(r));
        }
        if !lambda.is_finite() || !mu.is_finite() {
            return Err(TwistError::InvalidArgument(format!(
                "lambda and mu must be finite (got {lambda}, {mu})"
            )));
        }
        Ok(Params { r, lambda, mu })
    }

    /// Pairwise-only coupling with range `r`.
    pub fn pairwise(r: f64) -> Result<Self> {
        Params::new(r, 0.0, 0.0)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn with_r(&self, r: f64) -> Result<Self> {
        Params::new(r, self.lambda, self.mu)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Params::new(self.r, lambda, self.mu)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Params::new(self.r, self.lambda, mu)
    }
}

/// Overall sign of the coupling. The repulsive model negates the whole
/// right-hand side, so every linearization coefficient changes sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    Attractive,
    Repulsive,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Attractive => 1.0,
            Sign::Repulsive => -1.0,
        }
    }
}

/// A real, even sequence `W(k)` of Fourier coefficients parameterized by a
/// coupling range `r`.
pub trait FourierKernel {
    /// `W(k)`; must satisfy `W(-k) == W(k)`.
    fn coefficient(&self, k: i64) -> f64;

    /// `dW(k)/dr`.
    fn coefficient_dr(&self, k: i64) -> f64;
}

/// Fourier coefficients of the continuum indicator kernel of half-width `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorKernel {
    pub r: f64,
}

impl FourierKernel for IndicatorKernel {
    fn coefficient(&self, k: i64) -> f64 {
        w_hat(self.r, k)
    }

    fn coefficient_dr(&self, k: i64) -> f64 {
        w_hat_dr(self.r, k)
    }
}

/// The indicator kernel on the circle: 1 iff the circular distance of `x`
/// to 0 is at most `r`. `x` is reduced modulo 1 first.
pub fn w_kernel(r: f64, x: f64) -> f64 {
    let x = x.rem_euclid(1.0);
    if x.min(1.0 - x) <= r {
        1.0
    } else {
        0.0
    }
}

/// `W_r(k)`: `4r` at `k = 0`, `2 sin(2 pi k r) / (pi k)` otherwise.
pub fn w_hat(r: f64, k: i64) -> f64 {
    if k == 0 {
        4.0 * r
    } else {
        let k = k.unsigned_abs() as f64;
        2.0 * (2.0 * PI * k * r).sin() / (PI * k)
    }
}

/// `dW_r(k)/dr = 4 cos(2 pi k r)` (also correct at `k = 0`).
pub fn w_hat_dr(r: f64, k: i64) -> f64 {
    4.0 * (2.0 * PI * k.unsigned_abs() as f64 * r).cos()
}

/// The coefficient algebra over an arbitrary kernel at fixed `(lambda, mu)`.
pub struct Coefficients<'a, K: FourierKernel + ?Sized> {
    kernel: &'a K,
    lambda: f64,
    mu: f64,
}

impl<'a, K: FourierKernel + ?Sized> Coefficients<'a, K> {
    pub fn new(kernel: &'a K, lambda: f64, mu: f64) -> Self {
        Coefficients { kernel, lambda, mu }
    }

    #[inline]
    fn w(&self, k: i64) -> f64 {
        self.kernel.coefficient(k)
    }

    /// Eigenvalue of mode `k` at the `q`-twisted state.
    pub fn c1(&self, q: i64, k: i64) -> f64 {
        let (l, m) = (self.lambda, self.mu);
        0.25 * (self.w(q - k) + self.w(q + k) - 2.0 * self.w(q) - (4.0 * l + 2.0 * m) * self.w(q))
    }

    /// `d c1 / dr` at fixed `(lambda, mu)`.
    pub fn c1_dr(&self, q: i64, k: i64) -> f64 {
        let d = |j: i64| self.kernel.coefficient_dr(j);
        let (l, m) = (self.lambda, self.mu);
        0.25 * (d(q - k) + d(q + k) - 2.0 * d(q) - (4.0 * l + 2.0 * m) * d(q))
    }

    /// `d c1 / d lambda`; independent of `k` and `lambda`.
    pub fn c1_dlambda(&self, q: i64) -> f64 {
        -self.w(q)
    }

    /// `d c1 / d mu`; independent of `k` and `mu`.
    pub fn c1_dmu(&self, q: i64) -> f64 {
        -0.5 * self.w(q)
    }

    pub fn c2(&self, q: i64, k: i64) -> f64 {
        let w = |j: i64| self.w(j);
        let l = self.lambda;
        (-w(q - 2 * k) + 2.0 * w(q - k) - 2.0 * w(q + k) + w(q + 2 * k) - 2.0 * l * w(q - k)
            + 2.0 * l * w(q + k))
            / 8.0
    }

    pub fn c3(&self, q: i64, m: i64, k: i64) -> f64 {
        let w = |j: i64| self.w(j);
        (-w(q - m) + w(q - m + k) + w(q - k) - w(q + k) - w(q + m - k) + w(q + m)) / 8.0
    }

    pub fn c4(&self, q: i64, m: i64, k: i64) -> f64 {
        let w = |j: i64| self.w(j);
        (-w(q - m - k) + w(q - m) + w(q - k) - w(q + k) - w(q + m) + w(q + m + k)) / 8.0
    }

    pub fn c5(&self, q: i64, k: i64) -> f64 {
        let w = |j: i64| self.w(j);
        let (l, m) = (self.lambda, self.mu);
        (w(q - 2 * k) - 4.0 * w(q - k) + 6.0 * w(q) - 4.0 * w(q + k)
            + w(q + 2 * k)
            + 4.0 * l * w(q - k)
            + 32.0 * l * w(q)
            + 4.0 * l * w(q + k)
            + 2.0 * m * w(q - k)
            + 14.0 * m * w(q)
            + 2.0 * m * w(q + k))
            / 16.0
    }

    pub fn c6(&self, q: i64, k: i64) -> f64 {
        let w = |j: i64| self.w(j);
        let (l, m) = (self.lambda, self.mu);
        (w(q - 3 * k) - 3.0 * w(q - 2 * k) + 3.0 * w(q - k) - 2.0 * w(q) + 3.0 * w(q + k)
            - 3.0 * w(q + 2 * k)
            + w(q + 3 * k)
            - 12.0 * l * w(q - k)
            - 16.0 * l * w(q)
            - 12.0 * l * w(q + k)
            - 2.0 * m * w(q))
            / 16.0
    }

    /// Limit of `c1(q, k)` as `k -> infinity`.
    pub fn tail(&self, q: i64) -> f64 {
        0.25 * self.w(q) * (-2.0 - (4.0 * self.lambda + 2.0 * self.mu))
    }
}

fn continuum(p: &Params) -> (IndicatorKernel, f64, f64) {
    (IndicatorKernel { r: p.r }, p.lambda, p.mu)
}

/// Eigenvalue `c1(q, k, p)` of the linearization at the `q`-twisted state.
pub fn c1(q: u32, k: i64, p: &Params) -> f64 {
    let (kern, l, m) = continuum(p);
    Coefficients::new(&kern, l, m).c1(q as i64, k)
}

/// Which higher coefficient to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientName {
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl CoefficientName {
    pub fn label(self) -> &'static str {
        match self {
            CoefficientName::C2 => "c2",
            CoefficientName::C3 => "c3",
            CoefficientName::C4 => "c4",
            CoefficientName::C5 => "c5",
            CoefficientName::C6 => "c6",
        }
    }

    fn needs_m(self) -> bool {
        matches!(self, CoefficientName::C3 | CoefficientName::C4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientQuery {
    pub name: CoefficientName,
    pub q: u32,
    pub k: i64,
    pub m: Option<i64>,
    pub p: Params,
}

/// Evaluates one of `c2..c6`. `m` must be given for `c3`/`c4` and only there.
pub fn coefficient(query: &CoefficientQuery) -> Result<f64> {
    let name = query.name;
    match (name.needs_m(), query.m) {
        (true, None) => return Err(TwistError::MissingMode(name.label())),
        (false, Some(_)) => {
            return Err(TwistError::InvalidArgument(format!(
                "coefficient {} takes no second mode index m",
                name.label()
            )))
        }
        _ => {}
    }
    if query.q == 0 {
        return Err(TwistError::InvalidArgument(
            "twist number q must be positive".into(),
        ));
    }
    let (kern, l, mu) = continuum(&query.p);
    let c = Coefficients::new(&kern, l, mu);
    let (q, k) = (query.q as i64, query.k);
    Ok(match name {
        CoefficientName::C2 => c.c2(q, k),
        CoefficientName::C3 => c.c3(q, query.m.unwrap_or_default(), k),
        CoefficientName::C4 => c.c4(q, query.m.unwrap_or_default(), k),
        CoefficientName::C5 => c.c5(q, k),
        CoefficientName::C6 => c.c6(q, k),
    })
}

/// The accumulation point of the spectrum: `lim_{k -> inf} c1(q, k, p)`.
pub fn tail_limit(q: u32, p: &Params) -> f64 {
    let (kern, l, m) = continuum(p);
    Coefficients::new(&kern, l, m).tail(q as i64)
}

fn nonzero_w_hat(q: u32, r: f64) -> Result<f64> {
    if q == 0 {
        return Err(TwistError::InvalidArgument(
            "twist number q must be positive".into(),
        ));
    }
    if !(r > 0.0 && r <= 0.5) {
        return Err(TwistError::InvalidRange(r));
    }
    let wq = w_hat(r, q as i64);
    if wq.abs() < DEGENERACY_TOL {
        return Err(TwistError::DegenerateKernel { q, r });
    }
    Ok(wq)
}

/// `H(q, r) = [W(0) + W(2q) - 2 W(q)] / W(q)`.
pub fn big_h(q: u32, r: f64) -> Result<f64> {
    let wq = nonzero_w_hat(q, r)?;
    let q = q as i64;
    Ok((w_hat(r, 0) + w_hat(r, 2 * q) - 2.0 * wq) / wq)
}

/// Triplet strength at which mode `q` (the leading mode once `r0` is past
/// the switching radius) crosses zero with `mu = 0`: `H(q, r0) / 4`.
pub fn lambda0(q: u32, r0: f64) -> Result<f64> {
    let value = big_h(q, r0)? / 4.0;
    // W(0) + W(2q) - 2W(q) = -2W(q) would force 4r + W(2q) = 0, impossible for r > 0.
    if (value + 0.5).abs() < DEGENERACY_TOL {
        return Err(TwistError::Inconsistent(format!(
            "lambda0({q}, {r0}) evaluated to -1/2"
        )));
    }
    Ok(value)
}

/// `sin(2 pi x) + sin(6 pi x)/3 - 2 pi x - sin(4 pi x)/2`, equal to
/// `2 pi g(x)` for the scaling function `g`.
fn g_scaled(x: f64) -> f64 {
    let t = 2.0 * PI * x;
    t.sin() + (3.0 * t).sin() / 3.0 - t - 0.5 * (2.0 * t).sin()
}

/// The scaling function with `X(q, r) = iota(q r) / q`.
pub fn iota(upsilon: f64) -> Result<f64> {
    if !(upsilon >= 0.0) || !upsilon.is_finite() {
        return Err(TwistError::InvalidArgument(format!(
            "iota requires a finite upsilon >= 0 (got {upsilon})"
        )));
    }
    let gs = g_scaled(upsilon);
    if (gs / (2.0 * PI)).abs() < DEGENERACY_TOL {
        return Err(TwistError::SingularPoint(upsilon));
    }
    let t = 2.0 * PI * upsilon;
    let numer = -t.sin() + 2.0 * t - (2.0 * t).sin() + (3.0 * t).sin() / 3.0;
    Ok(-t.sin() / (2.0 * PI) + numer / (8.0 * gs) * (-4.0 * upsilon + (2.0 * t).sin() / PI))
}

/// `X(q, r) = d gamma1 / d t` along the triplet/quadruplet trade-off family.
pub fn cap_x(q: u32, r: f64) -> Result<f64> {
    if q == 0 {
        return Err(TwistError::InvalidArgument(
            "twist number q must be positive".into(),
        ));
    }
    Ok(iota(q as f64 * r)? / q as f64)
}

/// Root of `2 = 2 pi v - sin(2 pi v)`, the value of `q r` beyond which the
/// leading eigenvalue always belongs to mode `q`.
pub fn upsilon0() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| {
        let f = |v: f64| 2.0 * PI * v - (2.0 * PI * v).sin() - 2.0;
        roots::bisect(f, 0.25, 0.5, 1e-16)
    })
}
