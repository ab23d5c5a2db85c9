//! Finite rings of `M` phase oscillators in phase-difference form.
//!
//! Index 0 is the reference oscillator: `theta[0] == 0` always and the
//! right-hand side is `F_k(theta) - F_0(theta)`, where `F_k` is the coupling
//! field felt by oscillator `k`. Weights depend only on the circular index
//! distance, with one fractional entry so that `r` varies continuously.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bifurcation::{self, BifurcationReport, CurveFamily, CurveSpec};
use crate::error::{Result, TwistError};
use crate::kernel::{Coefficients, FourierKernel, Params, Sign};
use crate::roots;

/// Largest ring for which dense Jacobians are assembled.
pub const DENSE_CAP: usize = 2000;

/// Relative sup-norm agreement required between the two rhs methods.
pub const METHOD_AGREEMENT: f64 = 1e-9;

/// Phases of `M` oscillators relative to oscillator 0, stored unwrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    theta: Vec<f64>,
}

impl PhaseVector {
    /// Wraps phase differences; `theta[0]` must be exactly 0.
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(TwistError::InvalidArgument(
                "phase vector must be nonempty".into(),
            ));
        }
        if theta[0] != 0.0 {
            return Err(TwistError::InvalidArgument(format!(
                "phase vector must be pinned (theta[0] = {} != 0)",
                theta[0]
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(TwistError::InvalidArgument(
                "phase vector contains non-finite values".into(),
            ));
        }
        Ok(PhaseVector { theta })
    }

    /// Converts absolute phases to phase differences.
    pub fn from_phases(phi: &[f64]) -> Result<Self> {
        let Some(&p0) = phi.first() else {
            return Err(TwistError::InvalidArgument(
                "phase vector must be nonempty".into(),
            ));
        };
        PhaseVector::new(phi.iter().map(|p| p - p0).collect())
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }

    /// Number of times the profile winds around the circle.
    pub fn winding(&self) -> i64 {
        let m = self.m();
        if m < 2 {
            return 0;
        }
        ((self.theta[m - 1] - self.theta[0]) / (2.0 * PI)).round() as i64
    }

    /// `theta_k - 2 pi w k / M`, periodic in `k`.
    pub fn periodic_part(&self) -> Vec<f64> {
        let m = self.m() as f64;
        let w = self.winding() as f64;
        self.theta
            .iter()
            .enumerate()
            .map(|(k, t)| t - 2.0 * PI * w * k as f64 / m)
            .collect()
    }

    /// Sup-norm distance to another vector of the same length.
    pub fn distance(&self, other: &PhaseVector) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `theta_k = 2 pi q k / M`.
pub fn twisted_state(m: usize, q: u32) -> PhaseVector {
    let theta = (0..m.max(1))
        .map(|k| 2.0 * PI * q as f64 * k as f64 / m.max(1) as f64)
        .collect();
    PhaseVector { theta }
}

/// Coupling weights indexed by position offset `j` (`b[j] == b[M - j]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingWeights {
    m: usize,
    r: f64,
    b: Vec<f64>,
    /// Index distance of the fractional entry, if it lies in range.
    fractional_distance: Option<usize>,
    integer_only: bool,
    /// Lattice kernel `W^M(k) = (2/M) sum_j b_j cos(2 pi k j / M)`, `k = 0..M`.
    #[serde(skip)]
    w_table: Vec<f64>,
}

fn validate_ring(m: usize, r: f64) -> Result<()> {
    if m < 4 {
        return Err(TwistError::InvalidArgument(format!(
            "ring size must be at least 4 (got {m})"
        )));
    }
    if !(r > 0.0 && r <= 0.5) {
        return Err(TwistError::InvalidRange(r));
    }
    Ok(())
}

fn weights_impl(m: usize, r: f64, integer_only: bool) -> Result<CouplingWeights> {
    validate_ring(m, r)?;
    let rm = r * m as f64;
    let k0 = rm.floor() as usize;
    let frac = if integer_only { 0.0 } else { rm - k0 as f64 };
    let half = m / 2;
    let fractional_distance = (k0 < half).then_some(k0 + 1);
    let b = (0..m)
        .map(|j| {
            let d = j.min(m - j);
            if d <= k0 {
                1.0
            } else if Some(d) == fractional_distance {
                frac
            } else {
                0.0
            }
        })
        .collect::<Vec<_>>();
    let mut buf: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let w_table = buf.iter().map(|z| 2.0 * z.re / m as f64).collect();
    Ok(CouplingWeights {
        m,
        r,
        b,
        fractional_distance,
        integer_only,
        w_table,
    })
}

/// Weights of the `M`-ring with coupling range `r`: 1 up to index distance
/// `floor(rM)`, `rM - floor(rM)` at the next distance, 0 beyond. A
/// fractional entry that would reach past `M/2` is dropped.
pub fn build_weights(m: usize, r: f64) -> Result<CouplingWeights> {
    weights_impl(m, r, false)
}

/// Weights with the fractional entry zeroed (pure `k`-nearest-neighbour ring).
pub fn build_weights_integer(m: usize, r: f64) -> Result<CouplingWeights> {
    weights_impl(m, r, true)
}

impl CouplingWeights {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.b
    }

    pub fn integer_only(&self) -> bool {
        self.integer_only
    }

    /// Weight at circular index offset `j` (any integer).
    pub fn at(&self, j: i64) -> f64 {
        self.b[j.rem_euclid(self.m as i64) as usize]
    }

    fn table(&self) -> &[f64] {
        if self.w_table.len() == self.m {
            &self.w_table
        } else {
            &[]
        }
    }
}

impl FourierKernel for CouplingWeights {
    fn coefficient(&self, k: i64) -> f64 {
        let idx = k.rem_euclid(self.m as i64) as usize;
        match self.table().get(idx) {
            Some(&v) => v,
            None => {
                let m = self.m as f64;
                2.0 / m
                    * self
                        .b
                        .iter()
                        .enumerate()
                        .map(|(j, &bj)| bj * (2.0 * PI * (idx * j) as f64 / m).cos())
                        .sum::<f64>()
            }
        }
    }

    fn coefficient_dr(&self, k: i64) -> f64 {
        if self.integer_only {
            return 0.0;
        }
        let Some(d) = self.fractional_distance else {
            return 0.0;
        };
        let m = self.m;
        let phase =
            |j: usize| (2.0 * PI * (k.rem_euclid(m as i64) as usize * j) as f64 / m as f64).cos();
        if 2 * d == m {
            2.0 * phase(d)
        } else {
            2.0 * (phase(d) + phase(m - d))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orders {
    pub pairwise: bool,
    pub triplet: bool,
    pub quadruplet: bool,
}

impl Orders {
    pub const PAIRWISE: Orders = Orders {
        pairwise: true,
        triplet: false,
        quadruplet: false,
    };
    pub const ALL: Orders = Orders {
        pairwise: true,
        triplet: true,
        quadruplet: true,
    };
}

/// Which interactions are active, with what strengths and overall sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    p: Params,
    sign: Sign,
    orders: Orders,
}

impl SystemSpec {
    /// The repulsive sign is only defined for pairwise-only coupling.
    pub fn new(p: Params, sign: Sign, orders: Orders) -> Result<Self> {
        if !(orders.pairwise || orders.triplet || orders.quadruplet) {
            return Err(TwistError::InvalidArgument(
                "at least one interaction order is required".into(),
            ));
        }
        if sign == Sign::Repulsive && (orders.triplet || orders.quadruplet) {
            return Err(TwistError::InvalidArgument(
                "the repulsive model is defined for pairwise coupling only".into(),
            ));
        }
        Ok(SystemSpec { p, sign, orders })
    }

    pub fn pairwise(p: Params, sign: Sign) -> Result<Self> {
        SystemSpec::new(p, sign, Orders::PAIRWISE)
    }

    /// Every order whose strength is nonzero, plus pairwise.
    pub fn attractive(p: Params) -> Self {
        let orders = Orders {
            pairwise: true,
            triplet: p.lambda() != 0.0,
            quadruplet: p.mu() != 0.0,
        };
        SystemSpec {
            p,
            sign: Sign::Attractive,
            orders,
        }
    }

    pub fn params(&self) -> &Params {
        &self.p
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn orders(&self) -> Orders {
        self.orders
    }

    fn has_higher(&self) -> bool {
        self.orders.triplet || self.orders.quadruplet
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMethod {
    Naive,
    Fft,
    /// Evaluates both and fails if they disagree.
    Checked,
}

/// A ring with fixed weights and coupling, holding FFT plans for its size.
pub struct RingSystem {
    spec: SystemSpec,
    weights: CouplingWeights,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// DFT of the weights (real since `b` is even).
    b_hat: Vec<f64>,
}

impl RingSystem {
    pub fn new(spec: SystemSpec, weights: CouplingWeights) -> Result<Self> {
        if (weights.r() - spec.p.r()).abs() > 1e-15 {
            return Err(TwistError::InvalidArgument(format!(
                "weights were built for r = {} but the system has r = {}",
                weights.r(),
                spec.p.r()
            )));
        }
        let m = weights.m();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let ifft = planner.plan_fft_inverse(m);
        let mut buf: Vec<Complex64> = weights.b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        let b_hat = buf.iter().map(|z| z.re).collect();
        Ok(RingSystem {
            spec,
            weights,
            fft,
            ifft,
            b_hat,
        })
    }

    pub fn m(&self) -> usize {
        self.weights.m()
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn weights(&self) -> &CouplingWeights {
        &self.weights
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.m() {
            return Err(TwistError::InvalidArgument(format!(
                "phase vector has {} entries but the ring has {}",
                theta.len(),
                self.m()
            )));
        }
        Ok(())
    }

    /// Phase-difference right-hand side.
    pub fn rhs(&self, theta: &PhaseVector, method: RhsMethod) -> Result<Vec<f64>> {
        self.check_len(theta.as_slice())?;
        let th = theta.as_slice();
        match method {
            RhsMethod::Fft => Ok(self.rhs_fft(th)),
            RhsMethod::Naive => Ok(self.rhs_naive(th)),
            RhsMethod::Checked => {
                let a = self.rhs_fft(th);
                let b = self.rhs_naive(th);
                let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
                let diff = a
                    .iter()
                    .zip(&b)
                    .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
                if diff / scale > METHOD_AGREEMENT && diff > 1e-14 {
                    return Err(TwistError::Inconsistent(format!(
                        "fft and naive right-hand sides differ by {diff:e} (relative {:e})",
                        diff / scale
                    )));
                }
                Ok(a)
            }
        }
    }

    pub(crate) fn rhs_fft(&self, theta: &[f64]) -> Vec<f64> {
        let mut f = self.field_fft(theta, self.spec.orders);
        self.finish(&mut f);
        f
    }

    fn finish(&self, f: &mut [f64]) {
        let s = self.spec.sign.factor();
        let f0 = f[0];
        for v in f.iter_mut() {
            *v = s * (*v - f0);
        }
        f[0] = 0.0;
    }

    fn convolve_b(&self, spectrum: &mut [Complex64]) {
        for (z, &bh) in spectrum.iter_mut().zip(&self.b_hat) {
            *z *= bh;
        }
        self.ifft.process(spectrum);
    }

    /// Coupling field `F_k` of the selected orders (before referencing).
    fn field_fft(&self, theta: &[f64], orders: Orders) -> Vec<f64> {
        let m = self.m();
        let mf = m as f64;
        let p = self.spec.p;
        let u: Vec<Complex64> = theta
            .iter()
            .map(|&t| Complex64::from_polar(1.0, t))
            .collect();
        let mut u_hat = u.clone();
        self.fft.process(&mut u_hat);
        let mut f = vec![0.0; m];
        // Inverse transforms are unnormalized, hence one extra 1/M each.
        if orders.pairwise {
            let mut conv = u_hat.clone();
            self.convolve_b(&mut conv);
            let scale = 1.0 / (mf * mf);
            for k in 0..m {
                f[k] += scale * (u[k].conj() * conv[k]).im;
            }
        }
        if orders.triplet && p.lambda() != 0.0 {
            let mut conv: Vec<Complex64> = u_hat.iter().map(|z| z * z).collect();
            self.convolve_b(&mut conv);
            let scale = p.lambda() / (mf * mf * mf);
            for k in 0..m {
                let uk = u[k].conj();
                f[k] += scale * (uk * uk * conv[(2 * k) % m]).im;
            }
        }
        if orders.quadruplet && p.mu() != 0.0 {
            let mut conv: Vec<Complex64> = u_hat.iter().map(|z| z * z.norm_sqr()).collect();
            self.convolve_b(&mut conv);
            let scale = p.mu() / (mf * mf * mf * mf);
            for k in 0..m {
                f[k] += scale * (u[k].conj() * conv[k]).im;
            }
        }
        f
    }

    /// Direct sums. Triplet and quadruplet precompute one inner convolution
    /// (`O(M^2)` and `O(M^3)` overall).
    pub(crate) fn rhs_naive(&self, theta: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mf = m as f64;
        let p = self.spec.p;
        let o = self.spec.orders;
        let b = |j: usize| self.weights.b[j % m];
        let u: Vec<Complex64> = theta
            .iter()
            .map(|&t| Complex64::from_polar(1.0, t))
            .collect();
        let mut f = vec![0.0; m];
        if o.pairwise {
            for k in 0..m {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += b(k + m - j) * (theta[j] - theta[k]).sin();
                }
                f[k] += acc / mf;
            }
        }
        if o.triplet && p.lambda() != 0.0 {
            // v_n = sum_{j + l = n mod M} u_j u_l
            let v: Vec<Complex64> = (0..m)
                .map(|n| (0..m).map(|j| u[j] * u[(n + m - j) % m]).sum())
                .collect();
            for k in 0..m {
                let acc: Complex64 = (0..m).map(|n| v[n] * b(n + 2 * m - 2 * k)).sum();
                f[k] += p.lambda() * (u[k].conj() * u[k].conj() * acc).im / (mf * mf);
            }
        }
        if o.quadruplet && p.mu() != 0.0 {
            // d_n = sum_l u_{l+n} conj(u_l)
            let d: Vec<Complex64> = (0..m)
                .map(|n| (0..m).map(|l| u[(l + n) % m] * u[l].conj()).sum())
                .collect();
            for k in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..m {
                    for mm in 0..m {
                        acc += b(n + mm + m - k) * d[n] * u[mm];
                    }
                }
                f[k] += p.mu() * (u[k].conj() * acc).im / (mf * mf * mf);
            }
        }
        self.finish(&mut f);
        f
    }

    /// Full `M x M` Jacobian `dF_k / dtheta_j` of the signed field. Rows sum
    /// to zero (phase-shift invariance).
    pub fn field_jacobian(&self, theta: &PhaseVector) -> Result<DMatrix<f64>> {
        self.check_len(theta.as_slice())?;
        let m = self.m();
        if m > DENSE_CAP {
            return Err(TwistError::ResourceLimit(format!(
                "dense Jacobian requested for M = {m} > {DENSE_CAP}"
            )));
        }
        let th = theta.as_slice();
        let s = self.spec.sign.factor();
        let mut jac = DMatrix::<f64>::zeros(m, m);
        if self.spec.orders.pairwise {
            for k in 0..m {
                let mut diag = 0.0;
                for j in 0..m {
                    if j == k {
                        continue;
                    }
                    let v = s * self.weights.b[(k + m - j) % m] * (th[j] - th[k]).cos() / m as f64;
                    jac[(k, j)] = v;
                    diag += v;
                }
                jac[(k, k)] = -diag;
            }
        }
        if self.spec.has_higher() {
            let higher = Orders {
                pairwise: false,
                ..self.spec.orders
            };
            let h = 1e-6;
            let mut work = th.to_vec();
            for j in 0..m {
                work[j] = th[j] + h;
                let fp = self.field_fft(&work, higher);
                work[j] = th[j] - h;
                let fm = self.field_fft(&work, higher);
                work[j] = th[j];
                for k in 0..m {
                    jac[(k, j)] += s * (fp[k] - fm[k]) / (2.0 * h);
                }
            }
        }
        Ok(jac)
    }

    /// Jacobian of the phase-difference system in coordinates `1..M`.
    pub fn pinned_jacobian(&self, theta: &PhaseVector) -> Result<DMatrix<f64>> {
        let full = self.field_jacobian(theta)?;
        Ok(pin(&full))
    }

    /// Real parts of the `n_eigs` largest eigenvalues of the pinned Jacobian,
    /// in descending order.
    pub fn jacobian_spectrum(&self, theta: &PhaseVector, n_eigs: usize) -> Result<Vec<f64>> {
        let full = self.field_jacobian(theta)?;
        let mut eigs: Vec<f64> = if self.spec.has_higher() {
            pin(&full)
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .collect()
        } else {
            deflate_symmetric(&full)
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .collect()
        };
        eigs.sort_by(|a, b| b.total_cmp(a));
        eigs.truncate(n_eigs);
        Ok(eigs)
    }

    /// Eigenvalues at the twisted state in closed form (the pinned Jacobian
    /// is circulant there): `(k, sign * c1^M(q, k))` for `k = 1..M`.
    pub fn twisted_spectrum(&self, q: u32) -> Vec<(i64, f64)> {
        let p = self.spec.p;
        let lambda = if self.spec.orders.triplet {
            p.lambda()
        } else {
            0.0
        };
        let mu = if self.spec.orders.quadruplet {
            p.mu()
        } else {
            0.0
        };
        let c = Coefficients::new(&self.weights, lambda, mu);
        let s = self.spec.sign.factor();
        (1..self.m() as i64)
            .map(|k| (k, s * c.c1(q as i64, k)))
            .collect()
    }

    /// Group-orbit tangent of the continuous rotation at `theta`, pinned:
    /// `p'(x_k) - p'(0)` for the periodic part `p`.
    pub fn rotation_tangent(theta: &PhaseVector) -> Vec<f64> {
        let m = theta.m();
        let per = theta.periodic_part();
        let mut planner = FftPlanner::new();
        let mut buf: Vec<Complex64> = per.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        planner.plan_fft_forward(m).process(&mut buf);
        for (n, z) in buf.iter_mut().enumerate() {
            let freq = signed_freq(n, m);
            *z *= if 2 * n == m {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, 2.0 * PI * freq)
            };
        }
        planner.plan_fft_inverse(m).process(&mut buf);
        let d: Vec<f64> = buf.iter().map(|z| z.re / m as f64).collect();
        d.iter().map(|v| v - d[0]).collect()
    }

    /// Adaptive Dormand-Prince 5(4) integration from `theta0`.
    pub fn integrate(&self, theta0: &PhaseVector, opts: &IntegrateOptions) -> Result<Integration> {
        self.check_len(theta0.as_slice())?;
        opts.validate()?;
        let m = self.m();
        let f = |y: &[f64]| self.rhs_fft(y);
        let mut y = theta0.as_slice().to_vec();
        let mut t = 0.0;
        let mut k1 = f(&y);
        let mut samples = Vec::new();
        let mut next_sample = 0.0;
        if let Some(dt) = opts.sample_interval {
            samples.push((0.0, y.clone()));
            next_sample = dt;
        }
        let mut rhs_norm = sup_norm(&k1);
        if rhs_norm < opts.equilibrium_tol {
            return Ok(Integration::done(
                y,
                t,
                0,
                0,
                StopReason::Equilibrium,
                rhs_norm,
                samples,
            ));
        }
        let tol = opts.tol;
        let scaled_norm = |e: &[f64], a: &[f64], b: &[f64]| -> f64 {
            let s: f64 = (0..m)
                .map(|i| {
                    let sc = tol + tol * a[i].abs().max(b[i].abs());
                    (e[i] / sc).powi(2)
                })
                .sum();
            (s / m as f64).sqrt()
        };
        let mut h = opts.initial_step.unwrap_or_else(|| {
            let d0 = scaled_norm(&y, &y, &y).max(1e-5);
            let d1 = scaled_norm(&k1, &y, &y).max(1e-5);
            (0.01 * d0 / d1).min(opts.t_end)
        });
        let (mut steps, mut rejected) = (0usize, 0usize);
        let mut err_prev: f64 = 1e-4;
        let mut stage = vec![0.0; m];
        while t < opts.t_end {
            if steps + rejected >= opts.max_steps {
                return Err(TwistError::ResourceLimit(format!(
                    "integration exceeded {} steps at t = {t}",
                    opts.max_steps
                )));
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(TwistError::Stiffness { t, h });
            }
            let h_step = h.min(opts.t_end - t);
            let combo = |stage: &mut Vec<f64>, ks: &[(&[f64], f64)]| {
                for i in 0..m {
                    let mut acc = y[i];
                    for (k, a) in ks {
                        acc += h_step * a * k[i];
                    }
                    stage[i] = acc;
                }
                stage[0] = 0.0;
            };
            combo(&mut stage, &[(&k1, DP_A[0][0])]);
            let k2 = f(&stage);
            combo(&mut stage, &[(&k1, DP_A[1][0]), (&k2, DP_A[1][1])]);
            let k3 = f(&stage);
            combo(
                &mut stage,
                &[(&k1, DP_A[2][0]), (&k2, DP_A[2][1]), (&k3, DP_A[2][2])],
            );
            let k4 = f(&stage);
            combo(
                &mut stage,
                &[
                    (&k1, DP_A[3][0]),
                    (&k2, DP_A[3][1]),
                    (&k3, DP_A[3][2]),
                    (&k4, DP_A[3][3]),
                ],
            );
            let k5 = f(&stage);
            combo(
                &mut stage,
                &[
                    (&k1, DP_A[4][0]),
                    (&k2, DP_A[4][1]),
                    (&k3, DP_A[4][2]),
                    (&k4, DP_A[4][3]),
                    (&k5, DP_A[4][4]),
                ],
            );
            let k6 = f(&stage);
            let mut y_new = vec![0.0; m];
            combo(
                &mut y_new,
                &[
                    (&k1, DP_B[0]),
                    (&k3, DP_B[2]),
                    (&k4, DP_B[3]),
                    (&k5, DP_B[4]),
                    (&k6, DP_B[5]),
                ],
            );
            let k7 = f(&y_new);
            let err_vec: Vec<f64> = (0..m)
                .map(|i| {
                    h_step
                        * (DP_E[0] * k1[i]
                            + DP_E[2] * k3[i]
                            + DP_E[3] * k4[i]
                            + DP_E[4] * k5[i]
                            + DP_E[5] * k6[i]
                            + DP_E[6] * k7[i])
                })
                .collect();
            let err = scaled_norm(&err_vec, &y, &y_new).max(1e-16);
            if err <= 1.0 {
                t += h_step;
                y = y_new;
                k1 = k7;
                steps += 1;
                let fac = (0.9 * err.powf(-0.17) * err_prev.powf(0.04)).clamp(0.2, 10.0);
                err_prev = err;
                h = h_step * fac;
                if let Some(dt) = opts.sample_interval {
                    while t >= next_sample {
                        samples.push((t, y.clone()));
                        next_sample += dt;
                    }
                }
                rhs_norm = sup_norm(&k1);
                if rhs_norm < opts.equilibrium_tol {
                    return Ok(Integration::done(
                        y,
                        t,
                        steps,
                        rejected,
                        StopReason::Equilibrium,
                        rhs_norm,
                        samples,
                    ));
                }
            } else {
                rejected += 1;
                h = h_step * (0.9 * err.powf(-0.2)).max(0.2);
            }
        }
        Ok(Integration::done(
            y,
            t,
            steps,
            rejected,
            StopReason::TimeLimit,
            rhs_norm,
            samples,
        ))
    }

    /// Classical fixed-step RK4; deterministic step sequence.
    pub fn integrate_rk4(&self, theta0: &PhaseVector, h: f64, t_end: f64) -> Result<Integration> {
        self.check_len(theta0.as_slice())?;
        if !(h > 0.0 && t_end >= 0.0) {
            return Err(TwistError::InvalidArgument(
                "RK4 needs h > 0 and t_end >= 0".into(),
            ));
        }
        let m = self.m();
        let mut y = theta0.as_slice().to_vec();
        let n = (t_end / h).ceil() as usize;
        let mut t = 0.0;
        let mut stage = vec![0.0; m];
        for _ in 0..n {
            let hs = h.min(t_end - t);
            let k1 = self.rhs_fft(&y);
            for i in 0..m {
                stage[i] = y[i] + 0.5 * hs * k1[i];
            }
            let k2 = self.rhs_fft(&stage);
            for i in 0..m {
                stage[i] = y[i] + 0.5 * hs * k2[i];
            }
            let k3 = self.rhs_fft(&stage);
            for i in 0..m {
                stage[i] = y[i] + hs * k3[i];
            }
            let k4 = self.rhs_fft(&stage);
            for i in 0..m {
                y[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            y[0] = 0.0;
            t += hs;
        }
        let rhs_norm = sup_norm(&self.rhs_fft(&y));
        Ok(Integration::done(
            y,
            t,
            n,
            0,
            StopReason::TimeLimit,
            rhs_norm,
            Vec::new(),
        ))
    }

    /// Damped Newton iteration on the pinned system, bordered with a phase
    /// condition along the rotation tangent when the state is not twisted.
    pub fn newton(&self, init: &PhaseVector, opts: &NewtonOptions) -> Result<EquilibriumResult> {
        self.check_len(init.as_slice())?;
        if !(opts.tol > 0.0) {
            return Err(TwistError::InvalidArgument(
                "Newton tolerance must be positive".into(),
            ));
        }
        let m = self.m();
        let n = m - 1;
        let mut y = init.as_slice().to_vec();
        let mut g = self.rhs_fft(&y);
        let mut res = sup_norm(&g);
        let mut iterations = 0;
        while res >= opts.tol {
            if iterations >= opts.max_iter {
                return Err(TwistError::NewtonNoConvergence {
                    iterations,
                    residual: res,
                });
            }
            let state = PhaseVector { theta: y.clone() };
            let jac = self.pinned_jacobian(&state)?;
            let tangent = RingSystem::rotation_tangent(&state);
            let t_norm = sup_norm(&tangent);
            let bordered = t_norm > 1e-8;
            let dim = if bordered { n + 1 } else { n };
            let mut a = DMatrix::<f64>::zeros(dim, dim);
            a.view_mut((0, 0), (n, n)).copy_from(&jac);
            let mut rhs = DVector::<f64>::zeros(dim);
            for i in 0..n {
                rhs[i] = -g[i + 1];
            }
            if bordered {
                for i in 0..n {
                    let ti = tangent[i + 1] / t_norm;
                    a[(i, n)] = ti;
                    a[(n, i)] = ti;
                }
            }
            let lu = a.lu();
            let cond = lu_condition_estimate(lu.u().diagonal().as_slice());
            if cond > opts.max_condition {
                return Err(TwistError::NearSymmetryDegenerate { condition: cond });
            }
            let delta = lu.solve(&rhs).ok_or(TwistError::NearSymmetryDegenerate {
                condition: f64::INFINITY,
            })?;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let trial: Vec<f64> = (0..m)
                    .map(|k| {
                        if k == 0 {
                            0.0
                        } else {
                            y[k] + step * delta[k - 1]
                        }
                    })
                    .collect();
                let g_trial = self.rhs_fft(&trial);
                let r_trial = sup_norm(&g_trial);
                if r_trial < res {
                    y = trial;
                    g = g_trial;
                    res = r_trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            if !accepted {
                return Err(TwistError::NewtonNoConvergence {
                    iterations,
                    residual: res,
                });
            }
        }
        let theta = PhaseVector { theta: y };
        let jacobian_leading_eigs = if opts.leading_eigs > 0 {
            self.jacobian_spectrum(&theta, opts.leading_eigs)?
        } else {
            Vec::new()
        };
        Ok(EquilibriumResult {
            theta,
            residual_norm: res,
            iterations,
            jacobian_leading_eigs,
        })
    }
}

/// Pinned Jacobian `P_{kj} = J_{kj} - J_{0j}` for `k, j >= 1`.
fn pin(full: &DMatrix<f64>) -> DMatrix<f64> {
    let m = full.nrows();
    DMatrix::from_fn(m - 1, m - 1, |k, j| full[(k + 1, j + 1)] - full[(0, j + 1)])
}

/// For symmetric `J` with `J 1 = 0`: the restriction to the complement of
/// `1`, via the Householder reflection that maps `e_0` onto `-1/sqrt(M)`.
/// Its spectrum equals that of the pinned Jacobian.
fn deflate_symmetric(full: &DMatrix<f64>) -> DMatrix<f64> {
    let m = full.nrows();
    let mut v = DVector::<f64>::from_element(m, 1.0);
    v[0] += (m as f64).sqrt();
    let vv = v.dot(&v);
    let jv = full * &v;
    let vjv = v.dot(&jv);
    // H J H = J - (2/vv)(v (Jv)^T + (Jv) v^T) + (4 vJv / vv^2) v v^T
    let c = 4.0 * vjv / (vv * vv);
    DMatrix::from_fn(m - 1, m - 1, |i, j| {
        let (i, j) = (i + 1, j + 1);
        full[(i, j)] - 2.0 / vv * (v[i] * jv[j] + jv[i] * v[j]) + c * v[i] * v[j]
    })
}

fn lu_condition_estimate(diag: &[f64]) -> f64 {
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn signed_freq(n: usize, m: usize) -> f64 {
    if 2 * n <= m {
        n as f64
    } else {
        n as f64 - m as f64
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |s, x| s.max(x.abs()))
}

const DP_A: [[f64; 5]; 5] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const DP_B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub t_end: f64,
    /// Absolute and relative local error tolerance.
    pub tol: f64,
    /// Stop once `||rhs||_inf` drops below this.
    pub equilibrium_tol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    /// Record the state every `sample_interval` time units.
    pub sample_interval: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            t_end: 1e3,
            tol: 1e-9,
            equilibrium_tol: 1e-10,
            max_steps: 10_000_000,
            initial_step: None,
            sample_interval: None,
        }
    }
}

impl IntegrateOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.t_end >= 0.0) || !(self.equilibrium_tol >= 0.0) {
            return Err(TwistError::InvalidArgument(
                "integration needs tol > 0, t_end >= 0 and equilibrium_tol >= 0".into(),
            ));
        }
        if matches!(self.sample_interval, Some(dt) if !(dt > 0.0)) {
            return Err(TwistError::InvalidArgument(
                "sample interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Equilibrium,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Integration {
    pub theta: PhaseVector,
    pub t: f64,
    pub steps: usize,
    pub rejected: usize,
    pub stop: StopReason,
    pub rhs_norm: f64,
    pub samples: Vec<(f64, Vec<f64>)>,
}

impl Integration {
    fn done(
        y: Vec<f64>,
        t: f64,
        steps: usize,
        rejected: usize,
        stop: StopReason,
        rhs_norm: f64,
        samples: Vec<(f64, Vec<f64>)>,
    ) -> Self {
        Integration {
            theta: PhaseVector { theta: y },
            t,
            steps,
            rejected,
            stop,
            rhs_norm,
            samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub max_halvings: usize,
    pub max_condition: f64,
    /// Number of leading Jacobian eigenvalues reported on success.
    pub leading_eigs: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 50,
            tol: 1e-12,
            max_halvings: 30,
            max_condition: 1e12,
            leading_eigs: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub theta: PhaseVector,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Leading eigenvalues (real parts, descending) of the pinned Jacobian.
    pub jacobian_leading_eigs: Vec<f64>,
}

impl EquilibriumResult {
    /// Leading eigenvalues with the single eigenvalue closest to zero removed
    /// if it is below `10/M` in magnitude (the near-neutral rotation mode).
    pub fn deflated_eigs(&self) -> Vec<f64> {
        let limit = 10.0 / self.theta.m() as f64;
        let mut eigs = self.jacobian_leading_eigs.clone();
        if let Some((i, _)) = eigs
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() < limit)
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            eigs.remove(i);
        }
        eigs
    }
}

/// Free-function form of [`RingSystem::rhs`].
pub fn rhs(
    theta: &PhaseVector,
    spec: &SystemSpec,
    weights: &CouplingWeights,
    method: RhsMethod,
) -> Result<Vec<f64>> {
    RingSystem::new(*spec, weights.clone())?.rhs(theta, method)
}

/// Free-function form of [`RingSystem::jacobian_spectrum`].
pub fn jacobian_spectrum(
    theta: &PhaseVector,
    spec: &SystemSpec,
    weights: &CouplingWeights,
    n_eigs: usize,
) -> Result<Vec<f64>> {
    RingSystem::new(*spec, weights.clone())?.jacobian_spectrum(theta, n_eigs)
}

/// Free-function form of [`RingSystem::integrate`].
pub fn integrate(
    theta0: &PhaseVector,
    spec: &SystemSpec,
    weights: &CouplingWeights,
    opts: &IntegrateOptions,
) -> Result<Integration> {
    RingSystem::new(*spec, weights.clone())?.integrate(theta0, opts)
}

/// Free-function form of [`RingSystem::newton`].
pub fn newton_equilibrium(
    theta_init: &PhaseVector,
    spec: &SystemSpec,
    weights: &CouplingWeights,
    opts: &NewtonOptions,
) -> Result<EquilibriumResult> {
    RingSystem::new(*spec, weights.clone())?.newton(theta_init, opts)
}

/// Cyclic relabelling that makes oscillator `j` the reference. Entries that
/// wrap past the end are shifted by `2 pi w` so the profile stays unwrapped.
pub fn symmetry_shift(theta: &PhaseVector, j: usize) -> Result<PhaseVector> {
    let m = theta.m();
    if j >= m {
        return Err(TwistError::InvalidArgument(format!(
            "shift {j} out of range for M = {m}"
        )));
    }
    let w = theta.winding() as f64;
    let th = theta.as_slice();
    let out = (0..m)
        .map(|k| {
            let idx = k + j;
            let wrap = if idx >= m { 2.0 * PI * w } else { 0.0 };
            th[idx % m] + wrap - th[j]
        })
        .collect::<Vec<_>>();
    let mut out = out;
    out[0] = 0.0;
    Ok(PhaseVector { theta: out })
}

/// Continuous rotation `x -> theta(x + phi) - theta(phi)`, evaluated by
/// trigonometric interpolation of the periodic part.
pub fn phase_shift(theta: &PhaseVector, phi: f64) -> PhaseVector {
    let m = theta.m();
    let w = theta.winding() as f64;
    let per = theta.periodic_part();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = per.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(m).process(&mut buf);
    for (n, z) in buf.iter_mut().enumerate() {
        let freq = signed_freq(n, m);
        if 2 * n == m {
            // Nyquist term: keep the real (cosine) interpolant.
            *z *= (PI * m as f64 * phi).cos();
        } else {
            *z *= Complex64::from_polar(1.0, 2.0 * PI * freq * phi);
        }
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let shifted: Vec<f64> = buf.iter().map(|z| z.re / m as f64).collect();
    let base = shifted[0];
    let mut out: Vec<f64> = (0..m)
        .map(|k| 2.0 * PI * w * k as f64 / m as f64 + shifted[k] - base)
        .collect();
    out[0] = 0.0;
    PhaseVector { theta: out }
}

/// Continuous rotation `phi` that best maps `a` onto `b` (sup-norm), and
/// the remaining distance. Candidates come from the phase of the dominant
/// Fourier mode of `a`; the best is refined by golden-section search.
pub fn align_phase(a: &PhaseVector, b: &PhaseVector) -> Result<(f64, f64)> {
    let m = a.m();
    if b.m() != m {
        return Err(TwistError::InvalidArgument(
            "phase vectors differ in length".into(),
        ));
    }
    let spectrum = |v: &PhaseVector| {
        let mut buf: Vec<Complex64> = v
            .periodic_part()
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        buf
    };
    let (sa, sb) = (spectrum(a), spectrum(b));
    let dominant = (1..m / 2)
        .max_by(|&i, &j| sa[i].norm().total_cmp(&sa[j].norm()))
        .unwrap_or(1);
    let ell = dominant as f64;
    let dist = |phi: f64| phase_shift(a, phi).distance(b);
    let base = if sa[dominant].norm() > 0.0 && sb[dominant].norm() > 0.0 {
        // Shifting by phi multiplies mode n by exp(2 pi i n phi).
        (sb[dominant].arg() - sa[dominant].arg()) / (2.0 * PI * ell)
    } else {
        0.0
    };
    let (mut best_phi, mut best) = (0.0, f64::INFINITY);
    for j in 0..dominant.max(1) {
        let phi = base + j as f64 / ell;
        let d = dist(phi);
        if d < best {
            best = d;
            best_phi = phi;
        }
    }
    let half = 0.5 / (ell * m as f64);
    let (mut lo, mut hi) = (best_phi - half, best_phi + half);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (dist(x1), dist(x2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = dist(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = dist(x2);
        }
    }
    let (phi, d) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    Ok(if d < best { (phi, d) } else { (best_phi, best) })
}

/// Adds seeded uniform noise in `[-amplitude, amplitude]` to entries `1..M`.
pub fn perturb(theta: &PhaseVector, amplitude: f64, seed: u64) -> Result<PhaseVector> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(TwistError::InvalidArgument(format!(
            "amplitude must be >= 0 (got {amplitude})"
        )));
    }
    if amplitude == 0.0 {
        return Ok(theta.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = theta.as_slice().to_vec();
    for v in out.iter_mut().skip(1) {
        *v += rng.gen_range(-amplitude..=amplitude);
    }
    Ok(PhaseVector { theta: out })
}

/// Leading eigenvalue of the twisted state from the circulant closed form.
fn leading_twisted(q: u32, m: usize, r: f64, sign: Sign) -> Result<f64> {
    let sys = RingSystem::new(
        SystemSpec::pairwise(Params::pairwise(r)?, sign)?,
        build_weights(m, r)?,
    )?;
    Ok(sys
        .twisted_spectrum(q)
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Leading eigenvalue of the twisted state from the dense Jacobian.
fn leading_dense(q: u32, m: usize, r: f64, sign: Sign) -> Result<f64> {
    let sys = RingSystem::new(
        SystemSpec::pairwise(Params::pairwise(r)?, sign)?,
        build_weights(m, r)?,
    )?;
    Ok(sys.jacobian_spectrum(&twisted_state(m, q), 1)?[0])
}

/// Finite-ring bifurcation radius of the `q`-twisted state: the first `r`
/// at which the leading Jacobian eigenvalue becomes positive (attractive),
/// or the lower edge of the first stable window (repulsive).
pub fn finite_threshold(q: u32, m: usize, sign: Sign) -> Result<f64> {
    if q == 0 {
        return Err(TwistError::InvalidArgument(
            "twist number q must be positive".into(),
        ));
    }
    if m < 20 * q as usize {
        return Err(TwistError::InvalidArgument(format!(
            "M = {m} is too small to resolve q = {q} (need M >= 20q)"
        )));
    }
    if sign == Sign::Repulsive && q == 1 {
        return Err(TwistError::NoBifurcation(
            "the 1-twisted state of the repulsive model has no stability window to leave".into(),
        ));
    }
    // Sign change from the closed form on a coarse grid, then bisection on
    // the dense Jacobian inside the bracket.
    let step = crate::spectrum::THRESHOLD_SCAN_STEP;
    let n = (0.5 / step).round() as usize;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 1..=n {
        let r = i as f64 * step;
        let v = leading_twisted(q, m, r, sign)?;
        if let Some((rp, vp)) = prev {
            let crossed = match sign {
                Sign::Attractive => vp < 0.0 && v >= 0.0,
                Sign::Repulsive => vp >= 0.0 && v < 0.0,
            };
            if crossed {
                bracket = Some((rp, r));
                break;
            }
        }
        prev = Some((r, v));
    }
    let (a, b) = bracket.ok_or_else(|| {
        TwistError::NoThreshold(format!(
            "no sign change of the leading eigenvalue for q = {q}, M = {m}"
        ))
    })?;
    let mut failure = None;
    let root = roots::bisect(
        |r| match leading_dense(q, m, r, sign) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        1e-7,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

/// Pitchfork coefficients with the lattice kernel of an `M`-ring in place of
/// the continuum kernel. `base` must be critical for the lattice spectrum.
pub fn finite_gamma_pair(
    q: u32,
    ell: i64,
    base: Params,
    direction: [f64; 3],
    sign: Sign,
    m: usize,
) -> Result<BifurcationReport> {
    let weights = build_weights(m, base.r())?;
    let c = Coefficients::new(&weights, base.lambda(), base.mu());
    let crit = c.c1(q as i64, ell).abs();
    if crit >= bifurcation::CROSSING_TOL {
        return Err(TwistError::NotCritical(crit));
    }
    let curve = CurveSpec {
        family: CurveFamily::MixedLinear,
        base,
        direction,
        t: 0.0,
        q,
        ell,
        sign,
    };
    let (g1, g2, ratio) = bifurcation::gamma_coefficients(&weights, &curve)?;
    let s = sign.factor();
    let kappa = (1..m as i64)
        .filter(|&k| k != ell && k != m as i64 - ell)
        .map(|k| s * c.c1(q as i64, k))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BifurcationReport::from_coefficients(
        q, ell, g1, g2, ratio, kappa,
    ))
}
