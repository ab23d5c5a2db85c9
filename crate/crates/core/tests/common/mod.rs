//! Independent oracles shared by the integration tests. Nothing here calls
//! the closed-form coefficient algebra of the library.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Fourier coefficient of the indicator kernel of half-width `r`, computed
/// by integrating `cos(2 pi n x)` over `[-r, r]` directly.
pub fn kernel_mode(r: f64, n: i64) -> f64 {
    if n == 0 {
        2.0 * r
    } else {
        let a = 2.0 * PI * n as f64;
        2.0 * (a * r).sin() / a
    }
}

/// Continuum phase-difference right-hand side on a uniform grid of `n`
/// points, evaluated spectrally: every coupling is diagonal in Fourier space
/// once written in terms of `g = exp(i psi)`.
pub struct ContinuumOracle {
    n: usize,
    r: f64,
    lambda: f64,
    mu: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl ContinuumOracle {
    pub fn new(n: usize, r: f64, lambda: f64, mu: f64) -> Self {
        let mut planner = FftPlanner::new();
        ContinuumOracle {
            n,
            r,
            lambda,
            mu,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 / self.n as f64).collect()
    }

    fn freq(&self, idx: usize) -> i64 {
        if 2 * idx <= self.n {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    pub fn rhs(&self, psi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let g: Vec<Complex64> = psi.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        let mut coeffs = g.clone();
        self.fft.process(&mut coeffs);
        for c in coeffs.iter_mut() {
            *c /= n as f64;
        }
        let w: Vec<f64> = (0..n).map(|i| kernel_mode(self.r, self.freq(i))).collect();
        let synth = |f: &dyn Fn(usize) -> Complex64| {
            let mut buf: Vec<Complex64> = (0..n).map(f).collect();
            self.ifft.process(&mut buf);
            buf
        };
        let pair = synth(&|i| w[i] * coeffs[i]);
        let trip = synth(&|i| w[i] * coeffs[i] * coeffs[i]);
        let quad = synth(&|i| w[i] * coeffs[i].norm_sqr() * coeffs[i]);
        let field: Vec<f64> = (0..n)
            .map(|j| {
                let gc = g[j].conj();
                (gc * pair[j]).im
                    + self.lambda * (gc * gc * trip[(2 * j) % n]).im
                    + self.mu * (gc * quad[j]).im
            })
            .collect();
        field.iter().map(|f| f - field[0]).collect()
    }

    /// `psi^q + sum_i eps_i sin(2 pi k_i x)`.
    pub fn state(&self, q: u32, perturbation: &[(i64, f64)]) -> Vec<f64> {
        self.grid()
            .iter()
            .map(|&x| {
                2.0 * PI * q as f64 * x
                    + perturbation
                        .iter()
                        .map(|&(k, e)| e * (2.0 * PI * k as f64 * x).sin())
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Coefficient of `sin(2 pi m x)` in a grid function.
pub fn project_sin(f: &[f64], m: i64) -> f64 {
    let n = f.len() as f64;
    2.0 * f
        .iter()
        .enumerate()
        .map(|(j, v)| v * (2.0 * PI * m as f64 * j as f64 / n).sin())
        .sum::<f64>()
        / n
}

/// Taylor coefficients `a_0..a_{2p}` of a scalar function from samples at
/// `j h`, `j = -p..=p` (exact polynomial interpolation).
pub fn taylor_coefficients(f: impl Fn(f64) -> f64, h: f64, p: usize) -> Vec<f64> {
    let pts: Vec<f64> = (-(p as i64)..=p as i64).map(|j| j as f64 * h).collect();
    let deg = pts.len();
    // Work in the scaled variable t = x / h for conditioning.
    let v = DMatrix::from_fn(deg, deg, |i, j| (pts[i] / h).powi(j as i32));
    let y = DVector::from_iterator(deg, pts.iter().map(|&x| f(x)));
    let c = v.lu().solve(&y).expect("Vandermonde solve");
    c.iter()
        .enumerate()
        .map(|(j, cj)| cj / h.powi(j as i32))
        .collect()
}

/// `n`-th derivative at 0 of the sine-projection onto mode `m` of
/// `eps -> rhs(psi(eps))`.
pub fn directional_derivative(
    oracle: &ContinuumOracle,
    q: u32,
    dirs: &[i64],
    order: usize,
    project: i64,
) -> f64 {
    let f = |eps: f64| {
        let pert: Vec<(i64, f64)> = dirs.iter().map(|&k| (k, eps)).collect();
        project_sin(&oracle.rhs(&oracle.state(q, &pert)), project)
    };
    let a = taylor_coefficients(f, 0.02, 5);
    let fact: f64 = (1..=order).map(|i| i as f64).product();
    a[order] * fact
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w));
    }
    out
}

/// Quadrature of `int_{-r}^{r} f(s) ds`, split at 0.
pub fn integrate_window(r: f64, f: impl Fn(f64) -> f64) -> f64 {
    gauss_legendre(40, -r, 0.0)
        .iter()
        .chain(gauss_legendre(40, 0.0, r).iter())
        .map(|&(s, w)| w * f(s))
        .sum()
}

/// Linearized continuum operator at the `q`-twisted state applied to
/// `sin(2 pi k x)` and projected back onto that mode, by quadrature. The
/// triplet and quadruplet integrals keep their full multi-dimensional form
/// (outer variables on a periodic trapezoid grid).
pub fn c1_quadrature(q: u32, k: i64, r: f64, lambda: f64, mu: f64) -> f64 {
    let qf = q as f64;
    let v = |x: f64| (2.0 * PI * k as f64 * x).sin();
    let nx = 48;
    let ny = 24;
    let lin = |x: f64| -> f64 {
        // pairwise: int W(x - y) cos(2 pi q (y - x)) (v(y) - v(x)) dy, y = x + s
        let pair = integrate_window(r, |s| (2.0 * PI * qf * s).cos() * (v(x + s) - v(x)));
        // triplet: y free, z = s - y + 2x
        let trip = if lambda != 0.0 {
            (0..ny)
                .map(|iy| {
                    let y = iy as f64 / ny as f64;
                    integrate_window(r, |s| {
                        (2.0 * PI * qf * s).cos() * (v(y) + v(s - y + 2.0 * x) - 2.0 * v(x))
                    })
                })
                .sum::<f64>()
                / ny as f64
        } else {
            0.0
        };
        // quadruplet: y, z free, w = s - y + z + x
        let quad = if mu != 0.0 {
            let mut acc = 0.0;
            for iy in 0..ny {
                for iz in 0..ny {
                    let (y, z) = (iy as f64 / ny as f64, iz as f64 / ny as f64);
                    acc += integrate_window(r, |s| {
                        (2.0 * PI * qf * s).cos() * (v(y) - v(z) + v(s - y + z + x) - v(x))
                    });
                }
            }
            acc / (ny * ny) as f64
        } else {
            0.0
        };
        pair + lambda * trip + mu * quad
    };
    let vals: Vec<f64> = (0..nx).map(|i| lin(i as f64 / nx as f64)).collect();
    let lin0 = lin(0.0);
    project_sin(&vals.iter().map(|f| f - lin0).collect::<Vec<_>>(), k)
}

/// Eigenvalue of mode `k` for the product-kernel triplet coupling
/// `W(z - x) W(y - x)`, by 2-D Gauss-Legendre quadrature of the linearization
/// applied to `cos(2 pi k x)` at `x = 0`.
pub fn product4_quadrature(q: u32, r: f64, k: i64) -> f64 {
    let (qf, kf) = (q as f64, k as f64);
    let mut acc = 0.0;
    let nodes: Vec<(f64, f64)> = gauss_legendre(40, -r, 0.0)
        .into_iter()
        .chain(gauss_legendre(40, 0.0, r))
        .collect();
    for &(a, wa) in &nodes {
        for &(b, wb) in &nodes {
            let c = (2.0 * PI * qf * (a + b)).cos();
            acc += wa * wb * c * ((2.0 * PI * kf * a).cos() + (2.0 * PI * kf * b).cos() - 2.0);
        }
    }
    acc
}

/// Eigenvalue of mode `k` for the coupling through `W(sum_i m_i y_i + m_last x)`
/// with `d = 2` (`m = (m1, m2, m_last)`, `m1 = +-1`), by quadrature at `x = 0`.
pub fn general_d2_quadrature(q: u32, r: f64, k: i64, m: [i64; 3]) -> f64 {
    assert!(m[0].abs() == 1 && m.iter().sum::<i64>() == 0);
    let (qf, kf) = (q as f64, k as f64);
    let v = |x: f64| (2.0 * PI * kf * x).cos();
    let ny = 64;
    let (m1, m2, m3) = (m[0] as f64, m[1] as f64, m[2] as f64);
    (0..ny)
        .map(|iy| {
            let y = iy as f64 / ny as f64;
            // s = m1 z + m2 y (x = 0)  =>  z = (s - m2 y) / m1
            integrate_window(r, |s| {
                let z = (s - m2 * y) / m1;
                (2.0 * PI * qf * s).cos() * (m1 * v(z) + m2 * v(y) + m3 * v(0.0))
            })
        })
        .sum::<f64>()
        / ny as f64
}
