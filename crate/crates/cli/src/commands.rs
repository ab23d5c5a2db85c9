//! Command dispatch: each command validates its parameters, calls the
//! library and returns tables plus a JSON payload.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use twistlab::bifurcation::{
    a_app, branch_eigenvalue_prediction, branch_profile, gamma_pair, profile_from_ratio,
    stability_map, BifurcationReport, CurveFamily, CurveSpec, GridAxis,
};
use twistlab::kernel::{
    c1, cap_x, coefficient, iota, upsilon0, w_hat, CoefficientName, CoefficientQuery, Coefficients,
};
use twistlab::ring::{
    build_weights, build_weights_integer, finite_gamma_pair, finite_threshold, perturb,
    twisted_state, CouplingWeights, EquilibriumResult, IntegrateOptions, NewtonOptions, Orders,
    PhaseVector, RingSystem, StopReason, SystemSpec, DENSE_CAP,
};
use twistlab::roots::bisect;
use twistlab::spectrum::{
    repulsive_window, spectrum_report, threshold, SupLocation, ThresholdKind,
};
use twistlab::{Params, Sign, TwistError};

use crate::args::{
    Anchor, BranchArgs, CoefficientArg, Cutoff, EquilibriumArgs, FamilyArg, GammaArgs, InitArg,
    IotaArgs, KernelArgs, OrderArg, RingArgs, SignArg, SimulateArgs, SpectrumArgs,
    StabilityMapArgs, ThresholdArg, ThresholdArgs,
};
use crate::error::CliError;
use crate::report::{Cell, Outcome, Table};

type Result<T> = std::result::Result<T, CliError>;

/// `(s, a, error_z1, error_z2, residual)`
type ScalingRow = (f64, f64, f64, f64, f64);

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required parameter --{flag}")))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn positive_q(q: Option<u32>) -> Result<u32> {
    match need(q, "q")? {
        0 => Err(usage("twist number q must be positive")),
        q => Ok(q),
    }
}

fn sup_location(loc: SupLocation) -> Value {
    match loc {
        SupLocation::Mode(k) => json!({ "mode": k }),
        SupLocation::Tail => json!("tail"),
    }
}

fn report_json(rep: &BifurcationReport) -> Value {
    serde_json::to_value(rep).expect("report serializes")
}

// ---------------------------------------------------------------- kernel

pub fn kernel(a: KernelArgs) -> Result<Outcome> {
    let r = need(a.r, "r")?;
    let p = Params::new(r, a.lambda.unwrap_or(0.0), a.mu.unwrap_or(0.0))?;
    let kmax = a.kmax.unwrap_or(10);
    if kmax < 0 {
        return Err(usage("kmax must be non-negative"));
    }
    let mut out = Outcome::default();
    let mut table = Table::new(None, &["k", "w_hat"]);
    let mut values = Vec::new();
    for k in 0..=kmax {
        let w = w_hat(r, k);
        table.push(vec![k.into(), w.into()]);
        values.push(w);
    }
    let coefficient_value = match a.coefficient {
        None => Value::Null,
        Some(name) => {
            let q = positive_q(a.q)?;
            let k = need(a.k, "k")?;
            let value = match name {
                CoefficientArg::C1 => {
                    if a.second_mode.is_some() {
                        return Err(usage("c1 takes no second mode index"));
                    }
                    c1(q, k, &p)
                }
                other => {
                    let name = match other {
                        CoefficientArg::C2 => CoefficientName::C2,
                        CoefficientArg::C3 => CoefficientName::C3,
                        CoefficientArg::C4 => CoefficientName::C4,
                        CoefficientArg::C5 => CoefficientName::C5,
                        _ => CoefficientName::C6,
                    };
                    coefficient(&CoefficientQuery {
                        name,
                        q,
                        k,
                        m: a.second_mode,
                        p,
                    })?
                }
            };
            json!({ "name": name, "q": q, "k": k, "second_mode": a.second_mode, "value": value })
        }
    };
    out.results = json!({ "r": r, "w_hat": values, "coefficient": coefficient_value });
    out.tables.push(table);
    out.plot = Some(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'k'\nplot 'kernel.csv' using 1:2 with linespoints\n"
            .into(),
    );
    Ok(out)
}

// -------------------------------------------------------------- spectrum

pub fn spectrum(a: SpectrumArgs) -> Result<Outcome> {
    let q = positive_q(a.q)?;
    let p = Params::new(
        need(a.r, "r")?,
        a.lambda.unwrap_or(0.0),
        a.mu.unwrap_or(0.0),
    )?;
    let sign: Sign = a.sign.unwrap_or(SignArg::Attractive).into();
    let tol = a.tol.unwrap_or(1e-9);
    if !(tol > 0.0) {
        return Err(usage("tol must be positive"));
    }
    let rep = spectrum_report(q, &p, sign, tol)?;
    let listed: Vec<i64> = match a.kmax.unwrap_or(Cutoff::Auto(crate::args::AutoTag::Auto)) {
        Cutoff::Auto(_) => rep.eigenvalues.iter().map(|&(k, _)| k).collect(),
        Cutoff::Modes(n) => (1..=n).collect(),
    };
    let mut table = Table::new(None, &["k", "c1"]);
    for &k in &listed {
        table.push(vec![k.into(), c1(q, k, &p).into()]);
    }
    let mut out = Outcome::new(json!({
        "q": q,
        "params": p,
        "sign": sign,
        "sup_eigenvalue": rep.sup_value,
        "sup_attained_at": sup_location(rep.sup_attained_at),
        "tail": rep.tail,
        "truncation_modes": rep.modes(),
        "truncation_bound": rep.truncation_bound,
        "listed_modes": listed.len(),
        "stable": rep.sup_value < 0.0,
    }));
    out.tables.push(table);
    out.anchor(
        "c1",
        "twisted-state spectrum of the linearized continuum operator",
    );
    out.plot = Some(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'k'\nset ylabel 'c1'\nplot 'spectrum.csv' using 1:2 with points pt 7 ps 0.5\n"
            .into(),
    );
    Ok(out)
}

// ------------------------------------------------------------ thresholds

pub fn thresholds(a: ThresholdArgs) -> Result<Outcome> {
    let q = positive_q(a.q)?;
    let kind = a.kind.unwrap_or(ThresholdArg::Attractive);
    let mut out = Outcome::default();
    let mut results = serde_json::Map::new();
    results.insert("q".into(), json!(q));
    results.insert("kind".into(), json!(kind));
    match kind {
        ThresholdArg::Attractive => {
            results.insert(
                "r0".into(),
                json!(threshold(q, ThresholdKind::AttractiveR0)?),
            );
            out.anchor("r0", "attractive threshold radius of the q-twisted state");
        }
        ThresholdArg::Repulsive => {
            let (lo, hi) = repulsive_window(q)?;
            results.insert("r0".into(), json!(lo));
            results.insert("window".into(), json!([lo, hi]));
            out.anchor(
                "window",
                "repulsive stability window of the q-twisted state",
            );
        }
        ThresholdArg::RStar => {
            results.insert("r_star".into(), json!(threshold(q, ThresholdKind::RStar)?));
            out.anchor("r_star", "radius beyond which mode q leads the spectrum");
        }
    }
    if let Some(m) = a.m {
        let sign = match kind {
            ThresholdArg::Attractive => Sign::Attractive,
            ThresholdArg::Repulsive => Sign::Repulsive,
            ThresholdArg::RStar => {
                return Err(usage(
                    "--m applies to the attractive and repulsive thresholds only",
                ))
            }
        };
        results.insert("m".into(), json!(m));
        results.insert("finite_r0".into(), json!(finite_threshold(q, m, sign)?));
        out.anchor("finite_r0", "finite-ring threshold radius (dense Jacobian)");
    }
    out.results = Value::Object(results);
    Ok(out)
}

// ----------------------------------------------------------------- gamma

/// Critical point at a threshold anchor: `(base, sign, default ell)`.
fn anchored_base(q: u32, anchor: Anchor) -> Result<(Params, Sign, Option<i64>)> {
    Ok(match anchor {
        Anchor::AttractiveThreshold => (
            Params::pairwise(threshold(q, ThresholdKind::AttractiveR0)?)?,
            Sign::Attractive,
            Some(1),
        ),
        Anchor::RepulsiveThreshold => (
            Params::pairwise(threshold(q, ThresholdKind::RepulsiveR0)?)?,
            Sign::Repulsive,
            None,
        ),
        Anchor::Point => unreachable!("point anchors carry explicit parameters"),
    })
}

pub fn gamma(a: GammaArgs) -> Result<Outcome> {
    let q = positive_q(a.q)?;
    let family = a.family.unwrap_or(FamilyArg::RLinear);
    let anchor = a.at.unwrap_or(Anchor::Point);
    let curve = if family == FamilyArg::TFamily {
        if anchor != Anchor::Point || a.lambda.is_some() || a.mu.is_some() {
            return Err(usage(
                "the t-family fixes lambda and mu; give only --r and --t",
            ));
        }
        CurveSpec::t_family(q, need(a.r, "r")?, a.t.unwrap_or(0.0))?
    } else {
        if a.t.is_some() {
            return Err(usage("--t applies to the t-family only"));
        }
        let (base, sign, default_ell) = if anchor == Anchor::Point {
            let p = Params::new(
                need(a.r, "r")?,
                a.lambda.unwrap_or(0.0),
                a.mu.unwrap_or(0.0),
            )?;
            (p, Sign::Attractive, None)
        } else {
            if a.r.is_some() || a.lambda.is_some() || a.mu.is_some() {
                return Err(usage(
                    "--at a threshold conflicts with explicit --r/--lambda/--mu",
                ));
            }
            anchored_base(q, anchor)?
        };
        let ell = a.ell.or(default_ell);
        match family {
            FamilyArg::RLinear => CurveSpec::r_linear(q, base, ell, sign)?,
            FamilyArg::LambdaLinear => CurveSpec::lambda_linear(q, base, ell, sign)?,
            _ => {
                let d = need(a.direction.clone(), "direction")?;
                let dir: [f64; 3] = d
                    .try_into()
                    .map_err(|_| usage("--direction takes exactly three values dr,dlambda,dmu"))?;
                CurveSpec::new(CurveFamily::MixedLinear, base, dir, q, ell, sign)?
            }
        }
    };
    let rep = gamma_pair(&curve)?;
    let mut results = json!({
        "q": q,
        "family": family,
        "base": curve.base,
        "direction": curve.direction,
        "sign": curve.sign,
        "report": report_json(&rep),
    });
    let mut out = Outcome::default();
    out.anchor(
        "report.gamma1",
        "cubic coefficient of the reduced pitchfork equation",
    );
    out.anchor(
        "report.gamma2",
        "parameter-slope coefficient of the reduced pitchfork equation",
    );
    if family == FamilyArg::TFamily {
        let x = cap_x(q, curve.base.r())?;
        let g0 = gamma_pair(&CurveSpec::t_family(q, curve.base.r(), 0.0)?)?.gamma1;
        results["t"] = json!(curve.t);
        results["slope_x"] = json!(x);
        results["t_star"] = json!(-g0 / x);
        out.anchor("t_star", "type-switching point of the t-family");
    }
    if let Some(s0) = a.s0 {
        let amp = a_app(&rep, s0)?;
        results["s0"] = json!(s0);
        results["a_app"] = json!(amp);
        results["branch_eigenvalue"] = json!(branch_eigenvalue_prediction(&rep, amp));
        out.anchor("a_app", "leading-order branch amplitude");
    }
    out.results = results;
    Ok(out)
}

// ---------------------------------------------------------------- branch

fn pairwise_ring(m: usize, r: f64, sign: Sign) -> Result<RingSystem> {
    Ok(RingSystem::new(
        SystemSpec::pairwise(Params::pairwise(r)?, sign)?,
        build_weights(m, r)?,
    )?)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

fn newton_from(
    sys: &RingSystem,
    init: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<EquilibriumResult> {
    Ok(sys.newton(&PhaseVector::new(init)?, opts)?)
}

/// r at which mode `ell` of the lattice spectrum is critical, next to the
/// finite-ring threshold `near`.
fn lattice_critical_r(q: u32, ell: i64, m: usize, near: f64) -> Result<f64> {
    let f = |r: f64| {
        Coefficients::new(&build_weights(m, r).expect("valid radius"), 0.0, 0.0).c1(q as i64, ell)
    };
    let (lo, hi) = ((near - 1e-3).max(1e-6), (near + 1e-3).min(0.5));
    if f(lo).signum() == f(hi).signum() {
        return Err(TwistError::NoThreshold(format!(
            "lattice mode {ell} is not critical near r = {near}"
        ))
        .into());
    }
    Ok(bisect(f, lo, hi, 1e-14))
}

pub fn branch(a: BranchArgs) -> Result<Outcome> {
    let q = positive_q(a.q)?;
    let anchor = a.at.unwrap_or(Anchor::AttractiveThreshold);
    if anchor == Anchor::Point {
        return Err(usage(
            "branch needs a threshold anchor (attractive-threshold or repulsive-threshold)",
        ));
    }
    let (base, sign, default_ell) = anchored_base(q, anchor)?;
    let curve = CurveSpec::r_linear(q, base, a.ell.or(default_ell), sign)?;
    let m = a.m.unwrap_or(1000);
    if m < 4 {
        return Err(usage("ring size m must be at least 4"));
    }
    let s0 = need(a.s0, "s0")?;
    let rep = gamma_pair(&curve)?;
    let amp = a_app(&rep, s0)?;
    let z1 = branch_profile(&curve, amp, 1, m)?;
    let z2 = branch_profile(&curve, amp, 2, m)?;
    let mut table = Table::new(None, &["x", "psi_q", "z1", "z2"]);
    for ((x, v1), (_, v2)) in z1.sampled_values.iter().zip(&z2.sampled_values) {
        table.push(vec![
            (*x).into(),
            (2.0 * PI * q as f64 * x).into(),
            (*v1).into(),
            (*v2).into(),
        ]);
    }
    let mut out = Outcome::default();
    let mut results = json!({
        "q": q,
        "ell": curve.ell,
        "sign": sign,
        "base": curve.base,
        "s0": s0,
        "m": m,
        "report": report_json(&rep),
        "a_app": amp,
        "z2_coefficient": z2.z2_coefficient,
    });
    out.anchor("a_app", "leading-order branch amplitude");
    out.tables.push(table);

    if a.refine.unwrap_or(false) {
        let r = finite_threshold(q, m, sign)? + s0;
        let sys = pairwise_ring(m, r, sign)?;
        let eq = newton_from(&sys, z1.values(), &NewtonOptions::default())?;
        let (e1, e2) = (
            sup_diff(eq.theta.as_slice(), &z1.values()),
            sup_diff(eq.theta.as_slice(), &z2.values()),
        );
        results["refined"] = json!({
            "r": r,
            "residual_norm": eq.residual_norm,
            "iterations": eq.iterations,
            "error_z1": e1,
            "error_z2": e2,
            "leading_eigenvalues": eq.jacobian_leading_eigs,
            "deflated_eigenvalues": eq.deflated_eigs(),
        });
        out.anchor(
            "refined.error_z1",
            "first-order profile error of the refined equilibrium",
        );
        out.anchor(
            "refined.error_z2",
            "second-order profile error of the refined equilibrium",
        );
        let mut t = Table::new(Some("refined"), &["index", "x", "theta"]);
        for (i, v) in eq.theta.as_slice().iter().enumerate() {
            t.push(vec![i.into(), (i as f64 / m as f64).into(), (*v).into()]);
        }
        out.tables.push(t);
    }

    if let Some(ss) = a.scaling.clone().filter(|s| !s.is_empty()) {
        // The lattice kernel's own coefficients at its critical radius, so
        // the O(1/M) lattice offset does not mask the error orders.
        let near = finite_threshold(q, m, sign)?;
        let rc = lattice_critical_r(q, curve.ell, m, near)?;
        let lrep = finite_gamma_pair(
            q,
            curve.ell,
            Params::pairwise(rc)?,
            [1.0, 0.0, 0.0],
            sign,
            m,
        )?;
        let rows: Vec<Result<ScalingRow>> = ss
            .par_iter()
            .map(|&s| {
                let amp = a_app(&lrep, s)?;
                let p1 = profile_from_ratio(q, curve.ell, lrep.second_harmonic_ratio, amp, 1, m)?
                    .values();
                let p2 = profile_from_ratio(q, curve.ell, lrep.second_harmonic_ratio, amp, 2, m)?
                    .values();
                let eq = newton_from(
                    &pairwise_ring(m, rc + s, sign)?,
                    p2.clone(),
                    &NewtonOptions::default(),
                )?;
                Ok((
                    s,
                    amp,
                    sup_diff(eq.theta.as_slice(), &p1),
                    sup_diff(eq.theta.as_slice(), &p2),
                    eq.residual_norm,
                ))
            })
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(
            Some("scaling"),
            &["s", "a", "error_z1", "error_z2", "residual"],
        );
        for &(s, amp, e1, e2, res) in &rows {
            t.push(vec![s.into(), amp.into(), e1.into(), e2.into(), res.into()]);
        }
        out.tables.push(t);
        let abs_s: Vec<f64> = rows.iter().map(|r| r.0.abs()).collect();
        let slopes = if rows.len() >= 2 {
            json!({
                "z1": loglog_slope(&abs_s, &rows.iter().map(|r| r.2).collect::<Vec<_>>()),
                "z2": loglog_slope(&abs_s, &rows.iter().map(|r| r.3).collect::<Vec<_>>()),
            })
        } else {
            Value::Null
        };
        results["scaling"] = json!({
            "lattice_critical_r": rc,
            "lattice_report": report_json(&lrep),
            "slopes": slopes,
        });
        out.anchor(
            "scaling.slopes",
            "log-log error orders of the first- and second-order profiles",
        );
    }
    out.results = results;
    out.plot = Some(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x'\nplot 'branch.csv' using 1:($3-$2) with lines, '' using 1:($4-$2) with lines\n"
            .into(),
    );
    Ok(out)
}

// ------------------------------------------------------------------ ring

struct Ring {
    m: usize,
    q: u32,
    r: f64,
    sign: Sign,
    spec: SystemSpec,
    weights: CouplingWeights,
    warnings: Vec<String>,
    anchor: Anchor,
    s: f64,
}

impl Ring {
    fn system(&self) -> Result<RingSystem> {
        Ok(RingSystem::new(self.spec, self.weights.clone())?)
    }

    fn describe(&self) -> Value {
        json!({
            "m": self.m,
            "q": self.q,
            "r": self.r,
            "anchor": self.anchor,
            "s": self.s,
            "sign": self.sign,
            "params": self.spec.params(),
            "orders": self.spec.orders(),
            "integer_weights": self.weights.integer_only(),
            "weights_sha256": weights_hash(&self.weights),
        })
    }
}

fn weights_hash(w: &CouplingWeights) -> String {
    let mut h = Sha256::new();
    for b in w.as_slice() {
        h.update(b.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn resolve_ring(a: &RingArgs) -> Result<Ring> {
    let m = a.m.unwrap_or(1000);
    let q = a.q.unwrap_or(1);
    let anchor = a.at.unwrap_or(Anchor::Point);
    let lambda = a.lambda.unwrap_or(0.0);
    let mu = a.mu.unwrap_or(0.0);
    let anchor_sign = match anchor {
        Anchor::AttractiveThreshold => Some(Sign::Attractive),
        Anchor::RepulsiveThreshold => Some(Sign::Repulsive),
        Anchor::Point => None,
    };
    let flag_sign = a.sign.map(Sign::from);
    let sign = match (anchor_sign, flag_sign) {
        (Some(x), Some(y)) if x != y => {
            return Err(usage("--sign contradicts the threshold named by --at"))
        }
        (Some(x), _) | (None, Some(x)) => x,
        (None, None) => Sign::Attractive,
    };
    let s = a.s.unwrap_or(0.0);
    let r = match anchor {
        Anchor::Point => {
            if a.s.is_some() {
                return Err(usage("--s is an offset from a threshold; use it with --at"));
            }
            need(a.r, "r")?
        }
        _ => {
            if a.r.is_some() {
                return Err(usage("--at a threshold conflicts with an explicit --r"));
            }
            if q == 0 {
                return Err(usage("twist number q must be positive"));
            }
            finite_threshold(q, m, sign)? + s
        }
    };
    let p = Params::new(r, lambda, mu)?;
    let orders = match &a.orders {
        Some(list) => Orders {
            pairwise: list.contains(&OrderArg::Pairwise),
            triplet: list.contains(&OrderArg::Triplet),
            quadruplet: list.contains(&OrderArg::Quadruplet),
        },
        None => Orders {
            pairwise: true,
            triplet: lambda != 0.0,
            quadruplet: mu != 0.0,
        },
    };
    let spec = SystemSpec::new(p, sign, orders)?;
    let integer = a.integer_weights.unwrap_or(false);
    let weights = if integer {
        build_weights_integer(m, r)?
    } else {
        build_weights(m, r)?
    };
    let mut warnings = Vec::new();
    if integer {
        let frac = r * m as f64 - (r * m as f64).floor();
        warnings.push(format!(
            "integer weights drop a boundary weight of {frac}; results track the continuous model only when r M is close to an integer"
        ));
    }
    Ok(Ring {
        m,
        q,
        r,
        sign,
        spec,
        weights,
        warnings,
        anchor,
        s,
    })
}

/// Dominant Fourier mode `1..=M/2` of `theta` minus the twisted state and
/// its amplitude (`2 |c_k|`).
fn dominant_mode(theta: &[f64], q: u32) -> (usize, f64) {
    let m = theta.len();
    let diff: Vec<f64> = theta
        .iter()
        .enumerate()
        .map(|(i, v)| v - 2.0 * PI * q as f64 * i as f64 / m as f64)
        .collect();
    (1..=m / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, d) in diff.iter().enumerate() {
                let ph = 2.0 * PI * ((k * j) % m) as f64 / m as f64;
                re += d * ph.cos();
                im -= d * ph.sin();
            }
            (k, 2.0 * (re * re + im * im).sqrt() / m as f64)
        })
        .fold(
            (0, -1.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        )
}

fn state_table(suffix: Option<&'static str>, theta: &[f64]) -> Table {
    let m = theta.len();
    let mut t = Table::new(suffix, &["index", "x", "theta"]);
    for (i, v) in theta.iter().enumerate() {
        t.push(vec![i.into(), (i as f64 / m as f64).into(), (*v).into()]);
    }
    t
}

fn equilibrium_json(eq: &EquilibriumResult) -> Value {
    let deflated = eq.deflated_eigs();
    json!({
        "residual_norm": eq.residual_norm,
        "iterations": eq.iterations,
        "leading_eigenvalues": eq.jacobian_leading_eigs,
        "deflated_eigenvalues": deflated,
        "stable": deflated.first().is_some_and(|&v| v < 0.0),
    })
}

pub fn simulate(a: SimulateArgs, seed: u64) -> Result<Outcome> {
    let ring = resolve_ring(&a.ring)?;
    let sys = ring.system()?;
    let amplitude = a.amplitude.unwrap_or(0.01);
    let opts = IntegrateOptions {
        t_end: a.t_end.unwrap_or(1e3),
        tol: a.tol.unwrap_or(1e-9),
        sample_interval: a.sample_interval,
        ..Default::default()
    };
    let start = perturb(&twisted_state(ring.m, ring.q), amplitude, seed)?;
    let run = sys.integrate(&start, &opts)?;
    let mut final_theta = run.theta.clone();
    let mut out = Outcome::default();
    let mut results = json!({
        "ring": ring.describe(),
        "seed": seed,
        "amplitude": amplitude,
        "tolerances": { "tol": opts.tol, "equilibrium_tol": opts.equilibrium_tol, "t_end": opts.t_end },
        "stop": match run.stop { StopReason::Equilibrium => "equilibrium", StopReason::TimeLimit => "time_limit" },
        "t": run.t,
        "steps": run.steps,
        "rejected": run.rejected,
        "rhs_norm": run.rhs_norm,
        "warnings": ring.warnings,
    });
    if a.polish.unwrap_or(false) {
        if ring.m > DENSE_CAP {
            return Err(usage(format!(
                "--polish needs a dense Jacobian (M <= {DENSE_CAP})"
            )));
        }
        let eq = sys.newton(&run.theta, &NewtonOptions::default())?;
        results["polished"] = equilibrium_json(&eq);
        final_theta = eq.theta;
    }
    let (mode, amp) = dominant_mode(final_theta.as_slice(), ring.q);
    results["deviation"] = json!({ "dominant_mode": mode, "amplitude": amp });
    out.anchor(
        "deviation.amplitude",
        "amplitude of the equilibrium's deviation from the twisted state",
    );
    out.tables.push(state_table(None, final_theta.as_slice()));
    if !run.samples.is_empty() {
        let mut t = Table::new(Some("trajectory"), &["t", "index", "x", "theta"]);
        for (time, state) in &run.samples {
            for (i, v) in state.iter().enumerate() {
                t.push(vec![
                    (*time).into(),
                    i.into(),
                    (i as f64 / ring.m as f64).into(),
                    (*v).into(),
                ]);
            }
        }
        out.tables.push(t);
    }
    out.results = results;
    Ok(out)
}

pub fn equilibrium(a: EquilibriumArgs, seed: u64) -> Result<Outcome> {
    let ring = resolve_ring(&a.ring)?;
    let sys = ring.system()?;
    let init = match a.init.unwrap_or(InitArg::Twisted) {
        InitArg::Twisted => twisted_state(ring.m, ring.q),
        InitArg::Perturbed => perturb(
            &twisted_state(ring.m, ring.q),
            a.amplitude.unwrap_or(0.01),
            seed,
        )?,
        order @ (InitArg::Z1 | InitArg::Z2) => {
            if ring.anchor == Anchor::Point {
                return Err(usage(
                    "branch starts need --at a threshold and an offset --s",
                ));
            }
            let (base, sign, default_ell) = anchored_base(ring.q, ring.anchor)?;
            let curve = CurveSpec::r_linear(ring.q, base, a.ell.or(default_ell), sign)?;
            let amp = a_app(&gamma_pair(&curve)?, ring.s)?;
            let order = if order == InitArg::Z1 { 1 } else { 2 };
            PhaseVector::new(branch_profile(&curve, amp, order, ring.m)?.values())?
        }
    };
    let defaults = NewtonOptions::default();
    let opts = NewtonOptions {
        max_iter: a.max_iter.unwrap_or(defaults.max_iter),
        tol: a.tol.unwrap_or(defaults.tol),
        ..defaults
    };
    let eq = sys.newton(&init, &opts)?;
    let (mode, amp) = dominant_mode(eq.theta.as_slice(), ring.q);
    let mut out = Outcome::default();
    let mut results = equilibrium_json(&eq);
    results["ring"] = ring.describe();
    results["init"] = json!(a.init.unwrap_or(InitArg::Twisted));
    results["seed"] = json!(seed);
    results["warnings"] = json!(ring.warnings);
    results["deviation"] = json!({ "dominant_mode": mode, "amplitude": amp });
    out.results = results;
    out.tables.push(state_table(None, eq.theta.as_slice()));
    Ok(out)
}

// --------------------------------------------------------- stability map

fn parse_axis(spec: &str, flag: &str) -> Result<GridAxis> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("--{flag} must be start:stop:n (got {spec:?})"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    Ok(GridAxis::new(start, stop, n)?)
}

pub fn stability(a: StabilityMapArgs) -> Result<Outcome> {
    let q = positive_q(a.q)?;
    let r_axis = parse_axis(&need(a.r.clone(), "r")?, "r")?;
    let l_axis = parse_axis(&need(a.lambda.clone(), "lambda")?, "lambda")?;
    let map = stability_map(q, r_axis, l_axis)?;
    let mut grid = Table::new(None, &["r", "lambda", "max_eig", "leading_mode"]);
    for i in 0..r_axis.n {
        for j in 0..l_axis.n {
            grid.push(vec![
                r_axis.value(i).into(),
                l_axis.value(j).into(),
                map.max_eigenvalue[i][j].into(),
                map.leading_mode[i][j].into(),
            ]);
        }
    }
    let mut boundary = Table::new(
        Some("boundary"),
        &[
            "direction",
            "r",
            "lambda",
            "ell",
            "gamma1",
            "criticality",
            "lambda0",
            "flag",
        ],
    );
    let label = |v: Value| v.as_str().map(String::from);
    for (dir, points) in [("lambda", &map.column_crossings), ("r", &map.row_crossings)] {
        for p in points.iter() {
            let crit = p.criticality.and_then(|c| label(json!(c)));
            let flag = p.flag.and_then(|f| label(json!(f)));
            boundary.push(vec![
                dir.into(),
                p.r.into(),
                p.lambda.into(),
                p.ell.into(),
                p.gamma1.into(),
                crit.as_deref().into(),
                p.lambda0.into(),
                flag.as_deref().into(),
            ]);
        }
    }
    let mut out = Outcome::new(json!({
        "q": q,
        "r_axis": r_axis,
        "lambda_axis": l_axis,
        "column_crossings": map.column_crossings,
        "row_crossings": map.row_crossings,
    }));
    out.anchor(
        "column_crossings",
        "zero contour of the maximal eigenvalue against lambda0(q, r)",
    );
    out.tables.push(grid);
    out.tables.push(boundary);
    out.plot = Some(format!(
        "set datafile separator ','\nset view map\nset xlabel 'r'\nset ylabel 'lambda'\nset dgrid3d {} , {}\nsplot 'stability-map.csv' using 1:2:3 with pm3d notitle, \\\n  'stability-map-boundary.csv' using 2:3:(0) with points pt 7 ps 0.4 notitle\n",
        l_axis.n, r_axis.n
    ));
    Ok(out)
}

// ------------------------------------------------------------------ iota

pub fn iota_table(a: IotaArgs) -> Result<Outcome> {
    let from = need(a.from, "from")?;
    let to = need(a.to, "to")?;
    let steps = a.steps.unwrap_or(100);
    if steps == 0 || !(to > from) || !from.is_finite() || !to.is_finite() {
        return Err(usage("iota needs finite --from < --to and --steps >= 1"));
    }
    let v0 = upsilon0();
    let mut table = Table::new(None, &["upsilon", "iota"]);
    let mut singular = Vec::new();
    let mut all_positive = true;
    for i in 0..=steps {
        let v = from + (to - from) * i as f64 / steps as f64;
        match iota(v) {
            Ok(x) => {
                if v >= v0 && x <= 0.0 {
                    all_positive = false;
                }
                table.push(vec![v.into(), x.into()]);
            }
            Err(TwistError::SingularPoint(_)) | Err(TwistError::InvalidArgument(_)) => {
                singular.push(v);
                table.push(vec![v.into(), Cell::Empty]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut out = Outcome::new(json!({
        "upsilon0": v0,
        "points": steps + 1,
        "positive_beyond_upsilon0": all_positive,
        "undefined_at": singular,
    }));
    out.anchor(
        "positive_beyond_upsilon0",
        "positivity of the slope function past upsilon0",
    );
    out.tables.push(table);
    out.plot = Some(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'upsilon'\nplot 'iota.csv' using 1:2 with lines, x with lines dt 2 title 'identity'\n"
            .into(),
    );
    Ok(out)
}
