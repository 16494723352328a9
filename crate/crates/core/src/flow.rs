//! Trajectories, back-to-label maps and semi-Lagrangian transport.
//!
//! Trajectories use the Dormand–Prince 5(4) pair with per-step error
//! `‖e‖∞ ≤ tol·(10⁻¹² + ‖x‖∞)` and cubic Hermite dense output. The back-to-label
//! map `φ⁻¹(x, t)` integrates the time-reversed field `s ↦ −u(t − s, ·)`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::fields::GridField;
use crate::modulus::{Modulus, PropagationContext};
use crate::table::Table;

/// `(t, x, out)` writes `u(t, x)` into `out`.
pub type Evaluator = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

// Absolute part of the error scale, relative to `tol`. Trajectories that
// start near a stagnation point need relative control: an absolute error of
// `tol` at `|x| ≪ tol` is amplified by non-Lipschitz fields.
const ABS_FLOOR: f64 = 1e-12;

/// Smallest admissible step before the integrator gives up.
pub const MIN_STEP: f64 = 1e-14;
const MAX_STEPS: usize = 1_000_000;

#[derive(Clone)]
pub struct VelocityField {
    dim: usize,
    eval: Evaluator,
    /// Declared modulus and seminorm bound `[u]_φ`, when known.
    pub modulus: Option<Modulus>,
    pub seminorm_bound: Option<f64>,
}

impl std::fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VelocityField")
            .field("dim", &self.dim)
            .field("modulus", &self.modulus)
            .field("seminorm_bound", &self.seminorm_bound)
            .finish()
    }
}

impl VelocityField {
    pub fn new(dim: usize, eval: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { dim, eval: Arc::new(eval), modulus: None, seminorm_bound: None }
    }

    pub fn with_modulus(mut self, modulus: Modulus, bound: f64) -> Self {
        self.modulus = Some(modulus);
        self.seminorm_bound = Some(bound);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.eval)(t, x, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.eval)(t, x, out)
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, _, out| out.iter_mut().for_each(|o| *o = 0.0))
    }

    /// Rigid rotation `(−(y − c), x − c)` about `(c, c)`.
    pub fn rotation(center: f64) -> Self {
        Self::new(2, move |_, x, out| {
            out[0] = -(x[1] - center);
            out[1] = x[0] - center;
        })
    }

    /// Steady shear `(a sin(2πy/L), 0)`; Lipschitz with constant `2πa/L`.
    pub fn shear(amplitude: f64, side: f64) -> Self {
        let k = 2.0 * std::f64::consts::PI / side;
        Self::new(2, move |_, x, out| {
            out[0] = amplitude * (k * x[1]).sin();
            out[1] = 0.0;
        })
        .with_modulus(Modulus::lipschitz(), amplitude * k)
    }

    /// One-dimensional `u(x) = a x`.
    pub fn linear_1d(a: f64) -> Self {
        Self::new(1, move |_, x, out| out[0] = a * x[0]).with_modulus(Modulus::lipschitz(), a.abs())
    }

    /// One-dimensional `u(x) = c φ(min(x, m))` for `x > 0`, zero for
    /// `x ≤ 0`. For concave `φ` with `φ'(m) ≥ 0` this is subadditive, so
    /// `[u]_φ ≤ c` on separations up to `m`.
    pub fn osgood_1d(modulus: Modulus, c: f64) -> Self {
        let m = modulus.cutoff();
        let phi = modulus.clone();
        Self::new(1, move |_, x, out| {
            out[0] = if x[0] > 0.0 { c * phi.value(x[0].min(m)) } else { 0.0 };
        })
        .with_modulus(modulus, c.abs())
    }

    /// `s ↦ −u(t − s, ·)`
    pub fn time_reversed(&self, t: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            dim: self.dim,
            eval: Arc::new(move |s, x, out| {
                inner(t - s, x, out);
                out.iter_mut().for_each(|o| *o = -*o);
            }),
            modulus: self.modulus.clone(),
            seminorm_bound: self.seminorm_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// Velocity at each stored point (for Hermite dense output).
    pub velocities: Vec<Vec<f64>>,
    /// Local error estimate `‖e‖∞` of the step ending at each point.
    pub errors: Vec<f64>,
}

impl FlowTrace {
    pub fn final_position(&self) -> &[f64] {
        self.positions.last().expect("trace holds the initial point")
    }

    /// Sum of local error estimates, a heuristic bound on the global error.
    pub fn accumulated_error(&self) -> f64 {
        self.errors.iter().sum()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Cubic Hermite interpolation of the trajectory at time `t`.
    pub fn at(&self, t: f64) -> Result<Vec<f64>> {
        let (t0, t1) = (self.times[0], *self.times.last().expect("non-empty"));
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        if !(t >= lo && t <= hi) {
            return Err(Error::Domain(format!("t = {t} outside the trace [{lo}, {hi}]")));
        }
        let k = self
            .times
            .windows(2)
            .position(|w| (w[0] <= t && t <= w[1]) || (w[1] <= t && t <= w[0]))
            .unwrap_or(0);
        if self.times.len() == 1 {
            return Ok(self.positions[0].clone());
        }
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        let h = tb - ta;
        let s = (t - ta) / h;
        let (h00, h10) = (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s);
        let (h01, h11) = (-2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        Ok((0..self.positions[k].len())
            .map(|i| {
                h00 * self.positions[k][i]
                    + h10 * h * self.velocities[k][i]
                    + h01 * self.positions[k + 1][i]
                    + h11 * h * self.velocities[k + 1][i]
            })
            .collect())
    }

    pub fn table(&self) -> Table {
        let d = self.positions.first().map_or(0, |p| p.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.push("err".into());
        let mut t = Table::new(&header);
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k]];
            row.extend(&self.positions[k]);
            row.push(self.errors[k]);
            t.push(row);
        }
        t
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Adaptive DP45 solution of `x' = f(t, x)` from `t0` to `t1` (either
/// direction).
pub fn integrate_ode(
    f: &(dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync),
    x0: &[f64],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<FlowTrace> {
    if !(tol > 0.0) || !t0.is_finite() || !t1.is_finite() {
        return parameter(format!("integration needs tol > 0 and finite times (tol = {tol})"));
    }
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; d]; 7];
    f(t0, &x, &mut k[0]);
    let mut trace = FlowTrace {
        times: vec![t0],
        positions: vec![x.clone()],
        velocities: vec![k[0].clone()],
        errors: vec![0.0],
    };
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(trace);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut h = dir * (span.abs() * 1e-2).min(tol.powf(0.2) * 0.1).max(MIN_STEP * 10.0);
    let mut stage = vec![0.0; d];
    let mut x_new = vec![0.0; d];
    for _ in 0..MAX_STEPS {
        if (t1 - t) * dir <= 0.0 {
            return Ok(trace);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        for s in 1..7 {
            for i in 0..d {
                stage[i] = x[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            f(t + C[s] * h, &stage, &mut k[s]);
        }
        // stage 7 sits at the fifth-order solution (FSAL)
        x_new.copy_from_slice(&stage);
        let mut err: f64 = 0.0;
        let mut size: f64 = 0.0;
        for i in 0..d {
            let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            err = err.max(e.abs());
            size = size.max(x[i].abs()).max(x_new[i].abs());
        }
        let mut scaled = err / (tol * (ABS_FLOOR + size));
        if !scaled.is_finite() {
            scaled = f64::INFINITY;
        }
        if scaled <= 1.0 {
            t = if (t + h - t1) * dir >= 0.0 { t1 } else { t + h };
            x.copy_from_slice(&x_new);
            k.swap(0, 6);
            trace.times.push(t);
            trace.positions.push(x.clone());
            trace.velocities.push(k[0].clone());
            trace.errors.push(err);
        }
        let factor = if scaled == 0.0 { 5.0 } else { (0.9 * scaled.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < MIN_STEP {
            return Err(Error::StepUnderflow { t, h: h.abs() });
        }
    }
    Err(Error::StepUnderflow { t, h: h.abs() })
}

/// Forward trajectory `φ(x0, ·)` on `[0, t1]`.
pub fn integrate_flow(u: &VelocityField, x0: &[f64], t1: f64, tol: f64) -> Result<FlowTrace> {
    check_dim(u, x0)?;
    if !(t1 >= 0.0) {
        return parameter(format!("final time must be ≥ 0, got {t1}"));
    }
    integrate_ode(&*u.eval, x0, 0.0, t1, tol)
}

fn check_dim(u: &VelocityField, x: &[f64]) -> Result<()> {
    if x.len() != u.dim {
        return parameter(format!("point has dimension {}, field has {}", x.len(), u.dim));
    }
    Ok(())
}

/// `φ⁻¹(x, t)`: integrates `s ↦ −u(t − s, ·)` from `x` over `[0, t]`.
pub fn back_to_label(u: &VelocityField, x: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    check_dim(u, x)?;
    if !(t >= 0.0) {
        return parameter(format!("time must be ≥ 0, got {t}"));
    }
    let rev = u.time_reversed(t);
    Ok(integrate_ode(&*rev.eval, x, 0.0, t, tol)?.final_position().to_vec())
}

/// Back-to-label images of two points integrated as one system, so both
/// share a step sequence and their difference is resolved consistently.
pub fn back_to_label_pair(u: &VelocityField, x: &[f64], y: &[f64], t: f64, tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(u, x)?;
    check_dim(u, y)?;
    let d = u.dim;
    let inner = u.eval.clone();
    let joint = move |s: f64, z: &[f64], out: &mut [f64]| {
        let (a, b) = out.split_at_mut(d);
        inner(t - s, &z[..d], a);
        inner(t - s, &z[d..], b);
        out.iter_mut().for_each(|o| *o = -*o);
    };
    let z0: Vec<f64> = x.iter().chain(y).copied().collect();
    let end = integrate_ode(&joint, &z0, 0.0, t, tol)?;
    let z = end.final_position();
    Ok((z[..d].to_vec(), z[d..].to_vec()))
}

/// `θ(x, t) = θ₀(φ⁻¹(x, t))` on the grid of `theta0`. Band-limited data is
/// evaluated spectrally; otherwise by bicubic interpolation clamped to the
/// range of the surrounding 4×4 nodes.
pub fn transport_solve(u: &VelocityField, theta0: &GridField, t: f64, tol: f64) -> Result<GridField> {
    if u.dim != 2 {
        return parameter("transport on grids needs a 2D velocity field");
    }
    if t == 0.0 {
        return Ok(theta0.clone());
    }
    let interp = theta0.interpolator(4096);
    let n = theta0.n();
    let clamp = !interp.is_spectral();
    let values = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let p = theta0.position(idx);
            let label = back_to_label(u, &p, t, tol)?;
            if label[..] == p[..] {
                return Ok(theta0.values()[idx]);
            }
            let mut v = interp.eval([label[0], label[1]]);
            if clamp {
                let (lo, hi) = local_range(theta0, [label[0], label[1]]);
                v = v.clamp(lo, hi);
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;
    GridField::new(n, theta0.side(), values)
}

fn local_range(f: &GridField, x: [f64; 2]) -> (f64, f64) {
    let n = f.n() as i64;
    let g = |v: f64| (v / f.side() * n as f64).floor() as i64;
    let (ix, iy) = (g(x[0]), g(x[1]));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in ix - 1..=ix + 2 {
        for b in iy - 1..=iy + 2 {
            let v = f.values()[(a.rem_euclid(n) * n + b.rem_euclid(n)) as usize];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Axis-aligned sampling region for audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SamplingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return parameter("sampling box needs lo < hi componentwise");
        }
        Ok(Self { lo, hi })
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }
}

/// Smallest separation sampled by the dyadic strata.
pub const MIN_SEPARATION: f64 = 1e-8;

/// Point pairs with separations stratified over dyadic scales in
/// `[MIN_SEPARATION, r_max]`. Each pair is `(x, y, |x − y|)`.
pub fn stratified_pairs<R: Rng>(bx: &SamplingBox, r_max: f64, count: usize, rng: &mut R) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let r_max = r_max.min(bx.diameter());
    let strata = ((r_max / MIN_SEPARATION).log2().ceil().max(1.0)) as usize;
    let d = bx.lo.len();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 50 * count.max(1) {
        attempts += 1;
        let k = out.len() % strata;
        // log-uniform inside stratum k
        let top = r_max * 0.5f64.powi(k as i32);
        let r = (top * 0.5f64.powf(rng.gen::<f64>())).max(MIN_SEPARATION);
        let x: Vec<f64> = (0..d).map(|i| rng.gen_range(bx.lo[i]..bx.hi[i])).collect();
        let mut dirv: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = dirv.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        dirv.iter_mut().for_each(|v| *v /= norm);
        let y: Vec<f64> = x.iter().zip(&dirv).map(|(a, b)| a + r * b).collect();
        if !bx.contains(&y) {
            continue;
        }
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        out.push((x, y, dist));
    }
    out
}

/// `max |u(x,t) − u(y,t)| / φ(|x − y|)` over stratified pairs with
/// `|x − y| ≤ m`; a lower bound for `[u(t)]_φ`.
pub fn empirical_seminorm<R: Rng>(
    u: &VelocityField,
    phi: &Modulus,
    t: f64,
    bx: &SamplingBox,
    pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    if pairs == 0 {
        return parameter("need at least one pair");
    }
    if bx.lo.len() != u.dim {
        return parameter("sampling box dimension does not match the field");
    }
    let mut worst: f64 = 0.0;
    for (x, y, r) in stratified_pairs(bx, phi.cutoff(), pairs, rng) {
        let (ux, uy) = (u.eval(t, &x), u.eval(t, &y));
        let du = ux.iter().zip(&uy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(du / phi.value(r));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub pairs: usize,
    /// Pairs whose separation lies outside the range of `μ_J`.
    pub skipped: usize,
    /// `max (LHS − RHS)/RHS`; negative when the bound holds strictly.
    pub max_violation: f64,
    pub violations: usize,
    pub pass: bool,
    pub declared_j: f64,
    /// `t · empirical seminorm at t` for the record (a lower bound).
    pub empirical_j: f64,
}

/// Audits `|φ⁻¹(x,t) − φ⁻¹(y,t)| ≤ μ_J(|x − y|)` on stratified pairs.
#[allow(clippy::too_many_arguments)]
pub fn separation_audit<R: Rng>(
    u: &VelocityField,
    phi: &Modulus,
    j: f64,
    t: f64,
    bx: &SamplingBox,
    pairs: usize,
    tol: f64,
    rng: &mut R,
) -> Result<SeparationReport> {
    let ctx = PropagationContext::new(j)?;
    if bx.lo.len() != u.dim {
        return parameter("sampling box dimension does not match the field");
    }
    // separations with M(r) ≥ J keep μ_J(r) inside (0, m]
    let r_cap = if j == 0.0 { phi.cutoff() } else { phi.r_inverse((-j).exp()).unwrap_or(phi.cutoff()) };
    let sample = stratified_pairs(bx, r_cap.min(phi.cutoff()), pairs, rng);
    let empirical_j = t * empirical_seminorm(u, phi, t, bx, pairs.max(1), rng)?;
    let mut report = SeparationReport {
        pairs: sample.len(),
        skipped: 0,
        max_violation: f64::NEG_INFINITY,
        violations: 0,
        pass: true,
        declared_j: j,
        empirical_j,
    };
    let results: Vec<Result<Option<(f64, f64)>>> = sample
        .par_iter()
        .map(|(x, y, r)| {
            let rhs = match phi.propagated(ctx, *r) {
                Ok(v) => v,
                Err(Error::Range(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let (a, b) = back_to_label_pair(u, x, y, t, tol)?;
            let lhs = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            Ok(Some((lhs, rhs)))
        })
        .collect();
    for res in results {
        match res? {
            None => report.skipped += 1,
            Some((lhs, rhs)) => {
                report.max_violation = report.max_violation.max((lhs - rhs) / rhs);
                if lhs > rhs * (1.0 + 10.0 * tol) {
                    report.violations += 1;
                }
            }
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}

/// Worst `|det Dφ⁻¹ − 1|` over an `m × m` grid of points in `[lo, hi]²`,
/// with the Jacobian from central differences of step `h`.
pub fn volume_audit(u: &VelocityField, t: f64, lo: f64, hi: f64, m: usize, h: f64, tol: f64) -> Result<f64> {
    if u.dim != 2 || m == 0 {
        return parameter("volume audit needs a 2D field and m ≥ 1");
    }
    let pts: Vec<[f64; 2]> = (0..m * m)
        .map(|i| {
            let s = |k: usize| lo + (hi - lo) * (k as f64 + 0.5) / m as f64;
            [s(i / m), s(i % m)]
        })
        .collect();
    let dets = pts
        .par_iter()
        .map(|p| {
            let mut jac = [[0.0; 2]; 2];
            for col in 0..2 {
                let (mut a, mut b) = (p.to_vec(), p.to_vec());
                a[col] += h;
                b[col] -= h;
                let (fa, fb) = back_to_label_pair(u, &a, &b, t, tol)?;
                for row in 0..2 {
                    jac[row][col] = (fa[row] - fb[row]) / (2.0 * h);
                }
            }
            Ok((jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0] - 1.0).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(dets.into_iter().fold(0.0, f64::max))
}
