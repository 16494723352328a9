//! Moduli of continuity and the Osgood calculus built on them.
//!
//! For a modulus `φ` on `(0, m)` we work with
//!
//! * `M(z) = ∫_z^m dr/φ(r)` (the Osgood integral),
//! * `R(z) = exp(−M(z))` and its inverse,
//! * the propagated modulus `μ_J(r) = R⁻¹(e^J R(r))`, which bounds the
//!   separation of back-to-label trajectories when `J = ∫₀ᵗ [u(s)]_φ ds`.
//!
//! All integrals are taken in the variable `s = ln(1/r)`, in which every
//! integrand of the catalog is smooth, with panels growing geometrically
//! toward `r → 0`. For non-Osgood kinds `M` is assembled from the convergent
//! tail `∫_0^z dr/φ` so that small `z` keeps full relative accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{domain, parameter, Error, Result};
use crate::growth::{exp_iter, log_iter, GrowthFunction};
use crate::quad::{integrate_breaks, integrate_semi_infinite, Tolerance};

/// Largest `s = ln(1/r)` with `r` a positive double.
const S_MAX: f64 = 744.0;
/// Tolerance of the user-facing Osgood integral.
pub const OSGOOD_TOL: Tolerance = Tolerance::new(1e-12, 1e-10);
// Increments inside the root finder are tiny; they get a tighter target so
// that accumulated error stays far below the bracket width.
const INNER_TOL: Tolerance = Tolerance::new(1e-15, 1e-13);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModulusKind {
    /// `φ(z) = z`
    Lipschitz,
    /// `φ(z) = z log(1/z)`
    LogLipschitz,
    /// `φ(z) = z log(1/z) log₂(1/z) ⋯ log_n(1/z)`, `1 ≤ n ≤ 3`
    LogNLipschitz { n: u32 },
    /// `φ(z) = (1 − α) z^α`, `α ∈ (0, 1)`; not Osgood.
    Power { alpha: f64 },
    /// `φ_Θ(r) = r log(e/r) Θ(log(e/r))` below `e⁻²`, constant above.
    Associated { theta: GrowthFunction },
    /// Piecewise-linear table `[[r, φ(r)], ...]`, linear to zero below the
    /// first node.
    Custom { table: Vec<[f64; 2]>, cutoff: f64, osgood: bool },
}

/// A modulus of continuity with its upper cutoff `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModulusKind", into = "ModulusKind")]
pub struct Modulus {
    kind: ModulusKind,
    cutoff: f64,
}

impl TryFrom<ModulusKind> for Modulus {
    type Error = Error;
    fn try_from(kind: ModulusKind) -> Result<Self> {
        Modulus::new(kind)
    }
}

impl From<Modulus> for ModulusKind {
    fn from(m: Modulus) -> Self {
        m.kind
    }
}

impl Modulus {
    pub fn new(kind: ModulusKind) -> Result<Self> {
        let cutoff = match &kind {
            ModulusKind::Lipschitz => 1.0,
            ModulusKind::LogLipschitz => (-1.0f64).exp(),
            ModulusKind::LogNLipschitz { n } => {
                if !(1..=3).contains(n) {
                    return parameter(format!("log_n modulus needs 1 ≤ n ≤ 3, got {n}"));
                }
                1.0 / exp_iter(*n, 1.0)?
            }
            ModulusKind::Power { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return parameter(format!("power modulus needs α ∈ (0,1), got {alpha}"));
                }
                1.0
            }
            ModulusKind::Associated { .. } => (-2.0f64).exp(),
            ModulusKind::Custom { table, cutoff, .. } => {
                if table.len() < 2 || !(*cutoff > 0.0) {
                    return parameter("custom modulus needs ≥ 2 table rows and a positive cutoff");
                }
                for w in table.windows(2) {
                    if !(w[1][0] > w[0][0]) || !(w[1][1] >= w[0][1]) || !(w[0][1] > 0.0) || !(w[0][0] > 0.0) {
                        return parameter("custom modulus table must be positive and increasing");
                    }
                }
                *cutoff
            }
        };
        Ok(Self { kind, cutoff })
    }

    pub fn lipschitz() -> Self {
        Self::new(ModulusKind::Lipschitz).expect("valid")
    }

    pub fn log_lipschitz() -> Self {
        Self::new(ModulusKind::LogLipschitz).expect("valid")
    }

    pub fn log_n(n: u32) -> Result<Self> {
        Self::new(ModulusKind::LogNLipschitz { n })
    }

    pub fn power(alpha: f64) -> Result<Self> {
        Self::new(ModulusKind::Power { alpha })
    }

    pub fn associated(theta: GrowthFunction) -> Self {
        Self::new(ModulusKind::Associated { theta }).expect("valid")
    }

    pub fn kind(&self) -> &ModulusKind {
        &self.kind
    }

    /// Upper cutoff `m` of the Osgood integral.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Stored Osgood flag (`∫₀ dr/φ = ∞`). Not inferred numerically.
    pub fn is_osgood(&self) -> bool {
        match &self.kind {
            ModulusKind::Power { .. } => false,
            ModulusKind::Custom { osgood, .. } => *osgood,
            _ => true,
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            ModulusKind::Lipschitz => "lipschitz".into(),
            ModulusKind::LogLipschitz => "log_lipschitz".into(),
            ModulusKind::LogNLipschitz { n } => format!("log_{n}_lipschitz"),
            ModulusKind::Power { alpha } => format!("power_{alpha}"),
            ModulusKind::Associated { .. } => "associated".into(),
            ModulusKind::Custom { .. } => "custom".into(),
        }
    }

    /// φ(r) for `0 < r ≤ m`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= self.cutoff) {
            return domain(format!("modulus evaluated at r = {r} outside (0, {}]", self.cutoff));
        }
        Ok(self.value(r))
    }

    /// φ(r) without the domain check; formulas are used as written.
    pub fn value(&self, r: f64) -> f64 {
        match &self.kind {
            ModulusKind::Lipschitz => r,
            ModulusKind::LogLipschitz => r * (1.0 / r).ln(),
            ModulusKind::LogNLipschitz { n } => {
                let inv = 1.0 / r;
                (1..=*n).fold(r, |acc, j| acc * log_iter(j, inv).unwrap_or(f64::NAN))
            }
            ModulusKind::Power { alpha } => (1.0 - alpha) * r.powf(*alpha),
            ModulusKind::Associated { theta } => associated_modulus(theta, r),
            ModulusKind::Custom { table, .. } => {
                if r <= table[0][0] {
                    return table[0][1] * r / table[0][0];
                }
                let idx = table.partition_point(|p| p[0] <= r).clamp(1, table.len() - 1);
                let (a, b) = (table[idx - 1], table[idx]);
                a[1] + (b[1] - a[1]) * (r - a[0]) / (b[0] - a[0])
            }
        }
    }

    /// `e^{−s} / φ(e^{−s})`, the Osgood integrand in `s = ln(1/r)`.
    fn integrand(&self, s: f64) -> f64 {
        match &self.kind {
            ModulusKind::Lipschitz => 1.0,
            ModulusKind::LogLipschitz => 1.0 / s,
            ModulusKind::LogNLipschitz { n } => {
                (0..*n).fold(1.0, |acc, j| acc / log_iter(j, s).unwrap_or(f64::NAN))
            }
            ModulusKind::Power { alpha } => (-(1.0 - alpha) * s).exp() / (1.0 - alpha),
            ModulusKind::Associated { theta } => {
                if s > 2.0 {
                    1.0 / ((1.0 + s) * theta.value(1.0 + s))
                } else {
                    (-s).exp() / ((-2.0f64).exp() * 3.0 * theta.value(3.0))
                }
            }
            ModulusKind::Custom { .. } => {
                let r = (-s).exp();
                r / self.value(r)
            }
        }
    }

    fn s_cutoff(&self) -> f64 {
        -self.cutoff.ln()
    }

    fn check_z(&self, z: f64) -> Result<f64> {
        if !(z > 0.0 && z <= self.cutoff) {
            return domain(format!("z = {z} outside (0, {}]", self.cutoff));
        }
        Ok(-z.ln())
    }

    /// `∫_{s0}^{s1}` of the integrand with geometric panels from `s0`.
    fn integral_s(&self, s0: f64, s1: f64, tol: Tolerance) -> Result<f64> {
        if s1 <= s0 {
            return Ok(0.0);
        }
        let mut breaks = vec![s0];
        let mut w = 1.0;
        while s0 + w < s1 {
            breaks.push(s0 + w);
            w *= 2.0;
        }
        breaks.push(s1);
        Ok(integrate_breaks(|s| self.integrand(s), &breaks, tol)?.value)
    }

    /// `∫_s^∞` of the integrand; finite only for non-Osgood kinds.
    fn tail_s(&self, s: f64, tol: Tolerance) -> Result<f64> {
        Ok(integrate_semi_infinite(|t| self.integrand(t), s, tol)?.value)
    }

    /// `M(z) = ∫_z^m dr/φ(r)` for `0 < z ≤ m`.
    pub fn osgood_m(&self, z: f64) -> Result<f64> {
        let s = self.check_z(z)?;
        if self.is_osgood() {
            self.integral_s(self.s_cutoff(), s, OSGOOD_TOL)
        } else {
            let total = self.tail_s(self.s_cutoff(), INNER_TOL)?;
            Ok(total - self.tail_s(s, INNER_TOL)?)
        }
    }

    /// `R(z) = exp(−M(z))`.
    pub fn r_of(&self, z: f64) -> Result<f64> {
        Ok((-self.osgood_m(z)?).exp())
    }

    /// Value of `R` as `z → 0⁺` (zero for Osgood kinds).
    pub fn r_at_zero(&self) -> Result<f64> {
        if self.is_osgood() {
            Ok(0.0)
        } else {
            Ok((-self.tail_s(self.s_cutoff(), INNER_TOL)?).exp())
        }
    }

    /// Solves `R(z) = y` for `y ∈ (R(0⁺), 1]`.
    pub fn r_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Bracket(format!("R⁻¹({y}) outside (0, 1]")));
        }
        self.solve_m(-y.ln())
    }

    /// `z` with `M(z) = target`, found by bisection in `s = ln(1/z)`.
    fn solve_m(&self, target: f64) -> Result<f64> {
        let s_m = self.s_cutoff();
        if target <= 0.0 {
            return Ok(self.cutoff);
        }
        let s = if self.is_osgood() {
            // scan outward with incremental integrals, then bisect
            let (mut lo, mut m_lo) = (s_m, 0.0);
            let mut w = 1.0;
            let hi = loop {
                let next = (lo + w).min(S_MAX);
                let inc = self.integral_s(lo, next, INNER_TOL)?;
                if m_lo + inc >= target {
                    break next;
                }
                if next >= S_MAX {
                    return Err(Error::Bracket(format!("M never reaches {target} above r = e^-{S_MAX}")));
                }
                lo = next;
                m_lo += inc;
                w *= 2.0;
            };
            let mut hi = hi;
            while hi - lo > 1e-13 * lo.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let inc = self.integral_s(lo, mid, INNER_TOL)?;
                if m_lo + inc < target {
                    lo = mid;
                    m_lo += inc;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        } else {
            let total = self.tail_s(s_m, INNER_TOL)?;
            let tail_target = total - target;
            if !(tail_target > 0.0) {
                return Err(Error::Bracket(format!(
                    "target M = {target} is beyond M(0⁺) = {total}"
                )));
            }
            let f = |s: f64| self.tail_s(s, INNER_TOL).map(|t| t - tail_target).unwrap_or(f64::NAN);
            let (lo, hi) = crate::roots::scan_bracket(f, s_m, 1.0, S_MAX)?;
            crate::roots::bisect(f, lo, hi, 1e-13 * lo.max(1.0))?
        };
        Ok((-s).exp())
    }

    /// `μ_J(r) = R⁻¹(e^J R(r))`; the identity at `J = 0`.
    pub fn propagated(&self, ctx: PropagationContext, r: f64) -> Result<f64> {
        let j = ctx.j();
        let s = self.check_z(r)?;
        if j == 0.0 {
            return Ok(r);
        }
        let m_r = if self.is_osgood() {
            self.integral_s(self.s_cutoff(), s, INNER_TOL)?
        } else {
            self.osgood_m(r)?
        };
        let target = m_r - j;
        if target < 0.0 {
            return Err(Error::Range(format!(
                "e^J R(r) exceeds R(m⁻) = 1 (J = {j}, M(r) = {m_r})"
            )));
        }
        self.solve_m(target)
    }

    /// Closed forms of `M`, `R`, `R⁻¹`, `μ_J` where known.
    pub fn closed_form(&self) -> Option<ClosedForm> {
        match &self.kind {
            ModulusKind::Lipschitz => Some(ClosedForm::Lipschitz),
            ModulusKind::LogLipschitz => Some(ClosedForm::IteratedLog(1)),
            ModulusKind::LogNLipschitz { n } => Some(ClosedForm::IteratedLog(*n)),
            ModulusKind::Power { alpha } => Some(ClosedForm::Power(*alpha)),
            _ => None,
        }
    }
}

/// Accumulated seminorm `J = ∫₀ᵗ [u(s)]_φ ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationContext {
    j: f64,
}

impl PropagationContext {
    pub fn new(j: f64) -> Result<Self> {
        if !(j >= 0.0) || !j.is_finite() {
            return parameter(format!("accumulated seminorm must be finite and ≥ 0, got {j}"));
        }
        Ok(Self { j })
    }

    pub fn j(&self) -> f64 {
        self.j
    }
}

/// Explicit catalog for `φ ∈ {z, z log(1/z)⋯log_n(1/z), (1−α)z^α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    Lipschitz,
    IteratedLog(u32),
    Power(f64),
}

impl ClosedForm {
    pub fn m(&self, z: f64) -> f64 {
        match *self {
            ClosedForm::Lipschitz => (1.0 / z).ln(),
            ClosedForm::IteratedLog(n) => log_iter(n, (1.0 / z).ln()).unwrap_or(f64::NAN),
            ClosedForm::Power(a) => (1.0 - z.powf(1.0 - a)) / ((1.0 - a) * (1.0 - a)),
        }
    }

    pub fn r(&self, z: f64) -> f64 {
        match *self {
            ClosedForm::Lipschitz => z,
            ClosedForm::IteratedLog(n) => 1.0 / log_iter(n, 1.0 / z).unwrap_or(f64::NAN),
            ClosedForm::Power(_) => (-self.m(z)).exp(),
        }
    }

    pub fn r_inverse(&self, y: f64) -> f64 {
        match *self {
            ClosedForm::Lipschitz => y,
            ClosedForm::IteratedLog(n) => {
                // 1/e_n(1/y) = exp(−e_{n−1}(1/y))
                (-exp_iter(n - 1, 1.0 / y).unwrap_or(f64::INFINITY)).exp()
            }
            ClosedForm::Power(a) => (1.0 + (1.0 - a) * (1.0 - a) * y.ln()).powf(1.0 / (1.0 - a)),
        }
    }

    /// `μ_J(r)`. For the power kind this is `(r^{1−α} + (1−α)²J)^{1/(1−α)}`,
    /// which stays positive as `r → 0`.
    pub fn propagated(&self, j: f64, r: f64) -> f64 {
        match *self {
            ClosedForm::Lipschitz => j.exp() * r,
            ClosedForm::IteratedLog(n) => MuOmega { n, c1: 1.0, c2: 1.0, decay: j }.eval(r).unwrap_or(f64::NAN),
            ClosedForm::Power(a) => (r.powf(1.0 - a) + (1.0 - a) * (1.0 - a) * j).powf(1.0 / (1.0 - a)),
        }
    }
}

/// The Osgood modulus associated with a growth function:
/// `r log(e/r) Θ(log(e/r))` on `(0, e⁻²)` and `3e⁻²Θ(3)` from `e⁻²` on.
pub fn associated_modulus(theta: &GrowthFunction, r: f64) -> f64 {
    let edge = (-2.0f64).exp();
    if !(r > 0.0) {
        0.0
    } else if r < edge {
        let l = 1.0 - r.ln();
        r * l * theta.value(l)
    } else {
        edge * 3.0 * theta.value(3.0)
    }
}

/// `μ_{ω,n,t}(r) = C₁ / e_{n−1}((log_{n−1}(C₂/r))^{exp(−decay)})` with
/// `decay = t · rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOmega {
    pub n: u32,
    pub c1: f64,
    pub c2: f64,
    pub decay: f64,
}

impl MuOmega {
    pub fn new(n: u32, t: f64, rate: f64, c1: f64, c2: f64) -> Result<Self> {
        if n == 0 || !(t >= 0.0) || !(rate >= 0.0) || !(c1 > 0.0) || !(c2 > 0.0) {
            return parameter("mu_omega needs n ≥ 1, t ≥ 0, rate ≥ 0, C1 > 0, C2 > 0");
        }
        Ok(Self { n, c1, c2, decay: t * rate })
    }

    /// `ln μ(r)`, evaluated without forming `e_{n−1}`.
    pub fn ln_eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return domain(format!("mu_omega at r = {r} ≤ 0"));
        }
        self.ln_eval_at_ln(r.ln())
    }

    /// `ln μ(r)` from `ln r`, for arguments below the `f64` range.
    pub fn ln_eval_at_ln(&self, ln_r: f64) -> Result<f64> {
        if ln_r.is_nan() || ln_r == f64::INFINITY {
            return domain(format!("mu_omega at ln r = {ln_r}"));
        }
        let a = (-self.decay).exp();
        let l = self.c2.ln() - ln_r;
        if self.n == 1 {
            return Ok(self.c1.ln() - a * l);
        }
        if !(l > 0.0) {
            return domain(format!("log(C2/r) = {l} ≤ 0"));
        }
        let inner = log_iter(self.n - 2, l)?;
        if !(inner > 0.0) {
            return domain(format!("log_{}(C2/r) = {inner} ≤ 0", self.n - 1));
        }
        let y = inner.powf(a);
        let big = exp_iter(self.n - 2, y).unwrap_or(f64::INFINITY);
        Ok(self.c1.ln() - big)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        Ok(self.ln_eval(r)?.exp())
    }
}

/// Free-function form of [`MuOmega::eval`].
pub fn mu_omega(n: u32, t: f64, rate: f64, c1: f64, c2: f64, r: f64) -> Result<f64> {
    MuOmega::new(n, t, rate, c1, c2)?.eval(r)
}

/// Tail behaviour of `μ_{n,t}` against Hölder and logarithmic moduli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    /// `ln(μ(r)/r^α)` per grid point.
    pub ln_holder_ratio: Vec<f64>,
    /// `ln(μ(r)·(log 1/r)^a)` per grid point.
    pub ln_log_ratio: Vec<f64>,
    pub holder_ratio: Vec<f64>,
    pub log_ratio: Vec<f64>,
    /// Strictly increasing over the tail (second half of the grid).
    pub holder_increasing_on_tail: bool,
    /// Strictly decreasing over the tail.
    pub log_decreasing_on_tail: bool,
}

/// Compares `μ_{n,t}` (accumulated seminorm `j`) with `r^α` and
/// `1/(log 1/r)^a` along a decreasing grid in `(0, e^{−e})`.
pub fn asymptotic_compare(n: u32, j: f64, alpha: f64, a: f64, r_grid: &[f64]) -> Result<AsymptoticReport> {
    if n < 2 || !(alpha > 0.0 && alpha <= 1.0) || !(a >= 1.0) || !(j >= 0.0) {
        return parameter("asymptotic_compare needs n ≥ 2, α ∈ (0,1], a ≥ 1, J ≥ 0");
    }
    let mu = MuOmega { n, c1: 1.0, c2: 1.0, decay: j };
    let mut ln_h = Vec::with_capacity(r_grid.len());
    let mut ln_l = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        if !(r > 0.0 && r < (-std::f64::consts::E).exp()) {
            return domain(format!("grid point {r} outside (0, e^-e)"));
        }
        let ln_mu = mu.ln_eval(r)?;
        let l = -r.ln();
        ln_h.push(ln_mu + alpha * l);
        ln_l.push(ln_mu + a * l.ln());
    }
    let tail = r_grid.len() / 2;
    let strictly = |v: &[f64], inc: bool| {
        v[tail..].windows(2).all(|w| if inc { w[1] > w[0] } else { w[1] < w[0] })
    };
    Ok(AsymptoticReport {
        holder_ratio: ln_h.iter().map(|v| v.exp()).collect(),
        log_ratio: ln_l.iter().map(|v| v.exp()).collect(),
        holder_increasing_on_tail: strictly(&ln_h, true),
        log_decreasing_on_tail: strictly(&ln_l, false),
        ln_holder_ratio: ln_h,
        ln_log_ratio: ln_l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn ctx(j: f64) -> PropagationContext {
        PropagationContext::new(j).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Modulus::lipschitz().eval(0.5).unwrap(), 0.5);
        assert!(rel(Modulus::log_lipschitz().eval(1.0 / E).unwrap(), 1.0 / E) < 1e-15);
        let assoc = Modulus::associated(GrowthFunction::iterated_log(1).unwrap());
        let expect = (-2.0f64).exp() * 3.0 * 3f64.ln();
        assert!(rel(assoc.eval((-2.0f64).exp()).unwrap(), expect) < 1e-14);
        assert!(rel(expect, 0.44609) < 1e-3);
        assert!(matches!(Modulus::lipschitz().eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(Modulus::lipschitz().eval(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn osgood_m_examples() {
        assert!(rel(Modulus::lipschitz().osgood_m(0.1).unwrap(), 10f64.ln()) < 1e-12);
        assert!(rel(Modulus::log_lipschitz().osgood_m((-E).exp()).unwrap(), 1.0) < 1e-12);
        let p = Modulus::power(0.5).unwrap();
        // ∫_{1/4}^1 dr/(r^{1/2}/2) = 4(1 − 1/2)
        assert!(rel(p.osgood_m(0.25).unwrap(), 2.0) < 1e-12);
    }

    #[test]
    fn r_examples() {
        let ll = Modulus::log_lipschitz();
        assert!(rel(ll.r_of((-E).exp()).unwrap(), 1.0 / E) < 1e-12);
        let lip = Modulus::lipschitz();
        assert!(rel(lip.r_of(0.3).unwrap(), 0.3) < 1e-12);
        assert!(rel(lip.r_inverse(0.3).unwrap(), 0.3) < 1e-10);
        let l2 = Modulus::log_n(2).unwrap();
        let z = (-E.powf(E)).exp();
        let closed = l2.closed_form().unwrap().r(z);
        assert!(rel(closed, 1.0 / E) < 1e-14);
        assert!(rel(l2.r_of(z).unwrap(), closed) < 1e-6);
    }

    #[test]
    fn r_inverse_out_of_range() {
        assert!(matches!(Modulus::lipschitz().r_inverse(1.5), Err(Error::Bracket(_))));
        let p = Modulus::power(0.5).unwrap();
        // R(0⁺) = e^{-4} for α = 1/2
        assert!(matches!(p.r_inverse(0.01), Err(Error::Bracket(_))));
        assert!(rel(p.r_at_zero().unwrap(), (-4.0f64).exp()) < 1e-12);
    }

    #[test]
    fn propagated_examples() {
        assert_eq!(Modulus::lipschitz().propagated(ctx(0.0), 0.3).unwrap(), 0.3);
        let ll = Modulus::log_lipschitz();
        let v = ll.propagated(ctx(2f64.ln()), 1.0 / 16.0).unwrap();
        assert!(rel(v, 0.25) < 1e-9, "{v}");
        // power: (r^{1/2} + J/4)^2
        let p = Modulus::power(0.5).unwrap();
        let v = p.propagated(ctx(0.1), 0.01).unwrap();
        assert!(rel(v, 0.015625) < 1e-9, "{v}");
        let v = p.propagated(ctx(1.0), 0.25).unwrap();
        assert!(rel(v, 0.5625) < 1e-9, "{v}");
        assert!(rel(p.closed_form().unwrap().propagated(1.0, 0.25), 0.5625) < 1e-15);
        // positive floor as r → 0
        assert!(p.propagated(ctx(1.0), 1e-300).unwrap() > 0.06);
        // e^J R(r) > 1 leaves the range
        assert!(matches!(p.propagated(ctx(3.0), 0.25), Err(Error::Range(_))));
    }

    #[test]
    fn associated_examples() {
        let th = GrowthFunction::iterated_log(1).unwrap();
        let r = (-9.0f64).exp();
        let v = associated_modulus(&th, r);
        assert!(rel(v, r * 10.0 * 10f64.ln()) < 1e-14);
        assert!(rel(v, 2.8408e-3) < 1e-3);
        let th2 = GrowthFunction::iterated_log(2).unwrap();
        let c = (-2.0f64).exp() * 3.0 * th2.eval(3.0).unwrap();
        assert!(rel(associated_modulus(&th2, 0.5), c) < 1e-15);
        // monotone below e⁻²
        let mut prev = 0.0;
        for k in (21..200).rev() {
            let v = associated_modulus(&th, (-(k as f64) * 0.1).exp());
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn associated_osgood_partial_integrals_grow() {
        let m = Modulus::associated(GrowthFunction::iterated_log(1).unwrap());
        let mut prev = 0.0;
        for k in (4..=40).step_by(4) {
            let v = m.osgood_m(2f64.powi(-k)).unwrap();
            assert!(v > prev);
            prev = v;
        }
        // ∫ dp/(p log p) grows like log log
        let closed = |k: i32| (1.0 + k as f64 * 2f64.ln()).ln().ln() - 3f64.ln().ln();
        assert!(rel(m.osgood_m(2f64.powi(-40)).unwrap(), closed(40)) < 1e-9);
    }

    #[test]
    fn mu_omega_examples() {
        assert!(rel(mu_omega(1, 0.0, 1.0, 1.0, 1.0, 0.1).unwrap(), 0.1) < 1e-15);
        let t = 2f64.ln();
        assert!(rel(mu_omega(1, t, 1.0, 1.0, 1.0, 0.01).unwrap(), 0.1) < 1e-14);
        // at t = 0 the nested form collapses to r
        let r = (-E).exp();
        assert!(rel(mu_omega(2, 0.0, 1.0, 1.0, 1.0, r).unwrap(), r) < 1e-14);
        assert!(matches!(mu_omega(2, 0.0, 1.0, 1.0, 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn asymptotic_examples() {
        let grid: Vec<f64> = (2..=6).map(|k| (-(k as f64).exp()).exp()).collect();
        let rep = asymptotic_compare(2, 1.0, 1.0, 1.0, &grid).unwrap();
        assert!(rep.ln_holder_ratio.windows(2).all(|w| w[1] > w[0]));
        assert!(rep.holder_increasing_on_tail && rep.log_decreasing_on_tail);
        let rep0 = asymptotic_compare(2, 0.0, 1.0, 1.0, &grid).unwrap();
        assert!(rep0.ln_log_ratio.windows(2).all(|w| w[1] < w[0]));
        // with J = 0, μ = r exactly
        for v in &rep0.ln_holder_ratio {
            assert!(v.abs() < 1e-9);
        }
        // closed form at r = e^{−e²}, J = 1: ln(μ/r) = e² − e^{2/e}
        let r = (-(E * E)).exp();
        let one = asymptotic_compare(2, 1.0, 1.0, 1.0, &[r]).unwrap();
        assert!(rel(one.ln_holder_ratio[0], E * E - (2.0 / E).exp()) < 1e-12);
    }

    #[test]
    fn serde_shape() {
        let m = Modulus::power(0.5).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"kind":"power","params":{"alpha":0.5}}"#);
        let back: Modulus = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Modulus>(r#"{"kind":"power","params":{"alpha":1.5}}"#).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn kinds() -> Vec<Modulus> {
            vec![
                Modulus::lipschitz(),
                Modulus::log_lipschitz(),
                Modulus::log_n(2).unwrap(),
                Modulus::log_n(3).unwrap(),
                Modulus::power(0.5).unwrap(),
                Modulus::associated(GrowthFunction::iterated_log(2).unwrap()),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn r_inverse_round_trip(idx in 0usize..6, frac in 0.0f64..1.0) {
                let m = &kinds()[idx];
                let lo = 1e-12f64.ln();
                let hi = (m.cutoff() * 0.5).ln();
                let z = (lo + frac * (hi - lo)).exp();
                let back = m.r_inverse(m.r_of(z).unwrap()).unwrap();
                prop_assert!((back - z).abs() <= 1e-8 * z, "{} z={z} back={back}", m.label());
            }

            #[test]
            fn propagated_monotone_in_r_and_j(idx in 0usize..4, frac in 0.0f64..1.0, jf in 0.0f64..0.8) {
                let m = &kinds()[idx];
                let z = (1e-10f64.ln() + frac * ((m.cutoff() * 1e-2).ln() - 1e-10f64.ln())).exp();
                let j = jf * m.osgood_m(z).unwrap();
                let c = PropagationContext::new(j).unwrap();
                let c2 = PropagationContext::new(j * 1.2).unwrap();
                let a = m.propagated(c, z).unwrap();
                let b = m.propagated(c, z * 1.1).unwrap();
                let d = m.propagated(c2, z).unwrap();
                prop_assert!(b >= a && d >= a && a >= z * (1.0 - 1e-12));
            }
        }
    }
}
