//! Logarithmic interpolation between `L²`, `Ḣ⁻¹` and a weighted increment
//! functional:
//!
//! ```text
//! C⁻¹ ‖f‖² ≤ μ(ε) ∫∫ |f(x+h) − f(x)|² / (|h|² μ(|h|)) + |log ε| ‖f‖² / log(2 + ‖f‖²/‖f‖²_{Ḣ⁻¹})
//! ```
//!
//! together with its two ingredients: the annular mollifier remainder and the
//! log-weighted frequency sum.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::fields::GridField;
use crate::spectral::{signed_index, Fft2};
use crate::stats::pairwise_sum;
use crate::table::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySplit {
    /// `L² Σ_{k≠0} |c_k|² / log(2 + |k|)`
    pub value: f64,
    /// `ν = ‖f‖/‖f‖_{Ḣ⁻¹}`
    pub nu: f64,
    /// `‖f‖² / log(2 + ν²)`
    pub reference: f64,
    /// `value / reference`
    pub constant: f64,
}

/// Log-weighted frequency sum of a mean-zero field.
pub fn frequency_split_value(f: &GridField) -> Result<FrequencySplit> {
    if !f.is_mean_zero() {
        return Err(Error::MeanNonzero(f.mean()));
    }
    let area = f.side() * f.side();
    let terms: Vec<f64> = f
        .spectrum()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c.norm_sqr() / (2.0 + f.wavenumber(i)).ln())
        .collect();
    let value = area * pairwise_sum(&terms);
    let l2 = f.spectral_norm(0.0)?;
    let hm1 = f.spectral_norm(-1.0)?;
    let nu = l2 / hm1;
    let reference = l2 * l2 / (2.0 + nu * nu).ln();
    Ok(FrequencySplit { value, nu, reference, constant: value / reference })
}

fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Radial profile: 1 on `[1/2, 2/3]`, 0 outside `(1/3, 5/6)`, `C^∞`.
pub fn annulus_profile(rho: f64) -> f64 {
    smoothstep((rho - 1.0 / 3.0) * 6.0) * smoothstep((5.0 / 6.0 - rho) * 6.0)
}

type KernelKey = (usize, u64, u64);

fn kernel_cache() -> &'static Mutex<HashMap<KernelKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Fourier multiplier `ψ̂_δ(k)` of the discretised annular mollifier on the
/// grid of `f`, normalised to `ψ̂_δ(0) = 1`. Cached per `(n, L, δ)`.
pub fn mollifier_multiplier(f: &GridField, delta: f64) -> Result<Arc<Vec<f64>>> {
    let n = f.n();
    let dx = f.dx();
    if !(delta > 0.0 && delta < 1.0) {
        return parameter(format!("mollifier scale must lie in (0, 1), got {delta}"));
    }
    if delta < 3.0 * dx {
        return Err(Error::Resolution(format!("δ = {delta} is below three grid spacings ({})", 3.0 * dx)));
    }
    if 5.0 * delta / 6.0 >= 0.5 * f.side() {
        return Err(Error::Resolution(format!("δ = {delta} does not fit on a torus of side {}", f.side())));
    }
    let key = (n, f.side().to_bits(), delta.to_bits());
    if let Some(k) = kernel_cache().lock().expect("cache lock").get(&key) {
        return Ok(k.clone());
    }
    let mut kernel = vec![0.0; n * n];
    for (i, w) in kernel.iter_mut().enumerate() {
        let (jx, jy) = (signed_index(i / n, n), signed_index(i % n, n));
        let rho = dx * ((jx * jx + jy * jy) as f64).sqrt() / delta;
        *w = annulus_profile(rho);
    }
    let mass = pairwise_sum(&kernel);
    if mass == 0.0 {
        return Err(Error::Resolution(format!("mollifier at δ = {delta} has no grid support")));
    }
    let spec = Fft2::new(n).forward_real(&kernel);
    let scale = (n * n) as f64 / mass;
    let mult = Arc::new(spec.iter().map(|c| c.re * scale).collect::<Vec<f64>>());
    kernel_cache().lock().expect("cache lock").insert(key, mult.clone());
    Ok(mult)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierReport {
    pub delta: f64,
    /// `‖f − f ∗ ψ_δ‖²`
    pub remainder_sq: f64,
    /// `Σ_{δ/3 ≤ |h| ≤ δ} dx² ‖f(·+h) − f‖² / |h|²`
    pub shell_functional: f64,
    /// `remainder_sq / shell_functional` (0 when both vanish)
    pub ratio: f64,
}

pub fn mollifier_remainder(f: &GridField, delta: f64) -> Result<MollifierReport> {
    let mult = mollifier_multiplier(f, delta)?;
    let area = f.side() * f.side();
    let terms: Vec<f64> = f.spectrum().iter().zip(mult.iter()).map(|(c, m)| c.norm_sqr() * (1.0 - m).powi(2)).collect();
    let remainder_sq = area * pairwise_sum(&terms);
    let diffs = f.shift_differences();
    let vol = f.dx() * f.dx();
    let shell: Vec<f64> = f
        .offsets(delta)
        .into_iter()
        .filter(|(_, r)| *r >= delta / 3.0)
        .map(|(idx, r)| vol * diffs[idx] / (r * r))
        .collect();
    let shell_functional = pairwise_sum(&shell);
    let ratio = if shell_functional > 0.0 { remainder_sq / shell_functional } else { 0.0 };
    Ok(MollifierReport { delta, remainder_sq, shell_functional, ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpReport {
    pub epsilon: f64,
    /// `‖f‖²`
    pub lhs: f64,
    /// `μ(ε) · besov_functional(f, μ, 1)`
    pub term_besov: f64,
    /// `|log ε| ‖f‖² / log(2 + ‖f‖²/‖f‖²_{Ḣ⁻¹})`
    pub term_log: f64,
    pub implied_c: f64,
}

/// Evaluates both sides of the interpolation inequality for a mean-zero
/// field, weight `μ` (increasing on `(0, 1]`) and `ε ∈ (0, 1)`.
pub fn interpolation_sides(f: &GridField, mu: impl Fn(f64) -> f64, epsilon: f64) -> Result<InterpReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return parameter(format!("ε must lie in (0, 1), got {epsilon}"));
    }
    if !f.is_mean_zero() {
        return Err(Error::MeanNonzero(f.mean()));
    }
    let l2 = f.spectral_norm(0.0)?.powi(2);
    let hm1 = f.spectral_norm(-1.0)?.powi(2);
    let term_besov = mu(epsilon) * f.besov_functional(&mu, 1.0);
    let term_log = epsilon.ln().abs() * l2 / (2.0 + l2 / hm1).ln();
    Ok(InterpReport { epsilon, lhs: l2, term_besov, term_log, implied_c: l2 / (term_besov + term_log) })
}

/// `ε = (2 + dist_sq/rate_value)^γ` for `γ < 0`.
pub fn choose_epsilon(dist_sq: f64, rate_value: f64, gamma: f64) -> Result<f64> {
    if !(gamma < 0.0) {
        return parameter(format!("γ must be negative, got {gamma}"));
    }
    if !(dist_sq >= 0.0) || !(rate_value > 0.0) {
        return parameter("choose_epsilon needs dist_sq ≥ 0 and rate_value > 0");
    }
    // exp/ln form keeps |log ε| = |γ| log(2 + q) exact up to one rounding
    Ok((gamma * (2.0 + dist_sq / rate_value).ln()).exp())
}

/// Named weights used by the interpolation audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuKind {
    Linear,
    Sqrt,
    InverseLogSquared,
}

impl MuKind {
    pub const ALL: [MuKind; 3] = [MuKind::Linear, MuKind::Sqrt, MuKind::InverseLogSquared];

    pub fn eval(self, r: f64) -> f64 {
        match self {
            MuKind::Linear => r,
            MuKind::Sqrt => r.sqrt(),
            // frozen at its value 1 from r = e⁻¹ on
            MuKind::InverseLogSquared => {
                let l = (1.0 / r).ln();
                if l <= 1.0 {
                    1.0
                } else {
                    1.0 / (l * l)
                }
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MuKind::Linear => "r",
            MuKind::Sqrt => "sqrt_r",
            MuKind::InverseLogSquared => "inv_log_sq",
        }
    }
}

pub fn interp_table(rows: &[(MuKind, InterpReport)]) -> Table {
    let mut t = Table::new(&["epsilon", "mu_kind", "lhs", "term_besov", "term_log", "implied_C"]);
    for (kind, r) in rows {
        t.push_values(vec![
            r.epsilon.into(),
            Value::from(kind.label()),
            r.lhs.into(),
            r.term_besov.into(),
            r.term_log.into(),
            r.implied_c.into(),
        ]);
    }
    t
}
