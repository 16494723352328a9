//! Cell cascade for immediate loss of regularity.
//!
//! Cell `n` has side `λ_n = e^{−eⁿ}`, time scale `τ_n = 1/(eⁿ Θ(eⁿ))` and
//! amplitude weight `γ_n`. Cells sit on the first axis at
//! `q_n = 3 Σ_{k>n} λ_k + 2λ_n`, so consecutive cubes are separated by at
//! least `λ_n` and the centers run toward the origin.
//!
//! `λ_n` underflows for `n ≥ 7`, so every quantity that involves it is
//! carried in logarithmic form (`log(1/λ_n) = eⁿ`).

use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::growth::GrowthFunction;
use crate::quad::{golden_section_max, integrate_semi_infinite, Tolerance};
use crate::table::Table;

/// Partial sums beyond this value are reported as diverging.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    /// `log(1/λ_n) = eⁿ`
    pub log_inv_lambda: f64,
    pub lambda: f64,
    pub tau: f64,
    pub gamma: f64,
    pub center: Vec<f64>,
}

impl Cell {
    /// `ln(1/τ_n) = ln(eⁿ Θ(eⁿ))`
    pub fn ln_inv_tau(&self) -> f64 {
        -self.tau.ln()
    }

    /// `ln λ_n^a = −a eⁿ`
    pub fn ln_lambda_pow(&self, a: f64) -> f64 {
        -a * self.log_inv_lambda
    }

    /// Whether `x` lies in the closed cube `Q_n`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.lambda > 0.0 && x.iter().zip(&self.center).all(|(xi, ci)| (xi - ci).abs() <= 0.5 * self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFamily {
    pub theta: GrowthFunction,
    pub d: usize,
    pub sigma: f64,
    pub cells: Vec<Cell>,
}

/// Builds `N` cells in dimension `d` with Sobolev index `σ`.
/// Weights `γ_n = λ_n^σ` switch on when `σ ≥ d/2`.
pub fn make_cells(theta: &GrowthFunction, n_cells: usize, d: usize, sigma: f64) -> Result<CellFamily> {
    if n_cells == 0 || d < 2 || !(sigma > 0.0) || !sigma.is_finite() {
        return parameter(format!("make_cells needs N ≥ 1, d ≥ 2, σ > 0 (got N={n_cells}, d={d}, σ={sigma})"));
    }
    let weighted = sigma >= 0.5 * d as f64;
    let lambdas: Vec<f64> = (1..=n_cells).map(|n| (-(n as f64).exp()).exp()).collect();
    let mut cells = Vec::with_capacity(n_cells);
    let mut tail = 0.0;
    let mut tails = vec![0.0; n_cells];
    for i in (0..n_cells).rev() {
        tails[i] = tail;
        tail += lambdas[i];
    }
    for (i, &lambda) in lambdas.iter().enumerate() {
        let n = i + 1;
        let en = (n as f64).exp();
        let tau = 1.0 / (en * theta.eval(en)?);
        let mut center = vec![0.0; d];
        center[0] = 3.0 * tails[i] + 2.0 * lambda;
        let gamma = if weighted { (-sigma * en).exp() } else { 1.0 };
        cells.push(Cell { n, log_inv_lambda: en, lambda, tau, gamma, center });
    }
    Ok(CellFamily { theta: theta.clone(), d, sigma, cells })
}

impl CellFamily {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, n: usize) -> Result<&Cell> {
        if n == 0 || n > self.cells.len() {
            return Err(Error::Index { index: n, len: self.cells.len() });
        }
        Ok(&self.cells[n - 1])
    }

    /// Pairwise disjointness (with the gap) and containment in
    /// `[−1/2, 1/2]^d`, checked for every cell with representable side.
    pub fn check_packing(&self) -> bool {
        let live: Vec<&Cell> = self.cells.iter().filter(|c| c.lambda > 0.0).collect();
        let inside = live.iter().all(|c| {
            c.center.iter().all(|&q| q - 0.5 * c.lambda >= -0.5 && q + 0.5 * c.lambda <= 0.5)
        });
        let disjoint = live.iter().enumerate().all(|(i, a)| {
            live[i + 1..].iter().all(|b| {
                a.center.iter().zip(&b.center).any(|(qa, qb)| (qa - qb).abs() >= 0.5 * (a.lambda + b.lambda))
            })
        });
        inside && disjoint
    }

    /// Plot-ready per-cell table; `p`, `s`, `t`, `c` select the condition
    /// terms that are included.
    pub fn table(&self, p: f64, s: f64, t: f64, c: f64) -> Table {
        let d = self.d as f64;
        let mut tab = Table::new(&[
            "n",
            "lambda",
            "log_inv_lambda",
            "tau",
            "gamma",
            "center",
            "grad_lp_term",
            "init_sobolev_term",
            "ln_blowup_term",
            "ln_blowup_display_term",
        ]);
        for cell in &self.cells {
            let (grad, init) = (grad_term(cell, d, p), init_term(cell, d, self.sigma));
            tab.push(vec![
                cell.n as f64,
                cell.lambda,
                cell.log_inv_lambda,
                cell.tau,
                cell.gamma,
                cell.center[0],
                grad,
                init,
                ln_blowup_raw(cell, d, s, t, c),
                ln_blowup_display(cell, d, s),
            ]);
        }
        tab
    }
}

fn grad_term(cell: &Cell, d: f64, p: f64) -> f64 {
    (cell.ln_lambda_pow(d / p) + cell.ln_inv_tau()).exp()
}

fn init_term(cell: &Cell, d: f64, sigma: f64) -> f64 {
    (ln_gamma(cell, sigma) + cell.ln_lambda_pow(0.5 * d - sigma)).exp()
}

// γ_n underflows long before λ_n^σ does in log form
fn ln_gamma(cell: &Cell, sigma: f64) -> f64 {
    cell.gamma.ln().max(-sigma * cell.log_inv_lambda)
}

fn ln_blowup_raw(cell: &Cell, d: f64, s: f64, t: f64, c: f64) -> f64 {
    cell.ln_lambda_pow(d - 2.0 * s) + 2.0 * s * c * t / cell.tau
}

fn ln_blowup_display(cell: &Cell, d: f64, s: f64) -> f64 {
    cell.ln_lambda_pow(d - 2.0 * s) + 1.0 / cell.tau
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "which", rename_all = "snake_case")]
pub enum SeriesCondition {
    SumLambda,
    /// `Σ λ_n^{d/p}/τ_n` against `C p Θ(p)`.
    GradLp { p: f64, constant: f64 },
    /// `Σ γ_n λ_n^{d/2−σ}`
    InitSobolev,
    /// `Σ λ_n^{d−2s} exp(2sct/τ_n)`
    Blowup { s: f64, t: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BoundedBy,
    Diverging,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub condition: SeriesCondition,
    /// Natural logs of the terms (terms themselves may overflow).
    pub ln_terms: Vec<f64>,
    pub ln_partial_sums: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Comparison value, when the condition has one.
    pub bound: Option<f64>,
    pub verdict: Verdict,
    /// Blow-up only: partial sums of the simplified lower-bound terms
    /// `exp((2s−d)eⁿ + eⁿΘ(eⁿ))`.
    pub display_ln_partial_sums: Option<Vec<f64>>,
    pub display_verdict: Option<Verdict>,
    /// First index whose partial sum exceeds the divergence threshold.
    pub diverged_at: Option<usize>,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn cumulative_log(ln_terms: &[f64]) -> Vec<f64> {
    let mut acc = f64::NEG_INFINITY;
    ln_terms
        .iter()
        .map(|&t| {
            acc = log_add(acc, t);
            acc
        })
        .collect()
}

fn divergence(ln_partial: &[f64]) -> Option<usize> {
    let cut = DIVERGENCE_THRESHOLD.ln();
    ln_partial.iter().position(|&v| v > cut).map(|i| i + 1)
}

// Convergent-looking when the last term no longer moves the sum.
fn settled(ln_terms: &[f64], ln_partial: &[f64]) -> bool {
    match (ln_terms.last(), ln_partial.last()) {
        (Some(&t), Some(&s)) => t - s < (1e-15f64).ln(),
        _ => false,
    }
}

/// Evaluates one of the series conditions over the stored cells.
pub fn series_condition(cells: &CellFamily, which: SeriesCondition) -> Result<SeriesReport> {
    let d = cells.d as f64;
    let ln_terms: Vec<f64> = match which {
        SeriesCondition::SumLambda => cells.cells.iter().map(|c| -c.log_inv_lambda).collect(),
        SeriesCondition::GradLp { p, constant } => {
            if !(p >= 1.0) || !(constant > 0.0) {
                return parameter("grad_lp needs p ≥ 1 and C > 0");
            }
            cells.cells.iter().map(|c| c.ln_lambda_pow(d / p) + c.ln_inv_tau()).collect()
        }
        SeriesCondition::InitSobolev => cells
            .cells
            .iter()
            .map(|c| ln_gamma(c, cells.sigma) + c.ln_lambda_pow(0.5 * d - cells.sigma))
            .collect(),
        SeriesCondition::Blowup { s, t, c } => {
            if !(s > 0.0 && s < 1.0) || !(t > 0.0) || !(c > 0.0) {
                return parameter("blowup needs s ∈ (0,1), t > 0, c > 0");
            }
            cells.cells.iter().map(|cell| ln_blowup_raw(cell, d, s, t, c)).collect()
        }
    };
    let ln_partial = cumulative_log(&ln_terms);
    let partial_sums: Vec<f64> = ln_partial.iter().map(|v| v.exp()).collect();
    let diverged_at = divergence(&ln_partial);
    let total = *partial_sums.last().unwrap_or(&0.0);
    let mut report = SeriesReport {
        condition: which,
        bound: None,
        verdict: Verdict::Inconclusive,
        display_ln_partial_sums: None,
        display_verdict: None,
        diverged_at,
        ln_terms,
        ln_partial_sums: ln_partial,
        partial_sums,
    };
    report.verdict = match which {
        SeriesCondition::SumLambda => {
            report.bound = Some(1.0);
            if total < 1.0 {
                Verdict::BoundedBy
            } else {
                Verdict::Inconclusive
            }
        }
        SeriesCondition::GradLp { p, constant } => {
            let bound = constant * p * cells.theta.eval(p)?;
            report.bound = Some(bound);
            if total <= bound {
                Verdict::BoundedBy
            } else if diverged_at.is_some() {
                Verdict::Diverging
            } else {
                Verdict::Inconclusive
            }
        }
        SeriesCondition::InitSobolev => {
            if diverged_at.is_some() {
                Verdict::Diverging
            } else if settled(&report.ln_terms, &report.ln_partial_sums) {
                report.bound = Some(total);
                Verdict::BoundedBy
            } else {
                Verdict::Inconclusive
            }
        }
        SeriesCondition::Blowup { s, .. } => {
            let display: Vec<f64> = cells.cells.iter().map(|cell| ln_blowup_display(cell, d, s)).collect();
            let display_partial = cumulative_log(&display);
            report.display_verdict =
                Some(if divergence(&display_partial).is_some() { Verdict::Diverging } else { Verdict::Inconclusive });
            report.display_ln_partial_sums = Some(display_partial);
            if diverged_at.is_some() {
                Verdict::Diverging
            } else {
                Verdict::Inconclusive
            }
        }
    };
    Ok(report)
}

/// Smallest `C` with `Σ_n λ_n^{d/p}/τ_n ≤ C p Θ(p)` for every `p` in `ps`,
/// together with the per-`p` ratios.
pub fn fit_grad_lp_constant(cells: &CellFamily, ps: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut ratios = Vec::with_capacity(ps.len());
    for &p in ps {
        let rep = series_condition(cells, SeriesCondition::GradLp { p, constant: 1.0 })?;
        let total = *rep.partial_sums.last().unwrap_or(&0.0);
        ratios.push(total / rep.bound.expect("grad_lp has a bound"));
    }
    Ok((ratios.iter().cloned().fold(0.0, f64::max), ratios))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition2Report {
    pub p: f64,
    pub d: usize,
    /// `max_{y ≥ 1} F(y)`, `F(y) = yΘ(y)e^{−dy/p}`.
    pub f_max_bound: f64,
    pub argmax: f64,
    /// `f_max_bound / (pΘ(p))`
    pub f_max_ratio: f64,
    /// `∫_e^∞ Θ(z)e^{−dz/p} dz = ∫_1^∞ F(eˣ) dx`
    pub integral_bound: f64,
    pub total_bound: f64,
    /// `(C + 1) p / d`
    pub xbar_bound: f64,
    /// `Σ_{n=1}^{50} F(eⁿ)`
    pub series_sum: f64,
    pub series_within_bound: bool,
    pub nonintegrable: bool,
}

/// `ln F(y)` for `y ≥ 1`.
fn ln_f(theta: &GrowthFunction, p: f64, d: f64, y: f64) -> f64 {
    y.ln() + theta.value(y).ln() - d * y / p
}

/// Series-versus-integral comparison behind the `grad_lp` bound.
pub fn condition2_bound(theta: &GrowthFunction, p: f64, d: usize) -> Result<Condition2Report> {
    if !(p >= 1.0) || d < 1 {
        return parameter(format!("condition2_bound needs p ≥ 1 and d ≥ 1, got p={p}, d={d}"));
    }
    let df = d as f64;
    let xbar = (theta.constant_c() + 1.0) * p / df;
    if !p.is_finite() {
        return Ok(Condition2Report {
            p,
            d,
            f_max_bound: f64::INFINITY,
            argmax: f64::INFINITY,
            f_max_ratio: f64::INFINITY,
            integral_bound: f64::INFINITY,
            total_bound: f64::INFINITY,
            xbar_bound: xbar,
            series_sum: f64::INFINITY,
            series_within_bound: false,
            nonintegrable: true,
        });
    }
    let (argmax, ln_fmax) = golden_section_max(|y| ln_f(theta, p, df, y), 1.0, 10.0 * xbar.max(1.0), 1e-12);
    let f_max = ln_fmax.exp();
    // z = e + (p/d) w puts the decay on unit scale
    let scale = p / df;
    let e = std::f64::consts::E;
    let integral = integrate_semi_infinite(
        |w| theta.value(e + scale * w) * (-(df * e / p) - w).exp(),
        0.0,
        Tolerance::new(1e-14, 1e-12),
    )?
    .value
        * scale;
    let total = integral + 2.0 * f_max;
    let series: f64 = (1..=50).map(|n| ln_f(theta, p, df, (n as f64).exp()).exp()).sum();
    Ok(Condition2Report {
        p,
        d,
        f_max_bound: f_max,
        argmax,
        f_max_ratio: f_max / (p * theta.eval(p)?),
        integral_bound: integral,
        total_bound: total,
        xbar_bound: xbar,
        series_sum: series,
        series_within_bound: series <= total + 1e-9,
        nonintegrable: false,
    })
}

/// Sign changes of `d/dx F(eˣ)` on a uniform grid of `x ∈ [0, x_max]`.
/// A single interior maximum gives one change; a decreasing profile none.
pub fn f_monotone_sign_changes(theta: &GrowthFunction, p: f64, d: usize, x_max: f64, points: usize) -> usize {
    let df = d as f64;
    let vals: Vec<f64> =
        (0..=points).map(|i| ln_f(theta, p, df, (x_max * i as f64 / points as f64).exp())).collect();
    let signs: Vec<bool> = vals.windows(2).map(|w| w[1] > w[0]).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellNormBounds {
    /// `λ_n^{d/p}/τ_n`
    pub grad_lp_bound: f64,
    /// `λ_n^{d/2−σ}`
    pub init_h_sigma_bound: f64,
    /// `λ_n^{d−2s}(C_s² exp(2sct/τ_n) − C/s)`
    pub hs_lower_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellNormParams {
    pub p: f64,
    pub sigma: f64,
    pub s: f64,
    pub t: f64,
    pub c: f64,
    pub cs: f64,
    pub big_c: f64,
}

impl Default for CellNormParams {
    fn default() -> Self {
        Self { p: 2.0, sigma: 0.5, s: 0.5, t: 0.0, c: 1.0, cs: 1.0, big_c: 1.0 }
    }
}

/// Norm bounds of the `n`-th building block (1-based).
pub fn cell_norm_bounds(cells: &CellFamily, n: usize, prm: CellNormParams) -> Result<CellNormBounds> {
    let cell = cells.cell(n)?;
    let d = cells.d as f64;
    let growth = prm.cs * prm.cs * (2.0 * prm.s * prm.c * prm.t / cell.tau).exp() - prm.big_c / prm.s;
    Ok(CellNormBounds {
        grad_lp_bound: grad_term(cell, d, prm.p),
        init_h_sigma_bound: cell.ln_lambda_pow(0.5 * d - prm.sigma).exp(),
        hs_lower_bound: cell.ln_lambda_pow(d - 2.0 * prm.s).exp() * growth,
    })
}

const BUMP_RADIUS: f64 = 0.45;

fn bump(z: f64) -> (f64, f64) {
    if z.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - z * z;
    let b = (1.0 - 1.0 / q).exp();
    (b, b * (-2.0 * z / (q * q)))
}

/// Surrogate mixer on the unit cube `[−1/2, 1/2]^d`, period 1 in time.
///
/// Stream function `ψ = χ(y)(α(t)(−cos 2πy₂)/(2π) + β(t) cos(2πy₁)/(2π))`
/// with `α = (sin⁺ 2πt)²`, `β = (sin⁻ 2πt)²` and `χ` a product of smooth
/// bumps of radius 0.45; `v = (∂₂ψ, −∂₁ψ, 0, …)`.
pub fn surrogate_v(t: f64, y: &[f64]) -> Vec<f64> {
    let d = y.len();
    let mut v = vec![0.0; d];
    let sn = (2.0 * std::f64::consts::PI * t).sin();
    let (alpha, beta) = (sn.max(0.0).powi(2), (-sn).max(0.0).powi(2));
    if alpha == 0.0 && beta == 0.0 {
        return v;
    }
    let parts: Vec<(f64, f64)> = y.iter().map(|&yi| bump(yi / BUMP_RADIUS)).collect();
    let chi: f64 = parts.iter().map(|p| p.0).product();
    if chi == 0.0 {
        return v;
    }
    let dchi = |i: usize| -> f64 {
        parts.iter().enumerate().map(|(j, p)| if j == i { p.1 / BUMP_RADIUS } else { p.0 }).product()
    };
    let tp = 2.0 * std::f64::consts::PI;
    let g = alpha * (-(tp * y[1]).cos() / tp) + beta * ((tp * y[0]).cos() / tp);
    let g1 = -beta * (tp * y[0]).sin();
    let g2 = alpha * (tp * y[1]).sin();
    v[0] = dchi(1) * g + chi * g2;
    v[1] = -(dchi(0) * g + chi * g1);
    v
}

/// `Σ_n (λ_n/τ_n) v(t/τ_n, (x − q_n)/λ_n)`; zero outside every cube.
pub fn surrogate_velocity(cells: &CellFamily, x: &[f64], t: f64) -> Vec<f64> {
    let mut u = vec![0.0; cells.d];
    for cell in cells.cells.iter().filter(|c| c.contains(x)) {
        let y: Vec<f64> = x.iter().zip(&cell.center).map(|(xi, qi)| (xi - qi) / cell.lambda).collect();
        let v = surrogate_v(t / cell.tau, &y);
        let amp = cell.lambda / cell.tau;
        u.iter_mut().zip(&v).for_each(|(ui, vi)| *ui += amp * vi);
    }
    u
}
