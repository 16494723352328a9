//! Pseudo-spectral 2D Euler in vorticity form on the periodic square,
//!
//! ```text
//! ∂_t ω + u·∇ω = 0,   u = ∇^⊥ Δ⁻¹ ω,
//! ```
//!
//! with classical RK4 in time and 2/3-rule dealiasing, plus twin-run
//! stability experiments against the bound
//! `‖ω₁−ω₂‖² ≤ C μ_{ω,n,t}((2 + 2 max‖ω₀ᵢ‖² / μ_{ω,n,t}(‖u₀₁−u₀₂‖²))^γ)^s`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::fields::{torus_distance, GridField};
use crate::growth::{log_iter, GrowthFunction};
use crate::modulus::MuOmega;
use crate::spectral::{angular_wavenumbers, signed_index, Complex, Fft2};
use crate::stats::pairwise_sum;
use crate::table::Table;

/// Wavenumbers, dealias mask and FFT plans for one grid.
#[derive(Debug)]
pub struct SpectralGrid {
    n: usize,
    side: f64,
    fft: Fft2,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    mask: Vec<bool>,
}

impl SpectralGrid {
    pub fn new(n: usize, side: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return parameter(format!("Euler grid must be a power of two ≥ 4, got {n}"));
        }
        if !(side > 0.0) || !side.is_finite() {
            return parameter(format!("torus side must be positive, got {side}"));
        }
        let k1 = angular_wavenumbers(n, side, true);
        let kfull = angular_wavenumbers(n, side, false);
        let cut = (n / 3) as i64;
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut mask = vec![false; n * n];
        for i in 0..n * n {
            let (a, b) = (i / n, i % n);
            kx[i] = k1[a];
            ky[i] = k1[b];
            k2[i] = kfull[a] * kfull[a] + kfull[b] * kfull[b];
            mask[i] = signed_index(a, n).abs() <= cut && signed_index(b, n).abs() <= cut;
        }
        Ok(Self { n, side, fft: Fft2::new(n), kx, ky, k2, mask })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn dx(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Largest retained `|k_x|`, `|k_y|` (integer wavenumbers).
    pub fn cutoff(&self) -> usize {
        self.n / 3
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn dealias(&self, spec: &mut [Complex]) {
        for (c, &keep) in spec.iter_mut().zip(&self.mask) {
            if !keep {
                *c = Complex::new(0.0, 0.0);
            }
        }
    }

    /// `(û₁, û₂) = (i k_y ω̂, −i k_x ω̂) / |k|²`.
    pub fn velocity_spectra(&self, w: &[Complex]) -> (Vec<Complex>, Vec<Complex>) {
        let i = Complex::new(0.0, 1.0);
        let mut u1 = vec![Complex::new(0.0, 0.0); w.len()];
        let mut u2 = u1.clone();
        for j in 1..w.len() {
            let q = w[j] / self.k2[j];
            u1[j] = i * self.ky[j] * q;
            u2[j] = -i * self.kx[j] * q;
        }
        (u1, u2)
    }

    fn synthesize(&self, mut spec: Vec<Complex>) -> Vec<f64> {
        self.fft.inverse_in_place(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// `L² Σ_{k≠0} |ŵ|²/|k|²`, i.e. `‖∇^⊥Δ⁻¹w‖²`.
    fn velocity_sq(&self, w: &[Complex]) -> f64 {
        let area = self.side * self.side;
        let t: Vec<f64> = w.iter().zip(&self.k2).skip(1).map(|(c, k2)| c.norm_sqr() / k2).collect();
        area * pairwise_sum(&t)
    }

    fn vorticity_sq(&self, w: &[Complex]) -> f64 {
        let area = self.side * self.side;
        let t: Vec<f64> = w.iter().map(|c| c.norm_sqr()).collect();
        area * pairwise_sum(&t)
    }

    /// Dealiased `−(u·∇ω)^` and `max |u|` on the grid.
    fn rhs(&self, w: &[Complex]) -> (Vec<Complex>, f64) {
        let i = Complex::new(0.0, 1.0);
        let (u1h, u2h) = self.velocity_spectra(w);
        let wx: Vec<Complex> = w.iter().zip(&self.kx).map(|(c, k)| i * k * c).collect();
        let wy: Vec<Complex> = w.iter().zip(&self.ky).map(|(c, k)| i * k * c).collect();
        let u1 = self.synthesize(u1h);
        let u2 = self.synthesize(u2h);
        let gx = self.synthesize(wx);
        let gy = self.synthesize(wy);
        let mut speed: f64 = 0.0;
        let prod: Vec<f64> = (0..w.len())
            .map(|j| {
                speed = speed.max(u1[j].hypot(u2[j]));
                u1[j] * gx[j] + u2[j] * gy[j]
            })
            .collect();
        let mut out = self.fft.forward_real(&prod);
        for c in out.iter_mut() {
            *c = -*c;
        }
        self.dealias(&mut out);
        out[0] = Complex::new(0.0, 0.0);
        (out, speed)
    }
}

/// Velocity of a mean-zero vorticity, `u = ∇^⊥Δ⁻¹ω`.
pub fn biot_savart(omega: &GridField) -> Result<(GridField, GridField)> {
    if !omega.is_mean_zero() {
        return Err(Error::MeanNonzero(omega.mean()));
    }
    let grid = SpectralGrid::new(omega.n(), omega.side())?;
    let (u1, u2) = grid.velocity_spectra(omega.spectrum());
    Ok((
        GridField::new(grid.n, grid.side, grid.synthesize(u1))?,
        GridField::new(grid.n, grid.side, grid.synthesize(u2))?,
    ))
}

/// Spectral curl `∂_x u₂ − ∂_y u₁` and divergence `∂_x u₁ + ∂_y u₂`.
pub fn curl_and_divergence(u1: &GridField, u2: &GridField) -> Result<(GridField, GridField)> {
    let (n, side) = (u1.n(), u1.side());
    if u2.n() != n || u2.side() != side {
        return parameter("velocity components live on different grids");
    }
    let k = angular_wavenumbers(n, side, true);
    let i = Complex::new(0.0, 1.0);
    let mut curl = vec![Complex::new(0.0, 0.0); n * n];
    let mut div = curl.clone();
    for j in 0..n * n {
        let (kx, ky) = (k[j / n], k[j % n]);
        curl[j] = i * kx * u2.spectrum()[j] - i * ky * u1.spectrum()[j];
        div[j] = i * kx * u1.spectrum()[j] + i * ky * u2.spectrum()[j];
    }
    Ok((GridField::from_spectrum(n, side, &curl)?, GridField::from_spectrum(n, side, &div)?))
}

/// Spectral resampling onto an `m × m` grid (truncation or zero padding).
pub fn resample(f: &GridField, m: usize) -> Result<GridField> {
    let n = f.n();
    if m < 2 || !m.is_power_of_two() {
        return parameter(format!("grid size must be a power of two ≥ 2, got {m}"));
    }
    let half = (n.min(m) / 2) as i64;
    let mut out = vec![Complex::new(0.0, 0.0); m * m];
    for (j, c) in f.spectrum().iter().enumerate() {
        let (a, b) = (signed_index(j / n, n), signed_index(j % n, n));
        // Nyquist rows are ambiguous after resampling; dropped
        if a.abs() >= half || b.abs() >= half {
            continue;
        }
        let ia = a.rem_euclid(m as i64) as usize;
        let ib = b.rem_euclid(m as i64) as usize;
        out[ia * m + ib] = *c;
    }
    GridField::from_spectrum(m, f.side(), &out)
}

#[derive(Debug, Clone)]
pub struct EulerState {
    grid: Arc<SpectralGrid>,
    omega_hat: Vec<Complex>,
    t: f64,
    dt: f64,
}

impl EulerState {
    /// Initial state; the spectrum is truncated to the dealias mask.
    pub fn new(omega: &GridField, dt: f64) -> Result<Self> {
        let grid = Arc::new(SpectralGrid::new(omega.n(), omega.side())?);
        Self::on_grid(grid, omega, dt)
    }

    pub fn on_grid(grid: Arc<SpectralGrid>, omega: &GridField, dt: f64) -> Result<Self> {
        if omega.n() != grid.n || omega.side() != grid.side {
            return parameter("vorticity does not live on the solver grid");
        }
        if !omega.is_mean_zero() {
            return Err(Error::MeanNonzero(omega.mean()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return parameter(format!("time step must be positive, got {dt}"));
        }
        let mut omega_hat = omega.spectrum().to_vec();
        grid.dealias(&mut omega_hat);
        omega_hat[0] = Complex::new(0.0, 0.0);
        Ok(Self { grid, omega_hat, t: 0.0, dt })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return parameter(format!("time step must be positive, got {dt}"));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn spectrum(&self) -> &[Complex] {
        &self.omega_hat
    }

    pub fn vorticity(&self) -> Result<GridField> {
        GridField::from_spectrum(self.grid.n, self.grid.side, &self.omega_hat)
    }

    pub fn velocity(&self) -> Result<(GridField, GridField)> {
        let (u1, u2) = self.grid.velocity_spectra(&self.omega_hat);
        Ok((
            GridField::new(self.grid.n, self.grid.side, self.grid.synthesize(u1))?,
            GridField::new(self.grid.n, self.grid.side, self.grid.synthesize(u2))?,
        ))
    }

    /// `½‖u‖²`
    pub fn energy(&self) -> f64 {
        0.5 * self.grid.velocity_sq(&self.omega_hat)
    }

    /// `½‖ω‖²`
    pub fn enstrophy(&self) -> f64 {
        0.5 * self.grid.vorticity_sq(&self.omega_hat)
    }

    pub fn max_speed(&self) -> f64 {
        let (u1, u2) = self.grid.velocity_spectra(&self.omega_hat);
        let (a, b) = (self.grid.synthesize(u1), self.grid.synthesize(u2));
        a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max(x.hypot(*y)))
    }

    /// `0.5 dx / max|u|` (infinite for a fluid at rest).
    pub fn cfl_limit(&self) -> f64 {
        cfl(self.grid.dx(), self.max_speed())
    }

    pub fn respects_mask(&self) -> bool {
        self.omega_hat.iter().zip(&self.grid.mask).all(|(c, &keep)| keep || *c == Complex::new(0.0, 0.0))
    }

    /// `‖ω_a − ω_b‖²` and `‖u_a − u_b‖²` between two states on the same grid.
    pub fn distances_sq(&self, other: &Self) -> Result<(f64, f64)> {
        if self.grid.n != other.grid.n || self.grid.side != other.grid.side {
            return parameter("states live on different grids");
        }
        let d: Vec<Complex> = self.omega_hat.iter().zip(&other.omega_hat).map(|(a, b)| a - b).collect();
        Ok((self.grid.vorticity_sq(&d), self.grid.velocity_sq(&d)))
    }
}

fn cfl(dx: f64, speed: f64) -> f64 {
    if speed > 0.0 {
        0.5 * dx / speed
    } else {
        f64::INFINITY
    }
}

/// One RK4 step of size `state.dt()`.
pub fn step(state: &EulerState) -> Result<EulerState> {
    let g = &state.grid;
    let h = state.dt;
    let w = &state.omega_hat;
    let (k1, speed) = g.rhs(w);
    let limit = cfl(g.dx(), speed);
    if h > limit {
        return Err(Error::Cfl { dt: h, limit });
    }
    let axpy = |a: f64, k: &[Complex]| -> Vec<Complex> { w.iter().zip(k).map(|(x, y)| x + y * a).collect() };
    let (k2, _) = g.rhs(&axpy(0.5 * h, &k1));
    let (k3, _) = g.rhs(&axpy(0.5 * h, &k2));
    let (k4, _) = g.rhs(&axpy(h, &k3));
    let omega_hat: Vec<Complex> = (0..w.len())
        .map(|j| w[j] + (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0))
        .collect();
    Ok(EulerState { grid: state.grid.clone(), omega_hat, t: state.t + h, dt: h })
}

pub fn advance(state: &EulerState, steps: usize) -> Result<EulerState> {
    let mut s = state.clone();
    for _ in 0..steps {
        s = step(&s)?;
    }
    Ok(s)
}

/// `‖Φ_dt(ω) − Φ_{dt/2}∘Φ_{dt/2}(ω)‖` in `L²`.
pub fn step_doubling_defect(state: &EulerState) -> Result<f64> {
    let full = step(state)?;
    let half = state.clone().with_dt(0.5 * state.dt)?;
    let two = advance(&half, 2)?;
    Ok(full.distances_sq(&two)?.0.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub dts: Vec<f64>,
    pub defects: Vec<f64>,
    /// Local order of the defect minus one.
    pub observed_order: f64,
}

/// Step-doubling defects at `dt, dt/2, …` (`levels` values); the global order
/// is read off the log–log slope of the defects minus one.
pub fn observed_order(omega: &GridField, dt: f64, levels: usize) -> Result<OrderReport> {
    if levels < 2 {
        return parameter("order estimate needs at least two levels");
    }
    let base = EulerState::new(omega, dt)?;
    let mut dts = Vec::with_capacity(levels);
    let mut defects = Vec::with_capacity(levels);
    for l in 0..levels {
        let h = dt / 2f64.powi(l as i32);
        dts.push(h);
        defects.push(step_doubling_defect(&base.clone().with_dt(h)?)?);
    }
    let x: Vec<f64> = dts.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = defects.iter().map(|d| d.ln()).collect();
    let (_, slope) = crate::stats::linear_fit(&x, &y);
    Ok(OrderReport { dts, defects, observed_order: slope - 1.0 })
}

/// `Θ_n(p) = Π_{j<n} Θ^{(j)}(p)` with `Θ^{(j)}` the admissible `log_j`
/// (closed form above its junction); `Θ₁ ≡ 1`.
pub fn theta_n(n: u32, p: f64) -> Result<f64> {
    if n == 0 {
        return parameter("Θ_n needs n ≥ 1");
    }
    let mut v = 1.0;
    for j in 1..n {
        v *= GrowthFunction::iterated_log(j)?.eval(p)?;
    }
    Ok(v)
}

/// `(∫ |f|^p)^{1/p}` by the grid rule, scaled to avoid overflow.
pub fn lp_norm(f: &GridField, p: f64) -> f64 {
    let m = f.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let t: Vec<f64> = f.values().iter().map(|v| (v.abs() / m).powf(p)).collect();
    m * (pairwise_sum(&t) * f.dx() * f.dx()).powf(1.0 / p)
}

/// Exponents of the `Y_{Θ_n}` audit.
pub fn y_exponents() -> Vec<f64> {
    (1..=32).map(|k| 2.0 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YAudit {
    pub n: u32,
    pub ps: Vec<f64>,
    pub norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Empirical `‖f‖_{Y_{Θ_n}}`: the largest ratio over `ps`.
    pub sup: f64,
}

pub fn y_theta_audit(f: &GridField, n: u32) -> Result<YAudit> {
    let ps = y_exponents();
    let norms: Vec<f64> = ps.iter().map(|&p| lp_norm(f, p)).collect();
    let ratios = ps.iter().zip(&norms).map(|(&p, v)| Ok(v / theta_n(n, p)?)).collect::<Result<Vec<f64>>>()?;
    let sup = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(YAudit { n, ps, norms, ratios, sup })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialVorticity {
    /// Gaussian bump of peak `amplitude` balanced by the ring
    /// `−b (r/σ)² e^{−r²/2σ²}`, `σ = 0.07 L`, which vanishes at the centre.
    SmoothBlob { center: [f64; 2], amplitude: f64, width: f64 },
    /// `a (1 − tanh((|x−c| − R)/edge))/2` minus its mean.
    PatchMollified { center: [f64; 2], radius: f64, amplitude: f64, edge: f64 },
    /// `a log_n(c/max(|x−c|, 2^{−depth}))` inside radius `R`, zero outside,
    /// minus its mean; `c = R e_{n−1}(1)`.
    LogSingular { n: u32, depth: u32, center: [f64; 2], radius: f64, amplitude: f64 },
}

fn remove_mean(n: usize, side: f64, mut v: Vec<f64>) -> Result<GridField> {
    let m = pairwise_sum(&v) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    GridField::new(n, side, v)
}

pub fn make_initial_vorticity(kind: &InitialVorticity, n: usize, side: f64) -> Result<GridField> {
    let dx = side / n as f64;
    let pos = |i: usize| [(i / n) as f64 * dx, (i % n) as f64 * dx];
    match *kind {
        InitialVorticity::SmoothBlob { center, amplitude, width } => {
            if !(width > 0.0 && width <= side / 20.0) || !amplitude.is_finite() {
                return parameter("smooth_blob needs 0 < width ≤ L/20 and finite amplitude");
            }
            let sigma = 0.07 * side;
            let mut blob = vec![0.0; n * n];
            let mut ring = vec![0.0; n * n];
            for i in 0..n * n {
                let r = torus_distance(pos(i), center, side);
                blob[i] = amplitude * (-0.5 * (r / width).powi(2)).exp();
                ring[i] = (r / sigma).powi(2) * (-0.5 * (r / sigma).powi(2)).exp();
            }
            let b = pairwise_sum(&blob) / pairwise_sum(&ring);
            let v: Vec<f64> = blob.iter().zip(&ring).map(|(x, y)| x - b * y).collect();
            GridField::new(n, side, v)
        }
        InitialVorticity::PatchMollified { center, radius, amplitude, edge } => {
            if !(radius > 0.0 && radius < 0.4 * side) || !(edge > 0.0) || !amplitude.is_finite() {
                return parameter("patch_mollified needs 0 < R < 0.4 L, edge > 0, finite amplitude");
            }
            let v = (0..n * n)
                .map(|i| {
                    let r = torus_distance(pos(i), center, side);
                    0.5 * amplitude * (1.0 - ((r - radius) / edge).tanh())
                })
                .collect();
            remove_mean(n, side, v)
        }
        InitialVorticity::LogSingular { n: order, depth, center, radius, amplitude } => {
            if order < 2 || order > 3 {
                return parameter(format!("log_singular needs 2 ≤ n ≤ 3, got {order}"));
            }
            if !(radius > 0.0 && radius < 0.5 * side) || !amplitude.is_finite() {
                return parameter("log_singular needs 0 < R < L/2 and finite amplitude");
            }
            let r_min = 0.5f64.powi(depth as i32);
            if !(r_min < radius) {
                return parameter("log_singular truncation radius 2^-depth must lie below R");
            }
            let c = radius * crate::growth::exp_iter(order - 1, 1.0)?;
            let v = (0..n * n)
                .map(|i| {
                    let r = torus_distance(pos(i), center, side);
                    if r >= radius {
                        Ok(0.0)
                    } else {
                        Ok(amplitude * log_iter(order, c / r.max(r_min))?)
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            remove_mean(n, side, v)
        }
    }
}

/// Constants of the stability bound. `theta_n` selects `Θ_n` and `μ_{ω,n,t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityParams {
    pub theta_n: u32,
    pub s: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub m: f64,
    pub gamma: f64,
    pub outputs: usize,
}

impl Default for StabilityParams {
    fn default() -> Self {
        Self { theta_n: 1, s: 0.5, c: 1.0, c1: 1.0, c2: 1.0, m: 1.0, gamma: -0.5, outputs: 10 }
    }
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta_n == 0 || self.theta_n > 3 {
            return parameter(format!("theta_n must be 1, 2 or 3, got {}", self.theta_n));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return parameter(format!("s must lie in (0, 1], got {}", self.s));
        }
        if !(self.c > 0.0 && self.c1 > 0.0 && self.c2 > 0.0 && self.m >= 0.0) {
            return parameter("C, C1, C2 must be positive and M nonnegative");
        }
        if !(self.gamma < 0.0) {
            return parameter(format!("γ must be negative, got {}", self.gamma));
        }
        if self.outputs == 0 {
            return parameter("need at least one output time");
        }
        Ok(())
    }

    pub fn mu(&self, t: f64, rate: f64) -> Result<MuOmega> {
        MuOmega::new(self.theta_n, t, rate, self.c1, self.c2)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `C μ((2 + w_sq/μ(d))^γ)^s` at time `t`, with `w_sq = 2 max‖ω₀ᵢ‖²` and
/// `d = ‖u₀₁ − u₀₂‖²`; zero when `d = 0`.
pub fn stability_bound(p: &StabilityParams, t: f64, rate: f64, w_sq: f64, d: f64) -> Result<f64> {
    if !(d >= 0.0) || !(w_sq >= 0.0) {
        return parameter("stability bound needs d ≥ 0 and ‖ω₀‖² ≥ 0");
    }
    if d == 0.0 {
        return Ok(0.0);
    }
    let mu = p.mu(t, rate)?;
    let ln_ratio = w_sq.ln() - mu.ln_eval(d)?;
    let ln_eps = p.gamma * log_add(std::f64::consts::LN_2, ln_ratio);
    Ok(p.c * (p.s * mu.ln_eval_at_ln(ln_eps)?).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub params: StabilityParams,
    pub dt: f64,
    pub initial_velocity_dist_sq: f64,
    /// `2 max_i ‖ω₀ᵢ‖²`
    pub reference_sq: f64,
    pub y_norms: [f64; 2],
    /// `M max_i ‖ω₀ᵢ‖_{Y_{Θ_n}}`
    pub rate: f64,
    pub times: Vec<f64>,
    pub vorticity_dist_sq: Vec<f64>,
    pub velocity_dist_sq: Vec<f64>,
    pub bound_rhs: Vec<f64>,
    /// `μ_{ω,n,t}(‖u₀₁ − u₀₂‖²)`, the velocity bound
    pub velocity_bound: Vec<f64>,
    pub energy: [Vec<f64>; 2],
    pub enstrophy: [Vec<f64>; 2],
}

impl StabilityRecord {
    /// Smallest `C` with `vorticity_dist_sq ≤ bound_rhs` at every output.
    pub fn fitted_c(&self) -> f64 {
        self.vorticity_dist_sq
            .iter()
            .zip(&self.bound_rhs)
            .map(|(w, b)| if *w == 0.0 { 0.0 } else { w * self.params.c / b })
            .fold(0.0, f64::max)
    }

    pub fn bound_holds(&self) -> bool {
        self.vorticity_dist_sq.iter().zip(&self.bound_rhs).all(|(w, b)| w <= b)
    }

    pub fn velocity_bound_holds(&self) -> bool {
        self.velocity_dist_sq.iter().zip(&self.velocity_bound).all(|(w, b)| w <= b)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["t", "dist_w2", "dist_u2", "bound_rhs", "velocity_bound", "E1", "E2", "Z1", "Z2"]);
        for k in 0..self.times.len() {
            t.push(vec![
                self.times[k],
                self.vorticity_dist_sq[k],
                self.velocity_dist_sq[k],
                self.bound_rhs[k],
                self.velocity_bound[k],
                self.energy[0][k],
                self.energy[1][k],
                self.enstrophy[0][k],
                self.enstrophy[1][k],
            ]);
        }
        t
    }
}

/// Exponent of the `n = 1` bound in `d = ‖u₀₁ − u₀₂‖²` as `d → 0`:
/// `|γ| s e^{−2 t rate}`.
pub fn implied_exponent(p: &StabilityParams, t: f64, rate: f64) -> f64 {
    -p.gamma * p.s * (-2.0 * t * rate).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub c: f64,
    pub gamma: f64,
}

/// Smallest `C` with the bound holding at output `time_index` of every
/// record when `γ = −1/(2C)` is tied to it. The requirement
/// `C ≥ max_r dist_r / (bound_r / C)` is monotone in `C`, so the threshold
/// is found by bisection in `log C`.
pub fn fit_tied_constant(records: &[StabilityRecord], time_index: usize, base: &StabilityParams) -> Result<ConstantFit> {
    if records.is_empty() {
        return parameter("constant fit needs at least one record");
    }
    let excess = |ln_c: f64| -> Result<f64> {
        let c = ln_c.exp();
        let p = StabilityParams { c: 1.0, gamma: -0.5 / c, ..*base };
        let mut worst = f64::NEG_INFINITY;
        for r in records {
            let Some(&dist) = r.vorticity_dist_sq.get(time_index) else {
                return Err(Error::Index { index: time_index + 1, len: r.times.len() });
            };
            if dist == 0.0 {
                continue;
            }
            let g = stability_bound(&p, r.times[time_index], r.rate, r.reference_sq, r.initial_velocity_dist_sq)?;
            worst = worst.max(dist.ln() - g.ln());
        }
        Ok(ln_c - worst)
    };
    if excess(0.0)? == f64::INFINITY {
        return Ok(ConstantFit { c: 0.0, gamma: f64::NEG_INFINITY });
    }
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while excess(lo)? > 0.0 {
        lo *= 2.0;
        if lo < -700.0 {
            return parameter("constant fit bracket underflow");
        }
    }
    while excess(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 700.0 {
            return parameter("constant fit bracket overflow");
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let c = hi.exp();
    Ok(ConstantFit { c, gamma: -0.5 / c })
}

/// Twin runs from `ω01`, `ω02` to time `t_end` with step at most `dt`
/// (shortened so the outputs fall on steps), recording distances and bounds
/// at `params.outputs` equally spaced times plus `t = 0`.
pub fn stability_experiment(
    w01: &GridField,
    w02: &GridField,
    t_end: f64,
    dt: f64,
    params: &StabilityParams,
) -> Result<StabilityRecord> {
    params.validate()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return parameter(format!("final time must be positive, got {t_end}"));
    }
    if !(dt > 0.0) {
        return parameter(format!("time step must be positive, got {dt}"));
    }
    if w01.n() != w02.n() || w01.side() != w02.side() {
        return parameter("initial vorticities live on different grids");
    }
    let per_output = ((t_end / params.outputs as f64) / dt).ceil().max(1.0) as usize;
    let h = t_end / (per_output * params.outputs) as f64;
    let grid = Arc::new(SpectralGrid::new(w01.n(), w01.side())?);
    let mut a = EulerState::on_grid(grid.clone(), w01, h)?;
    let mut b = EulerState::on_grid(grid, w02, h)?;
    let y = [y_theta_audit(w01, params.theta_n)?.sup, y_theta_audit(w02, params.theta_n)?.sup];
    let rate = params.m * y[0].max(y[1]);
    let w_sq = 2.0 * (2.0 * a.enstrophy()).max(2.0 * b.enstrophy());
    let (_, d0) = a.distances_sq(&b)?;
    let mut rec = StabilityRecord {
        params: *params,
        dt: h,
        initial_velocity_dist_sq: d0,
        reference_sq: w_sq,
        y_norms: y,
        rate,
        times: Vec::new(),
        vorticity_dist_sq: Vec::new(),
        velocity_dist_sq: Vec::new(),
        bound_rhs: Vec::new(),
        velocity_bound: Vec::new(),
        energy: [Vec::new(), Vec::new()],
        enstrophy: [Vec::new(), Vec::new()],
    };
    for k in 0..=params.outputs {
        if k > 0 {
            let (ra, rb) = rayon::join(|| advance(&a, per_output), || advance(&b, per_output));
            a = ra?;
            b = rb?;
        }
        let t = k as f64 * per_output as f64 * h;
        let (dw, du) = a.distances_sq(&b)?;
        rec.times.push(t);
        rec.vorticity_dist_sq.push(dw);
        rec.velocity_dist_sq.push(du);
        rec.bound_rhs.push(stability_bound(params, t, rate, w_sq, d0)?);
        rec.velocity_bound.push(if d0 == 0.0 { 0.0 } else { params.mu(t, rate)?.eval(d0)? });
        rec.energy[0].push(a.energy());
        rec.energy[1].push(b.energy());
        rec.enstrophy[0].push(a.enstrophy());
        rec.enstrophy[1].push(b.enstrophy());
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_band_limited;
    use crate::rng::stream;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_abs_diff(a: &GridField, b: &[f64]) -> f64 {
        a.values().iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn biot_savart_single_modes() {
        let n = 32;
        let w = GridField::from_fn(n, 1.0, |x, _| (2.0 * PI * x).cos()).unwrap();
        let (u1, u2) = biot_savart(&w).unwrap();
        let want: Vec<f64> = (0..n * n).map(|i| (2.0 * PI * (i / n) as f64 / n as f64).sin() / (2.0 * PI)).collect();
        assert!(u1.values().iter().all(|v| v.abs() < 1e-12));
        assert!(max_abs_diff(&u2, &want) < 1e-12);
        let w = GridField::from_fn(n, 1.0, |_, y| (2.0 * PI * y).cos()).unwrap();
        let (u1, u2) = biot_savart(&w).unwrap();
        let want: Vec<f64> = (0..n * n).map(|i| -(2.0 * PI * (i % n) as f64 / n as f64).sin() / (2.0 * PI)).collect();
        assert!(max_abs_diff(&u1, &want) < 1e-12);
        assert!(u2.values().iter().all(|v| v.abs() < 1e-12));
        let c = GridField::from_fn(8, 1.0, |x, _| 1.0 + x).unwrap();
        assert!(matches!(biot_savart(&c), Err(Error::MeanNonzero(_))));
    }

    #[test]
    fn biot_savart_identities_on_random_fields() {
        let mut rng = stream(5, 0);
        for _ in 0..5 {
            let w = random_band_limited(64, 1.0, 20, &mut rng).unwrap();
            let (u1, u2) = biot_savart(&w).unwrap();
            let (curl, div) = curl_and_divergence(&u1, &u2).unwrap();
            let wmax = w.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_abs_diff(&curl, w.values()) <= 1e-10 * wmax);
            assert!(div.values().iter().all(|v| v.abs() <= 1e-10 * wmax));
        }
    }

    #[test]
    fn steady_shear_is_unchanged() {
        let w = GridField::from_fn(64, 1.0, |x, _| (2.0 * PI * x).cos()).unwrap();
        let s0 = EulerState::new(&w, 0.01).unwrap();
        let s = advance(&s0, 50).unwrap();
        let out = s.vorticity().unwrap();
        assert!(max_abs_diff(&out, w.values()) < 1e-12);
        assert!((s.t() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let w = GridField::from_fn(32, 1.0, |x, y| 50.0 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin()).unwrap();
        let s = EulerState::new(&w, 0.5).unwrap();
        assert!(matches!(step(&s), Err(Error::Cfl { .. })));
    }

    fn perturbed_taylor_green(n: usize) -> GridField {
        GridField::from_fn(n, 1.0, |x, y| {
            (2.0 * PI * x).cos() * (2.0 * PI * y).cos() + 0.6 * (4.0 * PI * x).sin() + 0.4 * (2.0 * PI * (x + 2.0 * y)).cos()
        })
        .unwrap()
    }

    #[test]
    fn step_doubling_is_fourth_order() {
        let rep = observed_order(&perturbed_taylor_green(32), 0.08, 3).unwrap();
        assert!(rep.observed_order >= 3.7, "{rep:?}");
        assert!(rep.defects.iter().all(|d| *d > 1e-13), "{rep:?}");
    }

    #[test]
    fn mean_and_mask_are_preserved() {
        let mut rng = stream(9, 0);
        let w = random_band_limited(32, 1.0, 15, &mut rng).unwrap();
        let s0 = EulerState::new(&w, 0.002).unwrap();
        assert!(s0.respects_mask());
        let s = advance(&s0, 10).unwrap();
        assert!(s.respects_mask());
        assert_eq!(s.spectrum()[0], Complex::new(0.0, 0.0));
    }

    #[test]
    fn conservation_on_smooth_data() {
        let w = perturbed_taylor_green(64);
        let s0 = EulerState::new(&w, 0.01).unwrap();
        let s = advance(&s0, 100).unwrap();
        let de = (s.energy() - s0.energy()).abs() / s0.energy();
        let dz = (s.enstrophy() - s0.enstrophy()).abs() / s0.enstrophy();
        assert!(de < 1e-8 && dz < 1e-8, "{de:e} {dz:e}");
    }

    #[test]
    fn grid_doubling_converges() {
        let kind = InitialVorticity::SmoothBlob { center: [0.5, 0.5], amplitude: 2.0, width: 0.025 };
        let run = |n: usize| {
            let w = make_initial_vorticity(&kind, n, 1.0).unwrap();
            let s = advance(&EulerState::new(&w, 0.01).unwrap(), 20).unwrap();
            resample(&s.vorticity().unwrap(), 256).unwrap()
        };
        let fine = run(256);
        let err = |n: usize| run(n).minus(&fine).unwrap().l2_sq().sqrt();
        let (e32, e64, e128) = (err(32), err(64), err(128));
        assert!(e64 * 8.0 <= e32 && e128 * 8.0 <= e64, "{e32:e} {e64:e} {e128:e}");
    }

    #[test]
    fn resample_round_trip() {
        let mut rng = stream(3, 1);
        let w = random_band_limited(16, 1.0, 5, &mut rng).unwrap();
        let back = resample(&resample(&w, 64).unwrap(), 16).unwrap();
        assert!(max_abs_diff(&back, w.values()) < 1e-13);
    }

    #[test]
    fn initial_vorticities() {
        let blob = make_initial_vorticity(
            &InitialVorticity::SmoothBlob { center: [0.5, 0.5], amplitude: 3.0, width: 0.04 },
            64,
            1.0,
        )
        .unwrap();
        let mx = blob.values().iter().cloned().fold(f64::MIN, f64::max);
        assert!((mx - 3.0).abs() < 1e-12 && blob.is_mean_zero());
        let patch = make_initial_vorticity(
            &InitialVorticity::PatchMollified { center: [0.5, 0.5], radius: 0.2, amplitude: 1.0, edge: 0.02 },
            64,
            1.0,
        )
        .unwrap();
        assert!(patch.is_mean_zero());
        let a = y_theta_audit(&patch, 1).unwrap();
        assert!(a.ratios.iter().all(|r| *r <= 1.0) && a.sup > 0.5);
        let sing = make_initial_vorticity(
            &InitialVorticity::LogSingular { n: 2, depth: 8, center: [0.5, 0.5], radius: 0.25, amplitude: 1.0 },
            256,
            1.0,
        )
        .unwrap();
        assert!(sing.is_mean_zero());
        let a = y_theta_audit(&sing, 2).unwrap();
        assert!(a.sup.is_finite() && a.sup < 2.0, "{a:?}");
        assert!(make_initial_vorticity(
            &InitialVorticity::LogSingular { n: 1, depth: 8, center: [0.5, 0.5], radius: 0.25, amplitude: 1.0 },
            64,
            1.0
        )
        .is_err());
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta_n(1, 10.0).unwrap(), 1.0);
        assert!((theta_n(2, 10.0).unwrap() - 10f64.ln()).abs() < 1e-15);
        let t3 = theta_n(3, 64.0).unwrap();
        assert!((t3 - 64f64.ln() * 64f64.ln().ln()).abs() < 1e-13);
    }

    #[test]
    fn identical_runs_have_zero_distance() {
        let w = make_initial_vorticity(
            &InitialVorticity::SmoothBlob { center: [0.5, 0.5], amplitude: 1.0, width: 0.05 },
            32,
            1.0,
        )
        .unwrap();
        let rec = stability_experiment(&w, &w, 0.2, 0.02, &StabilityParams { outputs: 4, ..Default::default() }).unwrap();
        assert_eq!(rec.times.len(), 5);
        assert!(rec.vorticity_dist_sq.iter().all(|d| *d == 0.0));
        assert!(rec.bound_holds());
        assert_eq!(rec.fitted_c(), 0.0);
    }

    #[test]
    fn yudovich_bound_is_a_power_law() {
        // n = 1: bound ∝ d^{|γ| s a²} for small d
        let p = StabilityParams::default();
        let (t, rate, w): (f64, f64, f64) = (0.5, 1.0, 1.0);
        let a = (-t * rate).exp();
        let b1 = stability_bound(&p, t, rate, w, 1e-20).unwrap();
        let b2 = stability_bound(&p, t, rate, w, 1e-24).unwrap();
        let slope = (b1 / b2).ln() / 4.0 / 10f64.ln();
        assert!((slope - 0.5 * 0.5 * a * a).abs() < 1e-6, "{slope}");
    }

    proptest! {
        #[test]
        fn bound_monotone_in_velocity_distance(
            n in 1u32..=2, t in 0.0f64..1.0, l1 in -30.0f64..-3.0, dl in 0.0f64..10.0, rate in 0.1f64..3.0
        ) {
            let p = StabilityParams { theta_n: n, ..Default::default() };
            let d1 = l1.exp();
            let d2 = (l1 + dl).min(-1.0).exp();
            let b1 = stability_bound(&p, t, rate, 2.0, d1).unwrap();
            let b2 = stability_bound(&p, t, rate, 2.0, d2).unwrap();
            prop_assert!(b2 >= b1 * (1.0 - 1e-12));
        }
    }
}
