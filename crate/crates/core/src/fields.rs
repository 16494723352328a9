//! Periodic scalar fields on the 2D torus `[0, L)²`.
//!
//! Values live on an `n × n` grid (row-major, `values[ix·n + iy]` at
//! `(ix·L/n, iy·L/n)`) next to their Fourier coefficients. All norms are
//! integrals over the torus, so on the unit torus they coincide with grid
//! averages.
//!
//! The weighted increment functional and the Lusin square function sum over
//! lattice offsets `h = dx·j` with `0 < |h| ≤ h_max`, each offset carrying
//! volume `dx²`. Shift differences come from the autocorrelation
//! `∫ f(x) f(x+h) dx`, so one inverse FFT yields every offset at once.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{domain, parameter, Error, Result};
use crate::quad::{integrate, integrate_semi_infinite, Tolerance};
use crate::spectral::{periodic_correlate, signed_index, Complex, Fft2};
use crate::stats::{linear_fit, pairwise_sum};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    side: f64,
    values: Vec<f64>,
    spectrum: Vec<Complex>,
}

/// Relative size of the mean below which a field counts as mean-zero.
const MEAN_ZERO_TOL: f64 = 1e-12;

impl GridField {
    pub fn new(n: usize, side: f64, values: Vec<f64>) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return parameter(format!("grid size must be a power of two ≥ 2, got {n}"));
        }
        if !(side > 0.0) || !side.is_finite() {
            return parameter(format!("torus side must be positive, got {side}"));
        }
        if values.len() != n * n {
            return parameter(format!("expected {} values, got {}", n * n, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return parameter("field values must be finite");
        }
        let spectrum = Fft2::new(n).forward_real(&values);
        Ok(Self { n, side, values, spectrum })
    }

    pub fn from_fn(n: usize, side: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let dx = side / n as f64;
        let values = (0..n * n).map(|i| f((i / n) as f64 * dx, (i % n) as f64 * dx)).collect();
        Self::new(n, side, values)
    }

    /// Field from Fourier coefficients (imaginary residue of the synthesis
    /// is dropped).
    pub fn from_spectrum(n: usize, side: f64, spectrum: &[Complex]) -> Result<Self> {
        if spectrum.len() != n * n {
            return parameter("spectrum length does not match the grid");
        }
        Self::new(n, side, Fft2::new(n).inverse_real(spectrum))
    }

    pub fn dimension(&self) -> usize {
        2
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spectrum(&self) -> &[Complex] {
        &self.spectrum
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        let dx = self.dx();
        [(idx / self.n) as f64 * dx, (idx % self.n) as f64 * dx]
    }

    pub fn mean(&self) -> f64 {
        self.spectrum[0].re
    }

    pub fn is_mean_zero(&self) -> bool {
        let scale = self.spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.spectrum[0].norm() <= MEAN_ZERO_TOL * scale.max(f64::MIN_POSITIVE)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            n: self.n,
            side: self.side,
            values: self.values.iter().map(|v| a * v).collect(),
            spectrum: self.spectrum.iter().map(|c| c * a).collect(),
        }
    }

    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            n: self.n,
            side: self.side,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            spectrum: self.spectrum.iter().zip(&other.spectrum).map(|(a, b)| a - b).collect(),
        })
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.side != other.side {
            return parameter("fields live on different grids");
        }
        Ok(())
    }

    /// `|2πk/L|` for FFT index `idx`.
    pub fn wavenumber(&self, idx: usize) -> f64 {
        let scale = 2.0 * std::f64::consts::PI / self.side;
        let (kx, ky) = (signed_index(idx / self.n, self.n), signed_index(idx % self.n, self.n));
        scale * ((kx * kx + ky * ky) as f64).sqrt()
    }

    /// Homogeneous Sobolev norm `(L² Σ_{k≠0} |k|^{2s} |c_k|²)^{1/2}`; the zero
    /// mode is included at `s = 0`.
    pub fn spectral_norm(&self, s: f64) -> Result<f64> {
        if s < 0.0 && !self.is_mean_zero() {
            return Err(Error::MeanNonzero(self.mean()));
        }
        let area = self.side * self.side;
        let terms: Vec<f64> = self
            .spectrum
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    if s == 0.0 {
                        c.norm_sqr()
                    } else {
                        0.0
                    }
                } else {
                    self.wavenumber(i).powf(2.0 * s) * c.norm_sqr()
                }
            })
            .collect();
        Ok((area * pairwise_sum(&terms)).sqrt())
    }

    /// `∫ f² dx` by the grid rule.
    pub fn l2_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        pairwise_sum(&sq) * self.dx() * self.dx()
    }

    /// `‖f(· + dx·j) − f‖²_{L²}` for every lattice offset `j` (index layout
    /// as the grid).
    pub fn shift_differences(&self) -> Vec<f64> {
        let area = self.side * self.side;
        let power: Vec<Complex> = self.spectrum.iter().map(|c| Complex::new(c.norm_sqr() * area, 0.0)).collect();
        let corr = Fft2::new(self.n).inverse_real(&power);
        let c0 = corr[0];
        corr.iter().map(|c| (2.0 * (c0 - c)).max(0.0)).collect()
    }

    /// Lattice offsets with `0 < |h| ≤ h_max`, as `(grid index, |h|)`.
    /// Offsets use signed indices in `(−n/2, n/2]`, so each torus offset is
    /// counted once.
    pub fn offsets(&self, h_max: f64) -> Vec<(usize, f64)> {
        let n = self.n;
        let dx = self.dx();
        (1..n * n)
            .filter_map(|idx| {
                let (jx, jy) = (signed_index(idx / n, n), signed_index(idx % n, n));
                let r = dx * ((jx * jx + jy * jy) as f64).sqrt();
                (r <= h_max).then_some((idx, r))
            })
            .collect()
    }

    /// `Σ_h dx² ‖f(·+h) − f‖² / (|h|² w(|h|))` over `0 < |h| ≤ h_max`.
    pub fn besov_functional(&self, weight: impl Fn(f64) -> f64, h_max: f64) -> f64 {
        let diffs = self.shift_differences();
        let vol = self.dx() * self.dx();
        let terms: Vec<f64> =
            self.offsets(h_max).into_iter().map(|(idx, r)| vol * diffs[idx] / (r * r * weight(r))).collect();
        pairwise_sum(&terms)
    }

    /// Lusin square function
    /// `D_s f(x) = (Σ_h dx² |f(x+h) − f(x)|² / |h|^{2+2s})^{1/2}`.
    pub fn lusin_ds(&self, s: f64, h_max: f64) -> Result<GridField> {
        if !(s > 0.0 && s <= 1.0) {
            return parameter(format!("Lusin order must lie in (0, 1], got {s}"));
        }
        let n = self.n;
        let vol = self.dx() * self.dx();
        let mut kernel = vec![0.0; n * n];
        for (idx, r) in self.offsets(h_max) {
            kernel[idx] = vol / r.powf(2.0 + 2.0 * s);
        }
        let mass = pairwise_sum(&kernel);
        let fft = Fft2::new(n);
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        let k_sq = periodic_correlate(&fft, &kernel, &sq);
        let k_f = periodic_correlate(&fft, &kernel, &self.values);
        let values = (0..n * n)
            .map(|i| {
                let f = self.values[i];
                (k_sq[i] - 2.0 * f * k_f[i] + f * f * mass).max(0.0).sqrt()
            })
            .collect();
        GridField::new(n, self.side, values)
    }

    /// `2 ∫₀^∞ r |{|f| > r}| dr` by a midpoint rule over `levels` equal
    /// slices of `[0, max|f|]`, with level sets measured by node counting.
    pub fn layer_cake_l2_sq(&self, levels: usize) -> f64 {
        let mut abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        abs.sort_by(|a, b| a.total_cmp(b));
        let top = *abs.last().unwrap_or(&0.0);
        if top == 0.0 || levels == 0 {
            return 0.0;
        }
        let dr = top / levels as f64;
        let cell = self.dx() * self.dx();
        let terms: Vec<f64> = (0..levels)
            .map(|i| {
                let r = (i as f64 + 0.5) * dr;
                let above = abs.len() - abs.partition_point(|&a| a <= r);
                2.0 * r * above as f64 * cell * dr
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// Share of `‖f‖²` carried within `width` of the boundary of the
    /// fundamental cell; a proxy for the periodisation error when the torus
    /// stands in for the whole space.
    pub fn boundary_mass_fraction(&self, width: f64) -> f64 {
        let total = self.l2_sq();
        if total == 0.0 {
            return 0.0;
        }
        let dx = self.dx();
        let near = |i: usize| {
            let x = i as f64 * dx;
            x < width || self.side - x < width
        };
        let strip: f64 = (0..self.n * self.n)
            .filter(|&i| near(i / self.n) || near(i % self.n))
            .map(|i| self.values[i] * self.values[i])
            .sum();
        strip * dx * dx / total
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["x", "y", "value"]);
        for (i, v) in self.values.iter().enumerate() {
            let p = self.position(i);
            t.push(vec![p[0], p[1], *v]);
        }
        t
    }

    /// Header `u64 d, u64 n, f64 L` then row-major values, little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(24 + 8 * self.values.len());
        out.extend_from_slice(&2u64.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.side.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let word = |k: usize| -> Result<[u8; 8]> {
            bytes
                .get(8 * k..8 * k + 8)
                .map(|s| s.try_into().expect("eight bytes"))
                .ok_or_else(|| Error::Io("truncated field file".into()))
        };
        let d = u64::from_le_bytes(word(0)?);
        if d != 2 {
            return Err(Error::Io(format!("unsupported dimension {d}")));
        }
        let n = u64::from_le_bytes(word(1)?) as usize;
        let side = f64::from_le_bytes(word(2)?);
        if bytes.len() != 24 + 8 * n * n {
            return Err(Error::Io(format!("expected {} bytes, found {}", 24 + 8 * n * n, bytes.len())));
        }
        let values = (0..n * n).map(|i| word(3 + i).map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        Self::new(n, side, values)
    }

    /// Interpolant for off-grid evaluation; exact spectral synthesis when
    /// the field has at most `max_modes` significant coefficients, periodic
    /// bicubic (Catmull–Rom) otherwise.
    pub fn interpolator(&self, max_modes: usize) -> Interpolator {
        let peak = self.spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let cut = 1e-14 * peak;
        let scale = 2.0 * std::f64::consts::PI / self.side;
        let n = self.n;
        let modes: Vec<(f64, f64, Complex)> = self
            .spectrum
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > cut)
            .map(|(i, c)| {
                let (kx, ky) = (signed_index(i / n, n), signed_index(i % n, n));
                // a lone Nyquist coefficient stands for a cosine
                let c = if n % 2 == 0 && (i / n == n / 2 || i % n == n / 2) { Complex::new(c.re, 0.0) } else { *c };
                (scale * kx as f64, scale * ky as f64, c)
            })
            .collect();
        if modes.len() <= max_modes {
            Interpolator::Spectral { modes }
        } else {
            Interpolator::Cubic { n, side: self.side, values: self.values.clone() }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Interpolator {
    Spectral { modes: Vec<(f64, f64, Complex)> },
    Cubic { n: usize, side: f64, values: Vec<f64> },
}

fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    0.5 * (2.0 * p[1]
        + (p[2] - p[0]) * t
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t * t
        + (3.0 * (p[1] - p[2]) + p[3] - p[0]) * t * t * t)
}

impl Interpolator {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Interpolator::Spectral { modes } => {
                modes.iter().map(|(kx, ky, c)| (c * Complex::from_polar(1.0, kx * x[0] + ky * x[1])).re).sum()
            }
            Interpolator::Cubic { n, side, values } => {
                let n = *n;
                let gx = (x[0] / side * n as f64).rem_euclid(n as f64);
                let gy = (x[1] / side * n as f64).rem_euclid(n as f64);
                let (ix, iy) = (gx.floor() as i64, gy.floor() as i64);
                let (tx, ty) = (gx - ix as f64, gy - iy as f64);
                let at = |a: i64, b: i64| {
                    values[(a.rem_euclid(n as i64) as usize) * n + b.rem_euclid(n as i64) as usize]
                };
                let mut rows = [0.0; 4];
                for (r, a) in (ix - 1..=ix + 2).enumerate() {
                    rows[r] = catmull_rom([at(a, iy - 1), at(a, iy), at(a, iy + 1), at(a, iy + 2)], ty);
                }
                catmull_rom(rows, tx)
            }
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, Interpolator::Spectral { .. })
    }
}

/// Componentwise minimal-image difference `b − a` on the torus.
pub fn torus_delta(a: [f64; 2], b: [f64; 2], side: f64) -> [f64; 2] {
    let wrap = |d: f64| d - side * (d / side).round();
    [wrap(b[0] - a[0]), wrap(b[1] - a[1])]
}

pub fn torus_distance(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let d = torus_delta(a, b, side);
    d[0].hypot(d[1])
}

/// Real field with independent Gaussian coefficients on `0 < |k|∞ ≤ kmax`
/// (integer wavevectors), mean zero.
pub fn random_band_limited<R: Rng>(n: usize, side: f64, kmax: usize, rng: &mut R) -> Result<GridField> {
    if kmax == 0 || 2 * kmax >= n {
        return parameter(format!("band limit {kmax} must lie in 1..{}", n / 2));
    }
    let mut spec = vec![Complex::new(0.0, 0.0); n * n];
    let k = kmax as i64;
    let wrap = |v: i64| v.rem_euclid(n as i64) as usize;
    for kx in -k..=k {
        for ky in -k..=k {
            // fill one of each ± pair, then mirror
            if (kx, ky) <= (0, 0) {
                continue;
            }
            let c = Complex::new(gauss(rng), gauss(rng)) * 0.5;
            spec[wrap(kx) * n + wrap(ky)] = c;
            spec[wrap(-kx) * n + wrap(-ky)] = c.conj();
        }
    }
    GridField::from_spectrum(n, side, &spec)
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LusinAudit {
    pub pairs: usize,
    /// `max |f(x)−f(y)| / (|x−y|^s (D_s f(x) + D_s f(y)))`
    pub fitted_c: f64,
}

/// Samples node pairs and fits the constant of the pointwise Lusin bound.
pub fn lusin_pointwise_audit<R: Rng>(f: &GridField, ds: &GridField, s: f64, pairs: usize, rng: &mut R) -> Result<LusinAudit> {
    f.check_same_grid(ds)?;
    let total = f.n * f.n;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (i, j) = (rng.gen_range(0..total), rng.gen_range(0..total));
        if i == j {
            continue;
        }
        let r = torus_distance(f.position(i), f.position(j), f.side);
        let denom = r.powf(s) * (ds.values[i] + ds.values[j]);
        let num = (f.values[i] - f.values[j]).abs();
        if denom > 0.0 {
            worst = worst.max(num / denom);
        } else if num > 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(LusinAudit { pairs, fitted_c: worst })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WitnessReport {
    pub pairs: usize,
    pub skipped: usize,
    /// `max |f₀(x)−f₀(y)| / (2μ₀(|x−y|))`
    pub max_ratio_0: f64,
    /// `max |f_t(x)−f_t(y)| / (2μ₀(μ_J(|x−y|)))`
    pub max_ratio_t: f64,
    pub witness_ok: bool,
}

/// Modulus audit with constant witness `g ≡ G`: the transported field must
/// obey the propagated modulus with the constant found at time zero.
/// `mu0` is the initial modulus and `mu_prop` the propagated one; pairs where
/// either returns a non-positive or non-finite value are skipped.
pub fn empirical_modulus_witness<R: Rng>(
    f0: &GridField,
    ft: &GridField,
    mu0: impl Fn(f64) -> f64,
    mu_prop: impl Fn(f64) -> f64,
    pairs: usize,
    rng: &mut R,
) -> Result<WitnessReport> {
    f0.check_same_grid(ft)?;
    let total = f0.n * f0.n;
    let (mut r0, mut rt, mut skipped) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..pairs {
        let (i, j) = (rng.gen_range(0..total), rng.gen_range(0..total));
        if i == j {
            skipped += 1;
            continue;
        }
        let r = torus_distance(f0.position(i), f0.position(j), f0.side);
        let m0 = mu0(r);
        let mt = mu_prop(r);
        let mt = if mt.is_finite() && mt > 0.0 { mu0(mt) } else { f64::NAN };
        if !(m0.is_finite() && m0 > 0.0 && mt.is_finite() && mt > 0.0) {
            skipped += 1;
            continue;
        }
        r0 = r0.max((f0.values[i] - f0.values[j]).abs() / (2.0 * m0));
        rt = rt.max((ft.values[i] - ft.values[j]).abs() / (2.0 * mt));
    }
    Ok(WitnessReport {
        pairs,
        skipped,
        max_ratio_0: r0,
        max_ratio_t: rt,
        witness_ok: rt <= r0 * (1.0 + 1e-12) + 1e-15,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AReport {
    /// `∫₀¹ μ(r)/r dr`, or the partial integral over `[2⁻⁴⁰, 1]` when the
    /// tail does not settle.
    pub value: f64,
    pub converged: bool,
    /// Partial integrals over `[2⁻ᵏ, 1]`, `k = 1..=40`.
    pub partials: Vec<f64>,
    /// Log–log slope of the partial-integral increments over `k = 20..40`.
    pub tail_slope: f64,
}

/// `A = ∫₀¹ μ(r)/r dr`, computed as `∫₀^∞ μ(e^{−s}) ds`.
///
/// `r = e^{−s}` underflows past `s ≈ 745`, which truncates slowly decaying
/// tails; use [`a_of_u_log`] when `μ(e^{−s})` is available directly.
pub fn a_of_u(mu_comp: impl Fn(f64) -> f64, tol: f64) -> Result<AReport> {
    a_of_u_log(|s| mu_comp((-s).exp()), tol)
}

/// [`a_of_u`] with the integrand given as `s ↦ μ(e^{−s})`.
pub fn a_of_u_log(g: impl Fn(f64) -> f64, tol: f64) -> Result<AReport> {
    if !(tol > 0.0) {
        return parameter("tolerance must be positive");
    }
    let g = &g;
    let qt = Tolerance::new(tol * 1e-2, tol);
    let ln2 = std::f64::consts::LN_2;
    let mut partials = Vec::with_capacity(40);
    let mut acc = 0.0;
    for k in 1..=40 {
        acc += integrate(g, (k - 1) as f64 * ln2, k as f64 * ln2, qt)?.value;
        partials.push(acc);
    }
    let incs: Vec<(f64, f64)> = (20..40)
        .map(|k| ((k + 1) as f64, partials[k] - partials[k - 1]))
        .collect();
    let negligible = incs.iter().all(|(_, d)| d.abs() <= tol);
    let positive: Vec<(f64, f64)> = incs.iter().filter(|(_, d)| *d > 0.0).map(|(k, d)| (k.ln(), d.ln())).collect();
    let tail_slope = if positive.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        linear_fit(&x, &y).1
    } else {
        f64::NEG_INFINITY
    };
    let converged = negligible || tail_slope < -1.1;
    let value = if converged {
        match integrate_semi_infinite(g, 0.0, qt) {
            Ok(r) => r.value,
            Err(_) => *partials.last().expect("forty partials"),
        }
    } else {
        *partials.last().expect("forty partials")
    };
    if !value.is_finite() {
        return domain("A(u) integrand is not finite");
    }
    Ok(AReport { value, converged, partials, tail_slope })
}
