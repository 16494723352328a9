//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 10/21-point Gauss–Kronrod pair drives a global adaptive bisection: the
//! panel with the largest error estimate is split until the summed estimate
//! meets `max(abs, rel·|I|)`. Semi-infinite ranges are mapped onto `[0, 1)`
//! with `x = a + t/(1 − t)`.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_507_762,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Absolute and relative error targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Single 21-point Kronrod panel, returning the estimate and `|K21 − G10|`.
pub fn gauss_kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_PANELS: usize = 4000;

/// Adaptive integral of `f` over the panels delimited by `breaks`
/// (strictly increasing, at least two points).
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: Tolerance) -> Result<QuadResult> {
    if breaks.len() < 2 {
        return Err(Error::Quadrature("need at least two break points".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (value, error) = gauss_kronrod21(&f, w[0], w[1]);
        heap.push(Panel { a: w[0], b: w[1], value, error });
    }
    if heap.is_empty() {
        return Ok(QuadResult { value: 0.0, error: 0.0, panels: 0 });
    }
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand (value {value}, error {error})")));
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(QuadResult { value, error, panels: heap.len() });
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::Quadrature(format!(
                "panel limit reached: value {value:e}, error {error:e}"
            )));
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature(format!("panel [{}, {}] cannot be split", worst.a, worst.b)));
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gauss_kronrod21(&f, a, b);
            heap.push(Panel { a, b, value, error });
        }
    }
}

/// Adaptive integral of `f` over `[a, b]`. Reversed limits flip the sign.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, panels: 0 });
    }
    if b < a {
        let r = integrate(f, b, a, tol)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    integrate_breaks(f, &[a, b], tol)
}

/// Adaptive integral of `f` over `[a, ∞)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<QuadResult> {
    let g = |t: f64| {
        let one_minus = 1.0 - t;
        let x = a + t / one_minus;
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v / (one_minus * one_minus)
        }
    };
    integrate_breaks(g, &[0.0, 0.5, 0.75, 0.875, 1.0], tol)
}

/// Golden-section search for the maximiser of a unimodal function on `[a, b]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol * (1.0 + a.abs().max(b.abs())) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // endpoints matter when the function is monotone on the bracket
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 > best.1 { cand } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let s: f64 = WGK[10] + 2.0 * WGK[..10].iter().sum::<f64>();
        assert!((s - 2.0).abs() < 1e-14);
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((g - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        // K21 integrates degree 31 exactly
        let (v, _) = gauss_kronrod21(&|x: f64| x.powi(30), -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_smooth_and_peaked() {
        let r = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, Tolerance::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((r.value - exact).abs() / exact < 1e-11);
    }

    #[test]
    fn reversed_limits() {
        let r = integrate(|x: f64| x, 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn semi_infinite_exponential_and_algebraic_tails() {
        let r = integrate_semi_infinite(|x: f64| (-x).exp(), 0.0, Tolerance::new(1e-14, 1e-13)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-13);
        let r = integrate_semi_infinite(|x: f64| 1.0 / (x * x), 1.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn divergent_integral_is_reported() {
        assert!(integrate_semi_infinite(|x: f64| 1.0 / x, 1.0, Tolerance::default()).is_err());
    }

    #[test]
    fn golden_section_finds_interior_and_boundary_max() {
        let (x, _) = golden_section_max(|x: f64| -(x - 2.0).powi(2), 0.0, 5.0, 1e-10);
        assert!((x - 2.0).abs() < 1e-6);
        let (x, _) = golden_section_max(|x: f64| -x, 1.0, 5.0, 1e-10);
        assert!((x - 1.0).abs() < 1e-6);
    }
}
