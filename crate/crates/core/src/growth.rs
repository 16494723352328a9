//! Admissible growth functions Θ and iterated logarithms.
//!
//! A growth function is admissible when, for some `M > 1` and `C > 0`,
//! `Θ(xy) ≤ Θ(x) + Θ(y) + C` for `x, y ≥ M` and `xΘ'(x) ≤ CΘ(x)` for `x > M`.
//! The iterated logarithm `log_m` is the canonical slowly growing family.
//!
//! Below the junction `e_m(1/2)` the closed form of `log_m` is replaced by the
//! line from `Θ(1) = 0.1` to `Θ(e_m(1/2)) = 0.5`. Only positivity and
//! monotonicity of that extension are used anywhere downstream.

use serde::{Deserialize, Serialize};

use crate::error::{domain, parameter, Error, Result};

/// `log_m x`; `m = 0` is the identity.
pub fn log_iter(m: u32, x: f64) -> Result<f64> {
    let mut v = x;
    for j in 0..m {
        if !(v > 0.0) {
            return domain(format!("log_{m}({x}) undefined: argument of log #{} is {v}", j + 1));
        }
        v = v.ln();
    }
    Ok(v)
}

/// `e_m(x)`, the inverse of `log_m`; `m = 0` is the identity.
pub fn exp_iter(m: u32, x: f64) -> Result<f64> {
    let mut v = x;
    for _ in 0..m {
        v = v.exp();
    }
    if v.is_finite() {
        Ok(v)
    } else {
        domain(format!("e_{m}({x}) overflows"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Log,
    Exp,
}

/// `log_m x` or `e_m(x)` for `m ≥ 1`.
pub fn iterated_log_exp(m: u32, x: f64, direction: Direction) -> Result<f64> {
    if m == 0 {
        return parameter("iterated log order must be positive");
    }
    match direction {
        Direction::Log => log_iter(m, x),
        Direction::Exp => exp_iter(m, x),
    }
}

/// Serialised description of a growth function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GrowthSpec {
    #[serde(rename = "log_m")]
    IteratedLog { m: u32 },
    /// Piecewise-linear table `[[x, Θ(x)], ...]`, extrapolated linearly at
    /// both ends. `threshold` and `constant` are the audit constants `M`, `C`.
    #[serde(rename = "custom")]
    Custom {
        table: Vec<[f64; 2]>,
        #[serde(default = "one")]
        threshold: f64,
        #[serde(default = "one")]
        constant: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// An admissible growth function with its constants `M` (threshold) and `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GrowthSpec", into = "GrowthSpec")]
pub struct GrowthFunction {
    spec: GrowthSpec,
    threshold_m: f64,
    constant_c: f64,
    junction: f64,
}

const EXTENSION_AT_ONE: f64 = 0.1;
const JUNCTION_LEVEL: f64 = 0.5;
/// Orders beyond this put the junction `e_m(1/2)` past `f64::MAX`.
pub const MAX_LOG_ORDER: u32 = 4;

impl GrowthFunction {
    /// `Θ = log_m` with `M = max(M_m, e_m(1/2))`, `M_1 = 1`, `M_{m+1} = e^{M_m}`,
    /// and `C = m + log_m(M_m + 2)`.
    pub fn iterated_log(m: u32) -> Result<Self> {
        if m == 0 || m > MAX_LOG_ORDER {
            return parameter(format!("log_m needs 1 ≤ m ≤ {MAX_LOG_ORDER}, got {m}"));
        }
        let junction = exp_iter(m, JUNCTION_LEVEL)?;
        let mut m_rec = 1.0f64;
        for _ in 1..m {
            m_rec = m_rec.exp();
        }
        let constant_c = m as f64 + log_iter(m, m_rec + 2.0)?;
        Ok(Self {
            spec: GrowthSpec::IteratedLog { m },
            threshold_m: m_rec.max(junction),
            constant_c,
            junction,
        })
    }

    pub fn custom(table: Vec<[f64; 2]>, threshold: f64, constant: f64) -> Result<Self> {
        if table.len() < 2 {
            return parameter("custom growth table needs at least two points");
        }
        for w in table.windows(2) {
            if !(w[1][0] > w[0][0]) || !(w[1][1] > w[0][1]) {
                return parameter("custom growth table must be strictly increasing in x and Θ");
            }
        }
        if table.iter().any(|p| !(p[1] > 0.0) || !(p[0] >= 1.0)) {
            return parameter("custom growth table needs x ≥ 1 and Θ > 0");
        }
        if !(threshold >= 1.0) || !(constant > 0.0) {
            return parameter("custom growth needs threshold M ≥ 1 and C > 0");
        }
        Ok(Self {
            spec: GrowthSpec::Custom { table, threshold, constant },
            threshold_m: threshold,
            constant_c: constant,
            junction: 1.0,
        })
    }

    pub fn spec(&self) -> &GrowthSpec {
        &self.spec
    }

    pub fn threshold_m(&self) -> f64 {
        self.threshold_m
    }

    pub fn constant_c(&self) -> f64 {
        self.constant_c
    }

    /// Point above which the closed form (or table) is used verbatim.
    pub fn junction(&self) -> f64 {
        self.junction
    }

    /// Θ(x) for `x ≥ 1`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 1.0) {
            return domain(format!("growth function evaluated at {x} < 1"));
        }
        Ok(self.value(x))
    }

    pub(crate) fn value(&self, x: f64) -> f64 {
        match &self.spec {
            GrowthSpec::IteratedLog { m } => {
                if x >= self.junction {
                    log_iter(*m, x).expect("above junction")
                } else {
                    EXTENSION_AT_ONE
                        + (JUNCTION_LEVEL - EXTENSION_AT_ONE) * (x - 1.0) / (self.junction - 1.0)
                }
            }
            GrowthSpec::Custom { table, .. } => {
                let (a, b) = table_segment(table, x);
                a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
            }
        }
    }

    /// Θ evaluated at a product `x·y` without forming it (`log_m` kinds work
    /// in log space so that `x·y > f64::MAX` is fine).
    pub fn eval_product(&self, x: f64, y: f64) -> Result<f64> {
        match &self.spec {
            GrowthSpec::IteratedLog { m } if x >= 1.0 && y >= 1.0 => {
                let ln_xy = x.ln() + y.ln();
                if ln_xy.exp() >= self.junction {
                    log_iter(m - 1, ln_xy)
                } else {
                    self.eval(x * y)
                }
            }
            _ => self.eval(x * y),
        }
    }

    /// Θ'(x). For `log_m` the closed form `Π_{j<m} 1/log_j(x) · 1/x` is only
    /// available above the junction.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        match &self.spec {
            GrowthSpec::IteratedLog { m } => {
                if !(x > self.junction) {
                    return domain(format!(
                        "closed-form derivative of log_{m} needs x > {}, got {x}",
                        self.junction
                    ));
                }
                let mut d = 1.0 / x;
                for j in 1..*m {
                    d /= log_iter(j, x)?;
                }
                Ok(d)
            }
            GrowthSpec::Custom { table, .. } => {
                if !(x > 1.0) {
                    return domain(format!("derivative needs x > 1, got {x}"));
                }
                let (a, b) = table_segment(table, x);
                Ok((b[1] - a[1]) / (b[0] - a[0]))
            }
        }
    }

    /// Numerical audit of both admissibility conditions on `xs × ys`.
    /// Grid points not above `M` are skipped and counted.
    pub fn verify_admissibility(&self, xs: &[f64], ys: &[f64]) -> AdmissibilityReport {
        let keep = |v: &&f64| **v > self.threshold_m;
        let total = xs.len() + ys.len();
        let xs: Vec<f64> = xs.iter().filter(keep).copied().collect();
        let ys: Vec<f64> = ys.iter().filter(keep).copied().collect();
        let skipped = total - xs.len() - ys.len();
        let mut defect = f64::NEG_INFINITY;
        for &x in &xs {
            for &y in &ys {
                let d = match self.eval_product(x, y) {
                    Ok(v) => v - self.value(x) - self.value(y),
                    Err(_) => f64::INFINITY,
                };
                defect = defect.max(d);
            }
        }
        let mut ratio = f64::NEG_INFINITY;
        for &x in xs.iter().chain(&ys) {
            let r = match self.derivative(x) {
                Ok(d) => x * d / self.value(x),
                Err(_) => f64::INFINITY,
            };
            ratio = ratio.max(r);
        }
        let c = self.constant_c;
        AdmissibilityReport {
            max_subadd_defect: defect,
            max_deriv_ratio: ratio,
            pass: !xs.is_empty() && !ys.is_empty() && defect <= c && ratio <= c,
            skipped,
        }
    }

    /// Smallest `C'` with `Θ(x) ≤ C'(log x + 1)` on the sample.
    pub fn log_growth_constant(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .filter(|&&x| x >= 1.0)
            .map(|&x| self.value(x) / (x.ln() + 1.0))
            .fold(0.0, f64::max)
    }
}

fn table_segment(table: &[[f64; 2]], x: f64) -> ([f64; 2], [f64; 2]) {
    let idx = table.partition_point(|p| p[0] <= x);
    let i = idx.clamp(1, table.len() - 1);
    (table[i - 1], table[i])
}

impl TryFrom<GrowthSpec> for GrowthFunction {
    type Error = Error;
    fn try_from(spec: GrowthSpec) -> Result<Self> {
        match spec {
            GrowthSpec::IteratedLog { m } => Self::iterated_log(m),
            GrowthSpec::Custom { table, threshold, constant } => Self::custom(table, threshold, constant),
        }
    }
}

impl From<GrowthFunction> for GrowthSpec {
    fn from(g: GrowthFunction) -> Self {
        g.spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub max_subadd_defect: f64,
    pub max_deriv_ratio: f64,
    pub pass: bool,
    pub skipped: usize,
}
