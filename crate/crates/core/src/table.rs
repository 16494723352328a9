//! Plot-ready numeric tables written as UTF-8 CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.push_values(row.into_iter().map(Value::Num).collect());
    }

    pub fn push_values(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Numeric column by name; text cells read as NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[idx] {
                    Value::Num(v) => *v,
                    Value::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    /// Values are printed with Rust's shortest round-trip formatting, so a
    /// reader recovers every double exactly.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match v {
                    Value::Num(x) => {
                        let _ = write!(out, "{x:?}");
                    }
                    Value::Text(t) => out.push_str(t),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_doubles() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![0.1, 1e-300]);
        t.push(vec![f64::INFINITY, -2.0]);
        let csv = t.to_csv();
        assert!(csv.starts_with("a,b\n"));
        let parsed: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed, vec![0.1, 1e-300]);
        assert_eq!(t.column("b").unwrap(), vec![1e-300, -2.0]);
        t.push_values(vec!["power".into(), 1.5.into()]);
        assert!(t.to_csv().ends_with("power,1.5\n"));
    }
}
