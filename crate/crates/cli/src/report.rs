//! Run manifest and artifact emission.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::config::{ExperimentConfig, Subcommand};
use crate::experiments::{Audit, Outcome};
use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub cli: String,
    pub core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self { cli: env!("CARGO_PKG_VERSION").into(), core: osgood_core::VERSION.into() }
    }
}

/// Wall-clock data; the only part of a manifest that varies between reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: Versions,
    pub subcommand: Subcommand,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: ExperimentConfig,
    /// CSV files, relative to the output directory, in write order
    pub outputs: Vec<String>,
    pub audits: Vec<Audit>,
    pub results: Json,
    pub pass: bool,
    pub timing: Timing,
}

impl Manifest {
    pub fn new(sub: Subcommand, cfg: &ExperimentConfig, outcome: &Outcome, timing: Timing) -> Self {
        Self {
            tool: "osgood-lab".into(),
            version: Versions::default(),
            subcommand: sub,
            seed: cfg.seed,
            threads: cfg.threads,
            config: cfg.clone(),
            outputs: outcome.tables.iter().map(|(stem, _)| format!("{stem}.csv")).collect(),
            audits: outcome.audits.clone(),
            results: outcome.results.clone(),
            pass: outcome.audits.iter().all(|a| a.pass),
            timing,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    #[cfg(test)]
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Writes one CSV per table and the manifest into `dir`.
pub fn emit(dir: &Path, outcome: &Outcome, manifest: &Manifest) -> Result<(), Failure> {
    let io = |e: std::io::Error, what: &Path| Failure::Io(format!("{}: {e}", what.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    for (stem, table) in &outcome.tables {
        let path = dir.join(format!("{stem}.csv"));
        std::fs::write(&path, table.to_csv()).map_err(|e| io(e, &path))?;
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, manifest.to_json()).map_err(|e| io(e, &path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Audit;
    use osgood_core::table::Table;
    use serde_json::json;

    fn sample() -> (Outcome, Manifest) {
        let outcome = Outcome {
            tables: vec![("empty".into(), Table::new(&["a", "b"]))],
            audits: vec![Audit { name: "x".into(), pass: true, detail: "ok".into() }],
            results: json!({ "verdict": "diverging", "values": [1.0, 2.5e-300] }),
        };
        let cfg = ExperimentConfig { subcommand: Some(Subcommand::Acm), seed: 11, ..Default::default() };
        let m = Manifest::new(Subcommand::Acm, &cfg, &outcome, Timing { started_unix: 1, wall_seconds: 0.25 });
        (outcome, m)
    }

    #[test]
    fn manifest_round_trips() {
        let (_, m) = sample();
        assert_eq!(Manifest::from_json(&m.to_json()).unwrap(), m);
        assert!(m.pass);
        assert_eq!(m.outputs, ["empty.csv"]);
    }

    #[test]
    fn zero_row_table_is_header_only() {
        let (outcome, m) = sample();
        let dir = std::env::temp_dir().join(format!("osgood-report-{}", std::process::id()));
        emit(&dir, &outcome, &m).unwrap();
        assert_eq!(std::fs::read_to_string(dir.join("empty.csv")).unwrap(), "a,b\n");
        assert!(dir.join(MANIFEST).exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
