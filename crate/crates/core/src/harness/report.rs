//! PASS/FAIL aggregation over experiment manifests.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io, Manifest, Result};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub config_hash: String,
    pub pass: bool,
    pub checks: usize,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub pass: bool,
}

impl Report {
    pub fn from_manifests(manifests: &[Manifest]) -> Self {
        let rows: Vec<ReportRow> = manifests
            .iter()
            .map(|m| ReportRow {
                experiment: m.experiment.clone(),
                config_hash: m.config_hash.clone(),
                pass: m.checks.iter().all(|c| c.pass),
                checks: m.checks.len(),
                failed: m
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name.clone())
                    .collect(),
            })
            .collect();
        let pass = !rows.is_empty() && rows.iter().all(|r| r.pass);
        Report { rows, pass }
    }

    /// Reads every experiment manifest in `dir`, sorted by file name.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "json")
                    && p.file_name().is_some_and(|n| n != REPORT_FILE)
            })
            .collect();
        paths.sort();
        let mut manifests = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p)?;
            // Other JSON files (for example sidecars) are skipped.
            if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
                manifests.push(m);
            }
        }
        Ok(Report::from_manifests(&manifests))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join(REPORT_FILE), self)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let status = if r.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{status}  {:<16} {} checks", r.experiment, r.checks);
            for name in &r.failed {
                let _ = writeln!(s, "      failed: {name}");
            }
        }
        let _ = writeln!(s, "{}", if self.pass { "ALL PASS" } else { "FAILURES" });
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Check, Config};

    fn manifest(name: &str, checks: Vec<Check>) -> Manifest {
        Manifest {
            experiment: name.into(),
            config_hash: "h".into(),
            master_seed: 1,
            config: Config::default(),
            summary: serde_json::Value::Null,
            pass: checks.iter().all(|c| c.pass),
            checks,
            csv: format!("{name}.csv"),
        }
    }

    #[test]
    fn aggregates_failures() {
        let ok = manifest("a", vec![Check::at_most("x", 1.0, 2.0)]);
        let bad = manifest(
            "b",
            vec![Check::at_most("y", 3.0, 2.0), Check::at_most("z", 0.0, 2.0)],
        );
        let r = Report::from_manifests(&[ok.clone(), bad]);
        assert!(!r.pass);
        assert_eq!(r.rows[1].failed, vec!["y".to_string()]);
        assert!(Report::from_manifests(&[ok]).pass);
        assert!(!Report::from_manifests(&[]).pass);
    }

    #[test]
    fn reads_manifests_from_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest("a", vec![Check::at_most("x", 1.0, 2.0)]);
        io::write_json(&dir.path().join("a.json"), &m).unwrap();
        std::fs::write(dir.path().join("other.json"), "{\"k\": 1}").unwrap();
        let r = Report::from_manifests(&[m]);
        r.write(dir.path()).unwrap();
        assert_eq!(Report::from_dir(dir.path()).unwrap(), r);
        assert!(r.render().contains("ALL PASS"));
    }
}
