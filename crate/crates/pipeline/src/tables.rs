//! CSV and JSON summaries of finished runs.

use std::collections::BTreeMap;
use std::path::Path;

use lsmo_core::testfuncs::TestFunctionId;
use lsmo_core::trajectory::{build_feature_matrix, condition_number, BasisConfig};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::output::write_json;
use crate::records::SolutionRecord;
use crate::testfunc::TestfuncSummary;

pub const TABLE1_METHODS: [&str; 3] = ["LSMO", "LSMO+refine", "GMM-CEM"];

/// Condition-number grid: time steps and basis count are fixed.
pub const TABLE5_STEPS: usize = 50;
pub const TABLE5_BASIS: usize = 30;

fn csv_err(e: csv::Error) -> PipelineError {
    PipelineError::Csv(e)
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| PipelineError::io("flushing csv", e.into_error()))?;
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(format!("writing {}", path.display()), e))
}

/// One row per method, one column per test function. Functions without a
/// summary, or methods that did not run, leave an empty cell.
pub fn table1_rows(summaries: &[TestfuncSummary]) -> Vec<Vec<String>> {
    let by_id: BTreeMap<String, &TestfuncSummary> = summaries.iter().map(|s| (s.function.to_string(), s)).collect();
    TABLE1_METHODS
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let mut row = vec![name.to_string()];
            for id in TestFunctionId::ALL {
                let cell = by_id.get(&id.to_string()).and_then(|s| match m {
                    0 => Some(s.raw.display()),
                    1 => s.refined.map(|r| r.display()),
                    _ => s.gmm.as_ref().map(|g| g.scores.display()),
                });
                row.push(cell.unwrap_or_default());
            }
            row
        })
        .collect()
}

pub fn write_table1(path: &Path, summaries: &[TestfuncSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string()];
    header.extend(TestFunctionId::ALL.iter().map(|id| id.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for row in table1_rows(summaries) {
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub basis: String,
    pub parameter: f64,
    pub condition_number: f64,
}

/// κ(Φ) for the logistic and exponential bases at the fixed grid.
pub fn table5_rows() -> Result<Vec<ConditionRow>> {
    let grid = [
        ("logistic", 50.0, BasisConfig::logistic(TABLE5_BASIS, 50.0)),
        ("logistic", 100.0, BasisConfig::logistic(TABLE5_BASIS, 100.0)),
        ("exponential", 0.005, BasisConfig::exponential(TABLE5_BASIS, 0.005)),
        ("exponential", 0.01, BasisConfig::exponential(TABLE5_BASIS, 0.01)),
    ];
    grid.into_iter()
        .map(|(name, p, cfg)| {
            let fm = build_feature_matrix(&cfg, TABLE5_STEPS)?;
            Ok(ConditionRow {
                basis: name.into(),
                parameter: p,
                condition_number: condition_number(&fm.phi),
            })
        })
        .collect()
}

pub fn write_table5(path: &Path) -> Result<Vec<ConditionRow>> {
    let rows = table5_rows()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["basis", "parameter", "steps", "basis_count", "condition_number"])
        .map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.basis.clone(),
            r.parameter.to_string(),
            TABLE5_STEPS.to_string(),
            TABLE5_BASIS.to_string(),
            format!("{:.4e}", r.condition_number),
        ])
        .map_err(csv_err)?;
    }
    finish(path, w)?;
    Ok(rows)
}

/// All records keyed by run name; keys are sorted so output is stable.
pub fn write_solutions(path: &Path, runs: &BTreeMap<String, Vec<SolutionRecord>>) -> Result<()> {
    write_json(path, runs)
}
