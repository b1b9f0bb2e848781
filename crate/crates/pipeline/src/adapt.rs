//! Re-validation of a stored solution set against a changed scene.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use lsmo_core::world::{is_collision_free, ArmModel, Scene, Trajectory};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::records::SolutionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    /// Indices into the input records that are still collision-free.
    pub survivors: Vec<usize>,
    pub checked: usize,
    /// Surviving records per homotopy label.
    pub class_counts: BTreeMap<String, usize>,
    /// Wall time of each check, in input order. Kept out of the serialized
    /// report so artifacts stay reproducible.
    #[serde(skip)]
    pub check_times: Vec<Duration>,
}

impl AdaptationReport {
    pub fn max_check_time(&self) -> Duration {
        self.check_times.iter().copied().max().unwrap_or_default()
    }
}

pub fn rows_to_trajectory(rows: &[Vec<f64>]) -> Result<Trajectory> {
    let dof = rows.first().map_or(0, Vec::len);
    let m = DMatrix::from_fn(rows.len(), dof, |r, c| rows[r][c]);
    Ok(Trajectory::with_default_dt(m)?)
}

/// Checks every record that was collision-free before against `new_scene`.
/// Records without a trajectory or already colliding are skipped.
pub fn adaptation_check(records: &[SolutionRecord], new_scene: &Scene, arm: &ArmModel) -> Result<AdaptationReport> {
    let mut report = AdaptationReport {
        survivors: Vec::new(),
        checked: 0,
        class_counts: BTreeMap::new(),
        check_times: Vec::new(),
    };
    for (i, rec) in records.iter().enumerate() {
        let (Some(rows), Some(true)) = (rec.final_trajectory(), rec.final_collision_free()) else {
            continue;
        };
        let traj = rows_to_trajectory(rows)?;
        let started = Instant::now();
        let free = is_collision_free(&traj, arm, new_scene);
        report.check_times.push(started.elapsed());
        report.checked += 1;
        if free {
            report.survivors.push(i);
            let label = rec.homotopy_label.clone().unwrap_or_default();
            *report.class_counts.entry(label).or_insert(0) += 1;
        }
    }
    Ok(report)
}
