use std::collections::BTreeMap;
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use lsmo_core::generative::VaeModel;
use lsmo_core::refine::ChompConfig;
use lsmo_core::trajectory::Rtp;
use lsmo_core::world::{is_collision_free, trajectory_score, CostBreakdown, Trajectory};
use lsmo_pipeline::adapt::rows_to_trajectory;
use lsmo_pipeline::config::ExperimentConfig;
use lsmo_pipeline::homotopy::tip_path;
use lsmo_pipeline::planar::{solve_latent, PlanarContext};
use lsmo_pipeline::records::SolutionRecord;
use lsmo_pipeline::sweep::SweepConfig;
use lsmo_pipeline::PipelineError;
use serde::{Deserialize, Serialize};

/// Latent coordinates are clamped to `[-Z_LIMIT, Z_LIMIT]`.
pub const Z_LIMIT: f64 = 4.0;
/// Requests are snapped to this grid before generation and caching.
pub const Z_GRID: f64 = 1e-3;
/// Wall-clock cap on one fine-tuning request.
pub const FINETUNE_BUDGET: Duration = Duration::from_secs(2);

pub fn quantize(z: &[f64]) -> Vec<i64> {
    z.iter().map(|v| (v.clamp(-Z_LIMIT, Z_LIMIT) / Z_GRID).round() as i64).collect()
}

/// Grid point of a quantized z. Divides rather than multiplies so that
/// 640 maps to 0.64 exactly.
pub fn unquantize(key: &[i64]) -> Vec<f64> {
    let per_unit = (1.0 / Z_GRID).round();
    key.iter().map(|&k| k as f64 / per_unit).collect()
}

/// A generated solution as returned by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    #[serde(flatten)]
    pub record: SolutionRecord,
    /// Final trajectory: refined when fine-tuning ran, else raw.
    pub trajectory: Vec<Vec<f64>>,
    pub tip_path: Vec<[f64; 2]>,
    pub breakdown: CostBreakdown,
    pub collision_free: bool,
}

/// Model, arm and scene of one served task. The model and homotopy anchors
/// are fixed at load; only the scene changes.
pub struct Session {
    pub model: VaeModel,
    pub rtp: Rtp,
    pub context: PlanarContext,
    pub chomp: ChompConfig,
    pub sweep: SweepConfig,
}

impl Session {
    pub fn new(model: VaeModel, context: PlanarContext, chomp: ChompConfig, sweep: SweepConfig) -> Result<Self, PipelineError> {
        let rtp = model
            .rtp()?
            .ok_or_else(|| PipelineError::config("model was not trained on trajectories"))?;
        Ok(Session {
            model,
            rtp,
            context,
            chomp,
            sweep,
        })
    }

    /// Arm, scene and cost from `cfg`; start, goal and step count from the
    /// model so the two cannot disagree.
    pub fn from_config(cfg: &ExperimentConfig, model: VaeModel) -> Result<Self, PipelineError> {
        let meta = model
            .rtp_meta
            .clone()
            .ok_or_else(|| PipelineError::config("model was not trained on trajectories"))?;
        let from_cfg = PlanarContext::from_config(cfg)?;
        let context = PlanarContext::new(from_cfg.arm, from_cfg.scene, from_cfg.cost, meta.q_start, meta.q_goal, meta.steps)?;
        let chomp = cfg.refine.chomp.unwrap_or_default();
        Session::new(model, context, chomp, cfg.sweep.clone())
    }

    pub fn solve(&self, z: &[f64], finetune: bool) -> Result<Solution, PipelineError> {
        let deadline = Instant::now() + FINETUNE_BUDGET;
        let chomp = finetune.then_some(&self.chomp);
        let record = solve_latent(&self.model, &self.rtp, &self.context, z, chomp, Some(deadline))?;
        self.describe(record)
    }

    fn describe(&self, record: SolutionRecord) -> Result<Solution, PipelineError> {
        let rows = record.final_trajectory().cloned().unwrap_or_default();
        let traj = rows_to_trajectory(&rows)?;
        let (_, breakdown) = trajectory_score(&traj, &self.context.arm, &self.context.scene, &self.context.cost)?;
        Ok(Solution {
            collision_free: record.final_collision_free().unwrap_or(false),
            tip_path: tip_path(&traj, &self.context.arm),
            trajectory: rows,
            breakdown,
            record,
        })
    }

    fn check(&self, rows: &[Vec<f64>]) -> Result<(f64, bool), PipelineError> {
        let traj: Trajectory = rows_to_trajectory(rows)?;
        Ok((
            self.context.score(&traj)?,
            is_collision_free(&traj, &self.context.arm, &self.context.scene),
        ))
    }

    /// Recomputes scores and collision flags of `s` against the current
    /// scene. Returns whether the final collision flag changed.
    pub fn revalidate(&self, s: &mut Solution) -> Result<bool, PipelineError> {
        let before = s.collision_free;
        let r = &mut s.record;
        if let Some(rows) = &r.trajectory_raw {
            let (score, free) = self.check(rows)?;
            r.score_raw = score;
            r.collision_free_raw = Some(free);
        }
        if let Some(rows) = &r.trajectory_refined {
            let (score, free) = self.check(rows)?;
            r.score_refined = Some(score);
            r.collision_free_refined = Some(free);
        }
        let record = s.record.clone();
        *s = self.describe(record)?;
        Ok(s.collision_free != before)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CacheEntry {
    pub solution: Solution,
    /// Set when a scene edit turned this solution from free to colliding;
    /// a fine-tuning request then recomputes instead of serving it.
    pub stale: bool,
}

/// Shared server state. `session` is `None` until loading finishes.
pub struct Store {
    pub(crate) session: RwLock<Option<Session>>,
    pub(crate) cache: Mutex<BTreeMap<(Vec<i64>, bool), CacheEntry>>,
}

impl Store {
    pub fn empty() -> Self {
        Store {
            session: RwLock::new(None),
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_session(session: Session) -> Self {
        let s = Store::empty();
        s.install(session);
        s
    }

    /// Takes the scene lock the way an edit does; generation requests made
    /// while the guard lives are refused.
    pub fn edit_guard(&self) -> std::sync::RwLockWriteGuard<'_, Option<Session>> {
        self.session.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn install(&self, session: Session) {
        *self.session.write().unwrap_or_else(|e| e.into_inner()) = Some(session);
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}
