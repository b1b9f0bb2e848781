//! Motion planning for the planar arm: smoothness-covariance proposals, RTP
//! coordinates, weighted VAE, latent sweep and CHOMP fine-tuning.

use std::collections::BTreeMap;
use std::time::Instant;

use lsmo_core::generative::{self, shape_weights, ProblemSpec, RtpMeta, SampleBatch, TrainLog, TrainLogSummary, VaeModel};
use lsmo_core::refine::{chomp_finetune_until, ChompConfig};
use lsmo_core::trajectory::{baseline, flatten_weights, sample_proposals, ProposalConfig, Rtp};
use lsmo_core::world::{is_collision_free, trajectory_score, ArmModel, CostConfig, Scene, Trajectory};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_arm, load_scene, ExperimentConfig, PlanarProblem, Problem, Proposal};
use crate::adapt::rows_to_trajectory;
use crate::error::{PipelineError, Result};
use crate::homotopy::{anchors_for, trajectory_label, Anchors};
use crate::records::{SolutionRecord, Stat};
use crate::seeds;
use crate::sweep::{sweep_grid, SweepConfig};

/// Everything needed to score and label trajectories of one planning task.
#[derive(Debug, Clone)]
pub struct PlanarContext {
    pub arm: ArmModel,
    pub scene: Scene,
    pub cost: CostConfig,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    pub steps: usize,
    pub anchors: Anchors,
}

impl PlanarContext {
    pub fn new(arm: ArmModel, scene: Scene, cost: CostConfig, q_start: Vec<f64>, q_goal: Vec<f64>, steps: usize) -> Result<Self> {
        if q_start.len() != arm.dof() || q_goal.len() != arm.dof() {
            return Err(PipelineError::config(format!(
                "start/goal need {} joint values for this arm",
                arm.dof()
            )));
        }
        let reference = Trajectory::with_default_dt(baseline(&q_start, &q_goal, steps))?;
        let anchors = anchors_for(&reference, &arm, &scene);
        Ok(PlanarContext {
            arm,
            scene,
            cost,
            q_start,
            q_goal,
            steps,
            anchors,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let (p, steps) = planar_parts(cfg)?;
        let arm = load_arm(p.arm.as_ref().unwrap_or(&p.scene))?;
        let scene = load_scene(&p.scene)?;
        Self::new(arm, scene, p.cost, p.q_start.clone(), p.q_goal.clone(), steps)
    }

    pub fn score(&self, traj: &Trajectory) -> Result<f64> {
        Ok(trajectory_score(traj, &self.arm, &self.scene, &self.cost)?.0)
    }

    pub fn label(&self, traj: &Trajectory) -> String {
        trajectory_label(traj, &self.arm, &self.anchors)
    }
}

fn planar_parts(cfg: &ExperimentConfig) -> Result<(&PlanarProblem, usize)> {
    match (&cfg.problem, &cfg.proposal) {
        (Problem::Planar(p), Proposal::Trajectory { steps, .. }) => Ok((p, *steps)),
        _ => Err(PipelineError::config("not a planar config")),
    }
}

pub fn rtp_meta(cfg: &ExperimentConfig) -> Result<RtpMeta> {
    let (p, _) = planar_parts(cfg)?;
    let Proposal::Trajectory { steps, basis, scaling, .. } = &cfg.proposal else {
        unreachable!()
    };
    Ok(RtpMeta {
        basis: basis.clone(),
        scaling: *scaling,
        q_start: p.q_start.clone(),
        q_goal: p.q_goal.clone(),
        steps: *steps,
        dof: p.q_start.len(),
    })
}

/// Statistics of the proposal batch the model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSummary {
    pub num_samples: usize,
    pub scores: Stat,
    pub best_score: f64,
    pub collision_free_fraction: f64,
    pub degenerate_weights: bool,
}

pub struct PlanarTraining {
    pub model: VaeModel,
    pub log: TrainLog,
    pub proposals: ProposalSummary,
}

pub fn train_planar(cfg: &ExperimentConfig, ctx: &PlanarContext) -> Result<PlanarTraining> {
    let Proposal::Trajectory { scale_a, num_samples, steps, .. } = &cfg.proposal else {
        return Err(PipelineError::config("not a planar config"));
    };
    let meta = rtp_meta(cfg)?;
    let rtp = meta.rtp()?;
    let started = Instant::now();
    let proposal = ProposalConfig {
        scale_a: *scale_a,
        num_samples: *num_samples,
        seed: seeds::sub_seed(cfg.seed, seeds::PROPOSAL),
    };
    let trajectories = sample_proposals(&ctx.q_start, &ctx.q_goal, *steps, &proposal)?;
    let evaluated: Vec<(f64, bool, Vec<f64>)> = trajectories
        .par_iter()
        .map(|t| -> Result<_> {
            let score = ctx.score(t)?;
            let free = is_collision_free(t, &ctx.arm, &ctx.scene);
            let w = rtp.fit_weights(t, &ctx.q_start, &ctx.q_goal)?;
            Ok((score, free, flatten_weights(&w)))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = meta.basis.count() * meta.dof;
    let mut inputs = DMatrix::zeros(evaluated.len(), dim);
    for (i, (_, _, w)) in evaluated.iter().enumerate() {
        for (j, v) in w.iter().enumerate() {
            inputs[(i, j)] = *v;
        }
    }
    let scores: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let free = evaluated.iter().filter(|e| e.1).count();
    let shaped = shape_weights(&scores, &cfg.shaping)?;
    log::info!(
        "sampled and scored {} proposals in {:.1}s",
        evaluated.len(),
        started.elapsed().as_secs_f64()
    );
    let proposals = ProposalSummary {
        num_samples: evaluated.len(),
        scores: Stat::of(&scores),
        best_score: scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        collision_free_fraction: free as f64 / evaluated.len() as f64,
        degenerate_weights: shaped.degenerate,
    };
    let batch = SampleBatch {
        inputs,
        raw_scores: scores,
        weights: shaped.weights,
    };
    let train_cfg = cfg.train.with_seed(seeds::sub_seed(cfg.seed, seeds::TRAIN));
    let started = Instant::now();
    let (model, log) = generative::train(&batch, &train_cfg, &cfg.arch, ProblemSpec::Rtp(meta))?;
    log::info!(
        "trained {} steps in {:.2} min",
        log.steps,
        started.elapsed().as_secs_f64() / 60.0
    );
    Ok(PlanarTraining { model, log, proposals })
}

/// Generates the trajectory for `z`, scores it, and fine-tunes it with CHOMP
/// when it collides and `chomp` is given.
pub fn solve_latent(
    model: &VaeModel,
    rtp: &Rtp,
    ctx: &PlanarContext,
    z: &[f64],
    chomp: Option<&ChompConfig>,
    deadline: Option<Instant>,
) -> Result<SolutionRecord> {
    let generated = generative::generate_with(model, Some(rtp), z)?;
    let traj = generated
        .trajectory
        .ok_or_else(|| PipelineError::config("model does not decode trajectories"))?;
    let mut rec = SolutionRecord::new(z.to_vec(), generated.x, ctx.score(&traj)?);
    let free = is_collision_free(&traj, &ctx.arm, &ctx.scene);
    rec.collision_free_raw = Some(free);
    rec.trajectory_raw = Some(traj.rows());
    rec.homotopy_label = Some(ctx.label(&traj));
    if let Some(c) = chomp {
        refine_record(&mut rec, ctx, rtp, c, deadline)?;
    }
    Ok(rec)
}

/// CHOMP on the raw trajectory of `rec` when it collides; collision-free
/// records are left alone. Relabels the record after refinement.
pub fn refine_record(
    rec: &mut SolutionRecord,
    ctx: &PlanarContext,
    rtp: &Rtp,
    chomp: &ChompConfig,
    deadline: Option<Instant>,
) -> Result<()> {
    let Some(rows) = &rec.trajectory_raw else {
        return Err(PipelineError::config("record has no trajectory"));
    };
    let traj = rows_to_trajectory(rows)?;
    if is_collision_free(&traj, &ctx.arm, &ctx.scene) {
        rec.collision_free_raw = Some(true);
        return Ok(());
    }
    let r = chomp_finetune_until(&traj, &ctx.arm, &ctx.scene, &ctx.cost, chomp, deadline)?;
    let w = rtp.fit_weights(&r.trajectory, &ctx.q_start, &ctx.q_goal)?;
    rec.x_refined = Some(flatten_weights(&w));
    rec.score_refined = Some(ctx.score(&r.trajectory)?);
    rec.collision_free_refined = Some(r.collision_free);
    rec.finetune_iterations = r.iterations;
    rec.not_converged = !r.collision_free;
    rec.homotopy_label = Some(ctx.label(&r.trajectory));
    rec.trajectory_refined = Some(r.trajectory.rows());
    Ok(())
}

pub fn refine_records(records: &mut [SolutionRecord], ctx: &PlanarContext, rtp: &Rtp, chomp: &ChompConfig) -> Result<()> {
    records
        .par_iter_mut()
        .try_for_each(|rec| refine_record(rec, ctx, rtp, chomp, None))
}

pub fn sweep_planar(model: &VaeModel, ctx: &PlanarContext, sweep: &SweepConfig, chomp: Option<&ChompConfig>) -> Result<Vec<SolutionRecord>> {
    let rtp = model
        .rtp()?
        .ok_or_else(|| PipelineError::config("model does not decode trajectories"))?;
    let started = Instant::now();
    let grid = sweep_grid(model.latent_dim, sweep);
    let records = grid
        .par_iter()
        .map(|z| solve_latent(model, &rtp, ctx, z, chomp, None))
        .collect::<Result<Vec<_>>>()?;
    log::info!(
        "generated {} solutions, {:.3}s each",
        records.len(),
        started.elapsed().as_secs_f64() / records.len().max(1) as f64
    );
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarSummary {
    pub sweep_points: usize,
    pub proposals: ProposalSummary,
    pub raw: Stat,
    pub final_scores: Stat,
    pub collision_free_raw_fraction: f64,
    pub collision_free_final_fraction: f64,
    pub homotopy_counts: BTreeMap<String, usize>,
    pub anchors: Anchors,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainLogSummary>,
}

pub fn summarize(records: &[SolutionRecord], proposals: ProposalSummary, ctx: &PlanarContext) -> PlanarSummary {
    let n = records.len().max(1) as f64;
    let raw: Vec<f64> = records.iter().map(|r| r.score_raw).collect();
    let fin: Vec<f64> = records.iter().map(|r| r.final_score()).collect();
    let mut homotopy_counts = BTreeMap::new();
    for r in records {
        if r.final_collision_free() == Some(true) {
            if let Some(l) = &r.homotopy_label {
                *homotopy_counts.entry(l.clone()).or_insert(0) += 1;
            }
        }
    }
    PlanarSummary {
        sweep_points: records.len(),
        proposals,
        raw: Stat::of(&raw),
        final_scores: Stat::of(&fin),
        collision_free_raw_fraction: records.iter().filter(|r| r.collision_free_raw == Some(true)).count() as f64 / n,
        collision_free_final_fraction: records.iter().filter(|r| r.final_collision_free() == Some(true)).count() as f64 / n,
        homotopy_counts,
        anchors: ctx.anchors.clone(),
        train: None,
    }
}

pub struct PlanarOutcome {
    pub model: VaeModel,
    pub log: TrainLog,
    pub records: Vec<SolutionRecord>,
    pub summary: PlanarSummary,
    pub context: PlanarContext,
}

/// Full planning experiment.
pub fn run_mpsm(cfg: &ExperimentConfig) -> Result<PlanarOutcome> {
    let ctx = PlanarContext::from_config(cfg)?;
    let trained = train_planar(cfg, &ctx)?;
    let records = sweep_planar(&trained.model, &ctx, &cfg.sweep, cfg.refine.chomp.as_ref())?;
    let mut summary = summarize(&records, trained.proposals, &ctx);
    summary.train = trained.model.train_log_summary.clone();
    Ok(PlanarOutcome {
        model: trained.model,
        log: trained.log,
        records,
        summary,
        context: ctx,
    })
}
