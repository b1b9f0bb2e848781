//! Solution-manifold learning on the synthetic 2-D objectives: uniform
//! proposal, shaped weights, weighted VAE, latent sweep, trust-region CEM.

use std::time::Instant;

use lsmo_core::generative::{self, shape_weights, ProblemSpec, SampleBatch, TrainLog, TrainLogSummary, VaeModel};
use lsmo_core::refine::{cem_gmm, cem_trust_region, CemConfig};
use lsmo_core::testfuncs::{eval_test_function, TestFunctionId};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Problem, Proposal};
use crate::error::{PipelineError, Result};
use crate::records::{SolutionRecord, Stat};
use crate::seeds;
use crate::sweep::sweep_grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    pub components: usize,
    pub scores: Stat,
    pub best: f64,
    pub means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestfuncSummary {
    pub function: TestFunctionId,
    pub num_samples: usize,
    pub degenerate_weights: bool,
    pub sweep_points: usize,
    pub raw: Stat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm: Option<GmmSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainLogSummary>,
}

#[derive(Debug, Clone)]
pub struct TestfuncOutcome {
    pub model: VaeModel,
    pub log: TrainLog,
    pub records: Vec<SolutionRecord>,
    pub summary: TestfuncSummary,
}

pub fn objective(id: TestFunctionId) -> impl Fn(&[f64]) -> f64 + Sync {
    move |x: &[f64]| eval_test_function(id, [x[0], x[1]]).unwrap_or(0.0)
}

/// `N` points uniform in the box, one row each.
pub fn uniform_samples(bounds: &[[f64; 2]], n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, bounds.len());
    for i in 0..n {
        for (j, b) in bounds.iter().enumerate() {
            out[(i, j)] = rng.random_range(b[0]..b[1]);
        }
    }
    out
}

fn function_of(cfg: &ExperimentConfig) -> Result<(TestFunctionId, &[[f64; 2]], usize)> {
    match (&cfg.problem, &cfg.proposal) {
        (Problem::Testfunc(id), Proposal::Uniform { bounds, num_samples }) => Ok((*id, bounds, *num_samples)),
        _ => Err(PipelineError::config("not a test-function config")),
    }
}

/// Samples, shapes and trains; returns the model and its log.
pub fn train_testfunc(cfg: &ExperimentConfig) -> Result<(VaeModel, TrainLog, bool)> {
    let (id, bounds, n) = function_of(cfg)?;
    let inputs = uniform_samples(bounds, n, seeds::sub_seed(cfg.seed, seeds::PROPOSAL));
    let f = objective(id);
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| f(&[inputs[(i, 0)], inputs[(i, 1)]]))
        .collect();
    let shaped = shape_weights(&scores, &cfg.shaping)?;
    let batch = SampleBatch {
        inputs,
        raw_scores: scores,
        weights: shaped.weights,
    };
    let train_cfg = cfg.train.with_seed(seeds::sub_seed(cfg.seed, seeds::TRAIN));
    let started = Instant::now();
    let (model, log) = generative::train(&batch, &train_cfg, &cfg.arch, ProblemSpec::Testfunc)?;
    log::info!("{id}: trained {} steps in {:.1}s", log.steps, started.elapsed().as_secs_f64());
    Ok((model, log, shaped.degenerate))
}

/// Decodes the sweep and, when configured, refines every point with
/// trust-region CEM.
pub fn sweep_testfunc(model: &VaeModel, cfg: &ExperimentConfig, refine: bool) -> Result<Vec<SolutionRecord>> {
    let (id, _, _) = function_of(cfg)?;
    let f = objective(id);
    let grid = sweep_grid(model.latent_dim, &cfg.sweep);
    let cem_cfg = cfg.refine.cem.filter(|_| refine);
    let started = Instant::now();
    let records = grid
        .into_par_iter()
        .enumerate()
        .map(|(i, z)| -> Result<SolutionRecord> {
            let x = generative::decode(model, &z)?;
            let mut rec = SolutionRecord::new(z, x.clone(), f(&x));
            if let Some(c) = &cem_cfg {
                refine_record(&mut rec, &f, c, cfg.seed, i)?;
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    if cem_cfg.is_some() {
        log::info!(
            "{id}: refined {} points, {:.3}s each",
            records.len(),
            started.elapsed().as_secs_f64() / records.len() as f64
        );
    }
    Ok(records)
}

/// Trust-region CEM from `rec.x_raw`; point `index` gets its own stream.
pub fn refine_record(rec: &mut SolutionRecord, f: &(impl Fn(&[f64]) -> f64 + Sync), cem: &CemConfig, seed: u64, index: usize) -> Result<()> {
    let mut c = *cem;
    c.seed = seeds::indexed_seed(seed, seeds::CEM, index as u64);
    let r = cem_trust_region(f, &rec.x_raw, &c)?;
    rec.x_refined = Some(r.x);
    rec.score_refined = Some(r.score);
    rec.finetune_iterations = c.iterations;
    Ok(())
}

/// Refines stored records in place, in parallel.
pub fn refine_records(records: &mut [SolutionRecord], cfg: &ExperimentConfig) -> Result<()> {
    let (id, _, _) = function_of(cfg)?;
    let cem = cfg
        .refine
        .cem
        .ok_or_else(|| PipelineError::config("config has no cem section"))?;
    let f = objective(id);
    records
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(i, rec)| refine_record(rec, &f, &cem, cfg.seed, i))
}

pub fn gmm_baseline(cfg: &ExperimentConfig) -> Result<Option<GmmSummary>> {
    let (id, bounds, _) = function_of(cfg)?;
    let Some(mut g) = cfg.refine.gmm else {
        return Ok(None);
    };
    g.seed = seeds::sub_seed(cfg.seed, seeds::GMM);
    let r = cem_gmm(objective(id), &g, bounds)?;
    let best = r.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(GmmSummary {
        components: g.components,
        scores: Stat::of(&r.scores),
        best,
        means: r.means,
    }))
}

pub fn summarize(id: TestFunctionId, cfg: &ExperimentConfig, records: &[SolutionRecord]) -> TestfuncSummary {
    let raw: Vec<f64> = records.iter().map(|r| r.score_raw).collect();
    let refined: Vec<f64> = records.iter().filter_map(|r| r.score_refined).collect();
    TestfuncSummary {
        function: id,
        num_samples: cfg.proposal.num_samples(),
        degenerate_weights: false,
        sweep_points: records.len(),
        raw: Stat::of(&raw),
        refined: (!refined.is_empty()).then(|| Stat::of(&refined)),
        gmm: None,
        train: None,
    }
}

/// Full test-function experiment.
pub fn run_lsmo_testfunc(cfg: &ExperimentConfig) -> Result<TestfuncOutcome> {
    let (id, _, _) = function_of(cfg)?;
    let (model, log, degenerate) = train_testfunc(cfg)?;
    let records = sweep_testfunc(&model, cfg, true)?;
    let mut summary = summarize(id, cfg, &records);
    summary.degenerate_weights = degenerate;
    summary.gmm = gmm_baseline(cfg)?;
    summary.train = model.train_log_summary.clone();
    Ok(TestfuncOutcome {
        model,
        log,
        records,
        summary,
    })
}
