//! Experiment configuration files. Relative paths inside a config resolve
//! against the directory that holds the config.

use std::path::{Path, PathBuf};

use lsmo_core::generative::{AdamConfig, Architecture, ShapingConfig, TrainConfig};
use lsmo_core::refine::{ChompConfig, CemConfig};
use lsmo_core::testfuncs::TestFunctionId;
use lsmo_core::trajectory::{BasisConfig, ScalingConfig};
use lsmo_core::world::{ArmModel, CostConfig, Obstacle, Scene};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::sweep::SweepConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Problem {
    Testfunc(TestFunctionId),
    Planar(PlanarProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarProblem {
    /// File holding `obstacles` and `bounds`.
    pub scene: PathBuf,
    /// File holding `links`, `body_point_spacing` and `base`; defaults to
    /// the scene file, which may carry both.
    #[serde(default)]
    pub arm: Option<PathBuf>,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    #[serde(default)]
    pub cost: CostConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Proposal {
    /// Uniform box, one `[low, high]` pair per coordinate.
    Uniform { bounds: Vec<[f64; 2]>, num_samples: usize },
    /// Smoothness-covariance Gaussian around the straight-line trajectory.
    Trajectory {
        scale_a: f64,
        num_samples: usize,
        steps: usize,
        basis: BasisConfig,
        #[serde(default)]
        scaling: ScalingConfig,
    },
}

impl Proposal {
    pub fn num_samples(&self) -> usize {
        match self {
            Proposal::Uniform { num_samples, .. } | Proposal::Trajectory { num_samples, .. } => *num_samples,
        }
    }
}

/// Training settings; the seed comes from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub gamma: f64,
    #[serde(default)]
    pub capacity_start: f64,
    #[serde(default)]
    pub capacity_end: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            capacity_start: self.capacity_start,
            capacity_end: self.capacity_end,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            adam: self.adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSection {
    /// Trust-region CEM applied to every test-function sweep point.
    #[serde(default)]
    pub cem: Option<CemConfig>,
    /// Mixture CEM baseline for test functions.
    #[serde(default)]
    pub gmm: Option<CemConfig>,
    /// CHOMP applied to colliding planar outputs.
    #[serde(default)]
    pub chomp: Option<ChompConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub proposal: Proposal,
    pub shaping: ShapingConfig,
    pub train: TrainSection,
    pub arch: Architecture,
    #[serde(default)]
    pub refine: RefineSection,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Arm description as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFile {
    pub links: Vec<f64>,
    pub body_point_spacing: f64,
    #[serde(default)]
    pub base: [f64; 2],
}

impl ArmFile {
    pub fn arm(&self) -> Result<ArmModel> {
        Ok(ArmModel::new(self.links.clone(), self.body_point_spacing, self.base)?)
    }
}

/// Obstacles and workspace bounds as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub bounds: [[f64; 2]; 2],
}

impl SceneFile {
    pub fn scene(&self) -> Result<Scene> {
        Ok(Scene::new(self.obstacles.clone(), self.bounds)?)
    }

    pub fn from_scene(scene: &Scene) -> Self {
        SceneFile {
            obstacles: scene.obstacles.clone(),
            bounds: scene.bounds,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(format!("reading {}", path.display()), e))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    // A missing or unreadable config file is a configuration problem, not I/O.
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))
}

pub fn load_arm(path: &Path) -> Result<ArmModel> {
    parse::<ArmFile>(path)?.arm().map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    parse::<SceneFile>(path)?.scene().map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    /// Reads a config and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = parse(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Problem::Planar(p) = &mut cfg.problem {
            p.scene = base.join(&p.scene);
            p.arm = p.arm.as_ref().map(|a| base.join(a));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: lsmo_core::Error| PipelineError::config(e.to_string());
        self.sweep.validate()?;
        if !(self.shaping.alpha > 0.0) {
            return Err(PipelineError::config("shaping alpha must be positive"));
        }
        self.train.with_seed(0).validate().map_err(bad)?;
        if self.proposal.num_samples() < 2 {
            return Err(PipelineError::config("proposal needs at least two samples"));
        }
        for c in [&self.refine.cem, &self.refine.gmm].into_iter().flatten() {
            c.validate().map_err(bad)?;
        }
        if let Some(c) = &self.refine.chomp {
            c.validate().map_err(bad)?;
        }
        match (&self.problem, &self.proposal) {
            (Problem::Testfunc(_), Proposal::Uniform { bounds, .. }) => {
                if bounds.len() != 2 || bounds.iter().any(|b| !(b[1] > b[0])) {
                    return Err(PipelineError::config("test functions need two increasing bounds"));
                }
            }
            (Problem::Planar(p), Proposal::Trajectory { scale_a, steps, basis, scaling, .. }) => {
                if p.q_start.len() != p.q_goal.len() {
                    return Err(PipelineError::config("q_start and q_goal differ in length"));
                }
                if !(*scale_a >= 0.0) || *steps < 3 {
                    return Err(PipelineError::config("trajectory proposal needs scale_a >= 0 and steps >= 3"));
                }
                basis.validate().map_err(bad)?;
                scaling.validate().map_err(bad)?;
                if !p.scene.exists() {
                    return Err(PipelineError::config(format!("scene file {} not found", p.scene.display())));
                }
                if let Some(a) = &p.arm {
                    if !a.exists() {
                        return Err(PipelineError::config(format!("arm file {} not found", a.display())));
                    }
                }
            }
            _ => return Err(PipelineError::config("proposal kind does not match the problem")),
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self
    }
}
