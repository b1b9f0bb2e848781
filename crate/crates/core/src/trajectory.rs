//! Residual trajectory primitives (RTP) and the smoothness-shaped proposal.
//!
//! A trajectory is written as `ξ = ξ_base(q_start, q_goal) + F Φ w` where
//! `ξ_base` interpolates the endpoints linearly, `Φ` (T × B) evaluates B basis
//! functions on a uniform time grid over `[0, 1]`, and `F = diag(s(t))` with a
//! ramp `s` that vanishes at both ends, so every `w` keeps the endpoints fixed.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Trajectory;

/// Singular values below `RCOND * σ_max` are dropped when fitting weights.
const RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// `1 / (1 + exp(slope (t - c)))`
    Logistic { slope: f64 },
    /// `exp(-(t - c)^2 / bandwidth)`
    Exponential { bandwidth: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    #[serde(flatten)]
    pub kind: BasisKind,
    pub centers: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

impl BasisConfig {
    pub fn logistic(count: usize, slope: f64) -> Self {
        BasisConfig {
            kind: BasisKind::Logistic { slope },
            centers: linspace(0.0, 1.0, count),
        }
    }

    pub fn exponential(count: usize, bandwidth: f64) -> Self {
        BasisConfig {
            kind: BasisKind::Exponential { bandwidth },
            centers: linspace(0.0, 1.0, count),
        }
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.len() < 2 {
            return Err(Error::invalid("need at least two basis functions"));
        }
        if self.centers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("basis centers must be strictly increasing"));
        }
        match self.kind {
            BasisKind::Logistic { slope } if !(slope > 0.0) => Err(Error::invalid("logistic slope must be positive")),
            BasisKind::Exponential { bandwidth } if !(bandwidth > 0.0) => {
                Err(Error::invalid("exponential bandwidth must be positive"))
            }
            _ => Ok(()),
        }
    }
}

pub fn eval_basis(cfg: &BasisConfig, t: f64) -> Vec<f64> {
    cfg.centers
        .iter()
        .map(|&c| match cfg.kind {
            BasisKind::Logistic { slope } => 1.0 / (1.0 + (slope * (t - c)).exp()),
            BasisKind::Exponential { bandwidth } => (-(t - c).powi(2) / bandwidth).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub phi: DMatrix<f64>,
    pub times: Vec<f64>,
}

pub fn build_feature_matrix(cfg: &BasisConfig, steps: usize) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if steps < 2 {
        return Err(Error::invalid("feature matrix needs at least two time steps"));
    }
    let times = linspace(0.0, 1.0, steps);
    let mut phi = DMatrix::zeros(steps, cfg.count());
    for (row, &t) in times.iter().enumerate() {
        for (col, v) in eval_basis(cfg, t).into_iter().enumerate() {
            phi[(row, col)] = v;
        }
    }
    Ok(FeatureMatrix { phi, times })
}

/// Ratio of the largest to the smallest singular value (2-norm condition
/// number). Returns `+∞` when the smallest singular value underflows.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-300) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Endpoint ramp `s(t)`: `slope·t` up to `eps`, 1 in the middle, and
/// `slope·(1 - t)` over the last `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub eps: f64,
    pub slope: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig { eps: 0.1, slope: 10.0 }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::invalid("scaling eps must lie in (0, 0.5)"));
        }
        if (self.slope * self.eps - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("scaling slope must equal 1 / eps"));
        }
        Ok(())
    }
}

pub fn scaling_value(cfg: &ScalingConfig, t: f64) -> f64 {
    if t < cfg.eps {
        cfg.slope * t
    } else if t < 1.0 - cfg.eps {
        1.0
    } else {
        cfg.slope * (1.0 - t)
    }
}

/// Start/goal interpolation, exact at both ends.
pub fn baseline(q_start: &[f64], q_goal: &[f64], steps: usize) -> DMatrix<f64> {
    let times = linspace(0.0, 1.0, steps);
    DMatrix::from_fn(steps, q_start.len(), |t, j| {
        let s = times[t];
        (1.0 - s) * q_start[j] + s * q_goal[j]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtpParams {
    /// B × D residual weights.
    pub w: DMatrix<f64>,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    pub basis: BasisConfig,
    pub scaling: ScalingConfig,
}

/// Precomputed design `F Φ` and its pseudo-inverse for one `(basis, T)`.
#[derive(Debug, Clone)]
pub struct Rtp {
    basis: BasisConfig,
    scaling: ScalingConfig,
    design: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
}

impl Rtp {
    pub fn new(basis: BasisConfig, scaling: ScalingConfig, steps: usize) -> Result<Self> {
        scaling.validate()?;
        let features = build_feature_matrix(&basis, steps)?;
        let mut design = features.phi;
        for (row, &t) in features.times.iter().enumerate() {
            let s = scaling_value(&scaling, t);
            design.row_mut(row).scale_mut(s);
        }
        let svd = design.clone().svd(true, true);
        let cutoff = svd.singular_values.max() * RCOND;
        let pseudo_inverse = svd
            .pseudo_inverse(cutoff)
            .map_err(|e| Error::invalid(format!("pseudo-inverse failed: {e}")))?;
        Ok(Rtp {
            basis,
            scaling,
            design,
            pseudo_inverse,
        })
    }

    pub fn steps(&self) -> usize {
        self.design.nrows()
    }

    pub fn basis_count(&self) -> usize {
        self.design.ncols()
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    pub fn scaling(&self) -> &ScalingConfig {
        &self.scaling
    }

    /// The T × B matrix `F Φ`.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn reconstruct_weights(&self, w: &DMatrix<f64>, q_start: &[f64], q_goal: &[f64]) -> Result<Trajectory> {
        Error::check_dim("rtp weights rows", self.basis_count(), w.nrows())?;
        Error::check_dim("rtp weights cols", q_start.len(), w.ncols())?;
        Error::check_dim("goal configuration", q_start.len(), q_goal.len())?;
        let configurations = baseline(q_start, q_goal, self.steps()) + &self.design * w;
        Trajectory::with_default_dt(configurations)
    }

    pub fn reconstruct(&self, params: &RtpParams) -> Result<Trajectory> {
        self.reconstruct_weights(&params.w, &params.q_start, &params.q_goal)
    }

    /// Least-squares weights whose reconstruction best matches `traj`.
    pub fn fit_weights(&self, traj: &Trajectory, q_start: &[f64], q_goal: &[f64]) -> Result<DMatrix<f64>> {
        Error::check_dim("trajectory length", self.steps(), traj.steps())?;
        Error::check_dim("trajectory dof", q_start.len(), traj.dof())?;
        let residual = &traj.configurations - baseline(q_start, q_goal, self.steps());
        Ok(&self.pseudo_inverse * residual)
    }

    pub fn fit(&self, traj: &Trajectory, q_start: &[f64], q_goal: &[f64]) -> Result<RtpParams> {
        Ok(RtpParams {
            w: self.fit_weights(traj, q_start, q_goal)?,
            q_start: q_start.to_vec(),
            q_goal: q_goal.to_vec(),
            basis: self.basis.clone(),
            scaling: self.scaling,
        })
    }
}

pub fn reconstruct(params: &RtpParams, steps: usize) -> Result<Trajectory> {
    Rtp::new(params.basis.clone(), params.scaling, steps)?.reconstruct(params)
}

pub fn fit(
    traj: &Trajectory,
    q_start: &[f64],
    q_goal: &[f64],
    basis: &BasisConfig,
    scaling: &ScalingConfig,
) -> Result<RtpParams> {
    Rtp::new(basis.clone(), *scaling, traj.steps())?.fit(traj, q_start, q_goal)
}

/// Tridiagonal second-difference matrix with 2 on the diagonal and -1 beside it.
pub fn build_a(steps: usize) -> DMatrix<f64> {
    DMatrix::from_fn(steps, steps, |i, j| {
        if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// `Aᵀ A`, the precision of the proposal and the CHOMP metric.
pub fn smoothness_metric(steps: usize) -> DMatrix<f64> {
    let a = build_a(steps);
    a.transpose() * a
}

/// `Σ = (Aᵀ A)⁻¹`.
pub fn build_sigma(steps: usize) -> Result<DMatrix<f64>> {
    if steps < 2 {
        return Err(Error::invalid("sigma needs at least two steps"));
    }
    let chol = smoothness_metric(steps)
        .cholesky()
        .ok_or_else(|| Error::invalid("AᵀA is not positive definite"))?;
    let inv = chol.inverse();
    // Symmetrise away rounding noise.
    Ok((&inv + inv.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    /// Multiplier on the unit-peak covariance: the largest per-step variance.
    pub scale_a: f64,
    pub num_samples: usize,
    pub seed: u64,
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_a >= 0.0 && self.scale_a.is_finite()) {
            return Err(Error::invalid("proposal scale must be non-negative"));
        }
        if self.num_samples == 0 {
            return Err(Error::invalid("proposal needs at least one sample"));
        }
        Ok(())
    }
}

/// Gaussian proposal `N(ξ_base, a Σ̂)` where `Σ̂` is `Σ` rescaled to unit
/// largest diagonal entry. Each joint's time series is drawn independently.
#[derive(Debug, Clone)]
pub struct ProposalSampler {
    chol_lower: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl ProposalSampler {
    pub fn new(steps: usize) -> Result<Self> {
        let sigma = build_sigma(steps)?;
        let peak = sigma.diagonal().max();
        let covariance = sigma / peak;
        let chol_lower = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("proposal covariance is not positive definite"))?
            .l();
        Ok(ProposalSampler { chol_lower, covariance })
    }

    /// Normalised covariance `Σ̂`.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Sample `index` of the stream seeded by `seed`; independent of how many
    /// other samples are drawn.
    pub fn sample(
        &self,
        q_start: &[f64],
        q_goal: &[f64],
        scale_a: f64,
        seed: u64,
        index: u64,
    ) -> Result<Trajectory> {
        let steps = self.chol_lower.nrows();
        let dof = q_start.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let noise = DMatrix::from_fn(steps, dof, |_, _| StandardNormal.sample(&mut rng));
        let mut configurations = baseline(q_start, q_goal, steps) + (&self.chol_lower * noise) * scale_a.sqrt();
        for j in 0..dof {
            configurations[(0, j)] = q_start[j];
            configurations[(steps - 1, j)] = q_goal[j];
        }
        Trajectory::with_default_dt(configurations)
    }
}

pub fn sample_proposals(q_start: &[f64], q_goal: &[f64], steps: usize, cfg: &ProposalConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    Error::check_dim("goal configuration", q_start.len(), q_goal.len())?;
    let sampler = ProposalSampler::new(steps)?;
    (0..cfg.num_samples as u64)
        .map(|i| sampler.sample(q_start, q_goal, cfg.scale_a, cfg.seed, i))
        .collect()
}

/// Flattens a B × D weight matrix row by row.
pub fn flatten_weights(w: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.len());
    for r in 0..w.nrows() {
        for c in 0..w.ncols() {
            out.push(w[(r, c)]);
        }
    }
    out
}

pub fn unflatten_weights(flat: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    Error::check_dim("flattened weights", rows * cols, flat.len())?;
    Ok(DMatrix::from_row_slice(rows, cols, flat))
}

/// Convenience for tests and callers holding column vectors.
pub fn as_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}
