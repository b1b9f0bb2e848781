//! Solution refinement: metric-preconditioned CHOMP steps for trajectories,
//! trust-region CEM for low-dimensional objectives, and a nearest-mean
//! Gaussian-mixture CEM used as a multimodal baseline.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, Dyn};
use nalgebra::geometry::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::smoothness_metric;
use crate::world::{
    is_collision_free, obstacle_term_at, ArmModel, CostConfig, Scene, Trajectory,
};

// ---------------------------------------------------------------------------
// CHOMP

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChompConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub step_tolerance: f64,
    /// Finite-difference step for the cost gradient, radians.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Extra halvings tried when a step raises the cost.
    #[serde(default = "default_backtracks")]
    pub max_backtracks: usize,
}

fn default_fd_step() -> f64 {
    1e-5
}

fn default_backtracks() -> usize {
    10
}

impl Default for ChompConfig {
    fn default() -> Self {
        ChompConfig {
            eta: 50.0,
            max_iters: 200,
            step_tolerance: 1e-6,
            fd_step: default_fd_step(),
            max_backtracks: default_backtracks(),
        }
    }
}

impl ChompConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || self.max_iters == 0 {
            return Err(Error::invalid("chomp needs eta > 0 and max_iters >= 1"));
        }
        if !(self.step_tolerance > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::invalid("chomp tolerances must be positive"));
        }
        Ok(())
    }
}

/// Interior block of `AᵀA` with its factorisation. Start and goal rows are
/// fixed, so only the `T − 2` interior steps move.
#[derive(Debug, Clone)]
pub struct ChompMetric {
    metric: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl ChompMetric {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 3 {
            return Err(Error::invalid("chomp needs at least 3 steps"));
        }
        let full = smoothness_metric(steps);
        let n = steps - 2;
        let metric = full.view((1, 1), (n, n)).into_owned();
        let chol = metric
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("smoothness metric is not positive definite"))?;
        Ok(ChompMetric { metric, chol })
    }

    pub fn interior_steps(&self) -> usize {
        self.metric.nrows()
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// `M⁻¹ g` for a gradient with one row per interior step.
    pub fn solve(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(g)
    }
}

/// Minimiser of `gᵀ(ξ − ξᶜ) + (η/2)‖ξ − ξᶜ‖²_M` over the interior rows:
/// `ξ = ξᶜ − (1/η) M⁻¹ g`. Endpoints are copied unchanged.
pub fn chomp_step(current: &Trajectory, gradient: &DMatrix<f64>, eta: f64, metric: &ChompMetric) -> Result<Trajectory> {
    let n = metric.interior_steps();
    Error::check_dim("chomp step rows", current.steps() - 2, n)?;
    Error::check_dim("gradient rows", n, gradient.nrows())?;
    Error::check_dim("gradient columns", current.dof(), gradient.ncols())?;
    let delta = metric.solve(gradient) / eta;
    let mut next = current.clone();
    for t in 0..n {
        for j in 0..current.dof() {
            next.configurations[(t + 1, j)] -= delta[(t, j)];
        }
    }
    if next.configurations.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("chomp step produced non-finite values"));
    }
    Ok(next)
}

/// Trajectory cost `C(ξ)` with cached body points, so that single-step
/// perturbations only re-evaluate the terms they touch.
pub struct CostEvaluator<'a> {
    pub arm: &'a ArmModel,
    pub scene: &'a Scene,
    pub cost: &'a CostConfig,
}

impl CostEvaluator<'_> {
    fn points(&self, traj: &Trajectory) -> Vec<Vec<Point2<f64>>> {
        crate::world::body_point_paths(traj, self.arm)
    }

    fn accel_term(q: &DMatrix<f64>, t: usize, inv_dt2: f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..q.ncols() {
            let a = (q[(t + 1, j)] - 2.0 * q[(t, j)] + q[(t - 1, j)]) * inv_dt2;
            acc += a * a;
        }
        acc
    }

    /// Terms of `C` that depend on row `t`.
    fn local(&self, q: &DMatrix<f64>, points: &[Vec<Point2<f64>>], t: usize, dt: f64) -> f64 {
        let last = q.nrows() - 1;
        let inv_dt2 = 1.0 / (dt * dt);
        let mut total = 0.0;
        for s in t.saturating_sub(1)..=(t + 1).min(last) {
            total += obstacle_term_at(points, s, dt, self.scene, self.cost.margin);
            if s >= 1 && s < last {
                total += self.cost.alpha_smooth * Self::accel_term(q, s, inv_dt2);
            }
        }
        total
    }

    pub fn total(&self, traj: &Trajectory) -> f64 {
        let points = self.points(traj);
        let q = &traj.configurations;
        let last = q.nrows() - 1;
        let inv_dt2 = 1.0 / (traj.dt * traj.dt);
        let mut total = 0.0;
        for s in 0..=last {
            total += obstacle_term_at(&points, s, traj.dt, self.scene, self.cost.margin);
        }
        let smooth: f64 = (1..last).map(|s| Self::accel_term(q, s, inv_dt2)).sum();
        total + self.cost.alpha_smooth * smooth
    }

    /// Central-difference gradient of `C` with respect to the interior rows.
    pub fn gradient(&self, traj: &Trajectory, h: f64) -> DMatrix<f64> {
        let steps = traj.steps();
        let dof = traj.dof();
        let mut q = traj.configurations.clone();
        let mut points = self.points(traj);
        let mut grad = DMatrix::zeros(steps - 2, dof);
        let mut row = vec![0.0; dof];
        for t in 1..steps - 1 {
            for j in 0..dof {
                let original = q[(t, j)];
                let mut eval = |value: f64, q: &mut DMatrix<f64>, points: &mut Vec<Vec<Point2<f64>>>| {
                    q[(t, j)] = value;
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = q[(t, k)];
                    }
                    self.arm.body_points_into(&row, &mut points[t]);
                    self.local(q, points, t, traj.dt)
                };
                let plus = eval(original + h, &mut q, &mut points);
                let minus = eval(original - h, &mut q, &mut points);
                eval(original, &mut q, &mut points);
                grad[(t - 1, j)] = (plus - minus) / (2.0 * h);
            }
        }
        grad
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChompResult {
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub collision_free: bool,
    /// Cost of the input followed by the cost after every accepted step.
    pub accepted_costs: Vec<f64>,
    /// The time budget ran out before convergence.
    pub timed_out: bool,
}

/// Iterates CHOMP steps on the finite-difference cost gradient until the
/// trajectory is collision-free, no step lowers the cost, or `max_iters`.
pub fn chomp_finetune(traj: &Trajectory, arm: &ArmModel, scene: &Scene, cost: &CostConfig, cfg: &ChompConfig) -> Result<ChompResult> {
    chomp_finetune_until(traj, arm, scene, cost, cfg, None)
}

/// As [`chomp_finetune`], returning partial progress once `deadline` passes.
pub fn chomp_finetune_until(
    traj: &Trajectory,
    arm: &ArmModel,
    scene: &Scene,
    cost: &CostConfig,
    cfg: &ChompConfig,
    deadline: Option<Instant>,
) -> Result<ChompResult> {
    cfg.validate()?;
    Error::check_dim("chomp trajectory", arm.dof(), traj.dof())?;
    let eval = CostEvaluator { arm, scene, cost };
    let mut current = traj.clone();
    let mut current_cost = eval.total(&current);
    let mut accepted_costs = vec![current_cost];
    let mut collision_free = is_collision_free(&current, arm, scene);
    if collision_free {
        return Ok(ChompResult {
            trajectory: current,
            iterations: 0,
            collision_free,
            accepted_costs,
            timed_out: false,
        });
    }
    let metric = ChompMetric::new(traj.steps())?;
    let mut iterations = 0;
    let mut timed_out = false;
    while iterations < cfg.max_iters && !collision_free {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            timed_out = true;
            break;
        }
        iterations += 1;
        let grad = eval.gradient(&current, cfg.fd_step);
        let mut eta = cfg.eta;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let candidate = chomp_step(&current, &grad, eta, &metric)?;
            let step = (&candidate.configurations - &current.configurations).amax();
            if step < cfg.step_tolerance {
                break;
            }
            let c = eval.total(&candidate);
            if c <= current_cost {
                accepted = Some((candidate, c));
                break;
            }
            eta *= 2.0;
        }
        match accepted {
            Some((next, c)) => {
                current = next;
                current_cost = c;
                accepted_costs.push(c);
                collision_free = is_collision_free(&current, arm, scene);
            }
            None => break,
        }
    }
    Ok(ChompResult {
        trajectory: current,
        iterations,
        collision_free,
        accepted_costs,
        timed_out,
    })
}

// ---------------------------------------------------------------------------
// Cross-entropy method

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub init_sigma: f64,
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: f64,
    pub trust_eta1: f64,
    #[serde(default = "default_components")]
    pub components: usize,
    pub seed: u64,
}

fn default_sigma_floor() -> f64 {
    1e-4
}

fn default_components() -> usize {
    1
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 200,
            elite_fraction: 0.1,
            iterations: 50,
            init_sigma: 0.3,
            sigma_floor: default_sigma_floor(),
            trust_eta1: 2.0,
            components: default_components(),
            seed: 0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(Error::invalid("elite fraction must lie in (0, 1)"));
        }
        if self.elite_count(self.population) < 2 {
            return Err(Error::invalid("population × elite fraction must be at least 2"));
        }
        if self.iterations == 0 || self.components == 0 {
            return Err(Error::invalid("cem needs iterations and components >= 1"));
        }
        if !(self.init_sigma > 0.0) || !(self.sigma_floor > 0.0) || !(self.trust_eta1 >= 0.0) {
            return Err(Error::invalid("cem sigma must be positive and eta1 non-negative"));
        }
        Ok(())
    }

    fn elite_count(&self, n: usize) -> usize {
        (n as f64 * self.elite_fraction).ceil() as usize
    }
}

/// Mean and per-coordinate standard deviation after an iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemIteration {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemResult {
    /// Best point seen under the (penalised) selection score.
    pub x: Vec<f64>,
    /// Unpenalised objective at `x`.
    pub score: f64,
    pub trace: Vec<CemIteration>,
}

const SAMPLING_STREAM: u64 = 1;
const INIT_STREAM: u64 = 0;
const CHOICE_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw<R: Rng>(rng: &mut R, mean: &[f64], sigma: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(sigma)
        .map(|(m, s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + s * e
        })
        .collect()
}

/// Elite mean and the shrink-only sigma update `max(floor, min(σ, std))`.
fn refit(elites: &[&Vec<f64>], sigma: &[f64], floor: f64) -> (Vec<f64>, Vec<f64>) {
    let d = sigma.len();
    let n = elites.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| elites.iter().map(|x| x[k]).sum::<f64>() / n).collect();
    let sigma = (0..d)
        .map(|k| {
            let var = elites.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / n;
            var.sqrt().min(sigma[k]).max(floor)
        })
        .collect();
    (mean, sigma)
}

/// Indices of the `k` highest scores; ties keep the earlier index first.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Plain Gaussian CEM maximising `objective` from `x_init`.
pub fn cem<F: Fn(&[f64]) -> f64>(objective: F, x_init: &[f64], cfg: &CemConfig) -> Result<CemResult> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, SAMPLING_STREAM);
    let mut mean = x_init.to_vec();
    let mut sigma = vec![cfg.init_sigma; x_init.len()];
    let mut best_x = x_init.to_vec();
    let mut best = objective(x_init);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let samples: Vec<Vec<f64>> = (0..cfg.population).map(|_| draw(&mut rng, &mean, &sigma)).collect();
        let scores: Vec<f64> = samples.iter().map(|x| objective(x)).collect();
        let elite = top_k(&scores, cfg.elite_count(cfg.population));
        if scores[elite[0]] > best {
            best = scores[elite[0]];
            best_x = samples[elite[0]].clone();
        }
        let chosen: Vec<&Vec<f64>> = elite.iter().map(|&i| &samples[i]).collect();
        (mean, sigma) = refit(&chosen, &sigma, cfg.sigma_floor);
        trace.push(CemIteration {
            mean: mean.clone(),
            sigma: sigma.clone(),
        });
    }
    Ok(CemResult {
        x: best_x,
        score: best,
        trace,
    })
}

/// CEM on `R'(x) = R(x) − η₁ ‖x − x_init‖`, which keeps the refined point
/// near its starting estimate. With `η₁ = 0` this is exactly [`cem`].
pub fn cem_trust_region<F: Fn(&[f64]) -> f64>(objective: F, x_init: &[f64], cfg: &CemConfig) -> Result<CemResult> {
    let eta1 = cfg.trust_eta1;
    let anchor = x_init.to_vec();
    let penalised = |x: &[f64]| {
        let r = objective(x);
        if eta1 == 0.0 {
            return r;
        }
        let dist = x.iter().zip(&anchor).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        r - eta1 * dist
    };
    let mut result = cem(penalised, x_init, cfg)?;
    result.score = objective(&result.x);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmCemResult {
    /// Final component means and their objective values, one per component.
    pub means: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    /// Component means after each iteration.
    pub trace: Vec<Vec<CemIteration>>,
}

/// Mixture CEM: components start at uniform points in `bounds`, every sample
/// is assigned to its nearest component mean, and each component refits on
/// its own elites. Components with fewer than two samples keep their state.
pub fn cem_gmm<F: Fn(&[f64]) -> f64>(objective: F, cfg: &CemConfig, bounds: &[[f64; 2]]) -> Result<GmmCemResult> {
    cfg.validate()?;
    if bounds.is_empty() || bounds.iter().any(|b| !(b[1] > b[0])) {
        return Err(Error::invalid("gmm bounds must be non-empty intervals"));
    }
    let k = cfg.components;
    let mut init_rng = stream(cfg.seed, INIT_STREAM);
    let mut rng = stream(cfg.seed, SAMPLING_STREAM);
    let mut choice_rng = stream(cfg.seed, CHOICE_STREAM);
    let mut means: Vec<Vec<f64>> = (0..k)
        .map(|_| bounds.iter().map(|b| init_rng.random_range(b[0]..b[1])).collect())
        .collect();
    let mut sigmas = vec![vec![cfg.init_sigma; bounds.len()]; k];
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let samples: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| {
                let c = choice_rng.random_range(0..k);
                draw(&mut rng, &means[c], &sigmas[c])
            })
            .collect();
        let scores: Vec<f64> = samples.iter().map(|x| objective(x)).collect();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, x) in samples.iter().enumerate() {
            let nearest = (0..k)
                .min_by(|&a, &b| sq_dist(x, &means[a]).total_cmp(&sq_dist(x, &means[b])))
                .unwrap();
            members[nearest].push(i);
        }
        for c in 0..k {
            let m = &members[c];
            let elite_n = cfg.elite_count(m.len());
            if elite_n < 2 {
                continue;
            }
            let local: Vec<f64> = m.iter().map(|&i| scores[i]).collect();
            let chosen: Vec<&Vec<f64>> = top_k(&local, elite_n).iter().map(|&j| &samples[m[j]]).collect();
            (means[c], sigmas[c]) = refit(&chosen, &sigmas[c], cfg.sigma_floor);
        }
        trace.push(
            means
                .iter()
                .zip(&sigmas)
                .map(|(m, s)| CemIteration {
                    mean: m.clone(),
                    sigma: s.clone(),
                })
                .collect(),
        );
    }
    let scores = means.iter().map(|m| objective(m)).collect();
    Ok(GmmCemResult { means, scores, trace })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Uniform initial point of the first mixture component, as drawn by
/// [`cem_gmm`] for the same seed.
pub fn gmm_initial_means(cfg: &CemConfig, bounds: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let mut init_rng = stream(cfg.seed, INIT_STREAM);
    (0..cfg.components)
        .map(|_| bounds.iter().map(|b| init_rng.random_range(b[0]..b[1])).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfuncs::{eval_test_function, TestFunctionId};
    use crate::world::{min_clearance, Obstacle};
    use std::f64::consts::FRAC_PI_2;

    fn random_traj(seed: u64, steps: usize, dof: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Trajectory::with_default_dt(DMatrix::from_fn(steps, dof, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn zero_gradient_step_is_identity() {
        let traj = random_traj(1, 12, 2);
        let metric = ChompMetric::new(12).unwrap();
        let next = chomp_step(&traj, &DMatrix::zeros(10, 2), 50.0, &metric).unwrap();
        assert_eq!(next, traj);
    }

    #[test]
    fn step_satisfies_stationarity() {
        for seed in 0..5 {
            let traj = random_traj(seed, 50, 3);
            let metric = ChompMetric::new(50).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let g = DMatrix::from_fn(48, 3, |_, _| rng.random_range(-10.0..10.0));
            let eta = 50.0;
            let next = chomp_step(&traj, &g, eta, &metric).unwrap();
            let diff = next.configurations.rows(1, 48) - traj.configurations.rows(1, 48);
            let residual = &g + metric.metric() * diff * eta;
            assert!(residual.amax() < 1e-8, "{}", residual.amax());
            assert_eq!(next.config(0), traj.config(0));
            assert_eq!(next.config(49), traj.config(49));
        }
    }

    #[test]
    fn larger_eta_gives_smaller_metric_step() {
        let traj = random_traj(3, 30, 2);
        let metric = ChompMetric::new(30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = DMatrix::from_fn(28, 2, |_, _| rng.random_range(-1.0..1.0));
        let norm = |eta: f64| {
            let next = chomp_step(&traj, &g, eta, &metric).unwrap();
            let d = next.configurations.rows(1, 28) - traj.configurations.rows(1, 28);
            (d.transpose() * metric.metric() * &d).trace()
        };
        assert!(norm(100.0) < norm(50.0));
        assert!(norm(50.0) < norm(10.0));
    }

    fn gate() -> (ArmModel, Scene) {
        let arm = ArmModel::new(vec![1.0, 1.0], 0.1, [0.0, 0.0]).unwrap();
        let c = 1.7 * std::f64::consts::FRAC_1_SQRT_2;
        let scene = Scene::new(vec![Obstacle::new([c, c], 0.15)], [[-2.5, -2.5], [2.5, 2.5]]).unwrap();
        (arm, scene)
    }

    fn straight(steps: usize) -> Trajectory {
        Trajectory::with_default_dt(DMatrix::from_fn(steps, 2, |t, j| {
            if j == 0 {
                FRAC_PI_2 * t as f64 / (steps - 1) as f64
            } else {
                0.0
            }
        }))
        .unwrap()
    }

    #[test]
    fn local_gradient_matches_full_cost_differences() {
        let (arm, scene) = gate();
        let cost = CostConfig {
            margin: 0.1,
            alpha_smooth: 1e-3,
        };
        let eval = CostEvaluator {
            arm: &arm,
            scene: &scene,
            cost: &cost,
        };
        let mut traj = straight(20);
        traj.configurations[(7, 1)] = 0.3;
        let g = eval.gradient(&traj, 1e-5);
        for &(t, j) in &[(5usize, 0usize), (9, 0), (10, 1), (6, 1)] {
            let mut plus = traj.clone();
            plus.configurations[(t, j)] += 1e-5;
            let mut minus = traj.clone();
            minus.configurations[(t, j)] -= 1e-5;
            let full = (eval.total(&plus) - eval.total(&minus)) / 2e-5;
            assert!((full - g[(t - 1, j)]).abs() < 1e-6 * (1.0 + full.abs()), "{t},{j}: {full} vs {}", g[(t - 1, j)]);
        }
        let (score, _) = crate::world::trajectory_score(&traj, &arm, &scene, &cost).unwrap();
        assert!((eval.total(&traj) + score).abs() < 1e-9);
    }

    #[test]
    fn finetune_clears_a_small_central_obstacle() {
        let (arm, scene) = gate();
        let traj = straight(50);
        assert!(!is_collision_free(&traj, &arm, &scene));
        let cost = CostConfig {
            margin: 0.1,
            alpha_smooth: 1e-5,
        };
        let result = chomp_finetune(&traj, &arm, &scene, &cost, &ChompConfig::default()).unwrap();
        assert!(result.collision_free, "clearance {}", min_clearance(&result.trajectory, &arm, &scene));
        assert!(result.iterations <= 200);
        assert_eq!(result.trajectory.config(0), traj.config(0));
        assert_eq!(result.trajectory.config(49), traj.config(49));
        for pair in result.accepted_costs.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn collision_free_input_is_untouched() {
        let (arm, _) = gate();
        let scene = Scene::new(vec![Obstacle::new([-1.5, -1.5], 0.2)], [[-2.5, -2.5], [2.5, 2.5]]).unwrap();
        let traj = straight(30);
        let result = chomp_finetune(&traj, &arm, &scene, &CostConfig::default(), &ChompConfig::default()).unwrap();
        assert_eq!(result.iterations, 0);
        assert_eq!(result.trajectory, traj);
        assert!(result.collision_free);
    }

    #[test]
    fn expired_deadline_returns_input() {
        let (arm, scene) = gate();
        let traj = straight(30);
        let result = chomp_finetune_until(
            &traj,
            &arm,
            &scene,
            &CostConfig::default(),
            &ChompConfig::default(),
            Some(Instant::now()),
        )
        .unwrap();
        assert!(result.timed_out);
        assert_eq!(result.trajectory, traj);
    }

    fn func(id: TestFunctionId) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| eval_test_function(id, [x[0], x[1]]).unwrap()
    }

    #[test]
    fn huge_trust_weight_pins_the_start() {
        let cfg = CemConfig {
            trust_eta1: 1e6,
            seed: 7,
            ..Default::default()
        };
        let x0 = [0.8, 0.4];
        let r = cem_trust_region(func(TestFunctionId::Func1), &x0, &cfg).unwrap();
        let d = ((r.x[0] - x0[0]).powi(2) + (r.x[1] - x0[1]).powi(2)).sqrt();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn func2_stays_optimal_from_the_circle() {
        let cfg = CemConfig {
            trust_eta1: 0.1,
            seed: 3,
            ..Default::default()
        };
        for k in 0..5 {
            let angle = -0.3 + 0.1 * k as f64;
            let x0 = [-1.0 + 2.5f64.sqrt() * angle.cos(), 1.5 + 2.5f64.sqrt() * angle.sin()];
            let r = cem_trust_region(func(TestFunctionId::Func2), &x0, &cfg).unwrap();
            assert!(r.score >= 0.9999, "{}", r.score);
        }
    }

    #[test]
    fn sigma_never_grows() {
        let cfg = CemConfig {
            trust_eta1: 0.1,
            seed: 1,
            ..Default::default()
        };
        let r = cem_trust_region(func(TestFunctionId::Func4), &[0.3, 1.7], &cfg).unwrap();
        let mut prev = vec![cfg.init_sigma; 2];
        for it in &r.trace {
            for (a, b) in it.sigma.iter().zip(&prev) {
                assert!(a <= b && *a >= cfg.sigma_floor);
            }
            prev = it.sigma.clone();
        }
    }

    #[test]
    fn zero_trust_weight_is_plain_cem() {
        let cfg = CemConfig {
            trust_eta1: 0.0,
            seed: 9,
            ..Default::default()
        };
        let f = func(TestFunctionId::Func3);
        let a = cem_trust_region(&f, &[1.2, 1.0], &cfg).unwrap();
        let b = cem(&f, &[1.2, 1.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_component_mixture_is_plain_cem() {
        let cfg = CemConfig {
            components: 1,
            seed: 21,
            ..Default::default()
        };
        let bounds = [[0.0, 2.0], [0.0, 2.0]];
        let f = func(TestFunctionId::Func1);
        let gmm = cem_gmm(&f, &cfg, &bounds).unwrap();
        let init = gmm_initial_means(&cfg, &bounds);
        let plain = cem(&f, &init[0], &cfg).unwrap();
        assert_eq!(gmm.means.len(), 1);
        for (g, p) in gmm.trace.iter().zip(&plain.trace) {
            assert_eq!(&g[0], p);
        }
    }

    #[test]
    fn mixture_finds_func1_optimum() {
        let cfg = CemConfig {
            components: 20,
            seed: 2,
            ..Default::default()
        };
        let r = cem_gmm(func(TestFunctionId::Func1), &cfg, &[[0.0, 2.0], [0.0, 2.0]]).unwrap();
        assert_eq!(r.means.len(), 20);
        assert_eq!(r.scores.len(), 20);
        let best = r.scores.iter().cloned().fold(0.0, f64::max);
        assert!(best >= 0.9999, "{best}");
    }

    #[test]
    fn cem_is_deterministic() {
        let cfg = CemConfig {
            trust_eta1: 0.1,
            seed: 5,
            ..Default::default()
        };
        let f = func(TestFunctionId::Func2);
        assert_eq!(
            cem_trust_region(&f, &[1.0, 1.0], &cfg).unwrap(),
            cem_trust_region(&f, &[1.0, 1.0], &cfg).unwrap()
        );
        assert!(CemConfig { population: 10, ..cfg }.validate().is_err());
    }
}
