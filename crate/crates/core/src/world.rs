//! Planar revolute arm, circular obstacles and the trajectory cost
//! `C(ξ) = c_obs(ξ) + α_smooth · c_smooth(ξ)`.

use nalgebra::{DMatrix, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed distance reported when the scene has no obstacles.
pub const EMPTY_SCENE_DISTANCE: f64 = 1e6;

/// Planar serial chain of revolute joints. Joint `i` is measured relative to
/// link `i - 1`, the first relative to the world x-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub link_lengths: Vec<f64>,
    pub body_point_spacing: f64,
    pub base: [f64; 2],
}

impl ArmModel {
    pub fn new(link_lengths: Vec<f64>, body_point_spacing: f64, base: [f64; 2]) -> Result<Self> {
        let arm = ArmModel {
            link_lengths,
            body_point_spacing,
            base,
        };
        arm.validate()?;
        Ok(arm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.len() < 2 {
            return Err(Error::invalid("arm needs at least two links"));
        }
        if self.link_lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("link lengths must be positive"));
        }
        let shortest = self.link_lengths.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(self.body_point_spacing > 0.0 && self.body_point_spacing <= shortest) {
            return Err(Error::invalid(format!(
                "body point spacing {} must lie in (0, {shortest}]",
                self.body_point_spacing
            )));
        }
        if !self.base.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("base position must be finite"));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    fn segments(&self, length: f64) -> usize {
        ((length / self.body_point_spacing) - 1e-9).ceil().max(1.0) as usize
    }

    /// Base point, then every link subdivided evenly at no more than the
    /// configured spacing; the last sample of each link is its distal joint.
    pub fn body_point_count(&self) -> usize {
        1 + self.link_lengths.iter().map(|&l| self.segments(l)).sum::<usize>()
    }

    /// Body points ordered base to tip, written into `out` (cleared first).
    pub fn body_points_into(&self, q: &[f64], out: &mut Vec<Point2<f64>>) {
        out.clear();
        let mut joint = Point2::new(self.base[0], self.base[1]);
        out.push(joint);
        let mut heading = 0.0;
        for (&length, &angle) in self.link_lengths.iter().zip(q) {
            heading += angle;
            let dir = Vector2::new(heading.cos(), heading.sin());
            let n = self.segments(length);
            for k in 1..=n {
                out.push(joint + dir * (length * k as f64 / n as f64));
            }
            joint += dir * length;
        }
    }

    pub fn tip(&self, q: &[f64]) -> Point2<f64> {
        let mut p = Point2::new(self.base[0], self.base[1]);
        let mut heading = 0.0;
        for (&length, &angle) in self.link_lengths.iter().zip(q) {
            heading += angle;
            p += Vector2::new(heading.cos(), heading.sin()) * length;
        }
        p
    }
}

/// Body-point positions for configuration `q`, base to tip.
pub fn forward_kinematics(arm: &ArmModel, q: &[f64]) -> Result<Vec<Point2<f64>>> {
    Error::check_dim("forward_kinematics", arm.dof(), q.len())?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("configuration must be finite"));
    }
    let mut out = Vec::with_capacity(arm.body_point_count());
    arm.body_points_into(q, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    #[serde(rename = "c")]
    pub center: [f64; 2],
    #[serde(rename = "r")]
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Obstacle { center, radius }
    }

    pub fn signed_distance(&self, p: &Point2<f64>) -> f64 {
        let dx = p.x - self.center[0];
        let dy = p.y - self.center[1];
        (dx * dx + dy * dy).sqrt() - self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub obstacles: Vec<Obstacle>,
    /// `[[xmin, ymin], [xmax, ymax]]`.
    pub bounds: [[f64; 2]; 2],
}

impl Scene {
    pub fn new(obstacles: Vec<Obstacle>, bounds: [[f64; 2]; 2]) -> Result<Self> {
        let scene = Scene { obstacles, bounds };
        scene.validate()?;
        Ok(scene)
    }

    pub fn empty(bounds: [[f64; 2]; 2]) -> Self {
        Scene {
            obstacles: Vec::new(),
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0 && o.radius.is_finite()) || !o.center.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("obstacle {i} has invalid geometry")));
            }
        }
        let [lo, hi] = self.bounds;
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(Error::invalid("workspace bounds must be a non-empty rectangle"));
        }
        Ok(())
    }
}

/// Distance from `p` to the nearest obstacle surface; negative inside.
pub fn signed_distance(p: &Point2<f64>, scene: &Scene) -> f64 {
    scene
        .obstacles
        .iter()
        .map(|o| o.signed_distance(p))
        .fold(EMPTY_SCENE_DISTANCE, f64::min)
}

/// CHOMP local cost: zero beyond the margin, quadratic inside it and linear
/// in penetration depth.
pub fn local_collision_cost(d: f64, margin: f64) -> f64 {
    if d > margin {
        0.0
    } else if d > 0.0 {
        (d - margin).powi(2) / (2.0 * margin)
    } else {
        -d + 0.5 * margin
    }
}

/// Joint trajectory sampled uniformly in time: one row per step, one column
/// per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub configurations: DMatrix<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(configurations: DMatrix<f64>, dt: f64) -> Result<Self> {
        if configurations.nrows() < 3 {
            return Err(Error::invalid(format!(
                "trajectory needs at least 3 steps, got {}",
                configurations.nrows()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        if configurations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory entries must be finite"));
        }
        Ok(Trajectory { configurations, dt })
    }

    /// Uses the default time step `1 / T`.
    pub fn with_default_dt(configurations: DMatrix<f64>) -> Result<Self> {
        let steps = configurations.nrows().max(1);
        Self::new(configurations, 1.0 / steps as f64)
    }

    pub fn steps(&self) -> usize {
        self.configurations.nrows()
    }

    pub fn dof(&self) -> usize {
        self.configurations.ncols()
    }

    pub fn config(&self, t: usize) -> Vec<f64> {
        self.configurations.row(t).iter().cloned().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.steps()).map(|t| self.config(t)).collect()
    }

    pub fn reversed(&self) -> Trajectory {
        let t = self.steps();
        Trajectory {
            configurations: DMatrix::from_fn(t, self.dof(), |i, j| self.configurations[(t - 1 - i, j)]),
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Clearance `ε` below which body points start paying collision cost.
    pub margin: f64,
    pub alpha_smooth: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            margin: 0.1,
            alpha_smooth: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub obstacle: f64,
    pub smoothness: f64,
    pub total: f64,
    pub alpha_smooth: f64,
}

/// Body points for every time step of `traj`.
pub fn body_point_paths(traj: &Trajectory, arm: &ArmModel) -> Vec<Vec<Point2<f64>>> {
    let mut buf = Vec::new();
    (0..traj.steps())
        .map(|t| {
            let q: Vec<f64> = traj.configurations.row(t).iter().cloned().collect();
            arm.body_points_into(&q, &mut buf);
            buf.clone()
        })
        .collect()
}

/// Obstacle cost contributed by one pose: `½ Σ_u c(x_u) ‖ẋ_u‖`, where the
/// body-point velocity is `(to - from) / elapsed`.
pub fn obstacle_step_cost(
    here: &[Point2<f64>],
    from: &[Point2<f64>],
    to: &[Point2<f64>],
    elapsed: f64,
    scene: &Scene,
    margin: f64,
) -> f64 {
    let mut acc = 0.0;
    for ((p, a), b) in here.iter().zip(from).zip(to) {
        let c = local_collision_cost(signed_distance(p, scene), margin);
        if c > 0.0 {
            acc += c * ((b - a).norm() / elapsed);
        }
    }
    0.5 * acc
}

/// Obstacle term of step `t`. Velocities are central differences inside the
/// trajectory and one-sided at the two ends, which keeps the cost symmetric
/// under time reversal. `points` must hold at least two steps.
pub fn obstacle_term_at(points: &[Vec<Point2<f64>>], t: usize, dt: f64, scene: &Scene, margin: f64) -> f64 {
    let last = points.len() - 1;
    let lo = t.saturating_sub(1);
    let hi = (t + 1).min(last);
    obstacle_step_cost(&points[t], &points[lo], &points[hi], dt * (hi - lo) as f64, scene, margin)
}

/// Obstacle cost over precomputed body-point paths, summed over every step.
pub fn obstacle_cost_from_points(points: &[Vec<Point2<f64>>], dt: f64, scene: &Scene, margin: f64) -> f64 {
    (0..points.len())
        .map(|t| obstacle_term_at(points, t, dt, scene, margin))
        .sum()
}

pub fn obstacle_cost(traj: &Trajectory, arm: &ArmModel, scene: &Scene, margin: f64) -> f64 {
    obstacle_cost_from_points(&body_point_paths(traj, arm), traj.dt, scene, margin)
}

/// `Σ ‖q̈_t‖²` over interior steps using central second differences.
pub fn smoothness_cost(traj: &Trajectory) -> Result<f64> {
    let steps = traj.steps();
    if steps < 3 {
        return Err(Error::invalid("smoothness needs at least 3 steps"));
    }
    let q = &traj.configurations;
    let inv_dt2 = 1.0 / (traj.dt * traj.dt);
    let mut total = 0.0;
    for t in 1..steps - 1 {
        for j in 0..q.ncols() {
            let acc = (q[(t + 1, j)] - 2.0 * q[(t, j)] + q[(t - 1, j)]) * inv_dt2;
            total += acc * acc;
        }
    }
    Ok(total)
}

/// Score `R(ξ) = -C(ξ)` together with the cost terms.
pub fn trajectory_score(
    traj: &Trajectory,
    arm: &ArmModel,
    scene: &Scene,
    cost: &CostConfig,
) -> Result<(f64, CostBreakdown)> {
    Error::check_dim("trajectory_score", arm.dof(), traj.dof())?;
    let obstacle = obstacle_cost(traj, arm, scene, cost.margin);
    let smoothness = smoothness_cost(traj)?;
    let total = obstacle + cost.alpha_smooth * smoothness;
    Ok((
        -total,
        CostBreakdown {
            obstacle,
            smoothness,
            total,
            alpha_smooth: cost.alpha_smooth,
        },
    ))
}

/// True iff every body point keeps strictly positive clearance at every step.
pub fn is_collision_free(traj: &Trajectory, arm: &ArmModel, scene: &Scene) -> bool {
    min_clearance(traj, arm, scene) > 0.0
}

/// Smallest signed distance over all body points and steps.
pub fn min_clearance(traj: &Trajectory, arm: &ArmModel, scene: &Scene) -> f64 {
    let mut buf = Vec::with_capacity(arm.body_point_count());
    let mut q = vec![0.0; traj.dof()];
    let mut best = EMPTY_SCENE_DISTANCE;
    for t in 0..traj.steps() {
        for (j, v) in q.iter_mut().enumerate() {
            *v = traj.configurations[(t, j)];
        }
        arm.body_points_into(&q, &mut buf);
        for p in &buf {
            best = best.min(signed_distance(p, scene));
        }
    }
    best
}

/// On-disk description of an arm and its scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    pub links: Vec<f64>,
    pub body_point_spacing: f64,
    pub base: [f64; 2],
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub bounds: [[f64; 2]; 2],
}

impl WorldFile {
    pub fn from_parts(arm: &ArmModel, scene: &Scene) -> Self {
        WorldFile {
            links: arm.link_lengths.clone(),
            body_point_spacing: arm.body_point_spacing,
            base: arm.base,
            obstacles: scene.obstacles.clone(),
            bounds: scene.bounds,
        }
    }

    pub fn arm(&self) -> Result<ArmModel> {
        ArmModel::new(self.links.clone(), self.body_point_spacing, self.base)
    }

    pub fn scene(&self) -> Result<Scene> {
        Scene::new(self.obstacles.clone(), self.bounds)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let world: WorldFile = serde_json::from_str(&text)?;
        world.arm()?;
        world.scene()?;
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn two_link() -> ArmModel {
        ArmModel::new(vec![1.0, 1.0], 0.25, [0.0, 0.0]).unwrap()
    }

    fn bounds() -> [[f64; 2]; 2] {
        [[-3.0, -3.0], [3.0, 3.0]]
    }

    fn line(from: &[f64], to: &[f64], steps: usize) -> Trajectory {
        let m = DMatrix::from_fn(steps, from.len(), |t, j| {
            let s = t as f64 / (steps - 1) as f64;
            from[j] + s * (to[j] - from[j])
        });
        Trajectory::with_default_dt(m).unwrap()
    }

    #[test]
    fn forward_kinematics_tips() {
        let arm = two_link();
        let pts = forward_kinematics(&arm, &[0.0, 0.0]).unwrap();
        let tip = pts.last().unwrap();
        assert!((tip.x - 2.0).abs() < 1e-12 && tip.y.abs() < 1e-12);

        let pts = forward_kinematics(&arm, &[FRAC_PI_2, 0.0]).unwrap();
        let tip = pts.last().unwrap();
        assert!(tip.x.abs() < 1e-12 && (tip.y - 2.0).abs() < 1e-12);
        assert_eq!(pts.len(), arm.body_point_count());
        assert_eq!(pts.len(), 9);
    }

    #[test]
    fn single_link_chain_tip() {
        // Validation wants two links; the kinematics themselves do not.
        let arm = ArmModel {
            link_lengths: vec![1.0],
            body_point_spacing: 0.5,
            base: [0.0, 0.0],
        };
        let tip = arm.tip(&[FRAC_PI_4]);
        let h = 2f64.sqrt() / 2.0;
        assert!((tip.x - h).abs() < 1e-12 && (tip.y - h).abs() < 1e-12);
    }

    #[test]
    fn forward_kinematics_rejects_wrong_dof() {
        assert!(matches!(
            forward_kinematics(&two_link(), &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn arm_validation() {
        assert!(ArmModel::new(vec![1.0], 0.1, [0.0, 0.0]).is_err());
        assert!(ArmModel::new(vec![1.0, -1.0], 0.1, [0.0, 0.0]).is_err());
        assert!(ArmModel::new(vec![1.0, 0.5], 0.6, [0.0, 0.0]).is_err());
        assert!(ArmModel::new(vec![1.0, 0.5], 0.5, [0.0, 0.0]).is_ok());
    }

    #[test]
    fn signed_distance_cases() {
        let scene = Scene::new(vec![Obstacle::new([0.0, 0.0], 1.0)], bounds()).unwrap();
        assert!((signed_distance(&Point2::new(2.0, 0.0), &scene) - 1.0).abs() < 1e-15);
        assert!((signed_distance(&Point2::new(0.5, 0.0), &scene) + 0.5).abs() < 1e-15);
        assert_eq!(signed_distance(&Point2::new(0.5, 0.0), &Scene::empty(bounds())), 1e6);
    }

    #[test]
    fn local_cost_cases() {
        assert_eq!(local_collision_cost(0.1, 0.1), 0.0);
        // Both neighbouring branches give ε/2 at d = 0.
        assert!((local_collision_cost(0.0, 0.1) - 0.05).abs() < 1e-15);
        assert!((local_collision_cost(1e-300, 0.1) - 0.05).abs() < 1e-15);
        assert!((local_collision_cost(-0.3, 0.1) - 0.35).abs() < 1e-15);
    }

    #[test]
    fn local_cost_is_continuous() {
        let eps = 0.1;
        for delta in [1e-6, 1e-7, 1e-9] {
            let at_margin = (local_collision_cost(eps - delta, eps) - local_collision_cost(eps + delta, eps)).abs();
            assert!(at_margin <= delta);
            let at_zero = (local_collision_cost(delta, eps) - local_collision_cost(-delta, eps)).abs();
            assert!(at_zero <= 3.0 * delta);
        }
    }

    #[test]
    fn smoothness_examples() {
        let lin = line(&[0.2, -1.0], &[1.5, 2.0], 20);
        assert!(smoothness_cost(&lin).unwrap() < 1e-12 * 1e8);
        let constant = line(&[0.3, 0.3], &[0.3, 0.3], 10);
        assert_eq!(smoothness_cost(&constant).unwrap(), 0.0);

        let quad = DMatrix::from_fn(5, 1, |t, _| (t * t) as f64);
        let traj = Trajectory::new(quad, 1.0).unwrap();
        assert!((smoothness_cost(&traj).unwrap() - 12.0).abs() < 1e-12);

        let short = Trajectory {
            configurations: DMatrix::zeros(2, 1),
            dt: 1.0,
        };
        assert!(smoothness_cost(&short).is_err());
    }

    #[test]
    fn obstacle_cost_examples() {
        let arm = two_link();
        let empty = Scene::empty(bounds());
        let lin = line(&[0.0, 0.0], &[FRAC_PI_2, 0.0], 30);
        assert_eq!(obstacle_cost(&lin, &arm, &empty, 0.1), 0.0);
        let (score, _) = trajectory_score(&lin, &arm, &empty, &CostConfig::default()).unwrap();
        assert!(score.abs() < 1e-18);

        let scene = Scene::new(vec![Obstacle::new([1.1, 1.1], 0.2)], bounds()).unwrap();
        let still = line(&[FRAC_PI_4, 0.0], &[FRAC_PI_4, 0.0], 30);
        assert!(!is_collision_free(&still, &arm, &scene));
        assert_eq!(obstacle_cost(&still, &arm, &scene, 0.1), 0.0);

        assert!(obstacle_cost(&lin, &arm, &scene, 0.1) > 0.0);
        assert!(!is_collision_free(&lin, &arm, &scene));
    }

    #[test]
    fn brute_force_obstacle_cost() {
        // Independent evaluation straight from the definition.
        let arm = two_link();
        let scene = Scene::new(vec![Obstacle::new([1.1, 1.1], 0.2)], bounds()).unwrap();
        let traj = line(&[0.0, 0.3], &[FRAC_PI_2, -0.2], 12);
        let margin = 0.1;
        let steps = traj.steps();
        let mut expected = 0.0;
        for t in 0..steps {
            let here = forward_kinematics(&arm, &traj.config(t)).unwrap();
            let a = if t == 0 { 0 } else { t - 1 };
            let b = if t + 1 == steps { t } else { t + 1 };
            let from = forward_kinematics(&arm, &traj.config(a)).unwrap();
            let to = forward_kinematics(&arm, &traj.config(b)).unwrap();
            let elapsed = (b - a) as f64 * traj.dt;
            for u in 0..here.len() {
                let d = scene
                    .obstacles
                    .iter()
                    .map(|o| ((here[u] - Point2::from(o.center)).norm()) - o.radius)
                    .fold(f64::INFINITY, f64::min);
                let speed = (to[u] - from[u]).norm() / elapsed;
                expected += 0.5 * local_collision_cost(d, margin) * speed;
            }
        }
        let got = obstacle_cost(&traj, &arm, &scene, margin);
        assert!(expected > 0.0);
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn score_invariant_to_far_obstacles() {
        let arm = two_link();
        let scene = Scene::new(vec![Obstacle::new([1.1, 1.1], 0.2)], bounds()).unwrap();
        let traj = line(&[0.0, 0.3], &[FRAC_PI_2, -0.2], 25);
        let cfg = CostConfig::default();
        let before = trajectory_score(&traj, &arm, &scene, &cfg).unwrap();
        let mut extended = scene.clone();
        extended.obstacles.push(Obstacle::new([-2.5, -2.5], 0.2));
        assert!(min_clearance(&traj, &arm, &Scene::new(vec![extended.obstacles[1]], bounds()).unwrap()) > cfg.margin);
        let after = trajectory_score(&traj, &arm, &extended, &cfg).unwrap();
        assert_eq!(before, after);
        assert!(before.0 <= 0.0);
        assert_eq!(before.1.total, before.1.obstacle + cfg.alpha_smooth * before.1.smoothness);
    }

    #[test]
    fn collision_boundary_counts_as_contact() {
        let arm = two_link();
        // Tip exactly on the obstacle surface.
        let scene = Scene::new(vec![Obstacle::new([2.5, 0.0], 0.5)], bounds()).unwrap();
        let still = line(&[0.0, 0.0], &[0.0, 0.0], 5);
        assert_eq!(min_clearance(&still, &arm, &scene), 0.0);
        assert!(!is_collision_free(&still, &arm, &scene));
        assert!(is_collision_free(&still, &arm, &Scene::empty(bounds())));
    }

    #[test]
    fn collision_free_implies_zero_cost_without_margin() {
        let arm = two_link();
        let scene = Scene::new(vec![Obstacle::new([0.0, 1.9], 0.3)], bounds()).unwrap();
        let traj = line(&[0.0, 0.0], &[0.5, 0.3], 20);
        assert!(is_collision_free(&traj, &arm, &scene));
        assert_eq!(obstacle_cost(&traj, &arm, &scene, 0.0), 0.0);
    }

    #[test]
    fn costs_are_time_reversal_symmetric() {
        let arm = two_link();
        let scene = Scene::new(vec![Obstacle::new([1.1, 1.1], 0.2)], bounds()).unwrap();
        let traj = line(&[0.0, 0.3], &[FRAC_PI_2, -0.2], 25);
        let rev = traj.reversed();
        let s1 = smoothness_cost(&traj).unwrap();
        let s2 = smoothness_cost(&rev).unwrap();
        assert!((s1 - s2).abs() <= 1e-9 * s1.max(1.0));
        let o1 = obstacle_cost(&traj, &arm, &scene, 0.1);
        let o2 = obstacle_cost(&rev, &arm, &scene, 0.1);
        assert!(o1 > 0.0);
        assert!((o1 - o2).abs() <= 1e-12 * o1, "{o1} vs {o2}");
    }

    #[test]
    fn score_is_bit_deterministic() {
        let arm = two_link();
        let scene = Scene::new(vec![Obstacle::new([1.1, 1.1], 0.2)], bounds()).unwrap();
        let traj = line(&[0.0, 0.3], &[FRAC_PI_2, -0.2], 25);
        let cfg = CostConfig::default();
        let a = trajectory_score(&traj, &arm, &scene, &cfg).unwrap();
        let b = trajectory_score(&traj, &arm, &scene, &cfg).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
    }

    #[test]
    fn world_file_round_trip() {
        let text = r#"{"links":[1.0,1.0],"body_point_spacing":0.1,"base":[0,0],
            "obstacles":[{"c":[1.2,1.2],"r":0.15}],"bounds":[[-2.5,-2.5],[2.5,2.5]]}"#;
        let world: WorldFile = serde_json::from_str(text).unwrap();
        let arm = world.arm().unwrap();
        let scene = world.scene().unwrap();
        assert_eq!(arm.dof(), 2);
        assert_eq!(scene.obstacles.len(), 1);
        assert_eq!(WorldFile::from_parts(&arm, &scene), world);
    }
}
