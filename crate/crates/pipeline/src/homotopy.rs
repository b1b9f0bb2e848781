//! Side-of-obstacle labels for paths.
//!
//! A path's label for a point `c` is the sign of the total angle swept by
//! `p(s) − c`. For a base-anchored planar chain the tip path alone cannot
//! separate classes: the angle the whole chain subtends at an obstacle is a
//! continuous function of the configuration, so every collision-free motion
//! between two fixed configurations sweeps the same tip angle. Two-joint arms
//! are therefore labelled in joint space, against one configuration inside
//! each obstacle's configuration-space footprint. Other arms fall back to the
//! tip path against the workspace centres.

use lsmo_core::world::{ArmModel, Scene, Trajectory};
use serde::{Deserialize, Serialize};

/// Paths passing closer than this to a centre get a degenerate label.
pub const DEGENERATE_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Positive,
    Negative,
    Degenerate,
}

impl Side {
    pub fn symbol(self) -> char {
        match self {
            Side::Positive => '+',
            Side::Negative => '-',
            Side::Degenerate => '0',
        }
    }
}

/// Sign of the signed angle swept around each centre.
pub fn homotopy_class(path: &[[f64; 2]], centers: &[[f64; 2]]) -> Vec<Side> {
    centers
        .iter()
        .map(|c| {
            let rel: Vec<[f64; 2]> = path.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect();
            if rel.iter().any(|r| r[0].hypot(r[1]) < DEGENERATE_DISTANCE) {
                return Side::Degenerate;
            }
            // A segment passing through the centre is also degenerate.
            for w in rel.windows(2) {
                let (a, b) = (w[0], w[1]);
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                if len2 > 0.0 {
                    let s = (-(a[0] * d[0] + a[1] * d[1]) / len2).clamp(0.0, 1.0);
                    let q = [a[0] + s * d[0], a[1] + s * d[1]];
                    if q[0].hypot(q[1]) < DEGENERATE_DISTANCE {
                        return Side::Degenerate;
                    }
                }
            }
            let swept = swept_angle(path, *c);
            if swept > 0.0 {
                Side::Positive
            } else if swept < 0.0 {
                Side::Negative
            } else {
                Side::Degenerate
            }
        })
        .collect()
}

/// Total signed angle swept by `p − c` along the path, counter-clockwise
/// positive.
pub fn swept_angle(path: &[[f64; 2]], c: [f64; 2]) -> f64 {
    path.windows(2)
        .map(|w| {
            let a = [w[0][0] - c[0], w[0][1] - c[1]];
            let b = [w[1][0] - c[0], w[1][1] - c[1]];
            (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1])
        })
        .sum()
}

pub fn label_string(sides: &[Side]) -> String {
    sides.iter().map(|s| s.symbol()).collect()
}

/// Reference points that labels are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Anchors {
    /// Joint-space configurations, one per obstacle the straight-line
    /// motion passes through.
    Configuration(Vec<Vec<f64>>),
    /// Workspace obstacle centres; the tip path is labelled.
    Workspace(Vec<[f64; 2]>),
}

impl Anchors {
    pub fn len(&self) -> usize {
        match self {
            Anchors::Configuration(a) => a.len(),
            Anchors::Workspace(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// For two-joint arms: for every obstacle that `reference` collides with, the
/// configuration of deepest penetration. Otherwise the obstacle centres.
pub fn anchors_for(reference: &Trajectory, arm: &ArmModel, scene: &Scene) -> Anchors {
    if arm.dof() != 2 {
        return Anchors::Workspace(scene.obstacles.iter().map(|o| o.center).collect());
    }
    let mut buf = Vec::new();
    let mut deepest: Vec<Option<(f64, usize)>> = vec![None; scene.obstacles.len()];
    for t in 0..reference.steps() {
        arm.body_points_into(&reference.config(t), &mut buf);
        for (k, o) in scene.obstacles.iter().enumerate() {
            let d = buf.iter().map(|p| o.signed_distance(p)).fold(f64::INFINITY, f64::min);
            if d <= 0.0 && deepest[k].is_none_or(|(best, _)| d < best) {
                deepest[k] = Some((d, t));
            }
        }
    }
    Anchors::Configuration(deepest.into_iter().flatten().map(|(_, t)| reference.config(t)).collect())
}

/// Label of a joint trajectory against precomputed anchors.
pub fn trajectory_label(traj: &Trajectory, arm: &ArmModel, anchors: &Anchors) -> String {
    let sides = match anchors {
        Anchors::Configuration(points) => {
            let path: Vec<[f64; 2]> = (0..traj.steps())
                .map(|t| [traj.configurations[(t, 0)], traj.configurations[(t, 1)]])
                .collect();
            let centers: Vec<[f64; 2]> = points.iter().map(|q| [q[0], q[1]]).collect();
            homotopy_class(&path, &centers)
        }
        Anchors::Workspace(centers) => homotopy_class(&tip_path(traj, arm), centers),
    };
    label_string(&sides)
}

pub fn tip_path(traj: &Trajectory, arm: &ArmModel) -> Vec<[f64; 2]> {
    (0..traj.steps())
        .map(|t| {
            let p = arm.tip(&traj.config(t));
            [p.x, p.y]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn arc(from: f64, to: f64, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let a = from + (to - from) * i as f64 / (n - 1) as f64;
                [a.cos(), a.sin()]
            })
            .collect()
    }

    #[test]
    fn semicircles_on_opposite_sides_differ() {
        let above = arc(PI, 0.0, 50);
        let below = arc(PI, 2.0 * PI, 50);
        let c = [[0.0, 0.0]];
        assert_eq!(homotopy_class(&above, &c), vec![Side::Negative]);
        assert_eq!(homotopy_class(&below, &c), vec![Side::Positive]);
    }

    #[test]
    fn straight_path_follows_the_chord_side() {
        let path: Vec<[f64; 2]> = (0..20).map(|i| [-1.0 + 2.0 * i as f64 / 19.0, 0.5]).collect();
        // Centre below the chord: moving left to right sweeps clockwise.
        let below = homotopy_class(&path, &[[0.1, 0.0]]);
        let above = homotopy_class(&path, &[[0.1, 1.0]]);
        assert_eq!(below, vec![Side::Negative]);
        assert_eq!(above, vec![Side::Positive]);
        let expected = 0.5f64.atan2(0.9) - 0.5f64.atan2(-1.1);
        assert!((swept_angle(&path, [0.1, 0.0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn resampling_keeps_labels() {
        let coarse = arc(0.2, 2.9, 30);
        let fine = arc(0.2, 2.9, 59);
        let centers = [[0.0, 0.0], [0.0, 2.0], [0.3, 0.5]];
        assert_eq!(homotopy_class(&coarse, &centers), homotopy_class(&fine, &centers));
    }

    #[test]
    fn touching_the_centre_is_degenerate() {
        let path = vec![[-1.0, 0.0], [1.0, 0.0]];
        assert_eq!(homotopy_class(&path, &[[0.0, 0.0]]), vec![Side::Degenerate]);
        assert_eq!(label_string(&[Side::Positive, Side::Degenerate, Side::Negative]), "+0-");
    }
}
