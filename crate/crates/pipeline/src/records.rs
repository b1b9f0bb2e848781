use serde::{Deserialize, Serialize};

/// One latent sweep point and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub z: Vec<f64>,
    pub x_raw: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_refined: Option<Vec<f64>>,
    pub score_raw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_refined: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_free_raw: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_free_refined: Option<bool>,
    pub finetune_iterations: usize,
    /// Fine-tuning stopped without reaching a collision-free trajectory.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub not_converged: bool,
    /// Joint configurations, one row per step (planar problems).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_raw: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_refined: Option<Vec<Vec<f64>>>,
    /// Side of each anchored obstacle the final trajectory passes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homotopy_label: Option<String>,
}

impl SolutionRecord {
    pub fn new(z: Vec<f64>, x_raw: Vec<f64>, score_raw: f64) -> Self {
        SolutionRecord {
            z,
            x_raw,
            x_refined: None,
            score_raw,
            score_refined: None,
            collision_free_raw: None,
            collision_free_refined: None,
            finetune_iterations: 0,
            not_converged: false,
            trajectory_raw: None,
            trajectory_refined: None,
            homotopy_label: None,
        }
    }

    /// Score after refinement when it ran, else the raw score.
    pub fn final_score(&self) -> f64 {
        self.score_refined.unwrap_or(self.score_raw)
    }

    pub fn final_collision_free(&self) -> Option<bool> {
        self.collision_free_refined.or(self.collision_free_raw)
    }

    pub fn final_trajectory(&self) -> Option<&Vec<Vec<f64>>> {
        self.trajectory_refined.as_ref().or(self.trajectory_raw.as_ref())
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }

    /// `mean ± std` as printed in tables.
    pub fn display(&self) -> String {
        format!("{:.4} ± {:.1e}", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_and_json_shape() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(s.display(), "2.0000 ± 1.0e0");
        let mut r = SolutionRecord::new(vec![0.0], vec![1.0, 2.0], 0.5);
        let v = serde_json::to_value(&r).unwrap();
        assert!(v.get("x_refined").is_none());
        assert!(v.get("not_converged").is_none());
        r.score_refined = Some(0.9);
        assert_eq!(r.final_score(), 0.9);
        let back: SolutionRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
