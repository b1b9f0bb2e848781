use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Evenly spaced latent values, the same range in every latent dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub count: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(PipelineError::config("sweep count must be at least 2"));
        }
        if !(self.z_max > self.z_min) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(PipelineError::config("sweep needs a finite range with z_min < z_max"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let span = self.z_max - self.z_min;
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.z_max
                } else {
                    self.z_min + span * i as f64 / last
                }
            })
            .collect()
    }
}

/// Cartesian product of the per-dimension grid, first dimension outermost.
pub fn sweep_grid(latent_dim: usize, cfg: &SweepConfig) -> Vec<Vec<f64>> {
    let values = cfg.values();
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..latent_dim {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut z = prefix.clone();
                    z.push(*v);
                    z
                })
            })
            .collect();
    }
    grid
}
