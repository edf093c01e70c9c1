//! Uniform grid on the base coordinate `s = log|z|^2`.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

/// Uniform truncation of the base chart. The cone point sits at `s = -inf`, outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub n_nodes: usize,
    pub spacing: f64,
    pub nodes: Vec<f64>,
}

impl RadialGrid {
    /// Builds `n_nodes` equally spaced nodes covering `[s_min, s_max]`.
    pub fn new(s_min: f64, s_max: f64, n_nodes: usize) -> Result<Self> {
        if !(s_min.is_finite() && s_max.is_finite() && s_min < s_max) {
            return Err(LabError::InvalidInput(format!(
                "grid bounds must satisfy s_min < s_max, got [{s_min}, {s_max}]"
            )));
        }
        if n_nodes < 16 {
            return Err(LabError::InvalidInput(format!("grid needs at least 16 nodes, got {n_nodes}")));
        }
        let spacing = (s_max - s_min) / (n_nodes - 1) as f64;
        let nodes = (0..n_nodes).map(|i| s_min + i as f64 * spacing).collect();
        Ok(Self { s_min, s_max, n_nodes, spacing, nodes })
    }

    pub fn len(&self) -> usize {
        self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.n_nodes == 0
    }

    /// Evaluates `f` at every node.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&s| f(s)).collect()
    }

    /// Index of the node closest to `s`, clamped to the grid.
    pub fn nearest(&self, s: f64) -> usize {
        let r = ((s - self.s_min) / self.spacing).round();
        r.clamp(0.0, (self.n_nodes - 1) as f64) as usize
    }
}
