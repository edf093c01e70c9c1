//! The reduced Monge–Ampère operator shared by the flow and the limit solver:
//! `F(f) = log((rho_ref + f'') / rho_weight) - f`.

use crate::error::{LabError, Result};
use crate::grid::RadialGrid;
use crate::potential::{Closure, Potential};
use crate::tridiag::Tridiagonal;

/// Operator data: reference density, logarithm of the weight, closure and grid.
#[derive(Debug, Clone, Copy)]
pub struct MaOperator<'a> {
    pub grid: &'a RadialGrid,
    pub ref_density: &'a [f64],
    pub log_weight: &'a [f64],
    pub closure: Closure,
}

impl<'a> MaOperator<'a> {
    /// `rho_ref + f''`; errors at the first nonpositive node.
    pub fn metric_density(&self, f: &Potential) -> Result<Vec<f64>> {
        let d2 = f.second_difference(self.closure);
        let rho: Vec<f64> = self.ref_density.iter().zip(&d2).map(|(r, d)| r + d).collect();
        if let Some((node, &value)) = rho.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(LabError::NonpositiveArgument { node, s: self.grid.nodes[node], value });
        }
        Ok(rho)
    }

    /// Operator values and the metric density at which they were evaluated.
    pub fn evaluate(&self, f: &Potential) -> Result<(Vec<f64>, Vec<f64>)> {
        let rho = self.metric_density(f)?;
        let vals = f.values();
        let out = rho.iter().zip(self.log_weight).zip(&vals).map(|((r, lw), v)| r.ln() - lw - v).collect();
        Ok((out, rho))
    }

    /// Second-difference matrix including the ghost closure rows.
    pub fn second_difference_matrix(&self) -> Tridiagonal {
        let n = self.grid.len();
        let ih2 = 1.0 / (self.grid.spacing * self.grid.spacing);
        let mut t = Tridiagonal { sub: vec![0.0; n], diag: vec![0.0; n], sup: vec![0.0; n] };
        for i in 1..n - 1 {
            t.sub[i] = ih2;
            t.diag[i] = -2.0 * ih2;
            t.sup[i] = ih2;
        }
        t.diag[0] = -(1.0 - self.closure.left) * ih2;
        t.sup[0] = (1.0 - self.closure.left) * ih2;
        t.sub[n - 1] = (1.0 - self.closure.right) * ih2;
        t.diag[n - 1] = -(1.0 - self.closure.right) * ih2;
        t
    }

    /// Jacobian `v -> v'' / rho - v` at metric density `rho`.
    pub fn jacobian(&self, rho: &[f64]) -> Tridiagonal {
        let mut t = self.second_difference_matrix();
        for i in 0..rho.len() {
            let w = 1.0 / rho[i];
            t.sub[i] *= w;
            t.sup[i] *= w;
            t.diag[i] = t.diag[i] * w - 1.0;
        }
        t
    }
}
