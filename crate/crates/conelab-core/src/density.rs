//! Radial densities: a Kähler form or volume form `rho(s) * mu_s` on the grid.

use crate::error::{LabError, Result};
use crate::grid::RadialGrid;
use serde::{Deserialize, Serialize};

/// Values of `rho` at the grid nodes together with the exponential tail rates
/// `rho ~ c e^{left_exponent s}` as `s -> -inf` and `rho ~ c e^{-right_exponent s}` as `s -> +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub values: Vec<f64>,
    pub left_exponent: f64,
    pub right_exponent: f64,
    /// Cone angle parameter at `z = 0`: equals `left_exponent` for a cone, 1 at a smooth point.
    pub cone_angle: f64,
}

impl Density {
    /// Wraps node values, rejecting any nonpositive or non-finite entry.
    pub fn new(
        grid: &RadialGrid,
        values: Vec<f64>,
        left_exponent: f64,
        right_exponent: f64,
        what: &str,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidInput(format!("{what}: {} values for {} nodes", values.len(), grid.len())));
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(LabError::PositivityLoss { what: what.to_string(), node, s: grid.nodes[node], value });
        }
        Ok(Self { values, left_exponent, right_exponent, cone_angle: left_exponent.min(1.0) })
    }

    /// Samples a positive function on the grid.
    pub fn from_fn(
        grid: &RadialGrid,
        f: impl Fn(f64) -> f64,
        left_exponent: f64,
        right_exponent: f64,
        what: &str,
    ) -> Result<Self> {
        Self::new(grid, grid.map(f), left_exponent, right_exponent, what)
    }

    /// Multiplies every value by a positive constant.
    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// `int rho ds` over the real line: trapezoid rule on the grid plus exact integrals of the
    /// exponential tails beyond the truncation.
    pub fn area(&self, grid: &RadialGrid) -> f64 {
        trapezoid_with_tails(grid, &self.values, self.left_exponent, self.right_exponent)
    }

    /// Largest relative mismatch between the measured log-slope and the declared exponents
    /// over the outermost tenth of the grid on each side.
    pub fn asymptotic_mismatch(&self, grid: &RadialGrid) -> f64 {
        let n = grid.len();
        let band = (n / 10).max(2);
        let h = grid.spacing;
        let mut worst: f64 = 0.0;
        for i in 0..band - 1 {
            let slope = (self.values[i + 1] / self.values[i]).ln() / h;
            worst = worst.max((slope - self.left_exponent).abs() / self.left_exponent);
        }
        for i in n - band..n - 1 {
            let slope = -(self.values[i + 1] / self.values[i]).ln() / h;
            worst = worst.max((slope - self.right_exponent).abs() / self.right_exponent);
        }
        worst
    }
}

/// Trapezoid rule for node values plus exponential tails `f_0 / left` and `f_end / right`.
pub fn trapezoid_with_tails(grid: &RadialGrid, f: &[f64], left: f64, right: f64) -> f64 {
    let n = f.len();
    let interior: f64 = f[1..n - 1].iter().sum();
    grid.spacing * (interior + 0.5 * (f[0] + f[n - 1])) + f[0] / left + f[n - 1] / right
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_values_with_node() {
        let g = RadialGrid::new(-1.0, 1.0, 32).unwrap();
        let mut v = vec![1.0; 32];
        v[7] = -0.5;
        match Density::new(&g, v, 1.0, 1.0, "test") {
            Err(LabError::PositivityLoss { node, .. }) => assert_eq!(node, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn area_of_pure_exponential_tail_pieces() {
        // rho = e^{-|s|} has total mass 2; tails are exact and the trapezoid error is O(h^2).
        let g = RadialGrid::new(-5.0, 5.0, 4001).unwrap();
        let d = Density::from_fn(&g, |s| (-s.abs()).exp(), 1.0, 1.0, "kink").unwrap();
        assert!((d.area(&g) - 2.0).abs() < 1e-5);
    }
}
