//! Potentials stored by node-to-node slopes.
//!
//! Far out in the tails the metric density is of order `e^{-30}` while the potential itself is of
//! order one. Second differences formed from node values would lose every significant digit there,
//! so a potential is kept as one anchor value plus the slopes `(f_{i+1} - f_i) / h`, which carry the
//! exponentially small tail variation with full relative precision.

use crate::grid::RadialGrid;
use crate::quadrature::gauss_legendre;
use serde::{Deserialize, Serialize};

/// Ghost-node closure factors `e^{-lambda h}` on each side. The ghost value continues the
/// exponential tail `f ~ c0 + c1 e^{lambda s}` (left) or `c0 + c1 e^{-lambda s}` (right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Closure {
    pub left: f64,
    pub right: f64,
}

impl Closure {
    pub fn from_exponents(left_exponent: f64, right_exponent: f64, spacing: f64) -> Self {
        Self { left: (-left_exponent * spacing).exp(), right: (-right_exponent * spacing).exp() }
    }
}

/// A grid function represented by its value at the first node and its cell slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub anchor: f64,
    pub slopes: Vec<f64>,
    pub spacing: f64,
}

impl Potential {
    pub fn zeros(n_nodes: usize, spacing: f64) -> Self {
        Self { anchor: 0.0, slopes: vec![0.0; n_nodes - 1], spacing }
    }

    /// Builds the representation from plain node values.
    pub fn from_values(values: &[f64], spacing: f64) -> Self {
        let slopes = values.windows(2).map(|w| (w[1] - w[0]) / spacing).collect();
        Self { anchor: values[0], slopes, spacing }
    }

    /// Builds the representation of `f` from its value at `s_min` and its derivative, integrating
    /// the derivative over each cell with an eight-point Gauss rule.
    pub fn from_derivative(grid: &RadialGrid, value_at_min: f64, derivative: impl Fn(f64) -> f64) -> Self {
        let h = grid.spacing;
        let slopes = grid.nodes.windows(2).map(|w| gauss_legendre(&derivative, w[0], w[1]) / h).collect();
        Self { anchor: value_at_min, slopes, spacing: h }
    }

    pub fn len(&self) -> usize {
        self.slopes.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node values by cumulative summation from the anchor.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut v = self.anchor;
        out.push(v);
        for q in &self.slopes {
            v += self.spacing * q;
            out.push(v);
        }
        out
    }

    /// Second differences with the exponential-tail ghost closure on both sides.
    pub fn second_difference(&self, closure: Closure) -> Vec<f64> {
        let n = self.len();
        let h = self.spacing;
        let q = &self.slopes;
        let mut out = Vec::with_capacity(n);
        out.push((q[0] - closure.left * q[0]) / h);
        for i in 1..n - 1 {
            out.push((q[i] - q[i - 1]) / h);
        }
        out.push((closure.right * q[n - 2] - q[n - 2]) / h);
        out
    }

    /// Centered first differences, one-sided at the two ends.
    pub fn first_difference(&self) -> Vec<f64> {
        let n = self.len();
        let q = &self.slopes;
        let mut out = Vec::with_capacity(n);
        out.push(q[0]);
        for i in 1..n - 1 {
            out.push(0.5 * (q[i - 1] + q[i]));
        }
        out.push(q[n - 2]);
        out
    }

    /// `self + tau * other`.
    pub fn axpy(&self, tau: f64, other: &Potential) -> Potential {
        Potential {
            anchor: self.anchor + tau * other.anchor,
            slopes: self.slopes.iter().zip(&other.slopes).map(|(a, b)| a + tau * b).collect(),
            spacing: self.spacing,
        }
    }

    /// `self - other`, computed slope by slope.
    pub fn minus(&self, other: &Potential) -> Potential {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, c: f64) -> Potential {
        Potential {
            anchor: c * self.anchor,
            slopes: self.slopes.iter().map(|q| c * q).collect(),
            spacing: self.spacing,
        }
    }

    /// Adds a constant to every node value.
    pub fn shifted(&self, c: f64) -> Potential {
        Potential { anchor: self.anchor + c, ..self.clone() }
    }

    /// Largest absolute node value.
    pub fn sup_abs(&self) -> f64 {
        self.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_values() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.1).sin()).collect();
        let p = Potential::from_values(&v, 0.1);
        for (a, b) in p.values().iter().zip(&v) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn second_difference_matches_three_point_stencil_inside() {
        let h = 0.05;
        let v: Vec<f64> = (0..40).map(|i| ((i as f64) * h).powi(3)).collect();
        let p = Potential::from_values(&v, h);
        let d2 = p.second_difference(Closure { left: 0.9, right: 0.9 });
        for i in 1..39 {
            let direct = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
            assert!((d2[i] - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn ghost_closure_is_exact_for_exponential_tails() {
        // f = 3 + e^{s} on the left tail and 3 + e^{-s} continuation is exact under the closure.
        let g = RadialGrid::new(-20.0, -10.0, 101).unwrap();
        let p = Potential::from_derivative(&g, 3.0 + (-20.0_f64).exp(), |s| s.exp());
        let c = Closure::from_exponents(1.0, 1.0, g.spacing);
        let d2 = p.second_difference(c);
        let h = g.spacing;
        // three-point second difference of e^s: e^s (e^h - 2 + e^{-h}) / h^2
        let factor = (h.exp() - 2.0 + (-h).exp()) / (h * h);
        let rel = (d2[0] - factor * (-20.0_f64).exp()).abs() / ((-20.0_f64).exp());
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn tail_second_differences_keep_relative_precision() {
        // f = 1 + e^{s}: from values the tail would be pure rounding noise.
        let g = RadialGrid::new(-30.0, 0.0, 1025).unwrap();
        let p = Potential::from_derivative(&g, 1.0 + (-30.0_f64).exp(), |s| s.exp());
        let d2 = p.second_difference(Closure::from_exponents(1.0, 1.0, g.spacing));
        let h = g.spacing;
        let factor = (h.exp() - 2.0 + (-h).exp()) / (h * h);
        for i in 1..100 {
            let exact = factor * g.nodes[i].exp();
            assert!((d2[i] - exact).abs() < 1e-11 * exact);
        }
    }
}
