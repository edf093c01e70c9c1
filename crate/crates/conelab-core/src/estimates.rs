//! Curvature, trace and gradient monitors of the evolving metric and exponential decay fits.

use crate::density::Density;
use crate::error::{LabError, Result};
use crate::flow::FlowState;
use crate::geometry::{norm_s, ReferenceBundle};
use crate::grid::RadialGrid;
use crate::limit::LimitSolution;
use serde::{Deserialize, Serialize};

/// Scale of the rounding error of a curvature computed from stored density values: the error is
/// bounded by `ROUNDOFF_SCALE / (h^2 rho)`, calibrated on the Fubini–Study density.
pub const ROUNDOFF_SCALE: f64 = 1.5e-14;

/// `log(rho_j / rho_i)` evaluated without cancellation for neighbouring values.
fn log_ratio(rho: &[f64], j: usize, i: usize) -> f64 {
    ((rho[j] - rho[i]) / rho[i]).ln_1p()
}

/// `(log rho)''` at every node. Sixth-order centered differences of log ratios in the interior,
/// fourth and second order on the two nodes next to each end, and a ghost node continuing the
/// declared exponential tail at the ends.
pub fn log_second_derivative(rho: &Density, grid: &RadialGrid) -> Vec<f64> {
    let v = &rho.values;
    let n = v.len();
    let h = grid.spacing;
    let ih2 = 1.0 / (h * h);
    let pair = |i: usize, k: usize| log_ratio(v, i + k, i) + log_ratio(v, i - k, i);
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i == 0 {
            (log_ratio(v, 1, 0) - rho.left_exponent * h) * ih2
        } else if i == n - 1 {
            (log_ratio(v, n - 2, n - 1) - rho.right_exponent * h) * ih2
        } else if i == 1 || i == n - 2 {
            pair(i, 1) * ih2
        } else if i == 2 || i == n - 3 {
            (16.0 * pair(i, 1) - pair(i, 2)) / 12.0 * ih2
        } else {
            (270.0 * pair(i, 1) - 27.0 * pair(i, 2) + 2.0 * pair(i, 3)) / 180.0 * ih2
        };
    }
    out
}

/// `(log rho)'` at every node: fourth-order centered log-ratio differences in the interior,
/// second order next to the ends, and the tail exponents at the ends.
pub fn log_first_derivative(rho: &Density, grid: &RadialGrid) -> Vec<f64> {
    let v = &rho.values;
    let n = v.len();
    let h = grid.spacing;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i == 0 {
            rho.left_exponent
        } else if i == n - 1 {
            -rho.right_exponent
        } else if i == 1 || i == n - 2 {
            (log_ratio(v, i + 1, i) - log_ratio(v, i - 1, i)) / (2.0 * h)
        } else {
            (8.0 * (log_ratio(v, i + 1, i) - log_ratio(v, i - 1, i))
                - (log_ratio(v, i + 2, i) - log_ratio(v, i - 2, i)))
                / (12.0 * h)
        };
    }
    out
}

/// Scalar curvature `-(log rho)'' / rho` of a rotationally symmetric surface metric.
pub fn scalar_curvature(rho: &Density, grid: &RadialGrid) -> Vec<f64> {
    log_second_derivative(rho, grid).iter().zip(&rho.values).map(|(d, r)| -d / r).collect()
}

/// Nodes at which the rounding bound `ROUNDOFF_SCALE / (h^2 rho)` of a curvature does not exceed `tol`.
pub fn resolved_nodes(rho: &[f64], spacing: f64, tol: f64) -> Vec<bool> {
    rho.iter().map(|r| ROUNDOFF_SCALE / (spacing * spacing * r) <= tol).collect()
}

/// Nodes at which the rounding bound of a curvature-type field `values` does not exceed
/// `tol * max(1, |value|)`.
pub fn resolved_relative(values: &[f64], rho: &[f64], spacing: f64, tol: f64) -> Vec<bool> {
    values.iter().zip(rho).map(|(v, r)| ROUNDOFF_SCALE / (spacing * spacing * r) <= tol * v.abs().max(1.0)).collect()
}

/// Metric density of the state as a [`Density`].
pub fn state_density(state: &FlowState, refs: &ReferenceBundle) -> Density {
    Density {
        values: state.rho_omega.clone(),
        left_exponent: refs.chi_star.left_exponent,
        right_exponent: 1.0,
        cone_angle: refs.chi_star.cone_angle,
    }
}

/// Scalar curvature of the total space with the regularization current removed:
/// `[-(log rho)'' - A_eps] / rho + 2 e^t / a`, the last term being the exact fiber curvature.
pub fn conical_scalar(state: &FlowState, refs: &ReferenceBundle) -> Vec<f64> {
    let dd = log_second_derivative(&state_density(state, refs), &refs.grid);
    let fiber = 2.0 * state.t.exp() / refs.a;
    (0..dd.len()).map(|i| (-dd[i] - refs.reg_current[i]) / state.rho_omega[i] + fiber).collect()
}

/// Twisted scalar curvature. The fiber Ricci trace `2 e^t / a` and the fiber part of the twist
/// trace cancel identically under the product ansatz, leaving
/// `[-(log rho)'' - twist * FS - A_eps] / rho`.
pub fn twisted_scalar(state: &FlowState, refs: &ReferenceBundle) -> Vec<f64> {
    let dd = log_second_derivative(&state_density(state, refs), &refs.grid);
    (0..dd.len())
        .map(|i| (-dd[i] - refs.classes.twist * refs.fs.values[i] - refs.reg_current[i]) / state.rho_omega[i])
        .collect()
}

/// Largest and smallest value over the selected nodes.
pub fn masked_extremes(values: &[f64], mask: &[bool]) -> (f64, f64) {
    values
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), (v, _)| (hi.max(*v), lo.min(*v)))
}

/// Sup of the absolute value over the selected nodes.
pub fn masked_sup_abs(values: &[f64], mask: &[bool]) -> f64 {
    values.iter().zip(mask).filter(|(_, m)| **m).fold(0.0, |acc, (v, _)| acc.max(v.abs()))
}

/// Trace and metric-equivalence monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceMonitors {
    /// `sup rho_{chi*} / rho_omega`.
    pub sup_tr_chi_star: f64,
    /// `sup (1 + e^{-t} b FS / rho_omega)`.
    pub sup_tr_omega0: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

pub fn trace_monitors(state: &FlowState, refs: &ReferenceBundle) -> TraceMonitors {
    let e = (-state.t).exp();
    let mut m = TraceMonitors { sup_tr_chi_star: 0.0, sup_tr_omega0: 0.0, ratio_min: f64::INFINITY, ratio_max: 0.0 };
    for i in 0..state.rho_omega.len() {
        let rho = state.rho_omega[i];
        let base0 = e * refs.omega0_base.values[i];
        m.sup_tr_chi_star = m.sup_tr_chi_star.max(refs.chi_star.values[i] / rho);
        m.sup_tr_omega0 = m.sup_tr_omega0.max(1.0 + base0 / rho);
        let r = rho / (base0 + refs.chi_star.values[i]);
        m.ratio_min = m.ratio_min.min(r);
        m.ratio_max = m.ratio_max.max(r);
    }
    m
}

/// Gradient and Laplacian of `u = d/dt phi + phi + delta * eta`, which equals
/// `log rho_omega - log rho_W` exactly on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UFields {
    pub u: Vec<f64>,
    /// `|grad u|^2 = (u')^2 / rho_omega`.
    pub grad_sq: Vec<f64>,
    /// `Delta u = u'' / rho_omega`.
    pub laplacian: Vec<f64>,
}

pub fn u_fields(state: &FlowState, refs: &ReferenceBundle) -> UFields {
    let rho = state_density(state, refs);
    let dd = log_second_derivative(&rho, &refs.grid);
    let d1 = log_first_derivative(&rho, &refs.grid);
    let w1 = log_first_derivative(&refs.weight, &refs.grid);
    let phi = state.potential.values();
    let n = dd.len();
    let u: Vec<f64> = (0..n).map(|i| state.phi_dot[i] + phi[i]).collect();
    let grad_sq = (0..n).map(|i| (d1[i] - w1[i]).powi(2) / state.rho_omega[i]).collect();
    let laplacian = (0..n).map(|i| (dd[i] - refs.log_weight_dd[i]) / state.rho_omega[i]).collect();
    UFields { u, grad_sq, laplacian }
}

/// `(sup t |grad u|^2, inf t Delta u)` over the nodes where the curvature is resolved.
pub fn u_diagnostics(state: &FlowState, refs: &ReferenceBundle, roundoff_tol: f64) -> (f64, f64) {
    let f = u_fields(state, refs);
    let h = refs.grid.spacing;
    let (g_hi, _) = masked_extremes(&f.grad_sq, &resolved_relative(&f.grad_sq, &state.rho_omega, h, roundoff_tol));
    let (_, l_lo) = masked_extremes(&f.laplacian, &resolved_relative(&f.laplacian, &state.rho_omega, h, roundoff_tol));
    (state.t * g_hi, state.t * l_lo)
}

/// Weighted trace defect `x^gamma (rho_chibar / rho_omega - 1)` over the grid: returns the sup of
/// its positive part and the sup of its absolute value.
pub fn trace_defect_monitor(
    state: &FlowState,
    refs: &ReferenceBundle,
    limit: &LimitSolution,
    gamma: f64,
) -> (f64, f64) {
    let mut pos = 0.0_f64;
    let mut abs = 0.0_f64;
    for (i, &s) in refs.grid.nodes.iter().enumerate() {
        let w = norm_s(s).powf(gamma) * (limit.chibar.values[i] / state.rho_omega[i] - 1.0);
        pos = pos.max(w);
        abs = abs.max(w.abs());
    }
    (pos, abs)
}

/// Least-squares line through `(t, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Negated slope.
    pub rate: f64,
    pub intercept: f64,
    pub rms: f64,
    pub count: usize,
}

/// Minimum number of samples a decay fit accepts.
pub const MIN_FIT_SAMPLES: usize = 8;

/// Fits `value ~ exp(intercept - rate t)` on the samples with `t` in `window`.
pub fn fit_decay(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    let tiny = 1e-9;
    let mut pts = vec![];
    for (&t, &v) in times.iter().zip(values) {
        if t < window[0] - tiny || t > window[1] + tiny {
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(LabError::NonpositiveValue { t, value: v });
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(LabError::TooFewSamples {
            lo: window[0],
            hi: window[1],
            count: pts.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rms = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { rate: -slope, intercept, rms, count: pts.len() })
}

/// One rung of the instant-smoothing table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingRow {
    pub eps: f64,
    /// `sup_{t in [t_min, t0]} t sup_s |R|`.
    pub m: f64,
    /// `sup_s |R|` at `t_min`.
    pub raw_at_t_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub t_min: f64,
    pub t0: f64,
    pub rows: Vec<SmoothingRow>,
    /// Relative change of `M` between the two finest rungs.
    pub m_variation: f64,
    /// `raw(eps_{k+1}) / raw(eps_k) - 1` per halving.
    pub raw_growth: Vec<f64>,
    /// `M` stable within 20% while the raw early sup grows by at least 50% at every halving.
    pub consistent: bool,
}

/// Minimal relative growth of the raw early curvature per regularization halving.
pub const RAW_GROWTH_MIN: f64 = 0.5;
/// Maximal relative variation of `M` between the two finest rungs.
pub const M_VARIATION_MAX: f64 = 0.2;

/// Builds the table from per-rung `(eps, times, sup_s |R|)` series.
pub fn instant_smoothing_report(rungs: &[(f64, Vec<f64>, Vec<f64>)], t_min: f64, t0: f64) -> SmoothingReport {
    let tiny = 1e-9;
    let rows: Vec<SmoothingRow> = rungs
        .iter()
        .map(|(eps, times, sup_r)| {
            let mut m = 0.0_f64;
            let mut raw = f64::NAN;
            for (&t, &r) in times.iter().zip(sup_r) {
                if t >= t_min - tiny && t <= t0 + tiny {
                    m = m.max(t * r);
                }
                if (t - t_min).abs() < tiny {
                    raw = r;
                }
            }
            SmoothingRow { eps: *eps, m, raw_at_t_min: raw }
        })
        .collect();
    let m_variation = match rows.len() {
        0 | 1 => 0.0,
        k => (rows[k - 1].m - rows[k - 2].m).abs() / rows[k - 2].m,
    };
    let raw_growth: Vec<f64> = rows.windows(2).map(|w| w[1].raw_at_t_min / w[0].raw_at_t_min - 1.0).collect();
    let consistent =
        rows.len() >= 2 && m_variation < M_VARIATION_MAX && raw_growth.iter().all(|g| *g >= RAW_GROWTH_MIN);
    SmoothingReport { t_min, t0, rows, m_variation, raw_growth, consistent }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fs_density;

    #[test]
    fn fubini_study_curvature_is_two_where_resolved() {
        let grid = RadialGrid::new(-30.0, 30.0, 4096).unwrap();
        let fs = Density::from_fn(&grid, fs_density, 1.0, 1.0, "fs").unwrap();
        let r = scalar_curvature(&fs, &grid);
        let mask = resolved_nodes(&fs.values, grid.spacing, 1e-8);
        assert!(mask.iter().filter(|m| **m).count() > 400);
        for i in 0..grid.len() {
            let bound = 1e-9 + ROUNDOFF_SCALE / (grid.spacing.powi(2) * fs.values[i]);
            if grid.nodes[i].abs() <= 20.0 {
                assert!((r[i] - 2.0).abs() <= bound, "s = {}: {}", grid.nodes[i], r[i]);
            }
            if mask[i] {
                assert!((r[i] - 2.0).abs() < 1e-8, "s = {}: {}", grid.nodes[i], r[i]);
            }
        }
    }

    #[test]
    fn scaled_fubini_study_curvature_scales_inversely() {
        let grid = RadialGrid::new(-30.0, 30.0, 2048).unwrap();
        for c in [0.5, 2.0, 4.0] {
            let d = Density::from_fn(&grid, |s| c * fs_density(s), 1.0, 1.0, "c fs").unwrap();
            let r = scalar_curvature(&d, &grid);
            let mask = resolved_nodes(&d.values, grid.spacing, 1e-8);
            assert!(mask.iter().any(|m| *m));
            let (hi, lo) = masked_extremes(&r, &mask);
            assert!((hi - 2.0 / c).abs() < 1e-8 && (lo - 2.0 / c).abs() < 1e-8, "{c}: {hi} {lo}");
        }
    }

    #[test]
    fn flat_cylinder_has_zero_curvature() {
        let grid = RadialGrid::new(-5.0, 5.0, 64).unwrap();
        let d = Density::from_fn(&grid, |_| 3.0, 0.0, 0.0, "flat").unwrap();
        assert!(scalar_curvature(&d, &grid).iter().all(|r| *r == 0.0));
    }

    #[test]
    fn conical_model_curvature_grows_under_refinement() {
        // beta = 0.8 model density FS + delta (x^beta)''; its curvature is unbounded near the tip
        let beta = 0.8;
        let model = |s: f64| {
            let x = norm_s(s);
            fs_density(s) + 0.1 * beta * x.powf(beta) * (beta * (1.0 - x).powi(2) - x * (1.0 - x))
        };
        let mut sups = vec![];
        for s_min in [-10.0, -20.0, -30.0] {
            let n = ((10.0 - s_min) / 0.02) as usize;
            let grid = RadialGrid::new(s_min, 10.0, n).unwrap();
            let d = Density::from_fn(&grid, model, beta, 1.0, "cone").unwrap();
            let r = scalar_curvature(&d, &grid);
            let mask = resolved_relative(&r, &d.values, grid.spacing, 1e-6);
            sups.push(masked_sup_abs(&r[3..r.len() - 3], &mask[3..mask.len() - 3]));
        }
        assert!(sups[1] > sups[0] && sups[2] > sups[1], "{sups:?}");
    }

    #[test]
    fn decay_fit_exact_and_noisy() {
        let t: Vec<f64> = (0..50).map(|k| 2.0 + 0.2 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-0.75 * t).exp()).collect();
        let f = fit_decay(&t, &v, [2.0, 12.0]).unwrap();
        assert!((f.rate - 0.75).abs() < 1e-12 && f.rms < 1e-12);
        let noisy: Vec<f64> = v.iter().enumerate().map(|(k, x)| x * (1.0 + 0.01 * ((k as f64) * 2.3).sin())).collect();
        assert!((fit_decay(&t, &noisy, [2.0, 12.0]).unwrap().rate - 0.75).abs() < 0.02);
        let flat = vec![2.0; t.len()];
        assert!(fit_decay(&t, &flat, [2.0, 12.0]).unwrap().rate.abs() < 1e-14);
        assert!(matches!(fit_decay(&t, &flat, [2.0, 2.5]), Err(LabError::TooFewSamples { .. })));
        let mut bad = v.clone();
        bad[3] = 0.0;
        assert!(matches!(fit_decay(&t, &bad, [2.0, 12.0]), Err(LabError::NonpositiveValue { .. })));
    }

    #[test]
    fn smoothing_report_verdict() {
        let times = vec![0.02, 0.1, 0.5];
        let rungs = vec![
            (0.1, times.clone(), vec![5.0, 3.0, 1.0]),
            (0.05, times.clone(), vec![10.0, 3.2, 1.0]),
            (0.025, times.clone(), vec![20.0, 3.3, 1.0]),
        ];
        let rep = instant_smoothing_report(&rungs, 0.02, 0.5);
        assert!((rep.rows[2].m - 0.5).abs() < 1e-12);
        assert!(rep.consistent);
        assert!((rep.raw_growth[0] - 1.0).abs() < 1e-12);
        let mut slow = rungs.clone();
        slow[2].2[0] = 14.0;
        assert!(!instant_smoothing_report(&slow, 0.02, 0.5).consistent);
    }
}
