//! One regularization rung end to end: reference data, limit solution, the flow march and a
//! diagnostics record at every sample time.

use crate::config::ModelConfig;
use crate::density::trapezoid_with_tails;
use crate::diagnostics::DiagnosticsRecord;
use crate::error::Result;
use crate::estimates::{
    conical_scalar, masked_extremes, masked_sup_abs, resolved_relative, state_density, trace_defect_monitor,
    trace_monitors, twisted_scalar, u_diagnostics, u_fields,
};
use crate::flow::NewtonParams;
use crate::flow::{area_defect, FlowRunner, FlowState, MarchState};
use crate::geometry::{build_reference_on, ReferenceBundle};
use crate::grid::RadialGrid;
use crate::limit::{solve_ladder, LimitSolution};
use crate::metric::{metric_sample, neighborhood_diameter, LimitDistances};
use crate::potential::Potential;
use serde::{Deserialize, Serialize};

/// Everything a rung needs besides the evolving state.
#[derive(Debug, Clone)]
pub struct RungContext {
    pub refs: ReferenceBundle,
    pub limit: LimitSolution,
    pub limit_distances: LimitDistances,
}

impl RungContext {
    pub fn new(refs: ReferenceBundle, limit: LimitSolution, config: &ModelConfig) -> Self {
        let m = &config.monitors;
        let limit_distances = LimitDistances::new(&limit.chibar, &refs.grid, m.metric_rings, m.metric_source_stride);
        Self { refs, limit, limit_distances }
    }
}

/// Builds the reference bundles of every rung of `ladder` on `grid` and solves their limit
/// equations in order with warm starts.
pub fn prepare_ladder(config: &ModelConfig, grid: &RadialGrid, ladder: &[f64]) -> Result<Vec<RungContext>> {
    let classes = config.validate()?;
    let bundles: Vec<ReferenceBundle> =
        ladder.iter().map(|&eps| build_reference_on(grid, config, &classes, eps)).collect::<Result<_>>()?;
    let limits = solve_ladder(&bundles, &NewtonParams::for_limit(config))?;
    Ok(bundles.into_iter().zip(limits).map(|(r, l)| RungContext::new(r, l, config)).collect())
}

/// Ring count used for neighbourhood tubes.
pub fn neighborhood_rings(config: &ModelConfig) -> usize {
    (config.monitors.metric_rings / 4).max(8)
}

/// Evaluates every monitor at one state.
pub fn sample_record(ctx: &RungContext, state: &FlowState, config: &ModelConfig) -> DiagnosticsRecord {
    let refs = &ctx.refs;
    let mon = &config.monitors;
    let h = refs.grid.spacing;
    let t = state.t;
    let rho = &state.rho_omega;
    let phi = state.phi(refs);
    let total = state.potential.values();
    let psi = ctx.limit.psi.values();
    let sup_abs_phi_dot = state.phi_dot.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let sup_abs_u_minus_psi =
        (0..total.len()).map(|i| (state.phi_dot[i] + total[i] - psi[i]).abs()).fold(0.0_f64, f64::max);

    let r = conical_scalar(state, refs);
    let (sup_r, inf_r) = masked_extremes(&r, &resolved_relative(&r, rho, h, mon.curvature_roundoff_tol));
    let rt = twisted_scalar(state, refs);
    let rt_mask = resolved_relative(&rt, rho, h, mon.curvature_roundoff_tol);
    let sup_abs_twisted_r = masked_sup_abs(&rt, &rt_mask);
    let uf = u_fields(state, refs);
    let defect: Vec<f64> = (0..rt.len()).map(|i| rt[i] + refs.chi.values[i] / rho[i] + uf.laplacian[i]).collect();
    let twisted_identity_defect = masked_sup_abs(&defect, &rt_mask);

    let tr = trace_monitors(state, refs);
    let (sup_t_grad_u_sq, inf_t_lap_u) = u_diagnostics(state, refs, mon.curvature_roundoff_tol);
    let (trace_defect_pos, trace_defect_abs) = trace_defect_monitor(state, refs, &ctx.limit, mon.gamma);
    let (trace_defect_pos_2g, trace_defect_abs_2g) = trace_defect_monitor(state, refs, &ctx.limit, 2.0 * mon.gamma);

    let dens = state_density(state, refs);
    let base_area = trapezoid_with_tails(&refs.grid, rho, dens.left_exponent, dens.right_exponent);
    let ms =
        metric_sample(&dens, &refs.grid, t, refs.a, &ctx.limit_distances, mon.metric_rings, mon.metric_source_stride);
    let nbhd_diam = mon
        .gh_eps
        .iter()
        .map(|&e| {
            neighborhood_diameter(&dens, &refs.chi, &refs.grid, ms.fiber_diam, e, mon.gh_l, neighborhood_rings(config))
                .unwrap_or(f64::NAN)
        })
        .collect();

    DiagnosticsRecord {
        t,
        sup_abs_phi: phi.sup_abs(),
        sup_abs_phi_dot,
        sup_abs_v: state.potential.minus(&ctx.limit.psi).sup_abs(),
        sup_abs_u_minus_psi,
        sup_r,
        inf_r,
        sup_abs_twisted_r,
        twisted_identity_defect,
        sup_tr_chi_star: tr.sup_tr_chi_star,
        sup_tr_omega0: tr.sup_tr_omega0,
        ratio_min: tr.ratio_min,
        ratio_max: tr.ratio_max,
        sup_t_grad_u_sq,
        inf_t_lap_u,
        trace_defect_pos,
        trace_defect_abs,
        trace_defect_pos_2g,
        trace_defect_abs_2g,
        base_area,
        fiber_area: refs.a * (-t).exp(),
        area_defect: area_defect(refs, rho, t),
        fiber_diam: ms.fiber_diam,
        base_diam: ms.base_diam,
        total_diam: ms.total_diam,
        gh_bound: ms.gh_bound,
        nbhd_diam,
    }
}

/// Potential `phi` stored at a checkpoint time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub phi: Potential,
}

/// Complete resumable progress of one rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungProgress {
    pub eps: f64,
    pub t_end: f64,
    pub march: MarchState,
    pub records: Vec<DiagnosticsRecord>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub complete: bool,
}

fn is_checkpoint_time(t: f64, interval: f64) -> bool {
    let k = (t / interval).round();
    (t - k * interval).abs() < 1e-9
}

/// Marches one rung to `t_end`, recording diagnostics at every sample. `on_checkpoint` receives
/// the progress at every multiple of the checkpoint interval; when `stop_after` is given the
/// march returns early, incomplete, at the first checkpoint at or beyond that time.
pub fn run_rung(
    ctx: &RungContext,
    config: &ModelConfig,
    t_end: f64,
    resume: Option<RungProgress>,
    mut on_checkpoint: impl FnMut(&RungProgress) -> Result<()>,
    stop_after: Option<f64>,
) -> Result<RungProgress> {
    let (mut runner, mut progress) = match resume {
        Some(p) => (FlowRunner::resume(&ctx.refs, config, t_end, p.march.clone()), p),
        None => {
            let runner = FlowRunner::new(&ctx.refs, config, t_end)?;
            let progress = RungProgress {
                eps: ctx.refs.eps,
                t_end,
                march: runner.march.clone(),
                records: vec![],
                trajectory: vec![],
                complete: false,
            };
            (runner, progress)
        }
    };
    while let Some(idx) = runner.next_sample()? {
        let state = &runner.march.state;
        progress.records.push(sample_record(ctx, state, config));
        let last = idx + 1 == runner.samples.len();
        if is_checkpoint_time(state.t, config.sampling.checkpoint_interval) || last {
            progress.trajectory.push(TrajectoryPoint { t: state.t, phi: state.phi(&ctx.refs) });
            progress.march = runner.march.clone();
            progress.complete = last;
            on_checkpoint(&progress)?;
            if let Some(stop) = stop_after {
                if state.t >= stop - 1e-9 && !last {
                    return Ok(progress);
                }
            }
        }
    }
    progress.march = runner.march.clone();
    progress.complete = true;
    Ok(progress)
}

/// Sup over common checkpoint times and nodes of `|phi_a - phi_b|`.
pub fn trajectory_difference(a: &[TrajectoryPoint], b: &[TrajectoryPoint]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.phi.minus(&q.phi).sup_abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        let mut c = ModelConfig::reference().without_studies();
        c.grid.n_nodes = 256;
        c.stepper.dt = 0.02;
        c.epsilon_ladder = vec![0.1, 0.05];
        c.monitors.metric_rings = 32;
        c
    }

    #[test]
    fn interrupted_and_resumed_rung_matches_uninterrupted_run() {
        let cfg = tiny_config();
        let grid = RadialGrid::new(cfg.grid.s_min, cfg.grid.s_max, cfg.grid.n_nodes).unwrap();
        let ctxs = prepare_ladder(&cfg, &grid, &cfg.epsilon_ladder).unwrap();
        let full = run_rung(&ctxs[1], &cfg, 2.0, None, |_| Ok(()), None).unwrap();
        let partial = run_rung(&ctxs[1], &cfg, 2.0, None, |_| Ok(()), Some(1.0)).unwrap();
        assert!(!partial.complete);
        let json = serde_json::to_string(&partial).unwrap();
        let restored: RungProgress = serde_json::from_str(&json).unwrap();
        assert_eq!(restored, partial);
        let resumed = run_rung(&ctxs[1], &cfg, 2.0, Some(restored), |_| Ok(()), None).unwrap();
        assert_eq!(resumed, full);
        assert_eq!(full.records.len(), crate::flow::sample_times(&cfg, 2.0).len());
    }
}
