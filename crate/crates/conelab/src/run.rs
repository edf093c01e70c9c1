//! Run lifecycle: limit solves, the flow ladder with checkpoints, the refinement and smoothing
//! studies, calibration and oracle reports, all written into one run directory.

use crate::artifacts::{config_hash, read_json, write_json, write_text};
use crate::checkpoint::Checkpoint;
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, StageStatus, MANIFEST_FILE};
use crate::summary::write_summary;
use conelab_core::density::Density;
use conelab_core::diagnostics::DiagnosticsTable;
use conelab_core::estimates::{resolved_nodes, scalar_curvature};
use conelab_core::flow::{
    jacobian_fd_mismatch, richardson_study, step_implicit, FlowState, MarchStats, NewtonParams, RichardsonReport,
};
use conelab_core::geometry::{build_reference, fs_density, norm_s, ReferenceBundle};
use conelab_core::limit::{gke_trace_residual, ladder_differences, uniqueness_probe, verify_gke};
use conelab_core::metric::{
    base_diameter, fiber_circumference_samples, fiber_diameter, product_diameter, radial_distance, surface_mesh,
};
use conelab_core::pipeline::{prepare_ladder, run_rung, trajectory_difference, RungContext, RungProgress};
use conelab_core::{LabError, ModelConfig, RadialGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use std::time::Instant;

pub const CONFIG_FILE: &str = "config.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const ORACLES_FILE: &str = "oracles.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const FLOW_LADDER_FILE: &str = "flow_ladder.json";
pub const LIMIT_LADDER_FILE: &str = "limit/ladder.json";
pub const GKE_FILE: &str = "limit/gke.csv";
/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "CONELAB_WORKERS";

/// Base names of the three rung families of a run.
pub const MAIN: &str = "rungs";
pub const REFINEMENT: &str = "studies/refinement";
pub const SMOOTHING: &str = "studies/smoothing";

/// Step, horizon and resolution of the time-step refinement oracle.
pub const RICHARDSON_NODES: usize = 256;
pub const RICHARDSON_T_END: f64 = 0.5;
pub const RICHARDSON_DT: f64 = 0.02;
/// Number of random initial guesses of the uniqueness oracle and its seed.
pub const UNIQUENESS_GUESSES: usize = 5;
pub const UNIQUENESS_SEED: u64 = 7;
/// Base points and times of the fiber-circumference oracle.
pub const FIBER_SAMPLE_S: [f64; 3] = [-2.0, 0.0, 2.0];
/// Admissible rounding floor for the curvature calibration.
pub const CALIBRATION_TOL: f64 = 1e-8;
/// Multiples of the Fubini–Study density used by the calibration.
pub const CALIBRATION_SCALES: [f64; 4] = [1.0, 0.5, 2.0, 4.0];

pub fn rung_csv(family: &str, k: usize) -> String {
    format!("{family}/rung_{k}.csv")
}

pub fn rung_meta(family: &str, k: usize) -> String {
    format!("{family}/rung_{k}.json")
}

pub fn checkpoint_file(k: usize) -> String {
    format!("checkpoints/rung_{k}.json")
}

pub fn limit_psi_file(k: usize) -> String {
    format!("limit/psi_rung_{k}.csv")
}

pub fn gke_rung_file(k: usize) -> String {
    format!("limit/gke_rung_{k}.csv")
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` falls back to the environment override and then to all cores.
    pub workers: Option<usize>,
    /// Stop every rung at the first checkpoint at or after this time (interruption drill).
    pub stop_after: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    Interrupted,
}

/// Per-rung facts that the diagnostics series does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungMeta {
    pub eps: f64,
    pub n_nodes: usize,
    pub beta: f64,
    pub t_end: f64,
    pub complete: bool,
    pub error: Option<String>,
    pub stats: MarchStats,
    /// Diameter of the limit base metric.
    pub limit_diameter: f64,
    /// Diameters of the reference family `e^{-t} omega_0 + chi*` at `t = 0` and `t = t_end`.
    pub reference_diameter_start: f64,
    pub reference_diameter_end: f64,
    /// Metrication bound of the shortest-path meshes of this grid.
    pub metrication_tol: f64,
    pub limit_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub limit_seconds: f64,
    pub flow_seconds: f64,
    pub refinement_seconds: Option<f64>,
    pub smoothing_seconds: Option<f64>,
    pub resumed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLadderReport {
    pub eps: Vec<f64>,
    pub residual_norm: Vec<f64>,
    pub iterations: Vec<usize>,
    pub differences: Vec<f64>,
    pub monotone: bool,
    pub gke_window: [f64; 2],
    pub gke_sup: Vec<f64>,
    pub gke_trace_sup: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLadderReport {
    pub eps: Vec<f64>,
    /// Sup over checkpoint times of `|phi_{eps_k} - phi_{eps_{k+1}}|`.
    pub differences: Vec<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureCalibration {
    pub scale: f64,
    pub expected: f64,
    /// Largest error over the nodes where rounding allows the tolerance.
    pub max_error_resolved: f64,
    pub resolved_nodes: usize,
    pub resolved_window: [f64; 2],
    /// Largest error over every grid node.
    pub max_error_all: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tol: f64,
    pub curvature: Vec<CurvatureCalibration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceOracle {
    pub label: String,
    pub graph: f64,
    pub radial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberOracle {
    pub s_samples: Vec<f64>,
    pub times: Vec<f64>,
    /// `measured[i][j]` at `times[i]` and `s_samples[j]`.
    pub measured: Vec<Vec<f64>>,
    pub analytic: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracles {
    pub jacobian_relative_mismatch: f64,
    pub metrication_tol: f64,
    pub distances: Vec<DistanceOracle>,
    pub uniqueness_spread: f64,
    pub richardson: RichardsonReport,
    pub fiber: FiberOracle,
}

/// Thread pool honoring the explicit worker count, then the environment override.
pub fn worker_pool(workers: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let from_env = std::env::var(WORKERS_ENV).ok().map(|v| {
        v.trim().parse::<usize>().map_err(|_| CliError::Validation(format!("{WORKERS_ENV}: not a worker count: {v}")))
    });
    let n = match (workers, from_env) {
        (Some(n), _) => n,
        (None, Some(parsed)) => parsed?,
        (None, None) => 0,
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Io(e.to_string()))
}

fn grid_of(config: &ModelConfig) -> CliResult<RadialGrid> {
    Ok(RadialGrid::new(config.grid.s_min, config.grid.s_max, config.grid.n_nodes)?)
}

fn csv_line(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

/// Writes the limit ladder outputs and returns the contexts.
pub fn limit_stage(config: &ModelConfig, dir: &Path, manifest: &mut RunManifest) -> CliResult<Vec<RungContext>> {
    let grid = grid_of(config)?;
    let ctxs = prepare_ladder(config, &grid, &config.epsilon_ladder)?;
    let window = config.limit.gke_window;
    let mut gke_rows = String::from("eps,window_lo,window_hi,sup_residual,sup_trace_residual\n");
    let mut gke_sup = vec![];
    let mut gke_trace_sup = vec![];
    for (k, ctx) in ctxs.iter().enumerate() {
        let psi = ctx.limit.psi.values();
        let mut text = String::from("s,psi,chibar\n");
        for i in 0..grid.len() {
            text.push_str(&csv_line(&[grid.nodes[i], psi[i], ctx.limit.chibar.values[i]]));
            text.push('\n');
        }
        write_text(&dir.join(limit_psi_file(k)), &text)?;
        manifest.record_file(dir, &limit_psi_file(k))?;

        let rep = verify_gke(&ctx.limit, &ctx.refs, window);
        let trace = gke_trace_residual(&ctx.limit, &ctx.refs, window);
        let mut text = String::from("s,residual\n");
        for (s, r) in rep.nodes.iter().zip(&rep.residual) {
            text.push_str(&csv_line(&[*s, *r]));
            text.push('\n');
        }
        write_text(&dir.join(gke_rung_file(k)), &text)?;
        manifest.record_file(dir, &gke_rung_file(k))?;
        gke_rows.push_str(&csv_line(&[ctx.refs.eps, window[0], window[1], rep.sup, trace]));
        gke_rows.push('\n');
        gke_sup.push(rep.sup);
        gke_trace_sup.push(trace);
    }
    write_text(&dir.join(GKE_FILE), &gke_rows)?;
    manifest.record_file(dir, GKE_FILE)?;
    let limits: Vec<_> = ctxs.iter().map(|c| c.limit.clone()).collect();
    let (differences, monotone) = ladder_differences(&limits);
    let report = LimitLadderReport {
        eps: config.epsilon_ladder.clone(),
        residual_norm: limits.iter().map(|l| l.residual_norm).collect(),
        iterations: limits.iter().map(|l| l.iterations).collect(),
        differences,
        monotone,
        gke_window: window,
        gke_sup,
        gke_trace_sup,
    };
    write_json(&dir.join(LIMIT_LADDER_FILE), &report)?;
    manifest.record_file(dir, LIMIT_LADDER_FILE)?;
    Ok(ctxs)
}

fn reference_diameter(refs: &ReferenceBundle, t: f64, config: &ModelConfig) -> f64 {
    let e = (-t).exp();
    let values: Vec<f64> = refs.fs.values.iter().zip(&refs.chi_star.values).map(|(f, c)| e * refs.b * f + c).collect();
    let rho = Density {
        values,
        left_exponent: refs.chi_star.left_exponent,
        right_exponent: 1.0,
        cone_angle: refs.chi_star.cone_angle,
    };
    let base =
        base_diameter(&rho, &refs.grid, config.monitors.metric_rings, config.monitors.metric_source_stride).graph;
    product_diameter(fiber_diameter(t, refs.a), base)
}

fn rung_meta_for(
    ctx: &RungContext,
    config: &ModelConfig,
    t_end: f64,
    progress: Option<&RungProgress>,
    error: Option<String>,
) -> RungMeta {
    let (_, mesh) = surface_mesh(&ctx.limit.chibar, &ctx.refs.grid, config.monitors.metric_rings);
    RungMeta {
        eps: ctx.refs.eps,
        n_nodes: ctx.refs.grid.len(),
        beta: ctx.refs.beta,
        t_end,
        complete: progress.is_some_and(|p| p.complete) && error.is_none(),
        error,
        stats: progress.map(|p| p.march.stats).unwrap_or_default(),
        limit_diameter: ctx.limit_distances.diameter,
        reference_diameter_start: reference_diameter(&ctx.refs, 0.0, config),
        reference_diameter_end: reference_diameter(&ctx.refs, t_end, config),
        metrication_tol: mesh.metrication_tol(),
        limit_residual: ctx.limit.residual_norm,
    }
}

/// Writes the diagnostics series and the metadata of one rung.
fn write_rung(
    dir: &Path,
    family: &str,
    k: usize,
    ctx: &RungContext,
    config: &ModelConfig,
    t_end: f64,
    progress: Option<&RungProgress>,
    error: Option<String>,
) -> CliResult<()> {
    let records = progress.map(|p| p.records.as_slice()).unwrap_or(&[]);
    let table = DiagnosticsTable::from_records(records, &config.monitors.gh_eps);
    write_text(&dir.join(rung_csv(family, k)), &table.to_csv())?;
    write_json(&dir.join(rung_meta(family, k)), &rung_meta_for(ctx, config, t_end, progress, error))
}

/// Result of one rung of a ladder march.
struct RungRun {
    progress: Option<RungProgress>,
    error: Option<String>,
}

fn march_ladder(
    ctxs: &[RungContext],
    config: &ModelConfig,
    t_end: f64,
    pool: &rayon::ThreadPool,
    checkpoints: Option<(&Path, &str, bool)>,
    stop_after: Option<f64>,
) -> Vec<RungRun> {
    pool.install(|| {
        ctxs.par_iter()
            .enumerate()
            .map(|(k, ctx)| {
                let Some((dir, hash, resume)) = checkpoints else {
                    return match run_rung(ctx, config, t_end, None, |_| Ok(()), None) {
                        Ok(p) => RungRun { progress: Some(p), error: None },
                        Err(e) => RungRun { progress: None, error: Some(e.to_string()) },
                    };
                };
                let path = dir.join(checkpoint_file(k));
                let previous = if resume && path.exists() {
                    match Checkpoint::load(&path, hash) {
                        Ok(cp) => Some(cp.progress),
                        Err(e) => return RungRun { progress: None, error: Some(e.to_string()) },
                    }
                } else {
                    None
                };
                if let Some(p) = previous.as_ref().filter(|p| p.complete) {
                    return RungRun { progress: Some(p.clone()), error: None };
                }
                let save = |p: &RungProgress| {
                    Checkpoint {
                        schema_version: crate::manifest::ARTIFACT_SCHEMA_VERSION,
                        config_hash: hash.into(),
                        rung: k,
                        progress: p.clone(),
                    }
                    .save(&path)
                    .map_err(|e| LabError::InvalidInput(e.to_string()))
                };
                match run_rung(ctx, config, t_end, previous, save, stop_after) {
                    Ok(p) => RungRun { progress: Some(p), error: None },
                    Err(e) => {
                        // keep whatever the last checkpoint preserved
                        let partial = Checkpoint::load(&path, hash).ok().map(|cp| cp.progress);
                        RungRun { progress: partial, error: Some(e.to_string()) }
                    }
                }
            })
            .collect()
    })
}

fn write_ladder_outputs(
    dir: &Path,
    family: &str,
    ctxs: &[RungContext],
    runs: &[RungRun],
    config: &ModelConfig,
    t_end: f64,
    manifest: &mut RunManifest,
) -> CliResult<Vec<String>> {
    let mut failures = vec![];
    for (k, (ctx, run)) in ctxs.iter().zip(runs).enumerate() {
        write_rung(dir, family, k, ctx, config, t_end, run.progress.as_ref(), run.error.clone())?;
        manifest.record_file(dir, &rung_csv(family, k))?;
        manifest.record_file(dir, &rung_meta(family, k))?;
        if let Some(e) = &run.error {
            failures.push(format!("{family} rung {k} (eps = {}): {e}", ctx.refs.eps));
        }
    }
    Ok(failures)
}

fn calibration(config: &ModelConfig) -> CliResult<Calibration> {
    let grid = grid_of(config)?;
    let h = grid.spacing;
    let mut curvature = vec![];
    for &c in &CALIBRATION_SCALES {
        let rho = Density::from_fn(&grid, |s| c * fs_density(s), 1.0, 1.0, "scaled Fubini–Study")?;
        let r = scalar_curvature(&rho, &grid);
        let expected = 2.0 / c;
        let mask = resolved_nodes(&rho.values, h, CALIBRATION_TOL);
        let mut max_error_resolved = 0.0_f64;
        let mut max_error_all = 0.0_f64;
        let mut window = [f64::INFINITY, f64::NEG_INFINITY];
        let mut count = 0;
        for i in 0..grid.len() {
            let err = (r[i] - expected).abs();
            max_error_all = max_error_all.max(err);
            if mask[i] {
                max_error_resolved = max_error_resolved.max(err);
                count += 1;
                window[0] = window[0].min(grid.nodes[i]);
                window[1] = window[1].max(grid.nodes[i]);
            }
        }
        curvature.push(CurvatureCalibration {
            scale: c,
            expected,
            max_error_resolved,
            resolved_nodes: count,
            resolved_window: window,
            max_error_all,
        });
    }
    Ok(Calibration { tol: CALIBRATION_TOL, curvature })
}

fn oracles(config: &ModelConfig, ctx: &RungContext) -> CliResult<Oracles> {
    let refs = &ctx.refs;
    let grid = &refs.grid;
    let flow_params = NewtonParams::for_flow(config);
    let first = step_implicit(&FlowState::initial(refs)?, config.stepper.dt, refs, &flow_params)?.0;
    let jacobian_relative_mismatch = jacobian_fd_mismatch(refs, &first, 7)?;

    let rings = config.monitors.metric_rings;
    let stride = config.monitors.metric_source_stride;
    let mut distances = vec![];
    for (label, rho) in [("fubini-study diameter", &refs.fs), ("limit base diameter", &ctx.limit.chibar)] {
        let d = base_diameter(rho, grid, rings, stride);
        distances.push(DistanceOracle { label: label.into(), graph: d.graph, radial: d.meridian });
    }
    let (_, mesh) = surface_mesh(&ctx.limit.chibar, grid, rings);
    let m = mesh.n_rings();
    for (k1, k2) in [(0, m - 1), (m / 4, 3 * m / 4), (m / 3, m / 2)] {
        let from = mesh.dijkstra(mesh.node(k1, 0));
        distances.push(DistanceOracle {
            label: format!("limit meridian s = {:.3} to {:.3}", mesh.ring_s[k1], mesh.ring_s[k2]),
            graph: from[mesh.node(k2, 0)],
            radial: radial_distance(&ctx.limit.chibar, grid, mesh.ring_s[k1], mesh.ring_s[k2]),
        });
    }

    let uniqueness_spread =
        uniqueness_probe(refs, &NewtonParams::for_limit(config), UNIQUENESS_GUESSES, UNIQUENESS_SEED)?;

    let mut small = config.clone();
    small.grid.n_nodes = RICHARDSON_NODES;
    let small_refs = build_reference(&small, config.epsilon_ladder[0])?;
    let richardson = richardson_study(&small_refs, &NewtonParams::for_flow(&small), RICHARDSON_T_END, RICHARDSON_DT)?;

    let t_end = config.stepper.t_end;
    let times = vec![0.0, 0.5 * t_end, t_end];
    let mut measured = vec![];
    let mut analytic = vec![];
    for &t in &times {
        measured.push(fiber_circumference_samples(grid, &refs.fs, refs.a, t, rings, &FIBER_SAMPLE_S));
        // antipodal points of a latitude circle on a round sphere of diameter D, joined through
        // the nearer pole: 2 D min(theta, pi - theta) / pi with x = sin^2(theta / 2)
        let diam = fiber_diameter(t, refs.a);
        analytic.push(
            FIBER_SAMPLE_S
                .iter()
                .map(|&s| {
                    let ring_s = mesh_ring_near(grid, rings, s);
                    let theta = 2.0 * norm_s(ring_s).sqrt().asin();
                    2.0 * 2.0 * diam * theta.min(std::f64::consts::PI - theta) / std::f64::consts::PI
                })
                .collect(),
        );
    }
    Ok(Oracles {
        jacobian_relative_mismatch,
        metrication_tol: mesh.metrication_tol(),
        distances,
        uniqueness_spread,
        richardson,
        fiber: FiberOracle { s_samples: FIBER_SAMPLE_S.to_vec(), times, measured, analytic },
    })
}

/// `s` of the mesh ring nearest to `s`, matching the ring choice of the circumference sampler.
fn mesh_ring_near(grid: &RadialGrid, rings: usize, s: f64) -> f64 {
    let idx = conelab_core::metric::ring_indices(0, grid.len() - 1, rings);
    idx.iter().map(|&i| grid.nodes[i]).min_by(|a, b| (a - s).abs().total_cmp(&(b - s).abs())).unwrap()
}

/// Starts a fresh run in `out`.
pub fn cmd_run(config: &ModelConfig, out: &Path, opts: &RunOptions) -> CliResult<RunOutcome> {
    config.validate()?;
    if out.join(MANIFEST_FILE).exists() {
        return Err(CliError::Validation(format!("{} already holds a run; use resume", out.display())));
    }
    fs::create_dir_all(out)?;
    write_json(&out.join(CONFIG_FILE), config)?;
    let mut manifest = RunManifest::new(&config_hash(config));
    manifest.record_file(out, CONFIG_FILE)?;
    manifest.log("config", StageStatus::Completed, "");
    manifest.save(out)?;
    execute(config, out, opts, manifest, false)
}

/// Continues an interrupted or failed run from its checkpoints.
pub fn cmd_resume(dir: &Path, opts: &RunOptions) -> CliResult<RunOutcome> {
    let config = crate::artifacts::load_config(&dir.join(CONFIG_FILE))?;
    let manifest = RunManifest::load(dir)?;
    if manifest.config_hash != config_hash(&config) {
        return Err(CliError::Validation(format!("{}: configuration does not match the manifest hash", dir.display())));
    }
    execute(&config, dir, opts, manifest, true)
}

fn stage<T>(
    manifest: &mut RunManifest,
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut RunManifest) -> CliResult<T>,
) -> CliResult<T> {
    manifest.log(name, StageStatus::Started, "");
    manifest.save(dir)?;
    match body(manifest) {
        Ok(v) => {
            manifest.log(name, StageStatus::Completed, "");
            manifest.save(dir)?;
            Ok(v)
        }
        Err(e) => {
            manifest.log(name, StageStatus::Failed, e.to_string());
            manifest.save(dir)?;
            Err(e)
        }
    }
}

fn execute(
    config: &ModelConfig,
    dir: &Path,
    opts: &RunOptions,
    mut manifest: RunManifest,
    resume: bool,
) -> CliResult<RunOutcome> {
    let pool = worker_pool(opts.workers)?;
    let hash = config_hash(config);
    let t_end = config.stepper.t_end;
    let mut timings = Timings { resumed: resume, ..Default::default() };

    let clock = Instant::now();
    let ctxs = stage(&mut manifest, dir, "limit", |m| limit_stage(config, dir, m))?;
    timings.limit_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    manifest.log("flow", StageStatus::Started, "");
    manifest.save(dir)?;
    let runs = march_ladder(&ctxs, config, t_end, &pool, Some((dir, &hash, resume)), opts.stop_after);
    timings.flow_seconds = clock.elapsed().as_secs_f64();
    let failures = write_ladder_outputs(dir, MAIN, &ctxs, &runs, config, t_end, &mut manifest)?;
    for k in 0..ctxs.len() {
        if dir.join(checkpoint_file(k)).exists() {
            manifest.record_file(dir, &checkpoint_file(k))?;
        }
    }
    if !failures.is_empty() {
        manifest.log("flow", StageStatus::Failed, failures.join("; "));
        manifest.save(dir)?;
        return Err(CliError::Solver(failures.join("; ")));
    }
    if runs.iter().any(|r| !r.progress.as_ref().is_some_and(|p| p.complete)) {
        let reached =
            runs.iter().filter_map(|r| r.progress.as_ref()).map(|p| p.march.state.t).fold(f64::INFINITY, f64::min);
        manifest.log("flow", StageStatus::Interrupted, format!("stopped at t = {reached}"));
        manifest.save(dir)?;
        return Ok(RunOutcome::Interrupted);
    }
    let trajectories: Vec<_> = runs.iter().map(|r| r.progress.as_ref().unwrap().trajectory.clone()).collect();
    let differences: Vec<f64> = trajectories.windows(2).map(|w| trajectory_difference(&w[0], &w[1])).collect();
    let monotone = differences.windows(2).all(|w| w[1] <= w[0]);
    write_json(
        &dir.join(FLOW_LADDER_FILE),
        &FlowLadderReport { eps: config.epsilon_ladder.clone(), differences, monotone },
    )?;
    manifest.record_file(dir, FLOW_LADDER_FILE)?;
    manifest.log("flow", StageStatus::Completed, "");
    manifest.save(dir)?;

    if let Some(n) = config.studies.refinement_n_nodes {
        let clock = Instant::now();
        stage(&mut manifest, dir, "refinement", |m| {
            let mut fine = config.clone();
            fine.grid.n_nodes = n;
            let ctxs = prepare_ladder(&fine, &grid_of(&fine)?, &fine.epsilon_ladder)?;
            let runs = march_ladder(&ctxs, &fine, t_end, &pool, None, None);
            let failures = write_ladder_outputs(dir, REFINEMENT, &ctxs, &runs, &fine, t_end, m)?;
            if failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Solver(failures.join("; ")))
            }
        })?;
        timings.refinement_seconds = Some(clock.elapsed().as_secs_f64());
    }
    if let Some(sm) = &config.studies.smoothing {
        let clock = Instant::now();
        stage(&mut manifest, dir, "smoothing", |m| {
            let mut study = config.clone();
            study.model.beta = sm.beta;
            study.stepper.t_end = sm.t_end;
            let ctxs = prepare_ladder(&study, &grid_of(&study)?, &study.epsilon_ladder)?;
            let runs = march_ladder(&ctxs, &study, sm.t_end, &pool, None, None);
            let failures = write_ladder_outputs(dir, SMOOTHING, &ctxs, &runs, &study, sm.t_end, m)?;
            if failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Solver(failures.join("; ")))
            }
        })?;
        timings.smoothing_seconds = Some(clock.elapsed().as_secs_f64());
    }

    stage(&mut manifest, dir, "calibration", |m| {
        write_json(&dir.join(CALIBRATION_FILE), &calibration(config)?)?;
        m.record_file(dir, CALIBRATION_FILE)
    })?;
    stage(&mut manifest, dir, "oracles", |m| {
        write_json(&dir.join(ORACLES_FILE), &oracles(config, ctxs.last().expect("nonempty ladder"))?)?;
        m.record_file(dir, ORACLES_FILE)
    })?;
    write_json(&dir.join(TIMINGS_FILE), &timings)?;
    manifest.record_file(dir, TIMINGS_FILE)?;
    stage(&mut manifest, dir, "summary", |m| write_summary(dir, m))?;
    Ok(RunOutcome::Completed)
}

/// Solves the limit ladder alone into `out`.
pub fn cmd_limit(config: &ModelConfig, out: &Path) -> CliResult<LimitLadderReport> {
    config.validate()?;
    fs::create_dir_all(out)?;
    write_json(&out.join(CONFIG_FILE), config)?;
    let mut manifest = RunManifest::new(&config_hash(config));
    manifest.record_file(out, CONFIG_FILE)?;
    stage(&mut manifest, out, "limit", |m| limit_stage(config, out, m))?;
    read_json(&out.join(LIMIT_LADDER_FILE))
}
