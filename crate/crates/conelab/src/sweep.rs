//! Parameter sweeps: independent runs in parallel workers merged into one comparison table.

use crate::artifacts::{json_hash, read_json, write_json, write_text};
use crate::error::{CliError, CliResult};
use crate::run::{cmd_run, worker_pool, RunOptions, RunOutcome};
use crate::summary::{RunSummary, SUMMARY_FILE};
use crate::svg::{Mark, Plot, Series};
use conelab_core::diagnostics::DiagnosticsTable;
use conelab_core::ModelConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const SWEEP_SCHEMA_VERSION: u32 = 1;
pub const COMPARISON_FILE: &str = "comparison.csv";

/// Overrides applied to the base configuration; absent fields keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub n_nodes: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema_version: u32,
    pub base: ModelConfig,
    pub variants: Vec<Variant>,
}

impl Variant {
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        if let Some(v) = self.a {
            c.model.a = v;
        }
        if let Some(v) = self.b {
            c.model.b = v;
        }
        if let Some(v) = self.beta {
            c.model.beta = v;
        }
        if let Some(v) = self.delta {
            c.model.delta = v;
        }
        if let Some(v) = self.n_nodes {
            c.grid.n_nodes = v;
        }
        if let Some(v) = self.dt {
            c.stepper.dt = v;
        }
        c
    }
}

pub fn load_sweep(path: &Path) -> CliResult<SweepSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let spec: SweepSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if spec.schema_version != SWEEP_SCHEMA_VERSION {
        return Err(CliError::Validation(format!(
            "sweep schema_version {} (expected {SWEEP_SCHEMA_VERSION})",
            spec.schema_version
        )));
    }
    if spec.variants.is_empty() {
        return Err(CliError::Validation("sweep lists no variants".into()));
    }
    let mut names: Vec<&str> = spec.variants.iter().map(|v| v.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Validation("variant names must be unique".into()));
    }
    if spec
        .variants
        .iter()
        .any(|v| v.name.is_empty() || !v.name.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)))
    {
        return Err(CliError::Validation("variant names may only use ASCII letters, digits, '.', '_' and '-'".into()));
    }
    Ok(spec)
}

/// Outcome of one sweep member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberStatus {
    pub name: String,
    pub status: String,
}

pub const COMPARISON_COLUMNS: [&str; 15] = [
    "name",
    "status",
    "a",
    "b",
    "beta",
    "delta",
    "n_nodes",
    "dt",
    "eps",
    "potential_rate",
    "time_derivative_rate",
    "u_rate",
    "final_sup_abs_v",
    "max_ratio",
    "final_total_diam",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn comparison_row(name: &str, status: &str, config: &ModelConfig, summary: Option<&RunSummary>) -> String {
    let finest = summary.and_then(|s| s.rungs.last());
    let rate = |col: &str| finest.and_then(|r| r.fits.get(col)).and_then(|f| f.rate);
    let last = |col: &str| finest.and_then(|r| r.final_values.get(col)).copied();
    let max = |col: &str| finest.and_then(|r| r.max_values.get(col)).copied();
    let m = &config.model;
    [
        name.to_string(),
        status.replace([',', '\n'], " "),
        format!("{}", m.a),
        format!("{}", m.b),
        format!("{}", m.beta),
        format!("{}", m.delta),
        format!("{}", config.grid.n_nodes),
        format!("{}", config.stepper.dt),
        cell(finest.map(|r| r.eps)),
        cell(rate("sup_abs_v")),
        cell(rate("sup_abs_phi_dot")),
        cell(rate("sup_abs_u_minus_psi")),
        cell(last("sup_abs_v")),
        cell(max("ratio_max")),
        cell(last("total_diam")),
    ]
    .join(",")
}

/// Runs every variant into `out/<name>` and merges the summaries.
pub fn cmd_sweep(spec: &SweepSpec, out: &Path, workers: Option<usize>) -> CliResult<Vec<MemberStatus>> {
    let configs: Vec<ModelConfig> = spec.variants.iter().map(|v| v.apply(&spec.base)).collect();
    fs::create_dir_all(out)?;
    write_json(&out.join("sweep.json"), spec)?;
    let pool = worker_pool(workers)?;
    // each member marches its rungs on one thread, so only the member level uses the pool
    let inner = RunOptions { workers: Some(1), stop_after: None };
    let outcomes: Vec<String> = pool.install(|| {
        spec.variants
            .par_iter()
            .zip(&configs)
            .map(|(v, c)| match cmd_run(c, &out.join(&v.name), &inner) {
                Ok(RunOutcome::Completed) => "ok".to_string(),
                Ok(RunOutcome::Interrupted) => "interrupted".to_string(),
                Err(e) => format!("failed: {e}"),
            })
            .collect()
    });

    let mut text = COMPARISON_COLUMNS.join(",");
    text.push('\n');
    let mut statuses = vec![];
    let mut curves = vec![];
    let mut scatter = vec![];
    for ((v, c), status) in spec.variants.iter().zip(&configs).zip(outcomes) {
        let member = out.join(&v.name);
        let summary: Option<RunSummary> = read_json(&member.join(SUMMARY_FILE)).ok();
        text.push_str(&comparison_row(&v.name, &status, c, summary.as_ref()));
        text.push('\n');
        if let Some(s) = &summary {
            let k = c.epsilon_ladder.len() - 1;
            if let Ok(csv) = fs::read_to_string(member.join(crate::run::rung_csv(crate::run::MAIN, k))) {
                if let Ok(table) = DiagnosticsTable::parse(&csv) {
                    let t = table.column("t").unwrap_or_default();
                    let y = table.column("sup_abs_v").unwrap_or_default();
                    curves.push(Series { label: v.name.clone(), points: t.into_iter().zip(y).collect() });
                }
            }
            if let Some(rate) = s.rungs.last().and_then(|r| r.fits.get("sup_abs_v")).and_then(|f| f.rate) {
                scatter.push((c.model.beta, rate));
            }
        }
        statuses.push(MemberStatus { name: v.name.clone(), status });
    }
    write_text(&out.join(COMPARISON_FILE), &text)?;
    write_json(&out.join("status.json"), &statuses)?;

    let hash = json_hash(spec);
    let monitor = Plot {
        title: "sup |phi + delta eta - psi| at the finest rung".into(),
        x_label: "t".into(),
        y_label: "sup norm".into(),
        log_y: true,
        mark: Mark::Line,
        series: curves,
    };
    let rates = Plot {
        title: "fitted potential decay rate".into(),
        x_label: "beta".into(),
        y_label: "rate".into(),
        log_y: false,
        mark: Mark::Points,
        series: vec![Series { label: "rate".into(), points: scatter }],
    };
    write_text(&out.join("plots/monitor_vs_t.svg"), &monitor.render(&hash))?;
    write_text(&out.join("plots/rate_vs_beta.svg"), &rates.render(&hash))?;
    Ok(statuses)
}
