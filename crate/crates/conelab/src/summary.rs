//! Summary record and plots of a completed run.

use crate::artifacts::{config_hash, load_config, read_json, write_json, write_text};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::run::{
    rung_csv, rung_meta, FlowLadderReport, LimitLadderReport, RungMeta, CONFIG_FILE, FLOW_LADDER_FILE,
    LIMIT_LADDER_FILE, MAIN,
};
use crate::svg::{Mark, Plot, Series};
use crate::verify::{verify_run, windowed_fit, CriterionResult};
use conelab_core::diagnostics::DiagnosticsTable;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const SUMMARY_FILE: &str = "summary.json";
/// Monitors whose exponential decay is fitted in the summary.
pub const FITTED_COLUMNS: [&str; 5] =
    ["sup_abs_v", "sup_abs_phi_dot", "sup_abs_u_minus_psi", "trace_defect_abs", "fiber_diam"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub rate: Option<f64>,
    pub intercept: Option<f64>,
    pub rms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungSummary {
    pub eps: f64,
    pub complete: bool,
    /// Last sample of every monitor column.
    pub final_values: BTreeMap<String, f64>,
    /// Largest value over the run of every monitor column.
    pub max_values: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, FitSummary>,
    pub limit_diameter: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub fit_window: [f64; 2],
    pub rungs: Vec<RungSummary>,
    pub limit_ladder: LimitLadderReport,
    pub flow_ladder: FlowLadderReport,
    pub verdicts: Vec<CriterionResult>,
}

fn load_table(dir: &Path, rel: &str) -> CliResult<DiagnosticsTable> {
    let text = fs::read_to_string(dir.join(rel)).map_err(|e| CliError::Io(format!("{rel}: {e}")))?;
    DiagnosticsTable::parse(&text).map_err(|e| CliError::Io(format!("{rel}: {e}")))
}

fn rung_summary(table: &DiagnosticsTable, meta: &RungMeta, window: [f64; 2]) -> RungSummary {
    let last = table.rows.last();
    let mut final_values = BTreeMap::new();
    let mut max_values = BTreeMap::new();
    for (i, name) in table.header.iter().enumerate() {
        final_values.insert(name.clone(), last.map_or(f64::NAN, |r| r[i]));
        max_values.insert(name.clone(), table.rows.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max));
    }
    let t = table.column("t").unwrap_or_default();
    let mut fits = BTreeMap::new();
    for name in FITTED_COLUMNS {
        let values = table.column(name).unwrap_or_default();
        let fit = match windowed_fit(&t, &values, window) {
            Ok(f) => FitSummary { rate: Some(f.rate), intercept: Some(f.intercept), rms: Some(f.rms), error: None },
            Err(e) => FitSummary { rate: None, intercept: None, rms: None, error: Some(e) },
        };
        fits.insert(name.to_string(), fit);
    }
    RungSummary {
        eps: meta.eps,
        complete: meta.complete,
        final_values,
        max_values,
        fits,
        limit_diameter: meta.limit_diameter,
        accepted_steps: meta.stats.accepted,
        rejected_steps: meta.stats.rejected,
    }
}

fn series(tables: &[DiagnosticsTable], eps: &[f64], column: &str) -> Vec<Series> {
    tables
        .iter()
        .zip(eps)
        .map(|(table, e)| {
            let t = table.column("t").unwrap_or_default();
            let v = table.column(column).unwrap_or_default();
            Series { label: format!("eps = {e}"), points: t.into_iter().zip(v).collect() }
        })
        .collect()
}

fn line(title: &str, y_label: &str, log_y: bool, series: Vec<Series>) -> Plot {
    Plot { title: title.into(), x_label: "t".into(), y_label: y_label.into(), log_y, mark: Mark::Line, series }
}

/// Builds `summary.json` and the plots from the stored series and records them in the manifest.
pub fn write_summary(dir: &Path, manifest: &mut RunManifest) -> CliResult<()> {
    let config = load_config(&dir.join(CONFIG_FILE))?;
    let hash = config_hash(&config);
    let window = config.monitors.fit_window;
    let eps = &config.epsilon_ladder;
    let mut tables = vec![];
    let mut rungs = vec![];
    for k in 0..eps.len() {
        let table = load_table(dir, &rung_csv(MAIN, k))?;
        let meta: RungMeta = read_json(&dir.join(rung_meta(MAIN, k)))?;
        rungs.push(rung_summary(&table, &meta, window));
        tables.push(table);
    }
    let verdicts = verify_run(dir).map_err(CliError::Io)?;
    let summary = RunSummary {
        config_hash: hash.clone(),
        fit_window: window,
        rungs,
        limit_ladder: read_json(&dir.join(LIMIT_LADDER_FILE))?,
        flow_ladder: read_json(&dir.join(FLOW_LADDER_FILE))?,
        verdicts,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    manifest.record_file(dir, SUMMARY_FILE)?;

    let finest = tables.len() - 1;
    let decay = Plot {
        series: ["sup_abs_v", "sup_abs_phi_dot", "sup_abs_u_minus_psi", "trace_defect_abs"]
            .iter()
            .map(|c| {
                let t = tables[finest].column("t").unwrap_or_default();
                let v = tables[finest].column(c).unwrap_or_default();
                Series { label: c.to_string(), points: t.into_iter().zip(v).collect() }
            })
            .collect(),
        ..line(&format!("decay monitors, eps = {}", eps[finest]), "sup norm", true, vec![])
    };
    let plots = [
        ("plots/decay.svg", decay),
        (
            "plots/twisted_curvature.svg",
            line("twisted scalar curvature", "sup |R~|", true, series(&tables, eps, "sup_abs_twisted_r")),
        ),
        ("plots/diameter.svg", line("diameter", "diam(X, d_t)", false, series(&tables, eps, "total_diam"))),
        ("plots/gh_bound.svg", line("Gromov-Hausdorff upper bound", "bound", true, series(&tables, eps, "gh_bound"))),
        ("plots/equivalence.svg", line("equivalence ratio", "max ratio", false, series(&tables, eps, "ratio_max"))),
    ];
    for (rel, plot) in plots {
        write_text(&dir.join(rel), &plot.render(&hash))?;
        manifest.record_file(dir, rel)?;
    }
    Ok(())
}
