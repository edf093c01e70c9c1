//! End-to-end checks of the command-line tool on a reduced configuration.

use conelab::run::{rung_csv, CONFIG_FILE, GKE_FILE, MAIN, REFINEMENT, SMOOTHING};
use conelab::summary::{RunSummary, SUMMARY_FILE};
use conelab::verify::verify_run;
use conelab_core::ModelConfig;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const BIN: &str = env!("CARGO_BIN_EXE_conelab");

/// Two-rung configuration that covers the full fit window in about a second.
fn small_config() -> ModelConfig {
    let mut c = ModelConfig::reference();
    c.grid.n_nodes = 256;
    c.epsilon_ladder = vec![0.1, 0.05];
    c.stepper.dt = 0.02;
    c.monitors.metric_rings = 32;
    c.studies.refinement_n_nodes = Some(512);
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("conelab-cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, config: &ModelConfig) -> PathBuf {
    let path = dir.join("input.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn conelab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CONELAB_WORKERS").output().unwrap()
}

fn run_small(dir: &Path, extra: &[&str]) -> Output {
    let config = write_config(dir, &small_config());
    let out = dir.join("run");
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    conelab(&args)
}

/// One uninterrupted single-worker run shared by the read-only checks.
fn baseline() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch("baseline");
        let out = run_small(&dir, &["--workers", "1"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        dir.join("run")
    })
}

fn all_csv(dir: &Path, config: &ModelConfig) -> Vec<(String, String)> {
    let mut files = vec![];
    for k in 0..config.epsilon_ladder.len() {
        for family in [MAIN, REFINEMENT, SMOOTHING] {
            let rel = rung_csv(family, k);
            files.push((rel.clone(), fs::read_to_string(dir.join(&rel)).unwrap()));
        }
    }
    files.push((GKE_FILE.into(), fs::read_to_string(dir.join(GKE_FILE)).unwrap()));
    files
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn summary_carries_every_monitor_column() {
    let dir = baseline();
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap()).unwrap();
    let header = fs::read_to_string(dir.join(rung_csv(MAIN, 0))).unwrap();
    let columns: Vec<&str> = header.lines().next().unwrap().split(',').collect();
    for rung in &summary.rungs {
        for c in &columns {
            assert!(rung.final_values.contains_key(*c), "missing {c}");
        }
        assert!(rung.fits["sup_abs_v"].rate.is_some());
    }
    assert_eq!(summary.verdicts.len(), 11);
    for plot in ["decay", "twisted_curvature", "diameter", "gh_bound", "equivalence"] {
        let svg = fs::read_to_string(dir.join(format!("plots/{plot}.svg"))).unwrap();
        assert!(svg.contains(&format!("config_hash={}", summary.config_hash)));
    }
}

#[test]
fn reruns_are_bit_identical_for_any_worker_count() {
    let dir = scratch("determinism");
    let out = run_small(&dir, &["--workers", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let config = small_config();
    assert_eq!(all_csv(&dir.join("run"), &config), all_csv(baseline(), &config));
}

#[test]
fn resume_after_interruption_matches_an_uninterrupted_run() {
    let dir = scratch("resume");
    let out = run_small(&dir, &["--workers", "1", "--stop-after", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("interrupted"));
    let run = dir.join("run");
    assert!(!run.join(SUMMARY_FILE).exists());
    let out = conelab(&["resume", "--resume-from", run.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let config = small_config();
    assert_eq!(all_csv(&run, &config), all_csv(baseline(), &config));
}

#[test]
fn degenerate_classes_exit_with_validation_code() {
    let dir = scratch("degenerate");
    let mut config = small_config();
    config.model.a = 2.0;
    config.model.b = 1.0;
    config.model.beta = 0.9;
    let path = write_config(&dir, &config);
    let out = conelab(&["run", "--config", path.to_str().unwrap(), "--out", dir.join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("class degeneracy"), "{}", stderr(&out));
}

#[test]
fn unknown_configuration_key_is_rejected() {
    let dir = scratch("unknown-key");
    let mut value = serde_json::to_value(small_config()).unwrap();
    value["grid"]["n_node"] = serde_json::json!(128);
    let path = dir.join("input.json");
    fs::write(&path, value.to_string()).unwrap();
    let out = conelab(&["run", "--config", path.to_str().unwrap(), "--out", dir.join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n_node"), "{}", stderr(&out));
}

#[test]
fn truncated_run_fails_decay_criteria_on_the_window() {
    let dir = scratch("truncated");
    let mut config = small_config();
    config.stepper.t_end = 1.0;
    let path = write_config(&dir, &config);
    let run = dir.join("run");
    let out = conelab(&["run", "--config", path.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = conelab(&["verify", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let results = verify_run(&run).unwrap();
    for id in [2, 3, 4] {
        let r = &results[id - 1];
        assert!(!r.passed);
        assert!(r.detail.contains("window unsatisfied"), "criterion {id}: {}", r.detail);
    }
}

#[test]
fn tampering_one_value_flips_only_its_criterion() {
    let dir = scratch("tamper");
    let run = dir.join("run");
    copy_tree(baseline(), &run);
    let before = verify_run(&run).unwrap();
    assert!(before[1].passed, "{}", before[1].detail);

    let rel = rung_csv(MAIN, 1);
    let text = fs::read_to_string(run.join(&rel)).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let col = lines[0].split(',').position(|c| c == "sup_abs_v").unwrap();
    let last = lines.len() - 1;
    let mut cells: Vec<String> = lines[last].split(',').map(String::from).collect();
    assert_eq!(cells[0].parse::<f64>().unwrap(), 12.0);
    cells[col] = "0.5".into();
    lines[last] = cells.join(",");
    fs::write(run.join(&rel), lines.join("\n") + "\n").unwrap();

    let after = verify_run(&run).unwrap();
    for (b, a) in before.iter().zip(&after) {
        assert_eq!(b.passed != a.passed, b.id == 2, "criterion {}: {} -> {}", b.id, b.detail, a.detail);
    }
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

#[test]
fn flat_limit_with_constant_volume_shift_is_constant() {
    let dir = scratch("limit-flat");
    let mut config = small_config();
    config.model.beta = 1.0;
    config.model.volume_log_shift = 0.7;
    let path = write_config(&dir, &config);
    let out_dir = dir.join("limit");
    let out = conelab(&["limit", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join(CONFIG_FILE).exists());
    for k in 0..config.epsilon_ladder.len() {
        let text = fs::read_to_string(out_dir.join(conelab::run::limit_psi_file(k))).unwrap();
        for line in text.lines().skip(1) {
            let psi: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((psi - 0.7).abs() < 1e-9, "psi = {psi}");
        }
    }
}

#[test]
fn limit_emits_the_trace_identity_table_with_window_bounds() {
    let dir = baseline();
    let text = fs::read_to_string(dir.join(GKE_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "eps,window_lo,window_hi,sup_residual,sup_trace_residual");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), small_config().epsilon_ladder.len());
    for row in rows {
        assert_eq!((row[1], row[2]), (-10.0, 10.0));
    }
}

#[test]
fn report_regenerates_the_summary() {
    let dir = scratch("report");
    let run = dir.join("run");
    copy_tree(baseline(), &run);
    fs::remove_file(run.join(SUMMARY_FILE)).unwrap();
    let out = conelab(&["report", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(run.join(SUMMARY_FILE).exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("cross-solver convergence"));
}

#[test]
fn beta_sweep_merges_four_runs() {
    let dir = scratch("sweep");
    let mut base = small_config().without_studies();
    base.epsilon_ladder = vec![0.1];
    let variants: Vec<serde_json::Value> =
        [0.3, 0.5, 0.8, 1.0].iter().map(|b| serde_json::json!({ "name": format!("beta-{b}"), "beta": b })).collect();
    let spec = serde_json::json!({ "schema_version": 1, "base": base, "variants": variants });
    let path = dir.join("sweep.json");
    fs::write(&path, spec.to_string()).unwrap();
    let out_dir = dir.join("out");
    let out =
        conelab(&["sweep", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    let header: Vec<&str> = lines[0].split(',').collect();
    let rate = header.iter().position(|c| *c == "potential_rate").unwrap();
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1], "ok", "{line}");
        assert!(cells[rate].parse::<f64>().unwrap() > 0.0, "{line}");
    }
    for b in [0.3, 0.5, 0.8, 1.0] {
        assert!(out_dir.join(format!("beta-{b}")).join(SUMMARY_FILE).exists());
    }
    assert!(out_dir.join("plots/monitor_vs_t.svg").exists());
    assert!(out_dir.join("plots/rate_vs_beta.svg").exists());
}
