//! Acceptance criteria evaluated against the artifacts of a run directory. Every criterion reads
//! its own inputs, so a missing or altered artifact only affects the criteria that consume it.

use crate::artifacts::{load_config, read_json};
use crate::manifest::RunManifest;
use crate::run::{
    rung_csv, rung_meta, Calibration, Oracles, RungMeta, Timings, CALIBRATION_FILE, CONFIG_FILE, MAIN, ORACLES_FILE,
    REFINEMENT, SMOOTHING, TIMINGS_FILE,
};
use conelab_core::diagnostics::{nbhd_column, DiagnosticsTable};
use conelab_core::estimates::{fit_decay, instant_smoothing_report, DecayFit};
use conelab_core::metric::collapse_time;
use conelab_core::ModelConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Tolerances of the acceptance criteria.
pub mod tol {
    /// Criterion 1.
    pub const CALIBRATION: f64 = 1e-8;
    pub const AREA: f64 = 1e-8;
    /// Criterion 2.
    pub const POTENTIAL_RATE: f64 = 0.70;
    pub const POTENTIAL_FINAL: f64 = 1e-3;
    pub const POTENTIAL_RUNTIME_SECONDS: f64 = 120.0;
    /// Criterion 3.
    pub const TIME_DERIVATIVE_RATE: f64 = 0.20;
    /// Criterion 4.
    pub const TRACE_DEFECT_RATE: f64 = 0.10;
    /// Criteria 5 and 7.
    pub const UNIFORM_VARIATION: f64 = 0.10;
    /// Criterion 6.
    pub const SMOOTHING_RUNTIME_SECONDS: f64 = 180.0;
    /// Criterion 9.
    pub const FIBER_RATE: f64 = 0.5;
    pub const FIBER_RATE_ROUNDING: f64 = 1e-9;
    /// Criterion 10.
    pub const GH_TIME: f64 = 10.0;
    pub const GH_FRACTION: f64 = 0.05;
    /// Criterion 11.
    pub const JACOBIAN: f64 = 1e-6;
    pub const UNIQUENESS: f64 = 1e-8;
    pub const RICHARDSON_ORDER: f64 = 1.0;
    pub const RICHARDSON_SLACK: f64 = 0.2;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of one criterion: verdict and explanation, or the reason it could not be evaluated.
type Check = Result<(bool, String), String>;

const TINY: f64 = 1e-9;

/// Lazily loaded artifacts of a run.
struct RunFiles<'a> {
    dir: &'a Path,
    config: ModelConfig,
}

impl RunFiles<'_> {
    fn table(&self, family: &str, k: usize) -> Result<DiagnosticsTable, String> {
        let rel = rung_csv(family, k);
        let text = fs::read_to_string(self.dir.join(&rel)).map_err(|_| format!("missing artifact {rel}"))?;
        DiagnosticsTable::parse(&text).map_err(|e| format!("{rel}: {e}"))
    }

    fn tables(&self, family: &str) -> Result<Vec<DiagnosticsTable>, String> {
        (0..self.config.epsilon_ladder.len()).map(|k| self.table(family, k)).collect()
    }

    fn meta(&self, family: &str, k: usize) -> Result<RungMeta, String> {
        let rel = rung_meta(family, k);
        read_json(&self.dir.join(&rel)).map_err(|_| format!("missing artifact {rel}"))
    }

    fn json<T: serde::de::DeserializeOwned>(&self, rel: &str) -> Result<T, String> {
        read_json(&self.dir.join(rel)).map_err(|_| format!("missing artifact {rel}"))
    }

    fn eps(&self, k: usize) -> f64 {
        self.config.epsilon_ladder[k]
    }
}

fn column(table: &DiagnosticsTable, name: &str) -> Result<Vec<f64>, String> {
    table.column(name).map_err(|e| e.to_string())
}

/// Decay fit on `window` that first checks the series actually spans the window.
pub fn windowed_fit(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<DecayFit, String> {
    let (first, last) = match (times.first(), times.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(format!("window unsatisfied: no samples, fit window [{}, {}]", window[0], window[1])),
    };
    if first > window[0] + TINY || last < window[1] - TINY {
        return Err(format!(
            "window unsatisfied: samples cover [{first}, {last}], fit window [{}, {}]",
            window[0], window[1]
        ));
    }
    fit_decay(times, values, window).map_err(|e| e.to_string())
}

fn relative_change(from: f64, to: f64) -> f64 {
    (to - from).abs() / from.abs()
}

fn sup_where(times: &[f64], values: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    times.iter().zip(values).filter(|(t, _)| keep(**t)).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_1(f: &RunFiles) -> Check {
    let cal: Calibration = f.json(CALIBRATION_FILE)?;
    let mut ok = true;
    let mut parts = vec![];
    for c in &cal.curvature {
        let pass = c.max_error_resolved <= tol::CALIBRATION && c.resolved_nodes > 0;
        ok &= pass;
        parts.push(format!(
            "R({}*FS) err {:.1e} on s in [{:.2}, {:.2}]",
            c.scale, c.max_error_resolved, c.resolved_window[0], c.resolved_window[1]
        ));
    }
    let mut worst_area = 0.0_f64;
    for k in 0..f.config.epsilon_ladder.len() {
        let table = f.table(MAIN, k)?;
        let col = column(&table, "area_defect")?;
        worst_area = col.iter().fold(worst_area, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(*v) });
        worst_area = worst_area.max(f.meta(MAIN, k)?.stats.max_area_defect);
    }
    ok &= worst_area <= tol::AREA;
    parts.push(format!("max area defect {worst_area:.1e} (every step)"));
    Ok((ok, parts.join("; ")))
}

fn per_rung_fits(f: &RunFiles, columns: &[&str], min_rate: f64) -> Check {
    let window = f.config.monitors.fit_window;
    let mut ok = true;
    let mut parts = vec![];
    for k in 0..f.config.epsilon_ladder.len() {
        let table = f.table(MAIN, k)?;
        let t = column(&table, "t")?;
        for name in columns {
            let fit = windowed_fit(&t, &column(&table, name)?, window)?;
            ok &= fit.rate >= min_rate;
            parts.push(format!("eps {} {name} rate {:.3}", f.eps(k), fit.rate));
        }
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_2(f: &RunFiles) -> Check {
    let (mut ok, mut detail) = per_rung_fits(f, &["sup_abs_v"], tol::POTENTIAL_RATE)?;
    let end = f.config.monitors.fit_window[1];
    for k in 0..f.config.epsilon_ladder.len() {
        let table = f.table(MAIN, k)?;
        let t = column(&table, "t")?;
        let v = column(&table, "sup_abs_v")?;
        let at_end = t.iter().zip(&v).find(|(s, _)| (**s - end).abs() < TINY).map(|(_, x)| *x);
        let at_end = at_end.ok_or_else(|| format!("window unsatisfied: no sample at t = {end}"))?;
        ok &= at_end < tol::POTENTIAL_FINAL;
        detail.push_str(&format!("; eps {} value at t = {end}: {at_end:.2e}", f.eps(k)));
    }
    let timings: Timings = f.json(TIMINGS_FILE)?;
    let runtime = timings.limit_seconds + timings.flow_seconds;
    ok &= runtime <= tol::POTENTIAL_RUNTIME_SECONDS;
    detail.push_str(&format!("; runtime {runtime:.1} s"));
    Ok((ok, detail))
}

fn criterion_3(f: &RunFiles) -> Check {
    per_rung_fits(f, &["sup_abs_phi_dot", "sup_abs_u_minus_psi"], tol::TIME_DERIVATIVE_RATE)
}

/// Fits the positive trace defect; when it vanishes somewhere in the window the dominating
/// absolute defect is fitted instead, since its decay bounds the positive part.
fn trace_defect_fit(t: &[f64], pos: &[f64], abs: &[f64], window: [f64; 2]) -> Result<(DecayFit, &'static str), String> {
    let vanishes = t.iter().zip(pos).any(|(s, v)| *s >= window[0] - TINY && *s <= window[1] + TINY && !(*v > 0.0));
    if vanishes {
        windowed_fit(t, abs, window).map(|fit| (fit, "positive part vanishes, absolute defect"))
    } else {
        windowed_fit(t, pos, window).map(|fit| (fit, "positive part"))
    }
}

fn criterion_4(f: &RunFiles) -> Check {
    let window = f.config.monitors.fit_window;
    let gamma = f.config.monitors.gamma;
    let mut ok = true;
    let mut parts = vec![];
    for k in 0..f.config.epsilon_ladder.len() {
        let table = f.table(MAIN, k)?;
        let t = column(&table, "t")?;
        let (fit, how) =
            trace_defect_fit(&t, &column(&table, "trace_defect_pos")?, &column(&table, "trace_defect_abs")?, window)?;
        if fit.rate >= tol::TRACE_DEFECT_RATE {
            parts.push(format!("eps {} gamma {gamma}: {how} rate {:.3}", f.eps(k), fit.rate));
            continue;
        }
        let (fit2, how2) = trace_defect_fit(
            &t,
            &column(&table, "trace_defect_pos_2g")?,
            &column(&table, "trace_defect_abs_2g")?,
            window,
        )?;
        ok &= fit2.rate >= tol::TRACE_DEFECT_RATE;
        parts.push(format!(
            "eps {} gamma {gamma}: rate {:.3}, rerun gamma {}: {how2} rate {:.3}",
            f.eps(k),
            fit.rate,
            2.0 * gamma,
            fit2.rate
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// Ladder-wide maxima of the uniformly bounded quantities of one rung.
fn uniform_quantities(table: &DiagnosticsTable) -> Result<[f64; 4], String> {
    let max = |name: &str| column(table, name).map(|c| c.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)));
    let min = |name: &str| column(table, name).map(|c| c.iter().fold(f64::INFINITY, |m, v| m.min(*v)));
    let equivalence = max("ratio_max")?.max(1.0 / min("ratio_min")?);
    Ok([max("sup_abs_phi")?, max("sup_abs_phi_dot")?, max("sup_tr_chi_star")?, equivalence])
}

const UNIFORM_NAMES: [&str; 4] = ["sup|phi|", "sup|phi_t|", "sup tr chi*", "equivalence constant"];

fn criterion_5(f: &RunFiles) -> Check {
    let main: Vec<[f64; 4]> = f.tables(MAIN)?.iter().map(uniform_quantities).collect::<Result<_, _>>()?;
    let fine: Vec<[f64; 4]> = f.tables(REFINEMENT)?.iter().map(uniform_quantities).collect::<Result<_, _>>()?;
    let m = main.len();
    if m < 2 {
        return Err("the ladder needs two rungs".into());
    }
    let ladder_max = |rows: &[[f64; 4]], q: usize| rows.iter().map(|r| r[q]).fold(f64::NEG_INFINITY, f64::max);
    let mut ok = true;
    let mut parts = vec![];
    for (q, name) in UNIFORM_NAMES.iter().enumerate() {
        let between_rungs = relative_change(main[m - 2][q], main[m - 1][q]);
        let between_grids = relative_change(ladder_max(&main, q), ladder_max(&fine, q));
        ok &= between_rungs < tol::UNIFORM_VARIATION && between_grids < tol::UNIFORM_VARIATION;
        parts.push(format!(
            "{name}: {:.4} -> {:.4} ({:+.1}%), grid change {:.1e}",
            main[m - 2][q],
            main[m - 1][q],
            100.0 * (main[m - 1][q] / main[m - 2][q] - 1.0),
            between_grids
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_6(f: &RunFiles) -> Check {
    let sm = f.config.studies.smoothing.as_ref().ok_or("smoothing study disabled in the configuration")?;
    let mut rungs = vec![];
    for (k, table) in f.tables(SMOOTHING)?.iter().enumerate() {
        let t = column(table, "t")?;
        let r: Vec<f64> =
            column(table, "sup_r")?.iter().zip(column(table, "inf_r")?).map(|(a, b)| a.abs().max(b.abs())).collect();
        if !t.iter().any(|s| (s - sm.t_min).abs() < TINY) || t.last().is_none_or(|l| *l < sm.t_end - TINY) {
            return Err(format!("window unsatisfied: smoothing rung {k} does not cover [{}, {}]", sm.t_min, sm.t_end));
        }
        rungs.push((f.eps(k), t, r));
    }
    let rep = instant_smoothing_report(&rungs, sm.t_min, sm.t_end);
    let timings: Timings = f.json(TIMINGS_FILE)?;
    let runtime = timings.smoothing_seconds.ok_or("missing smoothing runtime")?;
    let ok = rep.consistent && runtime <= tol::SMOOTHING_RUNTIME_SECONDS;
    let ms: Vec<String> = rep.rows.iter().map(|r| format!("{:.4}", r.m)).collect();
    let growth: Vec<String> = rep.raw_growth.iter().map(|g| format!("{:+.0}%", 100.0 * g)).collect();
    Ok((
        ok,
        format!(
            "beta {}: M = [{}] (last variation {:.1}%), raw sup|R| at t = {} growth per halving [{}] (need >= +50%); runtime {runtime:.1} s",
            sm.beta,
            ms.join(", "),
            100.0 * rep.m_variation,
            sm.t_min,
            growth.join(", ")
        ),
    ))
}

fn criterion_7(f: &RunFiles) -> Check {
    let tables = f.tables(MAIN)?;
    let m = tables.len();
    if m < 2 {
        return Err("the ladder needs two rungs".into());
    }
    let t_end = f.config.stepper.t_end;
    let mut late = vec![];
    let mut early = vec![];
    for table in &tables[m - 2..] {
        let t = column(table, "t")?;
        let rt = column(table, "sup_abs_twisted_r")?;
        if t.last().is_none_or(|l| *l < t_end - TINY) {
            return Err(format!("window unsatisfied: samples end before t = {t_end}"));
        }
        late.push(sup_where(&t, &rt, |s| s >= 1.0 - TINY));
        let weighted: Vec<f64> = t.iter().zip(&rt).map(|(s, r)| s * r).collect();
        early.push(sup_where(&t, &weighted, |s| s > 0.0 && s <= 1.0 + TINY));
    }
    let d_late = relative_change(late[0], late[1]);
    let d_early = relative_change(early[0], early[1]);
    let ok = d_late < tol::UNIFORM_VARIATION
        && d_early < tol::UNIFORM_VARIATION
        && late.iter().chain(&early).all(|v| v.is_finite());
    Ok((
        ok,
        format!(
            "sup_[1,{t_end}] |R~|: {:.4} -> {:.4} ({:.1}%); sup_(0,1] t|R~|: {:.4} -> {:.4} ({:.1}%)",
            late[0],
            late[1],
            100.0 * d_late,
            early[0],
            early[1],
            100.0 * d_early
        ),
    ))
}

fn criterion_8(f: &RunFiles) -> Check {
    let tables = f.tables(MAIN)?;
    let mut r_max = 1.0_f64;
    let mut r_min = 1.0_f64;
    for table in &tables {
        r_max = column(table, "ratio_max")?.iter().fold(r_max, |m, v| m.max(*v));
        r_min = column(table, "ratio_min")?.iter().fold(r_min, |m, v| m.min(*v));
    }
    let t_end = f.config.stepper.t_end;
    let mut ok = true;
    let mut parts = vec![];
    for (k, table) in tables.iter().enumerate() {
        let meta = f.meta(MAIN, k)?;
        let t = column(table, "t")?;
        if t.last().is_none_or(|l| *l < t_end - TINY) {
            return Err(format!("window unsatisfied: samples end before t = {t_end}"));
        }
        let d = column(table, "total_diam")?;
        let hi = sup_where(&t, &d, |s| s <= t_end + TINY);
        let lo = -sup_where(&t, &d.iter().map(|x| -x).collect::<Vec<_>>(), |s| s <= t_end + TINY);
        let bound = (r_max / r_min).sqrt() * meta.reference_diameter_start / meta.reference_diameter_end
            * (1.0 + meta.metrication_tol).powi(2);
        ok &= hi / lo <= bound;
        parts.push(format!("eps {} max/min {:.4} <= {:.4}", f.eps(k), hi / lo, bound));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_9(f: &RunFiles) -> Check {
    let mut ok = true;
    let mut parts = vec![];
    for (k, table) in f.tables(MAIN)?.iter().enumerate() {
        let t = column(table, "t")?;
        let fiber = column(table, "fiber_diam")?;
        let window = [t[0], *t.last().unwrap()];
        let fit = windowed_fit(&t, &fiber, window)?;
        ok &= (fit.rate - tol::FIBER_RATE).abs() <= tol::FIBER_RATE_ROUNDING;
        if k == 0 {
            parts.push(format!("fiber rate {:.12}", fit.rate));
        }
    }
    let oracles: Oracles = f.json(ORACLES_FILE)?;
    let fo = &oracles.fiber;
    let tolerance = oracles.metrication_tol;
    let mut worst_scaling = 0.0_f64;
    let mut worst_analytic = 0.0_f64;
    for (i, &t) in fo.times.iter().enumerate() {
        for j in 0..fo.s_samples.len() {
            let scaling = fo.measured[i][j] / fo.measured[0][j] / (-0.5 * t).exp() - 1.0;
            worst_scaling = worst_scaling.max(scaling.abs());
            worst_analytic = worst_analytic.max((fo.measured[i][j] / fo.analytic[i][j] - 1.0).abs());
        }
    }
    ok &= worst_scaling <= tolerance && worst_analytic <= tolerance && fo.s_samples.len() >= 3;
    parts.push(format!(
        "circumference at s = {:?}: scaling error {worst_scaling:.1e}, vs round sphere {worst_analytic:.2e} (tol {tolerance:.4})",
        fo.s_samples
    ));
    Ok((ok, parts.join("; ")))
}

fn criterion_10(f: &RunFiles) -> Check {
    let gh_eps = &f.config.monitors.gh_eps;
    let a = f.config.model.a;
    let mut ok = true;
    let mut parts = vec![];
    for (k, table) in f.tables(MAIN)?.iter().enumerate() {
        let meta = f.meta(MAIN, k)?;
        let t = column(table, "t")?;
        let gh = column(table, "gh_bound")?;
        let at = t.iter().zip(&gh).find(|(s, _)| (**s - tol::GH_TIME).abs() < TINY).map(|(_, g)| *g);
        let at = at.ok_or_else(|| format!("window unsatisfied: no sample at t = {}", tol::GH_TIME))?;
        let limit = tol::GH_FRACTION * meta.limit_diameter;
        ok &= at < limit;
        let mut ratios = vec![];
        for &e in gh_eps {
            let nb = column(table, &nbhd_column(e))?;
            let threshold = collapse_time(e, a);
            let after: Vec<f64> =
                t.iter().zip(&nb).filter(|(s, _)| **s >= threshold - TINY).map(|(_, v)| *v / e).collect();
            if after.is_empty() {
                return Err(format!("window unsatisfied: no sample after t = {threshold:.3} for ball size {e}"));
            }
            // a NaN sample must fail the check, so it is propagated instead of skipped by `max`
            let sup = if after.iter().any(|v| v.is_nan()) {
                f64::NAN
            } else {
                after.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            ratios.push((e, sup));
        }
        let (_, largest_ball_ratio) =
            ratios.iter().copied().max_by(|x, y| x.0.total_cmp(&y.0)).ok_or("monitors.gh_eps is empty")?;
        let constant = largest_ball_ratio * (1.0 + meta.metrication_tol);
        let shape = ratios.iter().all(|(_, r)| r.is_finite() && *r <= constant);
        ok &= shape;
        let listed: Vec<String> = ratios.iter().map(|(e, r)| format!("{e}: {r:.4}")).collect();
        parts.push(format!(
            "eps {}: gh(t = {}) {:.2e} < {:.3e}; sup nbhd/ball [{}] <= {:.4}",
            f.eps(k),
            tol::GH_TIME,
            at,
            limit,
            listed.join(", "),
            constant
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_11(f: &RunFiles) -> Check {
    let o: Oracles = f.json(ORACLES_FILE)?;
    let jac = o.jacobian_relative_mismatch < tol::JACOBIAN;
    let worst_distance = o.distances.iter().map(|d| (d.graph / d.radial - 1.0).abs()).fold(0.0, f64::max);
    let dist = worst_distance <= o.metrication_tol;
    let uniq = o.uniqueness_spread < tol::UNIQUENESS;
    let rich = (o.richardson.order - tol::RICHARDSON_ORDER).abs() <= tol::RICHARDSON_SLACK;
    Ok((
        jac && dist && uniq && rich,
        format!(
            "jacobian {:.1e}; dijkstra vs radial {:.2e} (tol {:.4}); uniqueness spread {:.1e}; richardson order {:.3}",
            o.jacobian_relative_mismatch, worst_distance, o.metrication_tol, o.uniqueness_spread, o.richardson.order
        ),
    ))
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "calibration"),
    (2, "cross-solver convergence"),
    (3, "time-derivative decay"),
    (4, "trace-defect decay"),
    (5, "uniform bounds"),
    (6, "instant smoothing"),
    (7, "twisted scalar bound"),
    (8, "diameter bound"),
    (9, "fiber collapse"),
    (10, "gromov-hausdorff convergence"),
    (11, "oracles"),
];

/// Evaluates every criterion against the run directory `dir`.
pub fn verify_run(dir: &Path) -> Result<Vec<CriterionResult>, String> {
    let config = load_config(&dir.join(CONFIG_FILE)).map_err(|e| e.to_string())?;
    let files = RunFiles { dir, config };
    let checks: [fn(&RunFiles) -> Check; 11] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
    ];
    Ok(CRITERIA
        .iter()
        .zip(checks)
        .map(|(&(id, name), check)| {
            let (passed, detail) = check(&files).unwrap_or_else(|reason| (false, reason));
            CriterionResult { id, name: name.into(), passed, detail }
        })
        .collect())
}

/// Manifest inconsistencies, reported next to the criteria table.
pub fn integrity_notes(dir: &Path) -> Vec<String> {
    match RunManifest::load(dir) {
        Ok(m) => m.integrity_problems(dir),
        Err(e) => vec![format!("manifest unreadable: {e}")],
    }
}

/// One line per criterion.
pub fn format_table(results: &[CriterionResult]) -> String {
    results
        .iter()
        .map(|r| format!("[{}] {:>2} {:<30} {}\n", if r.passed { "PASS" } else { "FAIL" }, r.id, r.name, r.detail))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_series_reports_an_unsatisfied_window() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let err = windowed_fit(&t, &v, [2.0, 12.0]).unwrap_err();
        assert!(err.starts_with("window unsatisfied"), "{err}");
    }

    #[test]
    fn covered_window_fits() {
        let t: Vec<f64> = (0..=120).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|s| 2.0 * (-0.75 * s).exp()).collect();
        assert!((windowed_fit(&t, &v, [2.0, 12.0]).unwrap().rate - 0.75).abs() < 1e-12);
    }

    #[test]
    fn vanishing_positive_defect_falls_back_to_the_absolute_one() {
        let t: Vec<f64> = (0..=120).map(|k| k as f64 * 0.1).collect();
        let pos = vec![0.0; t.len()];
        let abs: Vec<f64> = t.iter().map(|s| (-0.3 * s).exp()).collect();
        let (fit, how) = trace_defect_fit(&t, &pos, &abs, [2.0, 12.0]).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-12);
        assert!(how.contains("absolute"));
    }
}
