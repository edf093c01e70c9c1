//! Run configuration. Every field is required and unknown keys are rejected.

use crate::error::{LabError, Result};
use crate::geometry::{tmax_and_classes, ClassData};
use serde::{Deserialize, Serialize};

/// Current configuration schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub model: ModelParams,
    /// Strictly decreasing regularization parameters.
    pub epsilon_ladder: Vec<f64>,
    pub grid: GridParams,
    pub stepper: StepperParams,
    pub sampling: SamplingParams,
    pub limit: LimitParams,
    pub monitors: MonitorParams,
    pub studies: StudyParams,
}

/// Class data and cone parameters of the product model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Fiber Fubini–Study multiple.
    pub a: f64,
    /// Base Fubini–Study multiple.
    pub b: f64,
    /// Cone angle parameter in (0, 1].
    pub beta: f64,
    /// Cone-smoothing constant of the model conical metric.
    pub delta: f64,
    /// The volume form is multiplied by `exp(-volume_log_shift)`; 0 for ordinary runs.
    pub volume_log_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub s_min: f64,
    pub s_max: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperParams {
    /// Nominal (and maximal) backward-Euler time step.
    pub dt: f64,
    pub t_end: f64,
    /// Sup-norm tolerance on the backward-Euler residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    /// Diagnostics spacing after `early_until`.
    pub interval: f64,
    /// Diagnostics spacing on `(0, early_until]`.
    pub early_interval: f64,
    pub early_until: f64,
    /// States are kept in the trajectory (and checkpointed) every this many time units.
    pub checkpoint_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitParams {
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings per Newton iteration.
    pub damping_budget: usize,
    /// Interior `s`-window `[lo, hi]` for the Kähler–Einstein residual report.
    pub gke_window: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorParams {
    /// Weight exponent of the trace-defect monitor (the natural choice is 1 - beta).
    pub gamma: f64,
    /// Time window `[lo, hi]` of all decay fits.
    pub fit_window: [f64; 2],
    /// Admissible rounding error of curvature-type monitors; nodes whose density is too small to
    /// reach it in double precision are left out of those monitors.
    pub curvature_roundoff_tol: f64,
    /// Number of rings of the two-dimensional shortest-path mesh.
    pub metric_rings: usize,
    /// Every this many rings a Dijkstra source is placed.
    pub metric_source_stride: usize,
    /// Neighborhood sizes for the tube-diameter monitor.
    pub gh_eps: Vec<f64>,
    /// Exponent of the base-ball radius `eps^L`.
    pub gh_l: u32,
}

/// Companion studies recorded by a run: a spatial refinement of the finest rungs and a
/// short high-angle ladder for the instant-smoothing test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyParams {
    pub refinement_n_nodes: Option<usize>,
    pub smoothing: Option<SmoothingStudy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingStudy {
    pub beta: f64,
    pub t_end: f64,
    pub t_min: f64,
}

impl ModelConfig {
    /// The reference configuration `(a, b, beta, delta) = (2, 4, 0.5, 0.1)`.
    pub fn reference() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelParams { a: 2.0, b: 4.0, beta: 0.5, delta: 0.1, volume_log_shift: 0.0 },
            epsilon_ladder: vec![0.1, 0.05, 0.025, 0.0125],
            grid: GridParams { s_min: -30.0, s_max: 30.0, n_nodes: 2048 },
            stepper: StepperParams { dt: 5e-3, t_end: 12.0, newton_tol: 1e-10, newton_max_iter: 40 },
            sampling: SamplingParams {
                interval: 0.1,
                early_interval: 0.01,
                early_until: 1.0,
                checkpoint_interval: 1.0,
            },
            limit: LimitParams { tol: 1e-10, max_iter: 200, damping_budget: 40, gke_window: [-10.0, 10.0] },
            monitors: MonitorParams {
                gamma: 0.5,
                fit_window: [2.0, 12.0],
                curvature_roundoff_tol: 1e-6,
                metric_rings: 96,
                metric_source_stride: 3,
                gh_eps: vec![0.2, 0.1, 0.05],
                gh_l: 3,
            },
            studies: StudyParams {
                refinement_n_nodes: Some(4096),
                smoothing: Some(SmoothingStudy { beta: 0.8, t_end: 0.5, t_min: 0.02 }),
            },
        }
    }

    /// Copy with the companion studies switched off.
    pub fn without_studies(&self) -> Self {
        let mut c = self.clone();
        c.studies = StudyParams { refinement_n_nodes: None, smoothing: None };
        c
    }

    /// Field-level validation; returns the class data on success.
    pub fn validate(&self) -> Result<ClassData> {
        let bad = |field: &str, why: &str| Err(LabError::InvalidInput(format!("{field}: {why}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad("schema_version", &format!("expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        let m = &self.model;
        if !(m.a > 0.0 && m.a.is_finite()) {
            return bad("model.a", "must be positive");
        }
        if !(m.b > 0.0 && m.b.is_finite()) {
            return bad("model.b", "must be positive");
        }
        if !(m.beta > 0.0 && m.beta <= 1.0) {
            return bad("model.beta", "must lie in (0, 1]");
        }
        if !(m.delta > 0.0 && m.delta.is_finite()) {
            return bad("model.delta", "must be positive");
        }
        if !m.volume_log_shift.is_finite() {
            return bad("model.volume_log_shift", "must be finite");
        }
        if self.epsilon_ladder.is_empty() {
            return bad("epsilon_ladder", "must not be empty");
        }
        if self.epsilon_ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("epsilon_ladder", "entries must be positive");
        }
        if self.epsilon_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon_ladder", "must be strictly decreasing");
        }
        let g = &self.grid;
        if !(g.s_min < g.s_max) || !g.s_min.is_finite() || !g.s_max.is_finite() {
            return bad("grid", "need finite s_min < s_max");
        }
        if g.n_nodes < 16 {
            return bad("grid.n_nodes", "must be at least 16");
        }
        let st = &self.stepper;
        if !(st.dt > 0.0 && st.t_end > 0.0 && st.newton_tol > 0.0 && st.newton_max_iter > 0) {
            return bad("stepper", "dt, t_end, newton_tol and newton_max_iter must be positive");
        }
        let sa = &self.sampling;
        if !(sa.interval > 0.0 && sa.early_interval > 0.0 && sa.early_until >= 0.0 && sa.checkpoint_interval > 0.0) {
            return bad("sampling", "intervals must be positive");
        }
        let l = &self.limit;
        if !(l.tol > 0.0 && l.max_iter > 0 && l.gke_window[0] < l.gke_window[1]) {
            return bad("limit", "tol and max_iter must be positive and gke_window increasing");
        }
        let mo = &self.monitors;
        if !(mo.gamma >= 0.0 && mo.fit_window[0] < mo.fit_window[1] && mo.curvature_roundoff_tol > 0.0) {
            return bad("monitors", "gamma >= 0, increasing fit_window and positive roundoff tolerance required");
        }
        if mo.metric_rings < 8 || mo.metric_source_stride == 0 || mo.gh_l == 0 {
            return bad("monitors", "metric_rings >= 8, metric_source_stride >= 1 and gh_l >= 1 required");
        }
        if mo.gh_eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("monitors.gh_eps", "entries must lie in (0, 1)");
        }
        if let Some(n) = self.studies.refinement_n_nodes {
            if n < 16 {
                return bad("studies.refinement_n_nodes", "must be at least 16");
            }
        }
        if let Some(sm) = &self.studies.smoothing {
            if !(sm.beta > 0.0 && sm.beta <= 1.0 && sm.t_end > 0.0 && sm.t_min > 0.0 && sm.t_min < sm.t_end) {
                return bad("studies.smoothing", "need beta in (0,1] and 0 < t_min < t_end");
            }
        }
        tmax_and_classes(m.a, m.b, m.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_validates() {
        let c = ModelConfig::reference().validate().unwrap();
        assert_eq!(c.t_max, 1.0);
        assert_eq!(c.c_chi, 2.5);
    }

    #[test]
    fn degenerate_classes_are_rejected() {
        let mut cfg = ModelConfig::reference();
        cfg.model.a = 2.0;
        cfg.model.b = 1.0;
        cfg.model.beta = 0.9;
        assert!(matches!(cfg.validate(), Err(LabError::ClassDegeneracy { .. })));
    }

    #[test]
    fn ladder_must_decrease() {
        let mut cfg = ModelConfig::reference();
        cfg.epsilon_ladder = vec![0.1, 0.1];
        assert!(cfg.validate().is_err());
    }
}
