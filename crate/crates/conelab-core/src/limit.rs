//! Elliptic limit equation `log((rho_chi + psi'') / rho_W) = psi` solved by damped Newton
//! iteration with warm starts along the regularization ladder.

use crate::config::ModelConfig;
use crate::density::Density;
use crate::error::{LabError, Result};
use crate::estimates::log_second_derivative;
use crate::flow::{damped_update, NewtonParams};
use crate::geometry::{fs_density, norm_s, ReferenceBundle};
use crate::operator::MaOperator;
use crate::potential::Potential;
use crate::tridiag::solve_in_slopes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Converged limit potential at one regularization level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSolution {
    pub psi: Potential,
    pub eps: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    /// `rho_chi + psi''`.
    pub chibar: Density,
}

impl NewtonParams {
    pub fn for_limit(config: &ModelConfig) -> Self {
        Self { tol: config.limit.tol, max_iter: config.limit.max_iter, damping_budget: config.limit.damping_budget }
    }
}

/// The elliptic operator `N(psi)` for the bundle.
pub fn limit_operator(refs: &ReferenceBundle) -> MaOperator<'_> {
    MaOperator { grid: &refs.grid, ref_density: &refs.chi.values, log_weight: &refs.log_weight, closure: refs.closure }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves the limit equation from `initial_guess` (zero when absent).
pub fn solve_limit(
    refs: &ReferenceBundle,
    params: &NewtonParams,
    initial_guess: Option<&Potential>,
) -> Result<LimitSolution> {
    let op = limit_operator(refs);
    let h = refs.grid.spacing;
    let mut psi = initial_guess.cloned().unwrap_or_else(|| Potential::zeros(refs.grid.len(), h));
    let (mut n_val, mut rho) = op.evaluate(&psi).map_err(|e| match e {
        LabError::NonpositiveArgument { node, s, value } => {
            LabError::PositivityLoss { what: "limit initial guess".into(), node, s, value }
        }
        other => other,
    })?;
    let mut residual = sup(&n_val);
    for iteration in 0..params.max_iter {
        if residual < params.tol {
            let chibar = Density::new(&refs.grid, rho, refs.chi_star.left_exponent, 1.0, "chi-bar")?;
            return Ok(LimitSolution { psi, eps: refs.eps, residual_norm: residual, iterations: iteration, chibar });
        }
        let mut j = op.jacobian(&rho);
        for i in 0..j.len() {
            j.sub[i] = -j.sub[i];
            j.sup[i] = -j.sup[i];
            j.diag[i] = -j.diag[i];
        }
        let (anchor, slopes) = solve_in_slopes(&j, 1.0, &n_val, h);
        let update = Potential { anchor, slopes, spacing: h };
        let mut tau = 1.0;
        let mut accepted = None;
        for _ in 0..=params.damping_budget {
            if let Some(trial) = damped_update(&op, &psi, &update.scaled(tau), 0) {
                let (nv, r) = op.evaluate(&trial)?;
                let res = sup(&nv);
                if res < residual || res < params.tol {
                    accepted = Some((trial, nv, r, res));
                    break;
                }
            }
            tau *= 0.5;
        }
        let (p, nv, r, res) = accepted.ok_or(LabError::NewtonDivergence { iterations: iteration + 1, residual })?;
        psi = p;
        n_val = nv;
        rho = r;
        residual = res;
    }
    if residual < params.tol {
        let chibar = Density::new(&refs.grid, rho, refs.chi_star.left_exponent, 1.0, "chi-bar")?;
        return Ok(LimitSolution { psi, eps: refs.eps, residual_norm: residual, iterations: params.max_iter, chibar });
    }
    Err(LabError::NewtonDivergence { iterations: params.max_iter, residual })
}

/// Solves every rung in order, warm-starting each from the previous solution and retrying from
/// zero if the warm start fails.
pub fn solve_ladder(bundles: &[ReferenceBundle], params: &NewtonParams) -> Result<Vec<LimitSolution>> {
    let mut out: Vec<LimitSolution> = Vec::with_capacity(bundles.len());
    for refs in bundles {
        let warm = out.last().map(|s| &s.psi);
        let sol = match solve_limit(refs, params, warm) {
            Ok(s) => s,
            Err(_) if warm.is_some() => solve_limit(refs, params, None)?,
            Err(e) => return Err(e),
        };
        out.push(sol);
    }
    Ok(out)
}

/// Sup-norm differences between consecutive rungs and whether they shrink monotonically.
pub fn ladder_differences(solutions: &[LimitSolution]) -> (Vec<f64>, bool) {
    let diffs: Vec<f64> = solutions.windows(2).map(|w| w[0].psi.minus(&w[1].psi).sup_abs()).collect();
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0]);
    (diffs, monotone)
}

/// Residual of the twisted conical Kähler–Einstein identity on an interior window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkeReport {
    pub window: [f64; 2],
    pub nodes: Vec<f64>,
    pub residual: Vec<f64>,
    pub sup: f64,
}

/// `-(log rho_chibar)'' + rho_chibar - twist * FS - regularization current` on the nodes of
/// `window` that are at least two spacings from the truncation.
pub fn verify_gke(sol: &LimitSolution, refs: &ReferenceBundle, window: [f64; 2]) -> GkeReport {
    let dd = log_second_derivative(&sol.chibar, &refs.grid);
    let n = refs.grid.len();
    let mut nodes = vec![];
    let mut residual = vec![];
    for i in 2..n - 2 {
        let s = refs.grid.nodes[i];
        if s < window[0] || s > window[1] {
            continue;
        }
        let r = -dd[i] + sol.chibar.values[i] - refs.classes.twist * fs_density(s) - refs.reg_current[i];
        nodes.push(s);
        residual.push(r);
    }
    let sup = sup(&residual);
    GkeReport { window, nodes, residual, sup }
}

/// Trace form of the same identity: `tr_chibar Ric(chibar) + 1 - twist * FS / rho_chibar` with the
/// current subtracted, sup over the window.
pub fn gke_trace_residual(sol: &LimitSolution, refs: &ReferenceBundle, window: [f64; 2]) -> f64 {
    let rep = verify_gke(sol, refs, window);
    rep.nodes
        .iter()
        .zip(&rep.residual)
        .map(|(s, r)| (r / sol.chibar.values[refs.grid.nearest(*s)]).abs())
        .fold(0.0, f64::max)
}

/// Smooth random initial guess `sum_k c_k x^k` in the norm `x`, scaled down until admissible.
pub fn random_guess(refs: &ReferenceBundle, rng: &mut ChaCha8Rng) -> Potential {
    let coeffs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let values: Vec<f64> = refs
        .grid
        .nodes
        .iter()
        .map(|&s| {
            let x = norm_s(s);
            coeffs.iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum()
        })
        .collect();
    let mut guess = Potential::from_values(&values, refs.grid.spacing);
    let op = limit_operator(refs);
    while op.metric_density(&guess).is_err() {
        guess = guess.scaled(0.5);
    }
    guess
}

/// Solves from `count` random smooth guesses and returns the largest sup-norm spread between
/// any solution and the first one.
pub fn uniqueness_probe(refs: &ReferenceBundle, params: &NewtonParams, count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first: Option<Potential> = None;
    let mut spread = 0.0_f64;
    for _ in 0..count {
        let guess = random_guess(refs, &mut rng);
        let sol = solve_limit(refs, params, Some(&guess))?;
        match &first {
            None => first = Some(sol.psi),
            Some(p) => spread = spread.max(sol.psi.minus(p).sup_abs()),
        }
    }
    Ok(spread)
}
