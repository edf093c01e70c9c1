//! Reduced chart of the model fibration: the Fubini–Study density, the section norm, the
//! regularized cone profile, class bookkeeping and the bundle of reference densities.
//!
//! Conventions. A rotationally symmetric form on the base is `rho(s) * i dz^dz / |z|^2` with
//! `s = log|z|^2`; then `i ddbar u = u''(s)` in the same frame, the Ricci form of `rho` is
//! `-(log rho)''` and `int rho ds` is the class coefficient against the Fubini–Study class.

use crate::config::ModelConfig;
use crate::density::Density;
use crate::error::{LabError, Result};
use crate::grid::RadialGrid;
use crate::potential::{Closure, Potential};
use crate::quadrature::{adaptive_gk, gauss_legendre};

/// Fubini–Study density `e^s / (1 + e^s)^2`; its Ricci form is twice itself and its mass is 1.
pub fn fs_density(s: f64) -> f64 {
    let e = (-s.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Squared section norm `|S|^2 = e^s / (1 + e^s)`, evaluated without overflow.
pub fn norm_s(s: f64) -> f64 {
    if s < 0.0 {
        let e = s.exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (-s).exp())
    }
}

/// `log |S|^2`, accurate in both tails.
pub fn log_norm_s(s: f64) -> f64 {
    if s < 0.0 {
        s - s.exp().ln_1p()
    } else {
        -(-s).exp().ln_1p()
    }
}

/// `(x + eps^2)^beta - eps^{2 beta}` without cancellation for small `x`.
fn cone_gap(x: f64, eps: f64, beta: f64) -> f64 {
    if eps == 0.0 {
        return x.powf(beta);
    }
    let e2 = eps * eps;
    e2.powf(beta) * (beta * (x / e2).ln_1p()).exp_m1()
}

/// Regularized cone profile `eta(x) = beta * int_0^x ((r + eps^2)^beta - eps^{2 beta}) / r dr`
/// and its `x`-derivative.
pub fn eta_epsilon(x: f64, eps: f64, beta: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(LabError::InvalidInput(format!("eta_epsilon needs x >= 0, got {x}")));
    }
    if !(eps > 0.0) {
        return Err(LabError::InvalidInput(format!("eta_epsilon needs eps > 0, got {eps}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(LabError::InvalidInput(format!("eta_epsilon needs beta in (0, 1], got {beta}")));
    }
    let e2 = eps * eps;
    let derivative = if x == 0.0 { beta * beta * e2.powf(beta - 1.0) } else { beta * cone_gap(x, eps, beta) / x };
    if beta == 1.0 {
        return Ok((x, 1.0));
    }
    if x == 0.0 {
        return Ok((0.0, derivative));
    }
    let near = |r: f64| if r == 0.0 { beta * e2.powf(beta - 1.0) } else { cone_gap(r, eps, beta) / r };
    let split = x.min(e2);
    let mut total = adaptive_gk(near, 0.0, split, 1e-14);
    if x > e2 {
        let far = |u: f64| cone_gap(u.exp(), eps, beta);
        total += adaptive_gk(far, e2.ln(), x.ln(), 1e-14);
    }
    Ok((beta * total, derivative))
}

/// Cone profile as a function of `s`; `eps = 0` gives the conical profile `|S|^{2 beta}`.
pub fn eta_profile(s: f64, eps: f64, beta: f64) -> f64 {
    let x = norm_s(s);
    if eps == 0.0 {
        x.powf(beta)
    } else {
        eta_epsilon(x, eps, beta).map(|v| v.0).unwrap_or(f64::NAN)
    }
}

/// First `s`-derivative of the cone profile, `beta ((x + eps^2)^beta - eps^{2 beta}) (1 - x)`.
pub fn eta_profile_ds(s: f64, eps: f64, beta: f64) -> f64 {
    beta * cone_gap(norm_s(s), eps, beta) * norm_s(-s)
}

/// Second `s`-derivative of the cone profile.
pub fn eta_profile_dss(s: f64, eps: f64, beta: f64) -> f64 {
    let x = norm_s(s);
    let y = norm_s(-s);
    let pow = if eps == 0.0 { x.powf(beta - 1.0) } else { (x + eps * eps).powf(beta - 1.0) };
    beta * fs_density(s) * (beta * y * pow - cone_gap(x, eps, beta))
}

/// Smooth density of the regularization current `(1 - beta)(i ddbar log(|S|^2 + eps^2) + R_h)`,
/// which tends to the divisor current as `eps -> 0`. Its total mass is `1 - beta`.
pub fn regularization_current(s: f64, eps: f64, beta: f64) -> f64 {
    if eps == 0.0 || beta == 1.0 {
        return 0.0;
    }
    let x = norm_s(s);
    let e2 = eps * eps;
    (1.0 - beta) * fs_density(s) * e2 * (1.0 + e2) / ((x + e2) * (x + e2))
}

/// Maximal existence time and base class of the limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassData {
    pub t_max: f64,
    /// Coefficient of the base Fubini–Study class in the limit class.
    pub c_chi: f64,
    /// Coefficient `b / T_max = 2b/a` of the base twist density.
    pub twist: f64,
}

/// Class bookkeeping for `X = P^1 x P^1`, `omega_0 = a FS_fiber + b FS_base` and the divisor the
/// fiber over one base point. The flow exists while both class coefficients are positive; the
/// fiber must collapse first.
pub fn tmax_and_classes(a: f64, b: f64, beta: f64) -> Result<ClassData> {
    if !(a > 0.0 && b > 0.0 && beta > 0.0 && beta <= 1.0) {
        return Err(LabError::InvalidInput(format!("need a, b > 0 and beta in (0, 1], got ({a}, {b}, {beta})")));
    }
    let half_a = 0.5 * a;
    let base_limit = b / (1.0 + beta);
    let c_chi = 2.0 * b / a - 1.0 - beta;
    if half_a >= base_limit || c_chi <= 0.0 {
        return Err(LabError::ClassDegeneracy { half_a, base_limit });
    }
    Ok(ClassData { t_max: half_a, c_chi, twist: 2.0 * b / a })
}

/// Class coefficients `(fiber, base)` of `[omega(t)] = e^{-t}[omega_0] + (1 - e^{-t})[chi]`.
pub fn class_coefficients(t: f64, a: f64, classes: &ClassData, b: f64) -> (f64, f64) {
    let e = (-t).exp();
    (a * e, e * b + (1.0 - e) * classes.c_chi)
}

/// Integrates `(log rho)'' = curvature(s)` across the grid with prescribed left exponent, then fixes
/// the additive constant by the total mass. Returns node values of `log rho` and the slope
/// reached at `s_max` (whose negative is the right exponent).
pub fn integrate_log_density(
    grid: &RadialGrid,
    curvature: impl Fn(f64) -> f64,
    left_exponent: f64,
    curvature_tail_rate: f64,
    right_exponent: f64,
    mass: f64,
) -> (Vec<f64>, f64) {
    let s0 = grid.nodes[0];
    let mut slope = left_exponent + curvature(s0) / curvature_tail_rate;
    let mut logs = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    logs.push(acc);
    for w in grid.nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        acc += (hi - lo) * slope + gauss_legendre(|t| (hi - t) * curvature(t), lo, hi);
        slope += gauss_legendre(&curvature, lo, hi);
        logs.push(acc);
    }
    let peak = logs.iter().cloned().fold(f64::MIN, f64::max);
    let vals: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let raw = crate::density::trapezoid_with_tails(grid, &vals, left_exponent, right_exponent);
    let shift = mass.ln() - raw.ln() - peak;
    (logs.iter().map(|l| l + shift).collect(), slope)
}

/// All reference densities at one regularization level.
#[derive(Debug, Clone)]
pub struct ReferenceBundle {
    pub grid: RadialGrid,
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub delta: f64,
    pub eps: f64,
    pub classes: ClassData,
    pub fs: Density,
    /// Limit base form `c_chi * FS`.
    pub chi: Density,
    /// Model conical form `chi + delta * eta''`.
    pub chi_star: Density,
    /// Base part `b * FS` of the initial form.
    pub omega0_base: Density,
    /// Initial model form `b * FS + delta * eta''`.
    pub omega_star0: Density,
    /// Base volume density solving the defining curvature relation.
    pub volume: Density,
    /// Regularized weight `(|S|^2 + eps^2)^{-(1-beta)} * volume`.
    pub weight: Density,
    pub log_weight: Vec<f64>,
    /// Exact `(log weight)''`, equal to `rho_chi - twist * FS - regularization current`.
    pub log_weight_dd: Vec<f64>,
    /// `G = volume / chi`.
    pub g: Vec<f64>,
    /// Cone profile `eta` with full tail precision.
    pub cone_profile: Potential,
    pub cone_profile_dss: Vec<f64>,
    /// Density of the regularization current.
    pub reg_current: Vec<f64>,
    /// Slope of `Omega`'s logarithm reached at `s_max` by the integration.
    pub volume_right_slope: f64,
    pub closure: Closure,
}

/// Builds the reference bundle at regularization `eps` (`eps = 0` gives the conical model).
pub fn build_reference(config: &ModelConfig, eps: f64) -> Result<ReferenceBundle> {
    let classes = config.validate()?;
    let grid = RadialGrid::new(config.grid.s_min, config.grid.s_max, config.grid.n_nodes)?;
    build_reference_on(&grid, config, &classes, eps)
}

/// As [`build_reference`] on an explicit grid.
pub fn build_reference_on(
    grid: &RadialGrid,
    config: &ModelConfig,
    classes: &ClassData,
    eps: f64,
) -> Result<ReferenceBundle> {
    let m = &config.model;
    let (a, b, beta, delta) = (m.a, m.b, m.beta, m.delta);
    if !(eps >= 0.0) {
        return Err(LabError::InvalidInput(format!("eps must be nonnegative, got {eps}")));
    }
    let c = classes.c_chi;
    let conical = eps == 0.0 && beta < 1.0;
    let left = if conical { beta } else { 1.0 };

    let fs = Density::from_fn(grid, fs_density, 1.0, 1.0, "Fubini–Study")?;
    let chi = fs.scaled(c);
    let omega0_base = fs.scaled(b);
    let cone_profile_dss = grid.map(|s| eta_profile_dss(s, eps, beta));
    let chi_star_vals: Vec<f64> = chi.values.iter().zip(&cone_profile_dss).map(|(x, e)| x + delta * e).collect();
    let chi_star = Density::new(grid, chi_star_vals, left, 1.0, "chi*")?;
    let omega_star_vals: Vec<f64> =
        omega0_base.values.iter().zip(&cone_profile_dss).map(|(x, e)| x + delta * e).collect();
    let omega_star0 = Density::new(grid, omega_star_vals, left, 1.0, "initial model form")?;

    let twist = classes.twist;
    let curvature = |s: f64| (c - twist - (1.0 - beta)) * fs_density(s);
    let (log_volume_raw, volume_right_slope) = integrate_log_density(grid, curvature, 1.0, 1.0, 1.0, c);
    let log_volume: Vec<f64> = log_volume_raw.iter().map(|l| l - m.volume_log_shift).collect();
    let volume = Density::new(grid, log_volume.iter().map(|l| l.exp()).collect(), 1.0, 1.0, "volume form")?;

    let log_weight: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&log_volume)
        .map(|(&s, lv)| {
            let lx = if eps == 0.0 { log_norm_s(s) } else { (norm_s(s) + eps * eps).ln() };
            lv - (1.0 - beta) * lx
        })
        .collect();
    let weight = Density::new(grid, log_weight.iter().map(|l| l.exp()).collect(), left, 1.0, "cone weight")?;
    let reg_current = grid.map(|s| regularization_current(s, eps, beta));
    let log_weight_dd: Vec<f64> =
        grid.nodes.iter().zip(&reg_current).map(|(&s, r)| (c - twist) * fs_density(s) - r).collect();
    let g = volume.values.iter().zip(&chi.values).map(|(v, x)| v / x).collect();
    let cone_profile =
        Potential::from_derivative(grid, eta_profile(grid.nodes[0], eps, beta), |s| eta_profile_ds(s, eps, beta));
    let closure = Closure::from_exponents(left, 1.0, grid.spacing);

    Ok(ReferenceBundle {
        grid: grid.clone(),
        a,
        b,
        beta,
        delta,
        eps,
        classes: *classes,
        fs,
        chi,
        chi_star,
        omega0_base,
        omega_star0,
        volume,
        weight,
        log_weight,
        log_weight_dd,
        g,
        cone_profile,
        cone_profile_dss,
        reg_current,
        volume_right_slope,
        closure,
    })
}

impl ReferenceBundle {
    /// Node values of the base density of `omega_t = e^{-t} omega_0 + (1 - e^{-t}) chi`.
    pub fn chi_t_values(&self, t: f64) -> Vec<f64> {
        let e = (-t).exp();
        let coef = e * self.b + (1.0 - e) * self.classes.c_chi;
        self.fs.values.iter().map(|f| coef * f).collect()
    }

    /// `chi_t` as a density.
    pub fn chi_t(&self, t: f64) -> Density {
        Density { values: self.chi_t_values(t), left_exponent: 1.0, right_exponent: 1.0, cone_angle: 1.0 }
    }

    /// Base twist density `(2b/a) * FS` at every node.
    pub fn twist_values(&self) -> Vec<f64> {
        self.fs.values.iter().map(|f| self.classes.twist * f).collect()
    }

    /// Largest `lambda` with `chi* +- lambda FS` and `chi +- lambda FS` within a factor two of
    /// themselves and `lambda <= b / 2`.
    pub fn lambda_zero(&self) -> f64 {
        let mut l = 0.5 * self.b;
        for ((cs, c), f) in self.chi_star.values.iter().zip(&self.chi.values).zip(&self.fs.values) {
            l = l.min(0.5 * cs / f).min(0.5 * c / f);
        }
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fs_density_trivial_values() {
        assert_eq!(fs_density(0.0), 0.25);
        for s in [0.3, 2.0, 17.5, 40.0] {
            assert_eq!(fs_density(s), fs_density(-s));
        }
    }

    #[test]
    fn fs_mass_is_one() {
        // antiderivative -1/(1+e^s)
        let g = RadialGrid::new(-40.0, 40.0, 8001).unwrap();
        let d = Density::from_fn(&g, fs_density, 1.0, 1.0, "fs").unwrap();
        assert!((d.area(&g) - 1.0).abs() < 1e-12, "{}", d.area(&g) - 1.0);
    }

    #[test]
    fn norm_s_values_and_limits() {
        assert_eq!(norm_s(0.0), 0.5);
        assert!((norm_s(-30.0) / (-30.0_f64).exp() - 1.0).abs() < 1e-12);
        assert!(norm_s(40.0) <= 1.0);
        let mut prev = 0.0;
        for i in 0..200 {
            let v = norm_s(-20.0 + 0.2 * i as f64);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn poincare_lelong_second_derivative_of_log_norm() {
        // five-point second difference at spacing 1e-3
        let h = 1e-3;
        let f = log_norm_s;
        let mut worst: f64 = 0.0;
        let mut s = -15.0;
        while s <= 15.0 {
            let d2 =
                (-f(s + 2.0 * h) + 16.0 * f(s + h) - 30.0 * f(s) + 16.0 * f(s - h) - f(s - 2.0 * h)) / (12.0 * h * h);
            worst = worst.max((-d2 - fs_density(s)).abs());
            s += 0.37;
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn eta_trivial_identities() {
        for &x in &[0.0, 0.1, 0.5, 1.0] {
            for &e in &[1e-3, 0.1, 0.7] {
                assert_eq!(eta_epsilon(x, e, 1.0).unwrap().0, x);
                assert_eq!(eta_epsilon(0.0, e, 0.4).unwrap().0, 0.0);
            }
        }
        let v = eta_epsilon(0.5, 1e-6, 0.7).unwrap().0;
        assert!((v - 0.5_f64.powf(0.7)).abs() < 1e-3);
        assert!(eta_epsilon(-0.1, 0.1, 0.5).is_err());
    }

    #[test]
    fn eta_matches_closed_form_at_half_angle() {
        // beta = 1/2: eta = (w - eps) - eps ln((w + eps) / (2 eps)), w = sqrt(x + eps^2)
        for &eps in &[1e-3_f64, 0.0125, 0.1, 0.5] {
            for &x in &[1e-9_f64, 1e-5, 1e-3, 0.1, 0.5, 0.999] {
                let w: f64 = (x + eps * eps).sqrt();
                let w_minus_eps = x / (w + eps);
                let exact = w_minus_eps - eps * (w_minus_eps / (2.0 * eps)).ln_1p();
                let got = eta_epsilon(x, eps, 0.5).unwrap().0;
                assert!((got - exact).abs() <= 1e-12 * exact.abs(), "eps {eps} x {x}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn eta_derivative_matches_difference_quotient() {
        for &(x, eps, beta) in &[(0.3, 0.1, 0.3), (0.01, 0.05, 0.8), (0.7, 0.0125, 0.5)] {
            let h = 1e-6;
            let fd = (eta_epsilon(x + h, eps, beta).unwrap().0 - eta_epsilon(x - h, eps, beta).unwrap().0) / (2.0 * h);
            let d = eta_epsilon(x, eps, beta).unwrap().1;
            assert!((fd - d).abs() < 1e-7 * d.abs(), "{fd} vs {d}");
        }
    }

    #[test]
    fn profile_derivatives_are_consistent() {
        let (eps, beta) = (0.05, 0.5);
        let h = 1e-4;
        for &s in &[-12.0, -6.0, -1.0, 0.0, 3.0, 9.0] {
            let fd1 = (eta_profile(s + h, eps, beta) - eta_profile(s - h, eps, beta)) / (2.0 * h);
            let d1 = eta_profile_ds(s, eps, beta);
            assert!((fd1 - d1).abs() < 1e-7 * d1.abs() + 1e-10, "s {s}: {fd1} {d1}");
            let fd2 = (eta_profile_ds(s + h, eps, beta) - eta_profile_ds(s - h, eps, beta)) / (2.0 * h);
            let d2 = eta_profile_dss(s, eps, beta);
            assert!((fd2 - d2).abs() < 1e-7 * d2.abs() + 1e-10, "s {s}: {fd2} {d2}");
        }
    }

    #[test]
    fn regularization_current_has_mass_one_minus_beta() {
        let g = RadialGrid::new(-40.0, 40.0, 16001).unwrap();
        for &eps in &[0.1, 0.0125] {
            let v = g.map(|s| regularization_current(s, eps, 0.5));
            let m = crate::density::trapezoid_with_tails(&g, &v, 1.0, 1.0);
            assert!((m - 0.5).abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn classes_reference_and_degenerate() {
        let c = tmax_and_classes(2.0, 4.0, 0.5).unwrap();
        assert_eq!((c.t_max, c.c_chi), (1.0, 2.5));
        assert_eq!(tmax_and_classes(2.0, 4.0, 1.0).unwrap().c_chi, 2.0);
        assert!(tmax_and_classes(2.0, 2.0, 0.9).is_ok());
        assert!(matches!(tmax_and_classes(2.0, 1.0, 0.9), Err(LabError::ClassDegeneracy { .. })));
    }

    #[test]
    fn class_evolution_matches_integrated_ode() {
        // d/dt [omega] = -[omega] + c1(K_X) + (1-beta)[D] + [omega_0]/T_max, coefficients (fiber, base):
        // c1(K_X) = (-2, -2), (1-beta)[D] = (0, 1-beta), RK4 integration.
        let (a, b, beta) = (2.0, 4.0, 0.5);
        let cl = tmax_and_classes(a, b, beta).unwrap();
        let rhs = |y: [f64; 2]| [-y[0] - 2.0 + a / cl.t_max, -y[1] - 2.0 + (1.0 - beta) + b / cl.t_max];
        let mut y = [a, b];
        let dt = 1e-3;
        for _ in 0..5000 {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
            let k4 = rhs([y[0] + dt * k3[0], y[1] + dt * k3[1]]);
            for j in 0..2 {
                y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        let (fib, base) = class_coefficients(5.0, a, &cl, b);
        assert!((y[0] - fib).abs() < 1e-10 && (y[1] - base).abs() < 1e-10);
        assert!((fib - a * (-5.0_f64).exp()).abs() < 1e-14);
        assert!((class_coefficients(60.0, a, &cl, b).1 - 2.5).abs() < 1e-12);
    }
}
