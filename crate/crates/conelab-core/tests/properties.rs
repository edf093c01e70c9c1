//! Property tests of the structural invariants: cone-profile monotonicity, the discrete maximum
//! principle behind the potential bounds, class-area conservation per step and the triangle
//! inequality of mesh distances.

use conelab_core::flow::{area_defect, step_implicit, FlowState, NewtonParams};
use conelab_core::geometry::{build_reference, eta_epsilon, fs_density, log_norm_s};
use conelab_core::metric::surface_mesh;
use conelab_core::{Density, ModelConfig, Potential, RadialGrid};
use proptest::prelude::*;

fn small_config(beta: f64, delta: f64) -> ModelConfig {
    let mut c = ModelConfig::reference().without_studies();
    c.model.beta = beta;
    c.model.delta = delta;
    c.grid.n_nodes = 256;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cone_profile_is_monotone_in_norm_and_regularization(
        beta in 0.05f64..1.0,
        x1 in 0.0f64..1.0,
        x2 in 0.0f64..1.0,
        e1 in 1e-3f64..0.5,
        e2 in 1e-3f64..0.5,
    ) {
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        let (small, large) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let at = |x: f64, e: f64| eta_epsilon(x, e, beta).unwrap().0;
        let slack = 1e-13;
        prop_assert!(at(lo, small) <= at(hi, small) + slack);
        prop_assert!(at(hi, large) <= at(hi, small) + slack);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn one_step_respects_the_maximum_principle_and_conserves_area(
        beta in 0.3f64..1.0,
        delta in 0.02f64..0.2,
        eps in 0.02f64..0.2,
        dt in 0.005f64..0.1,
        steps in 1usize..4,
        lambda_fraction in 0.05f64..1.0,
    ) {
        let cfg = small_config(beta, delta);
        let refs = build_reference(&cfg, eps).unwrap();
        let params = NewtonParams::for_flow(&cfg);
        let mut old = FlowState::initial(&refs).unwrap();
        for _ in 0..steps {
            old = step_implicit(&old, dt, &refs, &params).unwrap().0;
        }
        let (new, report) = step_implicit(&old, dt, &refs, &params).unwrap();
        prop_assert!(report.area_defect < 1e-8, "area defect {:e}", report.area_defect);
        prop_assert!(area_defect(&refs, &new.rho_omega, new.t) < 1e-8);

        // auxiliary function H = phi + lambda log|S|^2 at its maximum node
        let lambda = lambda_fraction * refs.lambda_zero();
        let grid = &refs.grid;
        let n = grid.len();
        let phi_new = new.phi(&refs).values();
        let log_norm: Vec<f64> = grid.nodes.iter().map(|&s| log_norm_s(s)).collect();
        let aux: Vec<f64> = (0..n).map(|i| phi_new[i] + lambda * log_norm[i]).collect();
        let imax = (0..n).max_by(|&i, &j| aux[i].total_cmp(&aux[j])).unwrap();

        // second differences with the same tail closure the solver uses at the two ends
        let h = grid.spacing;
        let d2 = |v: &[f64]| Potential::from_values(v, h).second_difference(refs.closure)[imax];
        prop_assert!(d2(&aux) <= 1e-9, "H'' = {} at its maximum", d2(&aux));
        let eta = refs.cone_profile.values();
        let chi = refs.chi_t_values(new.t)[imax];
        // dropping the Laplacian of H, which is nonpositive at the maximum
        let bound_density = chi + refs.delta * d2(&eta) - lambda * d2(&log_norm);
        let total_new = new.potential.values();
        let bound = (bound_density / refs.weight.values[imax]).ln() - total_new[imax];
        let phi_old = old.phi(&refs).values();
        let rate = (phi_new[imax] - phi_old[imax]) / dt;
        prop_assert!(rate <= bound + 1e-7, "rate {rate} bound {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mesh_distances_satisfy_the_triangle_inequality(
        scale in 0.5f64..4.0,
        picks in proptest::collection::vec(0usize..10_000, 3),
    ) {
        let grid = RadialGrid::new(-12.0, 12.0, 257).unwrap();
        let rho = Density::from_fn(&grid, |s| scale * fs_density(s), 1.0, 1.0, "scaled sphere").unwrap();
        let (_, mesh) = surface_mesh(&rho, &grid, 24);
        let m = mesh.n_nodes();
        let (a, b, c) = (picks[0] % m, picks[1] % m, picks[2] % m);
        let from_a = mesh.dijkstra(a);
        let from_b = mesh.dijkstra(b);
        // only floating-point summation order separates the two sides
        let slack = 1e-14 * (from_a[b] + from_b[c]);
        prop_assert!(from_a[c] <= from_a[b] + from_b[c] + slack);
        prop_assert!(from_a[a] == 0.0);
        prop_assert!((from_a[b] - from_b[a]).abs() <= 1e-14 * from_a[b].max(1.0));
    }
}
