use risk_eigen::discretize::{build_grid, BoundaryCondition};
use risk_eigen::eigensolve::solve_semilinear;
use risk_eigen::model::builtin_instance;
use risk_eigen::twist::{
    doob_transform, entropy_report, lyapunov_residual, stationarity_residual, stationary_distribution, EntropyReport,
};

fn ou_quad(n: usize) -> (EntropyReport, Vec<f64>, Vec<f64>) {
    let model = builtin_instance("ou-quad").unwrap();
    let grid = build_grid(1, 5.0, n).unwrap();
    let sol = solve_semilinear(&model, &grid, BoundaryCondition::Neumann, 1e-11).unwrap();
    let disc = &sol.discretization;
    let c_v = disc.policy_rewards(&sol.policy);
    let chain = doob_transform(&disc.policy_generator(&sol.policy), &c_v, &sol.pair).unwrap();
    let eta = stationary_distribution(&chain).unwrap();
    assert!(stationarity_residual(&chain, &eta) <= 1e-9);
    assert!(chain.row_sums().iter().all(|s| s.abs() <= 1e-8));
    let inv_max = sol.pair.vector.iter().map(|v| 1.0 / v).fold(0.0, f64::max);
    assert!(lyapunov_residual(&chain, &c_v, &sol.pair) <= 10.0 * sol.pair.residual.max(1e-15) * inv_max);
    let report = entropy_report(&chain, &eta, &model, &grid, &c_v).unwrap();
    let xs = disc.active().grid_indices().iter().map(|&g| grid.node(g)[0]).collect();
    (report, eta, xs)
}

#[test]
fn entropy_identity_and_field_convergence() {
    let (coarse, _, _) = ou_quad(101);
    let (fine, eta, xs) = ou_quad(201);
    assert!(coarse.identity_residual <= 1e-8, "{}", coarse.identity_residual);
    assert!(fine.identity_residual <= 1e-8, "{}", fine.identity_residual);
    let factor = coarse.field_mismatch / fine.field_mismatch;
    assert!((1.6..=2.6).contains(&factor), "mismatch {} -> {} (factor {factor})", coarse.field_mismatch, fine.field_mismatch);

    // stationary law ≈ N(0, 1/3)
    let var: f64 = eta.iter().zip(&xs).map(|(p, x)| p * x * x).sum();
    assert!((var - 1.0 / 3.0).abs() < 0.02, "variance {var}");
    // H ≈ x² away from the boundary
    for (i, x) in xs.iter().enumerate() {
        if x.abs() < 2.0 {
            let rel = (fine.continuum_entropy[i] - x * x).abs() / (1.0 + x * x);
            assert!(rel < 0.05, "x = {x}");
        }
    }
}

#[test]
fn coarse_grid_keeps_exact_identity() {
    let model = builtin_instance("ctrl-1d").unwrap();
    for n in [21, 81] {
        let grid = build_grid(1, 4.0, n).unwrap();
        let sol = solve_semilinear(&model, &grid, BoundaryCondition::Neumann, 1e-11).unwrap();
        let disc = &sol.discretization;
        let c_v = disc.policy_rewards(&sol.policy);
        let chain = doob_transform(&disc.policy_generator(&sol.policy), &c_v, &sol.pair).unwrap();
        let eta = stationary_distribution(&chain).unwrap();
        let report = entropy_report(&chain, &eta, &model, &grid, &c_v).unwrap();
        assert!(report.identity_residual <= 1e-8, "n = {n}: {}", report.identity_residual);
    }
}
