use risk_eigen::discretize::{build_grid, BoundaryCondition, Discretization};
use risk_eigen::eigensolve::{linear_principal_eigenpair, solve_semilinear};
use risk_eigen::model::{builtin_instance, Direction};

use nalgebra::{DMatrix, SymmetricEigen};

/// Perron root of a tridiagonal `A + diag(c)` with positive off-diagonals,
/// through the symmetric matrix with off-diagonals `√(M_{i,i+1} M_{i+1,i})`.
fn tridiagonal_root(sub: &[f64], diag: &[f64], sup: &[f64]) -> f64 {
    let n = diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            let s = (sup[i] * sub[i]).sqrt();
            m[(i, i + 1)] = s;
            m[(i + 1, i)] = s;
        }
    }
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Per-control tridiagonal bands `(sub, diag, sup)` of `A_k + diag(c_k)`.
fn bands(disc: &Discretization) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = disc.len();
    disc.generators
        .iter()
        .zip(&disc.rewards)
        .map(|(g, c)| {
            let mut sub = vec![0.0; n - 1];
            let mut diag = vec![0.0; n];
            let mut sup = vec![0.0; n - 1];
            for (i, j, v) in g.matrix.triplets() {
                if j == i {
                    diag[i] = v + c[i];
                } else if j == i + 1 {
                    sup[i] = v;
                } else if i == j + 1 {
                    sub[j] = v;
                } else {
                    panic!("not tridiagonal");
                }
            }
            (sub, diag, sup)
        })
        .collect()
}

fn policy_root(b: &[(Vec<f64>, Vec<f64>, Vec<f64>)], policy: &[usize]) -> f64 {
    let n = policy.len();
    let diag: Vec<f64> = (0..n).map(|i| b[policy[i]].1[i]).collect();
    let sup: Vec<f64> = (0..n - 1).map(|i| b[policy[i]].2[i]).collect();
    let sub: Vec<f64> = (0..n - 1).map(|i| b[policy[i + 1]].0[i]).collect();
    tridiagonal_root(&sub, &diag, &sup)
}

#[test]
fn ou_quad_matches_dense_oracle_and_closed_form() {
    let model = builtin_instance("ou-quad").unwrap();
    let grid = build_grid(1, 6.0, 201).unwrap();
    let sol = solve_semilinear(&model, &grid, BoundaryCondition::Neumann, 1e-10).unwrap();
    let b = bands(&sol.discretization);
    let oracle = policy_root(&b, &vec![0; sol.discretization.len()]);
    assert!((sol.pair.value - oracle).abs() < 1e-8, "{} vs {oracle}", sol.pair.value);
    assert!((sol.pair.value + 1.0).abs() < 0.02, "{}", sol.pair.value);
}

#[test]
fn linear_solver_matches_oracle_for_each_control() {
    let model = builtin_instance("ctrl-1d").unwrap();
    let grid = build_grid(1, 4.0, 41).unwrap();
    let disc = Discretization::new(&model, &grid, BoundaryCondition::Neumann).unwrap();
    let b = bands(&disc);
    for k in 0..3 {
        let pair = linear_principal_eigenpair(&disc.generators[k], &disc.rewards[k], 1e-11).unwrap();
        let oracle = policy_root(&b, &vec![k; disc.len()]);
        assert!((pair.value - oracle).abs() < 1e-8, "control {k}: {} vs {oracle}", pair.value);
        assert!(pair.min_entry() > 0.0);
    }
}

/// Best Perron root over all `3^n` policies.
fn exhaustive(b: &[(Vec<f64>, Vec<f64>, Vec<f64>)], n: usize, direction: Direction) -> (f64, Vec<usize>) {
    let mut best = match direction {
        Direction::Maximize => f64::NEG_INFINITY,
        Direction::Minimize => f64::INFINITY,
    };
    let mut arg = vec![0; n];
    let mut policy = vec![0usize; n];
    loop {
        let r = policy_root(b, &policy);
        if direction.improves(r, best) {
            best = r;
            arg.clone_from(&policy);
        }
        let mut i = 0;
        while i < n && policy[i] == 2 {
            policy[i] = 0;
            i += 1;
        }
        if i == n {
            return (best, arg);
        }
        policy[i] += 1;
    }
}

#[test]
fn ctrl_1d_matches_exhaustive_policy_oracle() {
    let model = builtin_instance("ctrl-1d").unwrap();
    let grid = build_grid(1, 4.0, 11).unwrap();
    let sol = solve_semilinear(&model, &grid, BoundaryCondition::Neumann, 1e-11).unwrap();
    let (best, arg) = exhaustive(&bands(&sol.discretization), 11, Direction::Maximize);
    assert!((sol.pair.value - best).abs() < 1e-8, "{} vs {best}", sol.pair.value);
    assert_eq!(sol.policy, arg);
}

#[test]
fn min_1d_matches_symmetric_policy_oracle() {
    let model = builtin_instance("min-1d").unwrap();
    let grid = build_grid(1, 3.0, 21).unwrap();
    let sol = solve_semilinear(&model, &grid, BoundaryCondition::Neumann, 1e-10).unwrap();
    let b = bands(&sol.discretization);
    // policies with ξ(−x) = −ξ(x): free on the left half, ξ = 0 at the center
    let mut best = f64::INFINITY;
    let mut half = [0usize; 10];
    loop {
        let mut policy = vec![1usize; 21];
        for i in 0..10 {
            policy[i] = half[i];
            policy[20 - i] = 2 - half[i];
        }
        best = best.min(policy_root(&b, &policy));
        let mut i = 0;
        while i < 10 && half[i] == 2 {
            half[i] = 0;
            i += 1;
        }
        if i == 10 {
            break;
        }
        half[i] += 1;
    }
    assert!((sol.pair.value - best).abs() < 1e-8, "{} vs {best}", sol.pair.value);
    assert!(sol.pair.value > 0.0);
    assert!(sol.pair.min_entry() > 0.0);
    for i in 0..21 {
        let u = model.controls[sol.policy[i]][0];
        let v = model.controls[sol.policy[20 - i]][0];
        assert_eq!(u, -v, "policy not symmetric at node {i}");
    }
    for w in sol.rho_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "{:?}", sol.rho_history);
    }
}

#[test]
fn policy_iterates_are_monotone() {
    for name in ["ou-quad", "ctrl-1d"] {
        let model = builtin_instance(name).unwrap();
        let grid = build_grid(1, 5.0, 101).unwrap();
        let sol = solve_semilinear(&model, &grid, BoundaryCondition::Neumann, 1e-10).unwrap();
        for w in sol.rho_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-10, "{name}: {:?}", sol.rho_history);
        }
        assert!(sol.pair.residual <= 1e-10);
    }
}
