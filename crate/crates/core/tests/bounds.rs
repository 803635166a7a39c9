use risk_eigen::discretize::{build_grid, BoundaryCondition, Grid};
use risk_eigen::eigensolve::{collatz_wielandt_bounds, domain_sweep, solve_semilinear, SemilinearSolution};
use risk_eigen::model::builtin_instance;

const TOL: f64 = 1e-10;

fn fixtures() -> Vec<(&'static str, SemilinearSolution)> {
    [("const", 4.0, 81), ("ou-quad", 5.0, 101), ("ctrl-1d", 5.0, 101), ("min-1d", 3.0, 61)]
        .into_iter()
        .map(|(name, r, n)| {
            let model = builtin_instance(name).unwrap();
            let grid = build_grid(1, r, n).unwrap();
            (name, solve_semilinear(&model, &grid, BoundaryCondition::Neumann, TOL).unwrap())
        })
        .collect()
}

/// Twenty positive functions: exponentials of low-degree polynomials, rational
/// bumps and a perturbation of the ground state.
fn test_functions(grid: &Grid, sol: &SemilinearSolution) -> Vec<Vec<f64>> {
    let nodes: Vec<f64> = sol
        .discretization
        .active()
        .grid_indices()
        .iter()
        .map(|&g| grid.node(g)[0])
        .collect();
    let r = grid.radius();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for a in [-0.5, 0.0, 0.5] {
        for q in [-0.3, 0.0, 0.2] {
            out.push(nodes.iter().map(|x| (a * x + q * x * x / r).exp()).collect());
        }
    }
    for k in [0.5, 1.0, 2.0, 4.0] {
        out.push(nodes.iter().map(|x| 1.0 / (1.0 + (x / k).powi(2))).collect());
    }
    for k in [1.0, 3.0, 9.0] {
        out.push(nodes.iter().map(|x| k + x.cos()).collect());
    }
    for (i, eps) in [0.01, 0.1, 0.3, 0.6].into_iter().enumerate() {
        out.push(
            sol.pair
                .vector
                .iter()
                .zip(&nodes)
                .map(|(v, x)| v * (1.0 + eps * ((i as f64 + 1.0) * x).sin()))
                .collect(),
        );
    }
    assert_eq!(out.len(), 20);
    out
}

#[test]
fn collatz_wielandt_sandwich() {
    for (name, sol) in fixtures() {
        let disc = &sol.discretization;
        let rho = sol.pair.value;
        for (i, f) in test_functions(&disc.grid, &sol).iter().enumerate() {
            let (lo, hi) = collatz_wielandt_bounds(&disc.generators, &disc.rewards, disc.direction, f).unwrap();
            assert!(lo <= rho + 1e-9 && rho <= hi + 1e-9, "{name} f{i}: {lo} <= {rho} <= {hi}");
        }
        let (lo, hi) =
            collatz_wielandt_bounds(&disc.generators, &disc.rewards, disc.direction, &sol.pair.vector).unwrap();
        assert!(hi - lo <= 1e-8, "{name}: width {}", hi - lo);
    }
}

#[test]
fn dirichlet_values_increase_and_stay_below_neumann() {
    let radii = [1.0, 1.5, 2.0, 2.5, 3.0];
    let bcs = [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann];
    for name in ["ou-quad", "ctrl-1d"] {
        let model = builtin_instance(name).unwrap();
        let table = domain_sweep(&model, &radii, &bcs, 40, TOL).unwrap();
        let violations = table.ordering_violations(10.0 * TOL);
        assert!(violations.is_empty(), "{name}: {violations:?}");
        let d = table.values(BoundaryCondition::Dirichlet);
        let n = table.values(BoundaryCondition::Neumann);
        for w in d.windows(2) {
            assert!(w[1].1 - w[0].1 >= 10.0 * TOL, "{name}: {w:?}");
        }
        for (a, b) in d.iter().zip(&n) {
            assert!(b.1 - a.1 >= 10.0 * TOL, "{name}: r = {}", a.0);
        }
    }
}

#[test]
fn ou_quad_sweep_approaches_closed_form() {
    let model = builtin_instance("ou-quad").unwrap();
    let table = domain_sweep(&model, &[2.0, 4.0, 6.0], &[BoundaryCondition::Dirichlet], 100, TOL).unwrap();
    let d = table.values(BoundaryCondition::Dirichlet);
    assert!(d.windows(2).all(|w| w[1].1 >= w[0].1));
    assert!((d[2].1 + 1.0).abs() < 5e-3, "{d:?}");
    assert!(table.to_csv().starts_with("radius,bc,value,residual,nodes\n"));
}
