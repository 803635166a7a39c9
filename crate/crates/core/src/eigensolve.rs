//! Principal eigenpairs: shifted inverse power iteration for a fixed control,
//! policy iteration for the semilinear operator, Collatz–Wielandt bounds and
//! the domain-growth sweep.

use std::fmt::Write as _;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{build_grid, BoundaryCondition, Discretization, GeneratorMatrix, Grid};
use crate::linalg::{max_abs, BandedLu, CsrMatrix};
use crate::model::{DiffusionModel, Direction};
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 10_000;
pub const MAX_SWEEPS: usize = 100;
/// Fixed-shift iterations before the shift starts tracking the
/// Collatz–Wielandt upper bound.
pub const FIXED_SHIFT_ITERATIONS: usize = 500;
const SHIFT_MARGIN: f64 = 1e-12;

/// Principal eigenvalue and positive eigenvector, normalized to one at the
/// grid center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// Active index where `vector` equals one.
    pub center: usize,
    /// Max-norm of the eigen-equation residual.
    pub residual: f64,
    pub iterations: usize,
}

impl EigenPair {
    pub fn min_entry(&self) -> f64 {
        self.vector.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.vector.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log Φ`.
    pub fn gauge(&self) -> Vec<f64> {
        self.vector.iter().map(|v| v.ln()).collect()
    }
}

/// Principal eigenpair of `A + diag(c_v)`.
pub fn linear_principal_eigenpair(a: &GeneratorMatrix, c_v: &[f64], tol: f64) -> Result<EigenPair> {
    linear_eigenpair_from(&a.matrix, c_v, a.active.center(), tol, None)
}

/// Shifted inverse power iteration on `M = A + diag(c_v)`.
///
/// With `s = max(c_v) + 1` the matrix `sI − M` is a strictly diagonally
/// dominant M-matrix, so its inverse is entrywise positive and its dominant
/// eigenvalue `1/(s − ρ)` belongs to the Perron root `ρ` of `M`.
pub fn linear_eigenpair_from(
    a: &CsrMatrix,
    c_v: &[f64],
    center: usize,
    tol: f64,
    init: Option<&[f64]>,
) -> Result<EigenPair> {
    let n = a.nrows();
    if c_v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "reward vector has {} entries for a {n}-node generator",
            c_v.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let base_shift = c_v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    // sI − M = −A + diag(s − c)
    let factor = |s: f64| {
        let diag: Vec<f64> = c_v.iter().map(|c| s - c).collect();
        BandedLu::factor(&a.scale(-1.0).add_diagonal(&diag))
    };
    let mut shift = base_shift;
    let mut lu = factor(shift)?;
    let mut adaptive = true;

    let mut v: Vec<f64> = match init {
        Some(x) if x.len() == n && x.iter().all(|&t| t > 0.0) => {
            let s = x[center];
            x.iter().map(|t| t / s).collect()
        }
        _ => vec![1.0; n],
    };
    let mut rho = f64::NAN;
    let mut last_change = f64::INFINITY;
    let mut w = vec![0.0; n];
    for it in 1..=MAX_ITERATIONS {
        if adaptive && it > FIXED_SHIFT_ITERATIONS {
            // Slow contraction (nearly degenerate top pair): move the shift
            // down to the Collatz–Wielandt upper bound, which stays above ρ.
            let upper = (0..n)
                .map(|i| (a.row_dot(i, &v) + c_v[i] * v[i]) / v[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let s = upper + SHIFT_MARGIN * upper.abs().max(1.0);
            if s < shift {
                match factor(s) {
                    Ok(f) => {
                        lu = f;
                        shift = s;
                    }
                    Err(_) => adaptive = false,
                }
            }
        }
        w.copy_from_slice(&v);
        lu.solve_in_place(&mut w);
        let mu = w[center];
        if !(mu > 0.0 && w.iter().all(|&t| t > 0.0 && t.is_finite())) {
            assert!(shift != base_shift, "inverse of shifted M-matrix lost positivity");
            adaptive = false;
            shift = base_shift;
            lu = factor(shift)?;
            continue;
        }
        let new_rho = shift - 1.0 / mu;
        let inv = 1.0 / mu;
        let mut change: f64 = 0.0;
        for (wi, vi) in w.iter_mut().zip(v.iter()) {
            *wi *= inv;
            change = change.max((*wi - vi).abs() / *wi);
        }
        w[center] = 1.0;
        std::mem::swap(&mut v, &mut w);
        let drho = (new_rho - rho).abs();
        rho = new_rho;
        last_change = change.max(drho);
        if drho <= tol && change <= tol {
            let residual = linear_residual(a, c_v, &v, rho);
            if residual <= tol {
                return Ok(EigenPair {
                    value: rho,
                    vector: v,
                    center,
                    residual,
                    iterations: it,
                });
            }
        }
    }
    Err(Error::Convergence {
        context: "linear_principal_eigenpair".into(),
        iterations: MAX_ITERATIONS,
        last_change,
        last_iterate: Some(Box::new(v)),
    })
}

fn linear_residual(a: &CsrMatrix, c_v: &[f64], v: &[f64], rho: f64) -> f64 {
    (0..v.len())
        .map(|i| (a.row_dot(i, v) + (c_v[i] - rho) * v[i]).abs())
        .fold(0.0, f64::max)
}

/// Converged semilinear eigenpair together with its optimizing policy and
/// the discretization it was computed on.
#[derive(Debug, Clone)]
pub struct SemilinearSolution {
    pub pair: EigenPair,
    /// Control index per active node.
    pub policy: Vec<usize>,
    /// Eigenvalue after each policy-evaluation step.
    pub rho_history: Vec<f64>,
    pub sweeps: usize,
    pub discretization: Discretization,
}

/// Policy iteration for `opt_ξ [A_ξ V + c_ξ V] = ρ V` on `grid`.
pub fn solve_semilinear(
    model: &DiffusionModel,
    grid: &Grid,
    bc: BoundaryCondition,
    tol: f64,
) -> Result<SemilinearSolution> {
    policy_iteration(Discretization::new(model, grid, bc)?, tol)
}

/// Policy iteration on a prepared discretization, starting from control 0
/// everywhere.
pub fn policy_iteration(disc: Discretization, tol: f64) -> Result<SemilinearSolution> {
    let n = disc.len();
    let center = disc.active().center();
    let mut policy = vec![0usize; n];
    let mut init: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    let mut total_iterations = 0;
    let mut recent: Vec<Vec<usize>> = Vec::new();

    for sweep in 1..=MAX_SWEEPS {
        let gen = disc.policy_generator(&policy);
        let c_v = disc.policy_rewards(&policy);
        let pair = linear_eigenpair_from(&gen.matrix, &c_v, center, tol, init.as_deref())?;
        total_iterations += pair.iterations;
        history.push(pair.value);
        let (gv, improved) = disc.apply(&pair.vector)?;
        let residual = gv
            .iter()
            .zip(&pair.vector)
            .map(|(g, v)| (g - pair.value * v).abs())
            .fold(0.0, f64::max);
        let stalled = history.len() >= 2 && {
            let k = history.len();
            (history[k - 1] - history[k - 2]).abs() <= tol * history[k - 1].abs().max(1.0)
        };
        debug!(
            "policy sweep {sweep}: rho = {:.12}, semilinear residual = {residual:e}",
            pair.value
        );
        if improved == policy || (stalled && residual <= tol) {
            return Ok(SemilinearSolution {
                pair: EigenPair {
                    residual,
                    iterations: total_iterations,
                    ..pair
                },
                policy: improved,
                rho_history: history,
                sweeps: sweep,
                discretization: disc,
            });
        }
        if recent.contains(&improved) {
            let mut msg = String::new();
            let _ = write!(msg, "policy cycle detected after {sweep} sweeps; eigenvalues {history:?}");
            return Err(Error::Convergence {
                context: format!("solve_semilinear: {msg}"),
                iterations: sweep,
                last_change: residual,
                last_iterate: Some(Box::new(pair.vector)),
            });
        }
        recent.push(policy);
        if recent.len() > 4 {
            recent.remove(0);
        }
        policy = improved;
        init = Some(pair.vector);
    }
    Err(Error::Convergence {
        context: "solve_semilinear: policy iteration".into(),
        iterations: MAX_SWEEPS,
        last_change: f64::NAN,
        last_iterate: init.map(Box::new),
    })
}

/// `(min_x Gf/f, max_x Gf/f)`; the semilinear eigenvalue on the same
/// discretization lies between them for every positive `f`.
pub fn collatz_wielandt_bounds(
    generators: &[GeneratorMatrix],
    rewards: &[Vec<f64>],
    direction: Direction,
    f: &[f64],
) -> Result<(f64, f64)> {
    let (gf, _) = crate::discretize::apply_semilinear(generators, rewards, f, direction)?;
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for (g, v) in gf.iter().zip(f) {
        let q = g / v;
        lower = lower.min(q);
        upper = upper.max(q);
    }
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub bc: BoundaryCondition,
    pub value: f64,
    pub residual: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// Aitken step over three geometrically converging Dirichlet rows.
    Geometric,
    LastNeumann,
    LastRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub extrapolated_value: f64,
    pub extrapolation: Extrapolation,
}

impl SweepTable {
    pub fn values(&self, bc: BoundaryCondition) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.bc == bc)
            .map(|r| (r.radius, r.value))
            .collect()
    }

    /// Violations of the ordering facts that hold for any model: Dirichlet
    /// values increase with the radius, and at equal radius they lie below
    /// the Neumann value. Each gap must exceed `margin`.
    pub fn ordering_violations(&self, margin: f64) -> Vec<String> {
        let mut out = Vec::new();
        let dir = self.values(BoundaryCondition::Dirichlet);
        for w in dir.windows(2) {
            if !(w[1].1 - w[0].1 > margin) {
                out.push(format!(
                    "dirichlet value at r = {} ({}) does not exceed r = {} ({}) by {margin:e}",
                    w[1].0, w[1].1, w[0].0, w[0].1
                ));
            }
        }
        for (r, nv) in self.values(BoundaryCondition::Neumann) {
            if let Some(&(_, dv)) = dir.iter().find(|(rd, _)| *rd == r) {
                if !(nv - dv > margin) {
                    out.push(format!(
                        "at r = {r} dirichlet {dv} is not below neumann {nv} by {margin:e}"
                    ));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,bc,value,residual,nodes\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.15e},{:.3e},{}", r.radius, r.bc, r.value, r.residual, r.nodes);
        }
        s
    }
}

/// Odd node count close to `2 r · nodes_per_unit`.
pub fn sweep_nodes(radius: f64, nodes_per_unit: usize) -> usize {
    let n = (2.0 * radius * nodes_per_unit as f64).round() as usize;
    let n = if n % 2 == 0 { n + 1 } else { n };
    n.max(5)
}

/// Solves on `[−r, r]^d` for each radius and boundary kind.
pub fn domain_sweep(
    model: &DiffusionModel,
    radii: &[f64],
    bcs: &[BoundaryCondition],
    nodes_per_unit: usize,
    tol: f64,
) -> Result<SweepTable> {
    if radii.is_empty() || bcs.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one radius and boundary kind".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "sweep radii must be strictly increasing, got {radii:?}"
        )));
    }
    if nodes_per_unit < 10 {
        return Err(Error::InvalidArgument(format!(
            "nodes_per_unit must be at least 10, got {nodes_per_unit}"
        )));
    }
    let jobs: Vec<(f64, BoundaryCondition)> = radii
        .iter()
        .flat_map(|&r| bcs.iter().map(move |&bc| (r, bc)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(r, bc)| {
            let label = |e: Error| Error::Sweep {
                radius: r,
                bc: bc.to_string(),
                source: Box::new(e),
            };
            let n = sweep_nodes(r, nodes_per_unit);
            let grid = build_grid(model.dimension, r, n).map_err(label)?;
            let sol = solve_semilinear(model, &grid, bc, tol).map_err(label)?;
            Ok(SweepRow {
                radius: r,
                bc,
                value: sol.pair.value,
                residual: sol.pair.residual,
                nodes: sol.pair.vector.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let dir: Vec<f64> = rows
        .iter()
        .filter(|r| r.bc == BoundaryCondition::Dirichlet)
        .map(|r| r.value)
        .collect();
    let geometric = (dir.len() >= 3)
        .then(|| {
            let k = dir.len();
            let (d1, d2) = (dir[k - 2] - dir[k - 3], dir[k - 1] - dir[k - 2]);
            (d1 > 0.0 && d2 > 0.0 && d2 < d1).then(|| {
                let q = d2 / d1;
                dir[k - 1] + d2 * q / (1.0 - q)
            })
        })
        .flatten();
    let (extrapolated_value, extrapolation) = match geometric {
        Some(v) => (v, Extrapolation::Geometric),
        None => match rows.iter().rev().find(|r| r.bc == BoundaryCondition::Neumann) {
            Some(r) => (r.value, Extrapolation::LastNeumann),
            None => (rows.last().unwrap().value, Extrapolation::LastRow),
        },
    };
    Ok(SweepTable {
        rows,
        extrapolated_value,
        extrapolation,
    })
}

/// Max-norm of `GΦ − ρΦ` for the discretization's semilinear operator.
pub fn semilinear_residual(disc: &Discretization, pair: &EigenPair) -> Result<f64> {
    let (gv, _) = disc.apply(&pair.vector)?;
    let r: Vec<f64> = gv.iter().zip(&pair.vector).map(|(g, v)| g - pair.value * v).collect();
    Ok(max_abs(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_instance;

    #[test]
    fn const_is_exact() {
        let m = builtin_instance("const").unwrap();
        for (r, n) in [(2.0, 21), (5.0, 101)] {
            let grid = build_grid(1, r, n).unwrap();
            let sol = solve_semilinear(&m, &grid, BoundaryCondition::Neumann, 1e-11).unwrap();
            assert!((sol.pair.value - 0.5).abs() < 1e-10);
            assert!(sol.pair.vector.iter().all(|v| (v - 1.0).abs() < 1e-10));
            assert_eq!(sol.sweeps, 1);
        }
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let m = builtin_instance("ou-quad").unwrap();
        let grid = build_grid(1, 3.0, 31).unwrap();
        let disc = Discretization::new(&m, &grid, BoundaryCondition::Neumann).unwrap();
        let gen = disc.policy_generator(&vec![0; disc.len()]);
        // A residual below the floating-point floor cannot be reached.
        match linear_principal_eigenpair(&gen, &disc.rewards[0], 1e-30) {
            Err(Error::Convergence { last_iterate: Some(v), iterations, .. }) => {
                assert_eq!(v.len(), 31);
                assert_eq!(iterations, MAX_ITERATIONS);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_rejects_unordered_radii() {
        let m = builtin_instance("const").unwrap();
        let err = domain_sweep(&m, &[3.0, 2.0], &[BoundaryCondition::Neumann], 20, 1e-10);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let err = domain_sweep(&m, &[2.0, 3.0], &[BoundaryCondition::Neumann], 5, 1e-10);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sweep_node_counts_are_odd() {
        assert_eq!(sweep_nodes(6.0, 50), 601);
        assert_eq!(sweep_nodes(2.5, 10), 51);
        assert_eq!(sweep_nodes(0.1, 10), 5);
    }
}
