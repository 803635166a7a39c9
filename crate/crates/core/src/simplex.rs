//! Revised primal simplex for small dense-basis problems in equality form:
//! maximize `cᵀx` subject to `Ax = b`, `x ≥ 0`, with sparse columns.
//!
//! The basis is refactorized from scratch every iteration, which is cheap at
//! the sizes this crate produces (a few hundred rows) and keeps the iterates
//! free of accumulated update error. Dantzig pricing switches to Bland's rule
//! after a run of degenerate pivots.

use crate::linalg::DenseLu;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_rows: usize,
    /// Column `j` as `(row, value)` pairs.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub objective: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row prices `π` with `Bᵀπ = c_B`.
    pub duals: Vec<f64>,
    pub basis: Vec<usize>,
    pub iterations: usize,
}

const DEGENERATE_RUN: usize = 50;

enum Outcome {
    Optimal,
    Unbounded(usize),
}

struct Run<'a> {
    m: usize,
    columns: &'a [Vec<(usize, f64)>],
    cost: &'a [f64],
    rhs: &'a [f64],
    allowed: &'a [bool],
    opts: SimplexOptions,
    iterations: usize,
}

impl Run<'_> {
    fn factor(&self, basis: &[usize]) -> Result<DenseLu> {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        for (k, &j) in basis.iter().enumerate() {
            for &(i, v) in &self.columns[j] {
                dense[i * m + k] += v;
            }
        }
        DenseLu::factor(m, dense).map_err(|e| Error::Internal(format!("simplex basis: {e}")))
    }

    fn iterate(&mut self, basis: &mut [usize]) -> Result<Outcome> {
        let n = self.columns.len();
        let mut in_basis = vec![false; n];
        for &j in basis.iter() {
            in_basis[j] = true;
        }
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Convergence {
                    context: "simplex".into(),
                    iterations: self.iterations,
                    last_change: f64::NAN,
                    last_iterate: None,
                });
            }
            let lu = self.factor(basis)?;
            let xb = lu.solve(self.rhs);
            let cb: Vec<f64> = basis.iter().map(|&j| self.cost[j]).collect();
            let pi = lu.solve_transpose(&cb);
            let bland = degenerate >= DEGENERATE_RUN;

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n {
                if in_basis[j] || !self.allowed[j] {
                    continue;
                }
                let d = self.cost[j] - self.columns[j].iter().map(|&(i, v)| pi[i] * v).sum::<f64>();
                if d > self.opts.optimality_tol {
                    match entering {
                        None => {
                            entering = Some((j, d));
                            if bland {
                                break;
                            }
                        }
                        Some((_, best)) if d > best => entering = Some((j, d)),
                        _ => {}
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(Outcome::Optimal);
            };

            let mut aq = vec![0.0; self.m];
            for &(i, v) in &self.columns[q] {
                aq[i] += v;
            }
            let u = lu.solve(&aq);
            let umax = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let piv_tol = 1e-9 * umax.max(1.0);
            let mut leave: Option<(usize, f64)> = None;
            for (k, &uk) in u.iter().enumerate() {
                if uk <= piv_tol {
                    continue;
                }
                let ratio = xb[k].max(0.0) / uk;
                leave = match leave {
                    None => Some((k, ratio)),
                    Some((kb, rb)) => {
                        let tie = (ratio - rb).abs() <= self.opts.feasibility_tol / uk.max(1.0);
                        let better = if tie {
                            if bland {
                                basis[k] < basis[kb]
                            } else {
                                uk > u[kb]
                            }
                        } else {
                            ratio < rb
                        };
                        if better {
                            Some((k, ratio))
                        } else {
                            Some((kb, rb))
                        }
                    }
                };
            }
            let Some((r, step)) = leave else {
                return Ok(Outcome::Unbounded(q));
            };
            if step * u[r] <= self.opts.feasibility_tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            in_basis[basis[r]] = false;
            in_basis[q] = true;
            basis[r] = q;
            self.iterations += 1;
        }
    }
}

fn finish(problem: &LpProblem, basis: Vec<usize>, opts: SimplexOptions, iterations: usize) -> Result<LpSolution> {
    let run = Run {
        m: problem.num_rows,
        columns: &problem.columns,
        cost: &problem.objective,
        rhs: &problem.rhs,
        allowed: &[],
        opts,
        iterations,
    };
    let lu = run.factor(&basis)?;
    let xb = lu.solve(&problem.rhs);
    let cb: Vec<f64> = basis.iter().map(|&j| problem.objective[j]).collect();
    let duals = lu.solve_transpose(&cb);
    let mut x = vec![0.0; problem.columns.len()];
    for (k, &j) in basis.iter().enumerate() {
        if xb[k] < -opts.feasibility_tol {
            return Err(Error::Internal(format!(
                "simplex terminated with infeasible basic value x[{j}] = {}",
                xb[k]
            )));
        }
        x[j] = xb[k].max(0.0);
    }
    let objective = x.iter().zip(&problem.objective).map(|(a, b)| a * b).sum();
    Ok(LpSolution {
        x,
        objective,
        duals,
        basis,
        iterations,
    })
}

/// Phase II from a primal feasible basis.
pub fn solve_from_basis(problem: &LpProblem, basis: Vec<usize>, opts: SimplexOptions) -> Result<LpSolution> {
    validate(problem)?;
    if basis.len() != problem.num_rows {
        return Err(Error::InvalidArgument(format!(
            "basis has {} columns for {} rows",
            basis.len(),
            problem.num_rows
        )));
    }
    let allowed = vec![true; problem.columns.len()];
    let mut run = Run {
        m: problem.num_rows,
        columns: &problem.columns,
        cost: &problem.objective,
        rhs: &problem.rhs,
        allowed: &allowed,
        opts,
        iterations: 0,
    };
    let lu = run.factor(&basis)?;
    if let Some(v) = lu.solve(&problem.rhs).iter().find(|&&v| v < -opts.feasibility_tol) {
        return Err(Error::InvalidArgument(format!(
            "starting basis is not primal feasible (basic value {v})"
        )));
    }
    let mut basis = basis;
    match run.iterate(&mut basis)? {
        Outcome::Optimal => finish(problem, basis, opts, run.iterations),
        Outcome::Unbounded(q) => Err(Error::Internal(format!("LP unbounded along column {q}"))),
    }
}

/// Two-phase simplex from an artificial basis.
pub fn solve(problem: &LpProblem, opts: SimplexOptions) -> Result<LpSolution> {
    validate(problem)?;
    let m = problem.num_rows;
    let n = problem.columns.len();
    let mut columns = problem.columns.clone();
    for i in 0..m {
        let sign = if problem.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        columns.push(vec![(i, sign)]);
    }
    let mut phase1_cost = vec![0.0; n + m];
    phase1_cost[n..].iter_mut().for_each(|c| *c = -1.0);
    let allowed = vec![true; n + m];
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut run = Run {
        m,
        columns: &columns,
        cost: &phase1_cost,
        rhs: &problem.rhs,
        allowed: &allowed,
        opts,
        iterations: 0,
    };
    if let Outcome::Unbounded(_) = run.iterate(&mut basis)? {
        return Err(Error::Internal("phase I cannot be unbounded".into()));
    }
    let lu = run.factor(&basis)?;
    let xb = lu.solve(&problem.rhs);
    let infeasibility: f64 = basis
        .iter()
        .zip(&xb)
        .filter(|(&j, _)| j >= n)
        .map(|(_, &v)| v.abs())
        .sum();
    if infeasibility > opts.feasibility_tol * (m as f64).max(1.0) {
        return Err(Error::Internal(format!(
            "LP infeasible (phase I residual {infeasibility:e})"
        )));
    }
    // Drive zero-level artificials out where a structural column can replace them.
    for k in 0..m {
        if basis[k] < n {
            continue;
        }
        let lu = run.factor(&basis)?;
        let mut unit = vec![0.0; m];
        unit[k] = 1.0;
        let row = lu.solve_transpose(&unit);
        let candidate = (0..n).filter(|j| !basis.contains(j)).find(|&j| {
            columns[j].iter().map(|&(i, v)| row[i] * v).sum::<f64>().abs() > 1e-7
        });
        if let Some(j) = candidate {
            basis[k] = j;
        }
    }
    let mut phase2_cost = problem.objective.clone();
    phase2_cost.extend(std::iter::repeat(0.0).take(m));
    let mut allowed = vec![true; n + m];
    allowed[n..].iter_mut().for_each(|a| *a = false);
    let iterations = run.iterations;
    let mut run = Run {
        m,
        columns: &columns,
        cost: &phase2_cost,
        rhs: &problem.rhs,
        allowed: &allowed,
        opts,
        iterations,
    };
    match run.iterate(&mut basis)? {
        Outcome::Optimal => {}
        Outcome::Unbounded(q) => return Err(Error::Internal(format!("LP unbounded along column {q}"))),
    }
    let iterations = run.iterations;
    let extended = LpProblem {
        num_rows: m,
        columns,
        objective: phase2_cost,
        rhs: problem.rhs.clone(),
    };
    let mut sol = finish(&extended, basis, opts, iterations)?;
    sol.x.truncate(n);
    Ok(sol)
}

fn validate(problem: &LpProblem) -> Result<()> {
    if problem.rhs.len() != problem.num_rows || problem.objective.len() != problem.columns.len() {
        return Err(Error::InvalidArgument("LP dimensions are inconsistent".into()));
    }
    if problem
        .columns
        .iter()
        .flatten()
        .any(|&(i, v)| i >= problem.num_rows || !v.is_finite())
    {
        return Err(Error::InvalidArgument("LP column entry out of range or non-finite".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: usize, a: &[&[f64]], c: &[f64], b: &[f64]) -> LpProblem {
        let n = c.len();
        let columns = (0..n)
            .map(|j| (0..m).filter(|&i| a[i][j] != 0.0).map(|i| (i, a[i][j])).collect())
            .collect();
        LpProblem {
            num_rows: m,
            columns,
            objective: c.to_vec(),
            rhs: b.to_vec(),
        }
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y  s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 (slacks s1..s3)
        let p = dense(
            3,
            &[
                &[1.0, 0.0, 1.0, 0.0, 0.0],
                &[0.0, 2.0, 0.0, 1.0, 0.0],
                &[3.0, 2.0, 0.0, 0.0, 1.0],
            ],
            &[3.0, 5.0, 0.0, 0.0, 0.0],
            &[4.0, 12.0, 18.0],
        );
        let sol = solve(&p, SimplexOptions::default()).unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9 && (sol.x[1] - 6.0).abs() < 1e-9);
        let warm = solve_from_basis(&p, vec![2, 3, 4], SimplexOptions::default()).unwrap();
        assert!((warm.objective - 36.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_rows_and_infeasibility() {
        // x + y = 1 twice, max x
        let p = dense(2, &[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 0.0], &[1.0, 1.0]);
        let sol = solve(&p, SimplexOptions::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        let bad = dense(2, &[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 0.0], &[1.0, 2.0]);
        assert!(matches!(solve(&bad, SimplexOptions::default()), Err(Error::Internal(_))));
    }

    #[test]
    fn unbounded_is_reported() {
        // x − y = 1, max x + y
        let p = dense(1, &[&[1.0, -1.0]], &[1.0, 1.0], &[1.0]);
        assert!(matches!(solve(&p, SimplexOptions::default()), Err(Error::Internal(_))));
    }
}
