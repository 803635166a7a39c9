//! Discrete ergodic occupation measures on grid × control × velocity, the
//! linear program over them, and saddle checks against test functions.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble, ActiveSet, BoundaryCondition, FieldTables, GeneratorMatrix, Grid};
use crate::linalg::max_abs;
use crate::model::DiffusionModel;
use crate::simplex::{self, LpProblem, SimplexOptions};
use crate::twist::{active_gradient, TwistedChain};
use crate::{Error, Result};

/// Nodes with stationary mass above this must have `∇φ` inside the velocity range.
pub const RANGE_MASS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    dimension: usize,
    half_width: f64,
    per_axis: usize,
    axis: Vec<f64>,
}

impl VelocityGrid {
    /// `per_axis` odd points on `[−half_width, half_width]` in each axis.
    pub fn new(dimension: usize, half_width: f64, per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&dimension) {
            return Err(Error::InvalidArgument(format!("velocity dimension {dimension} not in {{1, 2}}")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "velocity half-width must be positive, got {half_width}"
            )));
        }
        if per_axis % 2 == 0 || per_axis < 3 {
            return Err(Error::InvalidArgument(format!(
                "velocity points per axis must be odd and ≥ 3, got {per_axis}"
            )));
        }
        let mid = (per_axis / 2) as f64;
        let axis = (0..per_axis)
            .map(|j| (j as f64 - mid) * half_width / mid)
            .collect();
        Ok(Self {
            dimension,
            half_width,
            per_axis,
            axis,
        })
    }

    /// Half-width `1.5 · max |∇φ|` with a floor of one unit spacing.
    pub fn covering(dimension: usize, gradient: &[f64], per_axis: usize) -> Result<Self> {
        let g = max_abs(gradient);
        let y = (1.5 * g).max(1e-3);
        Self::new(dimension, y, per_axis)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.axis[1] - self.axis[0]
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn len(&self) -> usize {
        self.per_axis.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, m: usize) -> Vec<f64> {
        (0..self.dimension)
            .map(|k| self.axis[(m / self.per_axis.pow(k as u32)) % self.per_axis])
            .collect()
    }

    pub fn zero_index(&self) -> usize {
        let mid = self.per_axis / 2;
        (0..self.dimension).map(|k| mid * self.per_axis.pow(k as u32)).sum()
    }

    /// Nearest point, or `None` when `y` lies outside the box.
    pub fn nearest(&self, y: &[f64]) -> Option<usize> {
        let h = self.spacing();
        let mid = (self.per_axis / 2) as f64;
        let mut m = 0;
        for (k, &v) in y.iter().enumerate().take(self.dimension) {
            if !(v.abs() <= self.half_width * (1.0 + 1e-12)) {
                return None;
            }
            let j = ((v / h).round() + mid).clamp(0.0, (self.per_axis - 1) as f64) as usize;
            m += j * self.per_axis.pow(k as u32);
        }
        Some(m)
    }
}

/// Generators `A_{ξ,y}` with drift `b(x, ξ) + a(x) y`, stored at
/// `control · |Y| + velocity`.
#[derive(Debug, Clone)]
pub struct ExtendedGeneratorSet {
    pub grid: Grid,
    pub velocities: VelocityGrid,
    pub num_controls: usize,
    pub generators: Vec<GeneratorMatrix>,
    pub active: Arc<ActiveSet>,
}

/// `R(x, ξ, y) = c(x, ξ) − ½|σᵀ(x) y|²` on the active nodes, same layout as
/// the generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub values: Vec<Vec<f64>>,
}

impl ExtendedGeneratorSet {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn num_pairs(&self) -> usize {
        self.generators.len()
    }

    pub fn pair_index(&self, control: usize, velocity: usize) -> usize {
        control * self.velocities.len() + velocity
    }

    pub fn num_columns(&self) -> usize {
        self.num_pairs() * self.len()
    }

    /// LP column of `(x, ξ, y)`.
    pub fn column(&self, node: usize, control: usize, velocity: usize) -> usize {
        self.pair_index(control, velocity) * self.len() + node
    }

    /// `(node, control, velocity)` of an LP column.
    pub fn split_column(&self, j: usize) -> (usize, usize, usize) {
        let n = self.len();
        let p = j / n;
        (j % n, p / self.velocities.len(), p % self.velocities.len())
    }
}

pub fn build_extended(
    model: &DiffusionModel,
    grid: &Grid,
    velocities: &VelocityGrid,
    bc: BoundaryCondition,
) -> Result<(ExtendedGeneratorSet, RewardTable)> {
    let d = grid.dimension();
    if velocities.dimension() != d {
        return Err(Error::InvalidArgument(format!(
            "velocity grid dimension {} does not match grid dimension {d}",
            velocities.dimension()
        )));
    }
    let tables = FieldTables::tabulate(model, grid)?;
    let active = Arc::new(ActiveSet::new(grid, bc));
    let nk = tables.num_controls();
    let ny = velocities.len();
    let nn = grid.num_nodes();

    let generators = (0..nk * ny)
        .into_par_iter()
        .map(|p| {
            let (k, m) = (p / ny, p % ny);
            let y = velocities.point(m);
            let mut drift = tables.drift[k].clone();
            for g in 0..nn {
                let a = &tables.diffusion[g * d * d..(g + 1) * d * d];
                for i in 0..d {
                    drift[g * d + i] += (0..d).map(|j| a[i * d + j] * y[j]).sum::<f64>();
                }
            }
            assemble(grid, &active, k, &tables.diffusion, &drift)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::with_capacity(nk * ny);
    for k in 0..nk {
        let c = tables.active_rewards(k, &active);
        for m in 0..ny {
            let y = velocities.point(m);
            let r = active
                .grid_indices()
                .iter()
                .zip(&c)
                .map(|(&g, &c)| {
                    let s = &tables.sigma[g * d * d..(g + 1) * d * d];
                    c - half_square(s, &y, d)
                })
                .collect();
            values.push(r);
        }
    }
    Ok((
        ExtendedGeneratorSet {
            grid: grid.clone(),
            velocities: velocities.clone(),
            num_controls: nk,
            generators,
            active,
        },
        RewardTable { values },
    ))
}

/// `½ |σᵀ y|²` for row-major `σ`.
fn half_square(sigma: &[f64], y: &[f64], d: usize) -> f64 {
    0.5 * (0..d)
        .map(|j| {
            let v: f64 = (0..d).map(|i| sigma[i * d + j] * y[i]).sum();
            v * v
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationMeasure {
    /// Indexed by [`ExtendedGeneratorSet::column`].
    pub weights: Vec<f64>,
    pub mass: f64,
    pub stationarity_residual: f64,
    pub objective: f64,
    /// `Σ μ · ½|σᵀy|²`.
    pub entropy_mass: f64,
    pub simplex_iterations: usize,
}

impl OccupationMeasure {
    pub fn from_weights(ext: &ExtendedGeneratorSet, rewards: &RewardTable, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != ext.num_columns() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} columns",
                weights.len(),
                ext.num_columns()
            )));
        }
        let n = ext.len();
        let mut flow = vec![0.0; n];
        let mut objective = 0.0;
        let mut entropy_mass = 0.0;
        for (p, gen) in ext.generators.iter().enumerate() {
            let mu = &weights[p * n..(p + 1) * n];
            if mu.iter().all(|&w| w == 0.0) {
                continue;
            }
            for (f, v) in flow.iter_mut().zip(gen.matrix.left_mul_vec(mu)) {
                *f += v;
            }
            let c = &ext_rewards_c(ext, rewards, p);
            for x in 0..n {
                objective += mu[x] * rewards.values[p][x];
                entropy_mass += mu[x] * (c[x] - rewards.values[p][x]);
            }
        }
        Ok(Self {
            mass: weights.iter().sum(),
            stationarity_residual: max_abs(&flow),
            objective,
            entropy_mass,
            weights,
            simplex_iterations: 0,
        })
    }

    /// Mass per node.
    pub fn node_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (j, &w) in self.weights.iter().enumerate() {
            out[j % n] += w;
        }
        out
    }

    /// Mass per velocity point.
    pub fn velocity_marginal(&self, ext: &ExtendedGeneratorSet) -> Vec<f64> {
        let mut out = vec![0.0; ext.velocities.len()];
        for (j, &w) in self.weights.iter().enumerate() {
            out[ext.split_column(j).2] += w;
        }
        out
    }

    /// `Σ μ(x, ξ, y) |y − g(x)|`, the transport distance of the conditional
    /// velocity law to `δ_{g(x)}` averaged over the node marginal.
    pub fn velocity_spread(&self, ext: &ExtendedGeneratorSet, gradient: &[f64]) -> f64 {
        let d = ext.velocities.dimension();
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, &w)| {
                let (x, _, m) = ext.split_column(j);
                let y = ext.velocities.point(m);
                let dist: f64 = (0..d).map(|k| (y[k] - gradient[x * d + k]).powi(2)).sum();
                w * dist.sqrt()
            })
            .sum()
    }
}

/// `c(x, ξ)` recovered from the y-block with zero velocity.
fn ext_rewards_c(ext: &ExtendedGeneratorSet, rewards: &RewardTable, p: usize) -> Vec<f64> {
    let k = p / ext.velocities.len();
    rewards.values[ext.pair_index(k, ext.velocities.zero_index())].clone()
}

/// Stationarity rows for every node but the last (the dropped one is the
/// negative sum of the others) plus the mass row.
pub fn occupation_lp(ext: &ExtendedGeneratorSet, rewards: &RewardTable) -> LpProblem {
    let n = ext.len();
    let mut columns = Vec::with_capacity(ext.num_columns());
    let mut objective = Vec::with_capacity(ext.num_columns());
    for (p, gen) in ext.generators.iter().enumerate() {
        for x in 0..n {
            let (cols, vals) = gen.matrix.row(x);
            let mut col: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(&t, _)| t + 1 < n)
                .map(|(&t, &v)| (t, v))
                .collect();
            col.push((n - 1, 1.0));
            columns.push(col);
            objective.push(rewards.values[p][x]);
        }
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    LpProblem {
        num_rows: n,
        columns,
        objective,
        rhs,
    }
}

/// Maximizes `Σ μ R` over stationary probability measures. The simplex starts
/// from the stationary law of the chain that picks, at each node, the pair of
/// largest `R`.
pub fn solve_occupation_lp(
    ext: &ExtendedGeneratorSet,
    rewards: &RewardTable,
    opts: SimplexOptions,
) -> Result<OccupationMeasure> {
    let n = ext.len();
    let start: Vec<usize> = (0..n)
        .map(|x| {
            let mut best = 0;
            for p in 1..ext.num_pairs() {
                if rewards.values[p][x] > rewards.values[best][x] {
                    best = p;
                }
            }
            best * n + x
        })
        .collect();
    solve_occupation_lp_from(ext, rewards, start, opts)
}

/// As [`solve_occupation_lp`] from a caller-chosen column per node; the
/// induced chain must be irreducible.
pub fn solve_occupation_lp_from(
    ext: &ExtendedGeneratorSet,
    rewards: &RewardTable,
    start: Vec<usize>,
    opts: SimplexOptions,
) -> Result<OccupationMeasure> {
    if ext.active.bc() != BoundaryCondition::Neumann {
        return Err(Error::InvalidArgument(
            "the occupation LP needs conservative (Neumann) generators".into(),
        ));
    }
    if start.len() != ext.len() || start.iter().enumerate().any(|(x, &j)| ext.split_column(j).0 != x) {
        return Err(Error::InvalidArgument("start basis needs one column per node".into()));
    }
    let lp = occupation_lp(ext, rewards);
    let sol = match simplex::solve_from_basis(&lp, start, opts) {
        Err(Error::InvalidArgument(msg)) => {
            return Err(Error::Internal(format!("occupation LP start basis rejected: {msg}")))
        }
        other => other?,
    };
    let mut mu = OccupationMeasure::from_weights(ext, rewards, sol.x)?;
    mu.simplex_iterations = sol.iterations;
    if (mu.mass - 1.0).abs() > 1e-10 {
        return Err(Error::Internal(format!("occupation LP mass {} ≠ 1", mu.mass)));
    }
    Ok(mu)
}

/// `η ⊗ δ_{policy} ⊗ δ_{nearest y to ∇φ}` from a twisted chain.
pub fn candidate_measure(
    ext: &ExtendedGeneratorSet,
    rewards: &RewardTable,
    chain: &TwistedChain,
    eta: &[f64],
    policy: &[usize],
) -> Result<OccupationMeasure> {
    let n = ext.len();
    if chain.len() != n || eta.len() != n || policy.len() != n {
        return Err(Error::InvalidArgument(
            "chain, stationary law and policy must match the extended generator size".into(),
        ));
    }
    let d = ext.grid.dimension();
    let grad = active_gradient(&ext.grid, &ext.active, &chain.gauge);
    let mut weights = vec![0.0; ext.num_columns()];
    for x in 0..n {
        let g = &grad[x * d..(x + 1) * d];
        let m = match ext.velocities.nearest(g) {
            Some(m) => m,
            None if eta[x] > RANGE_MASS_FLOOR => {
                return Err(Error::Range(format!(
                    "∇φ = {g:?} at node {} (mass {:e}) lies outside the velocity range ±{}; enlarge the velocity half-width",
                    ext.active.grid_indices()[x],
                    eta[x],
                    ext.velocities.half_width()
                )))
            }
            None => {
                let clamped: Vec<f64> = g
                    .iter()
                    .map(|v| v.clamp(-ext.velocities.half_width(), ext.velocities.half_width()))
                    .collect();
                ext.velocities.nearest(&clamped).expect("clamped point is in range")
            }
        };
        weights[ext.column(x, policy[x], m)] += eta[x];
    }
    OccupationMeasure::from_weights(ext, rewards, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    pub function_names: Vec<String>,
    /// `F(g, μ)` indexed `[g][μ]`.
    pub values: Vec<Vec<f64>>,
    /// `max_z (𝒜g + R)(z)` per test function.
    pub function_sup: Vec<f64>,
    /// `max_μ min_g F(g, μ)`.
    pub sup_inf: f64,
    /// `min_g max_z (𝒜g + R)(z)`.
    pub inf_sup: f64,
    pub best_function: usize,
}

impl SaddleReport {
    pub fn bracket_holds(&self, lp_value: f64, tol: f64) -> bool {
        self.sup_inf <= lp_value + tol && lp_value <= self.inf_sup + tol
    }

    /// `inf-sup − LP value`.
    pub fn slack(&self, lp_value: f64) -> f64 {
        self.inf_sup - lp_value
    }
}

/// `(𝒜g + R)` at every column.
fn tested_field(ext: &ExtendedGeneratorSet, rewards: &RewardTable, g: &[f64]) -> Vec<Vec<f64>> {
    ext.generators
        .iter()
        .zip(&rewards.values)
        .map(|(gen, r)| gen.matrix.mul_vec(g).iter().zip(r).map(|(a, b)| a + b).collect())
        .collect()
}

pub fn verify_saddle(
    ext: &ExtendedGeneratorSet,
    rewards: &RewardTable,
    test_functions: &[(String, Vec<f64>)],
    measures: &[OccupationMeasure],
) -> Result<SaddleReport> {
    let n = ext.len();
    if test_functions.is_empty() {
        return Err(Error::InvalidArgument("no test functions".into()));
    }
    if let Some((name, _)) = test_functions.iter().find(|(_, g)| g.len() != n) {
        return Err(Error::InvalidArgument(format!("test function {name} has the wrong length")));
    }
    let rows: Vec<(f64, Vec<f64>)> = test_functions
        .par_iter()
        .map(|(_, g)| {
            let field = tested_field(ext, rewards, g);
            let sup = field.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let vals = measures
                .iter()
                .map(|mu| {
                    field
                        .iter()
                        .enumerate()
                        .map(|(p, f)| (0..n).map(|x| mu.weights[p * n + x] * f[x]).sum::<f64>())
                        .sum()
                })
                .collect();
            (sup, vals)
        })
        .collect();
    let function_sup: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let values: Vec<Vec<f64>> = rows.into_iter().map(|r| r.1).collect();
    let (best_function, inf_sup) = function_sup
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let sup_inf = (0..measures.len())
        .map(|m| values.iter().map(|row| row[m]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SaddleReport {
        function_names: test_functions.iter().map(|(s, _)| s.clone()).collect(),
        values,
        function_sup,
        sup_inf,
        inf_sup,
        best_function,
    })
}

/// Monomials of degree ≤ 4 (scaled by `r^{-deg}`), Gaussians of width
/// `r/4, r/2, r`, and optionally the gauge `φ`.
pub fn test_function_family(grid: &Grid, active: &ActiveSet, gauge: Option<&[f64]>) -> Vec<(String, Vec<f64>)> {
    let d = grid.dimension();
    let r = grid.radius();
    let nodes: Vec<&[f64]> = active.grid_indices().iter().map(|&g| grid.node(g)).collect();
    let mut out = Vec::new();
    let exps: Vec<[u32; 2]> = if d == 1 {
        (0..=4).map(|i| [i, 0]).collect()
    } else {
        (0..=4u32)
            .flat_map(|t| (0..=t).map(move |i| [t - i, i]))
            .collect()
    };
    for e in exps {
        let name = if d == 1 {
            format!("x^{}", e[0])
        } else {
            format!("x1^{} x2^{}", e[0], e[1])
        };
        let vals = nodes
            .iter()
            .map(|x| (0..d).map(|k| (x[k] / r).powi(e[k] as i32)).product::<f64>())
            .collect();
        out.push((name, vals));
    }
    for w in [0.25 * r, 0.5 * r, r] {
        let vals = nodes
            .iter()
            .map(|x| (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * w * w)).exp())
            .collect();
        out.push((format!("gauss(w={w})"), vals));
    }
    if let Some(phi) = gauge {
        out.push(("phi".into(), phi.to_vec()));
    }
    out
}

/// Writes the LP in CPLEX LP text format, with every stationarity row kept.
pub fn write_lp(ext: &ExtendedGeneratorSet, rewards: &RewardTable, mut w: impl Write) -> io::Result<()> {
    let n = ext.len();
    let name = |j: usize| {
        let (x, k, m) = ext.split_column(j);
        format!("mu_{x}_{k}_{m}")
    };
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (p, gen) in ext.generators.iter().enumerate() {
        for (x, t, v) in gen.matrix.triplets() {
            rows[t].push((p * n + x, v));
        }
    }
    writeln!(w, "\\ occupation measure LP: {} nodes, {} controls, {} velocities", n, ext.num_controls, ext.velocities.len())?;
    writeln!(w, "Maximize")?;
    let obj: Vec<(usize, f64)> = (0..ext.num_columns())
        .map(|j| (j, rewards.values[j / n][j % n]))
        .collect();
    write_expr(&mut w, " obj:", &obj, &name)?;
    writeln!(w, "Subject To")?;
    for (t, row) in rows.iter().enumerate() {
        write_expr(&mut w, &format!(" s{t}:"), row, &name)?;
        writeln!(w, "   = 0")?;
    }
    let ones: Vec<(usize, f64)> = (0..ext.num_columns()).map(|j| (j, 1.0)).collect();
    write_expr(&mut w, " mass:", &ones, &name)?;
    writeln!(w, "   = 1")?;
    writeln!(w, "End")
}

fn write_expr(w: &mut impl Write, label: &str, terms: &[(usize, f64)], name: &impl Fn(usize) -> String) -> io::Result<()> {
    write!(w, "{label}")?;
    let mut width = label.len();
    let mut any = false;
    for &(j, v) in terms {
        if v == 0.0 {
            continue;
        }
        let term = if v < 0.0 {
            format!(" - {} {}", -v, name(j))
        } else {
            format!(" + {} {}", v, name(j))
        };
        if width + term.len() > 200 {
            writeln!(w)?;
            write!(w, "  ")?;
            width = 2;
        }
        width += term.len();
        write!(w, "{term}")?;
        any = true;
    }
    if !any {
        write!(w, " 0 {}", name(0))?;
    }
    writeln!(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_generator, build_grid};
    use crate::model::builtin_instance;

    #[test]
    fn velocity_grid_layout() {
        let v = VelocityGrid::new(1, 3.0, 7).unwrap();
        assert_eq!(v.axis(), &[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(v.point(v.zero_index()), vec![0.0]);
        assert_eq!(v.nearest(&[1.4]), Some(4));
        assert_eq!(v.nearest(&[-3.5]), None);
        let v2 = VelocityGrid::new(2, 1.0, 3).unwrap();
        assert_eq!(v2.len(), 9);
        assert_eq!(v2.point(v2.zero_index()), vec![0.0, 0.0]);
        assert_eq!(v2.point(5), vec![1.0, 0.0]);
        assert!(VelocityGrid::new(1, 1.0, 4).is_err());
    }

    #[test]
    fn zero_velocity_plane_matches_generator() {
        let model = builtin_instance("ctrl-1d").unwrap();
        let grid = build_grid(1, 2.0, 9).unwrap();
        let v = VelocityGrid::new(1, 2.0, 5).unwrap();
        let (ext, rewards) = build_extended(&model, &grid, &v, BoundaryCondition::Neumann).unwrap();
        assert_eq!(ext.num_pairs(), model.num_controls() * 5);
        for k in 0..model.num_controls() {
            let base = build_generator(&model, &grid, k, BoundaryCondition::Neumann).unwrap();
            let p = ext.pair_index(k, v.zero_index());
            assert_eq!(ext.generators[p].matrix, base.matrix);
            for x in 0..grid.num_nodes() {
                assert_eq!(rewards.values[p][x], model.reward(grid.node(x), k));
            }
        }
        for g in &ext.generators {
            g.check_invariants(1e-9).unwrap();
        }
    }

    #[test]
    fn ou_quad_reward_table() {
        let model = builtin_instance("ou-quad").unwrap();
        let grid = build_grid(1, 2.0, 5).unwrap();
        let v = VelocityGrid::new(1, 3.0, 7).unwrap();
        let (_, rewards) = build_extended(&model, &grid, &v, BoundaryCondition::Neumann).unwrap();
        for m in 0..7 {
            let y = v.point(m)[0];
            for x in 0..5 {
                let xx = grid.node(x)[0];
                assert!((rewards.values[m][x] - (-2.0 * xx * xx - y * y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shapes_small_case() {
        let model = builtin_instance("const").unwrap();
        let grid = build_grid(1, 1.0, 5).unwrap();
        let v = VelocityGrid::new(1, 1.0, 3).unwrap();
        let (ext, _) = build_extended(&model, &grid, &v, BoundaryCondition::Neumann).unwrap();
        assert_eq!(ext.generators.len(), 3);
        assert!(ext.generators.iter().all(|g| g.matrix.nrows() == 5 && g.matrix.ncols() == 5));
    }

    #[test]
    fn const_lp_concentrates_at_zero_velocity() {
        let model = builtin_instance("const").unwrap();
        let grid = build_grid(1, 2.0, 11).unwrap();
        let v = VelocityGrid::new(1, 2.0, 5).unwrap();
        let (ext, rewards) = build_extended(&model, &grid, &v, BoundaryCondition::Neumann).unwrap();
        let mu = solve_occupation_lp(&ext, &rewards, SimplexOptions::default()).unwrap();
        assert!((mu.objective - 0.5).abs() < 1e-9);
        assert!((mu.mass - 1.0).abs() < 1e-10);
        assert!(mu.stationarity_residual < 1e-9);
        let ym = mu.velocity_marginal(&ext);
        assert!((ym[v.zero_index()] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_test_function_gives_objective() {
        let model = builtin_instance("ou-quad").unwrap();
        let grid = build_grid(1, 2.0, 9).unwrap();
        let v = VelocityGrid::new(1, 3.0, 7).unwrap();
        let (ext, rewards) = build_extended(&model, &grid, &v, BoundaryCondition::Neumann).unwrap();
        let mu = solve_occupation_lp(&ext, &rewards, SimplexOptions::default()).unwrap();
        let fam = vec![("zero".to_string(), vec![0.0; 9])];
        let rep = verify_saddle(&ext, &rewards, &fam, std::slice::from_ref(&mu)).unwrap();
        assert!((rep.values[0][0] - mu.objective).abs() < 1e-12);
        let fam = test_function_family(&grid, &ext.active, None);
        let rep = verify_saddle(&ext, &rewards, &fam, std::slice::from_ref(&mu)).unwrap();
        for row in &rep.values {
            assert!((row[0] - mu.objective).abs() < 1e-8);
        }
        assert!(rep.bracket_holds(mu.objective, 1e-8));
    }

    #[test]
    fn lp_export_has_all_rows() {
        let model = builtin_instance("const").unwrap();
        let grid = build_grid(1, 1.0, 5).unwrap();
        let v = VelocityGrid::new(1, 1.0, 3).unwrap();
        let (ext, rewards) = build_extended(&model, &grid, &v, BoundaryCondition::Neumann).unwrap();
        let mut buf = Vec::new();
        write_lp(&ext, &rewards, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Maximize") && text.contains("Subject To") && text.trim_end().ends_with("End"));
        assert_eq!(text.matches("= 0").count(), 5);
        assert!(text.contains(" mass:"));
    }
}
