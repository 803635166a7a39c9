//! Monotone finite-difference generators on tensor grids.
//!
//! Second derivatives use central differences, drift uses first-order
//! upwinding, and 2D cross terms use the 7-point splitting whose diagonal
//! couplings follow the sign of `a₁₂`. Every off-diagonal entry is therefore
//! nonnegative and each generator is a (possibly defective) rate matrix.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::CsrMatrix;
use crate::model::{DiffusionModel, Direction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Reflecting boundary: ghost nodes folded by even reflection.
    Neumann,
    /// Absorbing boundary: boundary nodes eliminated.
    Dirichlet,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Dirichlet => "dirichlet",
        })
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neumann" => Ok(BoundaryCondition::Neumann),
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            other => Err(Error::InvalidArgument(format!(
                "unknown boundary condition `{other}` (expected neumann or dirichlet)"
            ))),
        }
    }
}

/// Tensor grid on the box `[−r, r]^d`. In 2D nodes are stored row-major with
/// the first coordinate varying fastest: `index = i₁·n + i₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dimension: usize,
    radius: f64,
    n: usize,
    spacing: f64,
    coords: Vec<f64>,
    boundary: Vec<bool>,
    center_index: usize,
}

pub fn build_grid(dimension: usize, radius: f64, nodes_per_axis: usize) -> Result<Grid> {
    if !(1..=2).contains(&dimension) {
        return Err(Error::InvalidArgument(format!(
            "grid dimension must be 1 or 2, got {dimension}"
        )));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "grid radius must be positive, got {radius}"
        )));
    }
    if nodes_per_axis % 2 == 0 || nodes_per_axis < 3 {
        return Err(Error::InvalidArgument(format!(
            "nodes_per_axis must be odd and at least 3 so that the origin is a node, got {nodes_per_axis}"
        )));
    }
    let n = nodes_per_axis;
    let h = 2.0 * radius / (n - 1) as f64;
    let mid = (n - 1) / 2;
    let axis: Vec<f64> = (0..n).map(|i| (i as f64 - mid as f64) * h).collect();
    let total = n.pow(dimension as u32);
    let mut coords = Vec::with_capacity(total * dimension);
    let mut boundary = Vec::with_capacity(total);
    for idx in 0..total {
        let mut on_boundary = false;
        let mut rest = idx;
        for _ in 0..dimension {
            let i = rest % n;
            rest /= n;
            coords.push(axis[i]);
            on_boundary |= i == 0 || i == n - 1;
        }
        boundary.push(on_boundary);
    }
    let center_index = if dimension == 1 { mid } else { mid * n + mid };
    Ok(Grid {
        dimension,
        radius,
        n,
        spacing: h,
        coords,
        boundary,
        center_index,
    })
}

impl Grid {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn num_nodes(&self) -> usize {
        self.boundary.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    /// Per-axis indices of node `i`.
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        [i % self.n, if self.dimension == 2 { i / self.n } else { 0 }]
    }

    pub fn flat_index(&self, m: [usize; 2]) -> usize {
        if self.dimension == 2 {
            m[1] * self.n + m[0]
        } else {
            m[0]
        }
    }

    /// Coordinate of axis index `i`.
    pub fn axis_coordinate(&self, i: usize) -> f64 {
        (i as f64 - ((self.n - 1) / 2) as f64) * self.spacing
    }

    /// Index of the node nearest `x`, clamping outside the box.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut m = [0usize; 2];
        for (k, &xk) in x.iter().enumerate().take(self.dimension) {
            let t = ((xk + self.radius) / self.spacing).round();
            m[k] = t.clamp(0.0, (self.n - 1) as f64) as usize;
        }
        self.flat_index(m)
    }
}

/// Nodes carrying unknowns: all nodes for Neumann, interior nodes for
/// Dirichlet. Active nodes form a sub-box and keep the grid's ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    bc: BoundaryCondition,
    dimension: usize,
    offset: usize,
    per_axis: usize,
    grid_n: usize,
    grid_indices: Vec<usize>,
    center: usize,
}

impl ActiveSet {
    pub fn new(grid: &Grid, bc: BoundaryCondition) -> Self {
        let n = grid.nodes_per_axis();
        let (offset, per_axis) = match bc {
            BoundaryCondition::Neumann => (0, n),
            BoundaryCondition::Dirichlet => (1, n - 2),
        };
        let d = grid.dimension();
        let total = per_axis.pow(d as u32);
        let grid_indices: Vec<usize> = (0..total)
            .map(|a| {
                let m = [a % per_axis + offset, if d == 2 { a / per_axis + offset } else { 0 }];
                grid.flat_index(m)
            })
            .collect();
        let center = grid_indices
            .binary_search(&grid.center_index())
            .expect("grid center is always active");
        Self {
            bc,
            dimension: d,
            offset,
            per_axis,
            grid_n: n,
            grid_indices,
            center,
        }
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.grid_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_indices.is_empty()
    }

    pub fn grid_indices(&self) -> &[usize] {
        &self.grid_indices
    }

    /// Active index of the grid center.
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// Active index for a grid multi-index, if that node is active.
    pub fn from_grid_multi(&self, m: [isize; 2]) -> Option<usize> {
        let lo = self.offset as isize;
        let hi = (self.offset + self.per_axis) as isize;
        let mut a = [0usize; 2];
        for k in 0..self.dimension {
            if m[k] < lo || m[k] >= hi {
                return None;
            }
            a[k] = (m[k] - lo) as usize;
        }
        Some(if self.dimension == 2 { a[1] * self.per_axis + a[0] } else { a[0] })
    }

    /// Per-axis active indices of active node `i`.
    pub fn active_multi(&self, i: usize) -> [usize; 2] {
        [i % self.per_axis, if self.dimension == 2 { i / self.per_axis } else { 0 }]
    }

    pub fn active_flat(&self, m: [usize; 2]) -> usize {
        if self.dimension == 2 {
            m[1] * self.per_axis + m[0]
        } else {
            m[0]
        }
    }

    fn grid_multi(&self, i: usize) -> [isize; 2] {
        let g = self.grid_indices[i];
        [
            (g % self.grid_n) as isize,
            if self.dimension == 2 { (g / self.grid_n) as isize } else { 0 },
        ]
    }
}

/// Sparse generator `A_ξ` over the active nodes of one boundary treatment.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub matrix: CsrMatrix,
    pub bc: BoundaryCondition,
    pub control_index: usize,
    pub active: Arc<ActiveSet>,
}

impl GeneratorMatrix {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Checks off-diagonal nonnegativity and the row-sum condition of the
    /// boundary treatment: zero for Neumann, nonpositive for Dirichlet.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        for (i, j, v) in self.matrix.triplets() {
            if i != j && v < 0.0 {
                return Err(format!("negative off-diagonal entry ({i}, {j}) = {v}"));
            }
        }
        for (i, s) in self.matrix.row_sums().into_iter().enumerate() {
            let scale = self.matrix.get(i, i).abs().max(1.0);
            match self.bc {
                BoundaryCondition::Neumann if s.abs() > tol * scale => {
                    return Err(format!("row {i} sums to {s}"))
                }
                BoundaryCondition::Dirichlet if s > tol * scale => {
                    return Err(format!("row {i} sums to {s} > 0"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Writes `row col value` lines.
    pub fn write_triplets(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "# rows={} cols={} nnz={}", self.matrix.nrows(), self.matrix.ncols(), self.matrix.nnz())?;
        for (i, j, v) in self.matrix.triplets() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }
}

/// Model fields sampled on every grid node.
#[derive(Debug, Clone)]
pub struct FieldTables {
    pub dimension: usize,
    /// `drift[k][node·d + i]`
    pub drift: Vec<Vec<f64>>,
    /// `reward[k][node]`
    pub reward: Vec<Vec<f64>>,
    /// Row-major `a` per node.
    pub diffusion: Vec<f64>,
    /// Row-major `σ` per node.
    pub sigma: Vec<f64>,
}

impl FieldTables {
    pub fn tabulate(model: &DiffusionModel, grid: &Grid) -> Result<Self> {
        check_dims(model, grid)?;
        let d = model.dimension;
        let nn = grid.num_nodes();
        let mut sigma = Vec::with_capacity(nn * d * d);
        let mut diffusion = Vec::with_capacity(nn * d * d);
        for i in 0..nn {
            let x = grid.node(i);
            let s = model.sigma(x);
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    field: "sigma",
                    node: i,
                    coords: x.to_vec(),
                });
            }
            sigma.extend_from_slice(&s);
            diffusion.extend(model.diffusion(x));
        }
        let mut drift = Vec::with_capacity(model.num_controls());
        let mut reward = Vec::with_capacity(model.num_controls());
        for k in 0..model.num_controls() {
            let mut bk = vec![0.0; nn * d];
            let mut ck = vec![0.0; nn];
            for i in 0..nn {
                let x = grid.node(i);
                model.drift_into(x, k, &mut bk[i * d..(i + 1) * d]);
                if bk[i * d..(i + 1) * d].iter().any(|v| !v.is_finite()) {
                    return Err(Error::Evaluation {
                        field: "drift",
                        node: i,
                        coords: x.to_vec(),
                    });
                }
                ck[i] = model.reward(x, k);
                if !ck[i].is_finite() {
                    return Err(Error::Evaluation {
                        field: "reward",
                        node: i,
                        coords: x.to_vec(),
                    });
                }
            }
            drift.push(bk);
            reward.push(ck);
        }
        Ok(Self {
            dimension: d,
            drift,
            reward,
            diffusion,
            sigma,
        })
    }

    pub fn num_controls(&self) -> usize {
        self.reward.len()
    }

    /// Rewards of control `k` restricted to the active nodes.
    pub fn active_rewards(&self, k: usize, active: &ActiveSet) -> Vec<f64> {
        active.grid_indices().iter().map(|&g| self.reward[k][g]).collect()
    }
}

fn check_dims(model: &DiffusionModel, grid: &Grid) -> Result<()> {
    if model.dimension != grid.dimension() {
        return Err(Error::InvalidArgument(format!(
            "model dimension {} does not match grid dimension {}",
            model.dimension,
            grid.dimension()
        )));
    }
    Ok(())
}

/// Assembles the generator for per-grid-node diffusion `a` (row-major) and
/// drift `b` tables.
pub(crate) fn assemble(
    grid: &Grid,
    active: &Arc<ActiveSet>,
    control_index: usize,
    diffusion: &[f64],
    drift: &[f64],
) -> Result<GeneratorMatrix> {
    let d = grid.dimension();
    let h = grid.spacing();
    let h2 = h * h;
    let n = grid.nodes_per_axis() as isize;
    let bc = active.bc();
    let mut rows = Vec::with_capacity(active.len());
    let mut couplings: Vec<([isize; 2], f64)> = Vec::with_capacity(9);

    for i in 0..active.len() {
        let g = active.grid_indices()[i];
        let a = &diffusion[g * d * d..(g + 1) * d * d];
        let b = &drift[g * d..(g + 1) * d];
        couplings.clear();

        for k in 0..d {
            let akk = a[k * d + k];
            if !(akk > 0.0) {
                return Err(Error::Ellipticity {
                    node: g,
                    axis: k,
                    value: akk,
                });
            }
        }
        let mut axial = [0.0f64; 2];
        for k in 0..d {
            axial[k] = a[k * d + k];
        }
        if d == 2 {
            let a12 = 0.5 * (a[1] + a[2]);
            let bound = a[0].min(a[3]);
            if a12.abs() > bound * (1.0 + 1e-12) {
                return Err(Error::NonMonotoneScheme {
                    node: g,
                    a12,
                    bound,
                });
            }
            if a12 != 0.0 {
                let w = a12.abs() / (2.0 * h2);
                if a12 > 0.0 {
                    couplings.push(([1, 1], w));
                    couplings.push(([-1, -1], w));
                } else {
                    couplings.push(([1, -1], w));
                    couplings.push(([-1, 1], w));
                }
                axial[0] -= a12.abs();
                axial[1] -= a12.abs();
            }
        }
        for k in 0..d {
            let mut plus = [0isize; 2];
            plus[k] = 1;
            let minus = [-plus[0], -plus[1]];
            let w = axial[k] / (2.0 * h2);
            let (mut wp, mut wm) = (w, w);
            if b[k] > 0.0 {
                wp += b[k] / h;
            } else if b[k] < 0.0 {
                wm += -b[k] / h;
            }
            if wp > 0.0 {
                couplings.push((plus, wp));
            }
            if wm > 0.0 {
                couplings.push((minus, wm));
            }
        }

        let base = active.grid_multi(i);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(couplings.len() + 1);
        let mut total = 0.0;
        for &(off, w) in &couplings {
            total += w;
            let mut t = [base[0] + off[0], base[1] + off[1]];
            match bc {
                BoundaryCondition::Neumann => {
                    for tk in t.iter_mut().take(d) {
                        if *tk < 0 {
                            *tk = -*tk;
                        } else if *tk > n - 1 {
                            *tk = 2 * (n - 1) - *tk;
                        }
                    }
                }
                BoundaryCondition::Dirichlet => {}
            }
            if let Some(j) = active.from_grid_multi(t) {
                row.push((j, w));
            }
        }
        row.push((i, -total));
        rows.push(row);
    }
    Ok(GeneratorMatrix {
        matrix: CsrMatrix::from_rows(active.len(), rows),
        bc,
        control_index,
        active: active.clone(),
    })
}

/// Generator `A_ξ` of control `control_index` on `grid`.
pub fn build_generator(
    model: &DiffusionModel,
    grid: &Grid,
    control_index: usize,
    bc: BoundaryCondition,
) -> Result<GeneratorMatrix> {
    check_dims(model, grid)?;
    if control_index >= model.num_controls() {
        return Err(Error::InvalidArgument(format!(
            "control index {control_index} out of range ({} controls)",
            model.num_controls()
        )));
    }
    let tables = FieldTables::tabulate(model, grid)?;
    let active = Arc::new(ActiveSet::new(grid, bc));
    assemble(grid, &active, control_index, &tables.diffusion, &tables.drift[control_index])
}

/// `(GV)(x) = opt_ξ [(A_ξ V)(x) + c(x, ξ) V(x)]` with the per-node optimizer;
/// ties go to the lowest control index.
pub fn apply_semilinear(
    generators: &[GeneratorMatrix],
    rewards: &[Vec<f64>],
    v: &[f64],
    direction: Direction,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if generators.is_empty() || generators.len() != rewards.len() {
        return Err(Error::InvalidArgument(format!(
            "{} generators but {} reward tables",
            generators.len(),
            rewards.len()
        )));
    }
    let n = generators[0].len();
    if v.len() != n || generators.iter().any(|g| g.len() != n) || rewards.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("generator, reward and vector sizes differ".into()));
    }
    if let Some(i) = v.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "V must be strictly positive; V[{i}] = {}",
            v[i]
        )));
    }
    let mut out = vec![0.0; n];
    let mut policy = vec![0usize; n];
    for i in 0..n {
        let mut best = generators[0].matrix.row_dot(i, v) + rewards[0][i] * v[i];
        let mut arg = 0;
        for (k, (g, c)) in generators.iter().zip(rewards).enumerate().skip(1) {
            let val = g.matrix.row_dot(i, v) + c[i] * v[i];
            if direction.improves(val, best) {
                best = val;
                arg = k;
            }
        }
        out[i] = best;
        policy[i] = arg;
    }
    Ok((out, policy))
}

/// All control generators and active-node rewards of one (model, grid, bc).
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub direction: Direction,
    pub generators: Vec<GeneratorMatrix>,
    pub rewards: Vec<Vec<f64>>,
    pub tables: FieldTables,
}

impl Discretization {
    pub fn new(model: &DiffusionModel, grid: &Grid, bc: BoundaryCondition) -> Result<Self> {
        let tables = FieldTables::tabulate(model, grid)?;
        let active = Arc::new(ActiveSet::new(grid, bc));
        let generators = (0..model.num_controls())
            .into_par_iter()
            .map(|k| assemble(grid, &active, k, &tables.diffusion, &tables.drift[k]))
            .collect::<Result<Vec<_>>>()?;
        let rewards = (0..model.num_controls())
            .map(|k| tables.active_rewards(k, &active))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            direction: model.direction,
            generators,
            rewards,
            tables,
        })
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.generators[0].bc
    }

    pub fn active(&self) -> &ActiveSet {
        &self.generators[0].active
    }

    pub fn len(&self) -> usize {
        self.generators[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_controls(&self) -> usize {
        self.generators.len()
    }

    /// Same generators with the reward tables replaced.
    pub fn with_rewards(&self, rewards: Vec<Vec<f64>>) -> Self {
        assert_eq!(rewards.len(), self.generators.len());
        let mut out = self.clone();
        out.rewards = rewards;
        out
    }

    /// Generator of the stationary Markov policy: row `x` from `A_{policy(x)}`.
    pub fn policy_generator(&self, policy: &[usize]) -> GeneratorMatrix {
        assert_eq!(policy.len(), self.len());
        let rows = policy
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let (cols, vals) = self.generators[k].matrix.row(i);
                cols.iter().copied().zip(vals.iter().copied()).collect()
            })
            .collect();
        GeneratorMatrix {
            matrix: CsrMatrix::from_rows(self.len(), rows),
            bc: self.bc(),
            control_index: usize::MAX,
            active: self.generators[0].active.clone(),
        }
    }

    pub fn policy_rewards(&self, policy: &[usize]) -> Vec<f64> {
        policy.iter().enumerate().map(|(i, &k)| self.rewards[k][i]).collect()
    }

    pub fn apply(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
        apply_semilinear(&self.generators, &self.rewards, v, self.direction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_instance;

    fn one_d(a: f64, b: f64, h: f64, n: usize, bc: BoundaryCondition) -> GeneratorMatrix {
        let r = h * (n - 1) as f64 / 2.0;
        let grid = build_grid(1, r, n).unwrap();
        let model = DiffusionModel::new("t", 1, vec![vec![0.0]], Direction::Maximize, 0.0)
            .unwrap()
            .with_drift(move |_, _, o| o[0] = b)
            .with_sigma(move |_, o| o[0] = a.sqrt());
        build_generator(&model, &grid, 0, bc).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(1, 1.0, 5).unwrap();
        let xs: Vec<f64> = (0..5).map(|i| g.node(i)[0]).collect();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.center_index(), 2);
        assert_eq!(g.boundary_mask(), &[true, false, false, false, true]);

        let g2 = build_grid(2, 1.0, 3).unwrap();
        assert_eq!(g2.num_nodes(), 9);
        assert_eq!(g2.node(g2.center_index()), &[0.0, 0.0]);
        assert_eq!(g2.node(1), &[0.0, -1.0]);
        assert_eq!(g2.node(3), &[-1.0, 0.0]);
        assert!(!g2.is_boundary(4));
        assert_eq!(g2.boundary_mask().iter().filter(|&&b| b).count(), 8);

        assert!(matches!(build_grid(1, 1.0, 4), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_grid(1, 0.0, 5), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_grid(3, 1.0, 5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn nearest_node_clamps() {
        let g = build_grid(2, 1.0, 5).unwrap();
        assert_eq!(g.node(g.nearest_node(&[0.26, -0.74])), &[0.5, -0.5]);
        assert_eq!(g.node(g.nearest_node(&[9.0, -9.0])), &[1.0, -1.0]);
    }

    #[test]
    fn interior_stencil_rows() {
        let gen = one_d(2.0, 0.0, 1.0, 5, BoundaryCondition::Neumann);
        assert!((gen.matrix.get(2, 1) - 1.0).abs() < 1e-12);
        assert!((gen.matrix.get(2, 2) + 2.0).abs() < 1e-12);
        assert!((gen.matrix.get(2, 3) - 1.0).abs() < 1e-12);

        let gen = one_d(2.0, 2.0, 0.5, 5, BoundaryCondition::Neumann);
        assert!((gen.matrix.get(2, 1) - 4.0).abs() < 1e-12);
        assert!((gen.matrix.get(2, 2) + 12.0).abs() < 1e-12);
        assert!((gen.matrix.get(2, 3) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn neumann_boundary_row_reflects() {
        let gen = one_d(2.0, 0.0, 1.0, 5, BoundaryCondition::Neumann);
        assert_eq!(gen.matrix.row(0).0, &[0, 1]);
        assert!((gen.matrix.get(0, 0) + 2.0).abs() < 1e-12);
        assert!((gen.matrix.get(0, 1) - 2.0).abs() < 1e-12);
        gen.check_invariants(1e-12).unwrap();
    }

    #[test]
    fn dirichlet_deficit_only_next_to_boundary() {
        let gen = one_d(2.0, 1.0, 0.5, 9, BoundaryCondition::Dirichlet);
        assert_eq!(gen.len(), 7);
        let sums = gen.matrix.row_sums();
        for (i, s) in sums.iter().enumerate() {
            if i == 0 || i == 6 {
                assert!(*s < -1e-12);
            } else {
                assert!(s.abs() < 1e-12);
            }
        }
        gen.check_invariants(1e-12).unwrap();
    }

    #[test]
    fn cross_term_splitting_and_refusal() {
        let grid = build_grid(2, 1.0, 5).unwrap();
        let m = |a12: f64| {
            DiffusionModel::new("t", 2, vec![vec![0.0]], Direction::Maximize, 0.0)
                .unwrap()
                .with_sigma(move |_, o| {
                    // σ = chol([[1, a12], [a12, 1]])
                    o[0] = 1.0;
                    o[1] = 0.0;
                    o[2] = a12;
                    o[3] = (1.0 - a12 * a12).max(0.0).sqrt();
                })
        };
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            let g = build_generator(&m(0.4), &grid, 0, bc).unwrap();
            g.check_invariants(1e-12).unwrap();
            let g = build_generator(&m(-0.4), &grid, 0, bc).unwrap();
            g.check_invariants(1e-12).unwrap();
        }
        let g = build_generator(&m(0.4), &grid, 0, BoundaryCondition::Neumann).unwrap();
        let c = grid.center_index();
        let h2 = 0.25;
        assert!((g.matrix.get(c, c + 6) - 0.4 / (2.0 * h2)).abs() < 1e-12);
        assert_eq!(g.matrix.get(c, c + 4), 0.0);
        assert!((g.matrix.get(c, c + 1) - 0.6 / (2.0 * h2)).abs() < 1e-12);

        let sigma_big = DiffusionModel::new("t", 2, vec![vec![0.0]], Direction::Maximize, 0.0)
            .unwrap()
            .with_sigma(|_, o| {
                o[0] = 0.5;
                o[1] = 0.0;
                o[2] = 1.0;
                o[3] = 0.1;
            });
        assert!(matches!(
            build_generator(&sigma_big, &grid, 0, BoundaryCondition::Neumann),
            Err(Error::NonMonotoneScheme { .. })
        ));
    }

    #[test]
    fn zero_diffusion_is_refused() {
        let grid = build_grid(1, 1.0, 5).unwrap();
        let m = DiffusionModel::new("t", 1, vec![vec![0.0]], Direction::Maximize, 0.0)
            .unwrap()
            .with_sigma(|_, o| o[0] = 0.0);
        assert!(matches!(
            build_generator(&m, &grid, 0, BoundaryCondition::Neumann),
            Err(Error::Ellipticity { axis: 0, .. })
        ));
    }

    #[test]
    fn semilinear_on_constants() {
        let grid = build_grid(1, 4.0, 41).unwrap();
        let m = builtin_instance("const").unwrap();
        let disc = Discretization::new(&m, &grid, BoundaryCondition::Neumann).unwrap();
        let (gv, pol) = disc.apply(&vec![1.0; disc.len()]).unwrap();
        assert!(gv.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(pol.iter().all(|&k| k == 0));

        let m = builtin_instance("ctrl-1d").unwrap();
        let disc = Discretization::new(&m, &grid, BoundaryCondition::Neumann).unwrap();
        let (gv, pol) = disc.apply(&vec![1.0; disc.len()]).unwrap();
        for (i, (&v, &k)) in gv.iter().zip(&pol).enumerate() {
            let x = grid.node(i)[0];
            assert!((v + (x - 1.0).powi(2)).abs() < 1e-9);
            assert_eq!(k, 1);
        }
        let mut bad = vec![1.0; disc.len()];
        bad[3] = 0.0;
        assert!(matches!(disc.apply(&bad), Err(Error::InvalidArgument(_))));
    }
}
