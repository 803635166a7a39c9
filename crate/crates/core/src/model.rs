//! Controlled diffusion models and finite-grid checks of their standing
//! assumptions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretize::{BoundaryCondition, Grid};
use crate::{Error, Result};

pub type DriftFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type SigmaFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type RewardFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Whether the controller maximizes the risk-sensitive reward or minimizes
/// the risk-sensitive penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `candidate` should replace `incumbent` under this direction.
    #[inline]
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Maximize => candidate > incumbent,
            Direction::Minimize => candidate < incumbent,
        }
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["const", "ou-quad", "ctrl-1d", "min-1d"];

/// Drift `b(x, ξ)`, dispersion `σ(x)` and running reward `c(x, ξ)` over a
/// finite ordered control set.
///
/// Field closures write into caller buffers so that path simulation does not
/// allocate per step. `sigma` is row-major `d × d`.
#[derive(Clone)]
pub struct DiffusionModel {
    pub name: String,
    pub dimension: usize,
    pub controls: Vec<Vec<f64>>,
    pub reward_upper_bound: f64,
    pub direction: Direction,
    drift: DriftFn,
    sigma: SigmaFn,
    reward: RewardFn,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("controls", &self.controls)
            .field("reward_upper_bound", &self.reward_upper_bound)
            .field("direction", &self.direction)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    /// A model with zero drift, identity dispersion and zero reward; use the
    /// `with_*` methods to set the fields.
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        controls: Vec<Vec<f64>>,
        direction: Direction,
        reward_upper_bound: f64,
    ) -> Result<Self> {
        if !(1..=2).contains(&dimension) {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        if controls.is_empty() {
            return Err(Error::InvalidArgument("control set is empty".into()));
        }
        Ok(Self {
            name: name.into(),
            dimension,
            controls,
            reward_upper_bound,
            direction,
            drift: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            sigma: Arc::new(move |_, out: &mut [f64]| {
                out.fill(0.0);
                for i in 0..dimension {
                    out[i * dimension + i] = 1.0;
                }
            }),
            reward: Arc::new(|_, _| 0.0),
        })
    }

    pub fn with_drift(
        mut self,
        f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.drift = Arc::new(f);
        self
    }

    pub fn with_sigma(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma = Arc::new(f);
        self
    }

    pub fn with_reward(mut self, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.reward = Arc::new(f);
        self
    }

    /// Replaces the reward by `g(x, ξ, c(x, ξ))`. The declared upper bound is
    /// left to the caller.
    pub fn map_reward(
        mut self,
        g: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let inner = self.reward.clone();
        self.reward = Arc::new(move |x, u| g(x, u, inner(x, u)));
        self
    }

    /// `c + k`, with the upper bound shifted accordingly.
    pub fn shifted_reward(self, k: f64) -> Self {
        let bound = self.reward_upper_bound + k;
        let mut m = self.map_reward(move |_, _, c| c + k);
        m.reward_upper_bound = bound;
        m
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], control: usize, out: &mut [f64]) {
        (self.drift)(x, &self.controls[control], out)
    }

    pub fn drift(&self, x: &[f64], control: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.drift_into(x, control, &mut out);
        out
    }

    #[inline]
    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }

    pub fn sigma(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension * self.dimension];
        self.sigma_into(x, &mut out);
        out
    }

    /// `a = σ σᵀ`, row-major.
    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dimension;
        let s = self.sigma(x);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
            }
        }
        a
    }

    #[inline]
    pub fn reward(&self, x: &[f64], control: usize) -> f64 {
        (self.reward)(x, &self.controls[control])
    }
}

/// Returns one of the shipped benchmark models.
pub fn builtin_instance(name: &str) -> Result<DiffusionModel> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let model = match name {
        "const" => DiffusionModel::new(name, 1, vec![vec![0.0]], Direction::Maximize, 0.5)?
            .with_drift(|x, _, out| out[0] = -x[0])
            .with_sigma(move |_, out| out[0] = sqrt2)
            .with_reward(|_, _| 0.5),
        "ou-quad" => {
            let (alpha, kappa) = (1.0, 2.0);
            DiffusionModel::new(name, 1, vec![vec![0.0]], Direction::Maximize, 0.0)?
                .with_drift(move |x, _, out| out[0] = -alpha * x[0])
                .with_sigma(move |_, out| out[0] = sqrt2)
                .with_reward(move |x, _| -kappa * x[0] * x[0])
        }
        "ctrl-1d" => DiffusionModel::new(
            name,
            1,
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            Direction::Maximize,
            0.0,
        )?
        .with_drift(|x, u, out| out[0] = u[0] - x[0])
        .with_sigma(move |_, out| out[0] = sqrt2)
        .with_reward(|x, u| -(x[0] - 1.0).powi(2) - 0.1 * u[0] * u[0]),
        "min-1d" => DiffusionModel::new(
            name,
            1,
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            Direction::Minimize,
            f64::INFINITY,
        )?
        .with_drift(|_, u, out| out[0] = u[0])
        .with_sigma(move |_, out| out[0] = sqrt2)
        .with_reward(|x, u| x[0] * x[0] + u[0] * u[0]),
        _ => {
            return Err(Error::NotFound {
                name: name.to_string(),
                valid: BUILTIN_NAMES.join(", "),
            })
        }
    };
    Ok(model)
}

/// One term `coef · Π xᵢ^pᵢ · Π ξⱼ^qⱼ`. Missing exponents are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub x: Vec<u32>,
    #[serde(default)]
    pub u: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<Monomial>);

impl Polynomial {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|m| {
                let px: f64 = m.x.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product();
                let pu: f64 = m.u.iter().zip(u).map(|(&p, &v)| v.powi(p as i32)).product();
                m.coef * px * pu
            })
            .sum()
    }

    fn check(&self, dimension: usize, control_dim: usize, what: &str) -> Result<()> {
        for m in &self.0 {
            if m.x.len() > dimension || m.u.len() > control_dim {
                return Err(Error::InvalidArgument(format!(
                    "{what}: monomial exponents {:?}/{:?} exceed dimension {dimension}/{control_dim}",
                    m.x, m.u
                )));
            }
        }
        Ok(())
    }
}

/// Model given by polynomial coefficient tables: one polynomial per drift
/// component, one per row-major entry of `σ` (the `u` exponents are ignored
/// there), and one for the reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    #[serde(default = "default_poly_name")]
    pub name: String,
    pub dimension: usize,
    pub controls: Vec<Vec<f64>>,
    #[serde(default)]
    pub direction: Direction,
    pub reward_upper_bound: f64,
    pub drift: Vec<Polynomial>,
    pub sigma: Vec<Polynomial>,
    pub reward: Polynomial,
}

fn default_poly_name() -> String {
    "poly".to_string()
}

impl PolynomialModel {
    pub fn build(&self) -> Result<DiffusionModel> {
        let d = self.dimension;
        if self.drift.len() != d {
            return Err(Error::InvalidArgument(format!(
                "drift needs {d} component polynomials, got {}",
                self.drift.len()
            )));
        }
        if self.sigma.len() != d * d {
            return Err(Error::InvalidArgument(format!(
                "sigma needs {} entries, got {}",
                d * d,
                self.sigma.len()
            )));
        }
        let control_dim = self.controls.first().map_or(0, Vec::len);
        if self.controls.iter().any(|u| u.len() != control_dim) {
            return Err(Error::InvalidArgument("controls have mixed lengths".into()));
        }
        for p in &self.drift {
            p.check(d, control_dim, "drift")?;
        }
        for p in &self.sigma {
            p.check(d, control_dim, "sigma")?;
        }
        self.reward.check(d, control_dim, "reward")?;
        let drift = self.drift.clone();
        let sigma = self.sigma.clone();
        let reward = self.reward.clone();
        Ok(DiffusionModel::new(
            self.name.clone(),
            d,
            self.controls.clone(),
            self.direction,
            self.reward_upper_bound,
        )?
        .with_drift(move |x, u, out| {
            for (o, p) in out.iter_mut().zip(&drift) {
                *o = p.eval(x, u);
            }
        })
        .with_sigma(move |x, out| {
            for (o, p) in out.iter_mut().zip(&sigma) {
                *o = p.eval(x, &[]);
            }
        })
        .with_reward(move |x, u| reward.eval(x, u)))
    }
}

/// Which case of the gradient-growth hypothesis a finite-grid proxy supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum A42Case {
    /// `−c` inf-compact: shell maxima of `max_ξ c` strictly decrease outward.
    InfCompactC,
    /// `⟨b, x⟩⁻ / |x|²` on the outer shell is zero or strictly below its
    /// mid-radius value.
    SubquadraticInwardDrift,
    /// `H / ((1 + |φ*|)(1 + |c|))` on the outer shell does not exceed its
    /// inner-region maximum.
    BoundedRatio,
    None,
}

/// Finite-grid proxies for the structural hypotheses on a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub nodes_sampled: usize,
    pub ellipticity_floor: f64,
    pub ellipticity_ceiling: f64,
    /// Least `C₀` with `|b|² + ‖σ‖² ≤ C₀ (1 + |x|²)` on the grid.
    pub growth_constant: f64,
    /// Least-squares slope of `log(1 + max_ξ |c|)` against `log(1 + |x|)` on
    /// the outer half of the grid.
    pub reward_growth_exponent: f64,
    pub max_reward: f64,
    pub reward_bound_holds: bool,
    /// Nodes with `‖x‖∞ ≥ shell_inner_radius` form the outer shell.
    pub shell_inner_radius: f64,
    pub shell_nodes: usize,
    pub rho_hat: f64,
    pub near_monotone_margin: f64,
    pub a42_case: A42Case,
    /// Minimize runs only: log-log slope of `max_ξ |b|` on the outer half.
    pub a51_theta: Option<f64>,
    /// Minimize runs only: half the log-log slope of `max_ξ |c|`.
    pub a51_cost_theta: Option<f64>,
    /// Minimize runs only: `inf` over the outer shell of `min_ξ c` minus
    /// `rho_hat`; positive when `c` is coercive relative to the estimate.
    pub coercivity_margin: Option<f64>,
}

const SHELL_FRACTION: f64 = 0.9;
const MID_FRACTION: f64 = 0.5;

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Eigenvalues of a symmetric row-major `d × d` matrix (`d ≤ 2`).
pub(crate) fn sym_eigenvalues(a: &[f64], d: usize) -> (f64, f64) {
    if d == 1 {
        return (a[0], a[0]);
    }
    let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r).powi(2) + q * q).sqrt();
    (mean - rad, mean + rad)
}

/// Samples every grid node and control and reports the finite-radius proxies
/// of the growth, ellipticity, near-monotonicity and gradient hypotheses.
///
/// `rho_hat` is the caller's estimate of the principal eigenvalue (or of the
/// optimal penalty for minimize runs).
pub fn check_assumptions(model: &DiffusionModel, grid: &Grid, rho_hat: f64) -> Result<AssumptionReport> {
    if model.dimension != grid.dimension() {
        return Err(Error::InvalidArgument(format!(
            "model dimension {} does not match grid dimension {}",
            model.dimension,
            grid.dimension()
        )));
    }
    let d = model.dimension;
    let r = grid.radius();
    let shell_inner = SHELL_FRACTION * r * (1.0 - 1e-9);
    let mid_inner = MID_FRACTION * r * (1.0 - 1e-9);

    let mut floor = f64::INFINITY;
    let mut ceiling = f64::NEG_INFINITY;
    let mut growth: f64 = 0.0;
    let mut max_reward = f64::NEG_INFINITY;
    let mut max_c_all = f64::NEG_INFINITY;
    let mut max_c_mid = f64::NEG_INFINITY;
    let mut max_c_shell = f64::NEG_INFINITY;
    let mut min_c_shell = f64::INFINITY;
    let mut inward_mid: f64 = 0.0;
    let mut inward_shell: f64 = 0.0;
    let mut shell_nodes = 0;
    let mut c_growth = Vec::new();
    let mut b_growth = Vec::new();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];

    for node in 0..grid.num_nodes() {
        let x = grid.node(node);
        let bad = |field: &'static str| Error::Evaluation {
            field,
            node,
            coords: x.to_vec(),
        };
        model.sigma_into(x, &mut s);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(bad("sigma"));
        }
        let a = model.diffusion(x);
        let (lo, hi) = sym_eigenvalues(&a, d);
        floor = floor.min(lo);
        ceiling = ceiling.max(hi);
        let sigma_hs2: f64 = s.iter().map(|v| v * v).sum();

        let xs = sup_norm(x);
        let xe = euclid(x);
        let in_shell = xs >= shell_inner;
        let in_mid = xs >= mid_inner;
        if in_shell {
            shell_nodes += 1;
        }
        let mut max_c = f64::NEG_INFINITY;
        let mut min_c = f64::INFINITY;
        let mut max_abs_c: f64 = 0.0;
        let mut max_abs_b: f64 = 0.0;
        for k in 0..model.num_controls() {
            model.drift_into(x, k, &mut b);
            if b.iter().any(|v| !v.is_finite()) {
                return Err(bad("drift"));
            }
            let c = model.reward(x, k);
            if !c.is_finite() {
                return Err(bad("reward"));
            }
            let b2: f64 = b.iter().map(|v| v * v).sum();
            growth = growth.max((b2 + sigma_hs2) / (1.0 + xe * xe));
            max_c = max_c.max(c);
            min_c = min_c.min(c);
            max_abs_c = max_abs_c.max(c.abs());
            max_abs_b = max_abs_b.max(b2.sqrt());
            if xe > 0.0 {
                let inner: f64 = b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
                let q = (-inner).max(0.0) / (xe * xe);
                if in_shell {
                    inward_shell = inward_shell.max(q);
                }
                if in_mid {
                    inward_mid = inward_mid.max(q);
                }
            }
        }
        max_reward = max_reward.max(max_c);
        max_c_all = max_c_all.max(max_c);
        if in_mid {
            max_c_mid = max_c_mid.max(max_c);
            c_growth.push(((1.0 + xe).ln(), (1.0 + max_abs_c).ln()));
            if max_abs_b > 0.0 && xe > 0.0 {
                b_growth.push((xe.ln(), max_abs_b.ln()));
            }
        }
        if in_shell {
            max_c_shell = max_c_shell.max(max_c);
            min_c_shell = min_c_shell.min(min_c);
        }
    }

    let case = if max_c_shell < max_c_mid && max_c_mid < max_c_all {
        A42Case::InfCompactC
    } else if inward_shell == 0.0 || inward_shell < inward_mid * (1.0 - 1e-6) {
        A42Case::SubquadraticInwardDrift
    } else if bounded_ratio_proxy(model, grid).unwrap_or(false) {
        A42Case::BoundedRatio
    } else {
        A42Case::None
    };

    let minimize = model.direction == Direction::Minimize;
    Ok(AssumptionReport {
        nodes_sampled: grid.num_nodes(),
        ellipticity_floor: floor,
        ellipticity_ceiling: ceiling,
        growth_constant: growth,
        reward_growth_exponent: slope(&c_growth),
        max_reward,
        reward_bound_holds: max_reward <= model.reward_upper_bound,
        shell_inner_radius: SHELL_FRACTION * r,
        shell_nodes,
        rho_hat,
        near_monotone_margin: rho_hat - max_c_shell,
        a42_case: case,
        a51_theta: minimize.then(|| slope(&b_growth)),
        a51_cost_theta: minimize.then(|| 0.5 * slope(&c_growth)),
        coercivity_margin: minimize.then(|| min_c_shell - rho_hat),
    })
}

/// Solves the Neumann problem on `grid` and compares the outer-shell maximum
/// of `H / ((1 + |φ*|)(1 + |c|))` against its maximum on `‖x‖∞ ≤ r/2`.
fn bounded_ratio_proxy(model: &DiffusionModel, grid: &Grid) -> Result<bool> {
    use crate::eigensolve::solve_semilinear;
    use crate::twist::continuum_entropy;

    let sol = solve_semilinear(model, grid, BoundaryCondition::Neumann, 1e-9)?;
    let active = sol.discretization.active();
    let gauge: Vec<f64> = sol.pair.vector.iter().map(|v| v.ln()).collect();
    let h = continuum_entropy(model, grid, active, &gauge);
    let r = grid.radius();
    let mut outer: f64 = 0.0;
    let mut inner: f64 = 0.0;
    for (i, &g) in active.grid_indices().iter().enumerate() {
        let x = grid.node(g);
        let max_abs_c = (0..model.num_controls())
            .map(|k| model.reward(x, k).abs())
            .fold(0.0, f64::max);
        let ratio = h[i] / ((1.0 + gauge[i].abs()) * (1.0 + max_abs_c));
        let xs = sup_norm(x);
        if xs >= SHELL_FRACTION * r * (1.0 - 1e-9) {
            outer = outer.max(ratio);
        } else if xs <= MID_FRACTION * r {
            inner = inner.max(ratio);
        }
    }
    Ok(outer <= inner.max(1e-12))
}
