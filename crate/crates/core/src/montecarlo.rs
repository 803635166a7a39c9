//! Euler–Maruyama estimates of the risk-sensitive value, directly and under
//! the ground-state twist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{ActiveSet, Grid};
use crate::eigensolve::EigenPair;
use crate::model::DiffusionModel;
use crate::twist::active_gradient;
use crate::{Error, Result};

/// Paths with `|X|` beyond this are reported as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub start: Vec<f64>,
    /// Mirror reflection at `|x_i| = boundary_radius` when set.
    #[serde(default)]
    pub boundary_radius: Option<f64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 10.0 * self.dt) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must be at least 10·dt = {}",
                self.horizon,
                10.0 * self.dt
            )));
        }
        if self.paths < 100 {
            return Err(Error::InvalidArgument(format!("need at least 100 paths, got {}", self.paths)));
        }
        if !(1..=2).contains(&self.start.len()) || self.start.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("start point must be finite with 1 or 2 coordinates".into()));
        }
        if let Some(r) = self.boundary_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("boundary radius must be positive, got {r}")));
            }
            if self.start.iter().any(|v| v.abs() > r) {
                return Err(Error::InvalidArgument("start point lies outside the reflecting box".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// `steps · dt`, the horizon actually simulated.
    pub fn effective_horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Direct,
    Twisted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub effective_sample_size: f64,
    pub estimator: Estimator,
    pub paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

/// Control per grid node, looked up at the nearest node (clamped to the box).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    dimension: usize,
    radius: f64,
    spacing: f64,
    per_axis: usize,
    controls: Vec<usize>,
}

impl GridPolicy {
    /// From a policy on the active nodes; inactive (Dirichlet boundary) nodes
    /// copy their nearest active neighbour.
    pub fn from_active(grid: &Grid, active: &ActiveSet, policy: &[usize]) -> Result<Self> {
        if policy.len() != active.len() {
            return Err(Error::InvalidArgument(format!(
                "policy has {} entries for {} active nodes",
                policy.len(),
                active.len()
            )));
        }
        let n = grid.nodes_per_axis();
        let offset = (n - active.per_axis()) / 2;
        let hi = active.per_axis() - 1;
        let controls = (0..grid.num_nodes())
            .map(|g| {
                let m = grid.multi_index(g);
                let mut a = [0usize; 2];
                for k in 0..grid.dimension() {
                    a[k] = m[k].saturating_sub(offset).min(hi);
                }
                policy[active.active_flat(a)]
            })
            .collect();
        Ok(Self::with_controls(grid, controls))
    }

    pub fn constant(grid: &Grid, control: usize) -> Self {
        Self::with_controls(grid, vec![control; grid.num_nodes()])
    }

    /// Control at every grid node, in grid order.
    pub fn with_controls(grid: &Grid, controls: Vec<usize>) -> Self {
        assert_eq!(controls.len(), grid.num_nodes());
        Self {
            dimension: grid.dimension(),
            radius: grid.radius(),
            spacing: grid.spacing(),
            per_axis: grid.nodes_per_axis(),
            controls,
        }
    }

    pub fn controls(&self) -> &[usize] {
        &self.controls
    }

    #[inline]
    pub fn lookup(&self, x: &[f64]) -> usize {
        let top = (self.per_axis - 1) as f64;
        let mut flat = 0;
        let mut stride = 1;
        for &xi in x.iter().take(self.dimension) {
            let j = ((xi + self.radius) / self.spacing).round().clamp(0.0, top) as usize;
            flat += j * stride;
            stride *= self.per_axis;
        }
        self.controls[flat]
    }
}

/// Piecewise-linear `φ` and `∇φ` over the hull of the active nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeField {
    dimension: usize,
    lower: f64,
    spacing: f64,
    per_axis: usize,
    values: Vec<f64>,
    /// `d` components per node.
    gradient: Vec<f64>,
}

impl GaugeField {
    pub fn new(grid: &Grid, active: &ActiveSet, gauge: &[f64]) -> Result<Self> {
        if gauge.len() != active.len() {
            return Err(Error::InvalidArgument(format!(
                "gauge has {} entries for {} active nodes",
                gauge.len(),
                active.len()
            )));
        }
        let offset = (grid.nodes_per_axis() - active.per_axis()) / 2;
        Ok(Self {
            dimension: grid.dimension(),
            lower: grid.axis_coordinate(offset),
            spacing: grid.spacing(),
            per_axis: active.per_axis(),
            values: gauge.to_vec(),
            gradient: active_gradient(grid, active, gauge),
        })
    }

    pub fn from_pair(grid: &Grid, active: &ActiveSet, pair: &EigenPair) -> Result<Self> {
        Self::new(grid, active, &pair.gauge())
    }

    pub fn upper(&self) -> f64 {
        self.lower + (self.per_axis - 1) as f64 * self.spacing
    }

    /// Cell corner indices and weights, or `None` outside the hull.
    #[inline]
    fn locate(&self, x: &[f64]) -> Option<([usize; 2], [f64; 2])> {
        let mut base = [0usize; 2];
        let mut t = [0.0f64; 2];
        let cells = (self.per_axis - 1) as f64;
        for k in 0..self.dimension {
            let s = (x[k] - self.lower) / self.spacing;
            if !(s >= -1e-9 && s <= cells + 1e-9) {
                return None;
            }
            let s = s.clamp(0.0, cells);
            let i = (s.floor() as usize).min(self.per_axis.saturating_sub(2));
            base[k] = i;
            t[k] = s - i as f64;
        }
        Some((base, t))
    }

    #[inline]
    fn blend(&self, base: [usize; 2], t: [f64; 2], field: &[f64], stride: usize, comp: usize) -> f64 {
        let at = |i0: usize, i1: usize| field[(i1 * self.per_axis + i0) * stride + comp];
        if self.dimension == 1 {
            (1.0 - t[0]) * at(base[0], 0) + t[0] * at(base[0] + 1, 0)
        } else {
            let (i, j) = (base[0], base[1]);
            (1.0 - t[0]) * (1.0 - t[1]) * at(i, j)
                + t[0] * (1.0 - t[1]) * at(i + 1, j)
                + (1.0 - t[0]) * t[1] * at(i, j + 1)
                + t[0] * t[1] * at(i + 1, j + 1)
        }
    }

    pub fn value(&self, x: &[f64]) -> Option<f64> {
        let (b, t) = self.locate(x)?;
        Some(self.blend(b, t, &self.values, 1, 0))
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self.locate(x) {
            Some((b, t)) => {
                for (k, o) in out.iter_mut().enumerate().take(self.dimension) {
                    *o = self.blend(b, t, &self.gradient, self.dimension, k);
                }
                true
            }
            None => false,
        }
    }
}

/// Per-path outputs: `∫c dt` (left endpoint) and the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSamples {
    pub integrals: Vec<f64>,
    pub finals: Vec<Vec<f64>>,
}

impl PathSamples {
    /// CSV with header `path,integral,x1[,x2]`.
    pub fn to_csv(&self) -> String {
        let d = self.finals.first().map_or(1, Vec::len);
        let mut out = String::from("path,integral");
        for k in 0..d {
            out.push_str(&format!(",x{}", k + 1));
        }
        out.push('\n');
        for (p, (i, x)) in self.integrals.iter().zip(&self.finals).enumerate() {
            out.push_str(&format!("{p},{i}"));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

#[inline]
fn reflect(x: &mut [f64], r: f64) {
    for v in x.iter_mut() {
        while v.abs() > r {
            *v = if *v > r { 2.0 * r - *v } else { -2.0 * r - *v };
        }
    }
}

struct Recorder<'a> {
    times: &'a [usize],
    rho: f64,
    gauge: &'a GaugeField,
    phi0: f64,
}

struct PathOut {
    sum: f64,
    last: [f64; 2],
    /// `exp(∫(c − ρ) + φ(X_t) − φ(x₀))` at the recorded steps.
    marks: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    model: &DiffusionModel,
    policy: &GridPolicy,
    twist: Option<&GaugeField>,
    rec: Option<&Recorder>,
    cfg: &SimConfig,
    path: usize,
) -> Result<PathOut> {
    let d = model.dimension;
    let mut rng = path_rng(cfg.seed, path);
    let sq = cfg.dt.sqrt();
    let mut x = [0.0f64; 2];
    x[..d].copy_from_slice(&cfg.start);
    let mut b = [0.0f64; 2];
    let mut s = [0.0f64; 4];
    let mut g = [0.0f64; 2];
    let mut z = [0.0f64; 2];
    let mut sum = 0.0;
    let mut marks = Vec::new();
    let mut next_mark = 0;
    let steps = cfg.steps();
    for step in 0..=steps {
        if let Some(r) = rec {
            if next_mark < r.times.len() && r.times[next_mark] == step {
                let phi = r.gauge.value(&x[..d]).ok_or_else(|| Error::Extrapolation {
                    path,
                    position: x[..d].to_vec(),
                })?;
                let t = step as f64 * cfg.dt;
                marks.push((cfg.dt * sum - r.rho * t + phi - r.phi0).exp());
                next_mark += 1;
            }
        }
        if step == steps {
            break;
        }
        let k = policy.lookup(&x[..d]);
        sum += model.reward(&x[..d], k);
        model.drift_into(&x[..d], k, &mut b[..d]);
        model.sigma_into(&x[..d], &mut s[..d * d]);
        if let Some(gf) = twist {
            if !gf.gradient_into(&x[..d], &mut g[..d]) {
                return Err(Error::Extrapolation {
                    path,
                    position: x[..d].to_vec(),
                });
            }
            // b += σσᵀ ∇φ
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    let a_ij: f64 = (0..d).map(|m| s[i * d + m] * s[j * d + m]).sum();
                    acc += a_ij * g[j];
                }
                b[i] += acc;
            }
        }
        for zi in z.iter_mut().take(d) {
            *zi = StandardNormal.sample(&mut rng);
        }
        for i in 0..d {
            let noise: f64 = (0..d).map(|j| s[i * d + j] * z[j]).sum();
            x[i] += b[i] * cfg.dt + noise * sq;
        }
        if let Some(r) = cfg.boundary_radius {
            reflect(&mut x[..d], r);
        }
        let mag = x[..d].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(mag <= DIVERGENCE_BOUND) {
            return Err(Error::Divergence {
                path,
                step: step + 1,
                magnitude: mag,
            });
        }
    }
    Ok(PathOut { sum, last: x, marks })
}

/// Runs all paths in parallel and returns them in path order; the first
/// failing path (by index) determines the error.
fn run_all(
    model: &DiffusionModel,
    policy: &GridPolicy,
    twist: Option<&GaugeField>,
    rec: Option<&Recorder>,
    cfg: &SimConfig,
) -> Result<Vec<PathOut>> {
    cfg.validate()?;
    if cfg.start.len() != model.dimension || policy.dimension != model.dimension {
        return Err(Error::InvalidArgument(format!(
            "start point / policy dimension does not match model dimension {}",
            model.dimension
        )));
    }
    if let Some(&k) = policy.controls.iter().find(|&&k| k >= model.num_controls()) {
        return Err(Error::InvalidArgument(format!("policy uses control {k} out of range")));
    }
    let outs: Vec<Result<PathOut>> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| run_path(model, policy, twist, rec, cfg, p))
        .collect();
    outs.into_iter().collect()
}

/// `base + log(mean exp(l_i)) / T` with delta-method error and ESS.
fn summarize(
    base: f64,
    log_weights: &[f64],
    horizon: f64,
    estimator: Estimator,
    cfg: &SimConfig,
) -> PathEstimate {
    let n = log_weights.len() as f64;
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = w.iter().sum();
    let sum2: f64 = w.iter().map(|v| v * v).sum();
    let mean = sum / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    PathEstimate {
        value: base + (m + mean.ln()) / horizon,
        standard_error: var.sqrt() / (mean * n.sqrt()) / horizon,
        effective_sample_size: sum * sum / sum2,
        estimator,
        paths: log_weights.len(),
        horizon,
        dt: cfg.dt,
        seed: cfg.seed,
    }
}

fn direct_estimate(outs: &[PathOut], cfg: &SimConfig) -> PathEstimate {
    let k = cfg.steps() as f64;
    let smax = outs.iter().map(|o| o.sum).fold(f64::NEG_INFINITY, f64::max);
    let logs: Vec<f64> = outs.iter().map(|o| cfg.dt * (o.sum - smax)).collect();
    let horizon = cfg.effective_horizon();
    let mut est = summarize(0.0, &logs, horizon, Estimator::Direct, cfg);
    // max-sum term separately so that a constant integrand is reproduced exactly
    est.value += smax / k;
    est
}

/// Direct estimate of `(1/T) log E exp ∫₀ᵀ c(X_t, v(X_t)) dt`.
pub fn simulate_value(model: &DiffusionModel, policy: &GridPolicy, cfg: &SimConfig) -> Result<PathEstimate> {
    let outs = run_all(model, policy, None, None, cfg)?;
    Ok(direct_estimate(&outs, cfg))
}

/// As [`simulate_value`], also returning the per-path samples.
pub fn simulate_paths(
    model: &DiffusionModel,
    policy: &GridPolicy,
    cfg: &SimConfig,
) -> Result<(PathEstimate, PathSamples)> {
    let outs = run_all(model, policy, None, None, cfg)?;
    let d = model.dimension;
    let samples = PathSamples {
        integrals: outs.iter().map(|o| cfg.dt * o.sum).collect(),
        finals: outs.iter().map(|o| o.last[..d].to_vec()).collect(),
    };
    Ok((direct_estimate(&outs, cfg), samples))
}

/// Ground-state estimate `ρ + (1/T) log(Φ(x₀) · mean Φ(X̃_T)⁻¹)` from the
/// twisted dynamics with drift `b + a∇φ`.
pub fn twisted_value(
    model: &DiffusionModel,
    policy: &GridPolicy,
    rho: f64,
    gauge: &GaugeField,
    cfg: &SimConfig,
) -> Result<PathEstimate> {
    Ok(twisted_paths(model, policy, rho, gauge, cfg)?.0)
}

pub fn twisted_paths(
    model: &DiffusionModel,
    policy: &GridPolicy,
    rho: f64,
    gauge: &GaugeField,
    cfg: &SimConfig,
) -> Result<(PathEstimate, PathSamples)> {
    let phi0 = gauge.value(&cfg.start).ok_or_else(|| Error::Extrapolation {
        path: 0,
        position: cfg.start.clone(),
    })?;
    let outs = run_all(model, policy, Some(gauge), None, cfg)?;
    let d = model.dimension;
    let mut logs = Vec::with_capacity(outs.len());
    for (p, o) in outs.iter().enumerate() {
        let phi = gauge.value(&o.last[..d]).ok_or_else(|| Error::Extrapolation {
            path: p,
            position: o.last[..d].to_vec(),
        })?;
        logs.push(phi0 - phi);
    }
    let est = summarize(rho, &logs, cfg.effective_horizon(), Estimator::Twisted, cfg);
    let samples = PathSamples {
        integrals: outs.iter().map(|o| cfg.dt * o.sum).collect(),
        finals: outs.iter().map(|o| o.last[..d].to_vec()).collect(),
    };
    Ok((est, samples))
}

/// `(SE_direct / SE_twisted)²`.
pub fn variance_reduction(direct: &PathEstimate, twisted: &PathEstimate) -> f64 {
    if twisted.standard_error == 0.0 {
        if direct.standard_error == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        (direct.standard_error / twisted.standard_error).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub names: Vec<String>,
    pub estimates: Vec<PathEstimate>,
    pub reference: usize,
    /// `J(reference) − J(other)` per policy.
    pub margins: Vec<f64>,
    /// `2·(SE_reference + SE_other)` per policy.
    pub budgets: Vec<f64>,
    pub bias_allowance: f64,
    /// No policy beats the reference by more than its budget plus the bias allowance.
    pub reference_is_best: bool,
    /// Per policy: the reference wins by more than the budget.
    pub strictly_worse: Vec<bool>,
}

/// Estimates `J` under every policy with common random numbers and compares
/// them with the `reference` (argmax) policy.
pub fn optimality_gap(
    model: &DiffusionModel,
    policies: &[(String, GridPolicy)],
    reference: usize,
    bias_allowance: f64,
    cfg: &SimConfig,
) -> Result<GapReport> {
    if policies.len() < 2 {
        return Err(Error::InvalidArgument("optimality_gap needs at least two policies".into()));
    }
    if reference >= policies.len() {
        return Err(Error::InvalidArgument(format!("reference index {reference} out of range")));
    }
    let estimates = policies
        .iter()
        .map(|(_, p)| simulate_value(model, p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let r = &estimates[reference];
    let margins: Vec<f64> = estimates.iter().map(|e| r.value - e.value).collect();
    let budgets: Vec<f64> = estimates
        .iter()
        .map(|e| 2.0 * (r.standard_error + e.standard_error))
        .collect();
    let reference_is_best = margins
        .iter()
        .zip(&budgets)
        .all(|(m, b)| *m >= -(b + bias_allowance));
    let strictly_worse = margins
        .iter()
        .zip(&budgets)
        .enumerate()
        .map(|(i, (m, b))| i != reference && *m > *b)
        .collect();
    Ok(GapReport {
        names: policies.iter().map(|(n, _)| n.clone()).collect(),
        estimates,
        reference,
        margins,
        budgets,
        bias_allowance,
        reference_is_best,
        strictly_worse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePoint {
    pub time: f64,
    pub mean: f64,
    pub standard_error: f64,
}

/// Sample means of `exp(∫₀ᵗ (c − ρ) ds) Φ(X_t)/Φ(x₀)` under the original
/// dynamics at the requested times.
pub fn martingale_check(
    model: &DiffusionModel,
    policy: &GridPolicy,
    rho: f64,
    gauge: &GaugeField,
    times: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<MartingalePoint>> {
    let mut steps: Vec<usize> = times.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps.last().is_some_and(|&s| s > cfg.steps()) {
        return Err(Error::InvalidArgument(
            "martingale times must be increasing and within the horizon".into(),
        ));
    }
    steps.dedup();
    let phi0 = gauge.value(&cfg.start).ok_or_else(|| Error::Extrapolation {
        path: 0,
        position: cfg.start.clone(),
    })?;
    let rec = Recorder {
        times: &steps,
        rho,
        gauge,
        phi0,
    };
    let outs = run_all(model, policy, None, Some(&rec), cfg)?;
    let n = outs.len() as f64;
    Ok(steps
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let vals: Vec<f64> = outs.iter().map(|o| o.marks[i]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            MartingalePoint {
                time: s as f64 * cfg.dt,
                mean,
                standard_error: (var / n).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_grid, BoundaryCondition};
    use crate::model::builtin_instance;

    fn cfg(t: f64, dt: f64, n: usize) -> SimConfig {
        SimConfig {
            horizon: t,
            dt,
            paths: n,
            seed: 7,
            start: vec![0.0],
            boundary_radius: None,
        }
    }

    #[test]
    fn config_validation() {
        assert!(matches!(cfg(1.0, 0.0, 100).validate(), Err(Error::InvalidArgument(_))));
        assert!(cfg(0.05, 0.01, 100).validate().is_err());
        assert!(cfg(1.0, 0.01, 99).validate().is_err());
        cfg(1.0, 0.01, 100).validate().unwrap();
    }

    #[test]
    fn const_is_exact() {
        let model = builtin_instance("const").unwrap();
        let grid = build_grid(1, 3.0, 31).unwrap();
        let est = simulate_value(&model, &GridPolicy::constant(&grid, 0), &cfg(2.0, 0.01, 200)).unwrap();
        assert_eq!(est.value, 0.5);
        assert_eq!(est.standard_error, 0.0);
        assert_eq!(est.effective_sample_size, 200.0);
    }

    #[test]
    fn reflection_keeps_paths_inside() {
        let mut x = [2.5, -7.0];
        reflect(&mut x, 2.0);
        assert_eq!(x, [1.5, 1.0]);
    }

    #[test]
    fn policy_lookup_uses_nearest_node() {
        let grid = build_grid(1, 2.0, 5).unwrap();
        let p = GridPolicy::with_controls(&grid, vec![0, 1, 2, 1, 0]);
        assert_eq!(p.lookup(&[-0.6]), 1);
        assert_eq!(p.lookup(&[0.4]), 2);
        assert_eq!(p.lookup(&[9.0]), 0);
    }

    #[test]
    fn gauge_interpolation_is_exact_on_linear_fields() {
        let grid = build_grid(1, 2.0, 9).unwrap();
        let active = ActiveSet::new(&grid, BoundaryCondition::Dirichlet);
        let vals: Vec<f64> = active.grid_indices().iter().map(|&g| 3.0 * grid.node(g)[0] - 1.0).collect();
        let f = GaugeField::new(&grid, &active, &vals).unwrap();
        assert!((f.value(&[0.3]).unwrap() - (-0.1)).abs() < 1e-12);
        let mut g = [0.0];
        assert!(f.gradient_into(&[-1.2], &mut g));
        assert!((g[0] - 3.0).abs() < 1e-12);
        assert!(f.value(&[1.9]).is_none());
    }

    #[test]
    fn seeds_are_reproducible_and_streams_distinct() {
        let model = builtin_instance("ou-quad").unwrap();
        let grid = build_grid(1, 3.0, 31).unwrap();
        let p = GridPolicy::constant(&grid, 0);
        let (a, sa) = simulate_paths(&model, &p, &cfg(1.0, 0.01, 300)).unwrap();
        let (b, sb) = simulate_paths(&model, &p, &cfg(1.0, 0.01, 300)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_ne!(sa.integrals[0], sa.integrals[1]);
        assert!(sa.to_csv().starts_with("path,integral,x1\n0,"));
    }

    #[test]
    fn gap_needs_two_policies() {
        let model = builtin_instance("const").unwrap();
        let grid = build_grid(1, 3.0, 31).unwrap();
        let one = vec![("a".to_string(), GridPolicy::constant(&grid, 0))];
        assert!(matches!(
            optimality_gap(&model, &one, 0, 0.0, &cfg(1.0, 0.01, 100)),
            Err(Error::InvalidArgument(_))
        ));
        let two = vec![one[0].clone(), ("b".to_string(), GridPolicy::constant(&grid, 0))];
        let rep = optimality_gap(&model, &two, 0, 0.0, &cfg(1.0, 0.01, 100)).unwrap();
        assert_eq!(rep.margins, vec![0.0, 0.0]);
        assert!(rep.reference_is_best);
    }
}
