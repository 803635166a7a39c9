//! Ground-state (Doob-transformed) chain of a converged eigenpair, its
//! stationary law, the entropy identity and the gradient/growth diagnostics.

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::discretize::{ActiveSet, GeneratorMatrix, Grid};
use crate::eigensolve::EigenPair;
use crate::linalg::{BandedLu, CsrMatrix};
use crate::model::DiffusionModel;
use crate::{Error, Result};

/// Eigenpairs with a residual above this are transformed with a warning.
pub const RESIDUAL_WARNING: f64 = 1e-6;

/// `Ã_{xy} = A_{xy} Φ(y)/Φ(x)` off the diagonal, `Ã_{xx} = A_{xx} + c(x) − ρ`.
#[derive(Debug, Clone)]
pub struct TwistedChain {
    pub rates: CsrMatrix,
    /// `φ = log Φ` on the active nodes.
    pub gauge: Vec<f64>,
    pub value: f64,
    pub eigen_residual: f64,
    pub residual_warning: bool,
    pub active: Arc<ActiveSet>,
}

pub fn doob_transform(a_v: &GeneratorMatrix, c_v: &[f64], pair: &EigenPair) -> Result<TwistedChain> {
    let n = a_v.len();
    if pair.vector.len() != n || c_v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "eigenvector ({}) / reward ({}) length does not match generator ({n})",
            pair.vector.len(),
            c_v.len()
        )));
    }
    let phi = &pair.vector;
    if let Some(i) = phi.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "ground state must be positive; Φ[{i}] = {}",
            phi[i]
        )));
    }
    let residual_warning = pair.residual > RESIDUAL_WARNING;
    if residual_warning {
        warn!(
            "doob_transform: eigen residual {:e} exceeds {RESIDUAL_WARNING:e}",
            pair.residual
        );
    }
    let rho = pair.value;
    let rates = a_v.matrix.map_entries(|i, j, v| {
        if i == j {
            v + c_v[i] - rho
        } else {
            v * phi[j] / phi[i]
        }
    });
    Ok(TwistedChain {
        rates,
        gauge: phi.iter().map(|v| v.ln()).collect(),
        value: rho,
        eigen_residual: pair.residual,
        residual_warning,
        active: a_v.active.clone(),
    })
}

impl TwistedChain {
    pub fn len(&self) -> usize {
        self.rates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rates.row_sums()
    }
}

/// Solves `ηᵀ Ã = 0`, `Σ η = 1`. The balance equation of the center node is
/// replaced by the normalization, pinning `η(center)` before rescaling.
pub fn stationary_distribution(chain: &TwistedChain) -> Result<Vec<f64>> {
    let n = chain.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    if !chain.rates.is_irreducible() {
        return Err(Error::NotIrreducible(
            "some state cannot reach or be reached from the others".into(),
        ));
    }
    let pin = chain.active.center().min(n - 1);
    let reduced = |i: usize| if i < pin { i } else { i - 1 };
    // Rows of −Ãᵀ with the pinned state removed.
    let mut rows = vec![Vec::new(); n - 1];
    let mut rhs = vec![0.0; n - 1];
    for (i, j, v) in chain.rates.triplets() {
        if j == pin {
            continue;
        }
        if i == pin {
            rhs[reduced(j)] += v;
        } else {
            rows[reduced(j)].push((reduced(i), -v));
        }
    }
    let system = CsrMatrix::from_rows(n - 1, rows);
    let lu = BandedLu::factor(&system).map_err(|e| Error::NotIrreducible(e.to_string()))?;
    let rest = lu.solve(&rhs);
    let mut eta = Vec::with_capacity(n);
    eta.extend_from_slice(&rest[..pin]);
    eta.push(1.0);
    eta.extend_from_slice(&rest[pin..]);
    if let Some(i) = eta.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::NotIrreducible(format!(
            "balance solve produced η[{i}] = {}",
            eta[i]
        )));
    }
    let total: f64 = eta.iter().sum();
    eta.iter_mut().for_each(|v| *v /= total);
    Ok(eta)
}

/// `‖ηᵀ Ã‖∞`.
pub fn stationarity_residual(chain: &TwistedChain, eta: &[f64]) -> f64 {
    chain
        .rates
        .left_mul_vec(eta)
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Max-norm of `Ã Φ⁻¹ − (c − ρ) Φ⁻¹`.
pub fn lyapunov_residual(chain: &TwistedChain, c_v: &[f64], pair: &EigenPair) -> f64 {
    let inv: Vec<f64> = pair.vector.iter().map(|v| 1.0 / v).collect();
    let lhs = chain.rates.mul_vec(&inv);
    lhs.iter()
        .zip(c_v)
        .zip(&inv)
        .map(|((l, c), i)| (l - (c - pair.value) * i).abs())
        .fold(0.0, f64::max)
}

/// Fraction of the radius (sup-norm) inside which the discrete and continuum
/// entropy fields are compared.
pub const INNER_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// `H_d = Ã φ + c − ρ`.
    pub discrete_entropy: Vec<f64>,
    /// `H = ½ |σᵀ ∇φ|²` with central differences.
    pub continuum_entropy: Vec<f64>,
    /// `|ρ − Σ η (c − H_d)|`.
    pub identity_residual: f64,
    /// `max |H_d − H|` over active nodes with `‖x‖∞ ≤ inner_radius`.
    pub field_mismatch: f64,
    pub inner_radius: f64,
    /// `Σ η H_d`.
    pub entropy_mass: f64,
    pub value: f64,
}

pub fn entropy_report(
    chain: &TwistedChain,
    eta: &[f64],
    model: &DiffusionModel,
    grid: &Grid,
    c_v: &[f64],
) -> Result<EntropyReport> {
    let n = chain.len();
    if eta.len() != n || c_v.len() != n {
        return Err(Error::InvalidArgument("η / reward length does not match chain".into()));
    }
    let rho = chain.value;
    let a_phi = chain.rates.mul_vec(&chain.gauge);
    let discrete: Vec<f64> = a_phi.iter().zip(c_v).map(|(a, c)| a + c - rho).collect();
    let avg: f64 = eta
        .iter()
        .zip(c_v)
        .zip(&discrete)
        .map(|((e, c), h)| e * (c - h))
        .sum();
    let continuum = continuum_entropy(model, grid, &chain.active, &chain.gauge);
    let inner_radius = INNER_FRACTION * grid.radius();
    let field_mismatch = chain
        .active
        .grid_indices()
        .iter()
        .enumerate()
        .filter(|(_, &g)| grid.node(g).iter().all(|x| x.abs() <= inner_radius * (1.0 + 1e-12)))
        .map(|(i, _)| (discrete[i] - continuum[i]).abs())
        .fold(0.0, f64::max);
    Ok(EntropyReport {
        entropy_mass: eta.iter().zip(&discrete).map(|(e, h)| e * h).sum(),
        discrete_entropy: discrete,
        continuum_entropy: continuum,
        identity_residual: (rho - avg).abs(),
        field_mismatch,
        inner_radius,
        value: rho,
    })
}

/// Gradient of a field on the active sub-box: central differences inside,
/// one-sided at the sub-box edges. Returns `d` components per node.
pub fn active_gradient(grid: &Grid, active: &ActiveSet, values: &[f64]) -> Vec<f64> {
    let d = grid.dimension();
    let h = grid.spacing();
    let m = active.per_axis();
    let mut out = vec![0.0; values.len() * d];
    for i in 0..values.len() {
        let idx = active.active_multi(i);
        for k in 0..d {
            let at = |t: usize| {
                let mut j = idx;
                j[k] = t;
                values[active.active_flat(j)]
            };
            let t = idx[k];
            out[i * d + k] = if m < 2 {
                0.0
            } else if t == 0 {
                (at(1) - at(0)) / h
            } else if t == m - 1 {
                (at(m - 1) - at(m - 2)) / h
            } else {
                (at(t + 1) - at(t - 1)) / (2.0 * h)
            };
        }
    }
    out
}

/// `½ |σᵀ(x) ∇φ(x)|²` per active node.
pub fn continuum_entropy(model: &DiffusionModel, grid: &Grid, active: &ActiveSet, gauge: &[f64]) -> Vec<f64> {
    let d = grid.dimension();
    let grad = active_gradient(grid, active, gauge);
    active
        .grid_indices()
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let s = model.sigma(grid.node(g));
            let p = &grad[i * d..(i + 1) * d];
            // (σᵀ p)_j = Σ_i σ_ij p_i
            (0..d)
                .map(|j| {
                    let v: f64 = (0..d).map(|k| s[k * d + j] * p[k]).sum();
                    v * v
                })
                .sum::<f64>()
                * 0.5
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBound {
    pub max_ratio: f64,
    pub argmax: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Per node, `|∇Φ|/Φ` divided by `1 + max (|b| + √|c|)` over the node, its
/// axial neighbours and all controls.
pub fn gradient_bound_diagnostic(
    pair: &EigenPair,
    model: &DiffusionModel,
    grid: &Grid,
    active: &ActiveSet,
) -> GradientBound {
    let d = grid.dimension();
    let grad = active_gradient(grid, active, &pair.vector);
    let n = grid.nodes_per_axis();
    let scale_at = |g: usize| {
        let x = grid.node(g);
        (0..model.num_controls())
            .map(|k| {
                let b = model.drift(x, k);
                b.iter().map(|v| v * v).sum::<f64>().sqrt() + model.reward(x, k).abs().sqrt()
            })
            .fold(0.0, f64::max)
    };
    let mut ratios = Vec::with_capacity(pair.vector.len());
    let mut best = (0.0, 0usize);
    for (i, &g) in active.grid_indices().iter().enumerate() {
        let mi = grid.multi_index(g);
        let mut s = scale_at(g);
        for k in 0..d {
            for delta in [-1isize, 1] {
                let t = mi[k] as isize + delta;
                if t >= 0 && (t as usize) < n {
                    let mut mj = mi;
                    mj[k] = t as usize;
                    s = s.max(scale_at(grid.flat_index(mj)));
                }
            }
        }
        let gnorm = grad[i * d..(i + 1) * d].iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = gnorm / pair.vector[i] / (1.0 + s);
        if ratio > best.0 {
            best = (ratio, g);
        }
        ratios.push(ratio);
    }
    GradientBound {
        max_ratio: best.0,
        argmax: grid.node(best.1).to_vec(),
        ratios,
    }
}

/// Least-squares slope of `|log Φ|` against `log(1 + |x|)` over active nodes
/// with `|x| ≥ r/2`.
pub fn growth_diagnostic(pair: &EigenPair, grid: &Grid, active: &ActiveSet) -> f64 {
    let r = grid.radius();
    let pts: Vec<(f64, f64)> = active
        .grid_indices()
        .iter()
        .enumerate()
        .filter_map(|(i, &g)| {
            let x = grid.node(g);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm >= 0.5 * r).then(|| ((1.0 + norm).ln(), pair.vector[i].ln().abs()))
        })
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}
