//! `H^alpha_k` kernel norms, the weighted hierarchy norm and trajectory sup norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{block_weights, HierarchySequence, MarginalKernel};
use crate::solver::Trajectory;
use crate::sum::NeumaierSum;

/// Sobolev index and hierarchy weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub alpha: f64,
    pub xi: f64,
}

impl NormParams {
    pub fn new(alpha: f64, xi: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
        }
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidArgument(format!("xi must lie in (0, 1), got {xi}")));
        }
        Ok(Self { alpha, xi })
    }
}

fn weighted_sum(gamma: &MarginalKernel, alpha: f64, mut f: impl FnMut(usize) -> f64) -> f64 {
    let w = block_weights(gamma.grid(), gamma.k(), 2.0 * alpha);
    let b = w.len();
    let mut total = NeumaierSum::new();
    for u in 0..b {
        let mut row = NeumaierSum::new();
        for v in 0..b {
            row.add(w[v] * f(u * b + v));
        }
        total.add(w[u] * row.value());
    }
    let measure = gamma.grid().momentum_measure().powi(2 * gamma.k() as i32);
    total.value() * measure
}

/// `( sum prod <p_j>^{2 alpha} <p'_j>^{2 alpha} |gamma|^2 / L^{2kn} )^{1/2}`
pub fn sobolev_norm(gamma: &MarginalKernel, alpha: f64) -> f64 {
    let d = gamma.data();
    weighted_sum(gamma, alpha, |i| d[i].norm_sqr()).sqrt()
}

/// `||a - b||_{H^alpha}` without forming the difference tensor.
pub fn sobolev_distance(a: &MarginalKernel, b: &MarginalKernel, alpha: f64) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    if a.k() != b.k() {
        return Err(Error::ParticleNumber {
            found: b.k(),
            reason: format!("expected {} particles", a.k()),
        });
    }
    let (da, db) = (a.data(), b.data());
    Ok(weighted_sum(a, alpha, |i| (da[i] - db[i]).norm_sqr()).sqrt())
}

/// One-particle `H^alpha` norm of momentum coefficients.
pub fn wave_sobolev_norm(grid: &crate::spectral::GridSpec, hat: &[crate::spectral::C64], alpha: f64) -> f64 {
    let w = grid.bracket_powers(2.0 * alpha);
    let mut s = NeumaierSum::new();
    for (z, wi) in hat.iter().zip(&w) {
        s.add(z.norm_sqr() * wi);
    }
    (s.value() * grid.momentum_measure()).sqrt()
}

/// `sum_k xi^k ||gamma^(k)||_{H^alpha_k}` with `xi` taken from `params`.
pub fn weighted_norm(gamma: &HierarchySequence, params: &NormParams) -> f64 {
    let mut s = NeumaierSum::new();
    for (i, l) in gamma.levels().iter().enumerate() {
        s.add(params.xi.powi(i as i32 + 1) * l.sobolev_norm(params.alpha));
    }
    s.value()
}

/// Maximum of [`weighted_norm`] over the trajectory nodes.
pub fn trajectory_norm(traj: &Trajectory, params: &NormParams) -> Result<f64> {
    if traj.states().is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    Ok(traj
        .states()
        .iter()
        .map(|s| weighted_norm(s, params))
        .fold(0.0, f64::max))
}
