//! Marginal kernels, their structural predicates and truncated hierarchy sequences.

pub(crate) mod dense;
pub mod io;
mod level;
mod separable;

pub use dense::{
    apply_bracket_weight, factorized, factorized_momentum, random_test_kernel, MarginalKernel,
    STRUCTURE_TOL,
};
pub(crate) use dense::{block_len, block_weights};
pub use level::Level;
pub use separable::{Mode, ProductTerm, SeparableKernel};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spectral::GridSpec;

/// Truncated sequence `gamma^(1), ..., gamma^(K)` with hierarchy weight `xi`.
#[derive(Clone, Debug)]
pub struct HierarchySequence {
    xi: f64,
    levels: Vec<Level>,
}

impl HierarchySequence {
    pub fn new(levels: Vec<Level>, xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidArgument(format!("xi must lie in (0, 1), got {xi}")));
        }
        let first = levels
            .first()
            .ok_or_else(|| Error::InvalidArgument("hierarchy needs at least one level".into()))?;
        let grid = *first.grid();
        for (i, l) in levels.iter().enumerate() {
            if l.grid() != &grid {
                return Err(Error::GridMismatch);
            }
            if l.k() != i + 1 {
                return Err(Error::ParticleNumber {
                    found: l.k(),
                    reason: format!("level {} must hold {} particles", i + 1, i + 1),
                });
            }
        }
        Ok(Self { xi, levels })
    }

    /// All-zero hierarchy of depth `depth`.
    pub fn zeros(grid: &GridSpec, depth: usize, xi: f64) -> Result<Self> {
        Self::new(
            (1..=depth).map(|k| Level::separable(SeparableKernel::zero(grid, k))).collect(),
            xi,
        )
    }

    /// `gamma^(k) = prod phi(x_j) conj(phi(x'_j))` for `k = 1..=depth`, from momentum coefficients.
    pub fn factorized_momentum(grid: &GridSpec, hat: &[C64], depth: usize, xi: f64) -> Result<Self> {
        let levels = (1..=depth)
            .map(|k| SeparableKernel::product_momentum(grid, hat, k).map(Level::separable))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels, xi)
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn grid(&self) -> &GridSpec {
        self.levels[0].grid()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Level with particle number `k` (1-based).
    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k - 1]
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        Self::new(self.levels.clone(), xi)
    }

    /// First `depth` levels.
    pub fn truncated(&self, depth: usize) -> Result<Self> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate depth {} to {depth}",
                self.depth()
            )));
        }
        Self::new(self.levels[..depth].to_vec(), self.xi)
    }

    /// `self + factor * other`, level by level.
    pub fn axpy(&self, factor: C64, other: &Self) -> Result<Self> {
        if self.depth() != other.depth() {
            return Err(Error::InvalidArgument("hierarchies of different depth".into()));
        }
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.axpy(factor, b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels, self.xi)
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            xi: self.xi,
            levels: self.levels.iter().map(|l| l.scale(factor)).collect(),
        }
    }

    pub fn resident_bytes(&self) -> u128 {
        self.levels.iter().map(Level::resident_bytes).sum()
    }
}
