use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::dense::MarginalKernel;
use super::separable::SeparableKernel;
use crate::budget;
use crate::error::{Error, Result};
use crate::spectral::GridSpec;

/// Level of a hierarchy: either a dense tensor or a sum of product terms.
#[derive(Clone, Debug)]
pub enum Level {
    Dense(Arc<MarginalKernel>),
    Separable(Arc<SeparableKernel>),
}

/// Dense tensors up to this many entries are materialized for exact structural checks.
const CHECK_DENSE_ENTRIES: u128 = 1 << 24;

impl Level {
    pub fn dense(kernel: MarginalKernel) -> Self {
        Level::Dense(Arc::new(kernel))
    }

    pub fn separable(kernel: SeparableKernel) -> Self {
        Level::Separable(Arc::new(kernel))
    }

    pub fn k(&self) -> usize {
        match self {
            Level::Dense(d) => d.k(),
            Level::Separable(s) => s.k(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        match self {
            Level::Dense(d) => d.grid(),
            Level::Separable(s) => s.grid(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Level::Dense(_))
    }

    pub fn zero_like(&self) -> Self {
        Level::separable(SeparableKernel::zero(self.grid(), self.k()))
    }

    /// Dense copy (shared when already dense).
    pub fn to_dense(&self) -> Result<Arc<MarginalKernel>> {
        match self {
            Level::Dense(d) => Ok(d.clone()),
            Level::Separable(s) => Ok(Arc::new(s.to_dense()?)),
        }
    }

    /// Same representation as `self` would get under `dense`.
    pub fn into_form(self, dense: bool) -> Result<Self> {
        match (dense, &self) {
            (true, Level::Separable(s)) => Ok(Level::dense(s.to_dense()?)),
            _ => Ok(self),
        }
    }

    /// Bytes held by this level.
    pub fn resident_bytes(&self) -> u128 {
        match self {
            Level::Dense(d) => d.data().len() as u128 * budget::BYTES_PER_ENTRY as u128,
            Level::Separable(s) => {
                (s.rank() * 2 * s.k() * s.grid().sites()) as u128 * budget::BYTES_PER_ENTRY as u128
            }
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        match self {
            Level::Dense(d) => Level::dense(d.scale(factor)),
            Level::Separable(s) => Level::separable(s.scale(factor)),
        }
    }

    /// `self + factor * other`; dense if either side is dense.
    pub fn axpy(&self, factor: C64, other: &Level) -> Result<Level> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        match (self, other) {
            (Level::Separable(a), Level::Separable(b)) => {
                let mut out = (**a).clone();
                out.axpy(factor, b)?;
                Ok(Level::separable(out))
            }
            _ => {
                let mut out = (*self.to_dense()?).clone();
                match other {
                    Level::Dense(b) => out.axpy(factor, b)?,
                    Level::Separable(b) => out.axpy(factor, &b.to_dense()?)?,
                }
                Ok(Level::dense(out))
            }
        }
    }

    pub fn sub(&self, other: &Level) -> Result<Level> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// Linear combination `sum_i c_i x_i` of levels with identical shape.
    pub fn combine(parts: &[(C64, &Level)], dense: bool) -> Result<Level> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?
            .1;
        let (grid, k) = (*first.grid(), first.k());
        if dense || parts.iter().any(|(_, l)| l.is_dense()) {
            let mut out = MarginalKernel::zeros(&grid, k)?;
            for (c, l) in parts {
                if *c == C64::new(0.0, 0.0) {
                    continue;
                }
                match l {
                    Level::Dense(d) => out.axpy(*c, d)?,
                    Level::Separable(s) => accumulate_separable(&mut out, *c, s)?,
                }
            }
            Ok(Level::dense(out))
        } else {
            let mut out = SeparableKernel::zero(&grid, k);
            for (c, l) in parts {
                if let Level::Separable(s) = l {
                    out.axpy(*c, s)?;
                }
            }
            Ok(Level::separable(out))
        }
    }

    pub fn trace(&self) -> C64 {
        match self {
            Level::Dense(d) => d.trace(),
            Level::Separable(s) => s.trace(),
        }
    }

    pub fn sobolev_norm(&self, alpha: f64) -> f64 {
        match self {
            Level::Dense(d) => crate::norms::sobolev_norm(d, alpha),
            Level::Separable(s) => s.sobolev_norm_sq(alpha).sqrt(),
        }
    }

    /// `H^alpha` distance between two levels.
    pub fn distance(&self, other: &Level, alpha: f64) -> Result<f64> {
        if let (Level::Separable(a), Level::Separable(b)) = (self, other) {
            if Arc::ptr_eq(a, b) {
                return Ok(0.0);
            }
        }
        if let (Level::Dense(a), Level::Dense(b)) = (self, other) {
            if Arc::ptr_eq(a, b) {
                return Ok(0.0);
            }
            return Ok(crate::norms::sobolev_distance(a, b, alpha)?);
        }
        Ok(self.sub(other)?.sobolev_norm(alpha))
    }

    /// Relative deviation from hermiticity and from permutation symmetry.
    ///
    /// Dense (or cheaply densified) levels report `max |entry difference| / max |entry|`;
    /// larger separable levels report the ratio of `L^2` norms.
    pub fn structure_errors(&self) -> Result<(f64, f64)> {
        let affordable = budget::kernel_entries(self.grid().sites(), self.k()) <= CHECK_DENSE_ENTRIES;
        match self {
            Level::Dense(d) => Ok(dense_structure_errors(d)?),
            Level::Separable(s) if affordable => Ok(dense_structure_errors(&s.to_dense()?)?),
            Level::Separable(s) => {
                let norm = s.sobolev_norm_sq(0.0).sqrt();
                if norm == 0.0 {
                    return Ok((0.0, 0.0));
                }
                let mut h = (**s).clone();
                h.axpy(C64::new(-1.0, 0.0), &s.adjoint())?;
                let herm = h.sobolev_norm_sq(0.0).sqrt() / norm;
                let mut sym = 0.0f64;
                for j in 0..s.k().saturating_sub(1) {
                    let mut d = (**s).clone();
                    d.axpy(C64::new(-1.0, 0.0), &swap_slots(s, j))?;
                    sym = sym.max(d.sobolev_norm_sq(0.0).sqrt() / norm);
                }
                Ok((herm, sym))
            }
        }
    }
}

fn swap_slots(s: &SeparableKernel, j: usize) -> SeparableKernel {
    let terms = s
        .terms()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.kets.swap(j, j + 1);
            t.bras.swap(j, j + 1);
            t
        })
        .collect();
    SeparableKernel::new(s.grid(), s.k(), terms).expect("slot swap keeps shape")
}

fn dense_structure_errors(d: &MarginalKernel) -> Result<(f64, f64)> {
    let scale = d.max_abs();
    if scale == 0.0 {
        return Ok((0.0, 0.0));
    }
    let b = d.block();
    let data = d.data();
    let mut herm = 0.0f64;
    for u in 0..b {
        for v in u..b {
            herm = herm.max((data[u * b + v] - data[v * b + u].conj()).norm());
        }
    }
    let mut sym = 0.0f64;
    for j in 0..d.k().saturating_sub(1) {
        let mut sigma: Vec<usize> = (0..d.k()).collect();
        sigma.swap(j, j + 1);
        let p = d.permuted(&sigma)?;
        sym = sym.max(p.sub(d)?.max_abs());
    }
    Ok((herm / scale, sym / scale))
}

fn accumulate_separable(out: &mut MarginalKernel, c: C64, s: &SeparableKernel) -> Result<()> {
    s.add_into(out, c)
}
