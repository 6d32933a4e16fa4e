use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::dense::{block_len, outer_block, MarginalKernel};
use crate::error::{Error, Result};
use crate::spectral::{bracket, forward_transform, GridSpec};

/// One momentum vector over the lattice (length `M^n`), shared between terms.
pub type Mode = Arc<[C64]>;

/// `coef * prod_j ket_j(p_j) * prod_j conj(bra_j(p'_j))`
#[derive(Clone, Debug)]
pub struct ProductTerm {
    pub coef: C64,
    pub kets: Vec<Mode>,
    pub bras: Vec<Mode>,
}

/// A k-particle kernel stored as a finite sum of product terms.
///
/// Product states and everything the hierarchy generates from them (free
/// evolution, collapses, quadrature sums) stay in this form, which keeps
/// high particle numbers affordable where the dense tensor is not.
#[derive(Clone, Debug)]
pub struct SeparableKernel {
    k: usize,
    grid: GridSpec,
    terms: Vec<ProductTerm>,
}

impl SeparableKernel {
    pub fn zero(grid: &GridSpec, k: usize) -> Self {
        Self {
            k,
            grid: *grid,
            terms: Vec::new(),
        }
    }

    pub fn new(grid: &GridSpec, k: usize, terms: Vec<ProductTerm>) -> Result<Self> {
        if k == 0 {
            return Err(Error::ParticleNumber {
                found: 0,
                reason: "kernels need at least one particle".into(),
            });
        }
        for t in &terms {
            if t.kets.len() != k || t.bras.len() != k {
                return Err(Error::ParticleNumber {
                    found: t.kets.len(),
                    reason: format!("term slot count must equal {k}"),
                });
            }
            if t.kets.iter().chain(&t.bras).any(|m| m.len() != grid.sites()) {
                return Err(Error::DimensionMismatch {
                    expected: grid.sites(),
                    found: t.kets.iter().map(|m| m.len()).find(|&l| l != grid.sites()).unwrap_or(0),
                });
            }
        }
        Ok(Self { k, grid: *grid, terms })
    }

    /// `prod_j phi^(p_j) conj(phi^(p'_j))` from momentum coefficients.
    pub fn product_momentum(grid: &GridSpec, hat: &[C64], k: usize) -> Result<Self> {
        let mode: Mode = Arc::from(hat.to_vec());
        Self::new(
            grid,
            k,
            vec![ProductTerm {
                coef: C64::new(1.0, 0.0),
                kets: vec![mode.clone(); k],
                bras: vec![mode; k],
            }],
        )
    }

    /// Product kernel from a position-space wavefunction.
    pub fn product(grid: &GridSpec, phi: &[C64], k: usize) -> Result<Self> {
        let hat = forward_transform(phi, grid)?;
        Self::product_momentum(grid, &hat, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|t| t.coef *= factor);
        out
    }

    /// Concatenate `factor * other` onto `self`.
    pub fn axpy(&mut self, factor: C64, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.k != other.k {
            return Err(Error::ParticleNumber {
                found: other.k,
                reason: format!("expected {} particles", self.k),
            });
        }
        self.terms.extend(other.terms.iter().map(|t| ProductTerm {
            coef: t.coef * factor,
            kets: t.kets.clone(),
            bras: t.bras.clone(),
        }));
        Ok(())
    }

    pub fn push(&mut self, term: ProductTerm) {
        self.terms.push(term);
    }

    /// Entry at unprimed sites `p` and primed sites `pp`.
    pub fn get(&self, p: &[usize], pp: &[usize]) -> C64 {
        self.terms
            .iter()
            .map(|t| {
                let mut z = t.coef;
                for (m, &s) in t.kets.iter().zip(p) {
                    z *= m[s];
                }
                for (m, &s) in t.bras.iter().zip(pp) {
                    z *= m[s].conj();
                }
                z
            })
            .sum()
    }

    /// Materialize as a dense tensor (subject to the memory budget).
    pub fn to_dense(&self) -> Result<MarginalKernel> {
        let mut out = MarginalKernel::zeros(&self.grid, self.k)?;
        self.add_into(&mut out, C64::new(1.0, 0.0))?;
        Ok(out)
    }

    /// `out += factor * self`
    pub fn add_into(&self, out: &mut MarginalKernel, factor: C64) -> Result<()> {
        if out.grid() != &self.grid || out.k() != self.k {
            return Err(Error::GridMismatch);
        }
        let b = block_len(&self.grid, self.k);
        let data = out.data_mut();
        for t in &self.terms {
            let kets: Vec<&[C64]> = t.kets.iter().map(|m| &m[..]).collect();
            let bras: Vec<&[C64]> = t.bras.iter().map(|m| &m[..]).collect();
            let ket = outer_block(&kets);
            let bra: Vec<C64> = outer_block(&bras).into_iter().map(|z| z.conj()).collect();
            let c = t.coef * factor;
            for u in 0..b {
                let a = c * ket[u];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &mut data[u * b..(u + 1) * b];
                for (slot, z) in row.iter_mut().zip(&bra) {
                    *slot += a * z;
                }
            }
        }
        Ok(())
    }

    /// Trace `prod_j <ket_j, bra_j>` summed over terms.
    pub fn trace(&self) -> C64 {
        let w = self.grid.momentum_measure();
        self.terms
            .iter()
            .map(|t| {
                t.kets.iter().zip(&t.bras).fold(t.coef, |acc, (a, b)| {
                    acc * a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum::<C64>() * w
                })
            })
            .sum()
    }

    /// Squared `H^alpha` norm through the Gram matrix of the terms.
    pub fn sobolev_norm_sq(&self, alpha: f64) -> f64 {
        let w: Vec<f64> = (0..self.grid.sites())
            .map(|s| bracket(&self.grid.momentum(s)).powf(2.0 * alpha) * self.grid.momentum_measure())
            .collect();
        let inner = |a: &Mode, b: &Mode| -> C64 {
            if Arc::ptr_eq(a, b) {
                return C64::new(a.iter().zip(&w).map(|(x, wi)| x.norm_sqr() * wi).sum(), 0.0);
            }
            a.iter().zip(b.iter()).zip(&w).map(|((x, y), wi)| x * y.conj() * *wi).sum()
        };
        let mut total = crate::sum::NeumaierSum::new();
        for (r, tr) in self.terms.iter().enumerate() {
            for ts in &self.terms[r..] {
                let mut g = tr.coef * ts.coef.conj();
                for (a, b) in tr.kets.iter().zip(&ts.kets) {
                    g *= inner(a, b);
                }
                for (a, b) in tr.bras.iter().zip(&ts.bras) {
                    g *= inner(a, b).conj();
                }
                if std::ptr::eq(tr, ts) {
                    total.add(g.re);
                } else {
                    total.add(2.0 * g.re);
                }
            }
        }
        total.value().max(0.0)
    }

    /// `gamma^dagger`: swap kets and bras and conjugate coefficients.
    pub fn adjoint(&self) -> Self {
        Self {
            k: self.k,
            grid: self.grid,
            terms: self
                .terms
                .iter()
                .map(|t| ProductTerm {
                    coef: t.coef.conj(),
                    kets: t.bras.clone(),
                    bras: t.kets.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::dense::factorized_momentum;
    use std::f64::consts::PI;

    fn hat(g: &GridSpec, shift: f64) -> Vec<C64> {
        (0..g.sites())
            .map(|s| {
                let p = g.momentum(s).components[0];
                C64::from_polar((-(p - shift).powi(2) / 3.0).exp(), 0.4 * p)
            })
            .collect()
    }

    #[test]
    fn product_matches_dense() {
        let g = GridSpec::new(1, 2.0 * PI, 6).unwrap();
        let h = hat(&g, 0.5);
        let s = SeparableKernel::product_momentum(&g, &h, 2).unwrap();
        let d = factorized_momentum(&h, &g, 2).unwrap();
        assert!(s.to_dense().unwrap().sub(&d).unwrap().max_abs() < 1e-14);
        assert!((s.trace() - d.trace()).norm() < 1e-13);
        assert!((s.get(&[1, 2], &[3, 4]) - d.get(&[1, 2], &[3, 4])).norm() < 1e-15);
    }

    #[test]
    fn gram_norm_of_differences() {
        let g = GridSpec::new(1, 2.0 * PI, 6).unwrap();
        let a = SeparableKernel::product_momentum(&g, &hat(&g, 0.5), 2).unwrap();
        let b = SeparableKernel::product_momentum(&g, &hat(&g, -1.0), 2).unwrap();
        let mut diff = a.clone();
        diff.axpy(C64::new(-0.5, 0.25), &b).unwrap();
        let dense = diff.to_dense().unwrap();
        let direct = crate::norms::sobolev_norm(&dense, 1.5);
        assert!((diff.sobolev_norm_sq(1.5).sqrt() - direct).abs() < 1e-12 * direct);
    }
}
