use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::budget;
use crate::error::{Error, Result};
use crate::spectral::{bracket, forward_transform, AxisFft, AxisTransform, GridSpec};
use crate::sum::{ComplexNeumaierSum, NeumaierSum};

/// Relative tolerance of the structural predicates.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Dense momentum-space kernel of a k-particle marginal.
///
/// Entry `(p_1..p_k; p'_1..p'_k)` lives at `u * P^k + v` where `P = M^n`,
/// `u = sum_j p_j P^{k-j}` indexes the unprimed block and `v` the primed one.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalKernel {
    k: usize,
    grid: GridSpec,
    data: Vec<C64>,
}

/// `P^k` as usize.
pub(crate) fn block_len(grid: &GridSpec, k: usize) -> usize {
    grid.sites().pow(k as u32)
}

impl MarginalKernel {
    /// All-zero kernel; fails if the tensor would exceed the memory budget.
    pub fn zeros(grid: &GridSpec, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ParticleNumber {
                found: 0,
                reason: "kernels need at least one particle".into(),
            });
        }
        let entries = budget::kernel_entries(grid.sites(), k);
        budget::check_entries(entries, &format!("dense {k}-particle kernel"))?;
        Ok(Self {
            k,
            grid: *grid,
            data: vec![C64::new(0.0, 0.0); entries as usize],
        })
    }

    pub fn from_data(grid: &GridSpec, k: usize, data: Vec<C64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::ParticleNumber {
                found: 0,
                reason: "kernels need at least one particle".into(),
            });
        }
        let entries = budget::kernel_entries(grid.sites(), k);
        if data.len() as u128 != entries {
            return Err(Error::DimensionMismatch {
                expected: entries as usize,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite(format!("kernel entry {bad}")));
        }
        Ok(Self { k, grid: *grid, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn block(&self) -> usize {
        block_len(&self.grid, self.k)
    }

    /// Entry at unprimed sites `p` and primed sites `pp`.
    pub fn get(&self, p: &[usize], pp: &[usize]) -> C64 {
        self.data[self.offset(p, pp)]
    }

    pub fn set(&mut self, p: &[usize], pp: &[usize], value: C64) {
        let o = self.offset(p, pp);
        self.data[o] = value;
    }

    fn offset(&self, p: &[usize], pp: &[usize]) -> usize {
        let sites = self.grid.sites();
        let u = p.iter().fold(0, |acc, &s| acc * sites + s);
        let v = pp.iter().fold(0, |acc, &s| acc * sites + s);
        u * self.block() + v
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= factor);
        out
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.k != other.k {
            return Err(Error::ParticleNumber {
                found: other.k,
                reason: format!("expected {} particles", self.k),
            });
        }
        Ok(())
    }

    /// `self + factor * other`
    pub fn axpy(&mut self, factor: C64, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Plain momentum L2 norm of the tensor entries (no lattice measure).
    pub fn frobenius(&self) -> f64 {
        let mut s = NeumaierSum::new();
        for z in &self.data {
            s.add(z.norm_sqr());
        }
        s.value().sqrt()
    }

    /// `(gamma + gamma^dagger) / 2`
    pub fn hermitize(&self) -> Self {
        let mut out = self.clone();
        out.hermitize_in_place();
        out
    }

    fn hermitize_in_place(&mut self) {
        let b = self.block();
        let out = self;
        const TILE: usize = 64;
        for u0 in (0..b).step_by(TILE) {
            for v0 in (u0..b).step_by(TILE) {
                for u in u0..(u0 + TILE).min(b) {
                    for v in v0.max(u)..(v0 + TILE).min(b) {
                        let avg = (out.data[u * b + v] + out.data[v * b + u].conj()) * 0.5;
                        out.data[u * b + v] = avg;
                        out.data[v * b + u] = avg.conj();
                    }
                }
            }
        }
    }

    pub fn is_hermitian(&self) -> bool {
        let b = self.block();
        let scale = self.max_abs();
        if scale == 0.0 {
            return true;
        }
        for u in 0..b {
            for v in u..b {
                let d = self.data[u * b + v] - self.data[v * b + u].conj();
                if d.norm() > STRUCTURE_TOL * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Average of `Theta_sigma gamma Theta_sigma^-1` over all particle permutations.
    pub fn symmetrize(&self) -> Result<Self> {
        if self.k > 6 {
            return Err(Error::Resource {
                what: format!("symmetrization over {}! permutations", self.k),
                requested: factorial(self.k) as u128,
                budget: 720,
            });
        }
        if self.k == 1 {
            return Ok(self.clone());
        }
        // S_m = (1/m) sum_j (j m) S_{m-1}, applied for m = 2..k
        let b = self.block();
        let mut cur = self.data.clone();
        let mut next = vec![C64::new(0.0, 0.0); cur.len()];
        for m in 2..=self.k {
            next.copy_from_slice(&cur);
            for j in 0..m - 1 {
                let mut sigma: Vec<usize> = (0..self.k).collect();
                sigma.swap(j, m - 1);
                let map = block_permutation(self.grid.sites(), self.k, &sigma);
                for u in 0..b {
                    let src = &cur[map[u] * b..(map[u] + 1) * b];
                    let row = &mut next[u * b..(u + 1) * b];
                    for (v, slot) in row.iter_mut().enumerate() {
                        *slot += src[map[v]];
                    }
                }
            }
            let inv = 1.0 / m as f64;
            next.iter_mut().for_each(|z| *z *= inv);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(Self {
            k: self.k,
            grid: self.grid,
            data: cur,
        })
    }

    /// Kernel with particles relabelled by `sigma` (`sigma[j]` is the source slot of slot `j`).
    pub fn permuted(&self, sigma: &[usize]) -> Result<Self> {
        if sigma.len() != self.k || !is_permutation(sigma) {
            return Err(Error::InvalidArgument(format!("{sigma:?} is not a permutation of 0..{}", self.k)));
        }
        let b = self.block();
        let map = block_permutation(self.grid.sites(), self.k, sigma);
        let mut data = vec![C64::new(0.0, 0.0); self.data.len()];
        for u in 0..b {
            for v in 0..b {
                data[u * b + v] = self.data[map[u] * b + map[v]];
            }
        }
        Ok(Self {
            k: self.k,
            grid: self.grid,
            data,
        })
    }

    /// Invariance under every particle permutation (adjacent swaps generate them).
    pub fn is_symmetric(&self) -> bool {
        if self.k == 1 {
            return true;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return true;
        }
        let b = self.block();
        for j in 0..self.k - 1 {
            let mut sigma: Vec<usize> = (0..self.k).collect();
            sigma.swap(j, j + 1);
            let map = block_permutation(self.grid.sites(), self.k, &sigma);
            for u in 0..b {
                for v in 0..b {
                    let d = self.data[u * b + v] - self.data[map[u] * b + map[v]];
                    if d.norm() > STRUCTURE_TOL * scale {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Full trace `L^{-kn} sum_p gamma(p; p)`, equal to the position-space diagonal integral.
    pub fn trace(&self) -> C64 {
        let b = self.block();
        let mut s = ComplexNeumaierSum::new();
        for u in 0..b {
            s.add(self.data[u * b + u]);
        }
        s.value() * self.grid.momentum_measure().powi(self.k as i32)
    }

    /// Contract the last particle's index pair.
    pub fn partial_trace_last(&self) -> Result<Self> {
        if self.k < 2 {
            return Err(Error::ParticleNumber {
                found: self.k,
                reason: "partial trace needs at least two particles".into(),
            });
        }
        let sites = self.grid.sites();
        let ob = block_len(&self.grid, self.k - 1);
        let ib = self.block();
        let w = self.grid.momentum_measure();
        let mut out = Self::zeros(&self.grid, self.k - 1)?;
        for u in 0..ob {
            for v in 0..ob {
                let mut s = ComplexNeumaierSum::new();
                for q in 0..sites {
                    s.add(self.data[(u * sites + q) * ib + v * sites + q]);
                }
                out.data[u * ob + v] = s.value() * w;
            }
        }
        Ok(out)
    }

    /// Position-space kernel samples `gamma(x; x')` on the grid in the same layout.
    pub fn to_position(&self) -> Vec<C64> {
        let mut data = self.data.clone();
        let fft = AxisFft::new(&self.grid);
        let n = self.grid.dim();
        let axes = 2 * self.k * n;
        for axis in 0..axes {
            let primed = axis >= self.k * n;
            let dir = if primed {
                AxisTransform::InverseMinus
            } else {
                AxisTransform::InversePlus
            };
            fft.apply_axis(&mut data, axes, axis, dir);
        }
        data
    }

    /// Inverse of [`MarginalKernel::to_position`].
    pub fn from_position(grid: &GridSpec, k: usize, values: &[C64]) -> Result<Self> {
        let mut data = values.to_vec();
        let fft = AxisFft::new(grid);
        let n = grid.dim();
        let axes = 2 * k * n;
        if data.len() as u128 != budget::kernel_entries(grid.sites(), k) {
            return Err(Error::DimensionMismatch {
                expected: budget::kernel_entries(grid.sites(), k) as usize,
                found: data.len(),
            });
        }
        for axis in 0..axes {
            let dir = if axis >= k * n {
                AxisTransform::ForwardPlus
            } else {
                AxisTransform::ForwardMinus
            };
            fft.apply_axis(&mut data, axes, axis, dir);
        }
        Self::from_data(grid, k, data)
    }
}

pub(crate) fn factorial(k: usize) -> usize {
    (1..=k).product()
}

fn is_permutation(sigma: &[usize]) -> bool {
    let mut seen = vec![false; sigma.len()];
    for &s in sigma {
        if s >= sigma.len() || seen[s] {
            return false;
        }
        seen[s] = true;
    }
    true
}

#[cfg(test)]
/// All permutations of `0..k` in lexicographic order.
pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..k).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// For each block index `u`, the block index whose slot `j` holds slot `sigma[j]` of `u`.
fn block_permutation(sites: usize, k: usize, sigma: &[usize]) -> Vec<usize> {
    let b = sites.pow(k as u32);
    let mut digits = vec![0usize; k];
    let mut map = Vec::with_capacity(b);
    for u in 0..b {
        let mut rest = u;
        for j in (0..k).rev() {
            digits[j] = rest % sites;
            rest /= sites;
        }
        map.push(sigma.iter().fold(0, |acc, &src| acc * sites + digits[src]));
    }
    map
}

/// Tensor product of per-slot momentum vectors: `out[u] = prod_j vecs[j][u_j]`.
pub(crate) fn outer_block(vecs: &[&[C64]]) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0)];
    for v in vecs {
        let mut next = Vec::with_capacity(out.len() * v.len());
        for a in &out {
            for b in v.iter() {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// Dense product kernel `prod_j phi(x_j) conj(phi(x'_j))` from a position-space `phi`.
pub fn factorized(phi: &[C64], grid: &GridSpec, k: usize) -> Result<MarginalKernel> {
    let hat = forward_transform(phi, grid)?;
    factorized_momentum(&hat, grid, k)
}

/// Same as [`factorized`] but from momentum coefficients.
pub fn factorized_momentum(hat: &[C64], grid: &GridSpec, k: usize) -> Result<MarginalKernel> {
    if hat.len() != grid.sites() {
        return Err(Error::DimensionMismatch {
            expected: grid.sites(),
            found: hat.len(),
        });
    }
    let mut out = MarginalKernel::zeros(grid, k)?;
    let slots: Vec<&[C64]> = vec![hat; k];
    let ket = outer_block(&slots);
    let b = ket.len();
    for u in 0..b {
        for v in 0..b {
            out.data[u * b + v] = ket[u] * ket[v].conj();
        }
    }
    Ok(out)
}

/// Per-block weights `prod_j <p_j>^{e}`.
pub(crate) fn block_weights(grid: &GridSpec, k: usize, exponent: f64) -> Vec<f64> {
    let single: Vec<f64> = (0..grid.sites())
        .map(|s| bracket(&grid.momentum(s)).powf(exponent))
        .collect();
    let mut out = vec![1.0];
    for _ in 0..k {
        let mut next = Vec::with_capacity(out.len() * single.len());
        for a in &out {
            for b in &single {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// Complex Gaussian tensor damped by `prod <p>^{-alpha-1} <p'>^{-alpha-1}`, before projections.
fn damped_gaussian(grid: &GridSpec, k: usize, alpha: f64, seed: u64) -> Result<MarginalKernel> {
    let mut out = MarginalKernel::zeros(grid, k)?;
    let w = block_weights(grid, k, -alpha - 1.0);
    let b = w.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for u in 0..b {
        for v in 0..b {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            out.data[u * b + v] = C64::new(re, im) * (scale * w[u] * w[v]);
        }
    }
    Ok(out)
}

/// Reproducible hermitian, symmetric test kernel with finite `H^alpha` norm.
pub fn random_test_kernel(grid: &GridSpec, k: usize, alpha: f64, seed: u64) -> Result<MarginalKernel> {
    let mut out = damped_gaussian(grid, k, alpha, seed)?;
    out.hermitize_in_place();
    out.symmetrize()
}

/// Multiply every entry by `prod <p_j>^{e} <p'_j>^{e}`.
pub fn apply_bracket_weight(gamma: &MarginalKernel, exponent: f64) -> MarginalKernel {
    let mut out = gamma.clone();
    apply_bracket_weight_into(gamma, exponent, &mut out);
    out
}

/// Same as [`apply_bracket_weight`], writing into `out` (same shape as `gamma`).
pub(crate) fn apply_bracket_weight_into(gamma: &MarginalKernel, exponent: f64, out: &mut MarginalKernel) {
    let w = block_weights(&gamma.grid, gamma.k, exponent);
    let b = w.len();
    for (u, (src, dst)) in gamma.data.chunks_exact(b).zip(out.data.chunks_exact_mut(b)).enumerate() {
        for (v, (a, z)) in src.iter().zip(dst.iter_mut()).enumerate() {
            *z = a * (w[u] * w[v]);
        }
    }
}
