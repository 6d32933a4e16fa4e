//! Free propagator and the cubic/quintic collapse operators on momentum kernels.
//!
//! Collapse conventions (`w = 1/L^n` per contracted momentum sum):
//!
//! ```text
//! b1_j: out(p; p') = w^2 sum_{r,r'} g(.., p_j - r + r', .., r; p', r')
//! b2_j: out(p; p') = w^2 sum_{r,r'} g(p, r; .., p'_j + r - r', .., r')
//! q1_j: out(p; p') = w^4 sum g(.., p_j - r1 - r2 + r1' + r2', .., r1, r2; p', r1', r2')
//! q2_j: out(p; p') = w^4 sum g(p, r1, r2; .., p'_j + r1 + r2 - r1' - r2', .., r1', r2')
//! ```
//!
//! Shifted momenta that leave the lattice are dropped.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{block_len, Level, MarginalKernel, Mode, ProductTerm, SeparableKernel};
use crate::spectral::{DisplacementTable, GridSpec, Lattice, OUTSIDE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Cubic,
    Quintic,
}

/// Interaction type and sign: `mu = +1` defocusing, `mu = -1` focusing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub mu: f64,
}

impl Interaction {
    pub fn new(kind: InteractionKind, mu: f64) -> Result<Self> {
        if mu != 1.0 && mu != -1.0 {
            return Err(Error::InvalidArgument(format!("mu must be +1 or -1, got {mu}")));
        }
        Ok(Self { kind, mu })
    }

    pub fn cubic(mu: f64) -> Result<Self> {
        Self::new(InteractionKind::Cubic, mu)
    }

    pub fn quintic(mu: f64) -> Result<Self> {
        Self::new(InteractionKind::Quintic, mu)
    }

    /// Number of particles traced out by one collapse.
    pub fn depth(&self) -> usize {
        match self.kind {
            InteractionKind::Cubic => 1,
            InteractionKind::Quintic => 2,
        }
    }

    /// `-i mu`
    pub fn prefactor(&self) -> C64 {
        C64::new(0.0, -self.mu)
    }
}

// ---------------------------------------------------------------- free propagator

/// `exp(-i t sum_j |p_j|^2)` for every block index of a k-slot block.
pub fn free_phase(grid: &GridSpec, k: usize, t: f64) -> Vec<C64> {
    let sq = grid.momentum_squares();
    let mut energy = vec![0.0f64];
    for _ in 0..k {
        let mut next = Vec::with_capacity(energy.len() * sq.len());
        for e in &energy {
            for s in &sq {
                next.push(e + s);
            }
        }
        energy = next;
    }
    energy.into_iter().map(|e| C64::from_polar(1.0, -t * e)).collect()
}

/// Kernel multiplied by `exp(-i t (sum |p_j|^2 - sum |p'_j|^2))`.
pub fn free_evolve(gamma: &MarginalKernel, t: f64) -> MarginalKernel {
    let a = free_phase(gamma.grid(), gamma.k(), t);
    let b = a.len();
    let mut out = gamma.clone();
    let data = out.data_mut();
    for u in 0..b {
        let row = &mut data[u * b..(u + 1) * b];
        for (z, av) in row.iter_mut().zip(&a) {
            *z = *z * a[u] * av.conj();
        }
    }
    out
}

/// One-particle free Schrodinger flow on momentum coefficients.
pub fn free_evolve_momentum(grid: &GridSpec, hat: &[C64], t: f64) -> Vec<C64> {
    hat.iter()
        .zip(free_phase(grid, 1, t))
        .map(|(z, a)| z * a)
        .collect()
}

pub fn free_evolve_separable(gamma: &SeparableKernel, t: f64) -> SeparableKernel {
    let grid = *gamma.grid();
    let phase = free_phase(&grid, 1, t);
    let mut cache: HashMap<usize, Mode> = HashMap::new();
    let mut evolve = |m: &Mode| -> Mode {
        let key = Arc::as_ptr(m) as *const C64 as usize;
        cache
            .entry(key)
            .or_insert_with(|| m.iter().zip(&phase).map(|(z, a)| z * a).collect::<Vec<_>>().into())
            .clone()
    };
    let terms = gamma
        .terms()
        .iter()
        .map(|t| ProductTerm {
            coef: t.coef,
            kets: t.kets.iter().map(&mut evolve).collect(),
            bras: t.bras.iter().map(&mut evolve).collect(),
        })
        .collect();
    SeparableKernel::new(&grid, gamma.k(), terms).expect("free evolution keeps shape")
}

pub fn free_evolve_level(level: &Level, t: f64) -> Level {
    match level {
        Level::Dense(d) => Level::dense(free_evolve(d, t)),
        Level::Separable(s) => Level::separable(free_evolve_separable(s, t)),
    }
}

// ---------------------------------------------------------------- dense collapses

fn check_collapse(gamma_k: usize, depth: usize, j: Option<usize>) -> Result<usize> {
    if gamma_k < depth + 1 {
        return Err(Error::ParticleNumber {
            found: gamma_k,
            reason: format!("collapse needs at least {} particles", depth + 1),
        });
    }
    let k = gamma_k - depth;
    if let Some(j) = j {
        if j == 0 || j > k {
            return Err(Error::IndexOutOfRange { index: j, max: k });
        }
    }
    Ok(k)
}

/// Signed linear code of each site's mode vector, `sum_a m_a W^{n-1-a}`.
struct ShiftCodes {
    table: DisplacementTable,
    center: i64,
    lin: Vec<i64>,
}

impl ShiftCodes {
    fn new(grid: &GridSpec, span: i32) -> Self {
        let lat = Lattice::new(grid);
        let n = grid.dim();
        let width = (2 * span + 1) as i64;
        let lin = (0..grid.sites())
            .map(|s| (0..n).fold(0i64, |acc, a| acc * width + lat.mode(s, a) as i64))
            .collect();
        let table = lat.displacement_table(span);
        let zero = vec![0i32; n];
        let center = table.encode(&zero) as i64;
        Self { table, center, lin }
    }

    /// Site of `base + sum(plus) - sum(minus)` given precomputed codes.
    #[inline]
    fn shift(&self, base: usize, code: i64) -> u32 {
        self.table.shift(base, (self.center + code) as usize)
    }
}

/// `out += sign * w^2 * (b1_j or b2_j)(gamma)` for 0-based slot `j0`.
fn cubic_side(gamma: &MarginalKernel, j0: usize, primed: bool, sign: f64, out: &mut [C64], codes: &ShiftCodes) {
    let grid = gamma.grid();
    let p = grid.sites();
    let k = gamma.k() - 1;
    let ob = block_len(grid, k);
    let ib = ob * p;
    let stride = p.pow((k - 1 - j0) as u32);
    let w = grid.momentum_measure().powi(2) * sign;
    let data = gamma.data();
    let mut acc = vec![C64::new(0.0, 0.0); ob];
    for u in 0..ob {
        acc.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        if !primed {
            let pj = (u / stride) % p;
            for r in 0..p {
                for rp in 0..p {
                    let a = codes.shift(pj, codes.lin[rp] - codes.lin[r]);
                    if a == OUTSIDE {
                        continue;
                    }
                    let uin = (u as isize + (a as isize - pj as isize) * stride as isize) as usize;
                    let row = &data[(uin * p + r) * ib..(uin * p + r + 1) * ib];
                    for (v, z) in acc.iter_mut().enumerate() {
                        *z += row[v * p + rp];
                    }
                }
            }
        } else {
            for r in 0..p {
                let row = &data[(u * p + r) * ib..(u * p + r + 1) * ib];
                for (v, z) in acc.iter_mut().enumerate() {
                    let pj = (v / stride) % p;
                    let mut s = C64::new(0.0, 0.0);
                    for rp in 0..p {
                        let b = codes.shift(pj, codes.lin[r] - codes.lin[rp]);
                        if b == OUTSIDE {
                            continue;
                        }
                        let vin = (v as isize + (b as isize - pj as isize) * stride as isize) as usize;
                        s += row[vin * p + rp];
                    }
                    *z += s;
                }
            }
        }
        for (o, z) in out[u * ob..(u + 1) * ob].iter_mut().zip(&acc) {
            *o += z * w;
        }
    }
}

fn cubic_codes(grid: &GridSpec) -> ShiftCodes {
    ShiftCodes::new(grid, grid.points() as i32 - 1)
}

fn quintic_codes(grid: &GridSpec) -> ShiftCodes {
    ShiftCodes::new(grid, 2 * (grid.points() as i32 - 1))
}

fn dense_side(gamma: &MarginalKernel, depth: usize, j: usize, primed: bool) -> Result<MarginalKernel> {
    let k = check_collapse(gamma.k(), depth, Some(j))?;
    let mut out = MarginalKernel::zeros(gamma.grid(), k)?;
    match depth {
        1 => cubic_side(gamma, j - 1, primed, 1.0, out.data_mut(), &cubic_codes(gamma.grid())),
        _ => quintic_side(gamma, j - 1, primed, 1.0, out.data_mut(), &quintic_codes(gamma.grid())),
    }
    Ok(out)
}

/// `B^1_{j,k}` applied to a dense `gamma^(k+1)`; `j` is 1-based.
pub fn collapse_b1(j: usize, gamma: &MarginalKernel) -> Result<MarginalKernel> {
    dense_side(gamma, 1, j, false)
}

/// `B^2_{j,k}` applied to a dense `gamma^(k+1)`; `j` is 1-based.
pub fn collapse_b2(j: usize, gamma: &MarginalKernel) -> Result<MarginalKernel> {
    dense_side(gamma, 1, j, true)
}

/// Unprimed-side quintic term of `Q_{j,k}`.
pub fn collapse_q1(j: usize, gamma: &MarginalKernel) -> Result<MarginalKernel> {
    dense_side(gamma, 2, j, false)
}

/// Primed-side quintic term of `Q_{j,k}`.
pub fn collapse_q2(j: usize, gamma: &MarginalKernel) -> Result<MarginalKernel> {
    dense_side(gamma, 2, j, true)
}

fn raw_dense(gamma: &MarginalKernel, depth: usize) -> Result<MarginalKernel> {
    let k = check_collapse(gamma.k(), depth, None)?;
    let mut out = MarginalKernel::zeros(gamma.grid(), k)?;
    let codes = if depth == 1 {
        cubic_codes(gamma.grid())
    } else {
        quintic_codes(gamma.grid())
    };
    for j0 in 0..k {
        for (primed, sign) in [(false, 1.0), (true, -1.0)] {
            if depth == 1 {
                cubic_side(gamma, j0, primed, sign, out.data_mut(), &codes);
            } else {
                quintic_side(gamma, j0, primed, sign, out.data_mut(), &codes);
            }
        }
    }
    Ok(out)
}

/// `B^(k) gamma^(k+1) = sum_j (b1_j - b2_j)`, without the `-i mu` prefactor.
pub fn raw_cubic(gamma: &MarginalKernel) -> Result<MarginalKernel> {
    raw_dense(gamma, 1)
}

/// `Q^(k) gamma^(k+2) = sum_j (q1_j - q2_j)`, without the `-i mu` prefactor.
pub fn raw_quintic(gamma: &MarginalKernel) -> Result<MarginalKernel> {
    raw_dense(gamma, 2)
}

fn expect_kind(inter: &Interaction, kind: InteractionKind) -> Result<()> {
    if inter.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "interaction is {:?}, operation needs {:?}",
            inter.kind, kind
        )));
    }
    Ok(())
}

/// `-i mu B^(k) gamma^(k+1)`
pub fn collapse_cubic(gamma: &MarginalKernel, inter: &Interaction) -> Result<MarginalKernel> {
    expect_kind(inter, InteractionKind::Cubic)?;
    Ok(raw_cubic(gamma)?.scale(inter.prefactor()))
}

/// `-i mu Q^(k) gamma^(k+2)`
pub fn collapse_quintic(gamma: &MarginalKernel, inter: &Interaction) -> Result<MarginalKernel> {
    expect_kind(inter, InteractionKind::Quintic)?;
    Ok(raw_quintic(gamma)?.scale(inter.prefactor()))
}

/// `out += sign * w^4 * (q1_j or q2_j)(gamma)` for 0-based slot `j0`.
fn quintic_side(gamma: &MarginalKernel, j0: usize, primed: bool, sign: f64, out: &mut [C64], codes: &ShiftCodes) {
    let grid = gamma.grid();
    let p = grid.sites();
    let p2 = p * p;
    let k = gamma.k() - 2;
    let ob = block_len(grid, k);
    let ib = ob * p2;
    let stride = p.pow((k - 1 - j0) as u32);
    let w = grid.momentum_measure().powi(4) * sign;
    let pair: Vec<i64> = (0..p2).map(|rr| codes.lin[rr / p] + codes.lin[rr % p]).collect();
    let data = gamma.data();
    let mut acc = vec![C64::new(0.0, 0.0); ob];
    for u in 0..ob {
        acc.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        if !primed {
            let pj = (u / stride) % p;
            for r in 0..p2 {
                for rp in 0..p2 {
                    let a = codes.shift(pj, pair[rp] - pair[r]);
                    if a == OUTSIDE {
                        continue;
                    }
                    let uin = (u as isize + (a as isize - pj as isize) * stride as isize) as usize;
                    let row = &data[(uin * p2 + r) * ib..(uin * p2 + r + 1) * ib];
                    for (v, z) in acc.iter_mut().enumerate() {
                        *z += row[v * p2 + rp];
                    }
                }
            }
        } else {
            for r in 0..p2 {
                let row = &data[(u * p2 + r) * ib..(u * p2 + r + 1) * ib];
                for (v, z) in acc.iter_mut().enumerate() {
                    let pj = (v / stride) % p;
                    let mut s = C64::new(0.0, 0.0);
                    for rp in 0..p2 {
                        let b = codes.shift(pj, pair[r] - pair[rp]);
                        if b == OUTSIDE {
                            continue;
                        }
                        let vin = (v as isize + (b as isize - pj as isize) * stride as isize) as usize;
                        s += row[vin * p2 + rp];
                    }
                    *z += s;
                }
            }
        }
        for (o, z) in out[u * ob..(u + 1) * ob].iter_mut().zip(&acc) {
            *o += z * w;
        }
    }
}

// ---------------------------------------------------------------- product-term collapses

/// Array over an extended box of mode vectors `[lo, lo + width)^n`.
#[derive(Clone, Debug)]
struct Ext {
    n: usize,
    lo: i32,
    width: usize,
    data: Vec<C64>,
}

impl Ext {
    fn from_lattice(grid: &GridSpec, v: &[C64], conj: bool) -> Self {
        Self {
            n: grid.dim(),
            lo: -(grid.points() as i32) / 2,
            width: grid.points(),
            data: if conj { v.iter().map(|z| z.conj()).collect() } else { v.to_vec() },
        }
    }

    fn digits(&self, idx: usize, out: &mut [i32]) {
        let mut rest = idx;
        for a in (0..self.n).rev() {
            out[a] = (rest % self.width) as i32 + self.lo;
            rest /= self.width;
        }
    }

    fn index(&self, modes: &[i32]) -> Option<usize> {
        let mut idx = 0usize;
        for &m in modes {
            let a = m - self.lo;
            if a < 0 || a as usize >= self.width {
                return None;
            }
            idx = idx * self.width + a as usize;
        }
        Some(idx)
    }

    fn modes(&self) -> Vec<Vec<i32>> {
        let mut d = vec![0i32; self.n];
        (0..self.data.len())
            .map(|i| {
                self.digits(i, &mut d);
                d.clone()
            })
            .collect()
    }

    /// `out(d) = sum_{x + y = d} a(x) b(y)`
    fn convolve(a: &Ext, b: &Ext) -> Ext {
        let width = a.width + b.width - 1;
        let mut out = Ext {
            n: a.n,
            lo: a.lo + b.lo,
            width,
            data: vec![C64::new(0.0, 0.0); width.pow(a.n as u32)],
        };
        let (ma, mb) = (a.modes(), b.modes());
        let mut t = vec![0i32; a.n];
        for (i, x) in a.data.iter().enumerate() {
            if *x == C64::new(0.0, 0.0) {
                continue;
            }
            for (jj, y) in b.data.iter().enumerate() {
                for ax in 0..a.n {
                    t[ax] = ma[i][ax] + mb[jj][ax];
                }
                let o = out.index(&t).expect("sum box covers all sums");
                out.data[o] += x * y;
            }
        }
        out
    }

    /// `out(delta) = sum_x a(x) b(x + delta)`
    fn correlate(a: &Ext, b: &Ext) -> Ext {
        let width = a.width + b.width - 1;
        let mut out = Ext {
            n: a.n,
            lo: b.lo - (a.lo + a.width as i32 - 1),
            width,
            data: vec![C64::new(0.0, 0.0); width.pow(a.n as u32)],
        };
        let (ma, mb) = (a.modes(), b.modes());
        let mut t = vec![0i32; a.n];
        for (i, x) in a.data.iter().enumerate() {
            if *x == C64::new(0.0, 0.0) {
                continue;
            }
            for (jj, y) in b.data.iter().enumerate() {
                for ax in 0..a.n {
                    t[ax] = mb[jj][ax] - ma[i][ax];
                }
                let o = out.index(&t).expect("difference box covers all differences");
                out.data[o] += x * y;
            }
        }
        out
    }
}

/// `y(p) = scale * sum_delta x(p + s delta) f(delta)` over lattice `p`, with `s = +-1`
/// and `f` conjugated when `conj_f`; arguments off the lattice are dropped.
fn shift_apply(grid: &GridSpec, x: &[C64], f: &Ext, s: i32, conj_f: bool, scale: f64) -> Vec<C64> {
    let lat = Lattice::new(grid);
    let n = grid.dim();
    let fm = f.modes();
    let mut target = vec![0i32; n];
    (0..grid.sites())
        .map(|site| {
            let mut acc = C64::new(0.0, 0.0);
            for (di, fv) in f.data.iter().enumerate() {
                if *fv == C64::new(0.0, 0.0) {
                    continue;
                }
                for a in 0..n {
                    target[a] = lat.mode(site, a) + s * fm[di][a];
                }
                if let Some(t) = lat.site_of(&target) {
                    let fv = if conj_f { fv.conj() } else { *fv };
                    acc += x[t] * fv;
                }
            }
            acc * scale
        })
        .collect()
}

fn mode_key(m: &Mode) -> usize {
    Arc::as_ptr(m) as *const C64 as usize
}

/// Per-call caches so shared modes are contracted once.
struct ProductCollapser<'g> {
    grid: &'g GridSpec,
    depth: usize,
    weights: HashMap<Vec<usize>, Arc<Ext>>,
    shifted: HashMap<(usize, Vec<usize>, bool), Mode>,
}

impl<'g> ProductCollapser<'g> {
    fn new(grid: &'g GridSpec, depth: usize) -> Self {
        Self {
            grid,
            depth,
            weights: HashMap::new(),
            shifted: HashMap::new(),
        }
    }

    /// Displacement weight of the contracted slots of a term.
    fn weight(&mut self, t: &ProductTerm, k: usize) -> (Vec<usize>, Arc<Ext>) {
        let key: Vec<usize> = t.kets[k..].iter().chain(&t.bras[k..]).map(mode_key).collect();
        if let Some(w) = self.weights.get(&key) {
            return (key, w.clone());
        }
        let g = self.grid;
        let w = if self.depth == 1 {
            let a = Ext::from_lattice(g, &t.kets[k], false);
            let b = Ext::from_lattice(g, &t.bras[k], true);
            Ext::correlate(&a, &b)
        } else {
            let u = Ext::convolve(
                &Ext::from_lattice(g, &t.kets[k], false),
                &Ext::from_lattice(g, &t.kets[k + 1], false),
            );
            let v = Ext::convolve(
                &Ext::from_lattice(g, &t.bras[k], true),
                &Ext::from_lattice(g, &t.bras[k + 1], true),
            );
            Ext::correlate(&u, &v)
        };
        let w = Arc::new(w);
        self.weights.insert(key.clone(), w.clone());
        (key, w)
    }

    fn shifted(&mut self, x: &Mode, wkey: &[usize], w: &Ext, primed: bool) -> Mode {
        let key = (mode_key(x), wkey.to_vec(), primed);
        if let Some(m) = self.shifted.get(&key) {
            return m.clone();
        }
        let scale = self.grid.momentum_measure().powi(2 * self.depth as i32);
        let v = if primed {
            shift_apply(self.grid, x, w, -1, true, scale)
        } else {
            shift_apply(self.grid, x, w, 1, false, scale)
        };
        let m: Mode = v.into();
        self.shifted.insert(key, m.clone());
        m
    }

    fn side(&mut self, t: &ProductTerm, k: usize, j0: usize, primed: bool, sign: f64) -> ProductTerm {
        let (wkey, w) = self.weight(t, k);
        let mut kets: Vec<Mode> = t.kets[..k].to_vec();
        let mut bras: Vec<Mode> = t.bras[..k].to_vec();
        if primed {
            bras[j0] = self.shifted(&t.bras[j0], &wkey, &w, true);
        } else {
            kets[j0] = self.shifted(&t.kets[j0], &wkey, &w, false);
        }
        ProductTerm {
            coef: t.coef * sign,
            kets,
            bras,
        }
    }
}

fn separable_side(gamma: &SeparableKernel, depth: usize, j: usize, primed: bool) -> Result<SeparableKernel> {
    let k = check_collapse(gamma.k(), depth, Some(j))?;
    let mut c = ProductCollapser::new(gamma.grid(), depth);
    let terms = gamma.terms().iter().map(|t| c.side(t, k, j - 1, primed, 1.0)).collect();
    SeparableKernel::new(gamma.grid(), k, terms)
}

/// Raw collapse (`B` for depth 1, `Q` for depth 2) of a sum of product terms.
pub fn raw_collapse_separable(gamma: &SeparableKernel, depth: usize) -> Result<SeparableKernel> {
    let k = check_collapse(gamma.k(), depth, None)?;
    let mut c = ProductCollapser::new(gamma.grid(), depth);
    let mut terms = Vec::with_capacity(gamma.rank() * 2 * k);
    for t in gamma.terms() {
        for j0 in 0..k {
            terms.push(c.side(t, k, j0, false, 1.0));
            terms.push(c.side(t, k, j0, true, -1.0));
        }
    }
    SeparableKernel::new(gamma.grid(), k, terms)
}

/// `b1_j` on product terms.
pub fn collapse_b1_separable(j: usize, gamma: &SeparableKernel) -> Result<SeparableKernel> {
    separable_side(gamma, 1, j, false)
}

/// `b2_j` on product terms.
pub fn collapse_b2_separable(j: usize, gamma: &SeparableKernel) -> Result<SeparableKernel> {
    separable_side(gamma, 1, j, true)
}

/// Band-limited coefficients of `|phi|^2 phi` (cubic) or `|phi|^4 phi` (quintic).
pub fn collapsed_mode(grid: &GridSpec, hat: &[C64], depth: usize) -> Vec<C64> {
    let m: Mode = hat.to_vec().into();
    let term = ProductTerm {
        coef: C64::new(1.0, 0.0),
        kets: vec![m.clone(); depth + 1],
        bras: vec![m; depth + 1],
    };
    let mut c = ProductCollapser::new(grid, depth);
    c.side(&term, 1, 0, false, 1.0).kets[0].to_vec()
}

/// `-i mu` times the raw collapse of a level, in the same representation.
pub fn collapse_level(level: &Level, inter: &Interaction) -> Result<Level> {
    let pre = inter.prefactor();
    match level {
        Level::Dense(d) => Ok(Level::dense(raw_dense(d, inter.depth())?.scale(pre))),
        Level::Separable(s) => Ok(Level::separable(raw_collapse_separable(s, inter.depth())?.scale(pre))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{factorized_momentum, random_test_kernel};
    use crate::norms::sobolev_norm;
    use crate::spectral::forward_transform;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(1, 2.0 * PI, 8).unwrap()
    }

    fn phi(g: &GridSpec, width: f64) -> Vec<C64> {
        (0..g.sites())
            .map(|s| {
                let x = g.position(s)[0];
                C64::from_polar((-x * x / (2.0 * width * width)).exp(), 0.5 * (x + 0.3).sin())
            })
            .collect()
    }

    fn rel(a: &MarginalKernel, b: &MarginalKernel) -> f64 {
        a.sub(b).unwrap().max_abs() / b.max_abs().max(1e-300)
    }

    #[test]
    fn free_evolve_zero_time_is_identity() {
        let g = grid();
        let gam = random_test_kernel(&g, 2, 1.0, 4).unwrap();
        assert_eq!(free_evolve(&gam, 0.0), gam);
    }

    #[test]
    fn free_evolve_plane_wave_phase() {
        let g = grid();
        let mut gam = MarginalKernel::zeros(&g, 1).unwrap();
        let (a, b) = (g.site_of_modes(&[2]).unwrap(), g.site_of_modes(&[-1]).unwrap());
        gam.set(&[a], &[b], C64::new(1.0, 0.0));
        let t = 0.3;
        let ev = free_evolve(&gam, t);
        let want = C64::from_polar(1.0, -t * (4.0 - 1.0));
        assert!((ev.get(&[a], &[b]) - want).norm() < 1e-15);
        assert!(ev.sub(&gam).unwrap().data().iter().enumerate().all(|(i, z)| i == a * 8 + b || z.norm() == 0.0));
    }

    #[test]
    fn free_evolve_isometry_and_group_law() {
        let g = grid();
        let gam = random_test_kernel(&g, 2, 1.0, 8).unwrap();
        for alpha in [0.0, 1.0, 2.3] {
            let n0 = sobolev_norm(&gam, alpha);
            let n1 = sobolev_norm(&free_evolve(&gam, 0.37), alpha);
            assert!((n0 - n1).abs() <= 1e-12 * n0);
        }
        let two = free_evolve(&free_evolve(&gam, 0.2), 0.5);
        let one = free_evolve(&gam, 0.7);
        assert!(rel(&two, &one) < 1e-12);
    }

    #[test]
    fn free_evolve_matches_one_particle_flow() {
        let g = grid();
        let hat = forward_transform(&phi(&g, 0.9), &g).unwrap();
        let t = 0.41;
        // independent oracle: evolve phi alone by exp(-i t |p|^2)
        let evolved: Vec<C64> = (0..g.sites())
            .map(|s| hat[s] * C64::from_polar(1.0, -t * g.momentum(s).norm_sq()))
            .collect();
        let lhs = free_evolve(&factorized_momentum(&hat, &g, 1).unwrap(), t);
        let rhs = factorized_momentum(&evolved, &g, 1).unwrap();
        assert!(rel(&lhs, &rhs) < 1e-13);
    }

    /// Position-space contraction oracle for `b1` / `b2` on `phi (x) phi`.
    fn position_oracle(g: &GridSpec, f: &[C64], power: i32, primed: bool) -> MarginalKernel {
        let m = g.sites();
        let mut pos = vec![C64::new(0.0, 0.0); m * m];
        for x in 0..m {
            for y in 0..m {
                let dens = if primed { f[y].norm_sqr() } else { f[x].norm_sqr() };
                pos[x * m + y] = f[x] * f[y].conj() * dens.powi(power);
            }
        }
        MarginalKernel::from_position(g, 1, &pos).unwrap()
    }

    /// Band-limited grid profile so momentum truncation and aliasing both vanish.
    fn band_limited(g: &GridSpec, extent: i64, seed: f64) -> Vec<C64> {
        let mut hat = vec![C64::new(0.0, 0.0); g.sites()];
        for m in -extent..=extent {
            let s = g.site_of_modes(&[m]).unwrap();
            hat[s] = C64::new(1.0 / (1.0 + (m as f64 - seed).powi(2)), 0.3 * m as f64);
        }
        crate::spectral::inverse_transform(&hat, g).unwrap()
    }

    #[test]
    fn cubic_sides_match_position_oracle() {
        // modes |m| <= 1 keep |phi|^2 phi within |m| <= 3 on an M = 8 lattice
        let g = grid();
        let f = band_limited(&g, 1, 0.4);
        let hat = forward_transform(&f, &g).unwrap();
        let g2 = factorized_momentum(&hat, &g, 2).unwrap();
        let b1 = collapse_b1(1, &g2).unwrap();
        let b2 = collapse_b2(1, &g2).unwrap();
        assert!(rel(&b1, &position_oracle(&g, &f, 1, false)) < 1e-12);
        assert!(rel(&b2, &position_oracle(&g, &f, 1, true)) < 1e-12);
    }

    #[test]
    fn quintic_sides_match_position_oracle() {
        let g = GridSpec::new(1, 3.0, 12).unwrap();
        let f = band_limited(&g, 1, -0.2);
        let hat = forward_transform(&f, &g).unwrap();
        let g3 = factorized_momentum(&hat, &g, 3).unwrap();
        let q1 = collapse_q1(1, &g3).unwrap();
        let q2 = collapse_q2(1, &g3).unwrap();
        assert!(rel(&q1, &position_oracle(&g, &f, 2, false)) < 1e-12);
        assert!(rel(&q2, &position_oracle(&g, &f, 2, true)) < 1e-12);
    }

    #[test]
    fn separable_path_matches_dense() {
        let g = grid();
        let hat = forward_transform(&phi(&g, 0.8), &g).unwrap();
        for (depth, k) in [(1usize, 3usize), (2, 3)] {
            let d = factorized_momentum(&hat, &g, k).unwrap();
            let s = SeparableKernel::product_momentum(&g, &hat, k).unwrap();
            let dense = raw_dense(&d, depth).unwrap();
            let sep = raw_collapse_separable(&s, depth).unwrap().to_dense().unwrap();
            assert!(rel(&sep, &dense) < 1e-12, "depth {depth}");
        }
        let s = SeparableKernel::product_momentum(&g, &hat, 3).unwrap();
        let d = factorized_momentum(&hat, &g, 3).unwrap();
        for j in 1..=2 {
            let a = collapse_b1_separable(j, &s).unwrap().to_dense().unwrap();
            assert!(rel(&a, &collapse_b1(j, &d).unwrap()) < 1e-12);
            let b = collapse_b2_separable(j, &s).unwrap().to_dense().unwrap();
            assert!(rel(&b, &collapse_b2(j, &d).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn zero_input_collapses_to_zero() {
        let g = grid();
        let z = MarginalKernel::zeros(&g, 2).unwrap();
        assert_eq!(raw_cubic(&z).unwrap().max_abs(), 0.0);
        let z3 = MarginalKernel::zeros(&g, 3).unwrap();
        assert_eq!(raw_quintic(&z3).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_particle_numbers() {
        let g = grid();
        let one = MarginalKernel::zeros(&g, 1).unwrap();
        assert!(raw_cubic(&one).is_err());
        let two = MarginalKernel::zeros(&g, 2).unwrap();
        assert!(raw_quintic(&two).is_err());
        assert!(collapse_b1(2, &two).is_err());
        assert!(collapse_b1(0, &two).is_err());
        let inter = Interaction::quintic(1.0).unwrap();
        assert!(collapse_cubic(&two, &inter).is_err());
        assert!(Interaction::cubic(0.5).is_err());
    }

    #[test]
    fn commutator_structure() {
        let g = grid();
        let gam = random_test_kernel(&g, 2, 1.0, 77).unwrap();
        let b = raw_cubic(&gam).unwrap();
        assert!(b.trace().norm() <= 1e-10 * sobolev_norm(&gam, 0.0));
        for mu in [1.0, -1.0] {
            let out = collapse_cubic(&gam, &Interaction::cubic(mu).unwrap()).unwrap();
            assert!(out.is_hermitian());
        }
        let g3 = random_test_kernel(&g, 3, 1.0, 78).unwrap();
        let q = raw_quintic(&g3).unwrap();
        assert!(q.trace().norm() <= 1e-10 * sobolev_norm(&g3, 0.0));
        assert!(collapse_quintic(&g3, &Interaction::quintic(-1.0).unwrap()).unwrap().is_hermitian());
    }

    #[test]
    fn collapse_of_symmetric_is_symmetric() {
        let g = GridSpec::new(1, 2.0 * PI, 6).unwrap();
        let gam = random_test_kernel(&g, 3, 1.0, 3).unwrap();
        assert!(raw_cubic(&gam).unwrap().is_symmetric());
    }

    #[test]
    fn partial_trace_commutes_with_free_evolution() {
        let g = grid();
        let gam = random_test_kernel(&g, 2, 1.0, 12).unwrap();
        let a = free_evolve(&gam, 0.6).partial_trace_last().unwrap();
        let b = free_evolve(&gam.partial_trace_last().unwrap(), 0.6);
        assert!(rel(&a, &b) < 1e-12);
    }
}
