//! Torus discretization, momentum lattice and the Fourier convention.
//!
//! The torus is `[-L/2, L/2)^n` sampled with `M` points per axis. Position
//! site `i` on an axis sits at `x = L i / M - L/2`; momentum mode `m` on an
//! axis is `p = 2 pi m / L` with `m = -M/2, ..., M/2 - 1`. Momentum arrays are
//! stored in ascending mode order, so axis digit `a` carries mode `a - M/2`.
//! Multi-axis arrays are row-major with axis 0 most significant.
//!
//! Transform pair:
//!
//! ```text
//! f^(p) = (L/M)^n  sum_x f(x) exp(-i p.x)
//! f(x)  = L^{-n}   sum_p f^(p) exp(+i p.x)
//! ```
//!
//! so `sum_x |f|^2 (L/M)^n == sum_p |f^|^2 / L^n` exactly, and every momentum
//! integral `dq / (2 pi)^n` becomes the sum over the lattice times
//! [`GridSpec::momentum_measure`] `= 1/L^n`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Torus grid: dimension `n`, side length `L`, `M` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    length: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(n: usize, length: f64, points: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("dimension n must be at least 1".into()));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("side length must be positive, got {length}")));
        }
        if points < 4 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 4, got {points}"
            )));
        }
        Ok(Self { n, length, points })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Number of lattice sites `M^n`.
    pub fn sites(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    /// Lowest mode number on an axis, `-M/2`.
    pub fn min_mode(&self) -> i64 {
        -(self.points as i64) / 2
    }

    pub fn frequency(&self, mode: i64) -> f64 {
        2.0 * PI * mode as f64 / self.length
    }

    /// Per-axis momenta in storage order.
    pub fn axis_momenta(&self) -> Vec<f64> {
        (0..self.points as i64)
            .map(|a| self.frequency(a + self.min_mode()))
            .collect()
    }

    /// Per-axis positions in storage order.
    pub fn axis_positions(&self) -> Vec<f64> {
        (0..self.points)
            .map(|i| self.length * i as f64 / self.points as f64 - self.length / 2.0)
            .collect()
    }

    /// Mode numbers of the site with index `site`.
    pub fn modes_of(&self, site: usize) -> Vec<i64> {
        let m = self.points;
        let mut digits = vec![0i64; self.n];
        let mut rest = site;
        for a in (0..self.n).rev() {
            digits[a] = (rest % m) as i64 + self.min_mode();
            rest /= m;
        }
        digits
    }

    /// Site index for the given mode numbers, `None` outside the lattice.
    pub fn site_of_modes(&self, modes: &[i64]) -> Option<usize> {
        if modes.len() != self.n {
            return None;
        }
        let mut idx = 0usize;
        for &md in modes {
            let a = md - self.min_mode();
            if a < 0 || a >= self.points as i64 {
                return None;
            }
            idx = idx * self.points + a as usize;
        }
        Some(idx)
    }

    pub fn momentum(&self, site: usize) -> MomentumPoint {
        MomentumPoint {
            components: self.modes_of(site).into_iter().map(|m| self.frequency(m)).collect(),
        }
    }

    /// Position coordinates of position site `site`.
    pub fn position(&self, site: usize) -> Vec<f64> {
        let xs = self.axis_positions();
        let m = self.points;
        let mut out = vec![0.0; self.n];
        let mut rest = site;
        for a in (0..self.n).rev() {
            out[a] = xs[rest % m];
            rest /= m;
        }
        out
    }

    /// Momentum cell volume `(2 pi / L)^n`.
    pub fn quadrature_weight(&self) -> f64 {
        (2.0 * PI / self.length).powi(self.n as i32)
    }

    /// Weight of one lattice momentum sum approximating `dq/(2 pi)^n`, i.e. `1/L^n`.
    pub fn momentum_measure(&self) -> f64 {
        self.quadrature_weight() / (2.0 * PI).powi(self.n as i32)
    }

    /// Position cell volume `(L/M)^n`.
    pub fn cell_volume(&self) -> f64 {
        (self.length / self.points as f64).powi(self.n as i32)
    }

    /// `|p|^2` for every site.
    pub fn momentum_squares(&self) -> Vec<f64> {
        (0..self.sites()).map(|s| self.momentum(s).norm_sq()).collect()
    }

    /// `<p>^e` for every site.
    pub fn bracket_powers(&self, exponent: f64) -> Vec<f64> {
        (0..self.sites())
            .map(|s| bracket(&self.momentum(s)).powf(exponent))
            .collect()
    }
}

/// A point of the momentum lattice (or any real momentum vector).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumPoint {
    pub components: Vec<f64>,
}

impl MomentumPoint {
    pub fn new(components: Vec<f64>) -> Self {
        Self { components }
    }

    pub fn norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum()
    }
}

/// Japanese bracket `<p> = (1 + |p|^2)^{1/2}`.
pub fn bracket(p: &MomentumPoint) -> f64 {
    (1.0 + p.norm_sq()).sqrt()
}

/// Direction of a single-axis transform; see the module documentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisTransform {
    /// `h sum_x f(x) e^{-ipx}`
    ForwardMinus,
    /// `h sum_x f(x) e^{+ipx}` (the primed side of a kernel)
    ForwardPlus,
    /// `L^{-1} sum_p f(p) e^{+ipx}`
    InversePlus,
    /// `L^{-1} sum_p f(p) e^{-ipx}`
    InverseMinus,
}

/// FFT plans for one axis length.
pub struct AxisFft {
    points: usize,
    length: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AxisFft {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            points: grid.points,
            length: grid.length,
            forward: planner.plan_fft_forward(grid.points),
            inverse: planner.plan_fft_inverse(grid.points),
        }
    }

    /// Transform one line in place; `scratch` must have length `M`.
    fn line(&self, line: &mut [C64], scratch: &mut [C64], dir: AxisTransform) {
        let m = self.points;
        let half = m / 2;
        let h = self.length / m as f64;
        let inv_l = 1.0 / self.length;
        // sign (-1)^{a + M/2} for centered digit a
        let sign = |a: usize| if (a + half) % 2 == 0 { 1.0 } else { -1.0 };
        match dir {
            AxisTransform::ForwardMinus | AxisTransform::ForwardPlus => {
                scratch.copy_from_slice(line);
                match dir {
                    AxisTransform::ForwardMinus => self.forward.process(scratch),
                    _ => self.inverse.process(scratch),
                }
                // exp(-+ i p x) with x = L i/M - L/2 gives (-1)^m times the DFT
                // evaluated at mode m; for the + sign the DFT index is -m.
                for (a, out) in line.iter_mut().enumerate() {
                    let mode = a as i64 - half as i64;
                    let k = mode.rem_euclid(m as i64) as usize;
                    *out = scratch[k] * (h * sign(a));
                }
            }
            AxisTransform::InversePlus | AxisTransform::InverseMinus => {
                for (a, v) in line.iter().enumerate() {
                    let mode = a as i64 - half as i64;
                    let k = mode.rem_euclid(m as i64) as usize;
                    scratch[k] = *v * sign(a);
                }
                match dir {
                    AxisTransform::InversePlus => self.inverse.process(scratch),
                    _ => self.forward.process(scratch),
                }
                for (o, s) in line.iter_mut().zip(scratch.iter()) {
                    *o = *s * inv_l;
                }
            }
        }
    }

    /// Apply `dir` along `axis` of a row-major array with `axes` axes of length `M`.
    pub fn apply_axis(&self, data: &mut [C64], axes: usize, axis: usize, dir: AxisTransform) {
        let m = self.points;
        let stride = m.pow((axes - 1 - axis) as u32);
        let block = stride * m;
        let mut line = vec![C64::new(0.0, 0.0); m];
        let mut scratch = vec![C64::new(0.0, 0.0); m];
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                for (i, l) in line.iter_mut().enumerate() {
                    *l = data[base + i * stride];
                }
                self.line(&mut line, &mut scratch, dir);
                for (i, l) in line.iter().enumerate() {
                    data[base + i * stride] = *l;
                }
            }
        }
    }
}

fn check_len(grid: &GridSpec, values: &[C64]) -> Result<()> {
    if values.len() != grid.sites() {
        return Err(Error::DimensionMismatch {
            expected: grid.sites(),
            found: values.len(),
        });
    }
    Ok(())
}

/// Position grid function to momentum coefficients.
pub fn forward_transform(values: &[C64], grid: &GridSpec) -> Result<Vec<C64>> {
    check_len(grid, values)?;
    let fft = AxisFft::new(grid);
    let mut out = values.to_vec();
    for axis in 0..grid.n {
        fft.apply_axis(&mut out, grid.n, axis, AxisTransform::ForwardMinus);
    }
    Ok(out)
}

/// Momentum coefficients to position grid function.
pub fn inverse_transform(coeffs: &[C64], grid: &GridSpec) -> Result<Vec<C64>> {
    check_len(grid, coeffs)?;
    let fft = AxisFft::new(grid);
    let mut out = coeffs.to_vec();
    for axis in 0..grid.n {
        fft.apply_axis(&mut out, grid.n, axis, AxisTransform::InversePlus);
    }
    Ok(out)
}

/// Integer mode vectors of every site plus lattice arithmetic used by the
/// collapse contractions.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub grid: GridSpec,
    /// `modes[site * n + axis]`
    pub modes: Vec<i32>,
}

impl Lattice {
    pub fn new(grid: &GridSpec) -> Self {
        let n = grid.dim();
        let mut modes = Vec::with_capacity(grid.sites() * n);
        for s in 0..grid.sites() {
            modes.extend(grid.modes_of(s).into_iter().map(|m| m as i32));
        }
        Self { grid: *grid, modes }
    }

    pub fn sites(&self) -> usize {
        self.grid.sites()
    }

    #[inline]
    pub fn mode(&self, site: usize, axis: usize) -> i32 {
        self.modes[site * self.grid.dim() + axis]
    }

    /// Site for the mode vector, `None` when it leaves the lattice.
    pub fn site_of(&self, modes: &[i32]) -> Option<usize> {
        let m = self.grid.points() as i32;
        let lo = -m / 2;
        let mut idx = 0usize;
        for &md in modes {
            let a = md - lo;
            if a < 0 || a >= m {
                return None;
            }
            idx = idx * m as usize + a as usize;
        }
        Some(idx)
    }

    /// Table giving the site of `base + delta` for every site and every
    /// displacement `delta` with components in `[-span, span]`.
    pub fn displacement_table(&self, span: i32) -> DisplacementTable {
        let n = self.grid.dim();
        let width = (2 * span + 1) as usize;
        let count = width.pow(n as u32);
        let mut table = vec![u32::MAX; self.sites() * count];
        let mut target = vec![0i32; n];
        for s in 0..self.sites() {
            for d in 0..count {
                let mut rest = d;
                for a in (0..n).rev() {
                    let comp = (rest % width) as i32 - span;
                    rest /= width;
                    target[a] = self.mode(s, a) + comp;
                }
                if let Some(t) = self.site_of(&target) {
                    table[s * count + d] = t as u32;
                }
            }
        }
        DisplacementTable {
            n,
            span,
            count,
            table,
        }
    }
}

/// See [`Lattice::displacement_table`].
#[derive(Clone, Debug)]
pub struct DisplacementTable {
    n: usize,
    span: i32,
    count: usize,
    table: Vec<u32>,
}

pub const OUTSIDE: u32 = u32::MAX;

impl DisplacementTable {
    /// Index of the displacement vector `delta`.
    pub fn encode(&self, delta: &[i32]) -> usize {
        let width = (2 * self.span + 1) as usize;
        let mut idx = 0usize;
        for &c in &delta[..self.n] {
            debug_assert!(c.abs() <= self.span);
            idx = idx * width + (c + self.span) as usize;
        }
        idx
    }

    /// Site of `base + delta` (by encoded delta), or [`OUTSIDE`].
    #[inline]
    pub fn shift(&self, base: usize, delta: usize) -> u32 {
        self.table[base * self.count + delta]
    }
}
