//! One-particle NLS `i d_t phi = -Lap phi + mu |phi|^{2s} phi` (s = 1 cubic,
//! s = 2 quintic) by Strang splitting, and factorized reference trajectories.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::kernels::{HierarchySequence, Level, SeparableKernel};
use crate::operators::{free_phase, Interaction, InteractionKind};
use crate::solver::{SolverConfig, Trajectory};
use crate::spectral::{forward_transform, inverse_transform, GridSpec};
use crate::sum::NeumaierSum;

/// Position-space grid function.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefunction {
    grid: GridSpec,
    values: Vec<C64>,
}

impl Wavefunction {
    pub fn new(grid: &GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(Error::DimensionMismatch {
                expected: grid.sites(),
                found: values.len(),
            });
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("wavefunction".into()));
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn from_momentum(grid: &GridSpec, hat: &[C64]) -> Result<Self> {
        Self::new(grid, inverse_transform(hat, grid)?)
    }

    /// Periodized Gaussian `A prod_a sum_j exp(-(x_a - c_a - j L)^2 / (2 w^2))` times
    /// a lattice carrier `exp(i p0 . x)`.
    pub fn gaussian(grid: &GridSpec, width: f64, amplitude: f64, center: &[f64], carrier: &[i64]) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidArgument(format!("gaussian width must be positive, got {width}")));
        }
        let n = grid.dim();
        if center.len() != n || carrier.len() != n {
            return Err(Error::InvalidArgument("center and carrier need one entry per axis".into()));
        }
        let l = grid.length();
        let images = (6.0 * width / l).ceil() as i64 + 1;
        let values = (0..grid.sites())
            .map(|s| {
                let x = grid.position(s);
                let mut env = amplitude;
                let mut phase = 0.0;
                for a in 0..n {
                    let sum: f64 = (-images..=images)
                        .map(|j| {
                            let d = x[a] - center[a] - j as f64 * l;
                            (-d * d / (2.0 * width * width)).exp()
                        })
                        .sum();
                    env *= sum;
                    phase += grid.frequency(carrier[a]) * x[a];
                }
                C64::from_polar(env, phase)
            })
            .collect();
        Self::new(grid, values)
    }

    /// `A exp(i p0 . x)` for a lattice momentum with mode numbers `modes`.
    pub fn plane_wave(grid: &GridSpec, modes: &[i64], amplitude: f64) -> Result<Self> {
        if grid.site_of_modes(modes).is_none() {
            return Err(Error::InvalidArgument(format!("{modes:?} is not a lattice momentum")));
        }
        let values = (0..grid.sites())
            .map(|s| {
                let x = grid.position(s);
                let ph: f64 = modes.iter().zip(&x).map(|(&m, xa)| grid.frequency(m) * xa).sum();
                C64::from_polar(amplitude, ph)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// `sum |phi|^2 (L/M)^n`
    pub fn mass(&self) -> f64 {
        let mut s = NeumaierSum::new();
        for z in &self.values {
            s.add(z.norm_sqr());
        }
        s.value() * self.grid.cell_volume()
    }

    pub fn momentum(&self) -> Vec<C64> {
        forward_transform(&self.values, &self.grid).expect("grid-sized wavefunction")
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|z| z * factor).collect(),
        }
    }

    /// Relative discrete L2 distance `||self - other|| / ||other||`.
    pub fn relative_distance(&self, other: &Wavefunction) -> f64 {
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.values.iter().map(|z| z.norm_sqr()).sum();
        (num / den).sqrt()
    }
}

fn power(kind: InteractionKind) -> i32 {
    match kind {
        InteractionKind::Cubic => 1,
        InteractionKind::Quintic => 2,
    }
}

/// Strang splitting with precomputed half-step kinetic phase.
struct Stepper {
    grid: GridSpec,
    half: Vec<C64>,
    dt: f64,
    inter: Interaction,
}

impl Stepper {
    fn new(grid: &GridSpec, dt: f64, inter: &Interaction) -> Self {
        Self {
            grid: *grid,
            half: free_phase(grid, 1, dt / 2.0),
            dt,
            inter: *inter,
        }
    }

    fn kinetic(&self, values: &mut Vec<C64>) {
        let mut hat = forward_transform(values, &self.grid).expect("grid-sized");
        hat.iter_mut().zip(&self.half).for_each(|(z, a)| *z *= a);
        *values = inverse_transform(&hat, &self.grid).expect("grid-sized");
    }

    fn step(&self, values: &mut Vec<C64>) {
        self.kinetic(values);
        let s = power(self.inter.kind);
        for z in values.iter_mut() {
            let dens = z.norm_sqr().powi(s);
            *z *= C64::from_polar(1.0, -self.dt * self.inter.mu * dens);
        }
        self.kinetic(values);
    }
}

/// One Strang step: half kinetic, full nonlinear phase, half kinetic.
pub fn split_step(phi: &Wavefunction, dt: f64, inter: &Interaction) -> Result<Wavefunction> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    let mut v = phi.values.clone();
    Stepper::new(&phi.grid, dt, inter).step(&mut v);
    Wavefunction::new(&phi.grid, v)
}

/// Evolve over `t` with `substeps` equal Strang steps.
pub fn evolve(phi: &Wavefunction, t: f64, substeps: usize, inter: &Interaction) -> Result<Wavefunction> {
    if t == 0.0 {
        return Ok(phi.clone());
    }
    let n = substeps.max(1);
    let st = Stepper::new(&phi.grid, t / n as f64, inter);
    let mut v = phi.values.clone();
    for _ in 0..n {
        st.step(&mut v);
    }
    Wavefunction::new(&phi.grid, v)
}

/// `int |grad phi|^2 + mu/2 |phi|^4` (cubic) or `+ mu/3 |phi|^6` (quintic).
pub fn energy(phi: &Wavefunction, inter: &Interaction) -> f64 {
    let g = &phi.grid;
    let hat = phi.momentum();
    let sq = g.momentum_squares();
    let mut kin = NeumaierSum::new();
    for (z, p2) in hat.iter().zip(&sq) {
        kin.add(z.norm_sqr() * p2);
    }
    let s = power(inter.kind);
    let mut pot = NeumaierSum::new();
    for z in &phi.values {
        pot.add(z.norm_sqr().powi(s + 1));
    }
    kin.value() * g.momentum_measure() + inter.mu / (s + 1) as f64 * pot.value() * g.cell_volume()
}

/// Smallest power-of-two substep count per interval whose doubling changes the
/// final state by less than `tol` (relative L2).
pub fn oracle_substeps(phi: &Wavefunction, interval: f64, intervals: usize, inter: &Interaction, tol: f64) -> Result<usize> {
    let total = interval * intervals as f64;
    let mut n = 4usize;
    let mut prev = evolve(phi, total, n * intervals, inter)?;
    while n < 1 << 16 {
        let next = evolve(phi, total, 2 * n * intervals, inter)?;
        let err = next.relative_distance(&prev);
        n *= 2;
        if err < tol || !err.is_finite() {
            break;
        }
        prev = next;
    }
    Ok(n)
}

/// Default per-interval oracle accuracy target.
pub const ORACLE_TOL: f64 = 1e-12;

/// NLS states at the config's nodes.
pub fn wavefunction_series(phi0: &Wavefunction, config: &SolverConfig) -> Result<Vec<Wavefunction>> {
    let dt = config.dt();
    let substeps = match config.oracle_substeps {
        Some(s) => s.max(1),
        None => oracle_substeps(phi0, dt, config.steps, &config.interaction, ORACLE_TOL)?,
    };
    let mut out = vec![phi0.clone()];
    for _ in 0..config.steps {
        let last = out.last().unwrap();
        out.push(evolve(last, dt, substeps, &config.interaction)?);
    }
    Ok(out)
}

/// `factorized(phi_t, k)` for `k = 1..=K` at every node.
pub fn factorized_trajectory(phi0: &Wavefunction, config: &SolverConfig) -> Result<Trajectory> {
    if phi0.grid() != &config.grid {
        return Err(Error::GridMismatch);
    }
    let series = wavefunction_series(phi0, config)?;
    let mut states = Vec::with_capacity(series.len());
    for phi in &series {
        let hat = phi.momentum();
        let levels = (1..=config.depth)
            .map(|k| {
                Level::separable(SeparableKernel::product_momentum(&config.grid, &hat, k)?)
                    .into_form(config.level_is_dense(k))
            })
            .collect::<Result<Vec<_>>>()?;
        states.push(HierarchySequence::new(levels, config.norm.xi)?);
    }
    Trajectory::new(config.times(), states)
}

/// Per-node relative `H^alpha` distance of level `k`: `||a - b|| / ||b||`.
pub fn compare_marginals(hierarchy: &Trajectory, oracle: &Trajectory, k: usize, alpha: f64) -> Result<Vec<f64>> {
    if hierarchy.nodes() != oracle.nodes() {
        return Err(Error::InvalidArgument("trajectories have different node sets".into()));
    }
    if k == 0 || k > hierarchy.depth() || k > oracle.depth() {
        return Err(Error::InvalidArgument(format!("level {k} missing from a trajectory")));
    }
    if hierarchy.states()[0].grid() != oracle.states()[0].grid() {
        return Err(Error::GridMismatch);
    }
    hierarchy
        .states()
        .iter()
        .zip(oracle.states())
        .map(|(a, b)| {
            let (la, lb) = (a.level(k), b.level(k));
            let den = lb.sobolev_norm(alpha);
            let num = la.distance(lb, alpha)?;
            Ok(if den > 0.0 { num / den } else { num })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormParams;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(1, 2.0 * PI, 16).unwrap()
    }

    #[test]
    fn mass_conserved_per_step() {
        let g = grid();
        let phi = Wavefunction::gaussian(&g, 0.7, 1.3, &[0.2], &[1]).unwrap();
        for inter in [Interaction::cubic(1.0).unwrap(), Interaction::quintic(-1.0).unwrap()] {
            let next = split_step(&phi, 0.01, &inter).unwrap();
            assert!((next.mass() - phi.mass()).abs() <= 1e-13 * phi.mass());
        }
    }

    #[test]
    fn plane_wave_exact_phase() {
        let g = grid();
        let a = 0.8;
        let phi = Wavefunction::plane_wave(&g, &[3], a).unwrap();
        let dt = 0.01;
        for (inter, s) in [(Interaction::cubic(1.0).unwrap(), 1), (Interaction::quintic(-1.0).unwrap(), 2)] {
            let next = split_step(&phi, dt, &inter).unwrap();
            let omega = 9.0 + inter.mu * a.powi(2 * s);
            let want = phi.scaled(C64::from_polar(1.0, -omega * dt));
            assert!(next.relative_distance(&want) < 1e-12);
        }
    }

    #[test]
    fn weak_field_is_free_flow() {
        let g = grid();
        let phi = Wavefunction::gaussian(&g, 0.6, 1e-4, &[0.0], &[0]).unwrap();
        let inter = Interaction::cubic(1.0).unwrap();
        let t = 0.3;
        let nl = evolve(&phi, t, 50, &inter).unwrap();
        let free = Wavefunction::from_momentum(&g, &crate::operators::free_evolve_momentum(&g, &phi.momentum(), t)).unwrap();
        assert!(nl.relative_distance(&free) < 1e-6);
    }

    #[test]
    fn gaussian_momentum_is_sampled_gaussian() {
        let g = GridSpec::new(1, 2.0 * PI, 12).unwrap();
        let w = 1.3;
        let phi = Wavefunction::gaussian(&g, w, 1.0, &[0.0], &[0]).unwrap();
        let hat = phi.momentum();
        let z = g.site_of_modes(&[0]).unwrap();
        for m in -3i64..=3 {
            let s = g.site_of_modes(&[m]).unwrap();
            let want = (-(m as f64).powi(2) * w * w / 2.0).exp();
            assert!((hat[s].re / hat[z].re - want).abs() < 1e-10);
        }
    }

    #[test]
    fn factorized_trajectory_structure() {
        let g = GridSpec::new(1, 2.0 * PI, 8).unwrap();
        let phi = Wavefunction::gaussian(&g, 1.0, 0.5, &[0.0], &[0]).unwrap();
        let cfg = SolverConfig::new(g, Interaction::cubic(1.0).unwrap(), NormParams::new(1.0, 0.5).unwrap(), 3, 0.05, 4);
        let traj = factorized_trajectory(&phi, &cfg).unwrap();
        let m = phi.mass();
        for s in traj.states() {
            for k in 1..=3 {
                let l = s.level(k);
                assert!((l.trace().re - m.powi(k as i32)).abs() < 1e-10 * m.powi(k as i32));
                let (h, sym) = l.structure_errors().unwrap();
                assert!(h < 1e-12 && sym < 1e-12);
            }
        }
        let same = compare_marginals(&traj, &traj, 1, 0.0).unwrap();
        assert!(same.iter().all(|&e| e == 0.0));
    }
}
