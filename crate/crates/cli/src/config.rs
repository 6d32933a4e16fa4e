//! Run configuration file (JSON).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use gp_hierarchy::kernels::io::{read_kernel, read_momentum_array};
use gp_hierarchy::kernels::{HierarchySequence, Level};
use gp_hierarchy::nls::Wavefunction;
use gp_hierarchy::norms::NormParams;
use gp_hierarchy::operators::Interaction;
use gp_hierarchy::solver::{Closure, Quadrature, SolverConfig, Storage};
use gp_hierarchy::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ClosureName {
    #[value(name = "free_top")]
    FreeTop,
    #[value(name = "zero_top")]
    ZeroTop,
    #[value(name = "factorized_top")]
    FactorizedTop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureName {
    Trapezoid,
    Simpson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageName {
    Dense,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Gaussian {
        width: f64,
        amplitude: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        carrier: Option<Vec<i64>>,
    },
    PlaneWave {
        modes: Vec<i64>,
        amplitude: f64,
    },
    /// Momentum coefficients in the binary kernel format with `k = 0`.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    Factorized { profile: Profile },
    /// One binary kernel file per level `1..=depth`.
    Levels { paths: Vec<PathBuf> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSettings {
    /// Defaults to `n, n+1, n+2`.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<f64>,
    #[serde(default = "default_sup_cutoffs")]
    pub sup_cutoffs: Vec<f64>,
    #[serde(default = "default_p_cutoff")]
    pub p_cutoff: f64,
    #[serde(default = "default_cells")]
    pub cells_per_unit: usize,
    #[serde(default = "default_m_range")]
    pub binomial_m: [u32; 2],
}

fn default_cutoffs() -> Vec<f64> {
    vec![4.0, 8.0, 16.0, 32.0]
}
fn default_sup_cutoffs() -> Vec<f64> {
    vec![4.0, 8.0, 16.0, 32.0, 64.0]
}
fn default_p_cutoff() -> f64 {
    64.0
}
fn default_cells() -> usize {
    gp_hierarchy::verify::DEFAULT_CELLS_PER_UNIT
}
fn default_m_range() -> [u32; 2] {
    [5, 25]
}

impl Default for LemmaSettings {
    fn default() -> Self {
        Self {
            betas: None,
            cutoffs: default_cutoffs(),
            sup_cutoffs: default_sup_cutoffs(),
            p_cutoff: default_p_cutoff(),
            cells_per_unit: default_cells(),
            binomial_m: default_m_range(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSettings {
    /// Defaults to the run's alpha.
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default = "default_k_range")]
    pub k_range: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Repeat the estimate on a grid with twice the points per axis.
    #[serde(default)]
    pub refine_grid: bool,
}

fn default_k_range() -> Vec<usize> {
    vec![1, 2]
}
fn default_trials() -> usize {
    50
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            alphas: None,
            k_range: default_k_range(),
            trials: default_trials(),
            refine_grid: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSettings {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Sobolev index of the error norm.
    #[serde(default)]
    pub alpha: f64,
}

fn default_tolerance() -> f64 {
    1e-3
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            alpha: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub interaction: Interaction,
    pub alpha: f64,
    pub xi: f64,
    pub depth: usize,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default = "default_closure")]
    pub closure: ClosureName,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureName,
    #[serde(default = "default_tol")]
    pub tol_cauchy: f64,
    #[serde(default)]
    pub collapse_constant: Option<f64>,
    #[serde(default = "default_storage")]
    pub storage: StorageName,
    #[serde(default)]
    pub oracle_substeps: Option<usize>,
    pub initial_data: InitialData,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub emit_plots: bool,
    #[serde(default)]
    pub lemmas: LemmaSettings,
    #[serde(default)]
    pub estimate: EstimateSettings,
    #[serde(default)]
    pub compare: CompareSettings,
}

fn default_closure() -> ClosureName {
    ClosureName::FreeTop
}
fn default_quadrature() -> QuadratureName {
    QuadratureName::Trapezoid
}
fn default_tol() -> f64 {
    1e-12
}
fn default_storage() -> StorageName {
    StorageName::Dense
}
fn default_output() -> PathBuf {
    PathBuf::from("output")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))?;
        cfg.check_ranges()?;
        Ok(cfg)
    }

    /// Read, parse and resolve file references relative to the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.check_files()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.initial_data {
            InitialData::Factorized {
                profile: Profile::File { path },
            } => fix(path),
            InitialData::Levels { paths } => paths.iter_mut().for_each(fix),
            _ => {}
        }
    }

    fn check_files(&self) -> Result<()> {
        let paths: Vec<&PathBuf> = match &self.initial_data {
            InitialData::Factorized {
                profile: Profile::File { path },
            } => vec![path],
            InitialData::Levels { paths } => paths.iter().collect(),
            _ => vec![],
        };
        for p in paths {
            if !p.is_file() {
                bail!("initial_data: file not found: {}", p.display());
            }
        }
        Ok(())
    }

    fn check_ranges(&self) -> Result<()> {
        GridSpec::new(self.grid.dim(), self.grid.length(), self.grid.points()).map_err(|e| anyhow!("grid: {e}"))?;
        Interaction::new(self.interaction.kind, self.interaction.mu).map_err(|e| anyhow!("interaction: {e}"))?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            bail!("alpha: must be a non-negative number, got {}", self.alpha);
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            bail!("xi: must lie in (0, 1), got {}", self.xi);
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bail!("horizon: must be positive, got {}", self.horizon);
        }
        if self.steps == 0 {
            bail!("steps: must be at least 1");
        }
        let d = self.interaction.depth();
        if self.depth < d + 1 {
            bail!("depth: must be at least {} for this interaction, got {}", d + 1, self.depth);
        }
        if self.max_iterations == Some(0) {
            bail!("max_iterations: must be at least 1");
        }
        if !(self.tol_cauchy >= 0.0) {
            bail!("tol_cauchy: must be non-negative");
        }
        if let Some(c) = self.collapse_constant {
            if !(c > 0.0 && c.is_finite()) {
                bail!("collapse_constant: must be positive, got {c}");
            }
        }
        if self.quadrature == QuadratureName::Simpson && self.steps % 2 != 0 {
            bail!("quadrature: simpson needs an even number of steps");
        }
        if let InitialData::Levels { paths } = &self.initial_data {
            if paths.len() != self.depth {
                bail!("initial_data.paths: need {} level files, got {}", self.depth, paths.len());
            }
        }
        if self.estimate.trials == 0 || self.estimate.k_range.is_empty() || self.estimate.k_range.contains(&0) {
            bail!("estimate: need trials >= 1 and positive k values");
        }
        if self.lemmas.binomial_m[0] == 0 || self.lemmas.binomial_m[0] > self.lemmas.binomial_m[1] || self.lemmas.binomial_m[1] > 30 {
            bail!("lemmas.binomial_m: need 1 <= lo <= hi <= 30");
        }
        Ok(())
    }

    pub fn norm(&self) -> NormParams {
        NormParams {
            alpha: self.alpha,
            xi: self.xi,
        }
    }

    /// The one-particle wavefunction behind factorized data, if any.
    pub fn wavefunction(&self) -> Result<Option<Wavefunction>> {
        let InitialData::Factorized { profile } = &self.initial_data else {
            return Ok(None);
        };
        let n = self.grid.dim();
        let phi = match profile {
            Profile::Gaussian {
                width,
                amplitude,
                center,
                carrier,
            } => {
                let center = center.clone().unwrap_or_else(|| vec![0.0; n]);
                let carrier = carrier.clone().unwrap_or_else(|| vec![0; n]);
                Wavefunction::gaussian(&self.grid, *width, *amplitude, &center, &carrier)
                    .map_err(|e| anyhow!("initial_data.profile: {e}"))?
            }
            Profile::PlaneWave { modes, amplitude } => {
                Wavefunction::plane_wave(&self.grid, modes, *amplitude).map_err(|e| anyhow!("initial_data.profile: {e}"))?
            }
            Profile::File { path } => {
                let mut f = std::io::BufReader::new(std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
                let (grid, hat) = read_momentum_array(&mut f).with_context(|| format!("reading {}", path.display()))?;
                if grid != self.grid {
                    bail!("initial_data.profile.path: grid in {} differs from the config grid", path.display());
                }
                Wavefunction::from_momentum(&grid, &hat)?
            }
        };
        Ok(Some(phi))
    }

    pub fn solver_config(&self, phi: Option<&Wavefunction>) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.grid, self.interaction, self.norm(), self.depth, self.horizon, self.steps);
        if let Some(m) = self.max_iterations {
            cfg.max_iterations = m;
        }
        cfg.closure = match self.closure {
            ClosureName::FreeTop => Closure::FreeTop,
            ClosureName::ZeroTop => Closure::ZeroTop,
            ClosureName::FactorizedTop => {
                let phi = phi.ok_or_else(|| anyhow!("closure: factorized_top needs factorized initial_data"))?;
                Closure::FactorizedTop(std::sync::Arc::new(phi.clone()))
            }
        };
        cfg.quadrature = match self.quadrature {
            QuadratureName::Trapezoid => Quadrature::Trapezoid,
            QuadratureName::Simpson => Quadrature::Simpson,
        };
        cfg.storage = match self.storage {
            StorageName::Dense => Storage::Dense,
            StorageName::Mixed => Storage::Mixed,
        };
        cfg.tol_cauchy = self.tol_cauchy;
        cfg.collapse_constant = self.collapse_constant;
        cfg.oracle_substeps = self.oracle_substeps;
        Ok(cfg)
    }

    /// Initial hierarchy in the storage form chosen by `solver`.
    pub fn initial_hierarchy(&self, phi: Option<&Wavefunction>, solver: &SolverConfig) -> Result<HierarchySequence> {
        match &self.initial_data {
            InitialData::Zero => {
                let levels = (1..=self.depth)
                    .map(|k| {
                        let zero = gp_hierarchy::kernels::SeparableKernel::zero(&self.grid, k);
                        Level::separable(zero).into_form(solver.level_is_dense(k))
                    })
                    .collect::<gp_hierarchy::Result<Vec<_>>>()?;
                Ok(HierarchySequence::new(levels, self.xi)?)
            }
            InitialData::Factorized { .. } => {
                let phi = phi.ok_or_else(|| anyhow!("initial_data: missing wavefunction"))?;
                let hat = phi.momentum();
                let levels = (1..=self.depth)
                    .map(|k| {
                        let s = gp_hierarchy::kernels::SeparableKernel::product_momentum(&self.grid, &hat, k)?;
                        Level::separable(s).into_form(solver.level_is_dense(k))
                    })
                    .collect::<gp_hierarchy::Result<Vec<_>>>()?;
                Ok(HierarchySequence::new(levels, self.xi)?)
            }
            InitialData::Levels { paths } => {
                let mut levels = Vec::with_capacity(paths.len());
                for (i, p) in paths.iter().enumerate() {
                    let mut f = std::io::BufReader::new(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?);
                    let kernel = read_kernel(&mut f).with_context(|| format!("reading {}", p.display()))?;
                    if kernel.k() != i + 1 || kernel.grid() != &self.grid {
                        bail!("initial_data.paths[{i}]: expected a level-{} kernel on the config grid", i + 1);
                    }
                    levels.push(Level::dense(kernel));
                }
                Ok(HierarchySequence::new(levels, self.xi)?)
            }
        }
    }
}
