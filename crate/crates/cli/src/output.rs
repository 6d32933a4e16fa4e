//! Files written into the output directory.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use gp_hierarchy::kernels::io::write_kernel;
use gp_hierarchy::kernels::HierarchySequence;

/// Row of a per-quantity CSV: `iteration,k,j,t,value,bound,ratio`; blank where not applicable.
#[derive(Clone, Debug, Default, Serialize)]
pub struct QuantityRow {
    pub iteration: Option<usize>,
    pub k: Option<usize>,
    pub j: Option<usize>,
    pub t: Option<f64>,
    pub value: f64,
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Info,
    Flag,
}

/// Row of `checks.csv`: `check,parameters,value,reference,status`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub parameters: String,
    pub value: f64,
    pub reference: f64,
    pub status: Status,
}

impl CheckRow {
    pub fn new(check: &str, parameters: String, value: f64, reference: f64, status: Status) -> Self {
        Self {
            check: check.into(),
            parameters,
            value,
            reference,
            status,
        }
    }

    /// Pass when `value <= reference`, flag otherwise.
    pub fn at_most(check: &str, parameters: String, value: f64, reference: f64) -> Self {
        let status = if value <= reference { Status::Pass } else { Status::Flag };
        Self::new(check, parameters, value, reference, status)
    }
}

/// Worst status: any flag gives exit code 2. Informational rows count as flags.
pub fn overall(checks: &[CheckRow]) -> Status {
    checks.iter().map(|c| c.status).max().unwrap_or(Status::Pass)
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.path(name), text + "\n").with_context(|| format!("writing {name}"))
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {name}"))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Final-state kernels as `state/level_<k>.bin`. Levels too large to densify are skipped.
    pub fn kernels(&self, state: &HierarchySequence, warnings: &mut Vec<String>) -> Result<()> {
        let dir = self.path("state");
        fs::create_dir_all(&dir)?;
        for level in state.levels() {
            let k = level.k();
            match level.to_dense() {
                Ok(d) => {
                    let f = fs::File::create(dir.join(format!("level_{k}.bin")))?;
                    write_kernel(&mut BufWriter::new(f), &d)?;
                }
                Err(e) => warnings.push(format!("level {k} not written: {e}")),
            }
        }
        Ok(())
    }
}
