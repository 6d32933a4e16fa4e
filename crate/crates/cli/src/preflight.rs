//! Resource estimate printed before every solve.

use serde::Serialize;

use gp_hierarchy::budget::{budget_bytes, kernel_entries, BYTES_PER_ENTRY};
use gp_hierarchy::solver::{SolverConfig, Storage};

#[derive(Clone, Debug, Serialize)]
pub struct LevelSize {
    pub k: usize,
    pub entries: u128,
    pub dense: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Preflight {
    pub levels: Vec<LevelSize>,
    /// `N_t * sum_k (M^n)^{2k} * 16` bytes.
    pub dense_trajectory_bytes: u128,
    /// Two trajectories under the configured storage policy.
    pub resident_bytes: u128,
    /// Complex multiply-adds of the dense collapses in one Picard iteration.
    pub collapse_ops_per_iteration: u128,
    pub budget_bytes: u128,
    pub storage: String,
    pub within_budget: bool,
}

pub fn preflight(cfg: &SolverConfig) -> Preflight {
    let sites = cfg.grid.sites();
    let d = cfg.interaction.depth();
    let levels: Vec<LevelSize> = (1..=cfg.depth)
        .map(|k| LevelSize {
            k,
            entries: kernel_entries(sites, k),
            dense: cfg.level_is_dense(k),
        })
        .collect();
    let total: u128 = levels.iter().map(|l| l.entries).sum();
    let dense_trajectory_bytes = cfg.steps as u128 * total * BYTES_PER_ENTRY as u128;
    let resident_bytes = 2 * cfg.trajectory_bytes();
    let nodes = cfg.steps as u128 + 1;
    let collapse_ops_per_iteration = (1..=cfg.coupled_levels())
        .map(|k| kernel_entries(sites, k) * 2 * k as u128 * (sites as u128).pow(2 * d as u32))
        .sum::<u128>()
        * nodes;
    let budget = budget_bytes() as u128;
    let (storage, need) = match cfg.storage {
        Storage::Dense => ("dense", dense_trajectory_bytes),
        Storage::Mixed => ("mixed", resident_bytes),
    };
    Preflight {
        levels,
        dense_trajectory_bytes,
        resident_bytes,
        collapse_ops_per_iteration,
        budget_bytes: budget,
        storage: storage.into(),
        within_budget: need <= budget,
    }
}

fn human(bytes: u128) -> String {
    let b = bytes as f64;
    if b >= 1e9 {
        format!("{:.2} GB", b / 1e9)
    } else if b >= 1e6 {
        format!("{:.1} MB", b / 1e6)
    } else if b >= 1e3 {
        format!("{:.1} kB", b / 1e3)
    } else {
        format!("{bytes} B")
    }
}

impl Preflight {
    pub fn render(&self) -> String {
        let mut s = String::from("preflight:\n");
        for l in &self.levels {
            s += &format!(
                "  level {}: {} complex entries{}\n",
                l.k,
                l.entries,
                if l.dense { "" } else { " (held as product terms)" }
            );
        }
        s += &format!("  dense trajectory storage: {}\n", human(self.dense_trajectory_bytes));
        s += &format!("  resident estimate ({} storage): {}\n", self.storage, human(self.resident_bytes));
        s += &format!("  collapse multiply-adds per iteration: {:.3e}\n", self.collapse_ops_per_iteration as f64);
        s += &format!("  budget: {}\n", human(self.budget_bytes));
        s
    }
}
