//! Memory budget shared by every allocation of kernel tensors.
//!
//! The budget defaults to 1 GiB and can be replaced through the
//! `GPH_MEMORY_BUDGET` environment variable (plain bytes, or a number with a
//! `K`, `M`, `G` suffix, powers of 1024).

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub const DEFAULT_BUDGET_BYTES: u64 = 1 << 30;
pub const BUDGET_ENV_VAR: &str = "GPH_MEMORY_BUDGET";
pub const BYTES_PER_ENTRY: u64 = 16;

// 0 means "not yet resolved from the environment"
static BUDGET: AtomicU64 = AtomicU64::new(0);

/// Parse a budget string such as `2G`, `512M` or `1073741824`.
pub fn parse_budget(text: &str) -> Option<u64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    let (num, mult) = match t.chars().last()?.to_ascii_uppercase() {
        'K' => (&t[..t.len() - 1], 1u64 << 10),
        'M' => (&t[..t.len() - 1], 1u64 << 20),
        'G' => (&t[..t.len() - 1], 1u64 << 30),
        _ => (t, 1u64),
    };
    let value: f64 = num.trim().parse().ok()?;
    if !(value.is_finite() && value > 0.0) {
        return None;
    }
    Some((value * mult as f64) as u64)
}

/// Current budget in bytes.
pub fn budget_bytes() -> u64 {
    let cur = BUDGET.load(Ordering::Relaxed);
    if cur != 0 {
        return cur;
    }
    let resolved = std::env::var(BUDGET_ENV_VAR)
        .ok()
        .and_then(|v| parse_budget(&v))
        .unwrap_or(DEFAULT_BUDGET_BYTES);
    BUDGET.store(resolved, Ordering::Relaxed);
    resolved
}

/// Replace the process-wide budget.
pub fn set_budget_bytes(bytes: u64) {
    BUDGET.store(bytes.max(1), Ordering::Relaxed);
}

/// Fail with a resource error if `entries` complex doubles exceed the budget.
pub fn check_entries(entries: u128, what: &str) -> Result<()> {
    let requested = entries.saturating_mul(BYTES_PER_ENTRY as u128);
    let budget = budget_bytes() as u128;
    if requested > budget {
        return Err(Error::Resource {
            what: what.to_string(),
            requested,
            budget,
        });
    }
    Ok(())
}

/// Number of entries of a rank-2k kernel over `sites` lattice points.
pub fn kernel_entries(sites: usize, k: usize) -> u128 {
    (sites as u128).saturating_pow(2 * k as u32)
}
