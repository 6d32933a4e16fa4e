//! Numerical checks of the standalone estimates: the convolution-type integral
//! inequality, the collapse operator bound (empirical constant), and the
//! binomial growth behind uniqueness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::dense::apply_bracket_weight_into;
use crate::kernels::{factorized_momentum, random_test_kernel};
use crate::norms::{sobolev_norm, wave_sobolev_norm};
use crate::operators::{collapsed_mode, raw_cubic, raw_quintic, InteractionKind};
use crate::spectral::{bracket, GridSpec, MomentumPoint, C64};
use crate::sum::NeumaierSum;

/// Midpoint cells per unit length used by default for the integral checks.
pub const DEFAULT_CELLS_PER_UNIT: usize = 16;

/// Safety factor applied to the largest observed collapse ratio.
pub const SAFETY_FACTOR: f64 = 1.5;

fn br_pow(x: &[f64], beta: f64) -> f64 {
    (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(-beta / 2.0)
}

/// `I(p) = int int_{|q_a|, |q'_a| <= cutoff} <p>^b / (<p + q' - q>^b <q>^b <q'>^b) dq dq'`
/// by tensor midpoint quadrature with `cells_per_unit` cells per unit length.
pub fn convolution_integral(beta: f64, n: usize, p: &MomentumPoint, cutoff: f64, cells_per_unit: usize) -> Result<f64> {
    if !(cutoff > 0.0) || cells_per_unit == 0 || n == 0 || p.components.len() != n {
        return Err(Error::InvalidArgument("need cutoff > 0, resolution > 0 and an n-dimensional p".into()));
    }
    let per_axis = (2.0 * cutoff * cells_per_unit as f64).round().max(1.0) as usize;
    let h = 2.0 * cutoff / per_axis as f64;
    let points = per_axis
        .checked_pow(n as u32)
        .filter(|&v| v <= 1 << 22)
        .ok_or_else(|| Error::InvalidArgument("quadrature grid too large".into()))?;
    let node = |i: usize| -cutoff + (i as f64 + 0.5) * h;
    // g at every point of the q grid
    let mut coords = vec![0.0; n];
    let mut g = Vec::with_capacity(points);
    for i in 0..points {
        let mut rest = i;
        for a in (0..n).rev() {
            coords[a] = node(rest % per_axis);
            rest /= per_axis;
        }
        g.push(br_pow(&coords, beta));
    }
    // f over all index differences q' - q
    let dw = 2 * per_axis - 1;
    let dcount = dw.pow(n as u32);
    let mut f = Vec::with_capacity(dcount);
    for d in 0..dcount {
        let mut rest = d;
        for a in (0..n).rev() {
            let off = (rest % dw) as f64 - (per_axis as f64 - 1.0);
            coords[a] = p.components[a] + off * h;
            rest /= dw;
        }
        f.push(br_pow(&coords, beta));
    }
    let digits = |i: usize, out: &mut Vec<usize>| {
        out.clear();
        let mut rest = i;
        for _ in 0..n {
            out.push(rest % per_axis);
            rest /= per_axis;
        }
    };
    let mut total = NeumaierSum::new();
    let (mut di, mut dj) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..points {
        digits(i, &mut di);
        let mut row = 0.0;
        for j in 0..points {
            digits(j, &mut dj);
            // digits are little-endian; difference code is big-endian over axes
            let mut code = 0usize;
            for a in (0..n).rev() {
                code = code * dw + (dj[a] + per_axis - 1 - di[a]);
            }
            row += g[j] * f[code];
        }
        total.add(g[i] * row);
    }
    Ok(bracket(p).powf(beta) * total.value() * h.powi(2 * n as i32))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderReport {
    pub beta: f64,
    pub cutoffs: Vec<f64>,
    pub values: Vec<f64>,
    /// `values[i+1] / values[i]`
    pub ratios: Vec<f64>,
    /// `|v_last - v_prev| / v_last`
    pub last_relative_change: f64,
}

fn ladder_from(beta: f64, cutoffs: &[f64], values: Vec<f64>) -> LadderReport {
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    let last_relative_change = match values.len() {
        0 | 1 => 0.0,
        l => (values[l - 1] - values[l - 2]).abs() / values[l - 1].abs(),
    };
    LadderReport {
        beta,
        cutoffs: cutoffs.to_vec(),
        values,
        ratios,
        last_relative_change,
    }
}

/// `I(p)` at each cutoff.
pub fn integral_cutoff_ladder(beta: f64, n: usize, p: &MomentumPoint, cutoffs: &[f64], cells_per_unit: usize) -> Result<LadderReport> {
    let values = cutoffs
        .iter()
        .map(|&c| convolution_integral(beta, n, p, c, cells_per_unit))
        .collect::<Result<Vec<_>>>()?;
    Ok(ladder_from(beta, cutoffs, values))
}

/// `max_{|p| <= cutoff/2} I(p)` at each cutoff, over `p = 0, 1, 2, 4, ...` along the first axis.
///
/// This is the truncated version of the supremum the inequality controls; it
/// stays bounded for `beta > n` and grows with the cutoff at `beta = n`.
pub fn integral_sup_ladder(beta: f64, n: usize, cutoffs: &[f64], cells_per_unit: usize) -> Result<LadderReport> {
    let mut values = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let mut best = 0.0f64;
        for p in p_ladder(c / 2.0) {
            let mut comps = vec![0.0; n];
            comps[0] = p;
            best = best.max(convolution_integral(beta, n, &MomentumPoint::new(comps), c, cells_per_unit)?);
        }
        values.push(best);
    }
    Ok(ladder_from(beta, cutoffs, values))
}

/// `0, 1, 2, 4, ...` up to `limit`.
pub fn p_ladder(limit: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut p = 1.0;
    while p <= limit {
        out.push(p);
        p *= 2.0;
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupReport {
    pub beta: f64,
    pub cutoff: f64,
    pub momenta: Vec<f64>,
    pub values: Vec<f64>,
    pub mirrored: Vec<f64>,
    pub max: f64,
    /// Spread of the last two ladder values relative to the larger.
    pub tail_spread: f64,
    /// Largest `|I(p) - I(-p)| / I(p)`.
    pub asymmetry: f64,
}

/// `I(p)` along `momenta` (first axis), with mirror values `I(-p)`.
pub fn integral_sup_check(beta: f64, n: usize, cutoff: f64, momenta: &[f64], cells_per_unit: usize) -> Result<SupReport> {
    if !(beta > n as f64) {
        return Err(Error::InvalidArgument(format!("sup check needs beta > n, got beta={beta}, n={n}")));
    }
    let at = |p: f64| {
        let mut c = vec![0.0; n];
        c[0] = p;
        convolution_integral(beta, n, &MomentumPoint::new(c), cutoff, cells_per_unit)
    };
    let values = momenta.iter().map(|&p| at(p)).collect::<Result<Vec<_>>>()?;
    let mirrored = momenta.iter().map(|&p| at(-p)).collect::<Result<Vec<_>>>()?;
    let max = values.iter().copied().fold(0.0, f64::max);
    let tail_spread = match values.len() {
        0 | 1 => 0.0,
        l => (values[l - 1] - values[l - 2]).abs() / values[l - 1].max(values[l - 2]),
    };
    let asymmetry = values
        .iter()
        .zip(&mirrored)
        .map(|(a, b)| (a - b).abs() / a.abs())
        .fold(0.0, f64::max);
    Ok(SupReport {
        beta,
        cutoff,
        momenta: momenta.to_vec(),
        values,
        mirrored,
        max,
        tail_spread,
        asymmetry,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioRecord {
    pub k: usize,
    pub trial: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub alpha: f64,
    pub points: usize,
    /// `SAFETY_FACTOR * max ratio`
    pub c_hat: f64,
    pub max_ratio: f64,
    pub ratios: Vec<RatioRecord>,
    /// `(k, max ratio at k)`
    pub per_k_max: Vec<(usize, f64)>,
    /// Largest over smallest per-k maximum.
    pub k_spread: f64,
    /// Set when the per-k maxima differ by a factor 2 or more.
    pub flagged: bool,
}

fn trial_seed(seed: u64, trial: usize, k: usize) -> u64 {
    seed ^ ((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ ((k as u64) << 56)
}

/// Collapse ratios `||B gamma||_{H^a_k} / (k ||gamma||_{H^a_{k+d}})` over random test kernels,
/// one estimate per entry of `alphas`. Each trial draw is shared across the alphas.
pub fn estimate_collapse_constants(
    alphas: &[f64],
    grid: &GridSpec,
    kind: InteractionKind,
    k_range: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ConstantEstimate>> {
    if k_range.is_empty() || trials == 0 {
        return Err(Error::InvalidArgument("need at least one k and one trial".into()));
    }
    let d = match kind {
        InteractionKind::Cubic => 1,
        InteractionKind::Quintic => 2,
    };
    let mut ratios: Vec<Vec<RatioRecord>> = vec![Vec::new(); alphas.len()];
    for trial in 0..trials {
        for &k in k_range {
            if k == 0 {
                return Err(Error::InvalidArgument("k must be positive".into()));
            }
            let base = random_test_kernel(grid, k + d, 0.0, trial_seed(seed, trial, k))?;
            let mut weighted = None;
            for (ai, &alpha) in alphas.iter().enumerate() {
                let gamma = if alpha == 0.0 {
                    &base
                } else {
                    let buf = weighted.get_or_insert_with(|| base.clone());
                    apply_bracket_weight_into(&base, -alpha, buf);
                    &*buf
                };
                let out = match kind {
                    InteractionKind::Cubic => raw_cubic(gamma)?,
                    InteractionKind::Quintic => raw_quintic(gamma)?,
                };
                let ratio = sobolev_norm(&out, alpha) / (k as f64 * sobolev_norm(gamma, alpha));
                ratios[ai].push(RatioRecord { k, trial, ratio });
            }
        }
    }
    Ok(alphas
        .iter()
        .zip(ratios)
        .map(|(&alpha, ratios)| summarize(alpha, grid.points(), k_range, ratios))
        .collect())
}

fn summarize(alpha: f64, points: usize, k_range: &[usize], ratios: Vec<RatioRecord>) -> ConstantEstimate {
    let max_ratio = ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let per_k_max: Vec<(usize, f64)> = k_range
        .iter()
        .map(|&k| {
            (
                k,
                ratios.iter().filter(|r| r.k == k).map(|r| r.ratio).fold(0.0, f64::max),
            )
        })
        .collect();
    let hi = per_k_max.iter().map(|x| x.1).fold(0.0, f64::max);
    let lo = per_k_max.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let k_spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    ConstantEstimate {
        alpha,
        points,
        c_hat: SAFETY_FACTOR * max_ratio,
        max_ratio,
        ratios,
        per_k_max,
        k_spread,
        flagged: !(k_spread < 2.0),
    }
}

/// Single-alpha form of [`estimate_collapse_constants`] for the cubic collapse.
pub fn estimate_collapse_constant(alpha: f64, grid: &GridSpec, k_range: &[usize], trials: usize, seed: u64) -> Result<ConstantEstimate> {
    Ok(estimate_collapse_constants(&[alpha], grid, InteractionKind::Cubic, k_range, trials, seed)?.remove(0))
}

/// Closed-form `||B (phi x phi)||_{H^a} / ||phi||_{H^a}^4` from one-particle data.
///
/// With `c` the band-limited coefficients of `|phi|^2 phi`, `B = c (x) phi* - phi (x) c*` and
/// `||B||^2 = 2 ||c||^2 ||phi||^2 - 2 Re(<c, phi>^2)`.
pub fn factorized_ratio_closed_form(grid: &GridSpec, hat: &[C64], alpha: f64) -> f64 {
    let c = collapsed_mode(grid, hat, 1);
    let w = grid.bracket_powers(2.0 * alpha);
    let m = grid.momentum_measure();
    let inner: C64 = c.iter().zip(hat).zip(&w).map(|((a, b), wi)| a * b.conj() * *wi).sum::<C64>() * m;
    let nc = wave_sobolev_norm(grid, &c, alpha);
    let np = wave_sobolev_norm(grid, hat, alpha);
    let b2 = 2.0 * nc * nc * np * np - 2.0 * (inner * inner).re;
    b2.max(0.0).sqrt() / np.powi(4)
}

/// Same ratio through the dense collapse path.
pub fn factorized_ratio_dense(grid: &GridSpec, hat: &[C64], alpha: f64) -> Result<f64> {
    let g2 = factorized_momentum(hat, grid, 2)?;
    Ok(sobolev_norm(&raw_cubic(&g2)?, alpha) / sobolev_norm(&g2, alpha))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinomialRow {
    pub m: u32,
    /// Exact `C(2m-1, m)` in decimal.
    pub binomial: String,
    /// `C(2m-1, m) 4^{-m}`
    pub scaled: f64,
    /// `C(2m-1, m) / (4^m / sqrt(m))`
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinomialReport {
    pub rows: Vec<BinomialRow>,
    pub decreasing: bool,
    /// `(max - min) / max` of `ratio` over the last half of the rows.
    pub tail_spread: f64,
}

/// Exact `C(2m-1, m)` for `1 <= m <= 30`.
pub fn central_binomial(m: u32) -> Result<u128> {
    if m == 0 || m > 30 {
        return Err(Error::InvalidArgument(format!("m must lie in 1..=30, got {m}")));
    }
    let n = 2 * m as u128 - 1;
    let mut c: u128 = 1;
    for i in 0..m as u128 {
        c = c * (n - i) / (i + 1);
    }
    Ok(c)
}

pub fn binomial_growth_check(m_range: std::ops::RangeInclusive<u32>) -> Result<BinomialReport> {
    let mut rows = Vec::new();
    for m in m_range {
        let c = central_binomial(m)?;
        let scaled = c as f64 * 0.25f64.powi(m as i32);
        rows.push(BinomialRow {
            m,
            binomial: c.to_string(),
            scaled,
            ratio: scaled * (m as f64).sqrt(),
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].scaled < w[0].scaled);
    let tail = &rows[rows.len() / 2..];
    let hi = tail.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let lo = tail.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(BinomialReport {
        rows,
        decreasing,
        tail_spread: if hi > 0.0 { (hi - lo) / hi } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nls::Wavefunction;
    use std::f64::consts::PI;

    #[test]
    fn binomial_examples() {
        let r = binomial_growth_check(1..=2).unwrap();
        assert_eq!(r.rows[0].binomial, "1");
        assert!((r.rows[0].ratio - 0.25).abs() < 1e-15);
        assert_eq!(r.rows[1].binomial, "3");
        assert!((r.rows[1].ratio - 3.0 * 2f64.sqrt() / 16.0).abs() < 1e-15);
        assert!((r.rows[1].ratio - 0.2652).abs() < 1e-4);
        let s10 = central_binomial(10).unwrap() as f64 / 4f64.powi(10);
        let s20 = central_binomial(20).unwrap() as f64 / 4f64.powi(20);
        assert!(s20 < s10);
        assert_eq!(central_binomial(30).unwrap(), 59_132_290_782_430_712);
        assert!(central_binomial(31).is_err());
    }

    #[test]
    fn integral_regression_value() {
        // adaptive 2-D quadrature (absolute tolerance 1e-13) of the cutoff-8 integral
        let reference = 3.277_319_011_709_460_4;
        let v = convolution_integral(2.0, 1, &MomentumPoint::new(vec![0.0]), 8.0, 64).unwrap();
        assert!((v - reference).abs() < 1e-5 * reference, "{v}");
    }

    #[test]
    fn integral_decreases_with_beta() {
        let p = MomentumPoint::new(vec![0.0]);
        let a = convolution_integral(2.0, 1, &p, 8.0, 8).unwrap();
        let b = convolution_integral(3.0, 1, &p, 8.0, 8).unwrap();
        assert!(b < a);
    }

    #[test]
    fn two_dimensional_integral_is_finite() {
        let v = convolution_integral(3.0, 2, &MomentumPoint::new(vec![0.5, -0.5]), 2.0, 4).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn sup_check_symmetry() {
        let r = integral_sup_check(2.0, 1, 8.0, &[0.0, 1.0, 2.0], 8).unwrap();
        assert!(r.asymmetry < 1e-10);
        assert!(integral_sup_check(1.0, 1, 8.0, &[0.0], 8).is_err());
    }

    #[test]
    fn factorized_ratio_paths_agree() {
        let g = GridSpec::new(1, 2.0 * PI, 8).unwrap();
        let phi = Wavefunction::gaussian(&g, 0.8, 1.0, &[0.3], &[1]).unwrap();
        let hat = phi.momentum();
        let a = factorized_ratio_closed_form(&g, &hat, 1.0);
        let b = factorized_ratio_dense(&g, &hat, 1.0).unwrap();
        assert!((a - b).abs() < 1e-10 * b);
    }

    #[test]
    fn constant_estimate_is_deterministic() {
        let g = GridSpec::new(1, 2.0 * PI, 4).unwrap();
        let a = estimate_collapse_constant(1.0, &g, &[1, 2], 3, 7).unwrap();
        let b = estimate_collapse_constant(1.0, &g, &[1, 2], 3, 7).unwrap();
        assert_eq!(a.c_hat, b.c_hat);
        assert!(a.ratios.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
    }
}
