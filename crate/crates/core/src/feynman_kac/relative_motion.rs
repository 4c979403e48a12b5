//! Two-sample comparison of `Y_t - Y~_t` (unweighted pair chain) with the
//! walk `S_{2t}`.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::pair_chain::{sample_pair_difference, PairChain};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::Site;
use crate::rng::{child_seed, run_blocks};
use crate::walk::{walk_from_kernel, WalkSampler};

/// Cells with fewer expected counts than this are pooled.
pub const MIN_CELL_COUNT: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoSampleReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub significance: f64,
    pub passed: bool,
    pub cells: usize,
    pub samples: u64,
    /// Walk clock used for the reference sample: 2 for `S_{2t}`.
    pub clock_factor: f64,
    pub warnings: Vec<String>,
}

/// Chi-squared two-sample test over shared cells, pooling sparse cells.
pub fn chi_squared_two_sample(a: &[Site], b: &[Site], significance: f64) -> Result<TwoSampleReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("two-sample test needs nonempty samples".into()));
    }
    let mut counts: BTreeMap<Site, (f64, f64)> = BTreeMap::new();
    for s in a {
        counts.entry(*s).or_insert((0.0, 0.0)).0 += 1.0;
    }
    for s in b {
        counts.entry(*s).or_insert((0.0, 0.0)).1 += 1.0;
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    // Pool cells whose smaller expected count is below the threshold.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (ca, cb) in counts.values() {
        let total = ca + cb;
        let expected = total * n1.min(n2) / (n1 + n2);
        if expected >= MIN_CELL_COUNT {
            cells.push((*ca, *cb));
        } else {
            pooled.0 += ca;
            pooled.1 += cb;
        }
    }
    let mut warnings = Vec::new();
    if pooled.0 + pooled.1 > 0.0 {
        if cells.is_empty() || (pooled.0 + pooled.1) * n1.min(n2) / (n1 + n2) >= MIN_CELL_COUNT {
            cells.push(pooled);
        } else if let Some(last) = cells.last_mut() {
            last.0 += pooled.0;
            last.1 += pooled.1;
        }
    }
    if cells.len() < 2 {
        warnings.push(format!(
            "underpowered: only {} cell(s) with expected count >= {MIN_CELL_COUNT}",
            cells.len()
        ));
    }
    let k1 = (n2 / n1).sqrt();
    let k2 = (n1 / n2).sqrt();
    let statistic: f64 = cells
        .iter()
        .map(|(x, y)| (k1 * x - k2 * y).powi(2) / (x + y))
        .sum();
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        1.0 - dist.cdf(statistic)
    };
    Ok(TwoSampleReport {
        statistic,
        degrees_of_freedom: dof,
        p_value,
        significance,
        passed: p_value > significance,
        cells: cells.len(),
        samples: a.len() as u64,
        clock_factor: 2.0,
        warnings,
    })
}

/// Compares `Y_t - Y~_t` from `(start, 0)` with `S` run for `clock_factor * t`
/// from `start`. The lemma uses `clock_factor = 2`; other values serve as
/// negative controls.
pub fn relative_motion_check_with(
    kernel: &Kernel,
    start: Site,
    t: f64,
    samples: u64,
    seed: u64,
    clock_factor: f64,
) -> Result<TwoSampleReport> {
    let chain = PairChain::new(kernel)?;
    let walk = WalkSampler::new(&walk_from_kernel(kernel, true)?);
    let pair = sample_pair_difference(&chain, start, t, samples, child_seed(seed, 1));
    let walk_samples: Vec<Site> = run_blocks(samples, 4096, child_seed(seed, 2), |rng, n| {
        (0..n).map(|_| walk.run(start, clock_factor * t, rng)).collect::<Vec<Site>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let mut report = chi_squared_two_sample(&pair, &walk_samples, 0.01)?;
    report.clock_factor = clock_factor;
    Ok(report)
}

/// The relative-motion law check at significance 0.01, started on the diagonal.
pub fn relative_motion_check(kernel: &Kernel, t: f64, samples: u64, seed: u64) -> Result<TwoSampleReport> {
    relative_motion_check_with(kernel, Site::origin(kernel.dim()), t, samples, seed, 2.0)
}
