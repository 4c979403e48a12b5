//! The dual pair chain `(Y, Y~)` with generator given by the transposed
//! `Gamma`, and its weighted estimator
//! `sum_{x,x~} E[eta_bar_{t,x} eta_bar_{t,x~}] g(x, x~)
//!    = sum eta_0x eta_0x~ E^{(x,x~)}[exp(int_0^t (V*(Y_s - Y~_s) - 2 kappa_1) ds) g(Y_t, Y~_t)]`,
//! where `V*` is the column sum of `Gamma`. Under (K4) the exponent is
//! `kappa_2` times the time spent on the diagonal.

use rand::Rng;

use super::chain::{run_unweighted, run_weighted, WeightedChain};
use super::fk3::Estimate;
use super::gamma::{GammaTable, PairMove};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::Site;
use crate::rng::{child_seed, run_blocks, AliasTable};
use crate::stats::RunningStats;

#[derive(Clone, Debug)]
struct Row {
    moves: Vec<PairMove>,
    table: AliasTable,
    rate: f64,
    potential: f64,
}

impl Row {
    fn new(gamma: &GammaTable, u: &Site) -> Result<Row> {
        let all = gamma.y_row(u);
        let column_sum: f64 = all.iter().map(|m| m.rate).sum();
        let moves: Vec<PairMove> = all
            .into_iter()
            .filter(|m| !(m.a.is_origin() && m.b.is_origin()))
            .collect();
        if let Some(m) = moves.iter().find(|m| m.rate < 0.0) {
            return Err(Error::UnsupportedKernel(format!(
                "pair chain rate {} for move ({}, {}) at difference {u} is negative; use the oracle instead",
                m.rate, m.a, m.b
            )));
        }
        let rate = moves.iter().map(|m| m.rate).sum();
        let table = if moves.is_empty() {
            AliasTable::new(&[1.0])
        } else {
            AliasTable::new(&moves.iter().map(|m| m.rate).collect::<Vec<_>>())
        };
        Ok(Row {
            moves,
            table,
            rate,
            potential: column_sum - 2.0 * gamma.kappa1(),
        })
    }
}

/// `(Y, Y~)` with jump rates `Gamma_{y,y~,x,x~}`.
///
/// Rows depend on the difference `u = y - y~` only through whether `u`
/// lies in the finite interaction set; all other differences share one row.
#[derive(Clone, Debug)]
pub struct PairChain {
    near: Vec<(Site, Row)>,
    far: Row,
}

impl PairChain {
    pub fn new(kernel: &Kernel) -> Result<PairChain> {
        let gamma = GammaTable::new(kernel);
        let mut near = Vec::new();
        let far = Row::new(&gamma, &gamma.far_offset())?;
        // y_row only has joint moves on the diagonal.
        near.push((Site::origin(kernel.dim()), Row::new(&gamma, &Site::origin(kernel.dim()))?));
        for u in gamma.interaction_offsets() {
            if !u.is_origin() {
                let row = Row::new(&gamma, &u)?;
                if row.moves != far.moves || row.potential != far.potential {
                    near.push((u, row));
                }
            }
        }
        Ok(PairChain { near, far })
    }

    #[inline]
    fn row(&self, u: &Site) -> &Row {
        self.near.iter().find(|(v, _)| v == u).map_or(&self.far, |(_, r)| r)
    }
}

impl WeightedChain for PairChain {
    type State = (Site, Site);

    #[inline]
    fn sojourn(&self, s: &(Site, Site)) -> (f64, f64) {
        let row = self.row(&(s.0 - s.1));
        (row.rate, row.potential)
    }

    #[inline]
    fn jump<R: Rng + ?Sized>(&self, s: &(Site, Site), rng: &mut R) -> (Site, Site) {
        let row = self.row(&(s.0 - s.1));
        let m = &row.moves[row.table.sample(rng)];
        (s.0 + m.a, s.1 + m.b)
    }
}

/// Estimates `sum_{x,x~} E[eta_bar_{t,x} eta_bar_{t,x~}] g(x, x~)` with the
/// tilted sojourn scheme (or the plain one when `tilted` is false).
#[allow(clippy::too_many_arguments)]
pub fn pair_chain_estimate(
    kernel: &Kernel,
    initial: &[(Site, f64)],
    t: f64,
    g: &(dyn Fn(&Site, &Site) -> f64 + Sync),
    samples: u64,
    seed: u64,
    tilted: bool,
) -> Result<Estimate> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let chain = PairChain::new(kernel)?;
    let mut value = 0.0;
    let mut var = 0.0;
    let mut k = 0u64;
    for (x, a) in initial {
        for (y, b) in initial {
            let blocks = run_blocks(samples, 4096, child_seed(seed, k), |rng, n| {
                (0..n)
                    .map(|_| {
                        let ((p, q), lw) = run_weighted(&chain, (*x, *y), t, tilted, rng);
                        lw.exp() * g(&p, &q)
                    })
                    .collect::<RunningStats>()
            });
            k += 1;
            let mut s = RunningStats::new();
            for blk in &blocks {
                s.merge(blk);
            }
            value += a * b * s.mean;
            var += (a * b).powi(2) * s.variance() / s.count as f64;
        }
    }
    Ok(Estimate {
        value,
        standard_error: var.sqrt(),
        samples,
        trimmed_mean: value,
        trim_fraction: 0.0,
        method: if tilted { "pair_chain_tilted" } else { "pair_chain_plain" }.to_string(),
    })
}

/// Samples `Y_t - Y~_t` without weights, started from `(start, origin)`.
pub fn sample_pair_difference(chain: &PairChain, start: Site, t: f64, samples: u64, seed: u64) -> Vec<Site> {
    let o = Site::origin(start.dim());
    run_blocks(samples, 4096, seed, |rng, n| {
        (0..n)
            .map(|_| {
                let (p, q) = run_unweighted(chain, (start, o), t, rng);
                p - q
            })
            .collect::<Vec<Site>>()
    })
    .into_iter()
    .flatten()
    .collect()
}
