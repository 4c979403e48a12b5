use rand::Rng;

use super::WalkSpec;
use crate::lattice::Site;
use crate::rng::{exponential, run_blocks, AliasTable};
use crate::stats::RunningStats;

/// Samples jumps of a walk in O(1).
#[derive(Clone, Debug)]
pub struct WalkSampler {
    jumps: Vec<Site>,
    table: AliasTable,
    total_rate: f64,
}

impl WalkSampler {
    pub fn new(walk: &WalkSpec) -> WalkSampler {
        let jumps = walk.rates.iter().map(|(z, _)| *z).collect();
        let weights: Vec<f64> = walk.rates.iter().map(|(_, r)| *r).collect();
        WalkSampler {
            jumps,
            table: AliasTable::new(&weights),
            total_rate: walk.total_rate,
        }
    }

    #[inline]
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    #[inline]
    pub fn jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        self.jumps[self.table.sample(rng)]
    }

    /// Position at time `horizon` started from `start`.
    pub fn run<R: Rng + ?Sized>(&self, start: Site, horizon: f64, rng: &mut R) -> Site {
        let mut x = start;
        let mut t = exponential(rng, self.total_rate);
        while t < horizon {
            x = x + self.jump(rng);
            t += exponential(rng, self.total_rate);
        }
        x
    }

    /// Time spent at the origin during `[0, horizon]`.
    pub fn local_time<R: Rng + ?Sized>(&self, start: Site, horizon: f64, rng: &mut R) -> f64 {
        let mut x = start;
        let mut t = 0.0;
        let mut local = 0.0;
        loop {
            let hold = exponential(rng, self.total_rate);
            let end = (t + hold).min(horizon);
            if x.is_origin() {
                local += end - t;
            }
            t += hold;
            if t >= horizon {
                return local;
            }
            x = x + self.jump(rng);
        }
    }
}

/// Monte Carlo estimate of the expected time spent at the origin up to
/// `horizon`, which increases to `G(0)` as the horizon grows.
pub fn local_time_at_origin(walk: &WalkSpec, horizon: f64, samples: u64, seed: u64) -> RunningStats {
    let sampler = WalkSampler::new(walk);
    let origin = Site::origin(walk.dim);
    let blocks = run_blocks(samples, 4096, seed, |rng, n| {
        (0..n).map(|_| sampler.local_time(origin, horizon, rng)).collect::<RunningStats>()
    });
    let mut total = RunningStats::new();
    for b in &blocks {
        total.merge(b);
    }
    total
}
