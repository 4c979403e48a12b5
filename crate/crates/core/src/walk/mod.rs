//! The random walk `S` with generator
//! `L_S f(x) = 1/2 sum_y (E[K_{x-y}] + E[K_{y-x}]) (f(y) - f(x))`,
//! its Green function and the survival criterion `kappa_2 G(0) / 2 < 1`.

mod criterion;
mod green;
mod sim;

use serde::Serialize;

pub use criterion::{bcpp_critical_lambda, h_of_x, survival_criterion, Criterion};
pub use green::{
    default_resolution, green, green_solver, BoxField, FourierQuadrature, GreenSolution, GreenSolver, GreenTable,
    TruncatedSolve, GREEN_METHODS,
};
pub use sim::{local_time_at_origin, WalkSampler};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::Site;

/// Jump rates of a continuous-time random walk on `Z^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkSpec {
    pub dim: usize,
    /// `(jump, rate)`, sorted by jump, positive rates only, no zero jump.
    pub rates: Vec<(Site, f64)>,
    pub total_rate: f64,
    pub symmetrized: bool,
}

impl WalkSpec {
    pub fn new(dim: usize, rates: Vec<(Site, f64)>, symmetrized: bool) -> Result<WalkSpec> {
        let mut rates: Vec<(Site, f64)> = rates
            .into_iter()
            .filter(|(z, r)| !z.is_origin() && *r > 0.0)
            .collect();
        rates.sort_by_key(|a| a.0);
        if rates.is_empty() {
            return Err(Error::DegenerateWalk);
        }
        let total_rate = rates.iter().map(|(_, r)| r).sum();
        Ok(WalkSpec {
            dim,
            rates,
            total_rate,
            symmetrized,
        })
    }

    /// Nearest-neighbour walk with rate `rate` towards each of the `2d`
    /// neighbours.
    pub fn simple(dim: usize, rate: f64) -> Result<WalkSpec> {
        let rates = (0..dim)
            .flat_map(|axis| [1, -1].map(|s| (Site::unit(dim, axis, s), rate)))
            .collect();
        WalkSpec::new(dim, rates, true)
    }

    pub fn rate(&self, jump: &Site) -> f64 {
        self.rates
            .binary_search_by(|(z, _)| z.cmp(jump))
            .map(|i| self.rates[i].1)
            .unwrap_or(0.0)
    }

    /// Multiplies every rate by `c`.
    pub fn scaled(&self, c: f64) -> WalkSpec {
        WalkSpec {
            dim: self.dim,
            rates: self.rates.iter().map(|(z, r)| (*z, r * c)).collect(),
            total_rate: self.total_rate * c,
            symmetrized: self.symmetrized,
        }
    }

    /// `phi(theta) = sum_z q(z) (1 - cos(z . theta))`, the symbol of `-L_S`.
    pub fn symbol(&self, theta: &[f64]) -> f64 {
        self.rates
            .iter()
            .map(|(z, r)| r * (1.0 - z.dot(theta).cos()))
            .sum()
    }
}

/// Walk driven by the kernel's mean vector.
///
/// With `symmetrized` the jump `z` has rate `(E[K_z] + E[K_{-z}]) / 2` (the
/// walk `S`). Otherwise this is the one-point walk `X` of
/// `L_X f(x) = sum_y E[K_{x-y}] (f(y) - f(x))`, which jumps by `z` at rate
/// `E[K_{-z}]`: the mean mass at `x` is fed from `x - z` when `K_z > 0`.
pub fn walk_from_kernel(kernel: &Kernel, symmetrized: bool) -> Result<WalkSpec> {
    let means = kernel.mean_values();
    let mut rates = std::collections::BTreeMap::new();
    for (z, m) in &means {
        if z.is_origin() || *m == 0.0 {
            continue;
        }
        if symmetrized {
            *rates.entry(*z).or_insert(0.0) += m / 2.0;
            *rates.entry(-*z).or_insert(0.0) += m / 2.0;
        } else {
            *rates.entry(-*z).or_insert(0.0) += m;
        }
    }
    WalkSpec::new(kernel.dim(), rates.into_iter().collect(), symmetrized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_bcpp_kernel;
    use crate::kernel::tests::identity_kernel;

    #[test]
    fn bcpp_walk_rates() {
        let w = walk_from_kernel(&make_bcpp_kernel(3, 1.0).unwrap(), true).unwrap();
        assert_eq!(w.rates.len(), 6);
        for (_, r) in &w.rates {
            assert!((r - 1.0 / 7.0).abs() < 1e-15);
        }
        assert!((w.total_rate - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_kernel_symmetrizes() {
        let o = Site::origin(1);
        let e = Site::unit(1, 0, 1);
        let (a, b) = (0.3, 0.1);
        let k = Kernel::new(
            1,
            vec![
                (0.6, vec![]),
                (a, vec![(o, 1.0), (e, 1.0)]),
                (b, vec![(o, 1.0), (-e, 1.0)]),
            ],
        )
        .unwrap();
        let s = walk_from_kernel(&k, true).unwrap();
        assert!((s.rate(&e) - (a + b) / 2.0).abs() < 1e-15);
        assert!((s.rate(&-e) - (a + b) / 2.0).abs() < 1e-15);
        let x = walk_from_kernel(&k, false).unwrap();
        assert!((x.rate(&-e) - a).abs() < 1e-15);
        assert!((x.rate(&e) - b).abs() < 1e-15);
    }

    #[test]
    fn identity_kernel_is_degenerate() {
        assert!(matches!(
            walk_from_kernel(&identity_kernel(3), true),
            Err(Error::DegenerateWalk)
        ));
    }
}
