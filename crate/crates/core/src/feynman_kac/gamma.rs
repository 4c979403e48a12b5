//! Pair-chain jump rates `Gamma` and the Feynman-Kac potential `V`.
//!
//! `Gamma_{x,x~,y,y~} = E[W_{x-y}] 1{x~=y~} + E[W_{x~-y~}] 1{x=y}
//!                     + E[W_{x-y} W_{x~-y}] 1{y=y~}`
//! with `W = K - delta_0`. Rates are shift invariant, so a row is stored as a
//! list of displacements `(a, b)` of the two coordinates, keyed by the
//! source difference `u = x - x~`.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::kernel::{kernel_moments, Kernel};
use crate::lattice::Site;

/// One row entry: the pair moves by `(a, b)` at `rate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairMove {
    pub a: Site,
    pub b: Site,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct GammaTable {
    dim: usize,
    kappa1: f64,
    kappa2: f64,
    /// `E[W_z]`, nonzero entries.
    mean_w: BTreeMap<Site, f64>,
    /// `C(p, q) = E[W_p W_q]`, nonzero entries.
    cross: BTreeMap<(Site, Site), f64>,
    /// `c(u) = sum_y E[W_y W_{y+u}]`; zero outside the map.
    autocorr: BTreeMap<Site, f64>,
}

impl GammaTable {
    pub fn new(kernel: &Kernel) -> GammaTable {
        let m = kernel_moments(kernel);
        let mut mean_w = kernel.centered_means();
        mean_w.retain(|_, v| *v != 0.0);
        GammaTable {
            dim: kernel.dim(),
            kappa1: m.kappa1,
            kappa2: m.kappa2,
            mean_w,
            cross: kernel.cross_moments(),
            autocorr: kernel.autocorrelation(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    fn origin(&self) -> Site {
        Site::origin(self.dim)
    }

    /// `V(u) = 2 kappa_1 + c(u)`.
    pub fn potential(&self, u: &Site) -> f64 {
        2.0 * self.kappa1 + self.autocorr.get(u).copied().unwrap_or(0.0)
    }

    /// Every difference `u` at which the potential or the interaction
    /// part of a row can differ from the far-field value.
    pub fn interaction_offsets(&self) -> BTreeSet<Site> {
        let mut out: BTreeSet<Site> = self.cross.keys().map(|(p, q)| *p - *q).collect();
        out.extend(self.autocorr.keys().copied());
        out.insert(self.origin());
        out
    }

    /// A difference far enough away that only single-coordinate moves act.
    pub fn far_offset(&self) -> Site {
        let reach = self
            .cross
            .keys()
            .map(|(p, q)| p.l1().max(q.l1()))
            .chain(self.mean_w.keys().map(|s| s.l1()))
            .max()
            .unwrap_or(0) as i32;
        let mut coords = vec![0; self.dim];
        coords[0] = 4 * reach + 3;
        Site::new(&coords).expect("dimension in range")
    }

    /// Direct evaluation of a single entry.
    pub fn gamma(&self, x: &Site, xt: &Site, y: &Site, yt: &Site) -> f64 {
        let mut g = 0.0;
        if xt == yt {
            g += self.mean_w.get(&(*x - *y)).copied().unwrap_or(0.0);
        }
        if x == y {
            g += self.mean_w.get(&(*xt - *yt)).copied().unwrap_or(0.0);
        }
        if y == yt {
            g += self.cross.get(&(*x - *y, *xt - *y)).copied().unwrap_or(0.0);
        }
        g
    }

    /// Row of the forward chain `(X, X~)` from a pair with difference `u`,
    /// diagonal term `(0, 0)` included. Entries are merged and sorted.
    pub fn x_row(&self, u: &Site) -> Vec<PairMove> {
        let o = self.origin();
        let mut row: BTreeMap<(Site, Site), f64> = BTreeMap::new();
        for (z, w) in &self.mean_w {
            *row.entry((-*z, o)).or_insert(0.0) += w;
            *row.entry((o, -*z)).or_insert(0.0) += w;
        }
        for ((p, q), c) in &self.cross {
            if *p - *q == *u {
                *row.entry((-*p, -*q)).or_insert(0.0) += c;
            }
        }
        finish(row)
    }

    /// Row of the dual chain `(Y, Y~)`: the pair `(x, x~)` moves to `(y, y~)`
    /// at rate `Gamma_{y,y~,x,x~}`.
    pub fn y_row(&self, u: &Site) -> Vec<PairMove> {
        let o = self.origin();
        let mut row: BTreeMap<(Site, Site), f64> = BTreeMap::new();
        for (z, w) in &self.mean_w {
            *row.entry((*z, o)).or_insert(0.0) += w;
            *row.entry((o, *z)).or_insert(0.0) += w;
        }
        if u.is_origin() {
            for ((p, q), c) in &self.cross {
                *row.entry((*p, *q)).or_insert(0.0) += c;
            }
        }
        finish(row)
    }

    /// `sum_{y,y~} Gamma_{x,x~,y,y~}` for `x - x~ = u`.
    pub fn row_sum(&self, u: &Site) -> f64 {
        self.x_row(u).iter().map(|m| m.rate).sum()
    }

    /// `sum_{y,y~} Gamma_{y,y~,x,x~}` for `x - x~ = u`.
    pub fn column_sum(&self, u: &Site) -> f64 {
        self.y_row(u).iter().map(|m| m.rate).sum()
    }

    /// Whether row sums equal column sums everywhere, i.e. counting measure
    /// is stationary for the pair chain. Equivalent to (K4).
    pub fn is_stationary(&self, tol: f64) -> bool {
        let mut offsets = self.interaction_offsets();
        offsets.insert(self.far_offset());
        offsets
            .iter()
            .all(|u| (self.row_sum(u) - self.column_sum(u)).abs() <= tol)
    }

    /// Off-diagonal entries below `-tol`, as `(u, a, b, rate)`.
    pub fn negative_offdiagonal(&self, tol: f64) -> Vec<(Site, Site, Site, f64)> {
        let mut offsets = self.interaction_offsets();
        offsets.insert(self.far_offset());
        let mut out = Vec::new();
        for u in &offsets {
            for row in [self.x_row(u), self.y_row(u)] {
                for m in row {
                    let diagonal = m.a.is_origin() && m.b.is_origin();
                    if !diagonal && m.rate < -tol {
                        out.push((*u, m.a, m.b, m.rate));
                    }
                }
            }
        }
        out.sort_by_key(|x| (x.0, x.1, x.2));
        out.dedup_by(|x, y| (x.0, x.1, x.2) == (y.0, y.1, y.2));
        out
    }

    /// `V(u)` over the interaction offsets plus the far-field value.
    pub fn potential_table(&self) -> (BTreeMap<Site, f64>, f64) {
        let table = self
            .interaction_offsets()
            .into_iter()
            .map(|u| (u, self.potential(&u)))
            .collect();
        (table, 2.0 * self.kappa1)
    }
}

fn finish(row: BTreeMap<(Site, Site), f64>) -> Vec<PairMove> {
    row.into_iter()
        .filter(|(_, r)| *r != 0.0)
        .map(|((a, b), rate)| PairMove { a, b, rate })
        .collect()
}

/// Convenience wrapper matching the module's operation name.
pub fn gamma_rates(kernel: &Kernel) -> GammaTable {
    GammaTable::new(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_bcpp_kernel;
    use crate::kernel::tests::{general_kernel, identity_kernel, single_offset_kernel};
    use crate::lattice::{box_sites, l1_ball};
    use proptest::prelude::*;

    #[test]
    fn bcpp_potential() {
        let g = gamma_rates(&make_bcpp_kernel(3, 1.0).unwrap());
        let o = Site::origin(3);
        assert!((g.potential(&o) - 17.0 / 7.0).abs() < 1e-12);
        for u in l1_ball(3, 2).into_iter().filter(|u| !u.is_origin()) {
            assert!((g.potential(&u) - 10.0 / 7.0).abs() < 1e-12, "V({u})");
        }
        assert!(g.is_stationary(1e-12));
        assert!(g.negative_offdiagonal(1e-12).is_empty());
    }

    #[test]
    fn identity_kernel_has_no_rates() {
        let g = gamma_rates(&identity_kernel(2));
        let o = Site::origin(2);
        assert!(g.x_row(&o).is_empty());
        assert!(g.y_row(&o).is_empty());
        assert_eq!(g.potential(&o), 0.0);
        assert_eq!(g.potential(&g.far_offset()), 0.0);
    }

    #[test]
    fn k4_violation_breaks_stationarity() {
        let o = Site::origin(1);
        let e = Site::unit(1, 0, 1);
        let k = Kernel::new(1, vec![(0.5, vec![]), (0.5, vec![(o, 1.0), (e, 1.0), (-e, 1.0)])])
            .unwrap();
        assert!(!gamma_rates(&k).is_stationary(1e-12));
    }

    #[test]
    fn rows_match_direct_entries() {
        let k = make_bcpp_kernel(2, 0.7).unwrap();
        let g = gamma_rates(&k);
        let x = Site::new(&[1, 0]).unwrap();
        for xt in box_sites(2, 2) {
            let u = x - xt;
            let row = g.x_row(&u);
            let dual = g.y_row(&u);
            for y in box_sites(2, 3).into_iter().map(|s| s + x) {
                for yt in box_sites(2, 3).into_iter().map(|s| s + xt) {
                    let direct = g.gamma(&x, &xt, &y, &yt);
                    let listed = row
                        .iter()
                        .find(|m| m.a == y - x && m.b == yt - xt)
                        .map_or(0.0, |m| m.rate);
                    assert!((direct - listed).abs() < 1e-14, "({x},{xt})->({y},{yt})");
                    let transposed = g.gamma(&y, &yt, &x, &xt);
                    let listed = dual
                        .iter()
                        .find(|m| m.a == y - x && m.b == yt - xt)
                        .map_or(0.0, |m| m.rate);
                    assert!((transposed - listed).abs() < 1e-14);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn row_sum_is_potential(k in general_kernel()) {
            let g = gamma_rates(&k);
            let mut offsets = g.interaction_offsets();
            offsets.insert(g.far_offset());
            for u in offsets {
                prop_assert!((g.row_sum(&u) - g.potential(&u)).abs() <= 1e-12);
            }
        }

        #[test]
        fn k4_gives_flat_potential(k in single_offset_kernel()) {
            let g = gamma_rates(&k);
            prop_assert!(g.is_stationary(1e-12));
            for u in l1_ball(k.dim(), 2 * k.range()) {
                let expected = 2.0 * g.kappa1() + if u.is_origin() { g.kappa2() } else { 0.0 };
                prop_assert!((g.potential(&u) - expected).abs() <= 1e-12);
            }
        }

        #[test]
        fn stationarity_iff_k4(k in general_kernel()) {
            let r = crate::kernel::validate_kernel(&k);
            prop_assert_eq!(gamma_rates(&k).is_stationary(1e-12), r.k4_orthogonal);
        }
    }
}
