//! Brute-force two-point oracle: `u(t, x, x~) = E[eta_{t,x} eta_{t,x~}]`
//! solves `u' = Gamma u` (that is `(L_{X,X~} + V) u`), integrated on the box
//! `[-R, R]^d` with `u = 0` outside.
//!
//! The state space has `(2R+1)^{2d}` entries. Feasible sizes: d = 1 up to
//! R of a few dozen, d = 2 up to R = 4 or 5; d >= 3 is out of reach and the
//! weighted-walk estimator takes over there.

use std::collections::BTreeMap;

use serde::Serialize;

use super::gamma::{GammaTable, PairMove};
use super::ode::{integrate, OdeOptions, SparseMatrix};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::{box_sites, Site};

/// Largest number of pair states the oracle accepts.
pub const MAX_ORACLE_STATES: usize = 2_000_000;

/// Boundary-layer weight above which a warning is emitted.
pub const LEAK_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct OracleSolution {
    pub dim: usize,
    pub radius: usize,
    pub times: Vec<f64>,
    pub sites: Vec<Site>,
    /// `u[k][i * n + j] = u(times[k], sites[i], sites[j])`.
    pub u: Vec<Vec<f64>>,
    /// Share of `sum |u|` carried by states within the kernel range of the
    /// box boundary, per time.
    pub boundary_fraction: Vec<f64>,
    pub warnings: Vec<String>,
    pub steps: usize,
}

impl OracleSolution {
    pub fn index(&self, x: &Site) -> Option<usize> {
        self.sites.binary_search(x).ok()
    }

    /// `u(times[k], x, x~)`; zero outside the box.
    pub fn value(&self, k: usize, x: &Site, xt: &Site) -> f64 {
        match (self.index(x), self.index(xt)) {
            (Some(i), Some(j)) => self.u[k][i * self.sites.len() + j],
            _ => 0.0,
        }
    }

    /// `sum_{x,x~} u(times[k], x, x~) g(x, x~)`.
    pub fn contract(&self, k: usize, g: &dyn Fn(&Site, &Site) -> f64) -> f64 {
        let n = self.sites.len();
        let mut acc = 0.0;
        for (i, x) in self.sites.iter().enumerate() {
            for (j, y) in self.sites.iter().enumerate() {
                acc += self.u[k][i * n + j] * g(x, y);
            }
        }
        acc
    }
}

/// Box index and pair-state helpers.
pub(crate) struct PairBox {
    pub sites: Vec<Site>,
    pub lookup: BTreeMap<Site, usize>,
}

impl PairBox {
    pub fn new(dim: usize, radius: usize) -> PairBox {
        let mut sites = box_sites(dim, radius as i32);
        sites.sort();
        let lookup = sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        PairBox { sites, lookup }
    }
}

fn boundary_layer(s: &Site, radius: usize, range: u32) -> bool {
    s.linf() as i64 > radius as i64 - range.max(1) as i64
}

/// Integrates the two-point equation and returns `u` at `times`.
pub fn oracle_two_point(kernel: &Kernel, initial: &[(Site, f64)], times: &[f64], radius: usize) -> Result<OracleSolution> {
    oracle_two_point_with(kernel, initial, times, radius, OdeOptions::default())
}

pub fn oracle_two_point_with(
    kernel: &Kernel,
    initial: &[(Site, f64)],
    times: &[f64],
    radius: usize,
    opts: OdeOptions,
) -> Result<OracleSolution> {
    let d = kernel.dim();
    let pb = PairBox::new(d, radius);
    let n = pb.sites.len();
    let states = n.checked_mul(n).filter(|&s| s <= MAX_ORACLE_STATES).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "oracle box of radius {radius} in d = {d} has more than {MAX_ORACLE_STATES} pair states"
        ))
    })?;
    let mut u0 = vec![0.0; states];
    for (x, a) in initial {
        let i = *pb.lookup.get(x).ok_or_else(|| {
            Error::InvalidArgument(format!("initial site {x} lies outside the oracle box of radius {radius}"))
        })?;
        for (y, b) in initial {
            let j = pb.lookup[y];
            u0[i * n + j] += a * b;
        }
    }
    let gamma = GammaTable::new(kernel);
    let mut rows_by_u: BTreeMap<Site, Vec<PairMove>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(states);
    for x in &pb.sites {
        for xt in &pb.sites {
            let u = *x - *xt;
            let moves = rows_by_u.entry(u).or_insert_with(|| gamma.x_row(&u));
            let row: Vec<(usize, f64)> = moves
                .iter()
                .filter_map(|m| {
                    let i = pb.lookup.get(&(*x + m.a))?;
                    let j = pb.lookup.get(&(*xt + m.b))?;
                    Some((i * n + j, m.rate))
                })
                .collect();
            rows.push(row);
        }
    }
    let a = SparseMatrix::from_rows(rows);
    let (u, steps) = integrate(&a, &u0, times, opts)?;
    let layer: Vec<bool> = pb.sites.iter().map(|s| boundary_layer(s, radius, kernel.range())).collect();
    let boundary_fraction: Vec<f64> = u
        .iter()
        .map(|v| {
            let total: f64 = v.iter().map(|x| x.abs()).sum();
            let edge: f64 = (0..states)
                .filter(|k| layer[k / n] || layer[k % n])
                .map(|k| v[k].abs())
                .sum();
            if total > 0.0 {
                edge / total
            } else {
                0.0
            }
        })
        .collect();
    let warnings = leak_warnings(times, &boundary_fraction, radius);
    Ok(OracleSolution {
        dim: d,
        radius,
        times: times.to_vec(),
        sites: pb.sites,
        u,
        boundary_fraction,
        warnings,
        steps,
    })
}

pub(crate) fn leak_warnings(times: &[f64], fractions: &[f64], radius: usize) -> Vec<String> {
    times
        .iter()
        .zip(fractions)
        .filter(|(_, f)| **f > LEAK_THRESHOLD)
        .map(|(t, f)| {
            format!("R too small: at t = {t} a fraction {f:.3e} of the solution sits at the boundary of the radius-{radius} box")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_bcpp_kernel;
    use crate::kernel::tests::identity_kernel;

    #[test]
    fn t_zero_is_outer_product() {
        let k = make_bcpp_kernel(1, 1.0).unwrap();
        let init = [(Site::origin(1), 1.0), (Site::unit(1, 0, 1), 2.0)];
        let sol = oracle_two_point(&k, &init, &[0.0], 3).unwrap();
        let e = Site::unit(1, 0, 1);
        assert_eq!(sol.value(0, &e, &Site::origin(1)), 2.0);
        assert_eq!(sol.value(0, &e, &e), 4.0);
        assert_eq!(sol.contract(0, &|_, _| 1.0), 9.0);
    }

    #[test]
    fn identity_kernel_is_static() {
        let init = [(Site::origin(2), 1.5)];
        let sol = oracle_two_point(&identity_kernel(2), &init, &[1.0], 2).unwrap();
        assert_eq!(sol.value(0, &Site::origin(2), &Site::origin(2)), 2.25);
    }

    #[test]
    fn symmetric_for_point_mass() {
        let k = make_bcpp_kernel(1, 1.0).unwrap();
        let sol = oracle_two_point(&k, &[(Site::origin(1), 1.0)], &[0.5], 6).unwrap();
        for x in &sol.sites {
            for y in &sol.sites {
                assert!((sol.value(0, x, y) - sol.value(0, y, x)).abs() < 1e-12);
            }
        }
        assert!(sol.warnings.is_empty(), "{:?}", sol.warnings);
    }

    #[test]
    fn total_mass_second_moment_grows_as_expected() {
        // d/dt E|eta|^2 = 2 kappa_1 E|eta|^2 + (sum_{p,q} C(p,q)) E[sum_z eta_z^2],
        // so e^{-2 kappa_1 t} E|eta_t|^2 is increasing and starts at 1.
        let k = make_bcpp_kernel(1, 1.0).unwrap();
        let sol = oracle_two_point(&k, &[(Site::origin(1), 1.0)], &[0.1, 0.3, 0.5], 8).unwrap();
        let k1 = 1.0 / 3.0;
        let mut last = 1.0;
        for (i, t) in sol.times.iter().enumerate() {
            let v = sol.contract(i, &|_, _| 1.0) * (-2.0 * k1 * t).exp();
            assert!(v > last);
            last = v;
        }
        // Short-time slope at 0 is sum C = kappa_2 = 1.
        let small = oracle_two_point(&k, &[(Site::origin(1), 1.0)], &[1e-4], 4).unwrap();
        let v = small.contract(0, &|_, _| 1.0) * (-2.0 * k1 * 1e-4f64).exp();
        assert!(((v - 1.0) / 1e-4 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn small_box_warns() {
        let k = make_bcpp_kernel(1, 1.0).unwrap();
        let sol = oracle_two_point(&k, &[(Site::origin(1), 1.0)], &[3.0], 2).unwrap();
        assert!(!sol.warnings.is_empty());
    }

    #[test]
    fn rejects_outside_initial() {
        let k = make_bcpp_kernel(1, 1.0).unwrap();
        assert!(oracle_two_point(&k, &[(Site::new(&[9]).unwrap(), 1.0)], &[1.0], 3).is_err());
    }
}
