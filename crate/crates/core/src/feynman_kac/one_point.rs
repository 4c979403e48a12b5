//! One-point function `E[eta_{t,x}] = e^{kappa_1 t} sum_y p_t(x, y) eta_{0,y}`,
//! computed from `m' = A m` with `A_{x,y} = E[K_{x-y} - delta_{x,y}]` on a box.

use serde::Serialize;

use super::ode::{integrate, OdeOptions, SparseMatrix};
use super::oracle::{leak_warnings, PairBox};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::Site;

#[derive(Clone, Debug, Serialize)]
pub struct OnePointSolution {
    pub radius: usize,
    pub times: Vec<f64>,
    pub sites: Vec<Site>,
    /// `mean[k][i] = E[eta_{times[k], sites[i]}]`.
    pub mean: Vec<Vec<f64>>,
    pub boundary_fraction: Vec<f64>,
    pub warnings: Vec<String>,
}

impl OnePointSolution {
    pub fn value(&self, k: usize, x: &Site) -> f64 {
        self.sites.binary_search(x).map_or(0.0, |i| self.mean[k][i])
    }
}

pub fn one_point_table(kernel: &Kernel, initial: &[(Site, f64)], times: &[f64], radius: usize) -> Result<OnePointSolution> {
    let pb = PairBox::new(kernel.dim(), radius);
    let mut m0 = vec![0.0; pb.sites.len()];
    for (x, a) in initial {
        let i = *pb
            .lookup
            .get(x)
            .ok_or_else(|| Error::InvalidArgument(format!("initial site {x} lies outside the box of radius {radius}")))?;
        m0[i] += a;
    }
    let w = kernel.centered_means();
    let rows = pb
        .sites
        .iter()
        .map(|x| {
            w.iter()
                .filter(|(_, v)| **v != 0.0)
                .filter_map(|(z, v)| pb.lookup.get(&(*x - *z)).map(|&j| (j, *v)))
                .collect()
        })
        .collect();
    let a = SparseMatrix::from_rows(rows);
    let (mean, _) = integrate(&a, &m0, times, OdeOptions::default())?;
    let range = kernel.range().max(1) as i64;
    let layer: Vec<bool> = pb.sites.iter().map(|s| s.linf() as i64 > radius as i64 - range).collect();
    let boundary_fraction: Vec<f64> = mean
        .iter()
        .map(|m| {
            let total: f64 = m.iter().map(|v| v.abs()).sum();
            let edge: f64 = m.iter().zip(&layer).filter(|(_, l)| **l).map(|(v, _)| v.abs()).sum();
            if total > 0.0 {
                edge / total
            } else {
                0.0
            }
        })
        .collect();
    let warnings = leak_warnings(times, &boundary_fraction, radius);
    Ok(OnePointSolution {
        radius,
        times: times.to_vec(),
        sites: pb.sites,
        mean,
        boundary_fraction,
        warnings,
    })
}

/// `E[eta_{t,x}]` on a box of radius `radius`.
pub fn one_point(kernel: &Kernel, initial: &[(Site, f64)], t: f64, x: &Site, radius: usize) -> Result<f64> {
    Ok(one_point_table(kernel, initial, &[t], radius)?.value(0, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{kernel_moments, make_bcpp_kernel};

    #[test]
    fn t_zero() {
        let k = make_bcpp_kernel(1, 1.0).unwrap();
        let init = [(Site::origin(1), 2.0)];
        assert_eq!(one_point(&k, &init, 0.0, &Site::origin(1), 4).unwrap(), 2.0);
    }

    #[test]
    fn normalized_mass_is_conserved() {
        let k = make_bcpp_kernel(2, 0.8).unwrap();
        let k1 = kernel_moments(&k).kappa1;
        let init = [(Site::origin(2), 1.0), (Site::unit(2, 1, -1), 0.5)];
        let sol = one_point_table(&k, &init, &[0.5, 1.0, 2.0], 12).unwrap();
        for (i, t) in sol.times.iter().enumerate() {
            let total: f64 = sol.mean[i].iter().sum::<f64>() * (-k1 * t).exp();
            assert!((total - 1.5).abs() < 1e-8, "t = {t}: {total}");
        }
    }

    #[test]
    fn drifted_kernel_moves_mass_forward() {
        // Branching only towards +e: the mean mass travels to the right.
        let o = Site::origin(1);
        let e = Site::unit(1, 0, 1);
        let k = Kernel::new(1, vec![(0.5, vec![]), (0.5, vec![(o, 1.0), (e, 1.0)])]).unwrap();
        let sol = one_point_table(&k, &[(o, 1.0)], &[2.0], 10).unwrap();
        assert!(sol.value(0, &e) > sol.value(0, &-e));
    }
}
