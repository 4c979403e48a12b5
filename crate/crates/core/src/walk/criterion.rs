use std::collections::BTreeMap;

use serde::Serialize;

use super::{green, walk_from_kernel, GreenSolver, WalkSpec};
use crate::error::{Error, Result};
use crate::kernel::{kernel_moments, Kernel};
use crate::lattice::Site;

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    /// `kappa_2 G(0) / 2`.
    pub value: f64,
    pub satisfied: bool,
    pub kappa2: f64,
    /// `None` when `kappa_2 = 0` makes the Green function irrelevant.
    pub g0: Option<f64>,
    pub error_estimate: f64,
}

/// Evaluates `kappa_2 G(0) / 2 < 1` for the kernel's symmetrized walk.
pub fn survival_criterion(kernel: &Kernel, solver: &dyn GreenSolver) -> Result<Criterion> {
    if kernel.dim() <= 2 {
        return Err(Error::RecurrentDimension(kernel.dim()));
    }
    let kappa2 = kernel_moments(kernel).kappa2;
    if kappa2 == 0.0 {
        return Ok(Criterion {
            value: 0.0,
            satisfied: true,
            kappa2,
            g0: None,
            error_estimate: 0.0,
        });
    }
    let walk = walk_from_kernel(kernel, true)?;
    let table = green(&walk, kappa2, &[], solver)?;
    Ok(Criterion {
        value: table.criterion_value,
        satisfied: table.criterion_value < 1.0,
        kappa2,
        g0: Some(table.g0),
        error_estimate: kappa2 * table.error_estimate / 2.0,
    })
}

/// `1 / (2 d (1 - 2 pi_d))`, the BCPP threshold above which the criterion
/// holds.
pub fn bcpp_critical_lambda(dim: usize, solver: &dyn GreenSolver) -> Result<f64> {
    if dim <= 2 {
        return Err(Error::RecurrentDimension(dim));
    }
    let walk = WalkSpec::simple(dim, 1.0)?;
    let table = green(&walk, 0.0, &[], solver)?;
    Ok(1.0 / (2.0 * dim as f64 * (1.0 - 2.0 * table.pi_d)))
}

/// `h(x) = 1 + kappa_2 G(x) / (2 - kappa_2 G(0))`, the exponential moment
/// of the local time of `S` at the origin.
pub fn h_of_x(kernel: &Kernel, offsets: &[Site], solver: &dyn GreenSolver) -> Result<BTreeMap<Site, f64>> {
    if kernel.dim() <= 2 {
        return Err(Error::RecurrentDimension(kernel.dim()));
    }
    let kappa2 = kernel_moments(kernel).kappa2;
    if kappa2 == 0.0 {
        return Ok(offsets.iter().map(|x| (*x, 1.0)).collect());
    }
    let walk = walk_from_kernel(kernel, true)?;
    let table = green(&walk, kappa2, offsets, solver)?;
    if table.criterion_value >= 1.0 {
        return Err(Error::DivergentH(table.criterion_value));
    }
    Ok(offsets.iter().map(|x| (*x, table.h_values[x])).collect())
}
