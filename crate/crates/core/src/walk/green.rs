//! Green function `G(x) = int_0^inf P^0(S_t = x) dt` of a transient walk.
//!
//! Two interchangeable solvers sit behind [`GreenSolver`]:
//!
//! * `fourier_quadrature`: `G(x) = (2 pi)^-d int cos(x . theta) / phi(theta)`
//!   by a tensor midpoint rule at three dyadic resolutions with Richardson
//!   extrapolation. The singularity at `theta = 0` behaves like `|theta|^-2`;
//!   its midpoint errors expand in powers `h^(d-2)`, `h^d`, ... which the two
//!   extrapolation passes remove. Midpoint nodes never hit `theta = 0`
//!   because every level uses an even node count.
//! * `truncated_solve`: `(-L_S) g = delta_0` on the box `[-R, R]^d` with zero
//!   exterior values, by conjugate gradients. `G_R(x)` increases to `G(x)`;
//!   the estimate is refined from `R/2` to `R`.
//!
//! The return probability of the jump chain follows from the sojourn
//! decomposition `G(0) = (1 / total_rate) / (1 - pi_d)`, i.e.
//! `pi_d = 1 - 1 / (total_rate G(0))`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::WalkSpec;
use crate::error::{Error, Result};
use crate::lattice::Site;

/// Registered solver names.
pub const GREEN_METHODS: &[&str] = &["fourier_quadrature", "truncated_solve"];

/// Raw solver output.
#[derive(Clone, Debug, Serialize)]
pub struct GreenSolution {
    pub values: BTreeMap<Site, f64>,
    pub error_estimate: f64,
    pub method: &'static str,
    pub resolution: usize,
    /// `(resolution, G(0))` for each refinement level, coarse to fine.
    pub levels: Vec<(usize, f64)>,
}

pub trait GreenSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Computes `G` at `offsets` (the origin is always included).
    fn solve(&self, walk: &WalkSpec, offsets: &[Site]) -> Result<GreenSolution>;
}

/// Default resolution per method and dimension.
pub fn default_resolution(method: &str, dim: usize) -> usize {
    match method {
        "truncated_solve" => match dim {
            0..=3 => 25,
            4 => 16,
            5 => 8,
            _ => 5,
        },
        _ => match dim {
            0..=3 => 128,
            4 => 48,
            5 => 24,
            _ => 16,
        },
    }
}

/// Looks a solver up by name.
pub fn green_solver(name: &str, dim: usize, resolution: Option<usize>) -> Result<Box<dyn GreenSolver>> {
    let resolution = resolution.unwrap_or_else(|| default_resolution(name, dim));
    match name {
        "fourier_quadrature" => Ok(Box::new(FourierQuadrature::new(resolution)?)),
        "truncated_solve" => Ok(Box::new(TruncatedSolve::new(resolution)?)),
        _ => Err(Error::UnknownStrategy {
            kind: "green method",
            name: name.to_string(),
            known: GREEN_METHODS.join(", "),
        }),
    }
}

fn check_walk(walk: &WalkSpec) -> Result<()> {
    if walk.dim <= 2 {
        return Err(Error::RecurrentDimension(walk.dim));
    }
    for (z, r) in &walk.rates {
        if (walk.rate(&-*z) - r).abs() > 1e-12 * r.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "Green function needs a symmetric walk; rate at {z} is {r} but at {} is {}",
                -*z,
                walk.rate(&-*z)
            )));
        }
    }
    Ok(())
}

fn with_origin(dim: usize, offsets: &[Site]) -> Result<Vec<Site>> {
    let mut out = vec![Site::origin(dim)];
    for s in offsets {
        if s.dim() != dim {
            return Err(Error::InvalidArgument(format!("offset {s} does not have dimension {dim}")));
        }
        if !out.contains(s) {
            out.push(*s);
        }
    }
    Ok(out)
}

/// Tensor midpoint rule with two Richardson passes.
#[derive(Clone, Debug)]
pub struct FourierQuadrature {
    /// Nodes per axis at the finest level; a multiple of 8.
    pub resolution: usize,
    /// Relative error above which the solve reports `AccuracyNotReached`.
    pub rel_tolerance: f64,
}

impl FourierQuadrature {
    pub fn new(resolution: usize) -> Result<FourierQuadrature> {
        if resolution < 8 || !resolution.is_multiple_of(8) {
            return Err(Error::InvalidArgument(format!(
                "quadrature resolution must be a positive multiple of 8, got {resolution}"
            )));
        }
        Ok(FourierQuadrature {
            resolution,
            rel_tolerance: 1e-3,
        })
    }

    /// Plain midpoint sums at `n` nodes per axis, one per offset.
    pub fn midpoint(walk: &WalkSpec, offsets: &[Site], n: usize) -> Vec<f64> {
        let d = walk.dim;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let node = |k: usize| -std::f64::consts::PI + (k as f64 + 0.5) * h;
        // Symmetric rates: fold z and -z into one cosine.
        let half: Vec<(Site, f64)> = walk
            .rates
            .iter()
            .filter(|(z, _)| *z > -*z)
            .map(|(z, r)| (*z, 2.0 * r))
            .collect();
        let inner = n.pow((d - 1) as u32);
        let slabs: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|k0| {
                let mut acc = vec![0.0; offsets.len()];
                let mut theta = vec![0.0; d];
                let mut idx = vec![0usize; d - 1];
                theta[0] = node(k0);
                for _ in 0..inner {
                    for (i, &k) in idx.iter().enumerate() {
                        theta[i + 1] = node(k);
                    }
                    let phi: f64 = half.iter().map(|(z, r)| r * (1.0 - z.dot(&theta).cos())).sum();
                    let inv = 1.0 / phi;
                    for (a, x) in acc.iter_mut().zip(offsets) {
                        *a += if x.is_origin() { inv } else { x.dot(&theta).cos() * inv };
                    }
                    for k in idx.iter_mut().rev() {
                        *k += 1;
                        if *k < n {
                            break;
                        }
                        *k = 0;
                    }
                }
                acc
            })
            .collect();
        let norm = (n as f64).powi(d as i32);
        let mut total = vec![0.0; offsets.len()];
        for slab in slabs {
            for (t, s) in total.iter_mut().zip(slab) {
                *t += s;
            }
        }
        total.into_iter().map(|t| t / norm).collect()
    }
}

fn richardson(fine: f64, coarse: f64, order: i32) -> f64 {
    let f = 2f64.powi(order);
    (f * fine - coarse) / (f - 1.0)
}

impl GreenSolver for FourierQuadrature {
    fn name(&self) -> &'static str {
        "fourier_quadrature"
    }

    fn solve(&self, walk: &WalkSpec, offsets: &[Site]) -> Result<GreenSolution> {
        check_walk(walk)?;
        let offsets = with_origin(walk.dim, offsets)?;
        let d = walk.dim as i32;
        let ns = [self.resolution / 4, self.resolution / 2, self.resolution];
        let sums: Vec<Vec<f64>> = ns.iter().map(|&n| Self::midpoint(walk, &offsets, n)).collect();
        let mut values = BTreeMap::new();
        let mut error: f64 = 0.0;
        let mut rel_error: f64 = 0.0;
        for (i, x) in offsets.iter().enumerate() {
            let r1a = richardson(sums[1][i], sums[0][i], d - 2);
            let r1b = richardson(sums[2][i], sums[1][i], d - 2);
            let r2 = richardson(r1b, r1a, d);
            let e = (r2 - r1b).abs();
            error = error.max(e);
            rel_error = rel_error.max(e / sums[2][0]);
            values.insert(*x, r2);
        }
        if rel_error > self.rel_tolerance {
            return Err(Error::AccuracyNotReached {
                best: values[&Site::origin(walk.dim)],
                error_estimate: error,
            });
        }
        Ok(GreenSolution {
            values,
            error_estimate: error,
            method: self.name(),
            resolution: self.resolution,
            levels: ns.iter().zip(&sums).map(|(&n, s)| (n, s[0])).collect(),
        })
    }
}

/// Box truncation with absorbing exterior, solved by conjugate gradients.
#[derive(Clone, Debug)]
pub struct TruncatedSolve {
    /// Box radius `R` of the finest level.
    pub radius: usize,
    pub cg_tolerance: f64,
}

impl TruncatedSolve {
    pub fn new(radius: usize) -> Result<TruncatedSolve> {
        if radius < 2 {
            return Err(Error::InvalidArgument(format!(
                "truncation radius must be at least 2, got {radius}"
            )));
        }
        Ok(TruncatedSolve {
            radius,
            cg_tolerance: 1e-12,
        })
    }

    /// `G_R(x)` for the box of radius `radius`; offsets outside get 0.
    pub fn solve_box(&self, walk: &WalkSpec, offsets: &[Site], radius: usize) -> Result<Vec<f64>> {
        let field = self.box_field(walk, radius)?;
        Ok(offsets.iter().map(|s| field.get(s)).collect())
    }

    /// The whole truncated solution `G_R` on the box of radius `radius`.
    pub fn box_field(&self, walk: &WalkSpec, radius: usize) -> Result<BoxField> {
        let d = walk.dim;
        let side = 2 * radius + 1;
        let count = side
            .checked_pow(d as u32)
            .filter(|&c| c <= 50_000_000)
            .ok_or_else(|| Error::InvalidArgument(format!("box of radius {radius} in d = {d} is too large")))?;
        let strides: Vec<usize> = (0..d).map(|i| side.pow((d - 1 - i) as u32)).collect();
        let jumps: Vec<(Vec<i32>, isize, f64)> = walk
            .rates
            .iter()
            .map(|(z, r)| {
                let delta: isize = z
                    .coords()
                    .iter()
                    .zip(&strides)
                    .map(|(&c, &s)| c as isize * s as isize)
                    .sum();
                (z.coords().to_vec(), delta, *r)
            })
            .collect();
        let total = walk.total_rate;
        // y = (-L_S) g restricted to the box.
        let apply = |g: &[f64], y: &mut [f64]| {
            let mut coords = vec![0i32; d];
            for (i, out) in y.iter_mut().enumerate() {
                let mut acc = total * g[i];
                for (z, delta, r) in &jumps {
                    let inside = coords
                        .iter()
                        .zip(z)
                        .all(|(&c, &dz)| (0..side as i32).contains(&(c + dz)));
                    if inside {
                        acc -= r * g[(i as isize + delta) as usize];
                    }
                }
                *out = acc;
                for c in coords.iter_mut().rev() {
                    *c += 1;
                    if *c < side as i32 {
                        break;
                    }
                    *c = 0;
                }
            }
        };
        let mut field = BoxField {
            radius,
            strides,
            values: Vec::new(),
        };
        let origin = field.index_of(&Site::origin(d)).expect("origin inside box");
        let mut b = vec![0.0; count];
        b[origin] = 1.0;
        field.values = conjugate_gradient(apply, &b, self.cg_tolerance, 20 * side * d + 1000)?;
        Ok(field)
    }
}

/// Dense values on the box `[-R, R]^d`, zero outside.
#[derive(Clone, Debug)]
pub struct BoxField {
    pub radius: usize,
    strides: Vec<usize>,
    pub values: Vec<f64>,
}

impl BoxField {
    #[inline]
    pub fn index_of(&self, s: &Site) -> Option<usize> {
        let side = 2 * self.radius as i32 + 1;
        let mut idx = 0;
        for (i, &c) in s.coords().iter().enumerate() {
            let shifted = c + self.radius as i32;
            if shifted < 0 || shifted >= side {
                return None;
            }
            idx += shifted as usize * self.strides[i];
        }
        Some(idx)
    }

    #[inline]
    pub fn get(&self, s: &Site) -> f64 {
        self.index_of(s).map_or(0.0, |i| self.values[i])
    }
}

fn conjugate_gradient<F: Fn(&[f64], &mut [f64])>(
    apply: F,
    b: &[f64],
    tolerance: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tolerance * b_norm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::AccuracyNotReached {
        best: x.iter().copied().fold(0.0, f64::max),
        error_estimate: rr.sqrt() / b_norm,
    })
}

impl GreenSolver for TruncatedSolve {
    fn name(&self) -> &'static str {
        "truncated_solve"
    }

    fn solve(&self, walk: &WalkSpec, offsets: &[Site]) -> Result<GreenSolution> {
        check_walk(walk)?;
        let offsets = with_origin(walk.dim, offsets)?;
        let half = self.radius / 2;
        let coarse = self.solve_box(walk, &offsets, half)?;
        let fine = self.solve_box(walk, &offsets, self.radius)?;
        // G - G_R ~ A / R for a transient walk; extrapolate to size the gap.
        let ratio = self.radius as f64 / half as f64;
        let mut error: f64 = 0.0;
        for (c, f) in coarse.iter().zip(&fine) {
            let extrapolated = (ratio * f - c) / (ratio - 1.0);
            error = error.max(extrapolated - f);
        }
        Ok(GreenSolution {
            values: offsets.iter().copied().zip(fine.iter().copied()).collect(),
            error_estimate: error.max(0.0),
            method: self.name(),
            resolution: self.radius,
            levels: vec![(half, coarse[0]), (self.radius, fine[0])],
        })
    }
}

/// Green values together with the quantities derived from them.
#[derive(Clone, Debug, Serialize)]
pub struct GreenTable {
    pub values: BTreeMap<Site, f64>,
    pub g0: f64,
    pub pi_d: f64,
    pub kappa2: f64,
    /// `kappa_2 G(0) / 2`.
    pub criterion_value: f64,
    /// `h(x) = 1 + kappa_2 G(x) / (2 - kappa_2 G(0))`; empty when the
    /// criterion fails.
    pub h_values: BTreeMap<Site, f64>,
    pub method: &'static str,
    pub resolution: usize,
    pub error_estimate: f64,
    pub levels: Vec<(usize, f64)>,
}

impl GreenTable {
    pub fn from_solution(walk: &WalkSpec, kappa2: f64, sol: GreenSolution) -> GreenTable {
        let g0 = sol.values[&Site::origin(walk.dim)];
        let criterion_value = kappa2 * g0 / 2.0;
        let h_values = if criterion_value < 1.0 {
            sol.values
                .iter()
                .map(|(x, g)| (*x, 1.0 + kappa2 * g / (2.0 - kappa2 * g0)))
                .collect()
        } else {
            BTreeMap::new()
        };
        GreenTable {
            g0,
            pi_d: 1.0 - 1.0 / (walk.total_rate * g0),
            kappa2,
            criterion_value,
            h_values,
            method: sol.method,
            resolution: sol.resolution,
            error_estimate: sol.error_estimate,
            levels: sol.levels,
            values: sol.values,
        }
    }

    pub fn g(&self, x: &Site) -> Option<f64> {
        self.values.get(x).copied()
    }
}

/// Solves for `G` at `offsets` and derives `pi_d`, the criterion and `h`.
pub fn green(walk: &WalkSpec, kappa2: f64, offsets: &[Site], solver: &dyn GreenSolver) -> Result<GreenTable> {
    let sol = solver.solve(walk, offsets)?;
    Ok(GreenTable::from_solution(walk, kappa2, sol))
}
