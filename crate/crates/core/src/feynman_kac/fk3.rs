//! Weighted-walk estimator of two-point sums
//! `sum_{x,x~} E[eta_bar_{t,x} eta_bar_{t,x~}] f(x - x~)
//!    = sum eta_0x eta_0x~ E^{x-x~}[exp(kappa_2/2 int_0^{2t} delta_0(S_u) du) f(S_{2t})]`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::chain::{run_weighted, WeightedChain};
use crate::error::{Error, Result};
use crate::kernel::{kernel_moments, Kernel};
use crate::lattice::Site;
use crate::rng::{child_seed, run_blocks, StreamRng};
use crate::stats::RunningStats;
use crate::walk::{walk_from_kernel, BoxField, TruncatedSolve, WalkSampler, WalkSpec};

/// Registered path samplers. `auto` picks `h_transform` when it applies and
/// `tilted` otherwise.
pub const PATH_SAMPLERS: &[&str] = &["plain", "tilted", "h_transform", "auto"];

/// Draws one weighted path of `S`: returns `(S_T, weight ratio)` where the
/// estimator of `E^x[exp(beta L_T) f(S_T)]` is `ratio * f(S_T)`.
pub trait PathSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(&self, start: Site, horizon: f64, rng: &mut StreamRng) -> (Site, f64);
}

/// `S` with potential `beta delta_0`.
struct OriginWeighted {
    walk: WalkSampler,
    beta: f64,
}

impl WeightedChain for OriginWeighted {
    type State = Site;

    #[inline]
    fn sojourn(&self, s: &Site) -> (f64, f64) {
        let v = if s.is_origin() { self.beta } else { 0.0 };
        (self.walk.total_rate(), v)
    }

    #[inline]
    fn jump<R: Rng + ?Sized>(&self, s: &Site, rng: &mut R) -> Site {
        *s + self.walk.jump(rng)
    }
}

pub struct PlainSampler(OriginWeighted);
pub struct TiltedSampler(OriginWeighted);

impl PathSampler for PlainSampler {
    fn name(&self) -> &'static str {
        "plain"
    }
    fn sample(&self, start: Site, horizon: f64, rng: &mut StreamRng) -> (Site, f64) {
        let (s, lw) = run_weighted(&self.0, start, horizon, false, rng);
        (s, lw.exp())
    }
}

impl PathSampler for TiltedSampler {
    fn name(&self) -> &'static str {
        "tilted"
    }
    fn sample(&self, start: Site, horizon: f64, rng: &mut StreamRng) -> (Site, f64) {
        let (s, lw) = run_weighted(&self.0, start, horizon, true, rng);
        (s, lw.exp())
    }
}

/// Doob transform of `S` by a positive function `h`.
///
/// The walk jumps `x -> x + z` at rate `q(z) h(x+z) / h(x)` and carries
/// the potential `beta delta_0(x) + (L h)(x) / h(x)`; then
/// `E^x[exp(beta L_T) f(S_T)] = h(x) E^{h,x}[exp(int pot) f(S_T) / h(S_T)]`
/// for any positive `h`. With `h = 1 + c G_R` the potential vanishes inside
/// the box `[-R, R]^d`, so the weights are nearly constant.
pub struct HTransformSampler {
    jumps: Vec<(Site, f64)>,
    total_rate: f64,
    beta: f64,
    h: BoxField,
    scale: f64,
}

impl HTransformSampler {
    /// Builds `h = 1 + kappa_2 G_R / (2 - kappa_2 G_R(0))`; fails when the
    /// truncated criterion is not satisfied.
    pub fn new(walk: &WalkSpec, kappa2: f64, radius: usize) -> Result<HTransformSampler> {
        let field = TruncatedSolve::new(radius)?.box_field(walk, radius)?;
        let g0 = field.get(&Site::origin(walk.dim));
        let denom = 2.0 - kappa2 * g0;
        if denom <= 1e-3 {
            return Err(Error::DivergentH(kappa2 * g0 / 2.0));
        }
        Ok(HTransformSampler {
            jumps: walk.rates.clone(),
            total_rate: walk.total_rate,
            beta: kappa2 / 2.0,
            h: field,
            scale: kappa2 / denom,
        })
    }

    #[inline]
    pub fn h(&self, x: &Site) -> f64 {
        1.0 + self.scale * self.h.get(x)
    }
}

impl WeightedChain for HTransformSampler {
    type State = Site;

    #[inline]
    fn sojourn(&self, s: &Site) -> (f64, f64) {
        let hx = self.h(s);
        let out: f64 = self.jumps.iter().map(|(z, q)| q * self.h(&(*s + *z))).sum::<f64>() / hx;
        let v = if s.is_origin() { self.beta } else { 0.0 };
        (out, v + out - self.total_rate)
    }

    #[inline]
    fn jump<R: Rng + ?Sized>(&self, s: &Site, rng: &mut R) -> Site {
        let w: Vec<f64> = self.jumps.iter().map(|(z, q)| q * self.h(&(*s + *z))).collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                return *s + self.jumps[i].0;
            }
            u -= wi;
        }
        *s + self.jumps[self.jumps.len() - 1].0
    }
}

impl PathSampler for HTransformSampler {
    fn name(&self) -> &'static str {
        "h_transform"
    }
    fn sample(&self, start: Site, horizon: f64, rng: &mut StreamRng) -> (Site, f64) {
        let (s, lw) = run_weighted(self, start, horizon, false, rng);
        (s, self.h(&start) * lw.exp() / self.h(&s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fk3Options {
    pub sampler: String,
    /// Fraction of the largest weighted values dropped for the trimmed mean.
    pub trim_fraction: f64,
    /// Replaces `kappa_2` in the weight (0 gives the bare walk).
    pub kappa2_override: Option<f64>,
    /// Box radius for the `h_transform` sampler; `None` picks by dimension.
    pub h_radius: Option<usize>,
    pub block_size: u64,
}

impl Default for Fk3Options {
    fn default() -> Self {
        Fk3Options {
            sampler: "auto".into(),
            trim_fraction: 1e-3,
            kappa2_override: None,
            h_radius: None,
            block_size: 4096,
        }
    }
}

fn default_h_radius(dim: usize) -> usize {
    match dim {
        0..=3 => 20,
        4 => 10,
        5 => 6,
        _ => 4,
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
    pub samples: u64,
    pub trimmed_mean: f64,
    pub trim_fraction: f64,
    pub method: String,
}

/// Looks a sampler up by name.
pub fn path_sampler(name: &str, walk: &WalkSpec, kappa2: f64, h_radius: Option<usize>) -> Result<Box<dyn PathSampler>> {
    let beta = kappa2 / 2.0;
    let base = || OriginWeighted {
        walk: WalkSampler::new(walk),
        beta,
    };
    match name {
        "plain" => Ok(Box::new(PlainSampler(base()))),
        "tilted" => Ok(Box::new(TiltedSampler(base()))),
        "h_transform" => {
            if walk.dim <= 2 {
                return Err(Error::RecurrentDimension(walk.dim));
            }
            let r = h_radius.unwrap_or_else(|| default_h_radius(walk.dim));
            Ok(Box::new(HTransformSampler::new(walk, kappa2, r)?))
        }
        "auto" => {
            if walk.dim >= 3 && kappa2 > 0.0 {
                if let Ok(s) = path_sampler("h_transform", walk, kappa2, h_radius) {
                    return Ok(s);
                }
            }
            path_sampler("tilted", walk, kappa2, h_radius)
        }
        _ => Err(Error::UnknownStrategy {
            kind: "path sampler",
            name: name.to_string(),
            known: PATH_SAMPLERS.join(", "),
        }),
    }
}

/// Reusable estimator: the sampler (and its `h` table) is built once.
pub struct Fk3Estimator {
    dim: usize,
    sampler: Box<dyn PathSampler>,
    options: Fk3Options,
}

impl Fk3Estimator {
    pub fn new(kernel: &Kernel, options: Fk3Options) -> Result<Fk3Estimator> {
        let kappa2 = options.kappa2_override.unwrap_or_else(|| kernel_moments(kernel).kappa2);
        if kappa2 < 0.0 {
            return Err(Error::InvalidArgument(format!("kappa_2 override {kappa2} must be nonnegative")));
        }
        let walk = walk_from_kernel(kernel, true)?;
        let sampler = path_sampler(&options.sampler, &walk, kappa2, options.h_radius)?;
        Ok(Fk3Estimator {
            dim: kernel.dim(),
            sampler,
            options,
        })
    }

    pub fn sampler_name(&self) -> &'static str {
        self.sampler.name()
    }

    /// Estimates `sum_{x,x~} E[eta_bar_{t,x} eta_bar_{t,x~}] f(x - x~)`.
    pub fn estimate(
        &self,
        initial: &[(Site, f64)],
        t: f64,
        f: &(dyn Fn(&Site) -> f64 + Sync),
        samples: u64,
        seed: u64,
    ) -> Result<Estimate> {
        self.estimate_differences(&initial_differences(initial, self.dim)?, t, f, samples, seed)
    }

    /// Weighted sum over walk starting points: `sum_u w_u E^u[exp(beta L_{2t}) f(S_{2t})]`.
    /// With a single start `a - b` of weight 1 this is
    /// `E[|eta_bar^a_t| |eta_bar^b_t|]` for point masses at `a` and `b`.
    pub fn estimate_differences(
        &self,
        starts: &[(Site, f64)],
        t: f64,
        f: &(dyn Fn(&Site) -> f64 + Sync),
        samples: u64,
        seed: u64,
    ) -> Result<Estimate> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
        }
        if samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1".into()));
        }
        if let Some((u, _)) = starts.iter().find(|(u, _)| u.dim() != self.dim) {
            return Err(Error::InvalidArgument(format!("start {u} has the wrong dimension")));
        }
        let mut value = 0.0;
        let mut var = 0.0;
        let mut trimmed = 0.0;
        for (k, (u, w)) in starts.iter().enumerate() {
            let blocks = run_blocks(samples, self.options.block_size, child_seed(seed, k as u64), |rng, n| {
                (0..n)
                    .map(|_| {
                        let (s, ratio) = self.sampler.sample(*u, 2.0 * t, rng);
                        ratio * f(&s)
                    })
                    .collect::<Vec<f64>>()
            });
            let draws: Vec<f64> = blocks.into_iter().flatten().collect();
            let stats: RunningStats = draws.iter().copied().collect();
            value += w * stats.mean;
            var += w * w * stats.variance() / stats.count as f64;
            trimmed += w * trimmed_mean(draws, self.options.trim_fraction);
        }
        Ok(Estimate {
            value,
            standard_error: var.sqrt(),
            samples,
            trimmed_mean: trimmed,
            trim_fraction: self.options.trim_fraction,
            method: self.sampler.name().to_string(),
        })
    }
}

/// Differences `x - x~` of the initial support with weights `eta_0x eta_0x~`.
pub fn initial_differences(initial: &[(Site, f64)], dim: usize) -> Result<Vec<(Site, f64)>> {
    let mut pairs: BTreeMap<Site, f64> = BTreeMap::new();
    for (x, a) in initial {
        if x.dim() != dim {
            return Err(Error::InvalidArgument(format!("initial site {x} has the wrong dimension")));
        }
        for (y, b) in initial {
            *pairs.entry(*x - *y).or_insert(0.0) += a * b;
        }
    }
    Ok(pairs.into_iter().collect())
}

/// Mean after dropping the largest `fraction` of the values.
fn trimmed_mean(mut v: Vec<f64>, fraction: f64) -> f64 {
    let drop = ((v.len() as f64) * fraction).floor() as usize;
    if drop == 0 || drop >= v.len() {
        return v.iter().sum::<f64>() / v.len() as f64;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    v.truncate(v.len() - drop);
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-shot form of [`Fk3Estimator::estimate`].
pub fn fk3_estimate(
    kernel: &Kernel,
    initial: &[(Site, f64)],
    t: f64,
    f: &(dyn Fn(&Site) -> f64 + Sync),
    samples: u64,
    seed: u64,
    options: Fk3Options,
) -> Result<Estimate> {
    Fk3Estimator::new(kernel, options)?.estimate(initial, t, f, samples, seed)
}

/// Large-time limit from estimates at `t, 4t, 16t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub value: f64,
    pub standard_error: f64,
    /// `(t, value, standard error)` at each horizon.
    pub points: Vec<(f64, f64, f64)>,
    /// Single-pass extrapolation from the two largest horizons.
    pub one_pass: f64,
}

/// Extrapolates `t -> infinity` assuming `v(t) = L - a t^{-1/2} + b t^{-1} + ...`
/// (the correction of a transient walk's Green tail), with horizons
/// `t, 4t, 16t` and independent seeds. `starts` are walk starting points
/// as in [`Fk3Estimator::estimate_differences`].
pub fn fk3_limit(
    estimator: &Fk3Estimator,
    starts: &[(Site, f64)],
    t: f64,
    f: &(dyn Fn(&Site) -> f64 + Sync),
    samples: u64,
    seed: u64,
) -> Result<LimitEstimate> {
    let mut points = Vec::new();
    for (i, s) in [1.0, 4.0, 16.0].iter().enumerate() {
        let e = estimator.estimate_differences(starts, t * s, f, samples, child_seed(seed, 1000 + i as u64))?;
        points.push((t * s, e.value, e.standard_error));
    }
    let (v1, v2, v3) = (points[0].1, points[1].1, points[2].1);
    let (s1, s2, s3) = (points[0].2, points[1].2, points[2].2);
    let value = (8.0 * v3 - 6.0 * v2 + v1) / 3.0;
    let se = (64.0 * s3 * s3 + 36.0 * s2 * s2 + s1 * s1).sqrt() / 3.0;
    Ok(LimitEstimate {
        value,
        standard_error: se,
        points,
        one_pass: 2.0 * v3 - v2,
    })
}
