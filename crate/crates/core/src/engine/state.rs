use std::sync::Arc;

use rand::Rng;

use super::config::Configuration;
use super::update::{rule_for, UpdateRule};
use crate::error::{Error, Result};
use crate::kernel::{kernel_moments, Kernel};
use crate::lattice::Site;
use crate::rng::{exponential, stream_rng, StreamRng};

/// One trajectory of the process.
#[derive(Clone, Debug)]
pub struct ProcessState {
    pub t: f64,
    pub config: Configuration,
    kernel: Arc<Kernel>,
    rule: Arc<dyn UpdateRule>,
    rng: StreamRng,
    kappa1: f64,
    drift: Vec<f64>,
    events: u64,
    /// Optional cap on the number of occupied sites.
    pub max_occupied: Option<usize>,
    truncated: bool,
}

/// Builds the initial state from a finite list of `(site, mass)` pairs.
///
/// The random stream is stream 0 of `seed`; ensembles use
/// [`ProcessState::with_stream`] to pick per-replica streams.
pub fn init_state(kernel: Arc<Kernel>, initial: &[(Site, f64)], dual: bool, seed: u64) -> Result<ProcessState> {
    ProcessState::with_stream(kernel, initial, rule_for(dual), seed, 0)
}

impl ProcessState {
    pub fn with_stream(
        kernel: Arc<Kernel>,
        initial: &[(Site, f64)],
        rule: Arc<dyn UpdateRule>,
        seed: u64,
        stream: u64,
    ) -> Result<ProcessState> {
        if initial.is_empty() {
            return Err(Error::InvalidArgument(
                "initial configuration is empty; the process is identically zero".into(),
            ));
        }
        let mut config = Configuration::new(kernel.dim());
        rule.prepare(&mut config, &kernel);
        for (s, m) in initial {
            if s.dim() != kernel.dim() {
                return Err(Error::InvalidArgument(format!(
                    "initial site {s} does not have dimension {}",
                    kernel.dim()
                )));
            }
            if !(m.is_finite() && *m > 0.0) {
                return Err(Error::InvalidArgument(format!("initial mass {m} at {s} must be positive")));
            }
            config.add(*s, *m);
        }
        let moments = kernel_moments(&kernel);
        Ok(ProcessState {
            t: 0.0,
            config,
            kernel,
            rule,
            rng: stream_rng(seed, stream),
            kappa1: moments.kappa1,
            drift: moments.drift,
            events: 0,
            max_occupied: None,
            truncated: false,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn rule(&self) -> &dyn UpdateRule {
        self.rule.as_ref()
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn is_extinct(&self) -> bool {
        self.config.occupied() == 0
    }

    /// Whether the occupied-site cap stopped the trajectory.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// `|eta_bar_t| = total * exp(log_scale - kappa_1 t)`.
    pub fn normalized_total(&self) -> f64 {
        if self.is_extinct() {
            return 0.0;
        }
        self.config.recompute_total() * (self.config.log_scale() - self.kappa1 * self.t).exp()
    }

    /// Normalized mass `eta_bar_{t,x}`.
    pub fn normalized_mass(&self, s: &Site) -> f64 {
        self.config.get(s) * (self.config.log_scale() - self.kappa1 * self.t).exp()
    }

    /// Un-normalized mass `eta_{t,x}`.
    pub fn mass(&self, s: &Site) -> f64 {
        self.config.get(s) * self.config.log_scale().exp()
    }

    /// Runs one event; returns `false` when nothing can happen any more.
    pub fn step(&mut self, horizon: f64) -> Result<bool> {
        let n = self.rule.active_count(&self.config);
        if n == 0 {
            self.t = horizon;
            return Ok(false);
        }
        let dt = exponential(&mut self.rng, n as f64);
        if self.t + dt > horizon {
            // Memoryless clocks: stopping at the horizon is exact.
            self.t = horizon;
            return Ok(false);
        }
        self.t += dt;
        let pick = self.rng.gen_range(0..n);
        let (z, index) = self.rule.active_site(&self.config, pick);
        let atom = self.kernel.sample_atom(&mut self.rng);
        self.rule.apply(&mut self.config, z, index, atom)?;
        self.config.maybe_rescale();
        self.events += 1;
        Ok(true)
    }

    /// Advances to `t + duration`. Extinction is absorbing: an extinct
    /// state only has its clock moved forward.
    pub fn advance(&mut self, duration: f64) -> Result<()> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidArgument(format!("duration {duration} must be nonnegative")));
        }
        let horizon = self.t + duration;
        while self.step(horizon)? {
            if let Some(cap) = self.max_occupied {
                if self.config.occupied() > cap {
                    self.truncated = true;
                    self.t = horizon;
                    break;
                }
            }
        }
        self.t = horizon;
        self.config.refresh_total();
        if !self.config.total().is_finite() {
            return Err(Error::Corruption("total mass is not finite".into()));
        }
        Ok(())
    }

    /// Advances until time `target` (no-op if already there).
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        self.advance((target - self.t).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_bcpp_kernel;
    use crate::kernel::tests::identity_kernel;

    fn bcpp3() -> Arc<Kernel> {
        Arc::new(make_bcpp_kernel(3, 1.0).unwrap())
    }

    #[test]
    fn init_rules() {
        let k = bcpp3();
        let o = Site::origin(3);
        let s = init_state(k.clone(), &[(o, 1.0)], false, 1).unwrap();
        assert_eq!(s.normalized_total(), 1.0);
        let two = init_state(k.clone(), &[(o, 1.0), (Site::unit(3, 0, 1), 2.0)], false, 1).unwrap();
        assert_eq!(two.config.total(), 3.0);
        assert_eq!(two.config.occupied(), 2);
        assert!(init_state(k.clone(), &[], false, 1).is_err());
        assert!(init_state(k, &[(o, 0.0)], false, 1).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let mut s = init_state(bcpp3(), &[(Site::origin(3), 1.0)], false, 99).unwrap();
            s.advance(4.0).unwrap();
            let mut v: Vec<(Site, u64)> = s.config.iter().map(|(x, m)| (x, m.to_bits())).collect();
            v.sort();
            (v, s.events())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn extinction_is_absorbing() {
        let k = Arc::new(Kernel::new(2, vec![(1.0, vec![])]).unwrap());
        let mut s = init_state(k, &[(Site::origin(2), 1.0)], false, 3).unwrap();
        s.advance(50.0).unwrap();
        assert!(s.is_extinct());
        assert_eq!(s.normalized_total(), 0.0);
        s.advance(10.0).unwrap();
        assert!(s.is_extinct());
        assert_eq!(s.t, 60.0);
    }

    #[test]
    fn identity_kernel_changes_nothing() {
        let k = Arc::new(identity_kernel(2));
        let init = [(Site::origin(2), 1.5), (Site::unit(2, 1, 1), 0.5)];
        for dual in [false, true] {
            let mut s = init_state(k.clone(), &init, dual, 3).unwrap();
            s.advance(20.0).unwrap();
            assert!(s.events() > 0);
            assert_eq!(s.config.get(&init[0].0), 1.5);
            assert_eq!(s.config.get(&init[1].0), 0.5);
        }
    }

    #[test]
    fn event_changes_total_by_mass_times_atom_excess() {
        let k = bcpp3();
        let mut s = init_state(k, &[(Site::origin(3), 1.0)], false, 12).unwrap();
        s.advance(3.0).unwrap();
        for _ in 0..2000 {
            if s.is_extinct() {
                break;
            }
            let before = s.config.recompute_total();
            let n = s.config.occupied();
            let i = s.rng.gen_range(0..n);
            let z = s.config.site(i);
            let m = s.config.mass_at(i);
            let atom = s.kernel.sample_atom(&mut s.rng).clone();
            s.rule.apply(&mut s.config, z, Some(i), &atom).unwrap();
            let after = s.config.recompute_total();
            let expected = before + (atom.mass() - 1.0) * m;
            assert!((after - expected).abs() <= 1e-12 * before.max(1.0));
        }
    }

    #[test]
    fn occupied_cap_truncates() {
        let mut s = init_state(bcpp3(), &[(Site::origin(3), 1.0)], false, 5).unwrap();
        s.max_occupied = Some(3);
        s.advance(100.0).unwrap();
        assert!(s.is_truncated() || s.is_extinct());
    }
}
