//! Update rules applied when a site's clock rings.

use std::fmt::Debug;
use std::sync::Arc;

use super::config::Configuration;
use crate::error::{Error, Result};
use crate::kernel::{Atom, Kernel};
use crate::lattice::Site;

/// Registered rule names.
pub const UPDATE_RULES: &[&str] = &["primal", "dual"];

/// A linear replacement rule driven by one atom of the kernel.
///
/// Only "active" sites can change the configuration when their clock
/// rings; the engine runs Gillespie over the active set with unit rate per
/// site, which is exact because every other clock is a no-op.
pub trait UpdateRule: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Prepares any bookkeeping the rule needs on a fresh configuration.
    fn prepare(&self, config: &mut Configuration, kernel: &Kernel);

    fn active_count(&self, config: &Configuration) -> usize;

    /// Returns the dense index of an active site: `(site, occupied index)`.
    fn active_site(&self, config: &Configuration, index: usize) -> (Site, Option<usize>);

    /// Applies `atom` at `z`. `index` is the dense occupied index of `z`
    /// when known.
    fn apply(&self, config: &mut Configuration, z: Site, index: Option<usize>, atom: &Atom) -> Result<()>;
}

/// `eta_z <- K_0 eta_z`, `eta_x <- eta_x + K_{x-z} eta_z` for `x != z`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PrimalRule;

/// The transpose: `eta_z <- sum_y K_{y-z} eta_y`, other sites unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct DualRule;

impl UpdateRule for PrimalRule {
    fn name(&self) -> &'static str {
        "primal"
    }

    fn prepare(&self, _config: &mut Configuration, _kernel: &Kernel) {}

    #[inline]
    fn active_count(&self, config: &Configuration) -> usize {
        config.occupied()
    }

    #[inline]
    fn active_site(&self, config: &Configuration, index: usize) -> (Site, Option<usize>) {
        (config.site(index), Some(index))
    }

    #[inline]
    fn apply(&self, config: &mut Configuration, z: Site, index: Option<usize>, atom: &Atom) -> Result<()> {
        let Some(i) = index else {
            // Empty site: every replacement term carries eta_z = 0.
            return Ok(());
        };
        let mass = config.mass_at(i);
        let mut k0 = 0.0;
        for (o, v) in &atom.entries {
            if o.is_origin() {
                k0 = *v;
            } else {
                config.add(z + *o, v * mass);
            }
        }
        // Inserts above only append, so slot i still holds z.
        if k0 != 1.0 {
            let new = k0 * mass;
            if !new.is_finite() {
                return Err(Error::Corruption(format!("non-finite mass at {z}")));
            }
            config.set_at(i, new);
        }
        Ok(())
    }
}

impl UpdateRule for DualRule {
    fn name(&self) -> &'static str {
        "dual"
    }

    fn prepare(&self, config: &mut Configuration, kernel: &Kernel) {
        config.track_neighbourhood(&kernel.support());
    }

    #[inline]
    fn active_count(&self, config: &Configuration) -> usize {
        config.active().map_or(0, |a| a.len())
    }

    #[inline]
    fn active_site(&self, config: &Configuration, index: usize) -> (Site, Option<usize>) {
        let active = config.active().expect("dual rule prepared the neighbourhood");
        (active.get(index), None)
    }

    fn apply(&self, config: &mut Configuration, z: Site, _index: Option<usize>, atom: &Atom) -> Result<()> {
        let new: f64 = atom.entries.iter().map(|(o, v)| v * config.get(&(z + *o))).sum();
        if !new.is_finite() {
            return Err(Error::Corruption(format!("non-finite mass at {z}")));
        }
        config.set(z, new);
        Ok(())
    }
}

/// Looks a rule up by name.
pub fn update_rule(name: &str) -> Result<Arc<dyn UpdateRule>> {
    match name {
        "primal" => Ok(Arc::new(PrimalRule)),
        "dual" => Ok(Arc::new(DualRule)),
        _ => Err(Error::UnknownStrategy {
            kind: "update rule",
            name: name.to_string(),
            known: UPDATE_RULES.join(", "),
        }),
    }
}

/// Rule for the `dual` flag.
pub fn rule_for(dual: bool) -> Arc<dyn UpdateRule> {
    if dual {
        Arc::new(DualRule)
    } else {
        Arc::new(PrimalRule)
    }
}
