//! Sparse configuration `eta` with O(1) uniform choice of occupied sites.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::lattice::Site;

/// Rescale once the unscaled total leaves `[RESCALE_LOW, RESCALE_HIGH]`.
pub const RESCALE_HIGH: f64 = 1e200;
pub const RESCALE_LOW: f64 = 1e-200;

/// Dense array plus position map: O(1) insert, swap-remove and indexing.
#[derive(Clone, Debug, Default)]
pub struct IndexedSet {
    items: Vec<Site>,
    pos: FxHashMap<Site, u32>,
}

impl IndexedSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Site {
        self.items[i]
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.pos.contains_key(s)
    }

    pub fn insert(&mut self, s: Site) {
        if let std::collections::hash_map::Entry::Vacant(e) = self.pos.entry(s) {
            e.insert(self.items.len() as u32);
            self.items.push(s);
        }
    }

    pub fn remove(&mut self, s: &Site) {
        if let Some(i) = self.pos.remove(s) {
            let i = i as usize;
            self.items.swap_remove(i);
            if i < self.items.len() {
                self.pos.insert(self.items[i], i as u32);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Site> {
        self.items.iter()
    }
}

/// Reference counts of "some occupied site lies at `z + o` for an offset
/// `o` in the reach set". Sites with a positive count are exactly those
/// whose transposed update can change the configuration.
#[derive(Clone, Debug)]
struct Neighbourhood {
    reach: Vec<Site>,
    counts: FxHashMap<Site, u32>,
    active: IndexedSet,
}

impl Neighbourhood {
    fn occupy(&mut self, y: Site) {
        for o in &self.reach {
            let z = y - *o;
            let c = self.counts.entry(z).or_insert(0);
            *c += 1;
            if *c == 1 {
                self.active.insert(z);
            }
        }
    }

    fn vacate(&mut self, y: Site) {
        for o in &self.reach {
            let z = y - *o;
            let c = self.counts.get_mut(&z).expect("reference count present");
            *c -= 1;
            if *c == 0 {
                self.counts.remove(&z);
                self.active.remove(&z);
            }
        }
    }
}

/// Sparse nonnegative configuration. The true mass at `x` is
/// `mass(x) * exp(log_scale)`.
#[derive(Clone, Debug)]
pub struct Configuration {
    dim: usize,
    sites: Vec<Site>,
    masses: Vec<f64>,
    pos: FxHashMap<Site, u32>,
    log_scale: f64,
    total: f64,
    neighbourhood: Option<Neighbourhood>,
}

impl Configuration {
    pub fn new(dim: usize) -> Configuration {
        Configuration {
            dim,
            sites: Vec::new(),
            masses: Vec::new(),
            pos: FxHashMap::default(),
            log_scale: 0.0,
            total: 0.0,
            neighbourhood: None,
        }
    }

    /// Starts tracking the sites `z` with an occupied `z + o`, `o` in `reach`
    /// (the origin is added automatically).
    pub fn track_neighbourhood(&mut self, reach: &[Site]) {
        let mut reach = reach.to_vec();
        reach.push(Site::origin(self.dim));
        reach.sort();
        reach.dedup();
        let mut nb = Neighbourhood {
            reach,
            counts: FxHashMap::default(),
            active: IndexedSet::default(),
        };
        for s in &self.sites {
            nb.occupy(*s);
        }
        self.neighbourhood = Some(nb);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of occupied sites.
    #[inline]
    pub fn occupied(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn site(&self, i: usize) -> Site {
        self.sites[i]
    }

    #[inline]
    pub fn mass_at(&self, i: usize) -> f64 {
        self.masses[i]
    }

    /// Unscaled mass at `s` (0 when empty).
    #[inline]
    pub fn get(&self, s: &Site) -> f64 {
        self.pos.get(s).map_or(0.0, |&i| self.masses[i as usize])
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Cached unscaled total.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Sites whose transposed update is not a no-op.
    pub fn active(&self) -> Option<&IndexedSet> {
        self.neighbourhood.as_ref().map(|n| &n.active)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.sites.iter().copied().zip(self.masses.iter().copied())
    }

    /// Adds `delta >= 0` to the unscaled mass at `s`.
    #[inline]
    pub fn add(&mut self, s: Site, delta: f64) {
        if delta == 0.0 {
            return;
        }
        match self.pos.get(&s) {
            Some(&i) => self.masses[i as usize] += delta,
            None => self.insert_new(s, delta),
        }
        self.total += delta;
    }

    fn insert_new(&mut self, s: Site, value: f64) {
        self.pos.insert(s, self.sites.len() as u32);
        self.sites.push(s);
        self.masses.push(value);
        if let Some(nb) = self.neighbourhood.as_mut() {
            nb.occupy(s);
        }
    }

    /// Overwrites the unscaled mass at `s`; zero evicts.
    pub fn set(&mut self, s: Site, value: f64) {
        match self.pos.get(&s) {
            Some(&i) => self.set_at(i as usize, value),
            None if value > 0.0 => {
                self.total += value;
                self.insert_new(s, value);
            }
            None => {}
        }
    }

    /// Overwrites the mass stored at dense index `i`; zero evicts (and
    /// moves the last entry into slot `i`).
    #[inline]
    pub fn set_at(&mut self, i: usize, value: f64) {
        self.total += value - self.masses[i];
        if value > 0.0 {
            self.masses[i] = value;
            return;
        }
        let s = self.sites.swap_remove(i);
        self.masses.swap_remove(i);
        self.pos.remove(&s);
        if i < self.sites.len() {
            self.pos.insert(self.sites[i], i as u32);
        }
        if let Some(nb) = self.neighbourhood.as_mut() {
            nb.vacate(s);
        }
        if self.sites.is_empty() {
            self.total = 0.0;
        }
    }

    /// Folds the total into `log_scale` when it drifts out of range.
    pub fn maybe_rescale(&mut self) {
        if self.total > RESCALE_HIGH || (self.total > 0.0 && self.total < RESCALE_LOW) {
            self.rescale();
        }
    }

    /// Divides every mass by the exact total and records the factor.
    pub fn rescale(&mut self) {
        let total = self.recompute_total();
        if total <= 0.0 {
            return;
        }
        for m in self.masses.iter_mut() {
            *m /= total;
        }
        self.log_scale += total.ln();
        self.total = self.recompute_total();
    }

    /// Exact sum of stored masses.
    pub fn recompute_total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Checks the structural invariants.
    pub fn audit(&self) -> Result<()> {
        if self.masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Corruption("stored mass is not positive and finite".into()));
        }
        let exact = self.recompute_total();
        if (exact - self.total).abs() > 1e-9 * exact.max(f64::MIN_POSITIVE) {
            return Err(Error::Corruption(format!(
                "cached total {} differs from exact total {exact}",
                self.total
            )));
        }
        if self.pos.len() != self.sites.len() {
            return Err(Error::Corruption("position map out of sync".into()));
        }
        Ok(())
    }

    /// Resynchronizes the cached total with the exact sum.
    pub fn refresh_total(&mut self) {
        self.total = self.recompute_total();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: i32) -> Site {
        Site::new(&[x]).unwrap()
    }

    #[test]
    fn insert_evict_and_index() {
        let mut c = Configuration::new(1);
        c.add(s(0), 1.0);
        c.add(s(1), 2.0);
        c.add(s(2), 3.0);
        assert_eq!(c.occupied(), 3);
        assert_eq!(c.total(), 6.0);
        c.set(s(0), 0.0);
        assert_eq!(c.occupied(), 2);
        assert_eq!(c.get(&s(0)), 0.0);
        assert_eq!(c.get(&s(2)), 3.0);
        assert_eq!(c.total(), 5.0);
        c.audit().unwrap();
        c.set(s(1), 0.0);
        c.set(s(2), 0.0);
        assert_eq!(c.occupied(), 0);
        assert_eq!(c.total(), 0.0);
    }

    #[test]
    fn rescale_preserves_true_masses() {
        let mut c = Configuration::new(1);
        c.add(s(0), 1e201);
        c.add(s(3), 1e201);
        c.maybe_rescale();
        assert!((c.total() - 1.0).abs() < 1e-15);
        let true_mass = c.get(&s(0)) * c.log_scale().exp();
        assert!((true_mass / 1e201 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neighbourhood_tracks_reach() {
        let mut c = Configuration::new(1);
        c.track_neighbourhood(&[s(1), s(-1)]);
        c.add(s(0), 1.0);
        assert_eq!(c.active().unwrap().len(), 3);
        c.add(s(1), 1.0);
        assert_eq!(c.active().unwrap().len(), 4);
        c.set(s(0), 0.0);
        let active: Vec<i32> = {
            let mut v: Vec<i32> = c.active().unwrap().iter().map(|x| x.get(0)).collect();
            v.sort();
            v
        };
        assert_eq!(active, vec![0, 1, 2]);
    }
}
