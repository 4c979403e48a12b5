//! Branching kernels: the law of the random vector `K`.
//!
//! A [`Kernel`] is a finite mixture of atoms. Each atom is a sparse vector
//! `offset -> value` drawn with probability `p`. All derived quantities work
//! with the centered vector `W_x = K_x - delta_{x,0}`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feynman_kac::GammaTable;
use crate::lattice::{Site, MAX_DIM};
use crate::rng::AliasTable;

/// Tolerance on `sum p = 1`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;
/// Tolerance used for the (K4) orthogonality sums and Gamma signs.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// One realization of `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub p: f64,
    /// Sorted by offset, no zero values, no repeated offsets.
    pub entries: Vec<(Site, f64)>,
}

impl Atom {
    /// `K_0` for this atom.
    pub fn at_origin(&self) -> f64 {
        self.value(&Site::origin(self.dim_hint()))
    }

    pub fn value(&self, offset: &Site) -> f64 {
        self.entries
            .binary_search_by(|(s, _)| s.cmp(offset))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// `|K| = sum_x K_x`.
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }

    fn dim_hint(&self) -> usize {
        self.entries.first().map(|(s, _)| s.dim()).unwrap_or(1)
    }

    /// Centered entries `W_x = K_x - delta_{x,0}` as a sparse list
    /// (the origin is always present).
    pub fn centered(&self, dim: usize) -> Vec<(Site, f64)> {
        let origin = Site::origin(dim);
        let mut out: Vec<(Site, f64)> = self.entries.clone();
        match out.binary_search_by(|(s, _)| s.cmp(&origin)) {
            Ok(i) => out[i].1 -= 1.0,
            Err(i) => out.insert(i, (origin, -1.0)),
        }
        out.retain(|(_, v)| *v != 0.0);
        out
    }
}

/// The law of the branching vector, with its bound `b_K` and range `r_K`.
#[derive(Clone, Debug)]
pub struct Kernel {
    dim: usize,
    atoms: Vec<Atom>,
    bound: f64,
    range: u32,
    sampler: AliasTable,
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Kernel) -> bool {
        self.dim == other.dim && self.atoms == other.atoms
    }
}

impl Kernel {
    /// Builds a kernel from `(probability, [(offset, value)])` atoms.
    ///
    /// Zero values are dropped; repeated offsets inside one atom are rejected.
    pub fn new(dim: usize, atoms: Vec<(f64, Vec<(Site, f64)>)>) -> Result<Kernel> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidKernel(format!(
                "d must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidKernel("atoms: at least one atom required".into()));
        }
        let mut total = 0.0;
        let mut built = Vec::with_capacity(atoms.len());
        for (i, (p, entries)) in atoms.into_iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidKernel(format!(
                    "atoms[{i}].p = {p} is not a probability"
                )));
            }
            total += p;
            let mut map: BTreeMap<Site, f64> = BTreeMap::new();
            for (site, v) in entries {
                if site.dim() != dim {
                    return Err(Error::InvalidKernel(format!(
                        "atoms[{i}].v: offset {site} does not have dimension {dim}"
                    )));
                }
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidKernel(format!(
                        "atoms[{i}].v: value {v} at {site} must be finite and nonnegative"
                    )));
                }
                if map.insert(site, v).is_some() {
                    return Err(Error::InvalidKernel(format!(
                        "atoms[{i}].v: offset {site} appears more than once"
                    )));
                }
            }
            let entries: Vec<(Site, f64)> = map.into_iter().filter(|(_, v)| *v != 0.0).collect();
            built.push(Atom { p, entries });
        }
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::InvalidKernel(format!(
                "atoms[*].p must sum to 1 (within {PROBABILITY_SUM_TOL:e}), got {total}"
            )));
        }
        let bound = built
            .iter()
            .flat_map(|a| a.entries.iter().map(|(_, v)| *v))
            .fold(0.0, f64::max);
        let range = built
            .iter()
            .flat_map(|a| a.entries.iter().map(|(s, _)| s.l1()))
            .max()
            .unwrap_or(0);
        let sampler = AliasTable::new(&built.iter().map(|a| a.p).collect::<Vec<_>>());
        Ok(Kernel {
            dim,
            atoms: built,
            bound,
            range,
            sampler,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `b_K`: the largest value any atom takes.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `r_K`: the largest l1 norm of an offset carrying a nonzero value.
    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn origin(&self) -> Site {
        Site::origin(self.dim)
    }

    #[inline]
    pub fn sample_atom<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> &Atom {
        &self.atoms[self.sampler.sample(rng)]
    }

    /// Every offset that carries a nonzero value in some atom.
    pub fn support(&self) -> Vec<Site> {
        let mut out: Vec<Site> = self
            .atoms
            .iter()
            .flat_map(|a| a.entries.iter().map(|(s, _)| *s))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// `E[K_x]` for every offset of the support.
    pub fn mean_values(&self) -> BTreeMap<Site, f64> {
        let mut out = BTreeMap::new();
        for atom in &self.atoms {
            for (s, v) in &atom.entries {
                *out.entry(*s).or_insert(0.0) += atom.p * v;
            }
        }
        out
    }

    /// `E[W_x]` with `W = K - delta_0`; the origin is always present.
    pub fn centered_means(&self) -> BTreeMap<Site, f64> {
        let mut out = self.mean_values();
        *out.entry(self.origin()).or_insert(0.0) -= 1.0;
        out
    }

    /// `C(p, q) = E[W_p W_q]` over the support plus the origin. Entries that
    /// are exactly zero are omitted.
    pub fn cross_moments(&self) -> BTreeMap<(Site, Site), f64> {
        let mut out = BTreeMap::new();
        for atom in &self.atoms {
            let w = atom.centered(self.dim);
            for (p, wp) in &w {
                for (q, wq) in &w {
                    *out.entry((*p, *q)).or_insert(0.0) += atom.p * wp * wq;
                }
            }
        }
        out.retain(|_, v| *v != 0.0);
        out
    }

    /// `c(u) = sum_y E[W_y W_{y+u}]` for every `u` where it can be nonzero.
    pub fn autocorrelation(&self) -> BTreeMap<Site, f64> {
        let mut out = BTreeMap::new();
        for ((p, q), v) in self.cross_moments() {
            *out.entry(q - p).or_insert(0.0) += v;
        }
        out
    }

    /// Mass-change form of `kappa_1`: `sum_atoms p (|K| - 1)`.
    pub fn kappa1_mass_change(&self) -> f64 {
        self.atoms.iter().map(|a| a.p * (a.mass() - 1.0)).sum()
    }
}

/// The BCPP kernel: death with probability `1/(2 d lambda + 1)`, otherwise
/// duplication onto one of the `2d` neighbours, each with probability
/// `lambda/(2 d lambda + 1)`.
pub fn make_bcpp_kernel(dim: usize, lambda: f64) -> Result<Kernel> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "BCPP dimension must be in 1..={MAX_DIM}, got {dim}"
        )));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "BCPP lambda must be positive, got {lambda}"
        )));
    }
    let norm = 2.0 * dim as f64 * lambda + 1.0;
    let origin = Site::origin(dim);
    let mut atoms = vec![(1.0 / norm, Vec::new())];
    for axis in 0..dim {
        for sign in [1, -1] {
            atoms.push((
                lambda / norm,
                vec![(origin, 1.0), (Site::unit(dim, axis, sign), 1.0)],
            ));
        }
    }
    let mut kernel = Kernel::new(dim, atoms);
    // The 2d+1 probabilities are exact up to rounding of the division; the
    // only way this fails is an absurd lambda.
    if let Err(Error::InvalidKernel(msg)) = &kernel {
        kernel = Err(Error::InvalidArgument(format!("BCPP({dim}, {lambda}): {msg}")));
    }
    kernel
}

/// Moment constants of a kernel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelMoments {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Drift `m = sum_x x E[K_x]`.
    pub drift: Vec<f64>,
    /// `Sigma_ij = sum_x x_i x_j E[K_x]`.
    pub gaussian_cov: Vec<Vec<f64>>,
}

pub fn kernel_moments(kernel: &Kernel) -> KernelMoments {
    let d = kernel.dim();
    let mut kappa1 = 0.0;
    let mut kappa2 = 0.0;
    let mut drift = vec![0.0; d];
    let mut cov = vec![vec![0.0; d]; d];
    for atom in kernel.atoms() {
        for (_, w) in atom.centered(d) {
            kappa1 += atom.p * w;
            kappa2 += atom.p * w * w;
        }
    }
    for (x, mean) in kernel.mean_values() {
        let xf = x.to_f64();
        for i in 0..d {
            drift[i] += xf[i] * mean;
            for j in 0..d {
                cov[i][j] += xf[i] * xf[j] * mean;
            }
        }
    }
    KernelMoments {
        kappa1,
        kappa2,
        drift,
        gaussian_cov: cov,
    }
}

/// Which structural condition a violation refers to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    K1Spanning,
    K4Orthogonal,
    StrongK4,
    OffdiagGammaNonnegative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub condition: Condition,
    pub offsets: Vec<Site>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub k1_spanning: bool,
    pub k4_orthogonal: bool,
    pub strong_k4: bool,
    pub offdiag_gamma_nonnegative: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.k1_spanning && self.k4_orthogonal && self.strong_k4 && self.offdiag_gamma_nonnegative
    }
}

pub fn validate_kernel(kernel: &Kernel) -> ValidationReport {
    let d = kernel.dim();
    let mut violations = Vec::new();

    // (K1): rank of the mean support.
    let spanning: Vec<Site> = kernel
        .mean_values()
        .into_iter()
        .filter(|(x, m)| *m != 0.0 && !x.is_origin())
        .map(|(x, _)| x)
        .collect();
    let rank = if spanning.is_empty() {
        0
    } else {
        let data: Vec<f64> = spanning.iter().flat_map(|s| s.to_f64()).collect();
        DMatrix::from_row_slice(spanning.len(), d, &data).rank(1e-9)
    };
    let k1_spanning = rank == d;
    if !k1_spanning {
        violations.push(Violation {
            condition: Condition::K1Spanning,
            offsets: spanning,
            value: rank as f64,
        });
    }

    // (K4): c(x) = 0 for x != 0. Finite range puts every nonzero c(x) inside
    // |x| <= 2 r_K, which is exactly what the autocorrelation enumerates.
    let mut k4_orthogonal = true;
    for (x, c) in kernel.autocorrelation() {
        if !x.is_origin() && c.abs() > ORTHOGONALITY_TOL {
            k4_orthogonal = false;
            violations.push(Violation {
                condition: Condition::K4Orthogonal,
                offsets: vec![x],
                value: c,
            });
        }
    }

    // Strong (K4): E[W_x W_y] = 0 for x != y.
    let mut strong_k4 = true;
    for ((p, q), c) in kernel.cross_moments() {
        if p < q && c.abs() > ORTHOGONALITY_TOL {
            strong_k4 = false;
            violations.push(Violation {
                condition: Condition::StrongK4,
                offsets: vec![p, q],
                value: c,
            });
        }
    }

    let gamma = GammaTable::new(kernel);
    let negative = gamma.negative_offdiagonal(ORTHOGONALITY_TOL);
    let offdiag_gamma_nonnegative = negative.is_empty();
    for (u, a, b, rate) in negative {
        violations.push(Violation {
            condition: Condition::OffdiagGammaNonnegative,
            offsets: vec![u, a, b],
            value: rate,
        });
    }

    ValidationReport {
        k1_spanning,
        k4_orthogonal,
        strong_k4,
        offdiag_gamma_nonnegative,
        violations,
    }
}

/// Largest eigenvalue-sign defect of `Sigma`; nonnegative spectra give 0.
pub fn covariance_min_eigenvalue(moments: &KernelMoments) -> f64 {
    let d = moments.gaussian_cov.len();
    let data: Vec<f64> = moments.gaussian_cov.iter().flatten().copied().collect();
    let m = DMatrix::from_row_slice(d, d, &data);
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// JSON form of a kernel: explicit atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelJson {
    pub d: usize,
    pub atoms: Vec<AtomJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomJson {
    pub p: f64,
    #[serde(default)]
    pub v: Vec<EntryJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryJson {
    pub x: Vec<i32>,
    pub val: f64,
}

/// JSON shorthand `{"d": .., "lambda": ..}` for the BCPP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcppJson {
    pub d: usize,
    pub lambda: f64,
}

/// Either form of kernel description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Bcpp(BcppJson),
    Atoms(KernelJson),
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        match self {
            KernelSpec::Bcpp(b) => make_bcpp_kernel(b.d, b.lambda),
            KernelSpec::Atoms(k) => {
                let mut atoms = Vec::with_capacity(k.atoms.len());
                for (i, a) in k.atoms.iter().enumerate() {
                    let mut entries = Vec::with_capacity(a.v.len());
                    for e in &a.v {
                        if e.x.len() != k.d {
                            return Err(Error::InvalidKernel(format!(
                                "atoms[{i}].v[*].x must have {} coordinates, got {:?}",
                                k.d, e.x
                            )));
                        }
                        entries.push((Site::new(&e.x)?, e.val));
                    }
                    atoms.push((a.p, entries));
                }
                Kernel::new(k.d, atoms)
            }
        }
    }
}

impl From<&Kernel> for KernelJson {
    fn from(kernel: &Kernel) -> KernelJson {
        KernelJson {
            d: kernel.dim(),
            atoms: kernel
                .atoms()
                .iter()
                .map(|a| AtomJson {
                    p: a.p,
                    v: a
                        .entries
                        .iter()
                        .map(|(s, v)| EntryJson {
                            x: s.coords().to_vec(),
                            val: *v,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
