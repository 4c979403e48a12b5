//! Bounded test functions for the central limit check and the ensemble
//! probe that evaluates them.

use serde::Serialize;

use super::gaussian::{clipped_second_moment, gaussian_expectation, upper_tail};
use crate::engine::{scaled_position, ProcessState, Probe};
use crate::kernel::KernelMoments;

/// A bounded function of the rescaled position `u = (x - m t)/sqrt(t)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `1{u_axis > threshold}`, evaluated with each site spread uniformly
    /// over its unit cell along `axis` so that lattice steps do not bias the
    /// comparison.
    HalfSpace { axis: usize, threshold: f64 },
    /// `cos(omega u_axis)`.
    Cosine { axis: usize, omega: f64 },
    /// `min(u_axis^2, clip)`.
    ClippedQuadratic { axis: usize, clip: f64 },
}

impl TestFunction {
    pub fn name(&self) -> String {
        match self {
            TestFunction::HalfSpace { axis, threshold } => format!("halfspace[axis={},c={threshold:.4}]", axis + 1),
            TestFunction::Cosine { axis, omega } => format!("cos[axis={},omega={omega:.4}]", axis + 1),
            TestFunction::ClippedQuadratic { axis, clip } => format!("clipped_quadratic[axis={},clip={clip:.4}]", axis + 1),
        }
    }

    fn axis(&self) -> usize {
        match self {
            TestFunction::HalfSpace { axis, .. }
            | TestFunction::Cosine { axis, .. }
            | TestFunction::ClippedQuadratic { axis, .. } => *axis,
        }
    }

    /// Value at one site; `u` is the rescaled position and `cell` the
    /// width of a lattice cell in rescaled units.
    #[inline]
    pub fn eval(&self, u: &[f64], cell: f64) -> f64 {
        match self {
            TestFunction::HalfSpace { axis, threshold } => ((u[*axis] + 0.5 * cell - threshold) / cell).clamp(0.0, 1.0),
            TestFunction::Cosine { axis, omega } => (omega * u[*axis]).cos(),
            TestFunction::ClippedQuadratic { axis, clip } => (u[*axis] * u[*axis]).min(*clip),
        }
    }

    /// `int f dnu` by one-dimensional quadrature, `nu = N(0, Sigma)`.
    pub fn reference(&self, cov: &[Vec<f64>]) -> f64 {
        let sigma = cov[self.axis()][self.axis()].max(0.0).sqrt();
        match self {
            TestFunction::HalfSpace { threshold, .. } => {
                let c = *threshold;
                gaussian_expectation(&|x| if x > c { 1.0 } else { 0.0 }, sigma, &[c])
            }
            TestFunction::Cosine { omega, .. } => gaussian_expectation(&|x| (omega * x).cos(), sigma, &[]),
            TestFunction::ClippedQuadratic { clip, .. } => {
                let a = clip.sqrt();
                gaussian_expectation(&|x| (x * x).min(*clip), sigma, &[-a, a])
            }
        }
    }

    /// Closed form of [`TestFunction::reference`], used to self-test the quadrature.
    pub fn closed_form(&self, cov: &[Vec<f64>]) -> f64 {
        let sigma = cov[self.axis()][self.axis()].max(0.0).sqrt();
        match self {
            TestFunction::HalfSpace { threshold, .. } => upper_tail(*threshold, sigma),
            TestFunction::Cosine { omega, .. } => (-(omega * sigma).powi(2) / 2.0).exp(),
            TestFunction::ClippedQuadratic { clip, .. } => clipped_second_moment(clip.sqrt() / sigma, sigma),
        }
    }
}

/// The default battery: half-spaces on axis 1 at `{0, +-sigma/2, +-sigma}`,
/// cosines at `omega sigma in {1/2, 1}`, and `min(u_i^2, 9 sigma_i^2)` on
/// every axis.
pub fn default_battery(moments: &KernelMoments) -> Vec<TestFunction> {
    let cov = &moments.gaussian_cov;
    let s1 = cov[0][0].sqrt();
    let mut out: Vec<TestFunction> = [-1.0, -0.5, 0.0, 0.5, 1.0]
        .iter()
        .map(|c| TestFunction::HalfSpace {
            axis: 0,
            threshold: c * s1,
        })
        .collect();
    for w in [0.5, 1.0] {
        out.push(TestFunction::Cosine { axis: 0, omega: w / s1 });
    }
    for (i, row) in cov.iter().enumerate() {
        out.push(TestFunction::ClippedQuadratic {
            axis: i,
            clip: 9.0 * row[i],
        });
    }
    out
}

/// Ensemble probe computing `sum_x f((x - m t)/sqrt t) rho_{t,x}` for each
/// function of the battery (0 on extinct replicas).
pub struct CltProbe {
    pub battery: Vec<TestFunction>,
    pub drift: Vec<f64>,
}

impl Probe for CltProbe {
    fn names(&self) -> Vec<String> {
        self.battery.iter().map(|f| f.name()).collect()
    }

    fn evaluate(&self, state: &ProcessState, out: &mut Vec<f64>) {
        let start = out.len();
        out.extend(std::iter::repeat_n(0.0, self.battery.len()));
        if state.is_extinct() {
            return;
        }
        let t = state.t;
        let cell = if t > 0.0 { 1.0 / t.sqrt() } else { 1.0 };
        let total = state.config.recompute_total();
        let mut u = vec![0.0; state.config.dim()];
        for (x, m) in state.config.iter() {
            let rho = m / total;
            scaled_position(&x, &self.drift, t, &mut u);
            for (k, f) in self.battery.iter().enumerate() {
                out[start + k] += rho * f.eval(&u, cell);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{kernel_moments, make_bcpp_kernel};

    #[test]
    fn references_match_closed_forms() {
        let m = kernel_moments(&make_bcpp_kernel(3, 1.0).unwrap());
        for f in default_battery(&m) {
            let (q, c) = (f.reference(&m.gaussian_cov), f.closed_form(&m.gaussian_cov));
            assert!((q - c).abs() < 1e-8, "{}: {q} vs {c}", f.name());
        }
    }

    #[test]
    fn symmetric_half_space_is_one_half() {
        let m = kernel_moments(&make_bcpp_kernel(3, 1.0).unwrap());
        let f = TestFunction::HalfSpace { axis: 0, threshold: 0.0 };
        assert!((f.reference(&m.gaussian_cov) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cell_averaged_indicator() {
        let f = TestFunction::HalfSpace { axis: 0, threshold: 0.0 };
        assert_eq!(f.eval(&[0.0], 1.0), 0.5);
        assert_eq!(f.eval(&[1.0], 1.0), 1.0);
        assert_eq!(f.eval(&[-1.0], 1.0), 0.0);
    }
}
