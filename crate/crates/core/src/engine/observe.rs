use serde::Serialize;

use super::state::ProcessState;

/// Snapshot of the observables of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub normalized_total: f64,
    pub rho_star: f64,
    pub overlap: f64,
    pub occupied: usize,
    /// `sum_x ((x - m t)/sqrt t) rho_{t,x}`.
    pub weighted_moment_1: Vec<f64>,
    /// Row-major `d x d` matrix of second weighted moments.
    pub weighted_moment_2: Vec<f64>,
    pub extinct: bool,
}

/// Centered and scaled position `(x - m t)/sqrt(t)`; unscaled at `t = 0`.
pub fn scaled_position(x: &crate::Site, drift: &[f64], t: f64, out: &mut [f64]) {
    let scale = if t > 0.0 { 1.0 / t.sqrt() } else { 1.0 };
    for (i, o) in out.iter_mut().enumerate() {
        *o = (x.get(i) as f64 - drift[i] * t) * scale;
    }
}

pub fn observables(state: &ProcessState) -> ObservableRecord {
    let d = state.config.dim();
    let mut m1 = vec![0.0; d];
    let mut m2 = vec![0.0; d * d];
    if state.is_extinct() {
        return ObservableRecord {
            t: state.t,
            normalized_total: 0.0,
            rho_star: 0.0,
            overlap: 0.0,
            occupied: 0,
            weighted_moment_1: m1,
            weighted_moment_2: m2,
            extinct: true,
        };
    }
    let total = state.config.recompute_total();
    let mut rho_star = 0.0f64;
    let mut overlap = 0.0;
    let mut u = vec![0.0; d];
    for (x, m) in state.config.iter() {
        let rho = m / total;
        rho_star = rho_star.max(rho);
        overlap += rho * rho;
        scaled_position(&x, state.drift(), state.t, &mut u);
        for i in 0..d {
            m1[i] += u[i] * rho;
            for j in 0..d {
                m2[i * d + j] += u[i] * u[j] * rho;
            }
        }
    }
    // Rounding can push the overlap a hair past rho_star for a single site.
    let overlap = overlap.min(rho_star);
    ObservableRecord {
        t: state.t,
        normalized_total: state.normalized_total(),
        rho_star,
        overlap,
        occupied: state.config.occupied(),
        weighted_moment_1: m1,
        weighted_moment_2: m2,
        extinct: false,
    }
}
