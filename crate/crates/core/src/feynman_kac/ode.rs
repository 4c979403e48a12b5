//! Explicit RK4 with step doubling for sparse linear systems `u' = A u`.

use crate::error::{Error, Result};

/// Compressed sparse rows.
#[derive(Clone, Debug, Default)]
pub struct SparseMatrix {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> SparseMatrix {
        let mut m = SparseMatrix {
            offsets: vec![0],
            ..Default::default()
        };
        for row in rows {
            for (c, v) in row {
                m.cols.push(c);
                m.vals.push(v);
            }
            m.offsets.push(m.cols.len());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.offsets[i], self.offsets[i + 1]);
            *out = self.cols[a..b].iter().zip(&self.vals[a..b]).map(|(&c, v)| v * x[c]).sum();
        }
    }

    /// Largest absolute row sum, a bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.vals[self.offsets[i]..self.offsets[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// Smallest allowed step relative to the final time.
    pub min_step_fraction: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tolerance: 1e-10,
            abs_tolerance: 1e-14,
            min_step_fraction: 1e-12,
        }
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Rk4 {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, a: &SparseMatrix, u: &[f64], h: f64, out: &mut [f64]) {
        let n = u.len();
        a.apply(u, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = u[i] + 0.5 * h * self.k1[i];
        }
        a.apply(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = u[i] + 0.5 * h * self.k2[i];
        }
        a.apply(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = u[i] + h * self.k3[i];
        }
        a.apply(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = u[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates `u' = A u` from `u0` at time 0 and returns `u` at each of
/// `times` (nondecreasing, nonnegative), plus the number of accepted steps.
pub fn integrate(a: &SparseMatrix, u0: &[f64], times: &[f64], opts: OdeOptions) -> Result<(Vec<Vec<f64>>, usize)> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument("oracle times must be finite, nonnegative and nondecreasing".into()));
    }
    let n = u0.len();
    let t_end = times.last().copied().unwrap_or(0.0);
    let min_step = opts.min_step_fraction * t_end.max(1e-300);
    let mut rk = Rk4::new(n);
    let mut u = u0.to_vec();
    let mut full = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut two = vec![0.0; n];
    let mut t = 0.0;
    let mut h = 0.5 / a.norm_inf().max(1e-12);
    let mut steps = 0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            let step = h.min(target - t);
            rk.step(a, &u, step, &mut full);
            rk.step(a, &u, step / 2.0, &mut half);
            rk.step(a, &half, step / 2.0, &mut two);
            let err = full
                .iter()
                .zip(&two)
                .map(|(f, w)| (f - w).abs() / (opts.abs_tolerance + opts.rel_tolerance * w.abs()))
                .fold(0.0, f64::max);
            if err <= 1.0 {
                for i in 0..n {
                    // Local extrapolation: the doubled step is fifth order.
                    u[i] = two[i] + (two[i] - full[i]) / 15.0;
                }
                if u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Corruption("non-finite value in ODE solution".into()));
                }
                t += step;
                steps += 1;
            }
            let factor = if err == 0.0 { 2.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 2.0) };
            // Do not let a short final step shrink the working step size.
            if err > 1.0 || step == h {
                h = step * factor;
            }
            if h < min_step && t < target {
                return Err(Error::Stiffness { t, step: h });
            }
        }
        out.push(u.clone());
    }
    Ok((out, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_growth() {
        let a = SparseMatrix::from_rows(vec![vec![(0, 0.7)]]);
        let (u, _) = integrate(&a, &[2.0], &[0.0, 1.0, 3.0], OdeOptions::default()).unwrap();
        assert_eq!(u[0][0], 2.0);
        assert!((u[1][0] - 2.0 * 0.7f64.exp()).abs() < 1e-9);
        assert!((u[2][0] - 2.0 * 2.1f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn two_state_chain_conserves_mass() {
        // Column-stochastic generator: mass moves 0 -> 1 at rate 2 and back at 1.
        let a = SparseMatrix::from_rows(vec![vec![(0, -2.0), (1, 1.0)], vec![(0, 2.0), (1, -1.0)]]);
        let (u, _) = integrate(&a, &[1.0, 0.0], &[5.0], OdeOptions::default()).unwrap();
        assert!((u[0][0] + u[0][1] - 1.0).abs() < 1e-10);
        let exact0 = 1.0 / 3.0 + 2.0 / 3.0 * (-15.0f64).exp();
        assert!((u[0][0] - exact0).abs() < 1e-9);
    }

    #[test]
    fn rejects_unsorted_times() {
        let a = SparseMatrix::from_rows(vec![vec![(0, 1.0)]]);
        assert!(integrate(&a, &[1.0], &[2.0, 1.0], OdeOptions::default()).is_err());
    }
}
