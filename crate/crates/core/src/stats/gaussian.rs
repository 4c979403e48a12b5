//! One-dimensional Gaussian integrals by composite Simpson quadrature, with
//! breakpoints at the kinks and jumps of the integrand.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Half-width of the integration window in standard deviations.
const WINDOW: f64 = 12.0;
const INTERVALS: usize = 4000;

/// `E[f(X)]` for `X ~ N(0, sigma^2)`.
pub fn gaussian_expectation(f: &dyn Fn(f64) -> f64, sigma: f64, breakpoints: &[f64]) -> f64 {
    if sigma == 0.0 {
        return f(0.0);
    }
    let lo = -WINDOW * sigma;
    let hi = WINDOW * sigma;
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let density = |x: f64| (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let g = |x: f64| f(x) * density(x);
    cuts.windows(2)
        .map(|w| {
            // Evaluate just inside the segment so jumps are sided correctly.
            let (a, b) = (w[0], w[1]);
            let h = (b - a) / INTERVALS as f64;
            let eps = 1e-12 * (b - a);
            let mut s = g(a + eps) + g(b - eps);
            for i in 1..INTERVALS {
                let x = a + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
            }
            s * h / 3.0
        })
        .sum()
}

/// `P(X > c)` for `X ~ N(0, sigma^2)`.
pub fn upper_tail(c: f64, sigma: f64) -> f64 {
    1.0 - Normal::new(0.0, sigma).expect("positive sigma").cdf(c)
}

/// `E[min(X^2, (a sigma)^2)]` for `X ~ N(0, sigma^2)`.
pub fn clipped_second_moment(a: f64, sigma: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let inside = (2.0 * n.cdf(a) - 1.0) - 2.0 * a * n.pdf(a);
    let outside = a * a * 2.0 * (1.0 - n.cdf(a));
    sigma * sigma * (inside + outside)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_closed_forms() {
        for sigma in [0.3, 2.0f64.sqrt() / 7.0f64.sqrt(), 1.7] {
            for c in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                let c = c * sigma;
                let q = gaussian_expectation(&|x| if x > c { 1.0 } else { 0.0 }, sigma, &[c]);
                assert!((q - upper_tail(c, sigma)).abs() < 1e-8, "sigma {sigma} c {c}");
            }
            let clip = 9.0 * sigma * sigma;
            let q = gaussian_expectation(&|x| (x * x).min(clip), sigma, &[-3.0 * sigma, 3.0 * sigma]);
            assert!((q - clipped_second_moment(3.0, sigma)).abs() < 1e-8);
            for w in [0.5, 1.0] {
                let omega = w / sigma;
                let q = gaussian_expectation(&|x| (omega * x).cos(), sigma, &[]);
                assert!((q - (-(omega * sigma).powi(2) / 2.0).exp()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn variance_is_recovered() {
        let q = gaussian_expectation(&|x| x * x, 0.5, &[]);
        assert!((q - 0.25).abs() < 1e-10);
    }
}
