use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::numerics::RngStream;

/// Gamma draw with shape `a` and rate `b`.
pub(crate) fn gamma_rate(rng: &mut RngStream, a: f64, b: f64) -> f64 {
    Gamma::new(a, 1.0 / b).expect("positive gamma parameters").sample(rng)
}

/// Inverse-gamma draw with shape `a` and scale `b` (density ∝ x^{−a−1} e^{−b/x}).
pub(crate) fn inv_gamma(rng: &mut RngStream, a: f64, b: f64) -> f64 {
    1.0 / gamma_rate(rng, a, b)
}

/// Square of a half-Cauchy(0, 1) draw.
pub(crate) fn half_cauchy_sq(rng: &mut RngStream) -> f64 {
    let u = rng.open01();
    let c = (std::f64::consts::PI * (u - 0.5)).tan();
    c * c
}

pub(crate) fn std_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Log of a Gamma(`shape`, 1) draw, accurate for tiny shapes where the
/// draw itself underflows.
pub(crate) fn log_gamma_draw(rng: &mut RngStream, shape: f64) -> f64 {
    if shape >= 1.0 {
        return gamma_rate(rng, shape, 1.0).ln();
    }
    gamma_rate(rng, shape + 1.0, 1.0).ln() + rng.open01().ln() / shape
}

/// Symmetric Dirichlet draw. Entries below `floor` are raised to it and the
/// vector renormalized, so every state starts reachable.
pub(crate) fn dirichlet_floored(rng: &mut RngStream, m: usize, kappa: f64, floor: f64) -> Vec<f64> {
    let logs: Vec<f64> = (0..m).map(|_| log_gamma_draw(rng, kappa)).collect();
    let lse = crate::numerics::log_sum_exp(&logs);
    let mut pi: Vec<f64> = logs.iter().map(|l| (l - lse).exp().max(floor)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    let last = 1.0 - pi[..m - 1].iter().sum::<f64>();
    pi[m - 1] = last;
    pi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stats::{mean, median};

    #[test]
    fn inverse_gamma_mean() {
        // IG(3, 2) has mean 1
        let mut rng = RngStream::new(1, 0);
        let xs: Vec<f64> = (0..200_000).map(|_| inv_gamma(&mut rng, 3.0, 2.0)).collect();
        assert!((mean(&xs) - 1.0).abs() < 0.02);
    }

    #[test]
    fn half_cauchy_median() {
        // median of |C(0,1)| is 1
        let mut rng = RngStream::new(2, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| half_cauchy_sq(&mut rng).sqrt()).collect();
        assert!((median(&xs) - 1.0).abs() < 0.02);
    }

    #[test]
    fn tiny_shape_dirichlet_is_simplex() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..100 {
            let pi = dirichlet_floored(&mut rng, 10, 0.001, 1e-6);
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pi.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn log_gamma_draw_mean_for_small_shape() {
        // E[X] = shape for Gamma(shape, 1)
        let mut rng = RngStream::new(4, 0);
        let xs: Vec<f64> = (0..200_000).map(|_| log_gamma_draw(&mut rng, 0.5).exp()).collect();
        assert!((mean(&xs) - 0.5).abs() < 0.01);
    }
}
