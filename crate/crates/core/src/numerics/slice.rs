use super::RngStream;
use crate::error::{Error, Result};

pub const SLICE_WIDTH: f64 = 0.1;
pub const SLICE_MAX_STEPS: usize = 50;

/// One univariate slice-sampling transition (stepping out, then shrinkage)
/// restricted to the open interval `(lower, upper)`.
///
/// `log_target` may return `-inf` outside the support; it must be finite at
/// `x0`.
pub fn slice_sample_1d<F>(
    rng: &mut RngStream,
    mut log_target: F,
    x0: f64,
    lower: f64,
    upper: f64,
    width: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(x0 > lower && x0 < upper) {
        return Err(Error::OutOfSupport { x0, lower, upper });
    }
    let f0 = log_target(x0);
    if !f0.is_finite() {
        return Err(Error::NonFiniteTarget(x0));
    }
    // log of the auxiliary height: f0 + log U, U exponential trick
    let log_y = f0 + rng.open01().ln();

    let mut left = x0 - width * rng.open01();
    let mut right = left + width;
    let mut j = (SLICE_MAX_STEPS as f64 * rng.open01()).floor() as usize;
    let mut k = (SLICE_MAX_STEPS - 1).saturating_sub(j);
    while j > 0 && left > lower && log_target(left) > log_y {
        left -= width;
        j -= 1;
    }
    while k > 0 && right < upper && log_target(right) > log_y {
        right += width;
        k -= 1;
    }
    left = left.max(lower);
    right = right.min(upper);

    loop {
        let x1 = left + rng.open01() * (right - left);
        if x1 > lower && x1 < upper && log_target(x1) >= log_y {
            return Ok(x1);
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        // the bracket has collapsed onto x0 up to rounding
        if right - left <= f64::EPSILON * x0.abs().max(f64::MIN_POSITIVE) * 4.0 {
            return Ok(x0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stats::{kolmogorov_pvalue, ks_statistic};
    use statrs::distribution::{Beta, ContinuousCDF};

    #[test]
    fn beta_target_ks() {
        let mut rng = RngStream::new(2024, 0);
        let log_t = |x: f64| 2.0 * x.ln() + 4.0 * (1.0 - x).ln();
        let mut x = 0.5;
        let n = 100_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            x = slice_sample_1d(&mut rng, log_t, x, 0.0, 1.0, SLICE_WIDTH).unwrap();
            draws.push(x);
        }
        // thin to reduce autocorrelation before the iid-based KS test
        let thinned: Vec<f64> = draws.iter().step_by(5).copied().collect();
        let beta = Beta::new(3.0, 5.0).unwrap();
        let d = ks_statistic(&thinned, |v| beta.cdf(v));
        let p = kolmogorov_pvalue(d, thinned.len());
        assert!(p > 0.01, "D={d}, p={p}");
    }

    #[test]
    fn flat_target_uniform() {
        let mut rng = RngStream::new(3, 1);
        let mut x = 1.5;
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            x = slice_sample_1d(&mut rng, |_| 0.0, x, 1.0, 3.0, SLICE_WIDTH).unwrap();
            draws.push(x);
        }
        let d = ks_statistic(&draws, |v| ((v - 1.0) / 2.0).clamp(0.0, 1.0));
        assert!(kolmogorov_pvalue(d, draws.len()) > 0.01);
        assert!(draws.iter().all(|&v| v > 1.0 && v < 3.0));
    }

    #[test]
    fn out_of_support_rejected() {
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            slice_sample_1d(&mut rng, |_| 0.0, 2.0, 0.0, 1.0, 0.1),
            Err(Error::OutOfSupport { .. })
        ));
        assert!(matches!(
            slice_sample_1d(&mut rng, |_| 0.0, 0.0, 0.0, 1.0, 0.1),
            Err(Error::OutOfSupport { .. })
        ));
    }

    #[test]
    fn non_finite_start_rejected() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(
            slice_sample_1d(&mut rng, |_| f64::NEG_INFINITY, 0.5, 0.0, 1.0, 0.1),
            Err(Error::NonFiniteTarget(0.5))
        );
    }

    #[test]
    fn spiky_target_stays_inside() {
        // Dirichlet-like spike at zero
        let mut rng = RngStream::new(9, 0);
        let mut x = 0.3;
        for _ in 0..5000 {
            x = slice_sample_1d(&mut rng, |v| -0.999 * v.ln(), x, 0.0, 0.6, SLICE_WIDTH).unwrap();
            assert!(x > 0.0 && x < 0.6);
        }
    }
}
