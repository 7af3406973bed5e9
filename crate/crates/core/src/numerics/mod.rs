//! Random streams, dense symmetric linear algebra, slice sampling and a few
//! statistical helpers shared by the rest of the crate.

mod linalg;
mod rng;
mod slice;
pub mod stats;

pub use linalg::{
    cholesky, inverse_spd, log_det_spd, mvn_logpdf, mvn_sample, GaussianPrecision, SymMatrix,
};
pub(crate) use linalg::{cholesky_raw, sample_canonical};
pub use rng::{derive_seed, RngStream};
pub use slice::{slice_sample_1d, SLICE_MAX_STEPS, SLICE_WIDTH};

/// `log(Σ exp(x))` without overflow. Returns `-inf` for an empty or all
/// `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
