use nalgebra::{DMatrix, DVector};

use super::dists::{half_cauchy_sq, inv_gamma, gamma_rate, std_normal};
use crate::error::{Error, Result};
use crate::numerics::{cholesky_raw, inverse_spd, sample_canonical, RngStream, SymMatrix};

const SCALE_MIN: f64 = 1e-12;
const SCALE_MAX: f64 = 1e12;
const PRIOR_PD_ATTEMPTS: usize = 100;

/// Inverse-gamma augmentation variables of the horseshoe scales: `nu` pairs
/// with λ², `xi` with τ².
#[derive(Debug, Clone, PartialEq)]
pub struct GhsAux {
    pub nu: DMatrix<f64>,
    pub xi: f64,
}

impl GhsAux {
    pub fn ones(d: usize) -> Self {
        Self {
            nu: DMatrix::from_element(d, d, 1.0),
            xi: 1.0,
        }
    }
}

/// Mutable view of one state's horseshoe block.
pub struct GhsBlock<'a> {
    pub omega: &'a mut SymMatrix,
    pub lambda_sq: &'a mut DMatrix<f64>,
    pub tau_sq: &'a mut f64,
    pub aux: &'a mut GhsAux,
}

fn clamp_scale(x: f64) -> f64 {
    x.clamp(SCALE_MIN, SCALE_MAX)
}

/// One column-wise sweep of the graphical-horseshoe block Gibbs sampler for
/// `n` zero-mean observations with scatter matrix `scatter`, followed by the
/// global scale update.
///
/// With very few observations the accumulated rounding can leave the
/// proposal short of positive definite; the block then keeps its previous
/// values and `Ok(false)` is returned.
pub fn ghs_sweep(rng: &mut RngStream, block: GhsBlock<'_>, scatter: &DMatrix<f64>, n: usize) -> Result<bool> {
    let saved = (block.omega.clone(), block.lambda_sq.clone(), *block.tau_sq, block.aux.clone());
    let GhsBlock {
        omega,
        lambda_sq,
        tau_sq,
        aux,
    } = block;
    match sweep_inner(rng, GhsBlock { omega, lambda_sq, tau_sq, aux }, scatter, n) {
        Ok(()) => Ok(true),
        Err(Error::NotPositiveDefinite) => {
            (*omega, *lambda_sq, *tau_sq, *aux) = saved;
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

fn sweep_inner(rng: &mut RngStream, block: GhsBlock<'_>, scatter: &DMatrix<f64>, n: usize) -> Result<()> {
    let GhsBlock {
        omega,
        lambda_sq,
        tau_sq,
        aux,
    } = block;
    let d = omega.dim();
    if d == 1 {
        let s = scatter[(0, 0)].max(f64::MIN_POSITIVE);
        let g = gamma_rate(rng, n as f64 / 2.0 + 1.0, s / 2.0);
        *omega = SymMatrix::new(DMatrix::from_element(1, 1, g))?;
        *tau_sq = clamp_scale(inv_gamma(rng, 0.5, 1.0 / aux.xi));
        aux.xi = inv_gamma(rng, 1.0, 1.0 + 1.0 / *tau_sq);
        return Ok(());
    }

    let mut om = omega.as_matrix().clone();
    let mut sigma = inverse_spd(omega)?.into_matrix();
    let tau2 = *tau_sq;
    let mut ids: Vec<usize> = Vec::with_capacity(d - 1);
    for i in 0..d {
        ids.clear();
        ids.extend((0..d).filter(|&k| k != i));
        let sigma11 = sigma.select_rows(&ids).select_columns(&ids);
        let sigma12 = DVector::from_iterator(d - 1, ids.iter().map(|&k| sigma[(k, i)]));
        let sigma22 = sigma[(i, i)];
        let omega11_inv = &sigma11 - &sigma12 * sigma12.transpose() / sigma22;

        let s22 = scatter[(i, i)].max(f64::MIN_POSITIVE);
        let s12 = DVector::from_iterator(d - 1, ids.iter().map(|&k| scatter[(k, i)]));
        let gam = gamma_rate(rng, n as f64 / 2.0 + 1.0, s22 / 2.0);

        let mut c_inv = &omega11_inv * s22;
        for (r, &k) in ids.iter().enumerate() {
            c_inv[(r, r)] += 1.0 / (lambda_sq[(k, i)] * tau2);
        }
        // symmetrize against rounding before factorizing
        let c_inv = (&c_inv + c_inv.transpose()) * 0.5;
        let beta = sample_canonical(rng, &c_inv, &(-&s12))?;

        let o_beta = &omega11_inv * &beta;
        let omega22 = gam + beta.dot(&o_beta);
        for (r, &k) in ids.iter().enumerate() {
            om[(k, i)] = beta[r];
            om[(i, k)] = beta[r];
        }
        om[(i, i)] = omega22;

        for (r, &k) in ids.iter().enumerate() {
            let w = beta[r];
            let lam = clamp_scale(inv_gamma(rng, 1.0, 1.0 / aux.nu[(k, i)] + w * w / (2.0 * tau2)));
            lambda_sq[(k, i)] = lam;
            lambda_sq[(i, k)] = lam;
            let nu = inv_gamma(rng, 1.0, 1.0 + 1.0 / lam);
            aux.nu[(k, i)] = nu;
            aux.nu[(i, k)] = nu;
        }

        let new11 = &omega11_inv + &o_beta * o_beta.transpose() / gam;
        for (r, &k) in ids.iter().enumerate() {
            for (c, &l) in ids.iter().enumerate() {
                sigma[(k, l)] = new11[(r, c)];
            }
            let v = -o_beta[r] / gam;
            sigma[(k, i)] = v;
            sigma[(i, k)] = v;
        }
        sigma[(i, i)] = 1.0 / gam;
    }

    let p = (d * (d - 1) / 2) as f64;
    let mut ss = 0.0;
    for i in 0..d {
        for l in (i + 1)..d {
            ss += om[(i, l)] * om[(i, l)] / lambda_sq[(i, l)];
        }
    }
    let new_tau = clamp_scale(inv_gamma(rng, (p + 1.0) / 2.0, 1.0 / aux.xi + ss / 2.0));
    *tau_sq = new_tau;
    aux.xi = inv_gamma(rng, 1.0, 1.0 + 1.0 / new_tau);

    let om = SymMatrix::symmetrize(om)?;
    if cholesky_raw(om.as_matrix()).is_err() {
        return Err(Error::NotPositiveDefinite);
    }
    *omega = om;
    Ok(())
}

/// Prior refresh for an unoccupied state: half-Cauchy scales, diffuse
/// U(0, 100) diagonal and Gaussian off-diagonals, redrawn until positive
/// definite; falls back to the diagonal alone.
pub fn ghs_prior_draw(rng: &mut RngStream, block: GhsBlock<'_>) {
    let GhsBlock {
        omega,
        lambda_sq,
        tau_sq,
        aux,
    } = block;
    let d = omega.dim();
    let tau2 = clamp_scale(half_cauchy_sq(rng));
    *tau_sq = tau2;
    aux.xi = inv_gamma(rng, 1.0, 1.0 + 1.0 / tau2);
    for i in 0..d {
        for l in (i + 1)..d {
            let lam = clamp_scale(half_cauchy_sq(rng));
            lambda_sq[(i, l)] = lam;
            lambda_sq[(l, i)] = lam;
            let nu = inv_gamma(rng, 1.0, 1.0 + 1.0 / lam);
            aux.nu[(i, l)] = nu;
            aux.nu[(l, i)] = nu;
        }
    }
    let diag: Vec<f64> = (0..d).map(|_| 100.0 * rng.open01()).collect();
    for _ in 0..PRIOR_PD_ATTEMPTS {
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&diag));
        for i in 0..d {
            for l in (i + 1)..d {
                let w = std_normal(rng) * (lambda_sq[(i, l)] * tau2).sqrt();
                m[(i, l)] = w;
                m[(l, i)] = w;
            }
        }
        if cholesky_raw(&m).is_ok() {
            *omega = SymMatrix::symmetrize(m).expect("square");
            return;
        }
    }
    *omega = SymMatrix::from_diagonal(&diag);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mvn_sample;
    use nalgebra::dmatrix;

    fn scatter_of(xs: &[DVector<f64>]) -> DMatrix<f64> {
        let d = xs[0].len();
        xs.iter().fold(DMatrix::zeros(d, d), |acc, x| acc + x * x.transpose())
    }

    #[test]
    fn bivariate_partial_precision_recovered() {
        let truth = SymMatrix::new(dmatrix![1.0, 0.5; 0.5, 1.0]).unwrap();
        let mut rng = RngStream::new(10, 0);
        let xs: Vec<DVector<f64>> = (0..2000).map(|_| mvn_sample(&mut rng, &DVector::zeros(2), &truth).unwrap()).collect();
        let s = scatter_of(&xs);
        let mut omega = SymMatrix::identity(2);
        let mut lam = DMatrix::from_element(2, 2, 1.0);
        let mut tau = 1.0;
        let mut aux = GhsAux::ones(2);
        let mut acc = 0.0;
        let (burn, keep) = (500, 3000);
        for it in 0..burn + keep {
            ghs_sweep(
                &mut rng,
                GhsBlock { omega: &mut omega, lambda_sq: &mut lam, tau_sq: &mut tau, aux: &mut aux },
                &s,
                2000,
            )
            .unwrap();
            assert!(omega.is_positive_definite());
            if it >= burn {
                acc += omega.get(0, 1);
            }
        }
        let mean = acc / keep as f64;
        assert!((mean - 0.5).abs() < 0.1, "posterior mean {mean}");
    }

    #[test]
    fn prior_draw_is_positive_definite_with_bounded_diagonal() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..200 {
            let mut omega = SymMatrix::identity(6);
            let mut lam = DMatrix::from_element(6, 6, 1.0);
            let mut tau = 1.0;
            let mut aux = GhsAux::ones(6);
            ghs_prior_draw(&mut rng, GhsBlock { omega: &mut omega, lambda_sq: &mut lam, tau_sq: &mut tau, aux: &mut aux });
            assert!(omega.is_positive_definite());
            for i in 0..6 {
                assert!(omega.get(i, i) > 0.0 && omega.get(i, i) < 100.0);
            }
            assert!(tau > 0.0);
        }
    }

    #[test]
    fn sweep_keeps_positive_definite_on_small_samples() {
        let mut rng = RngStream::new(8, 0);
        let d = 8;
        let xs: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_fn(d, |_, _| std_normal(&mut rng))).collect();
        let s = scatter_of(&xs);
        let mut omega = SymMatrix::identity(d);
        let mut lam = DMatrix::from_element(d, d, 1.0);
        let mut tau = 1.0;
        let mut aux = GhsAux::ones(d);
        for _ in 0..500 {
            ghs_sweep(&mut rng, GhsBlock { omega: &mut omega, lambda_sq: &mut lam, tau_sq: &mut tau, aux: &mut aux }, &s, 5).unwrap();
            assert!(omega.is_positive_definite());
        }
    }

    #[test]
    fn single_observation_never_aborts() {
        let mut rng = RngStream::new(9, 0);
        let d = 15;
        let x = DVector::from_fn(d, |_, _| 3.0 * std_normal(&mut rng));
        let s = &x * x.transpose();
        let mut omega = SymMatrix::identity(d);
        let mut lam = DMatrix::from_element(d, d, 1.0);
        let mut tau = 1.0;
        let mut aux = GhsAux::ones(d);
        let mut kept = 0;
        for _ in 0..300 {
            let before = omega.clone();
            let moved = ghs_sweep(&mut rng, GhsBlock { omega: &mut omega, lambda_sq: &mut lam, tau_sq: &mut tau, aux: &mut aux }, &s, 1).unwrap();
            if !moved {
                assert_eq!(omega, before);
                kept += 1;
            }
            assert!(omega.is_positive_definite());
        }
        assert!(kept < 300);
    }
}
