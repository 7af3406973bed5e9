//! Model parameters and generative densities.

mod dar;
mod emission;

pub use dar::{
    dar_transition_logprob, effective_order, log_dirichlet, log_stick_prior, phi_from_sticks,
    sample_stick_prior, shrinkage_prob, DarParams, DarSuffStats, StickDraw,
};
pub(crate) use dar::{beta_ln_pdf, clamp_open, sticks_to_phi, transition_prob};
pub use emission::{emission_logpdf, EmissionParams, EmissionTable};

use nalgebra::DVector;

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::numerics::{mvn_logpdf, SymMatrix};

/// Fixed prior constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub a0: f64,
    pub b0: f64,
    pub av: f64,
    pub bv: f64,
    pub kappa0: f64,
    pub mu0: DVector<f64>,
    pub r0: SymMatrix,
    pub m_max: usize,
    pub p_max: usize,
    /// States holding fewer than `state_floor · T` observations are refreshed
    /// from the prior.
    pub state_floor: f64,
}

impl Hyperparameters {
    /// Defaults used in the simulation study, for data of dimension `d`.
    pub fn default_for_dim(d: usize) -> Self {
        Self {
            a0: 1.0,
            b0: 10.0,
            av: 10.0,
            bv: 1.0,
            kappa0: 0.001,
            mu0: DVector::zeros(d),
            r0: SymMatrix::scaled_identity(d, 0.1),
            m_max: 10,
            p_max: 5,
            state_floor: 0.01,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("a0", self.a0),
            ("b0", self.b0),
            ("av", self.av),
            ("bv", self.bv),
            ("kappa0", self.kappa0),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {x}")));
            }
        }
        if self.m_max < 2 {
            return Err(invalid("m_max", "must be at least 2"));
        }
        if self.p_max < 1 {
            return Err(invalid("p_max", "must be at least 1"));
        }
        if self.p_max > 16 {
            return Err(invalid("p_max", "orders above 16 are not supported"));
        }
        if !(0.0..1.0).contains(&self.state_floor) {
            return Err(invalid("state_floor", "must lie in [0, 1)"));
        }
        if self.r0.dim() != self.mu0.len() {
            return Err(invalid("r0", "dimension differs from mu0"));
        }
        if !self.r0.is_positive_definite() {
            return Err(invalid("r0", "must be positive definite"));
        }
        Ok(())
    }
}

/// One full configuration of the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dar: DarParams,
    pub emissions: EmissionParams,
    /// 0-based state labels.
    pub gamma: Vec<usize>,
    pub loglik: f64,
}

impl ModelState {
    /// Number of observations per state.
    pub fn counts(&self) -> Vec<usize> {
        state_counts(&self.gamma, self.emissions.n_states())
    }

    /// The conditional likelihood recomputed from the parameters.
    pub fn loglik_recomputed(&self, data: &Dataset) -> Result<f64> {
        conditional_loglik(&self.dar, &self.emissions, &self.gamma, data)
    }

    /// States with at least one observation.
    pub fn occupied(&self) -> usize {
        self.counts().iter().filter(|&&n| n > 0).count()
    }
}

pub fn state_counts(gamma: &[usize], n_states: usize) -> Vec<usize> {
    let mut n = vec![0; n_states];
    for &g in gamma {
        n[g] += 1;
    }
    n
}

fn check_gamma(gamma: &[usize], data: &Dataset, n_states: usize) -> Result<()> {
    if gamma.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: gamma.len(),
            right: data.len(),
        });
    }
    if let Some(&s) = gamma.iter().find(|&&s| s >= n_states) {
        return Err(Error::StateOutOfRange { state: s, n_states });
    }
    Ok(())
}

/// The conditional likelihood: `Σ_{t > P̂} log η(γ_t | ·) + log p(y_t | γ_t)`
/// (1-based `t`).
pub fn conditional_loglik(
    dar: &DarParams,
    em: &EmissionParams,
    gamma: &[usize],
    data: &Dataset,
) -> Result<f64> {
    check_gamma(gamma, data, em.n_states())?;
    let table = EmissionTable::compute(data, em)?;
    Ok(conditional_loglik_with(dar, &table, gamma))
}

pub(crate) fn conditional_loglik_with(dar: &DarParams, table: &EmissionTable, gamma: &[usize]) -> f64 {
    let phi = dar.phi();
    let p = dar.order();
    let mut ll = 0.0;
    let mut hist = vec![0usize; p];
    for t in p..gamma.len() {
        for k in 0..p {
            hist[k] = gamma[t - 1 - k];
        }
        ll += transition_prob(gamma[t], &hist, &phi, dar.pi()).ln() + table.get(t, gamma[t]);
    }
    ll
}

/// Normal log-density of the off-diagonal entries of `omega` given the
/// shrinkage scales; the diagonal prior is flat.
pub fn log_ghs_prior(omega: &SymMatrix, lambda_sq: &nalgebra::DMatrix<f64>, tau_sq: f64) -> f64 {
    let d = omega.dim();
    let mut lp = 0.0;
    for i in 0..d {
        for l in (i + 1)..d {
            let var = lambda_sq[(i, l)] * tau_sq;
            let w = omega.get(i, l);
            lp += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * w * w / var;
        }
    }
    lp
}

/// Half-Cauchy(0, 1) log-density of a scale, evaluated from its square.
pub fn log_half_cauchy_from_sq(scale_sq: f64) -> f64 {
    (2.0 / std::f64::consts::PI).ln() - scale_sq.ln_1p()
}

/// Log prior of all parameters (without augmentation variables).
pub fn log_prior(state: &ModelState, hp: &Hyperparameters) -> Result<f64> {
    let em = &state.emissions;
    let mut lp = log_stick_prior(&state.dar, hp) + log_dirichlet(state.dar.pi(), hp.kappa0);
    for j in 0..em.n_states() {
        lp += mvn_logpdf(&em.mu[j], &hp.mu0, &hp.r0)?;
        lp += log_ghs_prior(&em.omega[j], &em.lambda_sq[j], em.tau_sq[j]);
        let d = em.dim();
        for i in 0..d {
            for l in (i + 1)..d {
                lp += log_half_cauchy_from_sq(em.lambda_sq[j][(i, l)]);
            }
        }
        lp += log_half_cauchy_from_sq(em.tau_sq[j]);
    }
    Ok(lp)
}

/// Conditional likelihood plus log prior.
pub fn log_joint(state: &ModelState, data: &Dataset, hp: &Hyperparameters) -> Result<f64> {
    if state.emissions.n_states() != state.dar.n_states() {
        return Err(Error::DimensionMismatch(
            "emission and innovation state counts differ".into(),
        ));
    }
    Ok(conditional_loglik(&state.dar, &state.emissions, &state.gamma, data)? + log_prior(state, hp)?)
}
