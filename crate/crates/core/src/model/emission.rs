use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{mvn_logpdf, GaussianPrecision, SymMatrix};

/// Per-state Gaussian emission parameters and their graphical-horseshoe
/// scales. `lambda_sq[j]` holds λ²; only its off-diagonal is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionParams {
    pub mu: Vec<DVector<f64>>,
    pub omega: Vec<SymMatrix>,
    pub lambda_sq: Vec<DMatrix<f64>>,
    pub tau_sq: Vec<f64>,
}

impl EmissionParams {
    pub fn new(
        mu: Vec<DVector<f64>>,
        omega: Vec<SymMatrix>,
        lambda_sq: Vec<DMatrix<f64>>,
        tau_sq: Vec<f64>,
    ) -> Result<Self> {
        let m = mu.len();
        if m == 0 || omega.len() != m || lambda_sq.len() != m || tau_sq.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "per-state lengths differ: mu {m}, omega {}, lambda {}, tau {}",
                omega.len(),
                lambda_sq.len(),
                tau_sq.len()
            )));
        }
        let d = mu[0].len();
        for j in 0..m {
            if mu[j].len() != d || omega[j].dim() != d || lambda_sq[j].shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!("state {j} has inconsistent dimension")));
            }
            if !(tau_sq[j] > 0.0) {
                return Err(crate::error::invalid("tau", format!("state {j} has non-positive tau")));
            }
        }
        Ok(Self {
            mu,
            omega,
            lambda_sq,
            tau_sq,
        })
    }

    /// Means given, unit precisions and shrinkage scales.
    pub fn with_means(mu: Vec<DVector<f64>>) -> Self {
        let d = mu[0].len();
        let m = mu.len();
        Self {
            mu,
            omega: vec![SymMatrix::identity(d); m],
            lambda_sq: vec![DMatrix::from_element(d, d, 1.0); m],
            tau_sq: vec![1.0; m],
        }
    }

    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    pub fn dim(&self) -> usize {
        self.mu[0].len()
    }

    /// Applies `perm`: new state `j` takes old state `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            mu: perm.iter().map(|&p| self.mu[p].clone()).collect(),
            omega: perm.iter().map(|&p| self.omega[p].clone()).collect(),
            lambda_sq: perm.iter().map(|&p| self.lambda_sq[p].clone()).collect(),
            tau_sq: perm.iter().map(|&p| self.tau_sq[p]).collect(),
        }
    }
}

/// `log N(y_t | μ_j, Ω_j⁻¹)`.
pub fn emission_logpdf(y: &DVector<f64>, j: usize, em: &EmissionParams) -> Result<f64> {
    if j >= em.n_states() {
        return Err(Error::StateOutOfRange {
            state: j,
            n_states: em.n_states(),
        });
    }
    mvn_logpdf(y, &em.mu[j], &em.omega[j])
}

/// T×M table of emission log-densities, row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    n_times: usize,
    n_states: usize,
    values: Vec<f64>,
}

impl EmissionTable {
    pub fn compute(data: &Dataset, em: &EmissionParams) -> Result<Self> {
        let m = em.n_states();
        if em.dim() != data.dim() {
            return Err(Error::DimensionMismatch(format!(
                "data has dimension {}, emissions {}",
                data.dim(),
                em.dim()
            )));
        }
        let dens: Vec<GaussianPrecision> = (0..m)
            .map(|j| GaussianPrecision::new(&em.mu[j], &em.omega[j]))
            .collect::<Result<_>>()?;
        let t = data.len();
        let mut values = vec![0.0; t * m];
        values.par_chunks_mut(m).enumerate().for_each(|(s, row)| {
            let y: DVectorView<'_, f64> = data.obs(s);
            for (j, g) in dens.iter().enumerate() {
                row[j] = g.logpdf(y);
            }
        });
        Ok(Self {
            n_times: t,
            n_states: m,
            values,
        })
    }

    /// From explicit log-densities, `rows[t][j]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged emission table".into()));
        }
        Ok(Self {
            n_times: rows.len(),
            n_states: m,
            values: rows.concat(),
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.n_states + j]
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_states..(t + 1) * self.n_states]
    }

    /// Keeps only the listed states, in order.
    pub fn select_states(&self, states: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_times * states.len());
        for t in 0..self.n_times {
            let row = self.row(t);
            values.extend(states.iter().map(|&j| row[j]));
        }
        Self {
            n_times: self.n_times,
            n_states: states.len(),
            values,
        }
    }
}
