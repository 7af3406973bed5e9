//! The Gibbs sampler: order moves and slice updates of the DAR parameters,
//! horseshoe block Gibbs for the precisions, conjugate means and blocked
//! state-path draws.

mod dar_moves;
pub(crate) mod dists;
mod ghs;
mod kmeans;

pub use dar_moves::{
    birth_log_ratio, death_log_ratio, stick_log_target, step_sticks_birth_death, step_slice_pi,
    step_slice_v, MoveOutcome, OrderMove,
};
pub use ghs::{ghs_prior_draw, ghs_sweep, GhsAux, GhsBlock};
pub use kmeans::{kmeans, KMeans};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::messages::{backward_pass, sample_path};
use crate::model::{
    conditional_loglik_with, sample_stick_prior, state_counts, DarParams, DarSuffStats,
    EmissionParams, EmissionTable, Hyperparameters, ModelState,
};
use crate::numerics::{mvn_sample, sample_canonical, RngStream, SymMatrix};

const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERATIONS: usize = 100;
const INITIAL_PI_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub record_loglik: bool,
    pub chains: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burnin: 1200,
            thin: 1,
            seed: 0,
            record_loglik: true,
            chains: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be positive"));
        }
        if self.burnin >= self.iterations {
            return Err(invalid("burnin", "must be smaller than iterations"));
        }
        if self.thin == 0 {
            return Err(invalid("thin", "must be positive"));
        }
        if self.chains == 0 {
            return Err(invalid("chains", "must be positive"));
        }
        Ok(())
    }

    pub fn n_snapshots(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }

    fn records(&self, iteration: usize) -> bool {
        iteration > self.burnin && (iteration - self.burnin) % self.thin == 0
    }
}

/// Parameters of one recorded iteration. `tau` holds τ (not τ²); λ² is not
/// recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub m_active: usize,
    pub p_order: usize,
    pub v: Vec<f64>,
    pub z: Vec<u8>,
    pub pi: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub omega: Vec<SymMatrix>,
    pub tau: Vec<f64>,
    pub loglik: f64,
    pub gamma: Vec<usize>,
}

impl Snapshot {
    pub fn from_state(iteration: usize, st: &ModelState) -> Self {
        Self {
            iteration,
            m_active: st.occupied(),
            p_order: st.dar.order(),
            v: st.dar.v().to_vec(),
            z: st.dar.z().to_vec(),
            pi: st.dar.pi().to_vec(),
            mu: st.emissions.mu.clone(),
            omega: st.emissions.omega.clone(),
            tau: st.emissions.tau_sq.iter().map(|t| t.sqrt()).collect(),
            loglik: st.loglik,
            gamma: st.gamma.clone(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn phi(&self) -> Vec<f64> {
        crate::model::sticks_to_phi(&self.v)
    }

    pub fn dar(&self) -> Result<DarParams> {
        DarParams::new(self.v.clone(), self.z.clone(), self.pi.clone())
    }

    /// Relabels states: new state `j` takes old state `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        Self {
            pi: perm.iter().map(|&p| self.pi[p]).collect(),
            mu: perm.iter().map(|&p| self.mu[p].clone()).collect(),
            omega: perm.iter().map(|&p| self.omega[p].clone()).collect(),
            tau: perm.iter().map(|&p| self.tau[p]).collect(),
            gamma: self.gamma.iter().map(|&g| inv[g]).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MoveCounts {
    pub birth_proposed: usize,
    pub birth_accepted: usize,
    pub death_proposed: usize,
    pub death_accepted: usize,
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub snapshots: Vec<Snapshot>,
    /// Conditional log-likelihood at every iteration.
    pub loglik_trace: Vec<f64>,
    pub m_trace: Vec<usize>,
    pub p_trace: Vec<usize>,
    pub moves: MoveCounts,
}

/// Sampler state: the model configuration plus horseshoe augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub model: ModelState,
    pub ghs_aux: Vec<GhsAux>,
}

/// Whether each state holds enough observations to be updated from data.
pub fn active_states(gamma: &[usize], n_states: usize, floor: f64) -> Vec<bool> {
    let t = gamma.len() as f64;
    state_counts(gamma, n_states)
        .iter()
        .map(|&n| n > 0 && n as f64 >= floor * t)
        .collect()
}

/// Scatter matrix of `y_t − μ_j` over `t` with `γ_t = j`, and the count.
pub fn centered_scatter(data: &Dataset, gamma: &[usize], j: usize, mu: &DVector<f64>) -> (DMatrix<f64>, usize) {
    let d = data.dim();
    let mut s = DMatrix::zeros(d, d);
    let mut n = 0;
    let mut r = DVector::zeros(d);
    for (t, &g) in gamma.iter().enumerate() {
        if g == j {
            r.copy_from(&data.obs(t));
            r -= mu;
            s.syger(1.0, &r, &r, 1.0);
            n += 1;
        }
    }
    s.fill_upper_triangle_with_lower_triangle();
    (s, n)
}

/// Horseshoe update of every state, each from its own stream; unoccupied
/// states are redrawn from the prior.
pub fn step_ghs(
    state_rngs: &mut [RngStream],
    em: &mut EmissionParams,
    aux: &mut [GhsAux],
    data: &Dataset,
    gamma: &[usize],
    hp: &Hyperparameters,
) -> Result<()> {
    let active = active_states(gamma, em.n_states(), hp.state_floor);
    let mu = &em.mu;
    let results: Vec<Result<()>> = state_rngs
        .par_iter_mut()
        .zip(em.omega.par_iter_mut())
        .zip(em.lambda_sq.par_iter_mut())
        .zip(em.tau_sq.par_iter_mut())
        .zip(aux.par_iter_mut())
        .enumerate()
        .map(|(j, ((((rng, omega), lambda_sq), tau_sq), aux))| {
            let block = GhsBlock {
                omega,
                lambda_sq,
                tau_sq,
                aux,
            };
            if active[j] {
                let (s, n) = centered_scatter(data, gamma, j, &mu[j]);
                ghs_sweep(rng, block, &s, n).map(|_| ())
            } else {
                ghs_prior_draw(rng, block);
                Ok(())
            }
        })
        .collect();
    results.into_iter().collect()
}

/// Conjugate Gaussian update of the means; unoccupied states draw from the
/// prior.
pub fn step_means(
    state_rngs: &mut [RngStream],
    em: &mut EmissionParams,
    data: &Dataset,
    gamma: &[usize],
    hp: &Hyperparameters,
) -> Result<()> {
    let m = em.n_states();
    let d = data.dim();
    let active = active_states(gamma, m, hp.state_floor);
    let mut sums = vec![DVector::<f64>::zeros(d); m];
    let mut counts = vec![0usize; m];
    for (t, &g) in gamma.iter().enumerate() {
        sums[g] += data.obs(t);
        counts[g] += 1;
    }
    let r0 = hp.r0.as_matrix();
    let prior_b = r0 * &hp.mu0;
    for j in 0..m {
        let rng = &mut state_rngs[j];
        em.mu[j] = if active[j] {
            let om = em.omega[j].as_matrix();
            let precision = r0 + om * counts[j] as f64;
            let b = &prior_b + om * &sums[j];
            sample_canonical(rng, &precision, &b)?
        } else {
            mvn_sample(rng, &hp.mu0, &hp.r0)?
        };
    }
    Ok(())
}

/// Redraws the state path from its blocked conditionals. Returns the path
/// and the emission table it was drawn under.
pub fn step_states(
    rng: &mut RngStream,
    dar: &DarParams,
    em: &EmissionParams,
    data: &Dataset,
) -> Result<(Vec<usize>, EmissionTable)> {
    let table = EmissionTable::compute(data, em)?;
    let beta = backward_pass(&table, dar)?;
    Ok((sample_path(rng, &table, dar, &beta), table))
}

/// Starting configuration: sticks from the prior, innovations from the
/// Dirichlet prior, k-means means and labels, unit precisions and scales.
pub fn initialize(rng: &mut RngStream, data: &Dataset, hp: &Hyperparameters) -> Result<SamplerState> {
    let m = hp.m_max;
    let d = data.dim();
    let sticks = sample_stick_prior(rng, hp);
    let pi = dists::dirichlet_floored(rng, m, hp.kappa0, INITIAL_PI_FLOOR);
    let dar = sticks.into_dar(pi)?;
    let km = kmeans(rng, data, m.min(data.len()), KMEANS_RESTARTS, KMEANS_ITERATIONS);
    let mut mu: Vec<DVector<f64>> = km.centers.iter().map(|c| DVector::from_column_slice(c)).collect();
    while mu.len() < m {
        mu.push(mvn_sample(rng, &hp.mu0, &hp.r0)?);
    }
    let emissions = EmissionParams::with_means(mu);
    let table = EmissionTable::compute(data, &emissions)?;
    let gamma = km.labels;
    let loglik = conditional_loglik_with(&dar, &table, &gamma);
    Ok(SamplerState {
        model: ModelState {
            dar,
            emissions,
            gamma,
            loglik,
        },
        ghs_aux: vec![GhsAux::ones(d); m],
    })
}

fn state_streams(chain_rng: &RngStream, iteration: usize, m: usize) -> Vec<RngStream> {
    (0..m)
        .map(|j| chain_rng.substream(((iteration as u64) << 20) | j as u64))
        .collect()
}

/// One full sweep in the fixed order: order move and stick slices,
/// innovation slices, horseshoe, means, state path.
pub fn sweep(
    rng: &mut RngStream,
    iteration: usize,
    st: &mut SamplerState,
    data: &Dataset,
    hp: &Hyperparameters,
) -> Result<MoveOutcome> {
    let m = hp.m_max;
    let model = &mut st.model;
    let stats = DarSuffStats::new(&model.gamma, m, hp.p_max);
    let outcome = step_sticks_birth_death(rng, &mut model.dar, &stats, hp);
    step_slice_v(rng, &mut model.dar, &stats, hp)?;
    step_slice_pi(rng, &mut model.dar, &stats, hp)?;

    let mut streams = state_streams(rng, iteration, m);
    step_ghs(&mut streams, &mut model.emissions, &mut st.ghs_aux, data, &model.gamma, hp)?;
    step_means(&mut streams, &mut model.emissions, data, &model.gamma, hp)?;

    let (gamma, table) = step_states(rng, &model.dar, &model.emissions, data)?;
    model.gamma = gamma;
    model.loglik = conditional_loglik_with(&model.dar, &table, &model.gamma);
    Ok(outcome)
}

/// Runs one chain from `stream_id` of the configured seed.
pub fn run_chain(config: &SamplerConfig, stream_id: u32, data: &Dataset, hp: &Hyperparameters) -> Result<Chain> {
    config.validate()?;
    hp.validate()?;
    if data.dim() != hp.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has dimension {}, hyperparameters {}",
            data.dim(),
            hp.dim()
        )));
    }
    if data.len() <= hp.p_max {
        return Err(invalid("data", format!("need more than {} observations", hp.p_max)));
    }
    let mut rng = RngStream::new(config.seed, stream_id);
    let abort = |iteration: usize| move |e: Error| Error::SamplerAbort {
        iteration,
        source: Box::new(e),
    };
    let mut st = initialize(&mut rng, data, hp).map_err(abort(0))?;
    let mut chain = Chain {
        snapshots: Vec::with_capacity(config.n_snapshots()),
        loglik_trace: Vec::with_capacity(if config.record_loglik { config.iterations } else { 0 }),
        m_trace: Vec::with_capacity(config.iterations),
        p_trace: Vec::with_capacity(config.iterations),
        moves: MoveCounts::default(),
    };
    for it in 1..=config.iterations {
        let out = sweep(&mut rng, it, &mut st, data, hp).map_err(abort(it))?;
        match (out.kind, out.accepted) {
            (OrderMove::Birth, acc) => {
                chain.moves.birth_proposed += 1;
                chain.moves.birth_accepted += acc as usize;
            }
            (OrderMove::Death, acc) => {
                chain.moves.death_proposed += 1;
                chain.moves.death_accepted += acc as usize;
            }
            (OrderMove::None, _) => {}
        }
        if config.record_loglik {
            chain.loglik_trace.push(st.model.loglik);
        }
        chain.m_trace.push(st.model.occupied());
        chain.p_trace.push(st.model.dar.order());
        if config.records(it) {
            chain.snapshots.push(Snapshot::from_state(it, &st.model));
        }
    }
    Ok(chain)
}

/// Runs `config.chains` chains in parallel; chain `c` uses stream `c`.
pub fn run_mcmc(config: &SamplerConfig, data: &Dataset, hp: &Hyperparameters) -> Result<Vec<Chain>> {
    config.validate()?;
    (0..config.chains as u32)
        .into_par_iter()
        .map(|c| run_chain(config, c, data, hp))
        .collect()
}

/// Log joint density including the inverse-gamma augmentation of the
/// half-Cauchy scales, as targeted by the horseshoe Gibbs steps.
pub fn log_joint_augmented(st: &SamplerState, data: &Dataset, hp: &Hyperparameters) -> Result<f64> {
    let model = &st.model;
    let em = &model.emissions;
    let table = EmissionTable::compute(data, em)?;
    let mut lp = conditional_loglik_with(&model.dar, &table, &model.gamma);
    lp += crate::model::log_stick_prior(&model.dar, hp);
    lp += crate::model::log_dirichlet(model.dar.pi(), hp.kappa0);
    let d = em.dim();
    for j in 0..em.n_states() {
        lp += crate::numerics::mvn_logpdf(&em.mu[j], &hp.mu0, &hp.r0)?;
        lp += crate::model::log_ghs_prior(&em.omega[j], &em.lambda_sq[j], em.tau_sq[j]);
        let aux = &st.ghs_aux[j];
        for i in 0..d {
            for l in (i + 1)..d {
                lp += ln_inv_gamma(em.lambda_sq[j][(i, l)], 0.5, 1.0 / aux.nu[(i, l)]);
                lp += ln_inv_gamma(aux.nu[(i, l)], 0.5, 1.0);
            }
        }
        lp += ln_inv_gamma(em.tau_sq[j], 0.5, 1.0 / aux.xi);
        lp += ln_inv_gamma(aux.xi, 0.5, 1.0);
    }
    Ok(lp)
}

fn ln_inv_gamma(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Unaugmented log joint at a sampler state.
pub fn log_joint_state(st: &SamplerState, data: &Dataset, hp: &Hyperparameters) -> Result<f64> {
    crate::model::log_joint(&st.model, data, hp)
}
