//! Post-processing of sampler output: modal model size, label alignment,
//! conditional parameter averages, decoding and edge selection.

mod hw;

pub use hw::{bessel_k, heidelberger_welch, pcramer, spectrum0_ar, HwConfig, HwReport};

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::messages::{backward_pass, forward_pass, greedy_path, local_state_probs};
use crate::metrics::max_weight_assignment;
use crate::model::{DarParams, EmissionParams, EmissionTable};
use crate::numerics::stats::quantile_type7;
use crate::numerics::SymMatrix;
use crate::sampler::{Chain, Snapshot};

/// Posterior probability of each value, keyed by value.
pub type MassTable = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalCounts {
    pub m_hat: usize,
    pub p_hat: usize,
    pub m_mass: MassTable,
    pub p_mass: MassTable,
}

fn mass_table(values: impl Iterator<Item = usize>) -> MassTable {
    let mut counts = std::collections::BTreeMap::new();
    let mut n = 0usize;
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
        n += 1;
    }
    counts.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect()
}

fn mode(table: &MassTable) -> usize {
    // ascending keys, strict comparison: ties keep the smaller value
    let mut best = table[0];
    for &(k, p) in &table[1..] {
        if p > best.1 {
            best = (k, p);
        }
    }
    best.0
}

pub fn modal_counts(snapshots: &[Snapshot]) -> Result<ModalCounts> {
    if snapshots.is_empty() {
        return Err(Error::EmptyChain);
    }
    let m_mass = mass_table(snapshots.iter().map(|s| s.m_active));
    let p_mass = mass_table(snapshots.iter().map(|s| s.p_order));
    Ok(ModalCounts {
        m_hat: mode(&m_mass),
        p_hat: mode(&p_mass),
        m_mass,
        p_mass,
    })
}

/// Snapshot with the highest recorded log-likelihood among those at
/// `(m_hat, p_hat)`.
pub fn map_pivot(snapshots: &[Snapshot], m_hat: usize, p_hat: usize) -> Result<&Snapshot> {
    snapshots
        .iter()
        .filter(|s| s.m_active == m_hat && s.p_order == p_hat)
        .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
        .ok_or(Error::NoMatchingSnapshots { m_hat, p_hat })
}

/// Permutation (new `j` takes old `perm[j]`) maximizing agreement of
/// `gamma` with `pivot`.
pub fn ecr_permutation(gamma: &[usize], pivot: &[usize], n_states: usize) -> Result<Vec<usize>> {
    if gamma.len() != pivot.len() {
        return Err(Error::DimensionMismatch(format!(
            "allocation of length {} against pivot of length {}",
            gamma.len(),
            pivot.len()
        )));
    }
    if let Some(&s) = gamma.iter().chain(pivot).find(|&&s| s >= n_states) {
        return Err(Error::DimensionMismatch(format!(
            "label {s} outside {n_states} states"
        )));
    }
    let mut w = vec![vec![0i64; n_states]; n_states];
    for (&g, &p) in gamma.iter().zip(pivot) {
        w[p][g] += 1;
    }
    Ok(max_weight_assignment(&w).1)
}

pub fn mismatches(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Applies the optimal relabeling to every snapshot.
pub fn ecr_relabel(snapshots: &[Snapshot], pivot: &[usize]) -> Result<Vec<Snapshot>> {
    snapshots
        .iter()
        .map(|s| Ok(s.permuted(&ecr_permutation(&s.gamma, pivot, s.n_states())?)))
        .collect()
}

/// Conditional posterior means over the snapshots at `(m_hat, p_hat)`,
/// restricted to `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedParams {
    /// Original (relabeled) indices of the retained states.
    pub labels: Vec<usize>,
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub omega: Vec<SymMatrix>,
    pub n_snapshots: usize,
}

impl AveragedParams {
    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn dar(&self) -> Result<DarParams> {
        DarParams::from_phi(&self.phi, self.pi.clone())
    }

    pub fn emissions(&self) -> Result<EmissionParams> {
        let d = self.mu[0].len();
        let m = self.n_states();
        EmissionParams::new(
            self.mu.clone(),
            self.omega.clone(),
            vec![DMatrix::from_element(d, d, 1.0); m],
            vec![1.0; m],
        )
    }

    pub fn partial_correlations(&self) -> Vec<DMatrix<f64>> {
        self.omega.iter().map(partial_correlation).collect()
    }
}

/// `−ω_il / √(ω_ii ω_ll)` off the diagonal, ones on it.
pub fn partial_correlation(omega: &SymMatrix) -> DMatrix<f64> {
    let w = omega.as_matrix();
    let d = w.nrows();
    DMatrix::from_fn(d, d, |i, l| {
        if i == l {
            1.0
        } else {
            -w[(i, l)] / (w[(i, i)] * w[(l, l)]).sqrt()
        }
    })
}

fn matching(snapshots: &[Snapshot], m_hat: usize, p_hat: usize) -> Result<Vec<&Snapshot>> {
    let out: Vec<&Snapshot> = snapshots
        .iter()
        .filter(|s| s.m_active == m_hat && s.p_order == p_hat)
        .collect();
    if out.is_empty() {
        return Err(Error::NoMatchingSnapshots { m_hat, p_hat });
    }
    Ok(out)
}

/// Entrywise means over matching, already relabeled snapshots. π is
/// averaged over all labels, then restricted to `labels` and renormalized.
pub fn average_parameters(
    relabeled: &[Snapshot],
    m_hat: usize,
    p_hat: usize,
    labels: &[usize],
) -> Result<AveragedParams> {
    let sel = matching(relabeled, m_hat, p_hat)?;
    let n = sel.len() as f64;
    let m_all = sel[0].n_states();
    if let Some(&l) = labels.iter().find(|&&l| l >= m_all) {
        return Err(Error::StateOutOfRange {
            state: l,
            n_states: m_all,
        });
    }
    let d = sel[0].mu[0].len();
    let mut phi = vec![0.0; p_hat + 1];
    let mut pi_all = vec![0.0; m_all];
    let mut mu = vec![DVector::zeros(d); labels.len()];
    let mut omega = vec![DMatrix::zeros(d, d); labels.len()];
    for s in &sel {
        for (a, b) in phi.iter_mut().zip(s.phi()) {
            *a += b / n;
        }
        for (a, b) in pi_all.iter_mut().zip(&s.pi) {
            *a += b / n;
        }
        for (k, &l) in labels.iter().enumerate() {
            mu[k] += &s.mu[l] / n;
            omega[k] += s.omega[l].as_matrix() / n;
        }
    }
    let mut pi: Vec<f64> = labels.iter().map(|&l| pi_all[l]).collect();
    let total: f64 = pi.iter().sum();
    if total > 0.0 {
        pi.iter_mut().for_each(|p| *p /= total);
    } else {
        pi.iter_mut().for_each(|p| *p = 1.0 / labels.len() as f64);
    }
    let phi_total: f64 = phi.iter().sum();
    phi.iter_mut().for_each(|p| *p /= phi_total);
    Ok(AveragedParams {
        labels: labels.to_vec(),
        phi,
        pi,
        mu,
        omega: omega.into_iter().map(SymMatrix::symmetrize).collect::<Result<_>>()?,
        n_snapshots: sel.len(),
    })
}

/// Occupied labels of an allocation, ascending.
pub fn occupied_labels(gamma: &[usize]) -> Vec<usize> {
    let mut l: Vec<usize> = gamma.to_vec();
    l.sort_unstable();
    l.dedup();
    l
}

/// Stepwise argmax decoding at fixed parameters; ties go to the lower index.
pub fn global_decode(data: &Dataset, dar: &DarParams, em: &EmissionParams) -> Result<Vec<usize>> {
    let table = EmissionTable::compute(data, em)?;
    let beta = backward_pass(&table, dar)?;
    Ok(greedy_path(&table, dar, &beta))
}

/// Marginal state probabilities at each time (T rows of M̂ entries).
pub fn local_decode(data: &Dataset, dar: &DarParams, em: &EmissionParams) -> Result<Vec<Vec<f64>>> {
    let table = EmissionTable::compute(data, em)?;
    let beta = backward_pass(&table, dar)?;
    let alpha = forward_pass(&table, dar)?;
    local_state_probs(&alpha, &beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSelection {
    pub adjacency: Vec<DMatrix<bool>>,
    pub lower: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

/// Equal-tailed credible intervals for every off-diagonal precision entry;
/// an edge is kept when its interval excludes zero.
pub fn select_edges(
    relabeled: &[Snapshot],
    m_hat: usize,
    p_hat: usize,
    labels: &[usize],
    level: f64,
) -> Result<EdgeSelection> {
    if !(level > 0.0 && level < 1.0) {
        return Err(crate::error::invalid("level", "must lie in (0, 1)"));
    }
    let sel = matching(relabeled, m_hat, p_hat)?;
    let d = sel[0].mu[0].len();
    let (qa, qb) = ((1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0);
    let mut out = EdgeSelection {
        adjacency: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    let mut buf = Vec::with_capacity(sel.len());
    for &l in labels {
        let mut adj = DMatrix::from_element(d, d, false);
        let mut lo = DMatrix::zeros(d, d);
        let mut hi = DMatrix::zeros(d, d);
        for i in 0..d {
            for k in (i + 1)..d {
                buf.clear();
                buf.extend(sel.iter().map(|s| s.omega[l].get(i, k)));
                buf.sort_by(f64::total_cmp);
                let (a, b) = (quantile_type7(&buf, qa), quantile_type7(&buf, qb));
                let edge = a > 0.0 || b < 0.0;
                adj[(i, k)] = edge;
                adj[(k, i)] = edge;
                lo[(i, k)] = a;
                lo[(k, i)] = a;
                hi[(i, k)] = b;
                hi[(k, i)] = b;
            }
        }
        out.adjacency.push(adj);
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOptions {
    pub level: f64,
    pub hw: HwConfig,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            hw: HwConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub m_hat: usize,
    pub p_hat: usize,
    pub m_mass: MassTable,
    pub p_mass: MassTable,
    pub params: AveragedParams,
    pub partial_correlations: Vec<DMatrix<f64>>,
    pub edges: EdgeSelection,
    pub global_decode: Vec<usize>,
    pub local_decode: Vec<Vec<f64>>,
    /// One report per chain, on the recorded log-likelihood trace.
    pub diagnostics: Vec<Result<HwReport>>,
}

/// Full post-processing of one or more chains fitted to `data`.
pub fn summarize(chains: &[Chain], data: &Dataset, opts: &SummaryOptions) -> Result<PosteriorSummary> {
    let snapshots: Vec<Snapshot> = chains.iter().flat_map(|c| c.snapshots.iter().cloned()).collect();
    let modal = modal_counts(&snapshots)?;
    let (m_hat, p_hat) = (modal.m_hat, modal.p_hat);
    let pivot = map_pivot(&snapshots, m_hat, p_hat)?.gamma.clone();
    let relabeled = ecr_relabel(&snapshots, &pivot)?;
    let labels = occupied_labels(&pivot);
    let params = average_parameters(&relabeled, m_hat, p_hat, &labels)?;
    let edges = select_edges(&relabeled, m_hat, p_hat, &labels, opts.level)?;
    let dar = params.dar()?;
    let em = params.emissions()?;
    let global = global_decode(data, &dar, &em)?;
    let local = local_decode(data, &dar, &em)?;
    let diagnostics = chains
        .iter()
        .map(|c| {
            let trace: Vec<f64> = c.snapshots.iter().map(|s| s.loglik).collect();
            heidelberger_welch(&trace, &opts.hw)
        })
        .collect();
    Ok(PosteriorSummary {
        m_hat,
        p_hat,
        m_mass: modal.m_mass,
        p_mass: modal.p_mass,
        partial_correlations: params.partial_correlations(),
        params,
        edges,
        global_decode: global,
        local_decode: local,
        diagnostics,
    })
}
