//! Backward and tuple-indexed forward messages for the hidden DAR chain.
//!
//! Times are 0-based. `beta[s] = p(y_s..y_{T−1} | γ_{s−1})` for `s ∈ 0..=T`
//! with `beta[T] ≡ 1`; `alpha[s](j_1..j_P̂) = p(y_0..y_{s−1}, γ_{s−1} = j_1, …,
//! γ_{s−P̂} = j_P̂)`. The first `P̂` states use uniform transition
//! probabilities, and positions before the start of the series are treated
//! as uniformly distributed placeholder states.
//!
//! The backward recursion sums the transition law over every older history
//! index `j_2..j_P̂` without weighting. That sum collapses to a closed form,
//! so the production pass costs `O(T·M)`; [`backward_pass_enumerated`] walks
//! the tuples explicitly and is kept for cross-checking and cost counting.

use crate::error::{Error, Result};
use crate::model::{transition_prob, DarParams, EmissionTable};
use crate::numerics::RngStream;

/// Largest forward table (entries over all times) that will be allocated.
pub const MAX_FORWARD_ENTRIES: usize = 1 << 28;

/// Log backward messages, max-normalized per time. The unnormalized value is
/// `log_beta[s][j] + log_scale[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardTable {
    pub log_beta: Vec<Vec<f64>>,
    pub log_scale: Vec<f64>,
}

impl BackwardTable {
    pub fn len(&self) -> usize {
        self.log_beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_beta.is_empty()
    }

    pub fn unnormalized(&self, s: usize, j: usize) -> f64 {
        self.log_beta[s][j] + self.log_scale[s]
    }
}

/// Log forward messages over `P̂`-tuples, max-normalized per time. Tuple
/// `(j_1, …, j_P̂)` sits at index `j_1 + M·j_2 + … + M^{P̂−1}·j_P̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTable {
    pub n_states: usize,
    pub order: usize,
    pub log_alpha: Vec<Vec<f64>>,
    pub log_scale: Vec<f64>,
}

impl ForwardTable {
    pub fn len(&self) -> usize {
        self.log_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_alpha.is_empty()
    }

    pub fn tuple_index(&self, tuple: &[usize]) -> usize {
        tuple.iter().rev().fold(0, |acc, &j| acc * self.n_states + j)
    }

    pub fn unnormalized(&self, s: usize, tuple: &[usize]) -> f64 {
        self.log_alpha[s][self.tuple_index(tuple)] + self.log_scale[s]
    }

    /// Normalized `log α_s(j_1)`, summing out the older tuple entries.
    pub fn log_marginal(&self, s: usize) -> Vec<f64> {
        let m = self.n_states;
        let mut acc = vec![0.0; m];
        for (idx, &la) in self.log_alpha[s].iter().enumerate() {
            acc[idx % m] += la.exp();
        }
        acc.iter().map(|a| a.ln()).collect()
    }
}

fn check_inputs(table: &EmissionTable, dar: &DarParams) -> Result<()> {
    if table.n_states() != dar.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "emission table has {} states, innovation vector {}",
            table.n_states(),
            dar.n_states()
        )));
    }
    Ok(())
}

fn normalize_log(v: &mut [f64]) -> Result<f64> {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return Err(Error::DegenerateRow(0));
    }
    for x in v.iter_mut() {
        *x -= mx;
    }
    Ok(mx)
}

/// Exponentiated `log e_s(j) + log β_{s+1}(j)` shifted by its maximum.
fn weights(table: &EmissionTable, next: &[f64], s: usize, out: &mut [f64]) -> f64 {
    let row = table.row(s);
    let mut mx = f64::NEG_INFINITY;
    for j in 0..out.len() {
        out[j] = row[j] + next[j];
        mx = mx.max(out[j]);
    }
    for w in out.iter_mut() {
        *w = (*w - mx).exp();
    }
    mx
}

/// Backward messages for the active lags of `dar`.
pub fn backward_pass(table: &EmissionTable, dar: &DarParams) -> Result<BackwardTable> {
    check_inputs(table, dar)?;
    backward_core(table, &dar.phi(), dar.order(), dar.pi())
}

/// Backward recursion with `phi` possibly zero-padded beyond the order
/// `p_hat`; padding only shifts the log scale.
pub fn backward_pass_padded(
    table: &EmissionTable,
    dar: &DarParams,
    p_max: usize,
) -> Result<BackwardTable> {
    check_inputs(table, dar)?;
    let mut phi = dar.phi();
    phi.resize(p_max.max(dar.order()) + 1, 0.0);
    backward_core(table, &phi, dar.order(), dar.pi())
}

fn backward_core(table: &EmissionTable, phi: &[f64], p_hat: usize, pi: &[f64]) -> Result<BackwardTable> {
    let t_len = table.n_times();
    let m = table.n_states();
    let lags = phi.len() - 1;
    let ln_m = (m as f64).ln();
    // Σ over the M^{lags−1} older history tuples contributes this factor
    let history_factor = (lags as f64 - 1.0) * ln_m;
    let older: f64 = phi[2.min(phi.len())..].iter().sum::<f64>() / m as f64;

    let mut log_beta = vec![vec![0.0; m]; t_len + 1];
    let mut log_scale = vec![0.0; t_len + 1];
    let mut w = vec![0.0; m];
    for s in (0..t_len).rev() {
        let mx = weights(table, &log_beta[s + 1], s, &mut w);
        let cur = &mut log_beta[s];
        if s < p_hat {
            let total: f64 = w.iter().sum();
            let v = total.ln() + mx - ln_m;
            cur.iter_mut().for_each(|x| *x = v);
        } else {
            let common: f64 = w
                .iter()
                .zip(pi)
                .map(|(wj, pj)| (phi[0] * pj + older) * wj)
                .sum();
            for (j1, x) in cur.iter_mut().enumerate() {
                *x = (common + phi[1] * w[j1]).ln() + mx;
            }
        }
        let shift = normalize_log(cur).map_err(|_| Error::DegenerateRow(s))?;
        log_scale[s] = log_scale[s + 1] + shift + history_factor;
    }
    Ok(BackwardTable { log_beta, log_scale })
}

/// Backward messages by explicit enumeration of `(j_1, j_2..j_P̂, j_0)`,
/// evaluating the transition law on the fly. `ops` is incremented once per
/// evaluated term.
pub fn backward_pass_enumerated(
    table: &EmissionTable,
    dar: &DarParams,
    ops: &mut u64,
) -> Result<BackwardTable> {
    check_inputs(table, dar)?;
    let t_len = table.n_times();
    let m = table.n_states();
    let p = dar.order();
    let phi = dar.phi();
    let pi = dar.pi();
    let n_older = m.pow(p as u32 - 1);

    let mut log_beta = vec![vec![0.0; m]; t_len + 1];
    let mut log_scale = vec![0.0; t_len + 1];
    let mut w = vec![0.0; m];
    let mut hist = vec![0usize; p];
    for s in (0..t_len).rev() {
        let mx = weights(table, &log_beta[s + 1], s, &mut w);
        let mut cur = vec![0.0; m];
        for (j1, c) in cur.iter_mut().enumerate() {
            let mut acc = 0.0;
            for code in 0..n_older {
                hist[0] = j1;
                let mut rest = code;
                for h in hist.iter_mut().skip(1) {
                    *h = rest % m;
                    rest /= m;
                }
                for j0 in 0..m {
                    let eta = if s < p {
                        1.0 / m as f64
                    } else {
                        transition_prob(j0, &hist, &phi, pi)
                    };
                    acc += eta * w[j0];
                    *ops += 1;
                }
            }
            *c = acc.ln() + mx;
        }
        let shift = normalize_log(&mut cur).map_err(|_| Error::DegenerateRow(s))?;
        log_beta[s] = cur;
        log_scale[s] = log_scale[s + 1] + shift;
    }
    Ok(BackwardTable { log_beta, log_scale })
}

/// Tuple-indexed forward messages.
pub fn forward_pass(table: &EmissionTable, dar: &DarParams) -> Result<ForwardTable> {
    check_inputs(table, dar)?;
    let t_len = table.n_times();
    let m = table.n_states();
    let p = dar.order();
    let size = m
        .checked_pow(p as u32)
        .and_then(|k| k.checked_mul(t_len + 1))
        .unwrap_or(usize::MAX);
    if size > MAX_FORWARD_ENTRIES {
        return Err(Error::TableTooLarge(size));
    }
    let n_tuples = m.pow(p as u32);
    let stride = n_tuples / m;
    let phi = dar.phi();
    let pi = dar.pi();
    let ln_m = (m as f64).ln();

    let mut log_alpha = Vec::with_capacity(t_len + 1);
    let mut log_scale = Vec::with_capacity(t_len + 1);
    log_alpha.push(vec![0.0; n_tuples]);
    log_scale.push(-(p as f64) * ln_m);

    let mut hist = vec![0usize; p];
    let mut prev_lin = vec![0.0; n_tuples];
    for s in 1..=t_len {
        let prev = &log_alpha[s - 1];
        let pmx = prev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, &l) in prev_lin.iter_mut().zip(prev) {
            *a = (l - pmx).exp();
        }
        let row = table.row(s - 1);
        let mut cur = vec![0.0; n_tuples];
        for (idx, c) in cur.iter_mut().enumerate() {
            let j1 = idx % m;
            let rest = idx / m;
            let mut acc = 0.0;
            for jn in 0..m {
                let prev_idx = rest + stride * jn;
                let eta = if s - 1 < p {
                    1.0 / m as f64
                } else {
                    // history of γ_{s−1}: (j_2, …, j_P̂, j_{P̂+1})
                    let mut code = prev_idx;
                    for h in hist.iter_mut() {
                        *h = code % m;
                        code /= m;
                    }
                    transition_prob(j1, &hist, &phi, pi)
                };
                acc += eta * prev_lin[prev_idx];
            }
            *c = acc.ln() + row[j1];
        }
        let shift = normalize_log(&mut cur).map_err(|_| Error::DegenerateRow(s - 1))?;
        log_scale.push(log_scale[s - 1] + pmx + shift);
        log_alpha.push(cur);
    }
    Ok(ForwardTable {
        n_states: m,
        order: p,
        log_alpha,
        log_scale,
    })
}

/// `p(γ_s = j | y) ∝ α_{s+1}(j) β_{s+1}(j)`, one row per time.
pub fn local_state_probs(alpha: &ForwardTable, beta: &BackwardTable) -> Result<Vec<Vec<f64>>> {
    if alpha.len() != beta.len() {
        return Err(Error::LengthMismatch {
            left: alpha.len(),
            right: beta.len(),
        });
    }
    let t_len = alpha.len() - 1;
    (0..t_len)
        .map(|s| {
            let la = alpha.log_marginal(s + 1);
            let mut row: Vec<f64> = la.iter().zip(&beta.log_beta[s + 1]).map(|(a, b)| a + b).collect();
            normalize_log(&mut row).map_err(|_| Error::DegenerateRow(s))?;
            row.iter_mut().for_each(|x| *x = x.exp());
            let total: f64 = row.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::DegenerateRow(s));
            }
            row.iter_mut().for_each(|x| *x /= total);
            Ok(row)
        })
        .collect()
}

/// Normalized `p(γ_s = j | γ_{s−1..s−P̂}, y)` given the already chosen
/// earlier states `path[..s]`.
pub fn state_conditional(
    s: usize,
    path: &[usize],
    table: &EmissionTable,
    dar: &DarParams,
    phi: &[f64],
    beta: &BackwardTable,
    out: &mut [f64],
    hist: &mut Vec<usize>,
) {
    let m = table.n_states();
    let p = dar.order();
    let row = table.row(s);
    let next = &beta.log_beta[s + 1];
    let mut mx = f64::NEG_INFINITY;
    if s >= p {
        hist.clear();
        hist.extend((1..=p).map(|k| path[s - k]));
    }
    for j in 0..m {
        let eta_ln = if s < p {
            0.0
        } else {
            transition_prob(j, hist, phi, dar.pi()).ln()
        };
        out[j] = eta_ln + row[j] + next[j];
        mx = mx.max(out[j]);
    }
    let mut total = 0.0;
    for x in out.iter_mut() {
        *x = (*x - mx).exp();
        total += *x;
    }
    for x in out.iter_mut() {
        *x /= total;
    }
}

/// Draws a state path sequentially from the conditionals.
pub fn sample_path(
    rng: &mut RngStream,
    table: &EmissionTable,
    dar: &DarParams,
    beta: &BackwardTable,
) -> Vec<usize> {
    let t_len = table.n_times();
    let m = table.n_states();
    let phi = dar.phi();
    let mut path = Vec::with_capacity(t_len);
    let mut probs = vec![0.0; m];
    let mut hist = Vec::with_capacity(dar.order());
    for s in 0..t_len {
        state_conditional(s, &path, table, dar, &phi, beta, &mut probs, &mut hist);
        let u = rng.open01();
        let mut acc = 0.0;
        let mut pick = m - 1;
        for (j, &pj) in probs.iter().enumerate() {
            acc += pj;
            if u < acc {
                pick = j;
                break;
            }
        }
        path.push(pick);
    }
    path
}

/// Stepwise argmax of the same conditionals; ties go to the smaller index.
pub fn greedy_path(table: &EmissionTable, dar: &DarParams, beta: &BackwardTable) -> Vec<usize> {
    let t_len = table.n_times();
    let m = table.n_states();
    let phi = dar.phi();
    let mut path = Vec::with_capacity(t_len);
    let mut probs = vec![0.0; m];
    let mut hist = Vec::with_capacity(dar.order());
    for s in 0..t_len {
        state_conditional(s, &path, table, dar, &phi, beta, &mut probs, &mut hist);
        let mut best = 0;
        for j in 1..m {
            if probs[j] > probs[best] {
                best = j;
            }
        }
        path.push(best);
    }
    path
}
