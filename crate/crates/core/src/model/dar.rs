use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use super::Hyperparameters;
use crate::error::{invalid, Error, Result};
use crate::numerics::RngStream;

const SIMPLEX_TOL: f64 = 1e-12;

/// Sticks, order indicators and innovation probabilities of the hidden DAR
/// process.
///
/// `v` has length `P̂ + 1` with `v[P̂] = 1`; `z` has length `P̂` and the shape
/// `(0, …, 0, 1)`. States are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct DarParams {
    v: Vec<f64>,
    z: Vec<u8>,
    pi: Vec<f64>,
}

impl DarParams {
    pub fn new(v: Vec<f64>, z: Vec<u8>, pi: Vec<f64>) -> Result<Self> {
        phi_from_sticks(&v, &z)?;
        check_simplex(&pi, "pi")?;
        Ok(Self { v, z, pi })
    }

    /// Sticks for order `p_hat` from the leading free sticks `v_0..v_{P̂-1}`.
    pub fn from_free_sticks(free: &[f64], pi: Vec<f64>) -> Result<Self> {
        if free.is_empty() {
            return Err(Error::MalformedSticks("at least v0 is required".into()));
        }
        let p_hat = free.len();
        let mut v = free.to_vec();
        v.push(1.0);
        let mut z = vec![0u8; p_hat];
        z[p_hat - 1] = 1;
        Self::new(v, z, pi)
    }

    /// Inverts the stick map for a weight vector `φ_0..φ_P̂`.
    pub fn from_phi(phi: &[f64], pi: Vec<f64>) -> Result<Self> {
        if phi.len() < 2 {
            return Err(Error::MalformedSticks("need at least two weights".into()));
        }
        check_simplex(phi, "phi")?;
        let p_hat = phi.len() - 1;
        let mut rest = 1.0;
        let mut free = Vec::with_capacity(p_hat);
        for &f in &phi[..p_hat] {
            free.push(if rest > 0.0 { (f / rest).min(1.0) } else { 1.0 });
            rest -= f;
        }
        Self::from_free_sticks(&free, pi)
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn order(&self) -> usize {
        self.z.len()
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn phi(&self) -> Vec<f64> {
        sticks_to_phi(&self.v)
    }

    pub(crate) fn set_free_stick(&mut self, j: usize, value: f64) {
        debug_assert!(j < self.order());
        self.v[j] = value;
    }

    pub(crate) fn set_pi(&mut self, pi: Vec<f64>) {
        self.pi = pi;
    }

    /// Appends a free stick (birth).
    pub(crate) fn grow(&mut self, new_stick: f64) {
        let p = self.order();
        self.v[p] = new_stick;
        self.v.push(1.0);
        self.z[p - 1] = 0;
        self.z.push(1);
    }

    /// Drops the last free stick (death).
    pub(crate) fn shrink(&mut self) {
        let p = self.order();
        debug_assert!(p > 1);
        self.v.pop();
        self.v[p - 1] = 1.0;
        self.z.pop();
        self.z[p - 2] = 1;
    }
}

fn check_simplex(p: &[f64], field: &str) -> Result<()> {
    if p.is_empty() {
        return Err(invalid(field, "empty probability vector"));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(invalid(field, "entries must be finite and nonnegative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL * p.len().max(1) as f64 {
        return Err(invalid(field, format!("entries sum to {s}, not 1")));
    }
    Ok(())
}

pub(crate) fn sticks_to_phi(v: &[f64]) -> Vec<f64> {
    let mut rest = 1.0;
    v.iter()
        .map(|&vj| {
            let p = vj * rest;
            rest *= 1.0 - vj;
            p
        })
        .collect()
}

/// φ₀ = v₀, φ_j = v_j ∏_{l<j} (1 − v_l).
pub fn phi_from_sticks(v: &[f64], z: &[u8]) -> Result<Vec<f64>> {
    let p_hat = effective_order(z)?;
    if z.len() != p_hat {
        return Err(Error::MalformedSticks(format!(
            "indicators continue past the first one at lag {p_hat}"
        )));
    }
    if v.len() != p_hat + 1 {
        return Err(Error::MalformedSticks(format!(
            "{} sticks for order {p_hat}, expected {}",
            v.len(),
            p_hat + 1
        )));
    }
    if v[p_hat] != 1.0 {
        return Err(Error::MalformedSticks(format!("v[{p_hat}] = {}, must be 1", v[p_hat])));
    }
    if let Some(j) = v[..p_hat].iter().position(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::MalformedSticks(format!("v[{j}] = {} outside (0, 1]", v[j])));
    }
    Ok(sticks_to_phi(v))
}

/// ξ_j = Σ_{i<j} φ_i for a lag `j ≥ 1`.
pub fn shrinkage_prob(phi: &[f64], j: usize) -> Result<f64> {
    if j == 0 || j > phi.len() {
        return Err(Error::IndexOutOfRange {
            index: j,
            max: phi.len(),
        });
    }
    Ok(phi[..j].iter().sum::<f64>().min(1.0))
}

/// Smallest lag `j` (1-based) with `z_j = 1`, after checking the zeros
/// before it.
pub fn effective_order(z: &[u8]) -> Result<usize> {
    if let Some(bad) = z.iter().find(|&&x| x > 1) {
        return Err(Error::MalformedSticks(format!("indicator value {bad}")));
    }
    let first = z
        .iter()
        .position(|&x| x == 1)
        .ok_or_else(|| Error::MalformedSticks("no indicator equals one".into()))?;
    if z[first..].iter().any(|&x| x != 1) {
        return Err(Error::MalformedSticks("indicator returns to zero".into()));
    }
    Ok(first + 1)
}

/// η(target | history) with the history newest-first and only the active lags.
#[inline]
pub(crate) fn transition_prob(target: usize, history: &[usize], phi: &[f64], pi: &[f64]) -> f64 {
    let mut p = phi[0] * pi[target];
    for (k, &h) in history.iter().enumerate() {
        if h == target {
            p += phi[k + 1];
        }
    }
    p
}

/// `log p(γ_t = target | γ_{t−1..t−P̂} = history)`.
pub fn dar_transition_logprob(target: usize, history: &[usize], dar: &DarParams) -> Result<f64> {
    if history.len() != dar.order() {
        return Err(Error::HistoryLengthMismatch {
            expected: dar.order(),
            got: history.len(),
        });
    }
    let m = dar.n_states();
    if let Some(&s) = history.iter().chain(std::iter::once(&target)).find(|&&s| s >= m) {
        return Err(Error::StateOutOfRange {
            state: s,
            n_states: m,
        });
    }
    Ok(transition_prob(target, history, &dar.phi(), dar.pi()).ln())
}

/// Joint prior log-density of the sticks and order indicators.
pub fn log_stick_prior(dar: &DarParams, hp: &Hyperparameters) -> f64 {
    let p_hat = dar.order();
    let v = dar.v();
    let mut lp = beta_ln_pdf(v[0], hp.a0, hp.b0);
    let mut log_rest = (1.0 - v[0]).ln();
    for &vj in &v[1..p_hat] {
        // z_j = 0 with probability ∏_{l<j}(1 − v_l)
        lp += log_rest + beta_ln_pdf(vj, hp.av, hp.bv);
        log_rest += (1.0 - vj).ln();
    }
    if p_hat < hp.p_max {
        lp += (-log_rest.exp()).ln_1p();
    }
    lp
}

pub(crate) fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
}

/// Symmetric Dirichlet log-density.
pub fn log_dirichlet(pi: &[f64], kappa: f64) -> f64 {
    let m = pi.len() as f64;
    let norm = ln_gamma(m * kappa) - m * ln_gamma(kappa);
    norm + (kappa - 1.0) * pi.iter().map(|p| p.ln()).sum::<f64>()
}

/// Full-length prior draw of the sticks and indicators up to `P_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct StickDraw {
    /// `v_0..v_{P_max}`; entries past the order are 1 (the spike).
    pub v: Vec<f64>,
    /// `z_1..z_{P_max}`.
    pub z: Vec<u8>,
}

impl StickDraw {
    pub fn order(&self) -> usize {
        self.z.iter().position(|&x| x == 1).map_or(self.z.len(), |i| i + 1)
    }

    pub fn phi(&self) -> Vec<f64> {
        sticks_to_phi(&self.v)
    }

    pub fn into_dar(self, pi: Vec<f64>) -> Result<DarParams> {
        let p = self.order();
        DarParams::from_free_sticks(&self.v[..p], pi)
    }
}

/// Draw `(v, z)` from the cumulative-shrinkage prior: `z_j ~ Bern(ξ_j)`,
/// `v_j ~ Beta(a_v, b_v)` while `z_j = 0`, spike at one afterwards. The last
/// indicator is forced to one by the truncation.
pub fn sample_stick_prior(rng: &mut RngStream, hp: &Hyperparameters) -> StickDraw {
    let beta0 = Beta::new(hp.a0, hp.b0).expect("validated shapes");
    let beta_v = Beta::new(hp.av, hp.bv).expect("validated shapes");
    let mut v = Vec::with_capacity(hp.p_max + 1);
    let mut z = Vec::with_capacity(hp.p_max);
    v.push(clamp_open(beta0.sample(rng)));
    let mut rest = 1.0 - v[0];
    let mut active = true;
    for j in 1..=hp.p_max {
        if active {
            let xi = 1.0 - rest;
            if j == hp.p_max || rng.random::<f64>() < xi {
                active = false;
            }
        }
        if active {
            let vj = clamp_open(beta_v.sample(rng));
            z.push(0);
            v.push(vj);
            rest *= 1.0 - vj;
        } else {
            z.push(1);
            v.push(1.0);
        }
    }
    StickDraw { v, z }
}

/// Keeps Beta draws strictly inside (0, 1) where the log-density is finite.
pub(crate) fn clamp_open(x: f64) -> f64 {
    x.clamp(1e-300, 1.0 - f64::EPSILON / 2.0)
}

/// Counts of (state, lag-match pattern) pairs along a state path, so the DAR
/// likelihood can be re-evaluated for new `(v, z, π)` without rescanning it.
#[derive(Debug, Clone)]
pub struct DarSuffStats {
    n_states: usize,
    p_max: usize,
    len: usize,
    /// `counts[p][state * 2^P_max + mask]` over times `t ≥ p`.
    counts: Vec<Vec<u32>>,
}

impl DarSuffStats {
    pub fn new(gamma: &[usize], n_states: usize, p_max: usize) -> Self {
        let width = 1usize << p_max;
        let mut counts = vec![vec![0u32; n_states * width]; p_max + 1];
        for (t, &s) in gamma.iter().enumerate() {
            let mut mask = 0usize;
            for k in 1..=p_max.min(t) {
                if gamma[t - k] == s {
                    mask |= 1 << (k - 1);
                }
            }
            for row in counts.iter_mut().take(p_max.min(t) + 1) {
                row[s * width + mask] += 1;
            }
        }
        Self {
            n_states,
            p_max,
            len: gamma.len(),
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `Σ_{t ≥ P̂} log η(γ_t | γ_{t−1..t−P̂})`.
    pub fn conditional_loglik(&self, phi: &[f64], pi: &[f64]) -> f64 {
        let p_hat = phi.len() - 1;
        debug_assert!(p_hat <= self.p_max);
        let width = 1usize << self.p_max;
        let lag_mask = (1usize << p_hat) - 1;
        let mut ll = 0.0;
        for s in 0..self.n_states {
            let base = phi[0] * pi[s];
            let row = &self.counts[p_hat][s * width..(s + 1) * width];
            // collapse masks that differ only in inactive lags
            let mut merged = [0u32; 64];
            let merged = &mut merged[..=lag_mask];
            for (mask, &c) in row.iter().enumerate() {
                merged[mask & lag_mask] += c;
            }
            for (mask, &c) in merged.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let mut p = base;
                for (k, &ph) in phi[1..].iter().enumerate() {
                    if mask & (1 << k) != 0 {
                        p += ph;
                    }
                }
                ll += c as f64 * p.ln();
            }
        }
        ll
    }

    /// DAR log-probability of the whole path: uniform initial probabilities for
    /// the first `P̂` states, then the transition law.
    pub fn path_loglik(&self, phi: &[f64], pi: &[f64]) -> f64 {
        let p_hat = phi.len() - 1;
        let head = p_hat.min(self.len) as f64 * -(self.n_states as f64).ln();
        head + self.conditional_loglik(phi, pi)
    }
}
