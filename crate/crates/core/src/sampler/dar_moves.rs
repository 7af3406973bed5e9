use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::Result;
use crate::model::{beta_ln_pdf, clamp_open, log_stick_prior, sticks_to_phi, DarParams, DarSuffStats, Hyperparameters};
use crate::numerics::{slice_sample_1d, RngStream, SLICE_WIDTH};

/// Which order move was attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderMove {
    Birth,
    Death,
    /// `P_max = 1`: nothing to propose.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub kind: OrderMove,
    pub accepted: bool,
    pub log_ratio: f64,
}

/// Posterior target of `(v, z)` given the state path: stick prior plus the
/// DAR path likelihood.
pub fn stick_log_target(dar: &DarParams, stats: &DarSuffStats, hp: &Hyperparameters) -> f64 {
    log_stick_prior(dar, hp) + stats.path_loglik(&dar.phi(), dar.pi())
}

fn move_prob(kind: OrderMove, p_hat: usize, p_max: usize) -> f64 {
    match kind {
        OrderMove::Birth if p_hat >= p_max => 0.0,
        OrderMove::Death if p_hat <= 1 => 0.0,
        OrderMove::None => 0.0,
        _ if p_hat == 1 || p_hat == p_max => 1.0,
        _ => 0.5,
    }
}

/// Log acceptance ratio of a birth from order `p_hat` that introduces the
/// stick `new_stick`.
pub fn birth_log_ratio(
    log_target_curr: f64,
    log_target_prop: f64,
    new_stick: f64,
    p_hat: usize,
    hp: &Hyperparameters,
) -> f64 {
    log_target_prop - log_target_curr - beta_ln_pdf(new_stick, hp.av, hp.bv)
        + move_prob(OrderMove::Death, p_hat + 1, hp.p_max).ln()
        - move_prob(OrderMove::Birth, p_hat, hp.p_max).ln()
}

/// Log acceptance ratio of a death from order `p_hat` that discards
/// `removed_stick`.
pub fn death_log_ratio(
    log_target_curr: f64,
    log_target_prop: f64,
    removed_stick: f64,
    p_hat: usize,
    hp: &Hyperparameters,
) -> f64 {
    log_target_prop - log_target_curr
        + beta_ln_pdf(removed_stick, hp.av, hp.bv)
        + move_prob(OrderMove::Birth, p_hat - 1, hp.p_max).ln()
        - move_prob(OrderMove::Death, p_hat, hp.p_max).ln()
}

/// One birth-or-death Metropolis–Hastings move on the order.
pub fn step_sticks_birth_death(
    rng: &mut RngStream,
    dar: &mut DarParams,
    stats: &DarSuffStats,
    hp: &Hyperparameters,
) -> MoveOutcome {
    let p_hat = dar.order();
    if hp.p_max <= 1 {
        return MoveOutcome {
            kind: OrderMove::None,
            accepted: false,
            log_ratio: f64::NEG_INFINITY,
        };
    }
    let kind = if p_hat == 1 {
        OrderMove::Birth
    } else if p_hat >= hp.p_max {
        OrderMove::Death
    } else if rng.random::<f64>() < 0.5 {
        OrderMove::Birth
    } else {
        OrderMove::Death
    };
    let curr = stick_log_target(dar, stats, hp);
    let mut prop = dar.clone();
    let log_ratio = match kind {
        OrderMove::Birth => {
            let beta = Beta::new(hp.av, hp.bv).expect("validated shapes");
            let u = clamp_open(beta.sample(rng));
            prop.grow(u);
            birth_log_ratio(curr, stick_log_target(&prop, stats, hp), u, p_hat, hp)
        }
        OrderMove::Death => {
            let removed = dar.v()[p_hat - 1];
            prop.shrink();
            death_log_ratio(curr, stick_log_target(&prop, stats, hp), removed, p_hat, hp)
        }
        OrderMove::None => unreachable!(),
    };
    let accepted = log_ratio >= 0.0 || rng.open01().ln() < log_ratio;
    if accepted {
        *dar = prop;
    }
    MoveOutcome {
        kind,
        accepted,
        log_ratio,
    }
}

/// Slice update of each free stick `v_0..v_{P̂−1}` in turn.
pub fn step_slice_v(
    rng: &mut RngStream,
    dar: &mut DarParams,
    stats: &DarSuffStats,
    hp: &Hyperparameters,
) -> Result<()> {
    for j in 0..dar.order() {
        let mut trial = dar.clone();
        let x0 = dar.v()[j];
        let x = slice_sample_1d(
            rng,
            |x| {
                trial.set_free_stick(j, x);
                stick_log_target(&trial, stats, hp)
            },
            x0,
            0.0,
            1.0,
            SLICE_WIDTH,
        )?;
        dar.set_free_stick(j, x);
    }
    Ok(())
}

/// Slice update of `π_0..π_{M−2}`, each on `(0, π_l + π_{M−1})`, with the
/// last coordinate absorbing the remainder.
pub fn step_slice_pi(
    rng: &mut RngStream,
    dar: &mut DarParams,
    stats: &DarSuffStats,
    hp: &Hyperparameters,
) -> Result<()> {
    let m = dar.n_states();
    let phi = sticks_to_phi(dar.v());
    let mut pi = dar.pi().to_vec();
    let k0 = hp.kappa0;
    // x = r·u with u = logistic(η); the Jacobian cancels one power of
    // x(r − x), leaving κ0·(ln u + ln(1 − u)) on the η scale.
    for l in 0..m - 1 {
        let room = pi[l] + pi[m - 1];
        let mut trial = pi.clone();
        let eta0 = (pi[l].ln() - pi[m - 1].ln()).clamp(-PI_LOGIT_BOUND * 0.999, PI_LOGIT_BOUND * 0.999);
        let eta = slice_sample_1d(
            rng,
            |eta| {
                let (lu, l1u) = (-softplus(-eta), -softplus(eta));
                trial[l] = room * lu.exp();
                trial[m - 1] = room * l1u.exp();
                k0 * (lu + l1u) + stats.conditional_loglik(&phi, &trial)
            },
            eta0,
            -PI_LOGIT_BOUND,
            PI_LOGIT_BOUND,
            PI_LOGIT_WIDTH,
        )?;
        pi[l] = room * (-softplus(-eta)).exp();
        pi[m - 1] = room * (-softplus(eta)).exp();
    }
    for p in pi.iter_mut() {
        *p = p.max(PI_FLOOR);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    dar.set_pi(pi);
    Ok(())
}

const PI_LOGIT_BOUND: f64 = 600.0;
const PI_LOGIT_WIDTH: f64 = 2.0;
const PI_FLOOR: f64 = 1e-280;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stats::{kolmogorov_pvalue, ks_statistic, median};

    fn flat_hp(p_max: usize) -> Hyperparameters {
        Hyperparameters {
            a0: 1.0,
            b0: 1.0,
            av: 1.0,
            bv: 1.0,
            p_max,
            m_max: 2,
            ..Hyperparameters::default_for_dim(1)
        }
    }

    #[test]
    fn equal_targets_accept_surely() {
        let hp = flat_hp(4);
        // interior order: both directions have proposal probability 1/2
        assert!(birth_log_ratio(-3.0, -3.0, 0.4, 2, &hp).abs() < 1e-12);
        assert!(death_log_ratio(-3.0, -3.0, 0.4, 3, &hp).abs() < 1e-12);
    }

    #[test]
    fn boundary_proposal_terms() {
        let hp = flat_hp(3);
        // birth from 1 (prob 1) reversed by a death from 2 (prob 1/2)
        assert!((birth_log_ratio(0.0, 0.0, 0.5, 1, &hp) - 0.5f64.ln()).abs() < 1e-15);
        // death from P_max (prob 1) reversed by a birth from 2 (prob 1/2)
        assert!((death_log_ratio(0.0, 0.0, 0.5, 3, &hp) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn at_max_order_only_death() {
        let hp = flat_hp(2);
        let stats = DarSuffStats::new(&[0, 1, 0, 1], 2, 2);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..50 {
            let mut dar = DarParams::from_free_sticks(&[0.3, 0.5], vec![0.5, 0.5]).unwrap();
            let out = step_sticks_birth_death(&mut rng, &mut dar, &stats, &hp);
            assert_eq!(out.kind, OrderMove::Death);
        }
        for _ in 0..50 {
            let mut dar = DarParams::from_free_sticks(&[0.3], vec![0.5, 0.5]).unwrap();
            let out = step_sticks_birth_death(&mut rng, &mut dar, &stats, &hp);
            assert_eq!(out.kind, OrderMove::Birth);
        }
    }

    #[test]
    fn single_lag_cap_has_no_moves() {
        let hp = flat_hp(1);
        let stats = DarSuffStats::new(&[0, 1], 2, 1);
        let mut dar = DarParams::from_free_sticks(&[0.3], vec![0.5, 0.5]).unwrap();
        let out = step_sticks_birth_death(&mut RngStream::new(0, 0), &mut dar, &stats, &hp);
        assert_eq!(out.kind, OrderMove::None);
    }

    #[test]
    fn slice_v_flat_is_uniform() {
        // empty path: the target is the stick prior alone; with one lag and
        // P_max = 1 that is Beta(1,1) on v_0
        let hp = flat_hp(1);
        let stats = DarSuffStats::new(&[], 2, 1);
        let mut dar = DarParams::from_free_sticks(&[0.5], vec![0.5, 0.5]).unwrap();
        let mut rng = RngStream::new(5, 0);
        let mut xs = Vec::new();
        for _ in 0..100_000 {
            step_slice_v(&mut rng, &mut dar, &stats, &hp).unwrap();
            let v0 = dar.v()[0];
            assert!(v0 > 0.0 && v0 < 1.0);
            xs.push(v0);
        }
        let thin: Vec<f64> = xs.iter().step_by(5).copied().collect();
        let d = ks_statistic(&thin, |x| x);
        assert!(kolmogorov_pvalue(d, thin.len()) > 0.01);
    }

    #[test]
    fn slice_v_touches_only_free_sticks() {
        let hp = flat_hp(3);
        let stats = DarSuffStats::new(&[0, 0, 1, 1, 0], 2, 3);
        let mut dar = DarParams::from_free_sticks(&[0.4], vec![0.5, 0.5]).unwrap();
        step_slice_v(&mut RngStream::new(1, 0), &mut dar, &stats, &hp).unwrap();
        assert_eq!(dar.v().len(), 2);
        assert_eq!(dar.v()[1], 1.0);
    }

    #[test]
    fn slice_pi_flat_two_states_uniform() {
        let hp = Hyperparameters {
            kappa0: 1.0,
            ..flat_hp(1)
        };
        let stats = DarSuffStats::new(&[], 2, 1);
        let mut dar = DarParams::from_free_sticks(&[0.5], vec![0.5, 0.5]).unwrap();
        let mut rng = RngStream::new(6, 0);
        let mut xs = Vec::new();
        for _ in 0..100_000 {
            step_slice_pi(&mut rng, &mut dar, &stats, &hp).unwrap();
            assert!((dar.pi().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            xs.push(dar.pi()[0]);
        }
        let thin: Vec<f64> = xs.iter().step_by(5).copied().collect();
        let d = ks_statistic(&thin, |x| x);
        assert!(kolmogorov_pvalue(d, thin.len()) > 0.01);
    }

    #[test]
    fn sparse_dirichlet_starves_empty_state() {
        let hp = Hyperparameters {
            m_max: 3,
            ..Hyperparameters::default_for_dim(1)
        };
        // state 2 never visited
        let gamma: Vec<usize> = (0..200).map(|t| (t / 10) % 2).collect();
        let stats = DarSuffStats::new(&gamma, 3, hp.p_max);
        let mut dar = DarParams::from_free_sticks(&[0.3], vec![0.4, 0.3, 0.3]).unwrap();
        let mut rng = RngStream::new(7, 0);
        let mut xs = Vec::new();
        for _ in 0..2000 {
            step_slice_pi(&mut rng, &mut dar, &stats, &hp).unwrap();
            assert!((dar.pi().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            xs.push(dar.pi()[2]);
        }
        assert!(median(&xs) < 0.01, "median {}", median(&xs));
    }

    #[test]
    fn order_chain_matches_normalized_target() {
        // frozen path, v_0 fixed; compare the P̂ frequencies of a long
        // birth/death chain with the target integrated over the extra sticks
        let hp = Hyperparameters {
            p_max: 3,
            m_max: 2,
            ..Hyperparameters::default_for_dim(1)
        };
        let gamma = vec![0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 0, 1, 0, 0];
        let pi = vec![0.55, 0.45];
        let stats = DarSuffStats::new(&gamma, 2, 3);
        let v0 = 0.35;
        let target = |free: &[f64]| {
            let d = DarParams::from_free_sticks(free, pi.clone()).unwrap();
            stick_log_target(&d, &stats, &hp).exp()
        };
        // midpoint rule on (0,1) and (0,1)²
        let n = 600;
        let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let w = 1.0 / n as f64;
        let m1 = target(&[v0]);
        let m2: f64 = grid.iter().map(|&a| target(&[v0, a]) * w).sum();
        let m3: f64 = grid
            .iter()
            .map(|&a| grid.iter().map(|&b| target(&[v0, a, b]) * w).sum::<f64>() * w)
            .sum();
        let z = m1 + m2 + m3;
        let exact = [m1 / z, m2 / z, m3 / z];

        let mut dar = DarParams::from_free_sticks(&[v0], pi.clone()).unwrap();
        let mut rng = RngStream::new(77, 0);
        let mut freq = [0.0; 3];
        let n_moves = 1_000_000;
        for _ in 0..n_moves {
            step_sticks_birth_death(&mut rng, &mut dar, &stats, &hp);
            freq[dar.order() - 1] += 1.0 / n_moves as f64;
        }
        let tv: f64 = 0.5 * exact.iter().zip(&freq).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 0.02, "exact {exact:?} empirical {freq:?}");
    }
}
