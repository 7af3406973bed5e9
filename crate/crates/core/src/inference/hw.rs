//! Heidelberger–Welch stationarity and halfwidth diagnostic.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

pub const MIN_TRACE: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct HwConfig {
    /// Significance level of both tests.
    pub alpha: f64,
    /// Target relative halfwidth.
    pub eps: f64,
}

impl Default for HwConfig {
    fn default() -> Self {
        Self { alpha: 0.05, eps: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HwReport {
    /// The stationarity test; this is what `passed` reports.
    pub stationary: bool,
    /// First retained index when stationary.
    pub start: Option<usize>,
    /// Cramér–von Mises statistic at the last prefix tried.
    pub statistic: f64,
    pub p_value: f64,
    pub halfwidth_passed: Option<bool>,
    pub mean: Option<f64>,
    pub halfwidth: Option<f64>,
}

impl HwReport {
    pub fn passed(&self) -> bool {
        self.stationary
    }
}

/// Modified Bessel function of the second kind, from
/// `K_ν(x) = ∫_0^∞ exp(−x cosh t) cosh(νt) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0");
    // integrand below e^-745 beyond t_max
    let t_max = (760.0 / x).max(1.0).acosh() + 1.0;
    let n = 4000;
    let h = t_max / n as f64;
    let f = |t: f64| (-x * t.cosh()).exp() * (nu * t).cosh();
    let mut s = 0.5 * (f(0.0) + f(t_max));
    for i in 1..n {
        s += f(i as f64 * h);
    }
    s * h
}

/// CDF of the Cramér–von Mises limiting distribution, four-term series.
pub fn pcramer(q: f64) -> f64 {
    if !(q > 0.0) {
        return 0.0;
    }
    let cutoff = -(1e-5f64).ln();
    let pi32 = std::f64::consts::PI.powf(1.5);
    (0..4)
        .map(|k| {
            let kf = k as f64;
            let u = (4.0 * kf + 1.0).powi(2) / (16.0 * q);
            if u > cutoff {
                return 0.0;
            }
            let z = gamma(kf + 0.5) * (4.0 * kf + 1.0).sqrt() / (gamma(kf + 1.0) * pi32 * q.sqrt());
            z * (-u).exp() * bessel_k(0.25, u)
        })
        .sum()
}

/// Spectral density at frequency zero from an autoregression fitted by
/// Yule–Walker with the order chosen by AIC. Returns `(density, order)`.
pub fn spectrum0_ar(x: &[f64]) -> (f64, usize) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let max_order = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let acov: Vec<f64> = (0..=max_order)
        .map(|k| (k..n).map(|t| (x[t] - mean) * (x[t - k] - mean)).sum::<f64>() / n as f64)
        .collect();
    if acov[0] <= 0.0 {
        return (0.0, 0);
    }
    // Levinson–Durbin
    let mut coefs: Vec<Vec<f64>> = vec![Vec::new()];
    let mut vars = vec![acov[0]];
    for k in 1..=max_order {
        let prev = &coefs[k - 1];
        let num = acov[k] - (1..k).map(|j| prev[j - 1] * acov[k - j]).sum::<f64>();
        let pk = num / vars[k - 1];
        let mut next: Vec<f64> = (1..k).map(|j| prev[j - 1] - pk * prev[k - j - 1]).collect();
        next.push(pk);
        let v = vars[k - 1] * (1.0 - pk * pk);
        if !(v > 0.0) {
            break;
        }
        coefs.push(next);
        vars.push(v);
    }
    let nf = n as f64;
    let order = (0..vars.len())
        .min_by(|&a, &b| {
            let aic = |k: usize| nf * vars[k].ln() + 2.0 * k as f64;
            aic(a).total_cmp(&aic(b))
        })
        .unwrap_or(0);
    let var_pred = vars[order] * nf / (nf - (order as f64 + 1.0));
    let sum_ar: f64 = coefs[order].iter().sum();
    (var_pred / (1.0 - sum_ar).powi(2), order)
}

/// Discards 0%, 10%, …, 50% of the trace until the Cramér–von Mises test
/// accepts stationarity, then checks the halfwidth of the mean's interval
/// on the retained part.
pub fn heidelberger_welch(trace: &[f64], cfg: &HwConfig) -> Result<HwReport> {
    let n = trace.len();
    if n < MIN_TRACE {
        return Err(Error::TraceTooShort(n));
    }
    if trace.iter().all(|&x| x == trace[0]) {
        return Ok(HwReport {
            stationary: true,
            start: Some(0),
            statistic: 0.0,
            p_value: 1.0,
            halfwidth_passed: Some(true),
            mean: Some(trace[0]),
            halfwidth: Some(0.0),
        });
    }
    let (s0, _) = spectrum0_ar(&trace[n / 2..]);
    let mut statistic = f64::INFINITY;
    let mut p_value = 0.0;
    let mut start = None;
    for step in 0..=5 {
        let first = step * n / 10;
        let y = &trace[first..];
        let ny = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / ny;
        let mut cum = 0.0;
        let mut ss = 0.0;
        for (k, &v) in y.iter().enumerate() {
            cum += v;
            let b = cum - ybar * (k + 1) as f64;
            ss += b * b;
        }
        statistic = ss / (ny * ny * s0);
        p_value = if statistic.is_finite() { 1.0 - pcramer(statistic) } else { 0.0 };
        if statistic.is_finite() && p_value > cfg.alpha {
            start = Some(first);
            break;
        }
    }
    let Some(first) = start else {
        return Ok(HwReport {
            stationary: false,
            start: None,
            statistic,
            p_value,
            halfwidth_passed: None,
            mean: None,
            halfwidth: None,
        });
    };
    let y = &trace[first..];
    let ny = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / ny;
    let z = Normal::standard().inverse_cdf(1.0 - cfg.alpha / 2.0);
    let hw = z * (spectrum0_ar(y).0 / ny).sqrt();
    Ok(HwReport {
        stationary: true,
        start: Some(first),
        statistic,
        p_value,
        halfwidth_passed: Some(hw <= cfg.eps * ybar.abs()),
        mean: Some(ybar),
        halfwidth: Some(hw),
    })
}
