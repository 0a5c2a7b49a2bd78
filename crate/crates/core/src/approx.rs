//! Series approximations of `E[1/n]` for a Poisson count, and Monte Carlo
//! checks of the bias identities behind the Chapman correction.

use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::RandomStream;

pub const TERMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    pub m: f64,
    pub draws: usize,
    /// Draws equal to zero, left out of the empirical target.
    pub zero_draws: usize,
    pub sample_mean: f64,
    /// Mean of `1/n` over the non-zero draws.
    pub empirical_target: f64,
    pub target_std_error: f64,
    /// Cumulative Taylor approximations with 1..=5 terms.
    pub taylor: [f64; TERMS],
    /// Cumulative inverse-factorial approximations with 1..=5 terms.
    pub inverse_factorial: [f64; TERMS],
}

impl ApproxReport {
    pub fn taylor_delta(&self) -> [f64; TERMS] {
        self.taylor.map(|t| self.empirical_target - t)
    }

    pub fn inverse_factorial_delta(&self) -> [f64; TERMS] {
        self.inverse_factorial.map(|t| self.empirical_target - t)
    }
}

fn poisson_draws(m: f64, draws: usize, seed: u64, label: &str) -> Result<Vec<u64>> {
    let dist = Poisson::new(m).map_err(|e| Error::Argument(format!("Poisson mean {m}: {e}")))?;
    let mut stream = RandomStream::new(seed, label, 0);
    Ok((0..draws)
        .map(|_| dist.sample(&mut stream) as u64)
        .collect())
}

/// Taylor (about the sample mean `m̂`) and inverse-factorial expansions of
/// `E[1/n]` from `draws` Poisson(`m`) samples.
///
/// Taylor term `j` is `(−1)ʲ E[(n − m̂)ʲ] / m̂ʲ⁺¹`; inverse-factorial term `j`
/// is the sample mean of `j! / ((n+1)(n+2)…(n+j+1))`.
pub fn compare_expansions(m: f64, draws: usize, seed: u64) -> Result<ApproxReport> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Argument(format!(
            "Poisson mean must be positive, got {m}"
        )));
    }
    if draws < 2 {
        return Err(Error::Argument("need at least two draws".into()));
    }
    let sample = poisson_draws(m, draws, seed, "approx")?;
    let r = draws as f64;
    let sample_mean = sample.iter().sum::<u64>() as f64 / r;

    let nonzero: Vec<f64> = sample
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| n as f64)
        .collect();
    let inverse: Vec<f64> = nonzero.iter().map(|n| 1.0 / n).collect();
    let target = mean_se(&inverse);

    let mut moments = [0.0; TERMS];
    let mut if_terms = [0.0; TERMS];
    for &n in &sample {
        let n = n as f64;
        let d = n - sample_mean;
        let mut power = 1.0;
        let mut inv = 1.0;
        for j in 0..TERMS {
            moments[j] += power;
            power *= d;
            inv *= (j as f64).max(1.0) / (n + j as f64 + 1.0);
            if_terms[j] += inv;
        }
    }

    let mut taylor = [0.0; TERMS];
    let mut inverse_factorial = [0.0; TERMS];
    let (mut t_acc, mut f_acc) = (0.0, 0.0);
    for j in 0..TERMS {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        t_acc += sign * (moments[j] / r) / sample_mean.powi(j as i32 + 1);
        f_acc += if_terms[j] / r;
        taylor[j] = t_acc;
        inverse_factorial[j] = f_acc;
    }
    Ok(ApproxReport {
        m,
        draws,
        zero_draws: draws - nonzero.len(),
        sample_mean,
        empirical_target: target.value,
        target_std_error: target.std_error,
        taylor,
        inverse_factorial,
    })
}

/// Exact `E[1/n | n > 0]` for Poisson(`m`) by summing the probability mass
/// function until the tail is negligible.
pub fn exact_inverse_mean(m: f64) -> f64 {
    let mut p = (-m).exp();
    let (mut acc, mut mass) = (0.0, 0.0);
    let upper = (m + 40.0 * m.sqrt() + 50.0) as usize;
    for n in 1..=upper {
        p *= m / n as f64;
        acc += p / n as f64;
        mass += p;
    }
    acc / mass
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasIdentityReport {
    pub m11: f64,
    pub m10: f64,
    pub m01: f64,
    pub draws: usize,
    /// Sample mean of `n10·n01/n11` over draws with `n11 > 0`.
    pub lp_mean: Estimate,
    /// Second-order prediction `(m10·m01/m11)·(m11+1)/m11`.
    pub lp_second_order: f64,
    /// Sample mean of `1/(n11+1)`.
    pub shifted_inverse_mean: Estimate,
    /// `(1 − e^{−m11})/m11`, the exact value of `E[1/(n11+1)]`.
    pub shifted_inverse_exact: f64,
}

impl BiasIdentityReport {
    pub fn lp_ratio(&self) -> f64 {
        self.lp_mean.value / self.lp_second_order
    }

    /// Distance of the shifted-inverse mean from its exact value, in
    /// standard errors.
    pub fn shifted_inverse_z(&self) -> f64 {
        (self.shifted_inverse_mean.value - self.shifted_inverse_exact)
            / self.shifted_inverse_mean.std_error
    }
}

fn mean_se(x: &[f64]) -> Estimate {
    let r = x.len() as f64;
    let value = x.iter().sum::<f64>() / r;
    let var = x.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (r - 1.0);
    Estimate {
        value,
        std_error: (var / r).sqrt(),
    }
}

/// Draws independent Poisson counts `(n11, n10, n01)` and compares the
/// Lincoln-Petersen ratio and `1/(n11+1)` with their predicted means.
pub fn taylor_bias_identity_check(
    m11: f64,
    m10: f64,
    m01: f64,
    draws: usize,
    seed: u64,
) -> Result<BiasIdentityReport> {
    if draws < 2 {
        return Err(Error::Argument("need at least two draws".into()));
    }
    let n11 = poisson_draws(m11, draws, seed, "bias-n11")?;
    let n10 = poisson_draws(m10, draws, seed, "bias-n10")?;
    let n01 = poisson_draws(m01, draws, seed, "bias-n01")?;

    let lp: Vec<f64> = (0..draws)
        .filter(|&i| n11[i] > 0)
        .map(|i| (n10[i] * n01[i]) as f64 / n11[i] as f64)
        .collect();
    if lp.len() < 2 {
        return Err(Error::Argument(format!(
            "too few draws with n11 > 0 at m11={m11}"
        )));
    }
    let shifted: Vec<f64> = n11.iter().map(|&n| 1.0 / (n as f64 + 1.0)).collect();
    Ok(BiasIdentityReport {
        m11,
        m10,
        m01,
        draws,
        lp_mean: mean_se(&lp),
        lp_second_order: m10 * m01 / m11 * (m11 + 1.0) / m11,
        shifted_inverse_mean: mean_se(&shifted),
        shifted_inverse_exact: -(-m11).exp_m1() / m11,
    })
}
