//! Monte Carlo studies: paired replications, failure replacement and
//! summary statistics against the true population size.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimators::{estimate, Estimator};
use crate::patterns::ModelSpec;
use crate::scenario::{sample_table, solve_cell_probabilities, RandomStream, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub rmse: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub stars: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub scenario: String,
    pub estimator: Estimator,
    pub fitted_model: ModelSpec,
    pub population: u64,
    pub reps: usize,
    /// Average number of observed units, shared by every row of a study.
    pub mean_observed: f64,
    /// `None` when the estimator does not apply to this number of sources.
    pub stats: Option<SummaryStats>,
    pub failures: usize,
}

impl SimSummary {
    pub fn dagger(&self) -> bool {
        self.failures > 0
    }
}

/// Estimator whose successful replications supply the replacement value.
pub fn reference_estimator(k: usize) -> Estimator {
    if k == 2 {
        Estimator::ChapmanDse
    } else {
        Estimator::ChapmanMse
    }
}

pub fn stars(p: f64) -> u8 {
    match p {
        p if p < 0.001 => 3,
        p if p < 0.01 => 2,
        p if p < 0.05 => 1,
        _ => 0,
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let r = x.len() as f64;
    let mean = x.iter().sum::<f64>() / r;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (r - 1.0)).sqrt())
}

/// Two-sided p-value of a t statistic, `I_{df/(df+t²)}(df/2, 1/2)`.
///
/// The exact form is kept at every sample size: at twenty thousand degrees
/// of freedom the normal tail is still off by about 1e-5.
pub fn t_p_value(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if df.is_infinite() {
        return erfc(t.abs() / std::f64::consts::SQRT_2);
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// One-sample two-sided t-test of `mean == n`; returns `(t, p)`.
pub fn t_test_vs_n(estimates: &[f64], n: f64) -> Result<(f64, f64)> {
    if estimates.len() < 2 {
        return Err(Error::Argument("t-test needs at least two values".into()));
    }
    if estimates.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("t-test values must be finite".into()));
    }
    let (mean, sd) = mean_sd(estimates);
    if sd == 0.0 {
        return Ok(if mean == n {
            (0.0, 1.0)
        } else {
            ((mean - n).signum() * f64::INFINITY, 0.0)
        });
    }
    let r = estimates.len() as f64;
    let t = (mean - n) / (sd / r.sqrt());
    Ok((t, t_p_value(t, r - 1.0)))
}

pub fn summarize(estimates: &[f64], n: f64) -> Result<SummaryStats> {
    let (mean, sd) = mean_sd(estimates);
    let rmse =
        (estimates.iter().map(|v| (v - n).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt();
    let (t_stat, p_value) = t_test_vs_n(estimates, n)?;
    Ok(SummaryStats {
        mean,
        sd,
        rmse,
        t_stat,
        p_value,
        stars: stars(p_value),
    })
}

/// Fills failed cells (`None`) of every column with the largest successful
/// value of `reference`. Returns the filled columns and each column's
/// failure count.
pub fn apply_failure_policy(
    columns: &[Vec<Option<f64>>],
    reference: &[Option<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let needs_fill = columns.iter().flatten().any(Option::is_none);
    let fill = reference
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if needs_fill && fill == f64::NEG_INFINITY {
        return Err(Error::ReferenceFailed("every reference replication failed"));
    }
    let filled = columns
        .iter()
        .map(|col| col.iter().map(|v| v.unwrap_or(fill)).collect())
        .collect();
    let failures = columns
        .iter()
        .map(|col| col.iter().filter(|v| v.is_none()).count())
        .collect();
    Ok((filled, failures))
}

struct Replication {
    observed: f64,
    values: Vec<Option<f64>>,
    reference: Option<f64>,
}

fn estimate_value(
    table: &crate::patterns::CountTable,
    model: &ModelSpec,
    e: Estimator,
) -> Option<f64> {
    estimate(table, model, e)
        .ok()
        .filter(|r| r.is_ok())
        .map(|r| r.n_hat)
}

/// Runs `reps` replications of `spec`, fitting `fitted_model` with every
/// estimator on the same sampled table, and summarizes each estimator.
///
/// Results are identical for any thread count: every replication draws from
/// its own stream and aggregation follows replication order.
pub fn run_study(
    spec: &ScenarioSpec,
    fitted_model: &ModelSpec,
    estimators: &[Estimator],
    reps: usize,
    seed: u64,
) -> Result<Vec<SimSummary>> {
    if reps < 2 {
        return Err(Error::Argument(
            "at least two replications are required".into(),
        ));
    }
    if fitted_model.k() != spec.k {
        return Err(Error::DimensionMismatch {
            table: spec.k,
            model: fitted_model.k(),
        });
    }
    let q = solve_cell_probabilities(spec)?;
    let k = spec.k;
    let active: Vec<Estimator> = estimators
        .iter()
        .copied()
        .filter(|e| e.supports(k))
        .collect();
    let reference = reference_estimator(k);

    let replications: Vec<Replication> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut stream = RandomStream::new(seed, &spec.id, rep);
            let table = sample_table(&q, spec.population, &mut stream);
            let values: Vec<Option<f64>> = active
                .iter()
                .map(|&e| estimate_value(&table, fitted_model, e))
                .collect();
            let reference = match active.iter().position(|&e| e == reference) {
                Some(i) => values[i],
                None => estimate_value(&table, fitted_model, reference),
            };
            Replication {
                observed: table.observed_total(),
                values,
                reference,
            }
        })
        .collect();

    let columns: Vec<Vec<Option<f64>>> = (0..active.len())
        .map(|j| replications.iter().map(|r| r.values[j]).collect())
        .collect();
    let reference_col: Vec<Option<f64>> = replications.iter().map(|r| r.reference).collect();
    let (filled, failures) = apply_failure_policy(&columns, &reference_col)?;
    let mean_observed = replications.iter().map(|r| r.observed).sum::<f64>() / reps as f64;
    let truth = spec.population as f64;

    estimators
        .iter()
        .map(|&e| {
            let idx = active.iter().position(|&a| a == e);
            let stats = idx.map(|i| summarize(&filled[i], truth)).transpose()?;
            Ok(SimSummary {
                scenario: spec.id.clone(),
                estimator: e,
                fitted_model: fitted_model.clone(),
                population: spec.population,
                reps,
                mean_observed,
                stats,
                failures: idx.map_or(0, |i| failures[i]),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_edge_cases() {
        assert_eq!(t_test_vs_n(&[5.0, 5.0, 5.0], 5.0).unwrap(), (0.0, 1.0));
        assert_eq!(t_test_vs_n(&[6.0, 6.0], 5.0).unwrap().1, 0.0);
        assert!(t_test_vs_n(&[1.0], 1.0).is_err());
        assert!(t_test_vs_n(&[1.0, f64::NAN], 1.0).is_err());
        // two-sided normal tail at |t| = 1
        assert!((t_p_value(1.0, f64::INFINITY) - 0.317_310_507_862_914).abs() < 1e-9);
        // two-sided normal tail plus first-order correction (t³ + t)φ(t)/(2 df)
        let df = 20_000.0;
        let phi = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let approx = 0.317_310_507_862_914 + 2.0 * phi / (2.0 * df);
        assert!((t_p_value(1.0, df) - approx).abs() < 1e-7);
        // t with one degree of freedom is Cauchy: p = 1 - 2 atan(t) / pi
        let p = t_p_value(2.0, 1.0);
        assert!((p - (1.0 - 2.0 * 2f64.atan() / std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!([0.2, 0.04, 0.009, 0.0009].map(stars), [0, 1, 2, 3]);
    }

    #[test]
    fn failure_policy() {
        let cols = vec![vec![Some(1.0), None, Some(3.0)], vec![Some(2.0); 3]];
        let reference = vec![Some(10.0), None, Some(312.4)];
        let (filled, failures) = apply_failure_policy(&cols, &reference).unwrap();
        assert_eq!(filled[0], vec![1.0, 312.4, 3.0]);
        assert_eq!(failures, vec![1, 0]);
        assert!(apply_failure_policy(&cols, &[None, None, None]).is_err());
        let clean = vec![vec![Some(1.0), Some(2.0)]];
        assert!(apply_failure_policy(&clean, &[None, None]).is_ok());
    }

    #[test]
    fn rmse_decomposition() {
        let x = [98.0, 103.5, 101.0, 97.25, 110.0];
        let s = summarize(&x, 100.0).unwrap();
        let r = x.len() as f64;
        let lhs = s.rmse.powi(2);
        let rhs = (s.mean - 100.0).powi(2) + s.sd.powi(2) * (r - 1.0) / r;
        assert!((lhs - rhs).abs() / lhs < 1e-12);
    }
}
