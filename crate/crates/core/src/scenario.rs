//! Synthetic capture tables with prescribed inclusion probabilities and
//! pairwise conditional odds ratios.
//!
//! Cell probabilities follow a log-linear model over all `2^k` patterns,
//!
//! ```text
//! q(x) ∝ exp( Σᵢ αᵢ xᵢ + Σ₍ᵢ,ⱼ₎ log θᵢⱼ xᵢ xⱼ )
//! ```
//!
//! with no interactions above order two, so every pair has the same odds
//! ratio at each level of the other sources. The main effects `α` are solved
//! by Newton's method so that the marginal inclusion probabilities match.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patterns::{canonical_patterns, source_label, CountTable, InclusionPattern, ModelSpec};

const SOLVE_TOL: f64 = 1e-12;
const SOLVE_MAX_ITER: usize = 200;

static DSE_BUNDLE: &str = include_str!("../data/dse.json");
static MSE_BUNDLE: &str = include_str!("../data/mse.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    #[serde(rename = "N")]
    pub population: u64,
    pub k: usize,
    pub p: Vec<f64>,
    /// Odds ratios keyed by pair label (`"AB"`); absent pairs are 1.
    #[serde(default)]
    pub theta: BTreeMap<String, f64>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::Scenario {
            id: self.id.clone(),
            msg,
        };
        if !(2..=crate::patterns::MAX_SOURCES).contains(&self.k) {
            return Err(err(format!("k={} out of range", self.k)));
        }
        if self.population == 0 {
            return Err(err("N must be positive".into()));
        }
        if self.p.len() != self.k {
            return Err(err(format!(
                "expected {} inclusion probabilities, got {}",
                self.k,
                self.p.len()
            )));
        }
        if let Some(p) = self.p.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(err(format!("inclusion probability {p} outside (0, 1)")));
        }
        for (key, theta) in &self.theta {
            self.pair_of(key)?;
            if !(*theta > 0.0 && theta.is_finite()) {
                return Err(err(format!("odds ratio {key}={theta} must be positive")));
            }
        }
        Ok(())
    }

    fn pair_of(&self, key: &str) -> Result<(usize, usize)> {
        let idx: Vec<usize> = key
            .chars()
            .map(|c| (c.to_ascii_uppercase() as usize).wrapping_sub('A' as usize))
            .collect();
        match idx[..] {
            [i, j] if i < self.k && j < self.k && i != j => Ok((i.min(j), i.max(j))),
            _ => Err(Error::Scenario {
                id: self.id.clone(),
                msg: format!("{key:?} is not a source pair"),
            }),
        }
    }

    /// `log θ` per pair `(i, j)` with `i < j`.
    fn log_theta(&self) -> Result<Vec<((usize, usize), f64)>> {
        self.theta
            .iter()
            .map(|(key, t)| Ok((self.pair_of(key)?, t.ln())))
            .collect()
    }

    /// The model with an interaction for every pair whose odds ratio is not 1.
    pub fn generating_model(&self) -> Result<ModelSpec> {
        self.validate()?;
        let pairs = self
            .log_theta()?
            .into_iter()
            .filter(|(_, l)| *l != 0.0)
            .map(|(pair, _)| pair);
        ModelSpec::with_pairs(self.k, pairs)
    }
}

/// Parses a scenario bundle: a JSON array of scenarios or a single scenario.
pub fn parse_scenarios(json: &str) -> Result<Vec<ScenarioSpec>> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let specs: Vec<ScenarioSpec> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// Built-in bundles: `dse` (seven two-source scenarios) and `mse` (fourteen
/// three- and four-source scenarios).
pub fn builtin_scenarios(name: &str) -> Result<Vec<ScenarioSpec>> {
    match name {
        "dse" => parse_scenarios(DSE_BUNDLE),
        "mse" => parse_scenarios(MSE_BUNDLE),
        _ => Err(Error::Argument(format!(
            "unknown builtin bundle {name:?} (use dse or mse)"
        ))),
    }
}

/// Looks up a scenario by id across both built-in bundles.
pub fn builtin_scenario(id: &str) -> Result<ScenarioSpec> {
    ["dse", "mse"]
        .into_iter()
        .flat_map(|b| builtin_scenarios(b).unwrap_or_default())
        .find(|s| s.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| Error::Argument(format!("no builtin scenario {id:?}")))
}

/// Probabilities over all `2^k` patterns: observed cells in canonical order,
/// followed by the unobserved cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbabilities {
    k: usize,
    q: Vec<f64>,
}

impl CellProbabilities {
    pub fn new(k: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != 1 << k {
            return Err(Error::Argument(format!(
                "expected {} cell probabilities",
                1 << k
            )));
        }
        let total: f64 = q.iter().sum();
        if q.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(
                "cell probabilities must be non-negative and sum to 1".into(),
            ));
        }
        Ok(Self { k, q })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn unobserved(&self) -> f64 {
        self.q[self.q.len() - 1]
    }

    /// Patterns matching [`CellProbabilities::q`] position by position.
    pub fn patterns(&self) -> Vec<InclusionPattern> {
        let mut pats = canonical_patterns(self.k).expect("validated k");
        pats.push(InclusionPattern::unobserved(self.k).expect("validated k"));
        pats
    }

    pub fn marginal(&self, source: usize) -> f64 {
        self.patterns()
            .iter()
            .zip(&self.q)
            .filter(|(p, _)| p.contains(source))
            .map(|(_, q)| q)
            .sum()
    }
}

fn cell_weights(
    pats: &[InclusionPattern],
    alpha: &[f64],
    log_theta: &[((usize, usize), f64)],
) -> Vec<f64> {
    let log_w: Vec<f64> = pats
        .iter()
        .map(|p| {
            let main: f64 = (0..alpha.len())
                .filter(|&i| p.contains(i))
                .map(|i| alpha[i])
                .sum();
            let inter: f64 = log_theta
                .iter()
                .filter(|((i, j), _)| p.contains(*i) && p.contains(*j))
                .map(|(_, l)| l)
                .sum();
            main + inter
        })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

pub fn solve_cell_probabilities(spec: &ScenarioSpec) -> Result<CellProbabilities> {
    spec.validate()?;
    let k = spec.k;
    let log_theta = spec.log_theta()?;
    let mut pats = canonical_patterns(k)?;
    pats.push(InclusionPattern::unobserved(k)?);
    let mut alpha: Vec<f64> = spec.p.iter().map(|p| (p / (1.0 - p)).ln()).collect();
    for _ in 0..SOLVE_MAX_ITER {
        let q = cell_weights(&pats, &alpha, &log_theta);
        let marg: Vec<f64> = (0..k)
            .map(|i| {
                pats.iter()
                    .zip(&q)
                    .filter(|(p, _)| p.contains(i))
                    .map(|(_, q)| q)
                    .sum()
            })
            .collect();
        let resid = DVector::from_iterator(k, marg.iter().zip(&spec.p).map(|(m, p)| m - p));
        if resid.amax() < SOLVE_TOL {
            return CellProbabilities::new(k, q);
        }
        // ∂ marginal_i / ∂ α_j = Cov(x_i, x_j)
        let jac = DMatrix::from_fn(k, k, |i, j| {
            let both: f64 = pats
                .iter()
                .zip(&q)
                .filter(|(p, _)| p.contains(i) && p.contains(j))
                .map(|(_, q)| q)
                .sum();
            both - marg[i] * marg[j]
        });
        let step = jac
            .lu()
            .solve(&resid)
            .ok_or_else(|| Error::SolveDiverged(spec.id.clone()))?;
        for (a, s) in alpha.iter_mut().zip(step.iter()) {
            *a -= s;
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            break;
        }
    }
    Err(Error::SolveDiverged(spec.id.clone()))
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Counter-based random stream keyed by `(master seed, scenario id,
/// replication index)`. Streams for different replications never overlap,
/// so replications can be drawn in any order or in parallel.
#[derive(Debug, Clone)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn new(seed: u64, scenario: &str, replication: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a(scenario).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replication);
        Self(rng)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// One multinomial draw of `population` units over all cells, by sequential
/// conditional binomials. The unobserved cell is dropped.
pub fn sample_table(
    q: &CellProbabilities,
    population: u64,
    stream: &mut RandomStream,
) -> CountTable {
    let cells = q.q();
    let mut remaining = population;
    let mut mass = 1.0;
    let mut counts = Vec::with_capacity(cells.len() - 1);
    for &qi in &cells[..cells.len() - 1] {
        let draw = if remaining == 0 || qi <= 0.0 {
            0
        } else if qi >= mass {
            remaining
        } else {
            let p = (qi / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, p).map_or(0, |b| b.sample(stream))
        };
        counts.push(draw as f64);
        remaining -= draw;
        mass -= qi;
    }
    CountTable::new(q.k(), counts).expect("multinomial counts form a valid table")
}

/// Conditional odds ratio of sources `i`, `j` with the remaining sources
/// fixed at the levels in `rest` (a source mask, bits `i`, `j` ignored).
pub fn conditional_odds_ratio(q: &CellProbabilities, i: usize, j: usize, rest: u32) -> f64 {
    let base = rest & !(1 << i) & !(1 << j);
    let pats = q.patterns();
    let prob = |mask: u32| {
        pats.iter()
            .zip(q.q())
            .find(|(p, _)| p.mask() == mask)
            .map_or(f64::NAN, |(_, v)| *v)
    };
    let (bi, bj) = (1u32 << i, 1u32 << j);
    prob(base | bi | bj) * prob(base) / (prob(base | bi) * prob(base | bj))
}

pub fn pair_label(i: usize, j: usize) -> String {
    format!("{}{}", source_label(i), source_label(j))
}
