//! Poisson log-linear fits: maximum likelihood by iteratively reweighted
//! least squares, and a Firth-type adjusted-score fit.
//!
//! Counts may be fractional; the quasi-likelihood is the same expression.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::adjust::{z_vector, Z_TOLERANCE};
use crate::error::{Error, Result};
use crate::patterns::{build_design, CountTable, ModelSpec};

pub const MAX_ITERATIONS: usize = 100;
const SCORE_TOL: f64 = 1e-10;
const DEVIANCE_TOL: f64 = 1e-12;
const PARAM_TOL: f64 = 1e-10;
/// Fitted values below this have collapsed onto the boundary of the
/// parameter space.
const COLLAPSED: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Parameters in design-column order (intercept first).
    pub lambda: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Estimated missing cell, `exp(lambda[0])`.
    pub m000: f64,
    pub se_log_m000: f64,
    pub deviance: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    /// Wald interval `exp(λ₀ ± z·se)` for the missing cell.
    pub fn m000_interval(&self, z: f64) -> (f64, f64) {
        let l0 = self.lambda[0];
        (
            (l0 - z * self.se_log_m000).exp(),
            (l0 + z * self.se_log_m000).exp(),
        )
    }
}

/// QR factorisation of `W^½ X`.
struct WeightedQr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    sqrt_w: DVector<f64>,
}

impl WeightedQr {
    fn new(x: &DMatrix<f64>, weights: &DVector<f64>) -> Option<Self> {
        let sqrt_w = weights.map(f64::sqrt);
        let mut a = x.clone();
        for (mut row, s) in a.row_iter_mut().zip(sqrt_w.iter()) {
            row *= *s;
        }
        let qr = a.qr();
        let r = qr.r();
        let scale = r.diagonal().amax();
        if !scale.is_finite() || r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
            return None;
        }
        Some(Self {
            q: qr.q(),
            r,
            sqrt_w,
        })
    }

    /// Weighted least squares solution of `X β ≈ y`.
    fn solve(&self, y: &DVector<f64>) -> Option<DVector<f64>> {
        let rhs = self.q.tr_mul(&y.component_mul(&self.sqrt_w));
        self.r.solve_upper_triangular(&rhs)
    }

    /// Diagonal of the weighted hat matrix.
    fn leverages(&self) -> DVector<f64> {
        DVector::from_iterator(self.q.nrows(), self.q.row_iter().map(|r| r.norm_squared()))
    }

    /// `[(XᵀWX)⁻¹]₀₀`.
    fn intercept_variance(&self) -> f64 {
        let mut e1 = DVector::zeros(self.r.ncols());
        e1[0] = 1.0;
        self.r
            .transpose()
            .solve_lower_triangular(&e1)
            .map_or(f64::NAN, |w| w.norm_squared())
    }
}

fn check_inputs(n: &CountTable, model: &ModelSpec) -> Result<DMatrix<f64>> {
    if n.k() != model.k() {
        return Err(Error::DimensionMismatch {
            table: n.k(),
            model: model.k(),
        });
    }
    for s in 0..n.k() {
        if n.marginal(s)? <= 0.0 {
            return Err(Error::ZeroMargin(s));
        }
    }
    Ok(build_design(model).matrix().clone())
}

/// Least squares on `log(n + 0.5)`.
fn initial_lambda(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let ones = DVector::from_element(x.nrows(), 1.0);
    let start = y.map(|v| (v + 0.5).ln());
    WeightedQr::new(x, &ones)
        .and_then(|qr| qr.solve(&start))
        .ok_or(Error::RankDeficient {
            rank: 0,
            cols: x.ncols(),
        })
}

fn poisson_deviance(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    2.0 * y
        .iter()
        .zip(mu.iter())
        .map(|(&y, &m)| {
            let t = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
            t - (y - m)
        })
        .sum::<f64>()
}

fn poisson_loglik(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    y.iter()
        .zip(mu.iter())
        .map(|(&y, &m)| {
            let t = if y > 0.0 { y * m.ln() } else { 0.0 };
            t - m - ln_gamma(y + 1.0)
        })
        .sum()
}

fn finish(
    x: &DMatrix<f64>,
    model: &ModelSpec,
    y: &DVector<f64>,
    beta: DVector<f64>,
    mut converged: bool,
    iterations: usize,
) -> Result<FitResult> {
    let mu = (x * &beta).map(f64::exp);
    if beta.iter().chain(mu.iter()).any(|v| !v.is_finite()) {
        converged = false;
    }
    // A denominator cell driven to zero sends the missing-cell estimate to
    // infinity: the maximum is not attained.
    if converged {
        let z = z_vector(model)?;
        if z.z()
            .iter()
            .zip(mu.iter())
            .any(|(&zi, &m)| zi < -Z_TOLERANCE && m < COLLAPSED)
        {
            converged = false;
        }
    }
    let se = WeightedQr::new(x, &mu).map_or(f64::NAN, |qr| qr.intercept_variance().sqrt());
    let deviance = poisson_deviance(y, &mu);
    let aic = -2.0 * poisson_loglik(y, &mu) + 2.0 * x.ncols() as f64;
    Ok(FitResult {
        m000: beta[0].exp(),
        lambda: beta.iter().copied().collect(),
        fitted: mu.iter().copied().collect(),
        se_log_m000: se,
        deviance,
        aic,
        converged,
        iterations,
    })
}

/// Maximum-likelihood fit of `log E[n] = Xλ` under a Poisson working model.
///
/// Iterates until the score `Xᵀ(n − μ)` has max-norm below `1e−10` or the
/// relative deviance change `|ΔD| / (|D| + 0.1)` drops below `1e−12`. A fit
/// that does not converge within 100 iterations, or whose estimate diverges,
/// is returned with `converged = false`.
pub fn fit_ml(n: &CountTable, model: &ModelSpec) -> Result<FitResult> {
    let x = check_inputs(n, model)?;
    let y = DVector::from_column_slice(n.values());
    let mut beta = initial_lambda(&x, &y)?;
    let mut mu = (&x * &beta).map(f64::exp);
    let mut dev = poisson_deviance(&y, &mu);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let eta = &x * &beta;
        let working = eta + (&y - &mu).component_div(&mu);
        let Some(next) = WeightedQr::new(&x, &mu).and_then(|qr| qr.solve(&working)) else {
            break;
        };
        beta = next;
        mu = (&x * &beta).map(f64::exp);
        if mu.iter().any(|m| !m.is_finite()) {
            break;
        }
        let new_dev = poisson_deviance(&y, &mu);
        let score = x.tr_mul(&(&y - &mu)).amax();
        let rel = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
        dev = new_dev;
        if score < SCORE_TOL || rel < DEVIANCE_TOL {
            converged = true;
            break;
        }
    }
    finish(&x, model, &y, beta, converged, iterations)
}

/// Firth-type fit: solves the adjusted score `Xᵀ(n + h/2 − μ) = 0`, where
/// `h` are the leverages of `W^½X` at the current fit.
///
/// Each iteration takes one weighted least squares step towards the
/// pseudo-counts `n + h/2`; it stops when no parameter moves by more than
/// `1e−10`.
pub fn fit_firth(n: &CountTable, model: &ModelSpec) -> Result<FitResult> {
    let x = check_inputs(n, model)?;
    let y = DVector::from_column_slice(n.values());
    let mut beta = initial_lambda(&x, &y)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let eta = &x * &beta;
        let mu = eta.map(f64::exp);
        let Some(qr) = WeightedQr::new(&x, &mu) else {
            break;
        };
        let pseudo = &y + qr.leverages() * 0.5;
        let working = eta + (pseudo - &mu).component_div(&mu);
        let Some(next) = qr.solve(&working) else {
            break;
        };
        let step = (&next - &beta).amax();
        beta = next;
        if !step.is_finite() {
            break;
        }
        if step < PARAM_TOL {
            converged = true;
            break;
        }
    }
    finish(&x, model, &y, beta, converged, iterations)
}

/// Missing cell from fitted values: product over odd-parity cells divided by
/// the product over even-parity cells. Holds for every model without the
/// `k`-way interaction.
pub fn fienberg_m000(fitted: &[f64], k: usize) -> Result<f64> {
    let pats = crate::patterns::canonical_patterns(k)?;
    if fitted.len() != pats.len() {
        return Err(Error::Table(format!(
            "expected {} fitted values for k={k}, got {}",
            pats.len(),
            fitted.len()
        )));
    }
    if let Some(v) = fitted.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Table(format!(
            "fitted values must be positive, got {v}"
        )));
    }
    let log: f64 = pats
        .iter()
        .zip(fitted)
        .map(|(p, v)| if p.is_odd() { v.ln() } else { -v.ln() })
        .sum();
    Ok(log.exp())
}
