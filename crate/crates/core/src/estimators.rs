//! Population size estimators on a single count table, and closed-form
//! missing-cell expressions used to cross-check the fitted route.

use std::fmt;
use std::str::FromStr;

use crate::adjust::adjusted_counts;
use crate::error::{Error, Result};
use crate::glm::{fit_firth, fit_ml, FitResult};
use crate::patterns::{CountTable, InclusionPattern, ModelSpec};

/// Two-sided 95% normal quantile used for the Wald interval.
pub const CI_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    /// Maximum likelihood on the observed counts.
    Ml,
    /// Lincoln-Petersen; the maximum-likelihood estimator under its DSE name.
    Lp,
    /// Bailey's binomial-based correction (two sources).
    Bailey,
    /// Evans-Bonett: `0.5^(k−1)` added to every cell.
    EvansBonett,
    /// Firth-type adjusted score fit.
    Cfk,
    /// Rivest-Lévesque adjusted counts (two or three sources).
    RivestLevesque,
    /// Chapman's two-source estimator.
    ChapmanDse,
    /// Chapman estimator generalised through the Moore-Penrose intercept row.
    ChapmanMse,
}

impl Estimator {
    pub const ALL: [Estimator; 8] = [
        Estimator::Ml,
        Estimator::Lp,
        Estimator::Bailey,
        Estimator::EvansBonett,
        Estimator::Cfk,
        Estimator::RivestLevesque,
        Estimator::ChapmanDse,
        Estimator::ChapmanMse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Ml => "ml",
            Estimator::Lp => "lp",
            Estimator::Bailey => "bailey",
            Estimator::EvansBonett => "eb",
            Estimator::Cfk => "cfk",
            Estimator::RivestLevesque => "rl",
            Estimator::ChapmanDse => "chapman",
            Estimator::ChapmanMse => "chapman-mse",
        }
    }

    pub fn supports(&self, k: usize) -> bool {
        match self {
            Estimator::Bailey | Estimator::ChapmanDse => k == 2,
            Estimator::RivestLevesque => k == 2 || k == 3,
            _ => true,
        }
    }

    /// Estimators compared in the dual-system setting.
    pub fn dse_set() -> Vec<Estimator> {
        use Estimator::*;
        vec![Lp, Bailey, EvansBonett, Cfk, ChapmanDse, RivestLevesque]
    }

    /// Estimators compared in the multiple-systems setting.
    pub fn mse_set() -> Vec<Estimator> {
        use Estimator::*;
        vec![Ml, EvansBonett, Cfk, RivestLevesque, ChapmanMse]
    }
}

impl serde::Serialize for Estimator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match s.as_str() {
            "ml" => Estimator::Ml,
            "lp" | "lincoln-petersen" => Estimator::Lp,
            "bailey" => Estimator::Bailey,
            "eb" | "evans-bonett" => Estimator::EvansBonett,
            "cfk" | "firth" => Estimator::Cfk,
            "rl" | "rivest-levesque" => Estimator::RivestLevesque,
            "chapman" | "chap" | "chapman-dse" => Estimator::ChapmanDse,
            "chapman-mse" | "chapmse" | "chap-mse" => Estimator::ChapmanMse,
            _ => return Err(Error::Argument(format!("unknown estimator {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failure,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub estimator: Estimator,
    pub model: ModelSpec,
    pub m000: f64,
    pub n_observed: f64,
    pub n_hat: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub status: Status,
}

impl EstimateResult {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// Population size estimate `N̂ = n + m̂₀`.
///
/// `n` is always the total of the original table, never of the adjusted one.
/// Bailey's missing cell is evaluated in closed form as
/// `n₁₀(n₀₁ − 1)/(n₁₁ + 1)`, which stays defined (and may go negative) when
/// `n₀₁ = 0`; it carries no interval.
pub fn estimate(n: &CountTable, model: &ModelSpec, estimator: Estimator) -> Result<EstimateResult> {
    if n.k() != model.k() {
        return Err(Error::DimensionMismatch {
            table: n.k(),
            model: model.k(),
        });
    }
    if !estimator.supports(n.k()) {
        return Err(Error::Unsupported {
            estimator: estimator.name(),
            k: n.k(),
            detail: "",
        });
    }
    let n_observed = n.observed_total();
    let result = |m000: f64, ci: Option<(f64, f64)>, ok: bool| {
        let ok = ok && m000.is_finite();
        EstimateResult {
            estimator,
            model: model.clone(),
            m000,
            n_observed,
            n_hat: n_observed + m000,
            ci_low: ci.map(|c| n_observed + c.0),
            ci_high: ci.map(|c| n_observed + c.1),
            status: if ok { Status::Ok } else { Status::Failure },
        }
    };

    if estimator == Estimator::Bailey {
        let v = n.values();
        return Ok(result(v[1] * (v[2] - 1.0) / (v[0] + 1.0), None, true));
    }

    let fit: Result<FitResult> = match estimator {
        Estimator::Cfk => fit_firth(n, model),
        _ => fit_ml(&adjusted_counts(estimator, n, model)?, model),
    };
    match fit {
        Ok(fit) => {
            let ci = fit.se_log_m000.is_finite().then(|| fit.m000_interval(CI_Z));
            Ok(result(fit.m000, ci, fit.converged))
        }
        Err(Error::ZeroMargin(_)) => Ok(result(f64::NAN, None, false)),
        Err(e) => Err(e),
    }
}

/// Every estimator applicable to this table, in [`Estimator::ALL`] order.
pub fn estimate_all(n: &CountTable, model: &ModelSpec) -> Result<Vec<EstimateResult>> {
    Estimator::ALL
        .iter()
        .filter(|e| e.supports(n.k()))
        .map(|&e| estimate(n, model, e))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    Value(f64),
    /// The model has no closed-form missing-cell estimate (e.g. three-source
    /// independence).
    NoClosedForm,
    ZeroDenominator,
}

impl ClosedForm {
    pub fn value(&self) -> Option<f64> {
        match self {
            ClosedForm::Value(v) => Some(*v),
            _ => None,
        }
    }
}

fn ratio(num: f64, den: f64) -> ClosedForm {
    if den == 0.0 {
        ClosedForm::ZeroDenominator
    } else {
        ClosedForm::Value(num / den)
    }
}

/// Direct evaluation of the missing-cell estimate for saturated models (any
/// `k`) and the three-source one- and two-pair dependence models.
///
/// With `corrected`, one is added to the Poisson quantity in the denominator.
pub fn closed_form_m000(n: &CountTable, model: &ModelSpec, corrected: bool) -> Result<ClosedForm> {
    if n.k() != model.k() {
        return Err(Error::DimensionMismatch {
            table: n.k(),
            model: model.k(),
        });
    }
    let k = n.k();
    let add = if corrected { 1.0 } else { 0.0 };
    let single = |s: usize| n.get(&InclusionPattern::new(k, 1 << s)?);

    if model.is_saturated() {
        let (mut num, mut den) = (1.0, 1.0);
        for (p, v) in n.patterns().zip(n.values()) {
            if p.is_odd() {
                num *= v;
            } else {
                den *= v + add;
            }
        }
        return Ok(ratio(num, den));
    }
    if k != 3 {
        return Ok(ClosedForm::NoClosedForm);
    }
    let pairs = model.pairs();
    match pairs.len() {
        // A and C independent given B (for the missing pair A,C)
        2 => {
            let missing = [(0, 1), (0, 2), (1, 2)]
                .into_iter()
                .find(|&(i, j)| !model.has_pair(i, j))
                .expect("two of three pairs present");
            let (i, j) = missing;
            let both = n.get(&InclusionPattern::new(3, 1 << i | 1 << j)?)?;
            Ok(ratio(single(i)? * single(j)?, both + add))
        }
        // the third source is independent of the dependent pair
        1 => {
            let (i, j) = pairs[0];
            let l = 3 - i - j;
            let only_l = single(l)?;
            let outside = n.sum_where(|p| !p.contains(l));
            let inside = n.sum_where(|p| p.contains(l)) - only_l;
            Ok(ratio(only_l * outside, inside + add))
        }
        _ => Ok(ClosedForm::NoClosedForm),
    }
}

/// Chapman's regularity condition for two sources, `n₁₊·n₊₁ / N > ln N`,
/// against a reference population size `N`.
pub fn regularity_check(n: &CountTable, reference_n: f64) -> Result<bool> {
    if n.k() != 2 {
        return Err(Error::Unsupported {
            estimator: "regularity check",
            k: n.k(),
            detail: " (two sources only)",
        });
    }
    if !(reference_n > 1.0) {
        return Err(Error::Argument(format!(
            "reference N must exceed 1, got {reference_n}"
        )));
    }
    Ok(n.marginal(0)? * n.marginal(1)? / reference_n > reference_n.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dse() -> CountTable {
        CountTable::new(2, vec![20.0, 30.0, 10.0]).unwrap()
    }

    fn table3() -> CountTable {
        CountTable::new(3, vec![10.0, 5.0, 4.0, 3.0, 20.0, 15.0, 8.0]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn dse_estimators() {
        let m = ModelSpec::independence(2).unwrap();
        let lp = estimate(&dse(), &m, Estimator::Lp).unwrap();
        assert!(close(lp.m000, 15.0, 1e-10) && close(lp.n_hat, 75.0, 1e-10));
        let chap = estimate(&dse(), &m, Estimator::ChapmanDse).unwrap();
        assert!(close(chap.n_hat, 51.0 * 31.0 / 21.0 - 1.0, 1e-10));
        assert!(close(chap.n_hat, 60.0 + 300.0 / 21.0, 1e-10));
        let bailey = estimate(&dse(), &m, Estimator::Bailey).unwrap();
        assert!(close(bailey.m000, 30.0 * 9.0 / 21.0, 1e-12));
        assert!(close(bailey.n_hat, 60.0 + 30.0 * 9.0 / 21.0, 1e-12));
        let m = ModelSpec::independence(2).unwrap();
        let fitted = fit_ml(&adjusted_counts(Estimator::Bailey, &dse(), &m).unwrap(), &m).unwrap();
        assert!(close(fitted.m000, bailey.m000, 1e-9));
        assert!(bailey.ci_low.is_none());
        assert!(chap.ci_low.unwrap() < chap.n_hat && chap.ci_high.unwrap() > chap.n_hat);
    }

    #[test]
    fn chapman_mse_saturated() {
        let m = ModelSpec::saturated(3).unwrap();
        let r = estimate(&table3(), &m, Estimator::ChapmanMse).unwrap();
        assert!(close(r.m000, 200.0, 1e-9));
        assert!(close(r.n_hat, 265.0, 1e-9));
        let ml = estimate(&table3(), &m, Estimator::Ml).unwrap();
        assert!(r.m000 <= ml.m000);
    }

    #[test]
    fn compatibility() {
        let sat = ModelSpec::saturated(3).unwrap();
        assert!(matches!(
            estimate(&table3(), &sat, Estimator::ChapmanDse),
            Err(Error::Unsupported { .. })
        ));
        let k4 = CountTable::new(4, vec![3.0; 15]).unwrap();
        assert!(estimate(
            &k4,
            &ModelSpec::saturated(4).unwrap(),
            Estimator::RivestLevesque
        )
        .is_err());
        let all = estimate_all(&k4, &ModelSpec::saturated(4).unwrap()).unwrap();
        assert_eq!(all.len(), 5);
    }

    #[test]
    fn failures_are_flagged() {
        let m = ModelSpec::independence(2).unwrap();
        let n = CountTable::new(2, vec![0.0, 12.0, 9.0]).unwrap();
        assert_eq!(
            estimate(&n, &m, Estimator::Lp).unwrap().status,
            Status::Failure
        );
        assert!(estimate(&n, &m, Estimator::ChapmanDse).unwrap().is_ok());
        let empty = CountTable::new(2, vec![0.0, 0.0, 9.0]).unwrap();
        assert_eq!(
            estimate(&empty, &m, Estimator::Lp).unwrap().status,
            Status::Failure
        );
        // (n1+1)(n2+1)/(n11+1) - 1 = 9: the list-A margin is empty but Chapman still estimates
        let chap = estimate(&empty, &m, Estimator::ChapmanDse).unwrap();
        assert!(chap.is_ok() && (chap.n_hat - 9.0).abs() < 1e-6);
    }

    #[test]
    fn closed_forms() {
        let one = ModelSpec::parse("k=3;pairs=AB").unwrap();
        let cf = closed_form_m000(&table3(), &one, true)
            .unwrap()
            .value()
            .unwrap();
        assert!(close(cf, 8.0 * 40.0 / 18.0, 1e-12));
        let cf = closed_form_m000(&table3(), &one, false)
            .unwrap()
            .value()
            .unwrap();
        assert!(close(cf, 8.0 * 40.0 / 17.0, 1e-12));
        let two = ModelSpec::parse("k=3;pairs=AB,BC").unwrap();
        assert_eq!(
            closed_form_m000(&table3(), &two, true).unwrap(),
            ClosedForm::Value(32.0)
        );
        let k4 = CountTable::new(4, vec![1.0; 15]).unwrap();
        let sat4 = ModelSpec::saturated(4).unwrap();
        assert_eq!(
            closed_form_m000(&k4, &sat4, false).unwrap(),
            ClosedForm::Value(1.0)
        );
        let ind = ModelSpec::independence(3).unwrap();
        assert_eq!(
            closed_form_m000(&table3(), &ind, false).unwrap(),
            ClosedForm::NoClosedForm
        );
        let zero = CountTable::new(3, vec![1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let sat = ModelSpec::saturated(3).unwrap();
        assert_eq!(
            closed_form_m000(&zero, &sat, false).unwrap(),
            ClosedForm::ZeroDenominator
        );
    }

    #[test]
    fn regularity() {
        let t = |a: f64, b: f64| CountTable::new(2, vec![0.0, a, b]).unwrap();
        assert!(!regularity_check(&t(15.0, 15.0), 100.0).unwrap());
        assert!(regularity_check(&t(50.0, 20.0), 100.0).unwrap());
        assert!(!regularity_check(&t(0.0, 0.0), 100.0).unwrap());
        assert!(regularity_check(&t(5.0, 5.0), 1.0).is_err());
        assert!(regularity_check(&table3(), 100.0).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("nope".parse::<Estimator>().is_err());
    }
}
