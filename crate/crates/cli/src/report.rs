//! Output formatting for every subcommand.

use std::fmt::Write;

use msekit::adjust::{snap_rational, snapped};
use msekit::{ApproxReport, EstimateResult, Estimator, SimSummary, ZVector};
use serde_json::json;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

pub fn estimates_text(results: &[EstimateResult]) -> String {
    let mut out = String::new();
    if let Some(first) = results.first() {
        let _ = writeln!(
            out,
            "model {}  observed n={}",
            first.model, first.n_observed
        );
    }
    for r in results {
        let ci = match (r.ci_low, r.ci_high) {
            (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
            _ => "n/a".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<12} N_hat={:.4}  m000={:.4}  95% CI={ci}  status={}",
            r.estimator.name(),
            r.n_hat,
            r.m000,
            r.status.as_str()
        );
    }
    out
}

pub fn estimates_csv(results: &[EstimateResult]) -> String {
    let mut out = String::from("estimator,model,n_observed,m000,n_hat,ci_low,ci_high,status\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},\"{}\",{},{},{},{},{},{}",
            r.estimator.name(),
            r.model,
            r.n_observed,
            r.m000,
            r.n_hat,
            opt(r.ci_low),
            opt(r.ci_high),
            r.status.as_str()
        );
    }
    out
}

fn finite(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

pub fn estimates_json(results: &[EstimateResult]) -> String {
    let rows: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "estimator": r.estimator.name(),
                "model": r.model.to_string(),
                "n_observed": r.n_observed,
                "m000": finite(r.m000),
                "n_hat": finite(r.n_hat),
                "ci_low": r.ci_low,
                "ci_high": r.ci_high,
                "status": r.status.as_str(),
            })
        })
        .collect();
    serde_json::to_string_pretty(&rows).unwrap_or_default() + "\n"
}

pub fn study_csv(studies: &[Vec<SimSummary>]) -> String {
    let mut out =
        String::from("scenario,estimator,mean,sd,rmse,t,p,stars,dagger,fit,reps,n_bar,failures\n");
    for s in studies.iter().flatten() {
        let stats = match &s.stats {
            Some(st) => format!(
                "{},{},{},{},{},{}",
                st.mean, st.sd, st.rmse, st.t_stat, st.p_value, st.stars
            ),
            None => ["n/a"; 6].join(","),
        };
        let _ = writeln!(
            out,
            "{},{},{stats},{},\"{}\",{},{},{}",
            s.scenario,
            s.estimator.name(),
            s.dagger() as u8,
            s.fitted_model,
            s.reps,
            s.mean_observed,
            s.failures
        );
    }
    out
}

pub fn study_json(studies: &[Vec<SimSummary>]) -> String {
    serde_json::to_string_pretty(&studies.iter().flatten().collect::<Vec<_>>()).unwrap_or_default()
        + "\n"
}

fn estimator_heading(e: Estimator) -> &'static str {
    match e {
        Estimator::Ml => "ML",
        Estimator::Lp => "LP",
        Estimator::Bailey => "Bailey",
        Estimator::EvansBonett => "EB",
        Estimator::Cfk => "CFK",
        Estimator::RivestLevesque => "RL",
        Estimator::ChapmanDse => "Chapman",
        Estimator::ChapmanMse => "Chapman MSE",
    }
}

fn markdown_block(
    studies: &[Vec<SimSummary>],
    title: &str,
    cell: impl Fn(&SimSummary) -> String,
) -> String {
    let Some(first) = studies.first() else {
        return String::new();
    };
    let mut out = format!("### {title}\n\n| S | N | fit | n̄ |");
    let mut rule = String::from("|---|---:|---|---:|");
    for s in first {
        let _ = write!(out, " {} |", estimator_heading(s.estimator));
        rule.push_str("---:|");
    }
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for study in studies {
        let Some(head) = study.first() else { continue };
        let _ = write!(
            out,
            "| {} | {} | {} | {:.1} |",
            head.scenario,
            head.population,
            head.fitted_model.short_name(),
            head.mean_observed
        );
        for s in study {
            let _ = write!(out, " {} |", cell(s));
        }
        out.push('\n');
    }
    out
}

/// Means with significance stars and a dagger for replaced failures,
/// followed by SD and RMSE tables.
pub fn study_markdown(studies: &[Vec<SimSummary>]) -> String {
    let reps = studies
        .first()
        .and_then(|s| s.first())
        .map_or(0, |s| s.reps);
    let mean = markdown_block(
        studies,
        &format!("Mean estimate ({reps} replications)"),
        |s| match &s.stats {
            Some(st) => format!(
                "{:.1}{}{}",
                st.mean,
                "*".repeat(st.stars as usize),
                if s.dagger() { "†" } else { "" }
            ),
            None => "n/a".into(),
        },
    );
    let sd = markdown_block(studies, "SD", |s| {
        s.stats.map_or("n/a".into(), |st| format!("{:.1}", st.sd))
    });
    let rmse = markdown_block(studies, "RMSE", |s| {
        s.stats.map_or("n/a".into(), |st| format!("{:.1}", st.rmse))
    });
    format!(
        "{mean}\n{sd}\n{rmse}\n* p < 0.05, ** p < 0.01, *** p < 0.001 (two-sided t-test against N). \
         † failed replications replaced by the largest Chapman estimate of the study.\n"
    )
}

fn fraction(x: f64) -> String {
    match snap_rational(x, 1000) {
        Some((0, _)) => "0".into(),
        Some((p, 1)) => p.to_string(),
        Some((p, q)) => format!("{p}/{q}"),
        None => x.to_string(),
    }
}

pub fn zvector_text(z: &ZVector) -> String {
    let pats = msekit::canonical_patterns(z.model().k()).unwrap_or_default();
    let mut out = format!(
        "model {}\n{:<8}{:>10}{:>10}\n",
        z.model(),
        "pattern",
        "z",
        "z_neg"
    );
    for (p, (a, b)) in pats.iter().zip(z.z().iter().zip(z.z_neg())) {
        let _ = writeln!(
            out,
            "{:<8}{:>10}{:>10}",
            p.to_string(),
            fraction(*a),
            fraction(*b)
        );
    }
    let list = |v: &[f64]| {
        v.iter()
            .map(|x| snapped(*x).to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(out, "z = ({})", list(z.z()));
    let _ = writeln!(out, "z_neg = ({})", list(z.z_neg()));
    out
}

pub fn zvector_csv(z: &ZVector) -> String {
    let pats = msekit::canonical_patterns(z.model().k()).unwrap_or_default();
    let mut out = String::from("pattern,z,z_neg\n");
    for (p, (a, b)) in pats.iter().zip(z.z().iter().zip(z.z_neg())) {
        let _ = writeln!(out, "{p},{},{}", snapped(*a), snapped(*b));
    }
    out
}

pub fn zvector_json(z: &ZVector) -> String {
    let pats: Vec<String> = msekit::canonical_patterns(z.model().k())
        .unwrap_or_default()
        .iter()
        .map(ToString::to_string)
        .collect();
    let snap = |v: &[f64]| v.iter().map(|x| snapped(*x)).collect::<Vec<_>>();
    let v = json!({
        "model": z.model().to_string(),
        "patterns": pats,
        "z": snap(z.z()),
        "z_neg": snap(z.z_neg()),
    });
    serde_json::to_string_pretty(&v).unwrap_or_default() + "\n"
}

pub fn approx_csv(r: &ApproxReport) -> String {
    let mut out = format!(
        "# m={} draws={} zero_draws={} sample_mean={} target={}\n",
        r.m, r.draws, r.zero_draws, r.sample_mean, r.empirical_target
    );
    out.push_str("terms,taylor,delta_taylor,inverse_factorial,delta_inverse_factorial\n");
    let (dt, di) = (r.taylor_delta(), r.inverse_factorial_delta());
    for j in 0..r.taylor.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            j + 1,
            r.taylor[j],
            dt[j],
            r.inverse_factorial[j],
            di[j]
        );
    }
    out
}
