//! Acceptance suite. Runs as a plain binary (no libtest harness) and prints
//! one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use msekit::adjust::z_vector;
use msekit::approx::{compare_expansions, taylor_bias_identity_check};
use msekit::estimators::{closed_form_m000, ClosedForm};
use msekit::glm::fienberg_m000;
use msekit::scenario::builtin_scenario;
use msekit::{
    estimate, fit_ml, run_study, CountTable, Estimator, ModelSpec, RandomStream, SimSummary,
};
use rand::Rng;

// the seed of the documented `simulate --seed 1` example
const SEED: u64 = 1;

struct Check {
    lines: Vec<String>,
    ok: bool,
}

impl Check {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            ok: true,
        }
    }

    fn that(&mut self, ok: bool, what: String) {
        self.ok &= ok;
        self.lines
            .push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
    }

    fn near(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        self.that(
            (value - target).abs() <= tol,
            format!("{label} = {value:.4} (target {target} ± {tol})"),
        );
    }
}

fn stats_of(rows: &[SimSummary], e: Estimator) -> &SimSummary {
    rows.iter()
        .find(|r| r.estimator == e)
        .expect("estimator requested")
}

fn mean_of(rows: &[SimSummary], e: Estimator) -> f64 {
    stats_of(rows, e).stats.expect("estimator applies").mean
}

fn study(id: &str, fit: &str, estimators: &[Estimator], reps: usize) -> Vec<SimSummary> {
    let spec = builtin_scenario(id).unwrap();
    let model = match fit {
        "sat" => ModelSpec::saturated(spec.k).unwrap(),
        "true" => spec.generating_model().unwrap(),
        other => ModelSpec::parse_with_k(other, Some(spec.k)).unwrap(),
    };
    run_study(&spec, &model, estimators, reps, SEED).unwrap()
}

fn dse_scenario1(c: &mut Check) {
    let start = Instant::now();
    let rows = study("DSE1", "ind", &Estimator::dse_set(), 20_000);
    let elapsed = start.elapsed();
    c.near("LP mean", mean_of(&rows, Estimator::Lp), 105.3, 0.6);
    c.near("Bailey mean", mean_of(&rows, Estimator::Bailey), 96.1, 0.5);
    c.near(
        "EB mean",
        mean_of(&rows, Estimator::EvansBonett),
        105.2,
        0.6,
    );
    c.near("CFK mean", mean_of(&rows, Estimator::Cfk), 105.2, 0.6);
    c.near(
        "Chapman mean",
        mean_of(&rows, Estimator::ChapmanDse),
        100.1,
        0.5,
    );
    c.near(
        "RL mean",
        mean_of(&rows, Estimator::RivestLevesque),
        100.1,
        0.5,
    );
    c.that(
        elapsed < Duration::from_secs(60),
        format!("runtime {elapsed:.2?} < 60s"),
    );
}

fn dse_scenario7(c: &mut Check) {
    let rows = study("DSE7", "ind", &Estimator::dse_set(), 20_000);
    let chap = mean_of(&rows, Estimator::ChapmanDse);
    let lp = stats_of(&rows, Estimator::Lp);
    c.that(chap <= 95.0, format!("Chapman mean {chap:.2} <= 95"));
    let lp_mean = lp.stats.unwrap().mean;
    c.that(lp_mean >= 120.0, format!("LP mean {lp_mean:.2} >= 120"));
    c.that(
        lp.dagger(),
        format!("LP dagger set ({} failures replaced)", lp.failures),
    );
}

fn mse_saturated(c: &mut Check) {
    let rows = study("MSE1", "sat", &Estimator::mse_set(), 20_000);
    let chap = stats_of(&rows, Estimator::ChapmanMse).stats.unwrap();
    c.near("S1 Chapman MSE mean", chap.mean, 100.1, 0.5);
    c.near("S1 Chapman MSE SD", chap.sd, 23.6, 0.6);
    c.near(
        "S1 RL mean",
        mean_of(&rows, Estimator::RivestLevesque),
        103.3,
        0.7,
    );
    let ml = stats_of(&rows, Estimator::Ml);
    c.near("S1 ML mean", ml.stats.unwrap().mean, 112.7, 1.1);
    c.lines
        .push(format!("     S1 ML failures replaced: {}", ml.failures));

    let rows = study("MSE13", "sat", &Estimator::mse_set(), 20_000);
    c.near(
        "S13 Chapman MSE mean",
        mean_of(&rows, Estimator::ChapmanMse),
        20_004.1,
        14.0,
    );
    let rl = stats_of(&rows, Estimator::RivestLevesque);
    c.that(
        rl.stats.is_none(),
        "S13 RL reported n/a (four sources)".into(),
    );
}

fn mse_true_models(c: &mut Check) {
    let est = [Estimator::RivestLevesque, Estimator::ChapmanMse];
    let rows = study("MSE13", "ind", &est, 60_000);
    let chap = stats_of(&rows, Estimator::ChapmanMse).stats.unwrap();
    c.near("S13 IND Chapman MSE mean", chap.mean, 19_999.4, 1.5);
    c.lines
        .push(format!("     S13 IND Chapman MSE SD {:.1}", chap.sd));
    let rows = study("MSE7", "true", &est, 60_000);
    c.near(
        "S7 2PD Chapman MSE mean",
        mean_of(&rows, Estimator::ChapmanMse),
        99.9,
        0.2,
    );
    c.near(
        "S7 2PD RL mean",
        mean_of(&rows, Estimator::RivestLevesque),
        100.8,
        0.2,
    );
}

fn z_tables(c: &mut Check) {
    let t = 1.0 / 3.0;
    #[rustfmt::skip]
    let cases: [(&str, [f64; 7], [f64; 7]); 4] = [
        ("k=3;sat", [1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0], [0.0, -1.0, -1.0, -1.0, 0.0, 0.0, 0.0]),
        ("k=3;pairs=AB,BC", [0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]),
        ("k=3;pairs=AB", [-t, t, -t, -t, t, t, 1.0], [-t, 0.0, -t, -t, 0.0, 0.0, 0.0]),
        ("k=3;ind", [-0.5, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5], [-0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ];
    let mut worst = 0.0f64;
    let mut entries = 0;
    for (spec, z, zneg) in cases {
        let v = z_vector(&ModelSpec::parse(spec).unwrap()).unwrap();
        for (a, b) in v.z().iter().zip(z).chain(v.z_neg().iter().zip(zneg)) {
            worst = worst.max((a - b).abs());
            entries += 1;
        }
    }
    c.that(
        worst < 1e-9,
        format!("{entries} entries, max abs error {worst:.2e} < 1e-9"),
    );
}

fn random_table(rng: &mut RandomStream, k: usize) -> CountTable {
    let values = (0..(1 << k) - 1)
        .map(|_| {
            let base = rng.random_range(1..=300) as f64;
            // every other table carries fractional counts
            if rng.random_bool(0.5) {
                base + rng.random::<f64>()
            } else {
                base
            }
        })
        .collect();
    CountTable::new(k, values).unwrap()
}

fn closed_form_suite(c: &mut Check) {
    let mut models: Vec<ModelSpec> = ["k=3;sat", "k=3;pairs=AB,BC", "k=3;pairs=AB"]
        .iter()
        .map(|s| ModelSpec::parse(s).unwrap())
        .collect();
    models.extend((2..=5).map(|k| ModelSpec::saturated(k).unwrap()));
    let mut rng = RandomStream::new(SEED, "closed-forms", 0);
    for model in &models {
        for corrected in [false, true] {
            let (mut worst, mut failures) = (0.0f64, 0);
            for _ in 0..1000 {
                let n = random_table(&mut rng, model.k());
                let ClosedForm::Value(cf) = closed_form_m000(&n, model, corrected).unwrap() else {
                    failures += 1;
                    continue;
                };
                let est = if corrected {
                    Estimator::ChapmanMse
                } else {
                    Estimator::Ml
                };
                let r = estimate(&n, model, est).unwrap();
                if !r.is_ok() {
                    failures += 1;
                }
                worst = worst.max((r.m000 - cf).abs() / cf);
            }
            let kind = if corrected {
                "corrected"
            } else {
                "uncorrected"
            };
            c.that(
                worst < 1e-6 && failures == 0,
                format!("{model} {kind}: max rel error {worst:.2e}, failures {failures}"),
            );
        }
    }
}

fn dse_identities(c: &mut Check) {
    let m = ModelSpec::independence(2).unwrap();
    let mut rng = RandomStream::new(SEED, "dse-identities", 0);
    let (mut mismatches, mut worst_cfk) = (0, 0.0f64);
    for _ in 0..1000 {
        let n = random_table(&mut rng, 2);
        let chap = estimate(&n, &m, Estimator::ChapmanDse).unwrap().n_hat;
        let chap_mse = estimate(&n, &m, Estimator::ChapmanMse).unwrap().n_hat;
        let rl = estimate(&n, &m, Estimator::RivestLevesque).unwrap().n_hat;
        if chap != chap_mse || chap != rl {
            mismatches += 1;
        }
        let eb = estimate(&n, &m, Estimator::EvansBonett).unwrap().n_hat;
        let cfk = estimate(&n, &m, Estimator::Cfk).unwrap().n_hat;
        worst_cfk = worst_cfk.max((eb - cfk).abs() / eb);
    }
    c.that(
        mismatches == 0,
        format!("ChapMSE = Chapman = RL bit-for-bit on 1000 tables ({mismatches} mismatches)"),
    );
    c.that(
        worst_cfk < 1e-8,
        format!("CFK = EB, max rel difference {worst_cfk:.2e} < 1e-8"),
    );
}

fn inverse_expansions(c: &mut Check) {
    let r = compare_expansions(20.0, 1_000_000, SEED).unwrap();
    let (dt, di) = (r.taylor_delta(), r.inverse_factorial_delta());
    for j in 1..5 {
        c.that(
            di[j].abs() < dt[j].abs(),
            format!(
                "{} terms: |IF error| {:.2e} < |Taylor error| {:.2e}",
                j + 1,
                di[j].abs(),
                dt[j].abs()
            ),
        );
    }
    c.that(
        di[4].abs() < 2e-4,
        format!(
            "5-term IF {:.6} within 2e-4 of target",
            r.inverse_factorial[4]
        ),
    );
    c.near(
        "target E[1/n]",
        r.empirical_target,
        0.052805,
        3.0 * r.target_std_error,
    );
}

fn bias_identities(c: &mut Check) {
    for m in [5.0, 20.0, 100.0] {
        let r = taylor_bias_identity_check(m, 30.0, 20.0, 1_000_000, SEED).unwrap();
        c.that(
            r.shifted_inverse_z().abs() <= 3.0,
            format!(
                "m={m}: E[1/(n+1)] = {:.6} vs (1-e^-m)/m = {:.6} ({:+.2} SE)",
                r.shifted_inverse_mean.value,
                r.shifted_inverse_exact,
                r.shifted_inverse_z()
            ),
        );
    }
    let r = taylor_bias_identity_check(50.0, 30.0, 20.0, 1_000_000, SEED).unwrap();
    let ratio = r.lp_ratio();
    c.that(
        (ratio - 1.0).abs() < 0.01,
        format!("m=(50,30,20): LP mean / second-order value = {ratio:.5}"),
    );
}

/// Every hierarchical model on `k` sources (exhaustive for `k <= 4`).
fn all_models(k: usize) -> Vec<ModelSpec> {
    let full = (1u32 << k) - 1;
    let candidates: Vec<u32> = (0..=full)
        .filter(|t| t.count_ones() >= 2 && *t != full)
        .collect();
    (0u64..1 << candidates.len())
        .filter_map(|bits| {
            let terms = candidates
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, t)| *t);
            ModelSpec::new(k, terms).ok()
        })
        .collect()
}

fn intercept_identity(c: &mut Check) {
    let mut rng = RandomStream::new(SEED, "intercept", 0);
    let mut models: Vec<ModelSpec> = (2..=4).flat_map(all_models).collect();
    // five sources: all pairwise models with up to three pairs, plus the saturated one
    let pairs: Vec<(usize, usize)> = (0..5)
        .flat_map(|i| (i + 1..5).map(move |j| (i, j)))
        .collect();
    for bits in 0u32..1 << pairs.len() {
        if bits.count_ones() <= 3 {
            let chosen = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, p)| *p);
            models.push(ModelSpec::with_pairs(5, chosen).unwrap());
        }
    }
    models.push(ModelSpec::saturated(5).unwrap());
    let (mut worst, mut fits) = (0.0f64, 0);
    for model in &models {
        for _ in 0..5 {
            let n = random_table(&mut rng, model.k());
            let fit = fit_ml(&n, model).unwrap();
            let parity = fienberg_m000(&fit.fitted, model.k()).unwrap();
            worst = worst.max((fit.m000 - parity).abs() / parity);
            fits += 1;
        }
    }
    c.that(
        worst < 1e-6,
        format!(
            "{} models, {fits} fits: max rel |exp(λ0) − Πodd/Πeven| = {worst:.2e}",
            models.len()
        ),
    );
}

fn determinism(c: &mut Check) {
    let dir = std::env::temp_dir().join(format!("msekit-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let run = |threads: &str| {
        let path = dir.join(format!("sim-{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_mse-kit"))
            .args([
                "simulate",
                "--scenarios",
                "builtin:mse",
                "--scenario",
                "MSE1,MSE7,MSE13",
            ])
            .args([
                "--reps",
                "2000",
                "--seed",
                "7",
                "--threads",
                threads,
                "--output",
            ])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(&path).unwrap()
    };
    let one = run("1");
    let four = run("4");
    let _ = std::fs::remove_dir_all(&dir);
    c.that(
        !one.is_empty() && one == four,
        format!(
            "--threads 1 and --threads 4 outputs identical ({} bytes)",
            one.len()
        ),
    );
}

type Criterion = (&'static str, fn(&mut Check));

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("DSE scenario 1 means", dse_scenario1),
        ("DSE scenario 7 regularity violation", dse_scenario7),
        ("MSE saturated fits, scenarios 1 and 13", mse_saturated),
        (
            "MSE correctly specified fits, scenarios 13 and 7",
            mse_true_models,
        ),
        ("z and z_neg tables", z_tables),
        ("closed-form oracle suite", closed_form_suite),
        ("DSE estimator identities", dse_identities),
        ("Taylor vs inverse-factorial expansions", inverse_expansions),
        ("Poisson bias identities", bias_identities),
        ("intercept parity identity", intercept_identity),
        ("thread-count determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut check = Check::new();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut check)));
        if outcome.is_err() {
            check.that(false, "panicked".into());
        }
        let verdict = if check.ok { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} [{:.1?}] {name}",
            i + 1,
            start.elapsed()
        );
        for line in &check.lines {
            println!("    {line}");
        }
        failed += !check.ok as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
