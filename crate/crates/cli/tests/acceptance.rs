//! Acceptance criteria, one test per criterion. Each prints a single
//! `PASS`/`FAIL` line.
//!
//! The Simulation 2 studies take hours on one core and are ignored by
//! default; run them with `cargo test --release --test acceptance --
//! --ignored`. `LTMLE_SIM2_REPS` sets their replication count (default 250).
//!
//! Criteria whose stated target contradicts the derivable truth are marked
//! as expected failures: they still print `FAIL`, and the test only fails if
//! such a criterion unexpectedly passes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ltmle_core::dgp::{parse_dgp, simulate_panel, DgpSpec};
use ltmle_core::iptw::weighted_mean_ic;
use ltmle_core::learners::LearnerSet;
use ltmle_core::ltmle::{ate_contrast, estimate_regimes, fluctuate_step, EstimationOptions};
use ltmle_core::panel::{adherence_indicators, CovariateStrategy, NodeRef, Regime};
use ltmle_core::stats::{mean, sd};
use ltmle_core::superlearner::solve_simplex_weights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The sim1 targets state 102 for the always-versus-never contrast of Y_2;
/// the structural equations give 50 + (0 + 1) + 0 + 50 = 101.
const SIM1_STATED_TRUTH: f64 = 102.0;
const SIM1_DEFECT: &str = "stated sim1 truth 102 contradicts the structural equations (101)";

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn ltmle(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ltmle")).args(args).output().expect("spawn ltmle");
    assert!(
        out.status.success(),
        "ltmle {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn out_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ltmle-acceptance-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// Prints the verdict line and fails the test unless the outcome matches
/// expectations.
fn verdict(criterion: &str, pass: bool, details: &str, expected_failure: Option<&str>) {
    let tag = if pass { "PASS" } else { "FAIL" };
    match expected_failure {
        None => println!("{tag} criterion {criterion}: {details}"),
        Some(why) => println!("{tag} criterion {criterion}: {details} [expected failure: {why}]"),
    }
    match expected_failure {
        None => assert!(pass, "criterion {criterion} failed: {details}"),
        Some(_) => assert!(!pass, "criterion {criterion} was expected to fail but passed: {details}"),
    }
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Mean of Y_6 under a static regime, by propagating the structural means.
fn sim2_mean(a: f64) -> f64 {
    let (mut l7, mut l9, mut l10) = (0.0, 0.0, 0.0);
    for t in 1..=5 {
        let l1 = if t == 1 { 0.0 } else { l7 };
        let y = if t == 1 { a + l1 } else { a + l1 + l9 + 0.05 * l10 };
        let l2 = a + l1;
        let l3 = y + l2;
        let l5 = if t == 1 { y } else { y + l10 };
        let l8 = l5;
        l7 = l2;
        l9 = l3;
        l10 = l8 + l9;
    }
    a + l7 + l9 + 0.05 * l10
}

#[test]
fn criterion_01_truth_oracles() {
    let start = Instant::now();
    let d1 = out_dir("truth1");
    ltmle(&["truth", "--config", assets().join("truth_sim1.cfg").to_str().unwrap(), "--out", d1.to_str().unwrap()]);
    let sim1_secs = start.elapsed().as_secs_f64();
    let d2 = out_dir("truth2");
    ltmle(&["truth", "--config", assets().join("truth_sim2.cfg").to_str().unwrap(), "--out", d2.to_str().unwrap()]);
    let t1 = json(&d1.join("truth.json"));
    let t2 = json(&d2.join("truth.json"));
    let (p1, s1) = (t1["psi_true"].as_f64().unwrap(), t1["mc_se"].as_f64().unwrap());
    let (p2, s2) = (t2["psi_true"].as_f64().unwrap(), t2["mc_se"].as_f64().unwrap());
    let oracle2 = sim2_mean(1.0) - sim2_mean(0.0);
    // paired draws make both contrasts deterministic, so allow for summation rounding
    let within = |p: f64, target: f64, se: f64| (p - target).abs() <= 3.0 * se + 1e-9 * target.abs();
    let ok1 = within(p1, SIM1_STATED_TRUTH, s1) && sim1_secs < 60.0;
    let ok2 = within(p2, oracle2, s2);
    verdict(
        "1",
        ok1 && ok2,
        &format!(
            "sim1 {p1:.6} (se {s1:.2e}, target {SIM1_STATED_TRUTH}, {sim1_secs:.1}s); sim2 {p2:.6} (se {s2:.2e}, recursion {oracle2:.6})"
        ),
        Some(SIM1_DEFECT),
    );
    assert!(ok2 && within(p1, 101.0, s1), "the truth oracles disagree with the recursions");
}

struct Study {
    metrics: Vec<HashMap<String, String>>,
    elapsed: Duration,
}

impl Study {
    fn row(&self, estimator: &str, set: &str, design: &str) -> (f64, f64) {
        let r = self
            .metrics
            .iter()
            .find(|m| m["estimator"] == estimator && m["learner_set"] == set && m["design"] == design)
            .unwrap_or_else(|| panic!("no metrics row for {estimator}/{set}/{design}"));
        assert_eq!(r["failures"], "0", "{estimator}/{set}/{design} had failed replications");
        (r["abs_bias"].parse().unwrap(), r["coverage"].parse().unwrap())
    }
}

fn run_study(config: &str, reps: Option<usize>) -> Study {
    let d = out_dir(config);
    let start = Instant::now();
    let cfg = assets().join(config);
    let mut args = vec!["replicate", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()];
    let reps_s = reps.map(|r| r.to_string());
    if let Some(r) = &reps_s {
        args.extend(["--reps", r]);
    }
    ltmle(&args);
    let elapsed = start.elapsed();
    let mut rdr = csv::Reader::from_path(d.join("metrics.csv")).unwrap();
    let metrics = rdr.deserialize().map(|r| r.unwrap()).collect();
    Study { metrics, elapsed }
}

fn sim1_study() -> &'static Study {
    static S: OnceLock<Study> = OnceLock::new();
    S.get_or_init(|| run_study("study_sim1_glm.cfg", None))
}

fn sim2_study() -> &'static Study {
    static S: OnceLock<Study> = OnceLock::new();
    S.get_or_init(|| {
        let reps = std::env::var("LTMLE_SIM2_REPS").ok().map_or(250, |v| v.parse().unwrap());
        run_study("study_sim2.cfg", Some(reps))
    })
}

#[test]
fn criterion_02_sim1_glm_both_correct() {
    let s = sim1_study();
    let (bias, cov) = s.row("ltmle", "GLM", "both_correct");
    let secs = s.elapsed.as_secs_f64();
    verdict(
        "2",
        bias < 0.15 && cov >= 0.95 && secs < 600.0,
        &format!("abs bias {bias:.4} (< 0.15), coverage {cov:.3} (>= 0.95), study runtime {secs:.0}s (< 600s)"),
        None,
    );
}

#[test]
fn criterion_03_sim1_q_misspecified() {
    let (bias, cov) = sim1_study().row("ltmle", "GLM", "q_incorrect");
    verdict("3", bias < 0.3, &format!("abs bias {bias:.4} (< 0.3), coverage {cov:.3}"), None);
}

#[test]
#[ignore = "Simulation 2 study; hours on one core"]
fn criterion_04_sim2_bias_ordering() {
    let s = sim2_study();
    let b = |set| s.row("ltmle", set, "both_correct").0;
    let (l1, l2, l3) = (b("L1"), b("L2"), b("L3"));
    verdict(
        "4",
        l1 > l2 && l1 > l3 && (0.5..=2.0).contains(&l1) && l2 < 0.5 && l3 < 0.5,
        &format!("abs bias L1 {l1:.3} (in [0.5, 2]), L2 {l2:.3} (< 0.5), L3 {l3:.3} (< 0.5)"),
        None,
    );
}

#[test]
#[ignore = "Simulation 2 study; hours on one core"]
fn criterion_05_sim2_q_incorrect_worse() {
    let s = sim2_study();
    let mut ok = true;
    let mut parts = Vec::new();
    for set in ["L1", "L2", "L3"] {
        let good = s.row("ltmle", set, "both_correct").0;
        let bad = s.row("ltmle", set, "q_incorrect").0;
        ok &= bad > good;
        parts.push(format!("{set} {bad:.3} > {good:.3}"));
    }
    verdict("5", ok, &parts.join(", "), None);
}

#[test]
#[ignore = "Simulation 2 study; hours on one core"]
fn criterion_06_sim2_coverage() {
    let s = sim2_study();
    let c2 = s.row("ltmle", "L2", "both_correct").1;
    let c3 = s.row("ltmle", "L3", "both_correct").1;
    let band = 0.90..=0.99;
    verdict(
        "6",
        band.contains(&c2) && band.contains(&c3),
        &format!("coverage L2 {c2:.3}, L3 {c3:.3} (in [0.90, 0.99])"),
        None,
    );
}

#[test]
fn criterion_07a_iptw_sim1() {
    let (bias, cov) = sim1_study().row("iptw", "GLM", "g_only");
    verdict(
        "7 (Simulation 1)",
        bias < 0.1 && cov >= 0.95,
        &format!("IPTW GLM abs bias {bias:.4} (< 0.1), coverage {cov:.3} (>= 0.95)"),
        None,
    );
}

#[test]
#[ignore = "Simulation 2 study; hours on one core"]
fn criterion_07b_iptw_sim2() {
    let s = sim2_study();
    let ltmle_l2 = s.row("ltmle", "L2", "both_correct").0;
    let mut ok = true;
    let mut parts = Vec::new();
    for set in ["L1", "L2", "L3"] {
        let (bias, cov) = s.row("iptw", set, "g_only");
        ok &= bias >= 3.0 * ltmle_l2 && cov < 0.85;
        parts.push(format!("{set} bias {bias:.3} cov {cov:.3}"));
    }
    verdict(
        "7 (Simulation 2)",
        ok,
        &format!("IPTW {} vs 3 x LTMLE-L2 bias {:.3}; coverage < 0.85", parts.join(", "), 3.0 * ltmle_l2),
        None,
    );
}

fn sim_spec(name: &str) -> DgpSpec {
    parse_dgp(&std::fs::read_to_string(assets().join(name)).unwrap()).unwrap()
}

#[test]
fn criterion_08_invariant_suites() {
    let start = Instant::now();
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // simplex weights against a grid search over three candidates
    let mut simplex_ok = true;
    for _ in 0..20 {
        let n = 60;
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let z: Vec<Vec<f64>> = (0..3)
            .map(|_| y.iter().map(|v| v + 0.3 * (rng.random::<f64>() - 0.5)).collect())
            .collect();
        let w = vec![1.0; n];
        let cols: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        let a = solve_simplex_weights(&cols, &y, &w).unwrap();
        let risk = |a: &[f64]| -> f64 {
            (0..n)
                .map(|i| (y[i] - (0..3).map(|m| a[m] * z[m][i]).sum::<f64>()).powi(2))
                .sum::<f64>()
                / n as f64
        };
        let mut best = f64::INFINITY;
        for i in 0..=100 {
            for j in 0..=(100 - i) {
                best = best.min(risk(&[i as f64 / 100.0, j as f64 / 100.0, (100 - i - j) as f64 / 100.0]));
            }
        }
        simplex_ok &= a.iter().all(|&v| v >= 0.0)
            && (a.iter().sum::<f64>() - 1.0).abs() < 1e-12
            && risk(&a) <= best + 1e-12;
    }
    checks.push(("simplex weights", simplex_ok));

    // fluctuation score equation on random inputs
    let mut score_ok = true;
    for _ in 0..50 {
        let n = 200;
        let t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let h: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.5..20.0) }).collect();
        let f = fluctuate_step(&t, &q, &h);
        let s: f64 = (0..n).map(|i| h[i] * (t[i] - f.updated[i])).sum();
        score_ok &= s.abs() < 1e-8;
    }

    // influence curve centring and per-step scores on seeded fits
    let sim1 = sim_spec("sim1.dgp");
    let mut opts = EstimationOptions::new(LearnerSet::Glm, CovariateStrategy::screen_learn());
    opts.seed = 3;
    let regimes = [Regime::static_rule("always", 1), Regime::static_rule("never", 0)];
    let mut ic_ok = true;
    for seed in 0..5 {
        let data = simulate_panel(&sim1, 500, seed).unwrap();
        for r in estimate_regimes(&data, &NodeRef::new("Y", 2), &regimes, &opts, None).unwrap() {
            score_ok &= r.steps.iter().all(|s| s.score.abs() < 1e-8);
            ic_ok &= mean(&r.ic).abs() <= 1e-8 * sd(&r.ic).max(f64::MIN_POSITIVE);
        }
    }
    checks.push(("fluctuation score equation", score_ok));
    checks.push(("mean influence curve", ic_ok));

    // normalized weighting stays within the outcome range
    let mut hajek_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mut h: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..100.0) }).collect();
        h[0] = 1.0;
        let (psi, _) = weighted_mean_ic(&h, &y, true).unwrap();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hajek_ok &= psi >= lo - 1e-12 && psi <= hi + 1e-12;
    }
    checks.push(("normalized weighting bounded", hajek_ok));

    // adherence never resumes once broken
    let data = simulate_panel(&sim1, 300, 9).unwrap();
    let mut mono_ok = true;
    for r in &regimes {
        for seq in adherence_indicators(&data, r).unwrap() {
            mono_ok &= seq.windows(2).all(|w| w[1] <= w[0]);
        }
    }
    checks.push(("adherence monotone", mono_ok));

    // seven-year median rule with bounds 0 and 5
    let rule = Regime::median_window("d2", "Y", 7, 0.0, 5.0);
    let at = |vals: [f64; 7]| rule.prescribe(2000, |t| (1993..2000).contains(&t).then(|| vals[(t - 1993) as usize]));
    let median_ok = at([1.0, 2.0, 3.0, 4.0, 2.0, 3.0, 2.5]) == Ok(0)
        && at([6.0, 7.0, 5.0, 1.0, 2.0, 8.0, 9.0]) == Ok(1)
        && at([-1.0, -2.0, 0.0, 3.0, -0.5, 4.0, -3.0]) == Ok(1)
        && at([0.5, 5.0, 5.0, 5.0, 1.0, 7.0, 2.0]) == Ok(1)
        && rule.prescribe(2000, |t| (t >= 1995).then_some(1.0)) == Err(5);
    checks.push(("median rule", median_ok));

    // canonical text of the DGPs parses back to the same model
    let round_trip = ["sim1.dgp", "sim2.dgp"].iter().all(|n| {
        let s = sim_spec(n);
        parse_dgp(&s.to_string()).unwrap() == s
    });
    checks.push(("DGP round trip", round_trip));

    let zero = simulate_panel(&sim1.with_zero_variance(), 400, 1).unwrap();
    let r = estimate_regimes(&zero, &NodeRef::new("Y", 2), &regimes, &opts, None).unwrap();
    let ate = ate_contrast(&r[0], &r[1]).unwrap();
    let exact = (ate.psi - SIM1_STATED_TRUTH).abs() < 1e-9;
    checks.push(("zero-variance estimate equals 102", exact));

    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let structural_ok = checks.iter().filter(|c| !c.0.starts_with("zero-variance")).all(|c| c.1);
    verdict(
        "8",
        failed.is_empty() && secs < 120.0,
        &format!(
            "{} of {} checks hold in {secs:.1}s; failing: {:?}; zero-variance contrast {:.9}",
            checks.len() - failed.len(),
            checks.len(),
            failed,
            ate.psi
        ),
        Some(SIM1_DEFECT),
    );
    assert!(structural_ok && (ate.psi - 101.0).abs() < 1e-9, "only the stated sim1 truth may fail");
}

#[test]
fn criterion_09_synthetic_panel_estimate() {
    let d = out_dir("cbi");
    ltmle(&["estimate", "--config", assets().join("estimate_cbi.cfg").to_str().unwrap(), "--out", d.to_str().unwrap()]);
    let files = ["estimate.json", "diagnostics.csv", "weights.csv"];
    let all_files = files.iter().all(|f| d.join(f).is_file());
    let table = std::fs::read_to_string(d.join("diagnostics.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    let labels: Vec<&str> = lines.iter().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let shape = lines.len() == 4
        && labels == ["Trunc. (%)", "CC Mean", "CC Max."]
        && lines.iter().all(|l| l.split(',').count() == lines[0].split(',').count());
    let no_trunc = lines[1].split(',').skip(1).all(|v| v == "0.000");
    let est = json(&d.join("estimate.json"));
    let n = est["n"].as_u64().unwrap();
    verdict(
        "9",
        all_files && shape && no_trunc && n == 60,
        &format!("files {all_files}, table shape {shape}, zero truncation {no_trunc}, units {n}; table {:?}", lines),
        None,
    );
}
