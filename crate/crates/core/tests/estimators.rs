use ltmle_core::dgp::{mc_truth, parse_dgp, simulate_panel, DgpSpec};
use ltmle_core::iptw::{iptw_ate, iptw_regime_mean};
use ltmle_core::learners::{Family, LearnerSet, TrainingTask};
use ltmle_core::ltmle::{ate_contrast, estimate_regimes, EstimationOptions};
use ltmle_core::panel::{CovariateStrategy, NodeRef, Regime};
use ltmle_core::superlearner::{CvPlan, MetaLearner, SuperLearnerFit};
use ltmle_core::Matrix;

fn sim(name: &str) -> DgpSpec {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(name);
    parse_dgp(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn regimes() -> [Regime; 2] {
    [Regime::static_rule("always", 1), Regime::static_rule("never", 0)]
}

fn glm_opts() -> EstimationOptions {
    let mut o = EstimationOptions::new(LearnerSet::Glm, CovariateStrategy::screen_learn());
    o.seed = 11;
    o
}

#[test]
fn sim1_truth_matches_structural_means() {
    // always: L_1 = 0, Y_1 = 50, L_2 = 1, Y_2 = 50 + 1 + 0 + 50; never: all zero
    let [j, k] = regimes();
    let t = mc_truth(&sim("sim1.dgp"), &j, &k, &NodeRef::new("Y", 2), 20_000, 5).unwrap();
    assert!((t.mean_j - 101.0).abs() < 0.05, "{}", t.mean_j);
    assert!(t.mean_k.abs() < 0.05, "{}", t.mean_k);
    assert!((t.psi - 101.0).abs() < 1e-9);
    assert!(t.mc_se < 1e-9);
}

#[test]
fn zero_variance_pipeline_recovers_contrast_exactly() {
    let data = simulate_panel(&sim("sim1.dgp").with_zero_variance(), 300, 2).unwrap();
    let r = estimate_regimes(&data, &NodeRef::new("Y", 2), &regimes(), &glm_opts(), None).unwrap();
    let ate = ate_contrast(&r[0], &r[1]).unwrap();
    assert!((ate.psi - 101.0).abs() < 1e-9, "{}", ate.psi);
    assert!(ate.se < 1e-9);
}

#[test]
fn outcome_shift_moves_means_not_contrast() {
    let data = simulate_panel(&sim("sim1.dgp"), 400, 3).unwrap();
    let y = NodeRef::new("Y", 2);
    let shifted = data.map_column(&y, |v| v + 37.5).unwrap();
    let a = estimate_regimes(&data, &y, &regimes(), &glm_opts(), None).unwrap();
    let b = estimate_regimes(&shifted, &y, &regimes(), &glm_opts(), None).unwrap();
    for (x, z) in a.iter().zip(&b) {
        assert!((z.psi - x.psi - 37.5).abs() < 1e-6, "{} vs {}", x.psi, z.psi);
    }
    let da = ate_contrast(&a[0], &a[1]).unwrap();
    let db = ate_contrast(&b[0], &b[1]).unwrap();
    assert!((da.psi - db.psi).abs() < 1e-6);
    assert!((da.se - db.se).abs() < 1e-6);
}

#[test]
fn iptw_contrast_is_consistent_on_sim1() {
    let data = simulate_panel(&sim("sim1.dgp"), 2000, 4).unwrap();
    let y = NodeRef::new("Y", 2);
    let [j, k] = regimes();
    let a = iptw_regime_mean(&data, &y, &j, &glm_opts(), None, true).unwrap();
    let b = iptw_regime_mean(&data, &y, &k, &glm_opts(), None, true).unwrap();
    let ate = iptw_ate(&a, &b).unwrap();
    assert!((ate.psi - 101.0).abs() < 4.0 * ate.se + 0.05, "{} ({})", ate.psi, ate.se);
}

#[test]
fn super_learner_cv_risk_does_not_exceed_any_candidate() {
    let n = 300;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 0.11).cos();
        rows.push(vec![a, b, a * b]);
        y.push(1.0 + 2.0 * a - b + 0.5 * a * a + 0.1 * (i as f64 * 1.7).sin());
    }
    let task = TrainingTask::unweighted(Matrix::from_rows(&rows), y, Family::Gaussian).unwrap();
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let plan = CvPlan::new(&ids, 10, 6).unwrap();
    for set in [LearnerSet::L1, LearnerSet::L2] {
        let fit = SuperLearnerFit::fit(&task, &set.specs(), &plan, MetaLearner::Simplex, 6).unwrap();
        let best = fit.cv.risks.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(fit.cv_risk <= best + 1e-10, "{set:?}: {} > {best}", fit.cv_risk);
        assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
