//! Structural-equation models: a small DSL, simulation, interventions and
//! Monte Carlo truth.
//!
//! # Grammar
//!
//! One statement per line; `#` starts a comment.
//!
//! ```text
//! treatment A            # binary intervention variable(s), comma separated
//! outcome Y[2]           # target node (defaults to the last node)
//! L[1] ~ N(0, 0.25)      # Normal(mean, variance) at a fixed time
//! L[t] ~ N(L[t-1] + A[t-1], 0.25) for t in 2..3
//! A[t] ~ B(expit(L[t] + 2*A[t-1] - L[t-1])) for t in 2..3
//! ```
//!
//! Expressions use numbers, node references `V[t]`, `V[t-k]`, `V[k]`, the
//! operators `+ - *`, unary minus, parentheses and `expit(...)`.  Within a
//! period, variables are ordered by their first definition in the file and
//! a node may only reference nodes that precede it.

mod ast;
mod parse;
mod simulate;
mod spec;

pub use ast::{Definition, Distribution, Expr, TimeIndex};
pub use parse::{DslError, DslErrorKind};
pub use simulate::{
    intervene_spec, mc_truth, simulate_panel, InterventionedSpec, McTruth, Simulate, MIN_MC_REPS,
};
pub use spec::{parse_dgp, DgpSpec};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{validate_dataset, NodeRef, Regime, Role};

    const SIM1: &str = include_str!("../../../../assets/sim1.dgp");
    const SIM2: &str = include_str!("../../../../assets/sim2.dgp");

    #[test]
    fn sim1_has_nine_nodes_in_period_order() {
        let spec = parse_dgp(SIM1).unwrap();
        let names: Vec<String> = spec.ordering().nodes().iter().map(|n| n.node.to_string()).collect();
        assert_eq!(names, ["L_1", "A_1", "Y_1", "L_2", "A_2", "Y_2", "L_3", "A_3", "Y_3"]);
        assert_eq!(spec.ordering().role(1), Role::Intervention);
        assert_eq!(spec.ordering().role(8), Role::Outcome);
        assert_eq!(spec.outcome(), NodeRef::new("Y", 2));
    }

    #[test]
    fn sim2_has_sixty_three_nodes() {
        let spec = parse_dgp(SIM2).unwrap();
        assert_eq!(spec.ordering().len(), 63);
        assert_eq!(spec.ordering().intervention_positions().len(), 6);
        assert_eq!(spec.outcome(), NodeRef::new("Y", 6));
    }

    #[test]
    fn printed_form_reparses_identically() {
        for src in [SIM1, SIM2] {
            let spec = parse_dgp(src).unwrap();
            let again = parse_dgp(&spec.to_string()).unwrap();
            assert_eq!(spec, again);
            assert_eq!(spec.to_string(), again.to_string());
        }
    }

    #[test]
    fn forward_and_undefined_references_are_rejected() {
        let e = parse_dgp("L[t] ~ N(L[t+1], 1) for t in 1..3").unwrap_err();
        assert!(matches!(e.kind, DslErrorKind::ForwardReference { .. }), "{e}");
        assert_eq!(e.line, 1);
        let e = parse_dgp("L[1] ~ N(0, 1)\nA[1] ~ B(expit(Y[t]))\nY[1] ~ N(A[t], 1)").unwrap_err();
        assert!(matches!(e.kind, DslErrorKind::ForwardReference { .. }), "{e}");
        assert_eq!(e.line, 2);
        let e = parse_dgp("L[t] ~ N(L[t-1], 1) for t in 1..3").unwrap_err();
        assert!(matches!(e.kind, DslErrorKind::UndefinedReference { .. }), "{e}");
        let e = parse_dgp("L[1] ~ N(Z[1], 1)").unwrap_err();
        assert!(matches!(e.kind, DslErrorKind::UndefinedReference { .. }), "{e}");
    }

    #[test]
    fn directive_errors() {
        let e = parse_dgp("treatment Z\nL[1] ~ N(0, 1)").unwrap_err();
        assert_eq!(e.kind, DslErrorKind::UnknownTreatment("Z".into()));
        let e = parse_dgp("treatment L\nL[1] ~ N(0, 1)\nY[1] ~ N(0, 1)").unwrap_err();
        assert!(matches!(e.kind, DslErrorKind::NonBinaryTreatment(_)));
        let e = parse_dgp("L[1] ~ N(0, 1)\nL[1] ~ N(1, 1)").unwrap_err();
        assert!(matches!(e.kind, DslErrorKind::DuplicateNode(_)));
        assert_eq!(e.line, 2);
    }

    #[test]
    fn simulation_is_reproducible_and_valid() {
        let spec = parse_dgp(SIM1).unwrap();
        let a = simulate_panel(&spec, 200, 11).unwrap();
        let b = simulate_panel(&spec, 200, 11).unwrap();
        let c = simulate_panel(&spec, 200, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(validate_dataset(&a).is_ok());
        for p in a.ordering().intervention_positions() {
            assert!(a.column_at(p).iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn static_intervention_fixes_every_treatment_node() {
        let spec = parse_dgp(SIM1).unwrap();
        let treat = Regime::static_rule("always", 1);
        let iv = intervene_spec(&spec, &treat).unwrap();
        assert_eq!(iv.intervene(&treat).unwrap(), iv);
        let d = iv.simulate(50, 3).unwrap();
        for p in d.ordering().intervention_positions() {
            assert!(d.column_at(p).iter().all(|&v| v == 1.0));
        }
        // non-intervention nodes before the first treatment are untouched
        let obs = simulate_panel(&spec, 50, 3).unwrap();
        assert_eq!(d.column_at(0), obs.column_at(0));
    }

    #[test]
    fn dynamic_rule_needs_a_defined_source() {
        let spec = parse_dgp(SIM1).unwrap();
        let r = Regime::median_window("dyn", "Q", 1, 0.0, 1.0);
        assert!(intervene_spec(&spec, &r).is_err());
    }

    #[test]
    fn mc_truth_requires_enough_replicates() {
        let spec = parse_dgp(SIM1).unwrap();
        let one = Regime::static_rule("one", 1);
        let zero = Regime::static_rule("zero", 0);
        assert!(mc_truth(&spec, &one, &zero, &NodeRef::new("Y", 2), 100, 1).is_err());
    }
}
