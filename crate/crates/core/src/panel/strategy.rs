use std::fmt;

use serde::{Deserialize, Serialize};

use super::ordering::{NodeOrdering, NodeRef, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyKind {
    /// Declared baseline variables, the adjustment variable's history and the
    /// treatment history.
    #[serde(rename = "PlainDAG")]
    PlainDag,
    /// Every measured node preceding the model's target.
    #[serde(rename = "ScreenLearn")]
    ScreenLearn,
    /// Q-models: nodes from the two preceding periods; g-models: the current
    /// period plus past treatments.
    #[serde(rename = "EconDAG")]
    EconDag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateStrategy {
    pub kind: StrategyKind,
    /// Variables measured at the first period that enter PlainDAG models.
    #[serde(default)]
    pub baseline_vars: Vec<String>,
    /// Variable whose whole history enters PlainDAG models.
    #[serde(default)]
    pub adjustment_var: Option<String>,
}

impl CovariateStrategy {
    pub fn screen_learn() -> Self {
        CovariateStrategy {
            kind: StrategyKind::ScreenLearn,
            baseline_vars: Vec::new(),
            adjustment_var: None,
        }
    }
}

/// The model whose predictors are being selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTarget {
    /// Outcome regression anchored at the outcome variable's node at `time`.
    Q { time: i32 },
    /// Treatment model for the intervention node at `time`.
    G { time: i32 },
}

impl fmt::Display for ModelTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelTarget::Q { time } => write!(f, "Q at {time}"),
            ModelTarget::G { time } => write!(f, "g at {time}"),
        }
    }
}

/// Ordering position of the node a model predicts.
pub(crate) fn anchor_position(ordering: &NodeOrdering, target: ModelTarget) -> Result<usize> {
    match target {
        ModelTarget::Q { time } => {
            let outcome = ordering
                .outcome()
                .ok_or_else(|| Error::InvalidDataset("ordering has no terminal outcome".into()))?;
            let node = NodeRef::new(outcome.var.clone(), time);
            ordering.position(&node).ok_or_else(|| Error::UnknownNode(node.to_string()))
        }
        ModelTarget::G { time } => (0..ordering.len())
            .find(|&p| ordering.role(p) == Role::Intervention && ordering.node(p).time == time)
            .ok_or_else(|| Error::UnknownNode(format!("intervention node at time {time}"))),
    }
}

/// Predictor nodes for `target` under `strategy`, in ordering order.
///
/// Only nodes strictly preceding the target node are eligible.
pub fn select_covariates(
    strategy: &CovariateStrategy,
    ordering: &NodeOrdering,
    target: ModelTarget,
) -> Result<Vec<NodeRef>> {
    let anchor = anchor_position(ordering, target)?;
    let treatment_vars = ordering.treatment_vars();
    let is_treatment = |n: &NodeRef| treatment_vars.contains(n.var.as_str());
    let (first_time, _) = ordering.time_range().unwrap_or((0, 0));
    let first_intervention = ordering.intervention_positions().first().copied().unwrap_or(anchor);

    let keep = |pos: usize| -> bool {
        let node = ordering.node(pos);
        match strategy.kind {
            StrategyKind::ScreenLearn => true,
            StrategyKind::PlainDag => {
                let baseline = node.time == first_time
                    && pos < first_intervention
                    && strategy.baseline_vars.contains(&node.var);
                let adjustment = strategy.adjustment_var.as_deref() == Some(node.var.as_str());
                baseline || adjustment || is_treatment(node)
            }
            StrategyKind::EconDag => match target {
                ModelTarget::Q { time } => node.time == time - 1 || node.time == time - 2,
                ModelTarget::G { time } => node.time == time || (is_treatment(node) && node.time < time),
            },
        }
    };
    let selected: Vec<NodeRef> = (0..anchor)
        .filter(|&p| keep(p))
        .map(|p| ordering.node(p).clone())
        .collect();
    if selected.is_empty() {
        return Err(Error::NoAdmissiblePredictors(target.to_string()));
    }
    Ok(selected)
}
