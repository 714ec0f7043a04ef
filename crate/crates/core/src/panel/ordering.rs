use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A variable observed at one time index, written `VAR_t` (e.g. `L8_1999`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub var: String,
    pub time: i32,
}

impl NodeRef {
    pub fn new(var: impl Into<String>, time: i32) -> Self {
        NodeRef {
            var: var.into(),
            time,
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.var, self.time)
    }
}

impl FromStr for NodeRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (var, time) = s
            .rsplit_once('_')
            .ok_or_else(|| Error::InvalidArgument(format!("`{s}` is not of the form VAR_t")))?;
        let time: i32 = time
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("`{s}` has a non-integer time index")))?;
        if var.is_empty() {
            return Err(Error::InvalidArgument(format!("`{s}` has an empty variable name")));
        }
        Ok(NodeRef::new(var, time))
    }
}

impl Serialize for NodeRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Covariate,
    Intervention,
    Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub node: NodeRef,
    pub role: Role,
    /// Optional block label for covariates (e.g. "A" / "B" blocks within a period).
    pub block: Option<String>,
}

impl NodeSpec {
    pub fn new(node: NodeRef, role: Role) -> Self {
        NodeSpec {
            node,
            role,
            block: None,
        }
    }
}

/// The time ordering O of all measured nodes.
///
/// Construction does not enforce the invariants so that malformed inputs can
/// be reported by [`crate::panel::validate_dataset`]; see [`NodeOrdering::violations`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOrdering {
    nodes: Vec<NodeSpec>,
    index: HashMap<NodeRef, usize>,
}

impl NodeOrdering {
    pub fn new(nodes: Vec<NodeSpec>) -> Self {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.node.clone()).or_insert(i);
        }
        NodeOrdering { nodes, index }
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, node: &NodeRef) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn node(&self, pos: usize) -> &NodeRef {
        &self.nodes[pos].node
    }

    pub fn role(&self, pos: usize) -> Role {
        self.nodes[pos].role
    }

    /// The terminal outcome node, if the ordering ends with one.
    pub fn outcome(&self) -> Option<&NodeRef> {
        self.nodes
            .last()
            .filter(|n| n.role == Role::Outcome)
            .map(|n| &n.node)
    }

    pub fn intervention_positions(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].role == Role::Intervention)
            .collect()
    }

    /// Names of variables with at least one intervention node.
    pub fn treatment_vars(&self) -> BTreeSet<&str> {
        self.nodes
            .iter()
            .filter(|n| n.role == Role::Intervention)
            .map(|n| n.node.var.as_str())
            .collect()
    }

    pub fn time_range(&self) -> Option<(i32, i32)> {
        let min = self.nodes.iter().map(|n| n.node.time).min()?;
        let max = self.nodes.iter().map(|n| n.node.time).max()?;
        Some((min, max))
    }

    /// Invariant violations: time order, duplicates, and the terminal outcome rule.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !seen.insert(&n.node) {
                out.push(format!("duplicate node {}", n.node));
            }
            if i > 0 && n.node.time < self.nodes[i - 1].node.time {
                out.push(format!(
                    "node {} precedes {} but has an earlier time",
                    self.nodes[i - 1].node, n.node
                ));
            }
        }
        let outcomes: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].role == Role::Outcome)
            .collect();
        match outcomes.as_slice() {
            [] => out.push("no outcome node".to_string()),
            [i] if *i + 1 == self.nodes.len() => {}
            [i] => out.push(format!(
                "outcome node {} is not last in the ordering",
                self.nodes[*i].node
            )),
            _ => out.push(format!("{} outcome nodes; exactly one expected", outcomes.len())),
        }
        out
    }

    /// Ordering restricted to nodes up to and including `outcome`, which
    /// becomes the terminal outcome node. Intervention nodes later than
    /// `outcome.time - lag` are demoted to covariates.
    pub fn for_outcome(&self, outcome: &NodeRef, lag: i32) -> Result<NodeOrdering> {
        let pos = self
            .position(outcome)
            .ok_or_else(|| Error::UnknownNode(outcome.to_string()))?;
        let last_intervention = outcome.time - lag;
        let nodes = self.nodes[..=pos]
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let role = if i == pos {
                    Role::Outcome
                } else {
                    match n.role {
                        Role::Intervention if n.node.time <= last_intervention => Role::Intervention,
                        _ => Role::Covariate,
                    }
                };
                NodeSpec {
                    node: n.node.clone(),
                    role,
                    block: n.block.clone(),
                }
            })
            .collect();
        Ok(NodeOrdering::new(nodes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim1_ordering() -> NodeOrdering {
        let mut nodes = Vec::new();
        for t in 1..=3 {
            nodes.push(NodeSpec::new(NodeRef::new("L", t), Role::Covariate));
            nodes.push(NodeSpec::new(NodeRef::new("A", t), Role::Intervention));
            let role = if t == 3 { Role::Outcome } else { Role::Covariate };
            nodes.push(NodeSpec::new(NodeRef::new("Y", t), role));
        }
        NodeOrdering::new(nodes)
    }

    #[test]
    fn node_ref_round_trips_through_text() {
        let n: NodeRef = "L8_1999".parse().unwrap();
        assert_eq!(n, NodeRef::new("L8", 1999));
        assert_eq!(n.to_string(), "L8_1999");
        let n: NodeRef = "my_var_3".parse().unwrap();
        assert_eq!(n.var, "my_var");
        assert!("noindex".parse::<NodeRef>().is_err());
    }

    #[test]
    fn well_formed_ordering_has_no_violations() {
        assert!(sim1_ordering().violations().is_empty());
    }

    #[test]
    fn restricting_to_an_earlier_outcome() {
        let o = sim1_ordering().for_outcome(&NodeRef::new("Y", 2), 0).unwrap();
        assert_eq!(o.len(), 6);
        assert_eq!(o.outcome(), Some(&NodeRef::new("Y", 2)));
        assert!(o.violations().is_empty());
        assert_eq!(o.intervention_positions(), vec![1, 4]);

        let lagged = sim1_ordering().for_outcome(&NodeRef::new("Y", 3), 2).unwrap();
        assert_eq!(lagged.intervention_positions(), vec![1]);
    }

    #[test]
    fn outcome_not_last_is_a_violation() {
        let mut nodes = sim1_ordering().nodes().to_vec();
        nodes.swap(7, 8);
        let v = NodeOrdering::new(nodes).violations();
        assert!(v.iter().any(|m| m.contains("not last")), "{v:?}");
    }
}
