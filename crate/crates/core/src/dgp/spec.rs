use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use super::ast::{Definition, Distribution, Expr};
use super::parse::{parse_source, DslError, DslErrorKind};
use crate::panel::{NodeOrdering, NodeRef, NodeSpec, Role};
use crate::stats::expit;

/// Expression with references resolved to node positions.
#[derive(Debug, Clone)]
pub(crate) enum Compiled {
    Const(f64),
    Node(usize),
    Add(Box<Compiled>, Box<Compiled>),
    Sub(Box<Compiled>, Box<Compiled>),
    Mul(Box<Compiled>, Box<Compiled>),
    Neg(Box<Compiled>),
    Expit(Box<Compiled>),
}

impl Compiled {
    pub(crate) fn eval(&self, values: &[f64]) -> f64 {
        match self {
            Compiled::Const(c) => *c,
            Compiled::Node(p) => values[*p],
            Compiled::Add(a, b) => a.eval(values) + b.eval(values),
            Compiled::Sub(a, b) => a.eval(values) - b.eval(values),
            Compiled::Mul(a, b) => a.eval(values) * b.eval(values),
            Compiled::Neg(a) => -a.eval(values),
            Compiled::Expit(a) => expit(a.eval(values)),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum NodeLaw {
    Normal { mean: Compiled, sd: f64 },
    Bernoulli { logit: Compiled },
}

/// A compiled structural-equation model.
///
/// Nodes are ordered by time and, within a period, by the order in which
/// their variables first appear in the source.  Variables named by a
/// `treatment` directive are intervention nodes; the outcome is the
/// declared `outcome` node or, failing that, the last node.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    treatment: Vec<String>,
    outcome: Option<NodeRef>,
    definitions: Vec<Definition>,
    ordering: NodeOrdering,
    laws: Vec<NodeLaw>,
}

impl PartialEq for DgpSpec {
    fn eq(&self, other: &Self) -> bool {
        self.treatment == other.treatment
            && self.outcome == other.outcome
            && self.definitions == other.definitions
    }
}

pub fn parse_dgp(text: &str) -> Result<DgpSpec, DslError> {
    text.parse()
}

impl FromStr for DgpSpec {
    type Err = DslError;

    fn from_str(text: &str) -> Result<Self, DslError> {
        let src = parse_source(text)?;
        let outcome = src.outcome.map(|(v, t)| NodeRef::new(v, t));
        let directive_pos = src.directive_positions.first().copied().unwrap_or((1, 1));
        DgpSpec::compile(src.treatment, outcome, src.definitions, &src.positions, directive_pos)
    }
}

impl DgpSpec {
    /// Builds a spec from definitions assembled in code.
    pub fn from_definitions(
        treatment: Vec<String>,
        outcome: Option<NodeRef>,
        definitions: Vec<Definition>,
    ) -> Result<Self, DslError> {
        DgpSpec::compile(treatment, outcome, definitions, &[], (0, 0))
    }

    fn compile(
        treatment: Vec<String>,
        outcome: Option<NodeRef>,
        definitions: Vec<Definition>,
        positions: &[(usize, usize)],
        directive_pos: (usize, usize),
    ) -> Result<Self, DslError> {
        let pos_of = |i: usize| positions.get(i).copied().unwrap_or((0, 0));
        if definitions.is_empty() {
            return Err(DslError::new(1, 1, DslErrorKind::Empty));
        }

        let mut rank: HashMap<&str, usize> = HashMap::new();
        for d in &definitions {
            let next = rank.len();
            rank.entry(d.var.as_str()).or_insert(next);
        }

        // (time, rank) -> definition index
        let mut slots: BTreeMap<(i32, usize), usize> = BTreeMap::new();
        for (i, d) in definitions.iter().enumerate() {
            for t in d.first..=d.last {
                if slots.insert((t, rank[d.var.as_str()]), i).is_some() {
                    let (l, c) = pos_of(i);
                    return Err(DslError::new(
                        l,
                        c,
                        DslErrorKind::DuplicateNode(NodeRef::new(d.var.clone(), t).to_string()),
                    ));
                }
            }
        }
        let keys: Vec<(i32, usize)> = slots.keys().copied().collect();
        let position: HashMap<(i32, usize), usize> =
            keys.iter().enumerate().map(|(p, k)| (*k, p)).collect();

        for v in &treatment {
            if !rank.contains_key(v.as_str()) {
                let (l, c) = directive_pos;
                return Err(DslError::new(l, c, DslErrorKind::UnknownTreatment(v.clone())));
            }
        }

        let mut nodes = Vec::with_capacity(keys.len());
        let mut laws = Vec::with_capacity(keys.len());
        for (p, &(t, r)) in keys.iter().enumerate() {
            let di = slots[&(t, r)];
            let d = &definitions[di];
            let node = NodeRef::new(d.var.clone(), t);
            let (l, c) = pos_of(di);
            let resolve = |var: &str, time: i32| -> Result<usize, DslError> {
                let reference = NodeRef::new(var, time).to_string();
                let forward = || {
                    DslError::new(
                        l,
                        c,
                        DslErrorKind::ForwardReference {
                            node: node.to_string(),
                            reference: reference.clone(),
                        },
                    )
                };
                match rank.get(var) {
                    Some(&vr) => match position.get(&(time, vr)) {
                        Some(&q) if q < p => Ok(q),
                        Some(_) => Err(forward()),
                        None if time > t || (time == t && vr >= r) => Err(forward()),
                        None => Err(DslError::new(
                            l,
                            c,
                            DslErrorKind::UndefinedReference {
                                node: node.to_string(),
                                reference: reference.clone(),
                            },
                        )),
                    },
                    None => Err(DslError::new(
                        l,
                        c,
                        DslErrorKind::UndefinedReference {
                            node: node.to_string(),
                            reference: reference.clone(),
                        },
                    )),
                }
            };
            let law = match &d.dist {
                Distribution::Normal { mean, variance } => {
                    if *variance < 0.0 {
                        return Err(DslError::new(l, c, DslErrorKind::NegativeVariance(*variance)));
                    }
                    NodeLaw::Normal {
                        mean: lower(mean, t, &resolve)?,
                        sd: variance.sqrt(),
                    }
                }
                Distribution::Bernoulli { logit } => NodeLaw::Bernoulli {
                    logit: lower(logit, t, &resolve)?,
                },
            };
            let is_treatment = treatment.contains(&d.var);
            if is_treatment && !matches!(law, NodeLaw::Bernoulli { .. }) {
                return Err(DslError::new(l, c, DslErrorKind::NonBinaryTreatment(node.to_string())));
            }
            let role = if is_treatment {
                Role::Intervention
            } else {
                Role::Covariate
            };
            nodes.push(NodeSpec::new(node, role));
            laws.push(law);
        }

        let out_pos = match &outcome {
            Some(o) => match rank.get(o.var.as_str()).and_then(|r| position.get(&(o.time, *r))) {
                Some(&p) => p,
                None => {
                    let (l, c) = directive_pos;
                    return Err(DslError::new(l, c, DslErrorKind::UnknownOutcome(o.to_string())));
                }
            },
            None => nodes.len() - 1,
        };
        let last = nodes.len() - 1;
        for p in [out_pos, last] {
            if nodes[p].role == Role::Intervention {
                let (l, c) = directive_pos;
                return Err(DslError::new(
                    l,
                    c,
                    DslErrorKind::Syntax(format!("{} is a treatment node and cannot end the model", nodes[p].node)),
                ));
            }
        }
        nodes[last].role = Role::Outcome;

        Ok(DgpSpec {
            treatment,
            outcome,
            definitions,
            ordering: NodeOrdering::new(nodes),
            laws,
        })
    }

    /// Every generated node in topological order; the final node carries the
    /// outcome role even when a different outcome is declared.
    pub fn ordering(&self) -> &NodeOrdering {
        &self.ordering
    }

    pub fn definitions(&self) -> &[Definition] {
        &self.definitions
    }

    pub fn treatment_vars(&self) -> &[String] {
        &self.treatment
    }

    /// The declared outcome node, or the last node.
    pub fn outcome(&self) -> NodeRef {
        self.outcome
            .clone()
            .unwrap_or_else(|| self.ordering.node(self.ordering.len() - 1).clone())
    }

    pub(crate) fn laws(&self) -> &[NodeLaw] {
        &self.laws
    }

    /// The same model with every Normal variance set to zero.
    pub fn with_zero_variance(&self) -> DgpSpec {
        let defs = self
            .definitions
            .iter()
            .map(|d| {
                let mut d = d.clone();
                if let Distribution::Normal { variance, .. } = &mut d.dist {
                    *variance = 0.0;
                }
                d
            })
            .collect();
        DgpSpec::from_definitions(self.treatment.clone(), self.outcome.clone(), defs)
            .expect("zeroing variances keeps a valid spec valid")
    }
}

fn lower(
    e: &Expr,
    t: i32,
    resolve: &dyn Fn(&str, i32) -> Result<usize, DslError>,
) -> Result<Compiled, DslError> {
    let b = |x: &Expr| lower(x, t, resolve).map(Box::new);
    Ok(match e {
        Expr::Const(c) => Compiled::Const(*c),
        Expr::Ref { var, index } => Compiled::Node(resolve(var, index.resolve(t))?),
        Expr::Add(x, y) => Compiled::Add(b(x)?, b(y)?),
        Expr::Sub(x, y) => Compiled::Sub(b(x)?, b(y)?),
        Expr::Mul(x, y) => Compiled::Mul(b(x)?, b(y)?),
        Expr::Neg(x) => Compiled::Neg(b(x)?),
        Expr::Expit(x) => Compiled::Expit(b(x)?),
    })
}

impl fmt::Display for DgpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.treatment.is_empty() {
            writeln!(f, "treatment {}", self.treatment.join(", "))?;
        }
        if let Some(o) = &self.outcome {
            writeln!(f, "outcome {}[{}]", o.var, o.time)?;
        }
        for d in &self.definitions {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}
