use std::fmt;

/// Time index of a node reference inside a definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeIndex {
    /// `t + k` relative to the node being defined.
    Relative(i32),
    /// A fixed time.
    Absolute(i32),
}

impl TimeIndex {
    pub fn resolve(self, t: i32) -> i32 {
        match self {
            TimeIndex::Relative(k) => t + k,
            TimeIndex::Absolute(k) => k,
        }
    }
}

impl fmt::Display for TimeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TimeIndex::Relative(0) => write!(f, "t"),
            TimeIndex::Relative(k) if k > 0 => write!(f, "t+{k}"),
            TimeIndex::Relative(k) => write!(f, "t-{}", -k),
            TimeIndex::Absolute(k) => write!(f, "{k}"),
        }
    }
}

/// Mean and logit expressions of the structural equations.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Ref { var: String, index: TimeIndex },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Expit(Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Const(_) | Expr::Ref { .. } | Expr::Expit(_) => 4,
        }
    }

    /// Every node reference in the expression, left to right.
    pub fn refs(&self) -> Vec<(&str, TimeIndex)> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<(&'a str, TimeIndex)>) {
        match self {
            Expr::Const(_) => {}
            Expr::Ref { var, index } => out.push((var, *index)),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            Expr::Neg(a) | Expr::Expit(a) => a.collect_refs(out),
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Ref { var, index } => write!(f, "{var}[{index}]"),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                let op = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    _ => "*",
                };
                write_child(f, a, a.precedence() < p)?;
                f.write_str(op)?;
                write_child(f, b, b.precedence() <= p)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, a.precedence() < p)
            }
            Expr::Expit(a) => write!(f, "expit({a})"),
        }
    }
}

/// Conditional distribution of one node given its parents.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// `N(mean, variance)`.
    Normal { mean: Expr, variance: f64 },
    /// `B(expit(logit))`; the success probability is always squashed.
    Bernoulli { logit: Expr },
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Normal { mean, variance } => write!(f, "N({mean}, {variance})"),
            Distribution::Bernoulli { logit } => write!(f, "B(expit({logit}))"),
        }
    }
}

/// One source line: `var[t] ~ dist for t in first..last`.
#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub var: String,
    pub first: i32,
    pub last: i32,
    pub dist: Distribution,
}

impl fmt::Display for Definition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[t] ~ {} for t in {}..{}",
            self.var, self.dist, self.first, self.last
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(var: &str, k: i32) -> Box<Expr> {
        Box::new(Expr::Ref {
            var: var.into(),
            index: TimeIndex::Relative(k),
        })
    }

    #[test]
    fn printing_respects_precedence_and_associativity() {
        let e = Expr::Sub(
            Box::new(Expr::Add(r("L", 0), Box::new(Expr::Mul(Box::new(Expr::Const(2.0)), r("A", -1))))),
            r("L", -1),
        );
        assert_eq!(e.to_string(), "L[t] + 2*A[t-1] - L[t-1]");
        let nested = Expr::Sub(r("a", 0), Box::new(Expr::Sub(r("b", 0), r("c", 0))));
        assert_eq!(nested.to_string(), "a[t] - (b[t] - c[t])");
        let neg = Expr::Neg(Box::new(Expr::Add(r("a", 0), r("b", 2))));
        assert_eq!(neg.to_string(), "-(a[t] + b[t+2])");
    }
}
