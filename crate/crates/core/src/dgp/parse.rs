use std::fmt;

use super::ast::{Definition, Distribution, Expr, TimeIndex};

/// What went wrong in a DSL source.
#[derive(Debug, Clone, PartialEq)]
pub enum DslErrorKind {
    Syntax(String),
    ForwardReference { node: String, reference: String },
    UndefinedReference { node: String, reference: String },
    NegativeVariance(f64),
    DuplicateNode(String),
    UnknownTreatment(String),
    UnknownOutcome(String),
    NonBinaryTreatment(String),
    Empty,
}

impl fmt::Display for DslErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DslErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            DslErrorKind::ForwardReference { node, reference } => {
                write!(f, "{node} refers forward to {reference}")
            }
            DslErrorKind::UndefinedReference { node, reference } => {
                write!(f, "{node} refers to undefined node {reference}")
            }
            DslErrorKind::NegativeVariance(v) => write!(f, "negative variance {v}"),
            DslErrorKind::DuplicateNode(n) => write!(f, "node {n} is defined twice"),
            DslErrorKind::UnknownTreatment(v) => write!(f, "treatment variable {v} is never defined"),
            DslErrorKind::UnknownOutcome(n) => write!(f, "outcome node {n} is never defined"),
            DslErrorKind::NonBinaryTreatment(n) => {
                write!(f, "treatment node {n} must have a Bernoulli distribution")
            }
            DslErrorKind::Empty => write!(f, "no definitions"),
        }
    }
}

/// A DSL error with its 1-based source position (0 when the spec was built in code).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {col}: {kind}")]
pub struct DslError {
    pub line: usize,
    pub col: usize,
    pub kind: DslErrorKind,
}

impl DslError {
    pub(crate) fn new(line: usize, col: usize, kind: DslErrorKind) -> Self {
        DslError { line, col, kind }
    }
}

/// Parsed source before compilation.
#[derive(Debug, Clone, Default)]
pub(crate) struct Source {
    pub treatment: Vec<String>,
    pub outcome: Option<(String, i32)>,
    pub definitions: Vec<Definition>,
    /// (line, column) of each definition.
    pub positions: Vec<(usize, usize)>,
    pub directive_positions: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Tilde,
    DotDot,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Num(x) => write!(f, "'{x}'"),
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Tilde => f.write_str("'~'"),
            Tok::DotDot => f.write_str("'..'"),
        }
    }
}

fn lex(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>, DslError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '~' => Some(Tok::Tilde),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, col));
            i += 1;
        } else if c == '.' && chars.get(i + 1) == Some(&'.') {
            out.push((Tok::DotDot, col));
            i += 2;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            // a lone '.' followed by '.' is a range, not a decimal point
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1) != Some(&'.') {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| {
                DslError::new(lineno, col, DslErrorKind::Syntax(format!("bad number '{text}'")))
            })?;
            out.push((Tok::Num(v), col));
        } else {
            return Err(DslError::new(
                lineno,
                col,
                DslErrorKind::Syntax(format!("unexpected character '{c}'")),
            ));
        }
    }
    Ok(out)
}

struct LineParser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl LineParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.1)
    }

    fn err(&self, msg: impl Into<String>) -> DslError {
        DslError::new(self.line, self.col(), DslErrorKind::Syntax(msg.into()))
    }

    fn unexpected(&self, wanted: &str) -> DslError {
        match self.peek() {
            Some(t) => self.err(format!("expected {wanted}, found {t}")),
            None => self.err(format!("expected {wanted}, found end of line")),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), DslError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&tok.to_string()))
        }
    }

    fn ident(&mut self) -> Result<String, DslError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.unexpected(&format!("'{kw}'"))),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<f64, DslError> {
        let neg = self.eat(&Tok::Minus);
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn integer(&mut self) -> Result<i32, DslError> {
        let col = self.col();
        let v = self.number()?;
        if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
            return Err(DslError::new(
                self.line,
                col,
                DslErrorKind::Syntax(format!("expected an integer time, found {v}")),
            ));
        }
        Ok(v as i32)
    }

    fn finish(&self) -> Result<(), DslError> {
        if self.pos < self.toks.len() {
            Err(self.unexpected("end of line"))
        } else {
            Ok(())
        }
    }

    fn time_index(&mut self) -> Result<TimeIndex, DslError> {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "t") {
            self.pos += 1;
            let sign = if self.eat(&Tok::Plus) {
                1
            } else if self.eat(&Tok::Minus) {
                -1
            } else {
                return Ok(TimeIndex::Relative(0));
            };
            let k = self.integer()?;
            Ok(TimeIndex::Relative(sign * k))
        } else {
            Ok(TimeIndex::Absolute(self.integer()?))
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(&Tok::Plus) {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(&Tok::Minus) {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::Star) {
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.eat(&Tok::Minus) {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "expit" && self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Expit(Box::new(e)));
                }
                if name == "t" {
                    self.pos -= 1;
                    return Err(self.err("the time index 't' can only appear inside brackets"));
                }
                self.expect(Tok::LBracket)?;
                let index = self.time_index()?;
                self.expect(Tok::RBracket)?;
                Ok(Expr::Ref { var: name, index })
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn distribution(&mut self) -> Result<Distribution, DslError> {
        let name = self.ident()?;
        match name.as_str() {
            "N" => {
                self.expect(Tok::LParen)?;
                let mean = self.expr()?;
                self.expect(Tok::Comma)?;
                let col = self.col();
                let variance = self.number()?;
                if variance < 0.0 {
                    return Err(DslError::new(
                        self.line,
                        col,
                        DslErrorKind::NegativeVariance(variance),
                    ));
                }
                self.expect(Tok::RParen)?;
                Ok(Distribution::Normal { mean, variance })
            }
            "B" => {
                self.expect(Tok::LParen)?;
                self.keyword("expit")?;
                self.expect(Tok::LParen)?;
                let logit = self.expr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::RParen)?;
                Ok(Distribution::Bernoulli { logit })
            }
            _ => {
                self.pos -= 1;
                Err(self.err(format!("unknown distribution '{name}', expected N or B")))
            }
        }
    }
}

pub(crate) fn parse_source(src: &str) -> Result<Source, DslError> {
    let mut out = Source::default();
    for (i, raw) in src.lines().enumerate() {
        let lineno = i + 1;
        let code = raw.split('#').next().unwrap_or("");
        let toks = lex(code, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let first_col = toks[0].1;
        let mut p = LineParser {
            toks,
            pos: 0,
            line: lineno,
            end_col: code.trim_end().chars().count() + 1,
        };
        let head = p.ident()?;
        match head.as_str() {
            "treatment" if p.peek() != Some(&Tok::LBracket) => {
                loop {
                    out.treatment.push(p.ident()?);
                    if !p.eat(&Tok::Comma) {
                        break;
                    }
                }
                p.finish()?;
                out.directive_positions.push((lineno, first_col));
            }
            "outcome" if p.peek() != Some(&Tok::LBracket) => {
                if out.outcome.is_some() {
                    return Err(p.err("outcome declared twice"));
                }
                let var = p.ident()?;
                p.expect(Tok::LBracket)?;
                let t = p.integer()?;
                p.expect(Tok::RBracket)?;
                p.finish()?;
                out.outcome = Some((var, t));
                out.directive_positions.push((lineno, first_col));
            }
            _ => {
                if head == "t" {
                    p.pos -= 1;
                    return Err(p.err("'t' is reserved for the time index"));
                }
                p.expect(Tok::LBracket)?;
                let index = p.time_index()?;
                p.expect(Tok::RBracket)?;
                p.expect(Tok::Tilde)?;
                let dist = p.distribution()?;
                let (first, last) = match index {
                    TimeIndex::Relative(0) => {
                        p.keyword("for")?;
                        p.keyword("t")?;
                        p.keyword("in")?;
                        let a = p.integer()?;
                        p.expect(Tok::DotDot)?;
                        let b = p.integer()?;
                        if b < a {
                            return Err(p.err(format!("empty time range {a}..{b}")));
                        }
                        (a, b)
                    }
                    TimeIndex::Absolute(k) => (k, k),
                    TimeIndex::Relative(_) => {
                        return Err(DslError::new(
                            lineno,
                            first_col,
                            DslErrorKind::Syntax(
                                "a definition must be indexed by 't' or a fixed time".into(),
                            ),
                        ))
                    }
                };
                p.finish()?;
                out.definitions.push(Definition {
                    var: head,
                    first,
                    last,
                    dist,
                });
                out.positions.push((lineno, first_col));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_and_fixed_times() {
        let s = parse_source(
            "treatment A\noutcome Y[2]\nL[t] ~ N(0, 1) for t in 1..2 # cov\nA[1] ~ B(expit(-L[t]))\n",
        )
        .unwrap();
        assert_eq!(s.treatment, vec!["A"]);
        assert_eq!(s.outcome, Some(("Y".into(), 2)));
        assert_eq!(s.definitions[0].first, 1);
        assert_eq!(s.definitions[0].last, 2);
        assert_eq!(s.definitions[1].first, 1);
        assert_eq!(s.positions[1], (4, 1));
    }

    #[test]
    fn reports_line_and_column() {
        let e = parse_source("L[t] ~ N(0, 1) for t in 1..2\nY[t] ~ N(L[t] +, 1) for t in 1..1").unwrap_err();
        assert_eq!((e.line, e.col), (2, 16));
        assert!(matches!(e.kind, DslErrorKind::Syntax(_)));
        let e = parse_source("L[1] ~ N(0, -2)").unwrap_err();
        assert_eq!(e.kind, DslErrorKind::NegativeVariance(-2.0));
        assert_eq!((e.line, e.col), (1, 13));
    }

    #[test]
    fn numbers_next_to_ranges() {
        let s = parse_source("L[t] ~ N(1.5e1, 0.25) for t in 1..10").unwrap();
        assert_eq!(s.definitions[0].last, 10);
        match &s.definitions[0].dist {
            Distribution::Normal { mean, variance } => {
                assert_eq!(*mean, Expr::Const(15.0));
                assert_eq!(*variance, 0.25);
            }
            _ => panic!(),
        }
    }
}
