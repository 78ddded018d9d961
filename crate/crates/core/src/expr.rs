//! Expressions, value domains and LTL formulas shared by every engine.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Finite value domain of a port, variable or error layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueType {
    Bool,
    Int { lo: i64, hi: i64 },
    Enum { labels: Vec<String> },
}

impl ValueType {
    /// Number of values in the domain.
    pub fn size(&self) -> u64 {
        match self {
            ValueType::Bool => 2,
            ValueType::Int { lo, hi } => (hi - lo + 1).max(0) as u64,
            ValueType::Enum { labels } => labels.len() as u64,
        }
    }

    /// Encodes a constant into the integer representation used by the engines.
    pub fn encode(&self, value: &Const) -> Option<i64> {
        match (self, value) {
            (ValueType::Bool, Const::Bool(b)) => Some(*b as i64),
            (ValueType::Int { lo, hi }, Const::Int(v)) if v >= lo && v <= hi => Some(*v),
            (ValueType::Enum { labels }, Const::Label(l)) => labels.iter().position(|x| x == l).map(|i| i as i64),
            _ => None,
        }
    }

    pub fn decode(&self, raw: i64) -> Const {
        match self {
            ValueType::Bool => Const::Bool(raw != 0),
            ValueType::Int { .. } => Const::Int(raw),
            ValueType::Enum { labels } => {
                Const::Label(labels.get(raw as usize).cloned().unwrap_or_else(|| format!("#{raw}")))
            }
        }
    }

    /// Encoded values of the domain in ascending order.
    pub fn values(&self) -> Vec<i64> {
        match self {
            ValueType::Bool => vec![0, 1],
            ValueType::Int { lo, hi } => (*lo..=*hi).collect(),
            ValueType::Enum { labels } => (0..labels.len() as i64).collect(),
        }
    }

    /// Lowest encoded value, used as the implicit initial value.
    pub fn default_raw(&self) -> i64 {
        match self {
            ValueType::Int { lo, .. } => *lo,
            _ => 0,
        }
    }

    pub fn contains_raw(&self, raw: i64) -> bool {
        match self {
            ValueType::Bool => raw == 0 || raw == 1,
            ValueType::Int { lo, hi } => raw >= *lo && raw <= *hi,
            ValueType::Enum { labels } => raw >= 0 && (raw as usize) < labels.len(),
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Bool => write!(f, "bool"),
            ValueType::Int { lo, hi } => write!(f, "{lo}..{hi}"),
            ValueType::Enum { labels } => write!(f, "{{{}}}", labels.join(", ")),
        }
    }
}

/// A literal value as written in the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Const {
    Bool(bool),
    Int(i64),
    Label(String),
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Bool(b) => write!(f, "{b}"),
            Const::Int(i) => write!(f, "{i}"),
            Const::Label(l) => write!(f, "{l}"),
        }
    }
}

/// One step of a dotted reference such as `gen[2].energy`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub struct Segment {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<Box<Expr>>,
}

impl Segment {
    pub fn plain(name: impl Into<String>) -> Self {
        Segment { name: name.into(), index: None }
    }

    pub fn indexed(name: impl Into<String>, index: i64) -> Self {
        Segment { name: name.into(), index: Some(Box::new(Expr::Int(index))) }
    }
}

/// Dotted, optionally indexed name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub struct Path(pub Vec<Segment>);

impl Path {
    pub fn simple(name: impl Into<String>) -> Self {
        Path(vec![Segment::plain(name)])
    }

    /// Parses a ground path such as `gen[0].energy`. Returns `None` on
    /// anything that is not a ground path.
    pub fn parse_ground(text: &str) -> Option<Path> {
        let mut segs = Vec::new();
        for part in text.split('.') {
            if let Some(open) = part.find('[') {
                let close = part.strip_suffix(']')?;
                let idx: i64 = close[open + 1..].parse().ok()?;
                segs.push(Segment::indexed(&part[..open], idx));
            } else {
                if part.is_empty() {
                    return None;
                }
                segs.push(Segment::plain(part));
            }
        }
        Some(Path(segs))
    }

    /// True when every index is an integer literal.
    pub fn is_ground(&self) -> bool {
        self.0.iter().all(|s| s.index.as_deref().is_none_or(|e| matches!(e, Expr::Int(_))))
    }

    pub fn single_name(&self) -> Option<&str> {
        match self.0.as_slice() {
            [s] if s.index.is_none() => Some(&s.name),
            _ => None,
        }
    }

    /// Prefixes a ground path with an instance path (`""` for the scope root).
    pub fn qualified(&self, prefix: &str) -> String {
        if prefix.is_empty() {
            self.to_string()
        } else {
            format!("{prefix}.{self}")
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{}", seg.name)?;
            if let Some(idx) = &seg.index {
                write!(f, "[{idx}]")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Implies,
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Implies => "->",
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div => 7,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 5
    }

    pub fn is_arithmetic(self) -> bool {
        self.precedence() >= 6
    }

    pub fn is_logical(self) -> bool {
        self.precedence() <= 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Quantifier {
    Forall,
    Exists,
}

/// Boolean / integer expression. Used for guards, updates, multiplicities,
/// top-level-event conditions and LTL atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Bool(bool),
    Int(i64),
    Ref(Path),
    /// Enumeration label, produced when instantiation resolves names; the
    /// parser leaves labels as plain references.
    Label(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `forall(i < bound: body)`; expanded away by instantiation.
    Quant {
        kind: Quantifier,
        var: String,
        bound: Box<Expr>,
        body: Box<Expr>,
    },
}

impl Expr {
    pub fn name(name: &str) -> Expr {
        Expr::Ref(Path::simple(name))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    /// Visits every reference in the expression.
    pub fn visit_refs<'a>(&'a self, f: &mut dyn FnMut(&'a Path)) {
        match self {
            Expr::Bool(_) | Expr::Int(_) | Expr::Label(_) => {}
            Expr::Ref(p) => {
                f(p);
                for seg in &p.0 {
                    if let Some(idx) = &seg.index {
                        idx.visit_refs(f);
                    }
                }
            }
            Expr::Unary(_, e) => e.visit_refs(f),
            Expr::Binary(_, l, r) => {
                l.visit_refs(f);
                r.visit_refs(f);
            }
            Expr::Quant { bound, body, .. } => {
                bound.visit_refs(f);
                body.visit_refs(f);
            }
        }
    }

    /// Rewrites every reference; index expressions are left untouched.
    pub fn map_refs(&self, f: &mut dyn FnMut(&Path) -> Expr) -> Expr {
        match self {
            Expr::Bool(_) | Expr::Int(_) | Expr::Label(_) => self.clone(),
            Expr::Ref(p) => f(p),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_refs(f))),
            Expr::Binary(op, l, r) => {
                let l = l.map_refs(f);
                Expr::Binary(*op, Box::new(l), Box::new(r.map_refs(f)))
            }
            Expr::Quant { kind, var, bound, body } => {
                Expr::Quant { kind: *kind, var: var.clone(), bound: bound.clone(), body: Box::new(body.map_refs(f)) }
            }
        }
    }

    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(UnOp::Not, _) => 4,
            Expr::Unary(UnOp::Neg, _) => 8,
            _ => 9,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Int(i) if *i < 0 => write!(f, "-{}", i.unsigned_abs()),
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Ref(p) => write!(f, "{p}"),
            Expr::Label(l) => write!(f, "{l}"),
            Expr::Unary(op, e) => {
                let sym = if *op == UnOp::Not { "!" } else { "-" };
                // `-3` parses as a literal, so negating a literal needs parens.
                let wrap = e.precedence() < self.precedence()
                    || (*op == UnOp::Neg && matches!(**e, Expr::Int(_) | Expr::Unary(UnOp::Neg, _)));
                if wrap {
                    write!(f, "{sym}({e})")
                } else {
                    write!(f, "{sym}{e}")
                }
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                // Implication is right-associative, comparisons are not
                // associative, everything else is left-associative.
                let (lp, rp) = match op {
                    BinOp::Implies => (p + 1, p),
                    _ if op.is_comparison() => (p + 1, p + 1),
                    _ => (p, p + 1),
                };
                if l.precedence() < lp {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if r.precedence() < rp {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
            Expr::Quant { kind, var, bound, body } => {
                let kw = match kind {
                    Quantifier::Forall => "forall",
                    Quantifier::Exists => "exists",
                };
                write!(f, "{kw}({var} < {bound}: {body})")
            }
        }
    }
}

/// Propositional LTL over expression atoms.
///
/// Atoms produced by the parser are never boolean connectives; those are
/// always represented at the LTL level so printing and re-parsing agree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Ltl {
    True,
    False,
    Atom(Expr),
    Not(Box<Ltl>),
    And(Box<Ltl>, Box<Ltl>),
    Or(Box<Ltl>, Box<Ltl>),
    Implies(Box<Ltl>, Box<Ltl>),
    Next(Box<Ltl>),
    Globally(Box<Ltl>),
    Finally(Box<Ltl>),
    Until(Box<Ltl>, Box<Ltl>),
    Release(Box<Ltl>, Box<Ltl>),
}

impl Ltl {
    pub fn atom(e: Expr) -> Ltl {
        Ltl::Atom(e)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Ltl) -> Ltl {
        Ltl::Not(Box::new(a))
    }
    pub fn and(a: Ltl, b: Ltl) -> Ltl {
        Ltl::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Ltl, b: Ltl) -> Ltl {
        Ltl::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Ltl, b: Ltl) -> Ltl {
        Ltl::Implies(Box::new(a), Box::new(b))
    }
    pub fn next(a: Ltl) -> Ltl {
        Ltl::Next(Box::new(a))
    }
    pub fn globally(a: Ltl) -> Ltl {
        Ltl::Globally(Box::new(a))
    }
    pub fn finally(a: Ltl) -> Ltl {
        Ltl::Finally(Box::new(a))
    }
    pub fn until(a: Ltl, b: Ltl) -> Ltl {
        Ltl::Until(Box::new(a), Box::new(b))
    }
    pub fn release(a: Ltl, b: Ltl) -> Ltl {
        Ltl::Release(Box::new(a), Box::new(b))
    }

    /// Conjunction of a list, `true` when empty.
    pub fn conj(items: impl IntoIterator<Item = Ltl>) -> Ltl {
        items.into_iter().reduce(Ltl::and).unwrap_or(Ltl::True)
    }

    pub fn temporal_depth_count(&self) -> usize {
        match self {
            Ltl::True | Ltl::False | Ltl::Atom(_) => 0,
            Ltl::Not(a) => a.temporal_depth_count(),
            Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Implies(a, b) => a.temporal_depth_count() + b.temporal_depth_count(),
            Ltl::Next(a) | Ltl::Globally(a) | Ltl::Finally(a) => 1 + a.temporal_depth_count(),
            Ltl::Until(a, b) | Ltl::Release(a, b) => 1 + a.temporal_depth_count() + b.temporal_depth_count(),
        }
    }

    pub fn visit_atoms<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        match self {
            Ltl::True | Ltl::False => {}
            Ltl::Atom(e) => f(e),
            Ltl::Not(a) | Ltl::Next(a) | Ltl::Globally(a) | Ltl::Finally(a) => a.visit_atoms(f),
            Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Implies(a, b) | Ltl::Until(a, b) | Ltl::Release(a, b) => {
                a.visit_atoms(f);
                b.visit_atoms(f);
            }
        }
    }

    /// Rewrites every atom.
    pub fn map_atoms(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> Ltl {
        let bx = |l: Ltl| Box::new(l);
        match self {
            Ltl::True => Ltl::True,
            Ltl::False => Ltl::False,
            Ltl::Atom(e) => Ltl::Atom(f(e)),
            Ltl::Not(a) => Ltl::Not(bx(a.map_atoms(f))),
            Ltl::Next(a) => Ltl::Next(bx(a.map_atoms(f))),
            Ltl::Globally(a) => Ltl::Globally(bx(a.map_atoms(f))),
            Ltl::Finally(a) => Ltl::Finally(bx(a.map_atoms(f))),
            Ltl::And(a, b) => {
                let a = a.map_atoms(f);
                Ltl::And(bx(a), bx(b.map_atoms(f)))
            }
            Ltl::Or(a, b) => {
                let a = a.map_atoms(f);
                Ltl::Or(bx(a), bx(b.map_atoms(f)))
            }
            Ltl::Implies(a, b) => {
                let a = a.map_atoms(f);
                Ltl::Implies(bx(a), bx(b.map_atoms(f)))
            }
            Ltl::Until(a, b) => {
                let a = a.map_atoms(f);
                Ltl::Until(bx(a), bx(b.map_atoms(f)))
            }
            Ltl::Release(a, b) => {
                let a = a.map_atoms(f);
                Ltl::Release(bx(a), bx(b.map_atoms(f)))
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Ltl::Implies(..) => 1,
            Ltl::Or(..) => 2,
            Ltl::And(..) => 3,
            Ltl::Until(..) | Ltl::Release(..) => 4,
            Ltl::Not(_) | Ltl::Next(_) | Ltl::Globally(_) | Ltl::Finally(_) => 5,
            Ltl::True | Ltl::False | Ltl::Atom(_) => 6,
        }
    }
}

impl fmt::Display for Ltl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        let side = |f: &mut fmt::Formatter<'_>, child: &Ltl, min: u8| -> fmt::Result {
            if child.precedence() < min {
                write!(f, "({child})")
            } else {
                write!(f, "{child}")
            }
        };
        match self {
            Ltl::True => write!(f, "true"),
            Ltl::False => write!(f, "false"),
            Ltl::Atom(e) => {
                // An atom that would re-parse as an LTL connective gets parens.
                if e.precedence() <= 4 {
                    write!(f, "({e})")
                } else {
                    write!(f, "{e}")
                }
            }
            Ltl::Not(a) => {
                write!(f, "!")?;
                side(f, a, p)
            }
            Ltl::Next(a) | Ltl::Globally(a) | Ltl::Finally(a) => {
                let op = match self {
                    Ltl::Next(_) => "X",
                    Ltl::Globally(_) => "G",
                    _ => "F",
                };
                // A space keeps `G a` from lexing as the identifier `Ga`.
                if a.precedence() < p {
                    write!(f, "{op}({a})")
                } else {
                    write!(f, "{op} {a}")
                }
            }
            Ltl::And(a, b) | Ltl::Or(a, b) => {
                let op = if matches!(self, Ltl::And(..)) { "&&" } else { "||" };
                side(f, a, p)?;
                write!(f, " {op} ")?;
                side(f, b, p + 1)
            }
            Ltl::Implies(a, b) | Ltl::Until(a, b) | Ltl::Release(a, b) => {
                let op = match self {
                    Ltl::Implies(..) => "->",
                    Ltl::Until(..) => "U",
                    _ => "R",
                };
                side(f, a, p + 1)?;
                write!(f, " {op} ")?;
                side(f, b, p)
            }
        }
    }
}
