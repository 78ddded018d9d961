//! Expression type checking, shared by model validation and the engines.

use crate::expr::{BinOp, Expr, Path, UnOp, ValueType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Bool,
    Int,
    Enum(Vec<String>),
}

impl From<&ValueType> for Ty {
    fn from(v: &ValueType) -> Self {
        match v {
            ValueType::Bool => Ty::Bool,
            ValueType::Int { .. } => Ty::Int,
            ValueType::Enum { labels } => Ty::Enum(labels.clone()),
        }
    }
}

impl std::fmt::Display for Ty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ty::Bool => write!(f, "bool"),
            Ty::Int => write!(f, "int"),
            Ty::Enum(l) => write!(f, "{{{}}}", l.join(", ")),
        }
    }
}

/// Name lookup for the type checker. `bound` holds quantifier variables in
/// scope; they are integers and may appear in indices.
pub trait Resolver {
    fn resolve(&self, path: &Path, bound: &[String]) -> Result<Ty, String>;
}

impl<F: Fn(&Path, &[String]) -> Result<Ty, String>> Resolver for F {
    fn resolve(&self, path: &Path, bound: &[String]) -> Result<Ty, String> {
        self(path, bound)
    }
}

pub fn type_of(e: &Expr, r: &dyn Resolver) -> Result<Ty, String> {
    let mut bound = Vec::new();
    infer(e, r, &mut bound)
}

/// Checks `e` against an expected type, accepting a bare enum label.
pub fn check_against(e: &Expr, expected: &Ty, r: &dyn Resolver) -> Result<(), String> {
    let mut bound = Vec::new();
    if let (Ty::Enum(labels), Some(l)) = (expected, label_candidate(e)) {
        let is_label = matches!(e, Expr::Label(_)) || r.resolve(&Path::simple(l), &bound).is_err();
        if is_label && labels.iter().any(|x| x == l) {
            return Ok(());
        }
    }
    let t = infer(e, r, &mut bound)?;
    if &t == expected {
        Ok(())
    } else {
        Err(format!("type mismatch: expected {expected}, found {t} in `{e}`"))
    }
}

fn label_candidate(e: &Expr) -> Option<&str> {
    match e {
        Expr::Ref(p) => p.single_name(),
        Expr::Label(l) => Some(l),
        _ => None,
    }
}

fn check_indices(p: &Path, r: &dyn Resolver, bound: &mut Vec<String>) -> Result<(), String> {
    for seg in &p.0 {
        if let Some(idx) = &seg.index {
            let t = infer(idx, r, bound)?;
            if t != Ty::Int {
                return Err(format!("index of `{}` must be an integer", seg.name));
            }
        }
    }
    Ok(())
}

fn infer(e: &Expr, r: &dyn Resolver, bound: &mut Vec<String>) -> Result<Ty, String> {
    match e {
        Expr::Bool(_) => Ok(Ty::Bool),
        Expr::Int(_) => Ok(Ty::Int),
        Expr::Label(l) => Err(format!("label `{l}` can only be compared with an enumeration")),
        Expr::Ref(p) => {
            if let Some(n) = p.single_name() {
                if bound.iter().any(|b| b == n) {
                    return Ok(Ty::Int);
                }
            }
            check_indices(p, r, bound)?;
            r.resolve(p, bound)
        }
        Expr::Unary(UnOp::Not, a) => expect(a, Ty::Bool, r, bound).map(|_| Ty::Bool),
        Expr::Unary(UnOp::Neg, a) => expect(a, Ty::Int, r, bound).map(|_| Ty::Int),
        Expr::Binary(op, a, b) => {
            if op.is_logical() {
                expect(a, Ty::Bool, r, bound)?;
                expect(b, Ty::Bool, r, bound)?;
                Ok(Ty::Bool)
            } else if op.is_arithmetic() {
                expect(a, Ty::Int, r, bound)?;
                expect(b, Ty::Int, r, bound)?;
                Ok(Ty::Int)
            } else if matches!(op, BinOp::Eq | BinOp::Ne) {
                equality(a, b, r, bound).map(|_| Ty::Bool)
            } else {
                expect(a, Ty::Int, r, bound)?;
                expect(b, Ty::Int, r, bound)?;
                Ok(Ty::Bool)
            }
        }
        Expr::Quant { kind: _, var, bound: b, body } => {
            expect(b, Ty::Int, r, bound)?;
            bound.push(var.clone());
            let res = expect(body, Ty::Bool, r, bound);
            bound.pop();
            res.map(|_| Ty::Bool)
        }
    }
}

fn expect(e: &Expr, want: Ty, r: &dyn Resolver, bound: &mut Vec<String>) -> Result<(), String> {
    let t = infer(e, r, bound)?;
    if t == want {
        Ok(())
    } else {
        Err(format!("type mismatch: expected {want}, found {t} in `{e}`"))
    }
}

/// Resolves `a == b`, where either side may be an enum label.
fn equality(a: &Expr, b: &Expr, r: &dyn Resolver, bound: &mut Vec<String>) -> Result<Ty, String> {
    let ta = infer(a, r, bound);
    let tb = infer(b, r, bound);
    match (ta, tb) {
        (Ok(x), Ok(y)) if x == y => Ok(x),
        (Ok(x), Ok(y)) => Err(format!("type mismatch: cannot compare {x} with {y} in `{a} == {b}`")),
        (Ok(Ty::Enum(labels)), Err(e)) => label_ok(b, &labels).map(|_| Ty::Enum(labels)).ok_or(e),
        (Err(e), Ok(Ty::Enum(labels))) => label_ok(a, &labels).map(|_| Ty::Enum(labels)).ok_or(e),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

fn label_ok(e: &Expr, labels: &[String]) -> Option<()> {
    let l = label_candidate(e)?;
    labels.iter().any(|x| x == l).then_some(())
}

/// Evaluates a closed integer expression over parameter values.
pub fn eval_int(e: &Expr, env: &dyn Fn(&str) -> Option<i64>) -> Result<i64, String> {
    match e {
        Expr::Int(v) => Ok(*v),
        Expr::Ref(p) => {
            let n = p.single_name().ok_or_else(|| format!("`{p}` is not a parameter"))?;
            env(n).ok_or_else(|| format!("unbound parameter `{n}`"))
        }
        Expr::Unary(UnOp::Neg, a) => Ok(eval_int(a, env)?.wrapping_neg()),
        Expr::Binary(op, a, b) if op.is_arithmetic() => {
            let (x, y) = (eval_int(a, env)?, eval_int(b, env)?);
            match op {
                BinOp::Add => x.checked_add(y),
                BinOp::Sub => x.checked_sub(y),
                BinOp::Mul => x.checked_mul(y),
                _ => {
                    if y == 0 {
                        return Err(format!("division by zero in `{e}`"));
                    }
                    x.checked_div(y)
                }
            }
            .ok_or_else(|| format!("integer overflow in `{e}`"))
        }
        _ => Err(format!("`{e}` is not an integer parameter expression")),
    }
}

/// Parameters referenced by an integer expression.
pub fn referenced_names(e: &Expr) -> Vec<String> {
    let mut out = Vec::new();
    e.visit_refs(&mut |p| {
        if let Some(n) = p.single_name() {
            if !out.iter().any(|x: &String| x == n) {
                out.push(n.to_string());
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_expr;

    fn env(p: &Path, _: &[String]) -> Result<Ty, String> {
        match p.to_string().as_str() {
            "a" => Ok(Ty::Bool),
            "n" => Ok(Ty::Int),
            "mode" => Ok(Ty::Enum(vec!["Idle".into(), "Busy".into()])),
            s if s.starts_with("arr[") => Ok(Ty::Int),
            s => Err(format!("unknown name `{s}`")),
        }
    }

    #[test]
    fn labels_resolve_against_enum_side() {
        assert_eq!(type_of(&parse_expr("mode == Busy").unwrap(), &env), Ok(Ty::Bool));
        assert!(type_of(&parse_expr("mode == Nope").unwrap(), &env).is_err());
        assert!(type_of(&parse_expr("a == n").unwrap(), &env).is_err());
    }

    #[test]
    fn quantified_indices() {
        assert_eq!(type_of(&parse_expr("forall(i < 3: arr[i] > 0)").unwrap(), &env), Ok(Ty::Bool));
    }

    #[test]
    fn int_evaluation() {
        let e = parse_expr("N * 2 - 1").unwrap();
        assert_eq!(eval_int(&e, &|n| (n == "N").then_some(3)), Ok(5));
        assert!(eval_int(&parse_expr("N / 0").unwrap(), &|_| Some(1)).is_err());
    }
}
