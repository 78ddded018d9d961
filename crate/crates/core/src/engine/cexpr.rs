//! Expressions compiled against a slot table.

use super::EngineError;
use crate::expr::{BinOp, Expr, UnOp, ValueType};
use crate::typing::Ty;

/// Expression over state slots; booleans evaluate to 0/1 and enumerations
/// to label indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CExpr {
    Const(i64),
    Slot(usize),
    Not(Box<CExpr>),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    pub fn eval(&self, s: &[i32]) -> i64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::Slot(i) => s[*i] as i64,
            CExpr::Not(a) => (a.eval(s) == 0) as i64,
            CExpr::Neg(a) => a.eval(s).wrapping_neg(),
            CExpr::Bin(op, a, b) => {
                let x = a.eval(s);
                match op {
                    BinOp::And => (x != 0 && b.eval(s) != 0) as i64,
                    BinOp::Or => (x != 0 || b.eval(s) != 0) as i64,
                    BinOp::Implies => (x == 0 || b.eval(s) != 0) as i64,
                    _ => {
                        let y = b.eval(s);
                        match op {
                            BinOp::Eq => (x == y) as i64,
                            BinOp::Ne => (x != y) as i64,
                            BinOp::Lt => (x < y) as i64,
                            BinOp::Le => (x <= y) as i64,
                            BinOp::Gt => (x > y) as i64,
                            BinOp::Ge => (x >= y) as i64,
                            BinOp::Add => x.wrapping_add(y),
                            BinOp::Sub => x.wrapping_sub(y),
                            BinOp::Mul => x.wrapping_mul(y),
                            // Division by zero yields 0 rather than aborting a search.
                            _ => x.checked_div(y).unwrap_or(0),
                        }
                    }
                }
            }
        }
    }

    pub fn holds(&self, s: &[i32]) -> bool {
        self.eval(s) != 0
    }

    pub fn slots(&self, out: &mut Vec<usize>) {
        match self {
            CExpr::Const(_) => {}
            CExpr::Slot(i) => {
                if !out.contains(i) {
                    out.push(*i)
                }
            }
            CExpr::Not(a) | CExpr::Neg(a) => a.slots(out),
            CExpr::Bin(_, a, b) => {
                a.slots(out);
                b.slots(out);
            }
        }
    }
}

/// Name lookup for compilation: ground name → (slot, type).
pub trait SlotTable {
    fn lookup(&self, name: &str) -> Option<(usize, &ValueType)>;
}

pub fn compile_bool(e: &Expr, t: &dyn SlotTable) -> Result<CExpr, EngineError> {
    let (c, ty) = compile(e, t)?;
    if ty != Ty::Bool {
        return Err(EngineError::Type(format!("`{e}` is not a boolean expression")));
    }
    Ok(c)
}

/// Compiles `e` as a value of type `want` (labels are accepted for enums).
pub fn compile_as(e: &Expr, want: &ValueType, t: &dyn SlotTable) -> Result<CExpr, EngineError> {
    if let (Some(l), ValueType::Enum { labels }) = (as_label(e, t), want) {
        if let Some(i) = labels.iter().position(|x| x == l) {
            return Ok(CExpr::Const(i as i64));
        }
    }
    let (c, ty) = compile(e, t)?;
    if ty != Ty::from(want) {
        return Err(EngineError::Type(format!("`{e}` has type {ty}, expected {want}")));
    }
    Ok(c)
}

fn as_label<'a>(e: &'a Expr, t: &dyn SlotTable) -> Option<&'a str> {
    match e {
        Expr::Label(l) => Some(l),
        Expr::Ref(p) => p.single_name().filter(|n| t.lookup(n).is_none()),
        _ => None,
    }
}

pub fn compile(e: &Expr, t: &dyn SlotTable) -> Result<(CExpr, Ty), EngineError> {
    let bx = Box::new;
    Ok(match e {
        Expr::Bool(b) => (CExpr::Const(*b as i64), Ty::Bool),
        Expr::Int(i) => (CExpr::Const(*i), Ty::Int),
        Expr::Label(l) => {
            return Err(EngineError::Type(format!("label `{l}` can only be compared with an enumeration")))
        }
        Expr::Ref(p) => {
            let name = p.to_string();
            let (slot, ty) = t.lookup(&name).ok_or(EngineError::UnknownName(name))?;
            (CExpr::Slot(slot), Ty::from(ty))
        }
        Expr::Unary(UnOp::Not, a) => {
            let (c, ty) = compile(a, t)?;
            expect(&ty, &Ty::Bool, a)?;
            (CExpr::Not(bx(c)), Ty::Bool)
        }
        Expr::Unary(UnOp::Neg, a) => {
            let (c, ty) = compile(a, t)?;
            expect(&ty, &Ty::Int, a)?;
            (CExpr::Neg(bx(c)), Ty::Int)
        }
        Expr::Binary(op, a, b) if matches!(op, BinOp::Eq | BinOp::Ne) => {
            let (ca, cb) = match (as_label(a, t), as_label(b, t)) {
                (None, Some(l)) => {
                    let (ca, ta) = compile(a, t)?;
                    (ca.clone(), label_const(l, &ta, e)?)
                }
                (Some(l), None) => {
                    let (cb, tb) = compile(b, t)?;
                    (label_const(l, &tb, e)?, cb)
                }
                _ => {
                    let (ca, ta) = compile(a, t)?;
                    let (cb, tb) = compile(b, t)?;
                    if ta != tb {
                        return Err(EngineError::Type(format!("cannot compare {ta} with {tb} in `{e}`")));
                    }
                    (ca, cb)
                }
            };
            (CExpr::Bin(*op, bx(ca), bx(cb)), Ty::Bool)
        }
        Expr::Binary(op, a, b) => {
            let (ca, ta) = compile(a, t)?;
            let (cb, tb) = compile(b, t)?;
            let (arg, res) = if op.is_logical() {
                (Ty::Bool, Ty::Bool)
            } else if op.is_arithmetic() {
                (Ty::Int, Ty::Int)
            } else {
                (Ty::Int, Ty::Bool)
            };
            expect(&ta, &arg, a)?;
            expect(&tb, &arg, b)?;
            (CExpr::Bin(*op, bx(ca), bx(cb)), res)
        }
        Expr::Quant { .. } => {
            return Err(EngineError::Type(format!("quantifier in `{e}` must be expanded by instantiation")))
        }
    })
}

fn label_const(l: &str, other: &Ty, e: &Expr) -> Result<CExpr, EngineError> {
    match other {
        Ty::Enum(labels) => labels
            .iter()
            .position(|x| x == l)
            .map(|i| CExpr::Const(i as i64))
            .ok_or_else(|| EngineError::Type(format!("`{l}` is not a label of {other} in `{e}`"))),
        _ => Err(EngineError::UnknownName(l.to_string())),
    }
}

fn expect(got: &Ty, want: &Ty, e: &Expr) -> Result<(), EngineError> {
    if got == want {
        Ok(())
    } else {
        Err(EngineError::Type(format!("`{e}` has type {got}, expected {want}")))
    }
}
