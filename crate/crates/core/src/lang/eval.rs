//! Concrete values, stores, input tapes and expression evaluation shared by
//! both interpreters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{BinOp, Expr, ExprKind, Program, UnOp, VarId};
use super::types::Ty;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeErrorKind {
    DivisionByZero,
    IndexOutOfBounds,
    TapeExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("{kind:?}")]
pub struct RuntimeError {
    pub kind: RuntimeErrorKind,
}

impl From<RuntimeErrorKind> for RuntimeError {
    fn from(kind: RuntimeErrorKind) -> Self {
        RuntimeError { kind }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Scalar(i128),
    Array(Vec<i128>),
}

impl Value {
    pub fn scalar(&self) -> i128 {
        match self {
            Value::Scalar(v) => *v,
            Value::Array(_) => panic!("array used as scalar"),
        }
    }
}

/// A full program store indexed by [`VarId`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Store {
    pub vals: Vec<Value>,
}

impl Store {
    pub fn zeroed(p: &Program) -> Store {
        Store {
            vals: p
                .decls
                .iter()
                .map(|d| match d.len {
                    Some(n) => Value::Array(vec![0; n]),
                    None => Value::Scalar(0),
                })
                .collect(),
        }
    }

    /// Initial store: every declared variable (array elements included) is
    /// read from the tape in declaration order.
    pub fn from_tape(p: &Program, tape: &mut TapeReader<'_>) -> Result<Store, RuntimeError> {
        let mut vals = Vec::with_capacity(p.decls.len());
        for d in &p.decls {
            vals.push(match d.len {
                Some(n) => Value::Array(
                    (0..n)
                        .map(|_| tape.next(d.ty))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                None => Value::Scalar(tape.next(d.ty)?),
            });
        }
        Ok(Store { vals })
    }

    pub fn get(&self, v: VarId) -> i128 {
        self.vals[v.0].scalar()
    }

    pub fn set(&mut self, v: VarId, x: i128) {
        self.vals[v.0] = Value::Scalar(x);
    }
}

/// Inputs consumed by `nondet()` reads (and by the initial store).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputTape {
    pub values: Vec<i128>,
    /// When set, reading past the end is a runtime error instead of yielding 0.
    #[serde(default)]
    pub strict: bool,
}

impl InputTape {
    pub fn new(values: Vec<i128>) -> InputTape {
        InputTape {
            values,
            strict: false,
        }
    }

    pub fn reader(&self) -> TapeReader<'_> {
        TapeReader { tape: self, pos: 0 }
    }
}

pub struct TapeReader<'a> {
    tape: &'a InputTape,
    pos: usize,
}

impl TapeReader<'_> {
    pub fn next(&mut self, ty: Ty) -> Result<i128, RuntimeError> {
        let v = match self.tape.values.get(self.pos) {
            Some(v) => *v,
            None if self.tape.strict => return Err(RuntimeErrorKind::TapeExhausted.into()),
            None => 0,
        };
        self.pos += 1;
        Ok(ty.wrap(v))
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

fn truth(v: i128) -> bool {
    v != 0
}

/// Evaluate `e` to a value in the range of `e.ty`.
pub fn eval(e: &Expr, store: &Store) -> Result<i128, RuntimeError> {
    Ok(match &e.kind {
        ExprKind::Int(n) => e.ty.wrap(*n),
        ExprKind::Bool(b) => *b as i128,
        ExprKind::Var(v) => store.get(*v),
        ExprKind::Index(v, i) => {
            let idx = eval(i, store)?;
            let Value::Array(a) = &store.vals[v.0] else {
                unreachable!("index on scalar")
            };
            if idx < 0 || idx >= a.len() as i128 {
                return Err(RuntimeErrorKind::IndexOutOfBounds.into());
            }
            a[idx as usize]
        }
        ExprKind::Unary(UnOp::Not, inner) => (!truth(eval(inner, store)?)) as i128,
        ExprKind::Unary(UnOp::Neg, inner) => e.ty.wrap(-e.ty.wrap(eval(inner, store)?)),
        ExprKind::Unary(UnOp::BitNot, inner) => e.ty.wrap(!e.ty.wrap(eval(inner, store)?)),
        ExprKind::Binary {
            op: BinOp::And,
            lhs,
            rhs,
            ..
        } => (truth(eval(lhs, store)?) && truth(eval(rhs, store)?)) as i128,
        ExprKind::Binary {
            op: BinOp::Or,
            lhs,
            rhs,
            ..
        } => (truth(eval(lhs, store)?) || truth(eval(rhs, store)?)) as i128,
        ExprKind::Binary {
            op,
            operand_ty,
            lhs,
            rhs,
        } => {
            let t = *operand_ty;
            let l = t.wrap(eval(lhs, store)?);
            if op.is_shift() {
                let amount = eval(rhs, store)?;
                return Ok(shift(*op, t, l, amount));
            }
            let r = t.wrap(eval(rhs, store)?);
            match op {
                BinOp::Lt => (l < r) as i128,
                BinOp::Le => (l <= r) as i128,
                BinOp::Gt => (l > r) as i128,
                BinOp::Ge => (l >= r) as i128,
                BinOp::Eq => (l == r) as i128,
                BinOp::Ne => (l != r) as i128,
                _ => arith(*op, t, l, r)?,
            }
        }
    })
}

/// Binary arithmetic on two in-range operands of type `t`.
pub fn arith(op: BinOp, t: Ty, l: i128, r: i128) -> Result<i128, RuntimeError> {
    Ok(t.wrap(match op {
        BinOp::Add => l.wrapping_add(r),
        BinOp::Sub => l.wrapping_sub(r),
        BinOp::Mul => l.wrapping_mul(r),
        BinOp::Div | BinOp::Rem if r == 0 => return Err(RuntimeErrorKind::DivisionByZero.into()),
        BinOp::Div => l / r,
        BinOp::Rem => l % r,
        BinOp::BitAnd => l & r,
        BinOp::BitOr => l | r,
        BinOp::BitXor => l ^ r,
        _ => unreachable!("not an arithmetic operator: {op:?}"),
    }))
}

/// Shifts by an amount outside `[0, width)` saturate: `<<` and unsigned `>>`
/// give 0, signed `>>` fills with the sign bit.
pub fn shift(op: BinOp, t: Ty, l: i128, amount: i128) -> i128 {
    let w = t.width() as i128;
    if amount < 0 || amount >= w {
        return match op {
            BinOp::Shr if t.is_signed() && l < 0 => -1,
            _ => 0,
        };
    }
    match op {
        BinOp::Shl => t.wrap(l << amount),
        _ => l >> amount,
    }
}

pub fn is_true(e: &Expr, store: &Store) -> Result<bool, RuntimeError> {
    Ok(truth(eval(e, store)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn run_expr(src: &str, var: &str) -> i128 {
        let p = parse(src).unwrap();
        let mut s = Store::zeroed(&p);
        for st in &p.body {
            if let crate::lang::StmtKind::Assign(v, e) = &st.kind {
                let x = eval(e, &s).unwrap();
                s.set(*v, p.var(*v).ty.wrap(x));
            }
        }
        s.get(p.lookup(var).unwrap())
    }

    #[test]
    fn wraparound_and_signedness() {
        assert_eq!(run_expr("u8 x; x = 250; x = x + 10;", "x"), 4);
        assert_eq!(run_expr("i8 x; x = 127; x = x + 1;", "x"), -128);
        assert_eq!(run_expr("u8 x; bool b; x = 200; b = x > 100;", "b"), 1);
        assert_eq!(run_expr("i8 x; bool b; x = 200; b = x > 100;", "b"), 0);
        assert_eq!(run_expr("i32 x; x = -7 / 2;", "x"), -3);
        assert_eq!(run_expr("i32 x; x = -7 % 2;", "x"), -1);
        assert_eq!(run_expr("u32 x; x = 1 << 40;", "x"), 0);
        assert_eq!(run_expr("i32 x; x = -8; x = x >> 40;", "x"), -1);
        assert_eq!(run_expr("u16 x; x = ~0;", "x"), 65535);
        assert_eq!(run_expr("i64 x; x = -9223372036854775807 - 1; x = x / -1;", "x"), i64::MIN as i128);
    }

    #[test]
    fn division_by_zero() {
        let p = parse("i32 x; i32 y; x = 1 / y;").unwrap();
        let s = Store::zeroed(&p);
        let crate::lang::StmtKind::Assign(_, e) = &p.body[0].kind else { panic!() };
        assert_eq!(eval(e, &s).unwrap_err().kind, RuntimeErrorKind::DivisionByZero);
    }
}
