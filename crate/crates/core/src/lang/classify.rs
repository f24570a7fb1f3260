//! Syntactic gate deciding whether a loop is eligible for symbolic
//! revisit-condition inference (LINEAR) or must be monitored at run time.

use serde::{Deserialize, Serialize};

use super::ast::{BinOp, Expr, ExprKind, UnOp, VarId};
use super::cfg::{Cfg, Instr};
use super::eval::{eval, Store};
use super::loops::Loop;
use super::types::Ty;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NonLinearReason {
    NestedLoop,
    ArrayAccess,
    Nondet,
    NonLinearAssignment { var: String },
    NonLinearCondition,
    PathExplosion,
    AnalysisBudget,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", content = "reasons", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LoopClass {
    Linear,
    NonLinear(Vec<NonLinearReason>),
}

/// Effect of one linear assignment on its destination variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Update {
    /// `x := wrap(x + c)`
    Offset(i128),
    /// `x := c` (already reduced into the destination type)
    Const(i128),
}

/// Value of a variable-free expression; `None` if it reads variables or faults.
pub fn const_value(e: &Expr) -> Option<i128> {
    if !e.vars().is_empty() {
        return None;
    }
    eval(e, &Store { vals: Vec::new() }).ok()
}

fn is_var(e: &Expr, v: VarId) -> bool {
    matches!(e.kind, ExprKind::Var(w) if w == v)
}

/// Recognise `x = x + c`, `x = c + x`, `x = x - c`, `x = x` and `x = c`.
pub fn linear_update(v: VarId, dest: Ty, e: &Expr) -> Option<Update> {
    if let Some(c) = const_value(e) {
        return Some(Update::Const(dest.wrap(c)));
    }
    if is_var(e, v) {
        return Some(Update::Offset(0));
    }
    let ExprKind::Binary {
        op,
        operand_ty,
        lhs,
        rhs,
    } = &e.kind
    else {
        return None;
    };
    if *operand_ty != dest {
        return None;
    }
    match op {
        BinOp::Add if is_var(lhs, v) => const_value(rhs).map(|c| Update::Offset(dest.wrap(c))),
        BinOp::Add if is_var(rhs, v) => const_value(lhs).map(|c| Update::Offset(dest.wrap(c))),
        BinOp::Sub if is_var(lhs, v) => const_value(rhs).map(|c| Update::Offset(-dest.wrap(c))),
        _ => None,
    }
}

/// Recognise `x = x >> c` for an unsigned `x` and `0 <= c < width`.
pub fn shift_update(v: VarId, dest: Ty, e: &Expr) -> Option<u32> {
    let ExprKind::Binary {
        op: BinOp::Shr,
        operand_ty,
        lhs,
        rhs,
    } = &e.kind
    else {
        return None;
    };
    if dest.is_signed() || dest == Ty::Bool || *operand_ty != dest || !is_var(lhs, v) {
        return None;
    }
    let c = const_value(rhs)?;
    (0..dest.width() as i128).contains(&c).then_some(c as u32)
}

fn fits(inner: Ty, outer: Ty) -> bool {
    outer.min() <= inner.min() && inner.max() <= outer.max()
}

fn is_linear_operand(e: &Expr, operand_ty: Ty) -> bool {
    match &e.kind {
        ExprKind::Var(_) => fits(e.ty, operand_ty),
        _ => const_value(e).is_some() && !e.has_index(),
    }
}

/// Boolean combination of `a ⋈ b` atoms where each side is a scalar variable
/// (converted losslessly) or a constant.
pub fn is_linear_condition(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Bool(_) | ExprKind::Int(_) => true,
        ExprKind::Var(_) => true,
        ExprKind::Unary(UnOp::Not, inner) => is_linear_condition(inner),
        ExprKind::Binary {
            op: BinOp::And | BinOp::Or,
            lhs,
            rhs,
            ..
        } => is_linear_condition(lhs) && is_linear_condition(rhs),
        ExprKind::Binary {
            op,
            operand_ty,
            lhs,
            rhs,
        } if op.is_comparison() => {
            is_linear_operand(lhs, *operand_ty) && is_linear_operand(rhs, *operand_ty)
        }
        _ => const_value(e).is_some(),
    }
}

pub fn classify_loop(cfg: &Cfg, l: &Loop) -> LoopClass {
    let mut reasons = Vec::new();
    let mut add = |r: NonLinearReason| {
        if !reasons.contains(&r) {
            reasons.push(r);
        }
    };
    if l.headers.len() > 1 {
        add(NonLinearReason::NestedLoop);
    }
    for &b in &l.region {
        for ins in &cfg.block(b).instrs {
            match ins {
                Instr::Store(..) => add(NonLinearReason::ArrayAccess),
                Instr::Nondet(_) => add(NonLinearReason::Nondet),
                Instr::Assign(v, e) => {
                    if e.has_index() {
                        add(NonLinearReason::ArrayAccess);
                    } else if linear_update(*v, cfg.vars[v.0].ty, e).is_none() {
                        add(NonLinearReason::NonLinearAssignment {
                            var: cfg.vars[v.0].name.clone(),
                        });
                    }
                }
                Instr::Skip | Instr::Break => {}
            }
        }
        for e in cfg.out_edges(b) {
            if let Some(c) = e.cond.expr() {
                if c.has_index() {
                    add(NonLinearReason::ArrayAccess);
                } else if !is_linear_condition(c) {
                    add(NonLinearReason::NonLinearCondition);
                }
            }
        }
    }
    if reasons.is_empty() {
        LoopClass::Linear
    } else {
        LoopClass::NonLinear(reasons)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cfg, extract_loops, parse};

    fn class_of(src: &str) -> LoopClass {
        let cfg = build_cfg(&parse(src).unwrap());
        extract_loops(&cfg).unwrap().pop().unwrap().class
    }

    #[test]
    fn running_example_is_linear() {
        assert_eq!(
            class_of("i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }"),
            LoopClass::Linear
        );
    }

    #[test]
    fn multiplication_is_nonlinear() {
        let c = class_of("i32 x; while (x < 100) { x = x * 2; }");
        assert_eq!(
            c,
            LoopClass::NonLinear(vec![NonLinearReason::NonLinearAssignment { var: "x".into() }])
        );
    }

    #[test]
    fn nondet_is_nonlinear() {
        let c = class_of("i32 x; while (x < 100) { x = nondet(); }");
        assert_eq!(c, LoopClass::NonLinear(vec![NonLinearReason::Nondet]));
    }

    #[test]
    fn other_gates() {
        assert!(matches!(
            class_of("i32 x; i32 a[3]; while (x < 3) { a[x] = 1; x = x + 1; }"),
            LoopClass::NonLinear(_)
        ));
        assert!(matches!(
            class_of("i32 x; while (x + 1 < 3) { x = x + 1; }"),
            LoopClass::NonLinear(_)
        ));
        assert!(matches!(
            class_of("i32 x; i32 y; while (x < 3) { x = y; }"),
            LoopClass::NonLinear(_)
        ));
        assert_eq!(
            class_of("u8 x; i32 y; while (x != y && !(y > 5)) { x = x - 3; y = 2; }"),
            LoopClass::Linear
        );
        // u32 compared against i32 converts lossy
        assert!(matches!(
            class_of("u32 x; i32 y; while (x < y) { x = x + 1; }"),
            LoopClass::NonLinear(_)
        ));
    }

    #[test]
    fn updates() {
        let p = parse("u8 x; x = x - 3; x = 300; x = 2 + x; x = x >> 1;").unwrap();
        let ups: Vec<_> = p
            .body
            .iter()
            .map(|s| match &s.kind {
                crate::lang::StmtKind::Assign(v, e) => linear_update(*v, Ty::U8, e),
                _ => None,
            })
            .collect();
        assert_eq!(
            ups,
            vec![
                Some(Update::Offset(-3)),
                Some(Update::Const(44)),
                Some(Update::Offset(2)),
                None
            ]
        );
        let crate::lang::StmtKind::Assign(v, e) = &p.body[3].kind else { panic!() };
        assert_eq!(shift_update(*v, Ty::U8, e), Some(1));
    }
}
