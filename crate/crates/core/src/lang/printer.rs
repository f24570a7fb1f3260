use std::fmt::Write;

use super::ast::{Decl, Expr, ExprKind, Program, Stmt, StmtKind, UnOp};

pub fn expr_to_string(decls: &[Decl], e: &Expr) -> String {
    let mut s = String::new();
    write_expr(decls, e, &mut s);
    s
}

fn write_expr(p: &[Decl], e: &Expr, out: &mut String) {
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::Var(v) => out.push_str(&p[v.0].name),
        ExprKind::Index(v, i) => {
            out.push_str(&p[v.0].name);
            out.push('[');
            write_expr(p, i, out);
            out.push(']');
        }
        ExprKind::Unary(op, inner) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::BitNot => '~',
                UnOp::Not => '!',
            });
            let atomic = matches!(
                inner.kind,
                ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) | ExprKind::Index(..)
            );
            if atomic {
                write_expr(p, inner, out);
            } else {
                out.push('(');
                write_expr(p, inner, out);
                out.push(')');
            }
        }
        ExprKind::Binary { op, lhs, rhs, .. } => {
            out.push('(');
            write_expr(p, lhs, out);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(p, rhs, out);
            out.push(')');
        }
    }
}

fn write_block(p: &Program, stmts: &[Stmt], depth: usize, out: &mut String) {
    for s in stmts {
        write_stmt(p, s, depth, out);
    }
}

fn write_stmt(p: &Program, s: &Stmt, depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    out.push_str(&pad);
    match &s.kind {
        StmtKind::Assign(v, e) => {
            let _ = writeln!(out, "{} = {};", p.var(*v).name, expr_to_string(&p.decls, e));
        }
        StmtKind::Store(v, i, e) => {
            let _ = writeln!(
                out,
                "{}[{}] = {};",
                p.var(*v).name,
                expr_to_string(&p.decls, i),
                expr_to_string(&p.decls, e)
            );
        }
        StmtKind::Nondet(v) => {
            let _ = writeln!(out, "{} = nondet();", p.var(*v).name);
        }
        StmtKind::If(c, t, e) => {
            let _ = writeln!(out, "if ({}) {{", expr_to_string(&p.decls, c));
            write_block(p, t, depth + 1, out);
            match e {
                Some(e) => {
                    let _ = writeln!(out, "{pad}}} else {{");
                    write_block(p, e, depth + 1, out);
                    let _ = writeln!(out, "{pad}}}");
                }
                None => {
                    let _ = writeln!(out, "{pad}}}");
                }
            }
        }
        StmtKind::While(c, b) => {
            let _ = writeln!(out, "while ({}) {{", expr_to_string(&p.decls, c));
            write_block(p, b, depth + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
        StmtKind::Break => out.push_str("break;\n"),
        StmtKind::Skip => out.push_str("skip;\n"),
    }
}

/// Render a program back to `.wl` source. Reparsing the output yields a
/// structurally identical program.
pub fn pretty(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        match d.len {
            Some(n) => {
                let _ = writeln!(out, "{} {}[{}];", d.ty, d.name, n);
            }
            None => {
                let _ = writeln!(out, "{} {};", d.ty, d.name);
            }
        }
    }
    write_block(p, &p.body, 0, &mut out);
    out
}
