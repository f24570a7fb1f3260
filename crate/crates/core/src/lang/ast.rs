use std::fmt;

use serde::{Deserialize, Serialize};

use super::types::Ty;

/// Index of a declared variable in [`Program::decls`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Byte range plus the line/column of its first character (both 1-based).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    pub ty: Ty,
    /// `Some(n)` for a fixed-size array of `n` elements.
    pub len: Option<usize>,
}

impl Decl {
    pub fn is_array(&self) -> bool {
        self.len.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    BitNot,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    BitAnd,
    BitOr,
    BitXor,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn is_shift(self) -> bool {
        matches!(self, BinOp::Shl | BinOp::Shr)
    }
}

/// A typed expression. `ty` is the type of the value the node produces; for
/// comparisons `operand_ty` is the common type both sides are converted to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub ty: Ty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    /// Literal as written in the source; reduced into `ty` on evaluation.
    Int(i128),
    Bool(bool),
    Var(VarId),
    Index(VarId, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary {
        op: BinOp,
        operand_ty: Ty,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    /// Calls `f` on every variable the expression reads (array bases included).
    pub fn visit_vars(&self, f: &mut impl FnMut(VarId)) {
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) => {}
            ExprKind::Var(v) => f(*v),
            ExprKind::Index(v, i) => {
                f(*v);
                i.visit_vars(f);
            }
            ExprKind::Unary(_, e) => e.visit_vars(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.visit_vars(f);
                rhs.visit_vars(f);
            }
        }
    }

    pub fn vars(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        self.visit_vars(&mut |v| {
            if !out.contains(&v) {
                out.push(v)
            }
        });
        out
    }

    pub fn has_index(&self) -> bool {
        match &self.kind {
            ExprKind::Index(..) => true,
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => false,
            ExprKind::Unary(_, e) => e.has_index(),
            ExprKind::Binary { lhs, rhs, .. } => lhs.has_index() || rhs.has_index(),
        }
    }

    /// Collect integer literals (as written) appearing in the expression.
    pub fn literals(&self, out: &mut Vec<i128>) {
        match &self.kind {
            ExprKind::Int(n) => out.push(*n),
            ExprKind::Bool(_) | ExprKind::Var(_) => {}
            ExprKind::Index(_, i) => i.literals(out),
            ExprKind::Unary(UnOp::Neg, e) => {
                if let ExprKind::Int(n) = e.kind {
                    out.push(-n);
                } else {
                    e.literals(out);
                }
            }
            ExprKind::Unary(_, e) => e.literals(out),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.literals(out);
                rhs.literals(out);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

/// Structural equality; spans are ignored.
impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Stmt {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Assign(VarId, Expr),
    Store(VarId, Expr, Expr),
    Nondet(VarId),
    If(Expr, Vec<Stmt>, Option<Vec<Stmt>>),
    While(Expr, Vec<Stmt>),
    Break,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub body: Vec<Stmt>,
}

impl Program {
    pub fn var(&self, v: VarId) -> &Decl {
        &self.decls[v.0]
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.decls.iter().position(|d| d.name == name).map(VarId)
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.decls.len()).map(VarId)
    }

    /// Every integer literal in the program, in source order.
    pub fn literals(&self) -> Vec<i128> {
        fn walk(stmts: &[Stmt], out: &mut Vec<i128>) {
            for s in stmts {
                match &s.kind {
                    StmtKind::Assign(_, e) => e.literals(out),
                    StmtKind::Store(_, i, e) => {
                        i.literals(out);
                        e.literals(out);
                    }
                    StmtKind::If(c, t, e) => {
                        c.literals(out);
                        walk(t, out);
                        if let Some(e) = e {
                            walk(e, out);
                        }
                    }
                    StmtKind::While(c, b) => {
                        c.literals(out);
                        walk(b, out);
                    }
                    StmtKind::Nondet(_) | StmtKind::Break | StmtKind::Skip => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    pub fn count_loops(&self) -> usize {
        fn walk(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match &s.kind {
                    StmtKind::If(_, t, e) => walk(t) + e.as_deref().map_or(0, walk),
                    StmtKind::While(_, b) => 1 + walk(b),
                    _ => 0,
                })
                .sum()
        }
        walk(&self.body)
    }
}
