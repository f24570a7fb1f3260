//! The loop language: types, syntax, parsing, interpretation, CFG lowering
//! and loop structure.

pub mod ast;
pub mod cfg;
pub mod classify;
pub mod eval;
pub mod interp;
pub mod loops;
pub mod parser;
pub mod printer;
pub mod reference;
pub mod types;

pub use ast::{BinOp, Decl, Expr, ExprKind, Program, Span, Stmt, StmtKind, UnOp, VarId};
pub use cfg::{build_cfg, Block, BlockId, Cfg, Cond, Edge, Instr};
pub use classify::{LoopClass, NonLinearReason};
pub use eval::{InputTape, RuntimeError, RuntimeErrorKind, Store, Value};
pub use loops::{extract_loops, Loop, LoopError, LoopId};
pub use parser::{parse, ParseError};
pub use printer::pretty;
pub use reference::{run_reference, RefOutcome, RefStatus};
pub use types::Ty;
