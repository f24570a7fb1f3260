//! Linear integer arithmetic with divisibility: formulas, simplification,
//! quantifier elimination and satisfiability.

mod cooper;
mod formula;
mod linexpr;
mod sat;
mod simplify;
mod text;

use thiserror::Error;

pub use cooper::{
    eliminate_exists, eliminate_exists_with, eliminate_forall, eliminate_forall_with, eliminate_quantifiers,
    eliminate_quantifiers_with,
};
pub use formula::{Atom, Formula, Model};
pub use linexpr::{ceil_div, floor_div, gcd, lcm, LinExpr, Var};
pub use sat::{equivalent_on, is_sat, is_sat_with, SatResult};
pub use simplify::{normalize_atom, simplify};
pub use text::parse_formula;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LiaError {
    #[error("resource budget exceeded: {0}")]
    ResourceBudgetExceeded(String),
    #[error("box of {0} points exceeds the enumeration limit")]
    BoxTooLarge(u128),
    #[error("no value for variable {0}")]
    UnboundVariable(Var),
    #[error("quantified formula where a quantifier-free one is required")]
    Quantified,
    #[error("formula syntax error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("internal solver error: {0}")]
    Internal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiaConfig {
    /// Largest formula (in tree nodes) elimination may produce.
    pub node_cap: usize,
}

impl Default for LiaConfig {
    fn default() -> Self {
        LiaConfig { node_cap: 1_000_000 }
    }
}
