//! Non-termination detection for small imperative loop programs.

pub mod corpus;
pub mod exec;
pub mod fuzz;
pub mod lang;
pub mod lia;
pub mod monitor;
pub mod paths;
pub mod src;
