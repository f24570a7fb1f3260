//! Direct AST-walking interpreter. It is the semantic reference the CFG
//! lowering and the instrumented interpreter are tested against.

use super::ast::{Program, Stmt, StmtKind};
use super::eval::{eval, is_true, InputTape, RuntimeError, Store, TapeReader, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RefStatus {
    Terminated,
    BudgetExhausted,
    Error(RuntimeError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefOutcome {
    pub status: RefStatus,
    pub steps: u64,
    pub store: Option<Store>,
}

enum Flow {
    Normal,
    Break,
}

enum Stop {
    Budget,
    Error(RuntimeError),
}

impl From<RuntimeError> for Stop {
    fn from(e: RuntimeError) -> Self {
        Stop::Error(e)
    }
}

struct Walker<'a> {
    p: &'a Program,
    tape: TapeReader<'a>,
    store: Store,
    steps: u64,
    budget: u64,
}

impl Walker<'_> {
    fn tick(&mut self) -> Result<(), Stop> {
        if self.steps >= self.budget {
            return Err(Stop::Budget);
        }
        self.steps += 1;
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, Stop> {
        for s in stmts {
            if let Flow::Break = self.stmt(s)? {
                return Ok(Flow::Break);
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, Stop> {
        match &s.kind {
            StmtKind::Assign(v, e) => {
                self.tick()?;
                let x = eval(e, &self.store)?;
                self.store.set(*v, self.p.var(*v).ty.wrap(x));
            }
            StmtKind::Store(v, i, e) => {
                self.tick()?;
                let idx = eval(i, &self.store)?;
                let x = self.p.var(*v).ty.wrap(eval(e, &self.store)?);
                let Value::Array(a) = &mut self.store.vals[v.0] else {
                    unreachable!()
                };
                if idx < 0 || idx >= a.len() as i128 {
                    return Err(Stop::Error(
                        super::eval::RuntimeErrorKind::IndexOutOfBounds.into(),
                    ));
                }
                a[idx as usize] = x;
            }
            StmtKind::Nondet(v) => {
                self.tick()?;
                let x = self.tape.next(self.p.var(*v).ty)?;
                self.store.set(*v, x);
            }
            StmtKind::Skip => self.tick()?,
            StmtKind::Break => {
                self.tick()?;
                return Ok(Flow::Break);
            }
            StmtKind::If(c, t, e) => {
                self.tick()?;
                if is_true(c, &self.store)? {
                    return self.block(t);
                } else if let Some(e) = e {
                    return self.block(e);
                }
            }
            StmtKind::While(c, b) => loop {
                self.tick()?;
                if !is_true(c, &self.store)? {
                    break;
                }
                if let Flow::Break = self.block(b)? {
                    break;
                }
            },
        }
        Ok(Flow::Normal)
    }
}

/// Run `p` from the tape-initialised store with a step budget.
pub fn run_reference(p: &Program, tape: &InputTape, budget: u64) -> RefOutcome {
    let mut reader = tape.reader();
    let store = match Store::from_tape(p, &mut reader) {
        Ok(s) => s,
        Err(e) => {
            return RefOutcome {
                status: RefStatus::Error(e),
                steps: 0,
                store: None,
            }
        }
    };
    let mut w = Walker {
        p,
        tape: reader,
        store,
        steps: 0,
        budget,
    };
    let status = match w.block(&p.body) {
        Ok(_) => RefStatus::Terminated,
        Err(Stop::Budget) => RefStatus::BudgetExhausted,
        Err(Stop::Error(e)) => RefStatus::Error(e),
    };
    RefOutcome {
        store: Some(w.store),
        status,
        steps: w.steps,
    }
}
