//! Block-level CFG execution shared by replay validation and the
//! instrumented interpreter. Step accounting matches the reference
//! interpreter: one step per simple statement and per branch-condition
//! evaluation.

use super::cfg::{BlockId, Cfg, Cond, Edge, Instr};
use super::eval::{eval, is_true, RuntimeError, RuntimeErrorKind, Store, TapeReader, Value};

/// Execute the instructions of `b`. Returns `false` if the step budget ran
/// out before the block finished.
pub fn exec_block(
    cfg: &Cfg,
    b: BlockId,
    store: &mut Store,
    tape: &mut TapeReader<'_>,
    steps: &mut u64,
    budget: u64,
) -> Result<bool, RuntimeError> {
    for ins in &cfg.block(b).instrs {
        if *steps >= budget {
            return Ok(false);
        }
        *steps += 1;
        match ins {
            Instr::Assign(v, e) => {
                let x = eval(e, store)?;
                store.set(*v, cfg.vars[v.0].ty.wrap(x));
            }
            Instr::Store(v, i, e) => {
                let idx = eval(i, store)?;
                let x = cfg.vars[v.0].ty.wrap(eval(e, store)?);
                let Value::Array(a) = &mut store.vals[v.0] else {
                    unreachable!("store into scalar")
                };
                if idx < 0 || idx >= a.len() as i128 {
                    return Err(RuntimeErrorKind::IndexOutOfBounds.into());
                }
                a[idx as usize] = x;
            }
            Instr::Nondet(v) => {
                let x = tape.next(cfg.vars[v.0].ty)?;
                store.set(*v, x);
            }
            Instr::Skip | Instr::Break => {}
        }
    }
    Ok(true)
}

pub enum Branch<'a> {
    Edge(&'a Edge),
    /// No successor: the program ends here.
    End,
    /// The condition evaluation would exceed the budget.
    Budget,
}

/// Pick the outgoing edge of `b` under `store`.
pub fn choose_edge<'a>(cfg: &'a Cfg, b: BlockId, store: &Store, steps: &mut u64, budget: u64) -> Result<Branch<'a>, RuntimeError> {
    let mut edges = cfg.out_edges(b);
    let Some(first) = edges.next() else {
        return Ok(Branch::End);
    };
    let Some(cond) = first.cond.expr() else {
        return Ok(Branch::Edge(first));
    };
    if *steps >= budget {
        return Ok(Branch::Budget);
    }
    *steps += 1;
    let t = is_true(cond, store)?;
    let chosen = cfg
        .out_edges(b)
        .find(|e| match &e.cond {
            Cond::If(_) => t,
            Cond::IfNot(_) => !t,
            Cond::Always => false,
        })
        .expect("two-way branch");
    Ok(Branch::Edge(chosen))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HeaderRun {
    /// The header store sequence entered a cycle: the store at visit
    /// `first` recurs `period` visits later.
    Revisit { first: u64, period: u64 },
    /// Control left the loop (or the program ended) after `visits` header visits.
    Exited { visits: u64 },
    /// Still inside the loop after the visit budget.
    Budget { visits: u64 },
    Error(RuntimeError),
}

/// Advance from a header visit to the next visit of the same header, or
/// `None` if control leaves `region` or the program ends first.
fn next_visit(
    cfg: &Cfg,
    header: BlockId,
    region: &dyn Fn(BlockId) -> bool,
    store: &mut Store,
    tape: &mut TapeReader<'_>,
) -> Result<Option<()>, RuntimeError> {
    let mut b = header;
    let mut steps = 0u64;
    loop {
        exec_block(cfg, b, store, tape, &mut steps, u64::MAX)?;
        match choose_edge(cfg, b, store, &mut steps, u64::MAX)? {
            Branch::Edge(e) => {
                b = e.to;
                if b == header {
                    return Ok(Some(()));
                }
                if !region(b) {
                    return Ok(None);
                }
            }
            Branch::End | Branch::Budget => return Ok(None),
        }
    }
}

/// Run a deterministic loop from a header store and classify the header
/// store sequence with Brent's cycle detection (constant memory).
pub fn run_from_header(cfg: &Cfg, header: BlockId, region: &dyn Fn(BlockId) -> bool, start: &Store, max_visits: u64) -> HeaderRun {
    let tape = super::eval::InputTape::default();
    let mut reader = tape.reader();
    let mut step = |s: &mut Store| next_visit(cfg, header, region, s, &mut reader);
    // Brent: find period lam, then the first index mu of the cycle.
    let mut power = 1u64;
    let mut lam = 1u64;
    let mut tortoise = start.clone();
    let mut hare = start.clone();
    let mut visits = 0u64;
    loop {
        match step(&mut hare) {
            Err(e) => return HeaderRun::Error(e),
            Ok(None) => return HeaderRun::Exited { visits },
            Ok(Some(())) => visits += 1,
        }
        if tortoise == hare {
            break;
        }
        if visits >= max_visits {
            return HeaderRun::Budget { visits };
        }
        if power == lam {
            tortoise = hare.clone();
            power *= 2;
            lam = 0;
        }
        lam += 1;
    }
    let tape2 = super::eval::InputTape::default();
    let mut r2 = tape2.reader();
    let mut tortoise = start.clone();
    let mut hare = start.clone();
    for _ in 0..lam {
        let _ = next_visit(cfg, header, region, &mut hare, &mut r2);
    }
    let mut mu = 0u64;
    while tortoise != hare {
        let _ = next_visit(cfg, header, region, &mut tortoise, &mut r2);
        let _ = next_visit(cfg, header, region, &mut hare, &mut r2);
        mu += 1;
    }
    HeaderRun::Revisit { first: mu, period: lam }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cfg, extract_loops, parse, InputTape};

    fn header_run(src: &str, init: &[i128]) -> HeaderRun {
        let p = parse(src).unwrap();
        let cfg = build_cfg(&p);
        let l = extract_loops(&cfg).unwrap().remove(0);
        let tape = InputTape::new(init.to_vec());
        let store = Store::from_tape(&p, &mut tape.reader()).unwrap();
        run_from_header(&cfg, l.header, &|b| l.contains(b), &store, 10_000)
    }

    const FIG1: &str = "i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }";

    #[test]
    fn revisit_and_exit() {
        assert_eq!(header_run(FIG1, &[49]), HeaderRun::Revisit { first: 0, period: 2 });
        assert_eq!(header_run(FIG1, &[0]), HeaderRun::Revisit { first: 49, period: 2 });
        assert_eq!(header_run(FIG1, &[100]), HeaderRun::Exited { visits: 0 });
        assert_eq!(
            header_run("u8 x; while (x != 200) { x = x + 4; }", &[1]),
            HeaderRun::Revisit { first: 0, period: 64 }
        );
        assert_eq!(header_run("i32 x; while (x > 0) { x = x + 1; }", &[1]), HeaderRun::Budget { visits: 10_000 });
    }
}
