//! Lowering of structured programs to a control-flow graph. Each maximal
//! straight-line run of simple statements is one block; branch conditions
//! live on edges.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Decl, Expr, Program, Span, Stmt, StmtKind, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instr {
    Assign(VarId, Expr),
    Store(VarId, Expr, Expr),
    Nondet(VarId),
    Skip,
    Break,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cond {
    Always,
    If(Expr),
    IfNot(Expr),
}

impl Cond {
    pub fn expr(&self) -> Option<&Expr> {
        match self {
            Cond::Always => None,
            Cond::If(e) | Cond::IfNot(e) => Some(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: BlockId,
    pub to: BlockId,
    pub cond: Cond,
}

/// A branch condition together with the loop header it guards, if it is a
/// `while` condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Guard {
    pub expr: Expr,
    pub header: Option<BlockId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub id: BlockId,
    pub instrs: Vec<Instr>,
    /// Indices into [`Cfg::guards`] of every enclosing branch condition,
    /// outermost first.
    pub guards: Vec<usize>,
    /// Source span of the `while` statement for header blocks.
    pub loop_span: Option<Span>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub vars: Vec<Decl>,
    pub blocks: Vec<Block>,
    pub edges: Vec<Edge>,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub entry: BlockId,
    pub headers: BTreeSet<BlockId>,
    pub exits: BTreeSet<BlockId>,
    pub guards: Vec<Guard>,
}

impl Cfg {
    pub fn block(&self, b: BlockId) -> &Block {
        &self.blocks[b.0]
    }

    pub fn out_edges(&self, b: BlockId) -> impl Iterator<Item = &Edge> + '_ {
        self.succs[b.0].iter().map(move |&e| &self.edges[e])
    }

    pub fn successors(&self, b: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        self.out_edges(b).map(|e| e.to)
    }

    pub fn predecessors(&self, b: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        self.preds[b.0].iter().map(move |&e| self.edges[e].from)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

struct Builder {
    blocks: Vec<Block>,
    edges: Vec<Edge>,
    guards: Vec<Guard>,
    headers: Vec<BlockId>,
    /// (header, exit) of the enclosing loops.
    loops: Vec<(BlockId, BlockId)>,
}

impl Builder {
    fn new_block(&mut self, guards: &[usize]) -> BlockId {
        let id = BlockId(self.blocks.len());
        self.blocks.push(Block {
            id,
            instrs: Vec::new(),
            guards: guards.to_vec(),
            loop_span: None,
        });
        id
    }

    fn edge(&mut self, from: BlockId, to: BlockId, cond: Cond) {
        self.edges.push(Edge { from, to, cond });
    }

    fn lower(&mut self, stmts: &[Stmt], mut cur: BlockId, guards: &[usize]) -> BlockId {
        for s in stmts {
            cur = self.lower_stmt(s, cur, guards);
        }
        cur
    }

    fn lower_stmt(&mut self, s: &Stmt, cur: BlockId, guards: &[usize]) -> BlockId {
        match &s.kind {
            StmtKind::Assign(v, e) => self.blocks[cur.0].instrs.push(Instr::Assign(*v, e.clone())),
            StmtKind::Store(v, i, e) => self.blocks[cur.0]
                .instrs
                .push(Instr::Store(*v, i.clone(), e.clone())),
            StmtKind::Nondet(v) => self.blocks[cur.0].instrs.push(Instr::Nondet(*v)),
            StmtKind::Skip => self.blocks[cur.0].instrs.push(Instr::Skip),
            StmtKind::Break => {
                self.blocks[cur.0].instrs.push(Instr::Break);
                let (_, exit) = *self.loops.last().expect("break outside loop");
                self.edge(cur, exit, Cond::Always);
                // Anything after a break is unreachable; it is lowered into a
                // block that gets pruned.
                return self.new_block(guards);
            }
            StmtKind::If(c, t, e) => {
                let g = self.guards.len();
                self.guards.push(Guard {
                    expr: c.clone(),
                    header: None,
                });
                let inner: Vec<usize> = guards.iter().copied().chain([g]).collect();
                let then_b = self.new_block(&inner);
                let else_b = e.as_ref().map(|_| self.new_block(&inner));
                let join = self.new_block(guards);
                self.edge(cur, then_b, Cond::If(c.clone()));
                self.edge(cur, else_b.unwrap_or(join), Cond::IfNot(c.clone()));
                let t_end = self.lower(t, then_b, &inner);
                self.edge(t_end, join, Cond::Always);
                if let (Some(e), Some(else_b)) = (e, else_b) {
                    let e_end = self.lower(e, else_b, &inner);
                    self.edge(e_end, join, Cond::Always);
                }
                return join;
            }
            StmtKind::While(c, body) => {
                let header = self.new_block(guards);
                self.blocks[header.0].loop_span = Some(s.span);
                self.headers.push(header);
                let g = self.guards.len();
                self.guards.push(Guard {
                    expr: c.clone(),
                    header: Some(header),
                });
                let inner: Vec<usize> = guards.iter().copied().chain([g]).collect();
                let body_b = self.new_block(&inner);
                let exit = self.new_block(guards);
                self.edge(cur, header, Cond::Always);
                self.edge(header, body_b, Cond::If(c.clone()));
                self.edge(header, exit, Cond::IfNot(c.clone()));
                self.loops.push((header, exit));
                let end = self.lower(body, body_b, &inner);
                self.loops.pop();
                self.edge(end, header, Cond::Always);
                return exit;
            }
        }
        cur
    }
}

/// Lower a well-typed program to its CFG. Unreachable blocks (code after
/// `break`) are dropped and the remaining blocks renumbered in creation order.
pub fn build_cfg(p: &Program) -> Cfg {
    let mut b = Builder {
        blocks: Vec::new(),
        edges: Vec::new(),
        guards: Vec::new(),
        headers: Vec::new(),
        loops: Vec::new(),
    };
    let entry = b.new_block(&[]);
    b.lower(&p.body, entry, &[]);

    // Reachability from the entry.
    let n = b.blocks.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &b.edges {
        succ[e.from.0].push(e.to.0);
    }
    let mut reach = vec![false; n];
    let mut stack = vec![entry.0];
    reach[entry.0] = true;
    while let Some(x) = stack.pop() {
        for &y in &succ[x] {
            if !reach[y] {
                reach[y] = true;
                stack.push(y);
            }
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut blocks = Vec::new();
    for (old, blk) in b.blocks.into_iter().enumerate() {
        if reach[old] {
            remap[old] = blocks.len();
            blocks.push(Block {
                id: BlockId(blocks.len()),
                ..blk
            });
        }
    }
    let edges: Vec<Edge> = b
        .edges
        .into_iter()
        .filter(|e| reach[e.from.0])
        .map(|e| Edge {
            from: BlockId(remap[e.from.0]),
            to: BlockId(remap[e.to.0]),
            cond: e.cond,
        })
        .collect();
    let mut succs = vec![Vec::new(); blocks.len()];
    let mut preds = vec![Vec::new(); blocks.len()];
    for (i, e) in edges.iter().enumerate() {
        succs[e.from.0].push(i);
        preds[e.to.0].push(i);
    }
    let headers: BTreeSet<BlockId> = b
        .headers
        .iter()
        .filter(|h| reach[h.0])
        .map(|h| BlockId(remap[h.0]))
        .collect();
    let mut cfg = Cfg {
        vars: p.decls.clone(),
        blocks,
        edges,
        succs,
        preds,
        entry: BlockId(0),
        headers,
        exits: BTreeSet::new(),
        guards: b
            .guards
            .into_iter()
            .map(|g| Guard {
                header: g.header.map(|h| BlockId(remap[h.0])),
                ..g
            })
            .collect(),
    };
    cfg.exits = super::loops::extract_regions(&cfg)
        .into_iter()
        .flat_map(|(_, _, exits)| exits)
        .collect();
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    #[test]
    fn running_example_blocks() {
        let p = parse("i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }")
            .unwrap();
        let cfg = build_cfg(&p);
        // a, b (header), c (branch), d (exit), e (+1), f (-1), g (join)
        assert_eq!(cfg.len(), 7);
        assert_eq!(cfg.headers, BTreeSet::from([BlockId(1)]));
        assert_eq!(cfg.exits, BTreeSet::from([BlockId(3)]));
        let succ = |b: usize| cfg.successors(BlockId(b)).map(|x| x.0).collect::<Vec<_>>();
        assert_eq!(succ(1), vec![2, 3]);
        assert_eq!(succ(2), vec![4, 5]);
        assert_eq!(succ(4), vec![6]);
        assert_eq!(succ(5), vec![6]);
        assert_eq!(succ(6), vec![1]);
        assert!(succ(3).is_empty());
        assert_eq!(cfg.block(BlockId(4)).instrs.len(), 1);
    }

    #[test]
    fn straight_line_has_single_block() {
        let cfg = build_cfg(&parse("i32 x; x = 1;").unwrap());
        assert_eq!(cfg.len(), 1);
        assert!(cfg.headers.is_empty() && cfg.exits.is_empty());
    }

    #[test]
    fn single_entry_without_predecessors() {
        let cfg = build_cfg(
            &parse("i32 a; i32 b; while (a < 3) { while (b < 3) { b = b + 1; } a = a + 1; }")
                .unwrap(),
        );
        assert_eq!(cfg.predecessors(cfg.entry).count(), 0);
        let no_preds = (0..cfg.len())
            .filter(|&b| cfg.predecessors(BlockId(b)).count() == 0)
            .count();
        assert_eq!(no_preds, 1);
        assert_eq!(cfg.headers.len(), 2);
    }

    #[test]
    fn code_after_break_is_pruned() {
        let cfg = build_cfg(&parse("i32 x; while (true) { break; x = 1; }").unwrap());
        assert!(cfg
            .blocks
            .iter()
            .all(|b| !b.instrs.iter().any(|i| matches!(i, Instr::Assign(..)))));
    }
}
