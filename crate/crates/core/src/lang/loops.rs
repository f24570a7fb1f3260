//! Dominators, back edges and natural loops.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Expr, Span};
use super::cfg::{BlockId, Cfg};
use super::classify::{classify_loop, LoopClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LoopId(pub usize);

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LoopError {
    #[error("irreducible control flow: edge {from} -> {to} enters a cycle without a dominating header")]
    IrreducibleCfg { from: BlockId, to: BlockId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    pub id: LoopId,
    pub header: BlockId,
    /// Blocks of the natural loop, header included.
    pub region: BTreeSet<BlockId>,
    /// The loop's own header plus the headers of nested loops in the region.
    pub headers: BTreeSet<BlockId>,
    /// Blocks outside the region that the region can branch to.
    pub exits: BTreeSet<BlockId>,
    /// Conditions of every conditional edge leaving a region block.
    pub conditions: Vec<Expr>,
    pub span: Option<Span>,
    pub class: LoopClass,
}

impl Loop {
    pub fn contains(&self, b: BlockId) -> bool {
        self.region.contains(&b)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.class, LoopClass::Linear)
    }

    /// Source line of the `while` statement, for reports.
    pub fn line(&self) -> usize {
        self.span.map_or(0, |s| s.line)
    }
}

/// Immediate-dominator-free dominator sets by the classic iterative scheme.
/// Returns `dom[b]` = set of blocks dominating `b` (reachable blocks only).
pub fn dominators(cfg: &Cfg) -> Vec<BTreeSet<BlockId>> {
    let n = cfg.len();
    let all: BTreeSet<BlockId> = (0..n).map(BlockId).collect();
    let mut dom = vec![all; n];
    dom[cfg.entry.0] = BTreeSet::from([cfg.entry]);
    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..n {
            if b == cfg.entry.0 {
                continue;
            }
            let mut preds = cfg.predecessors(BlockId(b));
            let Some(first) = preds.next() else { continue };
            let mut d = dom[first.0].clone();
            for p in preds {
                d = d.intersection(&dom[p.0]).copied().collect();
            }
            d.insert(BlockId(b));
            if d != dom[b] {
                dom[b] = d;
                changed = true;
            }
        }
    }
    dom
}

/// `(header, region, exits)` for every natural loop, merging back edges that
/// share a header.
pub(crate) fn extract_regions(cfg: &Cfg) -> Vec<(BlockId, BTreeSet<BlockId>, BTreeSet<BlockId>)> {
    let dom = dominators(cfg);
    let mut by_header: BTreeMap<BlockId, BTreeSet<BlockId>> = BTreeMap::new();
    for e in &cfg.edges {
        if dom[e.from.0].contains(&e.to) {
            let region = by_header.entry(e.to).or_default();
            region.insert(e.to);
            let mut stack = vec![e.from];
            while let Some(x) = stack.pop() {
                if region.insert(x) {
                    stack.extend(cfg.predecessors(x));
                }
            }
        }
    }
    by_header
        .into_iter()
        .map(|(h, region)| {
            let exits = region
                .iter()
                .flat_map(|&b| cfg.successors(b))
                .filter(|s| !region.contains(s))
                .collect();
            (h, region, exits)
        })
        .collect()
}

/// One [`Loop`] per natural loop, innermost first (ties broken by header id).
pub fn extract_loops(cfg: &Cfg) -> Result<Vec<Loop>, LoopError> {
    let dom = dominators(cfg);
    // Every cycle must pass through a back edge: removing back edges leaves a DAG.
    let mut indeg = vec![0usize; cfg.len()];
    let forward: Vec<_> = cfg
        .edges
        .iter()
        .filter(|e| !dom[e.from.0].contains(&e.to))
        .collect();
    for e in &forward {
        indeg[e.to.0] += 1;
    }
    let mut queue: Vec<usize> = (0..cfg.len()).filter(|&b| indeg[b] == 0).collect();
    let mut seen = 0;
    while let Some(b) = queue.pop() {
        seen += 1;
        for e in forward.iter().filter(|e| e.from.0 == b) {
            indeg[e.to.0] -= 1;
            if indeg[e.to.0] == 0 {
                queue.push(e.to.0);
            }
        }
    }
    if seen != cfg.len() {
        let e = forward.iter().find(|e| indeg[e.to.0] > 0).expect("cycle edge");
        return Err(LoopError::IrreducibleCfg {
            from: e.from,
            to: e.to,
        });
    }

    let mut regions = extract_regions(cfg);
    regions.sort_by_key(|(h, r, _)| (r.len(), *h));
    let mut loops = Vec::with_capacity(regions.len());
    for (i, (header, region, exits)) in regions.iter().enumerate() {
        let headers = regions
            .iter()
            .filter(|(h, _, _)| region.contains(h))
            .map(|(h, _, _)| *h)
            .collect();
        let conditions = region
            .iter()
            .flat_map(|&b| cfg.out_edges(b))
            .filter_map(|e| match &e.cond {
                super::cfg::Cond::If(c) => Some(c.clone()),
                _ => None,
            })
            .collect();
        let mut l = Loop {
            id: LoopId(i),
            header: *header,
            region: region.clone(),
            headers,
            exits: exits.clone(),
            conditions,
            span: cfg.block(*header).loop_span,
            class: LoopClass::Linear,
        };
        l.class = classify_loop(cfg, &l);
        loops.push(l);
    }
    Ok(loops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cfg, parse};

    #[test]
    fn running_example_loop() {
        let cfg = build_cfg(
            &parse("i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }")
                .unwrap(),
        );
        let loops = extract_loops(&cfg).unwrap();
        assert_eq!(loops.len(), 1);
        let l = &loops[0];
        assert_eq!(l.header, BlockId(1));
        assert_eq!(l.exits, BTreeSet::from([BlockId(3)]));
        assert_eq!(
            l.region,
            [1, 2, 4, 5, 6].into_iter().map(BlockId).collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn loop_free() {
        let cfg = build_cfg(&parse("i32 x; if (x < 1) { x = 2; }").unwrap());
        assert!(extract_loops(&cfg).unwrap().is_empty());
    }

    #[test]
    fn nested_inner_first() {
        let cfg = build_cfg(
            &parse("i32 a; i32 b; while(a<3){while(b<3){b=b+1;}a=a+1;}").unwrap(),
        );
        let loops = extract_loops(&cfg).unwrap();
        assert_eq!(loops.len(), 2);
        assert!(loops[0].region.is_subset(&loops[1].region));
        assert!(loops[0].region.len() < loops[1].region.len());
        assert_eq!(loops[1].headers.len(), 2);
        assert_eq!(loops[0].headers.len(), 1);
    }
}
