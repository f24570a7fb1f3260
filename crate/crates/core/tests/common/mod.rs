//! Shared test oracles and generators. Everything here is deliberately
//! naive: concrete enumeration, no symbolic reasoning.

#![allow(dead_code)]

use std::collections::BTreeMap;

use loopwatch::lia::{Atom, Formula, LinExpr, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Bound placed on outer quantified variables whose body is itself quantified.
pub const GUARD: i128 = 16;

pub type Env = BTreeMap<Var, i128>;

fn value(e: &LinExpr, env: &Env) -> i128 {
    e.terms().map(|(v, c)| c * env[v]).sum::<i128>() + e.konst()
}

fn atom_holds(a: &Atom, env: &Env) -> bool {
    match a {
        Atom::Le(e) => value(e, env) <= 0,
        Atom::Eq(e) => value(e, env) == 0,
        Atom::Ne(e) => value(e, env) != 0,
        Atom::Dvd(d, e) => value(e, env) % d == 0,
        Atom::NDvd(d, e) => value(e, env) % d != 0,
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

/// Candidate values for `v` that decide `∃v. body` when `body` is
/// quantifier-free and every other variable is fixed by `env`: around each
/// point where a comparison flips, one full period of the divisibility atoms
/// on both sides.
fn window(body: &Formula, v: &Var, env: &Env) -> Vec<i128> {
    let mut period = 1i128;
    let mut pts = vec![0i128];
    let mut walk = |a: &Atom| {
        let e = a.expr();
        let c = e.coeff(v);
        if c == 0 {
            return;
        }
        let rest = value(&e.without(v), &{
            let mut m = env.clone();
            m.insert(v.clone(), 0);
            m
        });
        match a {
            Atom::Dvd(d, _) | Atom::NDvd(d, _) => period = period / gcd(period, *d) * d,
            _ => pts.push(-rest / c),
        }
    };
    body.visit_atoms(&mut walk);
    let mut out = Vec::new();
    for p in pts {
        out.extend(p - period - 2..=p + period + 2);
    }
    out.sort();
    out.dedup();
    out
}

fn guarded(body: &Formula, v: &Var, exists: bool) -> bool {
    let lo = if exists { Formula::ge(v.clone(), -GUARD) } else { Formula::lt(v.clone(), -GUARD) };
    let hi = if exists { Formula::le(v.clone(), GUARD) } else { Formula::gt(v.clone(), GUARD) };
    match body {
        Formula::And(cs) if exists => cs.len() == 3 && cs[0] == lo && cs[1] == hi,
        Formula::Or(cs) if !exists => cs.len() == 3 && cs[0] == lo && cs[1] == hi,
        _ => false,
    }
}

/// Exact truth value of a formula from the generator family below.
pub fn oracle_eval(f: &Formula, env: &mut Env) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(a) => atom_holds(a, env),
        Formula::Not(g) => !oracle_eval(g, env),
        Formula::And(gs) => gs.iter().all(|g| oracle_eval(g, env)),
        Formula::Or(gs) => gs.iter().any(|g| oracle_eval(g, env)),
        Formula::Exists(v, g) | Formula::Forall(v, g) => {
            let exists = matches!(f, Formula::Exists(..));
            let cands: Vec<i128> = if g.is_quantifier_free() {
                window(g, v, env)
            } else {
                assert!(guarded(g, v, exists), "unguarded nested quantifier in oracle input");
                (-GUARD..=GUARD).collect()
            };
            let saved = env.get(v).copied();
            let mut result = !exists;
            for t in cands {
                env.insert(v.clone(), t);
                if oracle_eval(g, env) == exists {
                    result = exists;
                    break;
                }
            }
            match saved {
                Some(x) => env.insert(v.clone(), x),
                None => env.remove(v),
            };
            result
        }
    }
}

/// Random formulas: coefficients in [-8, 8], divisors in [1, 6], up to three
/// free variables and up to two quantifiers.
pub struct FormulaGen {
    pub rng: ChaCha8Rng,
}

impl FormulaGen {
    fn lin(&mut self, vars: &[Var]) -> LinExpr {
        loop {
            let mut e = LinExpr::constant(self.rng.gen_range(-20..=20));
            for v in vars {
                if self.rng.gen_bool(0.6) {
                    e = e + LinExpr::term(self.rng.gen_range(-8..=8), v.clone());
                }
            }
            if !e.is_const() {
                return e;
            }
        }
    }

    fn atom(&mut self, vars: &[Var], must: Option<&Var>) -> Formula {
        let mut e = self.lin(vars);
        if let Some(v) = must {
            if !e.mentions(v) {
                let c = loop {
                    let c: i128 = self.rng.gen_range(-8..=8);
                    if c != 0 {
                        break c;
                    }
                };
                e = e + LinExpr::term(c, v.clone());
            }
        }
        let z = LinExpr::constant(0);
        match self.rng.gen_range(0..7) {
            0 => Formula::lt(e, z),
            1 => Formula::le(e, z),
            2 => Formula::eq(e, z),
            3 => Formula::ne(e, z),
            4 => Formula::gt(e, z),
            5 => Formula::ge(e, z),
            _ => Formula::dvd(self.rng.gen_range(1..=6), e),
        }
    }

    /// Quantifier-free formula with 1..=max_atoms atoms; `must` appears in at
    /// least one of them.
    pub fn qf(&mut self, vars: &[Var], must: Option<&Var>, max_atoms: usize) -> Formula {
        let n = self.rng.gen_range(1..=max_atoms);
        let mut parts: Vec<Formula> = (0..n)
            .map(|i| self.atom(vars, if i == 0 { must } else { None }))
            .collect();
        while parts.len() > 1 {
            let b = parts.pop().unwrap();
            let a = parts.pop().unwrap();
            let f = match self.rng.gen_range(0..5) {
                0 | 1 => Formula::and([a, b]),
                2 | 3 => Formula::or([a, b]),
                _ => Formula::and([Formula::not(a), b]),
            };
            let i = self.rng.gen_range(0..=parts.len());
            parts.insert(i, f);
        }
        parts.pop().unwrap()
    }

    fn quant(&mut self, v: Var, body: Formula) -> Formula {
        if self.rng.gen_bool(0.5) {
            Formula::exists(v, body)
        } else {
            Formula::forall(v, body)
        }
    }

    /// A formula and its free variables.
    pub fn formula(&mut self) -> (Formula, Vec<Var>) {
        let nfree = self.rng.gen_range(1..=3);
        let free: Vec<Var> = ["x", "y", "z"][..nfree].iter().map(|s| Var::new(s)).collect();
        let (k1, k2) = (Var::new("k"), Var::new("j"));
        let nq = self.rng.gen_range(0..=2);
        let with = |vs: &[Var], extra: &[&Var]| -> Vec<Var> {
            vs.iter().cloned().chain(extra.iter().map(|v| (*v).clone())).collect()
        };
        let f = match nq {
            0 => self.qf(&free, None, 4),
            1 => {
                let body = self.qf(&with(&free, &[&k1]), Some(&k1), 4);
                let q = self.quant(k1.clone(), body);
                if self.rng.gen_bool(0.3) {
                    let side = self.qf(&free, None, 2);
                    Formula::or([side, q])
                } else {
                    q
                }
            }
            _ if self.rng.gen_bool(0.5) => {
                // Two sibling quantifiers.
                let b1 = self.qf(&with(&free, &[&k1]), Some(&k1), 3);
                let b2 = self.qf(&with(&free, &[&k2]), Some(&k2), 3);
                let (q1, q2) = (self.quant(k1.clone(), b1), self.quant(k2.clone(), b2));
                if self.rng.gen_bool(0.5) {
                    Formula::and([q1, q2])
                } else {
                    Formula::or([q1, q2])
                }
            }
            _ => {
                // Nested: the outer variable is guarded to [-GUARD, GUARD].
                let inner_body = self.qf(&with(&free, &[&k1, &k2]), Some(&k2), 3);
                let inner = self.quant(k2.clone(), inner_body);
                if self.rng.gen_bool(0.5) {
                    Formula::exists(
                        k1.clone(),
                        Formula::And(vec![
                            Formula::ge(k1.clone(), -GUARD),
                            Formula::le(k1.clone(), GUARD),
                            inner,
                        ]),
                    )
                } else {
                    Formula::forall(
                        k1.clone(),
                        Formula::Or(vec![
                            Formula::lt(k1.clone(), -GUARD),
                            Formula::gt(k1.clone(), GUARD),
                            inner,
                        ]),
                    )
                }
            }
        };
        (f, free)
    }
}

/// Points of `[-r, r]^n`: all of them when the box has at most `limit`
/// points, otherwise the corners, the axes and a random sample.
pub fn box_points(n: usize, r: i128, limit: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<i128>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(n as u32);
    if total <= limit {
        return (0..total)
            .map(|mut i| {
                (0..n)
                    .map(|_| {
                        let x = (i % side) as i128 - r;
                        i /= side;
                        x
                    })
                    .collect()
            })
            .collect();
    }
    let mut pts: Vec<Vec<i128>> = Vec::new();
    for mask in 0..(1usize << n) {
        pts.push((0..n).map(|b| if mask >> b & 1 == 1 { r } else { -r }).collect());
    }
    for axis in 0..n {
        for x in -r..=r {
            let mut p = vec![0; n];
            p[axis] = x;
            pts.push(p);
        }
    }
    while pts.len() < limit {
        pts.push((0..n).map(|_| rng.gen_range(-r..=r)).collect());
    }
    pts
}

/// Slot-indexed form of a formula for fast repeated evaluation by the same
/// rules as [`oracle_eval`].
pub enum Compiled {
    Const(bool),
    Atom { kind: u8, d: i128, coeffs: Vec<(usize, i128)>, k: i128 },
    Not(Box<Compiled>),
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
    Quant { exists: bool, slot: usize, period: i128, qfree: bool, body: Box<Compiled> },
}

fn slot_of(v: &Var, slots: &mut Vec<Var>) -> usize {
    match slots.iter().position(|s| s == v) {
        Some(i) => i,
        None => {
            slots.push(v.clone());
            slots.len() - 1
        }
    }
}

/// Compile `f`; the first slots are `free` in order, bound variables follow.
pub fn compile(f: &Formula, slots: &mut Vec<Var>) -> Compiled {
    match f {
        Formula::True => Compiled::Const(true),
        Formula::False => Compiled::Const(false),
        Formula::Atom(a) => {
            let (kind, d) = match a {
                Atom::Le(_) => (0, 1),
                Atom::Eq(_) => (1, 1),
                Atom::Ne(_) => (2, 1),
                Atom::Dvd(d, _) => (3, *d),
                Atom::NDvd(d, _) => (4, *d),
            };
            let e = a.expr();
            let coeffs = e.terms().map(|(v, c)| (slot_of(v, slots), c)).collect();
            Compiled::Atom { kind, d, coeffs, k: e.konst() }
        }
        Formula::Not(g) => Compiled::Not(Box::new(compile(g, slots))),
        Formula::And(gs) => Compiled::And(gs.iter().map(|g| compile(g, slots)).collect()),
        Formula::Or(gs) => Compiled::Or(gs.iter().map(|g| compile(g, slots)).collect()),
        Formula::Exists(v, g) | Formula::Forall(v, g) => {
            let exists = matches!(f, Formula::Exists(..));
            let qfree = g.is_quantifier_free();
            if !qfree {
                assert!(guarded(g, v, exists), "unguarded nested quantifier in oracle input");
            }
            let mut period = 1i128;
            g.visit_atoms(&mut |a| {
                if let Atom::Dvd(d, e) | Atom::NDvd(d, e) = a {
                    if e.mentions(v) {
                        period = period / gcd(period, *d) * d;
                    }
                }
            });
            let slot = slot_of(v, slots);
            Compiled::Quant { exists, slot, period, qfree, body: Box::new(compile(g, slots)) }
        }
    }
}

impl Compiled {
    pub fn eval(&self, env: &mut [i128]) -> bool {
        match self {
            Compiled::Const(b) => *b,
            Compiled::Atom { kind, d, coeffs, k } => {
                let v = coeffs.iter().map(|(s, c)| c * env[*s]).sum::<i128>() + k;
                match kind {
                    0 => v <= 0,
                    1 => v == 0,
                    2 => v != 0,
                    3 => v % d == 0,
                    _ => v % d != 0,
                }
            }
            Compiled::Not(g) => !g.eval(env),
            Compiled::And(gs) => gs.iter().all(|g| g.eval(env)),
            Compiled::Or(gs) => gs.iter().any(|g| g.eval(env)),
            Compiled::Quant { exists, slot, period, qfree, body } => {
                let saved = env[*slot];
                let mut result = !exists;
                if *qfree {
                    let mut roots = vec![0i128];
                    body.roots(*slot, env, &mut roots);
                    'outer: for p in roots {
                        for t in p - period - 2..=p + period + 2 {
                            env[*slot] = t;
                            if body.eval(env) == *exists {
                                result = *exists;
                                break 'outer;
                            }
                        }
                    }
                } else {
                    for t in -GUARD..=GUARD {
                        env[*slot] = t;
                        if body.eval(env) == *exists {
                            result = *exists;
                            break;
                        }
                    }
                }
                env[*slot] = saved;
                result
            }
        }
    }

    fn roots(&self, slot: usize, env: &[i128], out: &mut Vec<i128>) {
        match self {
            Compiled::Atom { kind, coeffs, k, .. } if *kind <= 2 => {
                if let Some(&(_, c)) = coeffs.iter().find(|(s, _)| *s == slot) {
                    let rest: i128 = coeffs.iter().filter(|(s, _)| *s != slot).map(|(s, c)| c * env[*s]).sum::<i128>() + k;
                    out.push(-rest / c);
                }
            }
            Compiled::Not(g) => g.roots(slot, env, out),
            Compiled::And(gs) | Compiled::Or(gs) => gs.iter().for_each(|g| g.roots(slot, env, out)),
            _ => {}
        }
    }
}
pub mod programs;
