//! Equivalence-preserving normalization: atom canonicalization, constant
//! folding, absorption and interval tightening.

use std::collections::{BTreeMap, BTreeSet};

use super::formula::{Atom, Formula};
use super::linexpr::{ceil_div, gcd, LinExpr};
use super::LiaError;

/// Canonical form of one atom, possibly folded to a constant.
pub fn normalize_atom(a: &Atom) -> Result<Formula, LiaError> {
    Ok(match a {
        Atom::Le(e) => {
            if e.is_const() {
                return Ok(Formula::bool(e.konst() <= 0));
            }
            let g = e.coeff_gcd();
            let lin = e.linear_part().div_exact(g);
            Formula::Atom(Atom::Le(lin.with_konst(ceil_div(e.konst(), g))))
        }
        Atom::Eq(e) | Atom::Ne(e) => {
            let is_eq = matches!(a, Atom::Eq(_));
            if e.is_const() {
                return Ok(Formula::bool((e.konst() == 0) == is_eq));
            }
            let g = e.coeff_gcd();
            if e.konst() % g != 0 {
                return Ok(Formula::bool(!is_eq));
            }
            let mut n = e.div_exact(g);
            if leading(&n) < 0 {
                n = n.checked_scale(-1)?;
            }
            Formula::Atom(if is_eq { Atom::Eq(n) } else { Atom::Ne(n) })
        }
        Atom::Dvd(d, e) | Atom::NDvd(d, e) => {
            let pos = matches!(a, Atom::Dvd(..));
            let mut d = d.abs();
            let mut n = e.rem_euclid(d);
            let g = gcd(gcd(d, n.coeff_gcd()), n.konst());
            if g > 1 {
                d /= g;
                n = n.div_exact(g);
            }
            if d == 1 {
                return Ok(Formula::bool(pos));
            }
            if n.is_const() {
                return Ok(Formula::bool((n.konst() == 0) == pos));
            }
            if gcd(d, n.coeff_gcd()) > 1 {
                // Some prime power divides every coefficient and d but not k.
                return Ok(Formula::bool(!pos));
            }
            let c = leading(&n);
            if 2 * c > d {
                n = n.checked_scale(-1)?.rem_euclid(d);
            }
            Formula::Atom(if pos { Atom::Dvd(d, n) } else { Atom::NDvd(d, n) })
        }
    })
}

fn leading(e: &LinExpr) -> i128 {
    e.terms().next().map_or(0, |(_, c)| c)
}

/// Linear part with a positive leading coefficient, and the sign applied.
fn key_of(e: &LinExpr) -> Result<(LinExpr, i128), LiaError> {
    let lin = e.linear_part();
    if leading(&lin) < 0 {
        Ok((lin.checked_scale(-1)?, -1))
    } else {
        Ok((lin, 1))
    }
}

#[derive(Default)]
struct Bounds {
    lo: Option<i128>,
    hi: Option<i128>,
    eq: BTreeSet<i128>,
    ne: BTreeSet<i128>,
}

/// Split canonical Le/Eq/Ne atoms into per-linear-part bounds; everything
/// else is returned untouched.
fn collect_bounds(
    kids: Vec<Formula>,
    conj: bool,
) -> Result<(BTreeMap<LinExpr, Bounds>, Vec<Formula>), LiaError> {
    let mut groups: BTreeMap<LinExpr, Bounds> = BTreeMap::new();
    let mut rest = Vec::new();
    for k in kids {
        match &k {
            Formula::Atom(Atom::Le(e)) => {
                let (p, s) = key_of(e)?;
                let b = groups.entry(p).or_default();
                if s > 0 {
                    // p + k <= 0  =>  p <= -k
                    let u = -e.konst();
                    b.hi = Some(match b.hi {
                        Some(h) if conj => h.min(u),
                        Some(h) => h.max(u),
                        None => u,
                    });
                } else {
                    // -p + k <= 0  =>  p >= k
                    let l = e.konst();
                    b.lo = Some(match b.lo {
                        Some(x) if conj => x.max(l),
                        Some(x) => x.min(l),
                        None => l,
                    });
                }
            }
            Formula::Atom(Atom::Eq(e)) => {
                let (p, _) = key_of(e)?;
                groups.entry(p).or_default().eq.insert(-e.konst());
            }
            Formula::Atom(Atom::Ne(e)) => {
                let (p, _) = key_of(e)?;
                groups.entry(p).or_default().ne.insert(-e.konst());
            }
            _ => rest.push(k),
        }
    }
    Ok((groups, rest))
}

fn emit_le(p: &LinExpr, hi: i128) -> Result<Formula, LiaError> {
    Ok(Formula::Atom(Atom::Le(p.checked_add_const(hi.checked_neg().ok_or_else(ovf)?)?)))
}

fn emit_ge(p: &LinExpr, lo: i128) -> Result<Formula, LiaError> {
    Ok(Formula::Atom(Atom::Le(p.checked_scale(-1)?.checked_add_const(lo)?)))
}

fn emit_eq(p: &LinExpr, c: i128, eq: bool) -> Result<Formula, LiaError> {
    let e = p.checked_add_const(c.checked_neg().ok_or_else(ovf)?)?;
    Ok(Formula::Atom(if eq { Atom::Eq(e) } else { Atom::Ne(e) }))
}

fn ovf() -> LiaError {
    LiaError::ResourceBudgetExceeded("integer overflow".into())
}

/// Deterministic child order: comparisons grouped by linear part (upper bound
/// before lower bound), then divisibility atoms, then compound formulas.
fn sort_children(v: &mut Vec<Formula>) -> Result<(), LiaError> {
    let mut keyed = Vec::with_capacity(v.len());
    for f in v.drain(..) {
        let k = match &f {
            Formula::Atom(a @ (Atom::Le(e) | Atom::Eq(e) | Atom::Ne(e))) => {
                let (p, s) = key_of(e)?;
                let rank = match a {
                    Atom::Eq(_) => 0,
                    Atom::Le(_) if s > 0 => 1,
                    Atom::Le(_) => 2,
                    _ => 3,
                };
                (0u8, p, rank)
            }
            Formula::Atom(_) => (1, LinExpr::default(), 0),
            _ => (2, LinExpr::default(), 0),
        };
        keyed.push((k, f));
    }
    keyed.sort();
    keyed.dedup();
    v.extend(keyed.into_iter().map(|(_, f)| f));
    Ok(())
}

fn simp_and(kids: &[Formula]) -> Result<Formula, LiaError> {
    let mut flat = Vec::new();
    for k in kids {
        match simp(k)? {
            Formula::False => return Ok(Formula::False),
            Formula::True => {}
            Formula::And(gs) => flat.extend(gs),
            g => flat.push(g),
        }
    }
    let (groups, rest) = collect_bounds(flat, true)?;
    let mut out = Vec::new();
    for (p, mut b) in groups {
        if b.eq.len() > 1 {
            return Ok(Formula::False);
        }
        if let Some(&c) = b.eq.iter().next() {
            if b.lo.is_some_and(|l| c < l) || b.hi.is_some_and(|h| c > h) || b.ne.contains(&c) {
                return Ok(Formula::False);
            }
            out.push(emit_eq(&p, c, true)?);
            continue;
        }
        if let Some(l) = b.lo.as_mut() {
            while b.ne.contains(l) {
                *l += 1;
            }
        }
        if let Some(h) = b.hi.as_mut() {
            while b.ne.contains(h) {
                *h -= 1;
            }
        }
        if let (Some(l), Some(h)) = (b.lo, b.hi) {
            if l > h {
                return Ok(Formula::False);
            }
        }
        for &c in &b.ne {
            if b.lo.map_or(true, |l| c > l) && b.hi.map_or(true, |h| c < h) {
                out.push(emit_eq(&p, c, false)?);
            }
        }
        if let Some(h) = b.hi {
            out.push(emit_le(&p, h)?);
        }
        if let Some(l) = b.lo {
            out.push(emit_ge(&p, l)?);
        }
    }
    for r in &rest {
        if let Formula::Atom(a @ (Atom::Dvd(..) | Atom::NDvd(..))) = r {
            if rest.contains(&Formula::Atom(a.negate()?)) {
                return Ok(Formula::False);
            }
        }
    }
    out.extend(rest);
    sort_children(&mut out)?;
    // Absorption: a ∧ (a ∨ b) = a.
    let atoms: BTreeSet<Formula> = out.iter().filter(|f| matches!(f, Formula::Atom(_))).cloned().collect();
    out.retain(|f| match f {
        Formula::Or(ds) => !ds.iter().any(|d| atoms.contains(d)),
        _ => true,
    });
    Ok(match out.len() {
        0 => Formula::True,
        1 => out.pop().unwrap(),
        _ => Formula::And(out),
    })
}

fn simp_or(kids: &[Formula]) -> Result<Formula, LiaError> {
    let mut flat = Vec::new();
    for k in kids {
        match simp(k)? {
            Formula::True => return Ok(Formula::True),
            Formula::False => {}
            Formula::Or(gs) => flat.extend(gs),
            g => flat.push(g),
        }
    }
    let (groups, rest) = collect_bounds(flat, false)?;
    let mut out = Vec::new();
    for (p, mut b) in groups {
        if b.ne.len() > 1 {
            return Ok(Formula::True);
        }
        if let Some(&c) = b.ne.iter().next() {
            if b.eq.contains(&c) || b.hi.is_some_and(|h| c <= h) || b.lo.is_some_and(|l| c >= l) {
                return Ok(Formula::True);
            }
            out.push(emit_eq(&p, c, false)?);
            continue;
        }
        if let Some(h) = b.hi.as_mut() {
            while b.eq.contains(&(*h + 1)) {
                *h += 1;
            }
        }
        if let Some(l) = b.lo.as_mut() {
            while b.eq.contains(&(*l - 1)) {
                *l -= 1;
            }
        }
        if let (Some(l), Some(h)) = (b.lo, b.hi) {
            if l <= h + 1 {
                return Ok(Formula::True);
            }
        }
        for &c in &b.eq {
            if b.hi.map_or(true, |h| c > h) && b.lo.map_or(true, |l| c < l) {
                out.push(emit_eq(&p, c, true)?);
            }
        }
        if let Some(h) = b.hi {
            out.push(emit_le(&p, h)?);
        }
        if let Some(l) = b.lo {
            out.push(emit_ge(&p, l)?);
        }
    }
    for r in &rest {
        if let Formula::Atom(a @ (Atom::Dvd(..) | Atom::NDvd(..))) = r {
            if rest.contains(&Formula::Atom(a.negate()?)) {
                return Ok(Formula::True);
            }
        }
    }
    out.extend(rest);
    sort_children(&mut out)?;
    // Absorption: a ∨ (a ∧ b) = a.
    let atoms: BTreeSet<Formula> = out.iter().filter(|f| matches!(f, Formula::Atom(_))).cloned().collect();
    out.retain(|f| match f {
        Formula::And(cs) => !cs.iter().any(|c| atoms.contains(c)),
        _ => true,
    });
    Ok(match out.len() {
        0 => Formula::False,
        1 => out.pop().unwrap(),
        _ => Formula::Or(out),
    })
}

/// Simplify a formula already in negation normal form.
pub(crate) fn simp(f: &Formula) -> Result<Formula, LiaError> {
    Ok(match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Atom(a) => normalize_atom(a)?,
        Formula::Not(g) => return simp(&g.nnf_neg()?),
        Formula::And(ks) => simp_and(ks)?,
        Formula::Or(ks) => simp_or(ks)?,
        Formula::Exists(v, g) | Formula::Forall(v, g) => {
            let body = simp(g)?;
            if !body.free_vars().contains(v) {
                body
            } else if matches!(f, Formula::Exists(..)) {
                Formula::Exists(v.clone(), Box::new(body))
            } else {
                Formula::Forall(v.clone(), Box::new(body))
            }
        }
    })
}

pub fn simplify(f: &Formula) -> Result<Formula, LiaError> {
    simp(&f.nnf()?)
}

impl Formula {
    fn nnf_neg(&self) -> Result<Formula, LiaError> {
        Formula::not(self.clone()).nnf()
    }
}
