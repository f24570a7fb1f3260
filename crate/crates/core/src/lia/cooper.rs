//! Quantifier elimination by Cooper's method.

use std::collections::BTreeSet;

use super::formula::{Atom, Formula};
use super::linexpr::{ck, gcd, lcm, LinExpr, Var};
use super::simplify::simplify;
use super::{LiaConfig, LiaError};

fn map_atoms(f: &Formula, g: &mut impl FnMut(&Atom) -> Result<Formula, LiaError>) -> Result<Formula, LiaError> {
    Ok(match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Atom(a) => g(a)?,
        Formula::Not(h) => Formula::not(map_atoms(h, g)?),
        Formula::And(hs) => Formula::And(hs.iter().map(|h| map_atoms(h, g)).collect::<Result<_, _>>()?),
        Formula::Or(hs) => Formula::Or(hs.iter().map(|h| map_atoms(h, g)).collect::<Result<_, _>>()?),
        Formula::Exists(..) | Formula::Forall(..) => return Err(LiaError::Quantified),
    })
}

fn budget(what: &str) -> LiaError {
    LiaError::ResourceBudgetExceeded(what.into())
}

/// `∃v. f`, returned quantifier-free. Inner quantifiers are eliminated first.
pub fn eliminate_exists(f: &Formula, v: &Var) -> Result<Formula, LiaError> {
    eliminate_exists_with(f, v, &LiaConfig::default())
}

/// `∀v. f` as `¬∃v. ¬f`.
pub fn eliminate_forall(f: &Formula, v: &Var) -> Result<Formula, LiaError> {
    eliminate_forall_with(f, v, &LiaConfig::default())
}

pub fn eliminate_exists_with(f: &Formula, v: &Var, cfg: &LiaConfig) -> Result<Formula, LiaError> {
    let body = eliminate_quantifiers_with(f, cfg)?;
    exists_qf(v, &body, cfg)
}

pub fn eliminate_forall_with(f: &Formula, v: &Var, cfg: &LiaConfig) -> Result<Formula, LiaError> {
    let body = eliminate_quantifiers_with(f, cfg)?;
    let e = exists_qf(v, &Formula::not(body), cfg)?;
    simplify(&Formula::not(e))
}

/// Equivalent quantifier-free formula.
pub fn eliminate_quantifiers(f: &Formula) -> Result<Formula, LiaError> {
    eliminate_quantifiers_with(f, &LiaConfig::default())
}

pub fn eliminate_quantifiers_with(f: &Formula, cfg: &LiaConfig) -> Result<Formula, LiaError> {
    if f.is_quantifier_free() {
        return simplify(f);
    }
    let r = match f {
        Formula::Exists(v, g) => {
            let g = eliminate_quantifiers_with(g, cfg)?;
            exists_qf(v, &g, cfg)?
        }
        Formula::Forall(v, g) => {
            let g = eliminate_quantifiers_with(g, cfg)?;
            let e = exists_qf(v, &Formula::not(g), cfg)?;
            Formula::not(e)
        }
        Formula::Not(g) => Formula::not(eliminate_quantifiers_with(g, cfg)?),
        Formula::And(gs) => Formula::And(
            gs.iter()
                .map(|g| eliminate_quantifiers_with(g, cfg))
                .collect::<Result<_, _>>()?,
        ),
        Formula::Or(gs) => Formula::Or(
            gs.iter()
                .map(|g| eliminate_quantifiers_with(g, cfg))
                .collect::<Result<_, _>>()?,
        ),
        Formula::True | Formula::False | Formula::Atom(_) => unreachable!(),
    };
    simplify(&r)
}

fn check_size(f: &Formula, cfg: &LiaConfig) -> Result<(), LiaError> {
    if f.size() > cfg.node_cap {
        return Err(budget("formula exceeds node cap"));
    }
    Ok(())
}

/// `∃v. g` for quantifier-free `g`.
pub(crate) fn exists_qf(v: &Var, g: &Formula, cfg: &LiaConfig) -> Result<Formula, LiaError> {
    let g = simplify(g)?;
    if !g.free_vars().contains(v) {
        return Ok(g);
    }
    let r = match g {
        Formula::Or(ds) => {
            let mut out = Vec::with_capacity(ds.len());
            for d in &ds {
                let e = exists_qf(v, d, cfg)?;
                if e == Formula::True {
                    return Ok(Formula::True);
                }
                out.push(e);
            }
            Formula::Or(out)
        }
        Formula::And(cs) => {
            let (dep, indep): (Vec<_>, Vec<_>) = cs.into_iter().partition(|c| c.free_vars().contains(v));
            let e = exists_conj(v, dep, cfg)?;
            Formula::and(indep.into_iter().chain([e]))
        }
        other => exists_conj(v, vec![other], cfg)?,
    };
    let r = simplify(&r)?;
    check_size(&r, cfg)?;
    Ok(r)
}

/// `∃v. ∧cs` where every conjunct mentions `v`.
fn exists_conj(v: &Var, cs: Vec<Formula>, cfg: &LiaConfig) -> Result<Formula, LiaError> {
    // An equality on v lets us substitute instead of enumerating.
    let eq = cs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match c {
            Formula::Atom(Atom::Eq(e)) if e.mentions(v) => Some((e.coeff(v).abs(), i)),
            _ => None,
        })
        .min();
    if let Some((_, i)) = eq {
        let Formula::Atom(Atom::Eq(e)) = &cs[i] else { unreachable!() };
        let e = e.clone();
        let rest = Formula::and(cs.into_iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c));
        return eq_subst(v, &e, &rest);
    }
    cooper(v, &Formula::And(cs), cfg)
}

/// Eliminate `v` from `c·v + t = 0 ∧ rest`.
fn eq_subst(v: &Var, e: &LinExpr, rest: &Formula) -> Result<Formula, LiaError> {
    let c = e.coeff(v);
    let t = e.without(v);
    if c.abs() == 1 {
        // v = -t / c = -c·t
        let val = t.checked_scale(-c)?;
        return simplify(&rest.substitute1(v, &val)?);
    }
    let m = c.abs();
    let sc = c.signum();
    let out = map_atoms(rest, &mut |a| {
        let e = a.expr();
        if !e.mentions(v) {
            return Ok(Formula::Atom(a.clone()));
        }
        let av = e.coeff(v);
        // m·(a·v + s) = m·s - a·sign(c)·t
        let ne = e
            .without(v)
            .checked_scale(m)?
            .checked_sub(&t.checked_scale(ck(av.checked_mul(sc))?)?)?;
        Ok(Formula::Atom(match a {
            Atom::Le(_) => Atom::Le(ne),
            Atom::Eq(_) => Atom::Eq(ne),
            Atom::Ne(_) => Atom::Ne(ne),
            Atom::Dvd(d, _) => Atom::Dvd(ck(d.checked_mul(m))?, ne),
            Atom::NDvd(d, _) => Atom::NDvd(ck(d.checked_mul(m))?, ne),
        }))
    })?;
    simplify(&Formula::and([out, Formula::Atom(Atom::Dvd(m, t))]))
}

fn expand_ne(v: &Var, f: &Formula) -> Result<Formula, LiaError> {
    map_atoms(f, &mut |a| match a {
        Atom::Ne(e) if e.mentions(v) => Ok(Formula::or([
            Formula::Atom(Atom::Le(e.checked_add_const(1)?)),
            Formula::Atom(Atom::Le(e.checked_scale(-1)?.checked_add_const(1)?)),
        ])),
        _ => Ok(Formula::Atom(a.clone())),
    })
}

fn cooper(v: &Var, f: &Formula, cfg: &LiaConfig) -> Result<Formula, LiaError> {
    let f = expand_ne(v, f)?;

    // Scale every atom so v's coefficient is ±L, then read L·v as v with L | v.
    let mut l = 1i128;
    f.visit_atoms(&mut |a| {
        let c = a.expr().coeff(v);
        if c != 0 && l > 0 {
            l = lcm(l, c).unwrap_or(0);
        }
    });
    if l == 0 {
        return Err(budget("coefficient lcm overflow"));
    }
    let unit = map_atoms(&f, &mut |a| {
        let e = a.expr();
        let c = e.coeff(v);
        if c == 0 {
            return Ok(Formula::Atom(a.clone()));
        }
        let m = l / c.abs();
        let ne = e.without(v).checked_scale(m)?.checked_add(&LinExpr::term(c.signum(), v.clone()))?;
        Ok(Formula::Atom(match a {
            Atom::Le(_) => Atom::Le(ne),
            Atom::Eq(_) => Atom::Eq(ne),
            Atom::Ne(_) => unreachable!("expanded"),
            Atom::Dvd(d, _) => Atom::Dvd(ck(d.checked_mul(m))?, ne),
            Atom::NDvd(d, _) => Atom::NDvd(ck(d.checked_mul(m))?, ne),
        }))
    })?;
    let unit = if l > 1 {
        Formula::and([unit, Formula::Atom(Atom::Dvd(l, LinExpr::var(v.clone())))])
    } else {
        unit
    };

    let mut lower: BTreeSet<LinExpr> = BTreeSet::new();
    let mut upper: BTreeSet<LinExpr> = BTreeSet::new();
    let mut delta = 1i128;
    let mut has_ndvd_or_eq = false;
    let mut err = None;
    unit.visit_atoms(&mut |a| {
        let e = a.expr();
        let c = e.coeff(v);
        if c == 0 {
            return;
        }
        let s = e.without(v);
        let r: Result<(), LiaError> = (|| {
            match a {
                Atom::Le(_) if c > 0 => {
                    // v <= -s
                    upper.insert(s.checked_scale(-1)?.checked_add_const(1)?);
                }
                Atom::Le(_) => {
                    // v >= s
                    lower.insert(s.checked_add_const(-1)?);
                }
                Atom::Eq(_) => {
                    has_ndvd_or_eq = true;
                    let val = if c > 0 { s.checked_scale(-1)? } else { s };
                    lower.insert(val.checked_add_const(-1)?);
                    upper.insert(val.checked_add_const(1)?);
                }
                Atom::Dvd(d, _) | Atom::NDvd(d, _) => {
                    if matches!(a, Atom::NDvd(..)) {
                        has_ndvd_or_eq = true;
                    }
                    delta = lcm(delta, *d)?;
                }
                Atom::Ne(_) => unreachable!(),
            }
            Ok(())
        })();
        if let Err(e) = r {
            err.get_or_insert(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    fn conj_of_atoms(f: &Formula) -> bool {
        match f {
            Formula::And(cs) => cs.iter().all(conj_of_atoms),
            Formula::Atom(_) => true,
            _ => false,
        }
    }
    // One-sided bounds can always be met far enough out, so only the
    // congruences matter.
    if !has_ndvd_or_eq && (lower.is_empty() || upper.is_empty()) && conj_of_atoms(&unit) {
        return crt(v, &unit);
    }

    let use_lower = lower.len() <= upper.len();
    let points = if use_lower { &lower } else { &upper };
    let est = (points.len() as u128 + 1)
        .saturating_mul(delta as u128)
        .saturating_mul(unit.size() as u128);
    if est > cfg.node_cap as u128 {
        return Err(budget("elimination period too large"));
    }

    // Formula at v → -∞ (or +∞): bounds fold to constants.
    let inf = map_atoms(&unit, &mut |a| {
        let c = a.expr().coeff(v);
        Ok(match a {
            _ if c == 0 => Formula::Atom(a.clone()),
            Atom::Le(_) => Formula::bool((c > 0) == use_lower),
            Atom::Eq(_) => Formula::False,
            _ => Formula::Atom(a.clone()),
        })
    })?;
    let inf = simplify(&inf)?;
    let mut out = Vec::new();
    let mut size = 0usize;
    let mut push = |g: Formula, out: &mut Vec<Formula>| -> Result<bool, LiaError> {
        match g {
            Formula::False => Ok(false),
            Formula::True => Ok(true),
            g => {
                size += g.size();
                if size > cfg.node_cap {
                    return Err(budget("formula exceeds node cap"));
                }
                out.push(g);
                Ok(false)
            }
        }
    };
    let sign = if use_lower { 1 } else { -1 };
    let inf_period = if inf.free_vars().contains(v) { delta } else { 1 };
    for j in 1..=inf_period {
        let g = simplify(&inf.substitute1(v, &LinExpr::constant(sign * j))?)?;
        if push(g, &mut out)? {
            return Ok(Formula::True);
        }
    }
    for b in points {
        for j in 1..=delta {
            let g = simplify(&unit.substitute1(v, &b.checked_add_const(sign * j)?)?)?;
            if push(g, &mut out)? {
                return Ok(Formula::True);
            }
        }
    }
    simplify(&Formula::Or(out))
}

/// `∃v. ∧ dᵢ | ±v + tᵢ` (plus v-free conjuncts and one-sided bounds on v)
/// by pairwise compatibility.
fn crt(v: &Var, f: &Formula) -> Result<Formula, LiaError> {
    let mut flat = Vec::new();
    fn walk(f: &Formula, out: &mut Vec<Formula>) {
        match f {
            Formula::And(cs) => cs.iter().for_each(|c| walk(c, out)),
            _ => out.push(f.clone()),
        }
    }
    walk(f, &mut flat);
    let mut congr: Vec<(i128, LinExpr)> = Vec::new();
    let mut rest = Vec::new();
    for c in flat {
        match &c {
            Formula::Atom(Atom::Dvd(d, e)) if e.mentions(v) => {
                // v ≡ r (mod d)
                let s = e.without(v);
                let r = if e.coeff(v) > 0 { s.checked_scale(-1)? } else { s };
                congr.push((*d, r));
            }
            Formula::Atom(Atom::Le(e)) if e.mentions(v) => {}
            _ => rest.push(c),
        }
    }
    for i in 0..congr.len() {
        for j in i + 1..congr.len() {
            let g = gcd(congr[i].0, congr[j].0);
            rest.push(Formula::Atom(Atom::Dvd(g, congr[i].1.checked_sub(&congr[j].1)?)));
        }
    }
    simplify(&Formula::And(rest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lia::{equivalent_on, Var};

    fn var(s: &str) -> LinExpr {
        LinExpr::var(s)
    }

    #[test]
    fn k_step_of_running_example() {
        let f = Formula::and([
            Formula::gt("k", 0),
            Formula::ge(var("i") + var("k"), 50),
            Formula::lt(var("i") + var("k") - 1, 50),
        ]);
        let r = eliminate_exists(&f, &"k".into()).unwrap();
        assert!(r.is_quantifier_free());
        assert!(equivalent_on(&r, &Formula::lt("i", 50), &[("i".into(), -200, 200)]).unwrap());
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(eliminate_exists(&Formula::False, &"k".into()).unwrap(), Formula::False);
        assert_eq!(eliminate_forall(&Formula::True, &"k".into()).unwrap(), Formula::True);
        let f = Formula::or([Formula::le("k", 0), Formula::lt("k", 5)]);
        assert_eq!(eliminate_forall(&f, &"k".into()).unwrap(), Formula::False);
    }

    #[test]
    fn forall_decrement() {
        // ∀k. k ≤ 0 ∨ x − k < 0 holds exactly when x ≤ 0.
        let f = Formula::or([Formula::le("k", 0), Formula::lt(var("x") - var("k"), 0)]);
        let r = eliminate_forall(&f, &"k".into()).unwrap();
        assert!(equivalent_on(&r, &Formula::le("x", 0), &[("x".into(), -100, 100)]).unwrap());
        // Restricted to the states where the loop guard x < 0 holds already.
        let stuck = Formula::and([Formula::lt("x", 0), r]);
        assert!(equivalent_on(&stuck, &Formula::lt("x", 0), &[("x".into(), -100, 100)]).unwrap());
    }

    #[test]
    fn divisibility_and_coefficients() {
        // ∃y. x = 2y  ⇔  2 | x
        let f = Formula::eq("x", var("y") * 2);
        let r = eliminate_exists(&f, &"y".into()).unwrap();
        assert!(equivalent_on(&r, &Formula::dvd(2, var("x")), &[("x".into(), -50, 50)]).unwrap());
        // ∃y. 3y ≤ x ∧ x < 3y + 2  ⇔  x mod 3 ∈ {0,1}
        let g = Formula::and([Formula::le(var("y") * 3, "x"), Formula::lt("x", var("y") * 3 + 2)]);
        let r = eliminate_exists(&g, &"y".into()).unwrap();
        let want = Formula::not(Formula::dvd(3, var("x") + 1));
        assert!(equivalent_on(&r, &want, &[("x".into(), -50, 50)]).unwrap());
        // CRT path: ∃y. 4 | y + x ∧ 6 | y + 1  ⇔  2 | x − 1
        let h = Formula::and([Formula::dvd(4, var("y") + var("x")), Formula::dvd(6, var("y") + 1)]);
        let r = eliminate_exists(&h, &"y".into()).unwrap();
        assert!(equivalent_on(&r, &Formula::dvd(2, var("x") - 1), &[("x".into(), -50, 50)]).unwrap());
    }

    #[test]
    fn nested_quantifiers() {
        // ∀a. ∃b. a < b ∧ b < x  is false everywhere
        let f = Formula::forall(
            "a",
            Formula::exists("b", Formula::and([Formula::lt("a", "b"), Formula::lt("b", "x")])),
        );
        assert_eq!(eliminate_quantifiers(&f).unwrap(), Formula::False);
        let _ = Var::new("x");
    }

    #[test]
    fn budget_is_reported() {
        let f = Formula::and([
            Formula::ge("q", 0),
            Formula::le("q", "x"),
            Formula::dvd(1 << 40, var("q") + var("x")),
            Formula::not(Formula::dvd(3, var("q"))),
        ]);
        let r = eliminate_exists(&f, &"q".into());
        assert!(matches!(r, Err(LiaError::ResourceBudgetExceeded(_))), "{r:?}");
    }
}
