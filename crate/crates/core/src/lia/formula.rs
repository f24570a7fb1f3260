//! Formula trees, construction helpers, evaluation and substitution.

use std::collections::{BTreeMap, BTreeSet};

use super::linexpr::{LinExpr, Var};
use super::LiaError;

pub type Model = BTreeMap<Var, i128>;

/// Atoms are kept relative to zero: `Le(e)` is `e ≤ 0`, `Dvd(d, e)` is `d | e`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Le(LinExpr),
    Eq(LinExpr),
    Ne(LinExpr),
    Dvd(i128, LinExpr),
    NDvd(i128, LinExpr),
}

impl Atom {
    pub fn expr(&self) -> &LinExpr {
        match self {
            Atom::Le(e) | Atom::Eq(e) | Atom::Ne(e) | Atom::Dvd(_, e) | Atom::NDvd(_, e) => e,
        }
    }

    pub fn map_expr(&self, f: impl FnOnce(&LinExpr) -> Result<LinExpr, LiaError>) -> Result<Atom, LiaError> {
        Ok(match self {
            Atom::Le(e) => Atom::Le(f(e)?),
            Atom::Eq(e) => Atom::Eq(f(e)?),
            Atom::Ne(e) => Atom::Ne(f(e)?),
            Atom::Dvd(d, e) => Atom::Dvd(*d, f(e)?),
            Atom::NDvd(d, e) => Atom::NDvd(*d, f(e)?),
        })
    }

    pub fn negate(&self) -> Result<Atom, LiaError> {
        Ok(match self {
            // ¬(e ≤ 0)  ⇔  -e + 1 ≤ 0
            Atom::Le(e) => Atom::Le(e.checked_scale(-1)?.checked_add_const(1)?),
            Atom::Eq(e) => Atom::Ne(e.clone()),
            Atom::Ne(e) => Atom::Eq(e.clone()),
            Atom::Dvd(d, e) => Atom::NDvd(*d, e.clone()),
            Atom::NDvd(d, e) => Atom::Dvd(*d, e.clone()),
        })
    }

    pub fn eval(&self, env: &Model) -> Result<bool, LiaError> {
        let v = self.expr().eval(env)?;
        Ok(match self {
            Atom::Le(_) => v <= 0,
            Atom::Eq(_) => v == 0,
            Atom::Ne(_) => v != 0,
            Atom::Dvd(d, _) => v.rem_euclid(*d) == 0,
            Atom::NDvd(d, _) => v.rem_euclid(*d) != 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    False,
    True,
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Exists(Var, Box<Formula>),
    Forall(Var, Box<Formula>),
}

impl Formula {
    pub fn bool(b: bool) -> Formula {
        if b {
            Formula::True
        } else {
            Formula::False
        }
    }

    /// `a ≤ b`
    pub fn le(a: impl Into<LinExpr>, b: impl Into<LinExpr>) -> Formula {
        Formula::Atom(Atom::Le(a.into() - b.into()))
    }

    /// `a < b`
    pub fn lt(a: impl Into<LinExpr>, b: impl Into<LinExpr>) -> Formula {
        Formula::Atom(Atom::Le(a.into() - b.into() + 1))
    }

    pub fn ge(a: impl Into<LinExpr>, b: impl Into<LinExpr>) -> Formula {
        Formula::le(b, a)
    }

    pub fn gt(a: impl Into<LinExpr>, b: impl Into<LinExpr>) -> Formula {
        Formula::lt(b, a)
    }

    pub fn eq(a: impl Into<LinExpr>, b: impl Into<LinExpr>) -> Formula {
        Formula::Atom(Atom::Eq(a.into() - b.into()))
    }

    pub fn ne(a: impl Into<LinExpr>, b: impl Into<LinExpr>) -> Formula {
        Formula::Atom(Atom::Ne(a.into() - b.into()))
    }

    /// `d | e`; `d` must be nonzero, its sign is ignored.
    pub fn dvd(d: i128, e: impl Into<LinExpr>) -> Formula {
        assert!(d != 0, "divisor must be nonzero");
        Formula::Atom(Atom::Dvd(d.abs(), e.into()))
    }

    pub fn and(fs: impl IntoIterator<Item = Formula>) -> Formula {
        Formula::And(fs.into_iter().collect())
    }

    pub fn or(fs: impl IntoIterator<Item = Formula>) -> Formula {
        Formula::Or(fs.into_iter().collect())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::or([Formula::not(a), b])
    }

    pub fn exists(v: impl Into<Var>, f: Formula) -> Formula {
        Formula::Exists(v.into(), Box::new(f))
    }

    pub fn forall(v: impl Into<Var>, f: Formula) -> Formula {
        Formula::Forall(v.into(), Box::new(f))
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                for v in a.expr().vars() {
                    if !bound.contains(v) {
                        out.insert(v.clone());
                    }
                }
            }
            Formula::Not(f) => f.collect_free(bound, out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_free(bound, out)),
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                bound.push(v.clone());
                f.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Every variable name occurring anywhere, bound or free.
    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| out.extend(a.expr().vars().cloned()));
        self.visit(&mut |f| {
            if let Formula::Exists(v, _) | Formula::Forall(v, _) = f {
                out.insert(v.clone());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(g) | Formula::Exists(_, g) | Formula::Forall(_, g) => g.visit(f),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| g.visit(f)),
            _ => {}
        }
    }

    pub fn visit_atoms(&self, f: &mut impl FnMut(&Atom)) {
        self.visit(&mut |g| {
            if let Formula::Atom(a) = g {
                f(a)
            }
        });
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    pub fn is_quantifier_free(&self) -> bool {
        let mut q = false;
        self.visit(&mut |f| q |= matches!(f, Formula::Exists(..) | Formula::Forall(..)));
        !q
    }

    /// Evaluate a quantifier-free formula.
    pub fn eval(&self, env: &Model) -> Result<bool, LiaError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.eval(env)?,
            Formula::Not(f) => !f.eval(env)?,
            Formula::And(fs) => {
                for f in fs {
                    if !f.eval(env)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(fs) => {
                for f in fs {
                    if f.eval(env)? {
                        return Ok(true);
                    }
                }
                false
            }
            Formula::Exists(..) | Formula::Forall(..) => return Err(LiaError::Quantified),
        })
    }

    /// Capture-avoiding simultaneous substitution of linear expressions for
    /// free variables.
    pub fn substitute(&self, map: &BTreeMap<Var, LinExpr>) -> Result<Formula, LiaError> {
        let mut incoming = BTreeSet::new();
        for e in map.values() {
            incoming.extend(e.vars().cloned());
        }
        self.subst_rec(map, &incoming)
    }

    fn subst_rec(&self, map: &BTreeMap<Var, LinExpr>, incoming: &BTreeSet<Var>) -> Result<Formula, LiaError> {
        Ok(match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Atom(a) => Formula::Atom(a.map_expr(|e| e.substitute_all(map))?),
            Formula::Not(f) => Formula::not(f.subst_rec(map, incoming)?),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.subst_rec(map, incoming)).collect::<Result<_, _>>()?),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.subst_rec(map, incoming)).collect::<Result<_, _>>()?),
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                let mut inner = map.clone();
                inner.remove(v);
                let (v2, body) = if incoming.contains(v) {
                    let mut avoid = self.all_vars();
                    avoid.extend(incoming.iter().cloned());
                    avoid.extend(map.keys().cloned());
                    let fresh = Var::fresh(v.name(), &avoid);
                    let renamed = f.substitute(&BTreeMap::from([(v.clone(), LinExpr::var(fresh.clone()))]))?;
                    (fresh, renamed)
                } else {
                    (v.clone(), (**f).clone())
                };
                let body = Box::new(body.subst_rec(&inner, incoming)?);
                if matches!(self, Formula::Exists(..)) {
                    Formula::Exists(v2, body)
                } else {
                    Formula::Forall(v2, body)
                }
            }
        })
    }

    pub fn substitute1(&self, v: &Var, e: &LinExpr) -> Result<Formula, LiaError> {
        self.substitute(&BTreeMap::from([(v.clone(), e.clone())]))
    }

    /// Negation normal form: `Not` only survives nowhere; atoms absorb it.
    pub fn nnf(&self) -> Result<Formula, LiaError> {
        self.nnf_pol(true)
    }

    fn nnf_pol(&self, pos: bool) -> Result<Formula, LiaError> {
        Ok(match self {
            Formula::True => Formula::bool(pos),
            Formula::False => Formula::bool(!pos),
            Formula::Atom(a) if pos => Formula::Atom(a.clone()),
            Formula::Atom(a) => Formula::Atom(a.negate()?),
            Formula::Not(f) => f.nnf_pol(!pos)?,
            Formula::And(fs) | Formula::Or(fs) => {
                let kids = fs.iter().map(|f| f.nnf_pol(pos)).collect::<Result<Vec<_>, _>>()?;
                if matches!(self, Formula::And(_)) == pos {
                    Formula::And(kids)
                } else {
                    Formula::Or(kids)
                }
            }
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                let body = Box::new(f.nnf_pol(pos)?);
                if matches!(self, Formula::Exists(..)) == pos {
                    Formula::Exists(v.clone(), body)
                } else {
                    Formula::Forall(v.clone(), body)
                }
            }
        })
    }
}
