//! Linear integer expressions `Σ c·x + k` over named variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::LiaError;

/// A variable name. Cloning is cheap.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Var {
        Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// `base`, `base'1`, `base'2`, ... : the first name not in `avoid`.
    pub fn fresh(base: &str, avoid: &BTreeSet<Var>) -> Var {
        let v = Var::new(base);
        if !avoid.contains(&v) {
            return v;
        }
        (1..)
            .map(|i| Var::new(&format!("{base}'{i}")))
            .find(|v| !avoid.contains(v))
            .unwrap()
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Var {
        Var::new(s)
    }
}

pub(crate) fn ck(x: Option<i128>) -> Result<i128, LiaError> {
    x.ok_or_else(|| LiaError::ResourceBudgetExceeded("integer overflow".into()))
}

pub fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: i128, b: i128) -> Result<i128, LiaError> {
    if a == 0 || b == 0 {
        return Ok(0);
    }
    ck((a / gcd(a, b)).checked_mul(b).map(i128::abs))
}

pub fn floor_div(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

pub fn ceil_div(a: i128, b: i128) -> i128 {
    -floor_div(-a, b)
}

/// `Σ terms[x]·x + konst`; no stored coefficient is zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinExpr {
    terms: BTreeMap<Var, i128>,
    konst: i128,
}

impl LinExpr {
    pub fn constant(k: i128) -> LinExpr {
        LinExpr {
            terms: BTreeMap::new(),
            konst: k,
        }
    }

    pub fn var(v: impl Into<Var>) -> LinExpr {
        LinExpr::term(1, v)
    }

    pub fn term(c: i128, v: impl Into<Var>) -> LinExpr {
        let mut e = LinExpr::default();
        if c != 0 {
            e.terms.insert(v.into(), c);
        }
        e
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Var, i128)>, k: i128) -> LinExpr {
        let mut e = LinExpr::constant(k);
        for (v, c) in terms {
            let n = e.coeff(&v) + c;
            e.set_coeff(v, n);
        }
        e
    }

    pub fn konst(&self) -> i128 {
        self.konst
    }

    pub fn coeff(&self, v: &Var) -> i128 {
        self.terms.get(v).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Var, i128)> + '_ {
        self.terms.iter().map(|(v, c)| (v, *c))
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> + '_ {
        self.terms.keys()
    }

    pub fn is_const(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn mentions(&self, v: &Var) -> bool {
        self.terms.contains_key(v)
    }

    fn set_coeff(&mut self, v: Var, c: i128) {
        if c == 0 {
            self.terms.remove(&v);
        } else {
            self.terms.insert(v, c);
        }
    }

    pub fn with_konst(&self, k: i128) -> LinExpr {
        LinExpr {
            terms: self.terms.clone(),
            konst: k,
        }
    }

    /// The expression with `v`'s term removed.
    pub fn without(&self, v: &Var) -> LinExpr {
        let mut e = self.clone();
        e.terms.remove(v);
        e
    }

    /// Linear part only (constant dropped).
    pub fn linear_part(&self) -> LinExpr {
        self.with_konst(0)
    }

    /// gcd of the variable coefficients (0 for a constant).
    pub fn coeff_gcd(&self) -> i128 {
        self.terms.values().fold(0, |g, &c| gcd(g, c))
    }

    pub fn checked_add(&self, o: &LinExpr) -> Result<LinExpr, LiaError> {
        let mut e = self.clone();
        e.konst = ck(e.konst.checked_add(o.konst))?;
        for (v, &c) in &o.terms {
            let n = ck(e.coeff(v).checked_add(c))?;
            e.set_coeff(v.clone(), n);
        }
        Ok(e)
    }

    pub fn checked_sub(&self, o: &LinExpr) -> Result<LinExpr, LiaError> {
        self.checked_add(&o.checked_scale(-1)?)
    }

    pub fn checked_scale(&self, m: i128) -> Result<LinExpr, LiaError> {
        if m == 0 {
            return Ok(LinExpr::default());
        }
        let mut terms = BTreeMap::new();
        for (v, &c) in &self.terms {
            terms.insert(v.clone(), ck(c.checked_mul(m))?);
        }
        Ok(LinExpr {
            terms,
            konst: ck(self.konst.checked_mul(m))?,
        })
    }

    pub fn checked_add_const(&self, k: i128) -> Result<LinExpr, LiaError> {
        Ok(self.with_konst(ck(self.konst.checked_add(k))?))
    }

    /// Exact division of every coefficient and the constant by `d`.
    pub(crate) fn div_exact(&self, d: i128) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|(v, c)| (v.clone(), c / d)).collect(),
            konst: self.konst / d,
        }
    }

    /// Reduce every coefficient and the constant into `[0, m)`.
    pub(crate) fn rem_euclid(&self, m: i128) -> LinExpr {
        let mut e = LinExpr::constant(self.konst.rem_euclid(m));
        for (v, &c) in &self.terms {
            e.set_coeff(v.clone(), c.rem_euclid(m));
        }
        e
    }

    /// Replace `v` by `by`.
    pub fn substitute(&self, v: &Var, by: &LinExpr) -> Result<LinExpr, LiaError> {
        match self.terms.get(v) {
            None => Ok(self.clone()),
            Some(&c) => self.without(v).checked_add(&by.checked_scale(c)?),
        }
    }

    /// Simultaneous substitution.
    pub fn substitute_all(&self, map: &BTreeMap<Var, LinExpr>) -> Result<LinExpr, LiaError> {
        let mut out = LinExpr::constant(self.konst);
        for (v, &c) in &self.terms {
            let part = match map.get(v) {
                Some(by) => by.checked_scale(c)?,
                None => LinExpr::term(c, v.clone()),
            };
            out = out.checked_add(&part)?;
        }
        Ok(out)
    }

    pub fn eval(&self, env: &BTreeMap<Var, i128>) -> Result<i128, LiaError> {
        let mut acc = self.konst;
        for (v, &c) in &self.terms {
            let x = *env.get(v).ok_or_else(|| LiaError::UnboundVariable(v.clone()))?;
            acc = ck(acc.checked_add(ck(c.checked_mul(x))?))?;
        }
        Ok(acc)
    }
}

// Convenience operators for building small expressions; they panic on
// overflow. The engine itself uses the checked forms.
impl std::ops::Add for LinExpr {
    type Output = LinExpr;
    fn add(self, o: LinExpr) -> LinExpr {
        self.checked_add(&o).expect("overflow")
    }
}

impl std::ops::Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, o: LinExpr) -> LinExpr {
        self.checked_sub(&o).expect("overflow")
    }
}

impl std::ops::Add<i128> for LinExpr {
    type Output = LinExpr;
    fn add(self, k: i128) -> LinExpr {
        self.checked_add_const(k).expect("overflow")
    }
}

impl std::ops::Sub<i128> for LinExpr {
    type Output = LinExpr;
    fn sub(self, k: i128) -> LinExpr {
        self.checked_add_const(-k).expect("overflow")
    }
}

impl std::ops::Mul<i128> for LinExpr {
    type Output = LinExpr;
    fn mul(self, m: i128) -> LinExpr {
        self.checked_scale(m).expect("overflow")
    }
}

impl std::ops::Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1
    }
}

impl From<i128> for LinExpr {
    fn from(k: i128) -> LinExpr {
        LinExpr::constant(k)
    }
}

impl From<&str> for LinExpr {
    fn from(s: &str) -> LinExpr {
        LinExpr::var(s)
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> LinExpr {
        LinExpr::var(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let e = LinExpr::var("x") * 2 + LinExpr::var("y") - 3;
        assert_eq!(e.coeff(&"x".into()), 2);
        assert_eq!(e.konst(), -3);
        let z = e.clone() - e;
        assert!(z.is_const() && z.konst() == 0);
        let s = (LinExpr::var("x") + 1)
            .substitute(&"x".into(), &(LinExpr::var("y") * 2))
            .unwrap();
        assert_eq!(s, LinExpr::var("y") * 2 + 1);
    }

    #[test]
    fn division_helpers() {
        assert_eq!(floor_div(-7, 2), -4);
        assert_eq!(ceil_div(-7, 2), -3);
        assert_eq!(floor_div(7, -2), -4);
        assert_eq!(ceil_div(7, 2), 4);
        assert_eq!(gcd(-12, 18), 6);
        assert_eq!(lcm(4, 6).unwrap(), 12);
        assert!(LinExpr::constant(i128::MAX).checked_add_const(1).is_err());
    }

    #[test]
    fn fresh_names() {
        let avoid: BTreeSet<Var> = ["k", "k'1"].into_iter().map(Var::new).collect();
        assert_eq!(Var::fresh("k", &avoid).name(), "k'2");
        assert_eq!(Var::fresh("j", &avoid).name(), "j");
    }
}
