//! Satisfiability with model construction, and the box-enumeration oracle.

use super::cooper::{eliminate_quantifiers_with, exists_qf};
use super::formula::{Atom, Formula, Model};
use super::linexpr::{floor_div, lcm, LinExpr, Var};
use super::simplify::simplify;
use super::{LiaConfig, LiaError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

pub fn is_sat(f: &Formula) -> Result<SatResult, LiaError> {
    is_sat_with(f, &LiaConfig::default())
}

pub fn is_sat_with(f: &Formula, cfg: &LiaConfig) -> Result<SatResult, LiaError> {
    let g = eliminate_quantifiers_with(f, cfg)?;
    let vars: Vec<Var> = g.free_vars().into_iter().collect();
    let mut h = g.clone();
    let mut model = Model::new();
    for (i, x) in vars.iter().enumerate() {
        // Project the remaining variables away, then pick a value for x.
        let mut psi = h.clone();
        for y in &vars[i + 1..] {
            psi = exists_qf(y, &psi, cfg)?;
        }
        let Some(val) = solve_univariate(&psi, x, cfg)? else {
            if i == 0 {
                return Ok(SatResult::Unsat);
            }
            return Err(LiaError::Internal(format!("projection lost a solution for {x}")));
        };
        model.insert(x.clone(), val);
        h = simplify(&h.substitute1(x, &LinExpr::constant(val))?)?;
    }
    match h {
        Formula::True => {}
        Formula::False if vars.is_empty() => return Ok(SatResult::Unsat),
        other => return Err(LiaError::Internal(format!("model left residue {other:?}"))),
    }
    if !g.eval(&model)? {
        return Err(LiaError::Internal("model does not satisfy formula".into()));
    }
    Ok(SatResult::Sat(model))
}

/// A value of `x` satisfying the formula `f` whose only free variable is `x`.
/// Between consecutive critical points the truth value is periodic in the
/// lcm of the divisors, so a window of one period around each suffices.
fn solve_univariate(f: &Formula, x: &Var, cfg: &LiaConfig) -> Result<Option<i128>, LiaError> {
    match f {
        Formula::True => return Ok(Some(0)),
        Formula::False => return Ok(None),
        _ => {}
    }
    let mut roots = vec![0i128];
    let mut delta = 1i128;
    let mut err = None;
    f.visit_atoms(&mut |a| {
        let e = a.expr();
        let c = e.coeff(x);
        match a {
            Atom::Dvd(d, _) | Atom::NDvd(d, _) => match lcm(delta, *d) {
                Ok(l) => delta = l,
                Err(e) => {
                    err.get_or_insert(e);
                }
            },
            _ if c != 0 => roots.push(floor_div(-e.konst(), c)),
            _ => {}
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    roots.sort();
    roots.dedup();
    let count = (roots.len() as u128) * (2 * delta as u128 + 3);
    if count > cfg.node_cap as u128 {
        return Err(LiaError::ResourceBudgetExceeded("too many model candidates".into()));
    }
    let mut cands: Vec<i128> = Vec::new();
    for r in &roots {
        cands.extend(r - delta - 1..=r + delta + 1);
    }
    cands.sort_by_key(|v| (v.abs(), *v < 0));
    cands.dedup();
    let mut env = Model::new();
    for c in cands {
        env.insert(x.clone(), c);
        if f.eval(&env)? {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Exhaustively compare `f` and `g` on the box given by per-variable bounds.
pub fn equivalent_on(f: &Formula, g: &Formula, bounds: &[(Var, i128, i128)]) -> Result<bool, LiaError> {
    const LIMIT: u128 = 10_000_000;
    let mut points: u128 = 1;
    for (_, lo, hi) in bounds {
        let n = if hi >= lo { (hi - lo + 1) as u128 } else { 0 };
        points = points.saturating_mul(n);
    }
    if points > LIMIT {
        return Err(LiaError::BoxTooLarge(points));
    }
    if points == 0 {
        return Ok(true);
    }
    let f = eliminate_quantifiers_with(f, &LiaConfig::default())?;
    let g = eliminate_quantifiers_with(g, &LiaConfig::default())?;
    let mut env: Model = bounds.iter().map(|(v, lo, _)| (v.clone(), *lo)).collect();
    loop {
        if f.eval(&env)? != g.eval(&env)? {
            return Ok(false);
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == bounds.len() {
                return Ok(true);
            }
            let (v, lo, hi) = &bounds[i];
            let cur = env.get_mut(v).unwrap();
            if *cur < *hi {
                *cur += 1;
                break;
            }
            *cur = *lo;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(s: &str) -> LinExpr {
        LinExpr::var(s)
    }

    #[test]
    fn sat_examples() {
        let f = Formula::and([Formula::ge("i", 49), Formula::le("i", 49)]);
        assert_eq!(is_sat(&f).unwrap(), SatResult::Sat([(Var::new("i"), 49)].into()));
        let g = Formula::and([Formula::lt("x", 0), Formula::gt("x", 0)]);
        assert_eq!(is_sat(&g).unwrap(), SatResult::Unsat);
        let h = Formula::and([Formula::dvd(2, var("x")), Formula::ge("x", 7), Formula::le("x", 8)]);
        assert_eq!(is_sat(&h).unwrap(), SatResult::Sat([(Var::new("x"), 8)].into()));
    }

    #[test]
    fn multivariate_model() {
        let f = Formula::and([
            Formula::eq(var("x") + var("y"), 10),
            Formula::gt("x", "y"),
            Formula::dvd(3, var("y")),
            Formula::exists("k", Formula::and([Formula::gt("k", "x"), Formula::lt("k", 20)])),
        ]);
        let SatResult::Sat(m) = is_sat(&f).unwrap() else { panic!() };
        let (x, y) = (m[&Var::new("x")], m[&Var::new("y")]);
        assert!(x + y == 10 && x > y && y % 3 == 0 && x < 19);
    }

    #[test]
    fn equivalence_oracle() {
        let b = |lo, hi| vec![(Var::new("x"), lo, hi)];
        assert!(!equivalent_on(&Formula::True, &Formula::False, &b(0, 0)).unwrap());
        let f = Formula::dvd(2, var("x"));
        let g = Formula::not(Formula::dvd(2, var("x") + 1));
        assert!(equivalent_on(&f, &g, &b(-50, 50)).unwrap());
        let big = vec![(Var::new("x"), 0, 9999), (Var::new("y"), 0, 9999)];
        assert!(matches!(equivalent_on(&f, &g, &big), Err(LiaError::BoxTooLarge(_))));
    }
}
