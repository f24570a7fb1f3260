//! Prefix (SMT-LIB-like) text form: `(and (<= i 49) (>= i 49))`,
//! `(exists k (< x k))`, `(div 3 (+ x 1))`.

use std::fmt;

use super::formula::{Atom, Formula};
use super::linexpr::{LinExpr, Var};
use super::LiaError;

fn write_term(f: &mut fmt::Formatter<'_>, v: &Var, c: i128) -> fmt::Result {
    match c {
        1 => write!(f, "{v}"),
        -1 => write!(f, "(- {v})"),
        c => write!(f, "(* {c} {v})"),
    }
}

/// Linear part only, with `k` printed as an extra summand when nonzero.
fn write_sum(f: &mut fmt::Formatter<'_>, e: &LinExpr, with_konst: bool) -> fmt::Result {
    let n = e.terms().count() + usize::from(with_konst && e.konst() != 0);
    if n == 0 {
        return write!(f, "0");
    }
    if n > 1 {
        write!(f, "(+")?;
    }
    let mut first = true;
    for (v, c) in e.terms() {
        if n > 1 || !first {
            write!(f, " ")?;
        }
        write_term(f, v, c)?;
        first = false;
    }
    if with_konst && e.konst() != 0 {
        if n > 1 {
            write!(f, " ")?;
        }
        write!(f, "{}", e.konst())?;
    }
    if n > 1 {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_sum(f, self, true)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Le(e) => {
                // Prefer `(>= x c)` when every coefficient is negative.
                if e.terms().all(|(_, c)| c < 0) && !e.is_const() {
                    let n = e.linear_part().checked_scale(-1).map_err(|_| fmt::Error)?;
                    write!(f, "(>= ")?;
                    write_sum(f, &n, false)?;
                    write!(f, " {})", e.konst())
                } else {
                    write!(f, "(<= ")?;
                    write_sum(f, e, false)?;
                    write!(f, " {})", -e.konst())
                }
            }
            Atom::Eq(e) | Atom::Ne(e) => {
                let op = if matches!(self, Atom::Eq(_)) { "=" } else { "distinct" };
                write!(f, "({op} ")?;
                write_sum(f, e, false)?;
                write!(f, " {})", -e.konst())
            }
            Atom::Dvd(d, e) => write!(f, "(div {d} {e})"),
            Atom::NDvd(d, e) => write!(f, "(not (div {d} {e}))"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(g) => write!(f, "(not {g})"),
            Formula::And(gs) | Formula::Or(gs) => {
                write!(f, "({}", if matches!(self, Formula::And(_)) { "and" } else { "or" })?;
                for g in gs {
                    write!(f, " {g}")?;
                }
                write!(f, ")")
            }
            Formula::Exists(v, g) => write!(f, "(exists {v} {g})"),
            Formula::Forall(v, g) => write!(f, "(forall {v} {g})"),
        }
    }
}

#[derive(Debug)]
enum Sexp {
    Atom(String, usize),
    List(Vec<Sexp>, usize),
}

impl Sexp {
    fn pos(&self) -> usize {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }
}

fn perr(pos: usize, msg: impl Into<String>) -> LiaError {
    LiaError::Parse {
        pos,
        msg: msg.into(),
    }
}

fn read_sexp(src: &str) -> Result<Sexp, LiaError> {
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    let mut stack: Vec<(Vec<Sexp>, usize)> = Vec::new();
    let mut result = None;
    while i < bytes.len() {
        let (p, c) = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if result.is_some() {
            return Err(perr(p, "trailing input"));
        }
        let item = match c {
            '(' => {
                stack.push((Vec::new(), p));
                i += 1;
                continue;
            }
            ')' => {
                let (items, start) = stack.pop().ok_or_else(|| perr(p, "unbalanced ')'"))?;
                i += 1;
                Sexp::List(items, start)
            }
            _ => {
                let s = i;
                while i < bytes.len() && !bytes[i].1.is_whitespace() && bytes[i].1 != '(' && bytes[i].1 != ')' {
                    i += 1;
                }
                Sexp::Atom(bytes[s..i].iter().map(|(_, c)| c).collect(), p)
            }
        };
        match stack.last_mut() {
            Some((items, _)) => items.push(item),
            None => result = Some(item),
        }
    }
    if let Some((_, p)) = stack.pop() {
        return Err(perr(p, "unclosed '('"));
    }
    result.ok_or_else(|| perr(0, "empty input"))
}

fn term(s: &Sexp) -> Result<LinExpr, LiaError> {
    match s {
        Sexp::Atom(a, p) => {
            if let Ok(n) = a.parse::<i128>() {
                Ok(LinExpr::constant(n))
            } else if a.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_' || c == '%') {
                Ok(LinExpr::var(a.as_str()))
            } else {
                Err(perr(*p, format!("bad term '{a}'")))
            }
        }
        Sexp::List(items, p) => {
            let (Some(Sexp::Atom(op, _)), args) = (items.first(), items.get(1..).unwrap_or(&[])) else {
                return Err(perr(*p, "expected operator"));
            };
            let args: Vec<LinExpr> = args.iter().map(term).collect::<Result<_, _>>()?;
            match (op.as_str(), args.len()) {
                ("+", _) => args.iter().try_fold(LinExpr::constant(0), |a, b| a.checked_add(b)),
                ("-", 1) => args[0].checked_scale(-1),
                ("-", n) if n > 1 => args[1..].iter().try_fold(args[0].clone(), |a, b| a.checked_sub(b)),
                ("*", 2) => match (args[0].is_const(), args[1].is_const()) {
                    (true, _) => args[1].checked_scale(args[0].konst()),
                    (_, true) => args[0].checked_scale(args[1].konst()),
                    _ => Err(perr(*p, "nonlinear product")),
                },
                _ => Err(perr(*p, format!("bad term operator '{op}'"))),
            }
        }
    }
}

fn formula(s: &Sexp) -> Result<Formula, LiaError> {
    match s {
        Sexp::Atom(a, p) => match a.as_str() {
            "true" => Ok(Formula::True),
            "false" => Ok(Formula::False),
            _ => Err(perr(*p, format!("expected formula, found '{a}'"))),
        },
        Sexp::List(items, p) => {
            let Some(Sexp::Atom(op, _)) = items.first() else {
                return Err(perr(*p, "expected operator"));
            };
            let args = &items[1..];
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(perr(*p, format!("'{op}' takes {n} arguments")))
                }
            };
            Ok(match op.as_str() {
                "and" => Formula::And(args.iter().map(formula).collect::<Result<_, _>>()?),
                "or" => Formula::Or(args.iter().map(formula).collect::<Result<_, _>>()?),
                "not" => {
                    arity(1)?;
                    Formula::not(formula(&args[0])?)
                }
                "=>" => {
                    arity(2)?;
                    Formula::implies(formula(&args[0])?, formula(&args[1])?)
                }
                "exists" | "forall" => {
                    arity(2)?;
                    let Sexp::Atom(v, _) = &args[0] else {
                        return Err(perr(args[0].pos(), "expected variable"));
                    };
                    let body = formula(&args[1])?;
                    if op == "exists" {
                        Formula::exists(v.as_str(), body)
                    } else {
                        Formula::forall(v.as_str(), body)
                    }
                }
                "div" => {
                    arity(2)?;
                    let d = term(&args[0])?;
                    if !d.is_const() || d.konst() <= 0 {
                        return Err(perr(args[0].pos(), "divisor must be a positive constant"));
                    }
                    Formula::dvd(d.konst(), term(&args[1])?)
                }
                "<=" | "<" | ">=" | ">" | "=" | "distinct" => {
                    arity(2)?;
                    let (a, b) = (term(&args[0])?, term(&args[1])?);
                    match op.as_str() {
                        "<=" => Formula::le(a, b),
                        "<" => Formula::lt(a, b),
                        ">=" => Formula::ge(a, b),
                        ">" => Formula::gt(a, b),
                        "=" => Formula::eq(a, b),
                        _ => Formula::ne(a, b),
                    }
                }
                _ => return Err(perr(*p, format!("unknown operator '{op}'"))),
            })
        }
    }
}

pub fn parse_formula(src: &str) -> Result<Formula, LiaError> {
    formula(&read_sexp(src)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lia::simplify;

    #[test]
    fn prints_canonical_pair() {
        let f = simplify(&Formula::and([Formula::ge("i", 49), Formula::le("i", 49)])).unwrap();
        assert_eq!(f.to_string(), "(and (<= i 49) (>= i 49))");
    }

    #[test]
    fn round_trip() {
        for s in [
            "(and (<= i 49) (>= i 49))",
            "(exists k (and (< 0 k) (div 3 (+ x 1))))",
            "(forall j (or (not (= (* 2 x) j)) (distinct (- y) 4)))",
            "(div 3 (+ x 1))",
            "true",
        ] {
            let f = parse_formula(s).unwrap();
            let g = parse_formula(&f.to_string()).unwrap();
            assert_eq!(f, g, "{s}");
        }
    }

    #[test]
    fn errors_carry_position() {
        assert!(matches!(parse_formula("(and (<= x 1)"), Err(LiaError::Parse { pos: 0, .. })));
        assert!(matches!(parse_formula("(<= (* x y) 1)"), Err(LiaError::Parse { pos: 4, .. })));
        assert!(parse_formula("(div 0 x)").is_err());
    }
}
