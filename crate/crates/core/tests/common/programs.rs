//! Random `.wl` programs for soundness sweeps. Small types and constants so
//! that both terminating and looping runs are common.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use loopwatch::lang::parse;

const TYPES: [&str; 5] = ["i8", "u8", "i16", "u16", "i32"];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    vars: Vec<(String, &'static str)>,
    counters: usize,
    decls: Vec<String>,
}

impl Gen<'_> {
    fn var(&mut self) -> (String, &'static str) {
        self.vars.choose(self.rng).unwrap().clone()
    }

    fn konst(&mut self) -> i64 {
        *[0, 1, 2, 3, 5, 10, 50, 100, -1, -3].choose(self.rng).unwrap()
    }

    fn same_type(&mut self, ty: &str) -> Option<String> {
        let xs: Vec<String> = self.vars.iter().filter(|v| v.1 == ty).map(|v| v.0.clone()).collect();
        xs.choose(self.rng).cloned()
    }

    fn cond(&mut self) -> String {
        let (x, ty) = self.var();
        let op = *["<", "<=", ">", ">=", "==", "!="].choose(self.rng).unwrap();
        let rhs = match self.same_type(ty) {
            Some(y) if self.rng.gen_bool(0.3) => y,
            _ => {
                let c = self.konst();
                if ty.starts_with('u') { c.abs().to_string() } else { c.to_string() }
            }
        };
        let atom = format!("{x} {op} {rhs}");
        match self.rng.gen_range(0..6) {
            0 => format!("{atom} && {}", self.simple_atom()),
            1 => format!("{atom} || {}", self.simple_atom()),
            _ => atom,
        }
    }

    fn simple_atom(&mut self) -> String {
        let (x, _) = self.var();
        let c = self.konst().abs();
        format!("{x} != {c}")
    }

    fn assign(&mut self) -> String {
        let (x, ty) = self.var();
        let c = self.konst().abs().max(1);
        match self.rng.gen_range(0..9) {
            0 | 1 => format!("{x} = {x} + {c};"),
            2 | 3 => format!("{x} = {x} - {c};"),
            4 => format!("{x} = {};", self.konst().abs()),
            5 => match self.same_type(ty) {
                Some(y) => format!("{x} = {y};"),
                None => format!("{x} = {x} + 0;"),
            },
            6 => format!("{x} = {x} * 2;"),
            7 if ty.starts_with('u') => format!("{x} = {x} >> 1;"),
            7 => format!("{x} = {x} / 2;"),
            _ => {
                if self.rng.gen_bool(0.3) {
                    format!("{x} = nondet();")
                } else {
                    format!("a[{}] = {x};", self.rng.gen_range(0..3))
                }
            }
        }
    }

    fn stmt(&mut self, depth: usize) -> String {
        match self.rng.gen_range(0..10) {
            0 | 1 if depth < 2 => {
                let c = self.cond();
                let t = self.block(depth + 1);
                if self.rng.gen_bool(0.6) {
                    let e = self.block(depth + 1);
                    format!("if ({c}) {{ {t} }} else {{ {e} }}")
                } else {
                    format!("if ({c}) {{ {t} }}")
                }
            }
            2 if depth < 2 => {
                let c = self.cond();
                format!("if ({c}) {{ break; }}")
            }
            3 if depth < 1 => {
                // Inner loop over a fresh counter: bounded or not.
                self.counters += 1;
                let k = format!("k{}", self.counters);
                self.decls.push(format!("u8 {k};"));
                let bound = self.rng.gen_range(1..6);
                let step = if self.rng.gen_bool(0.85) { 1 } else { 0 };
                let body = self.assign();
                format!("{k} = 0; while ({k} < {bound}) {{ {body} {k} = {k} + {step}; }}")
            }
            _ => self.assign(),
        }
    }

    fn block(&mut self, depth: usize) -> String {
        let n = self.rng.gen_range(1..=3);
        (0..n).map(|_| self.stmt(depth)).collect::<Vec<_>>().join(" ")
    }
}

/// A program with one outer loop; always parses.
pub fn random_program(rng: &mut ChaCha8Rng) -> String {
    loop {
        let n = rng.gen_range(1..=3);
        let vars: Vec<(String, &'static str)> =
            (0..n).map(|i| (["x", "y", "z"][i].to_string(), *TYPES.choose(rng).unwrap())).collect();
        let mut g = Gen {
            rng,
            vars: vars.clone(),
            counters: 0,
            decls: Vec::new(),
        };
        let c = g.cond();
        let body = g.block(0);
        let mut src: Vec<String> = vars.iter().map(|(v, t)| format!("{t} {v};")).collect();
        src.push("i8 a[3];".into());
        src.extend(g.decls);
        src.push(format!("while ({c}) {{ {body} }}"));
        let s = src.join("\n");
        if parse(&s).is_ok() {
            return s;
        }
    }
}
