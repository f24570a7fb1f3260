use std::collections::BTreeMap;

use loopwatch::corpus::corpus_manifest;
use loopwatch::exec::Compiled;
use loopwatch::lang::ast::VarId;
use loopwatch::lang::cfg::{Cfg, Cond, Instr};
use loopwatch::lang::eval::{eval, is_true, Store, Value};
use loopwatch::lang::classify::classify_loop;
use loopwatch::lang::LoopClass;
use loopwatch::lia::Var;
use loopwatch::paths::{enumerate_paths, LoopPath, DEFAULT_PATH_CAP};
use loopwatch::src::{is_inductive, SigmaEntry, summarize_path, SrcConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One concrete traversal of `p`. `None` when a branch disagrees with the path.
fn walk(cfg: &Cfg, p: &LoopPath, s: &mut Store) -> Option<()> {
    for (i, &e) in p.edges.iter().enumerate() {
        for ins in &cfg.blocks[p.blocks[i].0].instrs {
            match ins {
                Instr::Assign(v, x) => {
                    let val = eval(x, s).ok()?;
                    s.set(*v, cfg.vars[v.0].ty.wrap(val));
                }
                Instr::Skip => {}
                other => panic!("unexpected {other:?} in a linear path"),
            }
        }
        let ok = match &cfg.edges[e].cond {
            Cond::Always => true,
            Cond::If(c) => is_true(c, s).ok()?,
            Cond::IfNot(c) => !is_true(c, s).ok()?,
        };
        if !ok {
            return None;
        }
    }
    Some(())
}

fn random_store(cfg: &Cfg, rng: &mut ChaCha8Rng) -> Store {
    let vals = cfg
        .vars
        .iter()
        .map(|d| {
            let ty = d.ty;
            match d.len {
                Some(n) => Value::Array(vec![0; n]),
                None => Value::Scalar(match rng.gen_range(0..3) {
                    0 => rng.gen_range(ty.min()..=ty.max()),
                    1 => ty.wrap(rng.gen_range(-64..=64)),
                    _ => ty.wrap(if rng.gen_bool(0.5) { ty.min() } else { ty.max() } + rng.gen_range(-40..=40)),
                }),
            }
        })
        .collect();
    Store { vals }
}

fn scalars(cfg: &Cfg, s: &Store) -> BTreeMap<VarId, i128> {
    (0..cfg.vars.len())
        .filter(|&i| cfg.vars[i].len.is_none())
        .map(|i| (VarId(i), s.get(VarId(i))))
        .collect()
}

#[test]
fn summaries_match_concrete_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let conf = SrcConfig::default();
    let k = Var::new("k");
    let mut checked = 0u64;
    let mut wrapped: BTreeMap<String, u64> = BTreeMap::new();
    let mut paths = 0;
    for e in corpus_manifest().unwrap() {
        let c = Compiled::from_source(&e.source).unwrap();
        // Syntactic class: a loop the analysis demoted for budget reasons
        // still has inductive paths.
        for l in &c.loops {
            if classify_loop(&c.cfg, l) != LoopClass::Linear {
                continue;
            }
            let ps = enumerate_paths(&c.cfg, l, DEFAULT_PATH_CAP).unwrap();
            for p in ps.iter().filter(|p| p.is_cyclic() && is_inductive(&c.cfg, p)) {
                let sum = summarize_path(&c.cfg, p, &k, &conf).unwrap();
                paths += 1;
                for _ in 0..100 {
                    let pre = random_store(&c.cfg, &mut rng);
                    let pre_vals = scalars(&c.cfg, &pre);
                    let mut s = pre.clone();
                    let mut any_wrap = false;
                    for kk in 1..=50i128 {
                        let before = scalars(&c.cfg, &s);
                        if walk(&c.cfg, p, &mut s).is_none() {
                            break;
                        }
                        let got = scalars(&c.cfg, &s);
                        any_wrap |= got.iter().any(|(v, x)| match sum.sigma.get(v) {
                            Some(SigmaEntry::Affine { step }) => before[v] + step != *x,
                            _ => false,
                        });
                        let want = sum.apply(&pre_vals, kk);
                        assert_eq!(want, got, "{} path {} k={kk} from {pre_vals:?}", e.name, p.id);
                        checked += 1;
                    }
                    if any_wrap {
                        *wrapped.entry(e.name.clone()).or_default() += 1;
                    }
                }
            }
        }
    }
    assert!(paths >= 10, "{paths} inductive paths");
    assert!(checked >= 10_000, "{checked} checks");
    for name in ["u8_wrap", "u16_down"] {
        assert!(wrapped.get(name).copied().unwrap_or(0) > 0, "{name} never wrapped: {wrapped:?}");
    }
}
