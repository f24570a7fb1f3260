mod common;

use common::programs::random_program;
use loopwatch::corpus::corpus_manifest;
use loopwatch::exec::{confirm, plan_for, Compiled, Mode};
use loopwatch::fuzz::{campaign_online, Budgets, CampaignConfig};
use loopwatch::lang::eval::InputTape;
use loopwatch::lang::reference::{run_reference, RefStatus};
use loopwatch::src::{analyze_program, SrcConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Proof checks that share nothing with the monitor: confirm() replays on
/// the instrumented machine, the reference walker runs the AST directly.
fn check_program(src: &str, conf: &CampaignConfig) -> usize {
    let c = Compiled::from_source(src).unwrap();
    let a = analyze_program(&c.cfg, &SrcConfig::default()).unwrap();
    let plan = plan_for(&c, &a, Mode::Online);
    let f = campaign_online(&c, &plan, conf);
    assert!(f.rejected.is_empty(), "rejected proofs for\n{src}\n{:?}", f.rejected);
    for p in f.proofs.iter().map(|x| &x.proof) {
        assert!(confirm(&c, p, 10).unwrap(), "confirm failed\n{src}\n{p:?}");
        let budget = 10 * p.steps + 100_000;
        let r = run_reference(&c.program, &InputTape::new(p.witness.clone()), budget);
        assert!(
            matches!(r.status, RefStatus::BudgetExhausted),
            "reference run of the witness ended: {:?}\n{src}\n{p:?}",
            r.status
        );
    }
    f.proofs.len()
}

fn small() -> CampaignConfig {
    CampaignConfig {
        rng_seed: 7,
        budgets: Budgets {
            execs: 300,
            steps: 20_000,
            wall: None,
        },
        ..CampaignConfig::default()
    }
}

#[test]
fn corpus_proofs_are_sound() {
    for e in corpus_manifest().unwrap() {
        check_program(&e.source, &small());
    }
}

#[test]
fn random_program_proofs_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut proven = 0;
    for _ in 0..500 {
        let src = random_program(&mut rng);
        if check_program(&src, &small()) > 0 {
            proven += 1;
        }
    }
    // The generator is only useful if it produces provable loops.
    assert!(proven >= 25, "only {proven} programs had proofs");
}
