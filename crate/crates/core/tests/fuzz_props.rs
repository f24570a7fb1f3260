mod common;

use common::programs::random_program;
use loopwatch::corpus::{corpus_manifest, Expect};
use loopwatch::exec::{plan_for, Compiled, Mode};
use loopwatch::fuzz::{campaign_offline, campaign_online, mutate, Budgets, CampaignConfig, Dictionary, Mutation, Seed, MAX_TAPE};
use loopwatch::lang::parse;
use loopwatch::src::{analyze_program, SrcConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tape() -> impl Strategy<Value = Vec<i128>> {
    prop::collection::vec(-1000i128..1000, 0..12)
}

proptest! {
    #[test]
    fn mutation_changes_at_most_one_slot(values in tape(), seed in any::<u64>()) {
        let dict = Dictionary::for_program(&parse("u8 x; i16 y; while (x < 7) { y = y + 300; }").unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let child = mutate(&Seed::new(values.clone()), &dict, &mut rng);
        let out = &child.values;
        prop_assert!(!out.is_empty());
        prop_assert!(out.len() <= MAX_TAPE);
        match child.mutation.unwrap() {
            Mutation::Insert { pos, value } => {
                prop_assert_eq!(out.len(), values.len() + 1);
                prop_assert_eq!(out[pos], value);
                let mut back = out.clone();
                back.remove(pos);
                prop_assert_eq!(back, values);
            }
            Mutation::Delete { pos } => {
                prop_assert!(values.len() > 1);
                let mut back = out.clone();
                back.insert(pos, values[pos]);
                prop_assert_eq!(back, values);
            }
            m => {
                prop_assert_eq!(out.len(), values.len());
                let diff = out.iter().zip(&values).filter(|(a, b)| a != b).count();
                prop_assert!(diff <= 1, "{:?}", m);
                if let Mutation::Replace { value, .. } = m {
                    prop_assert!(dict.interesting.contains(&value) || dict.literals.contains(&value));
                }
            }
        }
    }
}

fn plan(src: &str, mode: Mode) -> (Compiled, loopwatch::exec::OraclePlan) {
    let c = Compiled::from_source(src).unwrap();
    let a = analyze_program(&c.cfg, &SrcConfig::default()).unwrap();
    let p = plan_for(&c, &a, mode);
    (c, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn campaigns_are_reproducible(prog in any::<u64>(), rng_seed in any::<u64>()) {
        let src = random_program(&mut ChaCha8Rng::seed_from_u64(prog));
        let conf = CampaignConfig {
            rng_seed,
            budgets: Budgets { execs: 200, steps: 20_000, wall: None },
            hang_steps: 20_000,
            triage_steps: 200_000,
            ..CampaignConfig::default()
        };
        let (c, p) = plan(&src, Mode::Online);
        prop_assert_eq!(campaign_online(&c, &p, &conf).to_json(), campaign_online(&c, &p, &conf).to_json());
        let (c, p) = plan(&src, Mode::Offline);
        prop_assert_eq!(campaign_offline(&c, &p, &conf).to_json(), campaign_offline(&c, &p, &conf).to_json());
    }
}

/// Same set of corpus programs with a proof in both modes. TERM entries get
/// a smaller budget: soundness is checked elsewhere and their runs are long.
#[test]
fn online_and_offline_agree_on_corpus() {
    for e in corpus_manifest().unwrap() {
        let execs = if e.expect == Expect::Term { 1_000 } else { 100_000 };
        let conf = CampaignConfig {
            budgets: Budgets {
                execs,
                ..Budgets::default()
            },
            hang_steps: 100_000,
            triage_steps: 10_000_000,
            stop_on_finding: true,
            ..CampaignConfig::default()
        };
        let (c, p) = plan(&e.source, Mode::Online);
        let on = campaign_online(&c, &p, &conf);
        let (c, p) = plan(&e.source, Mode::Offline);
        let off = campaign_offline(&c, &p, &conf);
        assert_eq!(
            on.proofs.is_empty(),
            off.proofs.is_empty(),
            "{}: online {} proofs, offline {}",
            e.name,
            on.proofs.len(),
            off.proofs.len()
        );
        assert_eq!(!on.proofs.is_empty(), e.expect == Expect::Nonterm, "{}", e.name);
    }
}
