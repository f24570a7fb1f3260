//! Input generation and campaigns: online fuzzing against the instrumented
//! program, and offline triage of hangs found on the plain program.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{confirm, run, Compiled, Mode, OraclePlan, Oracle, Proof, RunOptions, RunOutcome};
use crate::lang::ast::Program;
use crate::lang::eval::InputTape;
use crate::lang::loops::LoopId;
use crate::monitor::{DEFAULT_ALPHA, DEFAULT_I0};

/// Longest tape a mutation may produce.
pub const MAX_TAPE: usize = 256;
const MAX_DELTA: i128 = 35;

/// Constants worth trying: 0, ±1, type extremes and program literals ± 1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dictionary {
    pub interesting: Vec<i128>,
    pub literals: Vec<i128>,
}

impl Dictionary {
    pub fn for_program(p: &Program) -> Dictionary {
        let mut interesting = BTreeSet::from([0, 1, -1]);
        for d in &p.decls {
            interesting.insert(d.ty.min());
            interesting.insert(d.ty.max());
        }
        let mut literals = BTreeSet::new();
        for n in p.literals() {
            literals.extend([n - 1, n, n + 1]);
        }
        Dictionary {
            interesting: interesting.into_iter().collect(),
            literals: literals.into_iter().collect(),
        }
    }

    fn any(&self, rng: &mut impl Rng) -> i128 {
        let n = self.interesting.len() + self.literals.len();
        if n == 0 {
            return 0;
        }
        let i = rng.gen_range(0..n);
        match self.interesting.get(i) {
            Some(&v) => v,
            None => self.literals[i - self.interesting.len()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    BitFlip { pos: usize, bit: u32 },
    Delta { pos: usize, delta: i128 },
    Replace { pos: usize, value: i128 },
    Insert { pos: usize, value: i128 },
    Delete { pos: usize },
}

impl Mutation {
    pub fn apply(&self, values: &[i128]) -> Vec<i128> {
        let mut out = values.to_vec();
        match *self {
            Mutation::BitFlip { pos, bit } => out[pos] ^= 1i128 << bit,
            Mutation::Delta { pos, delta } => out[pos] = out[pos].saturating_add(delta),
            Mutation::Replace { pos, value } => out[pos] = value,
            Mutation::Insert { pos, value } => out.insert(pos, value),
            Mutation::Delete { pos } => {
                out.remove(pos);
            }
        }
        out
    }
}

/// Pick one mutation uniformly among the five kinds. Kinds that need a value
/// to work on turn into an insert on an empty tape.
pub fn pick_mutation(values: &[i128], dict: &Dictionary, rng: &mut impl Rng) -> Mutation {
    let kind = rng.gen_range(0..5);
    if values.is_empty() || (kind == 3 && values.len() < MAX_TAPE) {
        return Mutation::Insert {
            pos: rng.gen_range(0..=values.len()),
            value: dict.any(rng),
        };
    }
    let pos = rng.gen_range(0..values.len());
    match kind {
        0 => Mutation::BitFlip {
            pos,
            bit: rng.gen_range(0..64),
        },
        1 => {
            let d = rng.gen_range(1..=MAX_DELTA);
            Mutation::Delta {
                pos,
                delta: if rng.gen() { d } else { -d },
            }
        }
        4 if values.len() > 1 => Mutation::Delete { pos },
        _ => Mutation::Replace {
            pos,
            value: dict.any(rng),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Seed {
    pub values: Vec<i128>,
    /// Index of the parent in the campaign corpus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Mutation>,
    pub energy: u64,
}

impl Seed {
    pub fn new(values: Vec<i128>) -> Seed {
        Seed {
            values,
            origin: None,
            mutation: None,
            energy: 1,
        }
    }
}

pub fn mutate(seed: &Seed, dict: &Dictionary, rng: &mut impl Rng) -> Seed {
    let m = pick_mutation(&seed.values, dict, rng);
    Seed {
        values: m.apply(&seed.values),
        origin: None,
        mutation: Some(m),
        energy: 1,
    }
}

/// Number of tape values consumed to initialise the store.
pub fn input_width(p: &Program) -> usize {
    p.decls.iter().map(|d| d.len.unwrap_or(1)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budgets {
    pub execs: u64,
    /// Step budget of one instrumented run.
    pub steps: u64,
    /// Wall-clock limit; campaigns are reproducible only without one.
    pub wall: Option<Duration>,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            execs: 10_000,
            steps: 100_000,
            wall: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CampaignConfig {
    pub rng_seed: u64,
    pub budgets: Budgets,
    /// Offline phase 1: runs longer than this are hangs.
    pub hang_steps: u64,
    /// Offline phase 2: step budget of each rerun.
    pub triage_steps: u64,
    pub max_hangs: usize,
    pub confirm_factor: u64,
    /// End the campaign at the first confirmed proof or candidate.
    pub stop_on_finding: bool,
    pub i0: u64,
    pub alpha: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            rng_seed: 1,
            budgets: Budgets::default(),
            hang_steps: 1_000_000,
            triage_steps: 100_000_000,
            max_hangs: 16,
            confirm_factor: 10,
            stop_on_finding: false,
            i0: DEFAULT_I0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// No evidence of non-termination.
    None,
    /// Hangs that no oracle could explain.
    Unknown,
    /// Revisit in a loop that reads `nondet()`.
    Candidate,
    Nonterm,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub proof: Proof,
    pub first_exec: u64,
    pub hits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CandidateFinding {
    pub loop_id: LoopId,
    pub iteration: u64,
    pub matched_iter: u64,
    pub witness: Vec<i128>,
    pub first_exec: u64,
    pub hits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Hang {
    pub tape: Vec<i128>,
    pub exec: u64,
    /// Phase-2 outcome kind (offline) or `BUDGET_EXHAUSTED` (online).
    pub resolution: String,
    pub steps: u64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Findings {
    pub mode: Mode,
    pub rng_seed: u64,
    pub execs: u64,
    pub total_steps: u64,
    pub corpus_size: usize,
    pub edges_covered: usize,
    pub errors: u64,
    pub proofs: Vec<Finding>,
    pub candidates: Vec<CandidateFinding>,
    pub hangs: Vec<Hang>,
    /// Proofs whose confirmation failed; always empty for a sound tool.
    pub rejected: Vec<Proof>,
    pub verdict: Verdict,
}

impl Findings {
    fn new(mode: Mode, rng_seed: u64) -> Findings {
        Findings {
            mode,
            rng_seed,
            execs: 0,
            total_steps: 0,
            corpus_size: 0,
            edges_covered: 0,
            errors: 0,
            proofs: Vec::new(),
            candidates: Vec::new(),
            hangs: Vec::new(),
            rejected: Vec::new(),
            verdict: Verdict::None,
        }
    }

    fn settle(&mut self) {
        self.verdict = if !self.proofs.is_empty() {
            Verdict::Nonterm
        } else if !self.candidates.is_empty() {
            Verdict::Candidate
        } else if !self.hangs.is_empty() {
            Verdict::Unknown
        } else {
            Verdict::None
        };
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("findings serialize")
    }

    /// Record a proof after confirming it; duplicates of a known proof only
    /// bump its hit count.
    fn add_proof(&mut self, c: &Compiled, p: Proof, exec: u64, factor: u64) -> bool {
        let key = |q: &Proof| (q.loop_id, q.oracle, q.src.clone());
        if let Some(f) = self.proofs.iter_mut().find(|f| key(&f.proof) == key(&p)) {
            f.hits += 1;
            return true;
        }
        if confirm(c, &p, factor).unwrap_or(false) {
            self.proofs.push(Finding {
                proof: p,
                first_exec: exec,
                hits: 1,
            });
            true
        } else {
            self.rejected.push(p);
            false
        }
    }

    fn add_candidate(&mut self, loop_id: LoopId, iteration: u64, matched_iter: u64, witness: &[i128], exec: u64) {
        if let Some(f) = self.candidates.iter_mut().find(|f| f.loop_id == loop_id) {
            f.hits += 1;
            return;
        }
        self.candidates.push(CandidateFinding {
            loop_id,
            iteration,
            matched_iter,
            witness: witness.to_vec(),
            first_exec: exec,
            hits: 1,
        });
    }
}

/// Coverage-guided mutation loop shared by both modes.
struct Fuzzer {
    dict: Dictionary,
    rng: ChaCha8Rng,
    corpus: Vec<Seed>,
    pending: Vec<Vec<i128>>,
    coverage: BTreeSet<usize>,
    total_energy: u64,
}

impl Fuzzer {
    fn new(c: &Compiled, rng_seed: u64) -> Fuzzer {
        let dict = Dictionary::for_program(&c.program);
        let n = input_width(&c.program);
        let mut pending = vec![vec![0; n]];
        for &v in dict.literals.iter().chain(&dict.interesting) {
            let t = vec![v; n.max(1)];
            if !pending.contains(&t) {
                pending.push(t);
            }
        }
        pending.reverse();
        Fuzzer {
            dict,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            corpus: Vec::new(),
            pending,
            coverage: BTreeSet::new(),
            total_energy: 0,
        }
    }

    /// Next tape to run: the initial seeds first, then 1 to 4 stacked
    /// mutations of an energy-weighted parent.
    fn next(&mut self) -> Seed {
        if let Some(v) = self.pending.pop() {
            return Seed::new(v);
        }
        if self.corpus.is_empty() {
            return mutate(&Seed::new(Vec::new()), &self.dict, &mut self.rng);
        }
        let mut pick = self.rng.gen_range(0..self.total_energy);
        let parent = self
            .corpus
            .iter()
            .position(|s| {
                if pick < s.energy {
                    return true;
                }
                pick -= s.energy;
                false
            })
            .unwrap_or(0);
        let mut child = self.corpus[parent].clone();
        for _ in 0..self.rng.gen_range(1..=4) {
            child = mutate(&child, &self.dict, &mut self.rng);
        }
        child.origin = Some(parent);
        child
    }

    /// Keep `seed` if it took a new edge; energy grows with novelty.
    fn feedback(&mut self, mut seed: Seed, edges: &[usize]) {
        let novel = edges.iter().filter(|&&e| self.coverage.insert(e)).count() as u64;
        if novel > 0 || self.corpus.is_empty() {
            seed.energy = 1 + novel;
            self.total_energy += seed.energy;
            self.corpus.push(seed);
        }
    }
}

fn out_of_time(start: Instant, b: &Budgets) -> bool {
    b.wall.is_some_and(|w| start.elapsed() >= w)
}

pub fn campaign_online(c: &Compiled, plan: &OraclePlan, conf: &CampaignConfig) -> Findings {
    let start = Instant::now();
    let mut f = Findings::new(Mode::Online, conf.rng_seed);
    let mut fz = Fuzzer::new(c, conf.rng_seed);
    let opts = RunOptions {
        budget: conf.budgets.steps,
        max_events: 0,
        i0: conf.i0,
        alpha: conf.alpha,
    };
    while f.execs < conf.budgets.execs && !out_of_time(start, &conf.budgets) {
        let exec = f.execs;
        let seed = fz.next();
        let r = run(c, &InputTape::new(seed.values.clone()), plan, &opts);
        f.execs += 1;
        f.total_steps += r.steps;
        let mut stop = false;
        match r.outcome {
            RunOutcome::NontermProof(p) => {
                stop = f.add_proof(c, p, exec, conf.confirm_factor) && conf.stop_on_finding;
            }
            RunOutcome::Candidate {
                loop_id,
                iteration,
                matched_iter,
            } => {
                f.add_candidate(loop_id, iteration, matched_iter, &seed.values, exec);
                stop = conf.stop_on_finding;
            }
            RunOutcome::BudgetExhausted { steps } => {
                if f.hangs.len() < conf.max_hangs && !f.hangs.iter().any(|h| h.tape == seed.values) {
                    f.hangs.push(Hang {
                        tape: seed.values.clone(),
                        exec,
                        resolution: "BUDGET_EXHAUSTED".into(),
                        steps,
                        verdict: Verdict::Unknown,
                    });
                }
            }
            RunOutcome::RuntimeError { .. } => f.errors += 1,
            RunOutcome::Terminated { .. } => {}
        }
        fz.feedback(seed, &r.coverage);
        if stop {
            break;
        }
    }
    f.corpus_size = fz.corpus.len();
    f.edges_covered = fz.coverage.len();
    f.settle();
    f
}

/// Phase 1 fuzzes the plain program and keeps runs longer than
/// `hang_steps`; phase 2 reruns each hang under `plan` with
/// `triage_steps`.
pub fn campaign_offline(c: &Compiled, plan: &OraclePlan, conf: &CampaignConfig) -> Findings {
    let start = Instant::now();
    let mut f = Findings::new(Mode::Offline, conf.rng_seed);
    let mut fz = Fuzzer::new(c, conf.rng_seed);
    let plain = OraclePlan::default();
    let p1 = RunOptions {
        budget: conf.hang_steps,
        max_events: 0,
        i0: conf.i0,
        alpha: conf.alpha,
    };
    let mut hangs: BTreeMap<Vec<i128>, u64> = BTreeMap::new();
    let mut order = Vec::new();
    while f.execs < conf.budgets.execs && !out_of_time(start, &conf.budgets) && hangs.len() < conf.max_hangs {
        let exec = f.execs;
        let seed = fz.next();
        let r = run(c, &InputTape::new(seed.values.clone()), &plain, &p1);
        f.execs += 1;
        f.total_steps += r.steps;
        match r.outcome {
            RunOutcome::BudgetExhausted { .. } => {
                if !hangs.contains_key(&seed.values) {
                    hangs.insert(seed.values.clone(), exec);
                    order.push(seed.values.clone());
                }
            }
            RunOutcome::RuntimeError { .. } => f.errors += 1,
            _ => {}
        }
        fz.feedback(seed, &r.coverage);
    }
    let p2 = RunOptions {
        budget: conf.triage_steps,
        ..p1
    };
    for tape in order {
        let exec = hangs[&tape];
        let r = run(c, &InputTape::new(tape.clone()), plan, &p2);
        f.total_steps += r.steps;
        let (resolution, verdict) = match r.outcome {
            RunOutcome::NontermProof(p) => {
                let ok = f.add_proof(c, p, exec, conf.confirm_factor);
                ("NONTERM_PROOF", if ok { Verdict::Nonterm } else { Verdict::Unknown })
            }
            RunOutcome::Candidate {
                loop_id,
                iteration,
                matched_iter,
            } => {
                f.add_candidate(loop_id, iteration, matched_iter, &tape, exec);
                ("CANDIDATE", Verdict::Candidate)
            }
            RunOutcome::Terminated { .. } => ("TERMINATED", Verdict::Unknown),
            RunOutcome::BudgetExhausted { .. } => ("BUDGET_EXHAUSTED", Verdict::Unknown),
            RunOutcome::RuntimeError { .. } => ("RUNTIME_ERROR", Verdict::Unknown),
        };
        f.hangs.push(Hang {
            tape,
            exec,
            resolution: resolution.into(),
            steps: r.steps,
            verdict,
        });
        if verdict >= Verdict::Candidate && conf.stop_on_finding {
            break;
        }
    }
    f.corpus_size = fz.corpus.len();
    f.edges_covered = fz.coverage.len();
    f.settle();
    f
}

/// Number of confirmed proofs per oracle kind.
pub fn proof_counts(f: &Findings) -> BTreeMap<Oracle, usize> {
    let mut m = BTreeMap::new();
    for p in &f.proofs {
        *m.entry(p.proof.oracle).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::plan_for;
    use crate::lang::parse;
    use crate::src::{analyze_program, SrcConfig};

    const FIG1: &str = "i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }";

    fn setup(src: &str, mode: Mode) -> (Compiled, OraclePlan) {
        let c = Compiled::from_source(src).unwrap();
        let a = analyze_program(&c.cfg, &SrcConfig::default()).unwrap();
        let plan = plan_for(&c, &a, mode);
        (c, plan)
    }

    #[test]
    fn dictionary_and_mutations() {
        let d = Dictionary::for_program(&parse(FIG1).unwrap());
        assert!(d.literals.contains(&49) && d.literals.contains(&101));
        assert!(d.interesting.contains(&(i32::MIN as i128)));
        assert_eq!(Mutation::Replace { pos: 0, value: 49 }.apply(&[0]), [49]);
        assert_eq!(Mutation::Delta { pos: 0, delta: 1 }.apply(&[7]), [8]);
        assert_eq!(Mutation::BitFlip { pos: 1, bit: 2 }.apply(&[0, 1]), [0, 5]);
        assert_eq!(Mutation::Delete { pos: 0 }.apply(&[3, 4]), [4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = mutate(&Seed::new(Vec::new()), &d, &mut rng);
            assert_eq!(s.values.len(), 1);
            assert!(d.interesting.contains(&s.values[0]) || d.literals.contains(&s.values[0]));
        }
        for _ in 0..500 {
            let s = mutate(&Seed::new(vec![10, 20]), &d, &mut rng);
            match s.mutation.unwrap() {
                Mutation::Delta { delta, .. } => assert!((1..=35).contains(&delta.abs())),
                Mutation::Insert { .. } => assert_eq!(s.values.len(), 3),
                Mutation::Delete { .. } => assert_eq!(s.values.len(), 1),
                _ => assert_eq!(s.values.len(), 2),
            }
        }
    }

    #[test]
    fn online_finds_fig1() {
        let (c, plan) = setup(FIG1, Mode::Online);
        let f = campaign_online(&c, &plan, &CampaignConfig {
            budgets: Budgets { execs: 300, steps: 100_000, wall: None },
            ..CampaignConfig::default()
        });
        assert_eq!(f.verdict, Verdict::Nonterm);
        assert_eq!(proof_counts(&f)[&Oracle::SrcHit], 1);
        assert!(f.rejected.is_empty());
        let again = campaign_online(&c, &plan, &CampaignConfig {
            budgets: Budgets { execs: 300, steps: 100_000, wall: None },
            ..CampaignConfig::default()
        });
        assert_eq!(f.to_json(), again.to_json());
    }

    #[test]
    fn loop_free_and_u8_counter() {
        let (c, plan) = setup("i32 x; x = x + 1;", Mode::Online);
        let f = campaign_online(&c, &plan, &CampaignConfig {
            budgets: Budgets { execs: 50, ..Budgets::default() },
            ..CampaignConfig::default()
        });
        assert_eq!(f.verdict, Verdict::None);
        assert_eq!(f.execs, 50);
        let (c, plan) = setup("u8 x; i32 y; while (x != 0) { x = x + 4; y = y * 3; }", Mode::Online);
        let f = campaign_online(&c, &plan, &CampaignConfig {
            budgets: Budgets { execs: 200, steps: 1_000_000, wall: None },
            ..CampaignConfig::default()
        });
        assert!(f.proofs.iter().any(|p| p.proof.oracle == Oracle::Revisit), "{}", f.to_json());
    }

    #[test]
    fn offline_triage() {
        let (c, plan) = setup(FIG1, Mode::Offline);
        let conf = CampaignConfig {
            budgets: Budgets { execs: 200, ..Budgets::default() },
            hang_steps: 1_000,
            triage_steps: 1_000_000,
            ..CampaignConfig::default()
        };
        let f = campaign_offline(&c, &plan, &conf);
        assert!(f.hangs.iter().any(|h| h.tape == [0]));
        assert_eq!(f.verdict, Verdict::Nonterm);
        // Slow but terminating: a hang that phase 2 cannot prove.
        let (c, plan) = setup("u8 s; i32 i; i = 0; while (i < 20000) { i = i + 1; }", Mode::Offline);
        let f = campaign_offline(&c, &plan, &conf);
        assert!(!f.hangs.is_empty());
        assert!(f.hangs.iter().all(|h| h.verdict == Verdict::Unknown && h.resolution == "TERMINATED"));
        assert_eq!(f.verdict, Verdict::Unknown);
        // Fast terminating: nothing at all.
        let (c, plan) = setup("i32 i; i = 0; while (i < 100) { i = i + 1; }", Mode::Offline);
        let f = campaign_offline(&c, &plan, &conf);
        assert_eq!(f.verdict, Verdict::None);
        assert!(f.hangs.is_empty() && f.proofs.is_empty());
    }
}
