//! `loopwatch`: analyze, run, fuzz and triage `.wl` programs.
//!
//! Exit codes: 0 clean, 1 corpus-check failure, 2 parse/type/sidecar error,
//! 3 IO error, 10 non-termination proven (only with `--fail-on-nonterm`).

use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use loopwatch::corpus::{self, CorpusError, EntryResult, Expect};
use loopwatch::exec::{self, plan_for, Compiled, ExecError, Mode, RunOptions, RunOutcome};
use loopwatch::fuzz::{self, Budgets, CampaignConfig, Findings, Verdict};
use loopwatch::lang::eval::InputTape;
use loopwatch::monitor::{self, DEFAULT_ALPHA, DEFAULT_I0};
use loopwatch::src::{analyze_program, LoopAnalysis, SrcConfig};

pub const SCHEMA_VERSION: u32 = 1;

const EXIT_OK: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NONTERM: u8 = 10;

#[derive(Parser)]
#[command(name = "loopwatch", version, about = "Find and prove non-terminating loops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print per-run details.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Static analysis: loop classes, revisit conditions and slices.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Run one input tape under the oracles.
    Run {
        file: PathBuf,
        /// Tape file: integers separated by whitespace.
        #[arg(long, conflicts_with = "input")]
        tape: Option<PathBuf>,
        /// Tape given inline, e.g. "0 5".
        #[arg(long)]
        input: Option<String>,
        #[command(flatten)]
        knobs: Knobs,
        #[command(flatten)]
        out: Out,
    },
    /// Fuzzing campaign.
    Fuzz {
        file: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
        #[command(flatten)]
        out: Out,
    },
    /// Rerun collected hang tapes with the full oracle plan.
    Triage {
        file: PathBuf,
        /// Tape files, or directories of `*.tape` files.
        #[arg(required = true)]
        tapes: Vec<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
        #[command(flatten)]
        out: Out,
    },
    /// Run the pipeline over a corpus directory and compare with `.expect` files.
    CorpusCheck {
        dir: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
        #[command(flatten)]
        out: Out,
        /// Completeness misses fail the check too.
        #[arg(long)]
        strict: bool,
        /// Report TERM entries with a confirmed proof as label errors.
        #[arg(long)]
        audit: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Online,
    Offline,
}

#[derive(Args)]
struct Knobs {
    #[arg(long, value_enum, default_value = "online")]
    mode: ModeArg,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    execs: u64,
    /// Step budget per instrumented run.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    /// Offline mode: runs longer than this are hangs.
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    hang_steps: u64,
    /// Offline mode: step budget of each hang rerun.
    #[arg(long, default_value_t = 100_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    triage_steps: u64,
    #[arg(long, default_value_t = 1)]
    rng: u64,
    #[arg(long, default_value_t = DEFAULT_I0, value_parser = clap::value_parser!(u64).range(1..))]
    i0: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = clap::value_parser!(u64).range(1..))]
    alpha: u64,
    /// Exit 10 when a non-termination proof is confirmed.
    #[arg(long)]
    fail_on_nonterm: bool,
}

impl Knobs {
    fn mode(&self) -> Mode {
        match self.mode {
            ModeArg::Online => Mode::Online,
            ModeArg::Offline => Mode::Offline,
        }
    }

    fn campaign(&self) -> CampaignConfig {
        CampaignConfig {
            rng_seed: self.rng,
            budgets: Budgets {
                execs: self.execs,
                steps: self.steps,
                wall: None,
            },
            hang_steps: self.hang_steps,
            triage_steps: self.triage_steps,
            i0: self.i0,
            alpha: self.alpha,
            ..CampaignConfig::default()
        }
    }

    fn echo(&self) -> Value {
        json!({
            "mode": self.mode(),
            "execs": self.execs,
            "steps": self.steps,
            "hang_steps": self.hang_steps,
            "triage_steps": self.triage_steps,
            "rng": self.rng,
            "i0": self.i0,
            "alpha": self.alpha,
            "fail_on_nonterm": self.fail_on_nonterm,
        })
    }
}

#[derive(Args)]
struct Out {
    /// Write the JSON report here (`-` for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Io(String),
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Failure::Io(e.to_string()),
            CorpusError::Sidecar { .. } => Failure::Input(e.to_string()),
        }
    }
}

struct Paint(bool);

impl Paint {
    fn verdict(&self, v: Verdict) -> String {
        let s = serde_json::to_value(v).unwrap().as_str().unwrap_or_default().to_owned();
        if !self.0 {
            return s;
        }
        let code = match v {
            Verdict::Nonterm => "31",
            Verdict::Candidate => "33",
            Verdict::Unknown => "36",
            Verdict::None => "32",
        };
        format!("\x1b[{code}m{s}\x1b[0m")
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn compile(path: &Path) -> Result<Compiled, Failure> {
    let src = read(path)?;
    Compiled::from_source(&src).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn analyses(c: &Compiled) -> Result<Vec<LoopAnalysis>, Failure> {
    analyze_program(&c.cfg, &SrcConfig::default()).map_err(|e| Failure::Input(e.to_string()))
}

fn loop_reports(c: &Compiled, a: &[LoopAnalysis]) -> Vec<Value> {
    a.iter()
        .map(|la| {
            let mut v = la.report();
            if la.needs_monitor() {
                if let Some(l) = c.loop_by_id(la.loop_id) {
                    let s = monitor::slice(&c.cfg, l);
                    let names: Vec<&str> = s.vars.iter().map(|x| c.cfg.vars[x.0].name.as_str()).collect();
                    v["slice"] = json!({ "vars": names, "deterministic": s.deterministic });
                }
            }
            v
        })
        .collect()
}

fn report(command: &str, input: Value, config: Value, body: Value, start: Instant) -> Value {
    let mut r = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": "loopwatch",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "input": input,
        "config": config,
        "stats": { "elapsed_ms": start.elapsed().as_millis() as u64 },
    });
    if let (Value::Object(r), Value::Object(b)) = (&mut r, body) {
        r.extend(b);
    }
    r
}

fn emit(out: &Out, r: &Value) -> Result<(), Failure> {
    let Some(p) = &out.json else { return Ok(()) };
    let text = serde_json::to_string_pretty(r).expect("report serializes") + "\n";
    if p.as_os_str() == "-" {
        print!("{text}");
        return Ok(());
    }
    fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
}

fn proven_exit(knobs: &Knobs, proven: bool) -> u8 {
    if proven && knobs.fail_on_nonterm {
        EXIT_NONTERM
    } else {
        EXIT_OK
    }
}

fn print_findings(paint: &Paint, f: &Findings, verbose: bool) {
    println!(
        "verdict {}  execs {}  proofs {}  candidates {}  hangs {}  edges {}",
        paint.verdict(f.verdict),
        f.execs,
        f.proofs.len(),
        f.candidates.len(),
        f.hangs.len(),
        f.edges_covered
    );
    for p in &f.proofs {
        let q = &p.proof;
        println!(
            "  {:?} loop {} (line {}) at iteration {}, witness {:?}{}",
            q.oracle,
            q.loop_id.0,
            q.line,
            q.iteration,
            q.witness,
            q.src.as_ref().map(|s| format!(", SRC {s}")).unwrap_or_default()
        );
    }
    if verbose {
        for c in &f.candidates {
            println!("  candidate loop {} iteration {} witness {:?}", c.loop_id.0, c.iteration, c.witness);
        }
        for h in &f.hangs {
            println!("  hang {:?}: {} ({} steps)", h.tape, h.resolution, h.steps);
        }
    }
}

fn cmd_analyze(file: &Path, out: &Out) -> Result<u8, Failure> {
    let start = Instant::now();
    let c = compile(file)?;
    let a = analyses(&c)?;
    for la in &a {
        println!("loop {} (line {}): {:?}", la.loop_id.0, la.line, la.class);
        for s in &la.srcs {
            println!("  {:?} {}", s.kind, s.formula);
        }
        if la.needs_monitor() {
            println!("  monitored");
        }
    }
    if a.is_empty() {
        println!("no loops");
    }
    let r = report("analyze", json!({ "file": file }), json!({}), json!({ "loops": loop_reports(&c, &a) }), start);
    emit(out, &r)?;
    Ok(EXIT_OK)
}

fn cmd_run(file: &Path, tape: Option<&Path>, input: Option<&str>, knobs: &Knobs, out: &Out, paint: &Paint) -> Result<u8, Failure> {
    let start = Instant::now();
    let c = compile(file)?;
    let text = match (tape, input) {
        (Some(p), _) => read(p)?,
        (None, Some(s)) => s.to_owned(),
        (None, None) => String::new(),
    };
    let values = corpus::parse_tape(&text).map_err(Failure::Input)?;
    let a = analyses(&c)?;
    let plan = plan_for(&c, &a, knobs.mode());
    let opts = RunOptions {
        budget: knobs.steps,
        i0: knobs.i0,
        alpha: knobs.alpha,
        ..RunOptions::default()
    };
    let r = exec::run(&c, &InputTape::new(values), &plan, &opts);
    let confirmed = match &r.outcome {
        RunOutcome::NontermProof(p) => Some(exec::confirm(&c, p, 10).unwrap_or(false)),
        _ => None,
    };
    let verdict = match (&r.outcome, confirmed) {
        (RunOutcome::NontermProof(_), Some(true)) => Verdict::Nonterm,
        (RunOutcome::Candidate { .. }, _) => Verdict::Candidate,
        (RunOutcome::BudgetExhausted { .. }, _) | (RunOutcome::NontermProof(_), _) => Verdict::Unknown,
        _ => Verdict::None,
    };
    println!("{}  {} steps", paint.verdict(verdict), r.steps);
    if let RunOutcome::NontermProof(p) = &r.outcome {
        println!("  {:?} loop {} (line {}) at iteration {}", p.oracle, p.loop_id.0, p.line, p.iteration);
    }
    let body = json!({
        "loops": loop_reports(&c, &a),
        "runs": [r],
        "confirmed": confirmed,
        "verdict": verdict,
    });
    emit(out, &report("run", json!({ "file": file }), knobs.echo(), body, start))?;
    Ok(proven_exit(knobs, verdict == Verdict::Nonterm))
}

fn cmd_fuzz(file: &Path, knobs: &Knobs, out: &Out, paint: &Paint, verbose: bool) -> Result<u8, Failure> {
    let start = Instant::now();
    let c = compile(file)?;
    let a = analyses(&c)?;
    let plan = plan_for(&c, &a, knobs.mode());
    let conf = knobs.campaign();
    let f = match knobs.mode() {
        Mode::Online => fuzz::campaign_online(&c, &plan, &conf),
        Mode::Offline => fuzz::campaign_offline(&c, &plan, &conf),
    };
    print_findings(paint, &f, verbose);
    let proven = f.verdict == Verdict::Nonterm;
    let body = json!({ "loops": loop_reports(&c, &a), "findings": f });
    emit(out, &report("fuzz", json!({ "file": file }), knobs.echo(), body, start))?;
    Ok(proven_exit(knobs, proven))
}

fn tape_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let rd = fs::read_dir(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            let mut v: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "tape"))
                .collect();
            v.sort();
            out.extend(v);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_triage(file: &Path, tapes: &[PathBuf], knobs: &Knobs, out: &Out, paint: &Paint) -> Result<u8, Failure> {
    let start = Instant::now();
    let c = compile(file)?;
    let a = analyses(&c)?;
    let plan = plan_for(&c, &a, Mode::Offline);
    let opts = RunOptions {
        budget: knobs.triage_steps,
        i0: knobs.i0,
        alpha: knobs.alpha,
        ..RunOptions::default()
    };
    let mut rows = Vec::new();
    let mut proven = false;
    for t in tape_files(tapes)? {
        let values = corpus::parse_tape(&read(&t)?).map_err(|m| Failure::Input(format!("{}: {m}", t.display())))?;
        let r = exec::run(&c, &InputTape::new(values), &plan, &opts);
        let verdict = match &r.outcome {
            RunOutcome::NontermProof(p) if exec::confirm(&c, p, 10).unwrap_or(false) => Verdict::Nonterm,
            RunOutcome::Candidate { .. } => Verdict::Candidate,
            _ => Verdict::Unknown,
        };
        proven |= verdict == Verdict::Nonterm;
        println!("{}  {}", t.display(), paint.verdict(verdict));
        rows.push(json!({ "tape_file": t, "verdict": verdict, "run": r }));
    }
    let body = json!({ "loops": loop_reports(&c, &a), "triage": rows });
    emit(out, &report("triage", json!({ "file": file }), knobs.echo(), body, start))?;
    Ok(proven_exit(knobs, proven))
}

fn cmd_corpus_check(dir: Option<&Path>, knobs: &Knobs, out: &Out, strict: bool, audit: bool, paint: &Paint, verbose: bool) -> Result<u8, Failure> {
    let start = Instant::now();
    let root = dir.map(Path::to_path_buf).unwrap_or_else(corpus::bundled_root);
    let entries = corpus::load_dir(&root)?;
    let conf = CampaignConfig {
        stop_on_finding: true,
        ..knobs.campaign()
    };
    let mut results: Vec<EntryResult> = Vec::new();
    let mut errors = Vec::new();
    for e in &entries {
        match corpus::evaluate(e, knobs.mode(), &conf) {
            Ok(r) => {
                if verbose {
                    println!("{}/{}: {}", r.category, r.name, paint.verdict(r.verdict));
                }
                results.push(r);
            }
            Err(err) => errors.push(json!({ "entry": format!("{}/{}", e.category, e.name), "error": err.to_string() })),
        }
    }
    let mut cats: Vec<&str> = results.iter().map(|r| r.category.as_str()).collect();
    cats.dedup();
    let mut table = Vec::new();
    println!("{:<20} {:>5} {:>8} {:>9} {:>6} {:>9}", "category", "total", "nonterm", "detected", "missed", "violation");
    for cat in cats {
        let rs: Vec<&EntryResult> = results.iter().filter(|r| r.category == cat).collect();
        let nonterm = rs.iter().filter(|r| r.expect == Expect::Nonterm).count();
        let detected = rs.iter().filter(|r| r.expect == Expect::Nonterm && r.verdict == Verdict::Nonterm).count();
        let missed = rs.iter().filter(|r| r.completeness_miss).count();
        let violations = rs.iter().filter(|r| r.soundness_violation).count();
        println!("{cat:<20} {:>5} {nonterm:>8} {detected:>9} {missed:>6} {violations:>9}", rs.len());
        table.push(json!({
            "category": cat, "total": rs.len(), "nonterm": nonterm,
            "detected": detected, "missed": missed, "violations": violations,
        }));
    }
    let violations: Vec<&EntryResult> = results.iter().filter(|r| r.soundness_violation).collect();
    let misses = results.iter().filter(|r| r.completeness_miss).count();
    for v in &violations {
        println!("soundness violation: {}/{} labelled {:?}", v.category, v.name, v.expect);
    }
    let label_errors: Vec<Value> = if audit {
        results
            .iter()
            .filter_map(|r| r.evidence.as_ref().map(|p| json!({ "entry": format!("{}/{}", r.category, r.name), "proof": p })))
            .collect()
    } else {
        Vec::new()
    };
    for l in &label_errors {
        println!("label error: {} is non-terminating (replay evidence in report)", l["entry"].as_str().unwrap_or(""));
    }
    for e in &errors {
        println!("error: {} {}", e["entry"].as_str().unwrap_or(""), e["error"].as_str().unwrap_or(""));
    }
    let body = json!({
        "corpus": { "root": root, "summary": table, "entries": results, "errors": errors,
                    "violations": violations.len(), "misses": misses, "label_errors": label_errors },
    });
    let mut config = knobs.echo();
    config["strict"] = json!(strict);
    config["audit"] = json!(audit);
    emit(out, &report("corpus-check", json!({ "dir": root }), config, body, start))?;
    let failed = !violations.is_empty() || !errors.is_empty() || (strict && misses > 0);
    Ok(if failed { EXIT_CHECK_FAILED } else { EXIT_OK })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let color = std::env::var("LOOPWATCH_COLOR").map_or(true, |v| v != "0") && std::io::stdout().is_terminal();
    let paint = Paint(color);
    let res = match &cli.command {
        Command::Analyze { file, out } => cmd_analyze(file, out),
        Command::Run {
            file,
            tape,
            input,
            knobs,
            out,
        } => cmd_run(file, tape.as_deref(), input.as_deref(), knobs, out, &paint),
        Command::Fuzz { file, knobs, out } => cmd_fuzz(file, knobs, out, &paint, cli.verbose),
        Command::Triage { file, tapes, knobs, out } => cmd_triage(file, tapes, knobs, out, &paint),
        Command::CorpusCheck {
            dir,
            knobs,
            out,
            strict,
            audit,
        } => cmd_corpus_check(dir.as_deref(), knobs, out, *strict, *audit, &paint, cli.verbose),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
