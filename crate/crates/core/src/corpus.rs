//! Benchmark programs with expected verdicts: `<root>/<category>/<name>.wl`
//! plus a `.expect` sidecar and an optional `.tape` witness.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::exec::{plan_for, Compiled, ExecError, Mode, Oracle, Proof};
use crate::fuzz::{campaign_offline, campaign_online, CampaignConfig, Findings, Verdict};
use crate::src::{analyze_program, SrcConfig};

pub const CATEGORIES: [&str; 9] = [
    "linear-lasso",
    "interleaved-paths",
    "stuck",
    "overflow",
    "bit-shift",
    "nested",
    "array",
    "nondet-candidate",
    "terminating",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Expect {
    Nonterm,
    Term,
    Unknown,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Sidecar { path: PathBuf, line: usize, msg: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusEntry {
    pub name: String,
    pub category: String,
    pub path: PathBuf,
    #[serde(skip)]
    pub source: String,
    pub expect: Expect,
    /// Inclusive range per input slot; TERM entries terminate on all of it.
    pub input_box: Vec<(i128, i128)>,
    pub witness: Option<Vec<i128>>,
    pub notes: Vec<String>,
}

impl CorpusEntry {
    /// Number of points in the input box.
    pub fn box_size(&self) -> u128 {
        self.input_box
            .iter()
            .map(|(lo, hi)| (hi - lo + 1).max(0) as u128)
            .product()
    }

    /// Every tape in the input box, in lexicographic order.
    pub fn box_tapes(&self) -> impl Iterator<Item = Vec<i128>> + '_ {
        let n = self.box_size();
        (0..n).map(move |mut i| {
            let mut t = vec![0; self.input_box.len()];
            for (k, (lo, hi)) in self.input_box.iter().enumerate().rev() {
                let w = (hi - lo + 1) as u128;
                t[k] = lo + (i % w) as i128;
                i /= w;
            }
            t
        })
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Whitespace separated integers.
pub fn parse_tape(text: &str) -> Result<Vec<i128>, String> {
    text.split_whitespace()
        .map(|w| w.parse().map_err(|_| format!("bad tape value `{w}`")))
        .collect()
}

fn parse_expect(path: &Path, text: &str) -> Result<(Expect, Vec<(i128, i128)>, Vec<String>), CorpusError> {
    let err = |line: usize, msg: String| CorpusError::Sidecar {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut expect = None;
    let mut input_box = Vec::new();
    let mut notes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            notes.push(c.trim().to_owned());
        } else if let Some(r) = line.strip_prefix("box:") {
            let (lo, hi) = r
                .trim()
                .split_once("..")
                .ok_or_else(|| err(i + 1, format!("bad box `{r}`")))?;
            let p = |s: &str| s.trim().parse::<i128>().map_err(|_| err(i + 1, format!("bad bound `{s}`")));
            input_box.push((p(lo)?, p(hi)?));
        } else if expect.is_none() {
            expect = Some(match line {
                "NONTERM" => Expect::Nonterm,
                "TERM" => Expect::Term,
                "UNKNOWN" => Expect::Unknown,
                _ => return Err(err(i + 1, format!("unknown verdict `{line}`"))),
            });
        } else {
            return Err(err(i + 1, format!("unexpected line `{line}`")));
        }
    }
    let expect = expect.ok_or_else(|| err(1, "missing verdict".into()))?;
    Ok((expect, input_box, notes))
}

pub fn load_entry(wl: &Path, category: &str) -> Result<CorpusEntry, CorpusError> {
    let source = read(wl)?;
    let side = wl.with_extension("expect");
    let (expect, input_box, notes) = parse_expect(&side, &read(&side)?)?;
    let tape = wl.with_extension("tape");
    let witness = if tape.exists() {
        Some(parse_tape(&read(&tape)?).map_err(|msg| CorpusError::Sidecar {
            path: tape.clone(),
            line: 1,
            msg,
        })?)
    } else {
        None
    };
    Ok(CorpusEntry {
        name: wl.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        category: category.to_owned(),
        path: wl.to_owned(),
        source,
        expect,
        input_box,
        witness,
        notes,
    })
}

fn wl_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let rd = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wl"))
        .collect();
    out.sort();
    Ok(out)
}

/// Load every entry under `root`. Files directly in `root` get the category
/// `uncategorized`. Sorted by category, then name.
pub fn load_dir(root: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut out = Vec::new();
    for wl in wl_files(root)? {
        out.push(load_entry(&wl, "uncategorized")?);
    }
    let rd = fs::read_dir(root).map_err(|source| CorpusError::Io {
        path: root.to_owned(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    for d in dirs {
        let cat = d.file_name().unwrap_or_default().to_string_lossy().into_owned();
        for wl in wl_files(&d)? {
            out.push(load_entry(&wl, &cat)?);
        }
    }
    out.sort_by(|a, b| (&a.category, &a.name).cmp(&(&b.category, &b.name)));
    Ok(out)
}

/// Root of the corpus shipped with the repository.
pub fn bundled_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_manifest() -> Result<Vec<CorpusEntry>, CorpusError> {
    load_dir(&bundled_root())
}

#[derive(Clone, Debug, Serialize)]
pub struct EntryResult {
    pub name: String,
    pub category: String,
    pub expect: Expect,
    pub verdict: Verdict,
    /// Oracle of the first confirmed proof.
    pub via: Option<Oracle>,
    /// Non-termination claimed for an entry not labelled NONTERM.
    pub soundness_violation: bool,
    /// NONTERM entry left without a proof.
    pub completeness_miss: bool,
    /// Confirmed proof backing a label error on a TERM entry.
    pub evidence: Option<Proof>,
    pub findings: Findings,
}

/// Analyze, plan and fuzz one entry.
pub fn evaluate(e: &CorpusEntry, mode: Mode, conf: &CampaignConfig) -> Result<EntryResult, ExecError> {
    let c = Compiled::from_source(&e.source)?;
    let analyses = analyze_program(&c.cfg, &SrcConfig::default()).map_err(ExecError::Loop)?;
    let plan = plan_for(&c, &analyses, mode);
    let findings = match mode {
        Mode::Online => campaign_online(&c, &plan, conf),
        Mode::Offline => campaign_offline(&c, &plan, conf),
    };
    let first = findings.proofs.first().map(|f| f.proof.clone());
    let nonterm = findings.verdict == Verdict::Nonterm;
    Ok(EntryResult {
        name: e.name.clone(),
        category: e.category.clone(),
        expect: e.expect,
        verdict: findings.verdict,
        via: first.as_ref().map(|p| p.oracle),
        soundness_violation: nonterm && e.expect != Expect::Nonterm,
        completeness_miss: !nonterm && e.expect == Expect::Nonterm,
        evidence: first.filter(|_| e.expect == Expect::Term),
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_parsing() {
        let p = Path::new("x.expect");
        let (e, b, n) = parse_expect(p, "TERM\n# why\nbox: -2..3\nbox: 0..0\n").unwrap();
        assert_eq!(e, Expect::Term);
        assert_eq!(b, [(-2, 3), (0, 0)]);
        assert_eq!(n, ["why"]);
        assert!(parse_expect(p, "MAYBE\n").is_err());
        assert!(parse_expect(p, "# only a note\n").is_err());
        assert!(parse_expect(p, "TERM\nbox: 1-2\n").is_err());
        assert_eq!(parse_tape(" 1\n-2 3 ").unwrap(), [1, -2, 3]);
    }

    #[test]
    fn box_enumeration() {
        let e = CorpusEntry {
            name: "t".into(),
            category: "c".into(),
            path: PathBuf::new(),
            source: String::new(),
            expect: Expect::Term,
            input_box: vec![(0, 1), (5, 7)],
            witness: None,
            notes: Vec::new(),
        };
        assert_eq!(e.box_size(), 6);
        let all: Vec<_> = e.box_tapes().collect();
        assert_eq!(all[0], [0, 5]);
        assert_eq!(all[5], [1, 7]);
    }

    #[test]
    fn bundled_manifest() {
        let m = corpus_manifest().unwrap();
        assert!(m.len() >= 24);
        for c in CATEGORIES {
            assert!(m.iter().filter(|e| e.category == c).count() >= 2, "{c}");
        }
        let fig1 = m.iter().find(|e| e.name == "fig1").unwrap();
        assert_eq!((fig1.expect, fig1.category.as_str()), (Expect::Nonterm, "interleaved-paths"));
        assert!(m.iter().any(|e| e.name == "while_true" && e.category == "stuck"));
        assert!(m.iter().any(|e| e.name == "u8_wrap" && e.category == "overflow"));
    }
}
