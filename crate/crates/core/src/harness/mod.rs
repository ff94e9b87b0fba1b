//! Experiment harness: runs a (mode, s, k) grid over a QA corpus, judges
//! context sufficiency by alias containment, and reports aggregates.

mod fabric;
mod report;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::agent::{
    retrieve_full_context_with, Agent, ProcessedQuery, RetrievalError, RetrievalResult, DEFAULT_BUDGET_TOKENS,
    DEFAULT_CHARS_PER_TOKEN, DEFAULT_PARALLELISM,
};
use crate::corpus::{Corpus, QaItem};
use crate::protocol::Constraints;

pub use fabric::{central_endpoint, resolver_endpoint, source_endpoint, Fabric, FabricError, FIXED_NOW};
pub use report::{
    read_rows_csv, report, rows_to_csv, QueryProcessingCounts, Report, ReportError, SufficiencyCell, TransferCell,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Centralized,
    Decentralized,
    Hybrid,
    FullContext,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Decentralized => "decentralized",
            Mode::Hybrid => "hybrid",
            Mode::FullContext => "full_context",
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn default_budget() -> usize {
    DEFAULT_BUDGET_TOKENS
}

fn default_chars_per_token() -> usize {
    DEFAULT_CHARS_PER_TOKEN
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

/// One experiment. `s` and `k` may be scalars or lists; lists expand into a
/// grid. Endpoints left unset mean "build the fabric in process".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default, deserialize_with = "one_or_many")]
    pub s: Vec<usize>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub k_final: Option<usize>,
    #[serde(default = "default_budget")]
    pub budget_tokens: usize,
    #[serde(default = "default_chars_per_token")]
    pub chars_per_token: usize,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub central: Option<String>,
    #[serde(default)]
    pub resolver: Option<String>,
    #[serde(default)]
    pub index_dir: Option<PathBuf>,
    #[serde(default)]
    pub constraints: Option<Constraints>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            s: Vec::new(),
            k: Vec::new(),
            k_final: None,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
            corpus: None,
            central: None,
            resolver: None,
            index_dir: None,
            constraints: None,
            parallelism: DEFAULT_PARALLELISM,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.corpus, &mut cfg.index_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut missing = Vec::new();
        let needs_k = self.mode != Mode::FullContext;
        let needs_s = matches!(self.mode, Mode::Decentralized | Mode::Hybrid);
        if needs_k && self.k.is_empty() {
            missing.push("k");
        }
        if needs_s && (self.s.is_empty() || self.s.contains(&0)) {
            missing.push("s");
        }
        if needs_s && self.k.contains(&0) {
            missing.push("k");
        }
        if self.mode == Mode::Hybrid && self.k_final.is_none() {
            missing.push("k_final");
        }
        if self.chars_per_token == 0 {
            missing.push("chars_per_token");
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("mode {} requires valid: {}", self.mode.as_str(), missing.join(", "))))
        }
    }

    /// The (s, k) cells this config expands to, with `None` for fields the
    /// mode ignores.
    pub fn grid(&self) -> Vec<(Option<usize>, Option<usize>)> {
        match self.mode {
            Mode::FullContext => vec![(None, None)],
            Mode::Centralized => self.k.iter().map(|&k| (None, Some(k))).collect(),
            Mode::Decentralized | Mode::Hybrid => self
                .s
                .iter()
                .flat_map(|&s| self.k.iter().map(move |&k| (Some(s), Some(k))))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub qid: String,
    pub mode: Mode,
    pub s: Option<usize>,
    pub k: Option<usize>,
    pub k_final: Option<usize>,
    pub chunks_retrieved: usize,
    pub bytes_transferred: u64,
    pub baseline_bytes: u64,
    pub transfer_fraction: Option<f64>,
    pub sufficient: bool,
    pub was_rephrased: bool,
    pub was_decomposed: bool,
    pub pii_removed: bool,
    pub failed_sources: usize,
}

impl ExperimentRow {
    fn sort_key(&self) -> (&str, Mode, Option<usize>, Option<usize>, Option<usize>) {
        (&self.qid, self.mode, self.s, self.k, self.k_final)
    }
}

pub fn transfer_fraction(bytes_transferred: u64, baseline_bytes: u64) -> Option<f64> {
    (baseline_bytes > 0).then(|| bytes_transferred as f64 / baseline_bytes as f64)
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("question {qid}: {source}")]
    Retrieval {
        qid: String,
        #[source]
        source: RetrievalError,
    },
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

/// Lowercase, punctuation to space, whitespace collapsed.
pub fn normalize_for_match(text: &str) -> String {
    let mapped: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True iff some normalized alias occurs in the normalized context. Texts
/// are normalized one by one and joined by a newline, so a match never
/// straddles two chunks.
pub fn sufficiency<S: AsRef<str>, A: AsRef<str>>(context_texts: &[S], answer_aliases: &[A]) -> bool {
    let haystack = context_texts
        .iter()
        .map(|t| normalize_for_match(t.as_ref()))
        .collect::<Vec<_>>()
        .join("\n");
    answer_aliases.iter().any(|alias| {
        let needle = normalize_for_match(alias.as_ref());
        !needle.is_empty() && haystack.contains(&needle)
    })
}

fn retrieve(
    agent: &Agent,
    cfg: &ExperimentConfig,
    pq: &ProcessedQuery,
    item: &QaItem,
    corpus: &Corpus,
    s: Option<usize>,
    k: Option<usize>,
) -> Result<RetrievalResult, RetrievalError> {
    let endpoint = |e: &Option<String>, name: &str| {
        e.clone()
            .ok_or_else(|| RetrievalError::Params(format!("{name} endpoint not configured")))
    };
    match cfg.mode {
        Mode::FullContext => Ok(retrieve_full_context_with(item, cfg.budget_tokens, cfg.chars_per_token, corpus)),
        Mode::Centralized => agent.retrieve_centralized(pq, k.unwrap_or(0), &endpoint(&cfg.central, "central")?),
        Mode::Decentralized => agent.retrieve_decentralized(
            pq,
            s.unwrap_or(0),
            k.unwrap_or(0),
            &endpoint(&cfg.resolver, "resolver")?,
        ),
        Mode::Hybrid => agent.retrieve_hybrid(
            pq,
            s.unwrap_or(0),
            k.unwrap_or(0),
            cfg.k_final.unwrap_or(0),
            &endpoint(&cfg.resolver, "resolver")?,
        ),
    }
}

fn run_item(agent: &Agent, cfg: &ExperimentConfig, corpus: &Corpus, item: &QaItem) -> Result<Vec<ExperimentRow>, HarnessError> {
    let fail = |source: RetrievalError| HarnessError::Retrieval {
        qid: item.qid.clone(),
        source,
    };
    let pq = agent.process(&item.question).map_err(|e| fail(e.into()))?;
    let baseline_bytes = retrieve_full_context_with(item, cfg.budget_tokens, cfg.chars_per_token, corpus)
        .ledger
        .baseline_bytes;
    let mut rows = Vec::new();
    for (s, k) in cfg.grid() {
        let result = retrieve(agent, cfg, &pq, item, corpus, s, k).map_err(fail)?;
        let bytes_transferred = result.ledger.total;
        rows.push(ExperimentRow {
            qid: item.qid.clone(),
            mode: cfg.mode,
            s,
            k,
            k_final: (cfg.mode == Mode::Hybrid).then_some(cfg.k_final).flatten(),
            chunks_retrieved: result.context_chunks.len(),
            bytes_transferred,
            baseline_bytes,
            transfer_fraction: transfer_fraction(bytes_transferred, baseline_bytes),
            sufficient: sufficiency(&result.context_texts(), &item.answer_aliases),
            was_rephrased: pq.flags.was_rephrased,
            was_decomposed: pq.flags.was_decomposed,
            pii_removed: pq.flags.pii_removed,
            failed_sources: result.failed_sources.len(),
        });
    }
    Ok(rows)
}

type Slot = Mutex<Option<Result<Vec<ExperimentRow>, HarnessError>>>;

/// Runs every question through every grid cell. Questions are processed
/// with bounded parallelism; the returned rows are in (qid, mode, s, k)
/// order. The first fatal error (by question order) aborts the run.
pub fn run_experiment(cfg: &ExperimentConfig, corpus: &Corpus, agent: &Agent) -> Result<Vec<ExperimentRow>, HarnessError> {
    cfg.validate()?;
    let items = &corpus.questions;
    let slots: Vec<Slot> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.parallelism.max(1).min(items.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let outcome = run_item(agent, cfg, corpus, item);
                *slots[i].lock().expect("slot lock") = Some(outcome);
            });
        }
    });
    let mut rows = Vec::new();
    for slot in slots {
        rows.extend(slot.into_inner().expect("slot lock").expect("every item ran")?);
    }
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sufficiency_examples() {
        assert!(sufficiency(&["the answer is Paris."], &["paris"]));
        assert!(!sufficiency::<&str, &str>(&[], &["paris"]));
        assert!(sufficiency(&["...jean paul sartre..."], &["Jean-Paul Sartre"]));
        assert!(!sufficiency(&["jean", "paul sartre"], &["jean paul sartre"]));
        assert!(!sufficiency(&["anything"], &["!!"]));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_for_match("  Jean-Paul\tSARTRE! "), "jean paul sartre");
        assert_eq!(normalize_for_match("Ünïcode\u{2014}dash"), "ünïcode dash");
    }

    #[test]
    fn config_scalar_or_list() {
        let cfg = ExperimentConfig::from_toml("mode = \"decentralized\"\ns = 2\nk = [1, 5]\n").unwrap();
        assert_eq!(cfg.grid(), vec![(Some(2), Some(1)), (Some(2), Some(5))]);
        assert_eq!(cfg.budget_tokens, 250_000);
    }

    #[test]
    fn config_requires_mode_fields() {
        assert!(ExperimentConfig::from_toml("mode = \"hybrid\"\ns = 2\nk = 5\n").is_err());
        assert!(ExperimentConfig::from_toml("mode = \"centralized\"\n").is_err());
        assert!(ExperimentConfig::from_toml("mode = \"full_context\"\n").is_ok());
        assert!(ExperimentConfig::from_toml("mode = \"full_context\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn fraction_unset_without_baseline() {
        assert_eq!(transfer_fraction(10, 0), None);
        assert_eq!(transfer_fraction(5, 10), Some(0.5));
    }
}
