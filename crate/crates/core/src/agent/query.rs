//! Query processing: PII scrubbing, rephrasing and decomposition.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFlags {
    pub was_rephrased: bool,
    pub was_decomposed: bool,
    pub pii_removed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedQuery {
    pub original: String,
    pub scrubbed: String,
    pub rephrased: String,
    pub subqueries: Vec<String>,
    pub flags: QueryFlags,
}

impl ProcessedQuery {
    /// Wraps an already-clean query without any processing.
    pub fn verbatim(query: &str) -> Self {
        Self {
            original: query.to_string(),
            scrubbed: query.to_string(),
            rephrased: query.to_string(),
            subqueries: vec![query.to_string()],
            flags: QueryFlags::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query is empty")]
    Empty,
}

/// Replaceable query-processing step (e.g. an LLM-backed rewriter).
pub trait QueryProcessor: Send + Sync {
    fn process(&self, query: &str) -> Result<ProcessedQuery, QueryError>;
}

/// The built-in deterministic rule engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleProcessor;

impl QueryProcessor for RuleProcessor {
    fn process(&self, query: &str) -> Result<ProcessedQuery, QueryError> {
        process_query(query)
    }
}

static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b[a-z0-9._%+-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}\b").unwrap());
static CARD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d{4}(?:[ -]?\d{4}){3}\b").unwrap());
static PHONE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\+\d{1,3}(?:[ .-]?\(?\d{2,4}\)?){2,4}\b|(?:\(\d{3}\)|\b\d{3})[ .-]?\d{3}[ .-]?\d{4}\b").unwrap()
});

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PiiReport {
    pub emails: usize,
    pub phones: usize,
    pub numbers: usize,
}

impl PiiReport {
    pub fn total(&self) -> usize {
        self.emails + self.phones + self.numbers
    }
}

/// Scrubs and reports how many of each PII kind were replaced.
pub fn scrub_pii_detailed(query: &str) -> (String, PiiReport) {
    let mut report = PiiReport::default();
    let mut text = query.to_string();
    for (re, placeholder, counter) in [
        (&*EMAIL, "[EMAIL]", &mut report.emails),
        (&*CARD, "[NUMBER]", &mut report.numbers),
        (&*PHONE, "[PHONE]", &mut report.phones),
    ] {
        *counter = re.find_iter(&text).count();
        if *counter > 0 {
            text = re.replace_all(&text, placeholder).into_owned();
        }
    }
    (text, report)
}

pub fn scrub_pii(query: &str) -> (String, bool) {
    let (text, report) = scrub_pii_detailed(query);
    (text, report.total() > 0)
}

/// Whitespace collapse, leading "please " removal, single trailing "?".
pub fn rephrase(query: &str) -> String {
    let mut text = query.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let lower = text.to_ascii_lowercase();
        if lower.starts_with("please ") && text.len() > "please ".len() {
            text = text["please ".len()..].to_string();
        } else if lower.starts_with("please, ") && text.len() > "please, ".len() {
            text = text["please, ".len()..].to_string();
        } else {
            break;
        }
    }
    if text.ends_with("??") {
        let trimmed = text.trim_end_matches('?');
        text = format!("{trimmed}?");
    }
    text
}

const WH_WORDS: &[&str] = &["who", "whom", "whose", "what", "when", "where", "which", "why", "how"];
const PREPOSITIONS: &[&str] = &["in", "on", "at", "for", "from", "to", "by", "of", "with"];

fn is_interrogative(clause: &str) -> bool {
    let mut words = clause
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase());
    match words.next() {
        Some(first) if WH_WORDS.contains(&first.as_str()) => true,
        Some(first) if PREPOSITIONS.contains(&first.as_str()) => {
            words.next().is_some_and(|w| WH_WORDS.contains(&w.as_str()))
        }
        _ => false,
    }
}

/// Splits at "?" followed by whitespace; text after the last question mark
/// stays with the last question.
fn split_questions(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if c == '?' && chars.get(i + 1).is_some_and(|(_, n)| n.is_whitespace()) {
            pieces.push(text[start..=pos].trim().to_string());
            start = pos + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        if tail.contains('?') || pieces.is_empty() {
            pieces.push(tail.to_string());
        } else if let Some(last) = pieces.last_mut() {
            last.push(' ');
            last.push_str(tail);
        }
    }
    pieces.retain(|p| !p.is_empty());
    pieces
}

/// Splits a question at top-level " and " where both sides are interrogative.
fn split_conjunction(question: &str) -> Vec<String> {
    let lower = question.to_ascii_lowercase().into_bytes();
    let bytes = question.as_bytes();
    let mut cuts = Vec::new();
    let mut depth = 0i32;
    let mut in_quote = false;
    let mut clause_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'"' => in_quote = !in_quote,
            _ => {}
        }
        if depth == 0 && !in_quote && lower[i..].starts_with(b" and ") {
            let left = &question[clause_start..i];
            let right = &question[i + 5..];
            if is_interrogative(left) && is_interrogative(right) {
                cuts.push(i);
                clause_start = i + 5;
                i += 5;
                continue;
            }
        }
        i += 1;
    }
    if cuts.is_empty() {
        return vec![question.to_string()];
    }
    let ends_with_q = question.trim_end().ends_with('?');
    let mut parts = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for cut in cuts {
        let mut part = question[start..cut].trim().to_string();
        if ends_with_q && !part.ends_with('?') {
            part.push('?');
        }
        parts.push(part);
        start = cut + 5;
    }
    parts.push(question[start..].trim().to_string());
    parts
}

pub fn decompose(text: &str) -> Vec<String> {
    let parts: Vec<String> = split_questions(text)
        .iter()
        .flat_map(|q| split_conjunction(q))
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    if parts.is_empty() {
        vec![text.trim().to_string()]
    } else {
        parts
    }
}

pub fn process_query(query: &str) -> Result<ProcessedQuery, QueryError> {
    if query.trim().is_empty() {
        return Err(QueryError::Empty);
    }
    let (scrubbed, pii_removed) = scrub_pii(query);
    let rephrased = rephrase(&scrubbed);
    if rephrased.is_empty() {
        return Err(QueryError::Empty);
    }
    let subqueries = decompose(&rephrased);
    let flags = QueryFlags {
        was_rephrased: rephrased != scrubbed,
        was_decomposed: subqueries.len() > 1,
        pii_removed,
    };
    Ok(ProcessedQuery {
        original: query.to_string(),
        scrubbed,
        rephrased,
        subqueries,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_question_unchanged() {
        let pq = process_query("Who wrote Hamlet?").unwrap();
        assert_eq!(pq.subqueries, vec!["Who wrote Hamlet?"]);
        assert_eq!(pq.flags, QueryFlags::default());
    }

    #[test]
    fn email_scrubbed() {
        assert_eq!(scrub_pii("email me at a@b.com"), ("email me at [EMAIL]".to_string(), true));
        assert_eq!(scrub_pii("Who wrote Hamlet?"), ("Who wrote Hamlet?".to_string(), false));
    }

    #[test]
    fn phones_and_cards() {
        let (t, r) = scrub_pii_detailed("call +1 415 555 0199 or (415) 555-0100, card 4111 1111 1111 1111");
        assert_eq!(t, "call [PHONE] or [PHONE], card [NUMBER]");
        assert_eq!(r, PiiReport { emails: 0, phones: 2, numbers: 1 });
        // years and short numbers are left alone
        assert!(!scrub_pii("Built in 1873 by 12 men?").1);
    }

    #[test]
    fn conjunction_decomposition() {
        let pq = process_query("Who founded Acme and when was it founded?").unwrap();
        assert_eq!(pq.subqueries, vec!["Who founded Acme?", "when was it founded?"]);
        assert!(pq.flags.was_decomposed);
        assert!(!pq.flags.was_rephrased);
    }

    #[test]
    fn non_interrogative_and_is_kept() {
        let pq = process_query("What is the difference between salt and pepper?").unwrap();
        assert_eq!(pq.subqueries.len(), 1);
        let pq = process_query("Who wrote \"Who and when\" and what year?").unwrap();
        assert_eq!(pq.subqueries, vec!["Who wrote \"Who and when\"?", "what year?"]);
    }

    #[test]
    fn multiple_question_marks() {
        let pq = process_query("Who is A? Where is B? Thanks").unwrap();
        assert_eq!(pq.subqueries, vec!["Who is A?", "Where is B? Thanks"]);
        let pq = process_query("Where is the Archive? Reply to [EMAIL]").unwrap();
        assert_eq!(pq.subqueries, vec!["Where is the Archive? Reply to [EMAIL]"]);
    }

    #[test]
    fn politeness_and_whitespace() {
        let pq = process_query("  please   who wrote Hamlet? ").unwrap();
        assert!(pq.flags.was_rephrased);
        assert_eq!(pq.rephrased, "who wrote Hamlet?");
        assert_eq!(rephrase("Why??"), "Why?");
        assert_eq!(rephrase("please"), "please");
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(process_query("   "), Err(QueryError::Empty));
    }

    #[test]
    fn deterministic() {
        let q = "Please  who founded X and where is Y? call 415-555-0100";
        assert_eq!(process_query(q), process_query(q));
    }
}
