//! On-disk corpus: documents, QA items and raw-content normalization.
//!
//! A corpus directory holds `sources.jsonl` (one line per document),
//! `questions.jsonl` (one line per QA item) and the raw files under `docs/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Plain,
    Markdown,
    Html,
}

impl MediaType {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaType::Plain => "plain",
            MediaType::Markdown => "markdown",
            MediaType::Html => "html",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source_id: String,
    pub uri: String,
    pub media_type: MediaType,
    pub text: String,
    pub raw_bytes_len: u64,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub qid: String,
    pub question: String,
    pub answer_aliases: Vec<String>,
    pub source_rank: Vec<String>,
}

/// Publisher-level metadata carried by the optional `title`, `license` and
/// `topics` keys of `sources.jsonl`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub title: Option<String>,
    pub license: Option<String>,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub questions: Vec<QaItem>,
    pub sources: BTreeMap<String, SourceMeta>,
}

impl Corpus {
    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.sources.keys().cloned().collect()
    }

    pub fn documents_of(&self, source_id: &str) -> Vec<Document> {
        self.documents
            .iter()
            .filter(|d| d.source_id == source_id)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing corpus file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed JSON on line {line}: {source}", file.display())]
    MalformedJson {
        file: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate doc_id {0}")]
    DuplicateDocument(String),
    #[error("question {qid} references unknown doc_id {doc_id}")]
    DanglingReference { qid: String, doc_id: String },
    #[error("question {0} has no answer aliases")]
    NoAnswers(String),
}

#[derive(Deserialize)]
struct SourceLine {
    doc_id: String,
    source_id: String,
    uri: String,
    media_type: MediaType,
    fetched_at: DateTime<Utc>,
    file: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    license: Option<String>,
    #[serde(default)]
    topics: Vec<String>,
}

#[derive(Deserialize)]
struct QuestionLine {
    qid: String,
    question: String,
    answers: Vec<String>,
    source_rank: Vec<String>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LoadError> {
    if !path.is_file() {
        return Err(LoadError::MissingFile(path.to_path_buf()));
    }
    let raw = fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8_lossy(&raw);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|source| LoadError::MalformedJson {
            file: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Loads and normalizes a corpus directory. Documents come back sorted by
/// `doc_id` and questions by `qid`.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, LoadError> {
    let dir = dir.as_ref();
    let sources_path = dir.join("sources.jsonl");
    let questions_path = dir.join("questions.jsonl");
    let docs_dir = dir.join("docs");
    if !docs_dir.is_dir() {
        return Err(LoadError::MissingFile(docs_dir));
    }

    let source_lines: Vec<SourceLine> = read_jsonl(&sources_path)?;
    let question_lines: Vec<QuestionLine> = read_jsonl(&questions_path)?;

    let mut documents = Vec::with_capacity(source_lines.len());
    let mut sources: BTreeMap<String, SourceMeta> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for line in source_lines {
        if !seen.insert(line.doc_id.clone()) {
            return Err(LoadError::DuplicateDocument(line.doc_id));
        }
        let file = dir.join(&line.file);
        if !file.is_file() {
            return Err(LoadError::MissingFile(file));
        }
        let raw = fs::read(&file).map_err(|source| LoadError::Io {
            path: file.clone(),
            source,
        })?;
        let meta = sources.entry(line.source_id.clone()).or_default();
        if meta.title.is_none() {
            meta.title = line.title;
        }
        if meta.license.is_none() {
            meta.license = line.license;
        }
        if meta.topics.is_empty() {
            meta.topics = line.topics;
        }
        documents.push(Document {
            text: normalize_document(&raw, line.media_type),
            raw_bytes_len: raw.len() as u64,
            doc_id: line.doc_id,
            source_id: line.source_id,
            uri: line.uri,
            media_type: line.media_type,
            fetched_at: line.fetched_at,
        });
    }
    documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut questions = Vec::with_capacity(question_lines.len());
    for q in question_lines {
        if q.answers.is_empty() {
            return Err(LoadError::NoAnswers(q.qid));
        }
        if let Some(missing) = q.source_rank.iter().find(|d| !seen.contains(*d)) {
            return Err(LoadError::DanglingReference {
                qid: q.qid,
                doc_id: missing.clone(),
            });
        }
        questions.push(QaItem {
            qid: q.qid,
            question: q.question,
            answer_aliases: q.answers,
            source_rank: q.source_rank,
        });
    }
    questions.sort_by(|a, b| a.qid.cmp(&b.qid));

    Ok(Corpus {
        documents,
        questions,
        sources,
    })
}

/// Converts raw bytes to plain text. Invalid UTF-8 is replaced, line endings
/// become `\n`, and HTML is reduced to its text content.
pub fn normalize_document(raw: &[u8], media_type: MediaType) -> String {
    let text = String::from_utf8_lossy(raw);
    match media_type {
        MediaType::Plain | MediaType::Markdown => normalize_line_endings(&text),
        MediaType::Html => strip_html(&text),
    }
}

fn normalize_line_endings(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "dd", "div", "dl", "dt", "figcaption",
    "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "head", "header", "hr",
    "html", "li", "main", "nav", "ol", "p", "pre", "section", "table", "tbody", "td", "tfoot",
    "th", "thead", "title", "tr", "ul",
];

fn is_html_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r' | '\x0c')
}

/// Text runs have HTML whitespace collapsed to one space, block-level tag
/// boundaries become a paragraph break, `<br>` a line break.
fn strip_html(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let mut rest = html;
    while !rest.is_empty() {
        let Some(lt) = rest.find('<') else {
            push_text(&mut out, rest);
            break;
        };
        push_text(&mut out, &rest[..lt]);
        let after = &rest[lt..];
        if after.starts_with("<!--") {
            rest = match after.find("-->") {
                Some(end) => &after[end + 3..],
                None => "",
            };
            continue;
        }
        let next = after[1..].chars().next();
        let is_tag = matches!(next, Some(c) if c.is_ascii_alphabetic() || c == '/' || c == '!');
        if !is_tag {
            push_text(&mut out, "<");
            rest = &after[1..];
            continue;
        }
        let Some(gt) = after.find('>') else {
            push_text(&mut out, after);
            break;
        };
        let inner = &after[1..gt];
        rest = &after[gt + 1..];
        let closing = inner.starts_with('/');
        let name: String = inner
            .trim_start_matches('/')
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        if !closing && (name == "script" || name == "style") && !inner.ends_with('/') {
            let needle = format!("</{name}");
            let lower = rest.to_ascii_lowercase();
            rest = match lower.find(&needle) {
                Some(pos) => match rest[pos..].find('>') {
                    Some(end) => &rest[pos + end + 1..],
                    None => "",
                },
                None => "",
            };
            continue;
        }
        if name == "br" {
            out.push('\n');
        } else if BLOCK_TAGS.contains(&name.as_str()) {
            out.push_str("\n\n");
        }
    }
    tidy_blocks(&out)
}

fn push_text(out: &mut String, raw: &str) {
    let mut collapsed = String::with_capacity(raw.len());
    let mut in_space = false;
    for c in raw.chars() {
        if is_html_space(c) {
            if !in_space {
                collapsed.push(' ');
            }
            in_space = true;
        } else {
            collapsed.push(c);
            in_space = false;
        }
    }
    out.push_str(&decode_entities(&collapsed));
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&nbsp;", "\u{a0}")
        .replace("&amp;", "&")
}

// Trim spaces around line breaks, cap runs of newlines at two, trim the ends.
fn tidy_blocks(s: &str) -> String {
    let lines: Vec<&str> = s.split('\n').map(|l| l.trim_matches(' ')).collect();
    let mut out = String::with_capacity(s.len());
    let mut newlines = 0usize;
    for (i, line) in lines.iter().enumerate() {
        if i > 0 {
            newlines += 1;
        }
        if !line.is_empty() {
            if !out.is_empty() {
                for _ in 0..newlines.min(2) {
                    out.push('\n');
                }
            }
            out.push_str(line);
            newlines = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn html_paragraphs() {
        assert_eq!(
            normalize_document(b"<p>Hello</p><p>World</p>", MediaType::Html),
            "Hello\n\nWorld"
        );
    }

    #[test]
    fn crlf_plain() {
        assert_eq!(normalize_document(b"a\r\nb", MediaType::Plain), "a\nb");
        assert_eq!(normalize_document(b"a\rb\r\n", MediaType::Markdown), "a\nb\n");
    }

    #[test]
    fn script_and_style_dropped() {
        let html = b"<head><style>p{}</style><script>var x = '<p>no</p>';</script></head><p>yes</p>";
        assert_eq!(normalize_document(html, MediaType::Html), "yes");
    }

    #[test]
    fn entities_and_inline_tags() {
        let html = b"<p>a &amp; b &lt;c&gt; <em>d</em>&quot;e&quot; &apos;f&apos;&nbsp;g</p>";
        assert_eq!(
            normalize_document(html, MediaType::Html),
            "a & b <c> d\"e\" 'f'\u{a0}g"
        );
        // decoding happens once
        assert_eq!(normalize_document(b"&amp;lt;", MediaType::Html), "&lt;");
    }

    #[test]
    fn line_breaks_and_comments() {
        let html = b"<div>one<br>two<!-- hidden --></div>\n\n\n<p> three </p>";
        assert_eq!(normalize_document(html, MediaType::Html), "one\ntwo\n\nthree");
    }

    #[test]
    fn stray_angle_bracket_is_text() {
        assert_eq!(normalize_document(b"<p>1 < 2</p>", MediaType::Html), "1 < 2");
    }

    #[test]
    fn invalid_utf8_is_repaired() {
        let out = normalize_document(b"ok\xffok", MediaType::Plain);
        assert_eq!(out, "ok\u{fffd}ok");
    }

    #[test]
    fn empty_input() {
        assert_eq!(normalize_document(b"", MediaType::Html), "");
        assert_eq!(normalize_document(b"", MediaType::Plain), "");
    }
}
