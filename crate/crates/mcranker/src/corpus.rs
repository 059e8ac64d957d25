//! BEIR-format corpus, query, and qrels loading.
//!
//! Corpora and queries are JSON-lines files with `_id`/`title`/`text` fields;
//! qrels are tab-separated `query-id corpus-id score` rows with an optional
//! header. These files plus TREC runs (see [`crate::trec`]) are the only
//! persistence formats besides the LLM cache.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// One passage of the retrieval corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub body: String,
}

impl Passage {
    /// Title and body joined with a single space, the text that gets
    /// indexed and fed to prompts.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else if self.body.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.body)
        }
    }
}

/// An information need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

/// A corpus indexed by passage id, preserving file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a passage; duplicate ids are rejected.
    pub fn push(&mut self, passage: Passage) -> Result<()> {
        if self.by_id.contains_key(&passage.id) {
            return Err(Error::DuplicatePassageId { id: passage.id });
        }
        self.by_id.insert(passage.id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Passage> {
        self.passages.iter()
    }
}

/// Graded ground-truth relevance judgments.
///
/// Lookup is total: absent pairs have grade 0.
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    grades: HashMap<(String, String), u32>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a judgment; a later duplicate overwrites the earlier one.
    /// Returns the previous grade when overwriting.
    pub fn insert(&mut self, query_id: &str, passage_id: &str, grade: u32) -> Option<u32> {
        self.grades
            .insert((query_id.to_string(), passage_id.to_string()), grade)
    }

    /// Grade for a (query, passage) pair; 0 when unjudged.
    pub fn grade(&self, query_id: &str, passage_id: &str) -> u32 {
        self.grades
            .get(&(query_id.to_string(), passage_id.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// All grades recorded for one query.
    pub fn grades_for_query(&self, query_id: &str) -> Vec<u32> {
        self.grades
            .iter()
            .filter(|((q, _), _)| q == query_id)
            .map(|(_, &g)| g)
            .collect()
    }

    /// Judged (passage_id, grade) pairs for one query.
    pub fn judged_for_query(&self, query_id: &str) -> Vec<(String, u32)> {
        self.grades
            .iter()
            .filter(|((q, _), _)| q == query_id)
            .map(|((_, d), &g)| (d.clone(), g))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

#[derive(Deserialize)]
struct CorpusRecord {
    _id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct QueryRecord {
    _id: String,
    text: String,
}

/// Load a BEIR JSON-lines corpus. Each line must carry `_id`, `title`,
/// and `text`; `_id` must be unique across the file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Corpus::new();
    for (lineno, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(path, lineno + 1, e.to_string()))?;
        if rec._id.is_empty() {
            return Err(Error::malformed(path, lineno + 1, "empty `_id`"));
        }
        let body = rec
            .text
            .ok_or_else(|| Error::malformed(path, lineno + 1, "missing `text` field"))?;
        corpus.push(Passage {
            id: rec._id,
            title: rec.title,
            body,
        })?;
    }
    Ok(corpus)
}

/// Load BEIR JSON-lines queries in file order. Query text must be nonempty.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut queries = Vec::new();
    for (lineno, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(path, lineno + 1, e.to_string()))?;
        if rec.text.trim().is_empty() {
            return Err(Error::EmptyQueryText { id: rec._id });
        }
        queries.push(Query {
            id: rec._id,
            text: rec.text,
        });
    }
    Ok(queries)
}

/// Load BEIR TSV qrels: `query-id \t corpus-id \t score`.
///
/// A single leading header row is skipped when its score column is not an
/// integer. Duplicate pairs are last-wins with a warning.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut qrels = Qrels::new();
    for (lineno, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::malformed(
                path,
                lineno + 1,
                format!("expected 3 tab-separated columns, got {}", cols.len()),
            ));
        }
        let grade = match cols[2].trim().parse::<u32>() {
            Ok(g) => g,
            Err(_) if lineno == 0 => continue, // header row
            Err(_) => {
                return Err(Error::malformed(
                    path,
                    lineno + 1,
                    format!("non-integer grade {:?}", cols[2]),
                ));
            }
        };
        if let Some(prev) = qrels.insert(cols[0].trim(), cols[1].trim(), grade) {
            log::warn!(
                "{}:{}: duplicate qrels pair ({}, {}); grade {} overwrites {}",
                path.display(),
                lineno + 1,
                cols[0].trim(),
                cols[1].trim(),
                grade,
                prev
            );
        }
    }
    Ok(qrels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn corpus_single_record() {
        let f = write_temp(r#"{"_id":"d1","title":"","text":"masks work"}"#);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 1);
        let p = corpus.get("d1").unwrap();
        assert_eq!(p.body, "masks work");
        assert_eq!(p.title, "");
    }

    #[test]
    fn corpus_empty_file() {
        let f = write_temp("");
        let corpus = load_corpus(f.path()).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn corpus_duplicate_id_is_error() {
        let f = write_temp(
            "{\"_id\":\"d1\",\"title\":\"\",\"text\":\"a\"}\n{\"_id\":\"d1\",\"title\":\"\",\"text\":\"b\"}",
        );
        let err = load_corpus(f.path()).unwrap_err();
        match err {
            Error::DuplicatePassageId { id } => assert_eq!(id, "d1"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn corpus_malformed_line_names_line_number() {
        let f = write_temp("{\"_id\":\"d1\",\"title\":\"\",\"text\":\"a\"}\nnot json");
        let err = load_corpus(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "got: {err}");
    }

    #[test]
    fn corpus_missing_text_field_is_error() {
        let f = write_temp(r#"{"_id":"d1","title":"t"}"#);
        assert!(load_corpus(f.path()).is_err());
    }

    #[test]
    fn queries_single() {
        let f = write_temp(r#"{"_id":"q1","text":"best masks for covid"}"#);
        let qs = load_queries(f.path()).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].id, "q1");
        assert_eq!(qs[0].text, "best masks for covid");
    }

    #[test]
    fn queries_blank_text_is_error() {
        let f = write_temp(r#"{"_id":"q1","text":"  "}"#);
        let err = load_queries(f.path()).unwrap_err();
        match err {
            Error::EmptyQueryText { id } => assert_eq!(id, "q1"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn queries_preserve_file_order() {
        let f = write_temp(
            "{\"_id\":\"q3\",\"text\":\"c\"}\n{\"_id\":\"q1\",\"text\":\"a\"}\n{\"_id\":\"q2\",\"text\":\"b\"}",
        );
        let qs = load_queries(f.path()).unwrap();
        let ids: Vec<&str> = qs.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["q3", "q1", "q2"]);
    }

    #[test]
    fn qrels_basic_row() {
        let f = write_temp("q1\td1\t2");
        let qrels = load_qrels(f.path()).unwrap();
        assert_eq!(qrels.grade("q1", "d1"), 2);
    }

    #[test]
    fn qrels_header_skipped() {
        let f = write_temp("query-id\tcorpus-id\tscore\nq1\td1\t1");
        let qrels = load_qrels(f.path()).unwrap();
        assert_eq!(qrels.len(), 1);
        assert_eq!(qrels.grade("q1", "d1"), 1);
    }

    #[test]
    fn qrels_absent_pair_is_zero() {
        let f = write_temp("q1\td1\t2");
        let qrels = load_qrels(f.path()).unwrap();
        assert_eq!(qrels.grade("q1", "d9"), 0);
    }

    #[test]
    fn qrels_duplicate_last_wins() {
        let f = write_temp("q1\td1\t2\nq1\td1\t3");
        let qrels = load_qrels(f.path()).unwrap();
        assert_eq!(qrels.grade("q1", "d1"), 3);
    }

    #[test]
    fn qrels_non_integer_grade_is_error() {
        let f = write_temp("q1\td1\t2\nq1\td2\tbad");
        let err = load_qrels(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "got: {err}");
    }

    #[test]
    fn full_text_joins_title_and_body() {
        let p = Passage {
            id: "d".into(),
            title: "A Title".into(),
            body: "the body".into(),
        };
        assert_eq!(p.full_text(), "A Title the body");
        let no_title = Passage {
            id: "d".into(),
            title: String::new(),
            body: "just body".into(),
        };
        assert_eq!(no_title.full_text(), "just body");
    }
}
