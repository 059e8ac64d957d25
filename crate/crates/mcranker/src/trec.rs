//! TREC run files, the exchange format between retrieval, reranking,
//! and evaluation.
//!
//! Line format: `qid Q0 docid rank score tag`, single spaces, score with
//! six decimal places. Within one query, ranks must be 1..m with no gaps
//! or duplicates and scores non-increasing by rank.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One line of a TREC run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub passage_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

impl RunEntry {
    pub fn new(
        query_id: impl Into<String>,
        passage_id: impl Into<String>,
        rank: u32,
        score: f64,
        tag: impl Into<String>,
    ) -> Self {
        Self {
            query_id: query_id.into(),
            passage_id: passage_id.into(),
            rank,
            score,
            tag: tag.into(),
        }
    }

    fn to_line(&self) -> String {
        format!(
            "{} Q0 {} {} {:.6} {}",
            self.query_id, self.passage_id, self.rank, self.score, self.tag
        )
    }
}

/// Check the per-query rank and score invariants over a full run.
pub fn validate_run(entries: &[RunEntry]) -> Result<()> {
    let mut by_query: HashMap<&str, Vec<&RunEntry>> = HashMap::new();
    for e in entries {
        if e.rank == 0 {
            return Err(Error::InvalidRun {
                msg: format!("query {}: rank must be positive", e.query_id),
            });
        }
        by_query.entry(&e.query_id).or_default().push(e);
    }
    for (qid, mut group) in by_query {
        group.sort_by_key(|e| e.rank);
        for (i, e) in group.iter().enumerate() {
            let expected = (i + 1) as u32;
            if e.rank != expected {
                return Err(Error::InvalidRun {
                    msg: format!(
                        "query {qid}: rank {} where {expected} was expected (gap or duplicate)",
                        e.rank
                    ),
                });
            }
        }
        for pair in group.windows(2) {
            if pair[0].score < pair[1].score {
                return Err(Error::InvalidRun {
                    msg: format!(
                        "query {qid}: score increases from rank {} to {}",
                        pair[0].rank, pair[1].rank
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Write a run file after validating its invariants.
pub fn write_run(entries: &[RunEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    validate_run(entries)?;
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a run file; entries are returned in file order.
pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<RunEntry>> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::malformed(
                path,
                lineno + 1,
                format!("expected 6 columns, got {}", cols.len()),
            ));
        }
        let rank: u32 = cols[3]
            .parse()
            .map_err(|_| Error::malformed(path, lineno + 1, format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::malformed(path, lineno + 1, format!("bad score {:?}", cols[4])))?;
        entries.push(RunEntry {
            query_id: cols[0].to_string(),
            passage_id: cols[2].to_string(),
            rank,
            score,
            tag: cols[5].to_string(),
        });
    }
    Ok(entries)
}

/// Group entries by query id, each group sorted by ascending rank.
/// Query order follows first appearance in the input.
pub fn group_by_query(entries: &[RunEntry]) -> Vec<(String, Vec<RunEntry>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RunEntry>> = HashMap::new();
    for e in entries {
        if !groups.contains_key(&e.query_id) {
            order.push(e.query_id.clone());
        }
        groups.entry(e.query_id.clone()).or_default().push(e.clone());
    }
    order
        .into_iter()
        .map(|qid| {
            let mut group = groups.remove(&qid).unwrap();
            group.sort_by_key(|e| e.rank);
            (qid, group)
        })
        .collect()
}
