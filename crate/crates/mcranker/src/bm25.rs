//! First-stage BM25 retrieval over an in-memory inverted index.
//!
//! The analyzer is deliberately minimal: lowercase, split on
//! non-alphanumeric characters, no stemming or stopwords. Index files can
//! be serialized to a compact binary format with a versioned header.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::trec::RunEntry;

/// Default BM25 parameters, matching common first-stage toolkit defaults.
pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;

const INDEX_MAGIC: &[u8; 8] = b"MCRIDX01";

/// Lowercase and split on any non-alphanumeric character, dropping
/// empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Term postings plus document statistics for BM25 scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    id_to_idx: HashMap<String, u32>,
    /// term -> postings of (doc index, term frequency), in corpus order.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl InvertedIndex {
    /// Number of documents.
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    /// Mean document length in tokens.
    pub fn avgdl(&self) -> f64 {
        if self.doc_ids.is_empty() {
            return 0.0;
        }
        self.doc_lengths.iter().map(|&l| l as u64).sum::<u64>() as f64
            / self.doc_ids.len() as f64
    }

    pub fn doc_length(&self, passage_id: &str) -> Option<u32> {
        self.id_to_idx
            .get(passage_id)
            .map(|&i| self.doc_lengths[i as usize])
    }

    /// Number of distinct terms.
    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    /// Document frequency of a term.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |p| p.len())
    }

    fn tf(&self, term: &str, doc_idx: u32) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.iter().find(|&&(d, _)| d == doc_idx))
            .map_or(0, |&(_, tf)| tf)
    }
}

/// Build an index over title + body of every passage.
pub fn build_index(corpus: &Corpus) -> Result<InvertedIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut index = InvertedIndex {
        doc_ids: Vec::with_capacity(corpus.len()),
        doc_lengths: Vec::with_capacity(corpus.len()),
        id_to_idx: HashMap::with_capacity(corpus.len()),
        postings: BTreeMap::new(),
    };
    for passage in corpus.iter() {
        let doc_idx = index.doc_ids.len() as u32;
        let tokens = tokenize(&format!("{} {}", passage.title, passage.body));
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            index
                .postings
                .entry(term.to_string())
                .or_default()
                .push((doc_idx, tf));
        }
        index.doc_ids.push(passage.id.clone());
        index.doc_lengths.push(tokens.len() as u32);
        index.id_to_idx.insert(passage.id.clone(), doc_idx);
    }
    Ok(index)
}

fn idf(n: f64, df: f64) -> f64 {
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_score(tf: f64, dl: f64, avgdl: f64, k1: f64, b: f64) -> f64 {
    tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
}

/// BM25 score of one document for a tokenized query. Repeated query
/// tokens contribute once per occurrence.
pub fn bm25_score(
    index: &InvertedIndex,
    query_tokens: &[String],
    passage_id: &str,
    k1: f64,
    b: f64,
) -> Result<f64> {
    let &doc_idx = index
        .id_to_idx
        .get(passage_id)
        .ok_or_else(|| Error::UnknownPassage {
            id: passage_id.to_string(),
        })?;
    let n = index.doc_count() as f64;
    let avgdl = index.avgdl();
    let dl = index.doc_lengths[doc_idx as usize] as f64;
    let mut score = 0.0;
    for token in query_tokens {
        let df = index.df(token);
        if df == 0 {
            continue;
        }
        let tf = index.tf(token, doc_idx);
        if tf == 0 {
            continue;
        }
        score += idf(n, df as f64) * term_score(tf as f64, dl, avgdl, k1, b);
    }
    Ok(score)
}

/// Top-k retrieval: documents sharing at least one query term, sorted by
/// descending score with ties broken by ascending passage id, ranks 1..n.
pub fn retrieve_top_k(
    index: &InvertedIndex,
    query_id: &str,
    query_text: &str,
    k: usize,
    k1: f64,
    b: f64,
    tag: &str,
) -> Vec<RunEntry> {
    let query_tokens = tokenize(query_text);
    let n = index.doc_count() as f64;
    let avgdl = index.avgdl();

    let mut scores: HashMap<u32, f64> = HashMap::new();
    for token in &query_tokens {
        if let Some(postings) = index.postings.get(token) {
            let idf = idf(n, postings.len() as f64);
            for &(doc_idx, tf) in postings {
                let dl = index.doc_lengths[doc_idx as usize] as f64;
                *scores.entry(doc_idx).or_insert(0.0) +=
                    idf * term_score(tf as f64, dl, avgdl, k1, b);
            }
        }
    }

    let mut scored: Vec<(&str, f64)> = scores
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(doc_idx, s)| (index.doc_ids[doc_idx as usize].as_str(), s))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    scored.truncate(k);

    scored
        .into_iter()
        .enumerate()
        .map(|(i, (pid, score))| RunEntry::new(query_id, pid, (i + 1) as u32, score, tag))
        .collect()
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::IndexFormat {
                msg: "truncated index file".into(),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::IndexFormat {
            msg: "invalid utf-8 in index file".into(),
        })
    }
}

/// Serialize the index to a compact binary file with a versioned header.
pub fn save_index(index: &InvertedIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&(index.doc_ids.len() as u64).to_le_bytes());
    for (id, &len) in index.doc_ids.iter().zip(&index.doc_lengths) {
        write_str(&mut out, id);
        out.extend_from_slice(&len.to_le_bytes());
    }
    out.extend_from_slice(&(index.postings.len() as u64).to_le_bytes());
    for (term, postings) in &index.postings {
        write_str(&mut out, term);
        out.extend_from_slice(&(postings.len() as u64).to_le_bytes());
        for &(doc_idx, tf) in postings {
            out.extend_from_slice(&doc_idx.to_le_bytes());
            out.extend_from_slice(&tf.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Load an index written by [`save_index`].
pub fn load_index(path: impl AsRef<Path>) -> Result<InvertedIndex> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != INDEX_MAGIC {
        return Err(Error::IndexFormat {
            msg: "bad magic or unsupported version".into(),
        });
    }
    let n_docs = r.u64()? as usize;
    let mut doc_ids = Vec::with_capacity(n_docs);
    let mut doc_lengths = Vec::with_capacity(n_docs);
    let mut id_to_idx = HashMap::with_capacity(n_docs);
    for i in 0..n_docs {
        let id = r.string()?;
        doc_lengths.push(r.u32()?);
        id_to_idx.insert(id.clone(), i as u32);
        doc_ids.push(id);
    }
    let n_terms = r.u64()? as usize;
    let mut postings = BTreeMap::new();
    for _ in 0..n_terms {
        let term = r.string()?;
        let n_post = r.u64()? as usize;
        let mut list = Vec::with_capacity(n_post);
        for _ in 0..n_post {
            let doc_idx = r.u32()?;
            if doc_idx as usize >= n_docs {
                return Err(Error::IndexFormat {
                    msg: format!("posting references doc {doc_idx} out of {n_docs}"),
                });
            }
            let tf = r.u32()?;
            list.push((doc_idx, tf));
        }
        postings.insert(term, list);
    }
    Ok(InvertedIndex {
        doc_ids,
        doc_lengths,
        id_to_idx,
        postings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;

    fn corpus_of(docs: &[(&str, &str)]) -> Corpus {
        let mut corpus = Corpus::new();
        for &(id, body) in docs {
            corpus
                .push(Passage {
                    id: id.to_string(),
                    title: String::new(),
                    body: body.to_string(),
                })
                .unwrap();
        }
        corpus
    }

    #[test]
    fn tokenize_splits_and_lowercases() {
        assert_eq!(tokenize("Masks, COVID-19!"), ["masks", "covid", "19"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("A a A"), ["a", "a", "a"]);
    }

    #[test]
    fn build_index_counts_terms() {
        let corpus = corpus_of(&[("d", "a b a")]);
        let index = build_index(&corpus).unwrap();
        assert_eq!(index.postings["a"], [(0, 2)]);
        assert_eq!(index.postings["b"], [(0, 1)]);
        assert_eq!(index.avgdl(), 3.0);
    }

    #[test]
    fn avgdl_over_two_docs() {
        let corpus = corpus_of(&[("d1", "a b"), ("d2", "a b c d")]);
        let index = build_index(&corpus).unwrap();
        assert_eq!(index.avgdl(), 3.0);
    }

    #[test]
    fn empty_doc_counts_in_n() {
        let corpus = corpus_of(&[("d1", ""), ("d2", "a b")]);
        let index = build_index(&corpus).unwrap();
        assert_eq!(index.doc_count(), 2);
        assert_eq!(index.doc_length("d1"), Some(0));
        assert_eq!(index.avgdl(), 1.0);
    }

    #[test]
    fn empty_corpus_is_error() {
        let corpus = Corpus::new();
        assert!(matches!(build_index(&corpus), Err(Error::EmptyCorpus)));
    }

    // Single-doc analytic case: tf=1, dl=avgdl=1, df=1, N=1 gives
    // IDF = ln(1 + 0.5/1.5) = ln(4/3) and a term factor of exactly 1,
    // so the score is ln(4/3).
    #[test]
    fn single_doc_single_term_matches_hand_value() {
        let corpus = corpus_of(&[("d1", "mask")]);
        let index = build_index(&corpus).unwrap();
        let score = bm25_score(
            &index,
            &tokenize("mask"),
            "d1",
            DEFAULT_K1,
            DEFAULT_B,
        )
        .unwrap();
        let expected = (4.0f64 / 3.0).ln();
        assert!((score - expected).abs() < 1e-9, "score = {score}");
        assert!((score - 0.287_682_072_451_780_9).abs() < 1e-9);
    }

    /// Brute-force evaluation of the scoring formula from raw token
    /// lists, independent of the index structures.
    fn brute_force_score(
        docs: &[(&str, &str)],
        query: &str,
        target: &str,
        k1: f64,
        b: f64,
    ) -> f64 {
        let token_lists: Vec<(&str, Vec<String>)> =
            docs.iter().map(|&(id, body)| (id, tokenize(body))).collect();
        let n = docs.len() as f64;
        let avgdl =
            token_lists.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
        let target_tokens = &token_lists.iter().find(|(id, _)| *id == target).unwrap().1;
        let dl = target_tokens.len() as f64;
        let mut total = 0.0;
        for q in tokenize(query) {
            let df = token_lists
                .iter()
                .filter(|(_, toks)| toks.contains(&q))
                .count() as f64;
            let tf = target_tokens.iter().filter(|&t| *t == q).count() as f64;
            if df == 0.0 || tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        total
    }

    #[test]
    fn three_doc_corpus_matches_brute_force() {
        let docs = [
            ("d1", "masks prevent covid spread"),
            ("d2", "covid spread in schools and masks masks"),
            ("d3", "espresso machines need cleaning"),
        ];
        let corpus = corpus_of(&docs);
        let index = build_index(&corpus).unwrap();
        let query = "masks covid";
        for (id, _) in docs {
            let got =
                bm25_score(&index, &tokenize(query), id, DEFAULT_K1, DEFAULT_B).unwrap();
            let want = brute_force_score(&docs, query, id, DEFAULT_K1, DEFAULT_B);
            assert!((got - want).abs() < 1e-12, "{id}: {got} vs {want}");
        }
    }

    #[test]
    fn absent_query_term_contributes_zero() {
        let corpus = corpus_of(&[("d1", "alpha beta")]);
        let index = build_index(&corpus).unwrap();
        let with = bm25_score(&index, &tokenize("alpha"), "d1", DEFAULT_K1, DEFAULT_B).unwrap();
        let plus_absent =
            bm25_score(&index, &tokenize("alpha zzz"), "d1", DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(with, plus_absent);
    }

    #[test]
    fn repeated_query_term_counts_per_occurrence() {
        let corpus = corpus_of(&[("d1", "a b"), ("d2", "b c")]);
        let index = build_index(&corpus).unwrap();
        let once = bm25_score(&index, &tokenize("a"), "d1", DEFAULT_K1, DEFAULT_B).unwrap();
        let twice = bm25_score(&index, &tokenize("a a"), "d1", DEFAULT_K1, DEFAULT_B).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn unknown_passage_is_error() {
        let corpus = corpus_of(&[("d1", "a")]);
        let index = build_index(&corpus).unwrap();
        assert!(matches!(
            bm25_score(&index, &tokenize("a"), "nope", DEFAULT_K1, DEFAULT_B),
            Err(Error::UnknownPassage { .. })
        ));
    }

    #[test]
    fn retrieve_orders_by_score_then_id() {
        // d2 scores highest (tf=2); d1 and d3 tie exactly and fall back
        // to ascending id order.
        let corpus = corpus_of(&[("d3", "a x"), ("d1", "a x"), ("d2", "a a")]);
        let index = build_index(&corpus).unwrap();
        let out = retrieve_top_k(&index, "q1", "a", 10, DEFAULT_K1, DEFAULT_B, "bm25");
        let ids: Vec<&str> = out.iter().map(|e| e.passage_id.as_str()).collect();
        assert_eq!(ids, ["d2", "d1", "d3"]);
        let ranks: Vec<u32> = out.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, [1, 2, 3]);
    }

    #[test]
    fn retrieve_truncates_to_k() {
        let corpus = corpus_of(&[("d1", "a"), ("d2", "a a"), ("d3", "a a a")]);
        let index = build_index(&corpus).unwrap();
        let out = retrieve_top_k(&index, "q1", "a", 2, DEFAULT_K1, DEFAULT_B, "bm25");
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn no_term_overlap_yields_empty_list() {
        let corpus = corpus_of(&[("d1", "alpha"), ("d2", "beta")]);
        let index = build_index(&corpus).unwrap();
        let out = retrieve_top_k(&index, "q1", "gamma", 10, DEFAULT_K1, DEFAULT_B, "bm25");
        assert!(out.is_empty());
    }

    #[test]
    fn index_round_trips_through_disk() {
        let corpus = corpus_of(&[("d1", "a b a"), ("d2", ""), ("d3", "c b")]);
        let index = build_index(&corpus).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_index(&index, f.path()).unwrap();
        let back = load_index(f.path()).unwrap();
        assert_eq!(back, index);
    }

    #[test]
    fn bad_magic_is_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), b"NOTANIDX........").unwrap();
        assert!(matches!(
            load_index(f.path()),
            Err(Error::IndexFormat { .. })
        ));
    }
}
