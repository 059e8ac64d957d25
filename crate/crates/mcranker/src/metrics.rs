//! NDCG@k evaluation of TREC runs against qrels.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::trec::{group_by_query, RunEntry};

/// Gain function applied to a relevance grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// 2^grade - 1 (the default).
    Exp,
    /// The grade itself.
    Linear,
}

impl Gain {
    pub fn apply(&self, grade: u32) -> f64 {
        match self {
            Gain::Exp => (2f64).powi(grade as i32) - 1.0,
            Gain::Linear => grade as f64,
        }
    }
}

impl std::str::FromStr for Gain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exp" => Ok(Gain::Exp),
            "linear" => Ok(Gain::Linear),
            other => Err(format!("unknown gain {other:?} (expected exp|linear)")),
        }
    }
}

/// Discounted cumulative gain of grades already in rank order.
pub fn dcg_at_k(grades: &[u32], cutoff: usize, gain: Gain) -> f64 {
    grades
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, &g)| gain.apply(g) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG of one query's run entries: the run's top-`cutoff` DCG divided by
/// the ideal DCG over all of the query's judged grades. Queries with no
/// positive grade score 0.
pub fn ndcg_at_k(
    entries_for_query: &[RunEntry],
    qrels: &Qrels,
    cutoff: usize,
    gain: Gain,
) -> f64 {
    if entries_for_query.is_empty() {
        return 0.0;
    }
    let query_id = &entries_for_query[0].query_id;
    let mut ordered: Vec<&RunEntry> = entries_for_query.iter().collect();
    ordered.sort_by_key(|e| e.rank);
    let grades: Vec<u32> = ordered
        .iter()
        .map(|e| qrels.grade(query_id, &e.passage_id))
        .collect();
    let dcg = dcg_at_k(&grades, cutoff, gain);

    let mut ideal = qrels.grades_for_query(query_id);
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, cutoff, gain);
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Per-query values and their mean.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub cutoff: usize,
    pub gain: Gain,
    pub n_queries: usize,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
}

impl MetricReport {
    /// TSV rows `query_id \t ndcg` plus a trailing mean row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (qid, v) in &self.per_query {
            out.push_str(&format!("{qid}\t{v:.6}\n"));
        }
        out.push_str(&format!("mean\t{:.6}\n", self.mean));
        out
    }
}

/// Evaluate a whole run: one NDCG per query present in the run, averaged.
pub fn evaluate_run(
    run: &[RunEntry],
    qrels: &Qrels,
    cutoff: usize,
    gain: Gain,
) -> Result<MetricReport> {
    if run.is_empty() {
        return Err(Error::EmptyRun);
    }
    let mut per_query = BTreeMap::new();
    for (query_id, entries) in group_by_query(run) {
        if qrels.grades_for_query(&query_id).is_empty() {
            log::warn!("query {query_id} has no qrels entries; scoring 0.0");
        }
        per_query.insert(query_id, ndcg_at_k(&entries, qrels, cutoff, gain));
    }
    let n_queries = per_query.len();
    let mean = per_query.values().sum::<f64>() / n_queries as f64;
    Ok(MetricReport {
        cutoff,
        gain,
        n_queries,
        mean,
        per_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels_from(pairs: &[(&str, &str, u32)]) -> Qrels {
        let mut qrels = Qrels::new();
        for &(q, d, g) in pairs {
            qrels.insert(q, d, g);
        }
        qrels
    }

    fn run_of(qid: &str, docs: &[&str]) -> Vec<RunEntry> {
        docs.iter()
            .enumerate()
            .map(|(i, d)| RunEntry::new(qid, *d, (i + 1) as u32, (docs.len() - i) as f64, "t"))
            .collect()
    }

    #[test]
    fn dcg_single_relevant_at_top() {
        assert_eq!(dcg_at_k(&[1], 10, Gain::Exp), 1.0);
    }

    #[test]
    fn dcg_second_position_discount() {
        let v = dcg_at_k(&[0, 1], 10, Gain::Exp);
        assert!((v - 0.630_929_753_571_457_5).abs() < 1e-12, "{v}");
    }

    // Hand evaluation of sum (2^r - 1)/log2(i + 1) over [2, 1, 0]:
    // 3/1 + 1/log2(3) + 0 = 3.6309297535714575.
    #[test]
    fn dcg_three_graded_positions() {
        let v = dcg_at_k(&[2, 1, 0], 10, Gain::Exp);
        assert!((v - 3.630_929_753_571_457_5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn dcg_cutoff_truncates() {
        assert_eq!(dcg_at_k(&[1, 1, 1], 1, Gain::Exp), 1.0);
    }

    #[test]
    fn ndcg_ideal_order_is_one() {
        let qrels = qrels_from(&[("q1", "d1", 2), ("q1", "d2", 1)]);
        let run = run_of("q1", &["d1", "d2", "d3"]);
        assert_eq!(ndcg_at_k(&run, &qrels, 10, Gain::Exp), 1.0);
    }

    #[test]
    fn ndcg_single_positive_at_rank_two() {
        let qrels = qrels_from(&[("q1", "d2", 1)]);
        let run = run_of("q1", &["d1", "d2"]);
        let v = ndcg_at_k(&run, &qrels, 10, Gain::Exp);
        assert!((v - 0.630_929_753_571_457_5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn ndcg_no_positive_grades_is_zero() {
        let qrels = Qrels::new();
        let run = run_of("q1", &["d1"]);
        assert_eq!(ndcg_at_k(&run, &qrels, 10, Gain::Exp), 0.0);
    }

    #[test]
    fn ndcg_counts_unretrieved_judged_docs_in_ideal() {
        // d9 (grade 2) was never retrieved, so even a perfectly ordered
        // run cannot reach 1.0.
        let qrels = qrels_from(&[("q1", "d1", 1), ("q1", "d9", 2)]);
        let run = run_of("q1", &["d1"]);
        let v = ndcg_at_k(&run, &qrels, 10, Gain::Exp);
        let ideal = 3.0 + 1.0 / 3f64.log2();
        assert!((v - 1.0 / ideal).abs() < 1e-12, "{v}");
    }

    #[test]
    fn gains_coincide_on_binary_qrels() {
        let qrels = qrels_from(&[("q1", "d2", 1), ("q1", "d3", 1)]);
        let run = run_of("q1", &["d1", "d2", "d3"]);
        let exp = ndcg_at_k(&run, &qrels, 10, Gain::Exp);
        let lin = ndcg_at_k(&run, &qrels, 10, Gain::Linear);
        assert!((exp - lin).abs() < 1e-12);
    }

    #[test]
    fn evaluate_run_averages_queries() {
        let qrels = qrels_from(&[("q1", "d1", 1), ("q2", "d2", 1)]);
        let mut run = run_of("q1", &["d1"]);
        run.extend(run_of("q2", &["d9", "d2"]));
        let report = evaluate_run(&run, &qrels, 10, Gain::Exp).unwrap();
        assert_eq!(report.n_queries, 2);
        let expected = (1.0 + 0.630_929_753_571_457_5) / 2.0;
        assert!((report.mean - expected).abs() < 1e-12);
    }

    #[test]
    fn evaluate_run_single_query_mean_is_its_value() {
        let qrels = qrels_from(&[("q1", "d1", 1)]);
        let run = run_of("q1", &["d1"]);
        let report = evaluate_run(&run, &qrels, 10, Gain::Exp).unwrap();
        assert_eq!(report.mean, report.per_query["q1"]);
    }

    #[test]
    fn evaluate_empty_run_is_error() {
        let qrels = Qrels::new();
        assert!(matches!(
            evaluate_run(&[], &qrels, 10, Gain::Exp),
            Err(Error::EmptyRun)
        ));
    }

    #[test]
    fn run_query_missing_from_qrels_scores_zero() {
        let qrels = qrels_from(&[("q1", "d1", 1)]);
        let mut run = run_of("q1", &["d1"]);
        run.extend(run_of("qX", &["d1"]));
        let report = evaluate_run(&run, &qrels, 10, Gain::Exp).unwrap();
        assert_eq!(report.per_query["qX"], 0.0);
        assert_eq!(report.n_queries, 2);
    }

    #[test]
    fn tsv_has_per_query_rows_and_mean() {
        let qrels = qrels_from(&[("q1", "d1", 1)]);
        let run = run_of("q1", &["d1"]);
        let report = evaluate_run(&run, &qrels, 10, Gain::Exp).unwrap();
        let tsv = report.to_tsv();
        assert!(tsv.contains("q1\t1.000000\n"));
        assert!(tsv.ends_with("mean\t1.000000\n"));
    }
}
