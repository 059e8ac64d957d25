//! User-facing commands: index, retrieve, rerank, evaluate, ablate, and
//! report-identities.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::bm25;
use crate::corpus::{load_corpus, load_queries, load_qrels, Corpus, Query};
use crate::error::Error;
use crate::llm::{Backend, DiskCache, Gateway, HttpBackend, MockBackend, ReplayBackend};
use crate::manifest::{load_manifest, BackendKind, Method, RunManifest};
use crate::metrics::{evaluate_run, Gain};
use crate::pipeline::{dataset_digest, Candidate, PipelineConfig, Reranker};
use crate::prompts::PromptKit;
use crate::trec::{group_by_query, read_run, validate_run, write_run, RunEntry};

#[derive(Parser)]
#[command(
    name = "mcranker",
    version,
    about = "Multi-perspective criteria-ensemble passage reranking"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index from a JSON-lines corpus and save it to disk.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing index file.
        #[arg(long)]
        force: bool,
    },
    /// First-stage retrieval: write a TREC run of top-k candidates.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        topk: usize,
        #[arg(long, default_value_t = bm25::DEFAULT_K1)]
        k1: f64,
        #[arg(long, default_value_t = bm25::DEFAULT_B)]
        b: f64,
        #[arg(long, default_value = "bm25")]
        tag: String,
    },
    /// Rerank a first-stage run with the criteria-ensemble pipeline.
    Rerank {
        #[arg(long)]
        manifest: PathBuf,
        /// TREC run of first-stage candidates (from `retrieve` or any
        /// external tool).
        #[arg(long)]
        first_stage: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a run against qrels with NDCG at a cutoff.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = 10)]
        cutoff: usize,
        /// Gain function: exp | linear.
        #[arg(long, default_value = "exp")]
        gain: String,
        /// Write the per-query TSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Cartesian sweep over pipeline axes; one run + metric row per point.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        first_stage: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Recruit counts to sweep, e.g. 0,1,2.
        #[arg(long, value_delimiter = ',')]
        recruits: Vec<usize>,
        /// Scientist on/off values to sweep, e.g. true,false.
        #[arg(long = "scientists", value_delimiter = ',')]
        scientists: Vec<String>,
        /// Rating scales to sweep, e.g. 3,5,10.
        #[arg(long = "k-values", value_delimiter = ',')]
        k_values: Vec<u32>,
        /// Ensembles to sweep: sum,rank_ensemble,assessor.
        #[arg(long, value_delimiter = ',')]
        ensembles: Vec<String>,
        /// Criteria on/off values to sweep.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<String>,
        /// Criteria scopes to sweep: per_query,per_dataset.
        #[arg(long, value_delimiter = ',')]
        scopes: Vec<String>,
    },
    /// Tally recruited identities across a directory of audit records.
    ReportIdentities {
        #[arg(long)]
        audit_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flag-level overrides applied on top of the manifest
/// (precedence: flags > file > defaults).
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// mcranker | direct.
    #[arg(long)]
    method: Option<String>,
    /// sum | rank_ensemble | assessor.
    #[arg(long)]
    ensemble: Option<String>,
    #[arg(long)]
    n_recruits: Option<usize>,
    /// true | false.
    #[arg(long)]
    scientist: Option<String>,
    #[arg(long)]
    k: Option<u32>,
    /// true | false.
    #[arg(long)]
    use_criteria: Option<String>,
    /// per_query | per_dataset.
    #[arg(long)]
    criteria_scope: Option<String>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Global backend requests-per-minute limit (0 = unlimited).
    #[arg(long)]
    rpm: Option<u32>,
    /// mock | replay | http.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Abort after this many backend calls (resumable via the cache).
    #[arg(long)]
    max_llm_calls: Option<u64>,
}

fn parse_bool(value: &str, flag: &str) -> anyhow::Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => bail!("--{flag}: expected a boolean, got {other:?}"),
    }
}

impl Overrides {
    fn apply(&self, manifest: &mut RunManifest) -> anyhow::Result<()> {
        if let Some(v) = &self.out_dir {
            manifest.out_dir = v.clone();
        }
        if let Some(v) = &self.method {
            manifest.method = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = &self.ensemble {
            manifest.pipeline.ensemble = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = self.n_recruits {
            manifest.pipeline.n_recruits = v;
        }
        if let Some(v) = &self.scientist {
            manifest.pipeline.include_scientist = parse_bool(v, "scientist")?;
        }
        if let Some(v) = self.k {
            manifest.pipeline.k = v;
        }
        if let Some(v) = &self.use_criteria {
            manifest.pipeline.use_criteria = parse_bool(v, "use-criteria")?;
        }
        if let Some(v) = &self.criteria_scope {
            manifest.pipeline.criteria_scope = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = self.truncation {
            manifest.pipeline.truncation = v;
        }
        if let Some(v) = self.workers {
            manifest.pipeline.workers = v;
        }
        if let Some(v) = self.rpm {
            manifest.rpm = v;
        }
        if let Some(v) = &self.backend {
            manifest.backend.kind = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = self.seed {
            manifest.backend.seed = v;
        }
        if let Some(v) = &self.cache_dir {
            manifest.cache_dir = Some(v.clone());
        }
        if let Some(v) = &self.templates {
            manifest.templates = Some(v.clone());
        }
        if let Some(v) = self.max_llm_calls {
            manifest.max_llm_calls = if v > 0 { Some(v) } else { None };
        }
        Ok(())
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Index { corpus, out, force } => cmd_index(&corpus, &out, force),
        Command::Retrieve {
            index,
            queries,
            out,
            topk,
            k1,
            b,
            tag,
        } => cmd_retrieve(&index, &queries, &out, topk, k1, b, &tag),
        Command::Rerank {
            manifest,
            first_stage,
            overrides,
        } => {
            let mut manifest = load_manifest(&manifest)?;
            overrides.apply(&mut manifest)?;
            let summary = cmd_rerank(&manifest, &first_stage)?;
            println!(
                "reranked {} queries -> {} ({} backend calls, {} cache hits)",
                summary.n_queries,
                summary.run_path.display(),
                summary.backend_calls,
                summary.cache_hits
            );
            if let Some(mean) = summary.mean_ndcg {
                println!("ndcg@10 mean {mean:.6}");
            }
            Ok(())
        }
        Command::Evaluate {
            run,
            qrels,
            cutoff,
            gain,
            out,
            json,
        } => cmd_evaluate(&run, &qrels, cutoff, &gain, out.as_deref(), json.as_deref()),
        Command::Ablate {
            manifest,
            first_stage,
            overrides,
            recruits,
            scientists,
            k_values,
            ensembles,
            criteria,
            scopes,
        } => {
            let mut base = load_manifest(&manifest)?;
            overrides.apply(&mut base)?;
            let sweep = SweepSpec {
                recruits,
                scientist: parse_bool_list(&scientists, "scientists")?,
                k_values,
                ensembles: parse_list(&ensembles)?,
                criteria: parse_bool_list(&criteria, "criteria")?,
                scopes: parse_list(&scopes)?,
            };
            cmd_ablate(&base, &first_stage, sweep)
        }
        Command::ReportIdentities { audit_dir, out } => {
            cmd_report_identities(&audit_dir, out.as_deref())
        }
    }
}

fn parse_list<T>(values: &[String]) -> anyhow::Result<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    values
        .iter()
        .map(|v| v.parse::<T>().map_err(|e| anyhow::Error::msg(e.to_string())))
        .collect()
}

fn parse_bool_list(values: &[String], flag: &str) -> anyhow::Result<Vec<bool>> {
    values.iter().map(|v| parse_bool(v, flag)).collect()
}

// ---------------------------------------------------------------------------
// index / retrieve
// ---------------------------------------------------------------------------

fn cmd_index(corpus_path: &Path, out: &Path, force: bool) -> anyhow::Result<()> {
    if out.exists() && !force {
        bail!(
            "index file {} already exists; pass --force to overwrite",
            out.display()
        );
    }
    let corpus = load_corpus(corpus_path)?;
    let index = bm25::build_index(&corpus)?;
    bm25::save_index(&index, out)?;
    println!(
        "indexed {} passages ({} terms) -> {}",
        index.doc_count(),
        index.term_count(),
        out.display()
    );
    Ok(())
}

fn cmd_retrieve(
    index_path: &Path,
    queries_path: &Path,
    out: &Path,
    topk: usize,
    k1: f64,
    b: f64,
    tag: &str,
) -> anyhow::Result<()> {
    let index = bm25::load_index(index_path)?;
    let queries = load_queries(queries_path)?;
    let mut entries = Vec::new();
    for query in &queries {
        let hits = bm25::retrieve_top_k(&index, &query.id, &query.text, topk, k1, b, tag);
        if hits.is_empty() {
            log::warn!("query {} shares no terms with the corpus; no candidates", query.id);
        }
        entries.extend(hits);
    }
    write_run(&entries, out)?;
    println!(
        "retrieved candidates for {} queries -> {}",
        queries.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// rerank
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct RunStats {
    backend_calls: u64,
    cache_hits: u64,
    n_queries: usize,
    n_entries: usize,
    completed: bool,
}

/// What `cmd_rerank` produced, for reporting and tests.
pub struct RerankSummary {
    pub run_path: PathBuf,
    pub n_queries: usize,
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub mean_ndcg: Option<f64>,
}

fn build_gateway(manifest: &RunManifest, out_dir: &Path) -> anyhow::Result<Gateway> {
    let backend = match manifest.backend.kind {
        BackendKind::Mock => Backend::Mock(MockBackend::new(manifest.backend.seed)),
        BackendKind::Replay => {
            let dir = manifest
                .backend
                .transcript
                .as_ref()
                .context("replay backend needs backend.transcript")?;
            Backend::Replay(ReplayBackend::open(dir)?)
        }
        BackendKind::Http => {
            let endpoint = manifest
                .backend
                .endpoint
                .clone()
                .or_else(|| std::env::var("MCRANKER_ENDPOINT").ok())
                .or_else(|| std::env::var("OPENAI_BASE_URL").ok())
                .context("http backend needs backend.endpoint or MCRANKER_ENDPOINT/OPENAI_BASE_URL")?;
            let api_key = std::env::var("MCRANKER_API_KEY")
                .or_else(|_| std::env::var("OPENAI_API_KEY"))
                .unwrap_or_else(|_| {
                    log::warn!("no MCRANKER_API_KEY/OPENAI_API_KEY set; sending empty key");
                    String::new()
                });
            Backend::Http(HttpBackend::new(endpoint, api_key))
        }
    };
    let cache_dir = manifest
        .cache_dir
        .clone()
        .unwrap_or_else(|| out_dir.join("cache"));
    let mut gateway = Gateway::new(backend)
        .with_cache(DiskCache::open(cache_dir)?)
        .with_rpm(manifest.rpm);
    if let Some(budget) = manifest.max_llm_calls {
        gateway = gateway.with_call_budget(budget);
    }
    Ok(gateway)
}

fn load_kit(manifest: &RunManifest) -> anyhow::Result<PromptKit> {
    let kit = match &manifest.templates {
        Some(dir) => PromptKit::from_dir(dir)?,
        None => PromptKit::builtin(),
    };
    Ok(kit.with_truncation(manifest.pipeline.truncation))
}

fn audit_file_name(query_id: &str) -> String {
    let safe: String = query_id
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

/// Rerank every query of a first-stage run and write the run directory:
/// `run.trec`, `audit/<query>.json`, `stats.json`, and metrics when
/// qrels are configured.
pub fn cmd_rerank(manifest: &RunManifest, first_stage: &Path) -> anyhow::Result<RerankSummary> {
    manifest.pipeline.validate()?;
    let out_dir = &manifest.out_dir;
    let audit_dir = out_dir.join("audit");
    fs::create_dir_all(&audit_dir)
        .with_context(|| format!("creating {}", audit_dir.display()))?;

    let corpus = load_corpus(&manifest.corpus)?;
    let queries = load_queries(&manifest.queries)?;
    let queries_by_id: BTreeMap<&str, &Query> =
        queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let first_stage_entries = read_run(first_stage)?;
    let groups = group_by_query(&first_stage_entries);

    let gateway = build_gateway(manifest, out_dir)?;
    let kit = load_kit(manifest)?;
    let reranker = Reranker::new(&gateway, &kit, &manifest.pipeline);
    let digest = match manifest.pipeline.criteria_scope {
        crate::pipeline::CriteriaScope::PerDataset => Some(dataset_digest(&queries, 5)),
        crate::pipeline::CriteriaScope::PerQuery => None,
    };

    let mut all_entries: Vec<RunEntry> = Vec::new();
    let mut n_queries = 0usize;
    let result = (|| -> anyhow::Result<()> {
        for (query_id, entries) in &groups {
            let Some(query) = queries_by_id.get(query_id.as_str()) else {
                log::warn!("run query {query_id} not found in the queries file; skipping");
                continue;
            };
            let candidates = candidates_from(entries, &corpus)?;
            let outcome = match manifest.method {
                Method::Mcranker => {
                    reranker.rerank_query(query, &candidates, digest.as_deref())?
                }
                Method::Direct => reranker.direct_rerank_query(query, &candidates)?,
            };
            let audit_path = audit_dir.join(audit_file_name(query_id));
            fs::write(
                &audit_path,
                serde_json::to_string_pretty(&outcome.audit)?,
            )
            .with_context(|| format!("writing {}", audit_path.display()))?;
            all_entries.extend(outcome.entries);
            n_queries += 1;
        }
        Ok(())
    })();

    let stats = RunStats {
        backend_calls: gateway.backend_calls(),
        cache_hits: gateway.cache_hits(),
        n_queries,
        n_entries: all_entries.len(),
        completed: result.is_ok(),
    };
    fs::write(
        out_dir.join("stats.json"),
        serde_json::to_string_pretty(&stats)?,
    )?;
    result.context("rerank aborted; cached exchanges are kept for resume")?;

    let run_path = out_dir.join("run.trec");
    write_run(&all_entries, &run_path)?;

    let mut mean_ndcg = None;
    if let Some(qrels_path) = &manifest.qrels {
        let qrels = load_qrels(qrels_path)?;
        let report = evaluate_run(&all_entries, &qrels, 10, Gain::Exp)?;
        fs::write(out_dir.join("metrics.tsv"), report.to_tsv())?;
        fs::write(
            out_dir.join("metrics.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        mean_ndcg = Some(report.mean);
    }

    Ok(RerankSummary {
        run_path,
        n_queries,
        backend_calls: stats.backend_calls,
        cache_hits: stats.cache_hits,
        mean_ndcg,
    })
}

fn candidates_from(entries: &[RunEntry], corpus: &Corpus) -> anyhow::Result<Vec<Candidate>> {
    entries
        .iter()
        .map(|e| {
            let passage = corpus.get(&e.passage_id).ok_or(Error::UnknownPassage {
                id: e.passage_id.clone(),
            })?;
            Ok(Candidate {
                passage_id: e.passage_id.clone(),
                first_stage_rank: e.rank,
                text: passage.full_text(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn cmd_evaluate(
    run_path: &Path,
    qrels_path: &Path,
    cutoff: usize,
    gain: &str,
    out: Option<&Path>,
    json: Option<&Path>,
) -> anyhow::Result<()> {
    let gain: Gain = gain.parse().map_err(anyhow::Error::msg)?;
    let run = read_run(run_path)?;
    validate_run(&run)?;
    let qrels = load_qrels(qrels_path)?;
    let report = evaluate_run(&run, &qrels, cutoff, gain)?;
    print!("{}", report.to_tsv());
    if let Some(path) = out {
        fs::write(path, report.to_tsv())?;
    }
    if let Some(path) = json {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct SweepSpec {
    recruits: Vec<usize>,
    scientist: Vec<bool>,
    k_values: Vec<u32>,
    ensembles: Vec<crate::pipeline::EnsembleMethod>,
    criteria: Vec<bool>,
    scopes: Vec<crate::pipeline::CriteriaScope>,
}

fn dedup_preserving<T: PartialEq + Clone>(values: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for v in values {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

fn axis_or_default<T: PartialEq + Clone>(values: &[T], default: T) -> Vec<T> {
    if values.is_empty() {
        vec![default]
    } else {
        dedup_preserving(values)
    }
}

fn cmd_ablate(base: &RunManifest, first_stage: &Path, sweep: SweepSpec) -> anyhow::Result<()> {
    let any_axis = !(sweep.recruits.is_empty()
        && sweep.scientist.is_empty()
        && sweep.k_values.is_empty()
        && sweep.ensembles.is_empty()
        && sweep.criteria.is_empty()
        && sweep.scopes.is_empty());
    if !any_axis {
        bail!("empty sweep: pass at least one of --recruits/--scientist/--k/--ensembles/--criteria/--scopes");
    }

    let recruits = axis_or_default(&sweep.recruits, base.pipeline.n_recruits);
    let scientists = axis_or_default(&sweep.scientist, base.pipeline.include_scientist);
    let k_values = axis_or_default(&sweep.k_values, base.pipeline.k);
    let ensembles = axis_or_default(&sweep.ensembles, base.pipeline.ensemble);
    let criteria = axis_or_default(&sweep.criteria, base.pipeline.use_criteria);
    let scopes = axis_or_default(&sweep.scopes, base.pipeline.criteria_scope);

    let sweep_root = base.out_dir.clone();
    fs::create_dir_all(&sweep_root)?;
    // Points share one cache so common stages are generated once.
    let shared_cache = base
        .cache_dir
        .clone()
        .unwrap_or_else(|| sweep_root.join("cache"));

    let mut rows: Vec<String> = Vec::new();
    for &n_recruits in &recruits {
        for &include_scientist in &scientists {
            for &k in &k_values {
                for &ensemble in &ensembles {
                    for &use_criteria in &criteria {
                        for &criteria_scope in &scopes {
                            let pipeline = PipelineConfig {
                                k,
                                n_recruits,
                                include_scientist,
                                ensemble,
                                use_criteria,
                                criteria_scope,
                                ..base.pipeline.clone()
                            };
                            if pipeline.validate().is_err() {
                                log::warn!(
                                    "skipping invalid sweep point (recruits={n_recruits}, scientist={include_scientist})"
                                );
                                continue;
                            }
                            let tag = pipeline.run_tag();
                            let mut point = base.clone();
                            point.pipeline = pipeline;
                            point.out_dir = sweep_root.join(&tag);
                            point.cache_dir = Some(shared_cache.clone());
                            let summary = cmd_rerank(&point, first_stage)
                                .with_context(|| format!("sweep point {tag}"))?;
                            let ndcg = summary
                                .mean_ndcg
                                .map(|v| format!("{v:.6}"))
                                .unwrap_or_else(|| "NA".to_string());
                            rows.push(format!(
                                "{tag}\t{n_recruits}\t{include_scientist}\t{k}\t{}\t{use_criteria}\t{:?}\t{ndcg}",
                                ensemble.tag_fragment(),
                                criteria_scope,
                            ));
                            println!("ablate point {tag}: ndcg {ndcg}");
                        }
                    }
                }
            }
        }
    }

    let mut tsv = String::from(
        "tag\tn_recruits\tinclude_scientist\tk\tensemble\tuse_criteria\tcriteria_scope\tndcg_mean\n",
    );
    for row in &rows {
        tsv.push_str(row);
        tsv.push('\n');
    }
    let tsv_path = sweep_root.join("ablation.tsv");
    fs::write(&tsv_path, tsv)?;
    println!("{} sweep points -> {}", rows.len(), tsv_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// report-identities
// ---------------------------------------------------------------------------

fn cmd_report_identities(audit_dir: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(audit_dir)
        .with_context(|| format!("reading {}", audit_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("audit directory {} has no records", audit_dir.display());
    }

    let mut tally: BTreeMap<String, u64> = BTreeMap::new();
    for file in &files {
        let data = fs::read_to_string(file)?;
        let audit: serde_json::Value = serde_json::from_str(&data)
            .with_context(|| format!("parsing {}", file.display()))?;
        if let Some(team) = audit["team"].as_array() {
            for member in team {
                if member["kind"].as_str() == Some("recruited") {
                    if let Some(label) = member["label"].as_str() {
                        *tally.entry(label.to_lowercase()).or_insert(0) += 1;
                    }
                }
            }
        }
    }

    let mut rows: Vec<(&String, &u64)> = tally.iter().collect();
    rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut tsv = String::new();
    for (label, count) in &rows {
        tsv.push_str(&format!("{label}\t{count}\n"));
    }
    if rows.is_empty() {
        eprintln!("note: no recruited identities found (scientist-only runs?)");
    }

    // Default next to the audit directory, i.e. in the run directory.
    let out_path = out.map(Path::to_path_buf).unwrap_or_else(|| {
        audit_dir
            .parent()
            .unwrap_or(audit_dir)
            .join("identities.tsv")
    });
    fs::write(&out_path, &tsv)?;
    print!("{tsv}");
    println!("identity tally -> {}", out_path.display());
    Ok(())
}
