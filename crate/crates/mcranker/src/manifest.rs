//! Declarative run manifests: one TOML file describing dataset paths,
//! pipeline configuration, backend, and output layout. CLI flags
//! override file values, which override defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pipeline::{CriteriaScope, EnsembleMethod, PipelineConfig, StageModels};

/// Which scoring method drives the rerank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mcranker,
    Direct,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mcranker" => Ok(Method::Mcranker),
            "direct" => Ok(Method::Direct),
            other => Err(format!("unknown method {other:?} (expected mcranker|direct)")),
        }
    }
}

/// Backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Replay,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            "http" => Ok(BackendKind::Http),
            other => Err(format!("unknown backend {other:?} (expected mock|replay|http)")),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    corpus: Option<PathBuf>,
    queries: Option<PathBuf>,
    qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineSection {
    method: Option<Method>,
    k: Option<u32>,
    n_recruits: Option<usize>,
    include_scientist: Option<bool>,
    ensemble: Option<EnsembleMethod>,
    criteria_scope: Option<CriteriaScope>,
    use_criteria: Option<bool>,
    truncation: Option<usize>,
    temperature: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelsSection {
    default: Option<String>,
    recruit: Option<String>,
    criteria: Option<String>,
    evaluate: Option<String>,
    assess: Option<String>,
    direct: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendSection {
    kind: Option<BackendKind>,
    seed: Option<u64>,
    transcript: Option<PathBuf>,
    endpoint: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    rpm: Option<u32>,
    cache_dir: Option<PathBuf>,
    templates: Option<PathBuf>,
    max_llm_calls: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    pipeline: PipelineSection,
    #[serde(default)]
    models: ModelsSection,
    #[serde(default)]
    backend: BackendSection,
    #[serde(default)]
    run: RunSection,
}

/// Backend settings resolved from manifest, flags, and environment.
#[derive(Debug, Clone)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub seed: u64,
    pub transcript: Option<PathBuf>,
    pub endpoint: Option<String>,
}

/// Fully resolved manifest driving `rerank` and `ablate`.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: Option<PathBuf>,
    pub method: Method,
    pub pipeline: PipelineConfig,
    pub backend: BackendSettings,
    pub out_dir: PathBuf,
    pub rpm: u32,
    pub cache_dir: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub max_llm_calls: Option<u64>,
}

fn resolve_path(base: &Path, path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

/// Parse and resolve a manifest. Relative paths are taken relative to
/// the manifest file's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile = toml::from_str(&text).map_err(|e| Error::Config {
        msg: format!("{}: {e}", path.display()),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

    let corpus = file.data.corpus.ok_or_else(|| Error::Config {
        msg: "manifest is missing data.corpus".into(),
    })?;
    let queries = file.data.queries.ok_or_else(|| Error::Config {
        msg: "manifest is missing data.queries".into(),
    })?;
    let out_dir = file.run.out_dir.ok_or_else(|| Error::Config {
        msg: "manifest is missing run.out_dir".into(),
    })?;

    let defaults = PipelineConfig::default();
    let default_model = file
        .models
        .default
        .unwrap_or_else(|| defaults.models.recruit.clone());
    let models = StageModels {
        recruit: file.models.recruit.unwrap_or_else(|| default_model.clone()),
        criteria: file.models.criteria.unwrap_or_else(|| default_model.clone()),
        evaluate: file.models.evaluate.unwrap_or_else(|| default_model.clone()),
        assess: file.models.assess.unwrap_or_else(|| default_model.clone()),
        direct: file.models.direct.unwrap_or_else(|| default_model.clone()),
    };

    let pipeline = PipelineConfig {
        k: file.pipeline.k.unwrap_or(defaults.k),
        n_recruits: file.pipeline.n_recruits.unwrap_or(defaults.n_recruits),
        include_scientist: file
            .pipeline
            .include_scientist
            .unwrap_or(defaults.include_scientist),
        ensemble: file.pipeline.ensemble.unwrap_or(defaults.ensemble),
        criteria_scope: file
            .pipeline
            .criteria_scope
            .unwrap_or(defaults.criteria_scope),
        use_criteria: file.pipeline.use_criteria.unwrap_or(defaults.use_criteria),
        models,
        temperature: file.pipeline.temperature.unwrap_or(defaults.temperature),
        truncation: file.pipeline.truncation.unwrap_or(defaults.truncation),
        workers: file.run.workers.unwrap_or(defaults.workers),
    };

    Ok(RunManifest {
        corpus: resolve_path(&base, corpus),
        queries: resolve_path(&base, queries),
        qrels: file.data.qrels.map(|p| resolve_path(&base, p)),
        method: file.pipeline.method.unwrap_or(Method::Mcranker),
        pipeline,
        backend: BackendSettings {
            kind: file.backend.kind.unwrap_or(BackendKind::Mock),
            seed: file.backend.seed.unwrap_or(0),
            transcript: file.backend.transcript.map(|p| resolve_path(&base, p)),
            endpoint: file.backend.endpoint,
        },
        out_dir: resolve_path(&base, out_dir),
        rpm: file.run.rpm.unwrap_or(0),
        cache_dir: file.run.cache_dir.map(|p| resolve_path(&base, p)),
        templates: file.run.templates.map(|p| resolve_path(&base, p)),
        max_llm_calls: file.run.max_llm_calls.filter(|&n| n > 0),
    })
}
