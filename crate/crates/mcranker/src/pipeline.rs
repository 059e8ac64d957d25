//! The multi-perspective criteria-ensemble reranker: recruit a virtual
//! annotation team for the query, let each member write weighted scoring
//! criteria, score every candidate passage per member, then ensemble the
//! member scores into one ranking signal. A direct single-prompt scorer
//! is included as the baseline.

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Query;
use crate::error::{Error, Result};
use crate::llm::json::{extract_json, get_ci, parse_int_score_raw};
use crate::llm::{Gateway, LlmRequest, Stage};
use crate::prompts::{ExpertAssessment, PromptKit};
use crate::trec::RunEntry;

/// Fixed label of the designated text-analysis team member.
pub const SCIENTIST_LABEL: &str = "NLP Scientist";

/// Criteria slot content when criteria generation is switched off.
pub const NO_CRITERIA_SENTINEL: &str =
    "No criteria provided. Use your own judgment as the given role.";

const RETRY_SUFFIX: &str = "\n\nReturn only the JSON object.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    FixedNlpScientist,
    Recruited,
}

/// One virtual team member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorIdentity {
    pub label: String,
    pub kind: AnnotatorKind,
    pub origin_reason: String,
}

impl AnnotatorIdentity {
    pub fn is_scientist(&self) -> bool {
        self.kind == AnnotatorKind::FixedNlpScientist
    }
}

/// The fixed scientist that anchors every team when enabled.
pub fn scientist() -> AnnotatorIdentity {
    AnnotatorIdentity {
        label: SCIENTIST_LABEL.to_string(),
        kind: AnnotatorKind::FixedNlpScientist,
        origin_reason: "designated fixed team member".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriteriaScope {
    PerQuery,
    PerDataset,
}

impl std::str::FromStr for CriteriaScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "per_query" => Ok(CriteriaScope::PerQuery),
            "per_dataset" => Ok(CriteriaScope::PerDataset),
            other => Err(format!(
                "unknown criteria scope {other:?} (expected per_query|per_dataset)"
            )),
        }
    }
}

/// The weighted scoring rubric one member wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaSet {
    pub annotator: AnnotatorIdentity,
    pub criteria_text: String,
    pub reason_text: String,
    pub scope: CriteriaScope,
}

/// One member's judgment of one passage.
#[derive(Debug, Clone, Serialize)]
pub struct MemberScore {
    pub query_id: String,
    pub passage_id: String,
    pub annotator: AnnotatorIdentity,
    pub score: u32,
}

/// Complete members-by-passages grid for one query. Member order is
/// scientist first, recruits in response order; passage order is the
/// first-stage candidate order.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub query_id: String,
    pub members: Vec<AnnotatorIdentity>,
    pub passage_ids: Vec<String>,
    scores: Vec<u32>,
    flagged: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(
        query_id: impl Into<String>,
        members: Vec<AnnotatorIdentity>,
        passage_ids: Vec<String>,
    ) -> Self {
        let cells = members.len() * passage_ids.len();
        Self {
            query_id: query_id.into(),
            members,
            passage_ids,
            scores: vec![0; cells],
            flagged: vec![false; cells],
        }
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn n_passages(&self) -> usize {
        self.passage_ids.len()
    }

    fn cell(&self, member: usize, passage: usize) -> usize {
        member * self.passage_ids.len() + passage
    }

    pub fn set(&mut self, member: usize, passage: usize, score: u32, flagged: bool) {
        let cell = self.cell(member, passage);
        self.scores[cell] = score;
        self.flagged[cell] = flagged;
    }

    pub fn score(&self, member: usize, passage: usize) -> u32 {
        self.scores[self.cell(member, passage)]
    }

    pub fn is_flagged(&self, member: usize, passage: usize) -> bool {
        self.flagged[self.cell(member, passage)]
    }

    /// All member scores for one passage, in member order.
    pub fn passage_scores(&self, passage: usize) -> Vec<u32> {
        (0..self.members.len())
            .map(|m| self.score(m, passage))
            .collect()
    }

    /// One member's scores across passages, in candidate order.
    pub fn member_scores(&self, member: usize) -> &[u32] {
        let start = self.cell(member, 0);
        &self.scores[start..start + self.passage_ids.len()]
    }
}

/// Score-ensemble mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMethod {
    Sum,
    RankEnsemble,
    Assessor,
}

impl EnsembleMethod {
    /// Short form used in run tags.
    pub fn tag_fragment(&self) -> &'static str {
        match self {
            EnsembleMethod::Sum => "sum",
            EnsembleMethod::RankEnsemble => "re",
            EnsembleMethod::Assessor => "assessor",
        }
    }
}

impl std::str::FromStr for EnsembleMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sum" => Ok(EnsembleMethod::Sum),
            "rank_ensemble" | "re" => Ok(EnsembleMethod::RankEnsemble),
            "assessor" => Ok(EnsembleMethod::Assessor),
            other => Err(format!(
                "unknown ensemble {other:?} (expected sum|rank_ensemble|assessor)"
            )),
        }
    }
}

/// Model id per pipeline stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageModels {
    pub recruit: String,
    pub criteria: String,
    pub evaluate: String,
    pub assess: String,
    pub direct: String,
}

impl Default for StageModels {
    fn default() -> Self {
        let model = "gpt-4-1106-preview".to_string();
        Self {
            recruit: model.clone(),
            criteria: model.clone(),
            evaluate: model.clone(),
            assess: model.clone(),
            direct: model,
        }
    }
}

/// Everything that defines one reranking variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Rating scale upper bound.
    pub k: u32,
    pub n_recruits: usize,
    pub include_scientist: bool,
    pub ensemble: EnsembleMethod,
    pub criteria_scope: CriteriaScope,
    pub use_criteria: bool,
    pub models: StageModels,
    pub temperature: f64,
    /// Passage truncation in whitespace tokens.
    pub truncation: usize,
    /// Concurrent (member, passage) evaluations.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 10,
            n_recruits: 2,
            include_scientist: true,
            ensemble: EnsembleMethod::Sum,
            criteria_scope: CriteriaScope::PerQuery,
            use_criteria: true,
            models: StageModels::default(),
            temperature: 0.0,
            truncation: crate::prompts::DEFAULT_TRUNCATION,
            workers: 8,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config {
                msg: "rating scale k must be at least 1".into(),
            });
        }
        if self.n_recruits == 0 && !self.include_scientist {
            return Err(Error::Config {
                msg: "team would be empty: enable the scientist or recruit at least one member"
                    .into(),
            });
        }
        Ok(())
    }

    /// Team fragment of the run tag, e.g. `nlp+2rc`.
    pub fn team_fragment(&self) -> String {
        match (self.include_scientist, self.n_recruits) {
            (true, 0) => "nlp".to_string(),
            (true, n) => format!("nlp+{n}rc"),
            (false, n) => format!("{n}rc"),
        }
    }

    /// Run tag: `mcr-<members>-<ensemble>-k<k>` plus variant suffixes.
    pub fn run_tag(&self) -> String {
        let mut tag = format!(
            "mcr-{}-{}-k{}",
            self.team_fragment(),
            self.ensemble.tag_fragment(),
            self.k
        );
        if self.criteria_scope == CriteriaScope::PerDataset {
            tag.push_str("-dbc");
        }
        if !self.use_criteria {
            tag.push_str("-nocrit");
        }
        tag
    }

    /// Configured team size.
    pub fn team_size(&self) -> usize {
        self.n_recruits + usize::from(self.include_scientist)
    }
}

/// A first-stage candidate with its passage text resolved.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub passage_id: String,
    pub first_stage_rank: u32,
    pub text: String,
}

/// One recorded LLM exchange reference in the audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct AuditExchange {
    pub stage: String,
    pub cache_key: String,
    pub response_text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditPassage {
    pub passage_id: String,
    pub member_scores: Vec<u32>,
    pub flagged: Vec<bool>,
    pub final_score: f64,
    pub final_rank: u32,
}

/// Per-query audit record: team, criteria, scores, and raw exchanges.
#[derive(Debug, Clone, Serialize)]
pub struct QueryAudit {
    pub query_id: String,
    pub query_text: String,
    pub tag: String,
    pub team: Vec<AnnotatorIdentity>,
    pub criteria: Vec<CriteriaSet>,
    pub passages: Vec<AuditPassage>,
    pub exchanges: Vec<AuditExchange>,
}

/// Result of reranking one query.
#[derive(Debug, Clone)]
pub struct RerankOutcome {
    pub entries: Vec<RunEntry>,
    pub audit: QueryAudit,
}

// ---------------------------------------------------------------------------
// Pure ensemble mechanisms
// ---------------------------------------------------------------------------

/// Score summation: a passage's final score is the sum of its member
/// scores.
pub fn ensemble_sum(matrix: &ScoreMatrix) -> Vec<f64> {
    (0..matrix.n_passages())
        .map(|p| matrix.passage_scores(p).iter().map(|&s| s as f64).sum())
        .collect()
}

/// Rank ensemble: each member's scores are ranked over the query's
/// passages (descending, stable ties keeping first-stage order, ordinal
/// ranks from 1) and a passage's final score is the sum of its
/// reciprocal ranks.
pub fn ensemble_rank(matrix: &ScoreMatrix) -> Vec<f64> {
    let n = matrix.n_passages();
    let mut finals = vec![0.0; n];
    for m in 0..matrix.n_members() {
        let scores = matrix.member_scores(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].cmp(&scores[a]));
        for (rank0, &p) in order.iter().enumerate() {
            finals[p] += 1.0 / (rank0 + 1) as f64;
        }
    }
    finals
}

/// Scientist enabled puts the fixed member at index 0, recruits follow
/// in response order.
pub fn assemble_team(
    recruited: Vec<AnnotatorIdentity>,
    include_scientist: bool,
) -> Result<Vec<AnnotatorIdentity>> {
    let mut team = Vec::with_capacity(recruited.len() + 1);
    if include_scientist {
        team.push(scientist());
    }
    team.extend(recruited);
    if team.is_empty() {
        return Err(Error::EmptyTeam);
    }
    Ok(team)
}

/// Digest of up to `max` sample queries, substituted for the query slot
/// when criteria are generated once per dataset.
pub fn dataset_digest(queries: &[Query], max: usize) -> String {
    let items: Vec<String> = queries
        .iter()
        .take(max)
        .enumerate()
        .map(|(i, q)| format!("({}) {}", i + 1, q.text))
        .collect();
    format!("Queries from this dataset include: {}", items.join(" "))
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

/// Outcome of a score-bearing completion: `None` means both attempts
/// failed to yield a usable integer and the caller's fallback applies.
struct ScoredCompletion {
    score: Option<i64>,
    exchanges: Vec<AuditExchange>,
}

/// The pipeline bound to a gateway, prompt kit, and configuration.
pub struct Reranker<'a> {
    pub gateway: &'a Gateway,
    pub kit: &'a PromptKit,
    pub config: &'a PipelineConfig,
}

impl<'a> Reranker<'a> {
    pub fn new(gateway: &'a Gateway, kit: &'a PromptKit, config: &'a PipelineConfig) -> Self {
        Self {
            gateway,
            kit,
            config,
        }
    }

    fn request(&self, model: &str, prompt: String, stage: Stage) -> LlmRequest {
        LlmRequest::new(model, self.config.temperature, prompt, stage)
    }

    /// Complete a request and parse its JSON payload, re-issuing once
    /// with an appended reminder when extraction or `parse` fails.
    /// Backend errors propagate immediately.
    fn complete_parsed<T>(
        &self,
        request: &LlmRequest,
        parse: impl Fn(&Value) -> Result<T>,
    ) -> Result<(T, Vec<AuditExchange>)> {
        let mut exchanges = Vec::new();
        let text = self.gateway.complete(request)?;
        exchanges.push(AuditExchange {
            stage: request.stage.to_string(),
            cache_key: request.cache_key(),
            response_text: text.clone(),
        });
        let first = extract_json(&text).and_then(|v| parse(&v));
        let err = match first {
            Ok(value) => return Ok((value, exchanges)),
            Err(e) => e,
        };
        log::warn!(
            "{} response unusable ({err}); re-issuing with JSON reminder",
            request.stage
        );
        let retry = LlmRequest::new(
            &request.model,
            request.temperature,
            format!("{}{RETRY_SUFFIX}", request.prompt),
            request.stage,
        );
        let text = self.gateway.complete(&retry)?;
        exchanges.push(AuditExchange {
            stage: retry.stage.to_string(),
            cache_key: retry.cache_key(),
            response_text: text.clone(),
        });
        let value = extract_json(&text).and_then(|v| parse(&v))?;
        Ok((value, exchanges))
    }

    /// Integer-score completion with the retry-then-clamp policy: one
    /// corrective reprompt on any parse or range failure, then clamping
    /// when a number was seen at all, otherwise `None`.
    fn scored_completion(
        &self,
        request: &LlmRequest,
        key: &str,
        lo: i64,
        hi: i64,
    ) -> Result<ScoredCompletion> {
        let mut exchanges = Vec::new();
        let mut attempt = |req: &LlmRequest| -> Result<Result<i64>> {
            let text = self.gateway.complete(req)?;
            exchanges.push(AuditExchange {
                stage: req.stage.to_string(),
                cache_key: req.cache_key(),
                response_text: text.clone(),
            });
            Ok(extract_json(&text).and_then(|v| parse_int_score_raw(&v, key)))
        };

        let first = attempt(request)?;
        if let Ok(v) = first {
            if v >= lo && v <= hi {
                return Ok(ScoredCompletion {
                    score: Some(v),
                    exchanges,
                });
            }
        }
        let retry = LlmRequest::new(
            &request.model,
            request.temperature,
            format!("{}{RETRY_SUFFIX}", request.prompt),
            request.stage,
        );
        let second = attempt(&retry)?;
        let score = match (first, second) {
            (_, Ok(v)) | (Ok(v), Err(_)) => {
                if v < lo || v > hi {
                    log::warn!("score {v} outside [{lo}, {hi}] after reprompt; clamping");
                }
                Some(v.clamp(lo, hi))
            }
            (Err(e1), Err(e2)) => {
                log::warn!("no usable score after reprompt ({e1}; {e2})");
                None
            }
        };
        Ok(ScoredCompletion { score, exchanges })
    }

    /// Ask the recruiting model for up to `n` annotator identities for
    /// this query; the example passage is the rank-1 first-stage
    /// candidate.
    pub fn recruit_team(
        &self,
        query: &Query,
        example_passage: &str,
        n: usize,
    ) -> Result<(Vec<AnnotatorIdentity>, Vec<AuditExchange>)> {
        let parse = |value: &Value| -> Result<(Vec<String>, String)> {
            let identities = get_ci(value, "Identities")
                .ok_or_else(|| Error::MissingScoreKey {
                    key: "Identities".into(),
                })?
                .as_array()
                .ok_or_else(|| Error::JsonExtract {
                    raw: "\"Identities\" is not an array".into(),
                })?
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.trim().to_string()),
                    other => Err(Error::JsonExtract {
                        raw: format!("non-string identity: {other}"),
                    }),
                })
                .collect::<Result<Vec<String>>>()?;
            let reason = get_ci(value, "Reason")
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string();
            Ok((identities, reason))
        };

        let prompt = self.kit.render_recruit(&query.text, example_passage, n)?;
        let request = self.request(&self.config.models.recruit, prompt, Stage::Recruit);
        let mut exchanges = Vec::new();
        let (mut parsed, ex) = self
            .complete_parsed(&request, parse)
            .map_err(|e| match e {
                Error::BudgetExhausted => Error::BudgetExhausted,
                other => Error::RecruitFailed {
                    query_id: query.id.clone(),
                    msg: other.to_string(),
                },
            })?;
        exchanges.extend(ex);

        if parsed.0.len() < n {
            log::warn!(
                "recruiting returned {} of {n} identities for query {}; asking once more",
                parsed.0.len(),
                query.id
            );
            let retry_prompt = format!(
                "{}\n\nPlease name exactly {n} identities.",
                request.prompt
            );
            let retry = self.request(&self.config.models.recruit, retry_prompt, Stage::Recruit);
            match self.complete_parsed(&retry, parse) {
                Ok((retry_parsed, ex)) => {
                    exchanges.extend(ex);
                    if retry_parsed.0.len() > parsed.0.len() {
                        parsed = retry_parsed;
                    }
                }
                Err(Error::BudgetExhausted) => return Err(Error::BudgetExhausted),
                Err(e) => log::warn!("recruit retry failed ({e}); keeping first answer"),
            }
            if parsed.0.len() < n {
                log::warn!(
                    "proceeding with {} recruited identities for query {}",
                    parsed.0.len(),
                    query.id
                );
            }
        }

        let (identities, reason) = parsed;
        let team = identities
            .into_iter()
            .take(n)
            .map(|label| AnnotatorIdentity {
                label,
                kind: AnnotatorKind::Recruited,
                origin_reason: reason.clone(),
            })
            .collect();
        Ok((team, exchanges))
    }

    /// Generate one member's weighted criteria. The scientist uses the
    /// linguistic-relevance template, recruits the identity-bound one;
    /// `context_text` is the query text or, for dataset-scoped criteria,
    /// the dataset digest.
    pub fn generate_criteria(
        &self,
        context_text: &str,
        annotator: &AnnotatorIdentity,
        scope: CriteriaScope,
    ) -> Result<(CriteriaSet, Vec<AuditExchange>)> {
        let prompt = if annotator.is_scientist() {
            self.kit.render_criteria_nlp(context_text)?
        } else {
            self.kit.render_criteria_rc(&annotator.label, context_text)?
        };
        let request = self.request(&self.config.models.criteria, prompt, Stage::Criteria);
        let parse = |value: &Value| -> Result<(String, String)> {
            let criteria = get_ci(value, "Criteria").ok_or_else(|| Error::MissingScoreKey {
                key: "Criteria".into(),
            })?;
            // Stored verbatim: strings as-is, structured values re-serialized.
            let criteria_text = match criteria {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let reason_text = get_ci(value, "Reason")
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .unwrap_or_default();
            Ok((criteria_text, reason_text))
        };
        let ((criteria_text, reason_text), exchanges) = self
            .complete_parsed(&request, parse)
            .map_err(|e| match e {
                Error::BudgetExhausted => Error::BudgetExhausted,
                other => Error::CriteriaFailed {
                    label: annotator.label.clone(),
                    msg: other.to_string(),
                },
            })?;
        Ok((
            CriteriaSet {
                annotator: annotator.clone(),
                criteria_text,
                reason_text,
                scope,
            },
            exchanges,
        ))
    }

    /// Score one passage from one member's viewpoint. Parse failures
    /// degrade to a flagged score of 0; the passage is never dropped.
    pub fn evaluate_passage(
        &self,
        query: &Query,
        passage_id: &str,
        passage_text: &str,
        annotator: &AnnotatorIdentity,
        criteria_text: &str,
        k: u32,
    ) -> Result<(MemberScore, bool, Vec<AuditExchange>)> {
        let prompt = self.kit.render_evaluate(
            &annotator.label,
            criteria_text,
            &query.text,
            passage_text,
            k,
        )?;
        let request = self.request(&self.config.models.evaluate, prompt, Stage::Evaluate);
        let outcome = self.scored_completion(&request, "Score", 0, k as i64)?;
        let flagged = outcome.score.is_none();
        if flagged {
            log::warn!(
                "evaluation fell back to 0 for query {} passage {passage_id} member {:?}",
                query.id,
                annotator.label
            );
        }
        let score = outcome.score.unwrap_or(0) as u32;
        Ok((
            MemberScore {
                query_id: query.id.clone(),
                passage_id: passage_id.to_string(),
                annotator: annotator.clone(),
                score,
            },
            flagged,
            outcome.exchanges,
        ))
    }

    /// LLM-assessor ensemble for one passage: feed every member's score
    /// into the synthesis prompt and parse one final score in [0, 10].
    /// Falls back to the row sum when the assessor reply is unusable.
    pub fn ensemble_assessor(
        &self,
        query: &Query,
        passage_text: &str,
        matrix: &ScoreMatrix,
        passage_idx: usize,
    ) -> Result<(f64, bool, Vec<AuditExchange>)> {
        // Recruits first, the scientist last with the language-expert
        // phrasing, matching the assessor prompt's fixed layout.
        let mut members: Vec<ExpertAssessment> = Vec::new();
        for (m, annotator) in matrix.members.iter().enumerate() {
            if !annotator.is_scientist() {
                members.push(ExpertAssessment {
                    identity: annotator.label.clone(),
                    language_expert: false,
                    score: matrix.score(m, passage_idx) as i64,
                });
            }
        }
        for (m, annotator) in matrix.members.iter().enumerate() {
            if annotator.is_scientist() {
                members.push(ExpertAssessment {
                    identity: annotator.label.clone(),
                    language_expert: true,
                    score: matrix.score(m, passage_idx) as i64,
                });
            }
        }
        let prompt = self
            .kit
            .render_assessor(&query.text, passage_text, &members)?;
        let request = self.request(&self.config.models.assess, prompt, Stage::Assess);
        let outcome = self.scored_completion(&request, "Final score", 0, 10)?;
        match outcome.score {
            Some(v) => Ok((v as f64, false, outcome.exchanges)),
            None => {
                let row_sum: f64 = matrix
                    .passage_scores(passage_idx)
                    .iter()
                    .map(|&s| s as f64)
                    .sum();
                log::warn!(
                    "assessor reply unusable for query {} passage {}; falling back to row sum",
                    query.id,
                    matrix.passage_ids[passage_idx]
                );
                Ok((row_sum, true, outcome.exchanges))
            }
        }
    }

    /// Single-prompt relevance scoring, the non-ensemble baseline.
    pub fn direct_score(
        &self,
        query: &Query,
        passage_text: &str,
        k: u32,
    ) -> Result<(u32, bool, Vec<AuditExchange>)> {
        let prompt = self.kit.render_direct(&query.text, passage_text, k)?;
        let request = self.request(&self.config.models.direct, prompt, Stage::Direct);
        let outcome = self.scored_completion(&request, "Score", 0, k as i64)?;
        let flagged = outcome.score.is_none();
        Ok((outcome.score.unwrap_or(0) as u32, flagged, outcome.exchanges))
    }

    /// Run the full pipeline for one query's candidates and return the
    /// reranked entries plus an audit record.
    pub fn rerank_query(
        &self,
        query: &Query,
        candidates: &[Candidate],
        dataset_digest: Option<&str>,
    ) -> Result<RerankOutcome> {
        self.config.validate()?;
        if candidates.is_empty() {
            return Err(Error::RerankFailed {
                query_id: query.id.clone(),
                msg: "no candidates to rerank".into(),
            });
        }
        let mut candidates: Vec<&Candidate> = candidates.iter().collect();
        candidates.sort_by_key(|c| c.first_stage_rank);

        let mut exchanges: Vec<AuditExchange> = Vec::new();

        // Stage 1: recruiting, anchored on the rank-1 candidate.
        let recruited = if self.config.n_recruits > 0 {
            let (team, ex) =
                self.recruit_team(query, &candidates[0].text, self.config.n_recruits)?;
            exchanges.extend(ex);
            team
        } else {
            Vec::new()
        };
        let team = assemble_team(recruited, self.config.include_scientist)?;

        // Stage 2: criteria, once per member.
        let mut criteria: Vec<CriteriaSet> = Vec::with_capacity(team.len());
        for annotator in &team {
            if !self.config.use_criteria {
                criteria.push(CriteriaSet {
                    annotator: annotator.clone(),
                    criteria_text: NO_CRITERIA_SENTINEL.to_string(),
                    reason_text: String::new(),
                    scope: self.config.criteria_scope,
                });
                continue;
            }
            let context = match self.config.criteria_scope {
                CriteriaScope::PerQuery => query.text.as_str(),
                CriteriaScope::PerDataset => dataset_digest.ok_or_else(|| Error::Config {
                    msg: "per_dataset criteria need a dataset digest".into(),
                })?,
            };
            let (set, ex) =
                self.generate_criteria(context, annotator, self.config.criteria_scope)?;
            exchanges.extend(ex);
            criteria.push(set);
        }

        // Stage 3: the full member-by-passage evaluation grid.
        let mut matrix = ScoreMatrix::new(
            &query.id,
            team.clone(),
            candidates.iter().map(|c| c.passage_id.clone()).collect(),
        );
        let jobs: Vec<(usize, usize)> = (0..team.len())
            .flat_map(|m| (0..candidates.len()).map(move |p| (m, p)))
            .collect();
        let cell_results = run_parallel(jobs, self.config.workers, |(m, p)| {
            let result = self.evaluate_passage(
                query,
                &candidates[p].passage_id,
                &candidates[p].text,
                &team[m],
                &criteria[m].criteria_text,
                self.config.k,
            );
            (m, p, result)
        });
        for (m, p, result) in cell_results {
            let (member_score, flagged, ex) = result?;
            matrix.set(m, p, member_score.score, flagged);
            exchanges.extend(ex);
        }

        // Stage 4: ensemble and rank.
        let mut assessor_flags = vec![false; candidates.len()];
        let finals: Vec<f64> = match self.config.ensemble {
            EnsembleMethod::Sum => ensemble_sum(&matrix),
            EnsembleMethod::RankEnsemble => ensemble_rank(&matrix),
            EnsembleMethod::Assessor => {
                let jobs: Vec<usize> = (0..candidates.len()).collect();
                let outcomes = run_parallel(jobs, self.config.workers, |p| {
                    (p, self.ensemble_assessor(query, &candidates[p].text, &matrix, p))
                });
                let mut finals = vec![0.0; candidates.len()];
                for (p, outcome) in outcomes {
                    let (score, flagged, ex) = outcome?;
                    finals[p] = score;
                    assessor_flags[p] = flagged;
                    exchanges.extend(ex);
                }
                finals
            }
        };

        let tag = self.config.run_tag();
        let outcome = order_and_audit(query, &candidates, finals, tag, |p| AuditPassage {
            passage_id: candidates[p].passage_id.clone(),
            member_scores: matrix.passage_scores(p),
            flagged: (0..matrix.n_members())
                .map(|m| matrix.is_flagged(m, p))
                .chain(std::iter::once(assessor_flags[p]).filter(|_| {
                    self.config.ensemble == EnsembleMethod::Assessor
                }))
                .collect(),
            final_score: 0.0,
            final_rank: 0,
        });
        let mut outcome = outcome;
        outcome.audit.team = team;
        outcome.audit.criteria = criteria;
        outcome.audit.exchanges = exchanges;
        Ok(outcome)
    }

    /// Rerank one query with the direct-scoring baseline.
    pub fn direct_rerank_query(
        &self,
        query: &Query,
        candidates: &[Candidate],
    ) -> Result<RerankOutcome> {
        if candidates.is_empty() {
            return Err(Error::RerankFailed {
                query_id: query.id.clone(),
                msg: "no candidates to rerank".into(),
            });
        }
        let mut candidates: Vec<&Candidate> = candidates.iter().collect();
        candidates.sort_by_key(|c| c.first_stage_rank);

        let jobs: Vec<usize> = (0..candidates.len()).collect();
        let results = run_parallel(jobs, self.config.workers, |p| {
            (p, self.direct_score(query, &candidates[p].text, self.config.k))
        });
        let mut finals = vec![0.0; candidates.len()];
        let mut flags = vec![false; candidates.len()];
        let mut exchanges = Vec::new();
        for (p, result) in results {
            let (score, flagged, ex) = result?;
            finals[p] = score as f64;
            flags[p] = flagged;
            exchanges.extend(ex);
        }

        let tag = format!("direct-k{}", self.config.k);
        let mut outcome = order_and_audit(query, &candidates, finals, tag, |p| AuditPassage {
            passage_id: candidates[p].passage_id.clone(),
            member_scores: vec![],
            flagged: vec![flags[p]],
            final_score: 0.0,
            final_rank: 0,
        });
        outcome.audit.exchanges = exchanges;
        Ok(outcome)
    }
}

/// Sort passages by descending final score with ties keeping first-stage
/// order, assign ranks 1..m, and assemble the audit skeleton.
fn order_and_audit(
    query: &Query,
    candidates: &[&Candidate],
    finals: Vec<f64>,
    tag: String,
    passage_audit: impl Fn(usize) -> AuditPassage,
) -> RerankOutcome {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    // Candidates are in first-stage order, so a stable sort on the final
    // score alone implements the tie rule.
    order.sort_by(|&a, &b| finals[b].partial_cmp(&finals[a]).unwrap());

    let mut entries = Vec::with_capacity(candidates.len());
    let mut rank_of = vec![0u32; candidates.len()];
    for (i, &p) in order.iter().enumerate() {
        let rank = (i + 1) as u32;
        rank_of[p] = rank;
        entries.push(RunEntry::new(
            &query.id,
            &candidates[p].passage_id,
            rank,
            finals[p],
            &tag,
        ));
    }

    let passages = (0..candidates.len())
        .map(|p| {
            let mut audit = passage_audit(p);
            audit.final_score = finals[p];
            audit.final_rank = rank_of[p];
            audit
        })
        .collect();

    RerankOutcome {
        entries,
        audit: QueryAudit {
            query_id: query.id.clone(),
            query_text: query.text.clone(),
            tag,
            team: Vec::new(),
            criteria: Vec::new(),
            passages,
            exchanges: Vec::new(),
        },
    }
}

/// Run jobs on a bounded pool of scoped threads; results come back in
/// job order regardless of completion order.
pub(crate) fn run_parallel<J, R>(
    jobs: Vec<J>,
    workers: usize,
    f: impl Fn(J) -> R + Sync,
) -> Vec<R>
where
    J: Send,
    R: Send,
{
    let n = jobs.len();
    if n == 0 {
        return Vec::new();
    }
    let queue: Mutex<VecDeque<(usize, J)>> = Mutex::new(jobs.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<R>>> =
        Mutex::new((0..n).map(|_| None).collect());
    let threads = workers.max(1).min(n);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop_front();
                let Some((i, job)) = job else { break };
                let out = f(job);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job completes"))
        .collect()
}
