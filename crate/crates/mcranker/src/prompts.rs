//! Prompt templates for the five pipeline stages plus the direct-scoring
//! baseline. The templates are the method: they are kept in plain-text
//! files with `{slot}` markers and can be overridden from a directory at
//! runtime for prompt experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Default cap on passage length, in whitespace tokens, applied to the
/// `{passage}` slot before substitution.
pub const DEFAULT_TRUNCATION: usize = 1024;

/// The six template kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateStage {
    Recruit,
    CriteriaNlp,
    CriteriaRc,
    Evaluate,
    Assess,
    Direct,
}

impl TemplateStage {
    pub fn name(&self) -> &'static str {
        match self {
            TemplateStage::Recruit => "recruit",
            TemplateStage::CriteriaNlp => "criteria_nlp",
            TemplateStage::CriteriaRc => "criteria_rc",
            TemplateStage::Evaluate => "evaluate",
            TemplateStage::Assess => "assess",
            TemplateStage::Direct => "direct",
        }
    }
}

/// A template plus the slot names found in it.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    name: String,
    text: String,
    slots: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let slots = find_slots(&text);
        Self {
            name: name.into(),
            text,
            slots,
        }
    }

    pub fn slots(&self) -> &BTreeSet<String> {
        &self.slots
    }
}

fn find_slots(text: &str) -> BTreeSet<String> {
    let mut slots = BTreeSet::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = text[i + 1..].find('}') {
                let name = &text[i + 1..i + 1 + end];
                if !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c == '_')
                {
                    slots.insert(name.to_string());
                    i += end + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    slots
}

/// One expert line set for the assessor prompt.
#[derive(Debug, Clone)]
pub struct ExpertAssessment {
    pub identity: String,
    /// The fixed scientist renders with the "expert in language" phrasing.
    pub language_expert: bool,
    pub score: i64,
}

/// Loaded templates plus the passage-truncation setting.
#[derive(Debug, Clone)]
pub struct PromptKit {
    templates: BTreeMap<String, PromptTemplate>,
    truncation: usize,
}

const TEMPLATE_FILES: [(&str, &str); 8] = [
    ("recruit", include_str!("../templates/recruit.txt")),
    ("criteria_nlp", include_str!("../templates/criteria_nlp.txt")),
    ("criteria_rc", include_str!("../templates/criteria_rc.txt")),
    ("evaluate", include_str!("../templates/evaluate.txt")),
    ("assess", include_str!("../templates/assess.txt")),
    ("assess_expert", include_str!("../templates/assess_expert.txt")),
    (
        "assess_expert_language",
        include_str!("../templates/assess_expert_language.txt"),
    ),
    ("direct", include_str!("../templates/direct.txt")),
];

impl Default for PromptKit {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptKit {
    /// The templates compiled into the binary.
    pub fn builtin() -> Self {
        let templates = TEMPLATE_FILES
            .iter()
            .map(|(name, text)| {
                (
                    name.to_string(),
                    PromptTemplate::new(*name, text.trim_end_matches('\n')),
                )
            })
            .collect();
        Self {
            templates,
            truncation: DEFAULT_TRUNCATION,
        }
    }

    /// Load every template from `<dir>/<name>.txt`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut templates = BTreeMap::new();
        for (name, _) in TEMPLATE_FILES {
            let path = dir.join(format!("{name}.txt"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            templates.insert(
                name.to_string(),
                PromptTemplate::new(name, text.trim_end_matches('\n')),
            );
        }
        Ok(Self {
            templates,
            truncation: DEFAULT_TRUNCATION,
        })
    }

    pub fn with_truncation(mut self, tokens: usize) -> Self {
        self.truncation = tokens;
        self
    }

    pub fn template(&self, stage: TemplateStage) -> &PromptTemplate {
        &self.templates[stage.name()]
    }

    fn named(&self, name: &str) -> &PromptTemplate {
        &self.templates[name]
    }

    /// Pure slot substitution. Bindings must cover exactly the template's
    /// slots; the `passage` binding is truncated first.
    pub fn render(
        &self,
        template: &PromptTemplate,
        bindings: &[(&str, &str)],
    ) -> Result<String> {
        for (name, _) in bindings {
            if !template.slots.contains(*name) {
                return Err(Error::ExtraBinding {
                    stage: template.name.clone(),
                    slot: name.to_string(),
                });
            }
        }
        for slot in &template.slots {
            if !bindings.iter().any(|(name, _)| name == slot) {
                return Err(Error::MissingSlot {
                    stage: template.name.clone(),
                    slot: slot.clone(),
                });
            }
        }

        let mut values: BTreeMap<&str, String> = BTreeMap::new();
        for (name, value) in bindings {
            let value = if *name == "passage" {
                truncate_tokens(value, self.truncation)
            } else {
                (*value).to_string()
            };
            values.insert(name, value);
        }
        Ok(substitute(&template.text, &values))
    }

    pub fn render_recruit(&self, query: &str, passage: &str, number: usize) -> Result<String> {
        let n = number.to_string();
        self.render(
            self.template(TemplateStage::Recruit),
            &[("number", &n), ("query", query), ("passage", passage)],
        )
    }

    pub fn render_criteria_nlp(&self, query: &str) -> Result<String> {
        self.render(self.template(TemplateStage::CriteriaNlp), &[("query", query)])
    }

    pub fn render_criteria_rc(&self, identity: &str, query: &str) -> Result<String> {
        self.render(
            self.template(TemplateStage::CriteriaRc),
            &[("identity", identity), ("query", query)],
        )
    }

    pub fn render_evaluate(
        &self,
        identity: &str,
        criteria: &str,
        query: &str,
        passage: &str,
        k: u32,
    ) -> Result<String> {
        let k = k.to_string();
        self.render(
            self.template(TemplateStage::Evaluate),
            &[
                ("identity", identity),
                ("criteria", criteria),
                ("query", query),
                ("passage", passage),
                ("k", &k),
            ],
        )
    }

    pub fn render_direct(&self, query: &str, passage: &str, k: u32) -> Result<String> {
        let k = k.to_string();
        self.render(
            self.template(TemplateStage::Direct),
            &[("query", query), ("passage", passage), ("k", &k)],
        )
    }

    /// Build the assessor prompt for an arbitrary team size: one expert
    /// block per member, numbered 1..n in the given order, with the
    /// language-expert phrasing for the fixed scientist.
    pub fn render_assessor(
        &self,
        query: &str,
        passage: &str,
        members: &[ExpertAssessment],
    ) -> Result<String> {
        if members.is_empty() {
            return Err(Error::EmptyAssessorInput);
        }
        let mut blocks = Vec::with_capacity(members.len());
        for (i, member) in members.iter().enumerate() {
            let index = (i + 1).to_string();
            let score = member.score.to_string();
            let block = if member.language_expert {
                self.render(
                    self.named("assess_expert_language"),
                    &[("index", &index), ("score", &score)],
                )?
            } else {
                self.render(
                    self.named("assess_expert"),
                    &[
                        ("index", &index),
                        ("identity", &member.identity),
                        ("score", &score),
                    ],
                )?
            };
            blocks.push(block);
        }
        let count = count_word(members.len());
        self.render(
            self.template(TemplateStage::Assess),
            &[
                ("query", query),
                ("passage", passage),
                ("count", &count),
                ("experts", &blocks.join("\n\n")),
            ],
        )
    }
}

fn substitute(text: &str, values: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let (before, after) = rest.split_at(open);
        out.push_str(before);
        if let Some(close) = after.find('}') {
            let name = &after[1..close];
            if let Some(value) = values.get(name) {
                out.push_str(value);
                rest = &after[close + 1..];
                continue;
            }
        }
        out.push('{');
        rest = &after[1..];
    }
    out.push_str(rest);
    out
}

/// Cap text at `limit` whitespace tokens, appending a truncation marker.
pub fn truncate_tokens(text: &str, limit: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= limit {
        return text.to_string();
    }
    let mut out = tokens[..limit].join(" ");
    out.push_str(" …");
    out
}

/// English count word for small team sizes, digits beyond twenty.
fn count_word(n: usize) -> String {
    const WORDS: [&str; 21] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
        "eighteen", "nineteen", "twenty",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kit() -> PromptKit {
        PromptKit::builtin()
    }

    #[test]
    fn recruit_carries_the_requested_count() {
        let prompt = kit().render_recruit("q", "p", 2).unwrap();
        assert!(prompt.contains("name up to 2 identities"), "{prompt}");
        assert!(prompt.contains("Given query:<<<q>>>"));
        assert!(prompt.contains("Given passage:<<<p>>>"));
    }

    #[test]
    fn missing_binding_names_the_slot() {
        let k = kit();
        let err = k
            .render(
                k.template(TemplateStage::Evaluate),
                &[("identity", "x"), ("query", "q"), ("passage", "p"), ("k", "10")],
            )
            .unwrap_err();
        match err {
            Error::MissingSlot { slot, .. } => assert_eq!(slot, "criteria"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn extra_binding_is_rejected() {
        let k = kit();
        let err = k
            .render(
                k.template(TemplateStage::CriteriaNlp),
                &[("query", "q"), ("identity", "x")],
            )
            .unwrap_err();
        assert!(matches!(err, Error::ExtraBinding { .. }));
    }

    #[test]
    fn long_passage_is_truncated_with_marker() {
        let k = kit().with_truncation(1024);
        let passage = vec!["tok"; 2000].join(" ");
        let prompt = k.render_direct("q", &passage, 10).unwrap();
        let start = prompt.find("passage: <<<").unwrap() + "passage: <<<".len();
        let end = prompt[start..].find(">>>").unwrap() + start;
        let inner = &prompt[start..end];
        let tokens: Vec<&str> = inner.split_whitespace().collect();
        assert_eq!(tokens.len(), 1025);
        assert!(tokens[..1024].iter().all(|t| *t == "tok"));
        assert_eq!(*tokens.last().unwrap(), "…");
    }

    #[test]
    fn short_passage_is_left_verbatim() {
        let k = kit();
        let prompt = k.render_direct("q", "two tokens", 10).unwrap();
        assert!(prompt.contains("passage: <<<two tokens>>>"));
        assert!(!prompt.contains('…'));
    }

    #[test]
    fn evaluate_scale_follows_k() {
        let prompt = kit()
            .render_evaluate("teacher", "c", "q", "p", 20)
            .unwrap();
        assert!(prompt.contains("an integer score from 0 to 20"));
    }

    #[test]
    fn direct_scale_follows_k() {
        let prompt = kit().render_direct("q", "p", 20).unwrap();
        assert!(prompt.contains("From a scale of 0 to 20"));
        assert!(prompt.contains("one final integer score from 0 to 20"));
    }

    #[test]
    fn assessor_numbers_experts_and_labels_the_scientist() {
        let members = vec![
            ExpertAssessment {
                identity: "health professional".into(),
                language_expert: false,
                score: 7,
            },
            ExpertAssessment {
                identity: "concerned citizen".into(),
                language_expert: false,
                score: 8,
            },
            ExpertAssessment {
                identity: "NLP scientist".into(),
                language_expert: true,
                score: 9,
            },
        ];
        let prompt = kit().render_assessor("q", "p", &members).unwrap();
        assert!(prompt.contains("Assessments from expert 1 who is an expert in <<<health professional>>>"));
        assert!(prompt.contains("Relevance Score 2 (From 0 to 10): <<<8>>>"));
        assert!(prompt.contains("Assessments from expert 3 who is an expert in language"));
        assert!(prompt.contains("the three experts' scores"));
        assert!(prompt.contains("Assessment of the three experts:"));
    }

    #[test]
    fn assessor_handles_two_members() {
        let members = vec![
            ExpertAssessment {
                identity: "teacher".into(),
                language_expert: false,
                score: 2,
            },
            ExpertAssessment {
                identity: "NLP scientist".into(),
                language_expert: true,
                score: 5,
            },
        ];
        let prompt = kit().render_assessor("q", "p", &members).unwrap();
        assert!(prompt.contains("expert 1 who is an expert in <<<teacher>>>"));
        assert!(prompt.contains("expert 2 who is an expert in language"));
        assert!(!prompt.contains("expert 3"));
        assert!(prompt.contains("the two experts' scores"));
    }

    #[test]
    fn assessor_keeps_duplicate_identities() {
        let members = vec![
            ExpertAssessment {
                identity: "nurse".into(),
                language_expert: false,
                score: 1,
            },
            ExpertAssessment {
                identity: "nurse".into(),
                language_expert: false,
                score: 2,
            },
        ];
        let prompt = kit().render_assessor("q", "p", &members).unwrap();
        assert_eq!(prompt.matches("<<<nurse>>>").count(), 2);
    }

    #[test]
    fn assessor_rejects_empty_member_list() {
        let err = kit().render_assessor("q", "p", &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyAssessorInput));
    }

    #[test]
    fn from_dir_round_trips_builtin_templates() {
        let dir = tempfile::tempdir().unwrap();
        for (name, text) in TEMPLATE_FILES {
            std::fs::write(dir.path().join(format!("{name}.txt")), text).unwrap();
        }
        let loaded = PromptKit::from_dir(dir.path()).unwrap();
        let a = kit().render_direct("q", "p", 10).unwrap();
        let b = loaded.render_direct("q", "p", 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rendering_is_pure() {
        let k = kit();
        let a = k.render_criteria_rc("nurse", "masks").unwrap();
        let b = k.render_criteria_rc("nurse", "masks").unwrap();
        assert_eq!(a, b);
    }
}
