use std::collections::BTreeSet;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::client::{LlmClient, LlmError};
use super::prompt::{build_prompt, FewShotExample, Role};
use super::DatagenError;
use crate::corpus::{Corpus, QuerySample};

/// Retries after a failed first attempt, per requested question.
pub const MAX_RETRIES: usize = 3;

/// `count` questions from `role`, each needing exactly `target_n` files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub role: Role,
    pub target_n: usize,
    pub count: usize,
}

impl std::str::FromStr for PlanEntry {
    type Err = DatagenError;

    /// `role:target_n:count`, e.g. `macro-trader:2:10`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatagenError::BadPlan(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let [role, n, count] = parts.as_slice() else {
            return Err(bad());
        };
        let entry = PlanEntry {
            role: role.parse()?,
            target_n: n.trim().parse().map_err(|_| bad())?,
            count: count.trim().parse().map_err(|_| bad())?,
        };
        if entry.target_n == 0 || entry.count == 0 {
            return Err(bad());
        }
        Ok(entry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub guidelines: String,
    /// Pool of examples; up to `few_shot_per_prompt` are sampled per prompt.
    pub few_shot: Vec<FewShotExample>,
    pub few_shot_per_prompt: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            guidelines: String::new(),
            few_shot: Vec::new(),
            few_shot_per_prompt: 3,
            seed: 0,
        }
    }
}

/// One failed attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub plan_index: usize,
    pub sequence: usize,
    pub attempt: usize,
    pub reason: String,
    pub completion: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationOutput {
    pub samples: Vec<QuerySample>,
    pub rejections: Vec<Rejection>,
}

/// Generation stopped on a transport failure that persisted through every
/// retry; `partial` holds everything produced up to that point.
#[derive(Debug)]
pub struct GenerationAborted {
    pub partial: GenerationOutput,
    pub error: GenerationErrorKind,
}

#[derive(Debug)]
pub enum GenerationErrorKind {
    Client(LlmError),
    Prompt(DatagenError),
}

impl fmt::Display for GenerationAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.error {
            GenerationErrorKind::Client(e) => write!(f, "generation aborted: {e}"),
            GenerationErrorKind::Prompt(e) => write!(f, "generation aborted: {e}"),
        }?;
        write!(f, " ({} samples kept)", self.partial.samples.len())
    }
}

impl std::error::Error for GenerationAborted {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Completion {
    question: String,
    relevant_files: Vec<String>,
}

/// Strictly parses one completion and validates it against the corpus and
/// the requested file count.
pub fn parse_completion(text: &str, corpus: &Corpus, target_n: usize) -> Result<QuerySample, String> {
    let c: Completion = serde_json::from_str(text.trim()).map_err(|e| format!("parse: {e}"))?;
    if c.question.trim().is_empty() {
        return Err("empty question".into());
    }
    let mut files = BTreeSet::new();
    for id in c.relevant_files {
        if !corpus.contains(&id) {
            return Err(format!("unknown file_id '{id}'"));
        }
        if !files.insert(id.clone()) {
            return Err(format!("duplicate file_id '{id}'"));
        }
    }
    if files.len() != target_n {
        return Err(format!("expected {target_n} files, got {}", files.len()));
    }
    Ok(QuerySample {
        question: c.question.trim().to_string(),
        relevant_files: files,
    })
}

/// Runs the plan against `client`.
///
/// Each requested question gets one attempt plus up to [`MAX_RETRIES`]
/// retries. Invalid completions are logged and retried, then skipped.
/// If the last attempt failed in transport, generation aborts with the
/// partial output. Samples come back in plan order.
pub fn generate_dataset(
    corpus: &Corpus,
    client: &dyn LlmClient,
    plan: &[PlanEntry],
    config: &GenerationConfig,
) -> Result<GenerationOutput, Box<GenerationAborted>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = GenerationOutput::default();
    for (plan_index, entry) in plan.iter().enumerate() {
        for sequence in 0..entry.count {
            let mut last_transport = None;
            for attempt in 0..=MAX_RETRIES {
                let shots: Vec<FewShotExample> = config
                    .few_shot
                    .choose_multiple(&mut rng, config.few_shot_per_prompt)
                    .cloned()
                    .collect();
                let prompt = match build_prompt(corpus, entry.role, entry.target_n, &shots, &config.guidelines) {
                    Ok(p) => p.render(),
                    Err(e) => {
                        return Err(Box::new(GenerationAborted {
                            partial: out,
                            error: GenerationErrorKind::Prompt(e),
                        }))
                    }
                };
                let reject = |reason: String, completion: Option<String>| Rejection {
                    plan_index,
                    sequence,
                    attempt,
                    reason,
                    completion,
                };
                match client.complete(&prompt) {
                    Err(e) => {
                        out.rejections.push(reject(e.to_string(), None));
                        last_transport = Some(e);
                    }
                    Ok(text) => {
                        last_transport = None;
                        match parse_completion(&text, corpus, entry.target_n) {
                            Ok(sample) => {
                                out.samples.push(sample);
                                break;
                            }
                            Err(reason) => out.rejections.push(reject(reason, Some(text))),
                        }
                    }
                }
            }
            if let Some(e) = last_transport {
                return Err(Box::new(GenerationAborted {
                    partial: out,
                    error: GenerationErrorKind::Client(e),
                }));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;
    use crate::datagen::ScriptedClient;

    fn corpus() -> Corpus {
        parse_corpus(concat!(
            r#"{"file_id":"a","name":"A","description":"a","columns":[{"name":"x","definition":"x"}]}"#,
            "\n",
            r#"{"file_id":"b","name":"B","description":"b","columns":[{"name":"x","definition":"x"}]}"#,
        ))
        .unwrap()
    }

    const VALID: &str = r#"{"question":"How do A and B co-move?","relevant_files":["a","b"]}"#;
    const UNKNOWN: &str = r#"{"question":"q","relevant_files":["a","zzz"]}"#;

    fn plan(count: usize) -> Vec<PlanEntry> {
        vec![PlanEntry {
            role: Role::RetailTrader,
            target_n: 2,
            count,
        }]
    }

    #[test]
    fn fixed_valid_completion() {
        let client = ScriptedClient::new(std::iter::repeat_n(Ok(VALID.to_string()), 4));
        let out = generate_dataset(&corpus(), &client, &plan(4), &GenerationConfig::default()).unwrap();
        assert_eq!(out.samples.len(), 4);
        assert!(out.rejections.is_empty());
    }

    #[test]
    fn unknown_id_is_logged() {
        let client = ScriptedClient::new([UNKNOWN, VALID].map(|s| Ok(s.to_string())));
        let out = generate_dataset(&corpus(), &client, &plan(1), &GenerationConfig::default()).unwrap();
        assert_eq!(out.samples.len(), 1);
        assert_eq!(out.rejections.len(), 1);
        assert!(out.rejections[0].reason.contains("zzz"));
        assert_eq!(out.rejections[0].attempt, 0);
    }

    #[test]
    fn gives_up_after_retries() {
        let client = ScriptedClient::new(std::iter::repeat_n(Ok("not json".to_string()), 5));
        let out = generate_dataset(&corpus(), &client, &plan(1), &GenerationConfig::default()).unwrap();
        assert!(out.samples.is_empty());
        assert_eq!(out.rejections.len(), 1 + MAX_RETRIES);
        assert_eq!(client.remaining(), 1);
    }

    #[test]
    fn persistent_transport_failure_aborts_with_partial() {
        let client = ScriptedClient::new([Ok(VALID.to_string())]);
        let err = generate_dataset(&corpus(), &client, &plan(3), &GenerationConfig::default()).unwrap_err();
        assert_eq!(err.partial.samples.len(), 1);
        assert_eq!(err.partial.rejections.len(), 1 + MAX_RETRIES);
        assert!(matches!(err.error, GenerationErrorKind::Client(_)));
    }

    #[test]
    fn completion_validation() {
        let c = corpus();
        assert!(parse_completion(VALID, &c, 2).is_ok());
        assert!(parse_completion(VALID, &c, 1).unwrap_err().contains("expected 1"));
        let dup = r#"{"question":"q","relevant_files":["a","a"]}"#;
        assert!(parse_completion(dup, &c, 2).unwrap_err().contains("duplicate"));
        let extra = r#"{"question":"q","relevant_files":["a"],"why":"x"}"#;
        assert!(parse_completion(extra, &c, 1).is_err());
        let blank = r#"{"question":"  ","relevant_files":["a"]}"#;
        assert!(parse_completion(blank, &c, 1).is_err());
    }

    #[test]
    fn plan_entry_parsing() {
        let e: PlanEntry = "macro-trader:2:10".parse().unwrap();
        assert_eq!(e, PlanEntry { role: Role::MacroTrader, target_n: 2, count: 10 });
        assert!("macro-trader:0:10".parse::<PlanEntry>().is_err());
        assert!("macro-trader:2".parse::<PlanEntry>().is_err());
        assert!("nobody:2:1".parse::<PlanEntry>().is_err());
    }
}
