use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::corpus::Corpus;

/// Personas the generator role-plays to diversify questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    FundamentalAnalyst,
    MacroTrader,
    MachineLearningExpert,
    DataScientist,
    RetailTrader,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::FundamentalAnalyst,
        Role::MacroTrader,
        Role::MachineLearningExpert,
        Role::DataScientist,
        Role::RetailTrader,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Role::FundamentalAnalyst => "fundamental analyst",
            Role::MacroTrader => "macro trader",
            Role::MachineLearningExpert => "machine learning expert",
            Role::DataScientist => "data scientist",
            Role::RetailTrader => "retail trader",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Role::FundamentalAnalyst => "fundamental-analyst",
            Role::MacroTrader => "macro-trader",
            Role::MachineLearningExpert => "machine-learning-expert",
            Role::DataScientist => "data-scientist",
            Role::RetailTrader => "retail-trader",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Role {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace([' ', '_'], "-");
        Role::ALL
            .into_iter()
            .find(|r| r.slug() == norm)
            .ok_or_else(|| DatagenError::UnknownRole(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    pub question: String,
    pub relevant_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolePlayPrompt {
    pub role: Role,
    pub corpus_context: String,
    pub guidelines: String,
    pub few_shot: Vec<FewShotExample>,
    pub target_n: usize,
}

/// The instruction line fixing the number of relevant files.
pub fn target_instruction(n: usize) -> String {
    let noun = if n == 1 { "file" } else { "files" };
    format!("The question must require exactly {n} relevant {noun}.")
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Dictionary block: every file with its name, description and column
/// definitions, in corpus order.
fn render_dictionary(corpus: &Corpus) -> String {
    let mut out = String::new();
    for d in corpus.descriptors() {
        out.push_str(&format!("file_id: {}\n", d.file_id));
        out.push_str(&format!("name: {}\n", one_line(&d.name)));
        out.push_str(&format!("description: {}\n", one_line(&d.description)));
        out.push_str("columns:\n");
        for c in &d.columns {
            out.push_str(&format!("  - {}: {}\n", one_line(&c.name), one_line(&c.definition)));
        }
        out.push('\n');
    }
    out
}

pub fn build_prompt(
    corpus: &Corpus,
    role: Role,
    target_n: usize,
    few_shot: &[FewShotExample],
    guidelines: &str,
) -> Result<RolePlayPrompt, DatagenError> {
    if target_n == 0 {
        return Err(DatagenError::ZeroTarget);
    }
    for ex in few_shot {
        if let Some(bad) = ex.relevant_files.iter().find(|id| !corpus.contains(id)) {
            return Err(DatagenError::UnknownFewShotFile(bad.clone()));
        }
    }
    Ok(RolePlayPrompt {
        role,
        corpus_context: render_dictionary(corpus),
        guidelines: guidelines.trim().to_string(),
        few_shot: few_shot.to_vec(),
        target_n,
    })
}

impl RolePlayPrompt {
    /// Fixed section order: role, file dictionary, guidelines, examples, task.
    pub fn render(&self) -> String {
        let role = self.role.title();
        let mut out = format!(
            "You are a {role}. You write questions for a data analysis assistant that answers \
             them by loading the table files listed below.\n\n"
        );
        out.push_str("### File dictionary\n\n");
        out.push_str(&self.corpus_context);
        out.push_str("### Guidelines\n\n");
        if self.guidelines.is_empty() {
            out.push_str("(none)\n");
        } else {
            out.push_str(&self.guidelines);
            out.push('\n');
        }
        out.push_str("\n### Examples\n\n");
        if self.few_shot.is_empty() {
            out.push_str("(none)\n");
        }
        for ex in &self.few_shot {
            out.push_str(&serde_json::to_string(ex).expect("example serializes"));
            out.push('\n');
        }
        out.push_str("\n### Task\n\n");
        out.push_str(&format!("Write one new question that a {role} would ask.\n"));
        out.push_str(&target_instruction(self.target_n));
        out.push('\n');
        out.push_str(
            "Answer with a single JSON object of the form \
             {\"question\": \"...\", \"relevant_files\": [\"file_id\", ...]} and nothing else.\n",
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    pub(crate) fn corpus() -> Corpus {
        parse_corpus(concat!(
            r#"{"file_id":"spx","name":"S&P 500","description":"index levels","columns":[{"name":"close","definition":"closing level"}]}"#,
            "\n",
            r#"{"file_id":"spx_options","name":"SPX options","description":"option chain","columns":[{"name":"iv","definition":"implied vol"}]}"#,
            "\n",
            r#"{"file_id":"cpi","name":"CPI","description":"inflation","columns":[{"name":"yoy","definition":"year over year"}]}"#,
        ))
        .unwrap()
    }

    #[test]
    fn deterministic_and_complete() {
        let c = corpus();
        let few = vec![FewShotExample {
            question: "How did SPX react to CPI?".into(),
            relevant_files: vec!["spx".into(), "cpi".into()],
        }];
        let p = build_prompt(&c, Role::MacroTrader, 3, &few, "Be specific.").unwrap();
        let text = p.render();
        assert_eq!(text, build_prompt(&c, Role::MacroTrader, 3, &few, "Be specific.").unwrap().render());
        assert!(text.lines().any(|l| l == "The question must require exactly 3 relevant files."));
        assert!(text.starts_with("You are a macro trader."));
        for id in c.file_ids() {
            let line = format!("file_id: {id}");
            assert_eq!(text.lines().filter(|l| *l == line).count(), 1, "{id}");
        }
        let order = ["### File dictionary", "### Guidelines", "### Examples", "### Task"];
        let pos: Vec<usize> = order.iter().map(|h| text.find(h).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = corpus();
        assert_eq!(build_prompt(&c, Role::DataScientist, 0, &[], ""), Err(DatagenError::ZeroTarget));
        let few = vec![FewShotExample {
            question: "q".into(),
            relevant_files: vec!["nope".into()],
        }];
        assert_eq!(
            build_prompt(&c, Role::DataScientist, 1, &few, ""),
            Err(DatagenError::UnknownFewShotFile("nope".into()))
        );
        assert!(target_instruction(1).ends_with("exactly 1 relevant file."));
    }

    #[test]
    fn role_parsing() {
        for r in Role::ALL {
            assert_eq!(r.slug().parse::<Role>().unwrap(), r);
            assert_eq!(r.title().parse::<Role>().unwrap(), r);
        }
        assert!("astrologer".parse::<Role>().is_err());
    }
}
