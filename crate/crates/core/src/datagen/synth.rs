//! Offline synthetic corpus and question set.
//!
//! Every file gets three distinctive pseudo-words that appear in its
//! descriptor and two alias pseudo-words that never appear in any
//! descriptor. A question names each of its relevant files twice; each
//! mention is a distinctive word, or with probability `noise` an alias.
//! Question filler words are disjoint from all descriptor vocabulary, so at
//! `noise = 0` the relevant files are exactly the files sharing a word with
//! the question. Aliases can only be resolved by a model that has learned
//! them from training questions.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DatagenError;
use crate::corpus::{Column, Corpus, QuerySample, TableDescriptor};

pub const DISTINCTIVE_PER_FILE: usize = 3;
pub const ALIASES_PER_FILE: usize = 2;
pub const MENTIONS_PER_FILE: usize = 2;

/// Words used in descriptors besides the distinctive ones.
pub const DESCRIPTOR_WORDS: &[&str] = &[
    "daily", "records", "market", "data", "table", "date", "observation", "open", "high", "low",
    "close", "volume", "level", "change", "ratio", "spread", "value", "series",
];

const COLUMN_WORDS: &[&str] = &["open", "high", "low", "close", "volume", "level", "change", "ratio", "spread"];

/// Question filler; disjoint from [`DESCRIPTOR_WORDS`].
pub const FILLER_WORDS: &[&str] = &[
    "how", "did", "does", "which", "what", "is", "the", "between", "compare", "relationship",
    "trend", "over", "last", "quarter", "year", "recent", "months", "show", "me", "and", "during",
    "analyze", "impact", "on",
];

const OPENERS: &[&str] = &[
    "how did",
    "what is the relationship between",
    "compare",
    "show me the trend in",
    "analyze the impact of",
];

const CLOSERS: &[&str] = &["over the last quarter", "during recent months", "over the last year", ""];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ve", "ru", "za", "te", "no", "pi", "su", "da", "ge", "bo", "fi", "xu", "wa",
    "qe", "ho", "ny", "ju",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_files: usize,
    pub num_questions: usize,
    pub max_n: usize,
    /// Probability that a file mention uses an alias instead of a word from
    /// the file's descriptor.
    pub noise: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(num_files: usize, num_questions: usize, max_n: usize, seed: u64) -> Self {
        Self {
            num_files,
            num_questions,
            max_n,
            noise: 0.0,
            seed,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }
}

/// Per-file vocabulary, exposed for tests and oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct FileWords {
    pub distinctive: Vec<String>,
    pub aliases: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
            .collect();
        if used.insert(w.clone()) {
            return w;
        }
    }
}

/// Builds the corpus, the per-file vocabulary, and the questions.
pub fn synth_generate_with_words(
    config: &SynthConfig,
) -> Result<(Corpus, Vec<QuerySample>, Vec<FileWords>), DatagenError> {
    let SynthConfig {
        num_files,
        num_questions,
        max_n,
        noise,
        seed,
    } = *config;
    if max_n == 0 || num_files < max_n {
        return Err(DatagenError::Degenerate(format!(
            "need num_files >= max_n >= 1 (num_files = {num_files}, max_n = {max_n})"
        )));
    }
    if num_questions == 0 {
        return Err(DatagenError::Degenerate("num_questions must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(DatagenError::Degenerate(format!("noise {noise} outside [0, 1]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<String> = DESCRIPTOR_WORDS
        .iter()
        .chain(FILLER_WORDS)
        .map(|w| w.to_string())
        .collect();

    let mut words = Vec::with_capacity(num_files);
    let mut descriptors = Vec::with_capacity(num_files);
    for i in 0..num_files {
        let distinctive: Vec<String> = (0..DISTINCTIVE_PER_FILE)
            .map(|_| pseudo_word(&mut rng, &mut used))
            .collect();
        let aliases: Vec<String> = (0..ALIASES_PER_FILE)
            .map(|_| pseudo_word(&mut rng, &mut used))
            .collect();
        let [d1, d2, d3] = [&distinctive[0], &distinctive[1], &distinctive[2]];
        let metric = *COLUMN_WORDS.choose(&mut rng).expect("non-empty");
        descriptors.push(TableDescriptor {
            file_id: format!("f{i:03}_{d1}"),
            name: format!("{d1} {d2} series"),
            description: format!("daily {d1} {d3} records with market data"),
            columns: vec![
                Column::new("date", "observation date"),
                Column::new(format!("{d2}_{metric}"), format!("{d3} {metric} value")),
                Column::new("volume", "daily volume"),
            ],
        });
        words.push(FileWords {
            distinctive,
            aliases,
        });
    }
    let corpus = Corpus::new(descriptors).expect("generated descriptors are valid");

    let ids: Vec<usize> = (0..num_files).collect();
    let mut samples = Vec::with_capacity(num_questions);
    for _ in 0..num_questions {
        let n = rng.random_range(1..=max_n);
        let mut chosen: Vec<usize> = ids.choose_multiple(&mut rng, n).copied().collect();
        chosen.shuffle(&mut rng);
        let mentions: Vec<String> = chosen
            .iter()
            .map(|&f| {
                let w = &words[f];
                let picks: Vec<&str> = (0..MENTIONS_PER_FILE)
                    .map(|_| {
                        let pool = if rng.random_bool(noise) {
                            &w.aliases
                        } else {
                            &w.distinctive
                        };
                        pool.choose(&mut rng).expect("non-empty").as_str()
                    })
                    .collect();
                picks.join(" ")
            })
            .collect();
        let opener = OPENERS.choose(&mut rng).expect("non-empty");
        let closer = CLOSERS.choose(&mut rng).expect("non-empty");
        let question = format!("{opener} {} {closer}", mentions.join(" and "))
            .trim()
            .to_string();
        samples.push(QuerySample::new(
            question,
            chosen.iter().map(|&f| corpus.descriptors()[f].file_id.clone()),
        ));
    }
    Ok((corpus, samples, words))
}

/// Seeded synthetic corpus and questions with `1 <= n <= max_n`.
pub fn synth_generate(config: &SynthConfig) -> Result<(Corpus, Vec<QuerySample>), DatagenError> {
    synth_generate_with_words(config).map(|(c, s, _)| (c, s))
}
