//! Generated toy corpus for learnability checks. Each question names a
//! question word and a topic; the answer is a 1–3 token span wrapped in the
//! cue pair belonging to that question word. Evidences may carry a
//! distractor span under another question word's cues, and retrieved
//! negatives carry a decoy span about a different topic. For some questions
//! every retrieved positive spells the answer with a `ville` suffix,
//! registered as a synonym of the golden answer.

use crate::data::{Evidence, Polarity, QaInstance, SynonymDict};
use crate::numeric::Rng;

const QUESTION_WORDS: [&str; 5] = ["who", "where", "when", "which", "how"];
const LEFT_CUES: [&str; 5] = ["by", "at", "on", "of", "via"];
const RIGHT_CUES: [&str; 5] = ["said", "lies", "began", "won", "works"];
const TOPICS: [&str; 10] = [
    "river", "castle", "comet", "violin", "harbor", "glacier", "library", "orchard", "volcano", "lantern",
];
const ENTITIES: [&str; 20] = [
    "alba", "bram", "cora", "dane", "elio", "fern", "gus", "hana", "ivo", "juno", "kai", "lena", "milo",
    "nora", "otto", "pia", "quin", "rosa", "sven", "tess",
];
const FILLERS: [&str; 10] = ["the", "a", "and", "then", "also", "very", "old", "new", "near", "far"];
pub const VARIANT_SUFFIX: &str = "ville";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub train_questions: usize,
    pub valid_questions: usize,
    pub test_questions: usize,
    pub retrieved_per_train: usize,
    pub retrieved_per_test: usize,
    /// Probability that a retrieved evidence is negative.
    pub negative_fraction: f64,
    /// Probability that a question's retrieved positives use the suffixed
    /// spelling.
    pub variant_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_questions: 500,
            valid_questions: 100,
            test_questions: 100,
            retrieved_per_train: 3,
            retrieved_per_test: 5,
            negative_fraction: 0.3,
            variant_fraction: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub train: Vec<QaInstance>,
    pub valid: Vec<QaInstance>,
    pub test: Vec<QaInstance>,
    pub dict: SynonymDict,
}

/// Every token the generator can emit.
pub fn synthetic_vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&str> = Vec::new();
    for group in [&QUESTION_WORDS[..], &LEFT_CUES, &RIGHT_CUES, &TOPICS, &ENTITIES, &FILLERS] {
        v.extend_from_slice(group);
    }
    v.push(VARIANT_SUFFIX);
    v.push("?");
    v
}

fn s(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|t| t.to_string()).collect()
}

fn pick<'a>(rng: &mut Rng, items: &[&'a str]) -> &'a str {
    items[rng.index(items.len())]
}

fn other_than(rng: &mut Rng, n: usize, not: usize) -> usize {
    let k = rng.index(n - 1);
    if k >= not {
        k + 1
    } else {
        k
    }
}

fn entity_span(rng: &mut Rng) -> Vec<String> {
    let len = 1 + rng.index(3);
    (0..len).map(|_| pick(rng, &ENTITIES).to_string()).collect()
}

/// An entity span of at most `max_len` tokens that does not contain `answer`.
fn span_avoiding(rng: &mut Rng, answer: &[String], max_len: usize) -> Vec<String> {
    loop {
        let mut span = entity_span(rng);
        span.truncate(max_len);
        if !span.windows(answer.len()).any(|w| w == answer) {
            return span;
        }
    }
}

fn fillers(rng: &mut Rng, max: usize) -> Vec<String> {
    let n = rng.index(max + 1);
    (0..n).map(|_| pick(rng, &FILLERS).to_string()).collect()
}

fn cued(kind: usize, span: &[String]) -> Vec<String> {
    let mut seg = vec![LEFT_CUES[kind].to_string()];
    seg.extend_from_slice(span);
    seg.push(RIGHT_CUES[kind].to_string());
    seg
}

/// Shuffles the segments and interleaves filler runs between them.
fn assemble(rng: &mut Rng, mut segments: Vec<Vec<String>>) -> Vec<String> {
    rng.shuffle(&mut segments);
    let mut out = fillers(rng, 2);
    for seg in segments {
        out.extend(seg);
        out.extend(fillers(rng, 2));
    }
    out
}

struct Question {
    kind: usize,
    topic: usize,
    answer: Vec<String>,
}

impl Question {
    fn variant(&self) -> Vec<String> {
        let mut v = self.answer.clone();
        v.push(VARIANT_SUFFIX.to_string());
        v
    }

    fn distractor(&self, rng: &mut Rng) -> Option<Vec<String>> {
        rng.bernoulli(0.5).then(|| {
            let j = other_than(rng, QUESTION_WORDS.len(), self.kind);
            cued(j, &span_avoiding(rng, &self.answer, 2))
        })
    }

    fn positive(&self, rng: &mut Rng, variant: bool) -> Vec<String> {
        let answer = if variant { self.variant() } else { self.answer.clone() };
        let mut segs = vec![vec![TOPICS[self.topic].to_string()], cued(self.kind, &answer)];
        segs.extend(self.distractor(rng));
        assemble(rng, segs)
    }

    fn annotated_negative(&self, rng: &mut Rng) -> Vec<String> {
        let mut segs = vec![vec![TOPICS[self.topic].to_string()], vec![pick(rng, &FILLERS).to_string()]];
        segs.extend(self.distractor(rng));
        assemble(rng, segs)
    }

    fn retrieved_negative(&self, rng: &mut Rng) -> Vec<String> {
        let other = other_than(rng, TOPICS.len(), self.topic);
        let decoy = span_avoiding(rng, &self.answer, 3);
        let mut segs = vec![vec![TOPICS[other].to_string()], cued(self.kind, &decoy)];
        segs.extend(self.distractor(rng));
        assemble(rng, segs)
    }
}

fn make_split(
    prefix: &str,
    n: usize,
    retrieved: usize,
    annotated_negative: bool,
    cfg: &SyntheticConfig,
    rng: &mut Rng,
    dict: &mut SynonymDict,
) -> Vec<QaInstance> {
    (0..n)
        .map(|i| {
            let q = Question {
                kind: rng.index(QUESTION_WORDS.len()),
                topic: rng.index(TOPICS.len()),
                answer: entity_span(rng),
            };
            dict.add(q.answer.clone(), q.variant());
            let mut question = s(&[QUESTION_WORDS[q.kind], TOPICS[q.topic]]);
            question.extend(fillers(rng, 2));
            question.push("?".to_string());
            let variant = rng.bernoulli(cfg.variant_fraction);

            let mut evidences = vec![
                Evidence::new(q.positive(rng, false), Polarity::Positive),
                Evidence::new(q.positive(rng, false), Polarity::Positive),
            ];
            if annotated_negative {
                evidences.push(Evidence::new(q.annotated_negative(rng), Polarity::AnnotatedNegative));
            }
            for _ in 0..retrieved {
                let e = if rng.bernoulli(cfg.negative_fraction) {
                    Evidence::new(q.retrieved_negative(rng), Polarity::RetrievedNegative)
                } else {
                    Evidence {
                        tokens: q.positive(rng, variant),
                        polarity: Polarity::Positive,
                        retrieved: Some(true),
                    }
                };
                evidences.push(e);
            }
            QaInstance {
                id: format!("{prefix}{i:04}"),
                question,
                answers: vec![q.answer],
                evidences,
            }
        })
        .collect()
}

/// Train, validation and test splits plus the answer synonym dictionary.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> SyntheticTask {
    let base = Rng::new(seed);
    let mut dict = SynonymDict::new();
    let train = make_split("train", cfg.train_questions, cfg.retrieved_per_train, true, cfg, &mut base.split(0), &mut dict);
    let valid = make_split("valid", cfg.valid_questions, cfg.retrieved_per_test, false, cfg, &mut base.split(1), &mut dict);
    let test = make_split("test", cfg.test_questions, cfg.retrieved_per_test, false, cfg, &mut base.split(2), &mut dict);
    SyntheticTask { train, valid, test, dict }
}
