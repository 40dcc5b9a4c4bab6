//! Character-level view of a corpus: every token becomes one token per char.

use super::corpus::{Evidence, QaInstance};

pub(crate) fn chars_of(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .flat_map(|t| t.chars().map(String::from))
        .collect()
}

pub fn to_char_mode(instance: &QaInstance) -> QaInstance {
    QaInstance {
        id: instance.id.clone(),
        question: chars_of(&instance.question),
        answers: instance.answers.iter().map(|a| chars_of(a)).collect(),
        evidences: instance
            .evidences
            .iter()
            .map(|e| Evidence {
                tokens: chars_of(&e.tokens),
                polarity: e.polarity,
                retrieved: e.retrieved,
            })
            .collect(),
    }
}
