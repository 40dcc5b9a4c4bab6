//! Golden label sequences from answer strings.

use super::corpus::Evidence;
use super::synonyms::SynonymDict;
use crate::decoder::{Label, LabelSequence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelOutcome {
    pub labels: LabelSequence,
    /// `(start, len)` of the labeled span.
    pub span: Option<(usize, usize)>,
    /// Positive evidence in which no answer form occurs.
    pub inconsistent: bool,
}

/// Every answer plus its dictionary synonyms, deduplicated, in first-seen order.
pub fn answer_forms(answers: &[Vec<String>], dict: &SynonymDict) -> Vec<Vec<String>> {
    let mut forms: Vec<Vec<String>> = Vec::new();
    let mut push = |f: &Vec<String>| {
        if !f.is_empty() && !forms.contains(f) {
            forms.push(f.clone());
        }
    };
    for a in answers {
        push(a);
    }
    for a in answers {
        for s in dict.synonyms_of(a) {
            push(s);
        }
    }
    forms
}

/// Earliest start at which any form occurs; the longest form wins at that start.
pub fn find_first_occurrence(tokens: &[String], forms: &[Vec<String>]) -> Option<(usize, usize)> {
    (0..tokens.len()).find_map(|start| {
        forms
            .iter()
            .filter(|f| tokens[start..].starts_with(f))
            .map(Vec::len)
            .max()
            .map(|len| (start, len))
    })
}

pub fn generate_labels(
    evidence: &Evidence,
    answers: &[Vec<String>],
    dict: &SynonymDict,
    o_split: bool,
) -> LabelOutcome {
    let n = evidence.tokens.len();
    let mut labels = vec![Label::O1; n];
    if !evidence.polarity.is_positive() {
        return LabelOutcome {
            labels,
            span: None,
            inconsistent: false,
        };
    }
    let forms = answer_forms(answers, dict);
    let Some((start, len)) = find_first_occurrence(&evidence.tokens, &forms) else {
        return LabelOutcome {
            labels,
            span: None,
            inconsistent: true,
        };
    };
    labels[start] = Label::B;
    for l in &mut labels[start + 1..start + len] {
        *l = Label::I;
    }
    if o_split {
        for l in &mut labels[start + len..] {
            *l = Label::O2;
        }
    }
    LabelOutcome {
        labels,
        span: Some((start, len)),
        inconsistent: false,
    }
}
