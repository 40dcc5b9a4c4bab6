use std::collections::HashSet;

use crate::evidence::FeatureIds;

/// Binary q-e.comm and e-e.comm indicators for every evidence token.
pub fn compute_common_word_features(
    question: &[String],
    evidence: &[String],
    other_evidence: Option<&[String]>,
) -> FeatureIds {
    let q: HashSet<&str> = question.iter().map(String::as_str).collect();
    let other: HashSet<&str> = other_evidence
        .unwrap_or_default()
        .iter()
        .map(String::as_str)
        .collect();
    FeatureIds {
        qe: evidence.iter().map(|t| u8::from(q.contains(t.as_str()))).collect(),
        ee: evidence.iter().map(|t| u8::from(other.contains(t.as_str()))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::{einstein, toks};

    #[test]
    fn verbatim_question_is_all_ones() {
        let q = toks("a b c");
        let f = compute_common_word_features(&q, &q, None);
        assert_eq!(f.qe, vec![1, 1, 1]);
        assert_eq!(f.ee, vec![0, 0, 0]);
    }

    #[test]
    fn disjoint_is_all_zeros() {
        let f = compute_common_word_features(&toks("a b"), &toks("c d"), Some(&toks("x")));
        assert_eq!(f.qe, vec![0, 0]);
        assert_eq!(f.ee, vec![0, 0]);
    }

    #[test]
    fn einstein_overlap() {
        let inst = einstein();
        let ev = &inst.evidences[0].tokens;
        let f = compute_common_word_features(&inst.question, ev, None);
        // Einstein married his first wife Mileva Marić in 1903
        assert_eq!(f.qe, vec![1, 0, 0, 1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn companion_overlap() {
        let f = compute_common_word_features(&toks("q"), &toks("a b a"), Some(&toks("a z")));
        assert_eq!(f.ee, vec![1, 0, 1]);
    }

    #[test]
    fn depends_on_question_set_only() {
        let e = toks("a b c d");
        let f1 = compute_common_word_features(&toks("d a"), &e, None);
        let f2 = compute_common_word_features(&toks("a a d a d"), &e, None);
        assert_eq!(f1, f2);
    }
}
