//! Answer extraction, voting, matching and P/R/F1 under the annotated and
//! retrieved-evidence settings.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::data::{compute_common_word_features, sample_other, QaInstance, SynonymDict, Vocab};
use crate::decoder::{Label, LabelSequence};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric::Rng;
use crate::parallel::parallel_map;

/// A contiguous answer span `start..end` inside evidence `evidence`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerSpan {
    pub tokens: Vec<String>,
    pub evidence: usize,
    pub start: usize,
    pub end: usize,
}

/// The span opened by the first `B` and continued by the `I`s right after
/// it. Stray `I`s and anything after the span are ignored.
pub fn extract_answer(labels: &[Label], tokens: &[String]) -> Option<AnswerSpan> {
    let n = labels.len().min(tokens.len());
    let start = labels[..n].iter().position(|l| *l == Label::B)?;
    let end = start + 1 + labels[start + 1..n].iter().take_while(|l| **l == Label::I).count();
    Some(AnswerSpan {
        tokens: tokens[start..end].to_vec(),
        evidence: 0,
        start,
        end,
    })
}

/// Most frequent answer; ties go to the answer that appeared first.
pub fn vote_answers(spans: &[Option<AnswerSpan>]) -> Option<Vec<String>> {
    let mut counts: HashMap<&[String], (usize, usize)> = HashMap::new();
    for (pos, span) in spans.iter().enumerate() {
        if let Some(s) = span {
            counts.entry(&s.tokens).or_insert((0, pos)).0 += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(tokens, _)| tokens.to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatchMode {
    Strict,
    Fuzzy,
}

impl MatchMode {
    pub const ALL: [MatchMode; 2] = [MatchMode::Strict, MatchMode::Fuzzy];

    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Strict => "strict",
            MatchMode::Fuzzy => "fuzzy",
        }
    }
}

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(MatchMode::Strict),
            "fuzzy" => Ok(MatchMode::Fuzzy),
            other => Err(Error::Config(format!("match mode must be strict or fuzzy, got {other:?}"))),
        }
    }
}

/// Strict: equal to some golden answer. Fuzzy: strict, or a dictionary
/// synonym of some golden answer.
pub fn match_answer(produced: Option<&[String]>, goldens: &[Vec<String>], dict: &SynonymDict, mode: MatchMode) -> bool {
    let Some(p) = produced else { return false };
    goldens.iter().any(|g| {
        g.as_slice() == p || (mode == MatchMode::Fuzzy && dict.are_synonyms(g, p))
    })
}

/// Counts and the derived precision, recall and F1.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub correct: usize,
    pub produced: usize,
    pub questions: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(correct: usize, produced: usize, questions: usize) -> Metrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, produced);
        let recall = ratio(correct, questions);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            correct,
            produced,
            questions,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Setting {
    /// Decode the major annotated evidence.
    Annotated,
    /// Decode retrieved evidences independently and vote.
    RetrievedVoting,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::Annotated, Setting::RetrievedVoting];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Annotated => "annotated",
            Setting::RetrievedVoting => "retrieved",
        }
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annotated" => Ok(Setting::Annotated),
            "retrieved" | "retrieved_voting" => Ok(Setting::RetrievedVoting),
            other => Err(Error::Config(format!(
                "setting must be annotated or retrieved, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalSetting {
    pub setting: Setting,
    pub mode: MatchMode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvidenceDecode {
    pub evidence: usize,
    pub companion: Option<usize>,
    pub labels: LabelSequence,
    pub answer: Option<AnswerSpan>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuestionRecord {
    pub id: String,
    pub answer: Option<Vec<String>>,
    pub correct_strict: bool,
    pub correct_fuzzy: bool,
    pub decodes: Vec<EvidenceDecode>,
    /// No evidence suitable for the setting; counted in |Q| only.
    pub skipped: bool,
}

impl QuestionRecord {
    pub fn correct(&self, mode: MatchMode) -> bool {
        match mode {
            MatchMode::Strict => self.correct_strict,
            MatchMode::Fuzzy => self.correct_fuzzy,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub setting: Setting,
    pub max_retrieved: usize,
    /// Seeds companion sampling in the retrieved setting.
    pub seed: u64,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            setting: Setting::Annotated,
            max_retrieved: 20,
            seed: 1,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub setting: Setting,
    pub records: Vec<QuestionRecord>,
    pub strict: Metrics,
    pub fuzzy: Metrics,
}

impl Evaluation {
    pub fn metrics(&self, mode: MatchMode) -> Metrics {
        match mode {
            MatchMode::Strict => self.strict,
            MatchMode::Fuzzy => self.fuzzy,
        }
    }
}

/// `(major, companion)` for the annotated setting: the first annotated
/// positive (else the first annotated evidence) and another annotated
/// evidence, positives first.
fn annotated_pair(inst: &QaInstance) -> Option<(usize, Option<usize>)> {
    let annotated = inst.annotated_indices();
    let positive_first = |skip: Option<usize>| {
        let candidates = annotated.iter().copied().filter(|&i| Some(i) != skip);
        let mut fallback = None;
        for i in candidates {
            if inst.evidences[i].polarity.is_positive() {
                return Some(i);
            }
            fallback.get_or_insert(i);
        }
        fallback
    };
    let major = positive_first(None)?;
    Some((major, positive_first(Some(major))))
}

fn decode_one(
    model: &Model,
    vocab: &Vocab,
    inst: &QaInstance,
    evidence: usize,
    companion: Option<usize>,
) -> Result<EvidenceDecode> {
    let tokens = &inst.evidences[evidence].tokens;
    let features = compute_common_word_features(
        &inst.question,
        tokens,
        companion.map(|c| inst.evidences[c].tokens.as_slice()),
    );
    let labels = model.decode(&vocab.ids(&inst.question), &vocab.ids(tokens), &features)?;
    let answer = extract_answer(&labels, tokens).map(|mut a| {
        a.evidence = evidence;
        a
    });
    Ok(EvidenceDecode {
        evidence,
        companion,
        labels,
        answer,
    })
}

fn predict_question(
    model: &Model,
    vocab: &Vocab,
    dict: &SynonymDict,
    inst: &QaInstance,
    index: usize,
    opts: &EvalOptions,
) -> Result<QuestionRecord> {
    let mut decodes = Vec::new();
    let skipped;
    let answer = match opts.setting {
        Setting::Annotated => match annotated_pair(inst) {
            Some((major, companion)) => {
                skipped = false;
                let d = decode_one(model, vocab, inst, major, companion)?;
                let a = d.answer.as_ref().map(|s| s.tokens.clone());
                decodes.push(d);
                a
            }
            None => {
                skipped = true;
                None
            }
        },
        Setting::RetrievedVoting => {
            let mut pool = inst.retrieved_indices();
            pool.truncate(opts.max_retrieved);
            skipped = pool.is_empty();
            let mut rng = Rng::new(opts.seed).split(index as u64);
            for (k, &e) in pool.iter().enumerate() {
                let companion = sample_other(pool.len(), k, &mut rng).map(|c| pool[c]);
                decodes.push(decode_one(model, vocab, inst, e, companion)?);
            }
            let spans: Vec<Option<AnswerSpan>> = decodes.iter().map(|d| d.answer.clone()).collect();
            vote_answers(&spans)
        }
    };
    if skipped {
        log::warn!(
            "question {} has no {} evidence; counted as unanswered",
            inst.id,
            opts.setting.as_str()
        );
    }
    let produced = answer.as_deref();
    Ok(QuestionRecord {
        id: inst.id.clone(),
        correct_strict: match_answer(produced, &inst.answers, dict, MatchMode::Strict),
        correct_fuzzy: match_answer(produced, &inst.answers, dict, MatchMode::Fuzzy),
        answer,
        decodes,
        skipped,
    })
}

/// Per-question predictions (correctness is false for unlabeled questions).
pub fn predict(
    corpus: &[QaInstance],
    model: &Model,
    vocab: &Vocab,
    dict: &SynonymDict,
    opts: &EvalOptions,
) -> Result<Vec<QuestionRecord>> {
    parallel_map(corpus, opts.threads, |i, inst| predict_question(model, vocab, dict, inst, i, opts))
        .into_iter()
        .collect()
}

pub fn score(records: &[QuestionRecord], mode: MatchMode) -> Metrics {
    let produced = records.iter().filter(|r| r.answer.is_some()).count();
    let correct = records.iter().filter(|r| r.correct(mode)).count();
    Metrics::from_counts(correct, produced, records.len())
}

pub fn evaluate(
    corpus: &[QaInstance],
    model: &Model,
    vocab: &Vocab,
    dict: &SynonymDict,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let records = predict(corpus, model, vocab, dict, opts)?;
    Ok(Evaluation {
        setting: opts.setting,
        strict: score(&records, MatchMode::Strict),
        fuzzy: score(&records, MatchMode::Fuzzy),
        records,
    })
}

/// `id<TAB>answer<TAB>strict<TAB>fuzzy` per question.
pub fn write_predictions<W: Write>(mut w: W, records: &[QuestionRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            r.id,
            r.answer.as_ref().map(|a| a.join(" ")).unwrap_or_default(),
            u8::from(r.correct_strict),
            u8::from(r.correct_fuzzy)
        )?;
    }
    Ok(())
}

/// One row of a metrics report.
pub struct ReportRow<'a> {
    pub setting: Setting,
    pub mode: MatchMode,
    pub metrics: &'a Metrics,
}

impl fmt::Display for ReportRow<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.metrics;
        write!(
            f,
            "{:<10} {:<7} {:>6} {:>6} {:>6} {:>7.2} {:>7.2} {:>7.2}",
            self.setting.as_str(),
            self.mode.as_str(),
            m.correct,
            m.produced,
            m.questions,
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1
        )
    }
}

/// Plain-text table: one row per (setting, mode), P/R/F1 in percent.
pub fn metrics_report(evaluations: &[&Evaluation], modes: &[MatchMode]) -> String {
    let mut out = format!(
        "{:<10} {:<7} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}\n",
        "setting", "match", "|C|", "|A|", "|Q|", "P", "R", "F1"
    );
    for e in evaluations {
        for &mode in modes {
            let m = e.metrics(mode);
            let row = ReportRow {
                setting: e.setting,
                mode,
                metrics: &m,
            };
            out.push_str(&format!("{row}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::{einstein, toks};
    use crate::decoder::parse_labels;
    use proptest::prelude::*;

    fn span(s: &str) -> Option<AnswerSpan> {
        Some(AnswerSpan {
            tokens: toks(s),
            evidence: 0,
            start: 0,
            end: 1,
        })
    }

    #[test]
    fn extract_einstein() {
        let inst = einstein();
        let labels = parse_labels("O O O O O B I O O").unwrap();
        let a = extract_answer(&labels, &inst.evidences[0].tokens).unwrap();
        assert_eq!(a.tokens.join(" "), "Mileva Marić");
        assert_eq!((a.start, a.end), (5, 7));
    }

    #[test]
    fn extract_edge_cases() {
        let t = toks("a b c d");
        assert_eq!(extract_answer(&parse_labels("O1 O1 O2 O2").unwrap(), &t), None);
        let a = extract_answer(&parse_labels("B I B I").unwrap(), &t).unwrap();
        assert_eq!(a.tokens, toks("a b"));
        let a = extract_answer(&parse_labels("I O1 B O2").unwrap(), &t).unwrap();
        assert_eq!(a.tokens, toks("c"));
    }

    #[test]
    fn voting() {
        assert_eq!(vote_answers(&[span("A"), None, span("A"), span("B")]), Some(toks("A")));
        assert_eq!(vote_answers(&[None, None]), None);
        assert_eq!(vote_answers(&[span("A"), span("B")]), Some(toks("A")));
        assert_eq!(vote_answers(&[None, span("B"), span("A"), span("A"), span("B")]), Some(toks("B")));
    }

    #[test]
    fn matching() {
        let mut dict = SynonymDict::new();
        dict.add(toks("北京市"), toks("北京"));
        let gold = vec![toks("北京市")];
        assert!(match_answer(Some(&toks("北京")), &gold, &dict, MatchMode::Fuzzy));
        assert!(!match_answer(Some(&toks("北京")), &gold, &dict, MatchMode::Strict));
        assert!(match_answer(Some(&toks("北京市")), &gold, &dict, MatchMode::Strict));
        assert!(!match_answer(None, &gold, &dict, MatchMode::Fuzzy));
    }

    #[test]
    fn metric_arithmetic() {
        let m = Metrics::from_counts(2, 4, 5);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 0.4);
        assert!((m.f1 - 4.0 / 9.0).abs() < 1e-15);
        let all = Metrics::from_counts(7, 7, 7);
        assert_eq!((all.precision, all.recall, all.f1), (1.0, 1.0, 1.0));
        let none = Metrics::from_counts(0, 0, 3);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn predictions_format() {
        let rec = QuestionRecord {
            id: "q1".into(),
            answer: Some(toks("Mileva Marić")),
            correct_strict: true,
            correct_fuzzy: true,
            decodes: Vec::new(),
            skipped: false,
        };
        let empty = QuestionRecord {
            id: "q2".into(),
            answer: None,
            correct_strict: false,
            correct_fuzzy: false,
            decodes: Vec::new(),
            skipped: true,
        };
        let mut buf = Vec::new();
        write_predictions(&mut buf, &[rec, empty]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "q1\tMileva Marić\t1\t1\nq2\t\t0\t0\n");
    }

    #[test]
    fn annotated_pair_prefers_positives() {
        use crate::data::{Evidence, Polarity};
        let mut inst = einstein();
        inst.evidences.insert(0, Evidence::new(toks("x"), Polarity::AnnotatedNegative));
        inst.evidences.push(Evidence::new(toks("y"), Polarity::RetrievedNegative));
        inst.evidences.push(Evidence::new(toks("Mileva Marić z"), Polarity::Positive));
        assert_eq!(annotated_pair(&inst), Some((1, Some(3))));
    }

    proptest! {
        #[test]
        fn metrics_identities(q in 1usize..500, a_frac in 0.0f64..=1.0, c_frac in 0.0f64..=1.0) {
            let a = (a_frac * q as f64) as usize;
            let c = (c_frac * a as f64) as usize;
            let m = Metrics::from_counts(c, a, q);
            prop_assert!(m.precision >= 0.0 && m.precision <= 1.0);
            prop_assert!(m.recall >= 0.0 && m.recall <= 1.0);
            if a > 0 { prop_assert_eq!(m.precision, c as f64 / a as f64); }
            prop_assert_eq!(m.recall, c as f64 / q as f64);
            if m.precision + m.recall > 0.0 {
                prop_assert!((m.f1 * (m.precision + m.recall) - 2.0 * m.precision * m.recall).abs() < 1e-12);
            }
            let full = Metrics::from_counts(c, q, q);
            prop_assert_eq!(full.precision, full.recall);
            prop_assert!((full.f1 - full.precision).abs() < 1e-15);
        }

        #[test]
        fn vote_count_is_permutation_invariant(xs in prop::collection::vec(prop::option::of(0u8..3), 0..10), seed: u64) {
            let spans: Vec<Option<AnswerSpan>> = xs.iter().map(|x| x.and_then(|v| span(&v.to_string()))).collect();
            let mut shuffled = spans.clone();
            crate::numeric::Rng::new(seed).shuffle(&mut shuffled);
            let count = |s: &[Option<AnswerSpan>], w: &Option<Vec<String>>| {
                s.iter().filter(|x| x.as_ref().map(|a| &a.tokens) == w.as_ref()).count()
            };
            let w1 = vote_answers(&spans);
            let w2 = vote_answers(&shuffled);
            prop_assert_eq!(w1.is_some(), w2.is_some());
            if w1.is_some() {
                prop_assert_eq!(count(&spans, &w1), count(&shuffled, &w2));
            }
        }
    }
}
