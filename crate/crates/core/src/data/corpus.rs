//! JSON-lines corpus format.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    AnnotatedNegative,
    RetrievedNegative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        self == Polarity::Positive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub tokens: Vec<String>,
    pub polarity: Polarity,
    /// Whether the evidence belongs to the automatically retrieved pool
    /// rather than the annotated one. Defaults to `polarity ==
    /// retrieved_negative` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved: Option<bool>,
}

impl Evidence {
    pub fn new(tokens: Vec<String>, polarity: Polarity) -> Self {
        Evidence {
            tokens,
            polarity,
            retrieved: None,
        }
    }

    pub fn is_retrieved(&self) -> bool {
        self.retrieved
            .unwrap_or(self.polarity == Polarity::RetrievedNegative)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaInstance {
    pub id: String,
    pub question: Vec<String>,
    /// First entry is the golden answer, the rest are accepted synonyms.
    pub answers: Vec<Vec<String>>,
    pub evidences: Vec<Evidence>,
}

impl QaInstance {
    pub fn golden(&self) -> Option<&[String]> {
        self.answers.first().map(Vec::as_slice)
    }

    /// Indices of annotated (non-retrieved) evidences.
    pub fn annotated_indices(&self) -> Vec<usize> {
        (0..self.evidences.len())
            .filter(|&i| !self.evidences[i].is_retrieved())
            .collect()
    }

    /// Indices of retrieved evidences in file order.
    pub fn retrieved_indices(&self) -> Vec<usize> {
        (0..self.evidences.len())
            .filter(|&i| self.evidences[i].is_retrieved())
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("corpus records always serialize")
    }

    fn validate(&self, require_answers: bool) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.question.is_empty() {
            return Err("empty question".into());
        }
        if require_answers && self.answers.is_empty() {
            return Err("no answers".into());
        }
        if self.answers.iter().any(Vec::is_empty) {
            return Err("empty answer".into());
        }
        if let Some(i) = self.evidences.iter().position(|e| e.tokens.is_empty()) {
            return Err(format!("evidence {i} has no tokens"));
        }
        Ok(())
    }
}

/// A skipped line and why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub instances: Vec<QaInstance>,
    pub errors: Vec<LineError>,
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    question: Vec<String>,
    answers: Option<Vec<Vec<String>>>,
    evidences: Vec<Evidence>,
}

/// Parses JSON lines. Blank lines are ignored. Schema violations are
/// collected with 1-based line numbers, or returned as the error when
/// `strict`. `require_answers = false` accepts unlabeled records.
pub fn parse_corpus<R: BufRead>(reader: R, strict: bool, require_answers: bool) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Data(format!("line {line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawInstance>(&line)
            .map_err(|e| e.to_string())
            .and_then(|raw| {
                let answers = match raw.answers {
                    Some(a) => a,
                    None if require_answers => return Err("missing field `answers`".to_string()),
                    None => Vec::new(),
                };
                let inst = QaInstance {
                    id: raw.id,
                    question: raw.question,
                    answers,
                    evidences: raw.evidences,
                };
                inst.validate(require_answers)?;
                if !seen.insert(inst.id.clone()) {
                    return Err(format!("duplicate id {:?}", inst.id));
                }
                Ok(inst)
            });
        match parsed {
            Ok(inst) => report.instances.push(inst),
            Err(message) if strict => return Err(Error::Data(format!("line {line_no}: {message}"))),
            Err(message) => report.errors.push(LineError { line: line_no, message }),
        }
    }
    Ok(report)
}

pub fn load_corpus(path: &Path, strict: bool, require_answers: bool) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let report = parse_corpus(BufReader::new(file), strict, require_answers)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for err in &report.errors {
        log::warn!("{}:{}: skipped: {}", path.display(), err.line, err.message);
    }
    Ok(report)
}

pub fn write_corpus(path: &Path, instances: &[QaInstance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        writeln!(w, "{}", inst.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
pub(crate) fn einstein() -> QaInstance {
    QaInstance {
        id: "einstein".into(),
        question: toks("Who is the first wife of Albert Einstein ?"),
        answers: vec![toks("Mileva Marić")],
        evidences: vec![Evidence::new(
            toks("Einstein married his first wife Mileva Marić in 1903"),
            Polarity::Positive,
        )],
    }
}
