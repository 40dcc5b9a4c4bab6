//! Vocabulary and word embedding initialization.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::corpus::QaInstance;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, ParamTensor, Rng};

pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id map with the unknown token at id 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from tokens in order; `UNK_TOKEN` is prepended and duplicates dropped.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Vocab {
            tokens: vec![UNK_TOKEN.to_string()],
            index: HashMap::from([(UNK_TOKEN.to_string(), 0)]),
        };
        for t in tokens {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    /// Question and evidence tokens seen at least `min_freq` times, most
    /// frequent first, ties in lexicographic order.
    pub fn build(corpus: &[QaInstance], min_freq: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for inst in corpus {
            let evidence_tokens = inst.evidences.iter().flat_map(|e| &e.tokens);
            for t in inst.question.iter().chain(evidence_tokens) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_freq && t != UNK_TOKEN)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Vocab::from_tokens(entries.into_iter().map(|(t, _)| t.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or 0 when unknown.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, UNK first.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(UNK_TOKEN) {
            return Err(Error::Data(format!("vocabulary must start with {UNK_TOKEN}")));
        }
        let v = Vocab::from_tokens(lines.map(str::to_string));
        if v.len() != text.lines().count() {
            return Err(Error::Data("vocabulary contains duplicate tokens".into()));
        }
        Ok(v)
    }
}

/// Pretrained vectors keyed by token.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

/// Reads `<count> <dim>` followed by `<token> v1 … vD` lines.
pub fn load_embedding_file(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let data_err = |line: usize, msg: String| Error::Data(format!("{}:{line}: {msg}", path.display()));
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| data_err(1, "missing header".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| data_err(1, format!("bad header {header:?}")))?;
    let [count, dim] = nums[..] else {
        return Err(data_err(1, format!("bad header {header:?}")));
    };
    let mut table = EmbeddingTable {
        dim,
        vectors: HashMap::with_capacity(count),
    };
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| data_err(line_no, "non-numeric value".into()))?;
        if values.len() != dim {
            return Err(data_err(line_no, format!("expected {dim} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(data_err(line_no, "non-finite value".into()));
        }
        table.vectors.insert(token.to_string(), values);
    }
    if table.vectors.len() != count {
        log::warn!(
            "{}: header announces {count} vectors, found {}",
            path.display(),
            table.vectors.len()
        );
    }
    Ok(table)
}

/// Vocabulary from the corpus plus the `D×|V|` embedding tensor
/// `embedding.E`. Columns come from `table` where the token is present and
/// are Glorot-random otherwise. Returns the covered fraction of non-UNK
/// tokens as the third element.
pub fn build_vocab_and_embeddings(
    corpus: &[QaInstance],
    table: Option<&EmbeddingTable>,
    dim: usize,
    min_freq: usize,
    trainable: bool,
    rng: &mut Rng,
) -> Result<(Vocab, ParamTensor, f64)> {
    let vocab = Vocab::build(corpus, min_freq);
    let n = vocab.len();
    let r = (6.0 / (dim + n) as f64).sqrt();
    let mut value = Matrix::from_fn(dim, n, |_, _| rng.uniform_range(-r, r));
    let mut coverage = 1.0;
    if let Some(table) = table {
        if table.dim != dim {
            return Err(Error::Data(format!(
                "embedding file has dimension {} but D = {dim}",
                table.dim
            )));
        }
        let mut covered = 0;
        for (id, tok) in vocab.tokens().iter().enumerate().skip(1) {
            if let Some(v) = table.vectors.get(tok) {
                covered += 1;
                for (k, x) in v.iter().enumerate() {
                    value.set(k, id, *x);
                }
            }
        }
        coverage = if n > 1 { covered as f64 / (n - 1) as f64 } else { 1.0 };
        if coverage < 0.5 {
            log::warn!("embedding file covers only {:.1}% of the vocabulary", 100.0 * coverage);
        }
    }
    Ok((vocab, ParamTensor::new("embedding.E", value, trainable), coverage))
}
