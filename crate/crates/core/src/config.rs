//! Model and training configuration as flat `key=value` settings.

use std::fmt;
use std::str::FromStr;

use crate::decoder::DecoderKind;
use crate::error::{Error, Result};
use crate::lstm::CandidateActivation;
use crate::question::PoolingMode;

/// Whether the word embedding matrix is updated during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmbeddingTraining {
    /// Frozen when loaded from a file, trained when randomly initialized.
    #[default]
    Auto,
    Trainable,
    Frozen,
}

impl EmbeddingTraining {
    pub fn resolve(self, from_file: bool) -> bool {
        match self {
            EmbeddingTraining::Auto => !from_file,
            EmbeddingTraining::Trainable => true,
            EmbeddingTraining::Frozen => false,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            EmbeddingTraining::Auto => "auto",
            EmbeddingTraining::Trainable => "true",
            EmbeddingTraining::Frozen => "false",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// LSTM width `H`.
    pub hidden: usize,
    /// Word embedding dimension `D`.
    pub word_dim: usize,
    /// q-e.comm feature embedding dimension `D1`.
    pub qe_dim: usize,
    /// e-e.comm feature embedding dimension `D2`.
    pub ee_dim: usize,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub dropout: f64,
    pub question_dropout: bool,
    pub noise: bool,
    /// Fraction of training slots filled with negative evidences under noise.
    pub negative_rate: f64,
    /// Share of those negatives drawn from annotated negatives.
    pub annotated_negative_share: f64,
    pub decoder: DecoderKind,
    pub pooling: PoolingMode,
    pub n_layers: usize,
    pub cross_links: bool,
    pub candidate: CandidateActivation,
    pub o_split: bool,
    pub embedding_training: EmbeddingTraining,
    pub min_freq: usize,
    pub char_mode: bool,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub max_retrieved: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 64,
            word_dim: 64,
            qe_dim: 2,
            ee_dim: 2,
            lr: 0.001,
            rms_decay: 0.9,
            rms_eps: 1e-8,
            batch_size: 120,
            lambda: 0.016,
            dropout: 0.05,
            question_dropout: true,
            noise: true,
            negative_rate: 0.2,
            annotated_negative_share: 0.25,
            decoder: DecoderKind::Crf,
            pooling: PoolingMode::Attention,
            n_layers: 3,
            cross_links: true,
            candidate: CandidateActivation::Sigmoid,
            o_split: true,
            embedding_training: EmbeddingTraining::Auto,
            min_freq: 1,
            char_mode: false,
            epochs: 30,
            patience: 5,
            seed: 1,
            max_retrieved: 20,
        }
    }
}

/// Keys that change the shape or wiring of the model.
pub const ARCHITECTURE_KEYS: &[&str] = &[
    "H",
    "D",
    "D1",
    "D2",
    "decoder",
    "pooling_mode",
    "n_layers",
    "cross_links",
    "candidate_activation",
    "o_split",
    "char_mode",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("invalid boolean {other:?} for key {key}"))),
    }
}

impl TrainConfig {
    /// Sets one key. Accepts a few long-form aliases (`hidden_width`,
    /// `feature_dims`, `pooling`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "H" | "hidden_width" => self.hidden = parse(key, v)?,
            "D" | "word_dim" => self.word_dim = parse(key, v)?,
            "D1" => self.qe_dim = parse(key, v)?,
            "D2" => self.ee_dim = parse(key, v)?,
            "feature_dims" => {
                let d = parse(key, v)?;
                self.qe_dim = d;
                self.ee_dim = d;
            }
            "lr" => self.lr = parse(key, v)?,
            "rms_decay" => self.rms_decay = parse(key, v)?,
            "rms_eps" => self.rms_eps = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "question_dropout" => self.question_dropout = parse_bool(key, v)?,
            "noise" => self.noise = parse_bool(key, v)?,
            "negative_rate" => self.negative_rate = parse(key, v)?,
            "annotated_negative_share" => self.annotated_negative_share = parse(key, v)?,
            "decoder" => self.decoder = v.parse()?,
            "pooling_mode" | "pooling" => self.pooling = v.parse()?,
            "n_layers" => self.n_layers = parse(key, v)?,
            "cross_links" => self.cross_links = parse_bool(key, v)?,
            "candidate_activation" => self.candidate = v.parse()?,
            "o_split" => self.o_split = parse_bool(key, v)?,
            "embedding_trainable" => {
                self.embedding_training = match v {
                    "auto" => EmbeddingTraining::Auto,
                    _ if parse_bool(key, v)? => EmbeddingTraining::Trainable,
                    _ => EmbeddingTraining::Frozen,
                }
            }
            "min_freq" => self.min_freq = parse(key, v)?,
            "char_mode" => self.char_mode = parse_bool(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "max_retrieved" => self.max_retrieved = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn is_key(key: &str) -> bool {
        const ALIASES: &[&str] = &["hidden_width", "word_dim", "feature_dims", "pooling"];
        ALIASES.contains(&key) || TrainConfig::default().get(key).is_some()
    }

    /// Every setting under its canonical key, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("H", self.hidden.to_string()),
            ("D", self.word_dim.to_string()),
            ("D1", self.qe_dim.to_string()),
            ("D2", self.ee_dim.to_string()),
            ("lr", self.lr.to_string()),
            ("rms_decay", self.rms_decay.to_string()),
            ("rms_eps", self.rms_eps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lambda", self.lambda.to_string()),
            ("dropout", self.dropout.to_string()),
            ("question_dropout", self.question_dropout.to_string()),
            ("noise", self.noise.to_string()),
            ("negative_rate", self.negative_rate.to_string()),
            ("annotated_negative_share", self.annotated_negative_share.to_string()),
            ("decoder", self.decoder.to_string()),
            ("pooling_mode", self.pooling.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("cross_links", self.cross_links.to_string()),
            ("candidate_activation", self.candidate.as_str().to_string()),
            ("o_split", self.o_split.to_string()),
            ("embedding_trainable", self.embedding_training.as_str().to_string()),
            ("min_freq", self.min_freq.to_string()),
            ("char_mode", self.char_mode.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("max_retrieved", self.max_retrieved.to_string()),
        ]
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries()
            .into_iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }

    /// Architecture settings that differ, as `"key: self vs other"`.
    pub fn architecture_diff(&self, other: &TrainConfig) -> Vec<String> {
        ARCHITECTURE_KEYS
            .iter()
            .filter_map(|k| {
                let a = self.get(k)?;
                let b = other.get(k)?;
                (a != b).then(|| format!("{k}: {a} vs {b}"))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("H", self.hidden),
            ("D", self.word_dim),
            ("D1", self.qe_dim),
            ("D2", self.ee_dim),
            ("batch_size", self.batch_size),
            ("min_freq", self.min_freq),
            ("max_retrieved", self.max_retrieved),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !(1..=3).contains(&self.n_layers) {
            return Err(Error::Config(format!("n_layers must be 1, 2 or 3, got {}", self.n_layers)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rms_decay) || !(self.rms_eps > 0.0) {
            return Err(Error::Config("rms_decay must be in [0,1] and rms_eps positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        crate::numeric::check_rate(self.dropout)?;
        for (k, v) in [
            ("negative_rate", self.negative_rate),
            ("annotated_negative_share", self.annotated_negative_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{k} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.hidden, c.word_dim, c.qe_dim, c.ee_dim), (64, 64, 2, 2));
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.batch_size, 120);
        assert_eq!(c.lambda, 0.016);
        assert_eq!(c.dropout, 0.05);
        assert_eq!(c.decoder, DecoderKind::Crf);
        assert_eq!(c.pooling, PoolingMode::Attention);
        assert!(c.cross_links && c.n_layers == 3);
        c.validate().unwrap();
    }

    #[test]
    fn entries_round_trip() {
        let mut c = TrainConfig::default();
        c.set("hidden_width", "32").unwrap();
        c.set("decoder", "softmax_prev").unwrap();
        c.set("embedding_trainable", "false").unwrap();
        let mut d = TrainConfig::default();
        for (k, v) in c.entries() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = TrainConfig::default().set("hiden", "3").unwrap_err();
        assert!(err.to_string().contains("hiden"));
        assert!(!TrainConfig::is_key("hiden"));
        assert!(TrainConfig::is_key("lambda"));
    }

    #[test]
    fn diff_names_keys() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        b.hidden = 32;
        assert_eq!(a.architecture_diff(&b), vec!["H: 64 vs 32".to_string()]);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = TrainConfig::default();
        c.n_layers = 4;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
