//! Companion-evidence sampling and noise-injected training batches.

use std::sync::atomic::{AtomicBool, Ordering};

use super::corpus::{Polarity, QaInstance};
use super::features::compute_common_word_features;
use super::labels::generate_labels;
use super::synonyms::SynonymDict;
use crate::decoder::{Label, LabelSequence};
use crate::error::{Error, Result};
use crate::evidence::FeatureIds;
use crate::numeric::Rng;

/// Uniform index in `0..n` other than `target`; none when `n < 2`.
pub fn sample_other(n: usize, target: usize, rng: &mut Rng) -> Option<usize> {
    if n < 2 {
        return None;
    }
    let k = rng.index(n - 1);
    Some(if k >= target { k + 1 } else { k })
}

/// Another evidence of the same question, drawn uniformly.
pub fn sample_companion_evidence(instance: &QaInstance, target: usize, rng: &mut Rng) -> Option<usize> {
    sample_other(instance.evidences.len(), target, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Positive,
    AnnotatedNegative,
    RetrievedNegative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Probability that a slot holds a negative evidence.
    pub negative_rate: f64,
    /// Probability that such a negative is an annotated one.
    pub annotated_share: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: true,
            negative_rate: 0.2,
            annotated_share: 0.25,
        }
    }
}

pub fn draw_slot_kind(noise: &NoiseConfig, rng: &mut Rng) -> SlotKind {
    if !noise.enabled || !rng.bernoulli(noise.negative_rate) {
        SlotKind::Positive
    } else if rng.bernoulli(noise.annotated_share) {
        SlotKind::AnnotatedNegative
    } else {
        SlotKind::RetrievedNegative
    }
}

/// Evidence references grouped by training role, with precomputed labels
/// for positives.
#[derive(Debug)]
pub struct TrainingPool {
    positives: Vec<(usize, usize, LabelSequence)>,
    annotated_negatives: Vec<(usize, usize)>,
    retrieved_negatives: Vec<(usize, usize)>,
    inconsistent: usize,
    warned: AtomicBool,
}

impl TrainingPool {
    pub fn build(corpus: &[QaInstance], dict: &SynonymDict, o_split: bool) -> Result<Self> {
        let mut pool = TrainingPool {
            positives: Vec::new(),
            annotated_negatives: Vec::new(),
            retrieved_negatives: Vec::new(),
            inconsistent: 0,
            warned: AtomicBool::new(false),
        };
        for (qi, inst) in corpus.iter().enumerate() {
            for (ei, ev) in inst.evidences.iter().enumerate() {
                match ev.polarity {
                    Polarity::Positive => {
                        let out = generate_labels(ev, &inst.answers, dict, o_split);
                        if out.inconsistent {
                            pool.inconsistent += 1;
                        } else {
                            pool.positives.push((qi, ei, out.labels));
                        }
                    }
                    Polarity::AnnotatedNegative => pool.annotated_negatives.push((qi, ei)),
                    Polarity::RetrievedNegative => pool.retrieved_negatives.push((qi, ei)),
                }
            }
        }
        if pool.inconsistent > 0 {
            log::warn!(
                "{} positive evidences contain no answer form and are excluded from training",
                pool.inconsistent
            );
        }
        if pool.positives.is_empty() {
            return Err(Error::Data("training corpus has no usable positive evidence".into()));
        }
        Ok(pool)
    }

    pub fn positives(&self) -> usize {
        self.positives.len()
    }

    pub fn annotated_negatives(&self) -> usize {
        self.annotated_negatives.len()
    }

    pub fn retrieved_negatives(&self) -> usize {
        self.retrieved_negatives.len()
    }

    /// Positive evidences skipped because no answer form occurs in them.
    pub fn inconsistent(&self) -> usize {
        self.inconsistent
    }

    fn negatives(&self, kind: SlotKind) -> &[(usize, usize)] {
        match kind {
            SlotKind::AnnotatedNegative => &self.annotated_negatives,
            _ => &self.retrieved_negatives,
        }
    }
}

/// One training item: which evidence, its companion, labels and features.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub instance: usize,
    pub evidence: usize,
    pub companion: Option<usize>,
    pub kind: SlotKind,
    pub labels: LabelSequence,
    pub features: FeatureIds,
}

/// Draws batches: each slot is independently positive or a negative of
/// either kind; positive slots walk a per-epoch shuffle of all positives.
#[derive(Debug)]
pub struct BatchSampler<'a> {
    corpus: &'a [QaInstance],
    pool: &'a TrainingPool,
    noise: NoiseConfig,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> BatchSampler<'a> {
    pub fn new(corpus: &'a [QaInstance], pool: &'a TrainingPool, noise: NoiseConfig) -> Self {
        BatchSampler {
            corpus,
            pool,
            noise,
            order: Vec::new(),
            cursor: 0,
        }
    }

    /// Batches needed to visit every positive once at the given size.
    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.pool.positives.len().div_ceil(batch_size.max(1))
    }

    fn next_positive(&mut self, rng: &mut Rng) -> usize {
        if self.cursor >= self.order.len() {
            self.order = (0..self.pool.positives.len()).collect();
            rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    pub fn sample_training_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Vec<TrainingSample> {
        (0..batch_size)
            .map(|_| {
                let mut kind = draw_slot_kind(&self.noise, rng);
                if kind != SlotKind::Positive && self.pool.negatives(kind).is_empty() {
                    if !self.pool.warned.swap(true, Ordering::Relaxed) {
                        log::warn!("no {kind:?} evidences available; using positives instead");
                    }
                    kind = SlotKind::Positive;
                }
                let (qi, ei, labels) = if kind == SlotKind::Positive {
                    let p = self.next_positive(rng);
                    self.pool.positives[p].clone()
                } else {
                    let negs = self.pool.negatives(kind);
                    let (qi, ei) = negs[rng.index(negs.len())];
                    let n = self.corpus[qi].evidences[ei].tokens.len();
                    (qi, ei, vec![Label::O1; n])
                };
                let inst = &self.corpus[qi];
                let companion = sample_companion_evidence(inst, ei, rng);
                let features = compute_common_word_features(
                    &inst.question,
                    &inst.evidences[ei].tokens,
                    companion.map(|c| inst.evidences[c].tokens.as_slice()),
                );
                TrainingSample {
                    instance: qi,
                    evidence: ei,
                    companion,
                    kind,
                    labels,
                    features,
                }
            })
            .collect()
    }
}
