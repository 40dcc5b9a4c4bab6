//! Minibatch training: sampled batches, mean NLL plus an L2 penalty on the
//! trainable tensors, rmsprop updates, validation-driven model selection.

use std::borrow::Cow;
use std::fmt;
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::config::{EmbeddingTraining, TrainConfig};
use crate::data::{
    build_vocab_and_embeddings, to_char_mode, BatchSampler, EmbeddingTable, NoiseConfig, QaInstance,
    SynonymDict, TrainingPool, TrainingSample, Vocab,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, Metrics, Setting};
use crate::model::{Example, Model};
use crate::numeric::{Gradients, RmsProp, Rng};

const STREAM_INIT: u64 = 0;
const STREAM_BATCHES: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

/// Corpora and resources for one training run.
#[derive(Clone, Copy, Debug)]
pub struct TrainInputs<'a> {
    pub train: &'a [QaInstance],
    pub valid: &'a [QaInstance],
    pub dict: &'a SynonymDict,
    pub embeddings: Option<&'a EmbeddingTable>,
}

/// The corpus as the model sees it: unchanged, or split into characters.
pub fn corpus_view(corpus: &[QaInstance], char_mode: bool) -> Cow<'_, [QaInstance]> {
    if char_mode {
        Cow::Owned(corpus.iter().map(to_char_mode).collect())
    } else {
        Cow::Borrowed(corpus)
    }
}

pub fn dict_view(dict: &SynonymDict, char_mode: bool) -> Cow<'_, SynonymDict> {
    if char_mode {
        Cow::Owned(dict.to_char_mode())
    } else {
        Cow::Borrowed(dict)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub epoch: usize,
    pub batch: usize,
    pub nll: f64,
    pub l2: f64,
}

impl BatchLoss {
    pub fn total(&self) -> f64 {
        self.nll + self.l2
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub nll: f64,
    pub l2: f64,
    pub validation: Option<Metrics>,
    pub seconds: f64,
}

impl EpochRecord {
    /// Every column except the wall-clock time.
    pub fn timeless(&self) -> String {
        let (p, r, f) = self
            .validation
            .map_or((0.0, 0.0, 0.0), |m| (m.precision, m.recall, m.f1));
        format!(
            "{}\t{:.9}\t{:.9}\t{:.9}\t{:.4}\t{:.4}\t{:.4}",
            self.epoch, self.loss, self.nll, self.l2, p, r, f
        )
    }
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.2}", self.timeless(), self.seconds)
    }
}

pub const EPOCH_LOG_HEADER: &str = "epoch\tloss\tnll\tl2\tP\tR\tF1\tseconds";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best validation strict F1 (or the last epoch without validation data).
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub batches: Vec<BatchLoss>,
    pub stopped_early: bool,
    pub embedding_coverage: f64,
}

fn to_example(corpus: &[QaInstance], vocab: &Vocab, s: TrainingSample) -> Example {
    let inst = &corpus[s.instance];
    Example {
        question: vocab.ids(&inst.question),
        evidence: vocab.ids(&inst.evidences[s.evidence].tokens),
        features: s.features,
        labels: s.labels,
    }
}

/// One optimizer step on `batch`. Items are split into `threads` contiguous
/// chunks with private gradient buffers, reduced in chunk order; item `k`
/// draws its dropout masks from `dropout.split(k)`.
pub fn train_batch(
    model: &mut Model,
    batch: &[Example],
    threads: usize,
    dropout: &Rng,
    optimizer: &RmsProp,
) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let chunk = batch.len().div_ceil(threads.max(1));
    let chunks: Vec<(usize, &[Example])> = batch
        .chunks(chunk)
        .enumerate()
        .map(|(i, c)| (i * chunk, c))
        .collect();
    let m = &*model;
    let partial = crate::parallel::parallel_map(&chunks, threads, |_, (offset, items)| {
        let mut grads = m.store().zero_grads();
        let mut nll = 0.0;
        for (k, ex) in items.iter().enumerate() {
            let mut rng = dropout.split((offset + k) as u64);
            nll += m.loss_forward_backward(ex, true, &mut rng, &mut grads)?;
        }
        Ok::<_, Error>((nll, grads))
    });
    let mut total: Option<Gradients> = None;
    let mut nll = 0.0;
    for p in partial {
        let (n, g) = p?;
        nll += n;
        match &mut total {
            None => total = Some(g),
            Some(t) => t.add_assign(&g),
        }
    }
    let mut grads = total.expect("at least one chunk");
    let b = batch.len() as f64;
    grads.scale(1.0 / b);
    let lambda = model.config().lambda;
    let store = model.store_mut();
    let l2 = 0.5 * lambda * store.trainable_sum_squares();
    let nll_mean = nll / b;
    if !(nll_mean + l2).is_finite() {
        store.clear_grads();
        return Err(Error::NonFiniteLoss { batch: String::new() });
    }
    store.accumulate(&grads);
    for t in store.iter_mut().filter(|t| t.trainable) {
        for (g, v) in t.grad.as_mut_slice().iter_mut().zip(t.value.as_slice()) {
            *g += lambda * v;
        }
    }
    optimizer.step(store)?;
    Ok((nll_mean, l2))
}

/// Fresh model and vocabulary for `cfg`, with the embedding regime resolved
/// into the returned model's config.
pub fn initialize(
    train: &[QaInstance],
    embeddings: Option<&EmbeddingTable>,
    cfg: &TrainConfig,
) -> Result<(Model, Vocab, f64)> {
    let mut cfg = cfg.clone();
    let trainable = cfg.embedding_training.resolve(embeddings.is_some());
    cfg.embedding_training = if trainable {
        EmbeddingTraining::Trainable
    } else {
        EmbeddingTraining::Frozen
    };
    let mut rng = Rng::new(cfg.seed).split(STREAM_INIT);
    let (vocab, emb, coverage) =
        build_vocab_and_embeddings(train, embeddings, cfg.word_dim, cfg.min_freq, trainable, &mut rng)?;
    let model = Model::new(&cfg, emb, &mut rng)?;
    Ok((model, vocab, coverage))
}

/// Trains for up to `cfg.epochs` epochs, calling `on_epoch` after each.
/// Stops once `cfg.patience` epochs in a row fail to improve the validation
/// strict F1 (`patience = 0` disables early stopping).
pub fn train(
    inputs: TrainInputs<'_>,
    cfg: &TrainConfig,
    threads: usize,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.train.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let train_corpus = corpus_view(inputs.train, cfg.char_mode);
    let valid_corpus = corpus_view(inputs.valid, cfg.char_mode);
    let dict = dict_view(inputs.dict, cfg.char_mode);
    if valid_corpus.is_empty() {
        log::warn!("validation corpus is empty; keeping the last epoch");
    }

    let (mut model, vocab, coverage) = initialize(&train_corpus, inputs.embeddings, cfg)?;
    log::info!(
        "vocabulary {} tokens, {} trainable parameters",
        vocab.len(),
        model.store().trainable_count()
    );
    let pool = TrainingPool::build(&train_corpus, &dict, cfg.o_split)?;
    log::info!(
        "{} positive, {} annotated-negative, {} retrieved-negative training evidences",
        pool.positives(),
        pool.annotated_negatives(),
        pool.retrieved_negatives()
    );
    let noise = NoiseConfig {
        enabled: cfg.noise,
        negative_rate: cfg.negative_rate,
        annotated_share: cfg.annotated_negative_share,
    };
    let mut sampler = BatchSampler::new(&train_corpus, &pool, noise);
    let mut batch_rng = Rng::new(cfg.seed).split(STREAM_BATCHES);
    let dropout_base = Rng::new(cfg.seed).split(STREAM_DROPOUT);
    let optimizer = RmsProp {
        lr: cfg.lr,
        decay: cfg.rms_decay,
        eps: cfg.rms_eps,
    };
    let eval_opts = EvalOptions {
        setting: Setting::Annotated,
        max_retrieved: cfg.max_retrieved,
        seed: cfg.seed,
        threads,
    };
    let per_epoch = sampler.batches_per_epoch(cfg.batch_size);

    let mut log = Vec::new();
    let mut batches = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let (mut nll_sum, mut l2_sum) = (0.0, 0.0);
        for b in 0..per_epoch {
            let batch: Vec<Example> = sampler
                .sample_training_batch(cfg.batch_size, &mut batch_rng)
                .into_iter()
                .map(|s| to_example(&train_corpus, &vocab, s))
                .collect();
            let dropout = dropout_base.split(((epoch as u64) << 32) | b as u64);
            let (nll, l2) = train_batch(&mut model, &batch, threads, &dropout, &optimizer).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    batch: format!("epoch {epoch} batch {b}"),
                },
                other => other,
            })?;
            log::debug!("epoch {epoch} batch {b} loss {:.9} (nll {nll:.9}, l2 {l2:.9})", nll + l2);
            nll_sum += nll;
            l2_sum += l2;
            batches.push(BatchLoss { epoch, batch: b, nll, l2 });
        }
        let n = per_epoch as f64;
        let validation = if valid_corpus.is_empty() {
            None
        } else {
            Some(evaluate(&valid_corpus, &model, &vocab, &dict, &eval_opts)?.strict)
        };
        let record = EpochRecord {
            epoch,
            loss: (nll_sum + l2_sum) / n,
            nll: nll_sum / n,
            l2: l2_sum / n,
            validation,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.push(record);

        let score = validation.map_or(f64::NEG_INFINITY, |m| m.f1);
        let improved = match &best {
            None => true,
            Some((s, _)) => score > *s || validation.is_none(),
        };
        if improved {
            best = Some((score, Checkpoint::capture(&model, &vocab, epoch, validation.map_or(0.0, |m| m.f1))));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                log::info!("no validation improvement for {stale} epochs; stopping after epoch {epoch}");
                stopped_early = true;
                break;
            }
        }
    }
    let last_epoch = log.last().map_or(0, |r| r.epoch);
    let last_f1 = log.last().and_then(|r| r.validation).map_or(0.0, |m| m.f1);
    let last = Checkpoint::capture(&model, &vocab, last_epoch, last_f1);
    let best = best.map_or_else(|| last.clone(), |(_, c)| c);
    Ok(TrainOutcome {
        best,
        last,
        log,
        batches,
        stopped_early,
        embedding_coverage: coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::{einstein, toks};
    use crate::data::{Evidence, Polarity};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden: 4,
            word_dim: 4,
            batch_size: 3,
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    fn tiny_corpus() -> Vec<QaInstance> {
        let mut a = einstein();
        a.evidences.push(Evidence::new(toks("Einstein liked music"), Polarity::AnnotatedNegative));
        a.evidences.push(Evidence::new(toks("Paris is big"), Polarity::RetrievedNegative));
        let mut b = einstein();
        b.id = "q2".into();
        vec![a, b]
    }

    fn run(cfg: &TrainConfig, threads: usize) -> TrainOutcome {
        let corpus = tiny_corpus();
        let dict = SynonymDict::new();
        let inputs = TrainInputs {
            train: &corpus,
            valid: &corpus,
            dict: &dict,
            embeddings: None,
        };
        train(inputs, cfg, threads, &mut |_| {}).unwrap()
    }

    #[test]
    fn loss_terms_sum_to_total() {
        let out = run(&tiny_cfg(), 1);
        assert_eq!(out.log.len(), 2);
        for r in &out.log {
            assert!((r.nll + r.l2 - r.loss).abs() < 1e-12);
            assert!(r.validation.is_some());
        }
        assert_eq!(out.log[0].timeless().split('\t').count(), 7);
        assert_eq!(out.log[0].to_string().split('\t').count(), 8);
    }

    #[test]
    fn reruns_are_identical() {
        let a = run(&tiny_cfg(), 1);
        let b = run(&tiny_cfg(), 1);
        assert_eq!(a.batches, b.batches);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn threaded_run_matches_closely() {
        let a = run(&tiny_cfg(), 1);
        let b = run(&tiny_cfg(), 3);
        for (x, y) in a.batches.iter().zip(&b.batches) {
            assert!((x.total() - y.total()).abs() <= 1e-9 * x.total().abs().max(1.0));
        }
    }

    #[test]
    fn empty_corpus_is_fatal() {
        let dict = SynonymDict::new();
        let inputs = TrainInputs {
            train: &[],
            valid: &[],
            dict: &dict,
            embeddings: None,
        };
        assert!(matches!(train(inputs, &tiny_cfg(), 1, &mut |_| {}), Err(Error::Data(_))));
    }

    #[test]
    fn frozen_embeddings_stay_put() {
        let cfg = TrainConfig {
            embedding_training: EmbeddingTraining::Frozen,
            ..tiny_cfg()
        };
        let corpus = tiny_corpus();
        let (model, _, _) = initialize(&corpus, None, &cfg).unwrap();
        let before = model.store().value(model.embedding_id()).clone();
        let out = run(&cfg, 1);
        let after = &out.last.tensors.iter().find(|(n, _)| n == "embedding.E").unwrap().1;
        assert_eq!(before.as_slice(), after.as_slice());
        let moved = &out.last.tensors.iter().find(|(n, _)| n == "decoder.W_e").unwrap().1;
        let init = model.store().value(model.emission_weights());
        assert_ne!(init.as_slice(), moved.as_slice());
    }

    #[test]
    fn heavy_penalty_shrinks_weights() {
        let cfg = TrainConfig {
            lambda: 1000.0,
            lr: 0.01,
            epochs: 1,
            ..tiny_cfg()
        };
        let corpus = tiny_corpus();
        let (mut model, vocab, _) = initialize(&corpus, None, &cfg).unwrap();
        let dict = SynonymDict::new();
        let pool = TrainingPool::build(&corpus, &dict, true).unwrap();
        let mut sampler = BatchSampler::new(&corpus, &pool, NoiseConfig::default());
        let mut rng = Rng::new(1);
        let opt = RmsProp { lr: cfg.lr, ..RmsProp::default() };
        let mut norms = vec![model.store().trainable_sum_squares()];
        for b in 0..60 {
            let batch: Vec<Example> = sampler
                .sample_training_batch(3, &mut rng)
                .into_iter()
                .map(|s| to_example(&corpus, &vocab, s))
                .collect();
            train_batch(&mut model, &batch, 1, &rng.split(b), &opt).unwrap();
            norms.push(model.store().trainable_sum_squares());
        }
        assert!(norms[10..].windows(2).all(|w| w[1] < w[0]), "{norms:?}");
        assert!(norms[60] < 0.1 * norms[0]);
    }

    #[test]
    fn non_finite_loss_names_the_batch() {
        let corpus = tiny_corpus();
        let mut cfg = tiny_cfg();
        cfg.lambda = f64::MAX;
        let dict = SynonymDict::new();
        let inputs = TrainInputs {
            train: &corpus,
            valid: &corpus,
            dict: &dict,
            embeddings: None,
        };
        match train(inputs, &cfg, 1, &mut |_| {}) {
            Err(Error::NonFiniteLoss { batch }) => assert_eq!(batch, "epoch 1 batch 0"),
            other => panic!("{other:?}"),
        }
    }
}
