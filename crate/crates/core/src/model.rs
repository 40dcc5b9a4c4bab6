//! The full tagger: question encoder → evidence encoder → emissions →
//! decoder, with one forward/backward pass per instance.

use crate::config::TrainConfig;
use crate::decoder::{
    crf_nll_and_grad, crf_viterbi, emissions, emissions_backward, from_indices, softmax_decode,
    softmax_nll_and_grad, softmax_prev_decode, softmax_prev_nll_and_grad, to_indices, DecoderKind, Lattice,
    Label, LabelSequence, NUM_LABELS,
};
use crate::error::{Error, Result};
use crate::evidence::{EvidenceEncoder, FeatureIds};
use crate::lstm::LstmParams;
use crate::numeric::dd::Dd;
use crate::numeric::{finite_diff_check, GradCheckConfig, GradCheckReport, Gradients, Matrix, ParamId, ParamStore, ParamTensor, Rng};
use crate::question::{PoolingMode, QuestionEncoder};
use crate::reference;

/// One labeled (or unlabeled, for decoding) question/evidence pair as ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub question: Vec<usize>,
    pub evidence: Vec<usize>,
    pub features: FeatureIds,
    pub labels: LabelSequence,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: TrainConfig,
    store: ParamStore,
    embedding: ParamId,
    question: QuestionEncoder,
    evidence: EvidenceEncoder,
    w_e: ParamId,
    transitions: Option<ParamId>,
    feedback: Option<ParamId>,
}

impl Model {
    /// Registers every tensor in a fixed order, starting with `embedding`
    /// (`D×|V|`). The attention tensors are frozen outside attention pooling.
    pub fn new(config: &TrainConfig, embedding: ParamTensor, rng: &mut Rng) -> Result<Model> {
        config.validate()?;
        let (d, h) = (config.word_dim, config.hidden);
        if embedding.value.rows() != d || embedding.value.cols() == 0 {
            return Err(Error::Shape(format!(
                "embedding is {:?}, expected {d} rows",
                embedding.value.shape()
            )));
        }
        let mut store = ParamStore::new();
        let embedding = store.register(embedding);
        let f1 = store.glorot("feature.F1", config.qe_dim, 2, rng);
        let f2 = store.glorot("feature.F2", config.ee_dim, 2, rng);

        let q_lstm = LstmParams::register(&mut store, "question", d, h, config.candidate, rng);
        let attention = QuestionEncoder::register_attention(&mut store, h, rng);
        if config.pooling != PoolingMode::Attention {
            store.get_mut(attention.v_q).trainable = false;
            store.get_mut(attention.w_a).trainable = false;
        }
        let question = QuestionEncoder {
            lstm: q_lstm,
            attention,
            mode: config.pooling,
            dropout: config.dropout,
            question_dropout: config.question_dropout,
        };

        let l1_input = d + h + config.qe_dim + config.ee_dim;
        let mut layers = vec![LstmParams::register(&mut store, "evidence.l1", l1_input, h, config.candidate, rng)];
        if config.n_layers >= 2 {
            layers.push(LstmParams::register(&mut store, "evidence.l2", h, h, config.candidate, rng));
        }
        if config.n_layers >= 3 {
            let input = if config.cross_links { 2 * h } else { h };
            layers.push(LstmParams::register(&mut store, "evidence.l3", input, h, config.candidate, rng));
        }
        let evidence = EvidenceEncoder {
            layers,
            qe_embedding: f1,
            ee_embedding: f2,
            cross_links: config.cross_links,
            dropout: config.dropout,
        };

        let w_e = store.glorot("decoder.W_e", NUM_LABELS, h, rng);
        let (transitions, feedback) = match config.decoder {
            DecoderKind::Crf => (Some(store.zeros("crf.transitions", NUM_LABELS + 1, NUM_LABELS)), None),
            DecoderKind::Softmax => (None, None),
            DecoderKind::SoftmaxPrev => (None, Some(store.zeros("decoder.U", NUM_LABELS, NUM_LABELS + 1))),
        };
        Ok(Model {
            config: config.clone(),
            store,
            embedding,
            question,
            evidence,
            w_e,
            transitions,
            feedback,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn vocab_size(&self) -> usize {
        self.store.value(self.embedding).cols()
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    pub fn question_encoder(&self) -> &QuestionEncoder {
        &self.question
    }

    pub fn evidence_encoder(&self) -> &EvidenceEncoder {
        &self.evidence
    }

    /// `W_e`, `L×H`.
    pub fn emission_weights(&self) -> ParamId {
        self.w_e
    }

    /// CRF transitions or the previous-label matrix, when the decoder has one.
    pub fn decoder_extra(&self) -> Option<ParamId> {
        self.transitions.or(self.feedback)
    }

    /// Emission matrix (`M×L`) for an evidence, plus the intermediate
    /// traces needed by [`Model::loss_forward_backward`].
    fn forward(
        &self,
        store: &ParamStore,
        ex: &Example,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Forward> {
        let (q_enc, q_trace) = self
            .question
            .encode(store, self.embedding, &ex.question, training, rng)?;
        let (ev_states, ev_trace) = self.evidence.encode(
            store,
            self.embedding,
            &ex.evidence,
            &q_enc.r_q,
            &ex.features,
            training,
            rng,
        )?;
        let em = emissions(ev_states.top(), store.value(self.w_e))?;
        Ok(Forward {
            q_enc,
            q_trace,
            top: ev_states.top().to_vec(),
            ev_trace,
            emissions: em,
        })
    }

    fn lattice(&self, store: &ParamStore, em: Matrix) -> Result<Lattice> {
        let trans = self.transitions.expect("crf decoder has transitions");
        Lattice::new(em, store.value(trans).clone())
    }

    /// Decoder NLL of `golden` given emissions.
    fn decoder_nll(&self, store: &ParamStore, em: Matrix, golden: &[usize]) -> Result<f64> {
        Ok(match self.config.decoder {
            DecoderKind::Crf => crf_nll_and_grad(&self.lattice(store, em)?, golden)?.nll,
            DecoderKind::Softmax => softmax_nll_and_grad(&em, golden)?.0,
            DecoderKind::SoftmaxPrev => {
                let u = store.value(self.feedback.expect("softmax_prev has U"));
                softmax_prev_nll_and_grad(&em, u, golden)?.nll
            }
        })
    }

    fn check_labels(ex: &Example) -> Result<Vec<usize>> {
        if ex.labels.len() != ex.evidence.len() {
            return Err(Error::Shape(format!(
                "{} labels for an evidence of {} tokens",
                ex.labels.len(),
                ex.evidence.len()
            )));
        }
        Ok(to_indices(&ex.labels))
    }

    /// Single-instance NLL with dropout off, evaluated at `store` (which must
    /// share this model's layout). Used by gradient checks.
    pub fn nll_with(&self, store: &ParamStore, ex: &Example) -> Result<f64> {
        let golden = Self::check_labels(ex)?;
        let fwd = self.forward(store, ex, false, &mut Rng::new(0))?;
        self.decoder_nll(store, fwd.emissions, &golden)
    }

    pub fn nll(&self, ex: &Example) -> Result<f64> {
        self.nll_with(&self.store, ex)
    }

    /// NLL of one instance; adds its gradient into `grads`.
    pub fn loss_forward_backward(
        &self,
        ex: &Example,
        training: bool,
        rng: &mut Rng,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let golden = Self::check_labels(ex)?;
        let store = &self.store;
        let fwd = self.forward(store, ex, training, rng)?;
        let (nll, d_em) = match self.config.decoder {
            DecoderKind::Crf => {
                let loss = crf_nll_and_grad(&self.lattice(store, fwd.emissions)?, &golden)?;
                grads
                    .get_mut(self.transitions.expect("crf decoder has transitions"))
                    .add_assign(&loss.d_transitions);
                (loss.nll, loss.d_emissions)
            }
            DecoderKind::Softmax => softmax_nll_and_grad(&fwd.emissions, &golden)?,
            DecoderKind::SoftmaxPrev => {
                let u = self.feedback.expect("softmax_prev has U");
                let loss = softmax_prev_nll_and_grad(&fwd.emissions, store.value(u), &golden)?;
                grads.get_mut(u).add_assign(&loss.d_feedback);
                (loss.nll, loss.d_emissions)
            }
        };
        let d_top = emissions_backward(&fwd.top, store.value(self.w_e), &d_em, grads.get_mut(self.w_e));
        let d_rq = self
            .evidence
            .backward(store, self.embedding, &fwd.ev_trace, &d_top, grads)?;
        self.question
            .backward(store, self.embedding, &fwd.q_enc, &fwd.q_trace, &d_rq, grads)?;
        Ok(nll)
    }

    /// Most likely label sequence (Viterbi, per-position argmax, or greedy).
    pub fn decode(&self, question: &[usize], evidence: &[usize], features: &FeatureIds) -> Result<LabelSequence> {
        let ex = Example {
            question: question.to_vec(),
            evidence: evidence.to_vec(),
            features: features.clone(),
            labels: Vec::new(),
        };
        let store = &self.store;
        let em = self.forward(store, &ex, false, &mut Rng::new(0))?.emissions;
        let path = match self.config.decoder {
            DecoderKind::Crf => crf_viterbi(&self.lattice(store, em)?).0,
            DecoderKind::Softmax => softmax_decode(&em),
            DecoderKind::SoftmaxPrev => {
                softmax_prev_decode(&em, store.value(self.feedback.expect("softmax_prev has U")))?.0
            }
        };
        from_indices(&path)
    }
}

/// The bundled gradient-check instance: a 4-token question, a 5-token
/// evidence labeled `O1 B I O2 O2`, an 8-word trainable vocabulary.
pub fn toy_example() -> Example {
    Example {
        question: vec![1, 2, 3, 7],
        evidence: vec![4, 2, 5, 6, 1],
        features: FeatureIds {
            qe: vec![0, 1, 0, 0, 1],
            ee: vec![1, 0, 1, 0, 0],
        },
        labels: vec![Label::O1, Label::B, Label::I, Label::O2, Label::O2],
    }
}

/// Builds a model for `config` with dropout off, randomizes the decoder's
/// transition-like tensor, and compares analytic gradients of the toy
/// instance's NLL against central differences of the double-double
/// reference forward pass.
pub fn toy_gradient_check(config: &TrainConfig, check: &GradCheckConfig) -> Result<GradCheckReport> {
    let cfg = TrainConfig {
        dropout: 0.0,
        ..config.clone()
    };
    let mut rng = Rng::new(check.seed);
    let vocab = 8;
    let r = (6.0 / (cfg.word_dim + vocab) as f64).sqrt();
    let emb = Matrix::from_fn(cfg.word_dim, vocab, |_, _| rng.uniform_range(-r, r));
    let mut model = Model::new(&cfg, ParamTensor::new("embedding.E", emb, true), &mut rng)?;
    if let Some(t) = model.decoder_extra() {
        for v in model.store.get_mut(t).value.as_mut_slice() {
            *v = rng.uniform_range(-1.0, 1.0);
        }
    }
    let ex = toy_example();
    let mut grads = model.store.zero_grads();
    model.loss_forward_backward(&ex, false, &mut Rng::new(0), &mut grads)?;
    let view = model.clone();
    let mut failed = None;
    let report = finite_diff_check(
        &mut model.store,
        &grads,
        |s| match reference::nll(&view, s, &ex) {
            Ok(v) => v,
            Err(e) => {
                failed.get_or_insert(e);
                Dd::from(f64::NAN)
            }
        },
        check,
    )?;
    match failed {
        Some(e) => Err(e),
        None => Ok(report),
    }
}


struct Forward {
    q_enc: crate::question::QuestionEncoding,
    q_trace: crate::question::QuestionTrace,
    top: Vec<Vec<f64>>,
    ev_trace: crate::evidence::EvidenceTrace,
    emissions: Matrix,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::parse_labels;

    pub(crate) fn tiny_config(decoder: DecoderKind, pooling: PoolingMode, cross_links: bool) -> TrainConfig {
        TrainConfig {
            hidden: 4,
            word_dim: 3,
            qe_dim: 2,
            ee_dim: 2,
            dropout: 0.0,
            decoder,
            pooling,
            cross_links,
            ..TrainConfig::default()
        }
    }

    fn model(cfg: &TrainConfig, seed: u64) -> Model {
        let mut rng = Rng::new(seed);
        let r = (6.0f64 / 11.0).sqrt();
        let emb = Matrix::from_fn(cfg.word_dim, 8, |_, _| rng.uniform_range(-r, r));
        Model::new(cfg, ParamTensor::new("embedding.E", emb, true), &mut rng).unwrap()
    }

    fn example() -> Example {
        Example {
            question: vec![1, 2, 3],
            evidence: vec![4, 2, 5, 6],
            features: FeatureIds {
                qe: vec![0, 1, 0, 0],
                ee: vec![1, 0, 1, 0],
            },
            labels: parse_labels("O1 B I O2").unwrap(),
        }
    }

    #[test]
    fn tensor_layout() {
        let m = model(&tiny_config(DecoderKind::Crf, PoolingMode::Attention, true), 1);
        let names: Vec<&str> = m.store().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names[0], "embedding.E");
        assert_eq!(*names.last().unwrap(), "crf.transitions");
        assert_eq!(m.store().value(m.store().id("evidence.l1.W_xi").unwrap()).shape(), (4, 3 + 4 + 2 + 2));
        assert_eq!(m.store().value(m.store().id("evidence.l3.W_xi").unwrap()).shape(), (4, 8));
        assert!(m.store().value(m.transitions.unwrap()).max_abs() == 0.0);
    }

    #[test]
    fn unused_attention_is_frozen() {
        let m = model(&tiny_config(DecoderKind::Crf, PoolingMode::Max, true), 1);
        assert!(!m.store().get(m.question.attention.w_a).trainable);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for decoder in DecoderKind::ALL {
            for pooling in PoolingMode::ALL {
                for cross_links in [true, false] {
                    let cfg = tiny_config(decoder, pooling, cross_links);
                    let report = toy_gradient_check(&cfg, &GradCheckConfig::default()).unwrap();
                    assert!(report.passed(), "{decoder} {pooling} {cross_links}: {report}");
                }
            }
        }
    }

    #[test]
    fn reference_forward_agrees_with_f64() {
        for decoder in DecoderKind::ALL {
            for pooling in PoolingMode::ALL {
                for cross_links in [true, false] {
                    let m = model(&tiny_config(decoder, pooling, cross_links), 11);
                    let ex = toy_example();
                    let fast = m.nll(&ex).unwrap();
                    let precise = reference::nll(&m, m.store(), &ex).unwrap().to_f64();
                    assert!((fast - precise).abs() <= 1e-13 * precise.abs(), "{fast} vs {precise}");
                }
            }
        }
    }

    #[test]
    fn plain_f64_differences_agree_loosely() {
        let cfg = tiny_config(DecoderKind::Crf, PoolingMode::Attention, true);
        let mut m = model(&cfg, 12);
        let ex = toy_example();
        let mut grads = m.store().zero_grads();
        m.loss_forward_backward(&ex, false, &mut Rng::new(0), &mut grads).unwrap();
        let view = m.clone();
        let report =
            finite_diff_check(&mut m.store, &grads, |s| view.nll_with(s, &ex).unwrap(), &GradCheckConfig::default())
                .unwrap();
        for t in &report.tensors {
            let (_, a, n) = t.worst.unwrap();
            assert!((a - n).abs() < 1e-9, "{}: {a} vs {n}", t.name);
        }
    }

    #[test]
    fn negative_instance_has_finite_loss() {
        let m = model(&tiny_config(DecoderKind::Crf, PoolingMode::Attention, true), 5);
        let mut ex = example();
        ex.labels = vec![Label::O1; 4];
        let mut grads = m.store().zero_grads();
        let nll = m.loss_forward_backward(&ex, true, &mut Rng::new(1), &mut grads).unwrap();
        assert!(nll.is_finite() && nll >= 0.0);
    }

    #[test]
    fn label_length_mismatch_is_an_error() {
        let m = model(&tiny_config(DecoderKind::Softmax, PoolingMode::Average, false), 5);
        let mut ex = example();
        ex.labels.pop();
        assert!(m.nll(&ex).is_err());
    }

    #[test]
    fn decode_length_matches_evidence() {
        for decoder in DecoderKind::ALL {
            let m = model(&tiny_config(decoder, PoolingMode::Attention, true), 6);
            let ex = example();
            assert_eq!(m.decode(&ex.question, &ex.evidence, &ex.features).unwrap().len(), 4);
        }
    }

    #[test]
    fn zero_transitions_match_softmax() {
        let crf = model(&tiny_config(DecoderKind::Crf, PoolingMode::Attention, true), 7);
        let soft = model(&tiny_config(DecoderKind::Softmax, PoolingMode::Attention, true), 7);
        let ex = example();
        assert!((crf.nll(&ex).unwrap() - soft.nll(&ex).unwrap()).abs() < 1e-12);
    }
}
