//! Evidence encoder: up to three stacked LSTM layers. Layer 1 reads
//! `[word embedding; r_q; F1·qe; F2·ee]`, layer 2 runs right-to-left over
//! layer 1, layer 3 reads `[e1; e2]` (or `e2` alone without cross-layer
//! links). The last layer present feeds the decoder.

use crate::error::{Error, Result};
use crate::lstm::{lstm_backward, lstm_forward, LstmParams, LstmTrace};
use crate::numeric::{apply_dropout, DropoutMask, Gradients, ParamId, ParamStore, Rng};
use crate::question::{embed, sanitize_ids};

/// Per-token binary common-word indicators.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureIds {
    /// Token also occurs in the question.
    pub qe: Vec<u8>,
    /// Token also occurs in the companion evidence.
    pub ee: Vec<u8>,
}

impl FeatureIds {
    pub fn zeros(len: usize) -> Self {
        FeatureIds {
            qe: vec![0; len],
            ee: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.qe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qe.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct EvidenceEncoder {
    pub layers: Vec<LstmParams>,
    /// `F1`, `D1×2`.
    pub qe_embedding: ParamId,
    /// `F2`, `D2×2`.
    pub ee_embedding: ParamId,
    pub cross_links: bool,
    pub dropout: f64,
}

/// Position-aligned outputs of every layer (after dropout when training).
#[derive(Clone, Debug)]
pub struct EvidenceStates {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl EvidenceStates {
    pub fn e1(&self) -> &[Vec<f64>] {
        &self.layers[0]
    }

    pub fn e2(&self) -> Option<&[Vec<f64>]> {
        self.layers.get(1).map(Vec::as_slice)
    }

    pub fn e3(&self) -> Option<&[Vec<f64>]> {
        self.layers.get(2).map(Vec::as_slice)
    }

    /// Output of the top layer.
    pub fn top(&self) -> &[Vec<f64>] {
        self.layers.last().expect("at least one layer")
    }
}

#[derive(Clone, Debug)]
pub struct EvidenceTrace {
    token_ids: Vec<usize>,
    features: FeatureIds,
    lstm: Vec<LstmTrace>,
    masks: Vec<Vec<Option<DropoutMask>>>,
}

impl EvidenceEncoder {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    fn word_dim(&self, store: &ParamStore, embeddings: ParamId) -> usize {
        store.value(embeddings).rows()
    }

    pub fn encode(
        &self,
        store: &ParamStore,
        embeddings: ParamId,
        token_ids: &[usize],
        r_q: &[f64],
        features: &FeatureIds,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(EvidenceStates, EvidenceTrace)> {
        if token_ids.is_empty() {
            return Err(Error::InvalidInput("empty evidence".into()));
        }
        if features.qe.len() != token_ids.len() || features.ee.len() != token_ids.len() {
            return Err(Error::Shape(format!(
                "evidence has {} tokens but features cover {}/{}",
                token_ids.len(),
                features.qe.len(),
                features.ee.len()
            )));
        }
        if features.qe.iter().chain(&features.ee).any(|&v| v > 1) {
            return Err(Error::InvalidInput("feature values must be 0 or 1".into()));
        }
        let emb = store.value(embeddings);
        let (ids, unknown) = sanitize_ids(token_ids, emb.cols());
        if unknown > 0 {
            log::warn!("{unknown} evidence token ids outside the vocabulary mapped to UNK");
        }
        let f1 = store.value(self.qe_embedding);
        let f2 = store.value(self.ee_embedding);
        let x1: Vec<Vec<f64>> = ids
            .iter()
            .enumerate()
            .map(|(j, &id)| {
                let mut x = embed(emb, id);
                x.extend_from_slice(r_q);
                x.extend(f1.col_to_vec(features.qe[j] as usize));
                x.extend(f2.col_to_vec(features.ee[j] as usize));
                x
            })
            .collect();

        let mut outputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input: Vec<Vec<f64>> = match k {
                0 => x1.clone(),
                1 => outputs[0].clone(),
                _ if self.cross_links => outputs[0]
                    .iter()
                    .zip(&outputs[1])
                    .map(|(a, b)| a.iter().chain(b).copied().collect())
                    .collect(),
                _ => outputs[1].clone(),
            };
            let (raw, trace) = lstm_forward(store, layer, &input, k == 1)?;
            let mut dropped = Vec::with_capacity(raw.len());
            let mut layer_masks = Vec::with_capacity(raw.len());
            for y in &raw {
                let (out, mask) = apply_dropout(y, self.dropout, rng, training)?;
                dropped.push(out);
                layer_masks.push(mask);
            }
            outputs.push(dropped);
            traces.push(trace);
            masks.push(layer_masks);
        }
        Ok((
            EvidenceStates { layers: outputs },
            EvidenceTrace {
                token_ids: ids,
                features: features.clone(),
                lstm: traces,
                masks,
            },
        ))
    }

    /// Backpropagates gradients w.r.t. the top layer's outputs. Returns the
    /// gradient for `r_q`, summed over all positions.
    pub fn backward(
        &self,
        store: &ParamStore,
        embeddings: ParamId,
        trace: &EvidenceTrace,
        d_top: &[Vec<f64>],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        let n = trace.token_ids.len();
        let n_layers = self.layers.len();
        if d_top.len() != n || trace.lstm.len() != n_layers {
            return Err(Error::Shape("evidence backward: trace does not match encoder".into()));
        }
        let h = self.layers[0].width();
        // Gradients w.r.t. each layer's (dropped) outputs.
        let mut d_out: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; h]; n]; n_layers];
        d_out[n_layers - 1] = d_top.to_vec();

        for k in (0..n_layers).rev() {
            let d_raw: Vec<Vec<f64>> = d_out[k]
                .iter()
                .zip(&trace.masks[k])
                .map(|(d, m)| match m {
                    Some(m) => m.backward(d),
                    None => d.clone(),
                })
                .collect();
            let dxs = lstm_backward(store, &self.layers[k], &trace.lstm[k], &d_raw, grads)?;
            match k {
                0 => return Ok(self.scatter_input(store, embeddings, trace, &dxs, grads)),
                1 => add_into(&mut d_out[0], &dxs, 0),
                _ => {
                    if self.cross_links {
                        add_into(&mut d_out[0], &dxs, 0);
                        add_into(&mut d_out[1], &dxs, h);
                    } else {
                        add_into(&mut d_out[1], &dxs, 0);
                    }
                }
            }
        }
        unreachable!("layer 0 always returns")
    }

    /// Splits layer-1 input gradients into word, `r_q` and feature parts.
    fn scatter_input(
        &self,
        store: &ParamStore,
        embeddings: ParamId,
        trace: &EvidenceTrace,
        dxs: &[Vec<f64>],
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let d = self.word_dim(store, embeddings);
        let h = self.layers[0].width();
        let d1 = store.value(self.qe_embedding).rows();
        let mut d_rq = vec![0.0; h];
        for (j, dx) in dxs.iter().enumerate() {
            grads.get_mut(embeddings).add_to_col(trace.token_ids[j], &dx[..d]);
            for (acc, v) in d_rq.iter_mut().zip(&dx[d..d + h]) {
                *acc += v;
            }
            grads
                .get_mut(self.qe_embedding)
                .add_to_col(trace.features.qe[j] as usize, &dx[d + h..d + h + d1]);
            grads
                .get_mut(self.ee_embedding)
                .add_to_col(trace.features.ee[j] as usize, &dx[d + h + d1..]);
        }
        d_rq
    }
}

fn add_into(dst: &mut [Vec<f64>], src: &[Vec<f64>], offset: usize) {
    for (d, s) in dst.iter_mut().zip(src) {
        for (a, b) in d.iter_mut().zip(&s[offset..]) {
            *a += b;
        }
    }
}
