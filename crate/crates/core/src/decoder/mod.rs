//! Label scoring and decoding: linear-chain CRF, independent softmax and
//! softmax with previous-label feedback.

pub mod crf;
mod label;
pub mod oracle;
pub mod softmax;
pub mod softmax_prev;

use std::fmt;
use std::str::FromStr;

pub use crf::{crf_log_partition, crf_marginals, crf_nll_and_grad, crf_viterbi, CrfLoss, Lattice, Marginals};
pub use label::{
    from_indices, parse_labels, render_labels, to_indices, Label, LabelSequence, NUM_LABELS, START,
};
pub use softmax::{softmax_decode, softmax_nll_and_grad};
pub use softmax_prev::{
    softmax_prev_decode, softmax_prev_log_prob, softmax_prev_nll_and_grad, SoftmaxPrevLoss,
};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    #[default]
    Crf,
    Softmax,
    SoftmaxPrev,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [DecoderKind::Crf, DecoderKind::Softmax, DecoderKind::SoftmaxPrev];

    pub fn as_str(self) -> &'static str {
        match self {
            DecoderKind::Crf => "crf",
            DecoderKind::Softmax => "softmax",
            DecoderKind::SoftmaxPrev => "softmax_prev",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf" => Ok(DecoderKind::Crf),
            "softmax" => Ok(DecoderKind::Softmax),
            "softmax_prev" => Ok(DecoderKind::SoftmaxPrev),
            other => Err(Error::Config(format!(
                "decoder must be crf, softmax or softmax_prev, got {other:?}"
            ))),
        }
    }
}

/// Row `j` is `W_e · states[j]`.
pub fn emissions(states: &[Vec<f64>], w_e: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(states.len(), w_e.rows());
    for (j, s) in states.iter().enumerate() {
        if s.len() != w_e.cols() {
            return Err(Error::Shape(format!(
                "state of length {} at position {j}, W_e is {:?}",
                s.len(),
                w_e.shape()
            )));
        }
        w_e.matvec_acc(s, out.row_mut(j));
    }
    Ok(out)
}

/// Backward of [`emissions`]: accumulates into `d_w_e`, returns state gradients.
pub fn emissions_backward(
    states: &[Vec<f64>],
    w_e: &Matrix,
    d_emissions: &Matrix,
    d_w_e: &mut Matrix,
) -> Vec<Vec<f64>> {
    states
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let d = d_emissions.row(j);
            d_w_e.add_outer(d, s);
            let mut ds = vec![0.0; s.len()];
            w_e.matvec_t_acc(d, &mut ds);
            ds
        })
        .collect()
}
