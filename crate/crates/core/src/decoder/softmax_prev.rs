//! Softmax with previous-label feedback: position `j` scores
//! `emissions_j + U·onehot(y_{j−1})`, where `U` is `L×(L+1)` and column `L`
//! stands for START. Trained with teacher forcing, decoded greedily.

use crate::error::{Error, Result};
use crate::numeric::{argmax, log_sum_exp, softmax, Matrix};

fn check(emissions: &Matrix, feedback: &Matrix) -> Result<()> {
    let l = emissions.cols();
    if feedback.shape() != (l, l + 1) {
        return Err(Error::Shape(format!(
            "previous-label matrix must be {l}x{}, got {:?}",
            l + 1,
            feedback.shape()
        )));
    }
    Ok(())
}

fn logits(emissions: &Matrix, feedback: &Matrix, j: usize, prev: usize) -> Vec<f64> {
    emissions
        .row(j)
        .iter()
        .enumerate()
        .map(|(y, e)| e + feedback.get(y, prev))
        .collect()
}

/// Log-probability of a label chain under the feedback model.
pub fn softmax_prev_log_prob(emissions: &Matrix, feedback: &Matrix, labels: &[usize]) -> Result<f64> {
    check(emissions, feedback)?;
    let mut prev = emissions.cols();
    let mut total = 0.0;
    for (j, &y) in labels.iter().enumerate() {
        let z = logits(emissions, feedback, j, prev);
        total += z[y] - log_sum_exp(&z);
        prev = y;
    }
    Ok(total)
}

/// Greedy left-to-right decode feeding back predictions. Returns the labels
/// and their chain log-probability.
pub fn softmax_prev_decode(emissions: &Matrix, feedback: &Matrix) -> Result<(Vec<usize>, f64)> {
    check(emissions, feedback)?;
    let mut prev = emissions.cols();
    let mut out = Vec::with_capacity(emissions.rows());
    let mut total = 0.0;
    for j in 0..emissions.rows() {
        let z = logits(emissions, feedback, j, prev);
        let y = argmax(&z);
        total += z[y] - log_sum_exp(&z);
        out.push(y);
        prev = y;
    }
    Ok((out, total))
}

/// Teacher-forced nll with gradients for emissions and `U`.
#[derive(Clone, Debug)]
pub struct SoftmaxPrevLoss {
    pub nll: f64,
    pub d_emissions: Matrix,
    pub d_feedback: Matrix,
}

pub fn softmax_prev_nll_and_grad(
    emissions: &Matrix,
    feedback: &Matrix,
    golden: &[usize],
) -> Result<SoftmaxPrevLoss> {
    check(emissions, feedback)?;
    let (m, l) = emissions.shape();
    if golden.len() != m {
        return Err(Error::Shape(format!(
            "label sequence of length {} for {m} positions",
            golden.len()
        )));
    }
    let mut d_emissions = Matrix::zeros(m, l);
    let mut d_feedback = Matrix::zeros(l, l + 1);
    let mut nll = 0.0;
    let mut prev = l;
    for (j, &y) in golden.iter().enumerate() {
        if y >= l {
            return Err(Error::InvalidInput(format!("label index {y} out of range")));
        }
        let z = logits(emissions, feedback, j, prev);
        nll += log_sum_exp(&z) - z[y];
        let mut p = softmax(&z);
        p[y] -= 1.0;
        for (k, pk) in p.iter().enumerate() {
            d_emissions.set(j, k, *pk);
            d_feedback.add_at(k, prev, *pk);
        }
        prev = y;
    }
    Ok(SoftmaxPrevLoss {
        nll,
        d_emissions,
        d_feedback,
    })
}
