//! Independent per-position softmax over emissions.

use crate::error::{Error, Result};
use crate::numeric::{argmax, log_sum_exp, softmax, Matrix};

pub fn softmax_decode(emissions: &Matrix) -> Vec<usize> {
    (0..emissions.rows()).map(|j| argmax(emissions.row(j))).collect()
}

/// `nll = −Σ_j log softmax(emissions_j)[golden_j]` and its emission gradient.
pub fn softmax_nll_and_grad(emissions: &Matrix, golden: &[usize]) -> Result<(f64, Matrix)> {
    let (m, l) = emissions.shape();
    if golden.len() != m {
        return Err(Error::Shape(format!(
            "label sequence of length {} for {m} positions",
            golden.len()
        )));
    }
    let mut nll = 0.0;
    let mut d = Matrix::zeros(m, l);
    for (j, &y) in golden.iter().enumerate() {
        if y >= l {
            return Err(Error::InvalidInput(format!("label index {y} out of range")));
        }
        let row = emissions.row(j);
        nll += log_sum_exp(row) - row[y];
        let p = softmax(row);
        d.row_mut(j).copy_from_slice(&p);
        d.add_at(j, y, -1.0);
    }
    Ok((nll, d))
}
