//! Linear-chain CRF over a label lattice: forward algorithm, Viterbi and
//! forward-backward gradients, all in log space.

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, Matrix};

/// Emission scores `M×L` and transitions `(L+1)×L`; the last transition row
/// scores the first label.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub emissions: Matrix,
    pub transitions: Matrix,
}

impl Lattice {
    pub fn new(emissions: Matrix, transitions: Matrix) -> Result<Self> {
        let l = emissions.cols();
        if emissions.rows() == 0 {
            return Err(Error::InvalidInput("lattice has no positions".into()));
        }
        if transitions.shape() != (l + 1, l) {
            return Err(Error::Shape(format!(
                "transitions must be {}x{l}, got {:?}",
                l + 1,
                transitions.shape()
            )));
        }
        if !emissions.all_finite() || !transitions.all_finite() {
            return Err(Error::InvalidInput("lattice contains non-finite scores".into()));
        }
        Ok(Lattice {
            emissions,
            transitions,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.emissions.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn num_labels(&self) -> usize {
        self.emissions.cols()
    }

    #[inline]
    pub fn start_row(&self) -> usize {
        self.num_labels()
    }

    /// Unnormalized score of a label path.
    pub fn score(&self, path: &[usize]) -> f64 {
        assert_eq!(path.len(), self.len());
        let mut prev = self.start_row();
        let mut total = 0.0;
        for (j, &y) in path.iter().enumerate() {
            total += self.transitions.get(prev, y) + self.emissions.get(j, y);
            prev = y;
        }
        total
    }

    fn check_path(&self, path: &[usize]) -> Result<()> {
        if path.len() != self.len() {
            return Err(Error::Shape(format!(
                "label sequence of length {} for a lattice of length {}",
                path.len(),
                self.len()
            )));
        }
        if let Some(&bad) = path.iter().find(|&&y| y >= self.num_labels()) {
            return Err(Error::InvalidInput(format!(
                "label index {bad} out of range for {} labels",
                self.num_labels()
            )));
        }
        Ok(())
    }
}

fn forward_table(lat: &Lattice) -> Vec<Vec<f64>> {
    let (m, l) = lat.emissions.shape();
    let start = lat.start_row();
    let mut alpha = Vec::with_capacity(m);
    alpha.push(
        (0..l)
            .map(|y| lat.transitions.get(start, y) + lat.emissions.get(0, y))
            .collect::<Vec<_>>(),
    );
    let mut buf = vec![0.0; l];
    for j in 1..m {
        let prev: &Vec<f64> = &alpha[j - 1];
        let row = (0..l)
            .map(|y| {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = prev[k] + lat.transitions.get(k, y);
                }
                log_sum_exp(&buf) + lat.emissions.get(j, y)
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward_table(lat: &Lattice) -> Vec<Vec<f64>> {
    let (m, l) = lat.emissions.shape();
    let mut beta = vec![vec![0.0; l]; m];
    let mut buf = vec![0.0; l];
    for j in (0..m - 1).rev() {
        for k in 0..l {
            for (y, b) in buf.iter_mut().enumerate() {
                *b = lat.transitions.get(k, y) + lat.emissions.get(j + 1, y) + beta[j + 1][y];
            }
            beta[j][k] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `log Z` over all `L^M` label paths.
pub fn crf_log_partition(lat: &Lattice) -> f64 {
    let alpha = forward_table(lat);
    log_sum_exp(alpha.last().expect("non-empty lattice"))
}

/// Posterior marginals from forward-backward.
#[derive(Clone, Debug)]
pub struct Marginals {
    pub log_partition: f64,
    /// `P(y_j = l)`, `M×L`.
    pub unary: Matrix,
    /// Expected transition counts summed over positions, `(L+1)×L`,
    /// including the start row.
    pub transitions: Matrix,
}

pub fn crf_marginals(lat: &Lattice) -> Marginals {
    let (m, l) = lat.emissions.shape();
    let alpha = forward_table(lat);
    let beta = backward_table(lat);
    let log_z = log_sum_exp(&alpha[m - 1]);

    let unary = Matrix::from_fn(m, l, |j, y| (alpha[j][y] + beta[j][y] - log_z).exp());
    let mut transitions = Matrix::zeros(l + 1, l);
    for y in 0..l {
        transitions.set(lat.start_row(), y, unary.get(0, y));
    }
    for j in 1..m {
        for k in 0..l {
            for y in 0..l {
                let lp = alpha[j - 1][k]
                    + lat.transitions.get(k, y)
                    + lat.emissions.get(j, y)
                    + beta[j][y]
                    - log_z;
                transitions.add_at(k, y, lp.exp());
            }
        }
    }
    Marginals {
        log_partition: log_z,
        unary,
        transitions,
    }
}

/// Highest-scoring path and its unnormalized score. Ties go to the lowest
/// label index, both for predecessors and for the final label.
pub fn crf_viterbi(lat: &Lattice) -> (Vec<usize>, f64) {
    let (m, l) = lat.emissions.shape();
    let start = lat.start_row();
    let mut delta: Vec<f64> = (0..l)
        .map(|y| lat.transitions.get(start, y) + lat.emissions.get(0, y))
        .collect();
    let mut back = vec![vec![0usize; l]; m];
    for j in 1..m {
        let mut next = vec![0.0; l];
        for y in 0..l {
            let mut best_k = 0;
            let mut best = delta[0] + lat.transitions.get(0, y);
            for k in 1..l {
                let s = delta[k] + lat.transitions.get(k, y);
                if s > best {
                    best = s;
                    best_k = k;
                }
            }
            back[j][y] = best_k;
            next[y] = best + lat.emissions.get(j, y);
        }
        delta = next;
    }
    let mut last = 0;
    for y in 1..l {
        if delta[y] > delta[last] {
            last = y;
        }
    }
    let score = delta[last];
    let mut path = vec![0; m];
    path[m - 1] = last;
    for j in (1..m).rev() {
        path[j - 1] = back[j][path[j]];
    }
    (path, score)
}

/// Negative log-likelihood of `golden` with gradients w.r.t. emissions and
/// transitions (marginals minus indicators).
#[derive(Clone, Debug)]
pub struct CrfLoss {
    pub nll: f64,
    pub d_emissions: Matrix,
    pub d_transitions: Matrix,
}

pub fn crf_nll_and_grad(lat: &Lattice, golden: &[usize]) -> Result<CrfLoss> {
    lat.check_path(golden)?;
    let marg = crf_marginals(lat);
    let nll = marg.log_partition - lat.score(golden);

    let mut d_emissions = marg.unary;
    let mut d_transitions = marg.transitions;
    let mut prev = lat.start_row();
    for (j, &y) in golden.iter().enumerate() {
        d_emissions.add_at(j, y, -1.0);
        d_transitions.add_at(prev, y, -1.0);
        prev = y;
    }
    Ok(CrfLoss {
        // Rounding can push a saturated nll a hair below zero.
        nll: nll.max(0.0),
        d_emissions,
        d_transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::oracle;
    use crate::numeric::Rng;

    fn random_lattice(m: usize, l: usize, seed: u64) -> Lattice {
        let mut rng = Rng::new(seed);
        Lattice::new(
            Matrix::from_fn(m, l, |_, _| rng.uniform_range(-2.0, 2.0)),
            Matrix::from_fn(l + 1, l, |_, _| rng.uniform_range(-2.0, 2.0)),
        )
        .unwrap()
    }

    fn zero_lattice(m: usize, l: usize) -> Lattice {
        Lattice::new(Matrix::zeros(m, l), Matrix::zeros(l + 1, l)).unwrap()
    }

    #[test]
    fn uniform_lattice_partition() {
        let lz = crf_log_partition(&zero_lattice(3, 4));
        assert!((lz - 3.0 * 4f64.ln()).abs() < 1e-12);
        assert!((lz - 4.158883).abs() < 1e-6);
    }

    #[test]
    fn single_position_partition() {
        let lat = random_lattice(1, 4, 1);
        let direct: Vec<f64> = (0..4)
            .map(|y| lat.transitions.get(4, y) + lat.emissions.get(0, y))
            .collect();
        assert!((crf_log_partition(&lat) - log_sum_exp(&direct)).abs() < 1e-12);
        let (path, _) = crf_viterbi(&lat);
        assert_eq!(path[0], crate::numeric::argmax(&direct));
    }

    #[test]
    fn partition_matches_enumeration() {
        let lat = random_lattice(4, 4, 2);
        let brute = oracle::log_partition(&lat);
        assert!((crf_log_partition(&lat) - brute).abs() < 1e-10);
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let lat = random_lattice(5, 4, 3);
        let (path, score) = crf_viterbi(&lat);
        let (bpath, bscore) = oracle::best_path(&lat);
        assert_eq!(path, bpath);
        assert!((score - bscore).abs() < 1e-10);
        assert!((lat.score(&path) - score).abs() < 1e-12);
    }

    #[test]
    fn zero_transitions_decode_independently() {
        let mut lat = random_lattice(6, 4, 4);
        lat.transitions.fill(0.0);
        let (path, _) = crf_viterbi(&lat);
        for (j, &y) in path.iter().enumerate() {
            assert_eq!(y, crate::numeric::argmax(lat.emissions.row(j)));
        }
    }

    #[test]
    fn marginals_match_enumeration() {
        let lat = random_lattice(4, 4, 5);
        let m = crf_marginals(&lat);
        let brute = oracle::unary_marginals(&lat);
        for j in 0..4 {
            let sum: f64 = m.unary.row(j).iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
            for y in 0..4 {
                assert!((m.unary.get(j, y) - brute.get(j, y)).abs() < 1e-10);
            }
        }
        // Pairwise counts are consistent with unary marginals.
        for y in 0..4 {
            let incoming: f64 = (0..4).map(|k| m.transitions.get(k, y)).sum::<f64>();
            let expected: f64 = (1..4).map(|j| m.unary.get(j, y)).sum();
            assert!((incoming - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_lattice_gradient() {
        let lat = zero_lattice(2, 4);
        let loss = crf_nll_and_grad(&lat, &[0, 3]).unwrap();
        assert!((loss.nll - 2.0 * 4f64.ln()).abs() < 1e-12);
        for j in 0..2 {
            for y in 0..4 {
                let ind = if [0, 3][j] == y { 1.0 } else { 0.0 };
                assert!((loss.d_emissions.get(j, y) - (0.25 - ind)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_lattice_has_zero_loss() {
        let golden = [2, 0, 1, 3];
        let emissions = Matrix::from_fn(4, 4, |j, y| if golden[j] == y { 50.0 } else { -50.0 });
        let lat = Lattice::new(emissions, Matrix::zeros(5, 4)).unwrap();
        assert_eq!(crf_viterbi(&lat).0, golden.to_vec());
        let loss = crf_nll_and_grad(&lat, &golden).unwrap();
        assert!(loss.nll < 1e-12);
        assert!(loss.d_emissions.max_abs() < 1e-12);
        assert!(loss.d_transitions.max_abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let lat = random_lattice(5, 4, 6);
        let golden = [1, 0, 2, 2, 3];
        let loss = crf_nll_and_grad(&lat, &golden).unwrap();
        let h = 1e-5;
        let nll = |lat: &Lattice| crf_log_partition(lat) - lat.score(&golden);
        for j in 0..5 {
            for y in 0..4 {
                let mut p = lat.clone();
                p.emissions.add_at(j, y, h);
                let mut q = lat.clone();
                q.emissions.add_at(j, y, -h);
                let num = (nll(&p) - nll(&q)) / (2.0 * h);
                let err = crate::numeric::gradcheck::relative_error(loss.d_emissions.get(j, y), num);
                assert!(err < 1e-6, "emission ({j},{y}) rel err {err}");
            }
        }
        for k in 0..5 {
            for y in 0..4 {
                let mut p = lat.clone();
                p.transitions.add_at(k, y, h);
                let mut q = lat.clone();
                q.transitions.add_at(k, y, -h);
                let num = (nll(&p) - nll(&q)) / (2.0 * h);
                let err =
                    crate::numeric::gradcheck::relative_error(loss.d_transitions.get(k, y), num);
                assert!(err < 1e-6, "transition ({k},{y}) rel err {err}");
            }
        }
    }

    #[test]
    fn emission_shift_invariance() {
        let lat = random_lattice(5, 4, 7);
        let mut shifted = lat.clone();
        for y in 0..4 {
            shifted.emissions.add_at(2, y, 3.5);
        }
        assert_eq!(crf_viterbi(&lat).0, crf_viterbi(&shifted).0);
        let a = crf_marginals(&lat);
        let b = crf_marginals(&shifted);
        assert!((b.log_partition - a.log_partition - 3.5).abs() < 1e-10);
        for (x, y) in a.unary.as_slice().iter().zip(b.unary.as_slice()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(Lattice::new(Matrix::zeros(0, 4), Matrix::zeros(5, 4)).is_err());
        assert!(Lattice::new(Matrix::zeros(2, 4), Matrix::zeros(4, 4)).is_err());
        let lat = zero_lattice(2, 4);
        assert!(crf_nll_and_grad(&lat, &[0, 4]).is_err());
        assert!(crf_nll_and_grad(&lat, &[0]).is_err());
    }
}
