//! Exhaustive enumeration over all `L^M` label paths. Exponential; used to
//! cross-check the dynamic programs on short lattices.

use super::crf::{crf_log_partition, crf_marginals, crf_viterbi, Lattice};
use crate::numeric::gradcheck::relative_error;
use crate::numeric::{Matrix, Rng};

/// Calls `f` with every path in lexicographic order.
pub fn for_each_path(m: usize, l: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; m];
    loop {
        f(&path);
        let mut j = m;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            path[j] += 1;
            if path[j] < l {
                break;
            }
            path[j] = 0;
        }
    }
}

fn path_score(lat: &Lattice, path: &[usize]) -> f64 {
    let start = lat.transitions.rows() - 1;
    let mut s = lat.transitions.get(start, path[0]) + lat.emissions.get(0, path[0]);
    for j in 1..path.len() {
        s += lat.transitions.get(path[j - 1], path[j]) + lat.emissions.get(j, path[j]);
    }
    s
}

fn all_scores(lat: &Lattice) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    for_each_path(lat.len(), lat.num_labels(), |p| {
        out.push((p.to_vec(), path_score(lat, p)));
    });
    out
}

pub fn log_partition(lat: &Lattice) -> f64 {
    let scores = all_scores(lat);
    let max = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|(_, s)| (s - max).exp()).sum::<f64>().ln()
}

/// First path (lexicographically) attaining the maximum score.
pub fn best_path(lat: &Lattice) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_path(lat.len(), lat.num_labels(), |p| {
        let s = path_score(lat, p);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((p.to_vec(), s));
        }
    });
    best.expect("at least one path")
}

pub fn unary_marginals(lat: &Lattice) -> Matrix {
    let log_z = log_partition(lat);
    let mut out = Matrix::zeros(lat.len(), lat.num_labels());
    for (p, s) in all_scores(lat) {
        let w = (s - log_z).exp();
        for (j, &y) in p.iter().enumerate() {
            out.add_at(j, y, w);
        }
    }
    out
}

/// Outcome of comparing the dynamic programs with enumeration.
#[derive(Clone, Debug, Default)]
pub struct OracleReport {
    pub cases: usize,
    pub max_rel_error: f64,
    pub failures: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Random lattice with `L = labels`, `1 ≤ M ≤ max_len`, emissions and
/// transitions uniform in `(−2, 2)`.
pub fn random_lattice(rng: &mut Rng, labels: usize, max_len: usize) -> Lattice {
    let m = 1 + rng.index(max_len);
    let emissions = Matrix::from_fn(m, labels, |_, _| rng.uniform_range(-2.0, 2.0));
    let transitions = Matrix::from_fn(labels + 1, labels, |_, _| rng.uniform_range(-2.0, 2.0));
    Lattice::new(emissions, transitions).expect("well-formed lattice")
}

/// Checks log-partition, Viterbi path and score, and every unary marginal
/// against enumeration on `cases` random lattices, at relative tolerance `tol`.
pub fn oracle_suite(cases: usize, labels: usize, max_len: usize, seed: u64, tol: f64) -> OracleReport {
    let mut rng = Rng::new(seed);
    let mut report = OracleReport {
        cases,
        ..OracleReport::default()
    };
    for case in 0..cases {
        let lat = random_lattice(&mut rng, labels, max_len);
        let mut errors = vec![(
            "log-partition",
            relative_error(crf_log_partition(&lat), log_partition(&lat)),
        )];
        let (path, score) = crf_viterbi(&lat);
        let (best, best_score) = best_path(&lat);
        errors.push(("viterbi score", relative_error(score, best_score)));
        let exact = unary_marginals(&lat);
        let fb = crf_marginals(&lat);
        let worst = fb
            .unary
            .as_slice()
            .iter()
            .zip(exact.as_slice())
            .map(|(a, b)| relative_error(*a, *b))
            .fold(0.0, f64::max);
        errors.push(("unary marginals", worst));
        for (what, err) in errors {
            report.max_rel_error = report.max_rel_error.max(err);
            if !(err <= tol) {
                report.failures.push(format!("case {case} (M={}): {what} relative error {err:.3e}", lat.len()));
            }
        }
        if path != best {
            report
                .failures
                .push(format!("case {case} (M={}): viterbi path {path:?} vs {best:?}", lat.len()));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_detects_corruption() {
        let report = oracle_suite(30, 4, 5, 9, 1e-9);
        assert!(report.passed(), "{:?}", report.failures);
        assert_eq!(report.cases, 30);
        let mut rng = Rng::new(1);
        let lat = random_lattice(&mut rng, 3, 4);
        let mut shifted = lat.clone();
        shifted.emissions.add_at(0, 0, 1e-6);
        assert!(relative_error(crf_log_partition(&shifted), log_partition(&lat)) > 1e-9);
    }

    #[test]
    fn enumerates_every_path_once() {
        let mut n = 0;
        let mut last = Vec::new();
        for_each_path(3, 4, |p| {
            n += 1;
            last = p.to_vec();
        });
        assert_eq!(n, 64);
        assert_eq!(last, vec![3, 3, 3]);
    }
}
