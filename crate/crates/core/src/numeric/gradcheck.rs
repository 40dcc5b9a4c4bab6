//! Central-difference verification of hand-derived gradients.

use std::fmt;

use super::dd::Dd;
use super::param::{Gradients, ParamId, ParamStore};
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many scalars per tensor, sampled uniformly.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            max_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index, analytic and numeric value at the worst entry.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.max_rel_error <= self.tol)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| t.max_rel_error > self.tol)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            let status = if t.max_rel_error <= self.tol { "ok" } else { "FAIL" };
            write!(
                f,
                "{status:4} {:<28} n={:<5} max_rel={:.3e}",
                t.name, t.checked, t.max_rel_error
            )?;
            if let Some((i, a, n)) = t.worst {
                write!(f, "  worst[{i}] analytic={a:.6e} numeric={n:.6e}")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "{} (max relative error {:.3e}, tol {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error(),
            self.tol
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-10)
}

/// A loss value a central difference can be taken of.
pub trait LossValue: Copy {
    fn central_difference(plus: Self, minus: Self, step: f64) -> f64;
    fn identical(a: Self, b: Self) -> bool;
    fn approx(self) -> f64;
}

impl LossValue for f64 {
    fn central_difference(plus: f64, minus: f64, step: f64) -> f64 {
        (plus - minus) / step
    }

    fn identical(a: f64, b: f64) -> bool {
        a.to_bits() == b.to_bits()
    }

    fn approx(self) -> f64 {
        self
    }
}

impl LossValue for Dd {
    fn central_difference(plus: Dd, minus: Dd, step: f64) -> f64 {
        ((plus - minus) / step).to_f64()
    }

    fn identical(a: Dd, b: Dd) -> bool {
        a.hi().to_bits() == b.hi().to_bits() && a.lo().to_bits() == b.lo().to_bits()
    }

    fn approx(self) -> f64 {
        self.to_f64()
    }
}

/// Compares `analytic` against central differences of `loss` for every
/// trainable tensor in `params`. The divisor is the representable distance
/// between the two perturbed values. Values are restored afterwards.
pub fn finite_diff_check<V, F>(
    params: &mut ParamStore,
    analytic: &Gradients,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    V: LossValue,
    F: FnMut(&ParamStore) -> V,
{
    let base = loss(params);
    let again = loss(params);
    if !V::identical(base, again) {
        return Err(Error::NonDeterministic(format!(
            "two evaluations at the same parameters gave {:e} and {:e}",
            base.approx(),
            again.approx()
        )));
    }

    let mut rng = Rng::new(cfg.seed);
    let ids: Vec<ParamId> = params.ids().collect();
    let mut tensors = Vec::new();
    for id in ids {
        if !params.get(id).trainable {
            continue;
        }
        let n = params.value(id).len();
        let mut indices: Vec<usize> = (0..n).collect();
        if let Some(k) = cfg.max_per_tensor {
            if k < n {
                rng.shuffle(&mut indices);
                indices.truncate(k);
                indices.sort_unstable();
            }
        }
        let mut check = TensorCheck {
            name: params.get(id).name.clone(),
            checked: 0,
            max_rel_error: 0.0,
            worst: None,
        };
        for i in indices {
            let orig = params.value(id).as_slice()[i];
            let (up, down) = (orig + cfg.h, orig - cfg.h);
            params.get_mut(id).value.as_mut_slice()[i] = up;
            let plus = loss(params);
            params.get_mut(id).value.as_mut_slice()[i] = down;
            let minus = loss(params);
            params.get_mut(id).value.as_mut_slice()[i] = orig;

            let numeric = V::central_difference(plus, minus, up - down);
            let a = analytic.get(id).as_slice()[i];
            let err = relative_error(a, numeric);
            check.checked += 1;
            if err > check.max_rel_error || check.worst.is_none() {
                check.max_rel_error = check.max_rel_error.max(err);
                check.worst = Some((i, a, numeric));
            }
        }
        tensors.push(check);
    }
    Ok(GradCheckReport {
        tol: cfg.tol,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Matrix, ParamTensor};

    fn quadratic_store() -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.register(ParamTensor::new(
            "theta",
            Matrix::from_vec(2, 2, vec![0.5, -1.25, 2.0, 0.01]),
            true,
        ));
        (store, id)
    }

    fn half_norm(store: &ParamStore) -> f64 {
        store.iter().map(|t| 0.5 * t.value.sum_squares()).sum()
    }

    #[test]
    fn quadratic_is_exact() {
        let (mut store, id) = quadratic_store();
        let mut grads = store.zero_grads();
        *grads.get_mut(id) = store.value(id).clone();
        let cfg = GradCheckConfig {
            tol: 1e-9,
            ..Default::default()
        };
        let report = finite_diff_check(&mut store, &grads, half_norm, &cfg).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.max_rel_error() < 1e-9);
    }

    #[test]
    fn corrupted_gradient_is_named() {
        let (mut store, id) = quadratic_store();
        let mut grads = store.zero_grads();
        *grads.get_mut(id) = store.value(id).clone();
        grads.get_mut(id).as_mut_slice()[2] *= 2.0;
        let report =
            finite_diff_check(&mut store, &grads, half_norm, &GradCheckConfig::default()).unwrap();
        assert!(!report.passed());
        let failed: Vec<_> = report.failures().map(|t| t.name.as_str()).collect();
        assert_eq!(failed, vec!["theta"]);
        assert_eq!(report.tensors[0].worst.unwrap().0, 2);
    }

    #[test]
    fn nondeterministic_loss_aborts() {
        let (mut store, _) = quadratic_store();
        let grads = store.zero_grads();
        let mut calls = 0.0;
        let err = finite_diff_check(
            &mut store,
            &grads,
            |_| {
                calls += 1.0;
                calls
            },
            &GradCheckConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic(_)));
    }

    #[test]
    fn values_are_restored() {
        let (mut store, id) = quadratic_store();
        let before = store.value(id).clone();
        let grads = store.zero_grads();
        let _ = finite_diff_check(&mut store, &grads, half_norm, &GradCheckConfig::default());
        assert_eq!(store.value(id), &before);
    }
}
