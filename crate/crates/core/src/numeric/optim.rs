use super::param::ParamStore;
use crate::error::Result;

/// rmsprop with the cache/step rule
/// `cache ← decay·cache + (1−decay)·g²`, `θ ← θ − lr·g/√(cache+eps)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp {
            lr: 0.001,
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        RmsProp {
            lr,
            ..Self::default()
        }
    }

    /// Updates every trainable tensor from its accumulated gradient, then
    /// zeroes all gradient accumulators. Frozen tensors keep value and cache.
    pub fn step(&self, params: &mut ParamStore) -> Result<()> {
        for t in params.iter_mut() {
            t.check_shapes()?;
            if t.trainable {
                let value = t.value.as_mut_slice();
                let cache = t.rms_cache.as_mut_slice();
                let grad = t.grad.as_slice();
                for ((v, c), &g) in value.iter_mut().zip(cache.iter_mut()).zip(grad) {
                    *c = self.decay * *c + (1.0 - self.decay) * g * g;
                    *v -= self.lr * g / (*c + self.eps).sqrt();
                }
            }
            t.grad.fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Matrix, ParamTensor};

    fn scalar_store(v: f64, g: f64, trainable: bool) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.register(ParamTensor::new("p", Matrix::from_vec(1, 1, vec![v]), trainable));
        store.get_mut(id).grad.set(0, 0, g);
        store
    }

    #[test]
    fn scalar_update_matches_hand_evaluation() {
        let mut store = scalar_store(1.0, 2.0, true);
        RmsProp::default().step(&mut store).unwrap();
        let t = store.iter().next().unwrap();
        assert!((t.rms_cache.get(0, 0) - 0.4).abs() < 1e-15);
        let expected = 1.0 - 0.001 * 2.0 / (0.4f64 + 1e-8).sqrt();
        assert!((t.value.get(0, 0) - expected).abs() < 1e-15);
        assert!((t.value.get(0, 0) - 0.996838).abs() < 1e-6);
        assert_eq!(t.grad.get(0, 0), 0.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut store = scalar_store(0.7, 0.0, true);
        store.iter_mut().next().unwrap().rms_cache.set(0, 0, 1.0);
        RmsProp::default().step(&mut store).unwrap();
        let t = store.iter().next().unwrap();
        assert_eq!(t.value.get(0, 0), 0.7);
        assert!((t.rms_cache.get(0, 0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn frozen_tensor_is_bit_identical() {
        let mut store = scalar_store(0.123456789, 5.0, false);
        RmsProp::default().step(&mut store).unwrap();
        let t = store.iter().next().unwrap();
        assert_eq!(t.value.get(0, 0).to_bits(), 0.123456789f64.to_bits());
        assert_eq!(t.rms_cache.get(0, 0), 0.0);
    }

    #[test]
    fn decay_one_keeps_cache() {
        let mut store = scalar_store(1.0, 3.0, true);
        store.iter_mut().next().unwrap().rms_cache.set(0, 0, 0.25);
        let opt = RmsProp {
            decay: 1.0,
            ..RmsProp::default()
        };
        opt.step(&mut store).unwrap();
        assert_eq!(store.iter().next().unwrap().rms_cache.get(0, 0), 0.25);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut store = scalar_store(1.0, 1.0, true);
        store.iter_mut().next().unwrap().grad = Matrix::zeros(2, 1);
        assert!(RmsProp::default().step(&mut store).is_err());
    }
}
