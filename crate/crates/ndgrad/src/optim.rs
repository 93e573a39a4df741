use crate::params::{ParamId, ParamStore};
use crate::Scalar;

/// RMSProp with per-parameter mean-square accumulators.
///
/// Update: `acc <- decay*acc + (1-decay)*g^2`,
/// `p <- p - lr * g / (sqrt(acc) + eps)`.
pub struct RmsProp<T> {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    acc: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(lr: f64, decay: f64, eps: f64) -> Self {
        assert!(lr > 0.0 && decay >= 0.0 && decay < 1.0 && eps > 0.0);
        RmsProp {
            lr,
            decay,
            eps,
            acc: Vec::new(),
        }
    }

    /// Constant learning rate 0.001, decay 0.9, epsilon 1e-8.
    pub fn default_rate() -> Self {
        RmsProp::new(0.001, 0.9, 1e-8)
    }

    /// Read-only view of a parameter's accumulator, if it has been stepped.
    pub fn accumulator(&self, id: ParamId) -> Option<&[T]> {
        self.acc.get(id.index()).and_then(|a| a.as_deref())
    }

    /// Apply one update to the listed parameters from their current grads.
    pub fn step(&mut self, store: &mut ParamStore<T>, ids: &[ParamId]) {
        let lr = T::from_f64(self.lr);
        let decay = T::from_f64(self.decay);
        let one_m = T::from_f64(1.0 - self.decay);
        let eps = T::from_f64(self.eps);
        for &id in ids {
            if self.acc.len() <= id.index() {
                self.acc.resize_with(id.index() + 1, || None);
            }
            let entry = store.entry_mut(id);
            assert!(entry.trainable, "cannot step buffer {:?}", entry.name);
            let acc = self.acc[id.index()]
                .get_or_insert_with(|| vec![T::zero(); entry.grad.len()]);
            assert_eq!(
                acc.len(),
                entry.grad.len(),
                "accumulator shape mismatch for {:?}",
                entry.name
            );
            for ((p, &g), a) in entry
                .value
                .data_mut()
                .iter_mut()
                .zip(entry.grad.iter())
                .zip(acc.iter_mut())
            {
                *a = decay * *a + one_m * g * g;
                *p = *p - lr * g / (a.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn zero_grad_is_noop_on_params_and_decays_accumulator() {
        let mut store = ParamStore::<f64>::new();
        let p = store.add("p", Tensor::new(vec![2], vec![1.0, -2.0]));
        let mut opt = RmsProp::default_rate();
        // seed the accumulator with one nonzero step
        store.entry_mut(p).grad = vec![3.0, 3.0];
        opt.step(&mut store, &[p]);
        let after_first = store.value(p).data().to_vec();
        let acc_first = opt.accumulator(p).unwrap().to_vec();
        // zero gradient: params unchanged, accumulator decays toward zero
        store.zero_grads(&[p]);
        opt.step(&mut store, &[p]);
        assert_eq!(store.value(p).data(), &after_first[..]);
        let acc_second = opt.accumulator(p).unwrap();
        for (a1, a0) in acc_second.iter().zip(&acc_first) {
            assert!((a1 - 0.9 * a0).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_matches_closed_form() {
        // acc = 0.1*g^2, delta = -lr*g/(sqrt(acc)+eps)
        let g = 2.5f64;
        let mut store = ParamStore::<f64>::new();
        let p = store.add("p", Tensor::new(vec![1], vec![0.75]));
        store.entry_mut(p).grad = vec![g];
        let mut opt = RmsProp::default_rate();
        opt.step(&mut store, &[p]);
        let expect = 0.75 - 0.001 * g / ((0.1 * g * g).sqrt() + 1e-8);
        assert!((store.value(p).data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_drives_accumulator_to_g_squared() {
        let g = -1.75f64;
        let mut store = ParamStore::<f64>::new();
        let p = store.add("p", Tensor::new(vec![1], vec![0.0]));
        let mut opt = RmsProp::default_rate();
        for _ in 0..400 {
            store.entry_mut(p).grad = vec![g];
            opt.step(&mut store, &[p]);
        }
        let acc = opt.accumulator(p).unwrap()[0];
        // geometric series limit: acc -> g^2
        assert!((acc - g * g).abs() < 1e-10, "acc={acc}, g^2={}", g * g);
    }
}
