use crate::param::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Adam with bias correction and an externally supplied learning rate.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    first: Vec<Option<Vec<T>>>,
    second: Vec<Option<Vec<T>>>,
}

impl<T: Real> Adam<T> {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self { beta1: T::lit(beta1), beta2: T::lit(beta2), eps: T::lit(1e-8), step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)], lr: T) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        if self.first.len() < store.len() {
            self.first.resize(store.len(), None);
            self.second.resize(store.len(), None);
        }
        for (id, g) in grads {
            let i = id.index();
            let n = g.numel();
            let m = self.first[i].get_or_insert_with(|| vec![T::zero(); n]);
            let v = self.second[i].get_or_insert_with(|| vec![T::zero(); n]);
            let w = store.get_mut(*id).data_mut();
            for k in 0..n {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (T::one() - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (T::one() - self.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                w[k] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
