//! Parameterized building blocks whose weights live in a shared `ParamStore`.

use rand::Rng;
use sean_tensor::{fan_in_uniform, kaiming_uniform, Graph, ParamId, ParamStore, Real, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; the forward pass is a pure function.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Kaiming,
    Zero,
}

/// Convolution over 2D (`[N, C, H, W]`) or 3D (`[N, C, D, H, W]`) inputs.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    padding: Vec<usize>,
}

impl Conv {
    /// `kernel` has two or three entries; padding is `k / 2` per axis.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: &[usize],
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let mut shape = vec![c_out, c_in];
        shape.extend_from_slice(kernel);
        let fan_in = c_in * kernel.iter().product::<usize>();
        let w = match init {
            Init::Kaiming => kaiming_uniform(shape, fan_in, rng),
            Init::Zero => Tensor::zeros(shape),
        };
        let weight = store.add(format!("{name}.weight"), w, true);
        let bias = bias.then(|| {
            let b = match init {
                Init::Kaiming => fan_in_uniform(vec![c_out], fan_in, rng),
                Init::Zero => Tensor::zeros(vec![c_out]),
            };
            store.add(format!("{name}.bias"), b, true)
        });
        Self { weight, bias, padding: kernel.iter().map(|k| k / 2).collect() }
    }

    pub fn forward<'g, T: Real>(&self, g: &'g Graph<T>, store: &ParamStore<T>, x: Var<'g, T>) -> Var<'g, T> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|id| g.param(store, id));
        match self.padding.as_slice() {
            &[ph, pw] => x.conv2d(w, b, [ph, pw]),
            &[pd, ph, pw] => x.conv3d(w, b, [pd, ph, pw]),
            p => panic!("unsupported convolution padding {p:?}"),
        }
    }
}

/// Batch normalization over axis 1 with running statistics as buffers.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.weight"), Tensor::ones(vec![channels]), true),
            beta: store.add(format!("{name}.bias"), Tensor::zeros(vec![channels]), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(vec![channels]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::ones(vec![channels]), false),
        }
    }

    pub fn forward<'g, T: Real>(&self, g: &'g Graph<T>, store: &ParamStore<T>, x: Var<'g, T>, mode: Mode) -> Var<'g, T> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        match mode {
            Mode::Eval => {
                x.batch_norm_eval(gamma, beta, store.get(self.running_mean), store.get(self.running_var), BN_EPS)
            }
            Mode::Train => {
                let (y, mean, var) = x.batch_norm_train(gamma, beta, BN_EPS);
                let shape = x.shape();
                let count = shape[0] * shape[2..].iter().product::<usize>();
                // Running variance tracks the unbiased estimate.
                let unbias = if count > 1 { count as f64 / (count as f64 - 1.0) } else { 1.0 };
                let m = T::lit(BN_MOMENTUM);
                let keep = T::one() - m;
                let rm = store.get(self.running_mean).zip_map(&mean, |r, b| keep * r + m * b);
                let rv = store.get(self.running_var).zip_map(&var, |r, b| keep * r + m * b * T::lit(unbias));
                g.record_buffer_update(self.running_mean, rm);
                g.record_buffer_update(self.running_var, rv);
                y
            }
        }
    }
}

/// Applies queued buffer updates (batch-norm running statistics).
pub fn apply_buffer_updates<T: Real>(g: &Graph<T>, store: &mut ParamStore<T>) {
    for (id, value) in g.take_buffer_updates() {
        store.set(id, value);
    }
}
