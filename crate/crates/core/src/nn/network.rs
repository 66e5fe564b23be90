//! Layer stacks, the Adam optimizer over a stack, and the mini-batch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{apply, check_gradients};
use super::{Activation, AdamConfig, AdamState, BatchNorm1d, Dense, Matrix, Mode, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ActivationLayer {
    kind: Activation,
    cache: Option<(Matrix, Matrix)>,
}

impl ActivationLayer {
    pub fn new(kind: Activation) -> Self {
        Self { kind, cache: None }
    }

    pub fn kind(&self) -> Activation {
        self.kind
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm1d),
    Activation(ActivationLayer),
}

impl From<Dense> for Layer {
    fn from(l: Dense) -> Self {
        Layer::Dense(l)
    }
}

impl From<BatchNorm1d> for Layer {
    fn from(l: BatchNorm1d) -> Self {
        Layer::BatchNorm(l)
    }
}

impl From<Activation> for Layer {
    fn from(kind: Activation) -> Self {
        Layer::Activation(ActivationLayer::new(kind))
    }
}

impl Layer {
    fn infer(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Activation(a) => Ok(a.kind.forward(x)),
        }
    }

    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x),
            Layer::Activation(a) => {
                let y = a.kind.forward(x);
                a.cache = Some((x.clone(), y.clone()));
                Ok(y)
            }
        }
    }

    fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Activation(a) => {
                let (x, y) = a
                    .cache
                    .as_ref()
                    .ok_or_else(|| Error::State("activation backward called before forward".into()))?;
                if grad.shape() != y.shape() {
                    return Err(Error::dim(
                        "activation_backward",
                        format!("{:?}", y.shape()),
                        format!("{:?}", grad.shape()),
                    ));
                }
                Ok(a.kind.backward(x, y, grad))
            }
        }
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn set_mode(&mut self, mode: Mode) {
        for layer in &mut self.layers {
            if let Layer::BatchNorm(bn) = layer {
                bn.set_mode(mode);
            }
        }
    }

    /// Eval-mode pass through every layer; the network is not modified.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.infer_prefix(x, self.layers.len())
    }

    /// Eval-mode pass through the first `count` layers.
    pub fn infer_prefix(&self, x: &Matrix, count: usize) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &self.layers[..count.min(self.layers.len())] {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Forward pass that caches what [`Sequential::backward`] needs. Batch
    /// norm layers use their current mode.
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Backpropagates from the network output, accumulating parameter
    /// gradients; returns the gradient with respect to the network input.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(l) => l.zero_grad(),
                Layer::BatchNorm(l) => l.zero_grad(),
                Layer::Activation(_) => {}
            }
        }
    }

    /// Drops activations cached by the last forward pass.
    pub fn clear_caches(&mut self) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(l) => l.clear_cache(),
                Layer::BatchNorm(l) => l.clear_cache(),
                Layer::Activation(a) => a.cache = None,
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.in_dim() * d.out_dim() + d.out_dim(),
                Layer::BatchNorm(b) => 2 * b.features(),
                Layer::Activation(_) => 0,
            })
            .sum()
    }

    pub(crate) fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(l) => out.extend(l.params_and_grads()),
                Layer::BatchNorm(l) => out.extend(l.params_and_grads()),
                Layer::Activation(_) => {}
            }
        }
        out
    }
}

/// Adam over every parameter tensor of a [`Sequential`].
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(net: &mut Sequential, config: AdamConfig) -> Self {
        let states = net
            .params_and_grads()
            .iter()
            .map(|(p, _)| AdamState::new(p.len(), config))
            .collect();
        Self { states }
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// Updates all parameters from their accumulated gradients. Every
    /// gradient is validated first, so a failure leaves the whole network
    /// untouched.
    pub fn step(&mut self, net: &mut Sequential, lr: f64) -> Result<()> {
        let mut groups = net.params_and_grads();
        if groups.len() != self.states.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} tensors, network has {}",
                self.states.len(),
                groups.len()
            )));
        }
        for ((p, g), s) in groups.iter().zip(&self.states) {
            check_gradients(p.len(), g, s)?;
        }
        for ((p, g), s) in groups.iter_mut().zip(&mut self.states) {
            apply(p, g, s, lr);
        }
        Ok(())
    }
}

/// Computes the batch loss and its gradient with respect to the network
/// output. Receives the output and the dataset row indices of the batch.
pub trait BatchObjective {
    fn loss(&mut self, output: &Matrix, rows: &[usize]) -> Result<(f64, Matrix)>;
}

impl<F> BatchObjective for F
where
    F: FnMut(&Matrix, &[usize]) -> Result<(f64, Matrix)>,
{
    fn loss(&mut self, output: &Matrix, rows: &[usize]) -> Result<(f64, Matrix)> {
        self(output, rows)
    }
}

/// Mini-batch training with the configured step schedule.
///
/// Each epoch reshuffles the rows with a ChaCha stream derived from
/// `config.seed`. A trailing batch of a single row is skipped because batch
/// norm needs two rows. Returns the mean training loss of every epoch.
/// Leaves the network in eval mode.
pub fn fit(
    net: &mut Sequential,
    inputs: &Matrix,
    config: &TrainConfig,
    mut objective: impl BatchObjective,
) -> Result<Vec<f64>> {
    if inputs.rows() < 2 {
        return Err(Error::InvalidInput(format!(
            "training needs at least 2 samples, got {}",
            inputs.rows()
        )));
    }
    if config.batch_size < 2 {
        return Err(Error::InvalidInput("batch_size must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut optimizer = Adam::new(net, config.adam);
    let mut order: Vec<usize> = (0..inputs.rows()).collect();
    let mut history = Vec::with_capacity(config.max_epochs);

    net.set_mode(Mode::Train);
    for epoch in 0..config.max_epochs {
        let lr = config.lr_at_epoch(epoch);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let x = inputs.select_rows(batch);
            net.zero_grad();
            let out = net.forward(&x)?;
            let (loss, grad) = objective.loss(&out, batch)?;
            net.backward(&grad)?;
            optimizer.step(net, lr)?;
            weighted += loss * batch.len() as f64;
            seen += batch.len();
        }
        history.push(weighted / seen as f64);
    }
    net.set_mode(Mode::Eval);
    net.clear_caches();
    net.zero_grad();
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mse_loss, softmax_cross_entropy, Init};
    use rand::Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        let diff = (a - b).abs();
        if diff < 1e-9 {
            0.0
        } else {
            diff / a.abs().max(b.abs())
        }
    }

    fn small_mlp(rng: &mut ChaCha8Rng, d_in: usize, hidden: usize, d_out: usize) -> Sequential {
        Sequential::new(vec![
            Dense::new(d_in, hidden, Init::HeUniform, rng).into(),
            BatchNorm1d::new(hidden).into(),
            Activation::Sigmoid.into(),
            Dense::new(hidden, d_out, Init::XavierUniform, rng).into(),
        ])
    }

    // loss(x) = mse(net(x), target), evaluated without caching side effects
    // on parameters; batch norm in train mode uses the same batch each time.
    fn loss_of(net: &Sequential, x: &Matrix, target: &Matrix) -> f64 {
        let mut n = net.clone();
        let out = n.forward(x).unwrap();
        mse_loss(&out, target).unwrap().0
    }

    #[test]
    fn two_layer_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (b, d, h, o) = (
                rng.random_range(2..6),
                rng.random_range(1..6),
                rng.random_range(1..6),
                rng.random_range(1..5),
            );
            let mut net = small_mlp(&mut rng, d, h, o);
            let x = random(b, d, &mut rng);
            let target = random(b, o, &mut rng);
            let reference = net.clone();
            let out = net.forward(&x).unwrap();
            let (_, g) = mse_loss(&out, &target).unwrap();
            let grad_in = net.backward(&g).unwrap();
            let eps = 1e-6;
            for i in 0..x.data().len() {
                let mut xp = x.clone();
                xp.data_mut()[i] += eps;
                let mut xm = x.clone();
                xm.data_mut()[i] -= eps;
                let numeric = (loss_of(&reference, &xp, &target) - loss_of(&reference, &xm, &target)) / (2.0 * eps);
                assert!(
                    rel_err(grad_in.data()[i], numeric) < 1e-4,
                    "{} vs {numeric}",
                    grad_in.data()[i]
                );
            }
        }
    }

    #[test]
    fn adam_trajectories_are_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut net = small_mlp(&mut rng, 4, 6, 3);
            let x = random(40, 4, &mut rng);
            let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
            let config = TrainConfig {
                max_epochs: 3,
                batch_size: 8,
                seed: 9,
                ..Default::default()
            };
            fit(&mut net, &x, &config, |out: &Matrix, rows: &[usize]| {
                let l: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
                softmax_cross_entropy(out, &l)
            })
            .unwrap();
            net.infer(&x).unwrap()
        };
        assert_eq!(run().data(), run().data());
    }

    #[test]
    fn optimizer_step_rejects_non_finite_without_partial_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = small_mlp(&mut rng, 2, 3, 1);
        let mut adam = Adam::new(&mut net, AdamConfig::default());
        let x = random(4, 2, &mut rng);
        let out = net.forward(&x).unwrap();
        net.backward(&Matrix::filled(out.rows(), out.cols(), 0.3)).unwrap();
        if let Layer::Dense(d) = &mut net.layers_mut()[3] {
            d.grad_bias_mut()[0] = f64::NAN;
        }
        let before = net.infer(&x).unwrap();
        assert!(matches!(adam.step(&mut net, 0.1), Err(Error::NonFinite(_))));
        assert_eq!(net.infer(&x).unwrap().data(), before.data());
        assert!(adam.states().iter().all(|s| s.step_count() == 0));

        net.zero_grad();
        adam.step(&mut net, 0.01).unwrap();
        assert!(adam.states().iter().all(|s| s.step_count() == 1));
    }

    #[test]
    fn loss_decreases_early_on_tiny_dataset() {
        let mut non_increasing = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Matrix::from_vec(32, 6, (0..192).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            let mut net = Sequential::new(vec![
                Dense::new(6, 4, Init::HeUniform, &mut rng).into(),
                BatchNorm1d::new(4).into(),
                Activation::Relu.into(),
                Dense::new(4, 6, Init::XavierUniform, &mut rng).into(),
                Activation::Sigmoid.into(),
            ]);
            let config = TrainConfig {
                max_epochs: 5,
                batch_size: 32,
                seed,
                ..Default::default()
            };
            let target = x.clone();
            let history = fit(&mut net, &x, &config, |out: &Matrix, rows: &[usize]| {
                mse_loss(out, &target.select_rows(rows))
            })
            .unwrap();
            if history.windows(2).all(|w| w[1] <= w[0]) {
                non_increasing += 1;
            }
        }
        assert!(non_increasing >= 19, "{non_increasing}/20 seeds");
    }

    #[test]
    fn fit_rejects_single_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = small_mlp(&mut rng, 2, 3, 1);
        let x = Matrix::zeros(1, 2);
        let r = fit(&mut net, &x, &TrainConfig::default(), |o: &Matrix, _: &[usize]| {
            mse_loss(o, o)
        });
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
