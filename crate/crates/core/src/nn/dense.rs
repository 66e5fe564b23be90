use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::Matrix;
use crate::{Error, Result};

/// Weight initialization schemes. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / fan_in); for layers feeding a ReLU.
    HeUniform,
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)); for output layers.
    XavierUniform,
    Zeros,
}

/// Fully connected layer computing `x · Wᵀ + b` for a batch of row vectors.
#[derive(Debug, Clone)]
pub struct Dense {
    /// `out × in`
    weights: Matrix,
    bias: Vec<f64>,
    grad_weights: Matrix,
    grad_bias: Vec<f64>,
    cached_input: Option<Matrix>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, init: Init, rng: &mut R) -> Self {
        let limit = match init {
            Init::HeUniform => (6.0 / in_dim as f64).sqrt(),
            Init::XavierUniform => (6.0 / (in_dim + out_dim) as f64).sqrt(),
            Init::Zeros => 0.0,
        };
        let mut weights = Matrix::zeros(out_dim, in_dim);
        if limit > 0.0 {
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
            for w in weights.data_mut() {
                *w = dist.sample(rng);
            }
        }
        Self::from_parts(weights, vec![0.0; out_dim]).expect("consistent shapes")
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::dim(
                "Dense::from_parts",
                format!("bias of length {}", weights.rows()),
                bias.len(),
            ));
        }
        let (rows, cols) = weights.shape();
        Ok(Self {
            grad_weights: Matrix::zeros(rows, cols),
            grad_bias: vec![0.0; rows],
            weights,
            bias,
            cached_input: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn grad_weights(&self) -> &Matrix {
        &self.grad_weights
    }

    pub fn grad_bias(&self) -> &[f64] {
        &self.grad_bias
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Forward pass without touching the layer.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::dim(
                "dense_forward",
                format!("{} input columns", self.in_dim()),
                input.cols(),
            ));
        }
        let mut out = input.matmul_t(&self.weights)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        out.ensure_finite("dense_forward")?;
        Ok(out)
    }

    /// Forward pass that caches the input for [`Dense::backward`].
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let out = self.infer(input)?;
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the cached input.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        if grad_out.shape() != (input.rows(), self.out_dim()) {
            return Err(Error::dim(
                "dense_backward",
                format!("{}x{}", input.rows(), self.out_dim()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        grad_out.t_matmul_acc(input, &mut self.grad_weights)?;
        for row in grad_out.iter_rows() {
            for (gb, g) in self.grad_bias.iter_mut().zip(row) {
                *gb += g;
            }
        }
        let grad_in = grad_out.matmul(&self.weights)?;
        grad_in.ensure_finite("dense_backward")?;
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.data_mut().fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 2] {
        [
            (self.weights.data_mut(), self.grad_weights.data()),
            (&mut self.bias[..], &self.grad_bias[..]),
        ]
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cached_input = None;
    }

    #[cfg(test)]
    pub(crate) fn grad_bias_mut(&mut self) -> &mut [f64] {
        &mut self.grad_bias
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_hand_sum() {
        let layer = Dense::from_parts(Matrix::identity(2), vec![0.0; 2]).unwrap();
        let x = Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(layer.infer(&x).unwrap().data(), &[3.0, 4.0]);

        let layer = Dense::from_parts(Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap(), vec![1.0]).unwrap();
        let x = Matrix::from_vec(1, 2, vec![2.0, 3.0]).unwrap();
        assert_eq!(layer.infer(&x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layer = Dense::new(3, 4, Init::XavierUniform, &mut rng);
        layer.bias_mut().copy_from_slice(&[0.1, -0.2, 0.3, 0.05]);
        let x = Matrix::from_vec(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap();
        let y = layer.forward(&x).unwrap();
        for b in 0..2 {
            for o in 0..4 {
                let mut s = layer.bias()[o];
                for i in 0..3 {
                    s += x.get(b, i) * layer.weights().get(o, i);
                }
                assert!((y.get(b, o) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_chain_rule() {
        let mut layer = Dense::from_parts(Matrix::from_vec(1, 1, vec![2.0]).unwrap(), vec![0.0]).unwrap();
        layer.forward(&Matrix::from_vec(1, 1, vec![3.0]).unwrap()).unwrap();
        let gin = layer.backward(&Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(gin.data(), &[2.0]);
        assert_eq!(layer.grad_weights().data(), &[3.0]);
        assert_eq!(layer.grad_bias(), &[1.0]);
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Dense::new(5, 3, Init::HeUniform, &mut rng);
        let x = Matrix::filled(4, 5, 0.7);
        layer.forward(&x).unwrap();
        let gin = layer.backward(&Matrix::zeros(4, 3)).unwrap();
        assert!(gin.data().iter().all(|&v| v == 0.0));
        assert!(layer.grad_weights().data().iter().all(|&v| v == 0.0));
        assert!(layer.grad_bias().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Dense::new(2, 2, Init::HeUniform, &mut rng);
        assert!(matches!(layer.backward(&Matrix::zeros(1, 2)), Err(Error::State(_))));
    }

    #[test]
    fn wrong_input_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Dense::new(3, 2, Init::HeUniform, &mut rng);
        assert!(matches!(
            layer.forward(&Matrix::zeros(1, 4)),
            Err(Error::Dimension { .. })
        ));
    }
}
