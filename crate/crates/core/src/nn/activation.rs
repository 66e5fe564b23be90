use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, input: &Matrix) -> Matrix {
        input.map(|v| self.apply(v))
    }

    /// Gradient with respect to the activation input.
    pub fn backward(self, input: &Matrix, output: &Matrix, grad_out: &Matrix) -> Matrix {
        let mut grad = grad_out.clone();
        for ((g, &x), &y) in grad.data_mut().iter_mut().zip(input.data()).zip(output.data()) {
            *g *= self.derivative(x, y);
        }
        grad
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_sigmoid_values() {
        let x = Matrix::from_vec(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(Activation::Relu.forward(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Sigmoid.apply(-1000.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(1000.0), 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in [Activation::Relu, Activation::Sigmoid, Activation::Identity] {
            for &x in &[-2.3, -0.7, 0.31, 1.9, 4.2] {
                let y = act.apply(x);
                let analytic = act.derivative(x, y);
                let numeric = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
                assert!(
                    rel < 1e-6 || (analytic - numeric).abs() < 1e-10,
                    "{act:?} at {x}: {analytic} vs {numeric}"
                );
            }
        }
    }
}
