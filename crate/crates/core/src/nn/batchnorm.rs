use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization over the rows of a batch.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into `running_var` as
/// `running = (1 - momentum) * running + momentum * batch`.
/// Eval mode normalizes with the running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    momentum: f64,
    epsilon: f64,
    mode: Mode,
    grad_gamma: Vec<f64>,
    grad_beta: Vec<f64>,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    normalized: Matrix,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm1d {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
            mode: Mode::Train,
            grad_gamma: vec![0.0; features],
            grad_beta: vec![0.0; features],
            cache: None,
        }
    }

    /// Rebuilds a layer from stored parameters; the result is in eval mode.
    pub fn from_parts(
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        momentum: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let n = gamma.len();
        for (name, len) in [
            ("beta", beta.len()),
            ("running_mean", running_mean.len()),
            ("running_var", running_var.len()),
        ] {
            if len != n {
                return Err(Error::InvalidInput(format!(
                    "batch norm {name} has {len} entries, gamma has {n}"
                )));
            }
        }
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::InvalidInput(format!(
                "batch norm momentum {momentum} outside (0,1)"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "batch norm epsilon {epsilon} must be positive"
            )));
        }
        if running_var.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidInput(
                "batch norm running variance must be non-negative".into(),
            ));
        }
        Ok(Self {
            grad_gamma: vec![0.0; n],
            grad_beta: vec![0.0; n],
            gamma,
            beta,
            running_mean,
            running_var,
            momentum,
            epsilon,
            mode: Mode::Eval,
            cache: None,
        })
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma_mut(&mut self) -> &mut [f64] {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn running_mean_mut(&mut self) -> &mut [f64] {
        &mut self.running_mean
    }

    pub fn running_var_mut(&mut self) -> &mut [f64] {
        &mut self.running_var
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn grad_gamma(&self) -> &[f64] {
        &self.grad_gamma
    }

    pub fn grad_beta(&self) -> &[f64] {
        &self.grad_beta
    }

    fn check_width(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.features() {
            return Err(Error::dim(
                "batchnorm_forward",
                format!("{} features", self.features()),
                input.cols(),
            ));
        }
        Ok(())
    }

    /// Eval-mode transform; never mutates the layer regardless of its mode.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        self.check_width(input)?;
        let scale: Vec<f64> = self
            .running_var
            .iter()
            .zip(&self.gamma)
            .map(|(&v, &g)| g / (v + self.epsilon).sqrt())
            .collect();
        let mut out = input.clone();
        for r in 0..out.rows() {
            for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = (*o - self.running_mean[j]) * scale[j] + self.beta[j];
            }
        }
        out.ensure_finite("batchnorm_forward")?;
        Ok(out)
    }

    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        self.check_width(input)?;
        match self.mode {
            Mode::Train => self.forward_train(input),
            Mode::Eval => {
                let inv_std: Vec<f64> = self
                    .running_var
                    .iter()
                    .map(|&v| 1.0 / (v + self.epsilon).sqrt())
                    .collect();
                let mut normalized = input.clone();
                for r in 0..normalized.rows() {
                    for (j, v) in normalized.row_mut(r).iter_mut().enumerate() {
                        *v = (*v - self.running_mean[j]) * inv_std[j];
                    }
                }
                let out = self.affine(&normalized);
                out.ensure_finite("batchnorm_forward")?;
                self.cache = Some(Cache {
                    normalized,
                    inv_std,
                    mode: Mode::Eval,
                });
                Ok(out)
            }
        }
    }

    fn forward_train(&mut self, input: &Matrix) -> Result<Matrix> {
        let n = input.rows();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "train-mode batch norm needs a batch of at least 2 rows, got {n}"
            )));
        }
        let d = self.features();
        let mut mean = vec![0.0; d];
        for row in input.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in input.iter_rows() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut normalized = input.clone();
        for r in 0..n {
            for (j, v) in normalized.row_mut(r).iter_mut().enumerate() {
                *v = (*v - mean[j]) * inv_std[j];
            }
        }
        let out = self.affine(&normalized);
        out.ensure_finite("batchnorm_forward")?;

        let unbias = n as f64 / (n - 1) as f64;
        for j in 0..d {
            self.running_mean[j] = (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] = (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j] * unbias;
        }
        self.cache = Some(Cache {
            normalized,
            inv_std,
            mode: Mode::Train,
        });
        Ok(out)
    }

    fn affine(&self, normalized: &Matrix) -> Matrix {
        let mut out = normalized.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.gamma[j] + self.beta[j];
            }
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batch norm backward called before forward".into()))?;
        if grad_out.shape() != cache.normalized.shape() {
            return Err(Error::dim(
                "batchnorm_backward",
                format!("{:?}", cache.normalized.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let n = grad_out.rows();
        let d = self.features();
        let mut sum_g = vec![0.0; d];
        let mut sum_g_xhat = vec![0.0; d];
        for (g_row, x_row) in grad_out.iter_rows().zip(cache.normalized.iter_rows()) {
            for j in 0..d {
                sum_g[j] += g_row[j];
                sum_g_xhat[j] += g_row[j] * x_row[j];
            }
        }
        for j in 0..d {
            self.grad_beta[j] += sum_g[j];
            self.grad_gamma[j] += sum_g_xhat[j];
        }

        let mut grad_in = Matrix::zeros(n, d);
        match cache.mode {
            Mode::Eval => {
                for r in 0..n {
                    let g = grad_out.row(r);
                    for (j, gi) in grad_in.row_mut(r).iter_mut().enumerate() {
                        *gi = g[j] * self.gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                // dx = inv_std / n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)), dxhat = g*gamma
                let nf = n as f64;
                for r in 0..n {
                    let g = grad_out.row(r);
                    let xhat = cache.normalized.row(r);
                    for (j, gi) in grad_in.row_mut(r).iter_mut().enumerate() {
                        let gamma = self.gamma[j];
                        *gi = cache.inv_std[j] / nf
                            * (nf * g[j] * gamma - sum_g[j] * gamma - xhat[j] * sum_g_xhat[j] * gamma);
                    }
                }
            }
        }
        grad_in.ensure_finite("batchnorm_backward")?;
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }

    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 2] {
        [
            (&mut self.gamma[..], &self.grad_gamma[..]),
            (&mut self.beta[..], &self.grad_beta[..]),
        ]
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}
