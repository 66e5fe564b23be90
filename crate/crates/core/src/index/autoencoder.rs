use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{fit, mse_loss, Activation, BatchNorm1d, Dense, Init, Layer, Matrix, Sequential, TrainConfig};
use crate::preprocess::{Sample, SAMPLE_DIM};
use crate::{Error, Result};

/// Width of the autoencoder bottleneck.
pub const BOTTLENECK_DIM: usize = 128;

/// Rows per inference chunk when encoding large sample sets.
pub(crate) const INFER_CHUNK: usize = 1024;

/// `input → dense → batch norm → ReLU → dense → output activation`.
///
/// The post-ReLU bottleneck is the hidden representation used for class
/// centroids. Inference never mutates the model.
#[derive(Debug, Clone)]
pub struct AutoencoderModel {
    encoder: Dense,
    norm: BatchNorm1d,
    decoder: Dense,
    output: Activation,
}

impl AutoencoderModel {
    /// Freshly initialized 784→128→784 model.
    pub fn new(output: Activation, seed: u64) -> Self {
        Self::with_dims(SAMPLE_DIM, BOTTLENECK_DIM, output, seed)
    }

    pub fn with_dims(input: usize, hidden: usize, output: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            encoder: Dense::new(input, hidden, Init::HeUniform, &mut rng),
            norm: BatchNorm1d::new(hidden),
            decoder: Dense::new(hidden, input, Init::XavierUniform, &mut rng),
            output,
        }
    }

    pub fn from_parts(encoder: Dense, mut norm: BatchNorm1d, decoder: Dense, output: Activation) -> Result<Self> {
        if encoder.out_dim() != norm.features()
            || decoder.in_dim() != encoder.out_dim()
            || decoder.out_dim() != encoder.in_dim()
        {
            return Err(Error::InvalidInput(format!(
                "inconsistent autoencoder shapes: encoder {}→{}, norm {}, decoder {}→{}",
                encoder.in_dim(),
                encoder.out_dim(),
                norm.features(),
                decoder.in_dim(),
                decoder.out_dim()
            )));
        }
        norm.set_mode(crate::nn::Mode::Eval);
        Ok(Self {
            encoder,
            norm,
            decoder,
            output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encoder(&self) -> &Dense {
        &self.encoder
    }

    pub fn norm(&self) -> &BatchNorm1d {
        &self.norm
    }

    pub fn decoder(&self) -> &Dense {
        &self.decoder
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    fn into_network(self) -> Sequential {
        Sequential::new(vec![
            self.encoder.into(),
            self.norm.into(),
            Activation::Relu.into(),
            self.decoder.into(),
            self.output.into(),
        ])
    }

    fn from_network(net: Sequential) -> Result<Self> {
        let mut layers = net.into_layers().into_iter();
        match (
            layers.next(),
            layers.next(),
            layers.next(),
            layers.next(),
            layers.next(),
        ) {
            (
                Some(Layer::Dense(encoder)),
                Some(Layer::BatchNorm(norm)),
                Some(Layer::Activation(_)),
                Some(Layer::Dense(decoder)),
                Some(Layer::Activation(out)),
            ) => Self::from_parts(encoder, norm, decoder, out.kind()),
            _ => Err(Error::State("network does not have the autoencoder layout".into())),
        }
    }

    /// Hidden representations of each row of `x`.
    pub fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.encoder.infer(x)?;
        let h = self.norm.infer(&h)?;
        Ok(Activation::Relu.forward(&h))
    }

    pub fn reconstruct_batch(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.encode_batch(x)?;
        let y = self.decoder.infer(&h)?;
        Ok(self.output.forward(&y))
    }

    /// Per-row mean squared reconstruction error.
    pub fn reconstruction_losses(&self, x: &Matrix) -> Result<Vec<f64>> {
        let y = self.reconstruct_batch(x)?;
        let dim = x.cols() as f64;
        Ok(x.iter_rows()
            .zip(y.iter_rows())
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / dim)
            .collect())
    }

    pub fn encode(&self, x: &Sample) -> Result<Vec<f64>> {
        Ok(self.encode_batch(&single_row(x)?)?.into_vec())
    }

    pub fn reconstruct(&self, x: &Sample) -> Result<Vec<f64>> {
        Ok(self.reconstruct_batch(&single_row(x)?)?.into_vec())
    }

    pub fn reconstruction_loss(&self, x: &Sample) -> Result<f64> {
        Ok(self.reconstruction_losses(&single_row(x)?)?[0])
    }

    /// Mean reconstruction loss over `samples`, computed in chunks.
    pub fn mean_reconstruction_loss(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("mean loss over zero samples".into()));
        }
        let mut total = 0.0;
        for chunk in samples.chunks(INFER_CHUNK) {
            total += self
                .reconstruction_losses(&samples_to_matrix(chunk)?)?
                .iter()
                .sum::<f64>();
        }
        Ok(total / samples.len() as f64)
    }
}

fn single_row(x: &Sample) -> Result<Matrix> {
    Matrix::from_vec(1, x.values().len(), x.values().to_vec())
}

pub fn samples_to_matrix(samples: &[Sample]) -> Result<Matrix> {
    Matrix::from_rows(&samples.iter().map(|s| s.values()).collect::<Vec<_>>())
}

/// Result of [`train_autoencoder`].
#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    pub model: AutoencoderModel,
    /// Mean training loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh 784→128→784 autoencoder to reconstruct `samples`.
///
/// Weights are initialized from `config.seed`; the same seed and data give
/// bit-identical weights. The returned model has batch norm in eval mode.
pub fn train_autoencoder(samples: &[Sample], config: &TrainConfig, output: Activation) -> Result<TrainedAutoencoder> {
    if samples.len() < config.batch_size {
        return Err(Error::InvalidInput(format!(
            "autoencoder training needs at least batch_size = {} samples, got {}",
            config.batch_size,
            samples.len()
        )));
    }
    let inputs = samples_to_matrix(samples)?;
    train_on_matrix(AutoencoderModel::new(output, config.seed), &inputs, config)
}

/// Trains `model` in place on the rows of `inputs`.
pub fn train_on_matrix(model: AutoencoderModel, inputs: &Matrix, config: &TrainConfig) -> Result<TrainedAutoencoder> {
    let mut net = model.into_network();
    let epoch_losses = fit(&mut net, inputs, config, |out: &Matrix, rows: &[usize]| {
        mse_loss(out, &inputs.select_rows(rows))
    })?;
    Ok(TrainedAutoencoder {
        model: AutoencoderModel::from_network(net)?,
        epoch_losses,
    })
}
