use std::collections::BTreeMap;

use super::autoencoder::{samples_to_matrix, AutoencoderModel, INFER_CHUNK};
use crate::nn::Matrix;
use crate::preprocess::Sample;
use crate::{Error, Result};

/// Mean hidden representation of every class, ordered by ascending class id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCentroids {
    class_ids: Vec<u32>,
    counts: Vec<u64>,
    /// `N × hidden`
    centroids: Matrix,
}

impl ClassCentroids {
    /// Validates shapes and rejects zero-norm centroids.
    pub fn new(class_ids: Vec<u32>, counts: Vec<u64>, centroids: Matrix) -> Result<Self> {
        if class_ids.is_empty() {
            return Err(Error::InvalidInput("centroids need at least one class".into()));
        }
        if class_ids.len() != counts.len() || class_ids.len() != centroids.rows() {
            return Err(Error::InvalidInput(format!(
                "{} class ids, {} counts, {} centroid rows",
                class_ids.len(),
                counts.len(),
                centroids.rows()
            )));
        }
        if class_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("class ids must be strictly ascending".into()));
        }
        centroids.ensure_finite("ClassCentroids::new")?;
        for (i, row) in centroids.iter_rows().enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNormCentroid { class: class_ids[i] });
            }
        }
        Ok(Self {
            class_ids,
            counts,
            centroids,
        })
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn matrix(&self) -> &Matrix {
        &self.centroids
    }

    pub fn centroid(&self, index: usize) -> &[f64] {
        self.centroids.row(index)
    }

    pub fn index_of(&self, class: u32) -> Option<usize> {
        self.class_ids.binary_search(&class).ok()
    }
}

/// Unweighted per-class mean of `model.encode(x)` over labeled samples.
pub fn compute_centroids(model: &AutoencoderModel, labeled: &[Sample]) -> Result<ClassCentroids> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput("no labeled samples for centroids".into()));
    }
    let hidden = model.hidden_dim();
    let mut sums: BTreeMap<u32, (Vec<f64>, u64)> = BTreeMap::new();
    for chunk in labeled.chunks(INFER_CHUNK) {
        let encoded = model.encode_batch(&samples_to_matrix(chunk)?)?;
        for (sample, h) in chunk.iter().zip(encoded.iter_rows()) {
            let label = sample
                .label()
                .ok_or_else(|| Error::InvalidInput("centroid samples must carry a class label".into()))?;
            let (sum, count) = sums.entry(label).or_insert_with(|| (vec![0.0; hidden], 0));
            for (s, v) in sum.iter_mut().zip(h) {
                *s += v;
            }
            *count += 1;
        }
    }
    let mut class_ids = Vec::with_capacity(sums.len());
    let mut counts = Vec::with_capacity(sums.len());
    let mut data = Vec::with_capacity(sums.len() * hidden);
    for (class, (sum, count)) in sums {
        class_ids.push(class);
        counts.push(count);
        data.extend(sum.into_iter().map(|s| s / count as f64));
    }
    let rows = class_ids.len();
    ClassCentroids::new(class_ids, counts, Matrix::from_vec(rows, hidden, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::preprocess::SAMPLE_DIM;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(rng: &mut ChaCha8Rng, label: u32) -> Sample {
        Sample::new((0..SAMPLE_DIM).map(|_| rng.random_range(0.0..1.0)).collect())
            .unwrap()
            .with_label(label)
    }

    #[test]
    fn single_sample_per_class_is_its_encoding() {
        let model = AutoencoderModel::new(Activation::Sigmoid, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Sample> = (0..3).map(|c| random_sample(&mut rng, c)).collect();
        let c = compute_centroids(&model, &samples).unwrap();
        assert_eq!(c.class_ids(), &[0, 1, 2]);
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(c.centroid(i), model.encode(s).unwrap().as_slice());
        }
    }

    #[test]
    fn centroid_lies_in_componentwise_hull() {
        let model = AutoencoderModel::new(Activation::Sigmoid, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<Sample> = (0..40).map(|i| random_sample(&mut rng, i % 4)).collect();
        let c = compute_centroids(&model, &samples).unwrap();
        assert_eq!(c.counts(), &[10, 10, 10, 10]);
        for (idx, &class) in c.class_ids().iter().enumerate() {
            let encs: Vec<Vec<f64>> = samples
                .iter()
                .filter(|s| s.label() == Some(class))
                .map(|s| model.encode(s).unwrap())
                .collect();
            for j in 0..c.dim() {
                let lo = encs.iter().map(|e| e[j]).fold(f64::INFINITY, f64::min);
                let hi = encs.iter().map(|e| e[j]).fold(f64::NEG_INFINITY, f64::max);
                let v = c.centroid(idx)[j];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        let doubled: Vec<Sample> = samples.iter().chain(samples.iter()).cloned().collect();
        let d = compute_centroids(&model, &doubled).unwrap();
        for (a, b) in c.matrix().data().iter().zip(d.matrix().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let model = AutoencoderModel::new(Activation::Sigmoid, 4);
        assert!(compute_centroids(&model, &[]).is_err());
        let unlabeled = Sample::new(vec![0.5; SAMPLE_DIM]).unwrap();
        assert!(compute_centroids(&model, &[unlabeled]).is_err());
        assert!(matches!(
            ClassCentroids::new(vec![3], vec![1], Matrix::zeros(1, 4)),
            Err(Error::ZeroNormCentroid { class: 3 })
        ));
    }
}
