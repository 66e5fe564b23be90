//! Dataset loading, synthetic proxies, splitting, and canonicalization into
//! per-split [`Sample`]s.

mod csv;
mod idx;
mod split;
mod synth;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use self::csv::{load_csv_vectors, read_csv_vectors, write_csv_vectors};
pub use idx::{idx_to_samples, load_idx, parse_idx_images, parse_idx_labels, IdxImages, IMAGES_MAGIC, LABELS_MAGIC};
pub use split::{split_dataset, split_indices, Split, SplitSpec};
pub use synth::{generate_synthetic, Layout, SyntheticSpec};

use crate::index::{InputKind, Preprocessing};
use crate::preprocess::{adaptive_avg_pool_1d, RawInput, Sample, Standardization, SAMPLE_DIM};
use crate::{Error, Result};

/// Raw inputs with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRaw {
    pub inputs: Vec<RawInput>,
    pub labels: Vec<u32>,
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loader", rename_all = "snake_case")]
pub enum DatasetSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    /// Either a named preset (`samples` required) or an explicit `spec`.
    Synthetic {
        #[serde(default)]
        preset: Option<String>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        spec: Option<SyntheticSpec>,
    },
}

fn default_label_column() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    /// Expected class count; checked against the labels when given.
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(flatten)]
    pub source: DatasetSource,
}

/// A loaded dataset before splitting.
#[derive(Debug, Clone)]
pub enum RawData {
    /// Already canonical 28x28 samples (IDX, or synthetic images).
    Images(Vec<Sample>),
    /// Fixed-length vectors that still need pooling and standardization.
    Vectors { rows: Vec<Vec<f64>>, labels: Vec<u32> },
}

impl RawData {
    pub fn len(&self) -> usize {
        match self {
            RawData::Images(s) => s.len(),
            RawData::Vectors { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn labels(&self) -> Vec<u32> {
        match self {
            RawData::Images(s) => s.iter().filter_map(Sample::label).collect(),
            RawData::Vectors { labels, .. } => labels.clone(),
        }
    }

    /// Images are canonicalized now; vectors are kept raw. Mixed kinds or
    /// ragged vectors are rejected.
    pub fn from_labeled(raw: LabeledRaw) -> Result<Self> {
        if raw.inputs.len() != raw.labels.len() || raw.inputs.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} inputs with {} labels",
                raw.inputs.len(),
                raw.labels.len()
            )));
        }
        match &raw.inputs[0] {
            RawInput::Image(_) => raw
                .inputs
                .iter()
                .zip(&raw.labels)
                .map(|(input, &label)| match input {
                    RawInput::Image(_) => Ok(input.canonicalize()?.with_label(label)),
                    RawInput::Vector(_) => Err(Error::InvalidInput("dataset mixes images and vectors".into())),
                })
                .collect::<Result<Vec<_>>>()
                .map(RawData::Images),
            RawInput::Vector(first) => {
                let width = first.len();
                let rows = raw
                    .inputs
                    .into_iter()
                    .map(|input| match input {
                        RawInput::Vector(v) if v.len() == width => Ok(v),
                        RawInput::Vector(v) => Err(Error::dim("dataset vectors", width, v.len())),
                        RawInput::Image(_) => Err(Error::InvalidInput("dataset mixes images and vectors".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(RawData::Vectors {
                    rows,
                    labels: raw.labels,
                })
            }
        }
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<RawData> {
        let data = match &self.source {
            DatasetSource::Idx { images, labels } => RawData::Images(load_idx(images, labels)?),
            DatasetSource::Csv { path, label_column } => RawData::from_labeled(load_csv_vectors(path, label_column)?)?,
            DatasetSource::Synthetic { .. } => RawData::from_labeled(generate_synthetic(&self.synthetic_spec()?)?)?,
        };
        if let Some(n) = self.classes {
            if n == 0 {
                return Err(Error::InvalidInput(format!(
                    "dataset `{}` declares zero classes",
                    self.name
                )));
            }
            if let Some(bad) = data.labels().into_iter().find(|&l| l as usize >= n) {
                return Err(Error::InvalidInput(format!(
                    "dataset `{}` has label {bad} but declares {n} classes",
                    self.name
                )));
            }
        }
        Ok(data)
    }

    fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let DatasetSource::Synthetic {
            preset,
            samples,
            seed,
            spec,
        } = &self.source
        else {
            unreachable!("called on a synthetic source only")
        };
        let mut resolved = match (spec, preset) {
            (Some(spec), None) => spec.clone(),
            (None, Some(name)) => {
                let samples = samples
                    .ok_or_else(|| Error::InvalidInput(format!("dataset `{}`: preset needs `samples`", self.name)))?;
                SyntheticSpec::preset(name, samples, 0).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "dataset `{}`: unknown preset `{name}` (known: {})",
                        self.name,
                        SyntheticSpec::PRESETS.join(", ")
                    ))
                })?
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "dataset `{}`: give exactly one of `preset` or `spec`",
                    self.name
                )))
            }
        };
        if let Some(samples) = samples {
            resolved.samples = *samples;
        }
        if let Some(seed) = seed {
            resolved.seed = *seed;
        }
        Ok(resolved)
    }
}

/// A dataset split three ways, canonicalized to 784-d samples labeled with
/// their class and tagged with the dataset name.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub preprocessing: Preprocessing,
    pub split: Split<Sample>,
}

impl PreparedDataset {
    pub fn server(&self) -> &[Sample] {
        &self.split.server
    }

    pub fn clients(&self) -> [(&'static str, &[Sample]); 2] {
        [("A", &self.split.client_a), ("B", &self.split.client_b)]
    }

    /// Distinct class labels across all splits, ascending.
    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .split
            .parts()
            .iter()
            .flat_map(|p| p.iter().filter_map(Sample::label))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Splits `data`, then canonicalizes. Vector datasets are pooled to 784
/// values and standardized with statistics of the server split only.
pub fn prepare(name: &str, data: RawData, split: &SplitSpec) -> Result<PreparedDataset> {
    let parts = split_indices(data.len(), split)?;
    let (samples, preprocessing) = match data {
        RawData::Images(samples) => (samples, Preprocessing::image()),
        RawData::Vectors { rows, labels } => {
            let source_len = rows[0].len() as u64;
            let pooled = rows
                .iter()
                .zip(&labels)
                .map(|(r, &l)| Ok(Sample::new(adaptive_avg_pool_1d(r, SAMPLE_DIM)?)?.with_label(l)))
                .collect::<Result<Vec<_>>>()?;
            let server: Vec<Sample> = parts.server.iter().map(|&i| pooled[i].clone()).collect();
            let stats = Standardization::fit(&server)?;
            let standardized = pooled.iter().map(|s| stats.apply(s)).collect::<Result<Vec<_>>>()?;
            let pre = Preprocessing {
                kind: InputKind::PooledVector { source_len },
                standardization: Some(stats),
            };
            (standardized, pre)
        }
    };
    let take = |idx: &[usize]| -> Vec<Sample> { idx.iter().map(|&i| samples[i].clone().with_source(name)).collect() };
    Ok(PreparedDataset {
        name: name.to_string(),
        preprocessing,
        split: Split {
            server: take(&parts.server),
            client_a: take(&parts.client_a),
            client_b: take(&parts.client_b),
        },
    })
}
