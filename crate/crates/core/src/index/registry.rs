use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AutoencoderModel, ClassCentroids};
use crate::preprocess::{adaptive_avg_pool_1d, RawInput, Sample, Standardization, SAMPLE_DIM};
use crate::{Error, Result};

/// How an expert's training data was canonicalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    Image,
    PooledVector { source_len: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessing {
    pub kind: InputKind,
    /// Server-split feature statistics applied after pooling, if any.
    pub standardization: Option<Standardization>,
}

impl Preprocessing {
    pub fn image() -> Self {
        Self {
            kind: InputKind::Image,
            standardization: None,
        }
    }

    /// Canonicalizes a raw client input the way this expert's training data
    /// was: images are resized; vectors must have the training length and
    /// are pooled, then standardized when statistics are present.
    pub fn canonicalize(&self, input: &RawInput) -> Result<Sample> {
        match (self.kind, input) {
            (InputKind::Image, RawInput::Image(_)) => input.canonicalize(),
            (InputKind::PooledVector { source_len }, RawInput::Vector(v)) => {
                if v.len() as u64 != source_len {
                    return Err(Error::dim("raw vector", source_len, v.len()));
                }
                let pooled = Sample::new(adaptive_avg_pool_1d(v, SAMPLE_DIM)?)?;
                match &self.standardization {
                    Some(stats) => stats.apply(&pooled),
                    None => Ok(pooled),
                }
            }
            (InputKind::Image, RawInput::Vector(_)) => {
                Err(Error::InvalidInput("expert expects an image, got a vector".into()))
            }
            (InputKind::PooledVector { .. }, RawInput::Image(_)) => {
                Err(Error::InvalidInput("expert expects a vector, got an image".into()))
            }
        }
    }
}

/// What produced an expert's autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainFingerprint {
    pub seed: u64,
    pub epochs: u32,
    pub samples: u64,
}

/// One routable expert: its autoencoder, optional class centroids, and the
/// metadata needed to reproduce its inputs.
#[derive(Debug, Clone)]
pub struct ExpertEntry {
    pub expert_id: String,
    pub display_name: String,
    pub autoencoder: AutoencoderModel,
    pub centroids: Option<ClassCentroids>,
    pub preprocessing: Preprocessing,
    pub fingerprint: TrainFingerprint,
}

impl ExpertEntry {
    pub fn validate(&self) -> Result<()> {
        if self.expert_id.is_empty() {
            return Err(Error::InvalidInput("expert_id must not be empty".into()));
        }
        if let Some(c) = &self.centroids {
            if c.dim() != self.autoencoder.hidden_dim() {
                return Err(Error::InvalidInput(format!(
                    "centroid dimension {} does not match bottleneck {}",
                    c.dim(),
                    self.autoencoder.hidden_dim()
                )));
            }
        }
        if let Some(s) = &self.preprocessing.standardization {
            let d = self.autoencoder.input_dim();
            if s.mean.len() != d || s.std.len() != d || s.std.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidInput(
                    "standardization stats do not match the input width".into(),
                ));
            }
        }
        Ok(())
    }
}

pub const FORMAT_VERSION: u32 = 1;

/// Ordered expert table. Order is stable and breaks ties in matching.
///
/// Entries are shared, so cloning a registry to publish a modified copy
/// does not copy weights.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: Vec<Arc<ExpertEntry>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ExpertEntry>) -> Result<Self> {
        let mut r = Self::new();
        for e in entries {
            r.push(e)?;
        }
        Ok(r)
    }

    pub fn format_version(&self) -> u32 {
        FORMAT_VERSION
    }

    pub fn push(&mut self, entry: ExpertEntry) -> Result<usize> {
        self.push_shared(Arc::new(entry))
    }

    pub fn push_shared(&mut self, entry: Arc<ExpertEntry>) -> Result<usize> {
        entry.validate()?;
        if self.position(&entry.expert_id).is_some() {
            return Err(Error::DuplicateExpert(entry.expert_id.clone()));
        }
        self.entries.push(entry);
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Arc<ExpertEntry>] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExpertEntry> {
        self.entries.iter().map(|e| e.as_ref())
    }

    pub fn get(&self, index: usize) -> Option<&ExpertEntry> {
        self.entries.get(index).map(|e| e.as_ref())
    }

    pub fn by_id(&self, expert_id: &str) -> Option<&ExpertEntry> {
        self.position(expert_id).map(|i| self.entries[i].as_ref())
    }

    pub fn position(&self, expert_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.expert_id == expert_id)
    }
}
