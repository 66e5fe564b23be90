use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use exroute_core::data::{DatasetSource, DatasetSpec};

/// Where to read one dataset from. Exactly one source must be given.
#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Dataset name; becomes the expert id.
    #[arg(long)]
    pub name: String,

    /// IDX image file (optionally gzip-compressed).
    #[arg(long, requires = "idx_labels", conflicts_with_all = ["csv", "synthetic"])]
    pub idx_images: Option<PathBuf>,

    /// IDX label file matching --idx-images.
    #[arg(long, requires = "idx_images")]
    pub idx_labels: Option<PathBuf>,

    /// CSV with a label column and one column per feature.
    #[arg(long, conflicts_with = "synthetic")]
    pub csv: Option<PathBuf>,

    #[arg(long, default_value = "label")]
    pub label_column: String,

    /// Synthetic preset: stl10, har, reuters or gaussian.
    #[arg(long, requires = "samples")]
    pub synthetic: Option<String>,

    /// Sample count for --synthetic.
    #[arg(long)]
    pub samples: Option<usize>,

    /// Generator seed for --synthetic.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,

    /// Expected class count; labels are checked against it.
    #[arg(long)]
    pub classes: Option<usize>,
}

impl DatasetArgs {
    pub fn spec(&self) -> Result<DatasetSpec> {
        let source = match (&self.idx_images, &self.idx_labels, &self.csv, &self.synthetic) {
            (Some(images), Some(labels), None, None) => DatasetSource::Idx {
                images: images.clone(),
                labels: labels.clone(),
            },
            (None, None, Some(path), None) => DatasetSource::Csv {
                path: path.clone(),
                label_column: self.label_column.clone(),
            },
            (None, None, None, Some(preset)) => DatasetSource::Synthetic {
                preset: Some(preset.clone()),
                samples: self.samples,
                seed: Some(self.data_seed),
                spec: None,
            },
            _ => bail!("give exactly one of --idx-images/--idx-labels, --csv, or --synthetic"),
        };
        Ok(DatasetSpec {
            name: self.name.clone(),
            classes: self.classes,
            source,
        })
    }
}
