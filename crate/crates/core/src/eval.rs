//! Evaluation protocol: train one expert per dataset on its server split,
//! then measure coarse, fine, and end-to-end routing accuracy on the two
//! client splits, next to a dataset-ID MLP baseline.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::data::{prepare, DatasetSpec, PreparedDataset, RawData, SplitSpec};
use crate::index::{
    compute_centroids, samples_to_matrix, train_autoencoder, ExpertEntry, InputKind, Registry, TrainFingerprint,
};
use crate::matcher::{coarse_match_batch, fine_match_encoding};
use crate::nn::{
    fit, softmax_cross_entropy, Activation, BatchNorm1d, Dense, Init, Layer, Matrix, Sequential, TrainConfig,
};
use crate::preprocess::{Sample, SAMPLE_DIM};
use crate::{Error, Result};

const CHUNK: usize = 1024;

/// Output activation for an expert's decoder: sigmoid for `[0, 1]` images,
/// identity for standardized vectors, whose values are unbounded.
pub fn output_activation(kind: InputKind) -> Activation {
    match kind {
        InputKind::Image => Activation::Sigmoid,
        InputKind::PooledVector { .. } => Activation::Identity,
    }
}

/// Trains an autoencoder on the server split and, when `with_centroids`,
/// computes class centroids over the same samples. The expert id is the
/// dataset name.
pub fn train_expert(dataset: &PreparedDataset, config: &TrainConfig, with_centroids: bool) -> Result<ExpertEntry> {
    let server = dataset.server();
    let trained = train_autoencoder(server, config, output_activation(dataset.preprocessing.kind))?;
    let centroids = if with_centroids {
        Some(compute_centroids(&trained.model, server)?)
    } else {
        None
    };
    let entry = ExpertEntry {
        expert_id: dataset.name.clone(),
        display_name: dataset.name.clone(),
        autoencoder: trained.model,
        centroids,
        preprocessing: dataset.preprocessing.clone(),
        fingerprint: TrainFingerprint {
            seed: config.seed,
            epochs: config.max_epochs as u32,
            samples: server.len() as u64,
        },
    };
    entry.validate()?;
    Ok(entry)
}

/// Correct / total counts for one dataset on one client split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    /// Accuracy in percent; 0 for an empty tally.
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.correct += hit as usize;
    }
}

/// Accuracy of one dataset on client A and client B.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetAccuracy {
    pub dataset: String,
    pub client_a: Tally,
    pub client_b: Tally,
}

impl DatasetAccuracy {
    pub fn clients(&self) -> [(&'static str, Tally); 2] {
        [("A", self.client_a), ("B", self.client_b)]
    }
}

/// Unweighted mean of per-dataset percentages for (client A, client B).
pub fn average(rows: &[DatasetAccuracy]) -> (f64, f64) {
    let n = rows.len().max(1) as f64;
    (
        rows.iter().map(|r| r.client_a.percent()).sum::<f64>() / n,
        rows.iter().map(|r| r.client_b.percent()).sum::<f64>() / n,
    )
}

/// Fraction of client samples whose coarse winner is their own dataset's
/// expert (looked up by expert id = dataset name).
pub fn eval_coarse(registry: &Registry, datasets: &[PreparedDataset]) -> Result<Vec<DatasetAccuracy>> {
    datasets
        .iter()
        .map(|d| {
            let own = registry
                .position(&d.name)
                .ok_or_else(|| Error::UnknownExpert(d.name.clone()))?;
            let tally = |samples: &[Sample]| -> Result<Tally> {
                let mut t = Tally::default();
                for r in coarse_match_batch(registry, samples)? {
                    t.add(r.coarse_index == own);
                }
                Ok(t)
            };
            Ok(DatasetAccuracy {
                dataset: d.name.clone(),
                client_a: tally(&d.split.client_a)?,
                client_b: tally(&d.split.client_b)?,
            })
        })
        .collect()
}

/// Fine-assignment outcome over labeled samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FineTally {
    pub tally: Tally,
    /// Samples whose encoding was all zeros; counted as misses.
    pub degenerate: usize,
}

/// Class predictions of `entry` for each sample; `None` for degenerate
/// (all-zero) encodings.
pub fn predict_classes(entry: &ExpertEntry, samples: &[Sample]) -> Result<Vec<Option<u32>>> {
    let centroids = entry
        .centroids
        .as_ref()
        .ok_or_else(|| Error::MissingCentroids(entry.expert_id.clone()))?;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        let h = entry.autoencoder.encode_batch(&samples_to_matrix(chunk)?)?;
        for enc in h.iter_rows() {
            out.push(match fine_match_encoding(centroids, enc) {
                Ok(m) => Some(m.class_id),
                Err(Error::ZeroNorm(_)) => None,
                Err(e) => return Err(e),
            });
        }
    }
    Ok(out)
}

fn labels_of(entry: &ExpertEntry, samples: &[Sample]) -> Result<Vec<u32>> {
    let centroids = entry
        .centroids
        .as_ref()
        .ok_or_else(|| Error::MissingCentroids(entry.expert_id.clone()))?;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let label = s
                .label()
                .ok_or_else(|| Error::InvalidInput(format!("sample {i} has no class label")))?;
            if centroids.index_of(label).is_none() {
                return Err(Error::InvalidInput(format!(
                    "sample {i} has label {label}, which expert `{}` has no centroid for",
                    entry.expert_id
                )));
            }
            Ok(label)
        })
        .collect()
}

/// Fraction of labeled samples assigned their true class by `entry`'s
/// cosine-to-centroid rule.
pub fn eval_fine(entry: &ExpertEntry, samples: &[Sample]) -> Result<FineTally> {
    let labels = labels_of(entry, samples)?;
    let mut out = FineTally::default();
    for (pred, label) in predict_classes(entry, samples)?.into_iter().zip(labels) {
        out.degenerate += pred.is_none() as usize;
        out.tally.add(pred == Some(label));
    }
    Ok(out)
}

/// Coarse then fine: a sample counts as correct only if it is routed to its
/// own dataset's expert and that expert then assigns its true class.
pub fn eval_end_to_end(registry: &Registry, dataset: &PreparedDataset) -> Result<DatasetAccuracy> {
    let own_index = registry
        .position(&dataset.name)
        .ok_or_else(|| Error::UnknownExpert(dataset.name.clone()))?;
    let own = registry.get(own_index).expect("position is valid");
    let tally = |samples: &[Sample]| -> Result<Tally> {
        let labels = labels_of(own, samples)?;
        let routed = coarse_match_batch(registry, samples)?;
        let classes = predict_classes(own, samples)?;
        let mut t = Tally::default();
        for ((r, c), l) in routed.iter().zip(classes).zip(labels) {
            t.add(r.coarse_index == own_index && c == Some(l));
        }
        Ok(t)
    };
    Ok(DatasetAccuracy {
        dataset: dataset.name.clone(),
        client_a: tally(&dataset.split.client_a)?,
        client_b: tally(&dataset.split.client_b)?,
    })
}

/// MLP `784 → 256 → 128 → C` predicting which dataset a sample comes from.
#[derive(Debug, Clone)]
pub struct DatasetClassifier {
    net: Sequential,
    names: Vec<String>,
}

impl DatasetClassifier {
    pub fn new(names: Vec<String>, seed: u64) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a dataset classifier needs at least 2 datasets, got {}",
                names.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Sequential::new(vec![
            Layer::from(Dense::new(SAMPLE_DIM, 256, Init::HeUniform, &mut rng)),
            Layer::from(BatchNorm1d::new(256)),
            Layer::from(Activation::Relu),
            Layer::from(Dense::new(256, 128, Init::HeUniform, &mut rng)),
            Layer::from(BatchNorm1d::new(128)),
            Layer::from(Activation::Relu),
            Layer::from(Dense::new(128, names.len(), Init::XavierUniform, &mut rng)),
        ]);
        Ok(Self { net, names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    /// Logits, one row per sample.
    pub fn logits(&self, samples: &[Sample]) -> Result<Matrix> {
        self.net.infer(&samples_to_matrix(samples)?)
    }

    /// Predicted dataset index per sample (ties to the lowest index).
    pub fn predict(&self, samples: &[Sample]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(CHUNK) {
            let logits = self.logits(chunk)?;
            out.extend(
                logits
                    .iter_rows()
                    .map(|row| crate::matcher::argmax_first(row).expect("at least two classes")),
            );
        }
        Ok(out)
    }
}

/// Trains the dataset-ID baseline on the union of server splits with the
/// standard step schedule.
pub fn train_mlp_baseline(datasets: &[PreparedDataset], config: &TrainConfig) -> Result<DatasetClassifier> {
    let mut clf = DatasetClassifier::new(datasets.iter().map(|d| d.name.clone()).collect(), config.seed)?;
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        rows.extend(d.server().iter().map(Sample::values));
        labels.extend(std::iter::repeat_n(i, d.server().len()));
    }
    let inputs = Matrix::from_rows(&rows)?;
    fit(&mut clf.net, &inputs, config, |out: &Matrix, batch: &[usize]| {
        let y: Vec<usize> = batch.iter().map(|&r| labels[r]).collect();
        softmax_cross_entropy(out, &y)
    })?;
    Ok(clf)
}

/// Dataset-ID accuracy per dataset and client. Datasets are matched to
/// classifier outputs by name.
pub fn eval_dataset_id(clf: &DatasetClassifier, datasets: &[PreparedDataset]) -> Result<Vec<DatasetAccuracy>> {
    datasets
        .iter()
        .map(|d| {
            let own = clf
                .names
                .iter()
                .position(|n| n == &d.name)
                .ok_or_else(|| Error::UnknownExpert(d.name.clone()))?;
            let tally = |samples: &[Sample]| -> Result<Tally> {
                let mut t = Tally::default();
                for p in clf.predict(samples)? {
                    t.add(p == own);
                }
                Ok(t)
            };
            Ok(DatasetAccuracy {
                dataset: d.name.clone(),
                client_a: tally(&d.split.client_a)?,
                client_b: tally(&d.split.client_b)?,
            })
        })
        .collect()
}

/// One line of the machine-readable results.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub client: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

impl ResultRow {
    /// Rows for every dataset and client, plus an `average` dataset row per
    /// client.
    pub fn from_table(metric: &str, seed: u64, table: &[DatasetAccuracy]) -> Vec<ResultRow> {
        let row = |dataset: &str, client: &str, value: f64| ResultRow {
            dataset: dataset.to_string(),
            client: client.to_string(),
            metric: metric.to_string(),
            value,
            seed,
        };
        let mut rows: Vec<ResultRow> = table
            .iter()
            .flat_map(|d| d.clients().map(|(c, t)| row(&d.dataset, c, t.percent())))
            .collect();
        if table.len() > 1 {
            let (a, b) = average(table);
            rows.push(row("average", "A", a));
            rows.push(row("average", "B", b));
        }
        rows
    }
}

/// Writes `dataset,client,metric,value,seed` CSV with full-precision values.
pub fn write_results_csv(writer: impl Write, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["dataset", "client", "metric", "value", "seed"])?;
    for r in rows {
        wtr.write_record([
            r.dataset.as_str(),
            r.client.as_str(),
            r.metric.as_str(),
            &format!("{:?}", r.value),
            &r.seed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Text table with two-decimal percentages and an average row.
pub fn format_table(title: &str, table: &[DatasetAccuracy]) -> String {
    let width = table.iter().map(|d| d.dataset.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{title}\n{:<width$}  {:>8}  {:>8}\n", "dataset", "client A", "client B");
    for d in table {
        out += &format!(
            "{:<width$}  {:>8.2}  {:>8.2}\n",
            d.dataset,
            d.client_a.percent(),
            d.client_b.percent()
        );
    }
    if table.len() > 1 {
        let (a, b) = average(table);
        out += &format!("{:<width$}  {a:>8.2}  {b:>8.2}\n", "average");
    }
    out
}

/// Trains one expert per dataset, in parallel, and returns them as a
/// registry in dataset order.
pub fn train_experts(datasets: &[PreparedDataset], config: &TrainConfig, with_centroids: bool) -> Result<Registry> {
    let entries = std::thread::scope(|scope| {
        let handles: Vec<_> = datasets
            .iter()
            .map(|d| scope.spawn(move || train_expert(d, config, with_centroids)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("expert training panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Registry::from_entries(entries)
}

/// Everything the evaluation protocol needs besides the datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One full run per seed; the seed drives the split and all weight
    /// initialization and shuffling.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Train and report the dataset-ID MLP baseline.
    #[serde(default = "default_true")]
    pub mlp_baseline: bool,
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

/// Results of one seed.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub seed: u64,
    pub registry: Registry,
    pub coarse: Vec<DatasetAccuracy>,
    pub fine: Vec<DatasetAccuracy>,
    pub end_to_end: Vec<DatasetAccuracy>,
    pub mlp: Option<Vec<DatasetAccuracy>>,
}

impl ExperimentReport {
    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = ResultRow::from_table("coarse_accuracy", self.seed, &self.coarse);
        rows.extend(ResultRow::from_table("fine_accuracy", self.seed, &self.fine));
        rows.extend(ResultRow::from_table(
            "end_to_end_accuracy",
            self.seed,
            &self.end_to_end,
        ));
        if let Some(mlp) = &self.mlp {
            rows.extend(ResultRow::from_table("mlp_dataset_accuracy", self.seed, mlp));
        }
        rows
    }
}

/// Loads each dataset once; the data itself does not depend on the run seed.
pub fn load_datasets(config: &ExperimentConfig) -> Result<Vec<(String, RawData)>> {
    if config.datasets.is_empty() {
        return Err(Error::InvalidInput("experiment has no datasets".into()));
    }
    let mut seen = std::collections::HashSet::new();
    config
        .datasets
        .iter()
        .map(|d| {
            if !seen.insert(d.name.as_str()) {
                return Err(Error::DuplicateExpert(d.name.clone()));
            }
            Ok((d.name.clone(), d.load()?))
        })
        .collect()
}

/// Split, train, and evaluate for one seed.
pub fn run_experiment(config: &ExperimentConfig, data: &[(String, RawData)], seed: u64) -> Result<ExperimentReport> {
    let split = config.split.clone().with_seed(seed);
    let datasets = data
        .iter()
        .map(|(name, raw)| prepare(name, raw.clone(), &split))
        .collect::<Result<Vec<_>>>()?;
    let train = config.train.clone().with_seed(seed);
    let registry = train_experts(&datasets, &train, true)?;
    let coarse = eval_coarse(&registry, &datasets)?;
    let mut fine = Vec::new();
    let mut end_to_end = Vec::new();
    for d in &datasets {
        let entry = registry.by_id(&d.name).expect("trained above");
        fine.push(DatasetAccuracy {
            dataset: d.name.clone(),
            client_a: eval_fine(entry, &d.split.client_a)?.tally,
            client_b: eval_fine(entry, &d.split.client_b)?.tally,
        });
        end_to_end.push(eval_end_to_end(&registry, d)?);
    }
    let mlp = if config.mlp_baseline && datasets.len() >= 2 {
        Some(eval_dataset_id(&train_mlp_baseline(&datasets, &train)?, &datasets)?)
    } else {
        None
    };
    Ok(ExperimentReport {
        seed,
        registry,
        coarse,
        fine,
        end_to_end,
        mlp,
    })
}
