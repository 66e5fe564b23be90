//! Expert assignment.
//!
//! Coarse: the expert whose autoencoder reconstructs the sample with the
//! lowest mean squared error. Fine: within one expert, the class whose
//! centroid has the highest cosine similarity with the sample's bottleneck
//! encoding. Ties go to the lowest registry index / class index.

use std::time::{Duration, Instant};

use crate::index::{samples_to_matrix, ClassCentroids, ExpertEntry, Registry};
use crate::preprocess::Sample;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FineMatch {
    /// Winning class id n*.
    pub class_id: u32,
    /// Position of the winner in the centroid table.
    pub class_index: usize,
    /// Cosine similarity with every centroid, in centroid order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Reconstruction loss of every expert, in registry order.
    pub coarse_losses: Vec<f64>,
    /// k*, the argmin of `coarse_losses`.
    pub coarse_index: usize,
    /// Expert indices by ascending loss; a permutation of `0..K`.
    pub coarse_ranking: Vec<usize>,
    pub fine: Option<FineMatch>,
    pub elapsed: Duration,
}

impl MatchResult {
    pub fn fine_class(&self) -> Option<u32> {
        self.fine.as_ref().map(|f| f.class_id)
    }

    pub fn fine_scores(&self) -> Option<&[f64]> {
        self.fine.as_ref().map(|f| f.scores.as_slice())
    }

    /// The `k` best experts (all of them if `k >= K`).
    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.coarse_ranking[..k.min(self.coarse_ranking.len())]
    }

    /// Bitwise equality of everything except `elapsed`.
    pub fn same_outcome(&self, other: &MatchResult) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.coarse_losses) == bits(&other.coarse_losses)
            && self.coarse_index == other.coarse_index
            && self.coarse_ranking == other.coarse_ranking
            && match (&self.fine, &other.fine) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    a.class_id == b.class_id && a.class_index == b.class_index && bits(&a.scores) == bits(&b.scores)
                }
                _ => false,
            }
    }
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("cosine_similarity", a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine_similarity"));
    }
    let cos = dot / (na.sqrt() * nb.sqrt());
    if !cos.is_finite() {
        return Err(Error::NonFinite("cosine_similarity"));
    }
    Ok(cos.clamp(-1.0, 1.0))
}

/// Indices sorted by ascending value; equal values keep index order.
pub fn rank_ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    idx
}

/// Index of the first maximum.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

fn coarse_from_losses(coarse_losses: Vec<f64>, elapsed: Duration) -> MatchResult {
    let coarse_ranking = rank_ascending(&coarse_losses);
    MatchResult {
        coarse_index: coarse_ranking[0],
        coarse_ranking,
        coarse_losses,
        fine: None,
        elapsed,
    }
}

/// Scores a bottleneck encoding against class centroids.
pub fn fine_match_encoding(centroids: &ClassCentroids, encoding: &[f64]) -> Result<FineMatch> {
    if encoding.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroNorm("fine_match encoding"));
    }
    let scores = (0..centroids.len())
        .map(|i| cosine_similarity(encoding, centroids.centroid(i)))
        .collect::<Result<Vec<_>>>()?;
    let class_index = argmax_first(&scores).expect("centroids are non-empty");
    Ok(FineMatch {
        class_id: centroids.class_ids()[class_index],
        class_index,
        scores,
    })
}

pub fn coarse_match(registry: &Registry, x: &Sample) -> Result<MatchResult> {
    let start = Instant::now();
    if registry.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    let losses = registry
        .iter()
        .map(|e| e.autoencoder.reconstruction_loss(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(coarse_from_losses(losses, start.elapsed()))
}

pub fn fine_match(entry: &ExpertEntry, x: &Sample) -> Result<FineMatch> {
    let centroids = entry
        .centroids
        .as_ref()
        .ok_or_else(|| Error::MissingCentroids(entry.expert_id.clone()))?;
    fine_match_encoding(centroids, &entry.autoencoder.encode(x)?)
}

/// Coarse assignment, then fine assignment within the winning expert when it
/// has centroids. A winner without centroids yields no fine result.
pub fn hierarchical_match(registry: &Registry, x: &Sample) -> Result<MatchResult> {
    let start = Instant::now();
    let mut result = coarse_match(registry, x)?;
    let winner = registry.get(result.coarse_index).expect("index from this registry");
    if winner.centroids.is_some() {
        result.fine = Some(fine_match(winner, x)?);
    }
    result.elapsed = start.elapsed();
    Ok(result)
}

/// [`coarse_match`] over many samples; each expert processes the samples in
/// large chunks. Results equal the per-sample calls (apart from `elapsed`,
/// which holds the amortized time per sample).
pub fn coarse_match_batch(registry: &Registry, samples: &[Sample]) -> Result<Vec<MatchResult>> {
    const CHUNK: usize = 1024;
    let start = Instant::now();
    if registry.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    let mut per_sample: Vec<Vec<f64>> = vec![Vec::with_capacity(registry.len()); samples.len()];
    for (c, chunk) in samples.chunks(CHUNK).enumerate() {
        let x = samples_to_matrix(chunk)?;
        for entry in registry.iter() {
            for (i, loss) in entry.autoencoder.reconstruction_losses(&x)?.into_iter().enumerate() {
                per_sample[c * CHUNK + i].push(loss);
            }
        }
    }
    let each = start.elapsed() / samples.len().max(1) as u32;
    Ok(per_sample.into_iter().map(|l| coarse_from_losses(l, each)).collect())
}

/// [`hierarchical_match`] over many samples.
pub fn hierarchical_match_batch(registry: &Registry, samples: &[Sample]) -> Result<Vec<MatchResult>> {
    let mut results = coarse_match_batch(registry, samples)?;
    for (k, entry) in registry.iter().enumerate() {
        let Some(centroids) = &entry.centroids else {
            continue;
        };
        let routed: Vec<usize> = (0..samples.len()).filter(|&i| results[i].coarse_index == k).collect();
        for chunk in routed.chunks(1024) {
            let x = samples_to_matrix(&chunk.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>())?;
            let h = entry.autoencoder.encode_batch(&x)?;
            for (&i, enc) in chunk.iter().zip(h.iter_rows()) {
                results[i].fine = Some(fine_match_encoding(centroids, enc)?);
            }
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm(_))
        ));
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        assert_eq!(rank_ascending(&[2.0, 1.0, 1.0, 0.5]), vec![3, 1, 2, 0]);
        assert_eq!(argmax_first(&[0.1, 0.9, 0.9]), Some(1));
        assert_eq!(argmax_first(&[]), None);
    }

    #[test]
    fn empty_registry() {
        let x = Sample::new(vec![0.0; 784]).unwrap();
        assert!(matches!(coarse_match(&Registry::new(), &x), Err(Error::EmptyRegistry)));
        assert!(matches!(
            hierarchical_match(&Registry::new(), &x),
            Err(Error::EmptyRegistry)
        ));
    }
}
