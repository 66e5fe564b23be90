use std::time::Instant;

use exroute_core::index::Registry;
use exroute_core::matcher::{coarse_match, fine_match, hierarchical_match};
use exroute_core::preprocess::{adaptive_avg_pool_1d, RawInput, Sample, SAMPLE_DIM};

use crate::error::ApiError;
use crate::wire::{plain_vec, MatchRequest, MatchResponse, RawPayload, Resolution};

/// Canonical sample for a request: the `sample` field as given, or the
/// `raw` payload preprocessed as directed.
pub fn request_sample(registry: &Registry, req: &MatchRequest) -> Result<Sample, ApiError> {
    match (&req.sample, &req.raw) {
        (Some(_), Some(_)) => Err(ApiError::validation(
            "sample",
            "give either `sample` or `raw`, not both",
        )),
        (None, None) => Err(ApiError::validation("sample", "one of `sample` or `raw` is required")),
        (Some(values), None) => {
            if values.len() != SAMPLE_DIM {
                return Err(ApiError::validation(
                    "sample",
                    format!("expected {SAMPLE_DIM} values, got {}", values.len()),
                ));
            }
            Sample::new(plain_vec(values)).map_err(|e| ApiError::validation("sample", e))
        }
        (None, Some(raw)) => {
            let input = raw.to_raw_input()?;
            match (&input, raw) {
                (RawInput::Image(_), _) => input.canonicalize().map_err(|e| ApiError::validation("raw", e)),
                (RawInput::Vector(v), RawPayload::Vector { standardize_with, .. }) => {
                    if v.is_empty() {
                        return Err(ApiError::validation("raw.values", "must not be empty"));
                    }
                    let pooled = adaptive_avg_pool_1d(v, SAMPLE_DIM)
                        .and_then(Sample::new)
                        .map_err(|e| ApiError::validation("raw.values", e))?;
                    let Some(id) = standardize_with else {
                        return Ok(pooled);
                    };
                    let field = "raw.standardize_with";
                    let entry = registry
                        .by_id(id)
                        .ok_or_else(|| ApiError::validation(field, format!("unknown expert `{id}`")))?;
                    let stats = entry.preprocessing.standardization.as_ref().ok_or_else(|| {
                        ApiError::validation(field, format!("expert `{id}` has no standardization statistics"))
                    })?;
                    stats.apply(&pooled).map_err(|e| ApiError::validation(field, e))
                }
                (RawInput::Vector(_), RawPayload::Image { .. }) => unreachable!("image payloads decode to images"),
            }
        }
    }
}

/// Runs a match request against `registry`. The numbers in the response
/// come straight from the library matcher.
pub fn execute_match(registry: &Registry, req: &MatchRequest) -> Result<MatchResponse, ApiError> {
    let start = Instant::now();
    if registry.is_empty() {
        return Err(ApiError::unavailable("no experts are registered"));
    }
    let k = registry.len();
    let top_k = req.top_k.unwrap_or(k);
    if top_k == 0 || top_k > k {
        return Err(ApiError::validation(
            "top_k",
            format!("must be between 1 and {k}, got {top_k}"),
        ));
    }
    if req.expert_id.is_some() && req.resolution != Resolution::Fine {
        return Err(ApiError::validation("expert_id", "only valid with resolution `fine`"));
    }
    let x = request_sample(registry, req)?;
    let core = |e| ApiError::from_core("sample", e);
    let (mut result, fine_expert) = match req.resolution {
        Resolution::Coarse => (coarse_match(registry, &x).map_err(core)?, None),
        Resolution::Hierarchical => (hierarchical_match(registry, &x).map_err(core)?, None),
        Resolution::Fine => {
            let mut result = coarse_match(registry, &x).map_err(core)?;
            let target = match &req.expert_id {
                Some(id) => registry
                    .by_id(id)
                    .ok_or_else(|| ApiError::validation("expert_id", format!("unknown expert `{id}`")))?,
                None => registry.get(result.coarse_index).expect("coarse index is valid"),
            };
            result.fine = Some(fine_match(target, &x).map_err(core)?);
            (result, Some(target.expert_id.clone()))
        }
    };
    result.elapsed = start.elapsed();
    Ok(MatchResponse::build(registry, &result, top_k, fine_expert.as_deref()))
}
