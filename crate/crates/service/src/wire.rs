//! JSON wire types.
//!
//! Floats travel as decimal strings with 17 significant digits so every
//! 64-bit value survives a round trip; plain JSON numbers are accepted on
//! input too. Weight arrays travel as base64 of little-endian `f64` bytes.

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use exroute_core::index::{
    AutoencoderModel, ClassCentroids, ExpertEntry, InputKind, Preprocessing, Registry, TrainFingerprint,
};
use exroute_core::matcher::MatchResult;
use exroute_core::nn::{Activation, BatchNorm1d, Dense, Matrix};
use exroute_core::preprocess::{Pixels, RawImage, RawInput, Standardization};

use crate::error::ApiError;

/// An `f64` encoded as a 17-significant-digit decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireF64(pub f64);

impl Serialize for WireF64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_f64(self.0))
    }
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl<'de> Deserialize<'de> for WireF64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = WireF64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a finite number or decimal string")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<WireF64, E> {
                match s.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(WireF64(v)),
                    _ => Err(E::custom(format!("`{s}` is not a finite decimal number"))),
                }
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<WireF64, E> {
                if v.is_finite() {
                    Ok(WireF64(v))
                } else {
                    Err(E::custom("number is not finite"))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<WireF64, E> {
                Ok(WireF64(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<WireF64, E> {
                Ok(WireF64(v as f64))
            }
        }
        d.deserialize_any(V)
    }
}

pub fn wire_vec(values: &[f64]) -> Vec<WireF64> {
    values.iter().copied().map(WireF64).collect()
}

pub fn plain_vec(values: &[WireF64]) -> Vec<f64> {
    values.iter().map(|w| w.0).collect()
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

pub fn decode_f64s(field: &str, text: &str, expected_len: usize) -> Result<Vec<f64>, ApiError> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| ApiError::validation(field, format!("invalid base64: {e}")))?;
    if bytes.len() != expected_len * 8 {
        return Err(ApiError::validation(
            field,
            format!(
                "expected {expected_len} f64 values ({} bytes), got {} bytes",
                expected_len * 8,
                bytes.len()
            ),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::validation(field, "contains non-finite values"));
    }
    Ok(values)
}

// ---------------------------------------------------------------- experts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseWire {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim x in_dim`, row-major.
    pub weights: String,
    pub bias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchNormWire {
    pub features: usize,
    pub momentum: WireF64,
    pub epsilon: WireF64,
    pub gamma: String,
    pub beta: String,
    pub running_mean: String,
    pub running_var: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderWire {
    pub output_activation: Activation,
    pub encoder: DenseWire,
    pub norm: BatchNormWire,
    pub decoder: DenseWire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentroidsWire {
    pub class_ids: Vec<u32>,
    pub counts: Vec<u64>,
    pub dim: usize,
    /// `len(class_ids) x dim`, row-major.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardizationWire {
    pub mean: String,
    pub std: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingWire {
    #[serde(flatten)]
    pub kind: InputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<StandardizationWire>,
}

/// Body of `POST /v1/experts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertPayload {
    pub expert_id: String,
    #[serde(default)]
    pub display_name: Option<String>,
    pub preprocessing: PreprocessingWire,
    #[serde(default)]
    pub fingerprint: TrainFingerprint,
    pub autoencoder: AutoencoderWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<CentroidsWire>,
}

fn dense_to_wire(d: &Dense) -> DenseWire {
    DenseWire {
        in_dim: d.in_dim(),
        out_dim: d.out_dim(),
        weights: encode_f64s(d.weights().data()),
        bias: encode_f64s(d.bias()),
    }
}

fn dense_from_wire(field: &str, w: &DenseWire) -> Result<Dense, ApiError> {
    let weights = decode_f64s(&format!("{field}.weights"), &w.weights, w.in_dim * w.out_dim)?;
    let bias = decode_f64s(&format!("{field}.bias"), &w.bias, w.out_dim)?;
    let weights = Matrix::from_vec(w.out_dim, w.in_dim, weights).map_err(|e| ApiError::validation(field, e))?;
    Dense::from_parts(weights, bias).map_err(|e| ApiError::validation(field, e))
}

impl ExpertPayload {
    pub fn from_entry(e: &ExpertEntry) -> Self {
        let ae = &e.autoencoder;
        let bn = ae.norm();
        ExpertPayload {
            expert_id: e.expert_id.clone(),
            display_name: Some(e.display_name.clone()),
            preprocessing: PreprocessingWire {
                kind: e.preprocessing.kind,
                standardization: e.preprocessing.standardization.as_ref().map(|s| StandardizationWire {
                    mean: encode_f64s(&s.mean),
                    std: encode_f64s(&s.std),
                }),
            },
            fingerprint: e.fingerprint,
            autoencoder: AutoencoderWire {
                output_activation: ae.output_activation(),
                encoder: dense_to_wire(ae.encoder()),
                norm: BatchNormWire {
                    features: bn.features(),
                    momentum: WireF64(bn.momentum()),
                    epsilon: WireF64(bn.epsilon()),
                    gamma: encode_f64s(bn.gamma()),
                    beta: encode_f64s(bn.beta()),
                    running_mean: encode_f64s(bn.running_mean()),
                    running_var: encode_f64s(bn.running_var()),
                },
                decoder: dense_to_wire(ae.decoder()),
            },
            centroids: e.centroids.as_ref().map(|c| CentroidsWire {
                class_ids: c.class_ids().to_vec(),
                counts: c.counts().to_vec(),
                dim: c.dim(),
                data: encode_f64s(c.matrix().data()),
            }),
        }
    }

    pub fn into_entry(self) -> Result<ExpertEntry, ApiError> {
        if self.expert_id.trim().is_empty() {
            return Err(ApiError::validation("expert_id", "must not be empty"));
        }
        let a = &self.autoencoder;
        let encoder = dense_from_wire("autoencoder.encoder", &a.encoder)?;
        let decoder = dense_from_wire("autoencoder.decoder", &a.decoder)?;
        let n = a.norm.features;
        let bn = |name: &str, text: &str| decode_f64s(&format!("autoencoder.norm.{name}"), text, n);
        let norm = BatchNorm1d::from_parts(
            bn("gamma", &a.norm.gamma)?,
            bn("beta", &a.norm.beta)?,
            bn("running_mean", &a.norm.running_mean)?,
            bn("running_var", &a.norm.running_var)?,
            a.norm.momentum.0,
            a.norm.epsilon.0,
        )
        .map_err(|e| ApiError::validation("autoencoder.norm", e))?;
        let autoencoder = AutoencoderModel::from_parts(encoder, norm, decoder, a.output_activation)
            .map_err(|e| ApiError::validation("autoencoder", e))?;
        let centroids = match &self.centroids {
            None => None,
            Some(c) => {
                let data = decode_f64s("centroids.data", &c.data, c.class_ids.len() * c.dim)?;
                let matrix = Matrix::from_vec(c.class_ids.len(), c.dim, data)
                    .map_err(|e| ApiError::validation("centroids", e))?;
                Some(
                    ClassCentroids::new(c.class_ids.clone(), c.counts.clone(), matrix)
                        .map_err(|e| ApiError::validation("centroids", e))?,
                )
            }
        };
        let standardization = match &self.preprocessing.standardization {
            None => None,
            Some(s) => {
                let dim = autoencoder.input_dim();
                Some(Standardization {
                    mean: decode_f64s("preprocessing.standardization.mean", &s.mean, dim)?,
                    std: decode_f64s("preprocessing.standardization.std", &s.std, dim)?,
                })
            }
        };
        if let Some(s) = &standardization {
            if s.std.iter().any(|&v| !(v > 0.0)) {
                return Err(ApiError::validation(
                    "preprocessing.standardization.std",
                    "entries must be positive",
                ));
            }
        }
        let entry = ExpertEntry {
            display_name: self.display_name.unwrap_or_else(|| self.expert_id.clone()),
            expert_id: self.expert_id,
            autoencoder,
            centroids,
            preprocessing: Preprocessing {
                kind: self.preprocessing.kind,
                standardization,
            },
            fingerprint: self.fingerprint,
        };
        entry.validate().map_err(|e| ApiError::validation("expert", e))?;
        Ok(entry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub expert_id: String,
    pub index: usize,
    pub experts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSummary {
    pub index: usize,
    pub expert_id: String,
    pub display_name: String,
    pub input: InputKind,
    pub standardized: bool,
    /// Class ids with centroids; absent when the expert supports coarse
    /// matching only.
    pub classes: Option<Vec<u32>>,
    pub fingerprint: TrainFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertList {
    pub format_version: u32,
    pub experts: Vec<ExpertSummary>,
}

impl ExpertList {
    pub fn of(registry: &Registry) -> Self {
        ExpertList {
            format_version: registry.format_version(),
            experts: registry
                .iter()
                .enumerate()
                .map(|(index, e)| ExpertSummary {
                    index,
                    expert_id: e.expert_id.clone(),
                    display_name: e.display_name.clone(),
                    input: e.preprocessing.kind,
                    standardized: e.preprocessing.standardization.is_some(),
                    classes: e.centroids.as_ref().map(|c| c.class_ids().to_vec()),
                    fingerprint: e.fingerprint,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub experts: usize,
}

// ------------------------------------------------------------------ match

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Coarse,
    Fine,
    #[default]
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelEncoding {
    /// One byte per value, scaled by 1/255.
    U8,
    /// Little-endian `f64` per value, each in `[0, 1]`.
    F64,
}

/// Raw client data plus how to canonicalize it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawPayload {
    /// Row-major `height x width x channels`, base64 encoded.
    Image {
        height: usize,
        width: usize,
        channels: usize,
        encoding: PixelEncoding,
        data: String,
    },
    /// Pooled to 784 values, then standardized with the statistics stored
    /// for `standardize_with`, if given.
    Vector {
        values: Vec<WireF64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        standardize_with: Option<String>,
    },
}

impl RawPayload {
    pub fn to_raw_input(&self) -> Result<RawInput, ApiError> {
        Ok(match self {
            RawPayload::Image {
                height,
                width,
                channels,
                encoding,
                data,
            } => {
                let count = height * width * channels;
                let pixels = match encoding {
                    PixelEncoding::U8 => {
                        let bytes = BASE64
                            .decode(data)
                            .map_err(|e| ApiError::validation("raw.data", format!("invalid base64: {e}")))?;
                        if bytes.len() != count {
                            return Err(ApiError::validation(
                                "raw.data",
                                format!("expected {count} bytes, got {}", bytes.len()),
                            ));
                        }
                        Pixels::U8(bytes)
                    }
                    PixelEncoding::F64 => Pixels::Real(decode_f64s("raw.data", data, count)?),
                };
                RawInput::Image(RawImage {
                    height: *height,
                    width: *width,
                    channels: *channels,
                    pixels,
                })
            }
            RawPayload::Vector { values, .. } => RawInput::Vector(plain_vec(values)),
        })
    }
}

/// Body of `POST /v1/match`. Exactly one of `sample` and `raw` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<Vec<WireF64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawPayload>,
    #[serde(default)]
    pub resolution: Resolution,
    /// Ranking length; defaults to all experts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// Fine resolution only: expert to classify with instead of the coarse
    /// winner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedExpert {
    pub index: usize,
    pub expert_id: String,
    pub loss: WireF64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineWire {
    pub expert_id: String,
    pub class_id: u32,
    pub class_index: usize,
    pub scores: Vec<WireF64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResponse {
    /// Coarse winner.
    pub expert_id: String,
    pub coarse_index: usize,
    /// One loss per expert, in registry order.
    pub losses: Vec<WireF64>,
    /// Experts by ascending loss, truncated to `top_k`.
    pub ranking: Vec<RankedExpert>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<FineWire>,
    pub elapsed_us: u64,
}

impl MatchResponse {
    /// `fine_expert` names the expert that produced `result.fine`.
    pub fn build(registry: &Registry, result: &MatchResult, top_k: usize, fine_expert: Option<&str>) -> Self {
        let id = |i: usize| registry.get(i).expect("index from this registry").expert_id.clone();
        MatchResponse {
            expert_id: id(result.coarse_index),
            coarse_index: result.coarse_index,
            losses: wire_vec(&result.coarse_losses),
            ranking: result
                .top_k(top_k)
                .iter()
                .map(|&i| RankedExpert {
                    index: i,
                    expert_id: id(i),
                    loss: WireF64(result.coarse_losses[i]),
                })
                .collect(),
            fine: result.fine.as_ref().map(|f| FineWire {
                expert_id: fine_expert
                    .map(str::to_string)
                    .unwrap_or_else(|| id(result.coarse_index)),
                class_id: f.class_id,
                class_index: f.class_index,
                scores: wire_vec(&f.scores),
            }),
            elapsed_us: result.elapsed.as_micros() as u64,
        }
    }
}

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_strings_round_trip_exactly() {
        for v in [
            0.1,
            -0.0,
            1.0 / 3.0,
            5e-324,
            f64::MAX,
            f64::MIN_POSITIVE,
            123456789.12345679,
            -2.5e-300,
        ] {
            let json = serde_json::to_string(&WireF64(v)).unwrap();
            let back: WireF64 = serde_json::from_str(&json).unwrap();
            assert_eq!(back.0.to_bits(), v.to_bits(), "{json}");
        }
    }

    #[test]
    fn numbers_and_strings_accepted() {
        let v: Vec<WireF64> = serde_json::from_str(r#"[1, -2, 0.25, "3.5", " 1e-3 "]"#).unwrap();
        assert_eq!(plain_vec(&v), vec![1.0, -2.0, 0.25, 3.5, 1e-3]);
        assert!(serde_json::from_str::<WireF64>(r#""NaN""#).is_err());
        assert!(serde_json::from_str::<WireF64>(r#""inf""#).is_err());
        assert!(serde_json::from_str::<WireF64>(r#""abc""#).is_err());
    }

    #[test]
    fn base64_blobs() {
        let v = vec![1.5, -0.0, f64::MIN_POSITIVE];
        let text = encode_f64s(&v);
        let back = decode_f64s("w", &text, 3).unwrap();
        assert_eq!(
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        let err = decode_f64s("w", &text, 4).unwrap_err();
        assert_eq!(err.field(), Some("w"));
        assert!(decode_f64s("w", "!!", 0).is_err());
        assert!(decode_f64s("w", &encode_f64s(&[f64::NAN]), 1).is_err());
    }

    #[test]
    fn request_shape() {
        let req: MatchRequest =
            serde_json::from_str(r#"{"raw": {"kind": "vector", "values": [1, 2]}, "resolution": "coarse"}"#).unwrap();
        assert_eq!(req.resolution, Resolution::Coarse);
        assert!(matches!(req.raw, Some(RawPayload::Vector { .. })));
        assert!(serde_json::from_str::<MatchRequest>(r#"{"samples": []}"#).is_err());
    }
}
