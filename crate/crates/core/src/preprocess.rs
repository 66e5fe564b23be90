//! Canonicalization of client inputs into 784-dimensional samples.
//!
//! Images become 28x28 grayscale in `[0, 1]`; feature vectors of any length
//! are resampled with adaptive average pooling and optionally standardized.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Length of every canonical sample.
pub const SAMPLE_DIM: usize = 784;
/// Side of the canonical square image.
pub const IMAGE_SIDE: usize = 28;

/// A canonical 784-dimensional input, optionally tagged with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    label: Option<u32>,
    source: Option<String>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != SAMPLE_DIM {
            return Err(Error::dim("Sample::new", SAMPLE_DIM, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Sample::new"));
        }
        Ok(Self {
            values,
            label: None,
            source: None,
        })
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    /// 0..=255 intensities, scaled by 1/255.
    U8(Vec<u8>),
    /// Intensities already in `[0, 1]`.
    Real(Vec<f64>),
}

/// Row-major `height x width x channels` image.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Pixels,
}

impl RawImage {
    pub fn gray_u8(height: usize, width: usize, pixels: Vec<u8>) -> Self {
        Self {
            height,
            width,
            channels: 1,
            pixels: Pixels::U8(pixels),
        }
    }

    pub fn gray_real(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        Self {
            height,
            width,
            channels: 1,
            pixels: Pixels::Real(pixels),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        let expected = self.height * self.width * self.channels;
        let found = match &self.pixels {
            Pixels::U8(p) => p.len(),
            Pixels::Real(p) => {
                if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidInput("real-valued pixels must lie in [0, 1]".into()));
                }
                p.len()
            }
        };
        if found != expected {
            return Err(Error::dim("image_to_sample", format!("{expected} pixel values"), found));
        }
        Ok(())
    }

    /// All channel values scaled to `[0, 1]`, in storage order.
    pub fn real_values(&self) -> Vec<f64> {
        (0..self.height * self.width * self.channels)
            .map(|i| self.intensity(i))
            .collect()
    }

    fn intensity(&self, index: usize) -> f64 {
        match &self.pixels {
            Pixels::U8(p) => p[index] as f64 / 255.0,
            Pixels::Real(p) => p[index],
        }
    }

    /// Luminance plane in `[0, 1]`. Three or more channels use the first
    /// three as RGB; one or two channels use the first.
    fn grayscale(&self) -> Vec<f64> {
        let c = self.channels;
        (0..self.height * self.width)
            .map(|px| {
                let base = px * c;
                if c >= 3 {
                    0.299 * self.intensity(base) + 0.587 * self.intensity(base + 1) + 0.114 * self.intensity(base + 2)
                } else {
                    self.intensity(base)
                }
            })
            .collect()
    }
}

/// Client input before canonicalization.
#[derive(Debug, Clone, PartialEq)]
pub enum RawInput {
    Image(RawImage),
    Vector(Vec<f64>),
}

impl RawInput {
    /// Images go through [`image_to_sample`], vectors through
    /// [`adaptive_avg_pool_1d`] to [`SAMPLE_DIM`].
    pub fn canonicalize(&self) -> Result<Sample> {
        match self {
            RawInput::Image(img) => image_to_sample(img),
            RawInput::Vector(v) => Sample::new(adaptive_avg_pool_1d(v, SAMPLE_DIM)?),
        }
    }
}

/// Grayscale, corner-aligned bilinear resize to 28x28, row-major flatten.
pub fn image_to_sample(img: &RawImage) -> Result<Sample> {
    img.validate()?;
    let gray = img.grayscale();
    let resized = resize_bilinear(&gray, img.height, img.width, IMAGE_SIDE, IMAGE_SIDE);
    Sample::new(resized.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Corner-aligned source coordinate: output index `i` of `out` maps to
/// `i * (src - 1) / (out - 1)`.
fn source_coord(i: usize, src: usize, out: usize) -> (usize, usize, f64) {
    if src == 1 || out == 1 {
        return (0, 0, 0.0);
    }
    let pos = i as f64 * (src - 1) as f64 / (out - 1) as f64;
    let lo = (pos.floor() as usize).min(src - 1);
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

/// Exact when `a == b`, so constant regions survive resizing bit for bit.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn resize_bilinear(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = source_coord(y, h, out_h);
        for &(x0, x1, fx) in &cols {
            let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], fx);
            let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    out
}

/// Resamples `input` to `target` values; output `i` is the mean of
/// `input[⌊i·L/target⌋ .. ⌈(i+1)·L/target⌉)`.
pub fn adaptive_avg_pool_1d(input: &[f64], target: usize) -> Result<Vec<f64>> {
    if input.is_empty() {
        return Err(Error::InvalidInput("adaptive pooling of an empty vector".into()));
    }
    if target == 0 {
        return Err(Error::InvalidInput("adaptive pooling to zero outputs".into()));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adaptive_avg_pool_1d input"));
    }
    let len = input.len();
    Ok((0..target)
        .map(|i| {
            let start = i * len / target;
            let end = ((i + 1) * len).div_ceil(target);
            let window = &input[start..end];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect())
}

/// Per-feature `(v - mean) / std`.
pub fn standardize(sample: &Sample, mean: &[f64], std: &[f64]) -> Result<Sample> {
    if mean.len() != SAMPLE_DIM || std.len() != SAMPLE_DIM {
        return Err(Error::dim(
            "standardize",
            SAMPLE_DIM,
            format!("mean {}, std {}", mean.len(), std.len()),
        ));
    }
    if let Some(j) = std.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "standard deviation at feature {j} is not positive"
        )));
    }
    let values = sample
        .values()
        .iter()
        .zip(mean)
        .zip(std)
        .map(|((v, m), s)| (v - m) / s)
        .collect();
    let mut out = Sample::new(values)?;
    out.label = sample.label;
    out.source = sample.source.clone();
    Ok(out)
}

/// Per-feature statistics used to standardize pooled vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation over `samples`. Features with
    /// a standard deviation below `1e-12` get 1 so they pass through centred.
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("cannot fit standardization on zero samples".into()));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; SAMPLE_DIM];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.values()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; SAMPLE_DIM];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s.values()).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, sample: &Sample) -> Result<Sample> {
        standardize(sample, &self.mean, &self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_images_stay_constant() {
        let s = image_to_sample(&RawImage::gray_u8(28, 28, vec![255; 784])).unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0));

        let s = image_to_sample(&RawImage::gray_u8(56, 56, vec![51; 56 * 56])).unwrap();
        assert!(s.values().iter().all(|&v| v == 51.0 / 255.0));
    }

    #[test]
    fn two_by_two_upsample_is_a_horizontal_ramp() {
        let s = image_to_sample(&RawImage::gray_u8(2, 2, vec![0, 255, 0, 255])).unwrap();
        let v = s.values();
        let first = &v[..28];
        for r in 1..28 {
            assert_eq!(&v[r * 28..(r + 1) * 28], first);
        }
        // corner-aligned bilinear on a 0→1 step: column x has value x/27
        for (x, &val) in first.iter().enumerate() {
            assert!((val - x as f64 / 27.0).abs() < 1e-12);
        }
        assert!(first.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rgb_uses_luminance() {
        let img = RawImage {
            height: 1,
            width: 1,
            channels: 3,
            pixels: Pixels::U8(vec![255, 0, 0]),
        };
        let s = image_to_sample(&img).unwrap();
        assert!(s.values().iter().all(|&v| (v - 0.299).abs() < 1e-12));
    }

    #[test]
    fn idempotent_on_canonical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let px: Vec<f64> = (0..784).map(|_| rng.random_range(0.0..=1.0)).collect();
        let once = image_to_sample(&RawImage::gray_real(28, 28, px.clone())).unwrap();
        let twice = image_to_sample(&RawImage::gray_real(28, 28, once.values().to_vec())).unwrap();
        for ((a, b), c) in once.values().iter().zip(twice.values()).zip(&px) {
            assert!((a - b).abs() < 1e-12);
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sized_image_rejected() {
        assert!(image_to_sample(&RawImage::gray_u8(0, 5, vec![])).is_err());
        assert!(image_to_sample(&RawImage::gray_u8(2, 2, vec![0; 3])).is_err());
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(adaptive_avg_pool_1d(&[0.0, 2.0, 4.0, 6.0], 2).unwrap(), vec![1.0, 5.0]);
        let x: Vec<f64> = (0..784).map(|i| (i as f64).sin()).collect();
        assert_eq!(adaptive_avg_pool_1d(&x, 784).unwrap(), x);
        assert!(adaptive_avg_pool_1d(&[], 784).is_err());
    }

    fn brute_force_pool(x: &[f64], target: usize) -> Vec<(f64, f64, f64)> {
        let l = x.len() as f64;
        (0..target)
            .map(|i| {
                let start = (i as f64 * l / target as f64).floor() as usize;
                let end = ((i + 1) as f64 * l / target as f64).ceil() as usize;
                let mut sum = 0.0;
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &v in &x[start..end] {
                    sum += v;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (sum / (end - start) as f64, lo, hi)
            })
            .collect()
    }

    #[test]
    fn pooling_matches_window_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for len in [561usize, 2000, 1, 783, 785] {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let pooled = adaptive_avg_pool_1d(&x, 784).unwrap();
            for (p, (mean, lo, hi)) in pooled.iter().zip(brute_force_pool(&x, 784)) {
                assert!((p - mean).abs() < 1e-12);
                assert!(*p >= lo - 1e-12 && *p <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn standardize_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..784).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = Sample::new(v.clone()).unwrap();
        let zero = standardize(&s, &v, &vec![1.0; 784]).unwrap();
        assert!(zero.values().iter().all(|&x| x == 0.0));
        let same = standardize(&s, &vec![0.0; 784], &vec![1.0; 784]).unwrap();
        assert_eq!(same.values(), s.values());

        let mean: Vec<f64> = (0..784).map(|_| rng.random_range(-1.0..1.0)).collect();
        let std: Vec<f64> = (0..784).map(|_| rng.random_range(0.1..2.0)).collect();
        let out = standardize(&s, &mean, &std).unwrap();
        for j in 0..784 {
            assert!((out.values()[j] - (v[j] - mean[j]) / std[j]).abs() < 1e-12);
        }

        let mut bad = vec![1.0; 784];
        bad[10] = 0.0;
        assert!(standardize(&s, &mean, &bad).is_err());
    }

    #[test]
    fn sample_length_enforced() {
        assert!(Sample::new(vec![0.0; 783]).is_err());
        assert!(Sample::new(vec![f64::NAN; 784]).is_err());
    }
}
