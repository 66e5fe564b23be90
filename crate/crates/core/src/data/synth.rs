//! Seeded Gaussian-cluster datasets standing in for corpora that are not
//! available locally.
//!
//! Each class is a Gaussian with covariance
//! `sigma² I + latent_scale² B Bᵀ`, where `B` is a random orthonormal
//! `dims × latent_rank` basis shared by all classes of the dataset. Class
//! means sit at `offset + margin · sigma / √2 · u_c` for orthonormal `u_c`
//! that are also orthogonal to `B`, so any two means are exactly
//! `margin · sigma` apart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledRaw;
use crate::preprocess::{Pixels, RawImage, RawInput};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layout {
    Vector,
    /// Values are clamped to `[0, 1]` and emitted as real-valued pixels.
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dims: usize,
    pub samples: usize,
    /// Distance between class means in units of `sigma`.
    pub margin: f64,
    pub sigma: f64,
    #[serde(default)]
    pub latent_rank: usize,
    #[serde(default)]
    pub latent_scale: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "default_layout")]
    pub layout: Layout,
    /// Image layouts only: mean and latent directions are constant over
    /// `block x block` pixel tiles, so class structure survives downscaling.
    /// Noise stays per pixel.
    #[serde(default = "default_block")]
    pub block: usize,
    /// Relative class frequencies; uniform when absent.
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_layout() -> Layout {
    Layout::Vector
}

fn default_block() -> usize {
    1
}

impl SyntheticSpec {
    /// Named proxies with the dimensionality and class structure of common
    /// benchmark corpora.
    pub fn preset(name: &str, samples: usize, seed: u64) -> Option<Self> {
        let vector = |classes, dims, weights: Option<Vec<f64>>| SyntheticSpec {
            classes,
            dims,
            samples,
            margin: 5.0,
            sigma: 1.0,
            latent_rank: 64,
            latent_scale: 3.0,
            offset: 0.0,
            layout: Layout::Vector,
            block: 1,
            class_weights: weights,
            seed,
        };
        Some(match name {
            // 32x32 RGB objects, 10 balanced classes
            "stl10" => SyntheticSpec {
                classes: 10,
                dims: 32 * 32 * 3,
                samples,
                margin: 16.0,
                sigma: 0.05,
                latent_rank: 16,
                latent_scale: 0.25,
                offset: 0.5,
                layout: Layout::Image {
                    height: 32,
                    width: 32,
                    channels: 3,
                },
                block: 4,
                class_weights: None,
                seed,
            },
            // 561 sensor features, 6 classes, 19%..14% balance
            "har" => vector(6, 561, Some(vec![19.0, 17.0, 17.0, 17.0, 16.0, 14.0])),
            // 2000 text features, 4 classes, 43.12%..8.14% balance
            "reuters" => vector(4, 2000, Some(vec![43.12, 27.0, 21.74, 8.14])),
            "gaussian" => vector(10, 784, None),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 4] = ["stl10", "har", "reuters", "gaussian"];

    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dims == 0 || self.samples == 0 {
            return Err(Error::InvalidInput(format!(
                "synthetic classes, dims and samples must be positive (got {}, {}, {})",
                self.classes, self.dims, self.samples
            )));
        }
        if self.block == 0 {
            return Err(Error::InvalidInput("block must be at least 1".into()));
        }
        if self.block > 1 {
            match self.layout {
                Layout::Image { height, width, .. } if height % self.block == 0 && width % self.block == 0 => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "block {} needs an image layout whose sides it divides",
                        self.block
                    )))
                }
            }
        }
        if self.classes + self.latent_rank > self.direction_dims() {
            return Err(Error::InvalidInput(format!(
                "{} classes + rank {} do not fit in {} dimensions",
                self.classes,
                self.latent_rank,
                self.direction_dims()
            )));
        }
        if !(self.sigma > 0.0) || !(self.margin >= 0.0) || !(self.latent_scale >= 0.0) || !self.offset.is_finite() {
            return Err(Error::InvalidInput(
                "sigma must be positive; margin and latent_scale non-negative".into(),
            ));
        }
        if let Layout::Image {
            height,
            width,
            channels,
        } = self.layout
        {
            if height * width * channels != self.dims {
                return Err(Error::InvalidInput(format!(
                    "image layout {height}x{width}x{channels} does not hold {} values",
                    self.dims
                )));
            }
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.classes || w.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidInput(
                    "class_weights need one positive weight per class".into(),
                ));
            }
        }
        Ok(())
    }

    fn direction_dims(&self) -> usize {
        self.dims / (self.block * self.block)
    }

    /// Replicates a tile-level unit vector over its pixels, keeping unit norm.
    fn expand(&self, v: Vec<f64>) -> Vec<f64> {
        let Layout::Image {
            height,
            width,
            channels,
        } = self.layout
        else {
            return v;
        };
        if self.block == 1 {
            return v;
        }
        let b = self.block;
        let tiles_w = width / b;
        let scale = 1.0 / b as f64;
        let mut out = Vec::with_capacity(self.dims);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    out.push(v[((y / b) * tiles_w + x / b) * channels + c] * scale);
                }
            }
        }
        out
    }

    /// Per-class sample counts: floors of the weighted shares, remainder to
    /// the largest fractional parts (lowest class first on ties).
    pub fn class_counts(&self) -> Vec<usize> {
        let weights = self.class_weights.clone().unwrap_or_else(|| vec![1.0; self.classes]);
        let total: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|w| w / total * self.samples as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut rest = self.samples - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..self.classes).collect();
        order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())));
        for &i in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[i] += 1;
            rest -= 1;
        }
        counts
    }
}

fn orthonormal_basis(count: usize, dims: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        // modified Gram-Schmidt, applied twice for orthogonality at 1e-15
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Draws `spec.samples` labeled inputs. Output order is shuffled; the same
/// spec always yields the same data.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledRaw> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let basis: Vec<Vec<f64>> = orthonormal_basis(spec.classes + spec.latent_rank, spec.direction_dims(), &mut rng)
        .into_iter()
        .map(|v| spec.expand(v))
        .collect();
    let (mean_dirs, latent) = basis.split_at(spec.classes);
    let spread = spec.margin * spec.sigma / std::f64::consts::SQRT_2;

    let mut labels: Vec<u32> = spec
        .class_counts()
        .into_iter()
        .enumerate()
        .flat_map(|(c, n)| std::iter::repeat_n(c as u32, n))
        .collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);

    let inputs = labels
        .iter()
        .map(|&c| {
            let dir = &mean_dirs[c as usize];
            let mut x: Vec<f64> = (0..spec.dims)
                .map(|j| spec.offset + spread * dir[j] + spec.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for b in latent {
                let z: f64 = spec.latent_scale * rng.sample::<f64, _>(StandardNormal);
                x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += z * bi);
            }
            match spec.layout {
                Layout::Vector => RawInput::Vector(x),
                Layout::Image {
                    height,
                    width,
                    channels,
                } => RawInput::Image(RawImage {
                    height,
                    width,
                    channels,
                    pixels: Pixels::Real(x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()),
                }),
            }
        })
        .collect();
    Ok(LabeledRaw { inputs, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors(raw: &LabeledRaw) -> Vec<&[f64]> {
        raw.inputs
            .iter()
            .map(|i| match i {
                RawInput::Vector(v) => v.as_slice(),
                RawInput::Image(_) => panic!("vector layout"),
            })
            .collect()
    }

    // nearest class mean estimated from `train`, scored on `test`
    fn nearest_mean_accuracy(train: &LabeledRaw, test: &LabeledRaw, classes: usize) -> f64 {
        let dims = vectors(train)[0].len();
        let mut means = vec![vec![0.0; dims]; classes];
        let mut counts = vec![0usize; classes];
        for (x, &c) in vectors(train).into_iter().zip(&train.labels) {
            counts[c as usize] += 1;
            means[c as usize].iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        for (m, n) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= (*n).max(1) as f64);
        }
        let correct = vectors(test)
            .into_iter()
            .zip(&test.labels)
            .filter(|(x, &c)| {
                let d = |m: &Vec<f64>| m.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let best = (0..classes)
                    .min_by(|&i, &j| d(&means[i]).total_cmp(&d(&means[j])))
                    .unwrap();
                best == c as usize
            })
            .count();
        correct as f64 / test.labels.len() as f64
    }

    fn spec(classes: usize, margin: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            classes,
            dims: 50,
            samples: 400,
            margin,
            sigma: 1.0,
            latent_rank: 0,
            latent_scale: 0.0,
            offset: 0.0,
            layout: Layout::Vector,
            block: 1,
            class_weights: None,
            seed,
        }
    }

    #[test]
    fn wide_margin_is_perfectly_separable() {
        let train = generate_synthetic(&spec(2, 10.0, 1)).unwrap();
        // same means (same seed drives the basis), fresh noise draw
        let mut fresh = spec(2, 10.0, 1);
        fresh.samples = 1000;
        let test = generate_synthetic(&fresh).unwrap();
        assert_eq!(nearest_mean_accuracy(&train, &test, 2), 1.0);
    }

    #[test]
    fn zero_margin_is_chance() {
        let n = 4;
        let acc: f64 = (0..10)
            .map(|s| {
                let train = generate_synthetic(&spec(n, 0.0, s)).unwrap();
                let test = generate_synthetic(&spec(n, 0.0, s + 100)).unwrap();
                nearest_mean_accuracy(&train, &test, n)
            })
            .sum::<f64>()
            / 10.0;
        assert!((acc - 0.25).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&SyntheticSpec::preset("har", 300, 5).unwrap()).unwrap();
        let b = generate_synthetic(&SyntheticSpec::preset("har", 300, 5).unwrap()).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inputs, b.inputs);
    }

    #[test]
    fn means_are_margin_apart() {
        let s = SyntheticSpec {
            samples: 3,
            ..spec(3, 6.0, 2)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let b = orthonormal_basis(3, s.dims, &mut rng);
        let spread = s.margin * s.sigma / std::f64::consts::SQRT_2;
        let d: f64 = b[0]
            .iter()
            .zip(&b[1])
            .map(|(x, y)| (spread * (x - y)).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((d - 6.0).abs() < 1e-12);
    }

    #[test]
    fn class_weights_give_counts() {
        let s = SyntheticSpec::preset("reuters", 10_000, 0).unwrap();
        let counts = s.class_counts();
        assert_eq!(counts.iter().sum::<usize>(), 10_000);
        assert_eq!(counts[0], 4312);
        assert_eq!(counts[3], 814);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic(&SyntheticSpec {
            samples: 0,
            ..spec(2, 1.0, 0)
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            classes: 0,
            ..spec(2, 1.0, 0)
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            sigma: 0.0,
            ..spec(2, 1.0, 0)
        })
        .is_err());
    }

    #[test]
    fn tiled_directions_stay_orthonormal() {
        let s = SyntheticSpec::preset("stl10", 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b: Vec<Vec<f64>> = orthonormal_basis(3, s.direction_dims(), &mut rng)
            .into_iter()
            .map(|v| s.expand(v))
            .collect();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        assert!((dot(&b[0], &b[0]) - 1.0).abs() < 1e-12);
        assert!(dot(&b[0], &b[2]).abs() < 1e-12);
        // pixels (0,0) and (3,3) share a tile, (0,4) does not
        assert_eq!(b[1][0], b[1][(3 * 32 + 3) * 3]);
        assert_ne!(b[1][0], b[1][4 * 3]);
    }

    #[test]
    fn block_needs_image_layout() {
        assert!(generate_synthetic(&SyntheticSpec {
            block: 2,
            ..spec(2, 1.0, 0)
        })
        .is_err());
    }

    #[test]
    fn image_preset_shapes() {
        let raw = generate_synthetic(&SyntheticSpec::preset("stl10", 5, 0).unwrap()).unwrap();
        for input in &raw.inputs {
            let RawInput::Image(img) = input else {
                panic!("image layout")
            };
            assert_eq!((img.height, img.width, img.channels), (32, 32, 3));
            assert!(input.canonicalize().is_ok());
        }
    }
}
