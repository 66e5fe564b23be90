use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Server / client A / client B fractions and the shuffle seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub server: f64,
    pub client_a: f64,
    pub client_b: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            server: 0.5,
            client_a: 0.25,
            client_b: 0.25,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.server, self.client_a, self.client_b];
        if parts.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::InvalidInput(format!(
                "split fractions must lie in (0, 1): {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Client sizes are `⌊n · fraction⌋`; the server takes the remainder.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let (a, b) = (floor(self.client_a), floor(self.client_b));
        Ok([n - a - b, a, b])
    }
}

/// Index partition into three disjoint, exhaustive parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub server: Vec<T>,
    pub client_a: Vec<T>,
    pub client_b: Vec<T>,
}

impl<T> Split<T> {
    pub fn parts(&self) -> [&[T]; 3] {
        [&self.server, &self.client_a, &self.client_b]
    }
}

/// Seeded shuffle of `0..n`, then contiguous server / A / B slices.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Split<usize>> {
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} samples three ways (need at least 4)"
        )));
    }
    let [s, a, _] = spec.sizes(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let client_b = order.split_off(s + a);
    let client_a = order.split_off(s);
    Ok(Split {
        server: order,
        client_a,
        client_b,
    })
}

pub fn split_dataset<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    let idx = split_indices(items.len(), spec)?;
    let pick = |v: &[usize]| v.iter().map(|&i| items[i].clone()).collect();
    Ok(Split {
        server: pick(&idx.server),
        client_a: pick(&idx.client_a),
        client_b: pick(&idx.client_b),
    })
}
