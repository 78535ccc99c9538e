//! Monte-Carlo summaries and seeding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// Sample mean and standard error (n − 1 normalization). Summation is
    /// done in input order, so callers get order-independent results by
    /// collecting into index order first.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return McEstimate {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return McEstimate { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        McEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
        }
    }

    /// |mean − target| in units of stderr (infinite when stderr is 0 and the gap is not).
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = (self.mean - target).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.stderr
        }
    }
}

/// Deterministic generator for an index tuple under a master seed.
pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    // Up to three path components go in verbatim; longer paths are folded.
    let mut words = [0u64; 3];
    for (k, &p) in path.iter().enumerate() {
        if k < 3 {
            words[k] = p;
        } else {
            words[2] = splitmix(words[2]) ^ p;
        }
    }
    for (k, w) in words.iter().enumerate() {
        seed[8 + 8 * k..16 + 8 * k].copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(path.len() as u64);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
