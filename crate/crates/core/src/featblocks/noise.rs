use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FeatureMap;

/// Evaluation-time image corruption: optional 3x3 mean blur followed by
/// additive Gaussian noise (sigma on a [0, 1] intensity scale).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub blur: bool,
    pub gaussian_sigma: f64,
}

impl NoiseConfig {
    /// Blur plus sigma 0.05, the corrupted-evaluation setting.
    pub fn evaluation() -> Self {
        Self {
            blur: true,
            gaussian_sigma: 0.05,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.blur && self.gaussian_sigma == 0.0
    }

    pub fn apply(&self, input: &FeatureMap, seed: u64) -> FeatureMap {
        let blurred = if self.blur { blur3(input) } else { input.clone() };
        add_gaussian(&blurred, self.gaussian_sigma, seed)
    }
}

/// 3x3 box filter with replicate border padding.
pub fn blur3(input: &FeatureMap) -> FeatureMap {
    let (h, w) = (input.height(), input.width());
    let mut out = input.clone();
    let plane = h * w;
    for (ch, dst) in out.as_mut_slice().chunks_mut(plane).enumerate() {
        let src = input.channel(ch);
        for y in 0..h {
            let rows = [y.saturating_sub(1), y, (y + 1).min(h - 1)];
            for x in 0..w {
                let cols = [x.saturating_sub(1), x, (x + 1).min(w - 1)];
                // mean written as centre + mean deviation so constants map to
                // themselves bit-for-bit
                let centre = src[y * w + x];
                let mut dev = 0.0;
                for r in rows {
                    for c in cols {
                        dev += src[r * w + c] - centre;
                    }
                }
                dst[y * w + x] = centre + dev / 9.0;
            }
        }
    }
    out
}

/// Adds i.i.d. `N(0, sigma^2)` noise, one draw per element in storage order.
///
/// Panics if `sigma` is negative or non-finite.
pub fn add_gaussian(input: &FeatureMap, sigma: f64, seed: u64) -> FeatureMap {
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be >= 0, got {sigma}");
    if sigma == 0.0 {
        return input.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = input.clone();
    for v in out.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    out
}
