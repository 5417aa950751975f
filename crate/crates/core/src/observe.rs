//! Noisy observations of a rendered scene under the Gaussian feature model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::FEATURE_DIM;
use crate::scene::{GroundTruthScene, NO_ATTRIBUTE};
use crate::vocab::{Color, Material, Size, Subtype};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub mean: Vec<f32>,
    pub sigma: f64,
}

impl Default for BackgroundModel {
    fn default() -> Self {
        Self {
            mean: vec![0.0; FEATURE_DIM],
            sigma: 0.3,
        }
    }
}

impl BackgroundModel {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FEATURE_DIM {
            return Err(Error::InvalidInput(format!("background mean has {} entries", self.mean.len())));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("background sigma {} is invalid", self.sigma)));
        }
        Ok(())
    }
}

/// Observed `rows × cols × FEATURE_DIM` feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn feature(&self, k: usize) -> &[f32] {
        &self.data[k * FEATURE_DIM..(k + 1) * FEATURE_DIM]
    }
}

/// Draws `F`: clean render plus `N(0, σ_fg²)` on foreground, `N(b, σ_bg²)` on
/// background.
pub fn render_observation(scene: &GroundTruthScene, sigma_fg: f64, bg: &BackgroundModel, seed: u64) -> Result<FeatureMap> {
    bg.validate()?;
    if !(sigma_fg >= 0.0 && sigma_fg.is_finite()) {
        return Err(Error::InvalidInput(format!("foreground sigma {sigma_fg} is invalid")));
    }
    let r = &scene.render;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(r.feature_map.len());
    for k in 0..r.pixel_count() {
        let fg = r.instance_map[k] >= 0;
        for d in 0..FEATURE_DIM {
            let z: f64 = rng.sample(StandardNormal);
            let v = if fg {
                r.feature_map[k * FEATURE_DIM + d] as f64 + sigma_fg * z
            } else {
                bg.mean[d] as f64 + bg.sigma * z
            };
            data.push(v as f32);
        }
    }
    Ok(FeatureMap {
        rows: r.rows,
        cols: r.cols,
        data,
    })
}

/// Feature map containing only background draws.
pub fn background_observation(rows: usize, cols: usize, bg: &BackgroundModel, seed: u64) -> Result<FeatureMap> {
    bg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(rows * cols * FEATURE_DIM);
    for _ in 0..rows * cols {
        for d in 0..FEATURE_DIM {
            let z: f64 = rng.sample(StandardNormal);
            data.push((bg.mean[d] as f64 + bg.sigma * z) as f32);
        }
    }
    Ok(FeatureMap { rows, cols, data })
}

/// Noisy attribute map: each field of each foreground cell is replaced by a
/// uniformly drawn different value with probability `epsilon`.
pub fn observe_attributes(scene: &GroundTruthScene, epsilon: f64, seed: u64) -> Vec<[u8; 4]> {
    let sizes = [Color::ALL.len(), Material::ALL.len(), Size::ALL.len(), Subtype::COUNT];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scene
        .attribute_map
        .iter()
        .map(|cell| {
            if cell[0] == NO_ATTRIBUTE {
                return *cell;
            }
            let mut out = *cell;
            for f in 0..4 {
                if rng.random_bool(epsilon.clamp(0.0, 1.0)) {
                    let shift = rng.random_range(1..sizes[f]) as u8;
                    out[f] = ((out[f] as usize + shift as usize) % sizes[f]) as u8;
                }
            }
            out
        })
        .collect()
}
