//! Gaussian foreground/background feature likelihoods.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use vqa3d_core::observe::{BackgroundModel, FeatureMap};
use vqa3d_core::raster::ZBuffer;
use vqa3d_core::{Camera, CategoryMesh, Error, Pose6D, Result, FEATURE_DIM};

/// Smallest standard deviation the parser assumes, so that noiseless
/// observations still have a finite likelihood.
pub const SIGMA_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    pub sigma_fg: f64,
    pub bg_mean: Vec<f32>,
    pub sigma_bg: f64,
}

impl LikelihoodModel {
    pub fn new(sigma_fg: f64, bg: &BackgroundModel) -> Result<Self> {
        bg.validate()?;
        if !(sigma_fg > 0.0 && bg.sigma > 0.0) {
            return Err(Error::InvalidInput("likelihood sigmas must be positive".into()));
        }
        Ok(Self {
            sigma_fg,
            bg_mean: bg.mean.clone(),
            sigma_bg: bg.sigma,
        })
    }

    /// Model for observations drawn with the given noise levels, with both
    /// deviations floored at [`SIGMA_FLOOR`].
    pub fn for_observation(sigma_fg: f64, bg: &BackgroundModel) -> Self {
        Self {
            sigma_fg: sigma_fg.max(SIGMA_FLOOR),
            bg_mean: bg.mean.clone(),
            sigma_bg: bg.sigma.max(SIGMA_FLOOR),
        }
    }

    fn log_norm(sigma: f64) -> f64 {
        -0.5 * FEATURE_DIM as f64 * (2.0 * PI * sigma * sigma).ln()
    }

    pub fn log_fg(&self, f: &[f32], t: &[f32]) -> f64 {
        let d2: f64 = f.iter().zip(t).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
        Self::log_norm(self.sigma_fg) - d2 / (2.0 * self.sigma_fg * self.sigma_fg)
    }

    pub fn log_bg(&self, f: &[f32]) -> f64 {
        let d2: f64 = f.iter().zip(&self.bg_mean).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
        Self::log_norm(self.sigma_bg) - d2 / (2.0 * self.sigma_bg * self.sigma_bg)
    }

    /// Per-pixel log-likelihood ratio of foreground feature `t` over background.
    pub fn llr(&self, f: &[f32], t: &[f32]) -> f64 {
        self.log_fg(f, t) - self.log_bg(f)
    }
}

/// Visible pixels of a single rendered object and their template features.
#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    pub pixels: Vec<u32>,
    pub features: Vec<f32>,
    pub depths: Vec<f64>,
}

impl Silhouette {
    pub fn render(mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera) -> Self {
        let mut zb = ZBuffer::for_camera(camera);
        zb.draw(0, mesh, pose, camera);
        let mut pixels = Vec::new();
        let mut features = Vec::new();
        let mut depths = Vec::new();
        for k in 0..zb.depth.len() {
            if zb.covered(k) {
                pixels.push(k as u32);
                features.extend_from_slice(mesh.face_feature(zb.face[k] as usize));
                depths.push(zb.depth[k]);
            }
        }
        Self {
            pixels,
            features,
            depths,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    /// Total log-likelihood ratio over pixels not in `claimed`, and the
    /// number of such pixels.
    pub fn gain(&self, obs: &FeatureMap, model: &LikelihoodModel, claimed: Option<&[bool]>) -> (f64, usize) {
        let mut g = 0.0;
        let mut n = 0;
        for (i, &k) in self.pixels.iter().enumerate() {
            let k = k as usize;
            if claimed.is_some_and(|c| c[k]) {
                continue;
            }
            g += model.llr(obs.feature(k), self.feature(i));
            n += 1;
        }
        (g, n)
    }
}

/// Foreground log-likelihood of the object's silhouette pixels.
pub fn fg_loglik(obs: &FeatureMap, mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera, model: &LikelihoodModel) -> Result<f64> {
    let sil = Silhouette::render(mesh, pose, camera);
    if sil.is_empty() {
        return Err(Error::InvalidInput("proposal not visible".into()));
    }
    Ok(sil
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &k)| model.log_fg(obs.feature(k as usize), sil.feature(i)))
        .sum())
}

/// Background log-likelihood over the pixels where `mask` is set.
pub fn bg_loglik(obs: &FeatureMap, mask: &[bool], model: &LikelihoodModel) -> f64 {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(k, _)| model.log_bg(obs.feature(k)))
        .sum()
}

/// Assignment of every pixel to at most one object and its template feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPartition {
    pub owner: Vec<i32>,
    pub template: Vec<f32>,
}

impl PixelPartition {
    pub fn empty(n: usize) -> Self {
        Self {
            owner: vec![-1; n],
            template: vec![0.0; n * FEATURE_DIM],
        }
    }

    /// Objects claim their alone-silhouette pixels in order; earlier claims win.
    pub fn greedy(objects: &[(&CategoryMesh, Pose6D)], camera: &Camera) -> Self {
        let mut p = Self::empty(camera.pixel_count());
        for (i, (mesh, pose)) in objects.iter().enumerate() {
            p.claim(i as i32, &Silhouette::render(mesh, pose, camera));
        }
        p
    }

    /// Z-buffer ownership of a rendered scene.
    pub fn from_render(render: &vqa3d_core::RenderOutput) -> Self {
        Self {
            owner: render.instance_map.clone(),
            template: render.feature_map.clone(),
        }
    }

    pub fn claim(&mut self, id: i32, sil: &Silhouette) {
        for (i, &k) in sil.pixels.iter().enumerate() {
            let k = k as usize;
            if self.owner[k] < 0 {
                self.owner[k] = id;
                self.template[k * FEATURE_DIM..(k + 1) * FEATURE_DIM].copy_from_slice(sil.feature(i));
            }
        }
    }

    pub fn claimed(&self) -> Vec<bool> {
        self.owner.iter().map(|&o| o >= 0).collect()
    }

    /// Joint log-likelihood: foreground terms on owned pixels plus background
    /// terms on the rest.
    pub fn loglik(&self, obs: &FeatureMap, model: &LikelihoodModel) -> f64 {
        (0..self.owner.len())
            .map(|k| {
                if self.owner[k] >= 0 {
                    model.log_fg(obs.feature(k), &self.template[k * FEATURE_DIM..(k + 1) * FEATURE_DIM])
                } else {
                    model.log_bg(obs.feature(k))
                }
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqa3d_core::observe::render_observation;
    use vqa3d_core::{sample_scene, SceneConfig};

    #[test]
    fn zero_residual_is_the_mode() {
        let m = LikelihoodModel::new(0.3, &BackgroundModel::default()).unwrap();
        let t = [0.25f32; FEATURE_DIM];
        let mode = FEATURE_DIM as f64 * (-0.5 * (2.0 * PI * 0.09f64).ln());
        assert!((m.log_fg(&t, &t) - mode).abs() < 1e-9);
    }

    #[test]
    fn partition_matches_pixel_loop() {
        let scene = sample_scene(5, &SceneConfig::default()).unwrap();
        let bg = BackgroundModel::default();
        let obs = render_observation(&scene, 0.3, &bg, 1).unwrap();
        let model = LikelihoodModel::new(0.3, &bg).unwrap();
        let part = PixelPartition::from_render(&scene.render);
        let mut brute = 0.0;
        for k in 0..obs.pixel_count() {
            brute += if scene.render.instance_map[k] >= 0 {
                model.log_fg(obs.feature(k), scene.render.feature(k))
            } else {
                model.log_bg(obs.feature(k))
            };
        }
        assert!((part.loglik(&obs, &model) - brute).abs() < 1e-6 * brute.abs());
    }
}
