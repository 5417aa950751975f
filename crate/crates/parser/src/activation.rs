//! Per-category activation maps by FFT cross-correlation of pose templates.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use vqa3d_core::observe::FeatureMap;
use vqa3d_core::raster::ZBuffer;
use vqa3d_core::{Camera, Category, CategoryMesh, MeshLibrary, Pose6D, FEATURE_DIM};

use crate::likelihood::LikelihoodModel;

type C32 = Complex<f32>;

/// Minimum fraction of a template that must fall inside the frame.
pub const MIN_COVERAGE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseGrid {
    pub azimuths: Vec<f64>,
    pub elevation: f64,
    pub distances: Vec<f64>,
}

impl PoseGrid {
    /// `n_az` uniform azimuths and `n_dist` log-spaced distances in `[near, far]`.
    pub fn new(n_az: usize, elevation: f64, n_dist: usize, near: f64, far: f64) -> Self {
        let azimuths = (0..n_az).map(|i| i as f64 * std::f64::consts::TAU / n_az as f64).collect();
        let distances = if n_dist == 1 {
            vec![(near * far).sqrt()]
        } else {
            let (a, b) = (near.ln(), far.ln());
            (0..n_dist).map(|i| (a + (b - a) * i as f64 / (n_dist - 1) as f64).exp()).collect()
        };
        Self {
            azimuths,
            elevation,
            distances,
        }
    }

    pub fn standard(elevation: f64, near: f64, far: f64) -> Self {
        Self::new(24, elevation, 5, near, far)
    }

    pub fn len(&self) -> usize {
        self.azimuths.len() * self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rendered silhouette of one category at one grid pose, as offsets from the
/// anchor cell.
#[derive(Debug, Clone)]
pub struct Template {
    pub category: Category,
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub offsets: Vec<(i32, i32)>,
    pub features: Vec<f32>,
}

impl Template {
    pub fn render(category: Category, mesh: &CategoryMesh, azimuth: f64, elevation: f64, distance: f64, focal: f64) -> Self {
        let r = mesh.radius();
        let half = (focal * r / (distance - r).max(1e-3)).ceil() as usize + 2;
        let size = 2 * half + 1;
        let canvas = Camera {
            focal,
            height: size,
            width: size,
            downsample: 1,
        };
        let anchor = half as f64 + 0.5;
        let pose = Pose6D::new(azimuth, elevation, distance, [anchor, anchor]);
        let mut zb = ZBuffer::for_camera(&canvas);
        zb.draw(0, mesh, &pose, &canvas);
        let mut offsets = Vec::new();
        let mut features = Vec::new();
        for row in 0..size {
            for col in 0..size {
                let k = row * size + col;
                if zb.covered(k) {
                    offsets.push((row as i32 - half as i32, col as i32 - half as i32));
                    features.extend_from_slice(mesh.face_feature(zb.face[k] as usize));
                }
            }
        }
        Self {
            category,
            azimuth: pose.azimuth,
            elevation,
            distance,
            offsets,
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    pub fn reach(&self) -> usize {
        self.offsets
            .iter()
            .map(|&(r, c)| r.unsigned_abs().max(c.unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Pose that places this template's anchor at cell `(row, col)`.
    pub fn pose_at(&self, row: usize, col: usize) -> Pose6D {
        Pose6D::new(self.azimuth, self.elevation, self.distance, [col as f64 + 0.5, row as f64 + 0.5])
    }
}

/// All templates of all categories over a pose grid.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    pub grid: PoseGrid,
    pub templates: Vec<Template>,
}

impl TemplateBank {
    pub fn build(grid: PoseGrid, camera: &Camera, categories: &[Category]) -> Self {
        let lib = MeshLibrary::standard();
        let mut jobs = Vec::new();
        for &c in categories {
            for &d in &grid.distances {
                for &a in &grid.azimuths {
                    jobs.push((c, a, d));
                }
            }
        }
        let focal = camera.grid_focal();
        let templates = jobs
            .par_iter()
            .map(|&(c, a, d)| Template::render(c, lib.template(c), a, grid.elevation, d, focal))
            .collect();
        Self { grid, templates }
    }

    pub fn reach(&self) -> usize {
        self.templates.iter().map(Template::reach).max().unwrap_or(0)
    }
}

/// Best-over-pose mean log-likelihood ratio per cell for one category.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub category: Category,
    pub rows: usize,
    pub cols: usize,
    pub scores: Vec<f64>,
    /// Index into the template bank of the argmax pose, `u32::MAX` if none.
    pub best: Vec<u32>,
}

impl ActivationMap {
    pub fn new(category: Category, rows: usize, cols: usize) -> Self {
        Self {
            category,
            rows,
            cols,
            scores: vec![f64::NEG_INFINITY; rows * cols],
            best: vec![u32::MAX; rows * cols],
        }
    }

    pub fn from_scores(category: Category, rows: usize, cols: usize, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), rows * cols);
        Self {
            category,
            rows,
            cols,
            scores,
            best: vec![u32::MAX; rows * cols],
        }
    }

    fn offer(&mut self, k: usize, score: f64, template: u32) {
        let s = self.scores[k];
        if score > s || (score == s && template < self.best[k]) {
            self.scores[k] = score;
            self.best[k] = template;
        }
    }

    fn merge(mut self, other: &ActivationMap) -> Self {
        for k in 0..self.scores.len() {
            if other.best[k] != u32::MAX {
                self.offer(k, other.scores[k], other.best[k]);
            }
        }
        self
    }

    /// Grayscale PGM with scores linearly mapped between min and max finite values.
    pub fn to_pgm(&self) -> Vec<u8> {
        let finite: Vec<f64> = self.scores.iter().copied().filter(|s| s.is_finite()).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        for &s in &self.scores {
            let v = if !s.is_finite() || hi <= lo { 0.0 } else { (s - lo) / (hi - lo) * 255.0 };
            out.push(v.round() as u8);
        }
        out
    }
}

/// Summed log-likelihood ratio and in-frame pixel count of a template
/// anchored at one cell.
pub fn template_gain(obs: &FeatureMap, template: &Template, row: usize, col: usize, model: &LikelihoodModel) -> (f64, usize) {
    template_gain_masked(obs, template, row, col, model, None)
}

/// [`template_gain`] skipping pixels where `mask` is true.
pub fn template_gain_masked(
    obs: &FeatureMap,
    template: &Template,
    row: usize,
    col: usize,
    model: &LikelihoodModel,
    mask: Option<&[bool]>,
) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &(dr, dc)) in template.offsets.iter().enumerate() {
        let r = row as i64 + dr as i64;
        let c = col as i64 + dc as i64;
        if r < 0 || c < 0 || r >= obs.rows as i64 || c >= obs.cols as i64 {
            continue;
        }
        let k = r as usize * obs.cols + c as usize;
        if mask.is_some_and(|m| m[k]) {
            continue;
        }
        sum += model.llr(obs.feature(k), template.feature(i));
        n += 1;
    }
    (sum, n)
}

/// Direct evaluation of a template's mean log-likelihood ratio at one cell.
pub fn template_score(obs: &FeatureMap, template: &Template, row: usize, col: usize, model: &LikelihoodModel) -> f64 {
    let (sum, n) = template_gain(obs, template, row, col, model);
    if n == 0 || (n as f64) < MIN_COVERAGE * template.len() as f64 {
        f64::NEG_INFINITY
    } else {
        sum / n as f64
    }
}

/// Smallest FFT length in a list of fast sizes that avoids wrap-around.
fn fft_size(extent: usize) -> usize {
    const FAST: [usize; 14] = [64, 72, 80, 96, 128, 144, 160, 180, 192, 216, 240, 256, 288, 320];
    FAST.iter().copied().find(|&n| n >= extent).unwrap_or_else(|| extent.next_power_of_two())
}

struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f32>>,
    inverse: Arc<dyn Fft<f32>>,
}

const TILE: usize = 16;

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::<f32>::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn transpose(&self, data: &mut [C32]) {
        let n = self.n;
        for rb in (0..n).step_by(TILE) {
            for cb in (rb..n).step_by(TILE) {
                for r in rb..(rb + TILE).min(n) {
                    let c0 = if cb == rb { r + 1 } else { cb };
                    for c in c0..(cb + TILE).min(n) {
                        data.swap(r * n + c, c * n + r);
                    }
                }
            }
        }
    }

    /// Spectrum in transposed layout. Only `rows` may hold nonzero input.
    fn forward_rows(&self, data: &mut [C32], rows: &[usize], scratch: &mut Vec<C32>) {
        let n = self.n;
        scratch.resize(self.forward.get_inplace_scratch_len(), C32::default());
        for &r in rows {
            self.forward.process_with_scratch(&mut data[r * n..(r + 1) * n], scratch);
        }
        self.transpose(data);
        self.forward.process_with_scratch(data, scratch);
    }

    fn forward(&self, data: &mut [C32]) {
        let rows: Vec<usize> = (0..self.n).collect();
        self.forward_rows(data, &rows, &mut Vec::new());
    }

    /// Inverse of [`Fft2::forward`], unnormalized.
    fn inverse(&self, data: &mut [C32], scratch: &mut Vec<C32>) {
        scratch.resize(self.inverse.get_inplace_scratch_len(), C32::default());
        self.inverse.process_with_scratch(data, scratch);
        self.transpose(data);
        self.inverse.process_with_scratch(data, scratch);
    }

    /// Index of the frequency `-k` in transposed layout.
    fn negate(&self, idx: usize) -> usize {
        let n = self.n;
        let (a, b) = (idx / n, idx % n);
        ((n - a) % n) * n + (n - b) % n
    }
}

/// Spectra `(A, B)` of two real signals at index `k`, from their packed
/// transform `A + iB` at `k` and `-k`.
#[inline]
fn unpack(z: C32, zn: C32) -> (C32, C32) {
    let zc = zn.conj();
    ((z + zc) * 0.5, (z - zc) * C32::new(0.0, -0.5))
}

/// Observation channels packed two per spectrum: feature pairs, then
/// `α|f|² − f·b/σ_b² + κ` paired with the in-frame indicator.
struct ObservationSpectra {
    fft: Fft2,
    features: Vec<Vec<C32>>,
    affine: Vec<C32>,
    inframe: Vec<C32>,
}

impl ObservationSpectra {
    fn new(n: usize, obs: &FeatureMap, model: &LikelihoodModel, alpha: f64, kappa: f64, mask: Option<&[bool]>) -> Self {
        let fft = Fft2::new(n);
        let sb2 = model.sigma_bg * model.sigma_bg;
        let mut packed = vec![vec![C32::default(); n * n]; FEATURE_DIM / 2 + 1];
        for r in 0..obs.rows {
            for c in 0..obs.cols {
                if mask.is_some_and(|m| m[r * obs.cols + c]) {
                    continue;
                }
                let f = obs.feature(r * obs.cols + c);
                let i = r * n + c;
                let mut sq = 0.0;
                let mut fb = 0.0;
                for d in 0..FEATURE_DIM {
                    let v = f[d] as f64;
                    sq += v * v;
                    fb += v * model.bg_mean[d] as f64;
                }
                for p in 0..FEATURE_DIM / 2 {
                    packed[p][i] = C32::new(f[2 * p], f[2 * p + 1]);
                }
                packed[FEATURE_DIM / 2][i] = C32::new((alpha * sq - fb / sb2 + kappa) as f32, 1.0);
            }
        }
        for buf in packed.iter_mut() {
            fft.forward(buf);
        }
        let last = packed.pop().unwrap();
        let mut affine = vec![C32::default(); n * n];
        let mut inframe = vec![C32::default(); n * n];
        for k in 0..n * n {
            let (a, b) = unpack(last[k], last[fft.negate(k)]);
            affine[k] = a;
            inframe[k] = b;
        }
        Self {
            fft,
            features: packed,
            affine,
            inframe,
        }
    }
}

/// Computes the activation map of every category present in the bank.
///
/// For a template with mask `m` and features `t`, the summed log-likelihood
/// ratio at offset `l` is a sum of cross-correlations of observation
/// channels with template channels. Feature pairs are packed as complex
/// signals, whose correlation has `Σ f·t` as its real part.
pub fn activation_maps(obs: &FeatureMap, bank: &TemplateBank, model: &LikelihoodModel) -> Vec<ActivationMap> {
    activation_maps_masked(obs, bank, model, None)
}

/// Like [`activation_maps`], with pixels where `mask` is true treated as
/// outside the frame.
pub fn activation_maps_masked(
    obs: &FeatureMap,
    bank: &TemplateBank,
    model: &LikelihoodModel,
    mask: Option<&[bool]>,
) -> Vec<ActivationMap> {
    let (rows, cols) = (obs.rows, obs.cols);
    let sf2 = model.sigma_fg * model.sigma_fg;
    let sb2 = model.sigma_bg * model.sigma_bg;
    let alpha = 1.0 / (2.0 * sb2) - 1.0 / (2.0 * sf2);
    let b2: f64 = model.bg_mean.iter().map(|v| (*v as f64).powi(2)).sum();
    let kappa = FEATURE_DIM as f64 * (model.sigma_bg.ln() - model.sigma_fg.ln()) + b2 / (2.0 * sb2);

    let size_of = |t: &Template| fft_size(rows.max(cols) + t.reach() + 1);
    let mut sizes: Vec<usize> = bank.templates.iter().map(size_of).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let contexts: Vec<ObservationSpectra> = sizes
        .par_iter()
        .map(|&n| ObservationSpectra::new(n, obs, model, alpha, kappa, mask))
        .collect();

    let mut categories: Vec<Category> = bank.templates.iter().map(|t| t.category).collect();
    categories.dedup();
    let empty = || -> Vec<ActivationMap> { categories.iter().map(|&c| ActivationMap::new(c, rows, cols)).collect() };
    let slot = |c: Category| categories.iter().position(|&x| x == c).unwrap();

    bank.templates
        .par_iter()
        .enumerate()
        .fold(empty, |mut maps, (ti, t)| {
            if t.is_empty() {
                return maps;
            }
            let ctx = &contexts[sizes.binary_search(&size_of(t)).unwrap()];
            let fft = &ctx.fft;
            let n = fft.n;
            let mut scratch = Vec::new();
            let mut packed = vec![vec![C32::default(); n * n]; FEATURE_DIM / 2 + 1];
            let mut used = vec![false; n];
            for (i, &(dr, dc)) in t.offsets.iter().enumerate() {
                let r = (dr as i64).rem_euclid(n as i64) as usize;
                let c = (dc as i64).rem_euclid(n as i64) as usize;
                used[r] = true;
                let idx = r * n + c;
                let tf = t.feature(i);
                let t2: f64 = tf.iter().map(|v| (*v as f64).powi(2)).sum();
                for p in 0..FEATURE_DIM / 2 {
                    packed[p][idx] = C32::new((tf[2 * p] as f64 / sf2) as f32, (tf[2 * p + 1] as f64 / sf2) as f32);
                }
                packed[FEATURE_DIM / 2][idx] = C32::new(1.0, (-t2 / (2.0 * sf2)) as f32);
            }
            let used: Vec<usize> = (0..n).filter(|&r| used[r]).collect();
            for buf in packed.iter_mut() {
                fft.forward_rows(buf, &used, &mut scratch);
            }
            let last = &packed[FEATURE_DIM / 2];
            let mut x = vec![C32::default(); n * n];
            let mut count = vec![C32::default(); n * n];
            for k in 0..n * n {
                let mut v = C32::default();
                for p in 0..FEATURE_DIM / 2 {
                    v += ctx.features[p][k] * packed[p][k].conj();
                }
                let (m, q) = unpack(last[k], last[fft.negate(k)]);
                v += ctx.affine[k] * m.conj() + ctx.inframe[k] * q.conj();
                x[k] = v;
                count[k] = ctx.inframe[k] * m.conj();
            }
            let mut z = vec![C32::default(); n * n];
            for k in 0..n * n {
                let herm = (x[k] + x[fft.negate(k)].conj()) * 0.5;
                z[k] = herm + C32::new(0.0, 1.0) * count[k];
            }
            fft.inverse(&mut z, &mut scratch);
            let norm = (n * n) as f32;
            let need = MIN_COVERAGE * t.len() as f64;
            let map = &mut maps[slot(t.category)];
            for r in 0..rows {
                for c in 0..cols {
                    let v = z[r * n + c] / norm;
                    let count = v.im.round() as f64;
                    if count >= 1.0 && count >= need - 1e-9 {
                        map.offer(r * cols + c, v.re as f64 / count, ti as u32);
                    }
                }
            }
            maps
        })
        .reduce(empty, |a, b| a.into_iter().zip(&b).map(|(x, y)| x.merge(y)).collect())
}
