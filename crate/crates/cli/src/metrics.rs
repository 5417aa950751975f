//! Detection quality of parsed scenes against ground truth.

use serde::{Deserialize, Serialize};

use vqa3d_core::occlusion::alone_silhouette;
use vqa3d_core::{azimuth_difference, GroundTruthScene, MeshLibrary, Subtype};
use vqa3d_parser::Silhouette;

use crate::pipeline::{DetectedObject, ParsedScene};

/// Objects at least this occluded are not required to be found.
pub const MAX_OCCLUSION: f64 = 0.25;
pub const MAX_LOCATION_ERROR: f64 = 2.0;
pub const MAX_AZIMUTH_ERROR_DEG: f64 = 7.5;
/// Silhouette overlap at which a detection is attributed to an object.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionSummary {
    /// Ground-truth objects below the occlusion cut.
    pub eligible: usize,
    /// Eligible objects with a detection of the right category, location
    /// and azimuth.
    pub detected: usize,
    pub detections: usize,
    /// Detections beyond the first attributed to the same object.
    pub duplicates: usize,
    /// Detections attributed to no object.
    pub false_positives: usize,
}

impl DetectionSummary {
    pub fn detection_rate(&self) -> Option<f64> {
        (self.eligible > 0).then(|| self.detected as f64 / self.eligible as f64)
    }

    pub fn merge(mut self, o: DetectionSummary) -> Self {
        self.eligible += o.eligible;
        self.detected += o.detected;
        self.detections += o.detections;
        self.duplicates += o.duplicates;
        self.false_positives += o.false_positives;
        self
    }
}

/// Whether `d` localizes ground-truth object `i` within tolerance.
pub fn localizes(scene: &GroundTruthScene, i: usize, d: &DetectedObject) -> bool {
    let o = &scene.objects[i];
    let dl = ((d.pose.location[0] - o.pose.location[0]).powi(2) + (d.pose.location[1] - o.pose.location[1]).powi(2)).sqrt();
    d.category == o.category.name()
        && dl <= MAX_LOCATION_ERROR
        && azimuth_difference(d.pose.azimuth, o.pose.azimuth).to_degrees() <= MAX_AZIMUTH_ERROR_DEG
}

fn iou(a: &[bool], pixels: &[u32]) -> f64 {
    let inter = pixels.iter().filter(|&&k| a[k as usize]).count();
    let union = a.iter().filter(|&&x| x).count() + pixels.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn scene_detections(scene: &GroundTruthScene, dets: &[DetectedObject]) -> DetectionSummary {
    let meshes = scene.mesh_poses();
    let eligible: Vec<usize> = (0..scene.objects.len()).filter(|&i| scene.occlusion[i] < MAX_OCCLUSION).collect();
    let detected = eligible.iter().filter(|&&i| dets.iter().any(|d| localizes(scene, i, d))).count();

    let alone: Vec<Vec<bool>> = (0..meshes.len())
        .map(|i| alone_silhouette(i, &meshes, &scene.camera).unwrap_or_default())
        .collect();
    let mut claims = vec![0usize; meshes.len()];
    let mut false_positives = 0;
    for d in dets {
        let Some(subtype) = Subtype::from_name(&d.subtype) else {
            false_positives += 1;
            continue;
        };
        let sil = Silhouette::render(MeshLibrary::standard().subtype(subtype), &d.pose, &scene.camera);
        let best = alone
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_empty())
            .map(|(i, a)| (i, iou(a, &sil.pixels)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, v)) if v >= MATCH_IOU => claims[i] += 1,
            _ => false_positives += 1,
        }
    }
    DetectionSummary {
        eligible: eligible.len(),
        detected,
        detections: dets.len(),
        duplicates: claims.iter().map(|&c| c.saturating_sub(1)).sum(),
        false_positives,
    }
}

pub fn detection_summary(scenes: &[GroundTruthScene], parsed: &[ParsedScene]) -> DetectionSummary {
    scenes
        .iter()
        .zip(parsed)
        .map(|(s, p)| scene_detections(s, &p.detections))
        .fold(DetectionSummary::default(), DetectionSummary::merge)
}
