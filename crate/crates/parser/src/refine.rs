//! Proposals and derivative-free pose refinement.

use serde::{Deserialize, Serialize};

use vqa3d_core::observe::FeatureMap;
use vqa3d_core::{wrap_angle, Camera, Category, CategoryMesh, MeshLibrary, Pose6D, Subtype};

use crate::likelihood::{LikelihoodModel, Silhouette};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub category: Category,
    pub subtype: Option<Subtype>,
    pub pose: Pose6D,
    /// Mean log-likelihood ratio over counted silhouette pixels.
    pub score: f64,
    /// Total log-likelihood ratio over counted silhouette pixels.
    pub gain: f64,
    /// Number of counted silhouette pixels.
    pub pixels: usize,
    pub max_iter: bool,
}

impl Proposal {
    pub fn new(category: Category, pose: Pose6D) -> Self {
        Self {
            category,
            subtype: None,
            pose,
            score: f64::NEG_INFINITY,
            gain: f64::NEG_INFINITY,
            pixels: 0,
            max_iter: false,
        }
    }

    /// Sub-type mesh once classified, else the category template.
    pub fn mesh(&self) -> &'static CategoryMesh {
        let lib = MeshLibrary::standard();
        match self.subtype {
            Some(s) => lib.subtype(s),
            None => lib.template(self.category),
        }
    }

    pub fn silhouette(&self, camera: &Camera) -> Silhouette {
        Silhouette::render(self.mesh(), &self.pose, camera)
    }

    /// Re-scores at the current pose, ignoring `claimed` pixels.
    pub fn rescore(&mut self, obs: &FeatureMap, camera: &Camera, model: &LikelihoodModel, claimed: Option<&[bool]>) {
        let (g, n) = self.silhouette(camera).gain(obs, model, claimed);
        self.set_gain(g, n);
    }

    fn set_gain(&mut self, g: f64, n: usize) {
        if n == 0 {
            self.gain = f64::NEG_INFINITY;
            self.score = f64::NEG_INFINITY;
        } else {
            self.gain = g;
            self.score = g / n as f64;
        }
        self.pixels = n;
    }

    /// Debug form with angles in degrees.
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "category": self.category.name(),
            "subtype": self.subtype.map(|s| s.name()),
            "azimuth_deg": self.pose.azimuth.to_degrees(),
            "elevation_deg": self.pose.elevation.to_degrees(),
            "theta_deg": self.pose.theta.to_degrees(),
            "distance": self.pose.distance,
            "location": self.pose.location,
            "score": self.score,
            "gain": self.gain,
            "pixels": self.pixels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub azimuth_step: f64,
    pub elevation_step: f64,
    pub log_distance_step: f64,
    pub location_step: f64,
    pub rounds: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Also try pairwise diagonal moves when no single-axis move helps.
    pub diagonal: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            azimuth_step: 15f64.to_radians(),
            elevation_step: 2f64.to_radians(),
            log_distance_step: 0.12,
            location_step: 2.0,
            rounds: 5,
            max_iters: 100,
            tol: 1e-9,
            diagonal: true,
        }
    }
}

fn pose_from(params: &[f64; 5], theta: f64) -> Pose6D {
    Pose6D {
        azimuth: wrap_angle(params[0]),
        elevation: params[1],
        theta,
        distance: params[2].exp(),
        location: [params[3], params[4]],
    }
}

/// Coordinate descent over azimuth, elevation, log-distance and location,
/// halving every step after each round. The objective is the total
/// log-likelihood ratio over unclaimed silhouette pixels; a move is taken
/// only if it strictly improves it, so the result is never worse than the
/// input.
pub fn refine_pose(
    obs: &FeatureMap,
    proposal: &Proposal,
    camera: &Camera,
    model: &LikelihoodModel,
    claimed: Option<&[bool]>,
    cfg: &RefineConfig,
) -> Proposal {
    let mesh = proposal.mesh();
    let theta = proposal.pose.theta;
    let eval = |p: &[f64; 5]| -> (f64, usize) {
        let (g, n) = Silhouette::render(mesh, &pose_from(p, theta), camera).gain(obs, model, claimed);
        if n == 0 {
            (f64::NEG_INFINITY, 0)
        } else {
            (g, n)
        }
    };
    let pose = proposal.pose;
    let start = [pose.azimuth, pose.elevation, pose.distance.ln(), pose.location[0], pose.location[1]];
    let mut params = start;
    let mut best = eval(&params);
    let mut steps = [
        cfg.azimuth_step,
        cfg.elevation_step,
        cfg.log_distance_step,
        cfg.location_step,
        cfg.location_step,
    ];
    let mut iters = 0;
    let mut max_iter = false;
    'rounds: for _ in 0..cfg.rounds {
        loop {
            let mut improved = false;
            for i in 0..5 {
                for dir in [1.0, -1.0] {
                    let mut cand = params;
                    cand[i] += dir * steps[i];
                    let v = eval(&cand);
                    if v.0 > best.0 + cfg.tol {
                        params = cand;
                        best = v;
                        improved = true;
                        break;
                    }
                }
            }
            // Stalled along every axis: try moving two coordinates at once.
            if !improved && cfg.diagonal {
                'pairs: for i in 0..5 {
                    for j in i + 1..5 {
                        for (di, dj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                            let mut cand = params;
                            cand[i] += di * steps[i];
                            cand[j] += dj * steps[j];
                            let v = eval(&cand);
                            if v.0 > best.0 + cfg.tol {
                                params = cand;
                                best = v;
                                improved = true;
                                break 'pairs;
                            }
                        }
                    }
                }
            }
            iters += 1;
            if !improved {
                break;
            }
            if iters >= cfg.max_iters {
                max_iter = true;
                break 'rounds;
            }
        }
        steps.iter_mut().for_each(|s| *s *= 0.5);
    }
    let mut out = proposal.clone();
    if params != start {
        out.pose = pose_from(&params, theta);
    }
    out.set_gain(best.0, best.1);
    out.max_iter = max_iter;
    out
}
