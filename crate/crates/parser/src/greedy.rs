//! Greedy proposal acceptance with explained-away pixels masked out.

use serde::{Deserialize, Serialize};

use vqa3d_core::observe::FeatureMap;
use vqa3d_core::{Camera, Error, Result};

use crate::likelihood::{LikelihoodModel, PixelPartition};
use crate::refine::{refine_pose, Proposal, RefineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Minimum mean log-likelihood ratio over unclaimed pixels.
    pub threshold: f64,
    pub min_pixels: usize,
    /// Minimum unclaimed share of the proposal's own silhouette.
    pub min_unclaimed_fraction: f64,
    pub refine: RefineConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub accepted: Vec<Proposal>,
    pub rejected: Vec<Proposal>,
    /// Joint scene log-likelihood before any acceptance and after each one.
    pub trace: Vec<f64>,
}

/// Greedy acceptance state that can be resumed with further proposals.
#[derive(Debug, Clone)]
pub struct GreedyState {
    pub partition: PixelPartition,
    pub joint: f64,
    pub outcome: GreedyOutcome,
}

impl GreedyState {
    pub fn new(obs: &FeatureMap, camera: &Camera, model: &LikelihoodModel) -> Self {
        let partition = PixelPartition::empty(camera.pixel_count());
        let joint = partition.loglik(obs, model);
        Self {
            partition,
            joint,
            outcome: GreedyOutcome {
                accepted: Vec::new(),
                rejected: Vec::new(),
                trace: vec![joint],
            },
        }
    }

    /// Runs one greedy pass and returns how many proposals it accepted.
    pub fn run(
        &mut self,
        obs: &FeatureMap,
        mut proposals: Vec<Proposal>,
        camera: &Camera,
        model: &LikelihoodModel,
        cfg: &GreedyConfig,
    ) -> Result<usize> {
        proposals.sort_by(|a, b| b.gain.total_cmp(&a.gain));
        let before = self.outcome.accepted.len();
        for p in proposals {
            let claimed = self.partition.claimed();
            let refined = refine_pose(obs, &p, camera, model, Some(&claimed), &cfg.refine);
            let own = refined.silhouette(camera);
            let ok = refined.pixels >= cfg.min_pixels
                && refined.pixels as f64 >= cfg.min_unclaimed_fraction * own.len() as f64
                && refined.gain > 0.0
                && refined.score >= cfg.threshold;
            if !ok {
                self.outcome.rejected.push(refined);
                continue;
            }
            self.partition.claim(self.outcome.accepted.len() as i32, &own);
            let joint = self.joint;
            let next = self.partition.loglik(obs, model);
            let expected = joint + refined.gain;
            if next + 1e-6 * next.abs().max(1.0) < joint || (next - expected).abs() > 1e-6 * next.abs().max(1.0) {
                return Err(Error::Invariant(format!(
                    "joint log-likelihood went from {joint} to {next}, expected {expected}"
                )));
            }
            self.joint = next;
            self.outcome.trace.push(next);
            self.outcome.accepted.push(refined);
        }
        Ok(self.outcome.accepted.len() - before)
    }
}

/// Accepts proposals in descending order of gain. Each one is re-refined and
/// re-scored with pixels claimed by earlier acceptances masked out of its
/// foreground term, and accepted only if explaining its remaining pixels
/// raises the joint log-likelihood.
pub fn greedy_parse(
    obs: &FeatureMap,
    proposals: Vec<Proposal>,
    camera: &Camera,
    model: &LikelihoodModel,
    cfg: &GreedyConfig,
) -> Result<GreedyOutcome> {
    let mut state = GreedyState::new(obs, camera, model);
    state.run(obs, proposals, camera, model, cfg)?;
    Ok(state.outcome)
}
