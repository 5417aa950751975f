//! End-to-end scene parsing: activation maps, suppression, refinement,
//! greedy acceptance and assembly of the representation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use vqa3d_core::observe::{background_observation, BackgroundModel, FeatureMap};
use vqa3d_core::raster::rasterize_scene;
use vqa3d_core::repr::SceneRepresentation;
use vqa3d_core::{Camera, Category, CategoryMesh, Error, Pose6D, Result, SceneConfig, Subtype};

use crate::activation::{activation_maps, activation_maps_masked, template_gain_masked, ActivationMap, PoseGrid, Template, TemplateBank};
use crate::greedy::{GreedyConfig, GreedyState};
use crate::likelihood::{LikelihoodModel, PixelPartition};
use crate::nms::{nms2d, nms3d, precedence, Peak};
use crate::refine::{refine_pose, Proposal, RefineConfig};
use crate::represent::{
    argmax, assemble, localize_parts, object_box, occlusion_scores, post_filter, AttributeRows, ObjectEstimate,
    PartEstimate, PartLocation, PatchClassifier,
};

/// The published score-map threshold. It is tied to a learned backbone, so
/// the parser calibrates its own threshold instead.
pub const PAPER_THRESHOLD: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoGreedy,
    #[serde(rename = "no-3d-nms")]
    No3dNms,
    NoPostFilter,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoGreedy, Variant::No3dNms, Variant::NoPostFilter];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGreedy => "no-greedy",
            Variant::No3dNms => "no-3d-nms",
            Variant::NoPostFilter => "no-post-filter",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::InvalidInput(format!("unknown parser variant `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub sigma_fg: f64,
    pub background: BackgroundModel,
    pub nms_radius: usize,
    /// Proposals refined per scene after suppression.
    pub top_k: usize,
    /// Best-fitting templates at a peak cell used as refinement starts.
    pub restarts: usize,
    pub min_pixels: usize,
    pub min_unclaimed_fraction: f64,
    /// Calibrated threshold is `mean + threshold_sigmas * std` of
    /// background activation scores.
    pub threshold_sigmas: f64,
    pub calibration_renders: usize,
    pub calibration_seed: u64,
    /// Skips calibration when set.
    pub threshold: Option<f64>,
    pub refine: RefineConfig,
    /// Greedy passes. Each pass after the first recomputes activation maps
    /// with already claimed pixels masked out.
    pub passes: usize,
    pub variant: Variant,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            sigma_fg: 0.3,
            background: BackgroundModel::default(),
            nms_radius: 2,
            top_k: 48,
            restarts: 3,
            min_pixels: 8,
            min_unclaimed_fraction: 0.15,
            threshold_sigmas: 6.0,
            calibration_renders: 2,
            calibration_seed: 0x5eed_ca1b,
            threshold: None,
            refine: RefineConfig::default(),
            passes: 2,
            variant: Variant::Full,
        }
    }
}

/// Object found by the parser, with its final pose and parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub proposal: Proposal,
    pub subtype: Subtype,
    pub parts: Vec<PartLocation>,
    pub low_evidence: bool,
}

impl Detection {
    pub fn mesh(&self) -> &'static CategoryMesh {
        vqa3d_core::MeshLibrary::standard().subtype(self.subtype)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutput {
    pub representation: SceneRepresentation,
    pub detections: Vec<Detection>,
    /// Peaks that survived suppression, before the top-k cut.
    pub peaks: Vec<Peak>,
    /// Joint log-likelihood after each greedy acceptance.
    pub trace: Vec<f64>,
    pub removed_by_post_filter: usize,
}

pub struct Parser {
    pub camera: Camera,
    pub config: ParserConfig,
    pub bank: TemplateBank,
    pub model: LikelihoodModel,
    pub threshold: f64,
    pub classifier: PatchClassifier,
}

impl Parser {
    pub fn new(scene: &SceneConfig, config: ParserConfig, classifier: PatchClassifier) -> Result<Self> {
        scene.validate()?;
        config.background.validate()?;
        if config.nms_radius == 0 {
            return Err(Error::InvalidInput("nms radius must be at least 1".into()));
        }
        let (near, far) = scene.depth_range();
        let grid = PoseGrid::standard(scene.tilt, near, far);
        let bank = TemplateBank::build(grid, &scene.camera, &Category::ALL);
        let model = LikelihoodModel::for_observation(config.sigma_fg, &config.background);
        let mut parser = Self {
            camera: scene.camera,
            config,
            bank,
            model,
            threshold: 0.0,
            classifier,
        };
        parser.threshold = match parser.config.threshold {
            Some(t) => t,
            None => parser.calibrate_threshold()?,
        };
        Ok(parser)
    }

    /// `mean + k * std` of activation scores on pure-background renders.
    pub fn calibrate_threshold(&self) -> Result<f64> {
        let (rows, cols) = self.camera.grid();
        let mut scores = Vec::new();
        for i in 0..self.config.calibration_renders.max(1) {
            let obs = background_observation(rows, cols, &self.config.background, self.config.calibration_seed + i as u64)?;
            for m in activation_maps(&obs, &self.bank, &self.model) {
                scores.extend(m.scores.iter().copied().filter(|s| s.is_finite()));
            }
        }
        if scores.is_empty() {
            return Err(Error::Invariant("no finite background activation scores".into()));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Ok(mean + self.config.threshold_sigmas * var.sqrt())
    }

    pub fn activation(&self, obs: &FeatureMap) -> Vec<ActivationMap> {
        activation_maps(obs, &self.bank, &self.model)
    }

    pub fn activation_masked(&self, obs: &FeatureMap, mask: &[bool]) -> Vec<ActivationMap> {
        activation_maps_masked(obs, &self.bank, &self.model, Some(mask))
    }

    /// Peaks after per-category and, unless disabled, cross-category
    /// suppression, sorted by precedence.
    pub fn peaks(&self, maps: &[ActivationMap]) -> Vec<Peak> {
        let cols = self.camera.grid().1;
        let per_cat: Vec<Vec<Peak>> = maps.iter().map(|m| nms2d(m, self.config.nms_radius, self.threshold)).collect();
        if self.config.variant == Variant::No3dNms {
            let mut all: Vec<Peak> = per_cat.into_iter().flatten().collect();
            all.sort_by(|a, b| precedence(a, b, cols));
            all
        } else {
            nms3d(&per_cat, self.config.nms_radius, cols)
        }
    }

    /// Unmasked refinement of the strongest peaks.
    pub fn proposals(&self, obs: &FeatureMap, peaks: &[Peak]) -> Vec<Proposal> {
        self.proposals_masked(obs, peaks, None)
    }

    /// Refinement of the strongest peaks with masked pixels left out.
    pub fn proposals_masked(&self, obs: &FeatureMap, peaks: &[Peak], mask: Option<&[bool]>) -> Vec<Proposal> {
        peaks
            .par_iter()
            .take(self.config.top_k)
            .map(|p| {
                let mut starts: Vec<(&Template, f64)> = self
                    .bank
                    .templates
                    .iter()
                    .filter(|t| t.category == p.category)
                    .map(|t| (t, template_gain_masked(obs, t, p.row, p.col, &self.model, mask).0))
                    .collect();
                starts.sort_by(|a, b| b.1.total_cmp(&a.1));
                starts.truncate(self.config.restarts.max(1));
                if starts.is_empty() {
                    starts.push((&self.bank.templates[p.template as usize], 0.0));
                }
                starts
                    .into_iter()
                    .map(|(t, _)| {
                        let init = Proposal::new(p.category, t.pose_at(p.row, p.col));
                        refine_pose(obs, &init, &self.camera, &self.model, mask, &self.config.refine)
                    })
                    .reduce(|a, b| if b.gain > a.gain { b } else { a })
                    .expect("at least one start")
            })
            .collect()
    }

    fn greedy_config(&self) -> GreedyConfig {
        GreedyConfig {
            threshold: self.threshold,
            min_pixels: self.config.min_pixels,
            min_unclaimed_fraction: self.config.min_unclaimed_fraction,
            refine: self.config.refine.clone(),
        }
    }

    /// Accepted proposals in acceptance order, plus the likelihood trace.
    /// Only the first greedy pass; see [`Parser::detect`].
    pub fn accept(&self, obs: &FeatureMap, proposals: Vec<Proposal>) -> Result<(Vec<Proposal>, Vec<f64>)> {
        if self.config.variant == Variant::NoGreedy {
            let mut kept: Vec<Proposal> = proposals
                .into_iter()
                .filter(|p| p.pixels >= self.config.min_pixels && p.gain > 0.0 && p.score >= self.threshold)
                .collect();
            kept.sort_by(|a, b| b.gain.total_cmp(&a.gain));
            return Ok((kept, Vec::new()));
        }
        let mut state = GreedyState::new(obs, &self.camera, &self.model);
        state.run(obs, proposals, &self.camera, &self.model, &self.greedy_config())?;
        Ok((state.outcome.accepted, state.outcome.trace))
    }

    /// Activation, suppression, proposals and acceptance over all passes.
    /// Returns the accepted proposals, every surviving peak and the trace.
    pub fn detect(&self, obs: &FeatureMap) -> Result<(Vec<Proposal>, Vec<Peak>, Vec<f64>)> {
        let mut peaks = self.peaks(&self.activation(obs));
        let proposals = self.proposals(obs, &peaks);
        if self.config.variant == Variant::NoGreedy {
            let (accepted, trace) = self.accept(obs, proposals)?;
            return Ok((accepted, peaks, trace));
        }
        let cfg = self.greedy_config();
        let mut state = GreedyState::new(obs, &self.camera, &self.model);
        let mut added = state.run(obs, proposals, &self.camera, &self.model, &cfg)?;
        for _ in 1..self.config.passes {
            if added == 0 {
                break;
            }
            let mask = state.partition.claimed();
            let more = self.peaks(&self.activation_masked(obs, &mask));
            let proposals = self.proposals_masked(obs, &more, Some(&mask));
            peaks.extend(more);
            added = state.run(obs, proposals, &self.camera, &self.model, &cfg)?;
        }
        Ok((state.outcome.accepted, peaks, state.outcome.trace))
    }

    /// Pixels the proposal owns when earlier ones claim first.
    fn ownership(&self, accepted: &[Proposal]) -> PixelPartition {
        let meshes: Vec<(&CategoryMesh, Pose6D)> = accepted.iter().map(|p| (p.mesh(), p.pose)).collect();
        PixelPartition::greedy(&meshes, &self.camera)
    }

    fn classify_owned(&self, attr_map: &[[u8; 4]], owner: &[i32], id: usize, proposal: &Proposal) -> AttributeRows {
        let (rows, cols) = self.camera.grid();
        let support: Vec<bool> = owner.iter().map(|&o| o == id as i32).collect();
        match object_box(proposal.mesh(), &proposal.pose, &self.camera) {
            Some(b) => self.classifier.classify_attributes(attr_map, rows, cols, &b, Some(&support)),
            None => self.classifier.classify_pixels(attr_map, std::iter::empty()),
        }
    }

    pub fn parse(&self, obs: &FeatureMap, attr_map: &[[u8; 4]]) -> Result<ParseOutput> {
        let (rows, cols) = self.camera.grid();
        if obs.rows != rows || obs.cols != cols || attr_map.len() != rows * cols {
            return Err(Error::InvalidInput("observation does not match the camera grid".into()));
        }
        let (accepted, peaks, trace) = self.detect(obs)?;

        let owner = self.ownership(&accepted).owner;
        let subtype_rows: Vec<AttributeRows> = accepted
            .iter()
            .enumerate()
            .map(|(i, p)| self.classify_owned(attr_map, &owner, i, p))
            .collect();
        let keep: Vec<usize> = if self.config.variant == Variant::NoPostFilter {
            (0..accepted.len()).collect()
        } else {
            let cats: Vec<Category> = accepted.iter().map(|p| p.category).collect();
            let rows: Vec<Vec<f64>> = subtype_rows.iter().map(|r| r.subtype.clone()).collect();
            post_filter(&cats, &rows)
        };
        let removed_by_post_filter = accepted.len() - keep.len();

        let mut claimed = PixelPartition::empty(self.camera.pixel_count());
        let mut kept: Vec<(Proposal, Subtype, AttributeRows)> = Vec::with_capacity(keep.len());
        for &i in &keep {
            let mut p = accepted[i].clone();
            let subtype = subtype_in_category(&subtype_rows[i].subtype, p.category);
            p.subtype = Some(subtype);
            p.rescore(obs, &self.camera, &self.model, Some(&claimed.claimed()));
            let p = if self.config.variant == Variant::NoGreedy {
                refine_pose(obs, &p, &self.camera, &self.model, None, &self.config.refine)
            } else {
                let mask = claimed.claimed();
                refine_pose(obs, &p, &self.camera, &self.model, Some(&mask), &self.config.refine)
            };
            claimed.claim(kept.len() as i32, &p.silhouette(&self.camera));
            kept.push((p, subtype, subtype_rows[i].clone()));
        }

        self.assemble_detections(attr_map, kept, peaks, trace, removed_by_post_filter)
    }

    fn assemble_detections(
        &self,
        attr_map: &[[u8; 4]],
        kept: Vec<(Proposal, Subtype, AttributeRows)>,
        peaks: Vec<Peak>,
        trace: Vec<f64>,
        removed_by_post_filter: usize,
    ) -> Result<ParseOutput> {
        let (rows, cols) = self.camera.grid();
        let meshes: Vec<(&CategoryMesh, Pose6D)> = kept.iter().map(|(p, _, _)| (p.mesh(), p.pose)).collect();
        let render = rasterize_scene(&meshes, &self.camera);

        let mut objects = Vec::with_capacity(kept.len());
        let mut parts = Vec::new();
        let mut part_index = Vec::new();
        let mut detections = Vec::with_capacity(kept.len());
        for (i, (p, subtype, first)) in kept.into_iter().enumerate() {
            let mesh = p.mesh();
            let visible: Vec<bool> = render.instance_map.iter().map(|&o| o == i as i32).collect();
            let body: Vec<bool> = (0..visible.len()).map(|k| visible[k] && render.part_map[k] < 0).collect();
            let bbox = object_box(mesh, &p.pose, &self.camera);
            let rows_for = |support: &[bool]| match &bbox {
                Some(b) => self.classifier.classify_attributes(attr_map, rows, cols, b, Some(support)),
                None => self.classifier.classify_pixels(attr_map, std::iter::empty()),
            };
            let body_rows = rows_for(&body);
            let body_rows = if body_rows.low_evidence { rows_for(&visible) } else { body_rows };
            let all_rows = rows_for(&visible);
            let low_evidence = body_rows.low_evidence;

            let locs = localize_parts(mesh, &p.pose, &self.camera, &render.depth_map);
            for loc in &locs {
                let support: Vec<bool> = (0..visible.len())
                    .map(|k| visible[k] && render.part_map[k] == loc.part as i16)
                    .collect();
                let r = self.classifier.classify_attributes(attr_map, rows, cols, &loc.bbox, Some(&support));
                parts.push(PartEstimate {
                    owner: i,
                    name: loc.name.clone(),
                    color: r.color,
                    material: r.material,
                });
                part_index.push((i, loc.part));
            }
            objects.push(ObjectEstimate {
                subtype: first.subtype,
                color: body_rows.color,
                material: body_rows.material,
                size: all_rows.size,
                pose: p.pose,
            });
            detections.push(Detection {
                proposal: p,
                subtype,
                parts: locs,
                low_evidence,
            });
        }
        let s = occlusion_scores(&meshes, &part_index, &self.camera);
        let representation = assemble(&objects, &parts, &s)?;
        Ok(ParseOutput {
            representation,
            detections,
            peaks,
            trace,
            removed_by_post_filter,
        })
    }
}

/// Most probable sub-type of the given category.
pub fn subtype_in_category(row: &[f64], category: Category) -> Subtype {
    let best = category
        .subtypes()
        .max_by(|a, b| row[a.index()].total_cmp(&row[b.index()]).then(b.index().cmp(&a.index())))
        .expect("every category has sub-types");
    if Subtype::ALL[argmax(row)].category() == category {
        Subtype::ALL[argmax(row)]
    } else {
        best
    }
}
