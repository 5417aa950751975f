//! Render-and-compare scene parser: recovers objects, poses, parts,
//! attributes and occlusion scores from an observed feature map.

pub mod activation;
pub mod greedy;
pub mod likelihood;
pub mod nms;
pub mod parse;
pub mod refine;
pub mod represent;

pub use activation::{activation_maps, activation_maps_masked, ActivationMap, PoseGrid, Template, TemplateBank};
pub use greedy::{greedy_parse, GreedyConfig, GreedyState, GreedyOutcome};
pub use likelihood::{LikelihoodModel, PixelPartition, Silhouette};
pub use nms::{nms2d, nms3d, Peak};
pub use parse::{Detection, ParseOutput, Parser, ParserConfig, Variant, PAPER_THRESHOLD};
pub use refine::{refine_pose, Proposal, RefineConfig};
pub use represent::{AttributeRows, PatchClassifier, PixelBox};
