//! Orchestration of the generate, parse, answer and evaluate pipeline.

pub mod commands;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use commands::{cmd_ablate, cmd_answer, cmd_eval, cmd_gen, cmd_parse, RunOptions};
pub use metrics::{detection_summary, scene_detections, DetectionSummary};
pub use pipeline::{
    answer_questions, build_parser, derive_seed, generate_questions, generate_scenes, observe, parse_scenes, Noise,
    ParseConfig, ParsedScene, PipelineVariant, Prediction, PredictionSet, QuestionSet, RepresentationSet,
};
pub use report::{evaluate, relative_drop, AblationReport, EvalReport};
