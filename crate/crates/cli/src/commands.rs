//! File-level subcommands. Each reads its inputs from and writes its
//! outputs to the run directory.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

use vqa3d_core::dataset::{export_dataset, import_dataset};
use vqa3d_core::GroundTruthScene;
use vqa3d_reason::Family;

use crate::metrics::detection_summary;
use crate::pipeline::{
    answer_questions, generate_questions, generate_scenes, load_versioned, parse_scenes, GenConfig, Noise, ParseConfig,
    PipelineVariant, PredictionSet, QuestionSet, RepresentationSet, CONFIG_SCHEMA, PREDICTIONS_SCHEMA, QUESTIONS_SCHEMA,
    REPRESENTATIONS_SCHEMA,
};
use crate::report::{evaluate, AblationReport, EvalReport};

pub const DATASET_DIR: &str = "dataset";
pub const CONFIG_FILE: &str = "config.json";
pub const QUESTIONS_FILE: &str = "questions.json";
pub const REPRESENTATIONS_FILE: &str = "representations.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const ABLATION_FILE: &str = "ablation.json";
pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub scenes: usize,
    pub noise: Noise,
    pub families: Vec<Family>,
    pub out: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_config(out: &Path) -> Result<GenConfig> {
    load_versioned(&read(&out.join(CONFIG_FILE))?, CONFIG_SCHEMA, CONFIG_FILE)
}

pub fn load_questions(out: &Path) -> Result<QuestionSet> {
    load_versioned(&read(&out.join(QUESTIONS_FILE))?, QUESTIONS_SCHEMA, QUESTIONS_FILE)
}

pub fn load_representations(out: &Path) -> Result<RepresentationSet> {
    let set: RepresentationSet = load_versioned(&read(&out.join(REPRESENTATIONS_FILE))?, REPRESENTATIONS_SCHEMA, REPRESENTATIONS_FILE)?;
    for s in &set.scenes {
        s.representation
            .validate()
            .with_context(|| format!("representation of scene {}", s.scene))?;
    }
    Ok(set)
}

pub fn load_predictions(out: &Path) -> Result<PredictionSet> {
    load_versioned(&read(&out.join(PREDICTIONS_FILE))?, PREDICTIONS_SCHEMA, PREDICTIONS_FILE)
}

pub fn load_dataset(out: &Path) -> Result<(GenConfig, Vec<GroundTruthScene>)> {
    let config = load_config(out)?;
    let scenes = import_dataset(&out.join(DATASET_DIR)).context("reading dataset")?;
    if scenes.len() != config.scenes {
        bail!("dataset holds {} scenes but {CONFIG_FILE} records {}", scenes.len(), config.scenes);
    }
    Ok((config, scenes))
}

/// Scenes, their config and the answer keys.
pub fn cmd_gen(opts: &RunOptions) -> Result<QuestionSet> {
    if opts.families.is_empty() {
        bail!("at least one question family is required");
    }
    let config = GenConfig::new(opts.seed, opts.scenes, opts.families.clone());
    let scenes = generate_scenes(opts.seed, opts.scenes, &config.scene)?;
    std::fs::create_dir_all(&opts.out)?;
    export_dataset(&scenes, &opts.out.join(DATASET_DIR))?;
    write_json(&opts.out.join(CONFIG_FILE), &config)?;
    let questions = generate_questions(opts.seed, &scenes, &opts.families);
    write_json(&opts.out.join(QUESTIONS_FILE), &questions)?;
    Ok(questions)
}

pub fn cmd_parse(opts: &RunOptions, variant: PipelineVariant) -> Result<RepresentationSet> {
    let (config, scenes) = load_dataset(&opts.out)?;
    let pc = ParseConfig {
        seed: opts.seed,
        noise: opts.noise,
        variant,
    };
    let reps = parse_scenes(&scenes, &pc, &config.scene)?;
    write_json(&opts.out.join(REPRESENTATIONS_FILE), &reps)?;
    Ok(reps)
}

pub fn cmd_answer(opts: &RunOptions) -> Result<PredictionSet> {
    let reps = load_representations(&opts.out)?;
    let questions = load_questions(&opts.out)?;
    let preds = answer_questions(&reps, &questions)?;
    write_json(&opts.out.join(PREDICTIONS_FILE), &preds)?;
    Ok(preds)
}

pub fn cmd_eval(opts: &RunOptions) -> Result<EvalReport> {
    let preds = load_predictions(&opts.out)?;
    let questions = load_questions(&opts.out)?;
    let report = evaluate(preds.config.variant.name(), &preds, &questions)?;
    write_json(&opts.out.join(REPORT_FILE), &report)?;
    std::fs::write(opts.out.join(REPORT_CSV), report.to_csv())?;
    Ok(report)
}

/// Parses, answers and evaluates under each variant in turn; deltas are
/// taken against the first.
pub fn cmd_ablate(opts: &RunOptions, variants: &[PipelineVariant]) -> Result<AblationReport> {
    if variants.is_empty() {
        bail!("no variants to compare");
    }
    let (config, scenes) = load_dataset(&opts.out)?;
    let questions = load_questions(&opts.out)?;
    let mut runs = Vec::with_capacity(variants.len());
    for &variant in variants {
        let pc = ParseConfig {
            seed: opts.seed,
            noise: opts.noise,
            variant,
        };
        let reps = parse_scenes(&scenes, &pc, &config.scene)?;
        let preds = answer_questions(&reps, &questions)?;
        let report = evaluate(variant.name(), &preds, &questions)?;
        let det = matches!(variant, PipelineVariant::Parser(_)).then(|| detection_summary(&scenes, &reps.scenes));
        runs.push((report, det));
    }
    let ablation = AblationReport::new(runs);
    write_json(&opts.out.join(ABLATION_FILE), &ablation)?;
    std::fs::write(opts.out.join(ABLATION_CSV), ablation.to_csv())?;
    Ok(ablation)
}
