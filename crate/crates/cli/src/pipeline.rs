//! Pipeline stages shared by the subcommands: scene generation, question
//! generation, observation, parsing and answering.

use anyhow::{bail, Context, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use vqa3d_core::observe::{observe_attributes, render_observation, BackgroundModel, FeatureMap};
use vqa3d_core::repr::{ground_truth_representation, SceneRepresentation};
use vqa3d_core::{sample_scene, Error, GroundTruthScene, Pose6D, SceneConfig};
use vqa3d_parser::represent::training_pairs;
use vqa3d_parser::{ParseOutput, Parser, ParserConfig, PatchClassifier, Variant};
use vqa3d_reason::{execute, generate_for_scene, Family, Question, SceneFacts};

pub const CONFIG_SCHEMA: &str = "vqa3d.config/v1";
pub const QUESTIONS_SCHEMA: &str = "vqa3d.questions/v1";
pub const REPRESENTATIONS_SCHEMA: &str = "vqa3d.representations/v1";
pub const PREDICTIONS_SCHEMA: &str = "vqa3d.predictions/v1";

/// Independent random streams derived from the run seed.
pub mod stream {
    pub const SCENES: u64 = 1;
    pub const QUESTIONS: u64 = 2;
    pub const FEATURES: u64 = 3;
    pub const ATTRIBUTES: u64 = 4;
    pub const TRAIN_SCENES: u64 = 5;
    pub const TRAIN_ATTRIBUTES: u64 = 6;
    pub const POOL: u64 = 7;
}

const SAMPLING_RETRIES: u64 = 64;
pub const TRAIN_SCENES: usize = 16;

/// The `index`-th 64-bit word of stream `stream` of the ChaCha8 generator
/// keyed by `seed`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * 2);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub sigma_fg: f64,
    pub sigma_bg: f64,
    /// Per-pixel attribute label flip probability.
    pub attribute_flip: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            sigma_fg: 0.3,
            sigma_bg: 0.3,
            attribute_flip: 0.05,
        }
    }
}

impl Noise {
    pub const NONE: Noise = Noise {
        sigma_fg: 0.0,
        sigma_bg: 0.0,
        attribute_flip: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("noise-fg", self.sigma_fg), ("noise-bg", self.sigma_bg)] {
            if !(v.is_finite() && v >= 0.0) {
                bail!("{name} must be a finite non-negative number, got {v}");
            }
        }
        if !(0.0..=1.0).contains(&self.attribute_flip) {
            bail!("noise-attr must lie in [0, 1], got {}", self.attribute_flip);
        }
        Ok(())
    }
}

/// Source of scene representations: ground truth or a parser variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PipelineVariant {
    Oracle,
    Parser(Variant),
}

impl PipelineVariant {
    pub const ORACLE_NAME: &'static str = "oracle-representation";

    pub fn all() -> Vec<PipelineVariant> {
        std::iter::once(PipelineVariant::Oracle)
            .chain(Variant::ALL.into_iter().map(PipelineVariant::Parser))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            PipelineVariant::Oracle => Self::ORACLE_NAME,
            PipelineVariant::Parser(v) => v.name(),
        }
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineVariant {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineVariant::all().into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = PipelineVariant::all().iter().map(|v| v.name()).collect();
            anyhow::anyhow!("unknown variant `{s}`; valid variants: {}", names.join(", "))
        })
    }
}

impl From<PipelineVariant> for String {
    fn from(v: PipelineVariant) -> String {
        v.name().to_string()
    }
}

impl TryFrom<String> for PipelineVariant {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Settings recorded alongside generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub schema: String,
    pub seed: u64,
    pub scenes: usize,
    pub families: Vec<Family>,
    pub scene: SceneConfig,
}

impl GenConfig {
    pub fn new(seed: u64, scenes: usize, families: Vec<Family>) -> Self {
        Self {
            schema: CONFIG_SCHEMA.into(),
            seed,
            scenes,
            families,
            scene: SceneConfig::default(),
        }
    }
}

/// Settings of a parse run; hashed into the report fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseConfig {
    pub seed: u64,
    pub noise: Noise,
    pub variant: PipelineVariant,
}

/// Samples `n` scenes. A scene whose sampler gives up is redrawn from the
/// next derived seed of the same index.
pub fn generate_scenes(seed: u64, n: usize, config: &SceneConfig) -> Result<Vec<GroundTruthScene>> {
    config.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| sample_with_retry(seed, stream::SCENES, i as u64, config))
        .collect()
}

fn sample_with_retry(seed: u64, stream: u64, index: u64, config: &SceneConfig) -> Result<GroundTruthScene> {
    for attempt in 0..SAMPLING_RETRIES {
        let s = derive_seed(seed, stream, index << 8 | attempt);
        match sample_scene(s, config) {
            Ok(scene) => return Ok(scene),
            Err(Error::SamplingExhausted { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    bail!("scene {index} could not be sampled after {SAMPLING_RETRIES} seeds")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortScene {
    pub scene: u64,
    pub family: Family,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub schema: String,
    pub seed: u64,
    pub families: Vec<Family>,
    pub questions: Vec<Question>,
    /// Scene and family pairs with fewer questions than the lower bound.
    pub short: Vec<ShortScene>,
}

/// Questions for every scene and family; scene ids are dataset indices.
pub fn generate_questions(seed: u64, scenes: &[GroundTruthScene], families: &[Family]) -> QuestionSet {
    let per_scene: Vec<(Vec<Question>, Vec<ShortScene>)> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let facts = SceneFacts::from_scene(scene);
            let mut questions = Vec::new();
            let mut short = Vec::new();
            for &family in families {
                let fi = Family::ALL.iter().position(|&f| f == family).unwrap() as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::QUESTIONS, (i as u64) << 4 | fi));
                let g = generate_for_scene(&facts, i as u64, family, &mut rng);
                if g.short {
                    short.push(ShortScene {
                        scene: i as u64,
                        family,
                        count: g.questions.len(),
                    });
                }
                questions.extend(g.questions);
            }
            (questions, short)
        })
        .collect();
    let (questions, short): (Vec<_>, Vec<_>) = per_scene.into_iter().unzip();
    QuestionSet {
        schema: QUESTIONS_SCHEMA.into(),
        seed,
        families: families.to_vec(),
        questions: questions.into_iter().flatten().collect(),
        short: short.into_iter().flatten().collect(),
    }
}

/// Distinct questions of one family from `rounds` independent generation
/// rounds per scene. Gives difficulty bins enough samples for trend checks.
pub fn question_pool(seed: u64, scenes: &[GroundTruthScene], family: Family, rounds: usize) -> QuestionSet {
    let fi = Family::ALL.iter().position(|&f| f == family).unwrap() as u64;
    let per_scene: Vec<Vec<Question>> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let facts = SceneFacts::from_scene(scene);
            let mut pool: Vec<Question> = Vec::new();
            for round in 0..rounds as u64 {
                let index = (i as u64) << 20 | round << 4 | fi;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::POOL, index));
                for mut q in generate_for_scene(&facts, i as u64, family, &mut rng).questions {
                    if pool.iter().all(|p| p.program != q.program) {
                        q.id = format!("{i}-{}-pool-{}", family.name(), pool.len());
                        pool.push(q);
                    }
                }
            }
            pool
        })
        .collect();
    QuestionSet {
        schema: QUESTIONS_SCHEMA.into(),
        seed,
        families: vec![family],
        questions: per_scene.into_iter().flatten().collect(),
        short: Vec::new(),
    }
}

/// Attribute classifier trained on a held-out split drawn from its own
/// seed stream.
pub fn train_classifier(seed: u64, noise: &Noise, config: &SceneConfig) -> Result<PatchClassifier> {
    let scenes: Vec<GroundTruthScene> = (0..TRAIN_SCENES)
        .into_par_iter()
        .map(|i| sample_with_retry(seed, stream::TRAIN_SCENES, i as u64, config))
        .collect::<Result<_>>()?;
    let observed: Vec<Vec<[u8; 4]>> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| observe_attributes(s, noise.attribute_flip, derive_seed(seed, stream::TRAIN_ATTRIBUTES, i as u64)))
        .collect();
    Ok(PatchClassifier::train(training_pairs(&scenes, &observed)))
}

pub fn build_parser(seed: u64, noise: &Noise, variant: Variant, config: &SceneConfig) -> Result<Parser> {
    noise.validate()?;
    let classifier = train_classifier(seed, noise, config)?;
    let pc = ParserConfig {
        sigma_fg: noise.sigma_fg,
        background: BackgroundModel::with_sigma(noise.sigma_bg),
        variant,
        ..Default::default()
    };
    Ok(Parser::new(config, pc, classifier)?)
}

/// Noisy feature map and attribute labels of scene `index`.
pub fn observe(seed: u64, index: usize, scene: &GroundTruthScene, noise: &Noise) -> Result<(FeatureMap, Vec<[u8; 4]>)> {
    let features = render_observation(
        scene,
        noise.sigma_fg,
        &BackgroundModel::with_sigma(noise.sigma_bg),
        derive_seed(seed, stream::FEATURES, index as u64),
    )?;
    let attributes = observe_attributes(scene, noise.attribute_flip, derive_seed(seed, stream::ATTRIBUTES, index as u64));
    Ok((features, attributes))
}

/// Summary of one detected object, kept for detection metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub subtype: String,
    pub category: String,
    pub pose: Pose6D,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedScene {
    pub scene: u64,
    pub representation: SceneRepresentation,
    /// Empty for the oracle variant.
    pub detections: Vec<DetectedObject>,
    /// Joint log-likelihood after each greedy acceptance.
    pub trace: Vec<f64>,
    pub removed_by_post_filter: usize,
}

impl ParsedScene {
    fn from_output(scene: u64, out: ParseOutput) -> Self {
        Self {
            scene,
            detections: out
                .detections
                .iter()
                .map(|d| DetectedObject {
                    subtype: d.subtype.name().into(),
                    category: d.proposal.category.name().into(),
                    pose: d.proposal.pose,
                    score: d.proposal.score,
                })
                .collect(),
            representation: out.representation,
            trace: out.trace,
            removed_by_post_filter: out.removed_by_post_filter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSet {
    pub schema: String,
    pub config: ParseConfig,
    pub scenes: Vec<ParsedScene>,
}

/// Representations of every scene under `config.variant`.
pub fn parse_scenes(scenes: &[GroundTruthScene], config: &ParseConfig, scene_config: &SceneConfig) -> Result<RepresentationSet> {
    let parsed = match config.variant {
        PipelineVariant::Oracle => scenes
            .iter()
            .enumerate()
            .map(|(i, s)| ParsedScene {
                scene: i as u64,
                representation: ground_truth_representation(s),
                detections: Vec::new(),
                trace: Vec::new(),
                removed_by_post_filter: 0,
            })
            .collect(),
        PipelineVariant::Parser(v) => {
            let parser = build_parser(config.seed, &config.noise, v, scene_config)?;
            scenes
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let (obs, attrs) = observe(config.seed, i, s, &config.noise)?;
                    let out = parser.parse(&obs, &attrs).with_context(|| format!("parsing scene {i}"))?;
                    Ok(ParsedScene::from_output(i as u64, out))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(RepresentationSet {
        schema: REPRESENTATIONS_SCHEMA.into(),
        config: config.clone(),
        scenes: parsed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question: String,
    pub scene: u64,
    pub answer: String,
    pub confidence: f64,
    pub ambiguous: bool,
    /// Set when the program could not be executed on the representation.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub schema: String,
    pub config: ParseConfig,
    pub predictions: Vec<Prediction>,
}

pub fn answer_questions(reps: &RepresentationSet, questions: &QuestionSet) -> Result<PredictionSet> {
    let predictions = questions
        .questions
        .par_iter()
        .map(|q| {
            let rep = reps
                .scenes
                .get(q.scene as usize)
                .filter(|p| p.scene == q.scene)
                .with_context(|| format!("question {} refers to scene {} which has no representation", q.id, q.scene))?;
            Ok(match execute(&q.program, &rep.representation) {
                Ok(e) => Prediction {
                    question: q.id.clone(),
                    scene: q.scene,
                    answer: e.distribution.answer.clone(),
                    confidence: e.distribution.confidence,
                    ambiguous: e.ambiguous,
                    error: None,
                },
                Err(err) => Prediction {
                    question: q.id.clone(),
                    scene: q.scene,
                    answer: String::new(),
                    confidence: 0.0,
                    ambiguous: false,
                    error: Some(err.to_string()),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet {
        schema: PREDICTIONS_SCHEMA.into(),
        config: reps.config.clone(),
        predictions,
    })
}

/// Checks the `schema` field of a JSON document before full decoding, so a
/// version mismatch is reported as such rather than as a field error.
pub fn load_versioned<T: serde::de::DeserializeOwned>(text: &str, expected: &str, what: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).with_context(|| format!("{what} is not valid JSON"))?;
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
    if found != expected {
        return Err(Error::Schema {
            found: found.into(),
            expected: expected.into(),
        })
        .with_context(|| format!("reading {what}"));
    }
    serde_json::from_value(value).with_context(|| format!("decoding {what}"))
}
