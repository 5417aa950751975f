//! Probabilistic execution of programs over a scene representation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use vqa3d_core::repr::{Matrix, SceneRepresentation};
use vqa3d_core::{azimuth_difference, Category, Direction, Subtype};

use crate::oracle::{Domain, ExecError, PoseRelation, OCCLUSION_THRESHOLD};
use crate::program::{Op, Program, ProgramOp};

/// Answer reported when a `unique` receives no attention at all.
pub const NO_REFERENT: &str = "no-referent";
/// A `unique` whose largest normalized weight does not exceed this is
/// flagged ambiguous.
pub const AMBIGUITY_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub domain: Domain,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub probs: BTreeMap<String, f64>,
    pub answer: String,
    pub confidence: f64,
}

impl AnswerDistribution {
    /// Normalizes `probs` and picks the most likely token; ties go to the
    /// lexicographically smallest.
    pub fn new(probs: BTreeMap<String, f64>) -> Self {
        let total: f64 = probs.values().sum();
        let probs: BTreeMap<String, f64> = if total > 0.0 {
            probs.into_iter().map(|(k, v)| (k, v / total)).collect()
        } else {
            let n = probs.len().max(1) as f64;
            probs.into_keys().map(|k| (k, 1.0 / n)).collect()
        };
        let mut answer = String::new();
        let mut confidence = f64::NEG_INFINITY;
        for (k, &v) in &probs {
            if v > confidence {
                answer = k.clone();
                confidence = v;
            }
        }
        if probs.is_empty() {
            confidence = 0.0;
        }
        Self {
            probs,
            answer,
            confidence,
        }
    }

    fn no_referent() -> Self {
        Self {
            probs: BTreeMap::from([(NO_REFERENT.to_string(), 1.0)]),
            answer: NO_REFERENT.to_string(),
            confidence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub op: Op,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<Attention>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub distribution: AnswerDistribution,
    /// Some `unique` saw no dominant referent.
    pub ambiguous: bool,
    pub trace: Vec<TraceStep>,
}

impl Execution {
    pub fn answer(&self) -> &str {
        &self.distribution.answer
    }
}

#[derive(Debug, Clone)]
enum Value {
    Att(Attention),
    Answer(AnswerDistribution),
}

fn column(vocab: &[String], value: &str, op: Op) -> Result<usize, ExecError> {
    vocab.iter().position(|v| v == value).ok_or_else(|| ExecError::Vocabulary {
        op,
        value: value.to_string(),
    })
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn type_err(step: usize, message: impl Into<String>) -> ExecError {
    ExecError::Type {
        step,
        message: message.into(),
    }
}

fn distribution_from(att: &[f64], m: &Matrix, tokens: &[String]) -> AnswerDistribution {
    let mut probs: BTreeMap<String, f64> = tokens.iter().map(|t| (t.clone(), 0.0)).collect();
    for (i, &w) in att.iter().enumerate() {
        for (c, t) in tokens.iter().enumerate() {
            *probs.get_mut(t).unwrap() += w * m.get(i, c);
        }
    }
    AnswerDistribution::new(probs)
}

/// Probability of `k` successes among independent trials with the given
/// success probabilities.
pub fn poisson_binomial(weights: &[f64]) -> Vec<f64> {
    let mut dist = vec![1.0];
    for &w in weights {
        let mut next = vec![0.0; dist.len() + 1];
        for (k, &p) in dist.iter().enumerate() {
            next[k] += p * (1.0 - w);
            next[k + 1] += p * w;
        }
        dist = next;
    }
    dist
}

fn circular_mean(weights: &[f64], angles: &[f64]) -> f64 {
    if let Some(k) = weights.iter().position(|&w| w >= 1.0 - 1e-12) {
        return angles[k];
    }
    let (s, c) = weights
        .iter()
        .zip(angles)
        .fold((0.0, 0.0), |(s, c), (&w, &a)| (s + w * a.sin(), c + w * a.cos()));
    s.atan2(c)
}

struct Exec<'a> {
    rep: &'a SceneRepresentation,
}

impl Exec<'_> {
    fn attention<'v>(&self, values: &'v [Value], p: &ProgramOp, step: usize) -> Result<&'v Attention, ExecError> {
        let idx = *p.inputs.first().ok_or_else(|| type_err(step, format!("{} is missing its input", p.op)))?;
        match values.get(idx) {
            Some(Value::Att(a)) => Ok(a),
            _ => Err(type_err(step, format!("{} expects attention", p.op))),
        }
    }

    fn filter_column(&self, domain: Domain, op: Op, value: &str, step: usize) -> Result<Vec<f64>, ExecError> {
        let rep = self.rep;
        let vocab = &rep.vocab;
        let pick = |m: &Matrix, c: usize| (0..m.rows).map(|r| m.get(r, c)).collect::<Vec<f64>>();
        Ok(match (domain, op) {
            (Domain::Objects, Op::FilterColor) => pick(&rep.object_color, column(&vocab.colors, value, op)?),
            (Domain::Objects, Op::FilterMaterial) => pick(&rep.object_material, column(&vocab.materials, value, op)?),
            (Domain::Objects, Op::FilterSize) => pick(&rep.object_size, column(&vocab.sizes, value, op)?),
            (Domain::Objects, Op::FilterShape) => {
                if let Some(cat) = Category::from_name(value) {
                    let cols: Vec<usize> = vocab
                        .subtypes
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| Subtype::from_name(s).is_some_and(|s| s.category() == cat))
                        .map(|(c, _)| c)
                        .collect();
                    (0..rep.o.rows).map(|r| cols.iter().map(|&c| rep.o.get(r, c)).sum::<f64>().min(1.0)).collect()
                } else {
                    pick(&rep.o, column(&vocab.subtypes, value, op)?)
                }
            }
            (Domain::Objects, Op::FilterPose) => {
                let dir = Direction::from_name(value).ok_or_else(|| ExecError::Vocabulary {
                    op,
                    value: value.to_string(),
                })?;
                rep.object_pose
                    .iter()
                    .map(|p| if Direction::from_azimuth(p.azimuth) == dir { 1.0 } else { 0.0 })
                    .collect()
            }
            (Domain::Parts, Op::FilterColor) => pick(&rep.part_color, column(&vocab.colors, value, op)?),
            (Domain::Parts, Op::FilterMaterial) => pick(&rep.part_material, column(&vocab.materials, value, op)?),
            (Domain::Parts, Op::FilterShape) => pick(&rep.p, column(&vocab.parts, value, op)?),
            _ => return Err(type_err(step, format!("{op} is not defined on parts"))),
        })
    }

    fn s_row_offset(&self, domain: Domain) -> usize {
        match domain {
            Domain::Objects => 0,
            Domain::Parts => self.rep.n_objects(),
        }
    }

    fn step(&self, values: &[Value], p: &ProgramOp, step: usize, trace: &mut TraceStep) -> Result<Option<Value>, ExecError> {
        let rep = self.rep;
        let n = rep.n_objects();
        let att = |domain, weights| Value::Att(Attention { domain, weights });
        let objects_only = |a: &Attention| {
            if a.domain == Domain::Objects {
                Ok(())
            } else {
                Err(type_err(step, format!("{} is defined on objects only", p.op)))
            }
        };
        Ok(Some(match p.op {
            Op::Scene => att(Domain::Objects, vec![1.0; n]),
            Op::FilterColor | Op::FilterMaterial | Op::FilterSize | Op::FilterShape | Op::FilterPose => {
                let a = self.attention(values, p, step)?;
                let value = p.arg.as_deref().ok_or_else(|| type_err(step, format!("{} needs an argument", p.op)))?;
                let col = self.filter_column(a.domain, p.op, value, step)?;
                att(a.domain, a.weights.iter().zip(&col).map(|(w, c)| w * clamp01(*c)).collect())
            }
            Op::FilterOccludee => {
                let a = self.attention(values, p, step)?;
                let off = self.s_row_offset(a.domain);
                let w = a
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(e, &w)| {
                        let total: f64 = rep.s.row(off + e).iter().sum();
                        w * (total / OCCLUSION_THRESHOLD).min(1.0)
                    })
                    .collect();
                att(a.domain, w)
            }
            Op::Unique => {
                let a = self.attention(values, p, step)?;
                let total: f64 = a.weights.iter().sum();
                if total <= 0.0 {
                    return Ok(None);
                }
                let w: Vec<f64> = a.weights.iter().map(|w| w / total).collect();
                trace.ambiguous = w.iter().cloned().fold(0.0, f64::max) <= AMBIGUITY_LEVEL;
                att(a.domain, w)
            }
            Op::QueryColor | Op::QueryMaterial | Op::QuerySize | Op::QueryShape | Op::QueryPose => {
                let a = self.attention(values, p, step)?;
                let total: f64 = a.weights.iter().sum();
                let w: Vec<f64> = if total > 0.0 {
                    a.weights.iter().map(|w| w / total).collect()
                } else {
                    a.weights.clone()
                };
                let vocab = &rep.vocab;
                let dist = match (a.domain, p.op) {
                    (Domain::Objects, Op::QueryColor) => distribution_from(&w, &rep.object_color, &vocab.colors),
                    (Domain::Objects, Op::QueryMaterial) => distribution_from(&w, &rep.object_material, &vocab.materials),
                    (Domain::Objects, Op::QuerySize) => distribution_from(&w, &rep.object_size, &vocab.sizes),
                    (Domain::Objects, Op::QueryShape) => distribution_from(&w, &rep.o, &vocab.subtypes),
                    (Domain::Objects, Op::QueryPose) => {
                        let mut probs: BTreeMap<String, f64> =
                            Direction::ALL.iter().map(|d| (d.name().to_string(), 0.0)).collect();
                        for (i, &wi) in w.iter().enumerate() {
                            let d = Direction::from_azimuth(rep.object_pose[i].azimuth);
                            *probs.get_mut(d.name()).unwrap() += wi;
                        }
                        AnswerDistribution::new(probs)
                    }
                    (Domain::Parts, Op::QueryColor) => distribution_from(&w, &rep.part_color, &vocab.colors),
                    (Domain::Parts, Op::QueryMaterial) => distribution_from(&w, &rep.part_material, &vocab.materials),
                    (Domain::Parts, Op::QueryShape) => distribution_from(&w, &rep.p, &vocab.parts),
                    _ => return Err(type_err(step, format!("{} is not defined on parts", p.op))),
                };
                Value::Answer(dist)
            }
            Op::Count => {
                let a = self.attention(values, p, step)?;
                let dist = poisson_binomial(&a.weights);
                let expected: f64 = a.weights.iter().sum();
                let answer = expected.round() as usize;
                let probs = dist.iter().enumerate().map(|(k, &v)| (k.to_string(), v)).collect();
                let mut d = AnswerDistribution::new(probs);
                d.confidence = d.probs[&answer.to_string()];
                d.answer = answer.to_string();
                Value::Answer(d)
            }
            Op::Exist => {
                let a = self.attention(values, p, step)?;
                let none: f64 = a.weights.iter().map(|w| 1.0 - w).product();
                let yes = 1.0 - none;
                let probs = BTreeMap::from([("yes".to_string(), yes), ("no".to_string(), none)]);
                let answer = if yes >= 0.5 { "yes" } else { "no" };
                Value::Answer(AnswerDistribution {
                    confidence: probs[answer],
                    answer: answer.to_string(),
                    probs,
                })
            }
            Op::ObjectToPart => {
                let a = self.attention(values, p, step)?;
                objects_only(a)?;
                let w = (0..rep.n_parts())
                    .map(|i| (0..n).map(|j| a.weights[j] * rep.h.get(j, i)).fold(0.0, f64::max))
                    .collect();
                att(Domain::Parts, w)
            }
            Op::PartToObject => {
                let a = self.attention(values, p, step)?;
                if a.domain != Domain::Parts {
                    return Err(type_err(step, "part_to_object expects parts"));
                }
                let w = (0..n)
                    .map(|j| (0..rep.n_parts()).map(|i| a.weights[i] * rep.h.get(j, i)).fold(0.0, f64::max))
                    .collect();
                att(Domain::Objects, w)
            }
            Op::SamePose | Op::OppositePose | Op::VerticalPose => {
                let a = self.attention(values, p, step)?;
                objects_only(a)?;
                let want = PoseRelation::of(p.op).unwrap();
                let total: f64 = a.weights.iter().sum();
                if total <= 0.0 {
                    att(Domain::Objects, vec![0.0; n])
                } else {
                    let r: Vec<f64> = a.weights.iter().map(|w| w / total).collect();
                    let az: Vec<f64> = rep.object_pose.iter().map(|p| p.azimuth).collect();
                    let reference = circular_mean(&r, &az);
                    let w = (0..n)
                        .map(|k| {
                            let hit = PoseRelation::classify(azimuth_difference(az[k], reference)) == want;
                            if hit {
                                1.0 - r[k]
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    att(Domain::Objects, w)
                }
            }
            Op::RelateOccluding => {
                let a = self.attention(values, p, step)?;
                objects_only(a)?;
                let w = (0..n)
                    .map(|i| clamp01((0..n).map(|j| a.weights[j] * clamp01(rep.s.get(i, j) / OCCLUSION_THRESHOLD)).sum()))
                    .collect();
                att(Domain::Objects, w)
            }
            Op::RelateOccluded => {
                let a = self.attention(values, p, step)?;
                let off = self.s_row_offset(a.domain);
                let w = (0..n)
                    .map(|j| {
                        clamp01(
                            a.weights
                                .iter()
                                .enumerate()
                                .map(|(e, &w)| w * clamp01(rep.s.get(off + e, j) / OCCLUSION_THRESHOLD))
                                .sum(),
                        )
                    })
                    .collect();
                att(Domain::Objects, w)
            }
            Op::RelatePartOccluded => {
                let a = self.attention(values, p, step)?;
                objects_only(a)?;
                let w = (0..rep.n_parts())
                    .map(|i| {
                        clamp01((0..n).map(|j| a.weights[j] * clamp01(rep.s.get(n + i, j) / OCCLUSION_THRESHOLD)).sum())
                    })
                    .collect();
                att(Domain::Parts, w)
            }
        }))
    }
}

/// Runs `program` over `rep`. A `unique` with no attention ends execution
/// with the no-referent answer.
pub fn execute(program: &Program, rep: &SceneRepresentation) -> Result<Execution, ExecError> {
    let exec = Exec { rep };
    let mut values: Vec<Value> = Vec::with_capacity(program.len());
    let mut trace = Vec::with_capacity(program.len());
    let mut ambiguous = false;
    for (step, p) in program.iter().enumerate() {
        if p.inputs.iter().any(|&i| i >= step) {
            return Err(type_err(step, "inputs must refer to earlier ops"));
        }
        let mut t = TraceStep {
            op: p.op,
            attention: None,
            ambiguous: false,
        };
        let Some(v) = exec.step(&values, p, step, &mut t)? else {
            trace.push(t);
            return Ok(Execution {
                distribution: AnswerDistribution::no_referent(),
                ambiguous: true,
                trace,
            });
        };
        ambiguous |= t.ambiguous;
        if let Value::Att(a) = &v {
            t.attention = Some(a.clone());
        }
        trace.push(t);
        values.push(v);
    }
    match values.pop() {
        Some(Value::Answer(distribution)) => Ok(Execution {
            distribution,
            ambiguous,
            trace,
        }),
        _ => Err(type_err(program.len().saturating_sub(1), "program does not end in an answer")),
    }
}
