//! Deterministic set-semantics execution over ground-truth facts, and the
//! well-posedness and no-redundancy checks built on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vqa3d_core::{azimuth_difference, Category, Direction};

use crate::facts::SceneFacts;
use crate::program::{without_op, Op, Program, ProgramOp};

/// Total occlusion score at which an entity counts as occluded.
pub const OCCLUSION_THRESHOLD: f64 = 0.05;
/// Occlusion scores in `[lo, hi)` are too close to the threshold to ask about.
pub const OCCLUSION_AMBIGUOUS: (f64, f64) = (0.01, 0.10);
/// Azimuths closer than this to a direction or relation boundary are too
/// ambiguous to ask about, in degrees.
pub const ANGLE_MARGIN_DEG: f64 = 7.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Objects,
    Parts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Set { domain: Domain, members: Vec<usize> },
    Answer(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("ill-posed: unique at step {step} received {count} entities")]
    IllPosed { step: usize, count: usize },
    #[error("type error at step {step}: {message}")]
    Type { step: usize, message: String },
    #[error("unknown value `{value}` for {op}")]
    Vocabulary { op: Op, value: String },
}

/// Kind of pairwise pose relation, by azimuth difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseRelation {
    Same,
    Vertical,
    Opposite,
}

impl PoseRelation {
    pub fn of(op: Op) -> Option<PoseRelation> {
        match op {
            Op::SamePose => Some(PoseRelation::Same),
            Op::VerticalPose => Some(PoseRelation::Vertical),
            Op::OppositePose => Some(PoseRelation::Opposite),
            _ => None,
        }
    }

    /// Class of an azimuth difference in radians; boundaries go to the
    /// larger-difference class.
    pub fn classify(delta: f64) -> PoseRelation {
        let d = delta.to_degrees();
        if d < 45.0 {
            PoseRelation::Same
        } else if d < 135.0 {
            PoseRelation::Vertical
        } else {
            PoseRelation::Opposite
        }
    }

    fn near_boundary(delta: f64) -> bool {
        let d = delta.to_degrees();
        (d - 45.0).abs() < ANGLE_MARGIN_DEG || (d - 135.0).abs() < ANGLE_MARGIN_DEG
    }
}

fn ambiguous_score(v: f64) -> bool {
    (OCCLUSION_AMBIGUOUS.0..OCCLUSION_AMBIGUOUS.1).contains(&v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub values: Vec<Value>,
    pub answer: String,
    /// Some decision along the way sat within an ambiguity margin.
    pub fragile: bool,
    /// Entities singled out by `unique`, in program order.
    pub referents: Vec<(Domain, usize)>,
}

pub fn object_matches(facts: &SceneFacts, i: usize, op: Op, value: &str) -> Result<bool, ExecError> {
    let o = &facts.objects[i];
    let vocab_err = || ExecError::Vocabulary {
        op,
        value: value.to_string(),
    };
    Ok(match op {
        Op::FilterColor => {
            vqa3d_core::Color::from_name(value).ok_or_else(vocab_err)?;
            o.color.name() == value
        }
        Op::FilterMaterial => {
            vqa3d_core::Material::from_name(value).ok_or_else(vocab_err)?;
            o.material.name() == value
        }
        Op::FilterSize => {
            vqa3d_core::Size::from_name(value).ok_or_else(vocab_err)?;
            o.size.name() == value
        }
        Op::FilterShape => {
            if vqa3d_core::Subtype::from_name(value).is_none() && Category::from_name(value).is_none() {
                return Err(vocab_err());
            }
            o.subtype.name() == value || o.subtype.category().name() == value
        }
        Op::FilterPose => {
            let d = Direction::from_name(value).ok_or_else(vocab_err)?;
            Direction::from_azimuth(o.azimuth) == d
        }
        _ => false,
    })
}

pub fn part_matches(facts: &SceneFacts, j: usize, op: Op, value: &str) -> Result<bool, ExecError> {
    let p = &facts.parts[j];
    let vocab_err = || ExecError::Vocabulary {
        op,
        value: value.to_string(),
    };
    Ok(match op {
        Op::FilterColor => {
            vqa3d_core::Color::from_name(value).ok_or_else(vocab_err)?;
            p.color.name() == value
        }
        Op::FilterMaterial => {
            vqa3d_core::Material::from_name(value).ok_or_else(vocab_err)?;
            p.material.name() == value
        }
        Op::FilterShape => {
            vqa3d_core::vocab::part_index(value).ok_or_else(vocab_err)?;
            p.name == value
        }
        _ => false,
    })
}

struct Machine<'a> {
    facts: &'a SceneFacts,
    /// Decision `(step, entity)` to invert.
    flip: Option<(usize, usize)>,
    /// Decisions that sat inside an ambiguity margin.
    borderline: Vec<(usize, usize)>,
    /// An answer value itself sat inside a margin.
    fragile: bool,
    referents: Vec<(Domain, usize)>,
}

impl Machine<'_> {
    fn decide(&mut self, step: usize, e: usize, hit: bool, borderline: bool) -> bool {
        if borderline {
            self.borderline.push((step, e));
        }
        hit ^ (self.flip == Some((step, e)))
    }

    fn set<'v>(&self, values: &'v [Value], p: &ProgramOp, step: usize, k: usize) -> Result<(Domain, &'v [usize]), ExecError> {
        let idx = *p.inputs.get(k).ok_or_else(|| ExecError::Type {
            step,
            message: format!("{} is missing input {k}", p.op),
        })?;
        match values.get(idx) {
            Some(Value::Set { domain, members }) => Ok((*domain, members)),
            _ => Err(ExecError::Type {
                step,
                message: format!("{} expects an entity set", p.op),
            }),
        }
    }

    fn single(&self, values: &[Value], p: &ProgramOp, step: usize) -> Result<(Domain, usize), ExecError> {
        let (d, m) = self.set(values, p, step, 0)?;
        if m.len() != 1 {
            return Err(ExecError::Type {
                step,
                message: format!("{} expects a single entity", p.op),
            });
        }
        Ok((d, m[0]))
    }

    fn objects_only(d: Domain, p: &ProgramOp, step: usize) -> Result<(), ExecError> {
        if d != Domain::Objects {
            return Err(ExecError::Type {
                step,
                message: format!("{} is defined on objects only", p.op),
            });
        }
        Ok(())
    }

    fn row(&self, d: Domain, e: usize) -> usize {
        match d {
            Domain::Objects => e,
            Domain::Parts => self.facts.n_objects() + e,
        }
    }

    fn step(&mut self, values: &[Value], p: &ProgramOp, step: usize) -> Result<Value, ExecError> {
        let facts = self.facts;
        let n = facts.n_objects();
        let set = |domain, members| Value::Set { domain, members };
        Ok(match p.op {
            Op::Scene => set(Domain::Objects, (0..n).collect()),
            Op::FilterColor | Op::FilterMaterial | Op::FilterSize | Op::FilterShape | Op::FilterPose => {
                let (d, m) = self.set(values, p, step, 0)?;
                let value = p.arg.as_deref().ok_or_else(|| ExecError::Type {
                    step,
                    message: format!("{} needs an argument", p.op),
                })?;
                if d == Domain::Parts && matches!(p.op, Op::FilterSize | Op::FilterPose) {
                    return Err(ExecError::Type {
                        step,
                        message: format!("{} is not defined on parts", p.op),
                    });
                }
                let mut out = Vec::new();
                for &e in m {
                    let near = p.op == Op::FilterPose
                        && Direction::boundary_margin(facts.objects[e].azimuth).to_degrees() < ANGLE_MARGIN_DEG;
                    let hit = match d {
                        Domain::Objects => object_matches(facts, e, p.op, value)?,
                        Domain::Parts => part_matches(facts, e, p.op, value)?,
                    };
                    if self.decide(step, e, hit, near) {
                        out.push(e);
                    }
                }
                set(d, out)
            }
            Op::FilterOccludee => {
                let (d, m) = self.set(values, p, step, 0)?;
                let mut out = Vec::new();
                for &e in m {
                    let total = facts.occlusion_sum(self.row(d, e));
                    if self.decide(step, e, total >= OCCLUSION_THRESHOLD, ambiguous_score(total)) {
                        out.push(e);
                    }
                }
                set(d, out)
            }
            Op::Unique => {
                let (d, m) = self.set(values, p, step, 0)?;
                if m.len() != 1 {
                    return Err(ExecError::IllPosed { step, count: m.len() });
                }
                self.referents.push((d, m[0]));
                set(d, m.to_vec())
            }
            Op::QueryColor | Op::QueryMaterial | Op::QuerySize | Op::QueryShape | Op::QueryPose => {
                let (d, e) = self.single(values, p, step)?;
                let answer = match (d, p.op) {
                    (Domain::Objects, Op::QueryColor) => facts.objects[e].color.name().to_string(),
                    (Domain::Objects, Op::QueryMaterial) => facts.objects[e].material.name().to_string(),
                    (Domain::Objects, Op::QuerySize) => facts.objects[e].size.name().to_string(),
                    (Domain::Objects, Op::QueryShape) => facts.objects[e].subtype.name().to_string(),
                    (Domain::Objects, Op::QueryPose) => {
                        let az = facts.objects[e].azimuth;
                        if Direction::boundary_margin(az).to_degrees() < ANGLE_MARGIN_DEG {
                            self.fragile = true;
                        }
                        Direction::from_azimuth(az).name().to_string()
                    }
                    (Domain::Parts, Op::QueryColor) => facts.parts[e].color.name().to_string(),
                    (Domain::Parts, Op::QueryMaterial) => facts.parts[e].material.name().to_string(),
                    (Domain::Parts, Op::QueryShape) => facts.parts[e].name.clone(),
                    _ => {
                        return Err(ExecError::Type {
                            step,
                            message: format!("{} is not defined on parts", p.op),
                        })
                    }
                };
                Value::Answer(answer)
            }
            Op::Count => {
                let (_, m) = self.set(values, p, step, 0)?;
                Value::Answer(m.len().to_string())
            }
            Op::Exist => {
                let (_, m) = self.set(values, p, step, 0)?;
                Value::Answer(if m.is_empty() { "no" } else { "yes" }.to_string())
            }
            Op::ObjectToPart => {
                let (d, m) = self.set(values, p, step, 0)?;
                Self::objects_only(d, p, step)?;
                let out = (0..facts.parts.len()).filter(|&j| m.contains(&facts.parts[j].owner)).collect();
                set(Domain::Parts, out)
            }
            Op::PartToObject => {
                let (d, m) = self.set(values, p, step, 0)?;
                if d != Domain::Parts {
                    return Err(ExecError::Type {
                        step,
                        message: "part_to_object expects parts".into(),
                    });
                }
                let mut out: Vec<usize> = m.iter().map(|&j| facts.parts[j].owner).collect();
                out.sort_unstable();
                out.dedup();
                set(Domain::Objects, out)
            }
            Op::SamePose | Op::OppositePose | Op::VerticalPose => {
                let (d, r) = self.single(values, p, step)?;
                Self::objects_only(d, p, step)?;
                let want = PoseRelation::of(p.op).unwrap();
                let mut out = Vec::new();
                for k in (0..n).filter(|&k| k != r) {
                    let delta = azimuth_difference(facts.objects[k].azimuth, facts.objects[r].azimuth);
                    if self.decide(step, k, PoseRelation::classify(delta) == want, PoseRelation::near_boundary(delta)) {
                        out.push(k);
                    }
                }
                set(Domain::Objects, out)
            }
            Op::RelateOccluding => {
                let (d, m) = self.set(values, p, step, 0)?;
                Self::objects_only(d, p, step)?;
                let mut out = Vec::new();
                for i in 0..n {
                    let mut hit = false;
                    let mut near = false;
                    for &j in m {
                        let v = facts.s[i][j];
                        near |= ambiguous_score(v);
                        hit |= v >= OCCLUSION_THRESHOLD;
                    }
                    if self.decide(step, i, hit, near) {
                        out.push(i);
                    }
                }
                set(Domain::Objects, out)
            }
            Op::RelateOccluded => {
                let (d, m) = self.set(values, p, step, 0)?;
                let mut out = Vec::new();
                for j in 0..n {
                    let mut hit = false;
                    let mut near = false;
                    for &e in m {
                        let v = facts.s[self.row(d, e)][j];
                        near |= ambiguous_score(v);
                        hit |= v >= OCCLUSION_THRESHOLD;
                    }
                    if self.decide(step, j, hit, near) {
                        out.push(j);
                    }
                }
                set(Domain::Objects, out)
            }
            Op::RelatePartOccluded => {
                let (d, m) = self.set(values, p, step, 0)?;
                Self::objects_only(d, p, step)?;
                let mut out = Vec::new();
                for i in 0..facts.parts.len() {
                    let mut hit = false;
                    let mut near = false;
                    for &j in m {
                        let v = facts.s[n + i][j];
                        near |= ambiguous_score(v);
                        hit |= v >= OCCLUSION_THRESHOLD;
                    }
                    if self.decide(step, i, hit, near) {
                        out.push(i);
                    }
                }
                set(Domain::Parts, out)
            }
        })
    }
}

fn run_with<'a>(program: &Program, facts: &'a SceneFacts, flip: Option<(usize, usize)>) -> Result<(Machine<'a>, Vec<Value>, String), ExecError> {
    let mut m = Machine {
        facts,
        flip,
        borderline: Vec::new(),
        fragile: false,
        referents: Vec::new(),
    };
    let mut values = Vec::with_capacity(program.len());
    for (step, p) in program.iter().enumerate() {
        if p.inputs.iter().any(|&i| i >= step) {
            return Err(ExecError::Type {
                step,
                message: "inputs must refer to earlier ops".into(),
            });
        }
        let v = m.step(&values, p, step)?;
        values.push(v);
    }
    let answer = match values.last() {
        Some(Value::Answer(a)) => a.clone(),
        _ => {
            return Err(ExecError::Type {
                step: program.len().saturating_sub(1),
                message: "program does not end in an answer".into(),
            })
        }
    };
    Ok((m, values, answer))
}

/// Executes a program, recording every intermediate value. The run is
/// fragile when inverting any single borderline decision changes the answer
/// or breaks a `unique`.
pub fn oracle_run(program: &Program, facts: &SceneFacts) -> Result<OracleRun, ExecError> {
    let (m, values, answer) = run_with(program, facts, None)?;
    let fragile = m.fragile
        || m.borderline.iter().any(|&d| match run_with(program, facts, Some(d)) {
            Ok((_, _, a)) => a != answer,
            Err(_) => true,
        });
    Ok(OracleRun {
        values,
        answer,
        fragile,
        referents: m.referents,
    })
}

pub fn oracle_execute(program: &Program, facts: &SceneFacts) -> Result<String, ExecError> {
    oracle_run(program, facts).map(|r| r.answer)
}

/// Every `unique` sees exactly one entity and the answer is defined.
pub fn check_well_posed(program: &Program, facts: &SceneFacts) -> bool {
    oracle_run(program, facts).is_ok()
}

/// Removing any single valued filter either breaks a `unique` or changes
/// the answer. For programs ending in `exist` or `count` a changed input set
/// to that final op also counts, since a "yes" survives any widening of it.
pub fn check_no_redundancy(program: &Program, facts: &SceneFacts) -> bool {
    let Ok(base) = oracle_run(program, facts) else {
        return false;
    };
    let aggregate = matches!(program.last().map(|p| p.op), Some(Op::Exist | Op::Count));
    let final_set = |run: &OracleRun| run.values.len().checked_sub(2).map(|i| run.values[i].clone());
    program.iter().enumerate().filter(|(_, p)| p.op.is_valued_filter()).all(|(i, _)| {
        match oracle_run(&without_op(program, i), facts) {
            Ok(r) => r.answer != base.answer || (aggregate && final_set(&r) != final_set(&base)),
            Err(_) => true,
        }
    })
}
