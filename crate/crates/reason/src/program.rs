//! Functional programs, questions and their serialized form.

use serde::{Deserialize, Serialize};
use std::fmt;

use vqa3d_core::AttributeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Scene,
    FilterColor,
    FilterMaterial,
    FilterSize,
    FilterShape,
    FilterPose,
    FilterOccludee,
    Unique,
    QueryColor,
    QueryMaterial,
    QuerySize,
    QueryShape,
    QueryPose,
    Count,
    Exist,
    PartToObject,
    ObjectToPart,
    SamePose,
    OppositePose,
    VerticalPose,
    RelateOccluding,
    RelateOccluded,
    RelatePartOccluded,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Scene => "scene",
            Op::FilterColor => "filter_color",
            Op::FilterMaterial => "filter_material",
            Op::FilterSize => "filter_size",
            Op::FilterShape => "filter_shape",
            Op::FilterPose => "filter_pose",
            Op::FilterOccludee => "filter_occludee",
            Op::Unique => "unique",
            Op::QueryColor => "query_color",
            Op::QueryMaterial => "query_material",
            Op::QuerySize => "query_size",
            Op::QueryShape => "query_shape",
            Op::QueryPose => "query_pose",
            Op::Count => "count",
            Op::Exist => "exist",
            Op::PartToObject => "part_to_object",
            Op::ObjectToPart => "object_to_part",
            Op::SamePose => "same_pose",
            Op::OppositePose => "opposite_pose",
            Op::VerticalPose => "vertical_pose",
            Op::RelateOccluding => "relate_occluding",
            Op::RelateOccluded => "relate_occluded",
            Op::RelatePartOccluded => "relate_part_occluded",
        }
    }

    pub fn filter(kind: AttributeKind) -> Op {
        match kind {
            AttributeKind::Color => Op::FilterColor,
            AttributeKind::Material => Op::FilterMaterial,
            AttributeKind::Size => Op::FilterSize,
            AttributeKind::Shape => Op::FilterShape,
        }
    }

    pub fn query(kind: AttributeKind) -> Op {
        match kind {
            AttributeKind::Color => Op::QueryColor,
            AttributeKind::Material => Op::QueryMaterial,
            AttributeKind::Size => Op::QuerySize,
            AttributeKind::Shape => Op::QueryShape,
        }
    }

    /// Attribute read by an attribute filter or query.
    pub fn attribute(self) -> Option<AttributeKind> {
        match self {
            Op::FilterColor | Op::QueryColor => Some(AttributeKind::Color),
            Op::FilterMaterial | Op::QueryMaterial => Some(AttributeKind::Material),
            Op::FilterSize | Op::QuerySize => Some(AttributeKind::Size),
            Op::FilterShape | Op::QueryShape => Some(AttributeKind::Shape),
            _ => None,
        }
    }

    /// Filters that take a value argument.
    pub fn is_valued_filter(self) -> bool {
        matches!(
            self,
            Op::FilterColor | Op::FilterMaterial | Op::FilterSize | Op::FilterShape | Op::FilterPose
        )
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProgramOp {
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<String>,
    /// Indices of the ops whose outputs feed this one.
    pub inputs: Vec<usize>,
}

/// Ops in topological order; the last op produces the answer.
pub type Program = Vec<ProgramOp>;

/// Builds a linear program, each op reading the previous one.
pub fn chain(ops: Vec<(Op, Option<String>)>) -> Program {
    ops.into_iter()
        .enumerate()
        .map(|(i, (op, arg))| ProgramOp {
            op,
            arg,
            inputs: if i == 0 { Vec::new() } else { vec![i - 1] },
        })
        .collect()
}

/// Program with op `drop` removed and its consumers rewired to its input.
pub fn without_op(program: &Program, drop: usize) -> Program {
    let Some(&source) = program[drop].inputs.first() else {
        return program.clone();
    };
    let remap = |i: usize| -> usize {
        let i = if i == drop { source } else { i };
        if i > drop {
            i - 1
        } else {
            i
        }
    };
    program
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != drop)
        .map(|(_, p)| ProgramOp {
            op: p.op,
            arg: p.arg.clone(),
            inputs: p.inputs.iter().map(|&i| remap(i)).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "part")]
    Part,
    #[serde(rename = "pose")]
    Pose,
    #[serde(rename = "occlusion")]
    Occlusion,
    #[serde(rename = "occlusion+part")]
    OcclusionPart,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Part, Family::Pose, Family::Occlusion, Family::OcclusionPart];

    pub fn name(self) -> &'static str {
        match self {
            Family::Part => "part",
            Family::Pose => "pose",
            Family::Occlusion => "occlusion",
            Family::OcclusionPart => "occlusion+part",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMetadata {
    /// Smallest occlusion ratio among objects referenced by the program.
    pub min_occlusion: f64,
    /// Visible pixel area of the largest referenced part.
    pub max_part_area: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub scene: u64,
    pub template: String,
    pub text: String,
    pub program: Program,
    pub answer: String,
    pub family: Family,
    pub metadata: QuestionMetadata,
}
