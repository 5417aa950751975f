//! Question templates, their instantiation against a scene, and the
//! per-scene generation loop.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use vqa3d_core::{AttributeKind, Direction};

use crate::facts::SceneFacts;
use crate::oracle::{
    check_no_redundancy, object_matches, oracle_run, part_matches, Domain, PoseRelation, OCCLUSION_THRESHOLD,
};
use crate::program::{chain, Family, Op, Program, Question, QuestionMetadata};

/// Questions generated per scene and family when the scene allows it.
pub const QUESTIONS_PER_SCENE: (usize, usize) = (8, 10);
/// Occlusion score a template needs to pick a positive relation; keeps
/// sampled positives clear of the ambiguity band.
const CLEAR_OCCLUSION: f64 = 0.10;
/// Visible pixels a part needs before its color or material is used.
pub const MIN_PART_PIXELS: usize = 5;
const MAX_ATTEMPTS: usize = 3000;

const OBJECT_ATTRS: [AttributeKind; 4] = [
    AttributeKind::Shape,
    AttributeKind::Color,
    AttributeKind::Material,
    AttributeKind::Size,
];
const PART_ATTRS: [AttributeKind; 3] = [AttributeKind::Shape, AttributeKind::Color, AttributeKind::Material];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    PartOfObject,
    ObjectWithPart,
    PartSameObject,
    QueryPose,
    FacingDirection,
    PoseRelation(Op),
    OccludedObject,
    OccludedBy,
    Occludes,
    PartOccludedYesNo,
    WhichPartOccluded,
    ObjectWithOccludedPart,
    PartOfOccludedObject,
    PartOfObjectWithOccludedPart,
    PartOccludedByYesNo,
    ObjectWhosePartOccludedBy,
    PartOfObjectOccludedBy,
    PartSameObjectOccludedBy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub family: Family,
    pub kind: Kind,
    /// Queried attribute, if the answer is an attribute value.
    pub attr: Option<AttributeKind>,
}

fn slug(kind: Kind) -> &'static str {
    match kind {
        Kind::PartOfObject => "part_of_object",
        Kind::ObjectWithPart => "object_with_part",
        Kind::PartSameObject => "part_same_object",
        Kind::QueryPose => "query_pose",
        Kind::FacingDirection => "facing_direction",
        Kind::PoseRelation(Op::SamePose) => "same_pose",
        Kind::PoseRelation(Op::OppositePose) => "opposite_pose",
        Kind::PoseRelation(_) => "vertical_pose",
        Kind::OccludedObject => "occluded_object",
        Kind::OccludedBy => "occluded_by",
        Kind::Occludes => "occludes",
        Kind::PartOccludedYesNo => "part_occluded",
        Kind::WhichPartOccluded => "which_part_occluded",
        Kind::ObjectWithOccludedPart => "object_with_occluded_part",
        Kind::PartOfOccludedObject => "part_of_occluded_object",
        Kind::PartOfObjectWithOccludedPart => "part_of_object_with_occluded_part",
        Kind::PartOccludedByYesNo => "part_occluded_by",
        Kind::ObjectWhosePartOccludedBy => "object_whose_part_occluded_by",
        Kind::PartOfObjectOccludedBy => "part_of_object_occluded_by",
        Kind::PartSameObjectOccludedBy => "part_same_object_occluded_by",
    }
}

fn template(family: Family, kind: Kind, attr: Option<AttributeKind>) -> Template {
    let id = match attr {
        Some(a) => format!("{}.{}.{}", family.name(), slug(kind), a.name()),
        None => format!("{}.{}", family.name(), slug(kind)),
    };
    Template { id, family, kind, attr }
}

/// The full template bank.
pub fn all_templates() -> Vec<Template> {
    let mut out = Vec::new();
    let per_attr = |out: &mut Vec<Template>, family, kind, attrs: &[AttributeKind]| {
        for &a in attrs {
            out.push(template(family, kind, Some(a)));
        }
    };
    per_attr(&mut out, Family::Part, Kind::PartOfObject, &PART_ATTRS);
    per_attr(&mut out, Family::Part, Kind::ObjectWithPart, &PART_ATTRS);
    per_attr(&mut out, Family::Part, Kind::PartSameObject, &PART_ATTRS);

    out.push(template(Family::Pose, Kind::QueryPose, None));
    per_attr(&mut out, Family::Pose, Kind::FacingDirection, &OBJECT_ATTRS);
    for rel in [Op::SamePose, Op::OppositePose, Op::VerticalPose] {
        per_attr(&mut out, Family::Pose, Kind::PoseRelation(rel), &OBJECT_ATTRS);
    }

    per_attr(&mut out, Family::Occlusion, Kind::OccludedObject, &OBJECT_ATTRS);
    per_attr(&mut out, Family::Occlusion, Kind::OccludedBy, &OBJECT_ATTRS);
    per_attr(&mut out, Family::Occlusion, Kind::Occludes, &OBJECT_ATTRS);

    let op = Family::OcclusionPart;
    out.push(template(op, Kind::PartOccludedYesNo, None));
    out.push(template(op, Kind::WhichPartOccluded, None));
    per_attr(&mut out, op, Kind::ObjectWithOccludedPart, &OBJECT_ATTRS);
    per_attr(&mut out, op, Kind::PartOfOccludedObject, &PART_ATTRS);
    per_attr(&mut out, op, Kind::PartOfObjectWithOccludedPart, &PART_ATTRS);
    out.push(template(op, Kind::PartOccludedByYesNo, None));
    per_attr(&mut out, op, Kind::ObjectWhosePartOccludedBy, &OBJECT_ATTRS);
    per_attr(&mut out, op, Kind::PartOfObjectOccludedBy, &PART_ATTRS);
    per_attr(&mut out, op, Kind::PartSameObjectOccludedBy, &PART_ATTRS);
    out
}

pub fn templates_for(family: Family) -> Vec<Template> {
    all_templates().into_iter().filter(|t| t.family == family).collect()
}

type Clause = (Op, String);

fn object_clauses(facts: &SceneFacts, i: usize) -> Vec<Clause> {
    let o = &facts.objects[i];
    vec![
        (Op::FilterSize, o.size.name().to_string()),
        (Op::FilterColor, o.color.name().to_string()),
        (Op::FilterMaterial, o.material.name().to_string()),
        (Op::FilterShape, o.subtype.category().name().to_string()),
        (Op::FilterShape, o.subtype.name().to_string()),
    ]
}

fn part_clauses(facts: &SceneFacts, j: usize) -> Vec<Clause> {
    let p = &facts.parts[j];
    let mut out = vec![(Op::FilterShape, p.name.clone())];
    if p.visible_area >= MIN_PART_PIXELS {
        out.push((Op::FilterColor, p.color.name().to_string()));
        out.push((Op::FilterMaterial, p.material.name().to_string()));
    }
    out
}

fn clause_rank(op: Op) -> usize {
    match op {
        Op::FilterSize => 0,
        Op::FilterColor => 1,
        Op::FilterMaterial => 2,
        Op::FilterShape => 3,
        _ => 4,
    }
}

fn satisfies(facts: &SceneFacts, domain: Domain, e: usize, clauses: &[Clause]) -> bool {
    clauses.iter().all(|(op, v)| {
        match domain {
            Domain::Objects => object_matches(facts, e, *op, v),
            Domain::Parts => part_matches(facts, e, *op, v),
        }
        .unwrap_or(false)
    })
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..n {
            cur.push(i);
            if rec(i + 1, n, k, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f)
}

/// Smallest set of clauses, on top of `required`, that singles out `target`
/// among `context`. Ties between equally small sets are broken at random.
fn describe(
    facts: &SceneFacts,
    domain: Domain,
    context: &[usize],
    target: usize,
    exclude: Option<AttributeKind>,
    required: Vec<Clause>,
    rng: &mut impl Rng,
) -> Option<Vec<Clause>> {
    if !context.contains(&target) {
        return None;
    }
    let own = match domain {
        Domain::Objects => object_clauses(facts, target),
        Domain::Parts => part_clauses(facts, target),
    };
    let mut pool: Vec<Clause> = own
        .into_iter()
        .filter(|(op, _)| op.attribute() != exclude || exclude.is_none())
        .filter(|c| !required.iter().any(|r| r.0 == c.0))
        .collect();
    pool.shuffle(rng);
    let mut found = None;
    for k in 0..=pool.len() {
        let hit = combinations(pool.len(), k, &mut |idx| {
            let mut clauses = required.clone();
            clauses.extend(idx.iter().map(|&i| pool[i].clone()));
            let matching = context.iter().filter(|&&e| satisfies(facts, domain, e, &clauses)).count();
            if matching == 1 {
                found = Some(clauses);
                true
            } else {
                false
            }
        });
        if hit {
            break;
        }
    }
    let mut clauses = found?;
    clauses.sort_by_key(|c| clause_rank(c.0));
    Some(clauses)
}

fn noun_phrase(clauses: &[Clause], noun: &str) -> String {
    let mut words: Vec<&str> = clauses
        .iter()
        .filter(|c| c.0 != Op::FilterShape && c.0 != Op::FilterPose)
        .map(|c| c.1.as_str())
        .collect();
    words.push(clauses.iter().find(|c| c.0 == Op::FilterShape).map_or(noun, |c| c.1.as_str()));
    words.join(" ")
}

fn object_phrase(clauses: &[Clause]) -> String {
    noun_phrase(clauses, "object")
}

fn part_phrase(clauses: &[Clause]) -> String {
    noun_phrase(clauses, "part")
}

fn attr_word(attr: AttributeKind, domain: Domain) -> &'static str {
    match (attr, domain) {
        (AttributeKind::Shape, Domain::Parts) => "name",
        (a, _) => a.name(),
    }
}

fn filters(clauses: &[Clause]) -> Vec<(Op, Option<String>)> {
    clauses.iter().map(|(op, v)| (*op, Some(v.clone()))).collect()
}

fn op(o: Op) -> (Op, Option<String>) {
    (o, None)
}

fn shape(name: &str) -> (Op, Option<String>) {
    (Op::FilterShape, Some(name.to_string()))
}

struct Ctx<'a, R> {
    facts: &'a SceneFacts,
    rng: &'a mut R,
}

impl<R: Rng> Ctx<'_, R> {
    fn n(&self) -> usize {
        self.facts.n_objects()
    }

    fn all_objects(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }

    fn all_parts(&self) -> Vec<usize> {
        (0..self.facts.parts.len()).collect()
    }

    fn pick(&mut self, items: &[usize]) -> Option<usize> {
        items.choose(self.rng).copied()
    }

    fn pick_pair(&mut self, pairs: &[(usize, usize)]) -> Option<(usize, usize)> {
        pairs.choose(self.rng).copied()
    }

    fn s(&self, row: usize, col: usize) -> f64 {
        self.facts.s[row][col]
    }

    fn part_row(&self, j: usize) -> usize {
        self.n() + j
    }

    fn occluded_objects(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.facts.occlusion_sum(i) >= OCCLUSION_THRESHOLD).collect()
    }

    fn clearly_occluded_objects(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.facts.occlusion_sum(i) >= CLEAR_OCCLUSION).collect()
    }

    fn part_occluded(&self, j: usize) -> bool {
        self.facts.occlusion_sum(self.part_row(j)) >= OCCLUSION_THRESHOLD
    }

    fn visible(&self, j: usize) -> bool {
        self.facts.parts[j].visible_area >= MIN_PART_PIXELS
    }

    fn parts_of(&self, o: usize) -> Vec<usize> {
        self.facts.parts_of(o).collect()
    }

    fn describe_object(&mut self, context: &[usize], target: usize, exclude: Option<AttributeKind>) -> Option<Vec<Clause>> {
        describe(self.facts, Domain::Objects, context, target, exclude, Vec::new(), self.rng)
    }

    /// Part description that names the part unless the name is queried.
    fn describe_part(&mut self, context: &[usize], target: usize, exclude: Option<AttributeKind>) -> Option<Vec<Clause>> {
        let required = if exclude == Some(AttributeKind::Shape) {
            Vec::new()
        } else {
            vec![(Op::FilterShape, self.facts.parts[target].name.clone())]
        };
        describe(self.facts, Domain::Parts, context, target, exclude, required, self.rng)
    }

    /// Objects that own a part named `name` passing `keep`.
    fn owners_with(&self, name: &str, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.facts.parts.len())
            .filter(|&j| self.facts.parts[j].name == name && keep(j))
            .map(|j| self.facts.parts[j].owner)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn relation_set(&self, rel: Op, r: usize) -> Vec<usize> {
        let want = PoseRelation::of(rel).expect("pose relation");
        (0..self.n())
            .filter(|&k| {
                k != r
                    && PoseRelation::classify(vqa3d_core::azimuth_difference(
                        self.facts.objects[k].azimuth,
                        self.facts.objects[r].azimuth,
                    )) == want
            })
            .collect()
    }

    fn occluders_of(&self, row: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.s(row, j) >= OCCLUSION_THRESHOLD).collect()
    }

    fn occludees_of(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.s(i, j) >= OCCLUSION_THRESHOLD).collect()
    }

    fn instantiate(&mut self, t: &Template) -> Option<(Program, String)> {
        let attr = t.attr;
        let q = |a: AttributeKind| op(Op::query(a));
        let mut ops: Vec<(Op, Option<String>)> = vec![op(Op::Scene)];
        let text = match t.kind {
            Kind::PartOfObject => {
                let a = attr?;
                let j = self.pick(&self.all_parts().into_iter().filter(|&j| self.visible(j)).collect::<Vec<_>>())?;
                let o = self.facts.parts[j].owner;
                let od = self.describe_object(&self.all_objects(), o, None)?;
                let pd = self.describe_part(&self.parts_of(o), j, Some(a))?;
                ops.extend(filters(&od));
                ops.extend([op(Op::Unique), op(Op::ObjectToPart)]);
                ops.extend(filters(&pd));
                ops.extend([op(Op::Unique), q(a)]);
                format!(
                    "What is the {} of the {} of the {}?",
                    attr_word(a, Domain::Parts),
                    part_phrase(&pd),
                    object_phrase(&od)
                )
            }
            Kind::ObjectWithPart => {
                let a = attr?;
                let j = self.pick(&self.all_parts())?;
                let name = self.facts.parts[j].name.clone();
                let o = self.facts.parts[j].owner;
                let owners = self.owners_with(&name, |_| true);
                let od = self.describe_object(&owners, o, Some(a))?;
                ops.extend([op(Op::ObjectToPart), shape(&name), op(Op::PartToObject)]);
                ops.extend(filters(&od));
                ops.extend([op(Op::Unique), q(a)]);
                format!("What is the {} of the {} that has a {}?", a.name(), object_phrase(&od), name)
            }
            Kind::PartSameObject => {
                let a = attr?;
                let j1 = self.pick(&self.all_parts().into_iter().filter(|&j| self.visible(j)).collect::<Vec<_>>())?;
                let o = self.facts.parts[j1].owner;
                let siblings: Vec<usize> = self.parts_of(o).into_iter().filter(|&j| j != j1).collect();
                let j2 = self.pick(&siblings)?;
                let d2 = self.describe_part(&self.all_parts(), j2, None)?;
                let d1 = self.describe_part(&self.parts_of(o), j1, Some(a))?;
                ops.push(op(Op::ObjectToPart));
                ops.extend(filters(&d2));
                ops.extend([op(Op::Unique), op(Op::PartToObject), op(Op::ObjectToPart)]);
                ops.extend(filters(&d1));
                ops.extend([op(Op::Unique), q(a)]);
                format!(
                    "What is the {} of the {} that belongs to the same object as the {}?",
                    attr_word(a, Domain::Parts),
                    part_phrase(&d1),
                    part_phrase(&d2)
                )
            }
            Kind::QueryPose => {
                let o = self.pick(&self.all_objects())?;
                let od = self.describe_object(&self.all_objects(), o, None)?;
                ops.extend(filters(&od));
                ops.extend([op(Op::Unique), op(Op::QueryPose)]);
                format!("Which direction is the {} facing?", object_phrase(&od))
            }
            Kind::FacingDirection => {
                let a = attr?;
                let o = self.pick(&self.all_objects())?;
                let dir = Direction::from_azimuth(self.facts.objects[o].azimuth).name().to_string();
                let od = describe(
                    self.facts,
                    Domain::Objects,
                    &self.all_objects(),
                    o,
                    Some(a),
                    vec![(Op::FilterPose, dir.clone())],
                    self.rng,
                )?;
                ops.extend(filters(&od));
                ops.extend([op(Op::Unique), q(a)]);
                format!("What is the {} of the {} which faces {}?", a.name(), object_phrase(&od), dir)
            }
            Kind::PoseRelation(rel) => {
                let a = attr?;
                let pairs: Vec<(usize, usize)> = (0..self.n())
                    .flat_map(|r| self.relation_set(rel, r).into_iter().map(move |k| (k, r)))
                    .collect();
                let (o1, o2) = self.pick_pair(&pairs)?;
                let d2 = self.describe_object(&self.all_objects(), o2, None)?;
                let d1 = self.describe_object(&self.relation_set(rel, o2), o1, Some(a))?;
                ops.extend(filters(&d2));
                ops.extend([op(Op::Unique), op(rel)]);
                ops.extend(filters(&d1));
                ops.extend([op(Op::Unique), q(a)]);
                let how = match rel {
                    Op::SamePose => "the same direction as",
                    Op::OppositePose => "the opposite direction to",
                    _ => "a direction perpendicular to",
                };
                format!(
                    "What is the {} of the {} that faces {} the {}?",
                    a.name(),
                    object_phrase(&d1),
                    how,
                    object_phrase(&d2)
                )
            }
            Kind::OccludedObject => {
                let a = attr?;
                let o = self.pick(&self.clearly_occluded_objects())?;
                let od = self.describe_object(&self.occluded_objects(), o, Some(a))?;
                ops.extend(filters(&od));
                ops.extend([op(Op::FilterOccludee), op(Op::Unique), q(a)]);
                format!("What is the {} of the {} that is occluded?", a.name(), object_phrase(&od))
            }
            Kind::OccludedBy | Kind::Occludes => {
                let a = attr?;
                let pairs: Vec<(usize, usize)> = (0..self.n())
                    .flat_map(|i| (0..self.n()).map(move |j| (i, j)))
                    .filter(|&(i, j)| self.s(i, j) >= CLEAR_OCCLUSION)
                    .collect();
                let (occludee, occluder) = self.pick_pair(&pairs)?;
                let (o1, o2, rel, context) = if t.kind == Kind::OccludedBy {
                    (occludee, occluder, Op::RelateOccluding, self.occludees_of(occluder))
                } else {
                    (occluder, occludee, Op::RelateOccluded, self.occluders_of(occludee))
                };
                let d2 = self.describe_object(&self.all_objects(), o2, None)?;
                let d1 = self.describe_object(&context, o1, Some(a))?;
                ops.extend(filters(&d2));
                ops.extend([op(Op::Unique), op(rel)]);
                ops.extend(filters(&d1));
                ops.extend([op(Op::Unique), q(a)]);
                let verb = if t.kind == Kind::OccludedBy { "is occluded by" } else { "occludes" };
                format!(
                    "What is the {} of the {} that {} the {}?",
                    a.name(),
                    object_phrase(&d1),
                    verb,
                    object_phrase(&d2)
                )
            }
            Kind::PartOccludedYesNo => {
                let want_yes = self.rng.random_bool(0.5);
                let candidates: Vec<usize> = self
                    .all_parts()
                    .into_iter()
                    .filter(|&j| self.part_occluded(j) == want_yes)
                    .collect();
                let j = self.pick(&candidates)?;
                let o = self.facts.parts[j].owner;
                let od = self.describe_object(&self.all_objects(), o, None)?;
                let pd = self.describe_part(&self.parts_of(o), j, None)?;
                ops.extend(filters(&od));
                ops.extend([op(Op::Unique), op(Op::ObjectToPart)]);
                ops.extend(filters(&pd));
                ops.extend([op(Op::Unique), op(Op::FilterOccludee), op(Op::Exist)]);
                format!("Is the {} of the {} occluded?", part_phrase(&pd), object_phrase(&od))
            }
            Kind::WhichPartOccluded => {
                let owners: Vec<usize> = (0..self.n())
                    .filter(|&o| self.parts_of(o).into_iter().filter(|&j| self.part_occluded(j)).count() == 1)
                    .collect();
                let o = self.pick(&owners)?;
                let od = self.describe_object(&self.all_objects(), o, None)?;
                ops.extend(filters(&od));
                ops.extend([
                    op(Op::Unique),
                    op(Op::ObjectToPart),
                    op(Op::FilterOccludee),
                    op(Op::Unique),
                    op(Op::QueryShape),
                ]);
                format!("Which part of the {} is occluded?", object_phrase(&od))
            }
            Kind::ObjectWithOccludedPart => {
                let a = attr?;
                let j = self.pick(&self.all_parts().into_iter().filter(|&j| self.part_occluded(j)).collect::<Vec<_>>())?;
                let name = self.facts.parts[j].name.clone();
                let owners = self.owners_with(&name, |k| self.part_occluded(k));
                let od = self.describe_object(&owners, self.facts.parts[j].owner, Some(a))?;
                ops.extend([op(Op::ObjectToPart), shape(&name), op(Op::FilterOccludee), op(Op::PartToObject)]);
                ops.extend(filters(&od));
                ops.extend([op(Op::Unique), q(a)]);
                format!("What is the {} of the {} whose {} is occluded?", a.name(), object_phrase(&od), name)
            }
            Kind::PartOfOccludedObject => {
                let a = attr?;
                let o = self.pick(&self.clearly_occluded_objects())?;
                let candidates: Vec<usize> = self.parts_of(o).into_iter().filter(|&j| self.visible(j)).collect();
                let j = self.pick(&candidates)?;
                let od = self.describe_object(&self.occluded_objects(), o, None)?;
                let pd = self.describe_part(&self.parts_of(o), j, Some(a))?;
                ops.extend(filters(&od));
                ops.extend([op(Op::FilterOccludee), op(Op::Unique), op(Op::ObjectToPart)]);
                ops.extend(filters(&pd));
                ops.extend([op(Op::Unique), q(a)]);
                format!(
                    "What is the {} of the {} which belongs to the occluded {}?",
                    attr_word(a, Domain::Parts),
                    part_phrase(&pd),
                    object_phrase(&od)
                )
            }
            Kind::PartOfObjectWithOccludedPart => {
                let a = attr?;
                let j2 = self.pick(&self.all_parts().into_iter().filter(|&j| self.part_occluded(j)).collect::<Vec<_>>())?;
                let o = self.facts.parts[j2].owner;
                let name = self.facts.parts[j2].name.clone();
                let candidates: Vec<usize> = self.parts_of(o).into_iter().filter(|&j| j != j2 && self.visible(j)).collect();
                let j1 = self.pick(&candidates)?;
                let owners = self.owners_with(&name, |k| self.part_occluded(k));
                let od = self.describe_object(&owners, o, None)?;
                let pd = self.describe_part(&self.parts_of(o), j1, Some(a))?;
                ops.extend([op(Op::ObjectToPart), shape(&name), op(Op::FilterOccludee), op(Op::PartToObject)]);
                ops.extend(filters(&od));
                ops.extend([op(Op::Unique), op(Op::ObjectToPart)]);
                ops.extend(filters(&pd));
                ops.extend([op(Op::Unique), q(a)]);
                format!(
                    "What is the {} of the {} which belongs to the {} whose {} is occluded?",
                    attr_word(a, Domain::Parts),
                    part_phrase(&pd),
                    object_phrase(&od),
                    name
                )
            }
            Kind::PartOccludedByYesNo => {
                let want_yes = self.rng.random_bool(0.5);
                let triples: Vec<(usize, usize)> = self
                    .all_parts()
                    .into_iter()
                    .flat_map(|j| (0..self.n()).map(move |k| (j, k)))
                    .filter(|&(j, k)| {
                        k != self.facts.parts[j].owner && (self.s(self.part_row(j), k) >= CLEAR_OCCLUSION) == want_yes
                    })
                    .collect();
                let (j, o2) = self.pick_pair(&triples)?;
                let o1 = self.facts.parts[j].owner;
                let d1 = self.describe_object(&self.all_objects(), o1, None)?;
                let pd = self.describe_part(&self.parts_of(o1), j, None)?;
                let d2 = self.describe_object(&self.all_objects(), o2, None)?;
                ops.extend(filters(&d1));
                ops.extend([op(Op::Unique), op(Op::ObjectToPart)]);
                ops.extend(filters(&pd));
                ops.extend([op(Op::Unique), op(Op::RelateOccluded)]);
                ops.extend(filters(&d2));
                ops.push(op(Op::Exist));
                format!(
                    "Is the {} of the {} occluded by the {}?",
                    part_phrase(&pd),
                    object_phrase(&d1),
                    object_phrase(&d2)
                )
            }
            Kind::ObjectWhosePartOccludedBy | Kind::PartSameObjectOccludedBy => {
                let a = attr?;
                let pairs: Vec<(usize, usize)> = self
                    .all_parts()
                    .into_iter()
                    .flat_map(|j| (0..self.n()).map(move |k| (j, k)))
                    .filter(|&(j, k)| self.s(self.part_row(j), k) >= CLEAR_OCCLUSION)
                    .collect();
                let (j2, o2) = self.pick_pair(&pairs)?;
                let o1 = self.facts.parts[j2].owner;
                let name = self.facts.parts[j2].name.clone();
                let d2 = self.describe_object(&self.all_objects(), o2, None)?;
                ops.extend(filters(&d2));
                ops.extend([op(Op::Unique), op(Op::RelatePartOccluded), shape(&name), op(Op::PartToObject)]);
                if t.kind == Kind::ObjectWhosePartOccludedBy {
                    let owners = self.owners_with(&name, |k| self.s(self.part_row(k), o2) >= OCCLUSION_THRESHOLD);
                    let d1 = self.describe_object(&owners, o1, Some(a))?;
                    ops.extend(filters(&d1));
                    ops.extend([op(Op::Unique), q(a)]);
                    format!(
                        "What is the {} of the {} whose {} is occluded by the {}?",
                        a.name(),
                        object_phrase(&d1),
                        name,
                        object_phrase(&d2)
                    )
                } else {
                    let candidates: Vec<usize> =
                        self.parts_of(o1).into_iter().filter(|&j| j != j2 && self.visible(j)).collect();
                    let j1 = self.pick(&candidates)?;
                    let pd = self.describe_part(&self.parts_of(o1), j1, Some(a))?;
                    ops.extend([op(Op::Unique), op(Op::ObjectToPart)]);
                    ops.extend(filters(&pd));
                    ops.extend([op(Op::Unique), q(a)]);
                    format!(
                        "What is the {} of the {} which belongs to the same object as the {} occluded by the {}?",
                        attr_word(a, Domain::Parts),
                        part_phrase(&pd),
                        name,
                        object_phrase(&d2)
                    )
                }
            }
            Kind::PartOfObjectOccludedBy => {
                let a = attr?;
                let pairs: Vec<(usize, usize)> = (0..self.n())
                    .flat_map(|i| (0..self.n()).map(move |j| (i, j)))
                    .filter(|&(i, j)| self.s(i, j) >= CLEAR_OCCLUSION)
                    .collect();
                let (o1, o2) = self.pick_pair(&pairs)?;
                let candidates: Vec<usize> = self.parts_of(o1).into_iter().filter(|&j| self.visible(j)).collect();
                let j = self.pick(&candidates)?;
                let d2 = self.describe_object(&self.all_objects(), o2, None)?;
                let d1 = self.describe_object(&self.occludees_of(o2), o1, None)?;
                let pd = self.describe_part(&self.parts_of(o1), j, Some(a))?;
                ops.extend(filters(&d2));
                ops.extend([op(Op::Unique), op(Op::RelateOccluding)]);
                ops.extend(filters(&d1));
                ops.extend([op(Op::Unique), op(Op::ObjectToPart)]);
                ops.extend(filters(&pd));
                ops.extend([op(Op::Unique), q(a)]);
                format!(
                    "What is the {} of the {} which belongs to the {} occluded by the {}?",
                    attr_word(a, Domain::Parts),
                    part_phrase(&pd),
                    object_phrase(&d1),
                    object_phrase(&d2)
                )
            }
        };
        Some((chain(ops), text))
    }
}

/// Metadata over the entities a run singles out.
pub fn question_metadata(facts: &SceneFacts, referents: &[(Domain, usize)]) -> QuestionMetadata {
    let mut min_occlusion = f64::INFINITY;
    let mut max_part_area: Option<usize> = None;
    for &(d, e) in referents {
        let object = match d {
            Domain::Objects => e,
            Domain::Parts => {
                let area = facts.parts[e].visible_area;
                max_part_area = Some(max_part_area.map_or(area, |m| m.max(area)));
                facts.parts[e].owner
            }
        };
        min_occlusion = min_occlusion.min(facts.objects[object].occlusion);
    }
    QuestionMetadata {
        min_occlusion: if min_occlusion.is_finite() { min_occlusion } else { 0.0 },
        max_part_area,
    }
}

/// Instantiates one template, keeping it only if it is well posed,
/// non-redundant and robust to small perturbations of the scene.
pub fn instantiate(template: &Template, facts: &SceneFacts, rng: &mut impl Rng) -> Option<(Program, String, String, QuestionMetadata)> {
    let mut ctx = Ctx { facts, rng };
    let (program, text) = ctx.instantiate(template)?;
    let run = oracle_run(&program, facts).ok()?;
    if run.fragile || !check_no_redundancy(&program, facts) {
        return None;
    }
    let metadata = question_metadata(facts, &run.referents);
    Some((program, text, run.answer, metadata))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedQuestions {
    pub questions: Vec<Question>,
    /// Fewer questions than the lower bound could be generated.
    pub short: bool,
}

/// Generates between 8 and 10 distinct questions of one family for a scene.
pub fn generate_for_scene(facts: &SceneFacts, scene: u64, family: Family, rng: &mut impl Rng) -> GeneratedQuestions {
    let bank = templates_for(family);
    let target = rng.random_range(QUESTIONS_PER_SCENE.0..=QUESTIONS_PER_SCENE.1);
    let mut questions: Vec<Question> = Vec::new();
    for _ in 0..MAX_ATTEMPTS {
        if questions.len() >= target {
            break;
        }
        let t = bank.choose(rng).expect("non-empty template bank");
        let Some((program, text, answer, metadata)) = instantiate(t, facts, rng) else {
            continue;
        };
        if questions.iter().any(|q| q.program == program) {
            continue;
        }
        questions.push(Question {
            id: format!("{scene}-{}-{}", family.name(), questions.len()),
            scene,
            template: t.id.clone(),
            text,
            program,
            answer,
            family,
            metadata,
        });
    }
    let short = questions.len() < QUESTIONS_PER_SCENE.0;
    GeneratedQuestions { questions, short }
}
