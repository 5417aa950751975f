//! Symbolic ground truth that questions are generated and answered against.

use serde::{Deserialize, Serialize};

use vqa3d_core::repr::{scene_occlusion, scene_parts, Matrix, PoseColumns, SceneRepresentation, Vocabularies, REPR_SCHEMA};
use vqa3d_core::scene::GroundTruthScene;
use vqa3d_core::vocab::{part_index, part_vocabulary};
use vqa3d_core::{Color, Material, Pose6D, Size, Subtype};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactObject {
    pub subtype: Subtype,
    pub color: Color,
    pub material: Material,
    pub size: Size,
    pub azimuth: f64,
    /// Fraction of the object hidden in the full render.
    pub occlusion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactPart {
    pub owner: usize,
    pub name: String,
    pub color: Color,
    pub material: Material,
    pub visible_area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFacts {
    pub objects: Vec<FactObject>,
    pub parts: Vec<FactPart>,
    /// `(n + p) × n` occlusion scores; rows are objects then parts.
    pub s: Vec<Vec<f64>>,
}

impl SceneFacts {
    pub fn from_scene(scene: &GroundTruthScene) -> Self {
        let parts_idx = scene_parts(scene);
        let s = scene_occlusion(scene, &parts_idx);
        let objects = scene
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| FactObject {
                subtype: o.subtype,
                color: o.color,
                material: o.material,
                size: o.size,
                azimuth: o.pose.azimuth,
                occlusion: scene.occlusion[i],
            })
            .collect();
        let parts = parts_idx
            .iter()
            .map(|&(i, j)| {
                let o = &scene.objects[i];
                FactPart {
                    owner: i,
                    name: o.parts()[j].to_string(),
                    color: o.part_colors[j],
                    material: o.part_materials[j],
                    visible_area: scene.part_areas[i][j].visible,
                }
            })
            .collect();
        let s = (0..s.rows).map(|r| s.row(r).to_vec()).collect();
        Self { objects, parts, s }
    }

    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    /// Total occlusion score of entity row `row`.
    pub fn occlusion_sum(&self, row: usize) -> f64 {
        self.s[row].iter().sum()
    }

    pub fn parts_of(&self, object: usize) -> impl Iterator<Item = usize> + '_ {
        self.parts.iter().enumerate().filter(move |(_, p)| p.owner == object).map(|(j, _)| j)
    }

    /// One-hot representation with the same entities and scores.
    pub fn to_representation(&self) -> SceneRepresentation {
        let n = self.objects.len();
        let p = self.parts.len();
        let objs = &self.objects;
        let mut h = Matrix::zeros(n, p);
        for (j, part) in self.parts.iter().enumerate() {
            h.set(part.owner, j, 1.0);
        }
        let part_names: Vec<usize> = self
            .parts
            .iter()
            .map(|q| part_index(&q.name).expect("part in vocabulary"))
            .collect();
        SceneRepresentation {
            schema: REPR_SCHEMA.into(),
            vocab: Vocabularies::standard(),
            o: Matrix::one_hot(Subtype::COUNT, &objs.iter().map(|o| o.subtype.index()).collect::<Vec<_>>()),
            p: Matrix::one_hot(part_vocabulary().len(), &part_names),
            object_color: Matrix::one_hot(Color::ALL.len(), &objs.iter().map(|o| o.color.index()).collect::<Vec<_>>()),
            object_material: Matrix::one_hot(
                Material::ALL.len(),
                &objs.iter().map(|o| o.material.index()).collect::<Vec<_>>(),
            ),
            object_size: Matrix::one_hot(Size::ALL.len(), &objs.iter().map(|o| o.size.index()).collect::<Vec<_>>()),
            object_pose: objs
                .iter()
                .map(|o| PoseColumns::from(Pose6D::new(o.azimuth, 0.0, 1.0, [0.0, 0.0])))
                .collect(),
            part_color: Matrix::one_hot(Color::ALL.len(), &self.parts.iter().map(|q| q.color.index()).collect::<Vec<_>>()),
            part_material: Matrix::one_hot(
                Material::ALL.len(),
                &self.parts.iter().map(|q| q.material.index()).collect::<Vec<_>>(),
            ),
            h,
            s: Matrix::from_rows(n, self.s.clone()),
        }
    }
}
