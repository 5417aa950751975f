//! The probabilistic scene representation `R = {O, P, A°, Aᵖ, H, S}`.

use serde::{Deserialize, Serialize};

use crate::camera::Pose6D;
use crate::error::{Error, Result};
use crate::occlusion::{alone_buffers, occlusion_matrix};
use crate::raster::parts_in_frame;
use crate::scene::GroundTruthScene;
use crate::vocab::{part_index, part_vocabulary, Color, Material, Size, Subtype};

pub const REPR_SCHEMA: &str = "vqa3d.repr/v1";

/// Row-major dense matrix with explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(cols: usize, rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), n * cols, "ragged matrix rows");
        Self { rows: n, cols, data }
    }

    pub fn one_hot(cols: usize, hot: &[usize]) -> Self {
        let mut m = Self::zeros(hot.len(), cols);
        for (r, &c) in hot.iter().enumerate() {
            m.set(r, c, 1.0);
        }
        m
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn argmax(&self, r: usize) -> usize {
        let row = self.row(r);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// Vocabulary orderings used by the matrix columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub subtypes: Vec<String>,
    pub parts: Vec<String>,
    pub colors: Vec<String>,
    pub materials: Vec<String>,
    pub sizes: Vec<String>,
}

impl Vocabularies {
    pub fn standard() -> Self {
        Self {
            subtypes: Subtype::ALL.iter().map(|s| s.name().to_string()).collect(),
            parts: part_vocabulary().iter().map(|s| s.to_string()).collect(),
            colors: Color::ALL.iter().map(|s| s.name().to_string()).collect(),
            materials: Material::ALL.iter().map(|s| s.name().to_string()).collect(),
            sizes: Size::ALL.iter().map(|s| s.name().to_string()).collect(),
        }
    }
}

/// Continuous pose columns of the object attribute block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseColumns {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub location: [f64; 2],
}

impl From<Pose6D> for PoseColumns {
    fn from(p: Pose6D) -> Self {
        Self {
            azimuth: p.azimuth,
            elevation: p.elevation,
            distance: p.distance,
            location: p.location,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRepresentation {
    pub schema: String,
    pub vocab: Vocabularies,
    /// `n × 21` sub-type probabilities.
    pub o: Matrix,
    /// `p × N_prt` part-name probabilities.
    pub p: Matrix,
    pub object_color: Matrix,
    pub object_material: Matrix,
    pub object_size: Matrix,
    pub object_pose: Vec<PoseColumns>,
    pub part_color: Matrix,
    pub part_material: Matrix,
    /// `n × p` ownership.
    pub h: Matrix,
    /// `(n + p) × n` occlusion scores; rows are objects then parts.
    pub s: Matrix,
}

impl SceneRepresentation {
    pub fn n_objects(&self) -> usize {
        self.o.rows
    }

    pub fn n_parts(&self) -> usize {
        self.p.rows
    }

    /// Index of the object owning part `j`.
    pub fn owner(&self, j: usize) -> Option<usize> {
        (0..self.h.rows).find(|&i| self.h.get(i, j) == 1.0)
    }

    /// Checks every structural invariant, naming the first violated one.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(m));
        if self.schema != REPR_SCHEMA {
            return Err(Error::Schema {
                found: self.schema.clone(),
                expected: REPR_SCHEMA.into(),
            });
        }
        if self.vocab != Vocabularies::standard() {
            return fail("vocabulary ordering differs from the standard one".into());
        }
        let n = self.n_objects();
        let p = self.n_parts();
        let shapes = [
            ("O", &self.o, n, Subtype::COUNT),
            ("P", &self.p, p, part_vocabulary().len()),
            ("object color", &self.object_color, n, Color::ALL.len()),
            ("object material", &self.object_material, n, Material::ALL.len()),
            ("object size", &self.object_size, n, Size::ALL.len()),
            ("part color", &self.part_color, p, Color::ALL.len()),
            ("part material", &self.part_material, p, Material::ALL.len()),
            ("H", &self.h, n, p),
            ("S", &self.s, n + p, n),
        ];
        for (name, m, r, c) in shapes {
            if m.rows != r || m.cols != c || m.data.len() != r * c {
                return fail(format!("{name} has shape {}x{}, expected {r}x{c}", m.rows, m.cols));
            }
            if m.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return fail(format!("{name} has an entry outside [0, 1]"));
            }
        }
        if self.object_pose.len() != n {
            return fail(format!("{} pose rows for {n} objects", self.object_pose.len()));
        }
        for (name, m) in [
            ("O", &self.o),
            ("P", &self.p),
            ("object color", &self.object_color),
            ("object material", &self.object_material),
            ("object size", &self.object_size),
            ("part color", &self.part_color),
            ("part material", &self.part_material),
        ] {
            for r in 0..m.rows {
                let sum: f64 = m.row(r).iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return fail(format!("{name} row {r} sums to {sum}"));
                }
            }
        }
        if self.h.data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return fail("H is not binary".into());
        }
        for j in 0..p {
            let col: f64 = (0..n).map(|i| self.h.get(i, j)).sum();
            if col != 1.0 {
                return fail(format!("part {j} has {col} owners"));
            }
        }
        for i in 0..n {
            if self.s.get(i, i) != 0.0 {
                return fail(format!("S[{i}][{i}] is not zero"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }
}

/// Parts of the scene that appear in the representation, as
/// `(object, index into subtype.parts())`, grouped by object.
pub fn scene_parts(scene: &GroundTruthScene) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, o) in scene.objects.iter().enumerate() {
        for (j, inside) in parts_in_frame(o.mesh(), &o.pose, &scene.camera).into_iter().enumerate() {
            if inside {
                out.push((i, j));
            }
        }
    }
    out
}

/// Ground-truth occlusion scores for objects followed by [`scene_parts`].
pub fn scene_occlusion(scene: &GroundTruthScene, parts: &[(usize, usize)]) -> Matrix {
    let pairs = scene.mesh_poses();
    let alone = alone_buffers(&pairs, &scene.camera);
    let m = occlusion_matrix(&pairs, parts, &scene.camera, &alone);
    Matrix::from_rows(pairs.len(), m.scores)
}

/// One-hot representation of a ground-truth scene.
pub fn ground_truth_representation(scene: &GroundTruthScene) -> SceneRepresentation {
    let parts = scene_parts(scene);
    let s = scene_occlusion(scene, &parts);
    let objs = &scene.objects;
    let n = objs.len();
    let mut h = Matrix::zeros(n, parts.len());
    for (j, &(i, _)) in parts.iter().enumerate() {
        h.set(i, j, 1.0);
    }
    let part_name = |&(i, j): &(usize, usize)| part_index(objs[i].parts()[j]).expect("part in vocabulary");
    SceneRepresentation {
        schema: REPR_SCHEMA.into(),
        vocab: Vocabularies::standard(),
        o: Matrix::one_hot(Subtype::COUNT, &objs.iter().map(|o| o.subtype.index()).collect::<Vec<_>>()),
        p: Matrix::one_hot(part_vocabulary().len(), &parts.iter().map(part_name).collect::<Vec<_>>()),
        object_color: Matrix::one_hot(Color::ALL.len(), &objs.iter().map(|o| o.color.index()).collect::<Vec<_>>()),
        object_material: Matrix::one_hot(
            Material::ALL.len(),
            &objs.iter().map(|o| o.material.index()).collect::<Vec<_>>(),
        ),
        object_size: Matrix::one_hot(Size::ALL.len(), &objs.iter().map(|o| o.size.index()).collect::<Vec<_>>()),
        object_pose: objs.iter().map(|o| o.pose.into()).collect(),
        part_color: Matrix::one_hot(
            Color::ALL.len(),
            &parts.iter().map(|&(i, j)| objs[i].part_colors[j].index()).collect::<Vec<_>>(),
        ),
        part_material: Matrix::one_hot(
            Material::ALL.len(),
            &parts.iter().map(|&(i, j)| objs[i].part_materials[j].index()).collect::<Vec<_>>(),
        ),
        h,
        s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{sample_scene, SceneConfig};

    #[test]
    fn ground_truth_is_valid_one_hot() {
        let scene = sample_scene(21, &SceneConfig::default()).unwrap();
        let r = ground_truth_representation(&scene);
        r.validate().unwrap();
        for (i, o) in scene.objects.iter().enumerate() {
            assert_eq!(r.o.argmax(i), o.subtype.index());
        }
        let back = SceneRepresentation::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn validate_names_violation() {
        let scene = sample_scene(22, &SceneConfig::default()).unwrap();
        let mut r = ground_truth_representation(&scene);
        r.object_color.set(0, 0, 0.5);
        r.object_color.set(0, 1, 0.0);
        match r.validate() {
            Err(Error::Invariant(m)) => assert!(m.contains("object color row 0")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
