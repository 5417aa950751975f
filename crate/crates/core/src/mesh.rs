//! Category and sub-type meshes with per-vertex feature textures and labeled
//! part vertex groups.
//!
//! Meshes are procedural: every sub-type is a handful of subdivided body
//! boxes plus one box per named part. The feature texture is a smooth random
//! field shared by all sub-types of a category, sampled at each vertex's
//! position normalized by the sub-type's extents, so renders of different
//! sub-types of a category look alike to the category-level template.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::vocab::{Category, Subtype};

/// Feature dimension `c` of textures and rendered feature maps.
pub const FEATURE_DIM: usize = 16;

pub const MESH_SCHEMA: &str = "vqa3d.mesh/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPart {
    pub name: String,
    pub vertices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMesh {
    pub category: Category,
    /// `None` for the category-level template used by the parser.
    pub subtype: Option<Subtype>,
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    /// Row-major `N × FEATURE_DIM`, unit-norm rows.
    pub texture: Vec<f32>,
    pub parts: Vec<MeshPart>,
    face_part: Vec<i16>,
    face_feature: Vec<f32>,
}

impl CategoryMesh {
    pub fn new(
        category: Category,
        subtype: Option<Subtype>,
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[u32; 3]>,
        texture: Vec<f32>,
        parts: Vec<MeshPart>,
    ) -> Result<Self> {
        let n = vertices.len();
        if texture.len() != n * FEATURE_DIM {
            return Err(Error::InvalidInput(format!(
                "texture has {} values, expected {}",
                texture.len(),
                n * FEATURE_DIM
            )));
        }
        if let Some(s) = subtype {
            if s.category() != category {
                return Err(Error::InvalidInput(format!("subtype {s} is not a {category}")));
            }
        }
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidInput(format!("face {f:?} indexes past {n} vertices")));
        }
        for row in texture.chunks(FEATURE_DIM) {
            let norm: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            if (norm - 1.0).abs() > 1e-4 {
                return Err(Error::InvalidInput(format!("texture row norm {norm} is not 1")));
            }
        }
        let mut vertex_part = vec![-1i16; n];
        for (pi, part) in parts.iter().enumerate() {
            if let Some(s) = subtype {
                if !s.parts().contains(&part.name.as_str()) {
                    return Err(Error::InvalidInput(format!("part `{}` not defined for {s}", part.name)));
                }
            }
            for &v in &part.vertices {
                let slot = vertex_part
                    .get_mut(v as usize)
                    .ok_or_else(|| Error::InvalidInput(format!("part vertex {v} out of range")))?;
                if *slot >= 0 {
                    return Err(Error::InvalidInput(format!("vertex {v} belongs to two parts")));
                }
                *slot = pi as i16;
            }
        }
        let face_part = faces.iter().map(|f| vertex_part[f[0] as usize]).collect();
        let mut face_feature = Vec::with_capacity(faces.len() * FEATURE_DIM);
        for f in &faces {
            for k in 0..FEATURE_DIM {
                let s: f32 = f.iter().map(|&v| texture[v as usize * FEATURE_DIM + k]).sum();
                face_feature.push(s / 3.0);
            }
        }
        Ok(Self {
            category,
            subtype,
            vertices,
            faces,
            texture,
            parts,
            face_part,
            face_feature,
        })
    }

    /// Part index owning a face, or `-1` for body faces.
    pub fn face_part(&self, face: usize) -> i16 {
        self.face_part[face]
    }

    /// Rendered feature of a face: mean of its three vertex texture rows.
    pub fn face_feature(&self, face: usize) -> &[f32] {
        &self.face_feature[face * FEATURE_DIM..(face + 1) * FEATURE_DIM]
    }

    pub fn part_index(&self, name: &str) -> Option<usize> {
        self.parts.iter().position(|p| p.name == name)
    }

    /// Bounding radius in the object frame.
    pub fn radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_asset(&self) -> MeshAsset {
        MeshAsset {
            schema: MESH_SCHEMA.to_string(),
            category: self.category,
            subtype: self.subtype,
            vertices: self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            faces: self.faces.clone(),
            texture: self.texture.chunks(FEATURE_DIM).map(|r| r.to_vec()).collect(),
            parts: self.parts.clone(),
        }
    }

    pub fn from_asset(asset: MeshAsset) -> Result<Self> {
        if asset.schema != MESH_SCHEMA {
            return Err(Error::Schema {
                found: asset.schema,
                expected: MESH_SCHEMA.into(),
            });
        }
        if let Some(r) = asset.texture.iter().find(|r| r.len() != FEATURE_DIM) {
            return Err(Error::InvalidInput(format!("texture row of length {}", r.len())));
        }
        Self::new(
            asset.category,
            asset.subtype,
            asset.vertices.iter().map(|v| Vector3::new(v[0], v[1], v[2])).collect(),
            asset.faces,
            asset.texture.into_iter().flatten().collect(),
            asset.parts,
        )
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_asset())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_asset(serde_json::from_str(&text)?)
    }
}

/// JSON asset form of a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshAsset {
    pub schema: String,
    pub category: Category,
    pub subtype: Option<Subtype>,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub texture: Vec<Vec<f32>>,
    pub parts: Vec<MeshPart>,
}

/// Sub-type meshes and per-category parser templates.
#[derive(Debug)]
pub struct MeshLibrary {
    subtypes: Vec<CategoryMesh>,
    templates: Vec<CategoryMesh>,
}

impl MeshLibrary {
    pub fn standard() -> &'static MeshLibrary {
        static LIB: OnceLock<MeshLibrary> = OnceLock::new();
        LIB.get_or_init(|| MeshLibrary {
            subtypes: Subtype::ALL.iter().map(|&s| build_subtype(s)).collect(),
            templates: Category::ALL.iter().map(|&c| build_template(c)).collect(),
        })
    }

    pub fn subtype(&self, s: Subtype) -> &CategoryMesh {
        &self.subtypes[s.index()]
    }

    pub fn template(&self, c: Category) -> &CategoryMesh {
        &self.templates[c.index()]
    }
}

/// Object extents `[width (x), height (y), length (z)]`.
fn category_dims(c: Category) -> [f64; 3] {
    match c {
        Category::Car => [1.1, 0.95, 2.4],
        Category::Bus => [1.05, 1.25, 2.8],
        Category::Plane => [2.3, 0.9, 2.5],
        Category::Bicycle => [0.4, 1.1, 1.8],
        Category::Motorbike => [0.6, 1.1, 2.0],
    }
}

fn subtype_scale(s: Subtype) -> [f64; 3] {
    match s.name() {
        "truck" => [1.05, 1.1, 1.05],
        "suv" => [1.05, 1.1, 1.0],
        "minivan" => [1.0, 1.08, 1.02],
        "sedan" => [1.0, 0.95, 1.0],
        "wagon" => [1.0, 1.0, 1.03],
        "articulated bus" => [1.0, 1.0, 1.1],
        "double bus" => [1.0, 1.15, 1.0],
        "regular bus" => [1.0, 1.0, 1.0],
        "school bus" => [1.0, 1.0, 0.95],
        "airliner" => [1.1, 1.0, 1.1],
        "biplane" => [0.95, 1.05, 0.9],
        "jet" => [1.0, 1.0, 1.0],
        "fighter" => [0.9, 0.9, 0.95],
        "tandem bike" => [1.0, 1.0, 1.12],
        "road bike" => [0.95, 0.97, 1.0],
        "mountain bike" => [1.05, 1.02, 0.97],
        "chopper" => [1.0, 0.95, 1.08],
        "scooter" => [1.0, 1.0, 0.9],
        "cruiser" => [1.05, 1.0, 1.05],
        "dirtbike" => [0.95, 1.05, 0.98],
        _ => [1.0, 1.0, 1.0],
    }
}

/// Normalized box: centre and half extents as fractions of `[W, H, L]`.
type NormBox = ([f64; 3], [f64; 3]);

fn nb(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> NormBox {
    (
        [(x.0 + x.1) / 2.0, (y.0 + y.1) / 2.0, (z.0 + z.1) / 2.0],
        [(x.1 - x.0).abs() / 2.0, (y.1 - y.0).abs() / 2.0, (z.1 - z.0).abs() / 2.0],
    )
}

fn mirror_x(b: NormBox) -> NormBox {
    ([-b.0[0], b.0[1], b.0[2]], b.1)
}

/// Body boxes with subdivision counts along x, y, z.
fn body_boxes(c: Category) -> Vec<(NormBox, [usize; 3])> {
    match c {
        Category::Car => vec![
            (nb((-0.5, 0.5), (-0.33, 0.08), (-0.5, 0.5)), [2, 2, 5]),
            (nb((-0.44, 0.44), (0.08, 0.5), (-0.3, 0.2)), [2, 2, 3]),
        ],
        Category::Bus => vec![(nb((-0.5, 0.5), (-0.36, 0.5), (-0.5, 0.5)), [2, 3, 6])],
        Category::Plane => vec![(nb((-0.07, 0.07), (-0.12, 0.2), (-0.5, 0.5)), [1, 1, 6])],
        Category::Bicycle => vec![(nb((-0.1, 0.1), (-0.12, 0.2), (-0.22, 0.2)), [1, 2, 3])],
        Category::Motorbike => vec![(nb((-0.22, 0.22), (-0.16, 0.16), (-0.26, 0.26)), [1, 2, 3])],
    }
}

/// Placement of a named part in normalized coordinates. Left is +x.
fn part_box(c: Category, name: &str) -> NormBox {
    let left = |b: NormBox| b;
    let side = |name: &str, b: NormBox| if name.contains("right") { mirror_x(b) } else { left(b) };
    match c {
        Category::Car => match name {
            n if n.ends_with("wheel") => {
                let z = if n.starts_with("front") { 0.3 } else { -0.3 };
                side(n, nb((0.42, 0.58), (-0.5, -0.16), (z - 0.12, z + 0.12)))
            }
            n if n.ends_with("door") => {
                let z = if n.starts_with("front") { (0.0, 0.2) } else { (-0.24, -0.03) };
                side(n, nb((0.5, 0.53), (-0.26, 0.06), z))
            }
            n if n.ends_with("head light") => side(n, nb((0.22, 0.42), (-0.08, 0.02), (0.5, 0.52))),
            n if n.ends_with("tail light") => side(n, nb((0.22, 0.42), (-0.08, 0.02), (-0.52, -0.5))),
            "front bumper" => nb((-0.46, 0.46), (-0.33, -0.2), (0.5, 0.53)),
            "back bumper" => nb((-0.46, 0.46), (-0.33, -0.2), (-0.53, -0.5)),
            "front license plate" => nb((-0.13, 0.13), (-0.2, -0.1), (0.5, 0.54)),
            "back license plate" => nb((-0.13, 0.13), (-0.2, -0.1), (-0.54, -0.5)),
            n if n.ends_with("mirror") => side(n, nb((0.44, 0.6), (0.1, 0.2), (0.16, 0.22))),
            "hood" => nb((-0.44, 0.44), (0.08, 0.11), (0.22, 0.48)),
            "trunk" => nb((-0.44, 0.44), (0.08, 0.11), (-0.48, -0.32)),
            "roof" => nb((-0.42, 0.42), (0.5, 0.53), (-0.27, 0.17)),
            _ => nb((-0.1, 0.1), (0.0, 0.1), (0.0, 0.1)),
        },
        Category::Bus => match name {
            n if n.ends_with("wheel") => {
                let z = if n.starts_with("front") { 0.32 } else { -0.32 };
                side(n, nb((0.42, 0.56), (-0.5, -0.22), (z - 0.09, z + 0.09)))
            }
            n if n.ends_with("door") => {
                let z = if n.starts_with("front") {
                    (0.28, 0.4)
                } else if n.starts_with("mid") {
                    (-0.06, 0.06)
                } else {
                    (-0.4, -0.28)
                };
                side(n, nb((0.5, 0.53), (-0.3, 0.24), z))
            }
            n if n.ends_with("head light") => side(n, nb((0.2, 0.42), (-0.22, -0.14), (0.5, 0.52))),
            n if n.ends_with("tail light") => side(n, nb((0.2, 0.42), (-0.22, -0.14), (-0.52, -0.5))),
            "front bumper" => nb((-0.46, 0.46), (-0.36, -0.27), (0.5, 0.53)),
            "back bumper" => nb((-0.46, 0.46), (-0.36, -0.27), (-0.53, -0.5)),
            "front license plate" => nb((-0.12, 0.12), (-0.25, -0.18), (0.53, 0.55)),
            "back license plate" => nb((-0.12, 0.12), (-0.25, -0.18), (-0.55, -0.53)),
            n if n.ends_with("mirror") => side(n, nb((0.5, 0.62), (0.18, 0.28), (0.44, 0.5))),
            "trunk" => nb((-0.34, 0.34), (-0.05, 0.3), (-0.53, -0.5)),
            "roof" => nb((-0.45, 0.45), (0.5, 0.53), (-0.45, 0.45)),
            _ => nb((-0.1, 0.1), (0.0, 0.1), (0.0, 0.1)),
        },
        Category::Plane => match name {
            n if n.ends_with(" wing") => side(n, nb((0.07, 0.5), (0.0, 0.05), (-0.06, 0.16))),
            n if n.ends_with("tailplane") => side(n, nb((0.07, 0.2), (0.08, 0.12), (-0.5, -0.38))),
            "fin" => nb((-0.012, 0.012), (0.2, 0.5), (-0.5, -0.34)),
            n if n.ends_with("engine") => side(n, nb((0.16, 0.26), (-0.14, -0.0), (0.0, 0.16))),
            "propeller" => nb((-0.08, 0.08), (-0.12, 0.2), (0.5, 0.52)),
            n if n.ends_with("door") => side(n, nb((0.07, 0.085), (-0.06, 0.14), (0.3, 0.38))),
            "front wheel" => nb((-0.02, 0.02), (-0.5, -0.12), (0.34, 0.4)),
            n if n.ends_with("wheel") => side(n, nb((0.1, 0.14), (-0.5, -0.12), (0.0, 0.06))),
            _ => nb((-0.05, 0.05), (0.0, 0.1), (0.0, 0.1)),
        },
        Category::Bicycle => match name {
            "front wheel" => nb((-0.06, 0.06), (-0.5, 0.08), (0.12, 0.48)),
            "back wheel" => nb((-0.06, 0.06), (-0.5, 0.08), (-0.48, -0.12)),
            "fork" => nb((-0.12, 0.12), (-0.2, 0.3), (0.2, 0.26)),
            n if n.ends_with("handle") => side(n, nb((0.1, 0.5), (0.3, 0.35), (0.2, 0.26))),
            "saddle" => nb((-0.16, 0.16), (0.27, 0.32), (-0.2, -0.08)),
            n if n.ends_with("pedal") => side(n, nb((0.2, 0.4), (-0.32, -0.28), (-0.05, 0.05))),
            n if n.ends_with("crank arm") => side(n, nb((0.1, 0.2), (-0.3, -0.12), (-0.02, 0.02))),
            "drive chain" => nb((-0.18, -0.1), (-0.25, -0.15), (-0.35, 0.0)),
            "brake system" => nb((-0.08, 0.08), (0.2, 0.26), (0.12, 0.2)),
            "carrier" => nb((-0.2, 0.2), (0.12, 0.16), (-0.45, -0.22)),
            "front fender" => nb((-0.1, 0.1), (0.1, 0.14), (0.2, 0.42)),
            "back fender" => nb((-0.1, 0.1), (0.08, 0.11), (-0.42, -0.2)),
            "side stand" => nb((0.12, 0.2), (-0.5, -0.25), (-0.15, -0.1)),
            "rearlight" => nb((-0.1, 0.1), (0.0, 0.08), (-0.5, -0.47)),
            _ => nb((-0.05, 0.05), (0.0, 0.1), (0.0, 0.1)),
        },
        Category::Motorbike => match name {
            "front wheel" => nb((-0.06, 0.06), (-0.5, -0.05), (0.2, 0.48)),
            "back wheel" => nb((-0.06, 0.06), (-0.5, -0.05), (-0.48, -0.2)),
            "fork" => nb((-0.1, 0.1), (-0.2, 0.3), (0.26, 0.3)),
            n if n.ends_with("handle") => side(n, nb((0.1, 0.5), (0.3, 0.35), (0.22, 0.27))),
            "center headlight" => nb((-0.1, 0.1), (0.18, 0.26), (0.33, 0.36)),
            n if n.ends_with("headlight") => side(n, nb((0.12, 0.3), (0.16, 0.22), (0.32, 0.35))),
            "center taillight" => nb((-0.08, 0.08), (0.1, 0.16), (-0.46, -0.43)),
            n if n.ends_with("taillight") => side(n, nb((0.1, 0.25), (0.1, 0.16), (-0.45, -0.42))),
            n if n.ends_with("mirror") => side(n, nb((0.3, 0.45), (0.38, 0.45), (0.2, 0.24))),
            "gas tank" => nb((-0.25, 0.25), (0.16, 0.28), (0.02, 0.22)),
            "front fender" => nb((-0.1, 0.1), (0.0, 0.05), (0.3, 0.46)),
            "back fender" => nb((-0.1, 0.1), (0.03, 0.08), (-0.46, -0.3)),
            "drive chain" => nb((-0.32, -0.22), (-0.3, -0.2), (-0.35, 0.0)),
            n if n.ends_with("footrest") => side(n, nb((0.22, 0.45), (-0.2, -0.16), (-0.05, 0.05))),
            "windscreen" => nb((-0.25, 0.25), (0.36, 0.5), (0.27, 0.3)),
            "engine" => nb((-0.3, 0.3), (-0.32, -0.16), (-0.1, 0.15)),
            n if n.ends_with("exhaust") => side(n, nb((0.3, 0.45), (-0.28, -0.2), (-0.4, -0.05))),
            "seat" => nb((-0.2, 0.2), (0.16, 0.23), (-0.24, 0.0)),
            "panel" => nb((-0.15, 0.15), (0.27, 0.32), (0.2, 0.25)),
            "back cover" => nb((-0.2, 0.2), (0.05, 0.16), (-0.42, -0.26)),
            "front cover" => nb((-0.2, 0.2), (0.05, 0.18), (0.26, 0.33)),
            "license plate" => nb((-0.1, 0.1), (-0.02, 0.05), (-0.5, -0.47)),
            _ => nb((-0.05, 0.05), (0.0, 0.1), (0.0, 0.1)),
        },
    }
}

struct MeshBuilder {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
}

impl MeshBuilder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    /// Closed 8-vertex box.
    fn add_box(&mut self, lo: Vector3<f64>, hi: Vector3<f64>) -> Vec<u32> {
        let base = self.vertices.len() as u32;
        for i in 0..8 {
            self.vertices.push(Vector3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            ));
        }
        const QUADS: [[u32; 4]; 6] = [
            [0, 2, 6, 4],
            [1, 5, 7, 3],
            [0, 4, 5, 1],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 6, 7, 5],
        ];
        for q in QUADS {
            self.faces.push([base + q[0], base + q[1], base + q[2]]);
            self.faces.push([base + q[0], base + q[2], base + q[3]]);
        }
        (base..base + 8).collect()
    }

    /// Box whose six sides are tessellated into grids.
    fn add_grid_box(&mut self, lo: Vector3<f64>, hi: Vector3<f64>, seg: [usize; 3]) {
        // For each axis pair (u, v) with fixed axis w at lo or hi.
        let axes = [(1usize, 2usize, 0usize), (0, 2, 1), (0, 1, 2)];
        for &(u, v, w) in &axes {
            for &fixed in &[lo[w], hi[w]] {
                let (nu, nv) = (seg[u].max(1), seg[v].max(1));
                let base = self.vertices.len() as u32;
                for j in 0..=nv {
                    for i in 0..=nu {
                        let mut p = Vector3::zeros();
                        p[u] = lo[u] + (hi[u] - lo[u]) * i as f64 / nu as f64;
                        p[v] = lo[v] + (hi[v] - lo[v]) * j as f64 / nv as f64;
                        p[w] = fixed;
                        self.vertices.push(p);
                    }
                }
                let stride = (nu + 1) as u32;
                for j in 0..nv as u32 {
                    for i in 0..nu as u32 {
                        let a = base + j * stride + i;
                        let b = a + 1;
                        let c = a + stride;
                        let d = c + 1;
                        self.faces.push([a, b, d]);
                        self.faces.push([a, d, c]);
                    }
                }
            }
        }
    }
}

fn to_abs(b: &NormBox, dims: [f64; 3]) -> (Vector3<f64>, Vector3<f64>) {
    let c = Vector3::new(b.0[0] * dims[0], b.0[1] * dims[1], b.0[2] * dims[2]);
    let h = Vector3::new(b.1[0] * dims[0], b.1[1] * dims[1], b.1[2] * dims[2]);
    (c - h, c + h)
}

/// Smooth random feature field of a category, evaluated at a normalized point.
struct FeatureField {
    freqs: Vec<Vector3<f64>>,
    phases: Vec<f64>,
    weights: Vec<[f64; FEATURE_DIM]>,
}

impl FeatureField {
    const WAVES: usize = 12;

    fn for_category(c: Category) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + c.index() as u64);
        let mut freqs = Vec::with_capacity(Self::WAVES);
        let mut phases = Vec::with_capacity(Self::WAVES);
        let mut weights = Vec::with_capacity(Self::WAVES);
        for _ in 0..Self::WAVES {
            let dir = loop {
                let d = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                if d.norm() > 1e-3 {
                    break d.normalize();
                }
            };
            freqs.push(dir * rng.random_range(1.5..4.0));
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
            let mut w = [0.0; FEATURE_DIM];
            for x in w.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            weights.push(w);
        }
        Self { freqs, phases, weights }
    }

    fn eval(&self, u: &Vector3<f64>) -> [f32; FEATURE_DIM] {
        let mut acc = [0.0f64; FEATURE_DIM];
        for ((f, ph), w) in self.freqs.iter().zip(&self.phases).zip(&self.weights) {
            let s = (f.dot(u) + ph).cos();
            for k in 0..FEATURE_DIM {
                acc[k] += w[k] * s;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let mut out = [0.0f32; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            out[k] = (acc[k] / norm) as f32;
        }
        // Re-normalize in f32 so the stored row has unit norm at f32 precision.
        let n32 = out.iter().map(|v| v * v).sum::<f32>().sqrt();
        out.iter_mut().for_each(|v| *v /= n32);
        out
    }
}

fn assemble(category: Category, subtype: Option<Subtype>, part_names: &[&str], scale: [f64; 3]) -> CategoryMesh {
    let base = category_dims(category);
    let dims = [base[0] * scale[0], base[1] * scale[1], base[2] * scale[2]];
    let mut b = MeshBuilder::new();
    for (bx, seg) in body_boxes(category) {
        let (lo, hi) = to_abs(&bx, dims);
        b.add_grid_box(lo, hi, seg);
    }
    let mut parts = Vec::with_capacity(part_names.len());
    for name in part_names {
        let (lo, hi) = to_abs(&part_box(category, name), dims);
        let verts = b.add_box(lo, hi);
        parts.push(MeshPart {
            name: name.to_string(),
            vertices: verts,
        });
    }
    let field = FeatureField::for_category(category);
    let mut texture = Vec::with_capacity(b.vertices.len() * FEATURE_DIM);
    for v in &b.vertices {
        let u = Vector3::new(v.x / (dims[0] / 2.0), v.y / (dims[1] / 2.0), v.z / (dims[2] / 2.0));
        texture.extend_from_slice(&field.eval(&u));
    }
    CategoryMesh::new(category, subtype, b.vertices, b.faces, texture, parts).expect("procedural mesh is valid")
}

fn build_subtype(s: Subtype) -> CategoryMesh {
    assemble(s.category(), Some(s), s.parts(), subtype_scale(s))
}

fn build_template(c: Category) -> CategoryMesh {
    let names: BTreeSet<&str> = c.subtypes().flat_map(|s| s.parts().iter().copied()).collect();
    let names: Vec<&str> = names.into_iter().collect();
    assemble(c, None, &names, [1.0, 1.0, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_subtype_mesh_is_valid_and_low_poly() {
        let lib = MeshLibrary::standard();
        for s in Subtype::ALL {
            let m = lib.subtype(s);
            assert_eq!(m.category, s.category());
            assert!((100..=600).contains(&m.vertices.len()), "{s}: {} vertices", m.vertices.len());
            let names: Vec<&str> = m.parts.iter().map(|p| p.name.as_str()).collect();
            assert_eq!(names, s.parts());
        }
    }

    #[test]
    fn rows_are_unit_norm() {
        let m = MeshLibrary::standard().subtype(Subtype::from_name("sedan").unwrap());
        for row in m.texture.chunks(FEATURE_DIM) {
            let n: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn left_parts_are_on_positive_x() {
        let m = MeshLibrary::standard().subtype(Subtype::from_name("sedan").unwrap());
        let centroid = |name: &str| {
            let p = &m.parts[m.part_index(name).unwrap()];
            p.vertices.iter().map(|&v| m.vertices[v as usize]).sum::<Vector3<f64>>() / p.vertices.len() as f64
        };
        assert!(centroid("front left wheel").x > 0.0);
        assert!(centroid("front right wheel").x < 0.0);
        assert!(centroid("front left wheel").z > centroid("back left wheel").z);
    }

    #[test]
    fn rejects_shared_part_vertex_and_bad_face() {
        let lib = MeshLibrary::standard();
        let m = lib.subtype(Subtype::from_name("jet").unwrap()).clone();
        let mut parts = m.parts.clone();
        let shared = parts[0].vertices[0];
        parts[1].vertices.push(shared);
        assert!(CategoryMesh::new(m.category, m.subtype, m.vertices.clone(), m.faces.clone(), m.texture.clone(), parts).is_err());
        let mut faces = m.faces.clone();
        faces.push([0, 1, m.vertices.len() as u32]);
        assert!(CategoryMesh::new(m.category, m.subtype, m.vertices.clone(), faces, m.texture.clone(), m.parts.clone()).is_err());
    }

    #[test]
    fn json_asset_round_trip() {
        let m = MeshLibrary::standard().subtype(Subtype::from_name("scooter").unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scooter.json");
        m.save_json(&path).unwrap();
        let back = CategoryMesh::load_json(&path).unwrap();
        assert_eq!(&back, m);
    }
}
