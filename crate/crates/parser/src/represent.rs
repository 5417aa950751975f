//! Part localization, attribute classification, post-filtering, occlusion
//! scores and assembly of the scene representation.

use serde::{Deserialize, Serialize};

use vqa3d_core::occlusion::{alone_buffers, occlusion_matrix, OcclusionMatrix};
use vqa3d_core::raster::{parts_in_frame, project_vertices, ZBuffer};
use vqa3d_core::repr::{Matrix, PoseColumns, SceneRepresentation, Vocabularies, REPR_SCHEMA};
use vqa3d_core::scene::{GroundTruthScene, NO_ATTRIBUTE};
use vqa3d_core::vocab::{part_index, part_vocabulary};
use vqa3d_core::{Camera, CategoryMesh, Color, Error, Material, Pose6D, Result, Size, Subtype};

/// Dilation applied to crops, in cells.
pub const CROP_DILATION: usize = 2;
/// Parts with less than this share of their alone area visible are occluded.
pub const PART_VISIBLE_FRACTION: f64 = 0.5;

/// Half-open pixel box `[row0, col0, row1, col1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl PixelBox {
    pub fn area(&self) -> usize {
        (self.r1 - self.r0) * (self.c1 - self.c0)
    }

    pub fn dilate(&self, d: usize, rows: usize, cols: usize) -> Self {
        Self {
            r0: self.r0.saturating_sub(d),
            c0: self.c0.saturating_sub(d),
            r1: (self.r1 + d).min(rows),
            c1: (self.c1 + d).min(cols),
        }
    }

    pub fn contains_box(&self, other: &PixelBox) -> bool {
        other.r0 >= self.r0 && other.c0 >= self.c0 && other.r1 <= self.r1 && other.c1 <= self.c1
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.r0..self.r1).contains(&row) && (self.c0..self.c1).contains(&col)
    }

    /// Box of the cells containing the points, clipped to the grid; `None` if
    /// empty.
    pub fn around(points: impl Iterator<Item = [f64; 2]>, rows: usize, cols: usize) -> Option<Self> {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        if !x0.is_finite() || !x1.is_finite() {
            return None;
        }
        let b = Self {
            r0: y0.floor().clamp(0.0, rows as f64) as usize,
            c0: x0.floor().clamp(0.0, cols as f64) as usize,
            r1: (y1.floor() + 1.0).clamp(0.0, rows as f64) as usize,
            c1: (x1.floor() + 1.0).clamp(0.0, cols as f64) as usize,
        };
        (b.r1 > b.r0 && b.c1 > b.c0).then_some(b)
    }
}

/// Box around all projected vertices of a mesh.
pub fn object_box(mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera) -> Option<PixelBox> {
    let (rows, cols) = camera.grid();
    let pts = project_vertices(mesh, pose, camera).ok()?;
    PixelBox::around(pts.iter().filter(|v| v.valid).map(|v| v.point), rows, cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartLocation {
    /// Index into the mesh part list.
    pub part: usize,
    pub name: String,
    pub bbox: PixelBox,
    pub alone_area: usize,
    pub visible_area: usize,
    pub visible: bool,
}

/// Locates every in-frame part of an object. A part pixel is visible when
/// the object's own depth there does not exceed the scene depth.
pub fn localize_parts(mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera, depth_map: &[f64]) -> Vec<PartLocation> {
    let (rows, cols) = camera.grid();
    let Ok(verts) = project_vertices(mesh, pose, camera) else {
        return Vec::new();
    };
    let in_frame = parts_in_frame(mesh, pose, camera);
    let mut zb = ZBuffer::for_camera(camera);
    zb.draw(0, mesh, pose, camera);
    let mut alone = vec![0usize; mesh.parts.len()];
    let mut visible = vec![0usize; mesh.parts.len()];
    for k in 0..zb.depth.len() {
        if !zb.covered(k) {
            continue;
        }
        let p = mesh.face_part(zb.face[k] as usize);
        if p < 0 {
            continue;
        }
        alone[p as usize] += 1;
        if zb.depth[k] <= depth_map[k] {
            visible[p as usize] += 1;
        }
    }
    mesh.parts
        .iter()
        .enumerate()
        .filter(|(i, _)| in_frame[*i])
        .filter_map(|(i, part)| {
            let pts = part.vertices.iter().map(|&v| verts[v as usize]).filter(|v| v.valid).map(|v| v.point);
            let bbox = PixelBox::around(pts, rows, cols)?;
            Some(PartLocation {
                part: i,
                name: part.name.clone(),
                bbox,
                alone_area: alone[i],
                visible_area: visible[i],
                visible: alone[i] > 0 && visible[i] as f64 >= PART_VISIBLE_FRACTION * alone[i] as f64,
            })
        })
        .collect()
}

const FIELD_SIZES: [usize; 4] = [8, 2, 2, 21];

/// Probability rows for one crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRows {
    pub color: Vec<f64>,
    pub material: Vec<f64>,
    pub size: Vec<f64>,
    pub subtype: Vec<f64>,
    pub low_evidence: bool,
}

impl AttributeRows {
    fn field(&self, f: usize) -> &Vec<f64> {
        match f {
            0 => &self.color,
            1 => &self.material,
            2 => &self.size,
            _ => &self.subtype,
        }
    }
}

/// Naive-Bayes patch classifier over the discrete attribute map, using
/// per-field confusion tables `P(observed | true)` counted with Laplace
/// smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchClassifier {
    /// `log_confusion[field][true][observed]`.
    pub log_confusion: Vec<Vec<Vec<f64>>>,
}

impl PatchClassifier {
    /// Counts confusion tables from `(true map, observed map)` pairs.
    pub fn train<'a>(samples: impl IntoIterator<Item = (&'a [[u8; 4]], &'a [[u8; 4]])>) -> Self {
        let mut counts: Vec<Vec<Vec<f64>>> = FIELD_SIZES.iter().map(|&n| vec![vec![1.0; n]; n]).collect();
        for (truth, obs) in samples {
            for (t, o) in truth.iter().zip(obs) {
                if t[0] == NO_ATTRIBUTE || o[0] == NO_ATTRIBUTE {
                    continue;
                }
                for f in 0..4 {
                    counts[f][t[f] as usize][o[f] as usize] += 1.0;
                }
            }
        }
        Self::from_counts(counts)
    }

    /// Tables for symmetric flip noise with probability `epsilon`.
    pub fn for_flip_noise(epsilon: f64) -> Self {
        let counts = FIELD_SIZES
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|t| {
                        (0..n)
                            .map(|o| if t == o { 1.0 - epsilon } else { epsilon / (n - 1) as f64 } * 1e4 + 1.0)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::from_counts(counts)
    }

    fn from_counts(counts: Vec<Vec<Vec<f64>>>) -> Self {
        let log_confusion = counts
            .into_iter()
            .map(|table| {
                table
                    .into_iter()
                    .map(|row| {
                        let s: f64 = row.iter().sum();
                        row.into_iter().map(|c| (c / s).ln()).collect()
                    })
                    .collect()
            })
            .collect();
        Self { log_confusion }
    }

    /// Posterior rows from the observed cells at `pixels`.
    pub fn classify_pixels(&self, map: &[[u8; 4]], pixels: impl IntoIterator<Item = usize>) -> AttributeRows {
        let mut hist: Vec<Vec<f64>> = FIELD_SIZES.iter().map(|&n| vec![0.0; n]).collect();
        let mut total = 0usize;
        for k in pixels {
            let cell = map[k];
            if cell[0] == NO_ATTRIBUTE {
                continue;
            }
            total += 1;
            for f in 0..4 {
                hist[f][cell[f] as usize] += 1.0;
            }
        }
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|f| {
                let n = FIELD_SIZES[f];
                if total == 0 {
                    return vec![1.0 / n as f64; n];
                }
                let logp: Vec<f64> = (0..n)
                    .map(|t| hist[f].iter().zip(&self.log_confusion[f][t]).map(|(h, l)| h * l).sum())
                    .collect();
                softmax(&logp)
            })
            .collect();
        let mut it = rows.into_iter();
        AttributeRows {
            color: it.next().unwrap(),
            material: it.next().unwrap(),
            size: it.next().unwrap(),
            subtype: it.next().unwrap(),
            low_evidence: total == 0,
        }
    }

    /// Classifies the crop `bbox` (dilated by [`CROP_DILATION`]), restricted
    /// to `support` when given.
    pub fn classify_attributes(
        &self,
        map: &[[u8; 4]],
        rows: usize,
        cols: usize,
        bbox: &PixelBox,
        support: Option<&[bool]>,
    ) -> AttributeRows {
        let b = bbox.dilate(CROP_DILATION, rows, cols);
        let pixels = (b.r0..b.r1)
            .flat_map(move |r| (b.c0..b.c1).map(move |c| r * cols + c))
            .filter(|&k| support.is_none_or(|s| s[k]));
        self.classify_pixels(map, pixels)
    }
}

fn softmax(logp: &[f64]) -> Vec<f64> {
    let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logp.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let mut out: Vec<f64> = e.iter().map(|v| v / s).collect();
    let drift: f64 = 1.0 - out.iter().sum::<f64>();
    let top = argmax(&out);
    out[top] += drift;
    out
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Indices of proposals whose classified sub-type agrees with the parser's
/// category.
pub fn post_filter(categories: &[vqa3d_core::Category], subtype_rows: &[Vec<f64>]) -> Vec<usize> {
    categories
        .iter()
        .zip(subtype_rows)
        .enumerate()
        .filter(|(_, (c, row))| Subtype::ALL[argmax(row)].category() == **c)
        .map(|(i, _)| i)
        .collect()
}

/// Occlusion matrix of predicted objects and parts.
pub fn occlusion_scores(objects: &[(&CategoryMesh, Pose6D)], parts: &[(usize, usize)], camera: &Camera) -> OcclusionMatrix {
    let alone = alone_buffers(objects, camera);
    occlusion_matrix(objects, parts, camera, &alone)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEstimate {
    pub subtype: Vec<f64>,
    pub color: Vec<f64>,
    pub material: Vec<f64>,
    pub size: Vec<f64>,
    pub pose: Pose6D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartEstimate {
    pub owner: usize,
    pub name: String,
    pub color: Vec<f64>,
    pub material: Vec<f64>,
}

/// Builds and validates the representation.
pub fn assemble(objects: &[ObjectEstimate], parts: &[PartEstimate], s: &OcclusionMatrix) -> Result<SceneRepresentation> {
    let n = objects.len();
    let p = parts.len();
    if s.scores.len() != n + p || s.scores.iter().any(|r| r.len() != n) {
        return Err(Error::Invariant(format!("S must be {}x{n}", n + p)));
    }
    let mut h = Matrix::zeros(n, p);
    let mut pm = Matrix::zeros(p, part_vocabulary().len());
    for (j, part) in parts.iter().enumerate() {
        if part.owner >= n {
            return Err(Error::Invariant(format!("part {j} owned by missing object {}", part.owner)));
        }
        h.set(part.owner, j, 1.0);
        let idx = part_index(&part.name).ok_or_else(|| Error::Invariant(format!("unknown part `{}`", part.name)))?;
        pm.set(j, idx, 1.0);
    }
    let rows = |f: &dyn Fn(&ObjectEstimate) -> &Vec<f64>, cols: usize| Matrix::from_rows(cols, objects.iter().map(|o| f(o).clone()).collect());
    let r = SceneRepresentation {
        schema: REPR_SCHEMA.into(),
        vocab: Vocabularies::standard(),
        o: rows(&|o| &o.subtype, Subtype::COUNT),
        p: pm,
        object_color: rows(&|o| &o.color, Color::ALL.len()),
        object_material: rows(&|o| &o.material, Material::ALL.len()),
        object_size: rows(&|o| &o.size, Size::ALL.len()),
        object_pose: objects.iter().map(|o| PoseColumns::from(o.pose)).collect(),
        part_color: Matrix::from_rows(Color::ALL.len(), parts.iter().map(|q| q.color.clone()).collect()),
        part_material: Matrix::from_rows(Material::ALL.len(), parts.iter().map(|q| q.material.clone()).collect()),
        h,
        s: Matrix::from_rows(n, s.scores.clone()),
    };
    r.validate()?;
    Ok(r)
}

/// Training pairs of true and observed attribute maps.
pub fn training_pairs<'a>(scenes: &'a [GroundTruthScene], observed: &'a [Vec<[u8; 4]>]) -> impl Iterator<Item = (&'a [[u8; 4]], &'a [[u8; 4]])> {
    scenes.iter().zip(observed).map(|(s, o)| (s.attribute_map.as_slice(), o.as_slice()))
}

impl AttributeRows {
    pub fn argmax_field(&self, f: usize) -> usize {
        argmax(self.field(f))
    }
}
