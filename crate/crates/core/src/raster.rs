//! Vertex projection and hard z-buffer rasterization.

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Pose6D};
use crate::error::Result;
use crate::mesh::{CategoryMesh, FEATURE_DIM};

/// Vertices closer than this to the camera plane are invalid.
pub const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedVertex {
    /// `[x, y]` on the feature grid.
    pub point: [f64; 2],
    pub depth: f64,
    pub valid: bool,
}

/// Perspective projection of every mesh vertex.
///
/// The object centre sits at depth `distance` on the ray through `location`;
/// vertex offsets are scaled by their own depth.
pub fn project_vertices(mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera) -> Result<Vec<ProjectedVertex>> {
    pose.validate()?;
    camera.validate()?;
    Ok(project_unchecked(mesh, pose, camera))
}

fn project_unchecked(mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera) -> Vec<ProjectedVertex> {
    let r = pose.rotation();
    let f = camera.grid_focal();
    mesh.vertices
        .iter()
        .map(|v| {
            let c = r * v;
            let depth = pose.distance + c.z;
            let valid = depth > NEAR_PLANE;
            let point = if valid {
                [pose.location[0] + f * c.x / depth, pose.location[1] + f * c.y / depth]
            } else {
                [f64::NAN, f64::NAN]
            };
            ProjectedVertex { point, depth, valid }
        })
        .collect()
}

/// Whether each part has at least one projected vertex inside the grid.
pub fn parts_in_frame(mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera) -> Vec<bool> {
    let verts = project_unchecked(mesh, pose, camera);
    let (rows, cols) = camera.grid();
    let inside = |v: &ProjectedVertex| {
        v.valid && (0.0..cols as f64).contains(&v.point[0]) && (0.0..rows as f64).contains(&v.point[1])
    };
    mesh.parts
        .iter()
        .map(|p| p.vertices.iter().any(|&i| inside(&verts[i as usize])))
        .collect()
}

/// Screen-space triangle ready for coverage tests.
#[derive(Debug, Clone, Copy)]
pub struct ScreenTriangle {
    p: [[f64; 2]; 3],
    z: [f64; 3],
    area: f64,
}

impl ScreenTriangle {
    /// `None` for degenerate or behind-camera faces.
    pub fn new(verts: &[ProjectedVertex], face: [u32; 3]) -> Option<Self> {
        let v = face.map(|i| verts[i as usize]);
        if v.iter().any(|v| !v.valid) {
            return None;
        }
        let p = v.map(|v| v.point);
        let area = edge(p[0], p[1], p[2]);
        if area.abs() < 1e-12 || !area.is_finite() {
            return None;
        }
        Some(Self {
            p,
            z: v.map(|v| v.depth),
            area,
        })
    }

    /// Pixel bounds `(r0, r1, c0, c1)` clipped to the grid, half-open.
    pub fn bounds(&self, rows: usize, cols: usize) -> Option<(usize, usize, usize, usize)> {
        let xs = self.p.map(|p| p[0]);
        let ys = self.p.map(|p| p[1]);
        let min_x = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_y = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_y = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let c0 = (min_x - 0.5).ceil().max(0.0);
        let c1 = ((max_x - 0.5).floor() + 1.0).min(cols as f64);
        let r0 = (min_y - 0.5).ceil().max(0.0);
        let r1 = ((max_y - 0.5).floor() + 1.0).min(rows as f64);
        if c0 >= c1 || r0 >= r1 {
            return None;
        }
        Some((r0 as usize, r1 as usize, c0 as usize, c1 as usize))
    }

    /// Interpolated depth at the centre of pixel `(row, col)` if covered.
    #[inline]
    pub fn depth_at(&self, row: usize, col: usize) -> Option<f64> {
        let q = [col as f64 + 0.5, row as f64 + 0.5];
        let w0 = edge(self.p[1], self.p[2], q) / self.area;
        let w1 = edge(self.p[2], self.p[0], q) / self.area;
        let w2 = edge(self.p[0], self.p[1], q) / self.area;
        if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
            return None;
        }
        let z = w0 * self.z[0] + w1 * self.z[1] + w2 * self.z[2];
        (z > NEAR_PLANE).then_some(z)
    }
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Depth buffer recording the winning object and face per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ZBuffer {
    pub rows: usize,
    pub cols: usize,
    pub depth: Vec<f64>,
    pub instance: Vec<i32>,
    pub face: Vec<u32>,
}

impl ZBuffer {
    pub fn new(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        Self {
            rows,
            cols,
            depth: vec![f64::INFINITY; n],
            instance: vec![-1; n],
            face: vec![u32::MAX; n],
        }
    }

    pub fn for_camera(camera: &Camera) -> Self {
        let (h, w) = camera.grid();
        Self::new(h, w)
    }

    /// Draws one object; a pixel is overwritten only by a strictly closer face.
    pub fn draw(&mut self, id: i32, mesh: &CategoryMesh, pose: &Pose6D, camera: &Camera) {
        let verts = project_unchecked(mesh, pose, camera);
        for (fi, &face) in mesh.faces.iter().enumerate() {
            let Some(tri) = ScreenTriangle::new(&verts, face) else { continue };
            let Some((r0, r1, c0, c1)) = tri.bounds(self.rows, self.cols) else { continue };
            for r in r0..r1 {
                for c in c0..c1 {
                    if let Some(z) = tri.depth_at(r, c) {
                        let k = r * self.cols + c;
                        if z < self.depth[k] {
                            self.depth[k] = z;
                            self.instance[k] = id;
                            self.face[k] = fi as u32;
                        }
                    }
                }
            }
        }
    }

    pub fn covered(&self, k: usize) -> bool {
        self.instance[k] >= 0
    }

    pub fn area(&self) -> usize {
        self.instance.iter().filter(|&&i| i >= 0).count()
    }
}

/// Rendered products on the feature grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderOutput {
    pub rows: usize,
    pub cols: usize,
    /// `rows × cols × FEATURE_DIM`; zero on background.
    pub feature_map: Vec<f32>,
    /// `+inf` on background.
    pub depth_map: Vec<f64>,
    pub instance_map: Vec<i32>,
    /// Index into the owning mesh's part list, `-1` for body or background.
    pub part_map: Vec<i16>,
}

impl RenderOutput {
    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn feature(&self, k: usize) -> &[f32] {
        &self.feature_map[k * FEATURE_DIM..(k + 1) * FEATURE_DIM]
    }

    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.pixel_count()).filter(|&k| self.instance_map[k] >= 0)
    }

    fn from_zbuffer(zb: ZBuffer, objects: &[(&CategoryMesh, Pose6D)]) -> Self {
        let n = zb.rows * zb.cols;
        let mut feature_map = vec![0.0f32; n * FEATURE_DIM];
        let mut part_map = vec![-1i16; n];
        for k in 0..n {
            if zb.instance[k] < 0 {
                continue;
            }
            let mesh = objects[zb.instance[k] as usize].0;
            let f = zb.face[k] as usize;
            feature_map[k * FEATURE_DIM..(k + 1) * FEATURE_DIM].copy_from_slice(mesh.face_feature(f));
            part_map[k] = mesh.face_part(f);
        }
        Self {
            rows: zb.rows,
            cols: zb.cols,
            feature_map,
            depth_map: zb.depth,
            instance_map: zb.instance,
            part_map,
        }
    }
}

/// Renders objects in order; equal depths keep the earlier object.
pub fn rasterize_scene(objects: &[(&CategoryMesh, Pose6D)], camera: &Camera) -> RenderOutput {
    let mut zb = ZBuffer::for_camera(camera);
    for (i, (mesh, pose)) in objects.iter().enumerate() {
        zb.draw(i as i32, mesh, pose, camera);
    }
    RenderOutput::from_zbuffer(zb, objects)
}
