//! Alone-silhouettes, occlusion ratios and the pairwise occlusion matrix.

use crate::camera::{Camera, Pose6D};
use crate::error::{Error, Result};
use crate::mesh::CategoryMesh;
use crate::raster::{rasterize_scene, RenderOutput, ZBuffer};

/// Renders each object on its own.
pub fn alone_buffers(objects: &[(&CategoryMesh, Pose6D)], camera: &Camera) -> Vec<ZBuffer> {
    objects
        .iter()
        .map(|(mesh, pose)| {
            let mut zb = ZBuffer::for_camera(camera);
            zb.draw(0, mesh, pose, camera);
            zb
        })
        .collect()
}

/// Pixels the object would cover if rendered alone.
pub fn alone_silhouette(index: usize, objects: &[(&CategoryMesh, Pose6D)], camera: &Camera) -> Result<Vec<bool>> {
    let (mesh, pose) = objects
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("no object {index} in a scene of {}", objects.len())))?;
    let mut zb = ZBuffer::for_camera(camera);
    zb.draw(0, mesh, pose, camera);
    Ok(zb.instance.iter().map(|&i| i >= 0).collect())
}

/// `1 − visible / alone` for one object.
pub fn occlusion_ratio(index: usize, objects: &[(&CategoryMesh, Pose6D)], camera: &Camera) -> Result<f64> {
    let alone = alone_silhouette(index, objects, camera)?;
    let full = rasterize_scene(objects, camera);
    ratio_from(index, &alone, &full)
}

fn ratio_from(index: usize, alone: &[bool], full: &RenderOutput) -> Result<f64> {
    let area = alone.iter().filter(|&&b| b).count();
    if area == 0 {
        return Err(Error::NotVisible);
    }
    let visible = full.instance_map.iter().filter(|&&i| i == index as i32).count();
    Ok(1.0 - visible as f64 / area as f64)
}

/// Occlusion ratio of every object, `None` where the alone-silhouette is empty.
pub fn occlusion_ratios(alone: &[ZBuffer], full: &RenderOutput) -> Vec<Option<f64>> {
    alone
        .iter()
        .enumerate()
        .map(|(i, zb)| {
            let mask: Vec<bool> = zb.instance.iter().map(|&x| x >= 0).collect();
            ratio_from(i, &mask, full).ok()
        })
        .collect()
}

/// Row entity of the occlusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity {
    Object(usize),
    /// Part `part` (index into the owner mesh's part list) of object `owner`.
    Part { owner: usize, part: usize },
}

/// `(n + p) × n` occlusion scores with zero-area flags.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMatrix {
    pub entities: Vec<Entity>,
    pub scores: Vec<Vec<f64>>,
    pub alone_area: Vec<usize>,
}

impl OcclusionMatrix {
    pub fn zero_area(&self, row: usize) -> bool {
        self.alone_area[row] == 0
    }
}

/// `S[i][j]` is the fraction of entity `i`'s alone-silhouette where object
/// `j` renders strictly closer. Part rows never count their own owner.
pub fn occlusion_matrix(
    objects: &[(&CategoryMesh, Pose6D)],
    parts: &[(usize, usize)],
    camera: &Camera,
    alone: &[ZBuffer],
) -> OcclusionMatrix {
    let n = objects.len();
    let mut entities: Vec<Entity> = (0..n).map(Entity::Object).collect();
    entities.extend(parts.iter().map(|&(owner, part)| Entity::Part { owner, part }));
    let npx = camera.pixel_count();
    let mut scores = Vec::with_capacity(entities.len());
    let mut alone_area = Vec::with_capacity(entities.len());
    for e in &entities {
        let (owner, part) = match *e {
            Entity::Object(i) => (i, None),
            Entity::Part { owner, part } => (owner, Some(part)),
        };
        let own = &alone[owner];
        let mesh = objects[owner].0;
        let in_sil = |k: usize| -> bool {
            own.covered(k)
                && match part {
                    None => true,
                    Some(p) => mesh.face_part(own.face[k] as usize) == p as i16,
                }
        };
        let mut area = 0usize;
        let mut hits = vec![0usize; n];
        for k in 0..npx {
            if !in_sil(k) {
                continue;
            }
            area += 1;
            let d = own.depth[k];
            for (j, other) in alone.iter().enumerate() {
                if j != owner && other.depth[k] < d {
                    hits[j] += 1;
                }
            }
        }
        let row = if area == 0 {
            vec![0.0; n]
        } else {
            hits.iter().map(|&h| h as f64 / area as f64).collect()
        };
        scores.push(row);
        alone_area.push(area);
    }
    OcclusionMatrix {
        entities,
        scores,
        alone_area,
    }
}

/// Per-part `(alone area, visible area)` for one object.
pub fn part_areas(index: usize, mesh: &CategoryMesh, alone: &ZBuffer, full: &RenderOutput) -> Vec<(usize, usize)> {
    let mut out = vec![(0usize, 0usize); mesh.parts.len()];
    for k in 0..alone.depth.len() {
        if alone.covered(k) {
            let p = mesh.face_part(alone.face[k] as usize);
            if p >= 0 {
                out[p as usize].0 += 1;
            }
        }
        if full.instance_map[k] == index as i32 && full.part_map[k] >= 0 {
            out[full.part_map[k] as usize].1 += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshLibrary;
    use crate::vocab::Subtype;

    fn bus() -> &'static CategoryMesh {
        MeshLibrary::standard().subtype(Subtype::from_name("regular bus").unwrap())
    }

    fn car() -> &'static CategoryMesh {
        MeshLibrary::standard().subtype(Subtype::from_name("sedan").unwrap())
    }

    #[test]
    fn unoccluded_and_fully_hidden() {
        let cam = Camera::default();
        let front = (bus(), Pose6D::new(1.5, 0.5, 8.0, [64.0, 64.0]));
        let hidden = (car(), Pose6D::new(1.5, 0.5, 20.0, [64.0, 64.0]));
        let objs = [front, hidden];
        assert_eq!(occlusion_ratio(0, &objs, &cam).unwrap(), 0.0);
        assert_eq!(occlusion_ratio(1, &objs, &cam).unwrap(), 1.0);
        let alone = alone_buffers(&objs, &cam);
        let s = occlusion_matrix(&objs, &[], &cam, &alone);
        assert_eq!(s.scores[1][0], 1.0);
        assert_eq!(s.scores[0][1], 0.0);
    }

    #[test]
    fn out_of_frame_is_not_visible() {
        let cam = Camera::default();
        let objs = [(car(), Pose6D::new(0.0, 0.5, 10.0, [-500.0, 64.0]))];
        assert!(alone_silhouette(0, &objs, &cam).unwrap().iter().all(|&b| !b));
        assert!(matches!(occlusion_ratio(0, &objs, &cam), Err(Error::NotVisible)));
    }

    #[test]
    fn part_rows_ignore_owner() {
        let cam = Camera::default();
        let objs = [(car(), Pose6D::new(0.4, 0.5, 10.0, [64.0, 64.0]))];
        let alone = alone_buffers(&objs, &cam);
        let parts: Vec<(usize, usize)> = (0..car().parts.len()).map(|p| (0, p)).collect();
        let s = occlusion_matrix(&objs, &parts, &cam, &alone);
        assert!(s.scores.iter().all(|r| r[0] == 0.0));
    }
}
