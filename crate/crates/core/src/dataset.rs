//! Dataset files: a JSON index plus one binary blob of grids per scene.
//!
//! Blob layout, little-endian: magic `VQ3D`, `u32` version, `u32` rows,
//! `u32` cols, `u32` feature dim, then `f32` features, `f64` depths,
//! `i32` instance labels, `i16` part labels and `[u8; 4]` attribute cells,
//! each in row-major pixel order.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::mesh::FEATURE_DIM;
use crate::raster::RenderOutput;
use crate::scene::{GroundTruthScene, ObjectSpec, PartArea};

pub const DATASET_SCHEMA: &str = "vqa3d.dataset/v1";
pub const INDEX_FILE: &str = "index.json";
const MAGIC: &[u8; 4] = b"VQ3D";
const BLOB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Index {
    schema: String,
    scenes: Vec<SceneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SceneEntry {
    id: usize,
    seed: u64,
    camera: Camera,
    objects: Vec<ObjectSpec>,
    occlusion: Vec<f64>,
    part_areas: Vec<Vec<PartArea>>,
    blob: String,
    blob_bytes: usize,
}

pub fn blob_name(id: usize) -> String {
    format!("scene_{id:05}.bin")
}

/// Writes `index.json` and one blob per scene into `dir`.
pub fn export_dataset(scenes: &[GroundTruthScene], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (id, s) in scenes.iter().enumerate() {
        let bytes = encode_blob(s);
        let name = blob_name(id);
        std::fs::write(dir.join(&name), &bytes)?;
        entries.push(SceneEntry {
            id,
            seed: s.seed,
            camera: s.camera,
            objects: s.objects.clone(),
            occlusion: s.occlusion.clone(),
            part_areas: s.part_areas.clone(),
            blob: name,
            blob_bytes: bytes.len(),
        });
    }
    let index = Index {
        schema: DATASET_SCHEMA.into(),
        scenes: entries,
    };
    std::fs::write(dir.join(INDEX_FILE), serde_json::to_string_pretty(&index)?)?;
    Ok(())
}

/// Reads a dataset written by [`export_dataset`]; fails without returning
/// any scene if any file is malformed.
pub fn import_dataset(dir: &Path) -> Result<Vec<GroundTruthScene>> {
    let text = std::fs::read_to_string(dir.join(INDEX_FILE))?;
    let index: Index = parse_json(&text)?;
    if index.schema != DATASET_SCHEMA {
        return Err(Error::Schema {
            found: index.schema,
            expected: DATASET_SCHEMA.into(),
        });
    }
    let mut scenes = Vec::with_capacity(index.scenes.len());
    for e in index.scenes {
        let bytes = std::fs::read(dir.join(&e.blob))?;
        if bytes.len() != e.blob_bytes {
            return Err(Error::Parse {
                offset: bytes.len(),
                message: format!("{} has {} bytes, index says {}", e.blob, bytes.len(), e.blob_bytes),
            });
        }
        let (render, attribute_map) = decode_blob(&bytes)?;
        if render.rows != e.camera.grid().0 || render.cols != e.camera.grid().1 {
            return Err(Error::Parse {
                offset: 8,
                message: format!("{} grid does not match its camera", e.blob),
            });
        }
        scenes.push(GroundTruthScene {
            seed: e.seed,
            camera: e.camera,
            objects: e.objects,
            render,
            occlusion: e.occlusion,
            part_areas: e.part_areas,
            attribute_map,
        });
    }
    Ok(scenes)
}

/// Parses JSON, mapping errors to a byte offset into `text`.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let offset = byte_offset(text, e.line(), e.column());
        Error::Parse {
            offset,
            message: e.to_string(),
        }
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn encode_blob(s: &GroundTruthScene) -> Vec<u8> {
    let r = &s.render;
    let n = r.pixel_count();
    let mut out = Vec::with_capacity(20 + n * (FEATURE_DIM * 4 + 8 + 4 + 2 + 4));
    out.extend_from_slice(MAGIC);
    for v in [BLOB_VERSION, r.rows as u32, r.cols as u32, FEATURE_DIM as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    r.feature_map.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    r.depth_map.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    r.instance_map.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    r.part_map.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    s.attribute_map.iter().for_each(|v| out.extend_from_slice(v));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.bytes.len(),
                message: format!("truncated blob while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn array<const W: usize, T>(&mut self, count: usize, what: &str, f: impl Fn([u8; W]) -> T) -> Result<Vec<T>> {
        let raw = self.take(count * W, what)?;
        Ok(raw.chunks_exact(W).map(|c| f(c.try_into().unwrap())).collect())
    }
}

pub fn decode_blob(bytes: &[u8]) -> Result<(RenderOutput, Vec<[u8; 4]>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic, expected VQ3D".into(),
        });
    }
    let version = r.u32("version")?;
    if version != BLOB_VERSION {
        return Err(Error::Schema {
            found: format!("blob v{version}"),
            expected: format!("blob v{BLOB_VERSION}"),
        });
    }
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let dim = r.u32("feature dim")? as usize;
    if dim != FEATURE_DIM {
        return Err(Error::Parse {
            offset: 16,
            message: format!("feature dim {dim}, expected {FEATURE_DIM}"),
        });
    }
    let n = rows
        .checked_mul(cols)
        .filter(|n| n.checked_mul(dim * 4 + 18).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            message: format!("truncated blob for a {rows}x{cols} grid"),
        })?;
    let feature_map = r.array::<4, _>(n * dim, "features", f32::from_le_bytes)?;
    let depth_map = r.array::<8, _>(n, "depths", f64::from_le_bytes)?;
    let instance_map = r.array::<4, _>(n, "instances", i32::from_le_bytes)?;
    let part_map = r.array::<2, _>(n, "parts", i16::from_le_bytes)?;
    let attribute_map = r.array::<4, _>(n, "attributes", |c| c)?;
    if r.pos != bytes.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    for k in 0..n {
        if (instance_map[k] >= 0) != depth_map[k].is_finite() {
            return Err(Error::Parse {
                offset: 20 + n * dim * 4 + k * 8,
                message: format!("pixel {k}: instance and depth disagree"),
            });
        }
    }
    Ok((
        RenderOutput {
            rows,
            cols,
            feature_map,
            depth_map,
            instance_map,
            part_map,
        },
        attribute_map,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_error_offset_points_into_text() {
        let text = "{\n  \"a\": 1,\n  \"b\": ]\n}";
        match parse_json::<serde_json::Value>(text) {
            Err(Error::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 1], "]"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
