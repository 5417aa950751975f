#![allow(dead_code)]

use vqa3d_core::{Color, Material, Size, Subtype};
use vqa3d_reason::{chain, FactObject, FactPart, Op, Program, SceneFacts};

pub fn object(subtype: &str, color: Color, azimuth_deg: f64) -> FactObject {
    FactObject {
        subtype: Subtype::from_name(subtype).unwrap(),
        color,
        material: Material::Rubber,
        size: Size::Small,
        azimuth: azimuth_deg.to_radians(),
        occlusion: 0.0,
    }
}

/// Facts with the named parts attached to each object and no occlusion.
pub fn facts(objects: Vec<FactObject>, parts: &[(usize, &str, Color)]) -> SceneFacts {
    let parts: Vec<FactPart> = parts
        .iter()
        .map(|&(owner, name, color)| FactPart {
            owner,
            name: name.to_string(),
            color,
            material: Material::Metal,
            visible_area: 12,
        })
        .collect();
    let s = vec![vec![0.0; objects.len()]; objects.len() + parts.len()];
    SceneFacts { objects, parts, s }
}

/// Sets `S[row][col]` and refreshes the occlusion ratio of object rows.
pub fn occlude(f: &mut SceneFacts, row: usize, col: usize, v: f64) {
    f.s[row][col] = v;
    if row < f.objects.len() {
        f.objects[row].occlusion = f.occlusion_sum(row).min(1.0);
    }
}

pub fn prog(ops: &[(Op, Option<&str>)]) -> Program {
    chain(ops.iter().map(|&(o, a)| (o, a.map(str::to_string))).collect())
}
