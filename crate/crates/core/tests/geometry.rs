use proptest::prelude::*;

use vqa3d_core::dataset::{export_dataset, import_dataset};
use vqa3d_core::occlusion::{alone_silhouette, occlusion_ratio};
use vqa3d_core::raster::{project_vertices, rasterize_scene};
use vqa3d_core::repr::{scene_occlusion, scene_parts};
use vqa3d_core::{sample_scene, Camera, CategoryMesh, MeshLibrary, Pose6D, SceneConfig, Subtype};

fn mesh(name: &str) -> &'static CategoryMesh {
    MeshLibrary::standard().subtype(Subtype::from_name(name).unwrap())
}

fn small_camera() -> Camera {
    Camera {
        focal: 60.0,
        height: 64,
        width: 64,
        downsample: 1,
    }
}

/// Nearest covering face over every face of every object, by explicit
/// barycentric tests at the pixel centre.
fn brute_depth(objects: &[(&CategoryMesh, Pose6D)], camera: &Camera) -> (Vec<f64>, Vec<i32>) {
    let (rows, cols) = camera.grid();
    let mut depth = vec![f64::INFINITY; rows * cols];
    let mut owner = vec![-1; rows * cols];
    for (i, (m, pose)) in objects.iter().enumerate() {
        let v = project_vertices(m, pose, camera).unwrap();
        for face in &m.faces {
            let [a, b, c] = face.map(|k| v[k as usize]);
            if !(a.valid && b.valid && c.valid) {
                continue;
            }
            let cross = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
            let area = cross(a.point, b.point, c.point);
            if area.abs() < 1e-12 {
                continue;
            }
            for r in 0..rows {
                for col in 0..cols {
                    let q = [col as f64 + 0.5, r as f64 + 0.5];
                    let w = [cross(b.point, c.point, q) / area, cross(c.point, a.point, q) / area, cross(a.point, b.point, q) / area];
                    if w.iter().any(|&x| x < 0.0) {
                        continue;
                    }
                    let z = w[0] * a.depth + w[1] * b.depth + w[2] * c.depth;
                    let k = r * cols + col;
                    if z < depth[k] {
                        depth[k] = z;
                        owner[k] = i as i32;
                    }
                }
            }
        }
    }
    (depth, owner)
}

fn overlapping() -> Vec<(&'static CategoryMesh, Pose6D)> {
    vec![
        (mesh("sedan"), Pose6D::new(0.7, 0.35, 9.0, [30.0, 34.0])),
        (mesh("regular bus"), Pose6D::new(2.1, 0.35, 13.0, [36.0, 30.0])),
        (mesh("road bike"), Pose6D::new(4.0, 0.35, 7.0, [26.0, 38.0])),
    ]
}

#[test]
fn z_buffer_matches_brute_force_depth_test() {
    let cam = small_camera();
    let objs = overlapping();
    let out = rasterize_scene(&objs, &cam);
    let (depth, owner) = brute_depth(&objs, &cam);
    let mut overlap = 0;
    for k in 0..depth.len() {
        assert_eq!(out.depth_map[k].is_finite(), depth[k].is_finite(), "pixel {k}");
        if depth[k].is_finite() {
            assert!((out.depth_map[k] - depth[k]).abs() < 1e-9, "pixel {k}");
            assert_eq!(out.instance_map[k], owner[k], "pixel {k}");
            assert!(out.part_map[k] < mesh_at(&objs, owner[k]).parts.len() as i16);
        } else {
            assert_eq!(out.instance_map[k], -1);
            assert_eq!(out.part_map[k], -1);
        }
        let covering = (0..objs.len())
            .filter(|&i| alone_silhouette(i, &objs, &cam).unwrap()[k])
            .count();
        overlap += (covering > 1) as usize;
    }
    assert!(overlap > 20, "objects should overlap, got {overlap} shared pixels");
}

fn mesh_at<'a>(objs: &[(&'a CategoryMesh, Pose6D)], i: i32) -> &'a CategoryMesh {
    objs[i as usize].0
}

#[test]
fn rasterization_is_bit_identical() {
    let objs = overlapping();
    let cam = Camera::default();
    assert_eq!(rasterize_scene(&objs, &cam), rasterize_scene(&objs, &cam));
}

#[test]
fn silhouette_lies_within_projected_vertex_box() {
    let cam = Camera::default();
    for (name, az) in [("sedan", 0.3), ("airliner", 1.9), ("school bus", 4.4), ("dirtbike", 5.5)] {
        let m = mesh(name);
        let pose = Pose6D::new(az, 0.35, 10.0, [64.0, 64.0]);
        let v = project_vertices(m, &pose, &cam).unwrap();
        let xs = v.iter().map(|p| p.point[0]);
        let ys = v.iter().map(|p| p.point[1]);
        let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
        let sil = alone_silhouette(0, &[(m, pose)], &cam).unwrap();
        let cols = cam.grid().1;
        let (mut c0, mut c1, mut r0, mut r1) = (usize::MAX, 0, usize::MAX, 0);
        for k in (0..sil.len()).filter(|&k| sil[k]) {
            let (r, c) = (k / cols, k % cols);
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            assert!(x >= x0 && x <= x1 && y >= y0 && y <= y1, "{name}: pixel ({r},{c}) outside vertex box");
            (c0, c1, r0, r1) = (c0.min(c), c1.max(c), r0.min(r), r1.max(r));
        }
        assert!((c0 as f64 + 0.5 - x0).abs() <= 1.0 && (c1 as f64 + 0.5 - x1).abs() <= 1.0, "{name}");
        assert!((r0 as f64 + 0.5 - y0).abs() <= 1.0 && (r1 as f64 + 0.5 - y1).abs() <= 1.0, "{name}");
    }
}

#[test]
fn alone_silhouette_ignores_other_objects() {
    let cam = Camera::default();
    let objs = overlapping();
    for i in 0..objs.len() {
        let with = alone_silhouette(i, &objs, &cam).unwrap();
        let without = alone_silhouette(0, &objs[i..=i], &cam).unwrap();
        assert_eq!(with, without);
        let alone = rasterize_scene(&objs[i..=i], &cam);
        assert_eq!(alone.instance_map.iter().filter(|&&o| o == 0).count(), with.iter().filter(|&&b| b).count());
    }
}

#[test]
fn occlusion_ratio_matches_pixel_count() {
    let cam = Camera::default();
    let objs = overlapping();
    let full = rasterize_scene(&objs, &cam);
    for i in 0..objs.len() {
        let alone = alone_silhouette(i, &objs, &cam).unwrap();
        let area = alone.iter().filter(|&&b| b).count();
        let visible = full.instance_map.iter().filter(|&&o| o == i as i32).count();
        assert_eq!(occlusion_ratio(i, &objs, &cam).unwrap(), 1.0 - visible as f64 / area as f64);
    }
}

/// Fraction of the entity's alone pixels that object `j` covers when only
/// the two of them are rendered.
fn pairwise_oracle(objs: &[(&CategoryMesh, Pose6D)], owner: usize, part: Option<usize>, j: usize, cam: &Camera) -> f64 {
    let alone = rasterize_scene(&objs[owner..=owner], cam);
    let pair = rasterize_scene(&[objs[owner], objs[j]], cam);
    let mut area = 0;
    let mut hidden = 0;
    for k in 0..alone.pixel_count() {
        let inside = alone.instance_map[k] == 0 && part.is_none_or(|p| alone.part_map[k] == p as i16);
        if inside {
            area += 1;
            hidden += (pair.instance_map[k] == 1 && pair.depth_map[k] < alone.depth_map[k]) as usize;
        }
    }
    if area == 0 {
        0.0
    } else {
        hidden as f64 / area as f64
    }
}

#[test]
fn occlusion_matrix_matches_pairwise_renders() {
    for seed in 0..12 {
        let scene = sample_scene(seed, &SceneConfig::default()).unwrap();
        let objs = scene.mesh_poses();
        let parts = scene_parts(&scene);
        let s = scene_occlusion(&scene, &parts);
        let n = objs.len();
        assert_eq!((s.rows, s.cols), (n + parts.len(), n));
        let rows = (0..n).map(|i| (i, None)).chain(parts.iter().map(|&(o, p)| (o, Some(p))));
        for (r, (owner, part)) in rows.enumerate() {
            for j in 0..n {
                let want = if j == owner { 0.0 } else { pairwise_oracle(&objs, owner, part, j, &scene.camera) };
                assert!((s.get(r, j) - want).abs() < 1e-9, "seed {seed} row {r} col {j}: {} vs {want}", s.get(r, j));
            }
        }
    }
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenes: Vec<_> = (0..3).map(|s| sample_scene(s, &SceneConfig::default()).unwrap()).collect();
    export_dataset(&scenes, dir.path()).unwrap();
    assert_eq!(import_dataset(dir.path()).unwrap(), scenes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adding_an_occluder_never_lowers_occlusion(seed in 0u64..10_000, az in 0.0f64..6.28, dist in 6.0f64..14.0, x in 20.0f64..108.0, y in 30.0f64..100.0) {
        let Ok(scene) = sample_scene(seed, &SceneConfig::default()) else {
            return Ok(());
        };
        let objs = scene.mesh_poses();
        let mut more = objs.clone();
        more.push((mesh("minivan"), Pose6D::new(az, 0.35, dist, [x, y])));
        for i in 0..objs.len() {
            let before = occlusion_ratio(i, &objs, &scene.camera).unwrap();
            let after = occlusion_ratio(i, &more, &scene.camera).unwrap();
            prop_assert!(after >= before, "object {} went from {} to {}", i, before, after);
        }
    }
}
