//! Ground-truth scene sampling.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Pose6D};
use crate::error::{Error, Result};
use crate::mesh::{CategoryMesh, MeshLibrary};
use crate::occlusion::{alone_buffers, occlusion_ratios, part_areas};
use crate::raster::{rasterize_scene, RenderOutput};
use crate::vocab::{Category, Color, Material, Size, Subtype};

/// Attribute-map value on background pixels.
pub const NO_ATTRIBUTE: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub camera: Camera,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Indexed like [`Category::ALL`].
    pub category_weights: [f64; 5],
    pub camera_height: f64,
    /// Downward tilt of the camera rig in radians; also every object's elevation.
    pub tilt: f64,
    /// Ground-plane depth range in front of the camera.
    pub ground_near: f64,
    pub ground_far: f64,
    /// Half-width of the placement area as a fraction of view depth.
    pub lateral: f64,
    pub placement_tries: usize,
    pub max_attempts: usize,
    /// Objects whose alone-silhouette is smaller than this are re-placed.
    pub min_area: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            camera: Camera::default(),
            min_objects: 3,
            max_objects: 10,
            category_weights: [0.2; 5],
            camera_height: 4.0,
            tilt: 20f64.to_radians(),
            ground_near: 6.0,
            ground_far: 15.0,
            lateral: 0.3,
            placement_tries: 200,
            max_attempts: 100,
            min_area: 40,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::InvalidInput(format!(
                "object count range [{}, {}] is empty",
                self.min_objects, self.max_objects
            )));
        }
        if self.category_weights.iter().any(|w| !(*w >= 0.0)) || self.category_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidInput("category weights must be non-negative and not all zero".into()));
        }
        if !(self.ground_near > 0.0 && self.ground_far > self.ground_near) {
            return Err(Error::InvalidInput("ground depth range is empty".into()));
        }
        Ok(())
    }

    /// Camera coordinates of the point at lateral offset `gx`, height `y`
    /// and forward ground distance `gz`.
    fn view(&self, gx: f64, y: f64, gz: f64) -> [f64; 3] {
        let (s, c) = self.tilt.sin_cos();
        let dy = y - self.camera_height;
        [gx, -dy * c - gz * s, -dy * s + gz * c]
    }

    /// Range of object-centre depths reachable by sampled placements.
    pub fn depth_range(&self) -> (f64, f64) {
        let near = self.view(0.0, 0.8, self.ground_near)[2];
        let far = self.view(0.0, 0.3, self.ground_far)[2];
        (near, far)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub subtype: Subtype,
    pub category: Category,
    pub color: Color,
    pub material: Material,
    pub size: Size,
    pub pose: Pose6D,
    /// Ground-plane position `[x, z]` of the object centre.
    pub ground: [f64; 2],
    /// Indexed like `subtype.parts()`.
    pub part_colors: Vec<Color>,
    pub part_materials: Vec<Material>,
}

impl ObjectSpec {
    pub fn parts(&self) -> &'static [&'static str] {
        self.subtype.parts()
    }

    pub fn mesh(&self) -> &'static CategoryMesh {
        MeshLibrary::standard().subtype(self.subtype)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartArea {
    pub alone: usize,
    pub visible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub seed: u64,
    pub camera: Camera,
    pub objects: Vec<ObjectSpec>,
    pub render: RenderOutput,
    pub occlusion: Vec<f64>,
    pub part_areas: Vec<Vec<PartArea>>,
    /// Per pixel `[color, material, size, subtype]` of the covering entity.
    pub attribute_map: Vec<[u8; 4]>,
}

impl GroundTruthScene {
    /// Renders objects and fills in all derived products.
    pub fn build(seed: u64, camera: Camera, objects: Vec<ObjectSpec>) -> Result<Self> {
        camera.validate()?;
        for o in &objects {
            o.pose.validate()?;
            if o.category != o.subtype.category() {
                return Err(Error::InvalidInput(format!("{} is not a {}", o.subtype, o.category)));
            }
            let np = o.parts().len();
            if o.part_colors.len() != np || o.part_materials.len() != np {
                return Err(Error::InvalidInput(format!("{} needs {np} part attributes", o.subtype)));
            }
        }
        let pairs: Vec<(&CategoryMesh, Pose6D)> = objects.iter().map(|o| (o.mesh(), o.pose)).collect();
        let render = rasterize_scene(&pairs, &camera);
        let alone = alone_buffers(&pairs, &camera);
        let occlusion = occlusion_ratios(&alone, &render)
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::InvalidInput(format!("object {i} is not visible"))))
            .collect::<Result<Vec<f64>>>()?;
        let part_areas = pairs
            .iter()
            .enumerate()
            .map(|(i, (mesh, _))| {
                part_areas(i, mesh, &alone[i], &render)
                    .into_iter()
                    .map(|(alone, visible)| PartArea { alone, visible })
                    .collect()
            })
            .collect();
        let attribute_map = attribute_map(&objects, &render);
        Ok(Self {
            seed,
            camera,
            objects,
            render,
            occlusion,
            part_areas,
            attribute_map,
        })
    }

    pub fn mesh_poses(&self) -> Vec<(&'static CategoryMesh, Pose6D)> {
        self.objects.iter().map(|o| (o.mesh(), o.pose)).collect()
    }

    pub fn visible_pixels(&self, index: usize) -> usize {
        self.render.instance_map.iter().filter(|&&i| i == index as i32).count()
    }
}

fn attribute_map(objects: &[ObjectSpec], render: &RenderOutput) -> Vec<[u8; 4]> {
    (0..render.pixel_count())
        .map(|k| {
            let i = render.instance_map[k];
            if i < 0 {
                return [NO_ATTRIBUTE; 4];
            }
            let o = &objects[i as usize];
            let (color, material) = match render.part_map[k] {
                p if p >= 0 => (o.part_colors[p as usize], o.part_materials[p as usize]),
                _ => (o.color, o.material),
            };
            [color.index() as u8, material.index() as u8, o.size.index() as u8, o.subtype.index() as u8]
        })
        .collect()
}

/// Samples a scene of non-overlapping objects on the ground plane.
pub fn sample_scene(seed: u64, config: &SceneConfig) -> Result<GroundTruthScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(config.min_objects..=config.max_objects);
    let total: f64 = config.category_weights.iter().sum();
    let mut specs: Vec<ObjectSpec> = (0..count)
        .map(|_| {
            let mut u = rng.random_range(0.0..total);
            let mut category = Category::ALL[4];
            for (c, w) in Category::ALL.iter().zip(config.category_weights) {
                if u < w {
                    category = *c;
                    break;
                }
                u -= w;
            }
            let subtypes: Vec<Subtype> = category.subtypes().collect();
            let subtype = *subtypes.choose(&mut rng).expect("every category has subtypes");
            let color = *Color::ALL.choose(&mut rng).unwrap();
            let material = *Material::ALL.choose(&mut rng).unwrap();
            let size = *Size::ALL.choose(&mut rng).unwrap();
            let np = subtype.parts().len();
            let part_colors = (0..np)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        color
                    } else {
                        *Color::ALL.choose(&mut rng).unwrap()
                    }
                })
                .collect();
            let part_materials = (0..np)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        material
                    } else {
                        *Material::ALL.choose(&mut rng).unwrap()
                    }
                })
                .collect();
            ObjectSpec {
                subtype,
                category,
                color,
                material,
                size,
                pose: Pose6D::new(0.0, config.tilt, 1.0, [0.0, 0.0]),
                ground: [0.0, 0.0],
                part_colors,
                part_materials,
            }
        })
        .collect();

    let attempts = config.max_attempts.max(1);
    for _ in 0..attempts {
        if !place_all(&mut specs, config, &mut rng) {
            continue;
        }
        let big_enough = specs.iter().all(|o| {
            let mut zb = crate::raster::ZBuffer::for_camera(&config.camera);
            zb.draw(0, o.mesh(), &o.pose, &config.camera);
            zb.area() >= config.min_area.max(1)
        });
        if big_enough {
            return GroundTruthScene::build(seed, config.camera, specs);
        }
    }
    Err(Error::SamplingExhausted { attempts })
}

/// Footprint radius of a mesh on the ground plane.
fn footprint(mesh: &CategoryMesh) -> f64 {
    mesh.vertices.iter().map(|v| v.x.hypot(v.z)).fold(0.0, f64::max)
}

fn place_all(specs: &mut [ObjectSpec], config: &SceneConfig, rng: &mut ChaCha8Rng) -> bool {
    let mut placed: Vec<([f64; 2], f64)> = Vec::with_capacity(specs.len());
    let (rows, cols) = config.camera.grid();
    let f = config.camera.grid_focal();
    let center = config.camera.center();
    for spec in specs.iter_mut() {
        let mesh = spec.mesh();
        let radius = footprint(mesh);
        let lift = -mesh.vertices.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
        let mut ok = false;
        for _ in 0..config.placement_tries {
            let gz = rng.random_range(config.ground_near..config.ground_far);
            let depth_here = config.view(0.0, lift, gz)[2];
            let half = config.lateral * depth_here;
            let gx = rng.random_range(-half..half);
            if placed
                .iter()
                .any(|(p, r)| (p[0] - gx).hypot(p[1] - gz) <= r + radius)
            {
                continue;
            }
            let v = config.view(gx, lift, gz);
            let location = [center[0] + f * v[0] / v[2], center[1] + f * v[1] / v[2]];
            if !(0.0..cols as f64).contains(&location[0]) || !(0.0..rows as f64).contains(&location[1]) {
                continue;
            }
            let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
            spec.pose = Pose6D::new(azimuth, config.tilt, v[2], location);
            spec.ground = [gx, gz];
            placed.push(([gx, gz], radius));
            ok = true;
            break;
        }
        if !ok {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_count_and_determinism() {
        let cfg = SceneConfig {
            min_objects: 3,
            max_objects: 3,
            ..SceneConfig::default()
        };
        let a = sample_scene(7, &cfg).unwrap();
        let b = sample_scene(7, &cfg).unwrap();
        assert_eq!(a.objects.len(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn placements_do_not_overlap() {
        let cfg = SceneConfig::default();
        for seed in 0..20 {
            let s = sample_scene(seed, &cfg).unwrap();
            for (i, a) in s.objects.iter().enumerate() {
                for b in &s.objects[i + 1..] {
                    let d = (a.ground[0] - b.ground[0]).hypot(a.ground[1] - b.ground[1]);
                    assert!(d > footprint(a.mesh()) + footprint(b.mesh()));
                }
                assert_eq!(a.pose.theta, 0.0);
            }
        }
    }

    #[test]
    fn attribute_map_follows_instances() {
        let s = sample_scene(3, &SceneConfig::default()).unwrap();
        for k in 0..s.render.pixel_count() {
            let i = s.render.instance_map[k];
            if i < 0 {
                assert_eq!(s.attribute_map[k], [NO_ATTRIBUTE; 4]);
            } else {
                assert_eq!(s.attribute_map[k][3] as usize, s.objects[i as usize].subtype.index());
            }
        }
    }

    #[test]
    fn impossible_config_exhausts() {
        let cfg = SceneConfig {
            min_objects: 10,
            max_objects: 10,
            ground_near: 6.0,
            ground_far: 6.5,
            lateral: 0.05,
            placement_tries: 5,
            max_attempts: 3,
            ..SceneConfig::default()
        };
        assert!(matches!(sample_scene(1, &cfg), Err(Error::SamplingExhausted { attempts: 3 })));
    }
}
