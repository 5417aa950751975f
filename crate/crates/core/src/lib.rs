//! Geometry, rendering and ground-truth scene generation.

pub mod camera;
pub mod dataset;
pub mod error;
pub mod mesh;
pub mod observe;
pub mod occlusion;
pub mod raster;
pub mod repr;
pub mod scene;
pub mod vocab;

pub use camera::{azimuth_difference, wrap_angle, Camera, Pose6D};
pub use error::{Error, Result};
pub use mesh::{CategoryMesh, MeshLibrary, FEATURE_DIM};
pub use raster::{project_vertices, rasterize_scene, RenderOutput};
pub use repr::SceneRepresentation;
pub use scene::{sample_scene, GroundTruthScene, ObjectSpec, SceneConfig};
pub use vocab::{AttributeKind, Category, Color, Direction, Material, Size, Subtype};
