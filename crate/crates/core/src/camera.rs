//! Camera intrinsics and the 6D object pose parameterization.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Minimal absolute circular difference, in `[0, π]`.
pub fn azimuth_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d).clamp(0.0, PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Focal length in feature-grid pixels.
    pub focal: f64,
    pub height: usize,
    pub width: usize,
    /// Image-to-feature-grid downsampling factor.
    pub downsample: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            focal: 110.0,
            height: 128,
            width: 128,
            downsample: 1,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::InvalidInput(format!("focal length {} must be positive", self.focal)));
        }
        if self.downsample == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidInput("camera dimensions must be non-zero".into()));
        }
        if self.height % self.downsample != 0 || self.width % self.downsample != 0 {
            return Err(Error::InvalidInput(format!(
                "image size {}x{} not divisible by downsampling factor {}",
                self.height, self.width, self.downsample
            )));
        }
        Ok(())
    }

    /// Feature grid dimensions `(rows, cols)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.downsample, self.width / self.downsample)
    }

    /// Focal length expressed in grid cells.
    pub fn grid_focal(&self) -> f64 {
        self.focal / self.downsample as f64
    }

    pub fn pixel_count(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn center(&self) -> [f64; 2] {
        let (h, w) = self.grid();
        [w as f64 / 2.0, h as f64 / 2.0]
    }
}

/// Object pose relative to the camera.
///
/// `location` is `[x, y]` on the feature grid (x to the right, y down).
/// The object is rendered at depth `distance` along the viewing ray through
/// `location`, with its own rotation given by azimuth, elevation and theta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6D {
    pub azimuth: f64,
    pub elevation: f64,
    pub theta: f64,
    pub distance: f64,
    pub location: [f64; 2],
}

impl Pose6D {
    pub fn new(azimuth: f64, elevation: f64, distance: f64, location: [f64; 2]) -> Self {
        Self {
            azimuth: wrap_angle(azimuth),
            elevation,
            theta: 0.0,
            distance,
            location,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.azimuth, self.elevation, self.theta, self.distance, self.location[0], self.location[1]]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("pose has non-finite component".into()));
        }
        if self.distance <= 0.0 {
            return Err(Error::InvalidInput(format!("pose distance {} must be positive", self.distance)));
        }
        if !(0.0..TAU).contains(&self.azimuth) {
            return Err(Error::InvalidInput(format!("azimuth {} outside [0, 2π)", self.azimuth)));
        }
        Ok(())
    }

    /// Object-to-camera rotation.
    ///
    /// Object frame: +x left, +y up, +z forward. Camera frame: +x right,
    /// +y down, +z into the scene. At azimuth 0 the object faces the camera;
    /// at 90° its front points to the image left.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sa, ca) = (-self.azimuth).sin_cos();
        let yaw = Matrix3::new(ca, 0.0, sa, 0.0, 1.0, 0.0, -sa, 0.0, ca);
        let facing = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        let (se, ce) = self.elevation.sin_cos();
        let tilt = Matrix3::new(1.0, 0.0, 0.0, 0.0, ce, -se, 0.0, se, ce);
        let (st, ct) = self.theta.sin_cos();
        let roll = Matrix3::new(ct, -st, 0.0, st, ct, 0.0, 0.0, 0.0, 1.0);
        roll * tilt * facing * yaw
    }
}
