//! Image formation: point-spread functions, noiseless rendering of emitter
//! sets, the stochastic camera chain and its differentiable expectation.
//!
//! Coordinates are in nanometres with the origin at the top-left corner of
//! the frame. Pixel `(col, row)` covers `[col·p, (col+1)·p) × [row·p, (row+1)·p)`
//! so its centre sits at half-integer pixel coordinates. The same convention
//! is used by the metrics and the prediction-grid code.

mod camera;
mod image;
mod psf;
mod render;
mod spline;

pub use camera::{expected_adu, sample_camera, sample_camera_with, CameraParams, Sensor, ADU_MAX};
pub use image::{AduFrame, FrameGeometry, PhotonImage};
pub use psf::{psf_patch, AstigmaticGaussian, PsfKind, PsfModel};
pub use render::{pixel_of, render_frame};
pub use spline::{spline_from_stack, CubicSplinePsf, SplineStack};

use serde::{Deserialize, Serialize};

/// One emission event: lateral position, depth relative to the focal plane,
/// and emitted photon count.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Activation {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub photons: f64,
}

impl Activation {
    pub fn new(x: f64, y: f64, z: f64, photons: f64) -> Self {
        Self { x, y, z, photons }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.photons]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.photons >= 0.0
    }
}
