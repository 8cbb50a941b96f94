//! Sensor model: shot noise, optional electron multiplication, read noise and
//! quantisation to 16-bit ADU.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::image::{AduFrame, PhotonImage};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::PixelStreams;

pub const ADU_MAX: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Emccd,
    Scmos,
}

/// Six-parameter camera model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraParams {
    pub sensor: Sensor,
    /// Quantum efficiency, in (0, 1].
    pub qe: f64,
    /// Spurious charge, electrons.
    pub spurious: f64,
    /// EM gain; exactly 1 for sCMOS.
    pub em_gain: f64,
    /// Read noise standard deviation, electrons. Zero disables read noise.
    pub read_sigma: f64,
    /// Electrons per ADU.
    pub e_per_adu: f64,
    /// ADU baseline.
    pub baseline: f64,
}

impl CameraParams {
    /// Photometrics Evolve Delta 512 (EMCCD).
    pub const EVOLVE_DELTA_512: CameraParams = CameraParams {
        sensor: Sensor::Emccd,
        qe: 0.90,
        spurious: 0.002,
        em_gain: 300.0,
        read_sigma: 74.4,
        e_per_adu: 45.0,
        baseline: 100.0,
    };

    /// Tucsen Dhyana 400BSI V3 (sCMOS).
    pub const DHYANA_400BSI_V3: CameraParams = CameraParams {
        sensor: Sensor::Scmos,
        qe: 0.95,
        spurious: 0.002,
        em_gain: 1.0,
        read_sigma: 1.535,
        e_per_adu: 0.7471,
        baseline: 100.0,
    };

    pub const PRESET_NAMES: [&'static str; 2] = ["evolve-delta-512", "dhyana-400bsi-v3"];

    pub fn preset(name: &str) -> Option<CameraParams> {
        match name {
            "evolve-delta-512" => Some(Self::EVOLVE_DELTA_512),
            "dhyana-400bsi-v3" => Some(Self::DHYANA_400BSI_V3),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let mut bad = Vec::new();
        if !(positive(self.qe) && self.qe <= 1.0) {
            bad.push("qe");
        }
        if !(self.spurious >= 0.0 && self.spurious.is_finite()) {
            bad.push("spurious");
        }
        if !(positive(self.em_gain) && self.em_gain >= 1.0) {
            bad.push("em_gain");
        }
        if self.sensor == Sensor::Scmos && self.em_gain != 1.0 {
            bad.push("em_gain (must be 1 for sCMOS)");
        }
        // zero is the noiseless limit; the floor of a tiny negative sample
        // would otherwise land one ADU below baseline
        if !(self.read_sigma >= 0.0 && self.read_sigma.is_finite()) {
            bad.push("read_sigma");
        }
        if !positive(self.e_per_adu) {
            bad.push("e_per_adu");
        }
        if !positive(self.baseline) {
            bad.push("baseline");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid camera parameters: {}",
                bad.join(", ")
            )))
        }
    }

    /// EM gain actually applied by the sensor type.
    pub fn effective_gain(&self) -> f64 {
        match self.sensor {
            Sensor::Emccd => self.em_gain,
            Sensor::Scmos => 1.0,
        }
    }

    /// Expected ADU per incident photon, `QE·EM / e_ADU`.
    pub fn adu_per_photon(&self) -> f64 {
        self.qe * self.effective_gain() / self.e_per_adu
    }

    /// One draw of the full chain for a pixel receiving `n` photons.
    pub fn sample_pixel<R: Rng + ?Sized>(&self, n: f64, rng: &mut R) -> u16 {
        let lambda = self.qe * n + self.spurious;
        let n1 = if lambda > 0.0 {
            Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        };
        let n2 = match self.sensor {
            // Gamma(0, EM) is the point mass at zero
            Sensor::Emccd if n1 > 0.0 => Gamma::new(n1, self.em_gain)
                .map(|g| g.sample(rng))
                .unwrap_or(0.0),
            Sensor::Emccd => 0.0,
            Sensor::Scmos => n1,
        };
        let z: f64 = StandardNormal.sample(rng);
        let n3 = n2 + self.read_sigma * z;
        let y = (n3 / self.e_per_adu).floor() + self.baseline;
        y.clamp(0.0, ADU_MAX as f64) as u16
    }
}

const CHUNK: usize = 4096;

/// Noisy camera frame for an expected photon image. Pixel `k` draws from its
/// own stream keyed by `(seed, k)`.
pub fn sample_camera(photons: &PhotonImage, cam: &CameraParams, seed: u64) -> Result<AduFrame> {
    sample_camera_with(Exec::default(), photons, cam, seed)
}

pub fn sample_camera_with(
    exec: Exec,
    photons: &PhotonImage,
    cam: &CameraParams,
    seed: u64,
) -> Result<AduFrame> {
    cam.validate()?;
    if let Some(bad) = photons
        .values
        .iter()
        .find(|v| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(Error::Config(format!(
            "photon image contains invalid value {bad}"
        )));
    }
    let streams = PixelStreams::new(seed);
    let mut out = vec![0u16; photons.values.len()];
    exec.fill_chunks(&mut out, CHUNK, |start, chunk| {
        for (k, y) in chunk.iter_mut().enumerate() {
            let idx = start + k;
            let mut rng = streams.at(idx as u64);
            *y = cam.sample_pixel(photons.values[idx], &mut rng);
        }
    });
    AduFrame::new(photons.geometry(), out)
}

/// Noise-free expected frame in ADU: `(QE·EM / e_ADU)·H + B`. Linear in the
/// photon image and therefore differentiable end to end.
pub fn expected_adu(photons: &PhotonImage, cam: &CameraParams) -> PhotonImage {
    let k = cam.adu_per_photon();
    let mut out = photons.clone();
    out.values
        .iter_mut()
        .for_each(|v| *v = k * *v + cam.baseline);
    out
}
