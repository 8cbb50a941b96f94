use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::SamplingSpec;
use crate::error::{Error, Result};
use crate::metrics::{EfficiencyWeights, MatchSpec, RmseMode};
use crate::otloss::{LossConfig, LossMode, SigmaWeights};
use crate::physics::SplineStack;
use crate::physics::{
    spline_from_stack, AstigmaticGaussian, CameraParams, FrameGeometry, PsfModel,
};
use crate::transport::{EpsilonScale, SinkhornConfig};

/// A camera given either by preset name or by its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum CameraSpec {
    Preset(String),
    Inline(CameraParams),
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self::Preset(CameraParams::PRESET_NAMES[0].into())
    }
}

impl CameraSpec {
    pub fn resolve(&self) -> Result<CameraParams> {
        let cam = match self {
            Self::Preset(name) => CameraParams::preset(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown camera preset `{name}` (known: {})",
                    CameraParams::PRESET_NAMES.join(", ")
                ))
            })?,
            Self::Inline(p) => *p,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl Serialize for CameraSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Preset(name) => s.serialize_str(name),
            Self::Inline(p) => p.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for CameraSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        // Going through a Value keeps field-level messages from CameraParams.
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(name) => Ok(Self::Preset(name)),
            other => CameraParams::deserialize(other)
                .map(Self::Inline)
                .map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub width: usize,
    pub height: usize,
    pub pixel_size_nm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            pixel_size_nm: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsfType {
    #[default]
    Astigmatic,
    /// Cubic spline fitted to a stack sampled from the astigmatic model.
    Spline,
}

/// Knot layout of the synthetic spline calibration. The lateral extent is
/// chosen to cover the astigmatic patch; the axial range covers the
/// sampling range plus one step on either side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplineGridConfig {
    pub voxel_xy_nm: f64,
    pub z_step_nm: f64,
}

impl Default for SplineGridConfig {
    fn default() -> Self {
        Self {
            voxel_xy_nm: 25.0,
            z_step_nm: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfConfig {
    #[serde(rename = "type")]
    pub kind: PsfType,
    pub gaussian: AstigmaticGaussian,
    pub spline: SplineGridConfig,
    /// Overrides the automatic patch radius.
    pub support_radius_px: Option<usize>,
}

impl Default for PsfConfig {
    fn default() -> Self {
        Self {
            kind: PsfType::Astigmatic,
            gaussian: AstigmaticGaussian::default(),
            spline: SplineGridConfig::default(),
            support_radius_px: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSettings {
    pub epsilon: f64,
    pub iters: usize,
    pub epsilon_scale: EpsilonScale,
    pub mode: LossMode,
    pub range_factor: f64,
    /// Diagonal of Σ: x, y, z (nm²) and photons².
    pub sigma: [f64; 4],
    pub norm: [f64; 4],
}

impl Default for LossSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            iters: 20,
            epsilon_scale: EpsilonScale::MedianScaled,
            mode: LossMode::Unrolled,
            range_factor: 1.5,
            sigma: [1.0; 4],
            norm: [1.0; 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    pub tol_lat_nm: f64,
    pub tol_ax_nm: f64,
    pub alpha_lat: f64,
    pub alpha_ax: f64,
    pub rmse_mode: RmseMode,
    pub frc_pixel_nm: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            tol_lat_nm: 250.0,
            tol_ax_nm: 500.0,
            alpha_lat: 1.0,
            alpha_ax: 0.5,
            rmse_mode: RmseMode::PerFrame,
            frc_pixel_nm: 10.0,
        }
    }
}

/// Everything a run needs. Every section and field is optional; missing
/// ones take the defaults: a 64×64 frame of 100 nm pixels, the default
/// astigmatic PSF, the EMCCD preset with 3 % parameter jitter, 10–30
/// activations per frame spread over the frame and ±750 nm in depth, the
/// loss at ε = 1e-4 with 20 iterations and range factor 1.5, and
/// ±250 nm / ±500 nm matching gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub geometry: GeometryConfig,
    pub psf: PsfConfig,
    pub camera: CameraSpec,
    pub jitter_sigma: f64,
    pub sampling: SamplingSpec,
    pub loss: LossSettings,
    pub metrics: MetricSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            psf: PsfConfig::default(),
            camera: CameraSpec::default(),
            jitter_sigma: 0.03,
            sampling: SamplingSpec::default(),
            loss: LossSettings::default(),
            metrics: MetricSettings::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.camera.resolve()?;
        self.sampling.validate()?;
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::Config("jitter_sigma must be non-negative".into()));
        }
        self.loss_config().sinkhorn.validate()?;
        self.sigma()?;
        if !(self.loss.range_factor > 0.0) {
            return Err(Error::Config("range_factor must be positive".into()));
        }
        self.match_spec().validate()?;
        if !(self.metrics.frc_pixel_nm > 0.0) {
            return Err(Error::Config("frc_pixel_nm must be positive".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<FrameGeometry> {
        let g = &self.geometry;
        FrameGeometry::new(g.width, g.height, g.pixel_size_nm)
    }

    pub fn camera(&self) -> Result<CameraParams> {
        self.camera.resolve()
    }

    pub fn psf_model(&self) -> Result<PsfModel> {
        let px = self.geometry.pixel_size_nm;
        let z_max = self.sampling.max_abs_z();
        let astig = match self.psf.support_radius_px {
            Some(r) => PsfModel::astigmatic_with_radius(self.psf.gaussian, px, r)?,
            None => PsfModel::astigmatic(self.psf.gaussian, px, z_max)?,
        };
        match self.psf.kind {
            PsfType::Astigmatic => Ok(astig),
            PsfType::Spline => {
                let grid = &self.psf.spline;
                if !(grid.voxel_xy_nm > 0.0 && grid.z_step_nm > 0.0) {
                    return Err(Error::Config("spline voxel sizes must be positive".into()));
                }
                let half = (astig.support_radius_px() as f64 + 0.5) * px;
                let n_xy = 2 * (half / grid.voxel_xy_nm).ceil() as usize + 1;
                let n_half_z = (z_max / grid.z_step_nm).ceil() as usize + 1;
                let z_first = -(n_half_z as f64) * grid.z_step_nm;
                let stack = SplineStack::from_model(
                    &astig,
                    (n_xy, n_xy, 2 * n_half_z + 1),
                    grid.voxel_xy_nm,
                    z_first,
                    grid.z_step_nm,
                );
                spline_from_stack(&stack, px)
            }
        }
    }

    pub fn sigma(&self) -> Result<SigmaWeights> {
        SigmaWeights::new(self.loss.sigma)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            sinkhorn: SinkhornConfig {
                epsilon: self.loss.epsilon,
                iters: self.loss.iters,
                scale: self.loss.epsilon_scale,
                tol: None,
            },
            mode: self.loss.mode,
            norm: self.loss.norm,
        }
    }

    pub fn match_spec(&self) -> MatchSpec {
        MatchSpec {
            tol_lat: self.metrics.tol_lat_nm,
            tol_ax: self.metrics.tol_ax_nm,
        }
    }

    pub fn weights(&self) -> EfficiencyWeights {
        EfficiencyWeights {
            alpha_lat: self.metrics.alpha_lat,
            alpha_ax: self.metrics.alpha_ax,
        }
    }
}

/// Strict JSON: unknown keys are errors. Empty input means all defaults.
/// Every failure is a configuration error naming `origin`.
pub fn parse_config(text: &str, origin: &Path) -> Result<Config> {
    if text.trim().is_empty() {
        return Ok(Config::default());
    }
    let fail = |msg: String| Error::Config(format!("{}: {msg}", origin.display()));
    let cfg: Config = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
    cfg.validate().map_err(|e| fail(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, path)
}
