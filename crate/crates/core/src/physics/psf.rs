use serde::{Deserialize, Serialize};

use super::image::PhotonImage;
use super::spline::CubicSplinePsf;
use crate::error::{Error, Result};

/// Astigmatic Gaussian PSF. Widths follow
/// `σ_x(z) = σ0_x·sqrt(1 + ((z + c)/d)²)` and `σ_y(z) = σ0_y·sqrt(1 + ((z − c)/d)²)`
/// with `c = astig_depth` and `d = focal_shift`, so an emitter above focus
/// (`z > 0`) is elongated along x and one below focus along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AstigmaticGaussian {
    pub sigma0_x: f64,
    pub sigma0_y: f64,
    pub astig_depth: f64,
    pub focal_shift: f64,
}

impl Default for AstigmaticGaussian {
    fn default() -> Self {
        Self {
            sigma0_x: 150.0,
            sigma0_y: 150.0,
            astig_depth: 400.0,
            focal_shift: 400.0,
        }
    }
}

impl AstigmaticGaussian {
    pub fn sigmas(&self, z: f64) -> (f64, f64) {
        let sx = self.sigma0_x * (1.0 + ((z + self.astig_depth) / self.focal_shift).powi(2)).sqrt();
        let sy = self.sigma0_y * (1.0 + ((z - self.astig_depth) / self.focal_shift).powi(2)).sqrt();
        (sx, sy)
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.sigma0_x, self.sigma0_y, self.focal_shift]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && self.astig_depth.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid astigmatic PSF parameters {self:?}"
            )))
        }
    }

    /// Largest width over `|z| ≤ z_max`; the widths are convex in z so the
    /// maximum sits at an endpoint.
    fn max_sigma(&self, z_max: f64) -> f64 {
        let (a, b) = self.sigmas(z_max);
        let (c, d) = self.sigmas(-z_max);
        a.max(b).max(c).max(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsfKind {
    Astigmatic(AstigmaticGaussian),
    Spline(CubicSplinePsf),
}

/// An evaluatable PSF bound to a pixel pitch. Patches are scaled by one
/// global constant so that the centred focal-plane patch sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfModel {
    kind: PsfKind,
    pixel_size: f64,
    support_radius_px: usize,
    scale: f64,
}

/// Mass of `N(0, σ²)` on `[lo, hi]`.
fn gauss_interval(lo: f64, hi: f64, sigma: f64) -> f64 {
    let k = std::f64::consts::FRAC_1_SQRT_2 / sigma;
    0.5 * (libm::erf(hi * k) - libm::erf(lo * k))
}

impl PsfModel {
    /// Astigmatic Gaussian whose patch radius covers 3σ at the widest depth
    /// in `|z| ≤ z_max`, plus half a pixel for the sub-pixel offset.
    pub fn astigmatic(params: AstigmaticGaussian, pixel_size: f64, z_max: f64) -> Result<Self> {
        params.validate()?;
        check_pixel(pixel_size)?;
        let r = (3.0 * params.max_sigma(z_max.abs()) / pixel_size + 0.5).ceil() as usize;
        Self::astigmatic_with_radius(params, pixel_size, r.max(1))
    }

    pub fn astigmatic_with_radius(
        params: AstigmaticGaussian,
        pixel_size: f64,
        support_radius_px: usize,
    ) -> Result<Self> {
        params.validate()?;
        Self::build(PsfKind::Astigmatic(params), pixel_size, support_radius_px)
    }

    /// Wraps a spline calibration. The patch radius is the largest that fits
    /// inside the spline's lateral support.
    pub fn spline(spline: CubicSplinePsf, pixel_size: f64) -> Result<Self> {
        check_pixel(pixel_size)?;
        let (hx, hy) = spline.lateral_half_extent();
        let r = (hx.min(hy) / pixel_size).floor() as usize;
        if r < 1 {
            return Err(Error::Config(format!(
                "spline lateral support ±{:.1} nm is smaller than one {pixel_size} nm pixel",
                hx.min(hy)
            )));
        }
        if !spline.contains_z(0.0) {
            return Err(Error::Config(
                "spline axial support does not contain the focal plane".into(),
            ));
        }
        Self::build(PsfKind::Spline(spline), pixel_size, r)
    }

    fn build(kind: PsfKind, pixel_size: f64, support_radius_px: usize) -> Result<Self> {
        check_pixel(pixel_size)?;
        if support_radius_px < 1 {
            return Err(Error::Config(
                "PSF support radius must be at least 1 pixel".into(),
            ));
        }
        let mut model = Self {
            kind,
            pixel_size,
            support_radius_px,
            scale: 1.0,
        };
        let mass: f64 = model.raw_patch(0.0, 0.0, 0.0).iter().sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config(format!("focal-plane PSF mass is {mass}")));
        }
        model.scale = 1.0 / mass;
        Ok(model)
    }

    pub fn kind(&self) -> &PsfKind {
        &self.kind
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn support_radius_px(&self) -> usize {
        self.support_radius_px
    }

    pub fn patch_side(&self) -> usize {
        2 * self.support_radius_px + 1
    }

    /// Focal-plane normalisation constant applied to every patch.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Axial range over which the model is defined, if bounded.
    pub fn z_support(&self) -> Option<(f64, f64)> {
        match &self.kind {
            PsfKind::Astigmatic(_) => None,
            PsfKind::Spline(s) => Some(s.z_range()),
        }
    }

    /// Normalised value of the pixel whose centre sits at `(ox, oy)` from the
    /// emitter.
    pub fn pixel_response(&self, ox: f64, oy: f64, z: f64) -> f64 {
        self.scale * self.raw_pixel(ox, oy, z)
    }

    fn raw_pixel(&self, ox: f64, oy: f64, z: f64) -> f64 {
        match &self.kind {
            PsfKind::Astigmatic(g) => {
                let (sx, sy) = g.sigmas(z);
                let h = 0.5 * self.pixel_size;
                gauss_interval(ox - h, ox + h, sx) * gauss_interval(oy - h, oy + h, sy)
            }
            PsfKind::Spline(s) => s.eval(ox, oy, z).max(0.0),
        }
    }

    fn raw_patch(&self, dx: f64, dy: f64, z: f64) -> Vec<f64> {
        let r = self.support_radius_px as i64;
        let side = self.patch_side();
        let p = self.pixel_size;
        let mut out = Vec::with_capacity(side * side);
        match &self.kind {
            // separable: 2(2r+1) erf pairs instead of (2r+1)²
            PsfKind::Astigmatic(g) => {
                let (sx, sy) = g.sigmas(z);
                let h = 0.5 * p;
                let wx: Vec<f64> = (-r..=r)
                    .map(|u| {
                        let o = u as f64 * p - dx;
                        gauss_interval(o - h, o + h, sx)
                    })
                    .collect();
                for v in -r..=r {
                    let o = v as f64 * p - dy;
                    let wy = gauss_interval(o - h, o + h, sy);
                    out.extend(wx.iter().map(|w| w * wy));
                }
            }
            PsfKind::Spline(_) => {
                for v in -r..=r {
                    for u in -r..=r {
                        out.push(self.raw_pixel(u as f64 * p - dx, v as f64 * p - dy, z));
                    }
                }
            }
        }
        out
    }

    /// Normalised `(2r+1)²` patch, row-major, for an emitter displaced by
    /// `(dx, dy)` nm from the centre of the patch's middle pixel.
    pub fn patch_values(&self, dx: f64, dy: f64, z: f64) -> Result<Vec<f64>> {
        if !(dx.abs() < self.pixel_size && dy.abs() < self.pixel_size) {
            return Err(Error::OutOfRange {
                what: "sub-pixel offset",
                value: if dx.abs() >= dy.abs() { dx } else { dy },
                min: -self.pixel_size,
                max: self.pixel_size,
            });
        }
        if let PsfKind::Spline(s) = &self.kind {
            if !s.contains_z(z) {
                let (lo, hi) = s.z_range();
                return Err(Error::OutOfRange {
                    what: "z",
                    value: z,
                    min: lo,
                    max: hi,
                });
            }
        }
        let mut v = self.raw_patch(dx, dy, z);
        v.iter_mut().for_each(|x| *x *= self.scale);
        Ok(v)
    }
}

fn check_pixel(pixel_size: f64) -> Result<()> {
    if pixel_size > 0.0 && pixel_size.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "pixel size must be positive, got {pixel_size}"
        )))
    }
}

/// The image of a single point source displaced by `(dx, dy)` from the
/// central pixel of a `(2r+1)²` patch.
pub fn psf_patch(model: &PsfModel, dx: f64, dy: f64, z: f64) -> Result<PhotonImage> {
    let side = model.patch_side();
    Ok(PhotonImage {
        width: side,
        height: side,
        pixel_size: model.pixel_size(),
        values: model.patch_values(dx, dy, z)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> PsfModel {
        PsfModel::astigmatic(AstigmaticGaussian::default(), 100.0, 750.0).unwrap()
    }

    #[test]
    fn focal_plane_patch_is_normalised() {
        let m = model();
        let p = psf_patch(&m, 0.0, 0.0, 0.0).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12);
        // the Gaussian integrates to one over the plane, so the global scale
        // barely moves it
        assert!((m.scale() - 1.0).abs() < 1e-6);
        let c = m.support_radius_px();
        assert_eq!(p.max(), p.get(c, c));
        // σ_x = σ_y at focus, so the centred patch is symmetric under transposition
        for r in 0..p.height {
            for q in 0..p.width {
                assert!((p.get(q, r) - p.get(r, q)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn truncation_loses_under_one_percent() {
        let m = model();
        for z in [-750.0, -300.0, 0.0, 300.0, 750.0] {
            for (dx, dy) in [(0.0, 0.0), (-49.9, 49.9), (49.9, -10.0)] {
                let s = psf_patch(&m, dx, dy, z).unwrap().sum();
                assert!(s > 0.99 && s <= 1.0 + 1e-9, "z={z} mass={s}");
            }
        }
    }

    #[test]
    fn astigmatism_flips_elongation_axis() {
        let g = AstigmaticGaussian::default();
        let m = model();
        let c = m.support_radius_px();
        let spread = |img: &PhotonImage| {
            let (mut vx, mut vy) = (0.0, 0.0);
            for r in 0..img.height {
                for q in 0..img.width {
                    let w = img.get(q, r);
                    vx += w * (q as f64 - c as f64).powi(2);
                    vy += w * (r as f64 - c as f64).powi(2);
                }
            }
            (vx, vy)
        };
        let (ax, ay) = spread(&psf_patch(&m, 0.0, 0.0, g.astig_depth).unwrap());
        assert!(ax > 2.0 * ay);
        let (bx, by) = spread(&psf_patch(&m, 0.0, 0.0, -g.astig_depth).unwrap());
        assert!(by > 2.0 * bx);
    }

    #[test]
    fn offset_outside_one_pixel_rejected() {
        let m = model();
        assert!(matches!(
            psf_patch(&m, 100.0, 0.0, 0.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn zero_radius_rejected() {
        assert!(PsfModel::astigmatic_with_radius(AstigmaticGaussian::default(), 100.0, 0).is_err());
    }
}
