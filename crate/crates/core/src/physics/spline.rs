//! Tensor-product cubic B-spline PSF calibrated from a z-stack of bead
//! images. The spline represents the pixel response as a function of the
//! offset between pixel centre and emitter, and interpolates the stack
//! exactly at the knots (natural boundary conditions on every axis).

use super::image::PhotonImage;
use super::psf::PsfModel;
use crate::error::{Error, Result};

/// A z-series of lateral slices on a uniform grid. Slice `k` is at
/// `z_first + k·z_step`; lateral knots are centred on the emitter, with
/// square voxels of side `slices[k].pixel_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineStack {
    pub slices: Vec<PhotonImage>,
    pub z_first: f64,
    pub z_step: f64,
}

impl SplineStack {
    /// Samples `f(ox, oy, z)` on an `nx × ny × nz` knot grid centred laterally
    /// on the origin.
    pub fn sample(
        (nx, ny, nz): (usize, usize, usize),
        voxel_xy: f64,
        z_first: f64,
        z_step: f64,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Self {
        let cx = (nx as f64 - 1.0) / 2.0;
        let cy = (ny as f64 - 1.0) / 2.0;
        let slices = (0..nz)
            .map(|k| {
                let z = z_first + k as f64 * z_step;
                let mut values = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        values.push(f((i as f64 - cx) * voxel_xy, (j as f64 - cy) * voxel_xy, z));
                    }
                }
                PhotonImage {
                    width: nx,
                    height: ny,
                    pixel_size: voxel_xy,
                    values,
                }
            })
            .collect();
        Self {
            slices,
            z_first,
            z_step,
        }
    }

    /// A calibration stack taken from an existing model (e.g. the analytic
    /// Gaussian), sampled at the model's pixel response.
    pub fn from_model(
        model: &PsfModel,
        dims: (usize, usize, usize),
        voxel_xy: f64,
        z_first: f64,
        z_step: f64,
    ) -> Self {
        Self::sample(dims, voxel_xy, z_first, z_step, |ox, oy, z| {
            model.pixel_response(ox, oy, z)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSplinePsf {
    nx: usize,
    ny: usize,
    nz: usize,
    voxel_xy: f64,
    z_first: f64,
    z_step: f64,
    /// `(nz+2) × (ny+2) × (nx+2)` B-spline coefficients, x fastest.
    coeffs: Vec<f64>,
}

/// Natural cubic-spline B-coefficients `c[-1..=n]` (stored shifted by one)
/// interpolating `f` at integer knots.
fn prefilter(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut c = vec![0.0; n + 2];
    c[1] = f[0];
    c[n] = f[n - 1];
    let m = n - 2;
    if m > 0 {
        // tridiagonal (1, 4, 1) system for c_1..c_{n-2}
        let mut rhs: Vec<f64> = (1..=m).map(|i| 6.0 * f[i]).collect();
        rhs[0] -= f[0];
        rhs[m - 1] -= f[n - 1];
        let mut diag = vec![4.0; m];
        for i in 1..m {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        rhs[m - 1] /= diag[m - 1];
        for i in (0..m - 1).rev() {
            rhs[i] = (rhs[i] - rhs[i + 1]) / diag[i];
        }
        c[2..2 + m].copy_from_slice(&rhs);
    }
    c[0] = 2.0 * c[1] - c[2];
    c[n + 1] = 2.0 * c[n] - c[n - 1];
    c
}

/// Knot-cell index and the four basis weights for `t ∈ [0, n-1]`.
#[inline]
fn basis(t: f64, n: usize) -> (usize, [f64; 4]) {
    let i = (t.floor().max(0.0) as usize).min(n - 2);
    let u = t - i as f64;
    let u2 = u * u;
    let u3 = u2 * u;
    let w = [
        (1.0 - u).powi(3) / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ];
    (i, w)
}

const Z_TOL: f64 = 1e-9;

impl CubicSplinePsf {
    pub fn fit(stack: &SplineStack) -> Result<Self> {
        let nz = stack.slices.len();
        let first = stack
            .slices
            .first()
            .ok_or_else(|| Error::Config("empty spline stack".into()))?;
        let (nx, ny, voxel_xy) = (first.width, first.height, first.pixel_size);
        if nx < 4 || ny < 4 || nz < 4 {
            return Err(Error::Config(format!(
                "spline stack must be at least 4 knots on every axis, got {nx}x{ny}x{nz}"
            )));
        }
        if stack
            .slices
            .iter()
            .any(|s| s.width != nx || s.height != ny || s.pixel_size != voxel_xy)
        {
            return Err(Error::Config(
                "spline stack slices differ in shape or voxel size".into(),
            ));
        }
        if !(voxel_xy > 0.0 && stack.z_step > 0.0 && stack.z_first.is_finite()) {
            return Err(Error::Config("spline voxel sizes must be positive".into()));
        }
        if stack
            .slices
            .iter()
            .flat_map(|s| &s.values)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config(
                "spline stack contains non-finite values".into(),
            ));
        }

        let (ex, ey) = (nx + 2, ny + 2);
        // along x
        let mut a = vec![0.0; nz * ny * ex];
        for k in 0..nz {
            for j in 0..ny {
                let row = &stack.slices[k].values[j * nx..(j + 1) * nx];
                let c = prefilter(row);
                a[(k * ny + j) * ex..(k * ny + j + 1) * ex].copy_from_slice(&c);
            }
        }
        // along y
        let mut b = vec![0.0; nz * ey * ex];
        let mut line = vec![0.0; ny];
        for k in 0..nz {
            for i in 0..ex {
                for j in 0..ny {
                    line[j] = a[(k * ny + j) * ex + i];
                }
                for (j, v) in prefilter(&line).into_iter().enumerate() {
                    b[(k * ey + j) * ex + i] = v;
                }
            }
        }
        // along z
        let mut coeffs = vec![0.0; (nz + 2) * ey * ex];
        let mut line = vec![0.0; nz];
        for j in 0..ey {
            for i in 0..ex {
                for k in 0..nz {
                    line[k] = b[(k * ey + j) * ex + i];
                }
                for (k, v) in prefilter(&line).into_iter().enumerate() {
                    coeffs[(k * ey + j) * ex + i] = v;
                }
            }
        }
        Ok(Self {
            nx,
            ny,
            nz,
            voxel_xy,
            z_first: stack.z_first,
            z_step: stack.z_step,
            coeffs,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn voxel_xy(&self) -> f64 {
        self.voxel_xy
    }

    pub fn z_range(&self) -> (f64, f64) {
        (
            self.z_first,
            self.z_first + (self.nz - 1) as f64 * self.z_step,
        )
    }

    pub fn contains_z(&self, z: f64) -> bool {
        let (lo, hi) = self.z_range();
        z >= lo - Z_TOL && z <= hi + Z_TOL
    }

    pub fn lateral_half_extent(&self) -> (f64, f64) {
        (
            (self.nx - 1) as f64 / 2.0 * self.voxel_xy,
            (self.ny - 1) as f64 / 2.0 * self.voxel_xy,
        )
    }

    /// Spline value at lateral offset `(ox, oy)` and depth `z`. Zero outside
    /// the lateral support; `z` is clamped to the axial support.
    pub fn eval(&self, ox: f64, oy: f64, z: f64) -> f64 {
        let tx = ox / self.voxel_xy + (self.nx - 1) as f64 / 2.0;
        let ty = oy / self.voxel_xy + (self.ny - 1) as f64 / 2.0;
        let eps = 1e-12;
        if tx < -eps
            || ty < -eps
            || tx > (self.nx - 1) as f64 + eps
            || ty > (self.ny - 1) as f64 + eps
        {
            return 0.0;
        }
        let tz = ((z - self.z_first) / self.z_step).clamp(0.0, (self.nz - 1) as f64);
        let (i, wx) = basis(tx.clamp(0.0, (self.nx - 1) as f64), self.nx);
        let (j, wy) = basis(ty.clamp(0.0, (self.ny - 1) as f64), self.ny);
        let (k, wz) = basis(tz, self.nz);
        let (ex, ey) = (self.nx + 2, self.ny + 2);
        let mut acc = 0.0;
        for (c, wzc) in wz.iter().enumerate() {
            for (b, wyb) in wy.iter().enumerate() {
                let base = ((k + c) * ey + (j + b)) * ex + i;
                let row = &self.coeffs[base..base + 4];
                let s = row[0] * wx[0] + row[1] * wx[1] + row[2] * wx[2] + row[3] * wx[3];
                acc += wzc * wyb * s;
            }
        }
        acc
    }

    /// Spline evaluated back on its own knot grid.
    pub fn to_stack(&self) -> SplineStack {
        SplineStack::sample(
            (self.nx, self.ny, self.nz),
            self.voxel_xy,
            self.z_first,
            self.z_step,
            |ox, oy, z| self.eval(ox, oy, z),
        )
    }
}

/// Fits a spline to a calibration stack and wraps it as a PSF model for a
/// camera with the given pixel size, normalised at the focal plane.
pub fn spline_from_stack(stack: &SplineStack, pixel_size: f64) -> Result<PsfModel> {
    PsfModel::spline(CubicSplinePsf::fit(stack)?, pixel_size)
}
