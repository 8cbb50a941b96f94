//! Decoder output grid: one candidate per output cell, offsets relative to
//! the cell centre, and the reachable-range mask it implies.

use super::check_capacity;
use crate::error::{Error, Infeasibility, Result};
use crate::physics::{Activation, FrameGeometry};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridCell {
    pub score: f64,
    pub dx: f64,
    pub dy: f64,
    pub z: f64,
    pub photons: f64,
}

impl Default for GridCell {
    fn default() -> Self {
        Self {
            score: 0.5,
            dx: 0.0,
            dy: 0.0,
            z: 0.0,
            photons: 0.0,
        }
    }
}

/// Row-major grid of candidates; cell `i` sits at column `i % width`,
/// row `i / width`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    width: usize,
    height: usize,
    out_pixel: f64,
    range_factor: f64,
    pub cells: Vec<GridCell>,
}

impl PredictionGrid {
    pub fn new(width: usize, height: usize, out_pixel: f64, range_factor: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("prediction grid must be at least 1×1".into()));
        }
        if !(out_pixel > 0.0 && out_pixel.is_finite()) {
            return Err(Error::Config(format!(
                "output pixel must be positive, got {out_pixel}"
            )));
        }
        if !(range_factor > 0.0) {
            return Err(Error::Config(format!(
                "range factor must be positive, got {range_factor}"
            )));
        }
        Ok(Self {
            width,
            height,
            out_pixel,
            range_factor,
            cells: vec![GridCell::default(); width * height],
        })
    }

    /// Grid one 2×2 pooling step below an input frame: half the width and
    /// height, twice the pixel size.
    pub fn for_frame(geometry: &FrameGeometry, range_factor: f64) -> Result<Self> {
        geometry.validate()?;
        if geometry.width < 2 || geometry.height < 2 {
            return Err(Error::Config("frame too small for a pooled grid".into()));
        }
        Self::new(
            geometry.width / 2,
            geometry.height / 2,
            2.0 * geometry.pixel_size,
            range_factor,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn out_pixel(&self) -> f64 {
        self.out_pixel
    }

    pub fn range_factor(&self) -> f64 {
        self.range_factor
    }

    /// Largest offset a cell can express along each lateral axis.
    pub fn half_range(&self) -> f64 {
        0.5 * self.range_factor * self.out_pixel
    }

    pub fn center(&self, i: usize) -> (f64, f64) {
        let (c, r) = (i % self.width, i / self.width);
        (
            (c as f64 + 0.5) * self.out_pixel,
            (r as f64 + 0.5) * self.out_pixel,
        )
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let c = (x / self.out_pixel).floor();
        let r = (y / self.out_pixel).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height)
            .then(|| r as usize * self.width + c as usize)
    }
}

/// Absolute candidates and their scores: cell centre plus clamped offset.
pub fn grid_to_activations(grid: &PredictionGrid) -> (Vec<Activation>, Vec<f64>) {
    let h = grid.half_range();
    grid.cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (cx, cy) = grid.center(i);
            let a = Activation::new(
                cx + c.dx.clamp(-h, h),
                cy + c.dy.clamp(-h, h),
                c.z,
                c.photons,
            );
            (a, c.score)
        })
        .unzip()
}

/// `mask[i·d + j]` is set when target `j` lies outside the square cell `i`
/// can reach. Padding columns `j ≥ N` are never masked.
pub fn range_mask(grid: &PredictionGrid, targets: &[Activation]) -> Result<Vec<bool>> {
    let d = grid.len();
    let n = targets.len();
    check_capacity(d, n)?;
    let h = grid.half_range();
    let mut mask = vec![false; d * d];
    for i in 0..d {
        let (cx, cy) = grid.center(i);
        for (j, t) in targets.iter().enumerate() {
            mask[i * d + j] = (t.x - cx).abs() > h || (t.y - cy).abs() > h;
        }
    }
    if let Some(j) = (0..n).find(|&j| (0..d).all(|i| mask[i * d + j])) {
        return Err(Error::Infeasible(Infeasibility::UnreachableTarget(j)));
    }
    Ok(mask)
}

/// Scales each candidate's photon count by its confidence.
pub fn soft_gate(activations: &[Activation], scores: &[f64]) -> Vec<Activation> {
    activations
        .iter()
        .zip(scores)
        .map(|(a, &s)| Activation {
            photons: s * a.photons,
            ..*a
        })
        .collect()
}
