use crate::error::{Error, Result};

/// Frame size in pixels plus the physical pixel pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
}

impl FrameGeometry {
    pub fn new(width: usize, height: usize, pixel_size: f64) -> Result<Self> {
        let g = Self {
            width,
            height,
            pixel_size,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "frame dimensions must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::Config(format!(
                "pixel size must be positive, got {}",
                self.pixel_size
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical extent `(width_nm, height_nm)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.pixel_size,
            self.height as f64 * self.pixel_size,
        )
    }
}

/// Real-valued image, row-major. Holds expected photons or expected ADU.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonImage {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub values: Vec<f64>,
}

impl PhotonImage {
    pub fn zeros(geometry: FrameGeometry) -> Self {
        Self {
            width: geometry.width,
            height: geometry.height,
            pixel_size: geometry.pixel_size,
            values: vec![0.0; geometry.len()],
        }
    }

    pub fn from_values(geometry: FrameGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::Config(format!(
                "expected {} pixel values, got {}",
                geometry.len(),
                values.len()
            )));
        }
        Ok(Self {
            width: geometry.width,
            height: geometry.height,
            pixel_size: geometry.pixel_size,
            values,
        })
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry {
            width: self.width,
            height: self.height,
            pixel_size: self.pixel_size,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= k);
        out
    }
}

/// Camera output in ADU, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AduFrame {
    pub width: usize,
    pub height: usize,
    /// Stored as raw bits so the type stays `Eq`; see [`AduFrame::pixel_size`].
    pixel_size_bits: u64,
    pub values: Vec<u16>,
}

impl AduFrame {
    pub fn new(geometry: FrameGeometry, values: Vec<u16>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::Config(format!(
                "expected {} pixel values, got {}",
                geometry.len(),
                values.len()
            )));
        }
        Ok(Self {
            width: geometry.width,
            height: geometry.height,
            pixel_size_bits: geometry.pixel_size.to_bits(),
            values,
        })
    }

    pub fn pixel_size(&self) -> f64 {
        f64::from_bits(self.pixel_size_bits)
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry {
            width: self.width,
            height: self.height,
            pixel_size: self.pixel_size(),
        }
    }
}
