use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CameraSpec;
use crate::error::{Error, Result};
use crate::physics::{AduFrame, FrameGeometry};

pub const STACK_VERSION: u32 = 1;
pub const STACK_DTYPE: &str = "u16le";

/// Sidecar describing a raw stack: frames are stored frame-major, then
/// row-major, as little-endian `u16`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackHeader {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub dtype: String,
    pub pixel_size_nm: f64,
    pub camera: CameraSpec,
}

impl StackHeader {
    pub fn new(geometry: &FrameGeometry, n_frames: usize, camera: CameraSpec) -> Self {
        Self {
            version: STACK_VERSION,
            width: geometry.width,
            height: geometry.height,
            n_frames,
            dtype: STACK_DTYPE.into(),
            pixel_size_nm: geometry.pixel_size,
            camera,
        }
    }

    pub fn geometry(&self) -> Result<FrameGeometry> {
        FrameGeometry::new(self.width, self.height, self.pixel_size_nm)
    }

    fn check(&self, path: &Path) -> Result<()> {
        let schema = |message: String| Error::Schema {
            path: path.into(),
            message,
        };
        if self.version != STACK_VERSION {
            return Err(schema(format!(
                "unsupported stack version {}",
                self.version
            )));
        }
        if self.dtype != STACK_DTYPE {
            return Err(schema(format!(
                "dtype `{}` is not `{STACK_DTYPE}`",
                self.dtype
            )));
        }
        if self.n_frames == 0 {
            return Err(schema("stack has no frames".into()));
        }
        self.geometry().map_err(|e| schema(e.to_string()))?;
        self.camera.resolve().map_err(|e| schema(e.to_string()))?;
        Ok(())
    }

    fn payload_bytes(&self) -> u64 {
        2 * (self.width * self.height * self.n_frames) as u64
    }
}

/// `<path>.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_stack(path: &Path, camera: CameraSpec, frames: &[AduFrame]) -> Result<StackHeader> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Config("cannot write an empty stack".into()))?;
    let geometry = first.geometry();
    if let Some(k) = frames.iter().position(|f| f.geometry() != geometry) {
        return Err(Error::Config(format!(
            "frame {k} differs in geometry from frame 0"
        )));
    }
    let header = StackHeader::new(&geometry, frames.len(), camera);
    header.check(path)?;
    let mut payload = Vec::with_capacity(header.payload_bytes() as usize);
    for f in frames {
        for v in &f.values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, &payload).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(&header).expect("header serialises");
    json.push('\n');
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(header)
}

pub fn read_stack(path: &Path) -> Result<(StackHeader, Vec<AduFrame>)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: StackHeader = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: side.clone(),
        message: e.to_string(),
    })?;
    header.check(&side)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != header.payload_bytes() {
        return Err(Error::PayloadSize {
            path: path.into(),
            expected: header.payload_bytes(),
            actual: bytes.len() as u64,
        });
    }
    let geometry = header.geometry()?;
    let frames = bytes
        .chunks_exact(2 * geometry.len())
        .map(|chunk| {
            let values = chunk
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]))
                .collect();
            AduFrame::new(geometry, values)
        })
        .collect::<Result<_>>()?;
    Ok((header, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize, w: usize, h: usize) -> Vec<AduFrame> {
        let g = FrameGeometry::new(w, h, 100.0).unwrap();
        (0..n)
            .map(|k| {
                let v = (0..w * h)
                    .map(|i| ((i * 7919 + k * 104729) % 65536) as u16)
                    .collect();
                AduFrame::new(g, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_pixel_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.raw");
        write_stack(&p, CameraSpec::default(), &frames(1, 1, 1)).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 2);
    }

    #[test]
    fn byte_identical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.raw");
        let q = dir.path().join("t.raw");
        let f = frames(3, 5, 4);
        write_stack(&p, CameraSpec::default(), &f).unwrap();
        let (h, back) = read_stack(&p).unwrap();
        assert_eq!(back, f);
        write_stack(&q, h.camera.clone(), &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        assert_eq!(
            std::fs::read(sidecar_path(&p)).unwrap(),
            std::fs::read(sidecar_path(&q)).unwrap()
        );
    }

    #[test]
    fn payload_size_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.raw");
        write_stack(&p, CameraSpec::default(), &frames(2, 3, 3)).unwrap();
        std::fs::write(&p, [0u8; 35]).unwrap();
        match read_stack(&p) {
            Err(Error::PayloadSize {
                expected, actual, ..
            }) => assert_eq!((expected, actual), (36, 35)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_dtype_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.raw");
        write_stack(&p, CameraSpec::default(), &frames(1, 2, 2)).unwrap();
        let side = sidecar_path(&p);
        let text = std::fs::read_to_string(&side)
            .unwrap()
            .replace("u16le", "f32le");
        std::fs::write(&side, text).unwrap();
        assert!(matches!(read_stack(&p), Err(Error::Schema { .. })));
    }
}
