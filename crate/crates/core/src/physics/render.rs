use super::image::{FrameGeometry, PhotonImage};
use super::psf::PsfModel;
use super::Activation;
use crate::error::{Error, Result};

/// Pixel containing `(x, y)` and the emitter's offset from that pixel's
/// centre, in nm.
pub fn pixel_of(x: f64, y: f64, pixel_size: f64) -> ((i64, i64), (f64, f64)) {
    let col = (x / pixel_size).floor();
    let row = (y / pixel_size).floor();
    let dx = x - (col + 0.5) * pixel_size;
    let dy = y - (row + 0.5) * pixel_size;
    ((col as i64, row as i64), (dx, dy))
}

/// Expected photon image of an activation set: the photon-weighted sum of
/// PSF patches. Activations partly or fully off the frame contribute only
/// their in-frame tail.
pub fn render_frame(
    activations: &[Activation],
    model: &PsfModel,
    geometry: FrameGeometry,
) -> Result<PhotonImage> {
    geometry.validate()?;
    if geometry.pixel_size != model.pixel_size() {
        return Err(Error::Config(format!(
            "frame pixel size {} nm differs from the PSF model's {} nm",
            geometry.pixel_size,
            model.pixel_size()
        )));
    }
    let mut img = PhotonImage::zeros(geometry);
    let r = model.support_radius_px() as i64;
    let side = model.patch_side();
    let (w, h) = (geometry.width as i64, geometry.height as i64);
    for a in activations {
        if !a.is_valid() {
            return Err(Error::Config(format!("invalid activation {a:?}")));
        }
        let ((col, row), (dx, dy)) = pixel_of(a.x, a.y, geometry.pixel_size);
        if col + r < 0 || row + r < 0 || col - r >= w || row - r >= h {
            continue;
        }
        let patch = model.patch_values(dx, dy, a.z)?;
        for v in 0..side as i64 {
            let y = row + v - r;
            if y < 0 || y >= h {
                continue;
            }
            for u in 0..side as i64 {
                let x = col + u - r;
                if x < 0 || x >= w {
                    continue;
                }
                img.values[(y * w + x) as usize] +=
                    a.photons * patch[(v * side as i64 + u) as usize];
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{psf_patch, AstigmaticGaussian};

    fn setup() -> (PsfModel, FrameGeometry) {
        let m = PsfModel::astigmatic(AstigmaticGaussian::default(), 100.0, 750.0).unwrap();
        (m, FrameGeometry::new(40, 32, 100.0).unwrap())
    }

    #[test]
    fn empty_set_is_black() {
        let (m, g) = setup();
        let img = render_frame(&[], &m, g).unwrap();
        assert!(img.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_emitter_mass_matches_patch() {
        let (m, g) = setup();
        let a = Activation::new(2012.0, 1530.0, 0.0, 1000.0);
        let img = render_frame(&[a], &m, g).unwrap();
        let ((_, _), (dx, dy)) = pixel_of(a.x, a.y, 100.0);
        let oracle = 1000.0 * psf_patch(&m, dx, dy, 0.0).unwrap().sum();
        assert!((img.sum() - oracle).abs() < 1e-9);
        // centre pixel is the brightest
        let (c, r) = (20, 15);
        assert_eq!(img.max(), img.get(c, r));
    }

    #[test]
    fn pixel_centres_at_half_integers() {
        let ((c, r), (dx, dy)) = pixel_of(150.0, 250.0, 100.0);
        assert_eq!((c, r), (1, 2));
        assert_eq!((dx, dy), (0.0, 0.0));
        let ((c, _), (dx, _)) = pixel_of(-10.0, 0.0, 100.0);
        assert_eq!(c, -1);
        assert!((dx - 40.0).abs() < 1e-12);
    }

    #[test]
    fn off_frame_emitter_adds_only_its_tail() {
        let (m, g) = setup();
        let far = Activation::new(-5000.0, 100.0, 0.0, 1e4);
        assert_eq!(render_frame(&[far], &m, g).unwrap().sum(), 0.0);
        let edge = Activation::new(-60.0, 1500.0, 0.0, 1e4);
        let s = render_frame(&[edge], &m, g).unwrap().sum();
        assert!(s > 0.0 && s < 0.6e4);
    }

    #[test]
    fn pixel_mismatch_rejected() {
        let (m, _) = setup();
        let g = FrameGeometry::new(8, 8, 65.0).unwrap();
        assert!(render_frame(&[], &m, g).is_err());
    }
}
