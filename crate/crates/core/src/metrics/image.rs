use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::datasets::Localization;
use crate::error::{Error, Result};
use crate::physics::{Activation, FrameGeometry, PhotonImage};
use crate::rng::{stream, Domain};

/// FRC threshold.
pub const FRC_THRESHOLD: f64 = 1.0 / 7.0;

/// 2-D count histogram of `(x, y)` over `[0, extent.0) × [0, extent.1)`,
/// optionally convolved with a normalised Gaussian of `blur` nm. Mass
/// blurred past the border is lost.
pub fn render_histogram(
    locs: &[Activation],
    extent: (f64, f64),
    pixel: f64,
    blur: Option<f64>,
) -> Result<PhotonImage> {
    if !(pixel > 0.0 && pixel.is_finite()) {
        return Err(Error::Config(format!(
            "pixel size must be positive, got {pixel}"
        )));
    }
    if !(extent.0 > 0.0 && extent.1 > 0.0) {
        return Err(Error::Config("histogram extent must be positive".into()));
    }
    let w = (extent.0 / pixel).ceil() as usize;
    let h = (extent.1 / pixel).ceil() as usize;
    let mut v = vec![0.0; w * h];
    for a in locs {
        if a.x >= 0.0 && a.y >= 0.0 && a.x < extent.0 && a.y < extent.1 {
            let c = ((a.x / pixel) as usize).min(w - 1);
            let r = ((a.y / pixel) as usize).min(h - 1);
            v[r * w + c] += 1.0;
        }
    }
    if let Some(sigma) = blur.filter(|s| *s > 0.0) {
        v = gaussian_blur(&v, w, h, sigma / pixel);
    }
    PhotonImage::from_values(FrameGeometry::new(w, h, pixel)?, v)
}

fn gaussian_blur(v: &[f64], w: usize, h: usize, sigma_px: f64) -> Vec<f64> {
    let r = (4.0 * sigma_px).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-0.5 * (i as f64 / sigma_px).powi(2)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|x| *x /= s);
    // 1-D convolution along `len` samples spaced `step` apart from `start`
    let convolve = |src: &[f64], out: &mut [f64], start: usize, len: usize, step: usize| {
        for i in 0..len {
            out[start + i * step] = k
                .iter()
                .enumerate()
                .filter_map(|(t, kt)| {
                    let j = i as isize + t as isize - r;
                    (0..len as isize)
                        .contains(&j)
                        .then(|| kt * src[start + j as usize * step])
                })
                .sum();
        }
    };
    let mut rows = vec![0.0; v.len()];
    for row in 0..h {
        convolve(v, &mut rows, row * w, w, 1);
    }
    let mut out = vec![0.0; v.len()];
    for col in 0..w {
        convolve(&rows, &mut out, col, h, w);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrcSplit {
    /// Each localization goes to either half with probability ½.
    #[default]
    RandomHalf,
    /// Even frames against odd frames.
    EvenOddFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrcResult {
    /// `(spatial frequency in nm⁻¹, correlation)` per ring, excluding DC.
    pub curve: Vec<(f64, f64)>,
    pub resolution_nm: f64,
    /// The curve never fell below the threshold; resolution is the Nyquist bound.
    pub nyquist_limited: bool,
}

/// Fourier ring correlation between histograms of two halves of `locs`.
pub fn frc(
    locs: &[Localization],
    split: FrcSplit,
    extent: (f64, f64),
    pixel: f64,
    seed: u64,
) -> Result<FrcResult> {
    if locs.len() < 2 {
        return Err(Error::Config("FRC needs at least two localizations".into()));
    }
    let mut rng = stream(seed, Domain::FrcSplit, 0);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for l in locs {
        let first = match split {
            FrcSplit::RandomHalf => rng.random::<bool>(),
            FrcSplit::EvenOddFrame => l.frame % 2 == 0,
        };
        if first { &mut a } else { &mut b }.push(l.activation);
    }
    let ia = render_histogram(&a, extent, pixel, None)?;
    let ib = render_histogram(&b, extent, pixel, None)?;
    Ok(frc_images(&ia, &ib))
}

fn fft2(img: &PhotonImage, n: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); n * n];
    for r in 0..img.height {
        for c in 0..img.width {
            buf[r * n + c].re = img.values[r * img.width + c];
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    let mut t = vec![Complex::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            t[c * n + r] = buf[r * n + c];
        }
    }
    fft.process(&mut t);
    t
}

fn frc_images(a: &PhotonImage, b: &PhotonImage) -> FrcResult {
    let n = a.width.max(a.height);
    let fa = fft2(a, n);
    let fb = fft2(b, n);
    let rings = n / 2;
    let mut num = vec![0.0; rings + 1];
    let mut pa = vec![0.0; rings + 1];
    let mut pb = vec![0.0; rings + 1];
    let signed = |k: usize| {
        if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        }
    };
    for u in 0..n {
        for v in 0..n {
            let r = (signed(u).hypot(signed(v))).round() as usize;
            if r > rings {
                continue;
            }
            let (x, y) = (fa[u * n + v], fb[u * n + v]);
            num[r] += (x * y.conj()).re;
            pa[r] += x.norm_sqr();
            pb[r] += y.norm_sqr();
        }
    }
    let df = 1.0 / (n as f64 * a.pixel_size);
    let curve: Vec<(f64, f64)> = (1..=rings)
        .map(|r| {
            let den = (pa[r] * pb[r]).sqrt();
            (r as f64 * df, if den > 0.0 { num[r] / den } else { 0.0 })
        })
        .collect();
    let crossing = curve.iter().position(|&(_, c)| c < FRC_THRESHOLD);
    let (freq, nyquist_limited) = match crossing {
        Some(0) => (curve[0].0, false),
        Some(k) => {
            let ((f0, c0), (f1, c1)) = (curve[k - 1], curve[k]);
            (f0 + (c0 - FRC_THRESHOLD) / (c0 - c1) * (f1 - f0), false)
        }
        None => (0.5 / a.pixel_size, true),
    };
    FrcResult {
        curve,
        resolution_nm: 1.0 / freq,
        nyquist_limited,
    }
}

/// Pearson correlation between `superres`, block-summed onto the grid of
/// `reference`, and `reference`. `None` when either image is constant.
pub fn rsp(superres: &PhotonImage, reference: &PhotonImage) -> Result<Option<f64>> {
    let (w, h) = (reference.width, reference.height);
    if !superres.width.is_multiple_of(w)
        || !superres.height.is_multiple_of(h)
        || superres.width / w != superres.height / h
    {
        return Err(Error::Config(format!(
            "{}×{} image does not tile a {w}×{h} reference",
            superres.width, superres.height
        )));
    }
    let k = superres.width / w;
    let mut down = vec![0.0; w * h];
    for r in 0..superres.height {
        for c in 0..superres.width {
            down[(r / k) * w + c / k] += superres.values[r * superres.width + c];
        }
    }
    Ok(pearson(&down, &reference.values))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(frame: u64, x: f64, y: f64) -> Localization {
        Localization {
            frame,
            activation: Activation::new(x, y, 0.0, 1.0),
            score: None,
        }
    }

    #[test]
    fn single_hot_bin() {
        let img = render_histogram(
            &[Activation::new(25.0, 12.0, 0.0, 1.0)],
            (100.0, 50.0),
            10.0,
            None,
        )
        .unwrap();
        assert_eq!((img.width, img.height), (10, 5));
        assert_eq!(img.get(2, 1), 1.0);
        assert_eq!(img.sum(), 1.0);
    }

    #[test]
    fn blur_preserves_interior_mass() {
        let pts: Vec<_> = (0..50)
            .map(|i| Activation::new(400.0 + i as f64, 500.0, 0.0, 1.0))
            .collect();
        let img = render_histogram(&pts, (1000.0, 1000.0), 10.0, Some(30.0)).unwrap();
        assert!((img.sum() - 50.0).abs() < 1e-9);
        assert!(img.max() < 50.0);
    }

    #[test]
    fn identical_halves_correlate_perfectly() {
        let mut locs = Vec::new();
        for i in 0..200u64 {
            let x = 37.0 + (i as f64 * 13.7) % 900.0;
            let y = 11.0 + (i as f64 * 29.3) % 900.0;
            locs.push(loc(2 * i, x, y));
            locs.push(loc(2 * i + 1, x, y));
        }
        let r = frc(&locs, FrcSplit::EvenOddFrame, (1000.0, 1000.0), 10.0, 0).unwrap();
        assert_eq!(r.curve.len(), 50);
        for (_, c) in &r.curve {
            assert!((c - 1.0).abs() < 1e-10);
        }
        assert!(r.nyquist_limited);
        assert_eq!(r.resolution_nm, 20.0);
    }

    #[test]
    fn rsp_extremes() {
        let g = FrameGeometry::new(4, 4, 100.0).unwrap();
        let vals: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64).collect();
        let a = PhotonImage::from_values(g, vals.clone()).unwrap();
        assert!((rsp(&a, &a).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let m = vals.iter().sum::<f64>() / 16.0;
        let neg = PhotonImage::from_values(g, vals.iter().map(|v| 2.0 * m - v).collect()).unwrap();
        assert!((rsp(&a, &neg).unwrap().unwrap() + 1.0).abs() < 1e-12);
        let flat = PhotonImage::from_values(g, vec![1.0; 16]).unwrap();
        assert_eq!(rsp(&a, &flat).unwrap(), None);
    }

    #[test]
    fn rsp_downscales_by_block_sum() {
        let big = PhotonImage::from_values(
            FrameGeometry::new(4, 2, 50.0).unwrap(),
            vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 2.0],
        )
        .unwrap();
        let small =
            PhotonImage::from_values(FrameGeometry::new(2, 1, 100.0).unwrap(), vec![4.0, 2.0])
                .unwrap();
        assert!((rsp(&big, &small).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let odd = PhotonImage::from_values(FrameGeometry::new(3, 1, 10.0).unwrap(), vec![0.0; 3])
            .unwrap();
        assert!(rsp(&odd, &small).is_err());
    }
}
