//! Synthetic ground truth and frame sequences: i.i.d. activation sampling,
//! camera-parameter jitter, full sequence simulation, temporal binning for
//! high-density benchmarks, and a mock predictor with known error rates.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::physics::{
    render_frame, sample_camera_with, Activation, AduFrame, CameraParams, FrameGeometry,
    PhotonImage, PsfModel, Sensor,
};
use crate::rng::{derive_seed, stream, Domain};

/// Ground truth of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub activations: Vec<Activation>,
}

/// A scored candidate activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub activation: Activation,
    pub score: f64,
}

/// Predictions for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionRecord {
    pub frame_index: u64,
    pub detections: Vec<Detection>,
}

/// One row of a localization table: ground truth has no score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub frame: u64,
    pub activation: Activation,
    pub score: Option<f64>,
}

pub fn records_to_locs(records: &[FrameRecord]) -> Vec<Localization> {
    records
        .iter()
        .flat_map(|r| {
            r.activations.iter().map(|&activation| Localization {
                frame: r.frame_index,
                activation,
                score: None,
            })
        })
        .collect()
}

pub fn predictions_to_locs(preds: &[PredictionRecord]) -> Vec<Localization> {
    preds
        .iter()
        .flat_map(|r| {
            r.detections.iter().map(|d| Localization {
                frame: r.frame_index,
                activation: d.activation,
                score: Some(d.score),
            })
        })
        .collect()
}

fn group_by_frame(locs: &[Localization]) -> BTreeMap<u64, Vec<&Localization>> {
    let mut map: BTreeMap<u64, Vec<&Localization>> = BTreeMap::new();
    for l in locs {
        map.entry(l.frame).or_default().push(l);
    }
    map
}

/// Groups rows by frame in ascending frame order, keeping row order within
/// a frame.
pub fn locs_to_records(locs: &[Localization]) -> Vec<FrameRecord> {
    group_by_frame(locs)
        .into_iter()
        .map(|(frame_index, rows)| FrameRecord {
            frame_index,
            activations: rows.iter().map(|l| l.activation).collect(),
        })
        .collect()
}

/// As [`locs_to_records`]; rows without a score count as certain (score 1).
pub fn locs_to_predictions(locs: &[Localization]) -> Vec<PredictionRecord> {
    group_by_frame(locs)
        .into_iter()
        .map(|(frame_index, rows)| PredictionRecord {
            frame_index,
            detections: rows
                .iter()
                .map(|l| Detection {
                    activation: l.activation,
                    score: l.score.unwrap_or(1.0),
                })
                .collect(),
        })
        .collect()
}

/// Uniform activation distribution. Counts are uniform on
/// `[count_min, count_max]`; every coordinate is independently uniform over
/// its range. A range with equal ends is a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSpec {
    pub count_min: usize,
    pub count_max: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    pub photon_range: (f64, f64),
}

impl Default for SamplingSpec {
    /// 10–30 activations over a 64×64 frame of 100 nm pixels and ±750 nm
    /// of depth.
    fn default() -> Self {
        Self {
            count_min: 10,
            count_max: 30,
            x_range: (0.0, 6400.0),
            y_range: (0.0, 6400.0),
            z_range: (-750.0, 750.0),
            photon_range: (1000.0, 10000.0),
        }
    }
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count_min > self.count_max {
            return Err(Error::Config(format!(
                "count_min {} exceeds count_max {}",
                self.count_min, self.count_max
            )));
        }
        for (name, (lo, hi)) in [
            ("x_range", self.x_range),
            ("y_range", self.y_range),
            ("z_range", self.z_range),
            ("photon_range", self.photon_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!(
                    "{name} ({lo}, {hi}) is not a valid range"
                )));
            }
        }
        if self.photon_range.0 < 0.0 {
            return Err(Error::Config("photon_range must be non-negative".into()));
        }
        Ok(())
    }

    /// Mean activations per µm² per frame over the lateral extent.
    pub fn density_per_um2(&self) -> f64 {
        let area = (self.x_range.1 - self.x_range.0) * (self.y_range.1 - self.y_range.0) * 1e-6;
        0.5 * (self.count_min + self.count_max) as f64 / area
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z_range.0.abs().max(self.z_range.1.abs())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn sample_activations<R: Rng + ?Sized>(
    spec: &SamplingSpec,
    frame_index: u64,
    rng: &mut R,
) -> FrameRecord {
    let n = rng.random_range(spec.count_min..=spec.count_max);
    let activations = (0..n)
        .map(|_| Activation {
            x: uniform(rng, spec.x_range),
            y: uniform(rng, spec.y_range),
            z: uniform(rng, spec.z_range),
            photons: uniform(rng, spec.photon_range),
        })
        .collect();
    FrameRecord {
        frame_index,
        activations,
    }
}

/// Multiplies every camera parameter by an independent `e^ρ`,
/// `ρ ~ N(0, sigma)`. The sensor type is kept, sCMOS keeps unit gain, QE is
/// capped at one and the baseline is rounded to an integer ADU.
pub fn jitter_camera<R: Rng + ?Sized>(cam: &CameraParams, sigma: f64, rng: &mut R) -> CameraParams {
    if sigma == 0.0 {
        return *cam;
    }
    let mut f = || (sigma * Distribution::<f64>::sample(&StandardNormal, rng)).exp();
    let (a, b, c, d, e, g) = (f(), f(), f(), f(), f(), f());
    CameraParams {
        sensor: cam.sensor,
        qe: (cam.qe * a).min(1.0),
        spurious: cam.spurious * b,
        em_gain: match cam.sensor {
            Sensor::Emccd => (cam.em_gain * c).max(1.0),
            Sensor::Scmos => 1.0,
        },
        read_sigma: cam.read_sigma * d,
        e_per_adu: cam.e_per_adu * e,
        baseline: (cam.baseline * g).round().max(1.0),
    }
}

/// Ground truth and camera frames of a simulated acquisition, index aligned.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub records: Vec<FrameRecord>,
    pub frames: Vec<AduFrame>,
    /// Jittered camera used for each frame.
    pub cameras: Vec<CameraParams>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationParams<'a> {
    pub spec: &'a SamplingSpec,
    pub psf: &'a PsfModel,
    pub camera: &'a CameraParams,
    pub geometry: FrameGeometry,
    pub jitter_sigma: f64,
}

/// Independent frames: fresh activations, a freshly jittered camera, render
/// and noise. Frame `i` depends only on `(seed, i)`.
pub fn simulate_sequence(
    n_frames: usize,
    params: &SimulationParams<'_>,
    seed: u64,
) -> Result<Simulation> {
    simulate_sequence_with(Exec::default(), n_frames, params, seed)
}

pub fn simulate_sequence_with(
    exec: Exec,
    n_frames: usize,
    params: &SimulationParams<'_>,
    seed: u64,
) -> Result<Simulation> {
    if n_frames == 0 {
        return Err(Error::Config("at least one frame is required".into()));
    }
    params.spec.validate()?;
    params.camera.validate()?;
    if !(params.jitter_sigma >= 0.0) {
        return Err(Error::Config("jitter sigma must be non-negative".into()));
    }
    let per_frame = exec.map_indexed(n_frames, |i| -> Result<_> {
        let idx = i as u64;
        let record = sample_activations(
            params.spec,
            idx,
            &mut stream(seed, Domain::Activations, idx),
        );
        let cam = jitter_camera(
            params.camera,
            params.jitter_sigma,
            &mut stream(seed, Domain::CameraJitter, idx),
        );
        let photons = render_frame(&record.activations, params.psf, params.geometry)?;
        // the inner pixel loop stays sequential; frames already run in parallel
        let frame = sample_camera_with(
            Exec::Sequential,
            &photons,
            &cam,
            derive_seed(seed, Domain::CameraNoise, idx),
        )?;
        Ok((record, frame, cam))
    });
    let mut sim = Simulation {
        records: Vec::with_capacity(n_frames),
        frames: Vec::with_capacity(n_frames),
        cameras: Vec::with_capacity(n_frames),
    };
    for r in per_frame {
        let (record, frame, cam) = r?;
        sim.records.push(record);
        sim.frames.push(frame);
        sim.cameras.push(cam);
    }
    Ok(sim)
}

/// The previous, current and next frame around `i`; a missing neighbour at
/// either end of the sequence is replaced by frame `i` itself.
pub fn context_window(frames: &[AduFrame], i: usize) -> [&AduFrame; 3] {
    let prev = if i == 0 { i } else { i - 1 };
    let next = if i + 1 >= frames.len() { i } else { i + 1 };
    [&frames[prev], &frames[i], &frames[next]]
}

/// Affine inverse of the expected-ADU map, clamped at zero photons. Returns
/// the estimate and the photons added by the clamp.
pub fn invert_adu(frame: &AduFrame, cam: &CameraParams) -> (PhotonImage, f64) {
    let k = cam.adu_per_photon();
    let mut clamp = 0.0;
    let values = frame
        .values
        .iter()
        .map(|&y| {
            let n = (y as f64 - cam.baseline) / k;
            if n < 0.0 {
                clamp -= n;
                0.0
            } else {
                n
            }
        })
        .collect();
    let g = frame.geometry();
    (
        PhotonImage {
            width: g.width,
            height: g.height,
            pixel_size: g.pixel_size,
            values,
        },
        clamp,
    )
}

#[derive(Debug, Clone)]
pub struct BinnedSequence {
    pub frames: Vec<AduFrame>,
    pub records: Vec<FrameRecord>,
    /// Trailing frames that did not fill a whole group.
    pub dropped_frames: usize,
    /// Total photons added by clamping negative inverse estimates to zero.
    pub clamp_bias_photons: f64,
}

/// Sums groups of `k` consecutive frames in photon space and draws camera
/// noise once on each sum, so binning does not average noise away. Ground
/// truth of a group is concatenated under the group index.
pub fn temporal_bin(
    frames: &[AduFrame],
    gt: &[FrameRecord],
    k: usize,
    cam: &CameraParams,
    seed: u64,
) -> Result<BinnedSequence> {
    temporal_bin_with(Exec::default(), frames, gt, k, cam, seed)
}

pub fn temporal_bin_with(
    exec: Exec,
    frames: &[AduFrame],
    gt: &[FrameRecord],
    k: usize,
    cam: &CameraParams,
    seed: u64,
) -> Result<BinnedSequence> {
    if k == 0 {
        return Err(Error::Config("binning factor must be at least 1".into()));
    }
    if frames.len() != gt.len() {
        return Err(Error::Config(format!(
            "{} frames but {} ground-truth records",
            frames.len(),
            gt.len()
        )));
    }
    if k > frames.len() {
        return Err(Error::Config(format!(
            "binning factor {k} exceeds the {} available frames",
            frames.len()
        )));
    }
    cam.validate()?;
    let geometry = frames[0].geometry();
    if frames.iter().any(|f| f.geometry() != geometry) {
        return Err(Error::Config("frames differ in geometry".into()));
    }
    let groups = frames.len() / k;
    let binned = exec.map_indexed(groups, |g| -> Result<_> {
        let mut sum = PhotonImage::zeros(geometry);
        let mut clamp = 0.0;
        for f in &frames[g * k..(g + 1) * k] {
            let (est, c) = invert_adu(f, cam);
            clamp += c;
            sum.values
                .iter_mut()
                .zip(&est.values)
                .for_each(|(s, e)| *s += e);
        }
        let frame = sample_camera_with(
            Exec::Sequential,
            &sum,
            cam,
            derive_seed(seed, Domain::Binning, g as u64),
        )?;
        let record = FrameRecord {
            frame_index: g as u64,
            activations: gt[g * k..(g + 1) * k]
                .iter()
                .flat_map(|r| r.activations.iter().copied())
                .collect(),
        };
        Ok((frame, record, clamp))
    });
    let mut out = BinnedSequence {
        frames: Vec::with_capacity(groups),
        records: Vec::with_capacity(groups),
        dropped_frames: frames.len() - groups * k,
        clamp_bias_photons: 0.0,
    };
    for r in binned {
        let (f, rec, c) = r?;
        out.frames.push(f);
        out.records.push(rec);
        out.clamp_bias_photons += c;
    }
    Ok(out)
}

/// Error model of the mock predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockParams {
    pub p_miss: f64,
    /// Mean number of spurious detections per frame.
    pub fp_rate: f64,
    pub sigma_xyz: [f64; 3],
    pub sigma_photons: f64,
    /// True detections score uniformly in `[lo, hi)`.
    pub tp_band: (f64, f64),
    /// Spurious detections score uniformly in `(lo, hi]`.
    pub fp_band: (f64, f64),
}

impl Default for MockParams {
    fn default() -> Self {
        Self {
            p_miss: 0.0,
            fp_rate: 0.0,
            sigma_xyz: [0.0; 3],
            sigma_photons: 0.0,
            tp_band: (0.8, 1.0),
            fp_band: (0.0, 0.3),
        }
    }
}

impl MockParams {
    fn validate(&self) -> Result<()> {
        let band_ok = |(lo, hi): (f64, f64)| {
            (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi
        };
        if !(0.0..=1.0).contains(&self.p_miss) {
            return Err(Error::Config(format!(
                "p_miss {} not in [0, 1]",
                self.p_miss
            )));
        }
        if !(self.fp_rate >= 0.0 && self.fp_rate.is_finite())
            || self.sigma_xyz.iter().any(|s| !(*s >= 0.0))
            || !(self.sigma_photons >= 0.0)
        {
            return Err(Error::Config(
                "mock predictor rates and sigmas must be non-negative".into(),
            ));
        }
        if !band_ok(self.tp_band) || !band_ok(self.fp_band) {
            return Err(Error::Config("score bands must lie within [0, 1]".into()));
        }
        Ok(())
    }
}

/// Stand-in for a trained network: keeps each true activation with
/// probability `1 − p_miss`, perturbs it with Gaussian noise and gives it a
/// high score, then adds `Poisson(fp_rate)` uniformly placed spurious
/// detections with low scores.
pub fn mock_predict(
    gt: &[FrameRecord],
    params: &MockParams,
    bounds: &SamplingSpec,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    params.validate()?;
    bounds.validate()?;
    let out = Exec::default().map_slice(gt, |_, rec| {
        let mut rng = stream(seed, Domain::MockPredictor, rec.frame_index);
        let mut detections = Vec::new();
        for a in &rec.activations {
            // fixed number of draws per activation keeps streams aligned
            let keep = rng.random::<f64>() >= params.p_miss;
            let mut n = || Distribution::<f64>::sample(&StandardNormal, &mut rng);
            let (ex, ey, ez, en) = (n(), n(), n(), n());
            let u: f64 = rng.random();
            if keep {
                detections.push(Detection {
                    activation: Activation {
                        x: a.x + params.sigma_xyz[0] * ex,
                        y: a.y + params.sigma_xyz[1] * ey,
                        z: a.z + params.sigma_xyz[2] * ez,
                        photons: (a.photons + params.sigma_photons * en).max(0.0),
                    },
                    score: params.tp_band.0 + (params.tp_band.1 - params.tp_band.0) * u,
                });
            }
        }
        let n_fp = if params.fp_rate > 0.0 {
            Poisson::new(params.fp_rate)
                .map(|p| p.sample(&mut rng) as usize)
                .unwrap_or(0)
        } else {
            0
        };
        for _ in 0..n_fp {
            let activation = Activation {
                x: uniform(&mut rng, bounds.x_range),
                y: uniform(&mut rng, bounds.y_range),
                z: uniform(&mut rng, bounds.z_range),
                photons: uniform(&mut rng, bounds.photon_range),
            };
            let u: f64 = rng.random();
            detections.push(Detection {
                activation,
                score: params.fp_band.1 - (params.fp_band.1 - params.fp_band.0) * u,
            });
        }
        PredictionRecord {
            frame_index: rec.frame_index,
            detections,
        }
    });
    Ok(out)
}
