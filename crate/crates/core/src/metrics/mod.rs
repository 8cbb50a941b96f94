//! Challenge-style evaluation: gated one-to-one matching per frame,
//! detection ratios, RMSE, 3-D efficiency, score-threshold sweeps and the
//! image-based FRC and RSP scores.

mod image;

pub use image::{frc, render_histogram, rsp, FrcResult, FrcSplit, FRC_THRESHOLD};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datasets::{FrameRecord, PredictionRecord};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::physics::Activation;
use crate::transport::{hungarian, CostMatrix};

/// Per-axis acceptance gates (nm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSpec {
    pub tol_lat: f64,
    pub tol_ax: f64,
}

impl Default for MatchSpec {
    fn default() -> Self {
        Self {
            tol_lat: 250.0,
            tol_ax: 500.0,
        }
    }
}

impl MatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tol_lat > 0.0 && self.tol_ax > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("matching tolerances must be positive".into()))
        }
    }

    pub fn admits(&self, p: &Activation, g: &Activation) -> bool {
        (p.x - g.x).abs() <= self.tol_lat
            && (p.y - g.y).abs() <= self.tol_lat
            && (p.z - g.z).abs() <= self.tol_ax
    }

    /// Squared distance with depth rescaled onto the lateral gate, in units
    /// of `tol_lat²`; at most 3 for admitted pairs.
    pub fn cost(&self, p: &Activation, g: &Activation) -> f64 {
        let r = self.tol_lat / self.tol_ax;
        ((p.x - g.x).powi(2) + (p.y - g.y).powi(2) + ((p.z - g.z) * r).powi(2))
            / (self.tol_lat * self.tol_lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FrameScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Σ (dx² + dy²) over true positives.
    pub sq_lat: f64,
    /// Σ dz² over true positives.
    pub sq_ax: f64,
    pub pairs: Vec<MatchedPair>,
}

/// One-to-one matching of predictions to ground truth. Only pairs inside
/// every gate may match; among those, the matching pairs as many emitters
/// as possible and then minimises [`MatchSpec::cost`].
pub fn match_frame(preds: &[Activation], gt: &[Activation], spec: &MatchSpec) -> FrameScore {
    let (np, ng) = (preds.len(), gt.len());
    let admitted: Vec<(usize, usize)> = (0..np)
        .flat_map(|i| (0..ng).map(move |j| (i, j)))
        .filter(|&(i, j)| spec.admits(&preds[i], &gt[j]))
        .collect();
    let mut pairs = Vec::new();
    if !admitted.is_empty() {
        // Square problem of side np + ng: prediction rows and ground-truth
        // columns, plus one dummy slot per emitter on the other side. Each
        // dummy use costs U/2 and U exceeds any sum of real costs, so
        // cardinality comes first.
        let m = np + ng;
        let u = 3.0 * (np.min(ng) as f64 + 1.0);
        let mut values = vec![0.0; m * m];
        let mut mask = vec![false; m * m];
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                match (i < np, j < ng) {
                    (true, true) => mask[k] = true,
                    (true, false) | (false, true) => values[k] = 0.5 * u,
                    (false, false) => {}
                }
            }
        }
        for &(i, j) in &admitted {
            mask[i * m + j] = false;
            values[i * m + j] = spec.cost(&preds[i], &gt[j]);
        }
        let c = CostMatrix::new(m, values)
            .and_then(|c| c.with_mask(mask))
            .expect("finite costs");
        let a = hungarian(&c).expect("dummy slots keep the problem feasible");
        for (i, &j) in a.perm.iter().enumerate().take(np) {
            if j < ng {
                let (p, g) = (&preds[i], &gt[j]);
                pairs.push(MatchedPair {
                    pred: i,
                    gt: j,
                    dx: p.x - g.x,
                    dy: p.y - g.y,
                    dz: p.z - g.z,
                });
            }
        }
    }
    let tp = pairs.len();
    FrameScore {
        tp,
        fp: np - tp,
        fn_: ng - tp,
        sq_lat: pairs.iter().map(|p| p.dx * p.dx + p.dy * p.dy).sum(),
        sq_ax: pairs.iter().map(|p| p.dz * p.dz).sum(),
        pairs,
    }
}

/// Pairs predictions and ground truth by frame index (frames present on
/// either side) and scores every frame.
pub fn evaluate(
    preds: &[PredictionRecord],
    gt: &[FrameRecord],
    spec: &MatchSpec,
    exec: Exec,
) -> Vec<FrameScore> {
    let frames = join_frames(preds, gt, 0.0);
    exec.map_slice(&frames, |_, (p, g)| match_frame(p, g, spec))
}

type FramePair = (Vec<Activation>, Vec<Activation>);

/// Keeps detections with score strictly above `tau`.
fn join_frames(preds: &[PredictionRecord], gt: &[FrameRecord], tau: f64) -> Vec<FramePair> {
    let mut map: BTreeMap<u64, FramePair> = BTreeMap::new();
    for r in gt {
        map.entry(r.frame_index)
            .or_default()
            .1
            .extend_from_slice(&r.activations);
    }
    for r in preds {
        map.entry(r.frame_index).or_default().0.extend(
            r.detections
                .iter()
                .filter(|d| d.score > tau)
                .map(|d| d.activation),
        );
    }
    map.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmseMode {
    /// RMSE per frame, then averaged over frames with true positives.
    #[default]
    PerFrame,
    /// One RMSE over all true positives.
    Pooled,
}

/// Frame-averaged scores. Ratios are averaged only over frames where they
/// are defined and are `None` when no frame defines them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub frames: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub jaccard: Option<f64>,
    pub rmse_lat: Option<f64>,
    pub rmse_ax: Option<f64>,
    pub rmse_vol: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn aggregate(scores: &[FrameScore], mode: RmseMode) -> Aggregate {
    let ratio = |num: fn(&FrameScore) -> usize, den: fn(&FrameScore) -> usize| {
        mean(
            scores
                .iter()
                .filter(|s| den(s) > 0)
                .map(|s| num(s) as f64 / den(s) as f64),
        )
    };
    let with_tp = || scores.iter().filter(|s| s.tp > 0);
    let rmse = |sq: fn(&FrameScore) -> f64| match mode {
        RmseMode::PerFrame => mean(with_tp().map(|s| (sq(s) / s.tp as f64).sqrt())),
        RmseMode::Pooled => {
            let n: usize = scores.iter().map(|s| s.tp).sum();
            (n > 0).then(|| (scores.iter().map(sq).sum::<f64>() / n as f64).sqrt())
        }
    };
    Aggregate {
        frames: scores.len(),
        tp: scores.iter().map(|s| s.tp).sum(),
        fp: scores.iter().map(|s| s.fp).sum(),
        fn_: scores.iter().map(|s| s.fn_).sum(),
        precision: ratio(|s| s.tp, |s| s.tp + s.fp),
        recall: ratio(|s| s.tp, |s| s.tp + s.fn_),
        jaccard: ratio(|s| s.tp, |s| s.tp + s.fp + s.fn_),
        rmse_lat: rmse(|s| s.sq_lat),
        rmse_ax: rmse(|s| s.sq_ax),
        rmse_vol: rmse(|s| s.sq_lat + s.sq_ax),
    }
}

/// Weights of the efficiency score; RMSE enters in units of 100 nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyWeights {
    pub alpha_lat: f64,
    pub alpha_ax: f64,
}

impl Default for EfficiencyWeights {
    fn default() -> Self {
        Self {
            alpha_lat: 1.0,
            alpha_ax: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Efficiency {
    pub e_lat: f64,
    pub e_ax: f64,
    pub e_3d: f64,
}

/// `E = 1 − sqrt((1 − J)² + (α · RMSE / 100 nm)²)` per direction, averaged.
pub fn efficiency(jaccard: f64, rmse_lat: f64, rmse_ax: f64, w: &EfficiencyWeights) -> Efficiency {
    let e = |alpha: f64, rmse: f64| {
        1.0 - ((1.0 - jaccard).powi(2) + (alpha * rmse / 100.0).powi(2)).sqrt()
    };
    let e_lat = e(w.alpha_lat, rmse_lat);
    let e_ax = e(w.alpha_ax, rmse_ax);
    Efficiency {
        e_lat,
        e_ax,
        e_3d: 0.5 * (e_lat + e_ax),
    }
}

/// Efficiency of an aggregate; absent RMSEs (no true positives) count as 0.
pub fn aggregate_efficiency(a: &Aggregate, w: &EfficiencyWeights) -> Option<Efficiency> {
    a.jaccard
        .map(|j| efficiency(j, a.rmse_lat.unwrap_or(0.0), a.rmse_ax.unwrap_or(0.0), w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub jaccard: Option<f64>,
    pub e_3d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub best_tau: f64,
    pub curve: Vec<SweepPoint>,
}

/// Scores the predictions kept at each threshold (`score > τ`) and returns
/// the τ with the highest 3-D efficiency, the lowest τ winning ties.
pub fn threshold_sweep(
    preds: &[PredictionRecord],
    gt: &[FrameRecord],
    spec: &MatchSpec,
    w: &EfficiencyWeights,
    mode: RmseMode,
    taus: &[f64],
    exec: Exec,
) -> Result<Sweep> {
    if taus.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
    }
    let curve: Vec<SweepPoint> = taus
        .iter()
        .map(|&tau| {
            let frames = join_frames(preds, gt, tau);
            let scores = exec.map_slice(&frames, |_, (p, g)| match_frame(p, g, spec));
            let a = aggregate(&scores, mode);
            SweepPoint {
                tau,
                precision: a.precision,
                recall: a.recall,
                jaccard: a.jaccard,
                e_3d: aggregate_efficiency(&a, w).map(|e| e.e_3d),
            }
        })
        .collect();
    let mut best = 0;
    for (k, p) in curve.iter().enumerate() {
        let key = |q: &SweepPoint| q.e_3d.unwrap_or(f64::NEG_INFINITY);
        if key(p) > key(&curve[best]) {
            best = k;
        }
    }
    Ok(Sweep {
        best_tau: curve[best].tau,
        curve,
    })
}

/// `lo:hi:step` inclusive of both ends (within half a step).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("threshold grid `{spec}` is not lo:hi:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || hi < lo {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 0.5).floor() as usize;
    // snap away accumulated binary error so 0.3 prints as 0.3
    let snap = |x: f64| (x * 1e12).round() / 1e12;
    Ok((0..=n)
        .map(|k| snap(lo + k as f64 * step).min(hi))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Detection;

    fn act(x: f64, y: f64, z: f64) -> Activation {
        Activation::new(x, y, z, 1000.0)
    }

    #[test]
    fn identical_sets_all_true_positives() {
        let g = vec![
            act(0.0, 0.0, 0.0),
            act(500.0, 100.0, -200.0),
            act(900.0, 900.0, 300.0),
        ];
        let s = match_frame(&g, &g, &MatchSpec::default());
        assert_eq!((s.tp, s.fp, s.fn_), (3, 0, 0));
        assert_eq!((s.sq_lat, s.sq_ax), (0.0, 0.0));
    }

    #[test]
    fn gates_are_per_axis() {
        let spec = MatchSpec::default();
        let g = [act(0.0, 0.0, 0.0)];
        // lateral distance 354 nm but each axis within 250
        assert_eq!(match_frame(&[act(250.0, 250.0, 0.0)], &g, &spec).tp, 1);
        assert_eq!(match_frame(&[act(250.1, 0.0, 0.0)], &g, &spec).tp, 0);
        assert_eq!(match_frame(&[act(0.0, 0.0, 500.0)], &g, &spec).tp, 1);
        assert_eq!(match_frame(&[act(0.0, 0.0, -500.5)], &g, &spec).tp, 0);
    }

    #[test]
    fn cardinality_beats_distance() {
        // greedy nearest would pair p0-g0 and strand g1
        let spec = MatchSpec::default();
        let g = [act(0.0, 0.0, 0.0), act(-240.0, 0.0, 0.0)];
        let p = [act(-10.0, 0.0, 0.0), act(200.0, 0.0, 0.0)];
        let s = match_frame(&p, &g, &spec);
        assert_eq!(s.tp, 2);
        assert_eq!(s.pairs[0].gt, 1);
    }

    #[test]
    fn empty_sides() {
        let spec = MatchSpec::default();
        let g = [act(0.0, 0.0, 0.0)];
        let s = match_frame(&[], &g, &spec);
        assert_eq!((s.tp, s.fp, s.fn_), (0, 0, 1));
        let s = match_frame(&g, &[], &spec);
        assert_eq!((s.tp, s.fp, s.fn_), (0, 1, 0));
    }

    #[test]
    fn aggregate_skips_undefined_frames() {
        let frames = vec![
            FrameScore {
                tp: 2,
                fp: 0,
                fn_: 2,
                sq_lat: 200.0,
                sq_ax: 8.0,
                pairs: vec![],
            },
            FrameScore {
                tp: 0,
                fp: 0,
                fn_: 3,
                ..Default::default()
            },
            FrameScore::default(),
        ];
        let a = aggregate(&frames, RmseMode::PerFrame);
        assert_eq!(a.precision, Some(1.0));
        assert_eq!(a.recall, Some(0.25));
        assert_eq!(a.jaccard, Some(0.25));
        assert_eq!(a.rmse_lat, Some(10.0));
        assert_eq!(a.rmse_ax, Some(2.0));
        let none = aggregate(&[FrameScore::default()], RmseMode::Pooled);
        assert_eq!(
            (none.precision, none.recall, none.rmse_lat),
            (None, None, None)
        );
    }

    #[test]
    fn pooled_vs_per_frame() {
        let frames = vec![
            FrameScore {
                tp: 1,
                sq_lat: 100.0,
                ..Default::default()
            },
            FrameScore {
                tp: 3,
                sq_lat: 0.0,
                ..Default::default()
            },
        ];
        assert_eq!(aggregate(&frames, RmseMode::PerFrame).rmse_lat, Some(5.0));
        assert_eq!(aggregate(&frames, RmseMode::Pooled).rmse_lat, Some(5.0));
        let frames = vec![
            FrameScore {
                tp: 1,
                sq_lat: 400.0,
                ..Default::default()
            },
            FrameScore {
                tp: 4,
                sq_lat: 0.0,
                ..Default::default()
            },
        ];
        assert_eq!(aggregate(&frames, RmseMode::PerFrame).rmse_lat, Some(10.0));
        assert_eq!(
            aggregate(&frames, RmseMode::Pooled).rmse_lat,
            Some(80f64.sqrt())
        );
    }

    #[test]
    fn efficiency_boundaries() {
        let w = EfficiencyWeights::default();
        assert_eq!(efficiency(1.0, 0.0, 0.0, &w).e_3d, 1.0);
        assert!(efficiency(0.0, 0.0, 0.0, &w).e_3d <= 0.0);
        assert!(efficiency(0.0, 50.0, 10.0, &w).e_3d < 0.0);
        assert!(efficiency(1.0, 1e-3, 0.0, &w).e_3d < 1.0);
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:1:0.25").unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = parse_grid("0:1:0.01").unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[30], 0.3);
        assert_eq!(g[100], 1.0);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
    }

    #[test]
    fn sweep_endpoints() {
        let gt = vec![FrameRecord {
            frame_index: 0,
            activations: vec![act(0.0, 0.0, 0.0)],
        }];
        let preds = vec![PredictionRecord {
            frame_index: 0,
            detections: vec![
                Detection {
                    activation: act(5.0, 0.0, 0.0),
                    score: 0.9,
                },
                Detection {
                    activation: act(3000.0, 0.0, 0.0),
                    score: 0.2,
                },
            ],
        }];
        let s = threshold_sweep(
            &preds,
            &gt,
            &MatchSpec::default(),
            &EfficiencyWeights::default(),
            RmseMode::PerFrame,
            &[0.0, 0.5, 1.0],
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(s.curve[0].precision, Some(0.5));
        assert_eq!(s.curve[1].precision, Some(1.0));
        assert_eq!(s.curve[2].recall, Some(0.0));
        assert_eq!(s.best_tau, 0.5);
    }
}
