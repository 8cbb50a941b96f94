use super::{clamp_score, detection_cost, grid_to_activations, localization_cost, range_mask};
use super::{PredictionGrid, SigmaWeights};
use crate::error::{Error, Result};
use crate::physics::Activation;
use crate::transport::{plan_entropy, CostMatrix, SinkhornConfig, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Value `<Γ, C>`, differentiated through every Sinkhorn iteration.
    #[default]
    Unrolled,
    /// Value `<Γ, C> − ε'H(Γ)` with gradient `Γ` with respect to `C`.
    Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub sinkhorn: SinkhornConfig,
    pub mode: LossMode,
    /// Per-dimension divisor applied to differences before weighting by Σ.
    pub norm: [f64; 4],
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sinkhorn: SinkhornConfig::default(),
            mode: LossMode::Unrolled,
            norm: [1.0; 4],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossReport {
    pub value: f64,
    /// `∂value/∂(x̂, ŷ, ẑ, n̂)` per candidate.
    pub grad_positions: Vec<[f64; 4]>,
    pub grad_scores: Vec<f64>,
    pub grad_sigma: [f64; 4],
    pub plan: TransportPlan,
    /// Temperature used by the solver (frozen for differentiation).
    pub epsilon_used: f64,
    /// Scores clamped away from 0 or 1.
    pub saturated: usize,
}

pub fn ot_loss(
    preds: &[Activation],
    scores: &[f64],
    targets: &[Activation],
    sigma: &SigmaWeights,
    cfg: &LossConfig,
) -> Result<LossReport> {
    ot_loss_masked(preds, scores, targets, None, sigma, cfg)
}

/// Loss over a decoder grid with the range mask applied. Position
/// gradients are with respect to the absolute candidates; they equal the
/// offset gradients wherever the offset clamp is inactive.
pub fn ot_loss_grid(
    grid: &PredictionGrid,
    targets: &[Activation],
    sigma: &SigmaWeights,
    cfg: &LossConfig,
) -> Result<LossReport> {
    let mask = range_mask(grid, targets)?;
    let (preds, scores) = grid_to_activations(grid);
    ot_loss_masked(&preds, &scores, targets, Some(mask), sigma, cfg)
}

pub fn ot_loss_masked(
    preds: &[Activation],
    scores: &[f64],
    targets: &[Activation],
    mask: Option<Vec<bool>>,
    sigma: &SigmaWeights,
    cfg: &LossConfig,
) -> Result<LossReport> {
    let d = preds.len();
    let n = targets.len();
    if scores.len() != d {
        return Err(Error::Config(format!(
            "{} scores for {d} candidates",
            scores.len()
        )));
    }
    if d == 0 {
        return Err(Error::Config("loss needs at least one candidate".into()));
    }
    if cfg.norm.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config(
            "normalisation constants must be positive".into(),
        ));
    }
    let loc = localization_cost(preds, targets, sigma, &cfg.norm)?;
    let (det, saturated) = detection_cost(scores, n)?;
    let total: Vec<f64> = loc.iter().zip(&det).map(|(a, b)| a + b).collect();
    let mut c = CostMatrix::new(d, total)?;
    if let Some(m) = mask {
        c = c.with_mask(m)?;
    }

    let eps = crate::transport::sinkhorn::temperature(&c, &cfg.sinkhorn);
    let sol = crate::transport::sinkhorn::sinkhorn_traced(&c, &cfg.sinkhorn, eps)?;
    let p = &sol.plan;
    let transport_value = p.dot(&c);
    let (value, c_bar) = match cfg.mode {
        LossMode::Unrolled => {
            let masked_cost: Vec<f64> = (0..d * d)
                .map(|k| {
                    if c.is_masked(k / d, k % d) {
                        0.0
                    } else {
                        c.values()[k]
                    }
                })
                .collect();
            let mut g = sol.vjp(&c, &masked_cost);
            g.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b);
            (transport_value, g)
        }
        LossMode::Envelope => (transport_value - eps * plan_entropy(p), p.values.clone()),
    };

    // chain rule from ∂/∂C onto candidates, scores and Σ
    let w: [f64; 4] = std::array::from_fn(|k| 1.0 / (sigma.0[k] * cfg.norm[k] * cfg.norm[k]));
    let mut grad_positions = vec![[0.0; 4]; d];
    let mut grad_scores = vec![0.0; d];
    let mut grad_sigma = [0.0; 4];
    for i in 0..d {
        let a = preds[i].as_array();
        let s = scores[i];
        let live = clamp_score(s) == s;
        for j in 0..d {
            let g = c_bar[i * d + j];
            if g == 0.0 {
                continue;
            }
            if j < n {
                let b = targets[j].as_array();
                for k in 0..4 {
                    let delta = a[k] - b[k];
                    grad_positions[i][k] += g * 2.0 * delta * w[k];
                    grad_sigma[k] += g * (1.0 - delta * delta * w[k]) / sigma.0[k];
                }
                if live {
                    grad_scores[i] -= g / s;
                }
            } else if live {
                grad_scores[i] += g / (1.0 - s);
            }
        }
    }

    Ok(LossReport {
        value,
        grad_positions,
        grad_scores,
        grad_sigma,
        plan: sol.plan,
        epsilon_used: eps,
        saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::EpsilonScale;

    fn targets() -> Vec<Activation> {
        vec![
            Activation::new(100.0, 200.0, -50.0, 3000.0),
            Activation::new(900.0, 350.0, 120.0, 1500.0),
        ]
    }

    #[test]
    fn perfect_predictions_vanish() {
        let t = targets();
        let mut preds = t.clone();
        preds.push(Activation::new(500.0, 500.0, 0.0, 10.0));
        let scores = [1.0 - 1e-12, 1.0 - 1e-12, 1e-12];
        let r = ot_loss(
            &preds,
            &scores,
            &t,
            &SigmaWeights::default(),
            &LossConfig::default(),
        )
        .unwrap();
        assert!(r.value.abs() < 1e-5, "{}", r.value);
        assert_eq!(r.saturated, 3);
        assert!(r.grad_scores.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn target_order_irrelevant() {
        let t = targets();
        let preds = vec![
            Activation::new(880.0, 370.0, 100.0, 1400.0),
            Activation::new(110.0, 190.0, -40.0, 2900.0),
            Activation::new(400.0, 600.0, 0.0, 500.0),
        ];
        let scores = [0.8, 0.7, 0.2];
        let s = SigmaWeights::new([400.0, 400.0, 900.0, 1e4]).unwrap();
        let cfg = LossConfig::default();
        let a = ot_loss(&preds, &scores, &t, &s, &cfg).unwrap();
        let rev: Vec<_> = t.iter().rev().copied().collect();
        let b = ot_loss(&preds, &scores, &rev, &s, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 1e-9 * a.value.abs());
    }

    #[test]
    fn envelope_gradient_is_plan_at_convergence() {
        let t = targets();
        let preds = vec![
            Activation::new(150.0, 230.0, 0.0, 2500.0),
            Activation::new(700.0, 300.0, 60.0, 1000.0),
            Activation::new(400.0, 600.0, 0.0, 500.0),
        ];
        let scores = [0.6, 0.7, 0.3];
        let s = SigmaWeights::new([1e4, 1e4, 4e4, 1e6]).unwrap();
        let cfg = LossConfig {
            sinkhorn: SinkhornConfig {
                scale: EpsilonScale::Absolute,
                ..SinkhornConfig::new(0.5, 2000)
            },
            mode: LossMode::Envelope,
            ..LossConfig::default()
        };
        let r = ot_loss(&preds, &scores, &t, &s, &cfg).unwrap();
        let h = 1e-3;
        for i in 0..3 {
            let mut up = preds.clone();
            let mut dn = preds.clone();
            up[i].x += h;
            dn[i].x -= h;
            let fd = (ot_loss(&up, &scores, &t, &s, &cfg).unwrap().value
                - ot_loss(&dn, &scores, &t, &s, &cfg).unwrap().value)
                / (2.0 * h);
            let g = r.grad_positions[i][0];
            assert!(
                (fd - g).abs() <= 1e-6 * fd.abs().max(1e-3),
                "{i}: {fd} vs {g}"
            );
        }
    }

    #[test]
    fn grid_loss_respects_mask() {
        let g = crate::physics::FrameGeometry::new(8, 8, 100.0).unwrap();
        let mut grid = PredictionGrid::for_frame(&g, 1.5).unwrap();
        for c in grid.cells.iter_mut() {
            c.score = 0.3;
            c.photons = 1000.0;
        }
        let t = vec![
            Activation::new(120.0, 130.0, 0.0, 1000.0),
            Activation::new(650.0, 420.0, 0.0, 1000.0),
        ];
        let mask = range_mask(&grid, &t).unwrap();
        let r = ot_loss_grid(&grid, &t, &SigmaWeights::default(), &LossConfig::default()).unwrap();
        for (k, m) in mask.iter().enumerate() {
            if *m {
                assert_eq!(r.plan.values[k], 0.0);
            }
        }
        assert!(r.value.is_finite());
    }
}
