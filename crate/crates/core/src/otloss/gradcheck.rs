//! Central finite-difference check of the loss gradients on random
//! instances, with the solver temperature frozen at its first evaluation.

use rand::Rng;

use super::{ot_loss, LossConfig, SigmaWeights};
use crate::error::Result;
use crate::physics::Activation;
use crate::transport::EpsilonScale;

#[derive(Debug, Clone)]
pub struct LossInstance {
    pub preds: Vec<Activation>,
    pub scores: Vec<f64>,
    pub targets: Vec<Activation>,
    pub sigma: SigmaWeights,
}

/// `n` targets in a 2 µm box, each shadowed by a nearby candidate, plus
/// `d − n` stray candidates; scores away from the clamp.
pub fn random_instance<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> LossInstance {
    let point = |rng: &mut R| {
        Activation::new(
            rng.random_range(0.0..2000.0),
            rng.random_range(0.0..2000.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(1000.0..5000.0),
        )
    };
    let targets: Vec<Activation> = (0..n).map(|_| point(rng)).collect();
    let mut preds: Vec<Activation> = targets
        .iter()
        .map(|t| {
            Activation::new(
                t.x + rng.random_range(-60.0..60.0),
                t.y + rng.random_range(-60.0..60.0),
                t.z + rng.random_range(-100.0..100.0),
                t.photons * rng.random_range(0.8..1.2),
            )
        })
        .collect();
    while preds.len() < d {
        preds.push(point(rng));
    }
    let scores = (0..d).map(|_| rng.random_range(0.05..0.95)).collect();
    let sigma = SigmaWeights([
        rng.random_range(400.0..2500.0),
        rng.random_range(400.0..2500.0),
        rng.random_range(2500.0..10000.0),
        rng.random_range(1e5..1e6),
    ]);
    LossInstance {
        preds,
        scores,
        targets,
        sigma,
    }
}

/// Worst-case relative errors per gradient block.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GradCheckReport {
    pub value: f64,
    pub positions: f64,
    pub scores: f64,
    pub sigma: f64,
}

impl GradCheckReport {
    pub fn max(&self) -> f64 {
        self.positions.max(self.scores).max(self.sigma)
    }
}

/// Step sizes: `pos_step` (nm, photons scaled by 100), `score_step`, and a
/// relative step on each Σ entry.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Steps {
    pos_step: f64,
    score_step: f64,
    sigma_rel_step: f64,
}

impl Default for Steps {
    fn default() -> Self {
        Self {
            pos_step: 1e-5,
            score_step: 1e-6,
            sigma_rel_step: 1e-6,
        }
    }
}

fn rel_err(analytic: f64, fd: f64, floor: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor)
}

/// Compares analytic gradients against central differences. Components
/// whose magnitude is below `1e-6` of the block's largest are measured
/// against that floor rather than their own size.
pub fn check_gradients(inst: &LossInstance, cfg: &LossConfig) -> Result<GradCheckReport> {
    let steps = Steps::default();
    let base = ot_loss(&inst.preds, &inst.scores, &inst.targets, &inst.sigma, cfg)?;
    let frozen = LossConfig {
        sinkhorn: crate::transport::SinkhornConfig {
            epsilon: base.epsilon_used,
            scale: EpsilonScale::Absolute,
            ..cfg.sinkhorn
        },
        ..*cfg
    };
    let eval = |preds: &[Activation], scores: &[f64], sigma: &SigmaWeights| -> Result<f64> {
        Ok(ot_loss(preds, scores, &inst.targets, sigma, &frozen)?.value)
    };

    let d = inst.preds.len();
    let mut fd_pos = Vec::with_capacity(4 * d);
    let mut an_pos = Vec::with_capacity(4 * d);
    for i in 0..d {
        for k in 0..4 {
            let h = if k == 3 {
                100.0 * steps.pos_step
            } else {
                steps.pos_step
            };
            let mut up = inst.preds.clone();
            let mut dn = inst.preds.clone();
            let mut a = up[i].as_array();
            a[k] += h;
            up[i] = Activation::from_array(a);
            let mut b = dn[i].as_array();
            b[k] -= h;
            dn[i] = Activation::from_array(b);
            let fd = (eval(&up, &inst.scores, &inst.sigma)?
                - eval(&dn, &inst.scores, &inst.sigma)?)
                / (2.0 * h);
            fd_pos.push(fd);
            an_pos.push(base.grad_positions[i][k]);
        }
    }

    let mut fd_sc = Vec::with_capacity(d);
    for i in 0..d {
        let h = steps.score_step;
        let mut up = inst.scores.clone();
        let mut dn = inst.scores.clone();
        up[i] += h;
        dn[i] -= h;
        fd_sc.push(
            (eval(&inst.preds, &up, &inst.sigma)? - eval(&inst.preds, &dn, &inst.sigma)?)
                / (2.0 * h),
        );
    }

    let mut fd_sig = Vec::with_capacity(4);
    for k in 0..4 {
        let h = steps.sigma_rel_step * inst.sigma.0[k];
        let mut up = inst.sigma;
        let mut dn = inst.sigma;
        up.0[k] += h;
        dn.0[k] -= h;
        fd_sig.push(
            (eval(&inst.preds, &inst.scores, &up)? - eval(&inst.preds, &inst.scores, &dn)?)
                / (2.0 * h),
        );
    }

    let block = |an: &[f64], fd: &[f64]| {
        let floor = 1e-6 * fd.iter().fold(0.0f64, |m, x| m.max(x.abs())) + f64::MIN_POSITIVE;
        an.iter()
            .zip(fd)
            .map(|(a, f)| rel_err(*a, *f, floor))
            .fold(0.0f64, f64::max)
    };
    Ok(GradCheckReport {
        value: base.value,
        positions: block(&an_pos, &fd_pos),
        scores: block(&base.grad_scores, &fd_sc),
        sigma: block(&base.grad_sigma, &fd_sig),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otloss::LossMode;
    use crate::rng::{stream, Domain};
    use crate::transport::SinkhornConfig;

    #[test]
    fn unrolled_gradients_agree() {
        let mut worst = GradCheckReport {
            value: 0.0,
            positions: 0.0,
            scores: 0.0,
            sigma: 0.0,
        };
        for idx in 0..10 {
            let mut rng = stream(7, Domain::LossCheck, idx);
            let inst = random_instance(16, 5, &mut rng);
            let r = check_gradients(&inst, &LossConfig::default()).unwrap();
            worst.positions = worst.positions.max(r.positions);
            worst.scores = worst.scores.max(r.scores);
            worst.sigma = worst.sigma.max(r.sigma);
        }
        assert!(worst.max() < 1e-4, "{worst:?}");
    }

    #[test]
    fn envelope_gradients_agree_when_converged() {
        let mut rng = stream(8, Domain::LossCheck, 0);
        let inst = random_instance(8, 3, &mut rng);
        let cfg = LossConfig {
            sinkhorn: SinkhornConfig {
                tol: Some(1e-13),
                ..SinkhornConfig::new(1.0, 20000)
            },
            mode: LossMode::Envelope,
            ..LossConfig::default()
        };
        let r = check_gradients(&inst, &cfg).unwrap();
        assert!(r.max() < 1e-4, "{r:?}");
    }
}
