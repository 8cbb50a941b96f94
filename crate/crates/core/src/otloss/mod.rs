//! Matching loss between a fixed-size candidate set and a variable-size
//! target set: localization and detection costs, range masking, the
//! transport-based value and its gradients.

mod gradcheck;
mod grid;
mod loss;

pub use gradcheck::{check_gradients, random_instance, GradCheckReport, LossInstance};
pub use grid::{grid_to_activations, range_mask, soft_gate, GridCell, PredictionGrid};
pub use loss::{ot_loss, ot_loss_grid, ot_loss_masked, LossConfig, LossMode, LossReport};

use crate::error::{Error, Result};
use crate::physics::Activation;

/// Clamp applied to scores before taking logarithms.
pub const SCORE_EPS: f64 = 1e-7;

/// Diagonal of Σ: variances for x, y, z (nm²) and photons.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SigmaWeights(pub [f64; 4]);

impl Default for SigmaWeights {
    fn default() -> Self {
        Self([1.0; 4])
    }
}

impl SigmaWeights {
    pub fn new(var: [f64; 4]) -> Result<Self> {
        let s = Self(var);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self.0.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            Some(k) => Err(Error::Config(format!(
                "Σ entry {k} must be positive, got {}",
                self.0[k]
            ))),
            None => Ok(()),
        }
    }

    pub fn log_det(&self) -> f64 {
        self.0.iter().map(|v| v.ln()).sum()
    }
}

fn check_capacity(d: usize, n: usize) -> Result<()> {
    if n > d {
        Err(Error::Capacity(n, d))
    } else {
        Ok(())
    }
}

/// `L_ij = Σ_k ((x̂_ik − x_jk)/ν_k)² / σ²_k + log det Σ` for real targets,
/// zero for the `d − N` padding columns. `norm` holds the ν_k.
pub fn localization_cost(
    preds: &[Activation],
    targets: &[Activation],
    sigma: &SigmaWeights,
    norm: &[f64; 4],
) -> Result<Vec<f64>> {
    let d = preds.len();
    let n = targets.len();
    check_capacity(d, n)?;
    sigma.validate()?;
    let w: [f64; 4] = std::array::from_fn(|k| 1.0 / (sigma.0[k] * norm[k] * norm[k]));
    let log_det = sigma.log_det();
    let mut out = vec![0.0; d * d];
    for (i, p) in preds.iter().enumerate() {
        let a = p.as_array();
        for (j, t) in targets.iter().enumerate() {
            let b = t.as_array();
            out[i * d + j] = (0..4).map(|k| (a[k] - b[k]).powi(2) * w[k]).sum::<f64>() + log_det;
        }
    }
    Ok(out)
}

/// `D_ij = −log s_i` for real targets and `−log(1 − s_i)` for padding.
/// Returns the matrix and how many scores had to be clamped into
/// `[SCORE_EPS, 1 − SCORE_EPS]`.
pub fn detection_cost(scores: &[f64], n: usize) -> Result<(Vec<f64>, usize)> {
    let d = scores.len();
    check_capacity(d, n)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Config(format!("score {i} is not finite")));
    }
    let mut saturated = 0;
    let mut out = vec![0.0; d * d];
    for (i, &s) in scores.iter().enumerate() {
        let c = clamp_score(s);
        saturated += usize::from(c != s);
        let (on, off) = (-c.ln(), -(1.0 - c).ln());
        let row = &mut out[i * d..(i + 1) * d];
        row[..n].fill(on);
        row[n..].fill(off);
    }
    Ok((out, saturated))
}

#[inline]
fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}
