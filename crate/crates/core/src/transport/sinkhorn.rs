//! Log-domain Sinkhorn on `exp(-C/ε')`. Each iteration is a column step
//! followed by a row step, so rows are exactly normalised on return.

use super::{CostMatrix, TransportPlan};
use crate::error::{Error, Result};

/// How `epsilon` maps to the temperature actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonScale {
    /// `ε' = ε · median(|C_ij|)` over unmasked entries.
    #[default]
    MedianScaled,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub iters: usize,
    pub scale: EpsilonScale,
    /// Stop early once the L1 column violation drops below this.
    pub tol: Option<f64>,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            iters: 20,
            scale: EpsilonScale::MedianScaled,
            tol: None,
        }
    }
}

impl SinkhornConfig {
    pub fn new(epsilon: f64, iters: usize) -> Self {
        Self {
            epsilon,
            iters,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.iters == 0 {
            return Err(Error::Config(
                "Sinkhorn needs at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    /// Row potential after the last row step.
    pub f: Vec<f64>,
    /// Column potential after the last column step.
    pub g: Vec<f64>,
    /// Temperature actually used.
    pub epsilon: f64,
    pub iterations: usize,
    /// L1 column-marginal violation after each iteration.
    pub violations: Vec<f64>,
    /// `(g^t, f^t)` per iteration, kept only when requested.
    trace: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

/// Median of `|C|` over unmasked entries; `None` when everything is masked.
pub fn median_abs_cost(c: &CostMatrix) -> Option<f64> {
    let d = c.dim();
    let mut v: Vec<f64> = (0..d * d)
        .filter(|&k| !c.is_masked(k / d, k % d))
        .map(|k| c.values()[k].abs())
        .collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len();
    let (_, hi, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        return Some(hi);
    }
    let lo = v[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(0.5 * (lo + hi))
}

pub(crate) fn temperature(c: &CostMatrix, cfg: &SinkhornConfig) -> f64 {
    match cfg.scale {
        EpsilonScale::Absolute => cfg.epsilon,
        // An all-zero cost has no scale to borrow; fall back to the raw value.
        EpsilonScale::MedianScaled => match median_abs_cost(c) {
            Some(m) if m > 0.0 => cfg.epsilon * m,
            _ => cfg.epsilon,
        },
    }
}

/// `-ε · log Σ exp(a_k / ε)` over the finite entries of `a`.
#[inline]
fn soft_min(a: impl Iterator<Item = f64> + Clone, eps: f64) -> f64 {
    let m = a.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = a.map(|x| ((x - m) / eps).exp()).sum();
    -(m + eps * s.ln())
}

fn logits(c: &CostMatrix) -> Vec<f64> {
    let d = c.dim();
    (0..d * d)
        .map(|k| {
            if c.is_masked(k / d, k % d) {
                f64::INFINITY
            } else {
                c.values()[k]
            }
        })
        .collect()
}

fn col_step(cost: &[f64], f: &[f64], g: &mut [f64], eps: f64) {
    let d = f.len();
    for (j, gj) in g.iter_mut().enumerate() {
        *gj = soft_min((0..d).map(|i| f[i] - cost[i * d + j]), eps);
    }
}

fn row_step(cost: &[f64], g: &[f64], f: &mut [f64], eps: f64) {
    let d = g.len();
    for (i, fi) in f.iter_mut().enumerate() {
        let row = &cost[i * d..(i + 1) * d];
        *fi = soft_min((0..d).map(|j| g[j] - row[j]), eps);
    }
}

fn assemble(cost: &[f64], f: &[f64], g: &[f64], eps: f64) -> Vec<f64> {
    let d = f.len();
    (0..d * d)
        .map(|k| {
            let c = cost[k];
            if c.is_infinite() {
                0.0
            } else {
                ((f[k / d] + g[k % d] - c) / eps).exp()
            }
        })
        .collect()
}

fn col_violation(p: &[f64], d: usize) -> f64 {
    let mut s = vec![0.0; d];
    for row in p.chunks(d) {
        s.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    s.iter().map(|x| (x - 1.0).abs()).sum()
}

pub fn sinkhorn_log(c: &CostMatrix, cfg: &SinkhornConfig) -> Result<SinkhornSolution> {
    solve(c, cfg, None, false)
}

/// Solves at an explicit temperature, keeping every iterate for [`SinkhornSolution::vjp`].
pub(crate) fn sinkhorn_traced(
    c: &CostMatrix,
    cfg: &SinkhornConfig,
    eps: f64,
) -> Result<SinkhornSolution> {
    solve(c, cfg, Some(eps), true)
}

fn solve(
    c: &CostMatrix,
    cfg: &SinkhornConfig,
    eps: Option<f64>,
    keep_trace: bool,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    c.check_starvation()?;
    let d = c.dim();
    let eps = eps.unwrap_or_else(|| temperature(c, cfg));
    let cost = logits(c);
    let mut f = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut violations = Vec::with_capacity(cfg.iters);
    let mut trace = keep_trace.then(|| Vec::with_capacity(cfg.iters));
    let mut plan = Vec::new();
    for _ in 0..cfg.iters {
        col_step(&cost, &f, &mut g, eps);
        row_step(&cost, &g, &mut f, eps);
        if let Some(t) = trace.as_mut() {
            t.push((g.clone(), f.clone()));
        }
        plan = assemble(&cost, &f, &g, eps);
        let v = col_violation(&plan, d);
        violations.push(v);
        if cfg.tol.is_some_and(|tol| v < tol) {
            break;
        }
    }
    Ok(SinkhornSolution {
        plan: TransportPlan { d, values: plan },
        f,
        g,
        epsilon: eps,
        iterations: violations.len(),
        violations,
        trace,
    })
}

impl SinkhornSolution {
    /// Pulls `∂ℓ/∂Γ` back to `∂ℓ/∂C` through every stored iteration, with
    /// the temperature held fixed. Requires a traced solve.
    pub(crate) fn vjp(&self, c: &CostMatrix, plan_bar: &[f64]) -> Vec<f64> {
        let trace = self
            .trace
            .as_ref()
            .expect("vjp needs a solution from sinkhorn_traced");
        let d = c.dim();
        let eps = self.epsilon;
        let cost = logits(c);
        let p = &self.plan.values;
        let mut c_bar = vec![0.0; d * d];
        let mut f_bar = vec![0.0; d];
        let mut g_bar = vec![0.0; d];
        for k in 0..d * d {
            let w = plan_bar[k] * p[k] / eps;
            c_bar[k] -= w;
            f_bar[k / d] += w;
            g_bar[k % d] += w;
        }
        let zeros = vec![0.0; d];
        for t in (0..trace.len()).rev() {
            let (g_t, f_t) = &trace[t];
            let f_prev = if t == 0 { &zeros } else { &trace[t - 1].1 };
            // row step: f_i = softmin_j(C_ij - g_j)
            let mut g_acc = std::mem::take(&mut g_bar);
            for i in 0..d {
                if f_bar[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    let k = i * d + j;
                    if cost[k].is_infinite() {
                        continue;
                    }
                    let beta = ((g_t[j] - cost[k] + f_t[i]) / eps).exp();
                    c_bar[k] += f_bar[i] * beta;
                    g_acc[j] -= f_bar[i] * beta;
                }
            }
            // column step: g_j = softmin_i(C_ij - f_i)
            let mut f_acc = vec![0.0; d];
            for i in 0..d {
                for j in 0..d {
                    let k = i * d + j;
                    if g_acc[j] == 0.0 || cost[k].is_infinite() {
                        continue;
                    }
                    let alpha = ((f_prev[i] - cost[k] + g_t[j]) / eps).exp();
                    c_bar[k] += g_acc[j] * alpha;
                    f_acc[i] -= g_acc[j] * alpha;
                }
            }
            f_bar = f_acc;
            g_bar = vec![0.0; d];
        }
        c_bar
    }
}

/// `-Σ Γ_ij (log Γ_ij - 1)`, taking `0 · log 0 = 0`.
pub fn plan_entropy(p: &TransportPlan) -> f64 {
    -p.values
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * (x.ln() - 1.0))
        .sum::<f64>()
}
