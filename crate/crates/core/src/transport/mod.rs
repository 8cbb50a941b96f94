//! Square assignment problems: exact (Hungarian) and entropy-regularised
//! (log-domain Sinkhorn) solvers over masked cost matrices.

mod hungarian;
pub(crate) mod sinkhorn;

pub use hungarian::{hungarian, Assignment};
pub use sinkhorn::{
    median_abs_cost, plan_entropy, sinkhorn_log, EpsilonScale, SinkhornConfig, SinkhornSolution,
};

use crate::error::{Error, Infeasibility, Result};

/// `d × d` costs, row-major, with an optional mask of forbidden pairings.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    d: usize,
    values: Vec<f64>,
    /// `true` marks a forbidden pairing.
    mask: Option<Vec<bool>>,
}

impl CostMatrix {
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != d * d {
            return Err(Error::Config(format!(
                "cost matrix of side {d} needs {} values, got {}",
                d * d,
                values.len()
            )));
        }
        let c = Self {
            d,
            values,
            mask: None,
        };
        c.check_finite()?;
        Ok(c)
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = (0..d * d).map(|k| f(k / d, k % d)).collect();
        Self::new(d, values)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.d * self.d {
            return Err(Error::Config(
                "mask size does not match the cost matrix".into(),
            ));
        }
        self.mask = Some(mask);
        self.check_finite()?;
        Ok(self)
    }

    fn check_finite(&self) -> Result<()> {
        match (0..self.values.len())
            .find(|&k| !self.is_masked_flat(k) && !self.values[k].is_finite())
        {
            Some(k) => Err(Error::Config(format!(
                "cost ({}, {}) is not finite",
                k / self.d,
                k % self.d
            ))),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    #[inline]
    fn is_masked_flat(&self, k: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[k])
    }

    #[inline]
    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.is_masked_flat(i * self.d + j)
    }

    /// Every row and column must keep at least one allowed entry.
    pub fn check_starvation(&self) -> Result<()> {
        let d = self.d;
        if let Some(i) = (0..d).find(|&i| (0..d).all(|j| self.is_masked(i, j))) {
            return Err(Error::Infeasible(Infeasibility::StarvedRow(i)));
        }
        if let Some(j) = (0..d).find(|&j| (0..d).all(|i| self.is_masked(i, j))) {
            return Err(Error::Infeasible(Infeasibility::StarvedColumn(j)));
        }
        Ok(())
    }
}

/// Coupling between `d` rows and `d` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub d: usize,
    pub values: Vec<f64>,
}

impl TransportPlan {
    pub fn from_permutation(perm: &[usize]) -> Self {
        let d = perm.len();
        let mut values = vec![0.0; d * d];
        for (i, &j) in perm.iter().enumerate() {
            values[i * d + j] = 1.0;
        }
        Self { d, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.chunks(self.d).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.d];
        for row in self.values.chunks(self.d) {
            s.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        s
    }

    /// Frobenius inner product with a cost matrix; masked entries carry no mass.
    pub fn dot(&self, c: &CostMatrix) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(k, p)| p * c.values[k])
            .sum()
    }
}
