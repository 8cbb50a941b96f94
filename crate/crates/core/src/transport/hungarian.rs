//! Shortest-augmenting-path Hungarian algorithm, O(d³), followed by a
//! canonicalisation pass that picks the lexicographically smallest optimal
//! permutation so ties resolve to the lowest column for the lowest row.

use super::CostMatrix;
use crate::error::{Error, Infeasibility, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[i]` is the column assigned to row `i`.
    pub perm: Vec<usize>,
    pub cost: f64,
}

pub fn hungarian(c: &CostMatrix) -> Result<Assignment> {
    let d = c.dim();
    if d == 0 {
        return Ok(Assignment {
            perm: vec![],
            cost: 0.0,
        });
    }
    c.check_starvation()?;
    let cost = |i: usize, j: usize| {
        if c.is_masked(i, j) {
            f64::INFINITY
        } else {
            c.get(i, j)
        }
    };

    // 1-based potentials; index 0 is the virtual root
    let inf = f64::INFINITY;
    let mut u = vec![0.0; d + 1];
    let mut v = vec![0.0; d + 1];
    let mut owner = vec![0usize; d + 1];
    let mut way = vec![0usize; d + 1];
    for i in 1..=d {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; d + 1];
        let mut used = vec![false; d + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=d {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return Err(Error::Infeasible(Infeasibility::NoPerfectMatching));
            }
            for j in 0..=d {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; d];
    for j in 1..=d {
        perm[owner[j] - 1] = j - 1;
    }

    // Every optimal assignment lives on edges that are tight under the final
    // duals; pick the lexicographically smallest one among them.
    let scale = c
        .values()
        .iter()
        .enumerate()
        .filter(|(k, _)| !c.is_masked(k / d, k % d))
        .fold(1.0f64, |m, (_, x)| m.max(x.abs()));
    let tol = 1e-12 * scale * d as f64;
    let tight: Vec<Vec<usize>> = (0..d)
        .map(|i| {
            (0..d)
                .filter(|&j| !c.is_masked(i, j) && c.get(i, j) - u[i + 1] - v[j + 1] <= tol)
                .collect()
        })
        .collect();
    canonicalize(&tight, &mut perm);

    let cost = perm.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
    Ok(Assignment { perm, cost })
}

fn canonicalize(tight: &[Vec<usize>], perm: &mut [usize]) {
    let d = perm.len();
    let mut row_of = vec![0usize; d];
    for (i, &j) in perm.iter().enumerate() {
        row_of[j] = i;
    }
    for i in 0..d {
        for &j in &tight[i] {
            if perm[i] == j {
                break;
            }
            let r = row_of[j];
            if r < i {
                continue;
            }
            // Row r gives up column j; it must reach the column i frees up
            // through rows > i without touching column j.
            let freed = perm[i];
            let mut seen_cols = vec![false; d];
            seen_cols[j] = true;
            let mut trial_perm = perm.to_vec();
            let mut trial_rows = row_of.clone();
            trial_perm[i] = j;
            trial_rows[j] = i;
            // column `freed` is now unowned
            if augment(
                r,
                i,
                freed,
                tight,
                &mut trial_perm,
                &mut trial_rows,
                &mut seen_cols,
            ) {
                perm.copy_from_slice(&trial_perm);
                row_of = trial_rows;
                break;
            }
        }
    }
}

/// Kuhn-style augmenting search from `row` to the single free column
/// `free_col`, over rows strictly after `fixed`.
fn augment(
    row: usize,
    fixed: usize,
    free_col: usize,
    tight: &[Vec<usize>],
    perm: &mut [usize],
    row_of: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for &j in &tight[row] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        let take = if j == free_col {
            true
        } else {
            let r = row_of[j];
            r > fixed && r != row && augment(r, fixed, free_col, tight, perm, row_of, seen)
        };
        if take {
            perm[row] = j;
            row_of[j] = row;
            return true;
        }
    }
    false
}
