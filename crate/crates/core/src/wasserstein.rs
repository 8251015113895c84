//! Exact transport distances between small empirical measures and 1D grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, GridMeasure1D};

/// Largest cloud accepted by [`w2_empirical_assignment`].
pub const ASSIGNMENT_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlanResult {
    /// `W₂²`, the mean squared distance under the optimal matching.
    pub cost: f64,
    /// `assignment[i]` is the atom of `ν` matched to atom `i` of `μ`.
    pub assignment: Vec<usize>,
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    if mu.len() != nu.len() {
        return Err(Error::SizeMismatch(mu.len(), nu.len()));
    }
    Ok(())
}

/// `W_p` between equal-size clouds on the line, by sorted matching.
pub fn wp_empirical_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: u32) -> Result<f64> {
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: mu.dim(),
        });
    }
    check_pair(mu, nu)?;
    if !(p == 1 || p == 2) {
        return Err(Error::InvalidInput(format!("p must be 1 or 2, got {p}")));
    }
    let mut a = mu.as_slice().to_vec();
    let mut b = nu.as_slice().to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let sum: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs().powi(p as i32))
        .sum();
    Ok((sum / n).powf(1.0 / f64::from(p)))
}

/// Optimal matching for the squared Euclidean cost, any dimension.
///
/// Shortest augmenting paths with dual potentials, `O(n³)`.
pub fn w2_empirical_assignment(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
) -> Result<TransportPlanResult> {
    check_pair(mu, nu)?;
    let n = mu.len();
    if n > ASSIGNMENT_CAP {
        return Err(Error::AssignmentTooLarge {
            n,
            cap: ASSIGNMENT_CAP,
        });
    }
    let d = mu.dim();
    let (xs, ys) = (mu.as_slice(), nu.as_slice());
    let mut cost = vec![0.0; n * n];
    cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = &xs[i * d..(i + 1) * d];
        for (j, c) in row.iter_mut().enumerate() {
            let y = &ys[j * d..(j + 1) * d];
            *c = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    });
    let assignment = solve_assignment(&cost, n);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok(TransportPlanResult {
        cost: total / n as f64,
        assignment,
    })
}

/// Minimum-cost perfect matching on a dense `n × n` row-major cost matrix.
fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    // Rows and columns are 1-based below; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        min_to.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let base = (i0 - 1) * n;
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[base + j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    assignment
}

/// `W₁ = ∫ |F_μ − F_ν|` for two densities on the same grid.
pub fn w1_grid(mu: &GridMeasure1D, nu: &GridMeasure1D) -> Result<f64> {
    if !mu.same_grid(nu) {
        return Err(Error::GridMismatch(
            mu.lo(),
            mu.hi(),
            mu.len(),
            nu.lo(),
            nu.hi(),
            nu.len(),
        ));
    }
    let (fa, fb) = (mu.cdf(), nu.cdf());
    let (ma, mb) = (fa[fa.len() - 1], fb[fb.len() - 1]);
    if ma <= 0.0 || mb <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let diff: Vec<f64> = fa
        .iter()
        .zip(&fb)
        .map(|(a, b)| (a / ma - b / mb).abs())
        .collect();
    Ok(crate::measures::trapezoid(&diff, mu.step()))
}

/// Empirical-measure convergence rate `δ_d(n)` in dimension `d`.
pub fn delta_d(n: usize, d: usize) -> f64 {
    let nf = n as f64;
    match d {
        0..=3 => 1.0 / nf.sqrt(),
        4 => (nf + 1.0).ln() / nf.sqrt(),
        _ => nf.powf(-2.0 / d as f64),
    }
}

/// `W₂²` between clouds, using sorting in 1D and assignment otherwise.
pub fn w2_squared(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() == 1 {
        Ok(wp_empirical_1d(mu, nu, 2)?.powi(2))
    } else {
        Ok(w2_empirical_assignment(mu, nu)?.cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_examples() {
        let mu = EmpiricalMeasure::from_scalars(&[0.0, 1.0]).unwrap();
        let nu = EmpiricalMeasure::from_scalars(&[1.0, 2.0]).unwrap();
        assert_eq!(wp_empirical_1d(&mu, &mu, 2).unwrap(), 0.0);
        assert_eq!(wp_empirical_1d(&mu, &nu, 1).unwrap(), 1.0);
        let a = EmpiricalMeasure::from_scalars(&[0.0]).unwrap();
        let b = EmpiricalMeasure::from_scalars(&[-2.5]).unwrap();
        for p in [1, 2] {
            assert_eq!(wp_empirical_1d(&a, &b, p).unwrap(), 2.5);
        }
        let plane = EmpiricalMeasure::new(2, vec![0.0, 0.0]).unwrap();
        assert!(wp_empirical_1d(&plane, &plane, 2).is_err());
    }

    #[test]
    fn assignment_translation_and_cap() {
        let mu = EmpiricalMeasure::new(2, vec![0.0, 1.0, 3.0, -1.0, 2.0, 2.0]).unwrap();
        let nu = mu.shifted(&[0.3, -0.4]);
        let r = w2_empirical_assignment(&mu, &nu).unwrap();
        assert!((r.cost.sqrt() - 0.5).abs() < 1e-12);
        assert_eq!(r.assignment, vec![0, 1, 2]);
        let big = EmpiricalMeasure::from_scalars(&vec![0.0; ASSIGNMENT_CAP + 1]).unwrap();
        assert!(matches!(
            w2_empirical_assignment(&big, &big),
            Err(Error::AssignmentTooLarge { .. })
        ));
    }

    #[test]
    fn grid_w1_examples() {
        let a = GridMeasure1D::gaussian(-10.0, 10.0, 2001, 0.0, 1.0).unwrap();
        let b = GridMeasure1D::gaussian(-10.0, 10.0, 2001, 0.5, 1.0).unwrap();
        assert_eq!(w1_grid(&a, &a).unwrap(), 0.0);
        assert!((w1_grid(&a, &b).unwrap() - 0.5).abs() < 1e-3);
        let u1 =
            GridMeasure1D::from_fn(0.0, 2.0, 4001, |x| if x <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        let u2 = GridMeasure1D::from_fn(0.0, 2.0, 4001, |_| 0.5).unwrap();
        assert!((w1_grid(&u1, &u2).unwrap() - 0.5).abs() < 1e-3);
        let c = GridMeasure1D::gaussian(-5.0, 5.0, 2001, 0.0, 1.0).unwrap();
        assert!(matches!(w1_grid(&a, &c), Err(Error::GridMismatch(..))));
    }

    #[test]
    fn delta_d_table() {
        assert!((delta_d(100, 1) - 0.1).abs() < 1e-15);
        assert!((delta_d(100, 4) - 101f64.ln() / 10.0).abs() < 1e-15);
        assert!((delta_d(100, 4) - 0.4615).abs() < 1e-4);
        assert!((delta_d(32, 8) - 0.4204).abs() < 1e-4);
    }
}
