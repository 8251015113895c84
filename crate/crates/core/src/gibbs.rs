//! The Gibbs map `Φ(μ) ∝ exp(−δH/δm(μ, ·))` on 1D grids, its Picard
//! iteration, and stationarity diagnostics.

use std::path::Path;

use rayon::prelude::*;

use crate::energy::{energy_value, EnergySpec};
use crate::error::{Error, Result};
use crate::measures::{grid_normalize, EmpiricalMeasure, GridMeasure1D};
use crate::wasserstein::w1_grid;

/// Largest probability allowed on the two boundary cells of `Φ(μ)`.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;
/// Floor applied to densities before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;

fn normalized(mu: &GridMeasure1D) -> Result<GridMeasure1D> {
    if (mu.mass() - 1.0).abs() <= 1e-12 {
        Ok(mu.clone())
    } else {
        grid_normalize(mu)
    }
}

pub fn gibbs_map(spec: &EnergySpec, mu: &GridMeasure1D) -> Result<GridMeasure1D> {
    let mu = normalized(mu)?;
    let gauge_free = spec.without_constants();
    let field = gauge_free.at(&mu);
    let flat: Vec<f64> = mu
        .nodes()
        .par_iter()
        .map(|&x| field.flat_derivative(&[x]))
        .collect();
    if let Some((i, v)) = flat.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Gibbs(format!(
            "flat derivative is {v} at node {i} (x = {})",
            mu.nodes()[i]
        )));
    }
    let min = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let density: Vec<f64> = flat.iter().map(|f| (-(f - min)).exp()).collect();
    let out = grid_normalize(&GridMeasure1D::new(mu.lo(), mu.hi(), density)?)?;
    let rho = out.density();
    let boundary = (rho[0] + rho[rho.len() - 1]) * out.step();
    if boundary > BOUNDARY_MASS_LIMIT {
        return Err(Error::Gibbs(format!(
            "boundary mass {boundary:.3e} exceeds {BOUNDARY_MASS_LIMIT:e}; widen [lo, hi]"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardHistory {
    /// `μ₀, Φ(μ₀), Φ²(μ₀), …`, the first entry normalized.
    pub iterates: Vec<GridMeasure1D>,
    /// `W₁(μ_{k+1}, μ_k)`.
    pub step_distances: Vec<f64>,
    /// `step_distances[k+1] / step_distances[k]`.
    pub ratio_estimates: Vec<f64>,
    pub converged: bool,
}

impl PicardHistory {
    pub fn fixed_point(&self) -> &GridMeasure1D {
        self.iterates
            .last()
            .expect("history holds at least the start")
    }

    /// Rows `iter,step_w1,ratio`; the ratio is empty on the first row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iter,step_w1,ratio\n");
        for (k, step) in self.step_distances.iter().enumerate() {
            let ratio = if k == 0 {
                String::new()
            } else {
                format!("{}", self.ratio_estimates[k - 1])
            };
            out.push_str(&format!("{k},{step},{ratio}\n"));
        }
        crate::experiments::write_atomically(path, out.as_bytes())
    }
}

pub fn picard_iterate(
    spec: &EnergySpec,
    mu0: &GridMeasure1D,
    tol: f64,
    max_iter: usize,
) -> Result<PicardHistory> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut iterates = vec![normalized(mu0)?];
    let mut step_distances = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let current = iterates.last().expect("nonempty");
        let next = gibbs_map(spec, current)?;
        let step = w1_grid(&next, current)?;
        iterates.push(next);
        step_distances.push(step);
        if step < tol {
            converged = true;
            break;
        }
    }
    let ratio_estimates = step_distances
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    Ok(PicardHistory {
        iterates,
        step_distances,
        ratio_estimates,
        converged,
    })
}

/// `W₁(Φμ, Φν) / W₁(μ, ν)`.
pub fn contraction_ratio(spec: &EnergySpec, mu: &GridMeasure1D, nu: &GridMeasure1D) -> Result<f64> {
    let base = w1_grid(mu, nu)?;
    if base == 0.0 {
        return Err(Error::ZeroDenominator("W1(mu, nu) is zero"));
    }
    Ok(w1_grid(&gibbs_map(spec, mu)?, &gibbs_map(spec, nu)?)? / base)
}

/// `sup |∂ₓ ln ρ(x) + D_mH(μ, x)|` over interior nodes, where `ρ` is the
/// density of `μ`. Nodes next to a floored density are skipped.
pub fn stationarity_residual(spec: &EnergySpec, mu: &GridMeasure1D) -> Result<f64> {
    let mu = normalized(mu)?;
    let field = spec.at(&mu);
    let log_rho: Vec<f64> = mu
        .density()
        .iter()
        .map(|r| r.max(DENSITY_FLOOR).ln())
        .collect();
    let h = mu.step();
    let nodes = mu.nodes();
    let rho = mu.density();
    let residual = (1..nodes.len() - 1)
        .into_par_iter()
        .filter(|&i| rho[i - 1] > DENSITY_FLOOR && rho[i + 1] > DENSITY_FLOOR)
        .map(|i| {
            let dlog = (log_rho[i + 1] - log_rho[i - 1]) / (2.0 * h);
            (dlog + field.intrinsic(&[nodes[i]])[0]).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(residual)
}

/// Unnormalized log-density `−n · H(μ_x)` of the `n`-particle Gibbs measure.
pub fn n_particle_gibbs_logdensity(spec: &EnergySpec, x: &EmpiricalMeasure) -> f64 {
    -(x.len() as f64) * energy_value(spec, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Potential;

    fn grid_gaussian(mean: f64, sd: f64) -> GridMeasure1D {
        GridMeasure1D::gaussian(-10.0, 10.0, 2001, mean, sd).unwrap()
    }

    fn lq(lambda_v: f64, kappa: f64) -> EnergySpec {
        EnergySpec::two_body(
            Potential::quadratic(lambda_v / 2.0),
            Potential::quadratic(kappa / 2.0),
        )
    }

    #[test]
    fn interaction_free_map_is_standard_gaussian() {
        let spec = EnergySpec::two_body(Potential::quadratic(0.5), Potential::Zero);
        let out = gibbs_map(&spec, &grid_gaussian(2.0, 0.7)).unwrap();
        let err = out
            .nodes()
            .iter()
            .zip(out.density())
            .map(|(x, r)| (r - (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!((out.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complete_the_square() {
        let (lv, k, m) = (2.0, 1.0, 0.8);
        let out = gibbs_map(&lq(lv, k), &grid_gaussian(m, 1.3)).unwrap();
        assert!((out.mean() - k * m / (lv + k)).abs() < 1e-6);
        assert!((out.variance() - 1.0 / (lv + k)).abs() < 1e-6);
    }

    #[test]
    fn constant_shift_is_bitwise_invisible() {
        let base = EnergySpec::two_body(Potential::quadratic(2.0), Potential::cosine(0.1));
        let shifted = EnergySpec::two_body(
            Potential::Quadratic {
                a: 2.0,
                b: 0.0,
                c: 7.0,
            },
            Potential::cosine(0.1),
        );
        let mu = grid_gaussian(0.3, 1.0);
        assert_eq!(
            gibbs_map(&base, &mu).unwrap(),
            gibbs_map(&shifted, &mu).unwrap()
        );
    }

    #[test]
    fn narrow_domain_is_diagnosed() {
        let spec = EnergySpec::two_body(Potential::quadratic(0.01), Potential::Zero);
        let mu = GridMeasure1D::gaussian(-2.0, 2.0, 201, 0.0, 1.0).unwrap();
        assert!(matches!(gibbs_map(&spec, &mu), Err(Error::Gibbs(_))));
    }

    #[test]
    fn picard_linear_quadratic_fixed_point() {
        let hist = picard_iterate(&lq(2.0, 1.0), &grid_gaussian(3.0, 1.0), 1e-10, 200).unwrap();
        assert!(hist.converged);
        let fp = hist.fixed_point();
        assert!((fp.variance() - 1.0 / 3.0).abs() < 1e-3);
        assert!(fp.mean().abs() < 1e-6);
        assert_eq!(hist.ratio_estimates.len(), hist.step_distances.len() - 1);
        assert!(stationarity_residual(&lq(2.0, 1.0), fp).unwrap() < 1e-3);
    }

    #[test]
    fn picard_without_interaction_is_fixed_after_one_map() {
        let spec = EnergySpec::two_body(Potential::quadratic(0.5), Potential::Zero);
        let hist = picard_iterate(&spec, &grid_gaussian(3.0, 1.0), 1e-12, 10).unwrap();
        assert!(hist.converged);
        assert_eq!(hist.step_distances.len(), 2);
        assert_eq!(hist.step_distances[1], 0.0);
    }

    #[test]
    fn contraction_ratio_cases() {
        let free = EnergySpec::two_body(Potential::quadratic(2.0), Potential::Zero);
        let (a, b) = (grid_gaussian(0.0, 1.0), grid_gaussian(1.0, 0.5));
        assert_eq!(contraction_ratio(&free, &a, &b).unwrap(), 0.0);
        assert!(matches!(
            contraction_ratio(&free, &a, &a),
            Err(Error::ZeroDenominator(_))
        ));
        let spec = EnergySpec::two_body(Potential::quadratic(2.0), Potential::cosine(0.1));
        let r1 = contraction_ratio(&spec, &a, &b).unwrap();
        let r2 = contraction_ratio(&spec, &b, &a).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
        assert!(r1 <= 0.1 / 3.9 + 0.02);
    }

    #[test]
    fn stationarity_detects_shift() {
        let spec = EnergySpec::two_body(Potential::quadratic(0.5), Potential::Zero);
        assert!(stationarity_residual(&spec, &grid_gaussian(0.0, 1.0)).unwrap() < 1e-6);
        let r = stationarity_residual(&spec, &grid_gaussian(1.0, 1.0)).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn logdensity_examples() {
        let spec = EnergySpec::two_body(Potential::quadratic(0.5), Potential::Zero);
        let x = EmpiricalMeasure::from_scalars(&[2.0]).unwrap();
        assert_eq!(n_particle_gibbs_logdensity(&spec, &x), -2.0);
        let xs = EmpiricalMeasure::from_scalars(&[1.0, -0.5, 3.0]).unwrap();
        let direct: f64 = -[1.0f64, -0.5, 3.0].iter().map(|v| 0.5 * v * v).sum::<f64>();
        assert!((n_particle_gibbs_logdensity(&spec, &xs) - direct).abs() < 1e-14);
    }
}
