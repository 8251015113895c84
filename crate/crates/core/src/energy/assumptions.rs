use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{operator_norm, EnergySpec};
use crate::measures::Measure;

/// Sampled margins of the declared constants. A negative margin means the
/// declaration fails somewhere on the sample; this is reported, not fatal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `min ⟨D_mH(μ,x) − D_mH(μ,y), x − y⟩/‖x − y‖² − λ`.
    pub monotonicity_margin: f64,
    /// `d2m_bound − max ‖D²_mH(μ,x,y)‖_op`.
    pub d2m_margin: f64,
    /// `dm_lip − max ‖D_mH(μ,x) − D_mH(μ,y)‖/‖x − y‖`, when declared.
    pub dm_lip_margin: Option<f64>,
    /// `grad_at_origin − max ‖D_mH(μ,0)‖`, when declared.
    pub grad_at_origin_margin: Option<f64>,
    /// Smallest eigenvalue of the symmetrized Jacobian `∇_x D_mH` seen on the sample.
    pub lambda_lower_estimate: f64,
    /// Largest `‖D²_mH‖_op` seen on the sample.
    pub d2m_estimate: f64,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_assumptions(
    spec: &EnergySpec,
    sample_points: &[Vec<f64>],
    sample_measures: &[&dyn Measure],
) -> AssumptionReport {
    let declared = spec.declared;
    let mut mono = f64::INFINITY;
    let mut d2m_max: f64 = 0.0;
    let mut lip_max: f64 = 0.0;
    let mut origin_max: f64 = 0.0;
    let mut lambda_min = f64::INFINITY;
    for mu in sample_measures {
        let field = spec.at(*mu);
        let dim = mu.dim();
        let grads: Vec<Vec<f64>> = sample_points.iter().map(|x| field.intrinsic(x)).collect();
        for (i, x) in sample_points.iter().enumerate() {
            let jac = field.jacobian(x);
            let sym: DMatrix<f64> = (&jac + jac.transpose()) * 0.5;
            lambda_min = lambda_min.min(sym.symmetric_eigenvalues().min());
            for (j, y) in sample_points.iter().enumerate().skip(i) {
                d2m_max = d2m_max.max(operator_norm(&field.second_intrinsic(x, y)));
                if i == j {
                    continue;
                }
                let dist_sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist_sq == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                let mut diff_sq = 0.0;
                for k in 0..dim {
                    let dg = grads[i][k] - grads[j][k];
                    inner += dg * (x[k] - y[k]);
                    diff_sq += dg * dg;
                }
                mono = mono.min(inner / dist_sq);
                lip_max = lip_max.max((diff_sq / dist_sq).sqrt());
            }
        }
        let g0 = field.intrinsic(&vec![0.0; dim]);
        origin_max = origin_max.max(g0.iter().map(|v| v * v).sum::<f64>().sqrt());
    }

    let monotonicity_margin = mono - declared.lambda;
    let d2m_margin = declared.d2m_bound - d2m_max;
    let dm_lip_margin = declared.dm_lip.map(|l| l - lip_max);
    let grad_at_origin_margin = declared.grad_at_origin.map(|g| g - origin_max);
    let tol = 1e-10;
    let mut violations = Vec::new();
    if monotonicity_margin < -tol {
        violations.push(format!(
            "monotonicity: sampled {mono:.6} below declared lambda {}",
            declared.lambda
        ));
    }
    if d2m_margin < -tol {
        violations.push(format!(
            "second derivative: sampled norm {d2m_max:.6} above declared bound {}",
            declared.d2m_bound
        ));
    }
    if let Some(m) = dm_lip_margin.filter(|m| *m < -tol) {
        violations.push(format!(
            "intrinsic Lipschitz constant exceeded by {:.3e}",
            -m
        ));
    }
    if let Some(m) = grad_at_origin_margin.filter(|m| *m < -tol) {
        violations.push(format!(
            "gradient at origin exceeds declared bound by {:.3e}",
            -m
        ));
    }
    AssumptionReport {
        monotonicity_margin,
        d2m_margin,
        dm_lip_margin,
        grad_at_origin_margin,
        lambda_lower_estimate: lambda_min,
        d2m_estimate: d2m_max,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{DeclaredConstants, Potential};
    use crate::measures::EmpiricalMeasure;

    fn setup(
        lambda: f64,
        bound: f64,
        w: Potential,
    ) -> (EnergySpec, Vec<Vec<f64>>, Vec<EmpiricalMeasure>) {
        let spec =
            EnergySpec::two_body(Potential::quadratic(2.0), w).with_declared(DeclaredConstants {
                lambda,
                d2m_bound: bound,
                ..Default::default()
            });
        let points: Vec<Vec<f64>> = (0..25).map(|i| vec![-3.0 + 0.25 * i as f64]).collect();
        let measures = vec![
            EmpiricalMeasure::from_scalars(&[0.0, 1.0, -2.5]).unwrap(),
            EmpiricalMeasure::from_scalars(&[0.3]).unwrap(),
        ];
        (spec, points, measures)
    }

    #[test]
    fn honest_constants_pass() {
        let (spec, pts, ms) = setup(3.9, 0.1, Potential::cosine(0.1));
        let refs: Vec<&dyn Measure> = ms.iter().map(|m| m as &dyn Measure).collect();
        let r = check_assumptions(&spec, &pts, &refs);
        assert!(r.ok(), "{r:?}");
        assert!(r.monotonicity_margin >= 0.0 && r.d2m_margin >= 0.0);
    }

    #[test]
    fn overclaimed_lambda_flagged() {
        let (spec, pts, ms) = setup(10.0, 0.1, Potential::cosine(0.1));
        let refs: Vec<&dyn Measure> = ms.iter().map(|m| m as &dyn Measure).collect();
        let r = check_assumptions(&spec, &pts, &refs);
        assert!(!r.ok());
        assert!(r.monotonicity_margin < 0.0);
    }

    #[test]
    fn no_interaction_margin_is_declared_bound() {
        let (spec, pts, ms) = setup(3.9, 0.1, Potential::Zero);
        let refs: Vec<&dyn Measure> = ms.iter().map(|m| m as &dyn Measure).collect();
        let r = check_assumptions(&spec, &pts, &refs);
        assert_eq!(r.d2m_margin, 0.1);
    }
}
