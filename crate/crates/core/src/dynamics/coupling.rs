use serde::{Deserialize, Serialize};

use super::trace::CouplingTrace;
use super::{drift_into, guard, kinetic_update, overdamped_update, KineticState, SimParams};
use crate::energy::{EnergyFamily, EnergySpec, KineticFields, Potential};
use crate::error::{Error, Result};
use crate::measures::{second_moment, EmpiricalMeasure, NoiseStreams};
use crate::wasserstein::w2_squared;

/// Clouds larger than this are subsampled (first rows) before the
/// assignment-based `W₂` in dimension above one.
const W2_SUBSAMPLE: usize = 256;

/// `Q_{a,b}(p, v) = a|p|² + 2 p·v + b|v|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub a: f64,
    pub b: f64,
}

impl QuadraticForm {
    pub fn eval(&self, p: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (x, y) in p.iter().zip(v) {
            acc += self.a * x * x + 2.0 * x * y + self.b * y * y;
        }
        acc
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.a * self.b > 1.0
    }

    /// Eigenvalues of `[[a, 1], [1, b]]`, ascending.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.a + self.b);
        let rad = (0.25 * (self.a - self.b).powi(2) + 1.0).sqrt();
        (mid - rad, mid + rad)
    }
}

/// Parameters of `V = a_V‖x‖² + b_V Σx + c`, `W = a_W‖z‖² + c'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearQuadratic {
    pub a_v: f64,
    pub b_v: f64,
    pub a_w: f64,
}

impl LinearQuadratic {
    /// Rate of the mean's relaxation, `2 a_V`.
    pub fn mean_rate(&self) -> f64 {
        2.0 * self.a_v
    }

    /// Rate of the deviation dynamics, `2 a_V + 2 a_W`.
    pub fn deviation_rate(&self) -> f64 {
        2.0 * (self.a_v + self.a_w)
    }
}

/// Recognizes the linear-quadratic two-body family, whose nonlinear law
/// stays Gaussian with explicit mean and variance.
pub fn linear_quadratic_params(spec: &EnergySpec) -> Option<LinearQuadratic> {
    let EnergyFamily::TwoBody {
        confinement,
        interaction,
    } = &spec.family
    else {
        return None;
    };
    let (a_v, b_v) = match confinement {
        Potential::Quadratic { a, b, .. } if *a > 0.0 => (*a, *b),
        _ => return None,
    };
    let a_w = match interaction {
        Potential::Zero => 0.0,
        Potential::Quadratic { a, b, .. } if *b == 0.0 => *a,
        _ => return None,
    };
    Some(LinearQuadratic { a_v, b_v, a_w })
}

/// How the independent copies learn the law of the nonlinear process.
#[derive(Debug, Clone)]
pub enum NonlinearLaw {
    /// A large independent particle system standing in for the law.
    Reference {
        init: EmpiricalMeasure,
        noise: NoiseStreams,
    },
    /// The Gaussian law of the Euler–Maruyama nonlinear chain, propagated
    /// exactly: its drift only sees the mean, which follows
    /// `m ← m − dt (2a_V m + b_V)`, while each coordinate's variance follows
    /// `v ← (1 − κ dt)² v + 2 dt`, `κ = 2a_V + 2a_W`.
    LinearQuadratic {
        params: LinearQuadratic,
        mean0: Vec<f64>,
        var0: f64,
    },
}

#[derive(Debug, Clone)]
pub enum KineticLaw {
    Reference {
        init: KineticState,
        noise: NoiseStreams,
    },
}

fn mean_sq_dist(a: &[f64], b: &[f64], n: usize) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64
}

fn w2_between(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim() == 1 || a.len() <= W2_SUBSAMPLE {
        return w2_squared(a, b);
    }
    let d = a.dim();
    let k = W2_SUBSAMPLE * d;
    w2_squared(
        &EmpiricalMeasure::new(d, a.as_slice()[..k].to_vec())?,
        &EmpiricalMeasure::new(d, b.as_slice()[..k].to_vec())?,
    )
}

/// `W₂²` between a 1D cloud and a law given by `n` quantile points, by
/// sorted matching.
fn w2_to_quantiles(cloud: &[f64], quantiles: &[f64]) -> f64 {
    let mut sorted = cloud.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .iter()
        .zip(quantiles)
        .map(|(x, q)| (x - q) * (x - q))
        .sum::<f64>()
        / sorted.len() as f64
}

/// Order statistics of `sorted` at levels `(i + ½)/n`.
fn subsample_quantiles(sorted: &[f64], n: usize) -> Vec<f64> {
    let m = sorted.len();
    (0..n)
        .map(|i| sorted[(((i as f64 + 0.5) * m as f64 / n as f64) as usize).min(m - 1)])
        .collect()
}

fn check_same_shape(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    noise: &NoiseStreams,
) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if noise.len() != a.len() {
        return Err(Error::SizeMismatch(a.len(), noise.len()));
    }
    Ok(())
}

/// Two over-damped systems driven by identical Brownian increments.
///
/// `noise` holds one stream per particle index; particle `i` of both systems
/// receives the same draw at every step.
pub fn simulate_coupled_overdamped(
    init_a: &EmpiricalMeasure,
    init_b: &EmpiricalMeasure,
    spec: &EnergySpec,
    params: &SimParams,
    noise: &mut NoiseStreams,
    track_w2: bool,
) -> Result<CouplingTrace> {
    params.validate()?;
    check_same_shape(init_a, init_b, noise)?;
    let (n, d) = (init_a.len(), init_a.dim());
    let mut a = init_a.clone();
    let mut b = init_b.clone();
    let mut xi = vec![0.0; n * d];
    let mut drift_a = vec![0.0; n * d];
    let mut drift_b = vec![0.0; n * d];
    let mut trace = CouplingTrace {
        w2_sq: track_w2.then(Vec::new),
        ..Default::default()
    };
    let steps = params.steps();
    for step in 0..=steps {
        if params.records_at(step) {
            trace.times.push(step as f64 * params.dt);
            trace
                .mean_sq_dist
                .push(mean_sq_dist(a.as_slice(), b.as_slice(), n));
            trace.second_moment_a.push(second_moment(&a));
            trace.second_moment_b.push(second_moment(&b));
            if let Some(w) = trace.w2_sq.as_mut() {
                w.push(w2_between(&a, &b)?);
            }
        }
        if step == steps {
            break;
        }
        noise.fill(&mut xi, d);
        drift_into(spec, &a, a.as_slice(), d, &mut drift_a);
        drift_into(spec, &b, b.as_slice(), d, &mut drift_b);
        overdamped_update(a.as_mut_slice(), &drift_a, &xi, params.dt);
        overdamped_update(b.as_mut_slice(), &drift_b, &xi, params.dt);
        guard(a.as_slice(), d, step + 1)?;
        guard(b.as_slice(), d, step + 1)?;
    }
    Ok(trace)
}

/// The `n`-particle system and `n` independent copies of the nonlinear
/// process, started from the same points and driven by the same per-index
/// streams. The copies take their drift from `law`.
///
/// In dimension one the trace also carries `W₂²` between the copies and the
/// law, the latter represented by its quantiles at levels `(i + ½)/n`.
pub fn simulate_poc_overdamped(
    init: &EmpiricalMeasure,
    spec: &EnergySpec,
    params: &SimParams,
    noise: &mut NoiseStreams,
    law: NonlinearLaw,
) -> Result<CouplingTrace> {
    params.validate()?;
    check_same_shape(init, init, noise)?;
    let (n, d) = (init.len(), init.dim());
    if n < 2 {
        return Err(Error::InvalidInput(
            "propagation of chaos needs n >= 2".into(),
        ));
    }
    let mut x = init.clone();
    let mut copies = init.clone();
    let mut xi = vec![0.0; n * d];
    let mut drift_x = vec![0.0; n * d];
    let mut drift_c = vec![0.0; n * d];

    let mut reference = None;
    let mut gaussian = None;
    match law {
        NonlinearLaw::Reference { init, noise } => {
            if init.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: init.dim(),
                });
            }
            if init.len() != noise.len() {
                return Err(Error::SizeMismatch(init.len(), noise.len()));
            }
            let m = init.len();
            reference = Some((init, noise, vec![0.0; m * d], vec![0.0; m * d]));
        }
        NonlinearLaw::LinearQuadratic {
            params: lq,
            mean0,
            var0,
        } => {
            if mean0.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: mean0.len(),
                });
            }
            gaussian = Some((lq, mean0, var0));
        }
    }

    let mut trace = CouplingTrace {
        law_moment: Some(Vec::new()),
        w2_sq: (d == 1).then(Vec::new),
        ..Default::default()
    };
    let std_quantiles: Vec<f64> = if d == 1 && gaussian.is_some() {
        let z = statrs::distribution::Normal::new(0.0, 1.0).expect("valid normal");
        (0..n)
            .map(|i| {
                statrs::distribution::ContinuousCDF::inverse_cdf(&z, (i as f64 + 0.5) / n as f64)
            })
            .collect()
    } else {
        Vec::new()
    };
    let steps = params.steps();
    let dt = params.dt;
    for step in 0..=steps {
        if params.records_at(step) {
            trace.times.push(step as f64 * dt);
            trace
                .mean_sq_dist
                .push(mean_sq_dist(x.as_slice(), copies.as_slice(), n));
            trace.second_moment_a.push(second_moment(&x));
            trace.second_moment_b.push(second_moment(&copies));
            let lm = match (&reference, &gaussian) {
                (Some((r, ..)), _) => second_moment(r),
                (_, Some((_, m, v))) => m.iter().map(|c| c * c).sum::<f64>() + d as f64 * v,
                _ => unreachable!("one law is always set"),
            };
            trace.law_moment.as_mut().expect("set above").push(lm);
            if let Some(w) = trace.w2_sq.as_mut() {
                let quantiles = match (&reference, &gaussian) {
                    (Some((r, ..)), _) => {
                        let mut sorted = r.as_slice().to_vec();
                        sorted.sort_by(f64::total_cmp);
                        subsample_quantiles(&sorted, n)
                    }
                    (_, Some((_, m, v))) => {
                        std_quantiles.iter().map(|z| m[0] + v.sqrt() * z).collect()
                    }
                    _ => unreachable!("one law is always set"),
                };
                w.push(w2_to_quantiles(copies.as_slice(), &quantiles));
            }
        }
        if step == steps {
            break;
        }
        noise.fill(&mut xi, d);
        drift_into(spec, &x, x.as_slice(), d, &mut drift_x);
        if let Some((r, r_noise, r_xi, r_drift)) = reference.as_mut() {
            drift_into(spec, &*r, copies.as_slice(), d, &mut drift_c);
            r_noise.fill(r_xi, d);
            drift_into(spec, &*r, r.as_slice(), d, r_drift);
            overdamped_update(r.as_mut_slice(), r_drift, r_xi, dt);
            guard(r.as_slice(), d, step + 1)?;
        }
        if let Some((lq, m, v)) = gaussian.as_mut() {
            let law = EmpiricalMeasure::new(d, m.clone())?;
            drift_into(spec, &law, copies.as_slice(), d, &mut drift_c);
            for c in m.iter_mut() {
                *c -= dt * (2.0 * lq.a_v * *c + lq.b_v);
            }
            *v = (1.0 - lq.deviation_rate() * dt).powi(2) * *v + 2.0 * dt;
        }
        overdamped_update(x.as_mut_slice(), &drift_x, &xi, dt);
        overdamped_update(copies.as_mut_slice(), &drift_c, &xi, dt);
        guard(x.as_slice(), d, step + 1)?;
        guard(copies.as_slice(), d, step + 1)?;
    }
    Ok(trace)
}

fn kinetic_moment(s: &KineticState) -> f64 {
    second_moment(&s.positions) + second_moment(&s.velocities)
}

fn check_kinetic_pair(a: &KineticState, b: &KineticState, noise: &NoiseStreams) -> Result<()> {
    check_same_shape(&a.positions, &b.positions, noise)?;
    check_same_shape(&a.velocities, &b.velocities, noise)
}

fn record_kinetic_pair(
    trace: &mut CouplingTrace,
    t: f64,
    a: &KineticState,
    b: &KineticState,
    q: Option<&QuadraticForm>,
) {
    let n = a.len();
    let d = a.dim();
    let (pa, pb) = (a.positions.as_slice(), b.positions.as_slice());
    let (va, vb) = (a.velocities.as_slice(), b.velocities.as_slice());
    trace.times.push(t);
    trace
        .mean_sq_dist
        .push(mean_sq_dist(pa, pb, n) + mean_sq_dist(va, vb, n));
    trace.second_moment_a.push(kinetic_moment(a));
    trace.second_moment_b.push(kinetic_moment(b));
    if let (Some(q), Some(series)) = (q, trace.q_form.as_mut()) {
        let mut p = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..d {
                p[k] = pa[i * d + k] - pb[i * d + k];
                v[k] = va[i * d + k] - vb[i * d + k];
            }
            acc += q.eval(&p, &v);
        }
        series.push(acc / n as f64);
    }
}

struct KineticBuffers {
    drift: Vec<f64>,
}

impl KineticBuffers {
    fn new(len: usize) -> Self {
        Self {
            drift: vec![0.0; len],
        }
    }

    /// Advances `s` one step with interaction drift from the measure `law`
    /// (`None` means the system's own positions).
    fn advance(
        &mut self,
        s: &mut KineticState,
        law: Option<&EmpiricalMeasure>,
        fields: &KineticFields,
        spec: &EnergySpec,
        xi: &[f64],
        dt: f64,
        step: usize,
    ) -> Result<()> {
        let d = s.dim();
        drift_into(
            spec,
            law.unwrap_or(&s.positions),
            s.positions.as_slice(),
            d,
            &mut self.drift,
        );
        kinetic_update(
            s.positions.as_mut_slice(),
            s.velocities.as_mut_slice(),
            &self.drift,
            xi,
            fields,
            d,
            dt,
        );
        s.t += dt;
        guard(s.positions.as_slice(), d, step + 1)?;
        guard(s.velocities.as_slice(), d, step + 1)
    }
}

/// Two kinetic systems driven by identical velocity increments.
pub fn simulate_coupled_kinetic(
    init_a: &KineticState,
    init_b: &KineticState,
    fields: &KineticFields,
    spec: &EnergySpec,
    params: &SimParams,
    noise: &mut NoiseStreams,
    q: Option<QuadraticForm>,
) -> Result<CouplingTrace> {
    params.validate()?;
    check_kinetic_pair(init_a, init_b, noise)?;
    let (n, d) = (init_a.len(), init_a.dim());
    let mut a = init_a.clone();
    let mut b = init_b.clone();
    let mut xi = vec![0.0; n * d];
    let mut buf_a = KineticBuffers::new(n * d);
    let mut buf_b = KineticBuffers::new(n * d);
    let mut trace = CouplingTrace {
        q_form: q.map(|_| Vec::new()),
        ..Default::default()
    };
    let steps = params.steps();
    for step in 0..=steps {
        if params.records_at(step) {
            record_kinetic_pair(&mut trace, step as f64 * params.dt, &a, &b, q.as_ref());
        }
        if step == steps {
            break;
        }
        noise.fill(&mut xi, d);
        buf_a.advance(&mut a, None, fields, spec, &xi, params.dt, step)?;
        buf_b.advance(&mut b, None, fields, spec, &xi, params.dt, step)?;
    }
    Ok(trace)
}

/// Kinetic analogue of [`simulate_poc_overdamped`]; the gap is
/// `|P − P̃|² + |V − Ṽ|²` averaged over indices.
pub fn simulate_poc_kinetic(
    init: &KineticState,
    fields: &KineticFields,
    spec: &EnergySpec,
    params: &SimParams,
    noise: &mut NoiseStreams,
    law: KineticLaw,
) -> Result<CouplingTrace> {
    params.validate()?;
    check_kinetic_pair(init, init, noise)?;
    let (n, d) = (init.len(), init.dim());
    if n < 2 {
        return Err(Error::InvalidInput(
            "propagation of chaos needs n >= 2".into(),
        ));
    }
    let KineticLaw::Reference {
        init: ref_init,
        noise: mut ref_noise,
    } = law;
    if ref_init.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: ref_init.dim(),
        });
    }
    if ref_init.len() != ref_noise.len() {
        return Err(Error::SizeMismatch(ref_init.len(), ref_noise.len()));
    }
    let m = ref_init.len();
    let mut x = init.clone();
    let mut copies = init.clone();
    let mut reference = ref_init;
    let mut xi = vec![0.0; n * d];
    let mut r_xi = vec![0.0; m * d];
    let mut buf_x = KineticBuffers::new(n * d);
    let mut buf_c = KineticBuffers::new(n * d);
    let mut buf_r = KineticBuffers::new(m * d);
    let mut trace = CouplingTrace {
        law_moment: Some(Vec::new()),
        ..Default::default()
    };
    let steps = params.steps();
    for step in 0..=steps {
        if params.records_at(step) {
            record_kinetic_pair(&mut trace, step as f64 * params.dt, &x, &copies, None);
            trace
                .law_moment
                .as_mut()
                .expect("set above")
                .push(kinetic_moment(&reference));
        }
        if step == steps {
            break;
        }
        noise.fill(&mut xi, d);
        ref_noise.fill(&mut r_xi, d);
        buf_x.advance(&mut x, None, fields, spec, &xi, params.dt, step)?;
        buf_c.advance(
            &mut copies,
            Some(&reference.positions),
            fields,
            spec,
            &xi,
            params.dt,
            step,
        )?;
        buf_r.advance(&mut reference, None, fields, spec, &r_xi, params.dt, step)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_helpers() {
        let sorted: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(
            subsample_quantiles(&sorted, 4),
            vec![12.0, 37.0, 62.0, 87.0]
        );
        assert_eq!(w2_to_quantiles(&[3.0, 1.0], &[1.0, 3.0]), 0.0);
        assert_eq!(w2_to_quantiles(&[0.0, 0.0], &[1.0, 3.0]), 5.0);
    }

    #[test]
    fn quadratic_form_eigenvalues() {
        let q = QuadraticForm { a: 2.0, b: 2.0 };
        let (lo, hi) = q.eigenvalues();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
        assert!(q.is_positive_definite());
        assert!(!QuadraticForm { a: 0.5, b: 1.5 }.is_positive_definite());
        assert_eq!(q.eval(&[1.0], &[-1.0]), 2.0);
    }

    #[test]
    fn recognizes_linear_quadratic() {
        let lq = EnergySpec::two_body(Potential::quadratic(2.0), Potential::quadratic(0.5));
        assert_eq!(
            linear_quadratic_params(&lq),
            Some(LinearQuadratic {
                a_v: 2.0,
                b_v: 0.0,
                a_w: 0.5
            })
        );
        let cos = EnergySpec::two_body(Potential::quadratic(2.0), Potential::cosine(0.1));
        assert_eq!(linear_quadratic_params(&cos), None);
    }
}
