//! Flat energies on probability measures and their derivatives.
//!
//! Three families are supported: two-body (`∫V dμ + ½∬W(x−y)`), polynomial
//! (`∫V dμ + Σ_k ∫W⁽ᵏ⁾ dμ^{⊗k}`) and internal (`ψ(⟨μ, W⟩)`). Every quantity is
//! evaluated literally on the measure, diagonal terms included.

mod assumptions;
mod kbody;
mod kinetic;
mod potential;

pub use assumptions::{check_assumptions, AssumptionReport};
pub use kbody::{KBodyKernel, Psi};
pub use kinetic::{check_kinetic_fields, Friction, KineticCheck, KineticFields, Perturbation};
pub use potential::{Convolution, Potential};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Measure, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyFamily {
    TwoBody {
        confinement: Potential,
        interaction: Potential,
    },
    Polynomial {
        confinement: Potential,
        kernels: Vec<KBodyKernel>,
    },
    Internal {
        psi: Psi,
        observable: Potential,
    },
}

/// User-declared structural constants, validated by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredConstants {
    /// Lower bound on the smallest eigenvalue of `∇_x D_mH`.
    #[serde(default)]
    pub lambda: f64,
    /// Bound on `sup ‖D²_mH(μ, x, y)‖_op`.
    #[serde(default)]
    pub d2m_bound: f64,
    /// Lipschitz constant of `x ↦ D_mH(μ, x)`, uniform in `μ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dm_lip: Option<f64>,
    /// Bound on `sup_μ ‖D_mH(μ, 0)‖`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_at_origin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    #[serde(flatten)]
    pub family: EnergyFamily,
    #[serde(default)]
    pub declared: DeclaredConstants,
}

/// Above this many index tuples, k-fold integrals switch to Monte Carlo.
pub const EXACT_TUPLE_LIMIT: f64 = 1e7;
/// Sample count of the Monte-Carlo fallback; the estimator's standard error is
/// `sd(W)/√MC_SAMPLES`.
pub const MC_SAMPLES: usize = 1 << 16;
const MC_SEED: u64 = 0x6d66_6c61_6e67;

impl EnergySpec {
    pub fn two_body(confinement: Potential, interaction: Potential) -> Self {
        EnergySpec {
            family: EnergyFamily::TwoBody {
                confinement,
                interaction,
            },
            declared: DeclaredConstants::default(),
        }
    }

    pub fn with_declared(mut self, declared: DeclaredConstants) -> Self {
        self.declared = declared;
        self
    }

    /// The same two-body energy written as a polynomial energy with kernel
    /// `½ W(x − y)`.
    pub fn as_polynomial(&self) -> Option<EnergySpec> {
        match &self.family {
            EnergyFamily::TwoBody {
                confinement,
                interaction,
            } => Some(EnergySpec {
                family: EnergyFamily::Polynomial {
                    confinement: confinement.clone(),
                    kernels: vec![KBodyKernel::PairSum {
                        arity: 2,
                        scale: 0.5,
                        phi: interaction.clone(),
                    }],
                },
                declared: self.declared,
            }),
            _ => None,
        }
    }

    /// Drops additive constants of the confinement and the two-body
    /// interaction. These shift `δH/δm` by a constant, which the Gibbs map
    /// ignores.
    pub fn without_constants(&self) -> EnergySpec {
        let family = match &self.family {
            EnergyFamily::TwoBody {
                confinement,
                interaction,
            } => EnergyFamily::TwoBody {
                confinement: confinement.without_constant(),
                interaction: interaction.without_constant(),
            },
            EnergyFamily::Polynomial {
                confinement,
                kernels,
            } => EnergyFamily::Polynomial {
                confinement: confinement.without_constant(),
                kernels: kernels.clone(),
            },
            other => other.clone(),
        };
        EnergySpec {
            family,
            declared: self.declared,
        }
    }

    /// Whether the interaction part vanishes, making the flat derivative
    /// independent of the measure.
    pub fn is_interaction_free(&self) -> bool {
        match &self.family {
            EnergyFamily::TwoBody { interaction, .. } => interaction.is_zero(),
            EnergyFamily::Polynomial { kernels, .. } => kernels.is_empty(),
            EnergyFamily::Internal { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.declared;
        for (name, v) in [
            ("declared.lambda", Some(d.lambda)),
            ("declared.d2m_bound", Some(d.d2m_bound)),
            ("declared.dm_lip", d.dm_lip),
            ("declared.grad_at_origin", d.grad_at_origin),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Config {
                        path: name.into(),
                        message: format!("must be finite and nonnegative, got {v}"),
                    });
                }
            }
        }
        match &self.family {
            EnergyFamily::TwoBody {
                confinement,
                interaction,
            } => {
                if !confinement.is_well_formed() || !interaction.is_well_formed() {
                    return Err(invalid("potential parameters must be finite"));
                }
                if !interaction.is_even() {
                    return Err(Error::Config {
                        path: "energy.interaction".into(),
                        message: "two-body interaction must be even".into(),
                    });
                }
            }
            EnergyFamily::Polynomial {
                confinement,
                kernels,
            } => {
                if !confinement.is_well_formed() {
                    return Err(invalid("potential parameters must be finite"));
                }
                for (i, k) in kernels.iter().enumerate() {
                    if k.arity() < 2 || !k.is_well_formed() {
                        return Err(Error::Config {
                            path: format!("energy.kernels[{i}]"),
                            message: "kernels need arity >= 2, finite parameters and an even pair potential".into(),
                        });
                    }
                }
            }
            EnergyFamily::Internal { psi, observable } => {
                if !psi.is_well_formed() || !observable.is_well_formed() {
                    return Err(invalid("internal energy parameters must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Precomputes everything about `μ` that the pointwise derivatives need.
    pub fn at<'a>(&'a self, mu: &'a dyn Measure) -> EnergyField<'a> {
        let prepared = match &self.family {
            EnergyFamily::TwoBody { interaction, .. } => {
                Prepared::TwoBody(interaction.convolve(mu))
            }
            EnergyFamily::Polynomial { .. } => Prepared::Polynomial,
            EnergyFamily::Internal { psi, observable } => {
                let t = crate::measures::integrate_dyn(mu, |x| observable.value(x));
                Prepared::Internal {
                    t,
                    psi1: psi.derivative(1, t),
                    psi2: psi.derivative(2, t),
                }
            }
        };
        EnergyField {
            spec: self,
            mu,
            prepared,
        }
    }
}

fn invalid(msg: &str) -> Error {
    Error::InvalidInput(msg.to_string())
}

#[derive(Debug)]
enum Prepared<'a> {
    TwoBody(Convolution<'a>),
    Polynomial,
    Internal { t: f64, psi1: f64, psi2: f64 },
}

/// An energy frozen at a measure `μ`: `x ↦ δH/δm(μ, x)` and its derivatives.
#[derive(Debug)]
pub struct EnergyField<'a> {
    spec: &'a EnergySpec,
    mu: &'a dyn Measure,
    prepared: Prepared<'a>,
}

impl EnergyField<'_> {
    /// `δH/δm(μ, x)`.
    pub fn flat_derivative(&self, x: &[f64]) -> f64 {
        match (&self.spec.family, &self.prepared) {
            (EnergyFamily::TwoBody { confinement, .. }, Prepared::TwoBody(conv)) => {
                confinement.value(x) + conv.value(x)
            }
            (
                EnergyFamily::Polynomial {
                    confinement,
                    kernels,
                },
                _,
            ) => {
                let mut acc = confinement.value(x);
                for kernel in kernels {
                    let k = kernel.arity();
                    acc +=
                        k as f64 * tuple_sum(self.mu, k - 1, x, None, |xs, w| w * kernel.value(xs));
                }
                acc
            }
            (EnergyFamily::Internal { observable, .. }, Prepared::Internal { psi1, .. }) => {
                psi1 * observable.value(x)
            }
            _ => unreachable!("prepared state matches family"),
        }
    }

    /// `out += scale · D_mH(μ, x)`.
    pub fn add_intrinsic(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match (&self.spec.family, &self.prepared) {
            (EnergyFamily::TwoBody { confinement, .. }, Prepared::TwoBody(conv)) => {
                confinement.add_gradient(x, scale, out);
                conv.add_gradient(x, scale, out);
            }
            (
                EnergyFamily::Polynomial {
                    confinement,
                    kernels,
                },
                _,
            ) => {
                confinement.add_gradient(x, scale, out);
                for kernel in kernels {
                    let k = kernel.arity();
                    let mut g = vec![0.0; x.len()];
                    tuple_sum(self.mu, k - 1, x, None, |xs, w| {
                        kernel.add_grad_first(xs, w, &mut g);
                        0.0
                    });
                    for (o, v) in out.iter_mut().zip(&g) {
                        *o += scale * k as f64 * v;
                    }
                }
            }
            (EnergyFamily::Internal { observable, .. }, Prepared::Internal { psi1, .. }) => {
                observable.add_gradient(x, scale * psi1, out);
            }
            _ => unreachable!("prepared state matches family"),
        }
    }

    /// `D_mH(μ, x)`.
    pub fn intrinsic(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_intrinsic(x, 1.0, &mut g);
        g
    }

    /// `∇_x D_mH(μ, x)`.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        match (&self.spec.family, &self.prepared) {
            (EnergyFamily::TwoBody { confinement, .. }, Prepared::TwoBody(conv)) => {
                confinement.add_hessian(x, 1.0, &mut h);
                conv.add_hessian(x, 1.0, &mut h);
            }
            (
                EnergyFamily::Polynomial {
                    confinement,
                    kernels,
                },
                _,
            ) => {
                confinement.add_hessian(x, 1.0, &mut h);
                for kernel in kernels {
                    let k = kernel.arity() as f64;
                    tuple_sum(self.mu, kernel.arity() - 1, x, None, |xs, w| {
                        kernel.add_hess_first(xs, k * w, &mut h);
                        0.0
                    });
                }
            }
            (EnergyFamily::Internal { observable, .. }, Prepared::Internal { psi1, .. }) => {
                observable.add_hessian(x, *psi1, &mut h);
            }
            _ => unreachable!("prepared state matches family"),
        }
        h
    }

    /// `D²_mH(μ, x, y)`.
    pub fn second_intrinsic(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        match (&self.spec.family, &self.prepared) {
            (EnergyFamily::TwoBody { interaction, .. }, _) => {
                let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                interaction.add_hessian(&diff, -1.0, &mut h);
            }
            (EnergyFamily::Polynomial { kernels, .. }, _) => {
                for kernel in kernels {
                    let k = kernel.arity();
                    let c = (k * (k - 1)) as f64;
                    tuple_sum(self.mu, k - 2, x, Some(y), |xs, w| {
                        kernel.add_hess_mixed(xs, c * w, &mut h);
                        0.0
                    });
                }
            }
            (EnergyFamily::Internal { observable, .. }, Prepared::Internal { psi2, .. }) => {
                let gx = observable.gradient(x);
                let gy = observable.gradient(y);
                for i in 0..d {
                    for j in 0..d {
                        h[(i, j)] = psi2 * gx[i] * gy[j];
                    }
                }
            }
            _ => unreachable!("prepared state matches family"),
        }
        h
    }

    /// `⟨μ, W⟩` for internal energies.
    pub fn observable_mean(&self) -> Option<f64> {
        match self.prepared {
            Prepared::Internal { t, .. } => Some(t),
            _ => None,
        }
    }
}

/// `Σ over len-tuples (y₁..y_len) of w(y) · f([x, y?, y₁, …])`, weights being
/// products of atom weights. The fixed leading points are `x` and optionally `y`.
fn tuple_sum(
    mu: &dyn Measure,
    len: usize,
    x: &[f64],
    y: Option<&[f64]>,
    mut f: impl FnMut(&[&[f64]], f64) -> f64,
) -> f64 {
    let n = mu.atom_count();
    let mut pts: Vec<&[f64]> = Vec::with_capacity(len + 2);
    pts.push(x);
    if let Some(y) = y {
        pts.push(y);
    }
    let fixed = pts.len();
    if len == 0 {
        return f(&pts, 1.0);
    }
    if (n as f64).powi(len as i32) <= EXACT_TUPLE_LIMIT {
        let mut idx = vec![0usize; len];
        let mut acc = 0.0;
        loop {
            pts.truncate(fixed);
            let mut w = 1.0;
            for &i in &idx {
                pts.push(mu.point(i));
                w *= mu.weight(i);
            }
            if w != 0.0 {
                acc += f(&pts, w);
            }
            let mut slot = len;
            loop {
                if slot == 0 {
                    return acc;
                }
                slot -= 1;
                idx[slot] += 1;
                if idx[slot] < n {
                    break;
                }
                idx[slot] = 0;
            }
        }
    }
    let cumulative: Vec<f64> = (0..n)
        .scan(0.0, |s, i| {
            *s += mu.weight(i);
            Some(*s)
        })
        .collect();
    let mass = cumulative[n - 1];
    let w = mass.powi(len as i32) / MC_SAMPLES as f64;
    let mut rng = RngStream::new(MC_SEED, len as u64);
    let mut acc = 0.0;
    for _ in 0..MC_SAMPLES {
        pts.truncate(fixed);
        for _ in 0..len {
            let u = rng.uniform() * mass;
            let i = cumulative.partition_point(|c| *c <= u).min(n - 1);
            pts.push(mu.point(i));
        }
        acc += f(&pts, w);
    }
    acc
}

/// `δH/δm(μ, x)`.
pub fn flat_derivative(spec: &EnergySpec, mu: &dyn Measure, x: &[f64]) -> f64 {
    spec.at(mu).flat_derivative(x)
}

/// `D_mH(μ, x)`.
pub fn intrinsic_derivative(spec: &EnergySpec, mu: &dyn Measure, x: &[f64]) -> Vec<f64> {
    spec.at(mu).intrinsic(x)
}

/// `D²_mH(μ, x, y)`.
pub fn second_intrinsic_apply(
    spec: &EnergySpec,
    mu: &dyn Measure,
    x: &[f64],
    y: &[f64],
) -> DMatrix<f64> {
    spec.at(mu).second_intrinsic(x, y)
}

/// `H(μ)`.
pub fn energy_value(spec: &EnergySpec, mu: &dyn Measure) -> f64 {
    let n = mu.atom_count();
    let confinement_part = |v: &Potential| {
        (0..n)
            .map(|i| mu.weight(i) * v.value(mu.point(i)))
            .sum::<f64>()
    };
    match &spec.family {
        EnergyFamily::TwoBody {
            confinement,
            interaction,
        } => {
            let conv = interaction.convolve(mu);
            let pair: f64 = (0..n).map(|i| mu.weight(i) * conv.value(mu.point(i))).sum();
            confinement_part(confinement) + 0.5 * pair
        }
        EnergyFamily::Polynomial {
            confinement,
            kernels,
        } => {
            let mut acc = confinement_part(confinement);
            for kernel in kernels {
                let k = kernel.arity();
                for i in 0..n {
                    let wi = mu.weight(i);
                    acc +=
                        wi * tuple_sum(mu, k - 1, mu.point(i), None, |xs, w| w * kernel.value(xs));
                }
            }
            acc
        }
        EnergyFamily::Internal { psi, observable } => psi.value(
            (0..n)
                .map(|i| mu.weight(i) * observable.value(mu.point(i)))
                .sum(),
        ),
    }
}

/// Operator norm (largest singular value) of a square matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.singular_values().max()
}
