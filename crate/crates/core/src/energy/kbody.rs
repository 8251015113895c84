use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::potential::Potential;

/// Symmetric `k`-body kernel `W(x₁, …, x_k)`.
///
/// Derivatives are taken with respect to the first (and second) argument;
/// symmetry makes the choice of slot irrelevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KBodyKernel {
    /// `scale · Σ_{i<j} φ(x_i − x_j)` with `φ` even.
    PairSum {
        arity: usize,
        scale: f64,
        phi: Potential,
    },
    /// `a · ‖(x₁ + … + x_k)/k‖²`.
    CentroidQuadratic { arity: usize, a: f64 },
    /// `Π_i φ(x_i)`.
    Product { arity: usize, phi: Potential },
}

impl KBodyKernel {
    pub fn arity(&self) -> usize {
        match self {
            KBodyKernel::PairSum { arity, .. }
            | KBodyKernel::CentroidQuadratic { arity, .. }
            | KBodyKernel::Product { arity, .. } => *arity,
        }
    }

    pub(crate) fn is_well_formed(&self) -> bool {
        match self {
            KBodyKernel::PairSum { scale, phi, .. } => {
                scale.is_finite() && phi.is_well_formed() && phi.is_even()
            }
            KBodyKernel::CentroidQuadratic { a, .. } => a.is_finite(),
            KBodyKernel::Product { phi, .. } => phi.is_well_formed(),
        }
    }

    pub fn value(&self, xs: &[&[f64]]) -> f64 {
        match self {
            KBodyKernel::PairSum { scale, phi, .. } => {
                let mut diff = vec![0.0; xs[0].len()];
                let mut acc = 0.0;
                for i in 0..xs.len() {
                    for j in i + 1..xs.len() {
                        sub_into(xs[i], xs[j], &mut diff);
                        acc += phi.value(&diff);
                    }
                }
                scale * acc
            }
            KBodyKernel::CentroidQuadratic { a, .. } => {
                let c = centroid(xs);
                a * c.iter().map(|v| v * v).sum::<f64>()
            }
            KBodyKernel::Product { phi, .. } => xs.iter().map(|x| phi.value(x)).product(),
        }
    }

    /// `out += scale · ∇_{x₁} W(xs)`.
    pub fn add_grad_first(&self, xs: &[&[f64]], scale: f64, out: &mut [f64]) {
        match self {
            KBodyKernel::PairSum { scale: s, phi, .. } => {
                let mut diff = vec![0.0; xs[0].len()];
                for other in &xs[1..] {
                    sub_into(xs[0], other, &mut diff);
                    phi.add_gradient(&diff, scale * s, out);
                }
            }
            KBodyKernel::CentroidQuadratic { a, .. } => {
                let k = xs.len() as f64;
                for (o, c) in out.iter_mut().zip(centroid(xs)) {
                    *o += scale * 2.0 * a * c / k;
                }
            }
            KBodyKernel::Product { phi, .. } => {
                let rest: f64 = xs[1..].iter().map(|x| phi.value(x)).product();
                phi.add_gradient(xs[0], scale * rest, out);
            }
        }
    }

    /// `out += scale · ∇²_{x₁x₁} W(xs)`.
    pub fn add_hess_first(&self, xs: &[&[f64]], scale: f64, out: &mut DMatrix<f64>) {
        match self {
            KBodyKernel::PairSum { scale: s, phi, .. } => {
                let mut diff = vec![0.0; xs[0].len()];
                for other in &xs[1..] {
                    sub_into(xs[0], other, &mut diff);
                    phi.add_hessian(&diff, scale * s, out);
                }
            }
            KBodyKernel::CentroidQuadratic { a, .. } => {
                let k = xs.len() as f64;
                for j in 0..xs[0].len() {
                    out[(j, j)] += scale * 2.0 * a / (k * k);
                }
            }
            KBodyKernel::Product { phi, .. } => {
                let rest: f64 = xs[1..].iter().map(|x| phi.value(x)).product();
                phi.add_hessian(xs[0], scale * rest, out);
            }
        }
    }

    /// `out += scale · ∇²_{x₁x₂} W(xs)`.
    pub fn add_hess_mixed(&self, xs: &[&[f64]], scale: f64, out: &mut DMatrix<f64>) {
        match self {
            KBodyKernel::PairSum { scale: s, phi, .. } => {
                let mut diff = vec![0.0; xs[0].len()];
                sub_into(xs[0], xs[1], &mut diff);
                phi.add_hessian(&diff, -scale * s, out);
            }
            KBodyKernel::CentroidQuadratic { a, .. } => {
                let k = xs.len() as f64;
                for j in 0..xs[0].len() {
                    out[(j, j)] += scale * 2.0 * a / (k * k);
                }
            }
            KBodyKernel::Product { phi, .. } => {
                let rest: f64 = xs[2..].iter().map(|x| phi.value(x)).product();
                let g1 = phi.gradient(xs[0]);
                let g2 = phi.gradient(xs[1]);
                for i in 0..g1.len() {
                    for j in 0..g2.len() {
                        out[(i, j)] += scale * rest * g1[i] * g2[j];
                    }
                }
            }
        }
    }
}

fn centroid(xs: &[&[f64]]) -> Vec<f64> {
    let mut c = vec![0.0; xs[0].len()];
    for x in xs {
        for (acc, v) in c.iter_mut().zip(x.iter()) {
            *acc += v;
        }
    }
    let k = xs.len() as f64;
    c.iter_mut().for_each(|v| *v /= k);
    c
}

fn sub_into(x: &[f64], y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = a - b;
    }
}

/// Outer function `ψ` of an internal energy `ψ(⟨μ, W⟩)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Psi {
    /// `Σ_k coefficients[k] · t^k`.
    Polynomial { coefficients: Vec<f64> },
    /// `scale · exp(rate · t)`.
    Exponential { scale: f64, rate: f64 },
}

impl Psi {
    pub fn identity() -> Self {
        Psi::Polynomial {
            coefficients: vec![0.0, 1.0],
        }
    }

    pub(crate) fn is_well_formed(&self) -> bool {
        match self {
            Psi::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
            Psi::Exponential { scale, rate } => scale.is_finite() && rate.is_finite(),
        }
    }

    /// `ψ⁽ᵒʳᵈᵉʳ⁾(t)` for `order ∈ {0, 1, 2}`.
    pub fn derivative(&self, order: u32, t: f64) -> f64 {
        match self {
            Psi::Polynomial { coefficients } => {
                let mut acc = 0.0;
                for (k, c) in coefficients.iter().enumerate().rev() {
                    let k = k as u32;
                    if k < order {
                        break;
                    }
                    let falling: f64 = (0..order).map(|j| f64::from(k - j)).product();
                    acc += c * falling * t.powi((k - order) as i32);
                }
                acc
            }
            Psi::Exponential { scale, rate } => scale * rate.powi(order as i32) * (rate * t).exp(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }
}
