//! Built-in scalar fields on `R^d` and their convolutions with atomic measures.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::measures::Measure;

fn one() -> f64 {
    1.0
}

/// Smooth scalar field with closed-form gradient and Hessian.
///
/// Coordinate-wise families (`quartic`, `cosine`) act on each axis and sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Zero,
    /// `a‖x‖² + b Σ x_j + c`.
    Quadratic {
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
    },
    /// `Σ_j (a x_j⁴ + b x_j³ + c x_j² + d x_j) + e`.
    Quartic {
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
        #[serde(default)]
        d: f64,
        #[serde(default)]
        e: f64,
    },
    /// `ε Σ_j cos(ω x_j)`.
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
    /// `-depth · exp(-‖x‖² / (2 width²))`.
    GaussianWell {
        depth: f64,
        width: f64,
    },
    Sum {
        terms: Vec<Potential>,
    },
}

impl Potential {
    pub fn quadratic(a: f64) -> Self {
        Potential::Quadratic { a, b: 0.0, c: 0.0 }
    }

    pub fn cosine(amplitude: f64) -> Self {
        Potential::Cosine {
            amplitude,
            frequency: 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Sum { terms } => terms.iter().all(Potential::is_zero),
            _ => false,
        }
    }

    /// The same field with its additive constant removed.
    pub fn without_constant(&self) -> Potential {
        match self {
            Potential::Quadratic { a, b, .. } => Potential::Quadratic {
                a: *a,
                b: *b,
                c: 0.0,
            },
            Potential::Quartic { a, b, c, d, .. } => Potential::Quartic {
                a: *a,
                b: *b,
                c: *c,
                d: *d,
                e: 0.0,
            },
            Potential::Sum { terms } => Potential::Sum {
                terms: terms.iter().map(Potential::without_constant).collect(),
            },
            other => other.clone(),
        }
    }

    /// Structural evenness `φ(-x) = φ(x)`.
    pub fn is_even(&self) -> bool {
        match self {
            Potential::Zero | Potential::Cosine { .. } | Potential::GaussianWell { .. } => true,
            Potential::Quadratic { b, .. } => *b == 0.0,
            Potential::Quartic { b, d, .. } => *b == 0.0 && *d == 0.0,
            Potential::Sum { terms } => terms.iter().all(Potential::is_even),
        }
    }

    /// Whether parameters are finite and the width (if any) positive.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Quadratic { a, b, c } => [a, b, c].iter().all(|v| v.is_finite()),
            Potential::Quartic { a, b, c, d, e } => [a, b, c, d, e].iter().all(|v| v.is_finite()),
            Potential::Cosine {
                amplitude,
                frequency,
            } => amplitude.is_finite() && frequency.is_finite(),
            Potential::GaussianWell { depth, width } => depth.is_finite() && *width > 0.0,
            Potential::Sum { terms } => terms.iter().all(Potential::is_well_formed),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { a, b, c } => a * norm_sq(x) + b * x.iter().sum::<f64>() + c,
            Potential::Quartic { a, b, c, d, e } => {
                x.iter()
                    .map(|&t| ((a * t + b) * t + c) * t * t + d * t)
                    .sum::<f64>()
                    + e
            }
            Potential::Cosine {
                amplitude,
                frequency,
            } => amplitude * x.iter().map(|t| (frequency * t).cos()).sum::<f64>(),
            Potential::GaussianWell { depth, width } => {
                -depth * (-norm_sq(x) / (2.0 * width * width)).exp()
            }
            Potential::Sum { terms } => terms.iter().map(|p| p.value(x)).sum(),
        }
    }

    /// `out += scale · ∇φ(x)`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Potential::Zero => {}
            Potential::Quadratic { a, b, .. } => {
                for (o, t) in out.iter_mut().zip(x) {
                    *o += scale * (2.0 * a * t + b);
                }
            }
            Potential::Quartic { a, b, c, d, .. } => {
                for (o, &t) in out.iter_mut().zip(x) {
                    *o += scale * (((4.0 * a * t + 3.0 * b) * t + 2.0 * c) * t + d);
                }
            }
            Potential::Cosine {
                amplitude,
                frequency,
            } => {
                for (o, t) in out.iter_mut().zip(x) {
                    *o -= scale * amplitude * frequency * (frequency * t).sin();
                }
            }
            Potential::GaussianWell { depth, width } => {
                let w2 = width * width;
                let g = depth * (-norm_sq(x) / (2.0 * w2)).exp() / w2;
                for (o, t) in out.iter_mut().zip(x) {
                    *o += scale * g * t;
                }
            }
            Potential::Sum { terms } => terms.iter().for_each(|p| p.add_gradient(x, scale, out)),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    /// `out += scale · ∇²φ(x)`.
    pub fn add_hessian(&self, x: &[f64], scale: f64, out: &mut DMatrix<f64>) {
        match self {
            Potential::Zero => {}
            Potential::Quadratic { a, .. } => {
                for j in 0..x.len() {
                    out[(j, j)] += scale * 2.0 * a;
                }
            }
            Potential::Quartic { a, b, c, .. } => {
                for (j, &t) in x.iter().enumerate() {
                    out[(j, j)] += scale * ((12.0 * a * t + 6.0 * b) * t + 2.0 * c);
                }
            }
            Potential::Cosine {
                amplitude,
                frequency,
            } => {
                for (j, t) in x.iter().enumerate() {
                    out[(j, j)] -=
                        scale * amplitude * frequency * frequency * (frequency * t).cos();
                }
            }
            Potential::GaussianWell { depth, width } => {
                let w2 = width * width;
                let g = depth * (-norm_sq(x) / (2.0 * w2)).exp();
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        let delta = if i == j { 1.0 / w2 } else { 0.0 };
                        out[(i, j)] += scale * g * (delta - x[i] * x[j] / (w2 * w2));
                    }
                }
            }
            Potential::Sum { terms } => terms.iter().for_each(|p| p.add_hessian(x, scale, out)),
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        self.add_hessian(x, 1.0, &mut h);
        h
    }

    /// Precomputes `x ↦ ∫ φ(x - y) μ(dy)`.
    ///
    /// Quadratic, quartic and cosine terms reduce to a handful of moments of
    /// `μ`, so evaluation costs `O(d)` per point; Gaussian wells fall back to
    /// a direct sum over atoms.
    pub fn convolve<'a>(&'a self, mu: &'a dyn Measure) -> Convolution<'a> {
        let mut terms = Vec::new();
        self.collect_terms(mu, &mut terms);
        Convolution { terms }
    }

    fn collect_terms<'a>(&'a self, mu: &'a dyn Measure, out: &mut Vec<ConvTerm<'a>>) {
        let dim = mu.dim();
        match self {
            Potential::Zero => {}
            Potential::Quadratic { a, b, c } => {
                let mut m0 = 0.0;
                let mut m1 = vec![0.0; dim];
                let mut m2 = 0.0;
                for i in 0..mu.atom_count() {
                    let w = mu.weight(i);
                    let y = mu.point(i);
                    m0 += w;
                    for (acc, v) in m1.iter_mut().zip(y) {
                        *acc += w * v;
                    }
                    m2 += w * norm_sq(y);
                }
                out.push(ConvTerm::Quadratic {
                    a: *a,
                    b: *b,
                    c: *c,
                    m0,
                    m1,
                    m2,
                });
            }
            Potential::Quartic { a, b, c, d, e } => {
                let mut moments = vec![[0.0; 5]; dim];
                let mut m0 = 0.0;
                for i in 0..mu.atom_count() {
                    let w = mu.weight(i);
                    m0 += w;
                    for (mom, &y) in moments.iter_mut().zip(mu.point(i)) {
                        let mut p = w;
                        for slot in mom.iter_mut() {
                            *slot += p;
                            p *= y;
                        }
                    }
                }
                out.push(ConvTerm::Quartic {
                    coef: [0.0, *d, *c, *b, *a],
                    e: *e,
                    m0,
                    moments,
                });
            }
            Potential::Cosine {
                amplitude,
                frequency,
            } => {
                let mut cs = vec![0.0; dim];
                let mut sn = vec![0.0; dim];
                for i in 0..mu.atom_count() {
                    let w = mu.weight(i);
                    for ((c, s), y) in cs.iter_mut().zip(sn.iter_mut()).zip(mu.point(i)) {
                        let (sy, cy) = (frequency * y).sin_cos();
                        *c += w * cy;
                        *s += w * sy;
                    }
                }
                out.push(ConvTerm::Cosine {
                    amplitude: *amplitude,
                    frequency: *frequency,
                    cos_mean: cs,
                    sin_mean: sn,
                });
            }
            Potential::GaussianWell { .. } => out.push(ConvTerm::Direct { phi: self, mu }),
            Potential::Sum { terms } => terms.iter().for_each(|p| p.collect_terms(mu, out)),
        }
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

const BINOM: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

#[derive(Debug)]
enum ConvTerm<'a> {
    Quadratic {
        a: f64,
        b: f64,
        c: f64,
        m0: f64,
        m1: Vec<f64>,
        m2: f64,
    },
    Quartic {
        /// Coefficient of `t^p` at index `p`.
        coef: [f64; 5],
        e: f64,
        m0: f64,
        /// Per axis, weighted raw moments of orders 0..=4.
        moments: Vec<[f64; 5]>,
    },
    Cosine {
        amplitude: f64,
        frequency: f64,
        cos_mean: Vec<f64>,
        sin_mean: Vec<f64>,
    },
    Direct {
        phi: &'a Potential,
        mu: &'a dyn Measure,
    },
}

/// `∫ (x - y)^p μ(dy)` differentiated `order` times in `x`, one axis.
fn shifted_power(p: usize, order: usize, x: f64, mom: &[f64; 5]) -> f64 {
    let mut acc = 0.0;
    for r in 0..=p {
        let e = p - r;
        if e < order {
            continue;
        }
        let falling: f64 = (0..order).map(|k| (e - k) as f64).product();
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        acc += BINOM[p][r] * falling * x.powi((e - order) as i32) * sign * mom[r];
    }
    acc
}

/// A potential convolved with a fixed measure.
#[derive(Debug)]
pub struct Convolution<'a> {
    terms: Vec<ConvTerm<'a>>,
}

impl Convolution<'_> {
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for term in &self.terms {
            acc += match term {
                ConvTerm::Quadratic {
                    a,
                    b,
                    c,
                    m0,
                    m1,
                    m2,
                } => {
                    let dot: f64 = x.iter().zip(m1).map(|(u, v)| u * v).sum();
                    a * (m0 * norm_sq(x) - 2.0 * dot + m2)
                        + b * (m0 * x.iter().sum::<f64>() - m1.iter().sum::<f64>())
                        + c * m0
                }
                ConvTerm::Quartic {
                    coef,
                    e,
                    m0,
                    moments,
                } => {
                    let mut v = e * m0;
                    for (&t, mom) in x.iter().zip(moments) {
                        for (p, cp) in coef.iter().enumerate().skip(1) {
                            if *cp != 0.0 {
                                v += cp * shifted_power(p, 0, t, mom);
                            }
                        }
                    }
                    v
                }
                ConvTerm::Cosine {
                    amplitude,
                    frequency,
                    cos_mean,
                    sin_mean,
                } => {
                    let mut v = 0.0;
                    for ((t, c), s) in x.iter().zip(cos_mean).zip(sin_mean) {
                        let (st, ct) = (frequency * t).sin_cos();
                        v += ct * c + st * s;
                    }
                    amplitude * v
                }
                ConvTerm::Direct { phi, mu } => {
                    let mut diff = vec![0.0; x.len()];
                    let mut v = 0.0;
                    for i in 0..mu.atom_count() {
                        sub_into(x, mu.point(i), &mut diff);
                        v += mu.weight(i) * phi.value(&diff);
                    }
                    v
                }
            };
        }
        acc
    }

    /// `out += scale · ∇_x ∫ φ(x - y) μ(dy)`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for term in &self.terms {
            match term {
                ConvTerm::Quadratic { a, b, m0, m1, .. } => {
                    for ((o, t), m) in out.iter_mut().zip(x).zip(m1) {
                        *o += scale * (2.0 * a * (m0 * t - m) + b * m0);
                    }
                }
                ConvTerm::Quartic { coef, moments, .. } => {
                    for ((o, &t), mom) in out.iter_mut().zip(x).zip(moments) {
                        let mut g = 0.0;
                        for (p, cp) in coef.iter().enumerate().skip(1) {
                            if *cp != 0.0 {
                                g += cp * shifted_power(p, 1, t, mom);
                            }
                        }
                        *o += scale * g;
                    }
                }
                ConvTerm::Cosine {
                    amplitude,
                    frequency,
                    cos_mean,
                    sin_mean,
                } => {
                    let k = scale * amplitude * frequency;
                    for (((o, t), c), s) in out.iter_mut().zip(x).zip(cos_mean).zip(sin_mean) {
                        let (st, ct) = (frequency * t).sin_cos();
                        *o += k * (ct * s - st * c);
                    }
                }
                ConvTerm::Direct { phi, mu } => {
                    let mut diff = vec![0.0; x.len()];
                    for i in 0..mu.atom_count() {
                        sub_into(x, mu.point(i), &mut diff);
                        phi.add_gradient(&diff, scale * mu.weight(i), out);
                    }
                }
            }
        }
    }

    /// `out += scale · ∇²_x ∫ φ(x - y) μ(dy)`.
    pub fn add_hessian(&self, x: &[f64], scale: f64, out: &mut DMatrix<f64>) {
        for term in &self.terms {
            match term {
                ConvTerm::Quadratic { a, m0, .. } => {
                    for j in 0..x.len() {
                        out[(j, j)] += scale * 2.0 * a * m0;
                    }
                }
                ConvTerm::Quartic { coef, moments, .. } => {
                    for (j, (&t, mom)) in x.iter().zip(moments).enumerate() {
                        let mut h = 0.0;
                        for (p, cp) in coef.iter().enumerate().skip(2) {
                            if *cp != 0.0 {
                                h += cp * shifted_power(p, 2, t, mom);
                            }
                        }
                        out[(j, j)] += scale * h;
                    }
                }
                ConvTerm::Cosine {
                    amplitude,
                    frequency,
                    cos_mean,
                    sin_mean,
                } => {
                    let k = scale * amplitude * frequency * frequency;
                    for (j, ((t, c), s)) in x.iter().zip(cos_mean).zip(sin_mean).enumerate() {
                        let (st, ct) = (frequency * t).sin_cos();
                        out[(j, j)] -= k * (ct * c + st * s);
                    }
                }
                ConvTerm::Direct { phi, mu } => {
                    let mut diff = vec![0.0; x.len()];
                    for i in 0..mu.atom_count() {
                        sub_into(x, mu.point(i), &mut diff);
                        phi.add_hessian(&diff, scale * mu.weight(i), out);
                    }
                }
            }
        }
    }
}

fn sub_into(x: &[f64], y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = a - b;
    }
}
