use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::RngStream;

/// Friction field `A` acting on velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Friction {
    /// `A(v) = γ v`.
    Linear { gamma: f64 },
    /// `A(v) = γ v + c · tanh(v)` coordinate-wise.
    LinearTanh { gamma: f64, c: f64 },
}

/// Bounded-Lipschitz part `D` of the confinement `B(p) = λ_B p + D(p)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    #[default]
    Zero,
    /// `D(p)_j = amplitude · sin(frequency · p_j)`.
    Sine { amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticFields {
    pub friction: Friction,
    pub lambda_b: f64,
    #[serde(default)]
    pub perturbation: Perturbation,
    /// Declared Lipschitz constant `[A]₁`.
    pub lip_a: f64,
    /// Declared monotonicity constant `λ_A`.
    pub mono_a: f64,
    /// Declared Lipschitz constant `[D]₁`.
    #[serde(default)]
    pub lip_d: f64,
}

impl KineticFields {
    /// `A(v) = v`, `B(p) = p`, with matching declared constants.
    pub fn unit() -> Self {
        KineticFields {
            friction: Friction::Linear { gamma: 1.0 },
            lambda_b: 1.0,
            perturbation: Perturbation::Zero,
            lip_a: 1.0,
            mono_a: 1.0,
            lip_d: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| {
            Err(Error::Config {
                path: format!("kinetic.{path}"),
                message: msg.into(),
            })
        };
        if !(self.lambda_b.is_finite() && self.lambda_b > 0.0) {
            return bad("lambda_b", "must be positive");
        }
        if !(self.lip_a.is_finite() && self.lip_a > 0.0) {
            return bad("lip_a", "must be positive");
        }
        if !(self.mono_a.is_finite() && self.mono_a > 0.0) {
            return bad("mono_a", "must be positive");
        }
        if !(self.lip_d.is_finite() && self.lip_d >= 0.0) {
            return bad("lip_d", "must be nonnegative");
        }
        Ok(())
    }

    /// `out += scale · A(v)`.
    pub fn add_friction(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        match self.friction {
            Friction::Linear { gamma } => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += scale * gamma * x;
                }
            }
            Friction::LinearTanh { gamma, c } => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += scale * (gamma * x + c * x.tanh());
                }
            }
        }
    }

    /// `out += scale · (λ_B p + D(p))`.
    pub fn add_confinement(&self, p: &[f64], scale: f64, out: &mut [f64]) {
        match self.perturbation {
            Perturbation::Zero => {
                for (o, x) in out.iter_mut().zip(p) {
                    *o += scale * self.lambda_b * x;
                }
            }
            Perturbation::Sine {
                amplitude,
                frequency,
            } => {
                for (o, x) in out.iter_mut().zip(p) {
                    *o += scale * (self.lambda_b * x + amplitude * (frequency * x).sin());
                }
            }
        }
    }

    fn friction_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.add_friction(v, 1.0, &mut out);
        out
    }

    fn perturbation_vec(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.add_confinement(p, 1.0, &mut out);
        for (o, x) in out.iter_mut().zip(p) {
            *o -= self.lambda_b * x;
        }
        out
    }
}

/// Worst sampled margins of the declared kinetic constants (negative means
/// the declaration is violated on the sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticCheck {
    pub mono_a_margin: f64,
    pub lip_a_margin: f64,
    pub lip_d_margin: f64,
    pub violations: Vec<String>,
}

/// Checks monotonicity and Lipschitz declarations on `pairs` random pairs
/// drawn uniformly from `[-radius, radius]^dim`.
pub fn check_kinetic_fields(
    fields: &KineticFields,
    dim: usize,
    pairs: usize,
    radius: f64,
    rng: &mut RngStream,
) -> KineticCheck {
    let mut mono = f64::INFINITY;
    let mut lip_a = f64::INFINITY;
    let mut lip_d = f64::INFINITY;
    let mut v = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    for _ in 0..pairs {
        for x in v.iter_mut().chain(w.iter_mut()) {
            *x = radius * (2.0 * rng.uniform() - 1.0);
        }
        let dist_sq: f64 = v.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist_sq == 0.0 {
            continue;
        }
        let dist = dist_sq.sqrt();
        let (av, aw) = (fields.friction_vec(&v), fields.friction_vec(&w));
        let inner: f64 = av
            .iter()
            .zip(&aw)
            .zip(v.iter().zip(&w))
            .map(|((a, b), (x, y))| (a - b) * (x - y))
            .sum();
        mono = mono.min(inner / dist_sq - fields.mono_a);
        lip_a = lip_a.min(fields.lip_a - norm_diff(&av, &aw) / dist);
        let (dv, dw) = (fields.perturbation_vec(&v), fields.perturbation_vec(&w));
        lip_d = lip_d.min(fields.lip_d - norm_diff(&dv, &dw) / dist);
    }
    let mut violations = Vec::new();
    for (name, m) in [("mono_a", mono), ("lip_a", lip_a), ("lip_d", lip_d)] {
        if m < -1e-12 {
            violations.push(format!("{name} violated by {:.3e}", -m));
        }
    }
    KineticCheck {
        mono_a_margin: mono,
        lip_a_margin: lip_a,
        lip_d_margin: lip_d,
        violations,
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_fields_pass_their_own_check() {
        let mut rng = RngStream::new(3, 0);
        let check = check_kinetic_fields(&KineticFields::unit(), 2, 500, 5.0, &mut rng);
        assert!(check.violations.is_empty(), "{check:?}");
        assert!(check.mono_a_margin.abs() < 1e-12);
    }

    #[test]
    fn overclaimed_monotonicity_flagged() {
        let mut fields = KineticFields::unit();
        fields.friction = Friction::LinearTanh { gamma: 1.0, c: 0.5 };
        fields.lip_a = 1.5;
        fields.mono_a = 1.2;
        let mut rng = RngStream::new(3, 1);
        let check = check_kinetic_fields(&fields, 1, 500, 5.0, &mut rng);
        assert!(check.violations.iter().any(|v| v.starts_with("mono_a")));
        assert!(check.lip_a_margin >= 0.0);
    }
}
