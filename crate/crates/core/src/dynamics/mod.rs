//! Euler–Maruyama integration of the over- and under-damped particle
//! systems with `σ = √2`, and their synchronous couplings.
//!
//! Each step evaluates every drift at the pre-step state, so rows can be
//! updated in parallel without changing a single bit of the result.

mod coupling;
mod trace;

pub use coupling::{
    linear_quadratic_params, simulate_coupled_kinetic, simulate_coupled_overdamped,
    simulate_poc_kinetic, simulate_poc_overdamped, KineticLaw, LinearQuadratic, NonlinearLaw,
    QuadraticForm,
};
pub use trace::{
    aggregate_traces, fit_log_linear, moment_bound, second_moment_bound_check, AggregatedTrace,
    CouplingTrace, LogLinearFit, MomentBoundReport,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergySpec, KineticFields};
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, Measure};

/// Coordinates beyond this magnitude abort a run.
pub const DIVERGENCE_LIMIT: f64 = 1e8;
const MIN_PAR_ROWS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct OverdampedState {
    pub t: f64,
    pub cloud: EmpiricalMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub t: f64,
    pub positions: EmpiricalMeasure,
    pub velocities: EmpiricalMeasure,
}

impl KineticState {
    pub fn new(t: f64, positions: EmpiricalMeasure, velocities: EmpiricalMeasure) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::SizeMismatch(positions.len(), velocities.len()));
        }
        if positions.dim() != velocities.dim() {
            return Err(Error::DimensionMismatch {
                expected: positions.dim(),
                got: velocities.dim(),
            });
        }
        Ok(Self {
            t,
            positions,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }
}

/// Time grid of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    pub horizon: f64,
    /// Spacing of recorded times; rounded to a whole number of steps.
    pub record_every: f64,
}

impl SimParams {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            record_every: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.record_every > 0.0) {
            return Err(Error::InvalidInput("record_every must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    pub fn stride(&self) -> usize {
        (self.record_every / self.dt).round().max(1.0) as usize
    }

    pub(crate) fn records_at(&self, step: usize) -> bool {
        step % self.stride() == 0 || step == self.steps()
    }
}

/// `out[i] = D_mH(law, x_i)` for every row `x_i`.
pub(crate) fn drift_into(
    spec: &EnergySpec,
    law: &dyn Measure,
    x: &[f64],
    dim: usize,
    out: &mut [f64],
) {
    let field = spec.at(law);
    out.par_chunks_mut(dim)
        .zip(x.par_chunks(dim))
        .with_min_len(MIN_PAR_ROWS)
        .for_each(|(o, xi)| {
            o.fill(0.0);
            field.add_intrinsic(xi, 1.0, o);
        });
}

pub(crate) fn guard(x: &[f64], dim: usize, step: usize) -> Result<()> {
    match x.iter().position(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
        None => Ok(()),
        Some(k) => Err(Error::Diverged {
            step,
            particle: k / dim,
            value: x[k],
        }),
    }
}

/// `x ← x − dt · drift + √(2 dt) · ξ`.
pub(crate) fn overdamped_update(x: &mut [f64], drift: &[f64], noise: &[f64], dt: f64) {
    let s = (2.0 * dt).sqrt();
    x.par_iter_mut()
        .zip(drift.par_iter().zip(noise.par_iter()))
        .with_min_len(MIN_PAR_ROWS)
        .for_each(|(xi, (d, z))| *xi += -dt * d + s * z);
}

/// `(p, v) ← (p + v dt, v − dt [A(v) + λ_B p + D(p) + drift] + √(2 dt) ξ)`.
pub(crate) fn kinetic_update(
    p: &mut [f64],
    v: &mut [f64],
    drift: &[f64],
    noise: &[f64],
    fields: &KineticFields,
    dim: usize,
    dt: f64,
) {
    let s = (2.0 * dt).sqrt();
    p.par_chunks_mut(dim)
        .zip(v.par_chunks_mut(dim))
        .zip(drift.par_chunks(dim).zip(noise.par_chunks(dim)))
        .with_min_len(MIN_PAR_ROWS)
        .for_each(|((pi, vi), (di, zi))| {
            let mut force = di.to_vec();
            fields.add_friction(vi, 1.0, &mut force);
            fields.add_confinement(pi, 1.0, &mut force);
            for k in 0..dim {
                let v_old = vi[k];
                pi[k] += v_old * dt;
                vi[k] = v_old - dt * force[k] + s * zi[k];
            }
        });
}

fn step_index(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// One Euler–Maruyama step; `noise` holds `n × d` standard normals.
pub fn step_overdamped(
    state: &OverdampedState,
    spec: &EnergySpec,
    dt: f64,
    noise: &[f64],
) -> Result<OverdampedState> {
    let cloud = &state.cloud;
    let dim = cloud.dim();
    if noise.len() != cloud.as_slice().len() {
        return Err(Error::SizeMismatch(cloud.len(), noise.len() / dim.max(1)));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut drift = vec![0.0; noise.len()];
    drift_into(spec, cloud, cloud.as_slice(), dim, &mut drift);
    let mut next = cloud.clone();
    overdamped_update(next.as_mut_slice(), &drift, noise, dt);
    guard(next.as_slice(), dim, step_index(state.t, dt) + 1)?;
    Ok(OverdampedState {
        t: state.t + dt,
        cloud: next,
    })
}

/// One Euler–Maruyama step of the kinetic system; `noise` drives velocities.
pub fn step_kinetic(
    state: &KineticState,
    fields: &KineticFields,
    spec: &EnergySpec,
    dt: f64,
    noise: &[f64],
) -> Result<KineticState> {
    let dim = state.dim();
    if noise.len() != state.positions.as_slice().len() {
        return Err(Error::SizeMismatch(state.len(), noise.len() / dim.max(1)));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut drift = vec![0.0; noise.len()];
    drift_into(
        spec,
        &state.positions,
        state.positions.as_slice(),
        dim,
        &mut drift,
    );
    let mut p = state.positions.clone();
    let mut v = state.velocities.clone();
    kinetic_update(
        p.as_mut_slice(),
        v.as_mut_slice(),
        &drift,
        noise,
        fields,
        dim,
        dt,
    );
    let step = step_index(state.t, dt) + 1;
    guard(p.as_slice(), dim, step)?;
    guard(v.as_slice(), dim, step)?;
    Ok(KineticState {
        t: state.t + dt,
        positions: p,
        velocities: v,
    })
}
