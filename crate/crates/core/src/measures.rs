//! Probability measures used throughout the crate.
//!
//! Everything that can be integrated against implements [`Measure`]: a finite
//! list of weighted atoms. Empirical clouds carry uniform weights `1/n`;
//! 1D grid measures expose their nodes with trapezoid weights, so the same
//! energy code evaluates on both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite weighted point set in `R^d`.
pub trait Measure: Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn atom_count(&self) -> usize;
    fn weight(&self, i: usize) -> f64;
    fn point(&self, i: usize) -> &[f64];

    /// `∫ f dμ`.
    fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64
    where
        Self: Sized,
    {
        (0..self.atom_count())
            .map(|i| self.weight(i) * f(self.point(i)))
            .sum()
    }
}

/// Sum of `w_i f(x_i)` over a trait object.
pub fn integrate_dyn(mu: &dyn Measure, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..mu.atom_count() {
        acc += mu.weight(i) * f(mu.point(i));
    }
    acc
}

/// `n` uniformly weighted points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    data: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not form a nonempty cloud in dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coordinate {pos} is not finite ({})",
                data[pos]
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput("ragged point list".into()));
        }
        Self::new(dim, points.concat())
    }

    /// One-dimensional cloud from scalars.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += x;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Dilation `x -> s x` of every point.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Translation `x -> x + c`.
    pub fn shifted(&self, c: &[f64]) -> Self {
        let data = self
            .points()
            .flat_map(|p| p.iter().zip(c).map(|(x, s)| x + s))
            .collect();
        Self {
            dim: self.dim,
            data,
        }
    }
}

impl Measure for EmpiricalMeasure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn atom_count(&self) -> usize {
        self.len()
    }

    fn weight(&self, _i: usize) -> f64 {
        1.0 / self.len() as f64
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// `(1/n) Σ ‖x_i‖²`.
pub fn second_moment(mu: &EmpiricalMeasure) -> f64 {
    let total: f64 = mu.as_slice().iter().map(|v| v * v).sum();
    total / mu.len() as f64
}

/// Convex combination `(1 - t) μ₀ + t μ₁` of two atomic measures.
///
/// Used to evaluate energies along the flat interpolation between two clouds.
#[derive(Debug, Clone, Copy)]
pub struct Mixture<'a> {
    first: &'a dyn Measure,
    second: &'a dyn Measure,
    t: f64,
}

impl<'a> Mixture<'a> {
    pub fn new(first: &'a dyn Measure, second: &'a dyn Measure, t: f64) -> Result<Self> {
        if first.dim() != second.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                got: second.dim(),
            });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "mixture weight {t} not in [0, 1]"
            )));
        }
        Ok(Self { first, second, t })
    }
}

impl Measure for Mixture<'_> {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn atom_count(&self) -> usize {
        self.first.atom_count() + self.second.atom_count()
    }

    fn weight(&self, i: usize) -> f64 {
        let n0 = self.first.atom_count();
        if i < n0 {
            (1.0 - self.t) * self.first.weight(i)
        } else {
            self.t * self.second.weight(i - n0)
        }
    }

    fn point(&self, i: usize) -> &[f64] {
        let n0 = self.first.atom_count();
        if i < n0 {
            self.first.point(i)
        } else {
            self.second.point(i - n0)
        }
    }
}

/// Density values on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure1D {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    density: Vec<f64>,
}

impl GridMeasure1D {
    pub fn new(lo: f64, hi: f64, density: Vec<f64>) -> Result<Self> {
        let m = density.len();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!(
                "grid bounds [{lo}, {hi}] are not an interval"
            )));
        }
        if m < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3 nodes, got {m}"
            )));
        }
        if let Some((node, &value)) = density
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::BadDensity { node, value });
        }
        let h = (hi - lo) / (m - 1) as f64;
        let nodes = (0..m).map(|i| lo + h * i as f64).collect();
        Ok(Self {
            lo,
            hi,
            nodes,
            density,
        })
    }

    /// Tabulates `f` at the nodes (unnormalized).
    pub fn from_fn(lo: f64, hi: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3 nodes, got {m}"
            )));
        }
        let h = (hi - lo) / (m - 1) as f64;
        Self::new(lo, hi, (0..m).map(|i| f(lo + h * i as f64)).collect())
    }

    /// Normalized Gaussian density `N(mean, sd²)` on the grid.
    pub fn gaussian(lo: f64, hi: f64, m: usize, mean: f64, sd: f64) -> Result<Self> {
        let g = Self::from_fn(lo, hi, m, |x| (-0.5 * ((x - mean) / sd).powi(2)).exp())?;
        grid_normalize(&g)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.len() - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.len() == other.len()
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        let h = self.step();
        if i == 0 || i + 1 == self.len() {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid-rule integral of the density.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.density, self.step())
    }

    /// Trapezoid-rule integral of `f(x) ρ(x)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.density)
            .map(|(&x, &r)| f(x) * r)
            .collect();
        trapezoid(&vals, self.step())
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x) / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m)) / self.mass()
    }

    /// Cumulative trapezoid integral, `F(lo) = 0`.
    pub fn cdf(&self) -> Vec<f64> {
        let h = self.step();
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.density.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Inverse-CDF subsample: the `(i + 1/2)/n` quantiles, `i = 0..n`.
    ///
    /// The CDF is piecewise linear between nodes, which matches the
    /// trapezoid mass to within `O(h²)`.
    pub fn quantile_points(&self, n: usize) -> Result<EmpiricalMeasure> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "cannot subsample to zero points".into(),
            ));
        }
        let cdf = self.cdf();
        let total = *cdf.last().unwrap();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let mut out = Vec::with_capacity(n);
        let mut j = 0;
        for i in 0..n {
            let target = total * (i as f64 + 0.5) / n as f64;
            while j + 2 < cdf.len() && cdf[j + 1] < target {
                j += 1;
            }
            let (c0, c1) = (cdf[j], cdf[j + 1]);
            let frac = if c1 > c0 {
                ((target - c0) / (c1 - c0)).clamp(0.0, 1.0)
            } else {
                0.5
            };
            out.push(self.nodes[j] + frac * self.step());
        }
        EmpiricalMeasure::from_scalars(&out)
    }
}

impl Measure for GridMeasure1D {
    fn dim(&self) -> usize {
        1
    }

    fn atom_count(&self) -> usize {
        self.len()
    }

    fn weight(&self, i: usize) -> f64 {
        self.trapezoid_weight(i) * self.density[i]
    }

    fn point(&self, i: usize) -> &[f64] {
        std::slice::from_ref(&self.nodes[i])
    }
}

/// Trapezoid rule with compensated (Neumaier) summation, so that a
/// normalized density sums back to one within an ulp.
pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    let m = values.len();
    if m < 2 {
        return 0.0;
    }
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for (i, &v) in values.iter().enumerate() {
        let term = if i == 0 || i == m - 1 { 0.5 * v } else { v };
        let t = sum + term;
        carry += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    h * (sum + carry)
}

/// Rescales the density to unit trapezoid mass.
pub fn grid_normalize(g: &GridMeasure1D) -> Result<GridMeasure1D> {
    if let Some((node, &value)) = g
        .density
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::BadDensity { node, value });
    }
    let mass = g.mass();
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    if !mass.is_finite() {
        return Err(Error::Gibbs(format!("grid mass is {mass}")));
    }
    let mut out = g.clone();
    out.density.iter_mut().for_each(|v| *v /= mass);
    Ok(out)
}

/// One reproducible Gaussian stream, keyed by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives independent
/// counter-based sequences for every id under a shared seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.gaussian();
        }
    }
}

/// Which family of draws a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Lane {
    /// Brownian increments shared by a coupled pair.
    Noise = 0,
    InitA = 1,
    InitB = 2,
    /// Independent increments of a reference (nonlinear proxy) system.
    ReferenceNoise = 3,
    ReferenceInit = 4,
    Auxiliary = 5,
}

/// Packs `(replica, lane, index)` into a 64-bit ChaCha stream id.
pub fn stream_id(replica: u32, lane: Lane, index: u32) -> u64 {
    ((replica as u64) << 40) | ((lane as u64) << 32) | index as u64
}

/// One Gaussian stream per particle.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    streams: Vec<RngStream>,
}

impl NoiseStreams {
    pub fn new(seed: u64, replica: u32, lane: Lane, n: usize) -> Self {
        let streams = (0..n)
            .map(|i| RngStream::new(seed, stream_id(replica, lane, i as u32)))
            .collect();
        Self { streams }
    }

    pub fn from_streams(streams: Vec<RngStream>) -> Self {
        Self { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    /// Reorders streams so that new slot `i` owns old stream `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            streams: perm.iter().map(|&p| self.streams[p].clone()).collect(),
        }
    }

    /// Fills an `n × d` block; row `i` comes from stream `i`.
    pub fn fill(&mut self, out: &mut [f64], dim: usize) {
        out.par_chunks_exact_mut(dim)
            .zip(self.streams.par_iter_mut())
            .with_min_len(256)
            .for_each(|(row, stream)| stream.fill_gaussian(row));
    }
}

/// `n` i.i.d. draws from `N(mean, sd² I_d)`, all taken from `rng`.
pub fn sample_gaussian_cloud(
    n: usize,
    dim: usize,
    mean: &[f64],
    sd: f64,
    rng: &mut RngStream,
) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidInput("cloud size must be at least 1".into()));
    }
    if !(sd >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "standard deviation {sd} is negative"
        )));
    }
    if mean.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: mean.len(),
        });
    }
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for m in mean {
            data.push(m + sd * rng.gaussian());
        }
    }
    EmpiricalMeasure::new(dim, data)
}

/// Standard-normal block with one stream per particle (row).
pub fn standard_normal_rows(seed: u64, replica: u32, lane: Lane, n: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * dim];
    NoiseStreams::new(seed, replica, lane, n).fill(&mut out, dim);
    out
}
