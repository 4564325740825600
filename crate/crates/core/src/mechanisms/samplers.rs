//! Continuous noise mechanisms: planar Laplace, isotropic Gaussian, uniform
//! disk, zero noise, and rejection-sampled truncation of any of them.
//!
//! All samplers add an isotropic displacement `r (cos t, sin t)` with `t`
//! uniform on `[0, 2 pi)`, so each is described by its radial law.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::mechanisms::lambert::lambert_w_m1;
use crate::model::{DiscreteMechanism, NoiseSampler, PoiSet};

fn polar_offset(x: PlanePoint, r: f64, rng: &mut dyn RngCore) -> PlanePoint {
    let theta = rng.random::<f64>() * 2.0 * PI;
    PlanePoint::new(x.x + r * theta.cos(), x.y + r * theta.sin())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(LppmError::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Parameters selecting one of the built-in samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerParams {
    /// Planar Laplace with privacy parameter `epsilon` (km^-1).
    Laplace { epsilon: f64 },
    /// Isotropic Gaussian whose Rayleigh radius has the given mean (km).
    Gaussian { mean_radius: f64 },
    /// Uniform on the disk of radius `max_radius` (km).
    Circular { max_radius: f64 },
}

impl SamplerParams {
    pub fn build(self) -> Result<Arc<dyn NoiseSampler>> {
        Ok(match self {
            SamplerParams::Laplace { epsilon } => Arc::new(PlanarLaplace::new(epsilon)?),
            SamplerParams::Gaussian { mean_radius } => Arc::new(PlanarGaussian::new(mean_radius)?),
            SamplerParams::Circular { max_radius } => Arc::new(UniformDisk::new(max_radius)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarLaplace {
    epsilon: f64,
}

impl PlanarLaplace {
    pub fn new(epsilon: f64) -> Result<Self> {
        Ok(Self { epsilon: positive("epsilon", epsilon)? })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Inverse radial CDF: `r = -(W_{-1}((p - 1)/e) + 1) / epsilon`.
    pub fn radius_for(&self, p: f64) -> Result<f64> {
        let w = lambert_w_m1((p - 1.0) / E)?;
        Ok((-(w + 1.0) / self.epsilon).max(0.0))
    }
}

/// Samples a planar Laplace displacement of `x`.
pub fn sample_laplace(x: PlanePoint, epsilon: f64, rng: &mut dyn RngCore) -> Result<PlanePoint> {
    PlanarLaplace::new(epsilon)?.draw(x, rng)
}

/// `epsilon^2 / (2 pi) e^{-epsilon |z - x|}`.
pub fn laplace_density(z: PlanePoint, x: PlanePoint, epsilon: f64) -> f64 {
    epsilon * epsilon / (2.0 * PI) * (-epsilon * z.dist(x)).exp()
}

impl NoiseSampler for PlanarLaplace {
    fn name(&self) -> &str {
        "laplace"
    }

    fn draw(&self, x: PlanePoint, rng: &mut dyn RngCore) -> Result<PlanePoint> {
        let p = rng.random::<f64>();
        let r = self.radius_for(p)?;
        Ok(polar_offset(x, r, rng))
    }

    fn density(&self, z: PlanePoint, x: PlanePoint) -> f64 {
        laplace_density(z, x, self.epsilon)
    }

    fn radial_cdf(&self, r: f64) -> f64 {
        let er = self.epsilon * r.max(0.0);
        1.0 - (1.0 + er) * (-er).exp()
    }

    fn support_radius(&self) -> Option<f64> {
        None
    }

    fn geo_ind_epsilon(&self) -> Option<f64> {
        Some(self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarGaussian {
    sigma: f64,
    normal: Normal<f64>,
}

impl PlanarGaussian {
    /// Per-axis standard deviation is `mean_radius / sqrt(pi / 2)`.
    pub fn new(mean_radius: f64) -> Result<Self> {
        let sigma = positive("mean radius", mean_radius)? / (PI / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| LppmError::InvalidInput(e.to_string()))?;
        Ok(Self { sigma, normal })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Samples an isotropic Gaussian displacement with Rayleigh mean radius `mean_radius`.
pub fn sample_gaussian(x: PlanePoint, mean_radius: f64, rng: &mut dyn RngCore) -> Result<PlanePoint> {
    PlanarGaussian::new(mean_radius)?.draw(x, rng)
}

impl NoiseSampler for PlanarGaussian {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn draw(&self, x: PlanePoint, rng: &mut dyn RngCore) -> Result<PlanePoint> {
        let dx = self.normal.sample(rng);
        let dy = self.normal.sample(rng);
        Ok(PlanePoint::new(x.x + dx, x.y + dy))
    }

    fn density(&self, z: PlanePoint, x: PlanePoint) -> f64 {
        let s2 = self.sigma * self.sigma;
        (-z.dist_sq(x) / (2.0 * s2)).exp() / (2.0 * PI * s2)
    }

    fn radial_cdf(&self, r: f64) -> f64 {
        1.0 - (-(r * r) / (2.0 * self.sigma * self.sigma)).exp()
    }

    fn support_radius(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformDisk {
    radius: f64,
}

impl UniformDisk {
    pub fn new(radius: f64) -> Result<Self> {
        Ok(Self { radius: positive("radius", radius)? })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Samples a point uniformly on the disk of radius `radius` around `x`.
pub fn sample_circular(x: PlanePoint, radius: f64, rng: &mut dyn RngCore) -> Result<PlanePoint> {
    UniformDisk::new(radius)?.draw(x, rng)
}

impl NoiseSampler for UniformDisk {
    fn name(&self) -> &str {
        "circular"
    }

    fn draw(&self, x: PlanePoint, rng: &mut dyn RngCore) -> Result<PlanePoint> {
        // Radial density 2r/R^2 has CDF r^2/R^2.
        let r = self.radius * rng.random::<f64>().sqrt();
        Ok(polar_offset(x, r, rng))
    }

    fn density(&self, z: PlanePoint, x: PlanePoint) -> f64 {
        if z.dist(x) <= self.radius {
            1.0 / (PI * self.radius * self.radius)
        } else {
            0.0
        }
    }

    fn radial_cdf(&self, r: f64) -> f64 {
        (r.max(0.0) / self.radius).powi(2).min(1.0)
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// Reports `x` unchanged. Its "density" is the indicator of `z == x`, which
/// is all a posterior computation needs from an atom.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroNoise;

impl NoiseSampler for ZeroNoise {
    fn name(&self) -> &str {
        "zero"
    }

    fn draw(&self, x: PlanePoint, _rng: &mut dyn RngCore) -> Result<PlanePoint> {
        Ok(x)
    }

    fn density(&self, z: PlanePoint, x: PlanePoint) -> f64 {
        if z == x {
            1.0
        } else {
            0.0
        }
    }

    fn radial_cdf(&self, _r: f64) -> f64 {
        1.0
    }

    fn support_radius(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Smallest acceptance probability a truncation may have.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

/// Rejection-samples `inner` until the displacement is at most `q_max`.
pub struct Truncated {
    inner: Arc<dyn NoiseSampler>,
    q_max: f64,
    acceptance: f64,
    max_draws: usize,
    name: String,
}

impl Truncated {
    pub fn new(inner: Arc<dyn NoiseSampler>, q_max: f64) -> Result<Self> {
        let q_max = positive("truncation radius", q_max)?;
        let acceptance = inner.radial_cdf(q_max);
        if !(acceptance >= MIN_ACCEPTANCE) {
            return Err(LppmError::InvalidInput(format!(
                "truncation at {q_max} km keeps only {acceptance:e} of the mass"
            )));
        }
        let name = format!("{}-truncated", inner.name());
        // Enough draws that starvation has probability well below 1e-9.
        let max_draws = ((25.0 / acceptance).ceil() as usize).max(1000);
        Ok(Self { inner, q_max, acceptance, max_draws, name })
    }

    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }
}

/// Truncates `s` at `q_max` km.
pub fn truncate(s: Arc<dyn NoiseSampler>, q_max: f64) -> Result<Truncated> {
    Truncated::new(s, q_max)
}

impl NoiseSampler for Truncated {
    fn name(&self) -> &str {
        &self.name
    }

    fn draw(&self, x: PlanePoint, rng: &mut dyn RngCore) -> Result<PlanePoint> {
        for _ in 0..self.max_draws {
            let z = self.inner.draw(x, rng)?;
            if z.dist(x) <= self.q_max {
                return Ok(z);
            }
        }
        Err(LppmError::SamplerStarved(self.max_draws))
    }

    fn density(&self, z: PlanePoint, x: PlanePoint) -> f64 {
        if z.dist(x) <= self.q_max {
            self.inner.density(z, x) / self.acceptance
        } else {
            0.0
        }
    }

    fn radial_cdf(&self, r: f64) -> f64 {
        (self.inner.radial_cdf(r.min(self.q_max)) / self.acceptance).min(1.0)
    }

    fn support_radius(&self) -> Option<f64> {
        Some(match self.inner.support_radius() {
            Some(r) => r.min(self.q_max),
            None => self.q_max,
        })
    }
}

/// Discretises a sampler on a finite output list: `f[z|x]` proportional to
/// the density at `z`, normalised per input.
pub fn discretize(s: &dyn NoiseSampler, inputs: Arc<PoiSet>, outputs: Vec<PlanePoint>) -> Result<DiscreteMechanism> {
    let mut w = Vec::with_capacity(inputs.len() * outputs.len());
    for &x in inputs.points() {
        w.extend(outputs.iter().map(|&z| s.density(z, x)));
    }
    DiscreteMechanism::from_row_weights(inputs, outputs, w)
}

/// Zeroes every entry whose output lies farther than `q_max` from its input
/// and renormalises the rows.
pub fn truncate_discrete(m: &DiscreteMechanism, dq: &DistanceFn, q_max: f64) -> Result<DiscreteMechanism> {
    let d = dq.matrix(m.inputs().points(), m.outputs())?;
    let w = m.matrix().iter().zip(&d).map(|(&f, &dist)| if dist <= q_max { f } else { 0.0 }).collect();
    DiscreteMechanism::from_row_weights(m.inputs().clone(), m.outputs().to_vec(), w)
}
