//! Monte Carlo evaluation of continuous mechanisms.
//!
//! Each sample draws `x ~ pi` and a raw output `z`, forms the posterior over
//! the POIs from the sampler density, remaps `z` to `z'`, and lets the
//! adversary pick its estimate from the same posterior. The adversary's
//! posterior conditions on the raw output.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::metrics::{MetricReport, Provenance};
use crate::model::{entropy_bits, NoiseSampler, Prior};
use crate::remap::{constrained_target, minimize_expected_loss, remap_target, SearchSpace, WeiszfeldConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RemapMode {
    None,
    Optimal,
    /// Worst-case-constrained remap with bound `q_max` (km).
    Constrained(f64),
}

#[derive(Debug, Clone)]
pub struct McSettings {
    pub samples: usize,
    pub dq: DistanceFn,
    pub dp: DistanceFn,
    pub remap: RemapMode,
    pub space: SearchSpace,
    pub weiszfeld: WeiszfeldConfig,
    /// Tail mass ignored when bounding the posterior of unbounded samplers.
    pub tail: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            samples: 5000,
            dq: DistanceFn::Euclidean,
            dp: DistanceFn::Euclidean,
            remap: RemapMode::Optimal,
            space: SearchSpace::Plane,
            weiszfeld: WeiszfeldConfig::default(),
            tail: 1e-12,
        }
    }
}

/// A generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct SampleStats {
    loss: f64,
    error: f64,
    entropy: f64,
    /// Farthest posterior-support input from the released point.
    reach: f64,
}

fn mean_se(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates the metrics of `s` composed with the requested remap.
///
/// `p_gi` is the sampler's analytic level (zero when it has none);
/// `q_wc` is infinite for unbounded samplers and otherwise the largest
/// distance between a released point and any input that could have
/// produced it. Worst-case privacy metrics are not estimated.
pub fn mc_evaluate(s: &dyn NoiseSampler, prior: &Prior, cfg: &McSettings, rng: &mut dyn RngCore) -> Result<MetricReport> {
    if cfg.samples == 0 {
        return Err(LppmError::InvalidInput("Monte Carlo needs at least one sample".into()));
    }
    if let RemapMode::Constrained(q) = cfg.remap {
        if !(q >= 0.0) {
            return Err(LppmError::InvalidInput(format!("worst-case bound {q} must be non-negative")));
        }
    }
    let points = prior.poi().points();
    let pick = WeightedIndex::new(prior.mass()).map_err(|e| LppmError::InvalidInput(e.to_string()))?;
    let mut draws = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let x = pick.sample(rng);
        let z = s.draw(points[x], rng)?;
        draws.push((x, z));
    }
    let radius = s.support_radius().unwrap_or_else(|| s.effective_radius(cfg.tail));
    let stats = draws
        .par_iter()
        .map(|&(x, z)| sample_stats(s, prior, cfg, radius, x, z))
        .collect::<Result<Vec<_>>>()?;

    let (q_avg, se_q) = mean_se(stats.iter().map(|t| t.loss));
    let (p_ae, se_ae) = mean_se(stats.iter().map(|t| t.error));
    let (p_ce, se_ce) = mean_se(stats.iter().map(|t| t.entropy));
    let q_wc = match s.support_radius() {
        None => f64::INFINITY,
        Some(r) if cfg.remap == RemapMode::None => r,
        Some(_) => stats.iter().map(|t| t.reach).fold(0.0, f64::max),
    };
    let p_gi = match s.geo_ind_epsilon() {
        Some(e) if e > 0.0 => 1.0 / e,
        _ => 0.0,
    };
    Ok(MetricReport {
        q_avg,
        q_wc,
        p_ae,
        p_ce,
        p_gi: Some(p_gi),
        p_wc_ae: None,
        p_wc_ce: None,
        provenance: Provenance::MonteCarlo { samples: cfg.samples, se_q_avg: se_q, se_p_ae: se_ae, se_p_ce: se_ce },
    })
}

/// [`mc_evaluate`] on stream `stream` of `seed`.
pub fn mc_evaluate_seeded(s: &dyn NoiseSampler, prior: &Prior, cfg: &McSettings, seed: u64, stream: u64) -> Result<MetricReport> {
    mc_evaluate(s, prior, cfg, &mut stream_rng(seed, stream))
}

fn sample_stats(s: &dyn NoiseSampler, prior: &Prior, cfg: &McSettings, radius: f64, x: usize, z: PlanePoint) -> Result<SampleStats> {
    let points = prior.poi().points();
    let mut sub = Vec::new();
    let mut joint = Vec::new();
    for (&p, &m) in points.iter().zip(prior.mass()) {
        if m > 0.0 && p.dist(z) <= radius {
            let w = m * s.density(z, p);
            if w > 0.0 {
                sub.push(p);
                joint.push(w);
            }
        }
    }
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) {
        return Err(LppmError::ImpossibleObservation);
    }
    let post: Vec<f64> = joint.iter().map(|w| w / total).collect();
    let released = match cfg.remap {
        RemapMode::None => z,
        RemapMode::Optimal => remap_target(&sub, &post, z, &cfg.dq, &cfg.space, &cfg.weiszfeld)?,
        RemapMode::Constrained(q) => {
            let (t, ok) = constrained_target(&sub, &post, &(0..sub.len()).collect::<Vec<_>>(), z, &cfg.dq, q, &cfg.space, &cfg.weiszfeld)?;
            if !ok {
                return Err(LppmError::Numerical(format!("no remap target within {q} km of the posterior support")));
            }
            t
        }
    };
    let truth = points[x];
    let (estimate, _) = minimize_expected_loss(&sub, &post, &cfg.dp, &cfg.space, &cfg.weiszfeld, Some(released))?;
    let mut reach = 0.0f64;
    for (&p, &w) in sub.iter().zip(&post) {
        if w > 0.0 {
            reach = reach.max(cfg.dq.eval(p, released)?);
        }
    }
    Ok(SampleStats {
        loss: cfg.dq.eval(truth, released)?,
        error: cfg.dp.eval(truth, estimate)?,
        entropy: entropy_bits(&post),
        reach,
    })
}
