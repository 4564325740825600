//! Blahut-Arimoto mechanism: alternate between the output marginal
//! `P_Z(z) = sum_x pi(x) f[z|x]` and the kernel update
//! `f[z|x] ∝ P_Z(z) e^{-b d_Q(x,z)}` until no entry moves more than the
//! threshold, then apply the optimal remap.
//!
//! The kernel is shifted per row so its largest entry is 1; far outputs
//! underflow only where they are negligible next to the nearest one.

use rayon::prelude::*;

use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::metrics::q_avg;
use crate::model::{same_poi, DiscreteMechanism, Prior};
use crate::remap::{constrained_remap_in, optimal_remap_in, SearchSpace, WeiszfeldConfig};

/// Smallest probability a warm-start entry is raised to.
const WARM_START_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaParams {
    /// Rate `b` (1/km) trading mutual information against quality loss.
    pub b: f64,
    /// Stop when no entry changes by more than this between iterations.
    pub convergence_threshold: f64,
    pub max_iterations: usize,
}

impl BaParams {
    pub fn new(b: f64) -> Self {
        Self { b, convergence_threshold: 1e-9, max_iterations: 100_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(LppmError::InvalidInput(format!("BA rate {} must be non-negative", self.b)));
        }
        if !(self.convergence_threshold > 0.0) || self.max_iterations == 0 {
            return Err(LppmError::InvalidInput(format!("invalid BA stopping rule {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct BaOptions {
    /// Initial mechanism; uniform when absent.
    pub warm_start: Option<DiscreteMechanism>,
    /// Outputs farther than this from an input get zero probability, and
    /// the remap becomes the worst-case-constrained one.
    pub q_max: Option<f64>,
    /// Where remap targets may lie.
    pub space: SearchSpace,
    pub weiszfeld: WeiszfeldConfig,
    /// Record the objective `I(X;Z) + b Q_avg` (nats) at every iterate.
    pub record_trace: bool,
}

#[derive(Debug, Clone)]
pub struct BaOutcome {
    pub params: BaParams,
    /// Converged mechanism before remapping.
    pub raw: DiscreteMechanism,
    pub remapped: DiscreteMechanism,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Columns summed per task when forming the output marginal.
const MARGINAL_CHUNK: usize = 256;

struct Problem<'a> {
    n: usize,
    k: usize,
    prior: &'a [f64],
    dist: Vec<f64>,
    /// `e^{-b (d(x,z) - d_min(x))}`, zero where truncation forbids the pair.
    /// The per-row shift cancels in the normalisation.
    kernel: Vec<f64>,
    b: f64,
}

impl Problem<'_> {
    fn marginal(&self, f: &[f64]) -> Vec<f64> {
        let mut pz = vec![0.0; self.k];
        pz.par_chunks_mut(MARGINAL_CHUNK).enumerate().for_each(|(c, acc)| {
            let z0 = c * MARGINAL_CHUNK;
            for (x, &p) in self.prior.iter().enumerate() {
                if p > 0.0 {
                    let row = &f[x * self.k + z0..x * self.k + z0 + acc.len()];
                    acc.iter_mut().zip(row).for_each(|(a, v)| *a += p * v);
                }
            }
        });
        pz
    }

    fn update(&self, pz: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(self.k).enumerate().for_each(|(x, row)| {
            let kern = &self.kernel[x * self.k..(x + 1) * self.k];
            row.iter_mut().zip(pz.iter().zip(kern)).for_each(|(r, (p, q))| *r = p * q);
            let mut s: f64 = row.iter().sum();
            if !(s > 0.0) {
                // Every reachable output is dead (zero-prior input): fall back to the kernel.
                row.copy_from_slice(kern);
                s = row.iter().sum();
            }
            row.iter_mut().for_each(|v| *v /= s);
        });
    }

    /// `I(X;Z) + b Q_avg` in nats.
    fn lagrangian(&self, f: &[f64], pz: &[f64]) -> f64 {
        let mut total = 0.0;
        for x in 0..self.n {
            if self.prior[x] == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for z in 0..self.k {
                let v = f[x * self.k + z];
                if v > 0.0 {
                    // p(z) >= pi(x) f(x,z) exactly; the sum may have underflowed.
                    let p = pz[z].max(self.prior[x] * v);
                    if p == 0.0 {
                        continue;
                    }
                    acc += v * ((v / p).ln() + self.b * self.dist[x * self.k + z]);
                }
            }
            total += self.prior[x] * acc;
        }
        total
    }
}

/// Largest allowed relative growth `p_new(z) / p(z) - 1` of an output
/// marginal at convergence. Outputs still growing are not at the fixed
/// point even when the matrix barely moves, e.g. after a near-degenerate
/// warm start.
const MARGINAL_GROWTH_TOL: f64 = 1e-7;

fn marginal_settled(before: &[f64], after: &[f64]) -> bool {
    before.iter().zip(after).all(|(&a, &b)| a == 0.0 || b <= a * (1.0 + MARGINAL_GROWTH_TOL))
}

fn normalize_rows(f: &mut [f64], k: usize) {
    for row in f.chunks_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
}

/// Runs the iteration only, returning the converged (unremapped) mechanism,
/// the iteration count and the objective trace.
pub fn ba_iterate(
    prior: &Prior,
    outputs: &[PlanePoint],
    dq: &DistanceFn,
    params: &BaParams,
    opts: &BaOptions,
) -> Result<(DiscreteMechanism, usize, Vec<f64>)> {
    params.validate()?;
    if outputs.is_empty() {
        return Err(LppmError::InvalidInput("empty output alphabet".into()));
    }
    let inputs = prior.poi().points();
    let (n, k) = (inputs.len(), outputs.len());
    let dist = dq.matrix(inputs, outputs)?;
    let q_max = opts.q_max.unwrap_or(f64::INFINITY);
    if !(q_max >= 0.0) {
        return Err(LppmError::InvalidInput(format!("worst-case bound {q_max} must be non-negative")));
    }
    let mut kernel = vec![0.0; n * k];
    for x in 0..n {
        let d = &dist[x * k..(x + 1) * k];
        let d_min = d.iter().copied().filter(|&v| v <= q_max).fold(f64::INFINITY, f64::min);
        if d_min == f64::INFINITY {
            return Err(LppmError::InvalidInput(format!("input {x} has no output within {q_max} km")));
        }
        for z in 0..k {
            if d[z] <= q_max {
                kernel[x * k + z] = (-params.b * (d[z] - d_min)).exp();
            }
        }
    }
    let allowed = |i: usize| dist[i] <= q_max;

    let mut f = vec![0.0; n * k];
    match &opts.warm_start {
        Some(w) => {
            if !same_poi(w.inputs(), prior.poi()) || w.outputs() != outputs {
                return Err(LppmError::DomainMismatch("warm start has different inputs or outputs".into()));
            }
            for (i, &v) in w.matrix().iter().enumerate() {
                if allowed(i) {
                    f[i] = v.max(WARM_START_FLOOR);
                }
            }
        }
        None => {
            for (i, v) in f.iter_mut().enumerate() {
                *v = if allowed(i) { 1.0 } else { 0.0 };
            }
        }
    }
    normalize_rows(&mut f, k);
    let pb = Problem { n, k, prior: prior.mass(), dist, kernel, b: params.b };

    let mut trace = Vec::new();
    let mut next = vec![0.0; n * k];
    let mut last_change = f64::INFINITY;
    let mut pz = pb.marginal(&f);
    for it in 1..=params.max_iterations {
        if opts.record_trace {
            trace.push(pb.lagrangian(&f, &pz));
        }
        pb.update(&pz, &mut next);
        last_change = f.par_iter().zip(next.par_iter()).map(|(a, b)| (a - b).abs()).reduce(|| 0.0, f64::max);
        std::mem::swap(&mut f, &mut next);
        let pz_next = pb.marginal(&f);
        let settled = last_change < params.convergence_threshold && marginal_settled(&pz, &pz_next);
        pz = pz_next;
        if settled {
            if opts.record_trace {
                trace.push(pb.lagrangian(&f, &pz));
            }
            log::debug!("BA b={} converged in {it} iterations", params.b);
            return Ok((DiscreteMechanism::new(prior.poi().clone(), outputs.to_vec(), f)?, it, trace));
        }
    }
    Err(LppmError::BaNotConverged {
        iterations: params.max_iterations,
        last_change,
        last: Box::new(DiscreteMechanism::new(prior.poi().clone(), outputs.to_vec(), f)?),
    })
}

/// Blahut-Arimoto mechanism over `outputs`, followed by the optimal (or,
/// with `q_max`, worst-case-constrained) remap.
pub fn build_ba(
    prior: &Prior,
    outputs: &[PlanePoint],
    dq: &DistanceFn,
    params: &BaParams,
    opts: &BaOptions,
) -> Result<BaOutcome> {
    let (raw, iterations, trace) = ba_iterate(prior, outputs, dq, params, opts)?;
    let remapped = match opts.q_max {
        Some(q) => constrained_remap_in(&raw, prior, dq, q, &opts.space, &opts.weiszfeld)?.0,
        None => optimal_remap_in(&raw, prior, dq, &opts.space, &opts.weiszfeld)?,
    };
    Ok(BaOutcome { params: *params, raw, remapped, iterations, trace })
}

/// Relative accuracy [`tune_ba_b`] aims for.
pub const TUNE_REL_TOL: f64 = 0.01;

/// Finds `b` in `bracket` whose remapped mechanism has average loss within
/// 1% of `q_target`, by bisection on `log b`.
pub fn tune_ba_b(
    prior: &Prior,
    outputs: &[PlanePoint],
    dq: &DistanceFn,
    q_target: f64,
    bracket: (f64, f64),
    base: &BaParams,
    opts: &BaOptions,
) -> Result<BaOutcome> {
    let (mut lo, mut hi) = bracket;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(LppmError::InvalidInput(format!("invalid b bracket ({lo}, {hi})")));
    }
    if !(q_target > 0.0) {
        return Err(LppmError::InvalidInput(format!("target loss {q_target} must be positive")));
    }
    let tol = TUNE_REL_TOL * q_target;
    let run = |b: f64| -> Result<(BaOutcome, f64)> {
        let out = build_ba(prior, outputs, dq, &BaParams { b, ..*base }, opts)?;
        let q = q_avg(&out.remapped, prior, dq)?;
        Ok((out, q))
    };
    let (out_lo, q_lo) = run(lo)?;
    if (q_lo - q_target).abs() <= tol {
        return Ok(out_lo);
    }
    let (out_hi, q_hi) = run(hi)?;
    if (q_hi - q_target).abs() <= tol {
        return Ok(out_hi);
    }
    if !(q_hi < q_target && q_target < q_lo) {
        return Err(LppmError::InvalidInput(format!(
            "target loss {q_target} outside [{q_hi}, {q_lo}] reached over the b bracket"
        )));
    }
    for _ in 0..200 {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        let (out, q) = run(mid)?;
        if (q - q_target).abs() <= tol {
            return Ok(out);
        }
        if q > q_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Err(LppmError::Numerical(format!("no b in the bracket reaches loss {q_target} within 1%")))
}
