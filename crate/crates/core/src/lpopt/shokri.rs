//! Mechanism maximising the adversary's average error under an average
//! quality-loss budget, as a linear program over `f[z|x]`.
//!
//! The inner minimum over estimates is linearised with one epigraph
//! variable `y[z]` per output:
//!
//! ```text
//! max  sum_z y[z]
//! s.t. y[z] <= sum_x pi(x) f[z|x] d_P(x, xh)     for every z, xh
//!      sum_z f[z|x] = 1                           for every x
//!      sum_{x,z} pi(x) f[z|x] d_Q(x, z) <= budget
//!      f, y >= 0
//! ```

use crate::error::{LppmError, Result};
use crate::geo::DistanceFn;
use crate::lpopt::simplex::{simplex_solve, LinearProgram, LpSolution, Objective, Sense, SimplexOptions};
use crate::model::{DiscreteMechanism, Prior};

/// Largest row-sum drift accepted when reading a mechanism off a solution.
pub const EXTRACT_TOL: f64 = 1e-8;

/// Inputs, outputs and estimates all range over the prior's POI set.
#[derive(Debug, Clone)]
pub struct ShokriInstance {
    pub prior: Prior,
    pub dp: DistanceFn,
    pub dq: DistanceFn,
    pub q_budget: f64,
    /// Pairs farther apart than this (under `dq`) get probability zero.
    pub q_max: Option<f64>,
}

impl ShokriInstance {
    pub fn new(prior: Prior, dp: DistanceFn, dq: DistanceFn, q_budget: f64) -> Result<Self> {
        if !(q_budget >= 0.0) || !q_budget.is_finite() {
            return Err(LppmError::InvalidInput(format!("loss budget {q_budget} must be non-negative")));
        }
        Ok(Self { prior, dp, dq, q_budget, q_max: None })
    }

    fn n(&self) -> usize {
        self.prior.len()
    }

    /// Column of `f[z|x]`.
    pub fn f_index(&self, x: usize, z: usize) -> usize {
        x * self.n() + z
    }

    /// Column of `y[z]`.
    pub fn y_index(&self, z: usize) -> usize {
        self.n() * self.n() + z
    }
}

pub fn build_shokri_lp(inst: &ShokriInstance) -> Result<LinearProgram> {
    let n = inst.n();
    let pts = inst.prior.poi().points();
    let pi = inst.prior.mass();
    let dp = inst.dp.matrix(pts, pts)?;
    let dq = inst.dq.matrix(pts, pts)?;
    let nv = n * n + n;
    let mut costs = vec![0.0; nv];
    for z in 0..n {
        costs[inst.y_index(z)] = 1.0;
    }
    let mut lp = LinearProgram::new(Objective::Maximize, costs);
    for x in 0..n {
        for z in 0..n {
            lp.names[inst.f_index(x, z)] = format!("f_{x}_{z}");
        }
    }
    for z in 0..n {
        lp.names[inst.y_index(z)] = format!("y_{z}");
    }
    if let Some(q) = inst.q_max {
        for x in 0..n {
            for z in 0..n {
                if dq[x * n + z] > q {
                    lp.bounds[inst.f_index(x, z)] = (0.0, 0.0);
                }
            }
        }
    }
    for z in 0..n {
        for xh in 0..n {
            let mut row = vec![0.0; nv];
            row[inst.y_index(z)] = 1.0;
            for x in 0..n {
                row[inst.f_index(x, z)] = -pi[x] * dp[x * n + xh];
            }
            lp.add(row, Sense::Le, 0.0);
        }
    }
    for x in 0..n {
        let mut row = vec![0.0; nv];
        for z in 0..n {
            row[inst.f_index(x, z)] = 1.0;
        }
        lp.add(row, Sense::Eq, 1.0);
    }
    let mut row = vec![0.0; nv];
    for x in 0..n {
        for z in 0..n {
            row[inst.f_index(x, z)] = pi[x] * dq[x * n + z];
        }
    }
    lp.add(row, Sense::Le, inst.q_budget);
    Ok(lp)
}

/// Reads `f` off an optimal solution, renormalising rows whose sum drifted
/// by at most [`EXTRACT_TOL`].
pub fn extract_mechanism(sol: &LpSolution, inst: &ShokriInstance) -> Result<DiscreteMechanism> {
    sol.require_optimal()?;
    let n = inst.n();
    if sol.x.len() != n * n + n {
        return Err(LppmError::DomainMismatch("solution does not match the instance".into()));
    }
    let mut f = sol.x[..n * n].to_vec();
    for (x, row) in f.chunks_mut(n).enumerate() {
        if let Some(v) = row.iter().find(|&&v| v < -EXTRACT_TOL) {
            return Err(LppmError::Numerical(format!("row {x} has entry {v}")));
        }
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > EXTRACT_TOL {
            return Err(LppmError::Numerical(format!("row {x} sums to {s}")));
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    let poi = inst.prior.poi().clone();
    let outputs = poi.points().to_vec();
    DiscreteMechanism::new(poi, outputs, f)
}

/// Builds and solves the instance, returning the mechanism and the raw solution.
pub fn solve_shokri(inst: &ShokriInstance, opts: &SimplexOptions) -> Result<(DiscreteMechanism, LpSolution)> {
    let lp = build_shokri_lp(inst)?;
    let sol = simplex_solve(&lp, opts)?;
    let m = extract_mechanism(&sol, inst)?;
    Ok((m, sol))
}
