//! Geometric medians and Bayesian remapping.
//!
//! The optimal remap sends every output `z` of a mechanism to the point that
//! minimises the posterior-expected quality loss of that output. When the
//! adversary scores errors with the same distance, the remapped mechanism is
//! average-error optimal: the best estimate of `x` is the released point.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::model::{compose, ensure_domain, DiscreteMechanism, Prior};

/// Weiszfeld iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeiszfeldConfig {
    pub max_iterations: usize,
    /// Stop once an iteration moves less than this (km).
    pub tolerance: f64,
    /// Iterates closer than this to a data point are treated as sitting on it (km).
    pub singularity_eps: f64,
}

impl Default for WeiszfeldConfig {
    fn default() -> Self {
        Self { max_iterations: 1000, tolerance: 1e-6, singularity_eps: 1e-9 }
    }
}

impl WeiszfeldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.tolerance > 0.0) || !(self.singularity_eps >= 0.0) {
            return Err(LppmError::InvalidInput(format!("invalid Weiszfeld config {self:?}")));
        }
        Ok(())
    }
}

/// Where estimates and remap targets may lie.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum SearchSpace {
    /// Anywhere in the plane.
    #[default]
    Plane,
    /// A finite candidate list, scanned exhaustively (lowest index wins ties).
    Candidates(Arc<[PlanePoint]>),
}

impl SearchSpace {
    pub fn candidates(points: &[PlanePoint]) -> Self {
        SearchSpace::Candidates(points.to_vec().into())
    }
}

/// `sum_i w_i d(p_i, c)` over the positive weights.
pub fn expected_loss(points: &[PlanePoint], weights: &[f64], d: &DistanceFn, c: PlanePoint) -> Result<f64> {
    let mut total = 0.0;
    for (&p, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            total += w * d.eval(p, c)?;
        }
    }
    Ok(total)
}

/// Length of the resultant of unit pulls towards all other points, i.e. the
/// norm of the subgradient of the weighted distance sum at data point `k`
/// without its own term.
fn pull_at(points: &[PlanePoint], weights: &[f64], k: usize) -> (f64, f64) {
    let pk = points[k];
    let (mut rx, mut ry) = (0.0, 0.0);
    for (j, (&p, &w)) in points.iter().zip(weights).enumerate() {
        if j == k {
            continue;
        }
        let d = p.dist(pk);
        if d > 0.0 {
            rx += w * (p.x - pk.x) / d;
            ry += w * (p.y - pk.y) / d;
        }
    }
    (rx, ry)
}

fn data_point_is_median(points: &[PlanePoint], weights: &[f64], k: usize, total: f64) -> bool {
    let (rx, ry) = pull_at(points, weights, k);
    rx.hypot(ry) <= weights[k] + 1e-12 * total
}

fn distance_sum(points: &[PlanePoint], weights: &[f64], c: PlanePoint) -> f64 {
    points.iter().zip(weights).map(|(p, w)| w * p.dist(c)).sum()
}

/// Newton iterate for the distance sum at `y`, when it exists and lowers the
/// objective. Weiszfeld alone crawls when the median sits close to a heavy
/// point.
fn newton_step(points: &[PlanePoint], weights: &[f64], y: PlanePoint) -> Option<PlanePoint> {
    let (mut gx, mut gy) = (0.0, 0.0);
    let (mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0);
    for (&p, &w) in points.iter().zip(weights) {
        let d = p.dist(y);
        let (ux, uy) = ((y.x - p.x) / d, (y.y - p.y) / d);
        gx += w * ux;
        gy += w * uy;
        let k = w / d;
        hxx += k * (1.0 - ux * ux);
        hxy -= k * ux * uy;
        hyy += k * (1.0 - uy * uy);
    }
    let det = hxx * hyy - hxy * hxy;
    if !(det > 1e-12 * (hxx * hyy).abs()) {
        return None;
    }
    let next = PlanePoint::new(y.x - (hyy * gx - hxy * gy) / det, y.y - (hxx * gy - hxy * gx) / det);
    (next.x.is_finite() && next.y.is_finite() && distance_sum(points, weights, next) < distance_sum(points, weights, y)).then_some(next)
}

/// Weighted geometric median by Weiszfeld's iteration with the Vardi-Zhang
/// step at data points, taking a Newton step instead whenever that one
/// descends.
pub fn geometric_median(points: &[PlanePoint], weights: &[f64], cfg: &WeiszfeldConfig) -> Result<PlanePoint> {
    cfg.validate()?;
    if points.len() != weights.len() {
        return Err(LppmError::InvalidInput("points and weights differ in length".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(LppmError::InvalidInput("weights must be finite and non-negative".into()));
    }
    // Rescaled so the largest weight is 1; subnormal weights would
    // otherwise lose their ratios in `w / d`.
    let w_max = weights.iter().cloned().fold(0.0, f64::max);
    let (pts, ws): (Vec<PlanePoint>, Vec<f64>) = points
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&p, &w)| (p, w / w_max))
        .unzip();
    match pts.len() {
        0 => return Err(LppmError::InvalidInput("geometric median needs a positive weight".into())),
        1 => return Ok(pts[0]),
        _ => {}
    }
    let total: f64 = ws.iter().sum();
    let mut y = PlanePoint::new(
        pts.iter().zip(&ws).map(|(p, w)| p.x * w).sum::<f64>() / total,
        pts.iter().zip(&ws).map(|(p, w)| p.y * w).sum::<f64>() / total,
    );

    for iter in 0..cfg.max_iterations {
        let (mut nx, mut ny, mut den) = (0.0, 0.0, 0.0);
        let (mut rx, mut ry) = (0.0, 0.0);
        let mut eta = 0.0;
        let mut coincident = None;
        let mut nearest = (f64::INFINITY, 0usize);
        for (j, (&p, &w)) in pts.iter().zip(&ws).enumerate() {
            let d = p.dist(y);
            if d < nearest.0 {
                nearest = (d, j);
            }
            if d <= cfg.singularity_eps {
                eta += w;
                coincident = Some(j);
                continue;
            }
            let k = w / d;
            nx += k * p.x;
            ny += k * p.y;
            den += k;
            rx += k * (p.x - y.x);
            ry += k * (p.y - y.y);
        }
        if den == 0.0 {
            // Every positive weight sits on the iterate.
            return Ok(y);
        }
        let t = PlanePoint::new(nx / den, ny / den);
        let next = match coincident {
            None => newton_step(&pts, &ws, y).unwrap_or(t),
            Some(k) => {
                let r = rx.hypot(ry);
                if r <= eta {
                    return Ok(pts[k]);
                }
                let a = eta / r;
                PlanePoint::new((1.0 - a) * t.x + a * y.x, (1.0 - a) * t.y + a * y.y)
            }
        };
        let step = next.dist(y);
        y = next;
        let check_snap = step < cfg.tolerance || iter % 10 == 9;
        if check_snap && data_point_is_median(&pts, &ws, nearest.1, total) {
            return Ok(pts[nearest.1]);
        }
        if step < cfg.tolerance {
            return Ok(y);
        }
    }
    Err(LppmError::MedianNotConverged { iterations: cfg.max_iterations, best: y })
}

/// Minimiser over `space` of `sum_i w_i d(p_i, c)`, and the attained value.
///
/// In the plane, Euclidean loss uses the geometric median and squared loss
/// the weighted mean. A `hint` (typically the observed output) is returned
/// instead when it is at least as good.
pub fn minimize_expected_loss(
    points: &[PlanePoint],
    weights: &[f64],
    d: &DistanceFn,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
    hint: Option<PlanePoint>,
) -> Result<(PlanePoint, f64)> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(LppmError::InvalidInput("expected loss needs a positive weight".into()));
    }
    let best = match space {
        SearchSpace::Plane => {
            let c = match d {
                DistanceFn::Euclidean => geometric_median(points, weights, cfg)?,
                DistanceFn::SquaredEuclidean => {
                    let (mut sx, mut sy) = (0.0, 0.0);
                    for (p, w) in points.iter().zip(weights) {
                        sx += w * p.x;
                        sy += w * p.y;
                    }
                    PlanePoint::new(sx / total, sy / total)
                }
                DistanceFn::TagHamming(_) => {
                    return Err(LppmError::MetricDomain {
                        kind: "tag-hamming",
                        detail: "estimation over the continuous plane; use a candidate set".into(),
                    })
                }
            };
            (c, expected_loss(points, weights, d, c)?)
        }
        SearchSpace::Candidates(cands) => {
            let mut best: Option<(PlanePoint, f64)> = None;
            for &c in cands.iter() {
                let v = expected_loss(points, weights, d, c)?;
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((c, v));
                }
            }
            best.ok_or_else(|| LppmError::InvalidInput("empty candidate set".into()))?
        }
    };
    if let Some(h) = hint {
        let admissible = match space {
            SearchSpace::Plane => true,
            SearchSpace::Candidates(c) => c.contains(&h),
        };
        if admissible {
            let hv = expected_loss(points, weights, d, h)?;
            if hv <= best.1 {
                return Ok((h, hv));
            }
        }
    }
    Ok(best)
}

/// Remap target of each output plus, for constrained remaps, whether a
/// target satisfying the worst-case bound was found.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapPlan {
    pub targets: Vec<PlanePoint>,
    pub feasible: Vec<bool>,
}

impl RemapPlan {
    pub fn all_feasible(&self) -> bool {
        self.feasible.iter().all(|&f| f)
    }
}

fn ensure_remappable(dq: &DistanceFn) -> Result<()> {
    if let DistanceFn::TagHamming(_) = dq {
        return Err(LppmError::MetricDomain {
            kind: "tag-hamming",
            detail: "remapping under a semantic quality loss".into(),
        });
    }
    Ok(())
}

/// Optimal remap target for one output given its prior-weighted column.
pub fn remap_target(
    inputs: &[PlanePoint],
    joint: &[f64],
    z: PlanePoint,
    dq: &DistanceFn,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<PlanePoint> {
    if !joint.iter().any(|&w| w > 0.0) {
        return Ok(z);
    }
    Ok(minimize_expected_loss(inputs, joint, dq, space, cfg, Some(z))?.0)
}

/// Worst-case-constrained remap target for one output. Returns the target
/// and whether it satisfies `max d_Q(x, target) <= q_max` over `support`,
/// the inputs that can release this output. The support is passed
/// separately since a tiny likelihood times a small prior can underflow
/// to a zero joint weight.
#[allow(clippy::too_many_arguments)]
pub fn constrained_target(
    inputs: &[PlanePoint],
    joint: &[f64],
    support: &[usize],
    z: PlanePoint,
    dq: &DistanceFn,
    q_max: f64,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<(PlanePoint, bool)> {
    if support.is_empty() {
        return Ok((z, true));
    }
    let feasible = |c: PlanePoint| -> Result<bool> {
        for &i in support {
            if dq.eval(inputs[i], c)? > q_max {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut candidates = vec![z];
    match space {
        SearchSpace::Plane => {
            candidates.extend(support.iter().map(|&i| inputs[i]));
            if joint.iter().any(|&w| w > 0.0) {
                let (c, _) = minimize_expected_loss(inputs, joint, dq, space, cfg, None)?;
                candidates.push(c);
            }
        }
        SearchSpace::Candidates(c) => candidates.extend(c.iter().copied()),
    }
    let mut best: Option<(PlanePoint, f64)> = None;
    for c in candidates {
        if !feasible(c)? {
            continue;
        }
        let v = expected_loss(inputs, joint, dq, c)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((c, v));
        }
    }
    Ok(match best {
        Some((c, _)) => (c, true),
        None => (z, false),
    })
}

/// Targets of the optimal remap of `m`.
pub fn plan_optimal_remap(
    m: &DiscreteMechanism,
    prior: &Prior,
    dq: &DistanceFn,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<RemapPlan> {
    ensure_domain(m, prior)?;
    ensure_remappable(dq)?;
    cfg.validate()?;
    let inputs = m.inputs().points();
    let targets = (0..m.n_outputs())
        .into_par_iter()
        .map(|z| remap_target(inputs, &m.joint_column(prior, z), m.outputs()[z], dq, space, cfg))
        .collect::<Result<Vec<_>>>()?;
    let feasible = vec![true; targets.len()];
    Ok(RemapPlan { targets, feasible })
}

/// Composes `m` with its optimal remap over the plane.
pub fn optimal_remap(m: &DiscreteMechanism, prior: &Prior, dq: &DistanceFn, cfg: &WeiszfeldConfig) -> Result<DiscreteMechanism> {
    optimal_remap_in(m, prior, dq, &SearchSpace::Plane, cfg)
}

/// Composes `m` with its optimal remap over `space`.
pub fn optimal_remap_in(
    m: &DiscreteMechanism,
    prior: &Prior,
    dq: &DistanceFn,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<DiscreteMechanism> {
    let plan = plan_optimal_remap(m, prior, dq, space, cfg)?;
    compose(m, &plan.targets)
}

/// Targets of the remap that minimises expected loss subject to every
/// posterior-support point staying within `q_max` of the target.
pub fn plan_constrained_remap(
    m: &DiscreteMechanism,
    prior: &Prior,
    dq: &DistanceFn,
    q_max: f64,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<RemapPlan> {
    if q_max.is_infinite() && q_max > 0.0 {
        return plan_optimal_remap(m, prior, dq, space, cfg);
    }
    if !(q_max >= 0.0) {
        return Err(LppmError::InvalidInput(format!("worst-case bound {q_max} must be non-negative")));
    }
    ensure_domain(m, prior)?;
    ensure_remappable(dq)?;
    cfg.validate()?;
    let inputs = m.inputs().points();
    let results = (0..m.n_outputs())
        .into_par_iter()
        .map(|z| {
            let support: Vec<usize> = (0..inputs.len()).filter(|&x| prior.mass()[x] > 0.0 && m.get(x, z) > 0.0).collect();
            constrained_target(inputs, &m.joint_column(prior, z), &support, m.outputs()[z], dq, q_max, space, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (targets, feasible) = results.into_iter().unzip();
    Ok(RemapPlan { targets, feasible })
}

/// Composes `m` with its worst-case-constrained remap over the plane.
pub fn constrained_remap(
    m: &DiscreteMechanism,
    prior: &Prior,
    dq: &DistanceFn,
    q_max: f64,
    cfg: &WeiszfeldConfig,
) -> Result<(DiscreteMechanism, RemapPlan)> {
    constrained_remap_in(m, prior, dq, q_max, &SearchSpace::Plane, cfg)
}

pub fn constrained_remap_in(
    m: &DiscreteMechanism,
    prior: &Prior,
    dq: &DistanceFn,
    q_max: f64,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<(DiscreteMechanism, RemapPlan)> {
    let plan = plan_constrained_remap(m, prior, dq, q_max, space, cfg)?;
    Ok((compose(m, &plan.targets)?, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PoiSet;

    fn cfg() -> WeiszfeldConfig {
        WeiszfeldConfig::default()
    }

    #[test]
    fn single_point_median() {
        let p = PlanePoint::new(2.0, -1.0);
        let m = geometric_median(&[p, PlanePoint::ORIGIN], &[3.0, 0.0], &cfg()).unwrap();
        assert_eq!(m, p);
    }

    #[test]
    fn square_corners_median_is_center() {
        let pts = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)].map(|(x, y)| PlanePoint::new(x, y));
        let m = geometric_median(&pts, &[1.0; 4], &cfg()).unwrap();
        assert!(m.dist(PlanePoint::new(1.0, 1.0)) < 1e-9);
    }

    #[test]
    fn subnormal_weights_median() {
        let pts = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (5.0, 1.0)].map(|(x, y)| PlanePoint::new(x, y));
        let w = [3e-322, 2e-322, 3e-322, 2e-322, 1e-322];
        let scaled = w.map(|v| v * 1e300 * 1e20);
        let a = geometric_median(&pts, &w, &cfg()).unwrap();
        let b = geometric_median(&pts, &scaled, &cfg()).unwrap();
        assert!(a.dist(b) < 1e-5, "{a:?} vs {b:?}");
    }

    #[test]
    fn constrained_support_survives_underflow() {
        let poi = Arc::new(PoiSet::new(vec![PlanePoint::ORIGIN, PlanePoint::new(3.0, 0.0)]).unwrap());
        let prior = Prior::new(poi.clone(), vec![1.0 - 1e-10, 1e-10]).unwrap();
        let m = DiscreteMechanism::new(poi.clone(), poi.points().to_vec(), vec![1.0, 0.0, 1e-320, 1.0]).unwrap();
        assert_eq!(m.joint_column(&prior, 0)[1], 0.0);
        let plan = plan_constrained_remap(&m, &prior, &DistanceFn::Euclidean, 1.5, &SearchSpace::Plane, &cfg()).unwrap();
        assert!(!plan.feasible[0]);
    }

    #[test]
    fn dominant_data_point_is_exact_median() {
        // Weight 5 at the origin outweighs the pull of the rest (at most 3).
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, -1.0)].map(|(x, y)| PlanePoint::new(x, y));
        let m = geometric_median(&pts, &[5.0, 1.0, 1.0, 1.0], &cfg()).unwrap();
        assert_eq!(m, PlanePoint::ORIGIN);
    }

    #[test]
    fn median_rejects_bad_weights() {
        let p = [PlanePoint::ORIGIN];
        assert!(geometric_median(&p, &[0.0], &cfg()).is_err());
        assert!(geometric_median(&p, &[-1.0], &cfg()).is_err());
    }

    #[test]
    fn median_reports_non_convergence() {
        let pts = [(0.0, 0.0), (10.0, 0.0), (3.0, 7.0)].map(|(x, y)| PlanePoint::new(x, y));
        let c = WeiszfeldConfig { max_iterations: 1, tolerance: 1e-15, singularity_eps: 1e-9 };
        assert!(matches!(
            geometric_median(&pts, &[1.0, 1.0, 1.0], &c),
            Err(LppmError::MedianNotConverged { .. })
        ));
    }

    #[test]
    fn squared_loss_minimiser_is_mean() {
        let pts = [PlanePoint::new(0.0, 0.0), PlanePoint::new(4.0, 2.0)];
        let (c, v) =
            minimize_expected_loss(&pts, &[0.25, 0.75], &DistanceFn::SquaredEuclidean, &SearchSpace::Plane, &cfg(), None)
                .unwrap();
        assert_eq!(c, PlanePoint::new(3.0, 1.5));
        assert!((v - (0.25 * 11.25 + 0.75 * 1.25)).abs() < 1e-12);
    }

    #[test]
    fn candidate_scan_breaks_ties_by_index() {
        let pts = [PlanePoint::new(0.0, 0.0), PlanePoint::new(2.0, 0.0)];
        let cands = SearchSpace::candidates(&pts);
        let (c, _) = minimize_expected_loss(&pts, &[0.5, 0.5], &DistanceFn::Euclidean, &cands, &cfg(), None).unwrap();
        assert_eq!(c, pts[0]);
    }

    #[test]
    fn remap_rejects_semantic_quality_loss() {
        let poi = Arc::new(PoiSet::with_tags(vec![PlanePoint::ORIGIN], vec!["Home".into()]).unwrap());
        let prior = Prior::uniform(poi.clone());
        let m = DiscreteMechanism::identity(poi.clone());
        let d = DistanceFn::TagHamming(Arc::new(poi.tag_table().unwrap()));
        assert!(matches!(optimal_remap(&m, &prior, &d, &cfg()), Err(LppmError::MetricDomain { .. })));
    }

    #[test]
    fn constant_mechanism_remaps_to_prior_median() {
        let pts = vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 0.0), PlanePoint::new(2.0, 0.0)];
        let poi = Arc::new(PoiSet::new(pts).unwrap());
        let prior = Prior::uniform(poi.clone());
        let m = DiscreteMechanism::constant(poi, PlanePoint::new(40.0, -3.0));
        let r = optimal_remap(&m, &prior, &DistanceFn::Euclidean, &cfg()).unwrap();
        assert_eq!(r.outputs(), &[PlanePoint::new(1.0, 0.0)]);
    }
}
