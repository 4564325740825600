//! Quality-loss and privacy metrics of discrete mechanisms.
//!
//! Entropies are in bits. Geo-indistinguishability uses natural logarithms,
//! so `p_gi` is `1/epsilon` in km for the guarantee `f[z|x] <= e^{eps d} f[z|x']`.

use std::fmt;

use rayon::prelude::*;

use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::model::{entropy_bits, ensure_domain, output_marginal, DiscreteMechanism, Posterior, Prior, PROB_FLOOR};
use crate::remap::{minimize_expected_loss, SearchSpace, WeiszfeldConfig};

/// Average quality loss `sum_x sum_z pi(x) f[z|x] d_Q(x, z)`.
pub fn q_avg(m: &DiscreteMechanism, prior: &Prior, dq: &DistanceFn) -> Result<f64> {
    ensure_domain(m, prior)?;
    let inputs = m.inputs().points();
    let mut total = 0.0;
    for (x, &p) in prior.mass().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut row_loss = 0.0;
        for (z, &f) in m.row(x).iter().enumerate() {
            if f > 0.0 {
                row_loss += f * dq.eval(inputs[x], m.outputs()[z])?;
            }
        }
        total += p * row_loss;
    }
    Ok(total)
}

/// Worst-case quality loss over pairs with `pi(x) > 0` and `f[z|x] > 0`.
pub fn q_wc(m: &DiscreteMechanism, prior: &Prior, dq: &DistanceFn) -> Result<f64> {
    ensure_domain(m, prior)?;
    let inputs = m.inputs().points();
    let mut worst: f64 = 0.0;
    for (x, &p) in prior.mass().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (z, &f) in m.row(x).iter().enumerate() {
            if f > 0.0 {
                worst = worst.max(dq.eval(inputs[x], m.outputs()[z])?);
            }
        }
    }
    Ok(worst)
}

/// Minimised expected adversary error of every output, `0` for outputs that
/// are never released.
pub fn per_output_adversary_error(
    m: &DiscreteMechanism,
    prior: &Prior,
    dp: &DistanceFn,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<Vec<f64>> {
    ensure_domain(m, prior)?;
    let inputs = m.inputs().points();
    (0..m.n_outputs())
        .into_par_iter()
        .map(|z| {
            let joint = m.joint_column(prior, z);
            if !joint.iter().any(|&w| w > 0.0) {
                return Ok(0.0);
            }
            // The released point itself is always a valid estimate.
            let hint = Some(m.outputs()[z]).filter(|_| dp_accepts(dp, m.outputs()[z]));
            Ok(minimize_expected_loss(inputs, &joint, dp, space, cfg, hint)?.1)
        })
        .collect()
}

fn dp_accepts(dp: &DistanceFn, p: PlanePoint) -> bool {
    match dp {
        DistanceFn::TagHamming(t) => t.class_of(p).is_some(),
        _ => true,
    }
}

/// Average adversary error `sum_z min_xhat sum_x pi(x) f[z|x] d_P(x, xhat)`.
pub fn p_ae(m: &DiscreteMechanism, prior: &Prior, dp: &DistanceFn, space: &SearchSpace, cfg: &WeiszfeldConfig) -> Result<f64> {
    Ok(per_output_adversary_error(m, prior, dp, space, cfg)?.iter().sum())
}

/// Worst-case-output adversary error: the smallest minimised error among
/// outputs with `P_Z(z) > 0`.
pub fn p_wc_ae(m: &DiscreteMechanism, prior: &Prior, dp: &DistanceFn, space: &SearchSpace, cfg: &WeiszfeldConfig) -> Result<f64> {
    let pz = output_marginal(m, prior)?;
    let errs = per_output_adversary_error(m, prior, dp, space, cfg)?;
    Ok(errs
        .iter()
        .zip(&pz)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&e, _)| e)
        .fold(f64::INFINITY, f64::min))
}

/// Bayes-optimal estimate of `x` under `dp` given a posterior over `points`.
pub fn adversary_estimate(
    post: &Posterior,
    points: &[PlanePoint],
    dp: &DistanceFn,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<PlanePoint> {
    if points.len() != post.mass().len() {
        return Err(LppmError::DomainMismatch("posterior and point list differ in length".into()));
    }
    Ok(minimize_expected_loss(points, post.mass(), dp, space, cfg, None)?.0)
}

fn posterior_entropies(m: &DiscreteMechanism, prior: &Prior) -> Result<(Vec<f64>, Vec<f64>)> {
    let pz = output_marginal(m, prior)?;
    let h = (0..m.n_outputs())
        .map(|z| {
            if pz[z] <= 0.0 {
                return 0.0;
            }
            let post: Vec<f64> = m.joint_column(prior, z).iter().map(|j| j / pz[z]).collect();
            entropy_bits(&post)
        })
        .collect();
    Ok((pz, h))
}

/// Conditional entropy `sum_z P_Z(z) H(x|z)` in bits.
pub fn p_ce(m: &DiscreteMechanism, prior: &Prior) -> Result<f64> {
    let (pz, h) = posterior_entropies(m, prior)?;
    Ok(pz.iter().zip(&h).map(|(p, h)| p * h).sum())
}

/// Worst-case-output conditional entropy: the smallest `H(x|z)` among
/// outputs with `P_Z(z) > 0`.
pub fn p_wc_ce(m: &DiscreteMechanism, prior: &Prior) -> Result<f64> {
    let (pz, h) = posterior_entropies(m, prior)?;
    Ok(pz
        .iter()
        .zip(&h)
        .filter(|(&p, _)| p > 0.0)
        .map(|(_, &h)| h)
        .fold(f64::INFINITY, f64::min))
}

/// Mutual information `I(X;Z)` in bits, computed from the joint.
pub fn mutual_information(m: &DiscreteMechanism, prior: &Prior) -> Result<f64> {
    let pz = output_marginal(m, prior)?;
    let mut mi = 0.0;
    for (x, &p) in prior.mass().iter().enumerate() {
        for (z, &f) in m.row(x).iter().enumerate() {
            let joint = p * f;
            if joint > PROB_FLOOR {
                mi += joint * (f / pz[z]).log2();
            }
        }
    }
    Ok(mi)
}

/// Geo-indistinguishability level `inf d_P(x,x') / |ln(f[z|x] / f[z|x'])|`.
///
/// Returns 0 when some output has probability zero under one input and
/// positive under another, and `+inf` when all rows coincide.
pub fn p_gi(m: &DiscreteMechanism, dp: &DistanceFn) -> Result<f64> {
    let inputs = m.inputs().points();
    let n = inputs.len();
    let mut dist = vec![0.0; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let d = dp.eval(inputs[a], inputs[b])?;
            dist[a * n + b] = d;
        }
    }
    let per_output: Vec<f64> = (0..m.n_outputs())
        .into_par_iter()
        .map(|z| {
            let col = m.column(z);
            let logs: Vec<f64> = col.iter().map(|v| v.ln()).collect();
            let mut best = f64::INFINITY;
            for a in 0..n {
                for b in (a + 1)..n {
                    let (fa, fb) = (col[a], col[b]);
                    if fa == 0.0 && fb == 0.0 {
                        continue;
                    }
                    if fa == 0.0 || fb == 0.0 {
                        return 0.0;
                    }
                    let gap = (logs[a] - logs[b]).abs();
                    if gap > 0.0 {
                        best = best.min(dist[a * n + b] / gap);
                    }
                }
            }
            best
        })
        .collect();
    Ok(per_output.into_iter().fold(f64::INFINITY, f64::min))
}

/// A triple violating the relaxed geo-indistinguishability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoIndViolation {
    pub x: usize,
    pub x_prime: usize,
    pub z: usize,
    /// `f[z|x] - (e^{eps d} f[z|x'] + delta)`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoIndCheck {
    pub pass: bool,
    pub worst: Option<GeoIndViolation>,
}

/// Relative slack absorbing floating-point error in the ratio bound.
const GEO_IND_REL_SLACK: f64 = 1e-9;

/// Checks `f[z|x] <= e^{eps d_P(x,x')} f[z|x'] + delta` for every triple.
pub fn geo_ind_relaxed_check(m: &DiscreteMechanism, epsilon: f64, delta: f64, dp: &DistanceFn) -> Result<GeoIndCheck> {
    if !(0.0..1.0).contains(&delta) && delta != 1.0 {
        return Err(LppmError::InvalidInput(format!("delta {delta} outside [0, 1]")));
    }
    if !(epsilon >= 0.0) {
        return Err(LppmError::InvalidInput(format!("epsilon {epsilon} must be non-negative")));
    }
    let inputs = m.inputs().points();
    let n = inputs.len();
    let mut worst: Option<GeoIndViolation> = None;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let bound = (epsilon * dp.eval(inputs[a], inputs[b])?).exp();
            for z in 0..m.n_outputs() {
                let (fa, fb) = (m.get(a, z), m.get(b, z));
                let rhs = bound * fb * (1.0 + GEO_IND_REL_SLACK) + delta;
                let excess = fa - rhs;
                if excess > 0.0 && worst.is_none_or(|w| excess > w.excess) {
                    worst = Some(GeoIndViolation { x: a, x_prime: b, z, excess });
                }
            }
        }
    }
    Ok(GeoIndCheck { pass: worst.is_none(), worst })
}

/// How a report's numbers were obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Exact,
    MonteCarlo { samples: usize, se_q_avg: f64, se_p_ae: f64, se_p_ce: f64 },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Exact => write!(f, "exact"),
            Provenance::MonteCarlo { samples, se_q_avg, se_p_ae, se_p_ce } => write!(
                f,
                "monte-carlo(n={samples};se_q_avg={se_q_avg};se_p_ae={se_p_ae};se_p_ce={se_p_ce})"
            ),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = LppmError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(Provenance::Exact);
        }
        let bad = || LppmError::Config(format!("unrecognised provenance {s:?}"));
        let body = s.strip_prefix("monte-carlo(").and_then(|b| b.strip_suffix(')')).ok_or_else(bad)?;
        let mut samples = None;
        let (mut q, mut a, mut c) = (None, None, None);
        for kv in body.split(';') {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            match k {
                "n" => samples = v.parse().ok(),
                "se_q_avg" => q = v.parse().ok(),
                "se_p_ae" => a = v.parse().ok(),
                "se_p_ce" => c = v.parse().ok(),
                _ => return Err(bad()),
            }
        }
        Ok(Provenance::MonteCarlo {
            samples: samples.ok_or_else(bad)?,
            se_q_avg: q.ok_or_else(bad)?,
            se_p_ae: a.ok_or_else(bad)?,
            se_p_ce: c.ok_or_else(bad)?,
        })
    }
}

/// All metric values of one mechanism. `None` marks a metric that was not
/// computed for this kind of mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub q_avg: f64,
    pub q_wc: f64,
    pub p_ae: f64,
    pub p_ce: f64,
    pub p_gi: Option<f64>,
    pub p_wc_ae: Option<f64>,
    pub p_wc_ce: Option<f64>,
    pub provenance: Provenance,
}

/// Evaluation settings for discrete mechanisms.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub dq: DistanceFn,
    pub dp: DistanceFn,
    pub space: SearchSpace,
    pub weiszfeld: WeiszfeldConfig,
    /// Metric used for geo-indistinguishability; `None` skips `p_gi`.
    pub gi_metric: Option<DistanceFn>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            dq: DistanceFn::Euclidean,
            dp: DistanceFn::Euclidean,
            space: SearchSpace::Plane,
            weiszfeld: WeiszfeldConfig::default(),
            gi_metric: Some(DistanceFn::Euclidean),
        }
    }
}

/// Computes every metric of `m` exactly.
pub fn evaluate(m: &DiscreteMechanism, prior: &Prior, s: &EvalSettings) -> Result<MetricReport> {
    let pz = output_marginal(m, prior)?;
    let errs = per_output_adversary_error(m, prior, &s.dp, &s.space, &s.weiszfeld)?;
    let (_, h) = posterior_entropies(m, prior)?;
    let released = || pz.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(z, _)| z);
    Ok(MetricReport {
        q_avg: q_avg(m, prior, &s.dq)?,
        q_wc: q_wc(m, prior, &s.dq)?,
        p_ae: errs.iter().sum(),
        p_ce: pz.iter().zip(&h).map(|(p, h)| p * h).sum(),
        p_gi: s.gi_metric.as_ref().map(|d| p_gi(m, d)).transpose()?,
        p_wc_ae: Some(released().map(|z| errs[z]).fold(f64::INFINITY, f64::min)),
        p_wc_ce: Some(released().map(|z| h[z]).fold(f64::INFINITY, f64::min)),
        provenance: Provenance::Exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PoiSet;
    use std::sync::Arc;

    fn collinear3() -> (Arc<PoiSet>, Prior) {
        let poi = Arc::new(PoiSet::new((0..3).map(|i| PlanePoint::new(i as f64, 0.0)).collect()).unwrap());
        let prior = Prior::uniform(poi.clone());
        (poi, prior)
    }

    fn cfg() -> WeiszfeldConfig {
        WeiszfeldConfig::default()
    }

    #[test]
    fn identity_has_no_loss_and_no_privacy() {
        let (poi, prior) = collinear3();
        let id = DiscreteMechanism::identity(poi);
        let e = DistanceFn::Euclidean;
        assert_eq!(q_avg(&id, &prior, &e).unwrap(), 0.0);
        assert_eq!(q_wc(&id, &prior, &e).unwrap(), 0.0);
        assert_eq!(p_ae(&id, &prior, &e, &SearchSpace::Plane, &cfg()).unwrap(), 0.0);
        assert_eq!(p_ce(&id, &prior).unwrap(), 0.0);
        assert_eq!(p_wc_ce(&id, &prior).unwrap(), 0.0);
        assert_eq!(p_gi(&id, &e).unwrap(), 0.0);
    }

    #[test]
    fn constant_mechanism_metrics() {
        let (poi, prior) = collinear3();
        let z = PlanePoint::new(1.0, 0.0);
        let c = DiscreteMechanism::constant(poi, z);
        let e = DistanceFn::Euclidean;
        assert!((q_avg(&c, &prior, &e).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((p_ce(&c, &prior).unwrap() - prior.entropy()).abs() < 1e-12);
        assert!((p_wc_ce(&c, &prior).unwrap() - prior.entropy()).abs() < 1e-12);
        let ae = p_ae(&c, &prior, &e, &SearchSpace::Plane, &cfg()).unwrap();
        let wc = p_wc_ae(&c, &prior, &e, &SearchSpace::Plane, &cfg()).unwrap();
        assert_eq!(ae, wc);
        assert_eq!(p_gi(&c, &e).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_mechanism_p_ae_matches_grid_search() {
        // Brute-force oracle over a dense grid of estimates.
        let pts = vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(3.0, 0.5), PlanePoint::new(1.0, 2.5), PlanePoint::new(2.2, 1.1)];
        let poi = Arc::new(PoiSet::new(pts.clone()).unwrap());
        let prior = Prior::from_weights(poi.clone(), &[0.1, 0.4, 0.3, 0.2]).unwrap();
        let c = DiscreteMechanism::constant(poi, PlanePoint::new(9.0, 9.0));
        let ae = p_ae(&c, &prior, &DistanceFn::Euclidean, &SearchSpace::Plane, &cfg()).unwrap();
        let mut oracle = f64::INFINITY;
        for i in 0..=600 {
            for j in 0..=600 {
                let c = PlanePoint::new(i as f64 * 0.005, j as f64 * 0.005);
                let v: f64 = pts.iter().zip(prior.mass()).map(|(p, w)| w * p.dist(c)).sum();
                oracle = oracle.min(v);
            }
        }
        assert!(ae <= oracle + 1e-12);
        assert!((ae - oracle).abs() < 1e-3, "{ae} vs {oracle}");
    }

    #[test]
    fn adversary_estimates() {
        let (poi, _) = collinear3();
        let pts = poi.points();
        let point_mass = crate::model::posterior_from_joint(vec![0.0, 0.0, 1.0]).unwrap();
        let est = adversary_estimate(&point_mass, pts, &DistanceFn::Euclidean, &SearchSpace::Plane, &cfg()).unwrap();
        assert_eq!(est, pts[2]);

        let two = [PlanePoint::new(0.0, 0.0), PlanePoint::new(2.0, 4.0)];
        let sym = crate::model::posterior_from_joint(vec![0.5, 0.5]).unwrap();
        let est = adversary_estimate(&sym, &two, &DistanceFn::SquaredEuclidean, &SearchSpace::Plane, &cfg()).unwrap();
        assert_eq!(est, PlanePoint::new(1.0, 2.0));

        // Weighted median of (0.4, 0.3, 0.3) at 0, 1, 2 km: the grid oracle
        // minimum is at 1 km (value 0.7) versus 0.9 at 0 km.
        let post = crate::model::posterior_from_joint(vec![0.4, 0.3, 0.3]).unwrap();
        let mut oracle = (f64::INFINITY, 0.0);
        for i in 0..=2000 {
            let c = i as f64 * 0.001;
            let v = 0.4 * c + 0.3 * (c - 1.0).abs() + 0.3 * (c - 2.0).abs();
            if v < oracle.0 {
                oracle = (v, c);
            }
        }
        assert!((oracle.1 - 1.0).abs() < 1e-9);
        let est = adversary_estimate(&post, pts, &DistanceFn::Euclidean, &SearchSpace::Plane, &cfg()).unwrap();
        assert!(est.dist(pts[1]) < 1e-6, "{est}");
    }

    #[test]
    fn tag_estimate_picks_most_probable_class() {
        let pts: Vec<PlanePoint> = (0..4).map(|i| PlanePoint::new(i as f64, 0.0)).collect();
        let tags = ["Home", "Park", "Park", "Shop"].map(String::from).to_vec();
        let poi = PoiSet::with_tags(pts.clone(), tags).unwrap();
        let d = DistanceFn::TagHamming(Arc::new(poi.tag_table().unwrap()));
        let post = crate::model::posterior_from_joint(vec![0.4, 0.25, 0.25, 0.1]).unwrap();
        let est = adversary_estimate(&post, &pts, &d, &SearchSpace::candidates(&pts), &cfg()).unwrap();
        // Park carries 0.5 and is represented first by index 1.
        assert_eq!(est, pts[1]);
        assert!(adversary_estimate(&post, &pts, &d, &SearchSpace::Plane, &cfg()).is_err());
    }

    #[test]
    fn conditional_entropy_of_half_coin_by_enumeration() {
        // Coin with alpha = 0.5 on three uniform points, z* at the middle one.
        // Atoms: z = x0 from x0 (1/6); z = x2 from x2 (1/6); z = x1 from x1
        // with 1/3 and from x0, x2 with 1/6 each.
        let (poi, prior) = collinear3();
        let m = DiscreteMechanism::new(poi.clone(), poi.points().to_vec(), vec![0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.5])
            .unwrap();
        let joint = [[1.0 / 6.0, 1.0 / 6.0, 0.0], [0.0, 1.0 / 3.0, 0.0], [0.0, 1.0 / 6.0, 1.0 / 6.0]];
        let mut oracle = 0.0;
        for z in 0..3 {
            let pz: f64 = (0..3).map(|x| joint[x][z]).sum();
            for x in 0..3 {
                if joint[x][z] > 0.0 {
                    oracle -= joint[x][z] * (joint[x][z] / pz).log2();
                }
            }
        }
        assert!((p_ce(&m, &prior).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_plus_information_is_prior_entropy() {
        let (poi, prior) = collinear3();
        let m = DiscreteMechanism::from_row_weights(
            poi.clone(),
            poi.points().to_vec(),
            vec![5.0, 2.0, 1.0, 1.0, 3.0, 1.0, 0.5, 1.0, 4.0],
        )
        .unwrap();
        let total = p_ce(&m, &prior).unwrap() + mutual_information(&m, &prior).unwrap();
        assert!((total - prior.entropy()).abs() < 1e-9);
    }

    #[test]
    fn structural_zero_kills_geo_ind() {
        let (poi, _) = collinear3();
        let m = DiscreteMechanism::new(poi.clone(), poi.points().to_vec(), vec![0.5, 0.5, 0.0, 0.2, 0.4, 0.4, 0.3, 0.3, 0.4])
            .unwrap();
        assert_eq!(p_gi(&m, &DistanceFn::Euclidean).unwrap(), 0.0);
        let check = geo_ind_relaxed_check(&m, 1.0, 0.0, &DistanceFn::Euclidean).unwrap();
        assert!(!check.pass);
        assert_eq!(check.worst.unwrap().z, 2);
        assert!(geo_ind_relaxed_check(&m, 1.0, 1.0, &DistanceFn::Euclidean).unwrap().pass);
    }

    #[test]
    fn p_gi_of_two_by_two() {
        // Inputs 1 km apart, likelihood ratio 3 on both outputs.
        let poi = Arc::new(PoiSet::new(vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 0.0)]).unwrap());
        let m = DiscreteMechanism::new(poi.clone(), poi.points().to_vec(), vec![0.75, 0.25, 0.25, 0.75]).unwrap();
        let gi = p_gi(&m, &DistanceFn::Euclidean).unwrap();
        assert!((gi - 1.0 / 3f64.ln()).abs() < 1e-12);
        assert!(geo_ind_relaxed_check(&m, 3f64.ln(), 0.0, &DistanceFn::Euclidean).unwrap().pass);
        assert!(!geo_ind_relaxed_check(&m, 3f64.ln() * 0.99, 0.0, &DistanceFn::Euclidean).unwrap().pass);
    }

    #[test]
    fn two_output_symmetric_worst_case_error() {
        // Brute force: both outputs have the same posterior shape mirrored,
        // so the worst-case output error equals either output's error.
        let (poi, prior) = collinear3();
        let outs = vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(2.0, 0.0)];
        let m = DiscreteMechanism::new(poi, outs, vec![0.8, 0.2, 0.5, 0.5, 0.2, 0.8]).unwrap();
        let e = DistanceFn::Euclidean;
        // Column 0 joint = (0.8, 0.5, 0.2)/3: weighted median at x=1 km
        // (mass left of it 0.8 < 0.75 + ...); evaluate both data points.
        let col = [0.8 / 3.0, 0.5 / 3.0, 0.2 / 3.0];
        let at = |c: f64| col[0] * c.abs() + col[1] * (c - 1.0).abs() + col[2] * (c - 2.0).abs();
        let best = (0..=2000).map(|i| at(i as f64 * 0.001)).fold(f64::INFINITY, f64::min);
        let wc = p_wc_ae(&m, &prior, &e, &SearchSpace::Plane, &cfg()).unwrap();
        let ae = p_ae(&m, &prior, &e, &SearchSpace::Plane, &cfg()).unwrap();
        assert!((wc - best).abs() < 1e-6);
        assert!((ae - 2.0 * best).abs() < 1e-6);
    }

    #[test]
    fn provenance_round_trip() {
        let p = Provenance::MonteCarlo { samples: 5000, se_q_avg: 0.012, se_p_ae: 1e-3, se_p_ce: 0.25 };
        assert_eq!(p.to_string().parse::<Provenance>().unwrap(), p);
        assert_eq!("exact".parse::<Provenance>().unwrap(), Provenance::Exact);
    }
}
