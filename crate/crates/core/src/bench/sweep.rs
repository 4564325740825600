//! Runs every (mechanism, parameter) row of an experiment spec.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bench::config::{distance_fn, ExperimentSpec, MechanismKind, RemapKind, ScenarioKind};
use crate::bench::montecarlo::{mc_evaluate_seeded, McSettings, RemapMode};
use crate::bench::report::SweepRow;
use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::ingest::{build_grid_scenario, read_poi_csv_path};
use crate::lpopt::{solve_shokri, ShokriInstance, SimplexOptions};
use crate::mechanisms::{
    build_ba, build_coin, build_exponential, discretize, truncate, truncate_discrete, BaOptions, BaParams, SamplerParams,
};
use crate::metrics::{evaluate, EvalSettings, MetricReport};
use crate::model::{DiscreteMechanism, NoiseSampler, PoiSet, Prior};
use crate::remap::{constrained_remap_in, optimal_remap_in, SearchSpace, WeiszfeldConfig};

/// Inputs shared by every row of a sweep.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub prior: Prior,
    /// Output alphabet of discrete mechanisms.
    pub outputs: Vec<PlanePoint>,
    pub dq: DistanceFn,
    pub dp: DistanceFn,
    pub space: SearchSpace,
}

/// Keeps the `k` highest-mass POIs (ties by position) and renormalises.
pub fn top_pois(prior: &Prior, k: usize) -> Result<Prior> {
    if k >= prior.len() {
        return Ok(prior.clone());
    }
    let mass = prior.mass();
    let mut idx: Vec<usize> = (0..prior.len()).collect();
    idx.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    let poi = prior.poi();
    let points = idx.iter().map(|&i| poi.points()[i]).collect();
    let set = match poi.tags() {
        Some(t) => PoiSet::with_tags(points, idx.iter().map(|&i| t[i].clone()).collect())?,
        None => PoiSet::new(points)?,
    };
    let w: Vec<f64> = idx.iter().map(|&i| mass[i]).collect();
    Prior::from_weights(Arc::new(set), &w)
}

/// Regular grid with spacing `step` covering the bounding box of `points`.
pub fn covering_grid(points: &[PlanePoint], step: f64) -> Result<Vec<PlanePoint>> {
    if !(step > 0.0) || points.is_empty() {
        return Err(LppmError::InvalidInput("covering grid needs points and a positive step".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let nx = ((x1 - x0) / step).ceil() as usize + 1;
    let ny = ((y1 - y0) / step).ceil() as usize + 1;
    if nx.saturating_mul(ny) > 1_000_000 {
        return Err(LppmError::InvalidInput(format!("output grid of {nx}x{ny} cells is too large")));
    }
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push(PlanePoint::new(x0 + i as f64 * step, y0 + j as f64 * step));
        }
    }
    Ok(out)
}

pub fn prepare_scenario(spec: &ExperimentSpec) -> Result<Scenario> {
    let e = &spec.experiment;
    match e.scenario {
        ScenarioKind::Dataset => {
            let path = e.poi.as_ref().ok_or_else(|| LppmError::Config("the dataset scenario needs `poi`".into()))?;
            let mut prior = read_poi_csv_path(path)?;
            if let Some(k) = e.max_pois {
                prior = top_pois(&prior, k)?;
            }
            let outputs = match e.output_grid_km {
                Some(step) => covering_grid(prior.poi().points(), step)?,
                None => prior.poi().points().to_vec(),
            };
            let tags = prior.poi().tag_table();
            Ok(Scenario {
                kind: e.scenario,
                dq: distance_fn(e.dq, None)?,
                dp: distance_fn(e.dp, tags)?,
                prior,
                outputs,
                space: SearchSpace::Plane,
            })
        }
        ScenarioKind::Grid => {
            let prior = build_grid_scenario(e.grid_side, e.cell_km, e.tags.as_deref())?;
            let outputs = prior.poi().points().to_vec();
            let tags = prior.poi().tag_table();
            Ok(Scenario {
                kind: e.scenario,
                dq: distance_fn(e.dq, None)?,
                dp: distance_fn(e.dp, tags)?,
                space: SearchSpace::candidates(&outputs),
                prior,
                outputs,
            })
        }
    }
}

fn sampler(kind: MechanismKind, param: f64) -> Result<Arc<dyn NoiseSampler>> {
    match kind {
        MechanismKind::Laplace => SamplerParams::Laplace { epsilon: param }.build(),
        MechanismKind::Gaussian => SamplerParams::Gaussian { mean_radius: param }.build(),
        MechanismKind::Circular => SamplerParams::Circular { max_radius: param }.build(),
        k => Err(LppmError::InvalidInput(format!("{} is not a noise sampler", k.name()))),
    }
}

struct RowContext<'a> {
    spec: &'a ExperimentSpec,
    sc: &'a Scenario,
    eval: EvalSettings,
    weiszfeld: WeiszfeldConfig,
}

impl RowContext<'_> {
    /// Applies the spec's remap to a discrete mechanism and evaluates it.
    fn remap_and_evaluate(&self, m: DiscreteMechanism) -> Result<MetricReport> {
        let sc = self.sc;
        let m = match (self.spec.experiment.remap, self.spec.experiment.q_max) {
            (RemapKind::None, _) => m,
            (RemapKind::Optimal, None) => optimal_remap_in(&m, &sc.prior, &sc.dq, &sc.space, &self.weiszfeld)?,
            (RemapKind::Optimal, Some(q)) => {
                let (r, plan) = constrained_remap_in(&m, &sc.prior, &sc.dq, q, &sc.space, &self.weiszfeld)?;
                if !plan.all_feasible() {
                    return Err(LppmError::Numerical(format!("some outputs have no remap target within {q} km")));
                }
                r
            }
        };
        evaluate(&m, &sc.prior, &self.eval)
    }

    fn run(&self, kind: MechanismKind, param: f64, row: u64) -> Result<MetricReport> {
        let e = &self.spec.experiment;
        let sc = self.sc;
        let inputs = sc.prior.poi().clone();
        match kind {
            MechanismKind::Laplace | MechanismKind::Gaussian | MechanismKind::Circular => {
                let base = sampler(kind, param)?;
                let s: Arc<dyn NoiseSampler> = match e.q_max {
                    Some(q) => Arc::new(truncate(base, q)?),
                    None => base,
                };
                match sc.kind {
                    ScenarioKind::Dataset => {
                        let cfg = McSettings {
                            samples: e.samples,
                            dq: sc.dq.clone(),
                            dp: sc.dp.clone(),
                            remap: match (e.remap, e.q_max) {
                                (RemapKind::None, _) => RemapMode::None,
                                (RemapKind::Optimal, None) => RemapMode::Optimal,
                                (RemapKind::Optimal, Some(q)) => RemapMode::Constrained(q),
                            },
                            space: sc.space.clone(),
                            weiszfeld: self.weiszfeld,
                            ..Default::default()
                        };
                        mc_evaluate_seeded(&*s, &sc.prior, &cfg, e.seed, row)
                    }
                    ScenarioKind::Grid => self.remap_and_evaluate(discretize(&*s, inputs, sc.outputs.clone())?),
                }
            }
            MechanismKind::Coin => {
                let (mut m, _) = build_coin(&sc.prior, &sc.dq, param, &sc.space, &self.weiszfeld)?;
                if let Some(q) = e.q_max {
                    m = truncate_discrete(&m, &sc.dq, q)?;
                }
                self.remap_and_evaluate(m)
            }
            MechanismKind::Exponential => {
                let mut m = build_exponential(inputs, sc.outputs.clone(), &sc.dq, param)?;
                if let Some(q) = e.q_max {
                    m = truncate_discrete(&m, &sc.dq, q)?;
                }
                self.remap_and_evaluate(m)
            }
            MechanismKind::Ba => {
                let opts = BaOptions { q_max: e.q_max, space: sc.space.clone(), weiszfeld: self.weiszfeld, ..Default::default() };
                let out = build_ba(&sc.prior, &sc.outputs, &sc.dq, &BaParams::new(param), &opts)?;
                let m = if e.remap == RemapKind::None { out.raw } else { out.remapped };
                evaluate(&m, &sc.prior, &self.eval)
            }
            MechanismKind::Shokri => {
                let mut inst = ShokriInstance::new(sc.prior.clone(), sc.dp.clone(), sc.dq.clone(), param)?;
                inst.q_max = e.q_max;
                let (m, _) = solve_shokri(&inst, &SimplexOptions::default())?;
                evaluate(&m, &sc.prior, &self.eval)
            }
        }
    }
}

fn mask(spec: &ExperimentSpec, mut r: MetricReport) -> MetricReport {
    if !spec.wants("p_gi") {
        r.p_gi = None;
    }
    if !spec.wants("p_wc_ae") {
        r.p_wc_ae = None;
    }
    if !spec.wants("p_wc_ce") {
        r.p_wc_ce = None;
    }
    r
}

/// The (mechanism, parameter) pairs of `spec`, in row order.
pub fn sweep_rows(spec: &ExperimentSpec) -> Result<Vec<(MechanismKind, f64)>> {
    let mut rows = Vec::new();
    for m in &spec.mechanisms {
        rows.extend(m.parameters()?.into_iter().map(|p| (m.kind, p)));
    }
    Ok(rows)
}

/// Evaluates every row of `spec`. Row `i` draws its randomness from stream
/// `i` of the experiment seed, so results do not depend on scheduling.
/// Rows that fail are reported as errors; only setup failures abort.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let sc = prepare_scenario(spec)?;
    run_sweep_on(spec, &sc)
}

pub fn run_sweep_on(spec: &ExperimentSpec, sc: &Scenario) -> Result<Vec<SweepRow>> {
    let ctx = RowContext {
        spec,
        sc,
        eval: EvalSettings {
            dq: sc.dq.clone(),
            dp: sc.dp.clone(),
            space: sc.space.clone(),
            weiszfeld: WeiszfeldConfig::default(),
            gi_metric: spec.wants("p_gi").then_some(DistanceFn::Euclidean),
        },
        weiszfeld: WeiszfeldConfig::default(),
    };
    let rows = sweep_rows(spec)?;
    Ok(rows
        .par_iter()
        .enumerate()
        .map(|(i, &(kind, param))| {
            let outcome = ctx.run(kind, param, i as u64).map(|r| mask(spec, r)).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("{} {param}: {e}", kind.name());
            }
            SweepRow { mechanism: kind.name().to_string(), param, outcome }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::report::{write_csv, SweepHeader};

    const GRID_SPEC: &str = r#"
[experiment]
scenario = "grid"
seed = 4
q_max = 1.5

[[mechanism]]
kind = "laplace"
values = [0.5, 2.0]

[[mechanism]]
kind = "coin"
values = [0.3, 0.6]

[[mechanism]]
kind = "exponential"
values = [1.0]

[[mechanism]]
kind = "ba"
values = [2.0]

[[mechanism]]
kind = "shokri"
values = [0.5]
"#;

    #[test]
    fn grid_sweep_respects_bound() {
        let spec = ExperimentSpec::parse(GRID_SPEC).unwrap();
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 7);
        for r in &rows {
            let m = r.outcome.as_ref().unwrap_or_else(|e| panic!("{} {}: {e}", r.mechanism, r.param));
            assert!(m.q_wc <= 1.5 + 1e-9, "{} {}: {}", r.mechanism, r.param, m.q_wc);
        }
    }

    #[test]
    fn csv_is_reproducible() {
        let spec = ExperimentSpec::parse(GRID_SPEC).unwrap();
        let header = SweepHeader { spec_sha256: crate::bench::config::spec_hash(GRID_SPEC), seed: 4 };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&header, &run_sweep(&spec).unwrap(), &mut a).unwrap();
        write_csv(&header, &run_sweep(&spec).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn top_pois_keeps_heaviest() {
        let poi = Arc::new(PoiSet::new((0..4).map(|i| PlanePoint::new(i as f64, 0.0)).collect()).unwrap());
        let p = Prior::from_weights(poi, &[1.0, 4.0, 2.0, 4.0]).unwrap();
        let t = top_pois(&p, 2).unwrap();
        assert_eq!(t.poi().points(), &[PlanePoint::new(1.0, 0.0), PlanePoint::new(3.0, 0.0)]);
        assert_eq!(t.mass(), &[0.5, 0.5]);
    }

    #[test]
    fn covering_grid_spans_bbox() {
        let g = covering_grid(&[PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 0.5)], 0.5).unwrap();
        assert_eq!(g.len(), 3 * 2);
        assert!(g.contains(&PlanePoint::new(1.0, 0.5)));
    }
}
