//! Python bindings: POI priors, discrete mechanisms, the mechanism
//! builders, remapping, metrics and experiment sweeps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lppm_core::bench::{self, ExperimentSpec, McSettings, RemapMode, SweepHeader};
use lppm_core::geo::DistanceFn;
use lppm_core::ingest;
use lppm_core::lpopt::shokri::{solve_shokri, ShokriInstance};
use lppm_core::lpopt::simplex::SimplexOptions;
use lppm_core::mechanisms::{self as mech, BaOptions, BaParams, SamplerParams};
use lppm_core::metrics::{self, EvalSettings};
use lppm_core::model::{self, PoiSet};
use lppm_core::remap::{self, SearchSpace, WeiszfeldConfig};
use lppm_core::{LppmError, PlanePoint};

fn err(e: LppmError) -> PyErr {
    match e {
        LppmError::Io(e) => PyIOError::new_err(e.to_string()),
        LppmError::InvalidInput(_)
        | LppmError::DomainMismatch(_)
        | LppmError::MetricDomain { .. }
        | LppmError::Parse { .. }
        | LppmError::Config(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_points(p: &[(f64, f64)]) -> Vec<PlanePoint> {
    p.iter().map(|&(x, y)| PlanePoint::new(x, y)).collect()
}

fn pairs(p: &[PlanePoint]) -> Vec<(f64, f64)> {
    p.iter().map(|p| (p.x, p.y)).collect()
}

fn distance(name: &str, prior: &Prior) -> PyResult<DistanceFn> {
    Ok(match name {
        "euclidean" => DistanceFn::Euclidean,
        "squared-euclidean" => DistanceFn::SquaredEuclidean,
        "tag-hamming" => DistanceFn::TagHamming(Arc::new(
            prior.inner.poi().tag_table().ok_or_else(|| PyValueError::new_err("tag-hamming needs tagged POIs"))?,
        )),
        _ => return Err(PyValueError::new_err(format!("unknown distance {name:?}"))),
    })
}

fn sampler(kind: &str, param: f64) -> PyResult<SamplerParams> {
    Ok(match kind {
        "laplace" => SamplerParams::Laplace { epsilon: param },
        "gaussian" => SamplerParams::Gaussian { mean_radius: param },
        "circular" => SamplerParams::Circular { max_radius: param },
        _ => return Err(PyValueError::new_err(format!("unknown sampler {kind:?}"))),
    })
}

/// POI set with a probability mass on each point.
#[pyclass(module = "lppm", frozen)]
struct Prior {
    inner: model::Prior,
}

#[pymethods]
impl Prior {
    /// Weights are normalised; they default to uniform.
    #[new]
    #[pyo3(signature = (points, weights=None, tags=None))]
    fn new(points: Vec<(f64, f64)>, weights: Option<Vec<f64>>, tags: Option<Vec<String>>) -> PyResult<Self> {
        let pts = to_points(&points);
        let poi = match tags {
            Some(t) => PoiSet::with_tags(pts, t),
            None => PoiSet::new(pts),
        }
        .map_err(err)?;
        let poi = Arc::new(poi);
        let inner = match weights {
            Some(w) => model::Prior::from_weights(poi, &w).map_err(err)?,
            None => model::Prior::uniform(poi),
        };
        Ok(Self { inner })
    }

    /// Reads a POI CSV (`id,x_km,y_km,tag,prior_mass`).
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ingest::read_poi_csv_path(&path).map_err(err)? })
    }

    /// Square grid scenario with `side * side` POIs.
    #[staticmethod]
    #[pyo3(signature = (side=5, cell_km=1.0, tags=None))]
    fn grid(side: usize, cell_km: f64, tags: Option<Vec<String>>) -> PyResult<Self> {
        Ok(Self { inner: ingest::build_grid_scenario(side, cell_km, tags.as_deref()).map_err(err)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let mut w = BufWriter::new(File::create(path)?);
        ingest::write_poi_csv(&self.inner, &mut w).map_err(err)?;
        w.flush()?;
        Ok(())
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64)> {
        pairs(self.inner.poi().points())
    }

    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.inner.mass().to_vec()
    }

    #[getter]
    fn tags(&self) -> Option<Vec<String>> {
        self.inner.poi().tags().map(|t| t.to_vec())
    }

    /// Shannon entropy in bits.
    fn entropy(&self) -> f64 {
        self.inner.entropy()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Prior({} POIs, entropy {:.3} bits)", self.inner.len(), self.inner.entropy())
    }
}

/// Row-stochastic matrix from the prior's POIs to a finite output set.
#[pyclass(module = "lppm", frozen)]
struct Mechanism {
    inner: model::DiscreteMechanism,
}

#[pymethods]
impl Mechanism {
    /// Rows are normalised.
    #[new]
    fn new(prior: &Prior, outputs: Vec<(f64, f64)>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let k = outputs.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(PyValueError::new_err(format!("every row needs {k} entries")));
        }
        let w = rows.into_iter().flatten().collect();
        let inner = model::DiscreteMechanism::from_row_weights(prior.inner.poi().clone(), to_points(&outputs), w).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity(prior: &Prior) -> Self {
        Self { inner: model::DiscreteMechanism::identity(prior.inner.poi().clone()) }
    }

    /// Reads `input_id,output_id,prob` triples.
    #[staticmethod]
    fn read_csv(prior: &Prior, outputs: Vec<(f64, f64)>, path: PathBuf) -> PyResult<Self> {
        let r = BufReader::new(File::open(path)?);
        let inner = model::DiscreteMechanism::read_csv(prior.inner.poi().clone(), to_points(&outputs), r).map_err(err)?;
        Ok(Self { inner })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.inner.write_csv(&mut w).map_err(err)?;
        w.flush()?;
        Ok(())
    }

    #[getter]
    fn outputs(&self) -> Vec<(f64, f64)> {
        pairs(self.inner.outputs())
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_inputs(), self.inner.n_outputs())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.matrix().chunks(self.inner.n_outputs()).map(|r| r.to_vec()).collect()
    }

    fn get(&self, x: usize, z: usize) -> PyResult<f64> {
        if x >= self.inner.n_inputs() || z >= self.inner.n_outputs() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(x, z))
    }

    /// `lam * self + (1 - lam) * other`.
    fn mix(&self, other: &Mechanism, lam: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.mix(&other.inner, lam).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Mechanism({} inputs, {} outputs)", self.inner.n_inputs(), self.inner.n_outputs())
    }
}

#[pyclass(module = "lppm", frozen, get_all)]
struct MetricReport {
    q_avg: f64,
    q_wc: f64,
    p_ae: f64,
    p_ce: f64,
    p_gi: Option<f64>,
    p_wc_ae: Option<f64>,
    p_wc_ce: Option<f64>,
    provenance: String,
}

impl From<metrics::MetricReport> for MetricReport {
    fn from(r: metrics::MetricReport) -> Self {
        Self {
            q_avg: r.q_avg,
            q_wc: r.q_wc,
            p_ae: r.p_ae,
            p_ce: r.p_ce,
            p_gi: r.p_gi,
            p_wc_ae: r.p_wc_ae,
            p_wc_ce: r.p_wc_ce,
            provenance: r.provenance.to_string(),
        }
    }
}

#[pymethods]
impl MetricReport {
    fn __repr__(&self) -> String {
        format!(
            "MetricReport(q_avg={}, q_wc={}, p_ae={}, p_ce={}, p_gi={:?}, {})",
            self.q_avg, self.q_wc, self.p_ae, self.p_ce, self.p_gi, self.provenance
        )
    }
}

/// Exact metrics of a discrete mechanism.
#[pyfunction]
#[pyo3(signature = (m, prior, dq="euclidean", dp="euclidean"))]
fn evaluate(m: &Mechanism, prior: &Prior, dq: &str, dp: &str) -> PyResult<MetricReport> {
    let dp = distance(dp, prior)?;
    // Tags exist only at POIs, so the semantic adversary guesses among them.
    let space = match dp {
        DistanceFn::TagHamming(_) => SearchSpace::candidates(prior.inner.poi().points()),
        _ => SearchSpace::Plane,
    };
    let s = EvalSettings { dq: distance(dq, prior)?, gi_metric: Some(dp.clone()), dp, space, ..Default::default() };
    Ok(metrics::evaluate(&m.inner, &prior.inner, &s).map_err(err)?.into())
}

/// Monte Carlo metrics of a continuous sampler, optimally remapped.
#[pyfunction]
#[pyo3(signature = (kind, param, prior, samples=5000, seed=0, q_max=None))]
fn mc_evaluate(kind: &str, param: f64, prior: &Prior, samples: usize, seed: u64, q_max: Option<f64>) -> PyResult<MetricReport> {
    let mut s = sampler(kind, param)?.build().map_err(err)?;
    let remap = match q_max {
        Some(q) => {
            s = Arc::new(mech::truncate(s, q).map_err(err)?);
            RemapMode::Constrained(q)
        }
        None => RemapMode::Optimal,
    };
    let cfg = McSettings { samples, remap, ..Default::default() };
    Ok(bench::mc_evaluate_seeded(&*s, &prior.inner, &cfg, seed, 0).map_err(err)?.into())
}

/// Geo-indistinguishability level `1/epsilon` (km), 0 when there is none.
#[pyfunction]
#[pyo3(signature = (m, prior, dp="euclidean"))]
fn p_gi(m: &Mechanism, prior: &Prior, dp: &str) -> PyResult<f64> {
    metrics::p_gi(&m.inner, &distance(dp, prior)?).map_err(err)
}

/// Sampler density evaluated on `outputs`, rows normalised.
#[pyfunction]
fn discretize(kind: &str, param: f64, prior: &Prior, outputs: Vec<(f64, f64)>) -> PyResult<Mechanism> {
    let s = sampler(kind, param)?.build().map_err(err)?;
    Ok(Mechanism { inner: mech::discretize(&*s, prior.inner.poi().clone(), to_points(&outputs)).map_err(err)? })
}

/// Optimal coin mechanism with average loss `q`.
#[pyfunction]
fn coin(prior: &Prior, q: f64) -> PyResult<Mechanism> {
    let (m, _) = mech::build_coin(&prior.inner, &DistanceFn::Euclidean, q, &SearchSpace::Plane, &WeiszfeldConfig::default())
        .map_err(err)?;
    Ok(Mechanism { inner: m })
}

#[pyfunction]
fn exponential(prior: &Prior, outputs: Vec<(f64, f64)>, b: f64) -> PyResult<Mechanism> {
    let m = mech::build_exponential(prior.inner.poi().clone(), to_points(&outputs), &DistanceFn::Euclidean, b).map_err(err)?;
    Ok(Mechanism { inner: m })
}

/// Blahut-Arimoto mechanism; returns `(raw, remapped, iterations)`.
#[pyfunction]
#[pyo3(signature = (prior, outputs, b, q_max=None, threshold=1e-9, max_iterations=100_000))]
fn ba(
    prior: &Prior,
    outputs: Vec<(f64, f64)>,
    b: f64,
    q_max: Option<f64>,
    threshold: f64,
    max_iterations: usize,
) -> PyResult<(Mechanism, Mechanism, usize)> {
    let params = BaParams { convergence_threshold: threshold, max_iterations, ..BaParams::new(b) };
    let opts = BaOptions { q_max, ..Default::default() };
    let out = mech::build_ba(&prior.inner, &to_points(&outputs), &DistanceFn::Euclidean, &params, &opts).map_err(err)?;
    Ok((Mechanism { inner: out.raw }, Mechanism { inner: out.remapped }, out.iterations))
}

/// Privacy-optimal mechanism from the linear program, with outputs on the
/// POIs; returns `(mechanism, expected adversary error)`.
#[pyfunction]
#[pyo3(signature = (prior, q_budget, q_max=None, dp="euclidean"))]
fn shokri(prior: &Prior, q_budget: f64, q_max: Option<f64>, dp: &str) -> PyResult<(Mechanism, f64)> {
    let mut inst = ShokriInstance::new(prior.inner.clone(), distance(dp, prior)?, DistanceFn::Euclidean, q_budget).map_err(err)?;
    inst.q_max = q_max;
    let (m, sol) = solve_shokri(&inst, &SimplexOptions::default()).map_err(err)?;
    Ok((Mechanism { inner: m }, sol.objective))
}

/// Composes `m` with the loss-minimising remap, or the worst-case
/// constrained one when `q_max` is given.
#[pyfunction]
#[pyo3(signature = (m, prior, q_max=None))]
fn optimal_remap(m: &Mechanism, prior: &Prior, q_max: Option<f64>) -> PyResult<Mechanism> {
    let cfg = WeiszfeldConfig::default();
    let e = DistanceFn::Euclidean;
    let inner = match q_max {
        None => remap::optimal_remap(&m.inner, &prior.inner, &e, &cfg).map_err(err)?,
        Some(q) => {
            let (m, plan) = remap::constrained_remap(&m.inner, &prior.inner, &e, q, &cfg).map_err(err)?;
            if !plan.all_feasible() {
                return Err(PyValueError::new_err(format!("some output has no remap target within {q} km")));
            }
            m
        }
    };
    Ok(Mechanism { inner })
}

/// Weighted geometric median.
#[pyfunction]
fn geometric_median(pts: Vec<(f64, f64)>, weights: Vec<f64>) -> PyResult<(f64, f64)> {
    let p = remap::geometric_median(&to_points(&pts), &weights, &WeiszfeldConfig::default()).map_err(err)?;
    Ok((p.x, p.y))
}

/// Builds a prior from SNAP check-ins inside `lat0,lat1,lon0,lon1`.
#[pyfunction]
#[pyo3(signature = (dataset, region, distinct_users=false))]
fn ingest_checkins(dataset: PathBuf, region: &str, distinct_users: bool) -> PyResult<Prior> {
    let region = ingest::Region::parse(region).map_err(err)?;
    let mode = if distinct_users { ingest::CountMode::DistinctUsers } else { ingest::CountMode::Events };
    let mut b = ingest::PriorBuilder::new(region, mode);
    ingest::for_each_checkin(ingest::open_checkins(&dataset).map_err(err)?, |r| b.add(&r)).map_err(err)?;
    Ok(Prior { inner: b.finish(region.center()).map_err(err)?.prior })
}

/// Runs the sweep described by a TOML spec. Returns one
/// `(mechanism, param, report or error message)` tuple per row and writes
/// the CSV when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, out=None, seed=None))]
fn run_sweep(py: Python<'_>, config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<Vec<(String, f64, Py<PyAny>)>> {
    let (mut spec, hash): (ExperimentSpec, String) = ExperimentSpec::load(&config).map_err(err)?;
    if let Some(s) = seed {
        spec.experiment.seed = s;
    }
    let rows = bench::run_sweep(&spec).map_err(err)?;
    if let Some(out) = out {
        let mut w = BufWriter::new(File::create(out)?);
        bench::write_csv(&SweepHeader { spec_sha256: hash, seed: spec.experiment.seed }, &rows, &mut w).map_err(err)?;
        w.flush()?;
    }
    rows.into_iter()
        .map(|r| {
            let v = match r.outcome {
                Ok(m) => Py::new(py, MetricReport::from(m))?.into_any(),
                Err(e) => e.into_pyobject(py)?.into_any().unbind(),
            };
            Ok((r.mechanism, r.param, v))
        })
        .collect()
}

#[pymodule]
fn lppm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Prior>()?;
    m.add_class::<Mechanism>()?;
    m.add_class::<MetricReport>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mc_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(p_gi, m)?)?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(coin, m)?)?;
    m.add_function(wrap_pyfunction!(exponential, m)?)?;
    m.add_function(wrap_pyfunction!(ba, m)?)?;
    m.add_function(wrap_pyfunction!(shokri, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_remap, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_median, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_checkins, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
