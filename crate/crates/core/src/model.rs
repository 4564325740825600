//! Probabilistic objects shared by every mechanism and metric: the POI set,
//! the prior over it, discrete mechanism matrices, the continuous sampler
//! contract, posteriors and output marginals.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::RngCore;

use crate::error::{LppmError, Result};
use crate::geo::{PlanePoint, TagTable};

/// Row sums of a mechanism must be within this distance of 1.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Negative round-off no larger than this is clamped to zero.
pub const NEGATIVE_CLAMP_TOL: f64 = 1e-12;
/// Probabilities below this are treated as zero inside logarithms.
pub const PROB_FLOOR: f64 = 1e-15;

/// The finite set of input locations. Index order is the canonical order of
/// every matrix built over it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiSet {
    points: Vec<PlanePoint>,
    tags: Option<Vec<String>>,
}

impl PoiSet {
    pub fn new(points: Vec<PlanePoint>) -> Result<Self> {
        Self::build(points, None)
    }

    pub fn with_tags(points: Vec<PlanePoint>, tags: Vec<String>) -> Result<Self> {
        if tags.len() != points.len() {
            return Err(LppmError::InvalidInput(format!(
                "{} tags for {} points",
                tags.len(),
                points.len()
            )));
        }
        Self::build(points, Some(tags))
    }

    fn build(points: Vec<PlanePoint>, tags: Option<Vec<String>>) -> Result<Self> {
        if points.is_empty() {
            return Err(LppmError::InvalidInput("empty POI set".into()));
        }
        let mut seen = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(LppmError::InvalidInput(format!("non-finite POI {i}: {p}")));
            }
            if let Some(j) = seen.insert(p.key(), i) {
                return Err(LppmError::InvalidInput(format!(
                    "POIs {j} and {i} share coordinates {p}"
                )));
            }
        }
        Ok(Self { points, tags })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PlanePoint] {
        &self.points
    }

    pub fn tags(&self) -> Option<&[String]> {
        self.tags.as_deref()
    }

    pub fn tag_table(&self) -> Option<TagTable> {
        let tags = self.tags.as_ref()?;
        Some(TagTable::new(self.points.iter().copied().zip(tags.iter().map(String::as_str))))
    }
}

/// Probability mass over a [`PoiSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    poi: Arc<PoiSet>,
    mass: Vec<f64>,
}

impl Prior {
    pub fn new(poi: Arc<PoiSet>, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != poi.len() {
            return Err(LppmError::DomainMismatch(format!(
                "{} masses for {} POIs",
                mass.len(),
                poi.len()
            )));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(LppmError::InvalidInput("prior masses must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LppmError::InvalidInput(format!("prior sums to {total}, not 1")));
        }
        Ok(Self { poi, mass })
    }

    /// Normalises non-negative weights (e.g. check-in counts) into a prior.
    pub fn from_weights(poi: Arc<PoiSet>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(LppmError::InvalidInput("prior weights must have a positive finite sum".into()));
        }
        let mass = weights.iter().map(|w| w / total).collect();
        Self::new(poi, mass)
    }

    pub fn uniform(poi: Arc<PoiSet>) -> Self {
        let n = poi.len();
        Self { poi, mass: vec![1.0 / n as f64; n] }
    }

    pub fn poi(&self) -> &Arc<PoiSet> {
        &self.poi
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.mass)
    }
}

/// `-sum p log2 p`, with `0 log 0 = 0` and sub-floor masses ignored.
pub fn entropy_bits(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > PROB_FLOOR)
        .map(|&v| -v * v.log2())
        .sum();
    h.max(0.0)
}

/// Row-stochastic matrix `f[z|x]` from a POI set to a finite output list.
#[derive(Clone, PartialEq)]
pub struct DiscreteMechanism {
    inputs: Arc<PoiSet>,
    outputs: Vec<PlanePoint>,
    matrix: Vec<f64>,
}

// Matrices get large; show the shape and the first entries only.
impl fmt::Debug for DiscreteMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = &self.matrix[..self.matrix.len().min(8)];
        f.debug_struct("DiscreteMechanism")
            .field("inputs", &self.n_inputs())
            .field("outputs", &self.n_outputs())
            .field("head", &head)
            .finish_non_exhaustive()
    }
}

impl DiscreteMechanism {
    /// Validates and stores a row-major `|inputs| x |outputs|` matrix.
    /// Negative round-off within [`NEGATIVE_CLAMP_TOL`] is clamped to zero.
    pub fn new(inputs: Arc<PoiSet>, outputs: Vec<PlanePoint>, mut matrix: Vec<f64>) -> Result<Self> {
        let diagnostics = validate_matrix(inputs.len(), outputs.len(), &matrix);
        if let Some(d) = diagnostics.iter().find(|d| d.is_violation()) {
            return Err(LppmError::InvalidInput(format!("invalid mechanism: {d}")));
        }
        if outputs.iter().any(|p| !p.is_finite()) {
            return Err(LppmError::InvalidInput("non-finite output location".into()));
        }
        for v in matrix.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self { inputs, outputs, matrix })
    }

    /// Builds a mechanism from non-negative row weights, normalising each row.
    pub fn from_row_weights(inputs: Arc<PoiSet>, outputs: Vec<PlanePoint>, mut weights: Vec<f64>) -> Result<Self> {
        let n_out = outputs.len();
        if n_out == 0 || weights.len() != inputs.len() * n_out {
            return Err(LppmError::InvalidInput("weight matrix has the wrong shape".into()));
        }
        for (x, row) in weights.chunks_mut(n_out).enumerate() {
            let s: f64 = row.iter().sum();
            if !(s > 0.0) || !s.is_finite() {
                return Err(LppmError::Numerical(format!("row {x} has no positive weight")));
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Self::new(inputs, outputs, weights)
    }

    pub fn identity(inputs: Arc<PoiSet>) -> Self {
        let n = inputs.len();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        let outputs = inputs.points().to_vec();
        Self { inputs, outputs, matrix }
    }

    /// Always reports `z`.
    pub fn constant(inputs: Arc<PoiSet>, z: PlanePoint) -> Self {
        let matrix = vec![1.0; inputs.len()];
        Self { inputs, outputs: vec![z], matrix }
    }

    pub fn inputs(&self) -> &Arc<PoiSet> {
        &self.inputs
    }

    pub fn outputs(&self) -> &[PlanePoint] {
        &self.outputs
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    #[inline]
    pub fn get(&self, x: usize, z: usize) -> f64 {
        self.matrix[x * self.outputs.len() + z]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.outputs.len();
        &self.matrix[x * n..(x + 1) * n]
    }

    /// Entries `f[z|x]` for fixed `z`, in input order.
    pub fn column(&self, z: usize) -> Vec<f64> {
        (0..self.n_inputs()).map(|x| self.get(x, z)).collect()
    }

    /// Prior-weighted column `pi(x) f[z|x]`, the unnormalised posterior of `z`.
    pub fn joint_column(&self, prior: &Prior, z: usize) -> Vec<f64> {
        prior.mass().iter().enumerate().map(|(x, &p)| p * self.get(x, z)).collect()
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_matrix(self.n_inputs(), self.n_outputs(), &self.matrix)
    }

    /// Convex combination `lambda * self + (1 - lambda) * other` over the
    /// union of both output lists.
    pub fn mix(&self, other: &DiscreteMechanism, lambda: f64) -> Result<DiscreteMechanism> {
        if !same_poi(&self.inputs, &other.inputs) {
            return Err(LppmError::DomainMismatch("mixing mechanisms over different inputs".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(LppmError::InvalidInput(format!("mixing weight {lambda} outside [0, 1]")));
        }
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut outputs = Vec::new();
        for p in self.outputs.iter().chain(other.outputs.iter()) {
            index.entry(p.key()).or_insert_with(|| {
                outputs.push(*p);
                outputs.len() - 1
            });
        }
        let n_out = outputs.len();
        let mut matrix = vec![0.0; self.n_inputs() * n_out];
        for (m, w) in [(self, lambda), (other, 1.0 - lambda)] {
            for x in 0..m.n_inputs() {
                for (z, p) in m.outputs.iter().enumerate() {
                    matrix[x * n_out + index[&p.key()]] += w * m.get(x, z);
                }
            }
        }
        DiscreteMechanism::new(self.inputs.clone(), outputs, matrix)
    }

    /// Writes the matrix as `input_id,output_id,prob` rows (zeros omitted).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "input_id,output_id,prob")?;
        for x in 0..self.n_inputs() {
            for (z, &p) in self.row(x).iter().enumerate() {
                if p != 0.0 {
                    writeln!(w, "{x},{z},{p}")?;
                }
            }
        }
        Ok(())
    }

    /// Reads a matrix written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(inputs: Arc<PoiSet>, outputs: Vec<PlanePoint>, r: R) -> Result<Self> {
        let n_out = outputs.len();
        let mut matrix = vec![0.0; inputs.len() * n_out];
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "input_id,output_id,prob" {
                    return Err(LppmError::Parse { line: 1, msg: "missing header".into() });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: &str| LppmError::Parse { line: i + 1, msg: msg.to_owned() };
            let mut fields = line.split(',');
            let x: usize = fields.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("bad input_id"))?;
            let z: usize = fields.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("bad output_id"))?;
            let p: f64 = fields.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("bad prob"))?;
            if x >= inputs.len() || z >= n_out {
                return Err(parse_err("index out of range"));
            }
            matrix[x * n_out + z] = p;
        }
        Self::new(inputs, outputs, matrix)
    }
}

pub(crate) fn same_poi(a: &Arc<PoiSet>, b: &Arc<PoiSet>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn ensure_domain(m: &DiscreteMechanism, prior: &Prior) -> Result<()> {
    if same_poi(m.inputs(), prior.poi()) {
        Ok(())
    } else {
        Err(LppmError::DomainMismatch("mechanism inputs differ from the prior's POI set".into()))
    }
}

/// One finding of [`validate_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    Shape { expected: usize, found: usize },
    NotFinite { input: usize, output: usize },
    Negative { input: usize, output: usize, value: f64 },
    /// Negative round-off small enough to be clamped to zero.
    ClampedToZero { input: usize, output: usize, value: f64 },
    RowSum { input: usize, sum: f64 },
}

impl Diagnostic {
    pub fn is_violation(&self) -> bool {
        !matches!(self, Diagnostic::ClampedToZero { .. })
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Shape { expected, found } => write!(f, "expected {expected} entries, found {found}"),
            Diagnostic::NotFinite { input, output } => write!(f, "entry ({input}, {output}) is not finite"),
            Diagnostic::Negative { input, output, value } => write!(f, "entry ({input}, {output}) = {value} is negative"),
            Diagnostic::ClampedToZero { input, output, value } => {
                write!(f, "entry ({input}, {output}) = {value:e} clamped to zero")
            }
            Diagnostic::RowSum { input, sum } => write!(f, "row {input} sums to {sum}"),
        }
    }
}

/// Reports shape errors, non-finite or negative entries and row-sum drift.
pub fn validate_matrix(n_inputs: usize, n_outputs: usize, matrix: &[f64]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if matrix.len() != n_inputs * n_outputs || n_outputs == 0 {
        out.push(Diagnostic::Shape { expected: n_inputs * n_outputs, found: matrix.len() });
        return out;
    }
    for (x, row) in matrix.chunks(n_outputs).enumerate() {
        let mut sum = 0.0;
        for (z, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                out.push(Diagnostic::NotFinite { input: x, output: z });
            } else if v < -NEGATIVE_CLAMP_TOL {
                out.push(Diagnostic::Negative { input: x, output: z, value: v });
            } else if v < 0.0 {
                out.push(Diagnostic::ClampedToZero { input: x, output: z, value: v });
            }
            sum += v;
        }
        if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
            out.push(Diagnostic::RowSum { input: x, sum });
        }
    }
    out
}

/// Posterior `p(x|z)` over the POI set for one observed output.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    mass: Vec<f64>,
}

impl Posterior {
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.mass)
    }
}

/// Bayes' rule: `p(x|z) = pi(x) f(z|x) / sum_x' pi(x') f(z|x')`.
pub fn posterior(prior: &Prior, likelihood: &[f64]) -> Result<Posterior> {
    if likelihood.len() != prior.len() {
        return Err(LppmError::DomainMismatch(format!(
            "{} likelihood values for {} POIs",
            likelihood.len(),
            prior.len()
        )));
    }
    let joint: Vec<f64> = prior.mass().iter().zip(likelihood).map(|(p, l)| p * l).collect();
    posterior_from_joint(joint)
}

pub(crate) fn posterior_from_joint(mut joint: Vec<f64>) -> Result<Posterior> {
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(LppmError::ImpossibleObservation);
    }
    joint.iter_mut().for_each(|v| *v /= total);
    Ok(Posterior { mass: joint })
}

/// `P_Z(z) = sum_x pi(x) f[z|x]`.
pub fn output_marginal(m: &DiscreteMechanism, prior: &Prior) -> Result<Vec<f64>> {
    ensure_domain(m, prior)?;
    let mut pz = vec![0.0; m.n_outputs()];
    for (x, &p) in prior.mass().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (acc, &f) in pz.iter_mut().zip(m.row(x)) {
            *acc += p * f;
        }
    }
    Ok(pz)
}

/// Applies a deterministic remap to every output of `m`. Outputs sent to the
/// same target are merged by summing their columns; targets keep the order
/// of their first occurrence.
pub fn compose(m: &DiscreteMechanism, targets: &[PlanePoint]) -> Result<DiscreteMechanism> {
    if targets.len() != m.n_outputs() {
        return Err(LppmError::InvalidInput(format!(
            "{} remap targets for {} outputs",
            targets.len(),
            m.n_outputs()
        )));
    }
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut outputs = Vec::new();
    let column_target: Vec<usize> = targets
        .iter()
        .map(|t| {
            *index.entry(t.key()).or_insert_with(|| {
                outputs.push(*t);
                outputs.len() - 1
            })
        })
        .collect();
    let n_out = outputs.len();
    let mut matrix = vec![0.0; m.n_inputs() * n_out];
    for x in 0..m.n_inputs() {
        for (z, &f) in m.row(x).iter().enumerate() {
            matrix[x * n_out + column_target[z]] += f;
        }
    }
    DiscreteMechanism::new(m.inputs().clone(), outputs, matrix)
}

/// Continuous mechanism: draws outputs and evaluates its density `f(z|x)`.
pub trait NoiseSampler: Send + Sync {
    fn name(&self) -> &str;

    fn draw(&self, x: PlanePoint, rng: &mut dyn RngCore) -> Result<PlanePoint>;

    /// Planar density of reporting `z` from `x`, in km^-2.
    fn density(&self, z: PlanePoint, x: PlanePoint) -> f64;

    /// Probability that the displacement radius is at most `r`.
    fn radial_cdf(&self, r: f64) -> f64;

    /// Largest possible displacement, `None` when unbounded.
    fn support_radius(&self) -> Option<f64>;

    /// Geo-indistinguishability level known analytically, if any.
    fn geo_ind_epsilon(&self) -> Option<f64> {
        None
    }

    /// Displacement radius below which [`radial_cdf`](Self::radial_cdf)
    /// reaches `1 - tail`; used to bound posterior computations.
    fn effective_radius(&self, tail: f64) -> f64 {
        if let Some(r) = self.support_radius() {
            return r;
        }
        let mut hi = 1.0;
        while 1.0 - self.radial_cdf(hi) > tail && hi < 1e7 {
            hi *= 2.0;
        }
        hi
    }
}
