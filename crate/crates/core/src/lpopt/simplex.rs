//! Dense two-phase primal simplex.
//!
//! Variables have a finite lower bound and an optional upper bound; upper
//! bounds become extra `<=` rows. Pricing is Dantzig's largest reduced cost,
//! switching to Bland's rule after a run of degenerate pivots. The final
//! basis is re-solved against the original data to shed pivoting drift.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{LppmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "<=" => Some(Sense::Le),
            "=" => Some(Sense::Eq),
            ">=" => Some(Sense::Ge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Objective,
    pub costs: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// `(lower, upper)` per variable; `lower` must be finite.
    pub bounds: Vec<(f64, f64)>,
    pub names: Vec<String>,
}

impl LinearProgram {
    /// An LP over `n` variables named `x0..`, all bounded below by zero.
    pub fn new(objective: Objective, costs: Vec<f64>) -> Self {
        let n = costs.len();
        Self {
            objective,
            costs,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
            names: (0..n).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn n_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { coeffs, sense, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.bounds.len() != n || self.names.len() != n {
            return Err(LppmError::InvalidInput("LP bounds or names have the wrong length".into()));
        }
        if self.costs.iter().any(|c| !c.is_finite()) {
            return Err(LppmError::InvalidInput("non-finite LP cost".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LppmError::InvalidInput(format!("LP row {i} has {} coefficients, expected {n}", c.coeffs.len())));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LppmError::InvalidInput(format!("LP row {i} is not finite")));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || hi < lo {
                return Err(LppmError::InvalidInput(format!("bad bounds ({lo}, {hi}) on variable {j}")));
            }
        }
        Ok(())
    }

    /// Plain-text dump: a header, the objective row, one line per variable
    /// bound and one per constraint (`sense rhs : coefficients`).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lp {} {}", self.n_vars(), self.n_rows())?;
        let sense = match self.objective {
            Objective::Maximize => "max",
            Objective::Minimize => "min",
        };
        writeln!(w, "{sense} {}", join(&self.costs))?;
        for (name, &(lo, hi)) in self.names.iter().zip(&self.bounds) {
            writeln!(w, "var {name} {lo} {hi}")?;
        }
        for c in &self.constraints {
            writeln!(w, "row {} {} : {}", c.sense.symbol(), c.rhs, join(&c.coeffs))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let perr = |line: usize, msg: &str| LppmError::Parse { line, msg: msg.to_string() };
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() || l.starts_with('#') => None,
            other => Some((i + 1, other)),
        });
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i, l?)),
                None => Err(perr(0, &format!("unexpected end of input, expected {what}"))),
            }
        };
        let (ln, header) = next("header")?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 || h[0] != "lp" {
            return Err(perr(ln, "expected `lp <n_vars> <n_rows>`"));
        }
        let n: usize = h[1].parse().map_err(|_| perr(ln, "bad variable count"))?;
        let m: usize = h[2].parse().map_err(|_| perr(ln, "bad row count"))?;

        let (ln, obj) = next("objective")?;
        let mut it = obj.split_whitespace();
        let objective = match it.next() {
            Some("max") => Objective::Maximize,
            Some("min") => Objective::Minimize,
            _ => return Err(perr(ln, "expected `max` or `min`")),
        };
        let costs = parse_floats(it, ln)?;
        if costs.len() != n {
            return Err(perr(ln, "objective length differs from variable count"));
        }
        let mut lp = LinearProgram::new(objective, costs);
        for j in 0..n {
            let (ln, v) = next("variable")?;
            let f: Vec<&str> = v.split_whitespace().collect();
            if f.len() != 4 || f[0] != "var" {
                return Err(perr(ln, "expected `var <name> <lower> <upper>`"));
            }
            lp.names[j] = f[1].to_string();
            let lo = parse_float(f[2], ln)?;
            let hi = parse_float(f[3], ln)?;
            lp.bounds[j] = (lo, hi);
        }
        for _ in 0..m {
            let (ln, row) = next("constraint")?;
            let (head, body) = row.split_once(':').ok_or_else(|| perr(ln, "missing `:`"))?;
            let hf: Vec<&str> = head.split_whitespace().collect();
            if hf.len() != 3 || hf[0] != "row" {
                return Err(perr(ln, "expected `row <sense> <rhs> :`"));
            }
            let sense = Sense::parse(hf[1]).ok_or_else(|| perr(ln, "bad sense"))?;
            let rhs = parse_float(hf[2], ln)?;
            let coeffs = parse_floats(body.split_whitespace(), ln)?;
            if coeffs.len() != n {
                return Err(perr(ln, "row length differs from variable count"));
            }
            lp.add(coeffs, sense, rhs);
        }
        if let Ok((ln, _)) = next("") {
            return Err(perr(ln, "trailing content"));
        }
        lp.validate()?;
        Ok(lp)
    }
}

fn join(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 4);
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{x}").expect("writing to a String cannot fail");
    }
    s
}

fn parse_float(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| LppmError::Parse { line, msg: format!("bad number `{s}`") })
}

fn parse_floats<'a>(it: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<f64>> {
    it.map(|s| parse_float(s, line)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl LpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "stopped at the iteration limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    /// Most negative reduced cost, with Bland's rule after degenerate stalls.
    Dantzig,
    /// Bland's rule throughout.
    Bland,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    pub pricing: Pricing,
    /// Priority order of variables for pricing and tie-breaking; a
    /// permutation of `0..n_vars`. Slacks follow in row order.
    pub column_order: Option<Vec<usize>>,
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before Dantzig pricing yields to Bland.
    pub degenerate_limit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { pricing: Pricing::Dantzig, column_order: None, max_iterations: 200_000, degenerate_limit: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Per structural variable, `y^T A_j - c_j` in maximisation form;
    /// non-negative at an optimum.
    pub reduced_costs: Vec<f64>,
    /// Largest violation of a constraint or bound by `x`.
    pub max_residual: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn require_optimal(&self) -> Result<()> {
        match self.status {
            LpStatus::Optimal => Ok(()),
            s => Err(LppmError::LpStatus(s.as_str())),
        }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

/// Standard form `A x = b`, `x >= 0`, `b >= 0`, maximise `c x`.
struct Standard {
    m: usize,
    n_struct: usize,
    /// Structural, then slack/surplus, then artificial columns.
    n_cols: usize,
    n_art_start: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    initial_basis: Vec<usize>,
    shift: Vec<f64>,
}

fn standardise(lp: &LinearProgram) -> Standard {
    let n = lp.n_vars();
    let sign = match lp.objective {
        Objective::Maximize => 1.0,
        Objective::Minimize => -1.0,
    };
    let shift: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    // Rows: constraints, then finite upper bounds.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            let off: f64 = c.coeffs.iter().zip(&shift).map(|(a, s)| a * s).sum();
            (c.coeffs.clone(), c.sense, c.rhs - off)
        })
        .collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            rows.push((r, Sense::Le, hi - lo));
        }
    }
    for r in rows.iter_mut() {
        if r.2 < 0.0 {
            r.0.iter_mut().for_each(|v| *v = -*v);
            r.2 = -r.2;
            r.1 = match r.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let n_art_start = n + n_slack;
    let n_cols = n_art_start + n_art;
    let mut a = vec![0.0; m * n_cols];
    let mut b = vec![0.0; m];
    let mut basis = vec![0; m];
    let (mut s, mut t) = (n, n_art_start);
    for (i, (coeffs, sense, rhs)) in rows.into_iter().enumerate() {
        a[i * n_cols..i * n_cols + n].copy_from_slice(&coeffs);
        b[i] = rhs;
        match sense {
            Sense::Le => {
                a[i * n_cols + s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Sense::Ge => {
                a[i * n_cols + s] = -1.0;
                s += 1;
                a[i * n_cols + t] = 1.0;
                basis[i] = t;
                t += 1;
            }
            Sense::Eq => {
                a[i * n_cols + t] = 1.0;
                basis[i] = t;
                t += 1;
            }
        }
    }
    let mut c = vec![0.0; n_cols];
    for j in 0..n {
        c[j] = sign * lp.costs[j];
    }
    Standard { m, n_struct: n, n_cols, n_art_start, a, b, c, initial_basis: basis, shift }
}

struct Tableau {
    m: usize,
    w: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Standard-form row each tableau row came from.
    origin: Vec<usize>,
    /// Column priority rank for pricing and ties.
    rank: Vec<usize>,
    active: Vec<bool>,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.w + self.w - 1]
    }

    fn set_objective(&mut self, c: &[f64]) {
        let w = self.w;
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..w - 1 {
            self.obj[j] = -c[j];
        }
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                for (o, &v) in self.obj.iter_mut().zip(row) {
                    *o += cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.w;
        let p = self.t[r * w + col];
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        prow.iter_mut().for_each(|v| *v /= p);
        prow[col] = 1.0;
        let elim = |row: &mut [f64]| {
            let f = row[col];
            if f != 0.0 {
                for (v, &q) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * q;
                }
                row[col] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(elim);
        after.chunks_mut(w).for_each(elim);
        elim(&mut self.obj);
        self.basis[r] = col;
    }

    fn run(&mut self, opts: &SimplexOptions, iterations: &mut usize) -> Outcome {
        let ncol = self.w - 1;
        let mut degenerate_run = 0usize;
        loop {
            if *iterations >= opts.max_iterations {
                return Outcome::IterationLimit;
            }
            let bland = opts.pricing == Pricing::Bland || degenerate_run >= opts.degenerate_limit;
            let mut enter: Option<usize> = None;
            for j in 0..ncol {
                if !self.active[j] || self.obj[j] >= -COST_TOL {
                    continue;
                }
                enter = match enter {
                    None => Some(j),
                    Some(e) if bland => Some(if self.rank[j] < self.rank[e] { j } else { e }),
                    Some(e) => {
                        let (dj, de) = (self.obj[j], self.obj[e]);
                        Some(if dj < de || (dj == de && self.rank[j] < self.rank[e]) { j } else { e })
                    }
                };
            }
            let Some(col) = enter else { return Outcome::Optimal };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i * self.w + col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((l, lr)) => {
                            if ratio < lr || (ratio == lr && self.rank[self.basis[i]] < self.rank[self.basis[l]]) {
                                Some((i, ratio))
                            } else {
                                Some((l, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else { return Outcome::Unbounded };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
            *iterations += 1;
        }
    }
}

/// Solves `B u = v` by Gaussian elimination with partial pivoting, where
/// `B` is `k x k` row-major. Returns `None` if `B` is numerically singular.
fn dense_solve(mut bm: Vec<f64>, mut v: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    for col in 0..k {
        let p = (col..k).max_by(|&a, &b| bm[a * k + col].abs().total_cmp(&bm[b * k + col].abs()))?;
        if bm[p * k + col].abs() < 1e-12 {
            return None;
        }
        if p != col {
            for j in 0..k {
                bm.swap(p * k + j, col * k + j);
            }
            v.swap(p, col);
        }
        let d = bm[col * k + col];
        for i in col + 1..k {
            let f = bm[i * k + col] / d;
            if f != 0.0 {
                for j in col..k {
                    bm[i * k + j] -= f * bm[col * k + j];
                }
                v[i] -= f * v[col];
            }
        }
    }
    let mut u = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| bm[i * k + j] * u[j]).sum();
        u[i] = (v[i] - s) / bm[i * k + i];
    }
    Some(u)
}

/// Solves `lp`. Malformed programs are errors; infeasible or unbounded ones
/// are reported through [`LpSolution::status`].
pub fn simplex_solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution> {
    lp.validate()?;
    let sf = standardise(lp);
    let (m, w) = (sf.m, sf.n_cols + 1);
    let mut rank: Vec<usize> = (0..sf.n_cols).collect();
    if let Some(order) = &opts.column_order {
        let mut seen = vec![false; sf.n_struct];
        if order.len() != sf.n_struct || order.iter().any(|&j| j >= sf.n_struct || std::mem::replace(&mut seen[j], true)) {
            return Err(LppmError::InvalidInput("column order is not a permutation of the variables".into()));
        }
        for (pos, &j) in order.iter().enumerate() {
            rank[j] = pos;
        }
    }
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        t[i * w..i * w + sf.n_cols].copy_from_slice(&sf.a[i * sf.n_cols..(i + 1) * sf.n_cols]);
        t[i * w + w - 1] = sf.b[i];
    }
    let mut tab = Tableau {
        m,
        w,
        t,
        obj: vec![0.0; w],
        basis: sf.initial_basis.clone(),
        origin: (0..m).collect(),
        rank,
        active: vec![true; sf.n_cols],
    };
    let mut iterations = 0;
    let infeasible = |iterations| LpSolution {
        status: LpStatus::Infeasible,
        objective: f64::NAN,
        x: Vec::new(),
        reduced_costs: Vec::new(),
        max_residual: f64::NAN,
        iterations,
    };

    // Phase 1: maximise minus the sum of artificials.
    if sf.n_art_start < sf.n_cols {
        let mut c1 = vec![0.0; sf.n_cols];
        c1[sf.n_art_start..].iter_mut().for_each(|v| *v = -1.0);
        tab.set_objective(&c1);
        match tab.run(opts, &mut iterations) {
            Outcome::Optimal => {}
            Outcome::IterationLimit => return Ok(LpSolution { status: LpStatus::IterationLimit, ..infeasible(iterations) }),
            Outcome::Unbounded => return Err(LppmError::Numerical("phase one reported unbounded".into())),
        }
        let scale = 1.0 + sf.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if -tab.obj[w - 1] > FEAS_TOL * scale {
            return Ok(infeasible(iterations));
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.m {
            if tab.basis[i] >= sf.n_art_start {
                let row = &tab.t[i * w..(i + 1) * w];
                let j = (0..sf.n_art_start).filter(|&j| row[j].abs() > PIVOT_TOL).max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
                match j {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.t.drain(i * w..(i + 1) * w);
                        tab.basis.remove(i);
                        tab.origin.remove(i);
                        tab.m -= 1;
                        continue;
                    }
                }
            }
            i += 1;
        }
        for j in sf.n_art_start..sf.n_cols {
            tab.active[j] = false;
        }
    }

    tab.set_objective(&sf.c);
    let outcome = tab.run(opts, &mut iterations);
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };

    // Basic solution from the tableau, then refined against the original rows.
    let mut xs = vec![0.0; sf.n_cols];
    for i in 0..tab.m {
        xs[tab.basis[i]] = tab.rhs(i);
    }
    let mut reduced: Vec<f64> = tab.obj[..sf.n_struct].to_vec();
    if status == LpStatus::Optimal {
        let rows = tab.origin.clone();
        let k = tab.m;
        {
            let mut bm = vec![0.0; k * k];
            for (r, &oi) in rows.iter().enumerate() {
                for (cidx, &bj) in tab.basis.iter().enumerate() {
                    bm[r * k + cidx] = sf.a[oi * sf.n_cols + bj];
                }
            }
            let rhs: Vec<f64> = rows.iter().map(|&oi| sf.b[oi]).collect();
            if let Some(xb) = dense_solve(bm.clone(), rhs, k) {
                if xb.iter().all(|&v| v >= -FEAS_TOL) {
                    xs.iter_mut().for_each(|v| *v = 0.0);
                    for (cidx, &bj) in tab.basis.iter().enumerate() {
                        xs[bj] = xb[cidx].max(0.0);
                    }
                }
            }
            // Duals: B^T y = c_B.
            let mut bt = vec![0.0; k * k];
            for r in 0..k {
                for cidx in 0..k {
                    bt[cidx * k + r] = bm[r * k + cidx];
                }
            }
            let cb: Vec<f64> = tab.basis.iter().map(|&j| sf.c[j]).collect();
            if let Some(y) = dense_solve(bt, cb, k) {
                for (j, rc) in reduced.iter_mut().enumerate() {
                    let ya: f64 = rows.iter().zip(&y).map(|(&oi, yi)| yi * sf.a[oi * sf.n_cols + j]).sum();
                    *rc = ya - sf.c[j];
                }
            }
        }
    }

    let x: Vec<f64> = (0..sf.n_struct).map(|j| xs[j] + sf.shift[j]).collect();
    let objective: f64 = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { status, objective, max_residual: residual(lp, &x), x, reduced_costs: reduced, iterations })
}

fn residual(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for c in &lp.constraints {
        let ax: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let viol = match c.sense {
            Sense::Le => ax - c.rhs,
            Sense::Ge => c.rhs - ax,
            Sense::Eq => (ax - c.rhs).abs(),
        };
        worst = worst.max(viol);
    }
    for (&v, &(lo, hi)) in x.iter().zip(&lp.bounds) {
        worst = worst.max(lo - v).max(v - hi);
    }
    worst.max(0.0)
}
