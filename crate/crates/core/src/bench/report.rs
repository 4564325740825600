//! Sweep result CSV: a commented header with the spec hash and seed, then
//! `mechanism,param,q_avg,q_wc,p_ae,p_ce,p_gi,p_wc_ae,p_wc_ce,provenance`.
//! Failed rows leave the metric columns empty and carry `error(...)` as
//! provenance.

use std::io::{BufRead, Write};

use crate::error::{LppmError, Result};
use crate::metrics::{MetricReport, Provenance};

pub const CSV_HEADER: &str = "mechanism,param,q_avg,q_wc,p_ae,p_ce,p_gi,p_wc_ae,p_wc_ce,provenance";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mechanism: String,
    pub param: f64,
    pub outcome: std::result::Result<MetricReport, String>,
}

impl SweepRow {
    pub fn is_error(&self) -> bool {
        self.outcome.is_err()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepHeader {
    pub spec_sha256: String,
    pub seed: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn sanitize(msg: &str) -> String {
    msg.chars().map(|c| match c {
        ',' => ';',
        '\n' | '\r' => ' ',
        c => c,
    }).collect()
}

pub fn write_csv<W: Write>(header: &SweepHeader, rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "# spec_sha256={} seed={}", header.spec_sha256, header.seed)?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        if r.mechanism.contains([',', '\n']) {
            return Err(LppmError::InvalidInput(format!("mechanism name {:?} cannot be written to CSV", r.mechanism)));
        }
        match &r.outcome {
            Ok(m) => writeln!(
                w,
                "{},{:?},{:?},{:?},{:?},{:?},{},{},{},{}",
                r.mechanism,
                r.param,
                m.q_avg,
                m.q_wc,
                m.p_ae,
                m.p_ce,
                opt(m.p_gi),
                opt(m.p_wc_ae),
                opt(m.p_wc_ce),
                m.provenance
            )?,
            Err(e) => writeln!(w, "{},{:?},,,,,,,,error({})", r.mechanism, r.param, sanitize(e))?,
        }
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<(SweepHeader, Vec<SweepRow>)> {
    let mut header = None;
    let mut rows = Vec::new();
    let mut seen_columns = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let ln = i + 1;
        let perr = |msg: String| LppmError::Parse { line: ln, msg };
        if let Some(c) = line.strip_prefix('#') {
            let mut hash = None;
            let mut seed = None;
            for kv in c.split_whitespace() {
                match kv.split_once('=') {
                    Some(("spec_sha256", v)) => hash = Some(v.to_string()),
                    Some(("seed", v)) => seed = Some(v.parse().map_err(|_| perr(format!("bad seed {v:?}")))?),
                    _ => {}
                }
            }
            if let (Some(spec_sha256), Some(seed)) = (hash, seed) {
                header = Some(SweepHeader { spec_sha256, seed });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_columns {
            if line != CSV_HEADER {
                return Err(perr(format!("expected column header {CSV_HEADER:?}")));
            }
            seen_columns = true;
            continue;
        }
        let f: Vec<&str> = line.splitn(10, ',').collect();
        if f.len() != 10 {
            return Err(perr(format!("expected 10 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| perr(format!("bad number {s:?}")));
        let onum = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let param = num(f[1])?;
        let outcome = match f[9].strip_prefix("error(").and_then(|s| s.strip_suffix(')')) {
            Some(msg) => Err(msg.to_string()),
            None => Ok(MetricReport {
                q_avg: num(f[2])?,
                q_wc: num(f[3])?,
                p_ae: num(f[4])?,
                p_ce: num(f[5])?,
                p_gi: onum(f[6])?,
                p_wc_ae: onum(f[7])?,
                p_wc_ce: onum(f[8])?,
                provenance: f[9].parse::<Provenance>().map_err(|e| perr(e.to_string()))?,
            }),
        };
        rows.push(SweepRow { mechanism: f[0].to_string(), param, outcome });
    }
    let header = header.ok_or_else(|| LppmError::Parse { line: 1, msg: "missing `# spec_sha256=... seed=...` header".into() })?;
    if !seen_columns {
        return Err(LppmError::Parse { line: 2, msg: "missing column header".into() });
    }
    Ok((header, rows))
}
