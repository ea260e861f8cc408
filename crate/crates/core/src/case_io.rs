//! Case files and solution documents.
//!
//! Both are JSON. Unknown keys are rejected. Infinite bounds are written as
//! the strings `"inf"` and `"-inf"`; complex numbers as `[re, im]`. Numbers
//! are written in shortest round-trip form, so loading a saved document
//! reproduces every value bit for bit.
//!
//! # Case schema
//!
//! ```text
//! {
//!   "format_version": "1",
//!   "base_mva": 100.0,
//!   "slack": 1,
//!   "length_ratio": 1.0,                 optional, default 1
//!   "buses": [{
//!     "id": 1,                           integer ≥ 1
//!     "p_min": "-inf", "p_max": "inf",   optional, default unbounded
//!     "q_min": "-inf", "q_max": "inf",
//!     "v_min": 0.81, "v_max": 1.21,      squared magnitude, required, > 0
//!     "p_set": 0.0, "q_set": 0.0         optional scheduled injection
//!   }],
//!   "lines": [{
//!     "from": 1, "to": 2,
//!     "r": 0.05, "x": 0.1,               series impedance z = r + ix
//!     "g_shunt_from": 0.0, "b_shunt_from": 0.02,   optional, default 0
//!     "g_shunt_to": 0.0, "b_shunt_to": 0.02,
//!     "charging_b": 0.04,                optional total charging, split b/2
//!                                        per end; excludes b_shunt_*
//!     "i_sq_max": "inf"                  optional squared current limit
//!   }]
//! }
//! ```
//!
//! `p_set`/`q_set` are the injections used by power flow; the slack entry
//! is ignored there.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bfm::BranchFlowPoint;
use crate::bim::PhasorSolution;
use crate::network::{Bus, BusId, ComplexValue, End, LineParams, Network, NetworkError};
use crate::opf::SocpSolution;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum CaseIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CaseIoError + '_ {
    move |source| CaseIoError::Io { path: path.to_path_buf(), source }
}

fn parse_err(e: serde_json::Error) -> CaseIoError {
    CaseIoError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// `f64` that may be written as `"inf"` / `"-inf"`.
mod bound {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("expected a number, \"inf\" or \"-inf\", got {other:?}"))),
            },
        }
    }
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}
fn one() -> f64 {
    1.0
}
fn is_zero(v: &f64) -> bool {
    *v == 0.0
}
fn is_one(v: &f64) -> bool {
    *v == 1.0
}
fn is_pos_inf(v: &f64) -> bool {
    *v == f64::INFINITY
}
fn is_neg_inf(v: &f64) -> bool {
    *v == f64::NEG_INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: BusId,
    #[serde(with = "bound", default = "neg_inf", skip_serializing_if = "is_neg_inf")]
    pub p_min: f64,
    #[serde(with = "bound", default = "pos_inf", skip_serializing_if = "is_pos_inf")]
    pub p_max: f64,
    #[serde(with = "bound", default = "neg_inf", skip_serializing_if = "is_neg_inf")]
    pub q_min: f64,
    #[serde(with = "bound", default = "pos_inf", skip_serializing_if = "is_pos_inf")]
    pub q_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub p_set: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub q_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub g_shunt_from: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b_shunt_from: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub g_shunt_to: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b_shunt_to: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charging_b: Option<f64>,
    #[serde(with = "bound", default = "pos_inf", skip_serializing_if = "is_pos_inf")]
    pub i_sq_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDocument {
    pub format_version: String,
    pub base_mva: f64,
    pub slack: BusId,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub length_ratio: f64,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

/// A loaded case: the network plus the data that is not part of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub network: Network,
    /// Scheduled injection per bus index.
    pub injection: Vec<ComplexValue>,
    pub base_mva: f64,
    /// Line length relative to one mile, used by the approximation
    /// diagnostics.
    pub length_ratio: f64,
}

impl Case {
    pub fn new(network: Network, injection: Vec<ComplexValue>) -> Self {
        Self { network, injection, base_mva: 100.0, length_ratio: 1.0 }
    }
}

fn finite(name: &str, v: f64) -> Result<(), CaseIoError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CaseIoError::SchemaViolation(format!("{name} must be finite, got {v}")))
    }
}

impl CaseDocument {
    pub fn into_case(self) -> Result<Case, CaseIoError> {
        let bad = |m: String| Err(CaseIoError::SchemaViolation(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("unsupported format_version {:?}", self.format_version));
        }
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return bad(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if !(self.length_ratio > 0.0 && self.length_ratio.is_finite()) {
            return bad(format!("length_ratio must be positive, got {}", self.length_ratio));
        }
        let mut buses = Vec::with_capacity(self.buses.len());
        let mut injection = Vec::with_capacity(self.buses.len());
        for b in &self.buses {
            if b.id == 0 {
                return bad("bus ids start at 1".into());
            }
            for (name, v) in [("v_min", b.v_min), ("v_max", b.v_max), ("p_set", b.p_set), ("q_set", b.q_set)] {
                finite(&format!("bus {} {name}", b.id), v)?;
            }
            if !(b.v_min > 0.0) {
                return bad(format!("bus {}: v_min must be positive, got {}", b.id, b.v_min));
            }
            if [b.p_min, b.p_max, b.q_min, b.q_max].iter().any(|v| v.is_nan()) {
                return bad(format!("bus {}: NaN bound", b.id));
            }
            buses.push(Bus {
                id: b.id,
                p_min: b.p_min,
                p_max: b.p_max,
                q_min: b.q_min,
                q_max: b.q_max,
                v_min: b.v_min,
                v_max: b.v_max,
            });
            injection.push(ComplexValue::new(b.p_set, b.q_set));
        }
        let mut lines = Vec::with_capacity(self.lines.len());
        for (l, rec) in self.lines.iter().enumerate() {
            for (name, v) in [
                ("r", rec.r),
                ("x", rec.x),
                ("g_shunt_from", rec.g_shunt_from),
                ("b_shunt_from", rec.b_shunt_from),
                ("g_shunt_to", rec.g_shunt_to),
                ("b_shunt_to", rec.b_shunt_to),
            ] {
                finite(&format!("line {l} {name}"), v)?;
            }
            if !(rec.i_sq_max >= 0.0) {
                return bad(format!("line {l}: i_sq_max must be nonnegative"));
            }
            let (b_from, b_to) = match rec.charging_b {
                Some(b) => {
                    finite(&format!("line {l} charging_b"), b)?;
                    if rec.b_shunt_from != 0.0 || rec.b_shunt_to != 0.0 {
                        return bad(format!("line {l}: charging_b excludes b_shunt_from/b_shunt_to"));
                    }
                    (b / 2.0, b / 2.0)
                }
                None => (rec.b_shunt_from, rec.b_shunt_to),
            };
            let z = ComplexValue::new(rec.r, rec.x);
            if z.norm() == 0.0 {
                return Err(NetworkError::ZeroSeriesAdmittance { line: l }.into());
            }
            let mut line = LineParams::from_impedance(rec.from, rec.to, z).with_shunts(
                ComplexValue::new(rec.g_shunt_from, b_from),
                ComplexValue::new(rec.g_shunt_to, b_to),
            );
            line.current_sq_limit = rec.i_sq_max;
            lines.push(line);
        }
        let network = Network::build(buses, lines, self.slack)?;
        Ok(Case { network, injection, base_mva: self.base_mva, length_ratio: self.length_ratio })
    }

    pub fn from_case(case: &Case) -> Self {
        let net = &case.network;
        let buses = net
            .buses()
            .iter()
            .zip(&case.injection)
            .map(|(b, s)| BusRecord {
                id: b.id,
                p_min: b.p_min,
                p_max: b.p_max,
                q_min: b.q_min,
                q_max: b.q_max,
                v_min: b.v_min,
                v_max: b.v_max,
                p_set: s.re,
                q_set: s.im,
            })
            .collect();
        let lines = net
            .lines()
            .iter()
            .map(|line| {
                let z = line.z_series();
                LineRecord {
                    from: line.from_bus,
                    to: line.to_bus,
                    r: z.re,
                    x: z.im,
                    g_shunt_from: line.y_shunt_from.re,
                    b_shunt_from: line.y_shunt_from.im,
                    g_shunt_to: line.y_shunt_to.re,
                    b_shunt_to: line.y_shunt_to.im,
                    charging_b: None,
                    i_sq_max: line.current_sq_limit,
                }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION.into(),
            base_mva: case.base_mva,
            slack: net.buses()[net.slack()].id,
            length_ratio: case.length_ratio,
            buses,
            lines,
        }
    }
}

pub fn parse_case(text: &str) -> Result<Case, CaseIoError> {
    let doc: CaseDocument = serde_json::from_str(text).map_err(parse_err)?;
    doc.into_case()
}

pub fn load_case(path: impl AsRef<Path>) -> Result<Case, CaseIoError> {
    let path = path.as_ref();
    parse_case(&fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn case_to_string(case: &Case) -> String {
    let mut s = serde_json::to_string_pretty(&CaseDocument::from_case(case)).expect("case serializes");
    s.push('\n');
    s
}

pub fn save_case(case: &Case, path: impl AsRef<Path>) -> Result<(), CaseIoError> {
    let path = path.as_ref();
    fs::write(path, case_to_string(case)).map_err(io_err(path))
}

/// A saved solution of one of the three kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolutionDocument {
    Phasor { format_version: String, solution: PhasorSolution },
    BranchFlow { format_version: String, point: BranchFlowPoint },
    Socp { format_version: String, solution: SocpSolution },
}

impl SolutionDocument {
    pub fn phasor(solution: PhasorSolution) -> Self {
        Self::Phasor { format_version: FORMAT_VERSION.into(), solution }
    }
    pub fn branch_flow(point: BranchFlowPoint) -> Self {
        Self::BranchFlow { format_version: FORMAT_VERSION.into(), point }
    }
    pub fn socp(solution: SocpSolution) -> Self {
        Self::Socp { format_version: FORMAT_VERSION.into(), solution }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Phasor { .. } => "phasor",
            Self::BranchFlow { .. } => "branch_flow",
            Self::Socp { .. } => "socp",
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("solution serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CaseIoError> {
        let doc: Self = serde_json::from_str(text).map_err(parse_err)?;
        let version = match &doc {
            Self::Phasor { format_version, .. }
            | Self::BranchFlow { format_version, .. }
            | Self::Socp { format_version, .. } => format_version,
        };
        if version != FORMAT_VERSION {
            return Err(CaseIoError::SchemaViolation(format!("unsupported format_version {version:?}")));
        }
        Ok(doc)
    }
}

pub fn save_solution(doc: &SolutionDocument, path: impl AsRef<Path>) -> Result<(), CaseIoError> {
    let path = path.as_ref();
    fs::write(path, doc.to_json()).map_err(io_err(path))
}

pub fn load_solution(path: impl AsRef<Path>) -> Result<SolutionDocument, CaseIoError> {
    let path = path.as_ref();
    SolutionDocument::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
}

/// Flat table with string cells, written as CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CaseIoError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| CaseIoError::Csv(e.into()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CaseIoError> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(io_err(path))?;
        self.write_csv(file)
    }
}

fn end_label(end: End) -> &'static str {
    if end.forward {
        "from"
    } else {
        "to"
    }
}

pub fn phasor_bus_table(net: &Network, x: &PhasorSolution) -> Table {
    let mut t = Table::new(&["bus", "v_re", "v_im", "v_mag", "v_angle_rad", "p", "q"]);
    for (j, bus) in net.buses().iter().enumerate() {
        let v = x.voltage[j];
        t.push(vec![
            bus.id.to_string(),
            fmt_f64(v.re),
            fmt_f64(v.im),
            fmt_f64(v.norm()),
            fmt_f64(v.arg()),
            fmt_f64(x.injection[j].re),
            fmt_f64(x.injection[j].im),
        ]);
    }
    t
}

pub fn phasor_end_table(net: &Network, x: &PhasorSolution) -> Table {
    let mut t = Table::new(&["line", "end", "bus", "other", "i_re", "i_im", "p", "q"]);
    for end in net.all_ends() {
        let e = net.end_view(end);
        let i = end.index(net.num_lines());
        t.push(vec![
            end.line.to_string(),
            end_label(end).into(),
            net.buses()[e.bus].id.to_string(),
            net.buses()[e.other].id.to_string(),
            fmt_f64(x.current[i].re),
            fmt_f64(x.current[i].im),
            fmt_f64(x.power[i].re),
            fmt_f64(x.power[i].im),
        ]);
    }
    t
}

pub fn point_bus_table(net: &Network, x: &BranchFlowPoint) -> Table {
    let mut t = Table::new(&["bus", "p", "q", "v"]);
    for (j, bus) in net.buses().iter().enumerate() {
        t.push(vec![
            bus.id.to_string(),
            fmt_f64(x.injection[j].re),
            fmt_f64(x.injection[j].im),
            fmt_f64(x.v[j]),
        ]);
    }
    t
}

pub fn point_end_table(net: &Network, x: &BranchFlowPoint) -> Table {
    let gaps = x.conic_gaps(net);
    let mut t = Table::new(&["line", "end", "bus", "other", "ell", "p", "q", "gap"]);
    for end in net.all_ends() {
        let e = net.end_view(end);
        let i = end.index(net.num_lines());
        t.push(vec![
            end.line.to_string(),
            end_label(end).into(),
            net.buses()[e.bus].id.to_string(),
            net.buses()[e.other].id.to_string(),
            fmt_f64(x.ell[i]),
            fmt_f64(x.power[i].re),
            fmt_f64(x.power[i].im),
            fmt_f64(gaps[i]),
        ]);
    }
    t
}
