//! Network data model: buses, Π-circuit lines with terminal shunts, and the
//! derived graph structure (orientation, incidence matrix, spanning tree and
//! fundamental cycles).
//!
//! Lines are oriented in input order, `from_bus → to_bus`. Quantities that
//! exist per directed line end are stored in vectors of length `2L`: entry
//! `e` is the end at `from_bus` of line `e`, entry `L + e` the end at
//! `to_bus`. See [`End`].

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Complex per-unit scalar.
pub type ComplexValue = Complex64;

/// External bus identifier as it appears in case files.
pub type BusId = u32;

/// Default ratio `|yᵐ/yˢ|` above which a line shunt is reported as atypical.
pub const DEFAULT_SHUNT_ADVISORY: f64 = 1e-2;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no buses")]
    Empty,
    #[error("duplicate bus id {0}")]
    DuplicateBusId(BusId),
    #[error("slack bus {0} is not in the bus list")]
    UnknownSlack(BusId),
    #[error("line {line} references unknown bus {bus}")]
    DanglingEndpoint { line: usize, bus: BusId },
    #[error("line {line} connects bus {bus} to itself")]
    SelfLoop { line: usize, bus: BusId },
    #[error("line {line} has zero series admittance")]
    ZeroSeriesAdmittance { line: usize },
    #[error("line {line} has a non-finite parameter")]
    NonFiniteLine { line: usize },
    #[error("bus {bus}: {reason}")]
    InvalidBounds { bus: BusId, reason: String },
    #[error("network is disconnected: buses {unreachable:?} cannot be reached from the slack")]
    DisconnectedGraph { unreachable: Vec<BusId> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Squared voltage magnitude bounds.
    pub v_min: f64,
    pub v_max: f64,
}

impl Bus {
    /// Bus with unbounded injections and the given squared-voltage window.
    pub fn unbounded(id: BusId, v_min: f64, v_max: f64) -> Self {
        Self {
            id,
            p_min: f64::NEG_INFINITY,
            p_max: f64::INFINITY,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
            v_min,
            v_max,
        }
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |reason: &str| NetworkError::InvalidBounds {
            bus: self.id,
            reason: reason.to_string(),
        };
        if [self.p_min, self.p_max, self.q_min, self.q_max, self.v_min, self.v_max]
            .iter()
            .any(|v| v.is_nan())
        {
            return Err(bad("bound is NaN"));
        }
        if self.p_min > self.p_max || self.q_min > self.q_max {
            return Err(bad("injection lower bound exceeds upper bound"));
        }
        if !(self.v_min > 0.0) || self.v_min > self.v_max {
            return Err(bad("voltage bounds must satisfy 0 < v_min <= v_max"));
        }
        Ok(())
    }
}

/// Π-model line parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LineParams {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub y_series: ComplexValue,
    /// Shunt admittance at `from_bus`.
    pub y_shunt_from: ComplexValue,
    /// Shunt admittance at `to_bus`.
    pub y_shunt_to: ComplexValue,
    /// Limit on squared current magnitude, applied to both ends.
    pub current_sq_limit: f64,
}

impl LineParams {
    /// Line from series impedance `z = r + ix` without shunts or current limit.
    pub fn from_impedance(from_bus: BusId, to_bus: BusId, z: ComplexValue) -> Self {
        Self {
            from_bus,
            to_bus,
            y_series: z.inv(),
            y_shunt_from: ComplexValue::new(0.0, 0.0),
            y_shunt_to: ComplexValue::new(0.0, 0.0),
            current_sq_limit: f64::INFINITY,
        }
    }

    pub fn with_shunts(mut self, from: ComplexValue, to: ComplexValue) -> Self {
        self.y_shunt_from = from;
        self.y_shunt_to = to;
        self
    }

    pub fn z_series(&self) -> ComplexValue {
        self.y_series.inv()
    }

    /// `(1 + z·yᵐ_from, 1 + z·yᵐ_to)`.
    pub fn alpha(&self) -> (ComplexValue, ComplexValue) {
        let z = self.z_series();
        let one = ComplexValue::new(1.0, 0.0);
        (one + z * self.y_shunt_from, one + z * self.y_shunt_to)
    }

    pub fn has_shunts(&self) -> bool {
        self.y_shunt_from != ComplexValue::new(0.0, 0.0)
            || self.y_shunt_to != ComplexValue::new(0.0, 0.0)
    }

    /// Larger of `|yᵐ/yˢ|` over the two ends.
    pub fn shunt_ratio(&self) -> f64 {
        let ys = self.y_series.norm();
        (self.y_shunt_from.norm() / ys).max(self.y_shunt_to.norm() / ys)
    }
}

/// Identifies one directed end of a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct End {
    pub line: usize,
    /// `true` for the end at the line's `from_bus` (the `j→k` direction).
    pub forward: bool,
}

impl End {
    pub fn forward(line: usize) -> Self {
        Self { line, forward: true }
    }

    pub fn reverse(line: usize) -> Self {
        Self { line, forward: false }
    }

    /// Position in a `2L` vector.
    pub fn index(&self, num_lines: usize) -> usize {
        if self.forward {
            self.line
        } else {
            num_lines + self.line
        }
    }

    pub fn opposite(&self) -> Self {
        Self { line: self.line, forward: !self.forward }
    }
}

/// Read-only view of one oriented line end with its coefficients.
#[derive(Debug, Clone, Copy)]
pub struct EndView {
    pub end: End,
    /// Bus index at this end (the sending bus for `S`, `I`, `ℓ` of this end).
    pub bus: usize,
    /// Bus index at the other end.
    pub other: usize,
    pub alpha: ComplexValue,
    pub z: ComplexValue,
    pub y_series: ComplexValue,
    pub y_shunt: ComplexValue,
}

/// One step of a fundamental cycle: traverse `line` forward or backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleStep {
    pub line: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    /// Per bus: `(parent bus, connecting line)`; `None` at the slack.
    pub parent: Vec<Option<(usize, usize)>>,
    /// Buses in breadth-first order from the slack.
    pub order: Vec<usize>,
    pub is_tree_line: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct C2Report {
    pub per_line: Vec<bool>,
    pub holds: bool,
}

/// Validated, immutable network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    lines: Vec<LineParams>,
    slack: usize,
    ends: Vec<(usize, usize)>,
    adjacency: Vec<Vec<End>>,
    tree: SpanningTree,
    cycles: Vec<Vec<CycleStep>>,
    index_of: BTreeMap<BusId, usize>,
}

impl Network {
    pub fn build(
        buses: Vec<Bus>,
        lines: Vec<LineParams>,
        slack_id: BusId,
    ) -> Result<Self, NetworkError> {
        if buses.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut index_of = BTreeMap::new();
        for (i, bus) in buses.iter().enumerate() {
            bus.validate()?;
            if index_of.insert(bus.id, i).is_some() {
                return Err(NetworkError::DuplicateBusId(bus.id));
            }
        }
        let slack = *index_of
            .get(&slack_id)
            .ok_or(NetworkError::UnknownSlack(slack_id))?;

        let mut ends = Vec::with_capacity(lines.len());
        let mut adjacency = vec![Vec::new(); buses.len()];
        for (l, line) in lines.iter().enumerate() {
            let lookup = |bus| {
                index_of
                    .get(&bus)
                    .copied()
                    .ok_or(NetworkError::DanglingEndpoint { line: l, bus })
            };
            let (j, k) = (lookup(line.from_bus)?, lookup(line.to_bus)?);
            if j == k {
                return Err(NetworkError::SelfLoop { line: l, bus: line.from_bus });
            }
            let finite = [line.y_series, line.y_shunt_from, line.y_shunt_to]
                .iter()
                .all(|c| c.re.is_finite() && c.im.is_finite())
                && !line.current_sq_limit.is_nan()
                && line.current_sq_limit >= 0.0;
            if !finite {
                return Err(NetworkError::NonFiniteLine { line: l });
            }
            if line.y_series.norm() == 0.0 || !line.z_series().norm().is_finite() {
                return Err(NetworkError::ZeroSeriesAdmittance { line: l });
            }
            ends.push((j, k));
            adjacency[j].push(End::forward(l));
            adjacency[k].push(End::reverse(l));
        }

        let tree = spanning_tree(buses.len(), slack, &ends, &adjacency);
        let unreachable: Vec<BusId> = (0..buses.len())
            .filter(|&b| b != slack && tree.parent[b].is_none())
            .map(|b| buses[b].id)
            .collect();
        if !unreachable.is_empty() {
            return Err(NetworkError::DisconnectedGraph { unreachable });
        }
        let cycles = fundamental_cycles(&tree, &ends);

        Ok(Self {
            buses,
            lines,
            slack,
            ends,
            adjacency,
            tree,
            cycles,
            index_of,
        })
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[LineParams] {
        &self.lines
    }

    pub fn line(&self, l: usize) -> &LineParams {
        &self.lines[l]
    }

    /// Index of the slack bus.
    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    /// `(from, to)` bus indices of line `l`.
    pub fn line_ends(&self, l: usize) -> (usize, usize) {
        self.ends[l]
    }

    /// Line ends whose sending bus is `bus`.
    pub fn ends_at(&self, bus: usize) -> &[End] {
        &self.adjacency[bus]
    }

    pub fn end_view(&self, end: End) -> EndView {
        let line = &self.lines[end.line];
        let (j, k) = self.ends[end.line];
        let (a_from, a_to) = line.alpha();
        let z = line.z_series();
        if end.forward {
            EndView {
                end,
                bus: j,
                other: k,
                alpha: a_from,
                z,
                y_series: line.y_series,
                y_shunt: line.y_shunt_from,
            }
        } else {
            EndView {
                end,
                bus: k,
                other: j,
                alpha: a_to,
                z,
                y_series: line.y_series,
                y_shunt: line.y_shunt_to,
            }
        }
    }

    /// All `2L` ends, forward block first.
    pub fn all_ends(&self) -> impl Iterator<Item = End> + '_ {
        let l = self.lines.len();
        (0..l).map(End::forward).chain((0..l).map(End::reverse))
    }

    pub fn is_radial(&self) -> bool {
        self.lines.len() + 1 == self.buses.len()
    }

    pub fn spanning_tree(&self) -> &SpanningTree {
        &self.tree
    }

    /// One cycle per non-tree line, each starting with that line traversed
    /// forward.
    pub fn fundamental_cycles(&self) -> &[Vec<CycleStep>] {
        &self.cycles
    }

    /// `N × L` incidence matrix: `+1` at the `from` bus, `-1` at the `to` bus.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.buses.len(), self.lines.len());
        for (l, &(j, k)) in self.ends.iter().enumerate() {
            c[(j, l)] = 1.0;
            c[(k, l)] = -1.0;
        }
        c
    }

    pub fn alpha(&self, l: usize) -> (ComplexValue, ComplexValue) {
        self.lines[l].alpha()
    }

    /// Checks `Re α > 0` at both ends of every line.
    pub fn check_c2(&self) -> C2Report {
        let per_line: Vec<bool> = self
            .lines
            .iter()
            .map(|line| {
                let (a, b) = line.alpha();
                a.re > 0.0 && b.re > 0.0
            })
            .collect();
        let holds = per_line.iter().all(|&ok| ok);
        C2Report { per_line, holds }
    }

    /// Lines whose shunt-to-series admittance ratio exceeds `threshold`.
    pub fn atypical_shunts(&self, threshold: f64) -> Vec<usize> {
        self.lines
            .iter()
            .enumerate()
            .filter(|(_, line)| line.shunt_ratio() > threshold)
            .map(|(l, _)| l)
            .collect()
    }

    /// Lines with a negative series resistance or reactance.
    pub fn negative_impedance_lines(&self) -> Vec<usize> {
        self.lines
            .iter()
            .enumerate()
            .filter(|(_, line)| {
                let z = line.z_series();
                z.re < 0.0 || z.im < 0.0
            })
            .map(|(l, _)| l)
            .collect()
    }

    pub fn has_shunts(&self) -> bool {
        self.lines.iter().any(LineParams::has_shunts)
    }

    /// Copy of this network with every line shunt set to zero.
    pub fn without_shunts(&self) -> Network {
        let mut net = self.clone();
        for line in &mut net.lines {
            line.y_shunt_from = ComplexValue::new(0.0, 0.0);
            line.y_shunt_to = ComplexValue::new(0.0, 0.0);
        }
        net
    }
}

fn spanning_tree(
    n: usize,
    root: usize,
    ends: &[(usize, usize)],
    adjacency: &[Vec<End>],
) -> SpanningTree {
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut is_tree_line = vec![false; ends.len()];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(b) = queue.pop_front() {
        order.push(b);
        for end in &adjacency[b] {
            let (j, k) = ends[end.line];
            let other = if end.forward { k } else { j };
            if !seen[other] {
                seen[other] = true;
                parent[other] = Some((b, end.line));
                is_tree_line[end.line] = true;
                queue.push_back(other);
            }
        }
    }
    SpanningTree { parent, order, is_tree_line }
}

/// One cycle per non-tree line `j → k`: the line itself, then up from `k` to
/// the common ancestor, then down to `j`.
fn fundamental_cycles(tree: &SpanningTree, ends: &[(usize, usize)]) -> Vec<Vec<CycleStep>> {
    let mut depth = vec![0usize; tree.parent.len()];
    for &b in &tree.order {
        if let Some((p, _)) = tree.parent[b] {
            depth[b] = depth[p] + 1;
        }
    }
    // sign of walking from `bus` to its parent along `line`
    let up_sign = |bus: usize, line: usize| if ends[line].0 == bus { 1 } else { -1 };
    let mut cycles = Vec::new();
    for (l, &(j, k)) in ends.iter().enumerate() {
        if tree.is_tree_line[l] {
            continue;
        }
        let (mut a, mut b) = (k, j);
        let mut up = Vec::new();
        let mut down = Vec::new();
        while a != b {
            if depth[a] >= depth[b] {
                let (p, t) = tree.parent[a].expect("non-root bus has a parent");
                up.push(CycleStep { line: t, sign: up_sign(a, t) });
                a = p;
            } else {
                let (p, t) = tree.parent[b].expect("non-root bus has a parent");
                down.push(CycleStep { line: t, sign: -up_sign(b, t) });
                b = p;
            }
        }
        down.reverse();
        let mut cycle = vec![CycleStep { line: l, sign: 1 }];
        cycle.extend(up);
        cycle.extend(down);
        cycles.push(cycle);
    }
    cycles
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexValue {
        ComplexValue::new(re, im)
    }

    fn buses(n: u32) -> Vec<Bus> {
        (1..=n).map(|id| Bus::unbounded(id, 0.81, 1.21)).collect()
    }

    fn line(j: BusId, k: BusId) -> LineParams {
        LineParams::from_impedance(j, k, c(0.01, 0.02))
    }

    #[test]
    fn two_bus_network_is_radial() {
        let net = Network::build(buses(2), vec![line(1, 2)], 1).unwrap();
        assert_eq!(net.num_lines(), 1);
        assert!(net.is_radial());
        assert!(net.fundamental_cycles().is_empty());
    }

    #[test]
    fn triangle_has_one_cycle() {
        let net = Network::build(buses(3), vec![line(1, 2), line(2, 3), line(1, 3)], 1).unwrap();
        assert!(!net.is_radial());
        let cycles = net.fundamental_cycles();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].len(), 3);
        // signed incidence columns along a cycle cancel
        let cm = net.incidence_matrix();
        for b in 0..3 {
            let s: f64 = cycles[0].iter().map(|st| st.sign as f64 * cm[(b, st.line)]).sum();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn isolated_bus_is_rejected() {
        let err = Network::build(buses(3), vec![line(1, 2)], 1).unwrap_err();
        assert_eq!(err, NetworkError::DisconnectedGraph { unreachable: vec![3] });
    }

    #[test]
    fn build_errors() {
        assert_eq!(Network::build(vec![], vec![], 1).unwrap_err(), NetworkError::Empty);
        let mut dup = buses(2);
        dup[1].id = 1;
        assert_eq!(
            Network::build(dup, vec![], 1).unwrap_err(),
            NetworkError::DuplicateBusId(1)
        );
        assert_eq!(
            Network::build(buses(2), vec![line(1, 5)], 1).unwrap_err(),
            NetworkError::DanglingEndpoint { line: 0, bus: 5 }
        );
        let mut open = line(1, 2);
        open.y_series = c(0.0, 0.0);
        assert_eq!(
            Network::build(buses(2), vec![open], 1).unwrap_err(),
            NetworkError::ZeroSeriesAdmittance { line: 0 }
        );
        assert!(matches!(
            Network::build(buses(2), vec![line(1, 2)], 9).unwrap_err(),
            NetworkError::UnknownSlack(9)
        ));
        let mut b = buses(2);
        b[1].v_min = -0.1;
        assert!(matches!(
            Network::build(b, vec![line(1, 2)], 1).unwrap_err(),
            NetworkError::InvalidBounds { bus: 2, .. }
        ));
    }

    #[test]
    fn alpha_closed_form() {
        let l = LineParams::from_impedance(1, 2, c(0.05, 0.10)).with_shunts(c(0.0, 0.02), c(0.0, 0.02));
        let (a, b) = l.alpha();
        assert!((a - c(0.998, 0.001)).norm() < 1e-15);
        assert_eq!(a, b);

        let bare = LineParams::from_impedance(1, 2, c(0.05, 0.10));
        assert_eq!(bare.alpha(), (c(1.0, 0.0), c(1.0, 0.0)));

        let asym = LineParams::from_impedance(1, 2, c(0.05, 0.10)).with_shunts(c(0.0, 0.02), c(0.0, 0.0));
        let (a, b) = asym.alpha();
        assert_ne!(a, b);
    }

    #[test]
    fn incidence_matrix_of_path() {
        let net = Network::build(buses(3), vec![line(1, 2), line(2, 3)], 1).unwrap();
        let cm = net.incidence_matrix();
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 1.0, 0.0, -1.0]);
        assert_eq!(cm, expected);
        let single = Network::build(buses(2), vec![line(1, 2)], 1).unwrap();
        assert_eq!(single.incidence_matrix(), DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
    }

    #[test]
    fn incidence_matrix_of_triangle_has_rank_n_minus_one() {
        let net = Network::build(buses(3), vec![line(1, 2), line(2, 3), line(1, 3)], 1).unwrap();
        let cm = net.incidence_matrix();
        for col in cm.column_iter() {
            assert_eq!(col.sum(), 0.0);
        }
        assert_eq!(cm.rank(1e-10), 2);
    }

    #[test]
    fn c2_checks() {
        let zero = Network::build(buses(2), vec![line(1, 2)], 1).unwrap();
        assert!(zero.check_c2().holds);

        let shunted = LineParams::from_impedance(1, 2, c(0.05, 0.10)).with_shunts(c(0.0, 0.02), c(0.0, 0.02));
        assert!(Network::build(buses(2), vec![shunted], 1).unwrap().check_c2().holds);

        // z·yᵐ = -1.5 at the from end
        let z = c(0.05, 0.10);
        let bad = LineParams::from_impedance(1, 2, z).with_shunts(c(-1.5, 0.0) / z, c(0.0, 0.0));
        let rep = Network::build(buses(2), vec![bad], 1).unwrap().check_c2();
        assert!(!rep.holds);
        assert_eq!(rep.per_line, vec![false]);
    }

    #[test]
    fn shunt_advisory() {
        let z = c(0.05, 0.10);
        let heavy = LineParams::from_impedance(1, 2, z).with_shunts(c(0.0, 0.5), c(0.0, 0.0));
        let light = LineParams::from_impedance(2, 3, z).with_shunts(c(0.0, 1e-4), c(0.0, 1e-4));
        let net = Network::build(buses(3), vec![heavy, light], 1).unwrap();
        assert_eq!(net.atypical_shunts(DEFAULT_SHUNT_ADVISORY), vec![0]);
    }

    #[test]
    fn end_views_follow_orientation() {
        let l = LineParams::from_impedance(2, 1, c(0.05, 0.10)).with_shunts(c(0.0, 0.03), c(0.0, 0.01));
        let net = Network::build(buses(2), vec![l], 1).unwrap();
        let f = net.end_view(End::forward(0));
        let r = net.end_view(End::reverse(0));
        assert_eq!((f.bus, f.other), (1, 0));
        assert_eq!((r.bus, r.other), (0, 1));
        assert_eq!(f.y_shunt, c(0.0, 0.03));
        assert_eq!(End::reverse(0).index(1), 1);
    }
}
