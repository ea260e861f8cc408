//! LinDistFlow: a lossless, shunt-free linearization of the radial branch
//! flow model, and diagnostics comparing it to the exact solution.
//!
//! With `s` the net injection (generation positive), the flow from a parent
//! `j` into its child `k` is `S_jk = −Σ_{l ∈ T_k} s_l`, where `T_k` is the set
//! of buses downstream of `k` including `k`. A load (negative `s`) therefore
//! produces a positive flow toward it.

use crate::bim::{self, PhasorSolution};
use crate::network::{BusId, ComplexValue, Network};

/// Advisory ratio `|yᵐ/yˢ| ≤ SHUNT_RATIO_SCALE · r²` for typical lines of
/// length ratio `r`.
pub const SHUNT_RATIO_SCALE: f64 = 1e-4;
/// Advisory relative voltage deviation `|V_k − V_l| / |V| ≈ VOLTAGE_DEVIATION_SCALE · r`.
pub const VOLTAGE_DEVIATION_SCALE: f64 = 1e-2;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LinDistFlowError {
    #[error("network has cycles")]
    NotRadial,
    #[error("expected {expected} injections, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    /// Per line, in the line's own orientation. The opposite end carries the
    /// negation.
    pub s_lin: Vec<ComplexValue>,
    pub v_lin: Vec<f64>,
    /// `T_k` per bus, as sorted bus ids.
    pub downstream: Vec<Vec<BusId>>,
}

/// Per bus index, the bus indices in its subtree (rooted at the slack).
fn subtrees(net: &Network) -> Result<Vec<Vec<usize>>, LinDistFlowError> {
    if !net.is_radial() {
        return Err(LinDistFlowError::NotRadial);
    }
    let tree = net.spanning_tree();
    let mut sets: Vec<Vec<usize>> = (0..net.num_buses()).map(|b| vec![b]).collect();
    for &k in tree.order.iter().rev() {
        if let Some((p, _)) = tree.parent[k] {
            let child = std::mem::take(&mut sets[k]);
            sets[p].extend_from_slice(&child);
            sets[k] = child;
        }
    }
    Ok(sets)
}

pub fn downstream_sets(net: &Network) -> Result<Vec<Vec<BusId>>, LinDistFlowError> {
    Ok(subtrees(net)?
        .into_iter()
        .map(|set| {
            let mut ids: Vec<BusId> = set.into_iter().map(|b| net.buses()[b].id).collect();
            ids.sort_unstable();
            ids
        })
        .collect())
}

pub fn solve_lindistflow(net: &Network, injection: &[ComplexValue]) -> Result<LinearSolution, LinDistFlowError> {
    let sets = subtrees(net)?;
    if injection.len() != net.num_buses() {
        return Err(LinDistFlowError::Dimension { expected: net.num_buses(), got: injection.len() });
    }
    let tree = net.spanning_tree();
    let nl = net.num_lines();
    let mut s_lin = vec![ComplexValue::new(0.0, 0.0); nl];
    // parent → child flow per child bus
    let mut inflow = vec![ComplexValue::new(0.0, 0.0); net.num_buses()];
    for k in 0..net.num_buses() {
        if let Some((p, l)) = tree.parent[k] {
            let down: ComplexValue = sets[k].iter().map(|&b| injection[b]).sum();
            inflow[k] = -down;
            s_lin[l] = if net.line_ends(l).0 == p { -down } else { down };
        }
    }
    let mut v_lin = vec![1.0; net.num_buses()];
    for &k in &tree.order {
        if let Some((p, l)) = tree.parent[k] {
            let z = net.line(l).z_series();
            v_lin[k] = v_lin[p] - 2.0 * (z.conj() * inflow[k]).re;
        }
    }
    Ok(LinearSolution { s_lin, v_lin, downstream: downstream_sets(net)? })
}

/// Terms of the per-line energy balance and the advisory ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct LineDiagnostics {
    pub line: usize,
    /// `|V_j − V_k|² (yˢ)*`
    pub series_loss: ComplexValue,
    /// `|V_j|² (yᵐ_jk)*` at the from end and `|V_k|² (yᵐ_kj)*` at the to end.
    pub shunt_loss_from: ComplexValue,
    pub shunt_loss_to: ComplexValue,
    pub shunt_ratio: f64,
    /// Larger of `|V_j − V_k| / |V_j|` and `|V_j − V_k| / |V_k|`.
    pub voltage_deviation: f64,
    pub shunt_ratio_advisory: bool,
    pub voltage_deviation_advisory: bool,
    /// Each shunt loss magnitude is at most the series loss magnitude.
    pub shunt_not_above_series: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproximationReport {
    pub max_v_error: f64,
    pub mean_v_error: f64,
    /// `max_j |v_lin − v| / v`.
    pub max_rel_v_error: f64,
    pub max_flow_error: f64,
    pub mean_flow_error: f64,
    pub lines: Vec<LineDiagnostics>,
    pub total_series_loss: ComplexValue,
    pub total_shunt_loss: ComplexValue,
    /// `Re Σ s / Σ max(0, −p_j)`: real loss as a fraction of real load.
    pub loss_fraction: f64,
    /// Largest per-bus residual of the downstream energy balance.
    pub energy_balance_residual: f64,
    pub length_ratio: f64,
    /// Lines exceeding either advisory threshold.
    pub flagged_lines: Vec<usize>,
}

/// Compares a LinDistFlow solution with an exact phasor solution on the
/// same network and injections.
pub fn approximation_report(
    net: &Network,
    exact: &PhasorSolution,
    lin: &LinearSolution,
    length_ratio: f64,
) -> ApproximationReport {
    let n = net.num_buses();
    let nl = net.num_lines();
    let v: Vec<f64> = exact.voltage.iter().map(|v| v.norm_sqr()).collect();
    let v_err: Vec<f64> = (0..n).map(|j| (lin.v_lin[j] - v[j]).abs()).collect();
    let flow_err: Vec<f64> = (0..nl).map(|l| (lin.s_lin[l] - exact.power[l]).norm()).collect();
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let max = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max);

    let ratio_limit = SHUNT_RATIO_SCALE * length_ratio * length_ratio;
    let deviation_limit = VOLTAGE_DEVIATION_SCALE * length_ratio;
    let losses = bim::line_losses(net, &exact.voltage);
    let lines: Vec<LineDiagnostics> = losses
        .iter()
        .enumerate()
        .map(|(l, loss)| {
            let (j, k) = net.line_ends(l);
            let (vj, vk) = (exact.voltage[j], exact.voltage[k]);
            let diff = (vj - vk).norm();
            let voltage_deviation = (diff / vj.norm()).max(diff / vk.norm());
            let shunt_ratio = net.line(l).shunt_ratio();
            let series = loss.series.norm();
            LineDiagnostics {
                line: l,
                series_loss: loss.series,
                shunt_loss_from: loss.shunt_from,
                shunt_loss_to: loss.shunt_to,
                shunt_ratio,
                voltage_deviation,
                shunt_ratio_advisory: shunt_ratio <= ratio_limit,
                voltage_deviation_advisory: voltage_deviation <= deviation_limit,
                shunt_not_above_series: loss.shunt_from.norm() <= series && loss.shunt_to.norm() <= series,
            }
        })
        .collect();

    let total_series_loss = losses.iter().map(|l| l.series).sum();
    let total_shunt_loss = losses.iter().map(|l| l.shunt_from + l.shunt_to).sum();
    let total: ComplexValue = exact.injection.iter().sum();
    let load: f64 = exact.injection.iter().map(|s| (-s.re).max(0.0)).sum();
    let loss_fraction = if load > 0.0 { total.re / load } else { 0.0 };

    ApproximationReport {
        max_v_error: max(&v_err),
        mean_v_error: mean(&v_err),
        max_rel_v_error: (0..n).map(|j| v_err[j] / v[j]).fold(0.0, f64::max),
        max_flow_error: max(&flow_err),
        mean_flow_error: mean(&flow_err),
        flagged_lines: lines
            .iter()
            .filter(|d| !(d.shunt_ratio_advisory && d.voltage_deviation_advisory))
            .map(|d| d.line)
            .collect(),
        lines,
        total_series_loss,
        total_shunt_loss,
        loss_fraction,
        energy_balance_residual: energy_balance_residual(net, exact),
        length_ratio,
    }
}

/// For each bus `k` with parent `j`, the power delivered to `k` plus its
/// injection must equal what leaves toward its children plus the losses on
/// those lines:
/// `Σ_l (S_{k→l, delivered} + series + shunt losses) = S_{j→k, delivered} + s_k`.
/// Returns the largest mismatch.
pub fn energy_balance_residual(net: &Network, exact: &PhasorSolution) -> f64 {
    if !net.is_radial() {
        return f64::NAN;
    }
    let tree = net.spanning_tree();
    let nl = net.num_lines();
    let losses = bim::line_losses(net, &exact.voltage);
    // power arriving at `bus` over `line`, i.e. minus what `bus` sends back
    let delivered = |line: usize, bus: usize| {
        let at_from = net.line_ends(line).0 == bus;
        -exact.power[if at_from { line } else { nl + line }]
    };
    let mut lhs = vec![ComplexValue::new(0.0, 0.0); net.num_buses()];
    for c in 0..net.num_buses() {
        if let Some((k, l)) = tree.parent[c] {
            lhs[k] += delivered(l, c) + losses[l].total();
        }
    }
    (0..net.num_buses())
        .map(|k| {
            let rhs = exact.injection[k]
                + tree.parent[k].map_or(ComplexValue::new(0.0, 0.0), |(_, l)| delivered(l, k));
            (lhs[k] - rhs).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::network::{Bus, LineParams};

    fn c(re: f64, im: f64) -> ComplexValue {
        ComplexValue::new(re, im)
    }

    #[test]
    fn path_downstream_sets() {
        let net = cases::path3().network;
        let sets = downstream_sets(&net).unwrap();
        assert_eq!(sets, vec![vec![1, 2, 3], vec![2, 3], vec![3]]);
    }

    #[test]
    fn star_leaves_are_singletons() {
        let buses = (1..=4).map(|id| Bus::unbounded(id, 0.9, 1.1)).collect();
        let lines = (2..=4).map(|k| LineParams::from_impedance(1, k, c(0.01, 0.01))).collect();
        let net = Network::build(buses, lines, 1).unwrap();
        let sets = downstream_sets(&net).unwrap();
        assert_eq!(sets[0], vec![1, 2, 3, 4]);
        for (k, set) in sets.iter().enumerate().skip(1) {
            assert_eq!(set, &vec![k as BusId + 1]);
        }
    }

    #[test]
    fn meshed_input_is_rejected() {
        let net = cases::triangle().network;
        assert_eq!(downstream_sets(&net), Err(LinDistFlowError::NotRadial));
        assert_eq!(
            solve_lindistflow(&net, &[c(0.0, 0.0); 3]).unwrap_err(),
            LinDistFlowError::NotRadial
        );
    }

    #[test]
    fn zero_injection_is_flat() {
        let net = cases::path3().network;
        let lin = solve_lindistflow(&net, &[c(0.0, 0.0); 3]).unwrap();
        assert!(lin.s_lin.iter().all(|s| s.norm() == 0.0));
        assert!(lin.v_lin.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn path_closed_form() {
        let case = cases::path3();
        let lin = solve_lindistflow(&case.network, &case.injection).unwrap();
        assert_eq!(lin.s_lin[0], c(0.1, 0.05));
        assert_eq!(lin.s_lin[1], c(0.1, 0.05));
        let hop = 2.0 * (0.01 * 0.1 + 0.02 * 0.05);
        assert!((lin.v_lin[1] - (1.0 - hop)).abs() < 1e-15);
        assert!((lin.v_lin[2] - (1.0 - 2.0 * hop)).abs() < 1e-15);
    }

    #[test]
    fn reversed_line_orientation_flips_sign() {
        let buses = (1..=2).map(|id| Bus::unbounded(id, 0.9, 1.1)).collect();
        let lines = vec![LineParams::from_impedance(2, 1, c(0.01, 0.02))];
        let net = Network::build(buses, lines, 1).unwrap();
        let lin = solve_lindistflow(&net, &[c(0.0, 0.0), c(-0.1, -0.05)]).unwrap();
        assert_eq!(lin.s_lin[0], c(-0.1, -0.05));
        assert!((lin.v_lin[1] - (1.0 - 0.004)).abs() < 1e-15);
    }
}
