//! Maps between phasor power-flow points and magnitude-only branch flow
//! points, and membership tests for the corresponding solution sets.
//!
//! `phi1` forgets phases: `v = |V|²`, `ℓ = |I|²`. `phi2` recovers them from
//! the angle map β through the cycle condition, with `θ_slack = 0`.

use crate::bfm::{self, BfmError, BranchFlowPoint, CycleCheck};
use crate::bim::{self, PhasorSolution};
use crate::network::{ComplexValue, End, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Residual tolerance for set membership (per-unit).
    pub membership: f64,
    /// Cycle-sum tolerance (radians).
    pub angle: f64,
    /// Round-trip acceptance threshold.
    pub roundtrip: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { membership: 1e-8, angle: bfm::DEFAULT_ANGLE_TOL, roundtrip: 1e-8 }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EquivError {
    #[error("phasor point violates the branch flow equations by {residual:.3e}")]
    InputNotInXtilde { residual: f64 },
    #[error("phasor point has {got} entries where the network needs {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Bfm(#[from] BfmError),
    #[error("line {line}: |α*v − z*S|² differs from v_j v_k by {mismatch:.3e}")]
    MagnitudeMismatch { line: usize, forward: bool, mismatch: f64 },
    #[error("recovered V I* differs from the point's S by {mismatch:.3e}")]
    PowerMismatch { mismatch: f64 },
    #[error("squared voltage at bus index {bus} is not positive")]
    NonPositiveVoltage { bus: usize },
}

fn check_phasor_dims(net: &Network, x: &PhasorSolution) -> Result<(), EquivError> {
    let (n, m) = (net.num_buses(), 2 * net.num_lines());
    let ok = x.voltage.len() == n && x.injection.len() == n && x.current.len() == m && x.power.len() == m;
    if !ok {
        return Err(EquivError::Dimension {
            expected: 2 * n + 2 * m,
            got: x.voltage.len() + x.injection.len() + x.current.len() + x.power.len(),
        });
    }
    Ok(())
}

/// `(s, V, I, S) ↦ (s, |V|², |I|², S)`.
pub fn phi1(net: &Network, x: &PhasorSolution, tol: f64) -> Result<BranchFlowPoint, EquivError> {
    check_phasor_dims(net, x)?;
    let residual = bim::phasor_residual(net, x).max();
    if !(residual <= tol) {
        return Err(EquivError::InputNotInXtilde { residual });
    }
    Ok(BranchFlowPoint {
        injection: x.injection.clone(),
        v: x.voltage.iter().map(|v| v.norm_sqr()).collect(),
        ell: x.current.iter().map(|i| i.norm_sqr()).collect(),
        power: x.power.clone(),
    })
}

/// Inverse of [`phi1`] on points satisfying the cycle condition.
pub fn phi2(net: &Network, x: &BranchFlowPoint, tol: &Tolerances) -> Result<PhasorSolution, EquivError> {
    x.check_dimension(net)?;
    if let Some(bus) = x.v.iter().position(|&v| !(v > 0.0)) {
        return Err(EquivError::NonPositiveVoltage { bus });
    }
    let beta = bfm::beta(net, x)?;
    let CycleCheck { theta, .. } = bfm::cycle_condition(net, &beta, tol.angle)?;

    for end in net.all_ends() {
        let e = net.end_view(end);
        let w = bfm::end_phasor_product(net, x, end);
        let mismatch = w.norm_sqr() - x.v[e.bus] * x.v[e.other];
        if !(mismatch.abs() <= tol.membership) {
            return Err(EquivError::MagnitudeMismatch { line: end.line, forward: end.forward, mismatch });
        }
    }

    let voltage: Vec<ComplexValue> = x
        .v
        .iter()
        .zip(&theta)
        .map(|(&v, &t)| ComplexValue::from_polar(v.sqrt(), t))
        .collect();
    let recovered = PhasorSolution::from_voltages(net, voltage, x.injection.clone());
    let mismatch = recovered
        .power
        .iter()
        .zip(&x.power)
        .fold(0.0, |m: f64, (a, b)| m.max((a - b).norm()));
    if !(mismatch <= tol.membership) {
        return Err(EquivError::PowerMismatch { mismatch });
    }
    Ok(recovered)
}

/// Outcome of a membership test: the largest relevant residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub holds: bool,
    pub residual: f64,
    pub reason: Option<String>,
}

impl Verdict {
    fn from_residual(residual: f64, tol: f64) -> Self {
        Self { holds: residual <= tol, residual, reason: None }
    }
}

/// `(s, V)` solves the bus injection model.
pub fn in_bim_set(net: &Network, voltage: &[ComplexValue], injection: &[ComplexValue], tol: f64) -> Verdict {
    let slack = (voltage[net.slack()] - ComplexValue::new(1.0, 0.0)).norm();
    Verdict::from_residual(bim::max_bim_residual(net, voltage, injection).max(slack), tol)
}

/// `(s, V, I, S)` satisfies the complex branch flow equations.
pub fn in_phasor_set(net: &Network, x: &PhasorSolution, tol: f64) -> Verdict {
    if check_phasor_dims(net, x).is_err() {
        return Verdict { holds: false, residual: f64::INFINITY, reason: Some("dimension".into()) };
    }
    Verdict::from_residual(bim::phasor_residual(net, x).max(), tol)
}

/// Radial model: balance, both cones, both drops, link, `v_slack = 1`.
pub fn in_tree_set(net: &Network, x: &BranchFlowPoint, tol: f64) -> Verdict {
    match bfm::bfm_residual(net, x) {
        Ok(r) => Verdict::from_residual(r.max_abs(), tol),
        Err(e) => Verdict { holds: false, residual: f64::INFINITY, reason: Some(e.to_string()) },
    }
}

/// Meshed model: balance, cones, drops and the cycle condition.
pub fn in_mesh_set(net: &Network, x: &BranchFlowPoint, tol: &Tolerances) -> Verdict {
    let r = match bfm::bfm_residual(net, x) {
        Ok(r) => r,
        Err(e) => return Verdict { holds: false, residual: f64::INFINITY, reason: Some(e.to_string()) },
    };
    let residual = r
        .max_balance()
        .max(r.max_cones())
        .max(r.max_drop())
        .max(r.slack.abs());
    let cycle = bfm::beta(net, x).and_then(|b| bfm::cycle_condition(net, &b, tol.angle));
    match cycle {
        Ok(_) => Verdict::from_residual(residual, tol.membership),
        Err(e) => Verdict { holds: false, residual, reason: Some(e.to_string()) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    /// Max-norm distance between the input and its image under the round trip.
    pub discrepancy: f64,
    pub pass: bool,
}

/// `φ₂(φ₁(x̃))` against `x̃`.
pub fn roundtrip_phasor(net: &Network, x: &PhasorSolution, tol: &Tolerances) -> Result<RoundTrip, EquivError> {
    let back = phi2(net, &phi1(net, x, tol.membership)?, tol)?;
    let discrepancy = back.max_abs_difference(x);
    Ok(RoundTrip { discrepancy, pass: discrepancy <= tol.roundtrip })
}

/// `φ₁(φ₂(x))` against `x`.
pub fn roundtrip_point(net: &Network, x: &BranchFlowPoint, tol: &Tolerances) -> Result<RoundTrip, EquivError> {
    let back = phi1(net, &phi2(net, x, tol)?, tol.membership)?;
    let discrepancy = back.max_abs_difference(x);
    Ok(RoundTrip { discrepancy, pass: discrepancy <= tol.roundtrip })
}

/// `β_jk − (∠V_j − ∠V_k)` wrapped, per end; zero on `φ₁` images.
pub fn beta_angle_defect(net: &Network, beta: &[f64], voltage: &[ComplexValue]) -> Vec<f64> {
    net.all_ends()
        .map(|end: End| {
            let e = net.end_view(end);
            let diff = voltage[e.bus].arg() - voltage[e.other].arg();
            bfm::wrap_angle(beta[end.index(net.num_lines())] - diff)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn flat_points_map_to_each_other() {
        let net = cases::path3().network;
        let flat = PhasorSolution::flat(&net);
        let x = phi1(&net, &flat, 1e-12).unwrap();
        assert_eq!(x, BranchFlowPoint::flat(&net));
        let back = phi2(&net, &x, &Tolerances::default()).unwrap();
        assert_eq!(back, flat);
    }

    #[test]
    fn phi1_rejects_points_off_the_model() {
        let net = cases::case2_shunt().network;
        let mut x = PhasorSolution::flat(&net);
        x.power[0] += ComplexValue::new(0.01, 0.0);
        assert!(matches!(phi1(&net, &x, 1e-8), Err(EquivError::InputNotInXtilde { .. })));
    }

    #[test]
    fn phi2_needs_antisymmetric_angles() {
        // with shunts the flat point violates the link equation, so β_jk = β_kj ≠ 0
        let net = cases::case2_shunt().network;
        let x = BranchFlowPoint::flat(&net);
        assert!(matches!(
            phi2(&net, &x, &Tolerances::default()),
            Err(EquivError::Bfm(BfmError::AntisymmetryViolation { line: 0, .. }))
        ));
    }
}
