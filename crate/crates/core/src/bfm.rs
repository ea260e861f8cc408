//! Branch flow points `x = (s, v, ℓ, S)` and the shunt-aware branch flow
//! equations, the angle map β, the cycle condition and the conic-gap
//! identity that lets one cone per line stand in for both.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::network::{ComplexValue, End, Network};

/// Default tolerance on equation residuals (per-unit).
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;
/// Default tolerance on cycle sums (radians).
pub const DEFAULT_ANGLE_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BfmError {
    #[error("point has {got} entries where the network needs {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("angle undefined at line {line} ({}) end: α*v − z*S = 0", if *forward { "from" } else { "to" })]
    DegenerateAngle { line: usize, forward: bool },
    #[error("β is not antisymmetric on line {line} (β_jk + β_kj = {mismatch:.3e})")]
    AntisymmetryViolation { line: usize, mismatch: f64 },
    #[error("cycle {cycle} has angle sum {mismatch:.3e} rad")]
    CycleMismatch { cycle: usize, mismatch: f64, lines: Vec<usize> },
    #[error("line {line} violates the drop/link equations by {residual:.3e}")]
    PreconditionViolated { line: usize, residual: f64 },
    #[error("network has line shunts")]
    NotZeroShunt,
}

/// Magnitude-only branch flow point. `injection` is per bus, `ell` and
/// `power` are per directed line end (forward block first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlowPoint {
    pub injection: Vec<ComplexValue>,
    pub v: Vec<f64>,
    pub ell: Vec<f64>,
    pub power: Vec<ComplexValue>,
}

impl BranchFlowPoint {
    /// `s = 0, v = 1, ℓ = 0, S = 0`.
    pub fn flat(net: &Network) -> Self {
        let m = 2 * net.num_lines();
        Self {
            injection: vec![ComplexValue::new(0.0, 0.0); net.num_buses()],
            v: vec![1.0; net.num_buses()],
            ell: vec![0.0; m],
            power: vec![ComplexValue::new(0.0, 0.0); m],
        }
    }

    pub fn dimension(net: &Network) -> usize {
        3 * (net.num_buses() + 2 * net.num_lines())
    }

    pub fn check_dimension(&self, net: &Network) -> Result<(), BfmError> {
        let (n, m) = (net.num_buses(), 2 * net.num_lines());
        let got = 2 * self.injection.len() + self.v.len() + self.ell.len() + 2 * self.power.len();
        if self.injection.len() != n || self.v.len() != n || self.ell.len() != m || self.power.len() != m {
            return Err(BfmError::Dimension { expected: Self::dimension(net), got });
        }
        Ok(())
    }

    /// Flattens to `[p, q, v, ℓ, P, Q]`, length `3(N + 2L)`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.injection.len() + self.v.len() + 3 * self.ell.len());
        out.extend(self.injection.iter().map(|s| s.re));
        out.extend(self.injection.iter().map(|s| s.im));
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.ell);
        out.extend(self.power.iter().map(|s| s.re));
        out.extend(self.power.iter().map(|s| s.im));
        out
    }

    pub fn from_vector(net: &Network, x: &[f64]) -> Result<Self, BfmError> {
        let layout = Layout::new(net);
        if x.len() != layout.len() {
            return Err(BfmError::Dimension { expected: layout.len(), got: x.len() });
        }
        let (n, m) = (layout.n, layout.m);
        Ok(Self {
            injection: (0..n).map(|j| ComplexValue::new(x[layout.p(j)], x[layout.q(j)])).collect(),
            v: x[layout.v(0)..layout.v(0) + n].to_vec(),
            ell: x[layout.ell(0)..layout.ell(0) + m].to_vec(),
            power: (0..m)
                .map(|e| ComplexValue::new(x[layout.big_p(e)], x[layout.big_q(e)]))
                .collect(),
        })
    }

    pub fn max_abs_difference(&self, other: &BranchFlowPoint) -> f64 {
        let a = self.to_vector();
        let b = other.to_vector();
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    /// `v_j ℓ_jk − |S_jk|²` per end.
    pub fn conic_gaps(&self, net: &Network) -> Vec<f64> {
        net.all_ends()
            .map(|end| {
                let i = end.index(net.num_lines());
                self.v[net.end_view(end).bus] * self.ell[i] - self.power[i].norm_sqr()
            })
            .collect()
    }
}

/// Index map of the flattened point `[p, q, v, ℓ, P, Q]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
}

impl Layout {
    pub fn new(net: &Network) -> Self {
        Self { n: net.num_buses(), m: 2 * net.num_lines() }
    }
    pub fn len(&self) -> usize {
        3 * self.n + 3 * self.m
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn p(&self, bus: usize) -> usize {
        bus
    }
    pub fn q(&self, bus: usize) -> usize {
        self.n + bus
    }
    pub fn v(&self, bus: usize) -> usize {
        2 * self.n + bus
    }
    pub fn ell(&self, end: usize) -> usize {
        3 * self.n + end
    }
    pub fn big_p(&self, end: usize) -> usize {
        3 * self.n + self.m + end
    }
    pub fn big_q(&self, end: usize) -> usize {
        3 * self.n + 2 * self.m + end
    }
}

/// Residuals of the five equation families of the radial branch flow model.
///
/// Signed where the equation is real, complex where it is complex.
#[derive(Debug, Clone, PartialEq)]
pub struct BfmResidual {
    /// Per bus: `s_j − Σ_k S_jk`.
    pub balance: Vec<ComplexValue>,
    /// Per end: `v_j ℓ_jk − |S_jk|²`.
    pub cones: Vec<f64>,
    /// Per line: `|α_jk|² v_j − v_k − 2Re(α_jk z* S_jk) + |z|² ℓ_jk`.
    pub drop_fwd: Vec<f64>,
    /// Per line, same with the roles of `j` and `k` swapped.
    pub drop_rev: Vec<f64>,
    /// Per line: `α_jk* v_j − z* S_jk − (α_kj* v_k − z* S_kj)*`.
    pub link: Vec<ComplexValue>,
    /// `v_slack − 1`.
    pub slack: f64,
}

fn max_norm<T: Copy>(xs: &[T], f: impl Fn(T) -> f64) -> f64 {
    xs.iter().fold(0.0, |m, &x| m.max(f(x)))
}

impl BfmResidual {
    pub fn max_balance(&self) -> f64 {
        max_norm(&self.balance, |c| c.norm())
    }
    pub fn max_cones(&self) -> f64 {
        max_norm(&self.cones, f64::abs)
    }
    pub fn max_drop(&self) -> f64 {
        max_norm(&self.drop_fwd, f64::abs).max(max_norm(&self.drop_rev, f64::abs))
    }
    pub fn max_link(&self) -> f64 {
        max_norm(&self.link, |c| c.norm())
    }
    /// Everything except the cone equalities: the linear part shared by the
    /// exact model and its convex relaxation.
    pub fn max_linear(&self) -> f64 {
        self.max_balance()
            .max(self.max_drop())
            .max(self.max_link())
            .max(self.slack.abs())
    }
    pub fn max_abs(&self) -> f64 {
        self.max_linear().max(self.max_cones())
    }
    /// Largest residual of the drop and link equations on one line.
    pub fn line_coupling(&self, line: usize) -> f64 {
        self.drop_fwd[line]
            .abs()
            .max(self.drop_rev[line].abs())
            .max(self.link[line].norm())
    }
}

fn drop_residual(e: &crate::network::EndView, v: &[f64], ell: f64, s: ComplexValue) -> f64 {
    e.alpha.norm_sqr() * v[e.bus] - v[e.other] - 2.0 * (e.alpha * e.z.conj() * s).re
        + e.z.norm_sqr() * ell
}

/// `α_jk* v_j − z* S_jk` for one end.
pub fn end_phasor_product(net: &Network, x: &BranchFlowPoint, end: End) -> ComplexValue {
    let e = net.end_view(end);
    e.alpha.conj() * x.v[e.bus] - e.z.conj() * x.power[end.index(net.num_lines())]
}

pub fn bfm_residual(net: &Network, x: &BranchFlowPoint) -> Result<BfmResidual, BfmError> {
    x.check_dimension(net)?;
    let nl = net.num_lines();
    let balance = (0..net.num_buses())
        .map(|j| {
            let flow: ComplexValue = net.ends_at(j).iter().map(|e| x.power[e.index(nl)]).sum();
            x.injection[j] - flow
        })
        .collect();
    let mut drop_fwd = Vec::with_capacity(nl);
    let mut drop_rev = Vec::with_capacity(nl);
    let mut link = Vec::with_capacity(nl);
    for l in 0..nl {
        let (f, r) = (End::forward(l), End::reverse(l));
        let (ef, er) = (net.end_view(f), net.end_view(r));
        drop_fwd.push(drop_residual(&ef, &x.v, x.ell[l], x.power[l]));
        drop_rev.push(drop_residual(&er, &x.v, x.ell[nl + l], x.power[nl + l]));
        link.push(end_phasor_product(net, x, f) - end_phasor_product(net, x, r).conj());
    }
    Ok(BfmResidual {
        balance,
        cones: x.conic_gaps(net),
        drop_fwd,
        drop_rev,
        link,
        slack: x.v[net.slack()] - 1.0,
    })
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// `β_jk = ∠(α_jk* v_j − z* S_jk)` for every end, forward block first.
pub fn beta(net: &Network, x: &BranchFlowPoint) -> Result<Vec<f64>, BfmError> {
    x.check_dimension(net)?;
    let mut out = vec![0.0; 2 * net.num_lines()];
    for end in net.all_ends() {
        let w = end_phasor_product(net, x, end);
        if w.norm() == 0.0 || !w.norm().is_finite() {
            return Err(BfmError::DegenerateAngle { line: end.line, forward: end.forward });
        }
        // atan2 may return −π; the convention is (−π, π]
        out[end.index(net.num_lines())] = wrap_angle(w.im.atan2(w.re));
    }
    Ok(out)
}

/// Bus angles `θ` with `θ_slack = 0` such that `β = [Cᵀ; −Cᵀ] θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleCheck {
    pub theta: Vec<f64>,
    /// Wrapped angle sum of every fundamental cycle.
    pub cycle_sums: Vec<f64>,
}

pub fn cycle_condition(net: &Network, beta: &[f64], tol: f64) -> Result<CycleCheck, BfmError> {
    let nl = net.num_lines();
    if beta.len() != 2 * nl {
        return Err(BfmError::Dimension { expected: 2 * nl, got: beta.len() });
    }
    for l in 0..nl {
        let mismatch = wrap_angle(beta[l] + beta[nl + l]);
        if mismatch.abs() > tol {
            return Err(BfmError::AntisymmetryViolation { line: l, mismatch });
        }
    }
    let tree = net.spanning_tree();
    let mut theta = vec![0.0; net.num_buses()];
    for &k in &tree.order {
        if let Some((p, l)) = tree.parent[k] {
            let (from, _) = net.line_ends(l);
            theta[k] = if from == p { theta[p] - beta[l] } else { theta[p] + beta[l] };
        }
    }
    let mut cycle_sums = Vec::with_capacity(net.fundamental_cycles().len());
    for (c, cycle) in net.fundamental_cycles().iter().enumerate() {
        let sum: f64 = cycle.iter().map(|s| f64::from(s.sign) * beta[s.line]).sum();
        let mismatch = wrap_angle(sum);
        if mismatch.abs() > tol {
            return Err(BfmError::CycleMismatch {
                cycle: c,
                mismatch,
                lines: cycle.iter().map(|s| s.line).collect(),
            });
        }
        cycle_sums.push(mismatch);
    }
    Ok(CycleCheck { theta, cycle_sums })
}

/// `θ = C (CᵀC)⁻¹ β̃` for radial networks, shifted so that `θ_slack = 0`.
pub fn tree_angles_pseudo_inverse(net: &Network, beta_fwd: &[f64]) -> Option<Vec<f64>> {
    let c = net.incidence_matrix();
    let ctc = c.transpose() * &c;
    let b = nalgebra::DVector::from_column_slice(beta_fwd);
    let y = ctc.lu().solve(&b)?;
    let theta = &c * y;
    let shift = theta[net.slack()];
    Some(theta.iter().map(|t| t - shift).collect())
}

/// Both conic gaps of one line, `v ℓ − |S|²`, and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSymmetry {
    pub gap_fwd: f64,
    pub gap_rev: f64,
    pub difference: f64,
}

/// Compares the conic gaps at the two ends of `line`. The equality of the two
/// gaps is only claimed when the drop and link equations hold on the line;
/// `tol` bounds their allowed residual.
pub fn gap_symmetry(net: &Network, x: &BranchFlowPoint, line: usize, tol: f64) -> Result<GapSymmetry, BfmError> {
    let res = bfm_residual(net, x)?;
    let residual = res.line_coupling(line);
    if !(residual <= tol) {
        return Err(BfmError::PreconditionViolated { line, residual });
    }
    let nl = net.num_lines();
    let (gap_fwd, gap_rev) = (res.cones[line], res.cones[nl + line]);
    Ok(GapSymmetry { gap_fwd, gap_rev, difference: gap_fwd - gap_rev })
}

/// `|α*v_j − z*S_jk|² − (|α|² v_j² + |z|² |S_jk|² − 2Re(α z* S_jk) v_j)`;
/// zero up to rounding for any input.
pub fn magnitude_identity_defect(net: &Network, x: &BranchFlowPoint, end: End) -> f64 {
    let e = net.end_view(end);
    let s = x.power[end.index(net.num_lines())];
    let vj = x.v[e.bus];
    let lhs = end_phasor_product(net, x, end).norm_sqr();
    let rhs = e.alpha.norm_sqr() * vj * vj + e.z.norm_sqr() * s.norm_sqr()
        - 2.0 * (e.alpha * e.z.conj() * s).re * vj;
    lhs - rhs
}

/// Residuals of the shunt-free DistFlow equations stated on the line
/// orientation, with the reverse-end power implied by
/// `S_kj = −(S_jk − z ℓ_jk)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistFlowResidual {
    /// `s_j − Σ_{j→k} S_jk + Σ_{i→j} (S_ij − z ℓ_ij)`.
    pub balance: Vec<ComplexValue>,
    /// `v_j ℓ_jk − |S_jk|²` per line.
    pub cones: Vec<f64>,
    /// `v_j − v_k − 2Re(z* S_jk) + |z|² ℓ_jk` per line.
    pub drop: Vec<f64>,
}

pub fn distflow_residual(net: &Network, x: &BranchFlowPoint) -> Result<DistFlowResidual, BfmError> {
    x.check_dimension(net)?;
    let nl = net.num_lines();
    let mut balance = x.injection.clone();
    let mut cones = Vec::with_capacity(nl);
    let mut drop = Vec::with_capacity(nl);
    for l in 0..nl {
        let (j, k) = net.line_ends(l);
        let z = net.line(l).z_series();
        let s = x.power[l];
        balance[j] -= s;
        balance[k] += s - z * x.ell[l];
        cones.push(x.v[j] * x.ell[l] - s.norm_sqr());
        drop.push(x.v[j] - x.v[k] - 2.0 * (z.conj() * s).re + z.norm_sqr() * x.ell[l]);
    }
    Ok(DistFlowResidual { balance, cones, drop })
}

/// Side-by-side evaluation of the shunt-aware model and DistFlow.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub bfm: BfmResidual,
    pub distflow: DistFlowResidual,
    /// `max |α − 1|` over all ends; exactly zero without shunts.
    pub max_alpha_deviation: f64,
    pub balance_difference: f64,
    pub cone_difference: f64,
    pub drop_difference: f64,
    /// `max |S_kj + S_jk − z ℓ_jk|`, the reverse-end relation DistFlow assumes.
    pub implied_reverse_residual: f64,
}

impl ReductionReport {
    pub fn max_difference(&self) -> f64 {
        self.balance_difference.max(self.cone_difference).max(self.drop_difference)
    }
}

pub fn reduce_zero_shunt_check(net: &Network, x: &BranchFlowPoint) -> Result<ReductionReport, BfmError> {
    if net.has_shunts() {
        return Err(BfmError::NotZeroShunt);
    }
    let bfm = bfm_residual(net, x)?;
    let distflow = distflow_residual(net, x)?;
    let nl = net.num_lines();
    let one = ComplexValue::new(1.0, 0.0);
    let max_alpha_deviation = net
        .all_ends()
        .map(|e| (net.end_view(e).alpha - one).norm())
        .fold(0.0, f64::max);
    let balance_difference = bfm
        .balance
        .iter()
        .zip(&distflow.balance)
        .fold(0.0, |m: f64, (a, b)| m.max((a - b).norm()));
    let cone_difference = (0..nl).fold(0.0, |m: f64, l| m.max((bfm.cones[l] - distflow.cones[l]).abs()));
    let drop_difference = (0..nl).fold(0.0, |m: f64, l| m.max((bfm.drop_fwd[l] - distflow.drop[l]).abs()));
    let implied_reverse_residual = (0..nl).fold(0.0, |m: f64, l| {
        let z = net.line(l).z_series();
        m.max((x.power[nl + l] + x.power[l] - z * x.ell[l]).norm())
    });
    Ok(ReductionReport {
        bfm,
        distflow,
        max_alpha_deviation,
        balance_difference,
        cone_difference,
        drop_difference,
        implied_reverse_residual,
    })
}

/// Dense `[Cᵀ; −Cᵀ]`, the map from bus angles to end angle differences.
pub fn angle_difference_matrix(net: &Network) -> DMatrix<f64> {
    let ct = net.incidence_matrix().transpose();
    let nl = net.num_lines();
    let mut m = DMatrix::zeros(2 * nl, net.num_buses());
    m.rows_mut(0, nl).copy_from(&ct);
    m.rows_mut(nl, nl).copy_from(&(-ct));
    m
}
