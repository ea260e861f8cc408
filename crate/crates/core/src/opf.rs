//! Optimal power flow over the radial branch flow model and its
//! second-order cone relaxation.
//!
//! The relaxation replaces `v_j ℓ_jk = |S_jk|²` by `|S_jk|² ≤ v_j ℓ_jk`,
//! written as the standard cone `‖(v_j − ℓ_jk, 2P_jk, 2Q_jk)‖ ≤ v_j + ℓ_jk`.
//! If no bus has a finite injection lower bound and every line has
//! `Re α > 0` at both ends, optimal points of the relaxation have zero gap.
//! [`tighten_step`] constructs a strictly cheaper feasible point from any
//! feasible point with a positive gap on some line, so a relaxation optimum
//! with a gap is a reproducible counterexample.

use std::io::Write;

use serde::{Deserialize, Serialize};
use shuntflow_conic::{ConicProblem, ConicSolver, Status};

use crate::bfm::{self, BranchFlowPoint, Layout};
use crate::bim::{self, PhasorSolution};
use crate::equivalence::{self, Tolerances};
use crate::network::{Bus, ComplexValue, End, Network};

/// Default relative exactness tolerance, `max_gap ≤ tol · max(1, |objective|)`.
pub const DEFAULT_EXACTNESS_TOL: f64 = 1e-6;

/// Coefficient on `ℓ` added to generation cost so the cost stays strictly
/// increasing in every line current.
pub const GENERATION_LOSS_WEIGHT: f64 = 1e-4;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OpfError {
    #[error("network has cycles; the relaxation is only defined for radial networks")]
    NotRadial,
    #[error("cost violates the monotonicity assumption: {0}")]
    CostViolatesA2(String),
    #[error("bounds do not match the network: {0}")]
    Dimension(String),
    #[error("relaxation is infeasible")]
    Infeasible,
    #[error("relaxation is unbounded")]
    Unbounded,
    #[error("solver failed numerically: {0}")]
    NumericalFailure(String),
    #[error("solver reached its iteration limit")]
    IterationLimit,
    #[error("line {line}: conic gap is not positive at both ends ({gap_fwd:.3e}, {gap_rev:.3e})")]
    GapNotPositive { line: usize, gap_fwd: f64, gap_rev: f64 },
    #[error("line {line}: current is zero at one end")]
    ZeroCurrent { line: usize },
    #[error("line {line}: Re α is not positive at both ends")]
    C2ViolatedOnLine { line: usize },
    #[error("line {line}: series resistance or reactance is negative")]
    NegativeImpedance { line: usize },
    #[error("ε must be finite and nonnegative, got {0}")]
    InvalidEpsilon(f64),
}

/// Linear cost `Σ c_ell ℓ + Σ (c_p p + c_q q) + constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// Per directed line end.
    pub c_ell: Vec<f64>,
    pub c_p: Vec<f64>,
    pub c_q: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
}

impl CostSpec {
    /// Series loss proxy: `c_ell = r` at both ends of every line.
    pub fn loss(net: &Network) -> Self {
        let nl = net.num_lines();
        let mut c_ell = vec![0.0; 2 * nl];
        for l in 0..nl {
            let r = net.line(l).z_series().re;
            c_ell[l] = r;
            c_ell[nl + l] = r;
        }
        Self { c_ell, c_p: vec![0.0; net.num_buses()], c_q: vec![0.0; net.num_buses()], constant: 0.0 }
    }

    /// Total real generation `Σ p_j`, plus [`GENERATION_LOSS_WEIGHT`] on `ℓ`.
    pub fn generation(net: &Network) -> Self {
        Self {
            c_ell: vec![GENERATION_LOSS_WEIGHT; 2 * net.num_lines()],
            c_p: vec![1.0; net.num_buses()],
            c_q: vec![0.0; net.num_buses()],
            constant: 0.0,
        }
    }

    /// Strictly increasing in `ℓ`, nondecreasing in `s`; the cost has no `S`
    /// term by construction.
    pub fn validate(&self, net: &Network) -> Result<(), OpfError> {
        if self.c_ell.len() != 2 * net.num_lines()
            || self.c_p.len() != net.num_buses()
            || self.c_q.len() != net.num_buses()
        {
            return Err(OpfError::Dimension("cost vector lengths".into()));
        }
        if let Some(e) = self.c_ell.iter().position(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(OpfError::CostViolatesA2(format!(
                "coefficient on ℓ at end {e} is {}, must be positive",
                self.c_ell[e]
            )));
        }
        for (name, cs) in [("p", &self.c_p), ("q", &self.c_q)] {
            if let Some(j) = cs.iter().position(|&c| !(c >= 0.0 && c.is_finite())) {
                return Err(OpfError::CostViolatesA2(format!(
                    "coefficient on {name} at bus index {j} is {}, must be nonnegative",
                    cs[j]
                )));
            }
        }
        if !self.constant.is_finite() {
            return Err(OpfError::CostViolatesA2("constant is not finite".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &BranchFlowPoint) -> f64 {
        let ell: f64 = self.c_ell.iter().zip(&x.ell).map(|(c, l)| c * l).sum();
        let inj: f64 = x
            .injection
            .iter()
            .enumerate()
            .map(|(j, s)| self.c_p[j] * s.re + self.c_q[j] * s.im)
            .sum();
        ell + inj + self.constant
    }
}

/// Box bounds of the OPF: injections, squared voltages and squared currents.
/// Infinite entries mean "no constraint".
#[derive(Debug, Clone, PartialEq)]
pub struct OpfBounds {
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    /// Per line, applied to both ends.
    pub ell_max: Vec<f64>,
}

impl OpfBounds {
    pub fn from_network(net: &Network) -> Self {
        let pick = |f: fn(&Bus) -> f64| net.buses().iter().map(f).collect::<Vec<_>>();
        Self {
            p_min: pick(|b| b.p_min),
            p_max: pick(|b| b.p_max),
            q_min: pick(|b| b.q_min),
            q_max: pick(|b| b.q_max),
            v_min: pick(|b| b.v_min),
            v_max: pick(|b| b.v_max),
            ell_max: net.lines().iter().map(|l| l.current_sq_limit).collect(),
        }
    }

    fn check(&self, net: &Network) -> Result<(), OpfError> {
        let n = net.num_buses();
        let per_bus = [&self.p_min, &self.p_max, &self.q_min, &self.q_max, &self.v_min, &self.v_max];
        if per_bus.iter().any(|v| v.len() != n) || self.ell_max.len() != net.num_lines() {
            return Err(OpfError::Dimension("bound vector lengths".into()));
        }
        Ok(())
    }

    /// Largest violation of the box bounds by `x` (zero when inside).
    pub fn violation(&self, net: &Network, x: &BranchFlowPoint) -> f64 {
        let over = |val: f64, lo: f64, hi: f64| (lo - val).max(val - hi).max(0.0);
        let mut worst: f64 = 0.0;
        for j in 0..net.num_buses() {
            let s = x.injection[j];
            worst = worst
                .max(over(s.re, self.p_min[j], self.p_max[j]))
                .max(over(s.im, self.q_min[j], self.q_max[j]))
                .max(over(x.v[j], self.v_min[j], self.v_max[j]));
        }
        for end in net.all_ends() {
            let i = end.index(net.num_lines());
            worst = worst.max(over(x.ell[i], 0.0, self.ell_max[end.line]));
        }
        worst
    }
}

/// No bus has a finite lower bound on either injection component.
pub fn check_c1(bounds: &OpfBounds) -> bool {
    bounds
        .p_min
        .iter()
        .chain(&bounds.q_min)
        .all(|&b| b == f64::NEG_INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SocpOptions {
    /// Keep only the forward cone of each line. The drop and link equations
    /// force equal gaps at both ends, so the feasible set is unchanged.
    pub single_cone: bool,
}

/// Conic program of the relaxation together with its variable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SocpProgram {
    pub problem: ConicProblem,
    pub layout: Layout,
    pub cost_constant: f64,
    /// Directed ends (in `2L` indexing) that carry a cone.
    pub cone_ends: Vec<usize>,
}

impl SocpProgram {
    pub fn num_vars(&self) -> usize {
        self.problem.num_vars
    }

    pub fn num_cones(&self) -> usize {
        self.cone_ends.len()
    }

    /// Sparse triplet export, see [`ConicProblem::write_triplets`].
    pub fn write_triplets<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.problem.write_triplets(out)
    }
}

pub fn build_socp(
    net: &Network,
    cost: &CostSpec,
    bounds: &OpfBounds,
    options: SocpOptions,
) -> Result<SocpProgram, OpfError> {
    if !net.is_radial() {
        return Err(OpfError::NotRadial);
    }
    cost.validate(net)?;
    bounds.check(net)?;
    let lay = Layout::new(net);
    let nl = net.num_lines();
    let mut pr = ConicProblem::new(lay.len());

    for j in 0..net.num_buses() {
        pr.c[lay.p(j)] = cost.c_p[j];
        pr.c[lay.q(j)] = cost.c_q[j];
    }
    for e in 0..2 * nl {
        pr.c[lay.ell(e)] = cost.c_ell[e];
    }

    // balance: s_j = Σ S_jk
    for j in 0..net.num_buses() {
        let ends = net.ends_at(j);
        let mut re = vec![(lay.p(j), 1.0)];
        let mut im = vec![(lay.q(j), 1.0)];
        for end in ends {
            re.push((lay.big_p(end.index(nl)), -1.0));
            im.push((lay.big_q(end.index(nl)), -1.0));
        }
        pr.add_equality(&re, 0.0);
        pr.add_equality(&im, 0.0);
    }

    // voltage drops at both ends:
    // |α|² v_j − v_k − 2Re(α z*) P + 2Im(α z*) Q + |z|² ℓ = 0
    for end in net.all_ends() {
        let e = net.end_view(end);
        let i = end.index(nl);
        let w = e.alpha * e.z.conj();
        pr.add_equality(
            &[
                (lay.v(e.bus), e.alpha.norm_sqr()),
                (lay.v(e.other), -1.0),
                (lay.big_p(i), -2.0 * w.re),
                (lay.big_q(i), 2.0 * w.im),
                (lay.ell(i), e.z.norm_sqr()),
            ],
            0.0,
        );
    }

    // link: α_f* v_j − z* S_f = (α_r* v_k − z* S_r)*
    for l in 0..nl {
        let (f, r) = (net.end_view(End::forward(l)), net.end_view(End::reverse(l)));
        let z = f.z;
        let (fi, ri) = (l, nl + l);
        pr.add_equality(
            &[
                (lay.v(f.bus), f.alpha.re),
                (lay.big_p(fi), -z.re),
                (lay.big_q(fi), -z.im),
                (lay.v(r.bus), -r.alpha.re),
                (lay.big_p(ri), z.re),
                (lay.big_q(ri), z.im),
            ],
            0.0,
        );
        pr.add_equality(
            &[
                (lay.v(f.bus), -f.alpha.im),
                (lay.big_p(fi), z.im),
                (lay.big_q(fi), -z.re),
                (lay.v(r.bus), -r.alpha.im),
                (lay.big_p(ri), z.im),
                (lay.big_q(ri), -z.re),
            ],
            0.0,
        );
    }

    pr.add_equality(&[(lay.v(net.slack()), 1.0)], 1.0);

    for j in 0..net.num_buses() {
        let boxes = [
            (lay.p(j), bounds.p_min[j], bounds.p_max[j]),
            (lay.q(j), bounds.q_min[j], bounds.q_max[j]),
            (lay.v(j), bounds.v_min[j], bounds.v_max[j]),
        ];
        for (k, (col, lo, hi)) in boxes.into_iter().enumerate() {
            // the slack voltage is pinned; its box only matters if it excludes 1
            if k == 2 && j == net.slack() && lo <= 1.0 && 1.0 <= hi {
                continue;
            }
            if hi.is_finite() {
                pr.add_inequality(&[(col, 1.0)], hi);
            }
            if lo.is_finite() {
                pr.add_inequality(&[(col, -1.0)], -lo);
            }
        }
    }
    // ℓ ≥ 0 follows from the cones; only explicit limits are added
    for end in net.all_ends() {
        let limit = bounds.ell_max[end.line];
        if limit.is_finite() {
            pr.add_inequality(&[(lay.ell(end.index(nl)), 1.0)], limit);
        }
    }

    let mut cone_ends = Vec::with_capacity(2 * nl);
    for end in net.all_ends() {
        if options.single_cone && !end.forward {
            continue;
        }
        let i = end.index(nl);
        let (v, ell) = (lay.v(net.end_view(end).bus), lay.ell(i));
        pr.add_second_order(&[
            (0.0, vec![(v, 1.0), (ell, 1.0)]),
            (0.0, vec![(v, 1.0), (ell, -1.0)]),
            (0.0, vec![(lay.big_p(i), 2.0)]),
            (0.0, vec![(lay.big_q(i), 2.0)]),
        ]);
        cone_ends.push(i);
    }

    Ok(SocpProgram { problem: pr, layout: lay, cost_constant: cost.constant, cone_ends })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

/// Termination measures reported by the conic solver.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal_eq: f64,
    pub primal_cone: f64,
    pub dual: f64,
    pub complementarity: f64,
    pub rel_gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal_eq
            .max(self.primal_cone)
            .max(self.dual)
            .max(self.rel_gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocpSolution {
    pub x: BranchFlowPoint,
    pub objective: f64,
    pub dual_objective: f64,
    /// `v_j ℓ_jk − |S_jk|²` per directed end.
    pub gaps: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt: KktResiduals,
    pub solver: String,
}

pub fn solve_socp(
    net: &Network,
    program: &SocpProgram,
    solver: &dyn ConicSolver,
) -> Result<SocpSolution, OpfError> {
    let sol = solver
        .solve(&program.problem)
        .map_err(|e| OpfError::NumericalFailure(e.to_string()))?;
    match sol.status {
        Status::Solved => {}
        Status::PrimalInfeasible => return Err(OpfError::Infeasible),
        Status::DualInfeasible => return Err(OpfError::Unbounded),
        Status::MaxIterations => return Err(OpfError::IterationLimit),
        Status::NumericalError => {
            return Err(OpfError::NumericalFailure(format!(
                "stalled after {} iterations (residual {:.3e})",
                sol.iterations,
                sol.residuals.max_infeasibility()
            )))
        }
    }
    let x = BranchFlowPoint::from_vector(net, &sol.x)
        .map_err(|e| OpfError::NumericalFailure(e.to_string()))?;
    let r = sol.residuals;
    Ok(SocpSolution {
        gaps: x.conic_gaps(net),
        objective: sol.primal_objective + program.cost_constant,
        dual_objective: sol.dual_objective + program.cost_constant,
        x,
        status: SolveStatus::Optimal,
        iterations: sol.iterations,
        kkt: KktResiduals {
            primal_eq: r.primal_eq,
            primal_cone: r.primal_cone,
            dual: r.dual,
            complementarity: r.complementarity,
            rel_gap: r.rel_gap,
        },
        solver: solver.name().to_string(),
    })
}

/// Feasibility of a point for the relaxation and the box bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// Largest residual of the linear equations (balance, drops, link, slack).
    pub linear_residual: f64,
    /// Smallest conic gap `v ℓ − |S|²`; negative means a cone is violated.
    pub min_gap: f64,
    pub bound_violation: f64,
}

impl Feasibility {
    pub fn holds(&self, tol: f64) -> bool {
        self.linear_residual <= tol && self.min_gap >= -tol && self.bound_violation <= tol
    }
}

pub fn relaxation_feasibility(net: &Network, bounds: &OpfBounds, x: &BranchFlowPoint) -> Feasibility {
    let (linear_residual, min_gap) = match bfm::bfm_residual(net, x) {
        Ok(r) => (r.max_linear(), r.cones.iter().copied().fold(f64::INFINITY, f64::min)),
        Err(_) => (f64::INFINITY, f64::NEG_INFINITY),
    };
    Feasibility { linear_residual, min_gap, bound_violation: bounds.violation(net, x) }
}

/// Perturbs `x_hat` along one line as in the exactness argument:
/// `ℓ_jk −= Re(α_jk) ε`, `S_jk −= z ε/2`, `s_j −= z ε/2`, and likewise at the
/// `k` end. All other entries are copied.
pub fn tighten_step(
    net: &Network,
    x_hat: &BranchFlowPoint,
    line: usize,
    eps: f64,
) -> Result<BranchFlowPoint, OpfError> {
    check_tightening_preconditions(net, x_hat, line)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(OpfError::InvalidEpsilon(eps));
    }
    Ok(apply_tightening(net, x_hat, line, eps))
}

fn apply_tightening(net: &Network, x_hat: &BranchFlowPoint, line: usize, eps: f64) -> BranchFlowPoint {
    let nl = net.num_lines();
    let mut x = x_hat.clone();
    let shift = net.line(line).z_series() * (eps / 2.0);
    for end in [End::forward(line), End::reverse(line)] {
        let e = net.end_view(end);
        let i = end.index(nl);
        x.ell[i] -= e.alpha.re * eps;
        x.power[i] -= shift;
        x.injection[e.bus] -= shift;
    }
    x
}

pub fn check_tightening_preconditions(net: &Network, x: &BranchFlowPoint, line: usize) -> Result<(), OpfError> {
    x.check_dimension(net)
        .map_err(|e| OpfError::Dimension(e.to_string()))?;
    if line >= net.num_lines() {
        return Err(OpfError::Dimension(format!("line {line} out of range")));
    }
    let z = net.line(line).z_series();
    if z.re < 0.0 || z.im < 0.0 {
        return Err(OpfError::NegativeImpedance { line });
    }
    let (af, ar) = net.alpha(line);
    if !(af.re > 0.0 && ar.re > 0.0) {
        return Err(OpfError::C2ViolatedOnLine { line });
    }
    let nl = net.num_lines();
    if !(x.ell[line] > 0.0 && x.ell[nl + line] > 0.0) {
        return Err(OpfError::ZeroCurrent { line });
    }
    let gaps = x.conic_gaps(net);
    let (gap_fwd, gap_rev) = (gaps[line], gaps[nl + line]);
    if !(gap_fwd > 0.0 && gap_rev > 0.0) {
        return Err(OpfError::GapNotPositive { line, gap_fwd, gap_rev });
    }
    Ok(())
}

/// Step size for [`tighten_step`] found by bisection on the largest
/// `ε ≤ min ℓ / Re α` keeping both cones of the line and all bounds
/// satisfied; half of that value is returned so the result is strictly
/// inside the cones.
pub fn choose_epsilon(net: &Network, bounds: &OpfBounds, x_hat: &BranchFlowPoint, line: usize) -> Result<f64, OpfError> {
    check_tightening_preconditions(net, x_hat, line)?;
    let nl = net.num_lines();
    let (af, ar) = net.alpha(line);
    let hi_start = (x_hat.ell[line] / af.re).min(x_hat.ell[nl + line] / ar.re);
    let base_violation = bounds.violation(net, x_hat);
    let ok = |eps: f64| {
        let x = apply_tightening(net, x_hat, line, eps);
        let gaps = x.conic_gaps(net);
        gaps[line] >= 0.0
            && gaps[nl + line] >= 0.0
            && x.ell[line] >= 0.0
            && x.ell[nl + line] >= 0.0
            && bounds.violation(net, &x) <= base_violation
    };
    let (mut lo, mut hi) = (0.0, hi_start);
    if ok(hi) {
        return Ok(hi / 2.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo / 2.0)
}

/// Successive terms of the equality chains in the exactness argument,
/// evaluated numerically for one tightening step. Each chain's `spread` is
/// the largest distance between consecutive terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TighteningChains {
    pub balance_from: Vec<ComplexValue>,
    pub balance_to: Vec<ComplexValue>,
    pub drop_fwd: Vec<f64>,
    pub drop_rev: Vec<f64>,
    pub link: Vec<ComplexValue>,
    /// `ṽℓ̃ − |S̃|²` expanded around `x̂`, per end.
    pub cone_fwd: Vec<f64>,
    pub cone_rev: Vec<f64>,
    /// `f(x̃) − f(x̂)` evaluated directly and in closed form.
    pub cost_delta: [f64; 2],
}

fn spread_c(terms: &[ComplexValue]) -> f64 {
    terms.windows(2).fold(0.0, |m, w| m.max((w[1] - w[0]).norm()))
}

fn spread_r(terms: &[f64]) -> f64 {
    terms.windows(2).fold(0.0, |m, w| m.max((w[1] - w[0]).abs()))
}

impl TighteningChains {
    pub fn max_spread(&self) -> f64 {
        [
            spread_c(&self.balance_from),
            spread_c(&self.balance_to),
            spread_r(&self.drop_fwd),
            spread_r(&self.drop_rev),
            spread_c(&self.link),
            spread_r(&self.cone_fwd),
            spread_r(&self.cone_rev),
            spread_r(&self.cost_delta),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn cost_decrease(&self) -> f64 {
        -self.cost_delta[0]
    }
}

pub fn tightening_chains(
    net: &Network,
    cost: &CostSpec,
    x_hat: &BranchFlowPoint,
    x_tilde: &BranchFlowPoint,
    line: usize,
    eps: f64,
) -> TighteningChains {
    let nl = net.num_lines();
    let (f, r) = (End::forward(line), End::reverse(line));
    let (ef, er) = (net.end_view(f), net.end_view(r));
    let z = ef.z;
    let half = z * (eps / 2.0);
    let sum_at = |x: &BranchFlowPoint, bus: usize| -> ComplexValue {
        net.ends_at(bus).iter().map(|e| x.power[e.index(nl)]).sum()
    };
    let balance = |bus: usize| {
        vec![
            x_tilde.injection[bus],
            -half + x_hat.injection[bus],
            -half + sum_at(x_hat, bus),
            sum_at(x_tilde, bus),
        ]
    };
    let drop = |e: &crate::network::EndView, i: usize| {
        let a2 = e.alpha.norm_sqr();
        let w = e.alpha * e.z.conj();
        let reala = e.alpha.re;
        vec![
            a2 * x_tilde.v[e.bus] - x_tilde.v[e.other],
            a2 * x_hat.v[e.bus] - x_hat.v[e.other],
            2.0 * (w * x_hat.power[i]).re - e.z.norm_sqr() * x_hat.ell[i],
            2.0 * (w * (x_tilde.power[i] + half)).re - e.z.norm_sqr() * (x_tilde.ell[i] + reala * eps),
            2.0 * (w * x_tilde.power[i]).re - e.z.norm_sqr() * x_tilde.ell[i],
        ]
    };
    let (fi, ri) = (line, nl + line);
    let tail = z.norm_sqr() * eps / 2.0;
    let link = vec![
        ef.alpha.conj() * x_tilde.v[ef.bus] - z.conj() * x_tilde.power[fi],
        ef.alpha.conj() * x_hat.v[ef.bus] - z.conj() * (x_hat.power[fi] - half),
        (ef.alpha.conj() * x_hat.v[ef.bus] - z.conj() * x_hat.power[fi]) + tail,
        (er.alpha.conj() * x_hat.v[er.bus] - z.conj() * x_hat.power[ri]).conj() + tail,
        (er.alpha.conj() * x_hat.v[er.bus] - z.conj() * (x_hat.power[ri] - half)).conj(),
        (er.alpha.conj() * x_tilde.v[er.bus] - z.conj() * x_tilde.power[ri]).conj(),
    ];
    let cone = |e: &crate::network::EndView, i: usize| {
        let (v, ell, s) = (x_hat.v[e.bus], x_hat.ell[i], x_hat.power[i]);
        vec![
            x_tilde.v[e.bus] * x_tilde.ell[i] - x_tilde.power[i].norm_sqr(),
            v * (ell - e.alpha.re * eps) - (s - half).norm_sqr(),
            v * ell - s.norm_sqr() - eps * ((e.alpha * v - z.conj() * s).re + z.norm_sqr() * eps / 4.0),
        ]
    };
    let closed_form = -eps * (cost.c_ell[fi] * ef.alpha.re + cost.c_ell[ri] * er.alpha.re)
        - eps / 2.0 * ((cost.c_p[ef.bus] + cost.c_p[er.bus]) * z.re + (cost.c_q[ef.bus] + cost.c_q[er.bus]) * z.im);
    TighteningChains {
        balance_from: balance(ef.bus),
        balance_to: balance(er.bus),
        drop_fwd: drop(&ef, fi),
        drop_rev: drop(&er, ri),
        link,
        cone_fwd: cone(&ef, fi),
        cone_rev: cone(&er, ri),
        cost_delta: [cost.evaluate(x_tilde) - cost.evaluate(x_hat), closed_form],
    }
}

/// A strictly cheaper feasible point built from a relaxation point with a
/// positive gap.
#[derive(Debug, Clone, PartialEq)]
pub struct TighteningWitness {
    pub line: usize,
    pub epsilon: f64,
    pub cost_before: f64,
    pub cost_after: f64,
    pub point: BranchFlowPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactnessReport {
    pub max_gap: f64,
    pub gaps: Vec<f64>,
    /// `max_l |gap_fwd − gap_rev|`.
    pub max_gap_asymmetry: f64,
    /// Gap threshold used for the verdict.
    pub threshold: f64,
    pub c1_holds: bool,
    pub c2_holds: bool,
    /// `r, x ≥ 0` on every line.
    pub impedance_nonnegative: bool,
    pub exact: bool,
    pub recovered_phasors: Option<PhasorSolution>,
    /// `max |bim_residual|` of the recovered phasors.
    pub recovered_residual: Option<f64>,
    pub recovery_error: Option<String>,
    /// Ends with `ℓ = 0` in the solution, where the exactness argument
    /// does not apply.
    pub zero_current_ends: Vec<usize>,
    pub witness: Option<TighteningWitness>,
}

/// Checks whether a relaxation optimum is a power-flow point.
///
/// `tol` is relative: the verdict is `max_gap ≤ tol · max(1, |objective|)`.
/// Exact solutions are mapped back to phasors; otherwise, if the
/// preconditions of the tightening argument hold on the worst line, a
/// strictly cheaper feasible point is attached as a witness.
pub fn certify_exactness(
    net: &Network,
    bounds: &OpfBounds,
    cost: &CostSpec,
    sol: &SocpSolution,
    tol: f64,
) -> ExactnessReport {
    let nl = net.num_lines();
    let gaps = sol.x.conic_gaps(net);
    let (worst_end, max_gap) = gaps
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(we, wg), (e, g)| if g > wg { (e, g) } else { (we, wg) });
    let max_gap = max_gap.max(0.0);
    let max_gap_asymmetry = (0..nl).fold(0.0, |m: f64, l| m.max((gaps[l] - gaps[nl + l]).abs()));
    let threshold = tol * sol.objective.abs().max(1.0);
    let zero_current_ends = (0..2 * nl).filter(|&e| sol.x.ell[e] <= 0.0).collect();
    let mut report = ExactnessReport {
        max_gap,
        gaps,
        max_gap_asymmetry,
        threshold,
        c1_holds: check_c1(bounds),
        c2_holds: net.check_c2().holds,
        impedance_nonnegative: net.negative_impedance_lines().is_empty(),
        exact: max_gap <= threshold,
        recovered_phasors: None,
        recovered_residual: None,
        recovery_error: None,
        zero_current_ends,
        witness: None,
    };
    if report.exact {
        let tolerances = Tolerances { membership: threshold.max(1e-8), angle: 1e-6, roundtrip: 1e-8 };
        match equivalence::phi2(net, &sol.x, &tolerances) {
            Ok(ph) => {
                report.recovered_residual = Some(bim::max_bim_residual(net, &ph.voltage, &ph.injection));
                report.recovered_phasors = Some(ph);
            }
            Err(e) => {
                report.exact = false;
                report.recovery_error = Some(e.to_string());
            }
        }
    } else {
        let line = worst_end % nl.max(1);
        if let Ok(eps) = choose_epsilon(net, bounds, &sol.x, line) {
            if eps > 0.0 {
                let point = apply_tightening(net, &sol.x, line, eps);
                report.witness = Some(TighteningWitness {
                    line,
                    epsilon: eps,
                    cost_before: cost.evaluate(&sol.x),
                    cost_after: cost.evaluate(&point),
                    point,
                });
            }
        }
    }
    report
}
