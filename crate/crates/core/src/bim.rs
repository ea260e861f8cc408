//! Bus injection model: nodal power balance in terms of voltage phasors,
//! a polar Newton-Raphson power-flow solver, and the branch currents and
//! powers of the Π-model lines.
//!
//! Injections follow the generation-positive convention: `s_j > 0` is power
//! injected into the network at bus `j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::network::{ComplexValue, End, Network};

/// Phasor-domain power-flow point `(s, V, I, S)`.
///
/// `current` and `power` are sending-end values for all `2L` line ends,
/// forward block first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasorSolution {
    pub voltage: Vec<ComplexValue>,
    pub injection: Vec<ComplexValue>,
    pub current: Vec<ComplexValue>,
    pub power: Vec<ComplexValue>,
}

impl PhasorSolution {
    /// Completes `(s, V)` with branch quantities from Kirchhoff's and Ohm's laws.
    pub fn from_voltages(net: &Network, voltage: Vec<ComplexValue>, injection: Vec<ComplexValue>) -> Self {
        let BranchQuantities { current, power } = branch_quantities(net, &voltage);
        Self { voltage, injection, current, power }
    }

    /// `V ≡ 1∠0°` with the injections that flat voltage implies.
    pub fn flat(net: &Network) -> Self {
        let voltage = vec![ComplexValue::new(1.0, 0.0); net.num_buses()];
        let injection = bus_power(net, &voltage);
        Self::from_voltages(net, voltage, injection)
    }

    pub fn max_abs_difference(&self, other: &PhasorSolution) -> f64 {
        let pairs = [
            (&self.voltage, &other.voltage),
            (&self.injection, &other.injection),
            (&self.current, &other.current),
            (&self.power, &other.power),
        ];
        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).norm());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchQuantities {
    pub current: Vec<ComplexValue>,
    pub power: Vec<ComplexValue>,
}

/// Residuals of the complex branch flow equations for a phasor point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasorResidual {
    /// `max |s_j − Σ S_jk|`
    pub balance: f64,
    /// `max |S_jk − V_j I_jk*|`
    pub power_definition: f64,
    /// `max |I_jk − yˢ(V_j − V_k) − yᵐ_jk V_j|`
    pub kirchhoff: f64,
    /// `|V_slack − 1|`
    pub slack: f64,
}

impl PhasorResidual {
    pub fn max(&self) -> f64 {
        self.balance
            .max(self.power_definition)
            .max(self.kirchhoff)
            .max(self.slack)
    }
}

/// Dense bus admittance matrix including line shunts.
pub fn admittance_matrix(net: &Network) -> DMatrix<ComplexValue> {
    let n = net.num_buses();
    let mut y = DMatrix::from_element(n, n, ComplexValue::new(0.0, 0.0));
    for (l, line) in net.lines().iter().enumerate() {
        let (j, k) = net.line_ends(l);
        y[(j, j)] += line.y_series + line.y_shunt_from;
        y[(k, k)] += line.y_series + line.y_shunt_to;
        y[(j, k)] -= line.y_series;
        y[(k, j)] -= line.y_series;
    }
    y
}

/// Right-hand side of the nodal balance for every bus:
/// `Σ_k (yˢ)*(|V_j|² − V_j V_k*) + Σ_k (yᵐ_jk)* |V_j|²`.
pub fn bus_power(net: &Network, v: &[ComplexValue]) -> Vec<ComplexValue> {
    let mut out = vec![ComplexValue::new(0.0, 0.0); net.num_buses()];
    for end in net.all_ends() {
        let e = net.end_view(end);
        let vj = v[e.bus];
        let vk = v[e.other];
        out[e.bus] += e.y_series.conj() * (vj.norm_sqr() - vj * vk.conj())
            + e.y_shunt.conj() * vj.norm_sqr();
    }
    out
}

/// `s_j − Σ_k (yˢ)*(|V_j|² − V_j V_k*) − Σ_k (yᵐ_jk)* |V_j|²` per bus.
/// Zero exactly on power-flow solutions.
pub fn bim_residual(net: &Network, v: &[ComplexValue], s: &[ComplexValue]) -> Vec<ComplexValue> {
    bus_power(net, v)
        .into_iter()
        .zip(s)
        .map(|(calc, s)| s - calc)
        .collect()
}

pub fn max_bim_residual(net: &Network, v: &[ComplexValue], s: &[ComplexValue]) -> f64 {
    bim_residual(net, v, s)
        .iter()
        .fold(0.0, |m, r| m.max(r.norm()))
}

/// Sending-end currents `I_jk = yˢ(V_j − V_k) + yᵐ_jk V_j` and powers
/// `S_jk = V_j I_jk*` at both ends of every line.
pub fn branch_quantities(net: &Network, v: &[ComplexValue]) -> BranchQuantities {
    let m = 2 * net.num_lines();
    let mut current = vec![ComplexValue::new(0.0, 0.0); m];
    let mut power = vec![ComplexValue::new(0.0, 0.0); m];
    for end in net.all_ends() {
        let e = net.end_view(end);
        let i = e.y_series * (v[e.bus] - v[e.other]) + e.y_shunt * v[e.bus];
        let idx = end.index(net.num_lines());
        current[idx] = i;
        power[idx] = v[e.bus] * i.conj();
    }
    BranchQuantities { current, power }
}

/// Per line end, `|V_j V_k* − (α_jk* |V_j|² − z* S_jk)|`.
pub fn voltage_product_mismatch(net: &Network, v: &[ComplexValue], power: &[ComplexValue]) -> Vec<f64> {
    net.all_ends()
        .map(|end| {
            let e = net.end_view(end);
            let lhs = v[e.bus] * v[e.other].conj();
            let rhs = e.alpha.conj() * v[e.bus].norm_sqr()
                - e.z.conj() * power[end.index(net.num_lines())];
            (lhs - rhs).norm()
        })
        .collect()
}

/// Residuals of the complex branch flow model (balance, power definition,
/// Kirchhoff) and the slack reference.
pub fn phasor_residual(net: &Network, x: &PhasorSolution) -> PhasorResidual {
    let nl = net.num_lines();
    let mut res = PhasorResidual {
        slack: (x.voltage[net.slack()] - ComplexValue::new(1.0, 0.0)).norm(),
        ..Default::default()
    };
    for j in 0..net.num_buses() {
        let sum: ComplexValue = net.ends_at(j).iter().map(|e| x.power[e.index(nl)]).sum();
        res.balance = res.balance.max((x.injection[j] - sum).norm());
    }
    for end in net.all_ends() {
        let e = net.end_view(end);
        let idx = end.index(nl);
        let i = e.y_series * (x.voltage[e.bus] - x.voltage[e.other]) + e.y_shunt * x.voltage[e.bus];
        res.kirchhoff = res.kirchhoff.max((x.current[idx] - i).norm());
        res.power_definition = res
            .power_definition
            .max((x.power[idx] - x.voltage[e.bus] * x.current[idx].conj()).norm());
    }
    res
}

/// Loss split of one line: `S_jk + S_kj` = series loss + both shunt losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineLoss {
    /// `|V_j − V_k|² (yˢ)*`
    pub series: ComplexValue,
    /// `|V_j|² (yᵐ_jk)*`
    pub shunt_from: ComplexValue,
    /// `|V_k|² (yᵐ_kj)*`
    pub shunt_to: ComplexValue,
}

impl LineLoss {
    pub fn total(&self) -> ComplexValue {
        self.series + self.shunt_from + self.shunt_to
    }
}

pub fn line_losses(net: &Network, v: &[ComplexValue]) -> Vec<LineLoss> {
    net.lines()
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let (j, k) = net.line_ends(l);
            LineLoss {
                series: (v[j] - v[k]).norm_sqr() * line.y_series.conj(),
                shunt_from: v[j].norm_sqr() * line.y_shunt_from.conj(),
                shunt_to: v[k].norm_sqr() * line.y_shunt_to.conj(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Convergence tolerance on the per-unit power mismatch (max norm).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfSolution {
    pub phasor: PhasorSolution,
    pub iterations: usize,
    /// Largest `|bim_residual|` at the returned point, slack included.
    pub max_residual: f64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PfError {
    #[error("injection vector has {got} entries, network has {expected} buses")]
    Dimension { expected: usize, got: usize },
    #[error("Newton iteration did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
}

/// Solves the bus injection model for voltages given the injections at all
/// non-slack buses (the slack entry of `injection` is ignored and replaced
/// by the computed slack injection). Polar Newton-Raphson from flat start.
pub fn solve_pf_newton(
    net: &Network,
    injection: &[ComplexValue],
    opts: &NewtonOptions,
) -> Result<PfSolution, PfError> {
    let n = net.num_buses();
    if injection.len() != n {
        return Err(PfError::Dimension { expected: n, got: injection.len() });
    }
    let slack = net.slack();
    let pq: Vec<usize> = (0..n).filter(|&b| b != slack).collect();
    let npq = pq.len();
    let ybus = admittance_matrix(net);

    let mut angle = vec![0.0; n];
    let mut magnitude = vec![1.0; n];
    let voltage = |angle: &[f64], magnitude: &[f64]| -> Vec<ComplexValue> {
        (0..n)
            .map(|b| ComplexValue::from_polar(magnitude[b], angle[b]))
            .collect()
    };

    let mut iterations = 0;
    loop {
        let v = voltage(&angle, &magnitude);
        let vv = DVector::from_vec(v.clone());
        let ibus = &ybus * &vv;
        let calc: Vec<ComplexValue> = (0..n).map(|b| v[b] * ibus[b].conj()).collect();
        let mut mismatch = DVector::zeros(2 * npq);
        for (r, &b) in pq.iter().enumerate() {
            let d = calc[b] - injection[b];
            mismatch[r] = d.re;
            mismatch[npq + r] = d.im;
        }
        let worst = mismatch.amax();
        if !worst.is_finite() {
            return Err(PfError::NonConvergence { iterations, mismatch: worst });
        }
        if worst <= opts.tol {
            let mut s = injection.to_vec();
            s[slack] = calc[slack];
            let max_residual = max_bim_residual(net, &v, &s);
            if max_residual > opts.tol * 10.0 {
                return Err(PfError::NonConvergence { iterations, mismatch: max_residual });
            }
            return Ok(PfSolution {
                phasor: PhasorSolution::from_voltages(net, v, s),
                iterations,
                max_residual,
            });
        }
        if iterations >= opts.max_iter {
            return Err(PfError::NonConvergence { iterations, mismatch: worst });
        }
        iterations += 1;

        // dS/dθ = i diag(V) conj(diag(I) − Y diag(V))
        // dS/d|V| = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        let mut jac = DMatrix::zeros(2 * npq, 2 * npq);
        for (r, &j) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let unit_k = v[k] / magnitude[k];
                let mut d_angle = -ComplexValue::i() * v[j] * (ybus[(j, k)] * v[k]).conj();
                let mut d_mag = v[j] * (ybus[(j, k)] * unit_k).conj();
                if j == k {
                    d_angle += ComplexValue::i() * v[j] * ibus[j].conj();
                    d_mag += ibus[j].conj() * unit_k;
                }
                jac[(r, c)] = d_angle.re;
                jac[(r, npq + c)] = d_mag.re;
                jac[(npq + r, c)] = d_angle.im;
                jac[(npq + r, npq + c)] = d_mag.im;
            }
        }
        let lu = jac.lu();
        let step = lu
            .solve(&(-mismatch))
            .ok_or(PfError::SingularJacobian { iteration: iterations })?;
        for (r, &b) in pq.iter().enumerate() {
            angle[b] += step[r];
            magnitude[b] += step[npq + r];
        }
    }
}

/// Current through the series element of line `l`, `yˢ(V_j − V_k)`.
pub fn series_current(net: &Network, v: &[ComplexValue], l: usize) -> ComplexValue {
    let (j, k) = net.line_ends(l);
    net.line(l).y_series * (v[j] - v[k])
}

/// Sending-end power of a single end.
pub fn end_power(net: &Network, v: &[ComplexValue], end: End) -> ComplexValue {
    let e = net.end_view(end);
    let i = e.y_series * (v[e.bus] - v[e.other]) + e.y_shunt * v[e.bus];
    v[e.bus] * i.conj()
}
