//! Seeded random networks shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shuntflow::bim::{solve_pf_newton, NewtonOptions, PfSolution};
use shuntflow::case_io::Case;
use shuntflow::bfm::BranchFlowPoint;
use shuntflow::network::{Bus, ComplexValue, End, LineParams, Network};

pub fn c(re: f64, im: f64) -> ComplexValue {
    ComplexValue::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    /// Upper end of the uniform draw for `|yᵐ/yˢ|` at each end.
    pub shunt_ratio_max: f64,
    pub p_load_max: f64,
    /// Multiplies every sampled load.
    pub load_scale: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self { shunt_ratio_max: 1e-2, p_load_max: 0.02, load_scale: 1.0 }
    }
}

/// `|z|` of the longest line the generator draws.
const LONGEST_LINE: f64 = 0.094_339_811_320_566_04;

fn random_line(rng: &mut ChaCha8Rng, from: u32, to: u32, opts: &GenOptions) -> LineParams {
    let z = c(rng.gen_range(0.005..0.05), rng.gen_range(0.005..0.08));
    let ys = z.inv().norm();
    // charging grows with length and series admittance falls with it, so the
    // ratio scales like |z|²; the longest lines reach the full range
    let length = (z.norm() / LONGEST_LINE).min(1.0);
    let shunt = |rng: &mut ChaCha8Rng| {
        if opts.shunt_ratio_max == 0.0 {
            return c(0.0, 0.0);
        }
        let mag = rng.gen_range(0.0..=opts.shunt_ratio_max) * length * length * ys;
        // mostly capacitive charging, sometimes inductive, with a little conductance
        let angle: f64 = if rng.gen_bool(0.85) {
            rng.gen_range(1.4..std::f64::consts::FRAC_PI_2)
        } else {
            -rng.gen_range(1.4..std::f64::consts::FRAC_PI_2)
        };
        ComplexValue::from_polar(mag, angle)
    };
    let (a, b) = (shunt(rng), shunt(rng));
    LineParams::from_impedance(from, to, z).with_shunts(a, b)
}

fn buses_with_loads(rng: &mut ChaCha8Rng, n: usize, opts: &GenOptions) -> (Vec<Bus>, Vec<ComplexValue>) {
    let mut buses = vec![Bus::unbounded(1, 0.81, 1.21)];
    let mut injection = vec![c(0.0, 0.0)];
    for id in 2..=n as u32 {
        let p = rng.gen_range(0.0..opts.p_load_max) * opts.load_scale;
        let q = rng.gen_range(0.0..0.5 * opts.p_load_max) * opts.load_scale;
        buses.push(Bus { p_max: -p, q_max: -q, ..Bus::unbounded(id, 0.81, 1.21) });
        injection.push(c(-p, -q));
    }
    (buses, injection)
}

/// Random tree on `n` buses rooted at bus 1. About one line in five is
/// oriented child → parent.
pub fn random_radial(rng: &mut ChaCha8Rng, n: usize, opts: &GenOptions) -> Case {
    let (buses, injection) = buses_with_loads(rng, n, opts);
    let mut lines = Vec::with_capacity(n - 1);
    for k in 2..=n as u32 {
        let parent = rng.gen_range(1..k);
        let (f, t) = if rng.gen_bool(0.2) { (k, parent) } else { (parent, k) };
        lines.push(random_line(rng, f, t, opts));
    }
    Case::new(Network::build(buses, lines, 1).expect("random tree is valid"), injection)
}

/// Random tree plus `extra` chords between distinct non-adjacent buses.
pub fn random_meshed(rng: &mut ChaCha8Rng, n: usize, extra: usize, opts: &GenOptions) -> Case {
    let tree = random_radial(rng, n, opts);
    let mut lines = tree.network.lines().to_vec();
    let mut added = 0;
    let mut attempts = 0;
    while added < extra && attempts < 1000 {
        attempts += 1;
        let a = rng.gen_range(1..=n as u32);
        let b = rng.gen_range(1..=n as u32);
        let taken = lines
            .iter()
            .any(|l| (l.from_bus == a && l.to_bus == b) || (l.from_bus == b && l.to_bus == a));
        if a == b || taken {
            continue;
        }
        lines.push(random_line(rng, a, b, opts));
        added += 1;
    }
    let net = Network::build(tree.network.buses().to_vec(), lines, 1).expect("meshed graph is valid");
    Case { network: net, ..tree }
}

pub fn solve(case: &Case) -> PfSolution {
    solve_pf_newton(&case.network, &case.injection, &NewtonOptions::default()).expect("power flow converges")
}

/// Copy of `net` with every shunt scaled by `factor`.
pub fn scale_shunts(net: &Network, factor: f64) -> Network {
    let lines = net
        .lines()
        .iter()
        .map(|l| l.clone().with_shunts(l.y_shunt_from * factor, l.y_shunt_to * factor))
        .collect();
    Network::build(net.buses().to_vec(), lines, net.buses()[net.slack()].id).unwrap()
}

/// Inverse of the tightening step: raises `ℓ` on both ends of `line` by
/// `Re(α)·δ` and shifts `S` and `s` by `zδ/2`, leaving every linear equation
/// satisfied while opening both conic gaps.
pub fn relax(net: &Network, x: &BranchFlowPoint, line: usize, delta: f64) -> BranchFlowPoint {
    let nl = net.num_lines();
    let mut out = x.clone();
    let shift = net.line(line).z_series() * (delta / 2.0);
    for end in [End::forward(line), End::reverse(line)] {
        let e = net.end_view(end);
        let i = end.index(nl);
        out.ell[i] += e.alpha.re * delta;
        out.power[i] += shift;
        out.injection[e.bus] += shift;
    }
    out
}

/// Builds a two-bus line and a point that satisfies both drop equations and
/// the link equation by construction, with arbitrary `ℓ_jk`.
pub fn constructed_point(
    z: ComplexValue,
    shunts: (ComplexValue, ComplexValue),
    vj: f64,
    sjk: ComplexValue,
    ljk: f64,
) -> (Network, BranchFlowPoint) {
    let buses = vec![Bus::unbounded(1, 0.5, 1.5), Bus::unbounded(2, 0.1, 5.0)];
    let net = Network::build(buses, vec![LineParams::from_impedance(1, 2, z).with_shunts(shunts.0, shunts.1)], 1).unwrap();
    let (af, ar) = net.alpha(0);
    let vk = af.norm_sqr() * vj - 2.0 * (af * z.conj() * sjk).re + z.norm_sqr() * ljk;
    let wjk = af.conj() * vj - z.conj() * sjk;
    let skj = (ar.conj() * vk - wjk.conj()) / z.conj();
    let lkj = (vj - ar.norm_sqr() * vk + 2.0 * (ar * z.conj() * skj).re) / z.norm_sqr();
    let x = BranchFlowPoint {
        injection: vec![sjk, skj],
        v: vec![vj, vk],
        ell: vec![ljk, lkj],
        power: vec![sjk, skj],
    };
    (net, x)
}
