use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use shuntflow::bfm;
use shuntflow::bim::{self, NewtonOptions, PfError};
use shuntflow::case_io::{self, fmt_f64, Case, SolutionDocument, Table};
use shuntflow::equivalence::{self, Tolerances};
use shuntflow::lindistflow;
use shuntflow::opf::{self, CostSpec, OpfBounds, OpfError, SocpOptions};
use shuntflow::Network;
use shuntflow_conic::InteriorPoint;

use crate::{CaseRun, Model};

const OK: u8 = 0;
const CASE_ERROR: u8 = 2;
const PF_FAILED: u8 = 3;
const OPF_FAILED: u8 = 4;
const OUT_OF_SCOPE: u8 = 5;

/// Report text and warnings for one case.
struct Report {
    label: String,
    run: CaseRun,
}

impl Report {
    fn new(path: &Path) -> Self {
        let label = path.display().to_string();
        let mut run = CaseRun::default();
        let _ = writeln!(run.stdout, "case: {label}");
        Self { label, run }
    }

    fn line(&mut self, text: impl AsRef<str>) {
        self.run.stdout.push_str(text.as_ref());
        self.run.stdout.push('\n');
    }

    fn warn(&mut self, text: impl AsRef<str>) {
        let _ = writeln!(self.run.stderr, "warning: {}: {}", self.label, text.as_ref());
    }

    fn fail(mut self, code: u8, text: impl AsRef<str>) -> CaseRun {
        let _ = writeln!(self.run.stderr, "error: {}: {}", self.label, text.as_ref());
        self.run.code = code;
        self.run
    }

    fn finish(mut self, code: u8) -> CaseRun {
        self.run.code = code;
        self.run
    }
}

fn load(path: &Path, report: &mut Report) -> Result<Case, String> {
    let case = case_io::load_case(path).map_err(|e| e.to_string())?;
    let net = &case.network;
    report.line(format!(
        "buses: {}, lines: {}, slack: {}",
        net.num_buses(),
        net.num_lines(),
        net.buses()[net.slack()].id
    ));
    Ok(case)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into())
}

/// Writes `files` under `dir`, creating it if needed.
fn write_outputs(dir: &Path, files: Vec<(String, String)>) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn line_label(net: &Network, l: usize) -> String {
    let (j, k) = net.line_ends(l);
    format!("line {l} ({} -> {})", net.buses()[j].id, net.buses()[k].id)
}

pub fn validate(path: &Path) -> CaseRun {
    let mut rep = Report::new(path);
    let case = match load(path, &mut rep) {
        Ok(c) => c,
        Err(e) => return rep.fail(CASE_ERROR, e),
    };
    let net = &case.network;
    rep.line("connected: yes");
    let cycles = net.fundamental_cycles().len();
    if cycles == 0 {
        rep.line("topology: radial");
    } else {
        let noun = if cycles == 1 { "cycle" } else { "cycles" };
        rep.line(format!("topology: meshed, {cycles} independent {noun}"));
    }

    let c2 = net.check_c2();
    if c2.holds {
        rep.line("Re alpha > 0 at both ends: holds on every line");
    } else {
        let bad: Vec<usize> = (0..net.num_lines()).filter(|&l| !c2.per_line[l]).collect();
        rep.line(format!("Re alpha > 0 at both ends: fails on {} lines", bad.len()));
        for l in bad {
            let (a, b) = net.alpha(l);
            rep.warn(format!(
                "{}: Re alpha = ({}, {}); relaxation exactness is not guaranteed",
                line_label(net, l),
                sci(a.re),
                sci(b.re)
            ));
        }
    }

    let negative = net.negative_impedance_lines();
    if negative.is_empty() {
        rep.line("r, x >= 0: holds on every line");
    } else {
        rep.line(format!("r, x >= 0: fails on {} lines", negative.len()));
        for l in negative {
            let z = net.line(l).z_series();
            rep.warn(format!(
                "{}: (r, x) = ({}, {}) is not a passive series impedance",
                line_label(net, l),
                sci(z.re),
                sci(z.im)
            ));
        }
    }

    let max_ratio = net.lines().iter().map(|l| l.shunt_ratio()).fold(0.0, f64::max);
    rep.line(format!("max |y_shunt / y_series|: {}", sci(max_ratio)));
    rep.finish(OK)
}

pub fn pf(path: &Path, model: Model, out: Option<&Path>, tol: f64) -> CaseRun {
    let mut rep = Report::new(path);
    let case = match load(path, &mut rep) {
        Ok(c) => c,
        Err(e) => return rep.fail(CASE_ERROR, e),
    };
    let net = &case.network;
    let sol = match bim::solve_pf_newton(net, &case.injection, &NewtonOptions::default()) {
        Ok(s) => s,
        Err(e @ (PfError::NonConvergence { .. } | PfError::SingularJacobian { .. })) => {
            return rep.fail(PF_FAILED, e.to_string())
        }
        Err(e) => return rep.fail(CASE_ERROR, e.to_string()),
    };
    rep.line(format!("newton: converged in {} iterations", sol.iterations));
    rep.line(format!("bus injection residual: {}", sci(sol.max_residual)));
    let ph = sol.phasor;
    let name = stem(path);
    let mut files = vec![
        (format!("{name}.phasor.json"), SolutionDocument::phasor(ph.clone()).to_json()),
        (format!("{name}.buses.csv"), case_io::phasor_bus_table(net, &ph).to_csv_string()),
        (format!("{name}.ends.csv"), case_io::phasor_end_table(net, &ph).to_csv_string()),
    ];
    let mut code = OK;

    if model == Model::BfmCheck {
        let tolerances = Tolerances { membership: tol, angle: bfm::DEFAULT_ANGLE_TOL, roundtrip: tol };
        match check_branch_flow(net, &ph, &tolerances, &mut rep) {
            Ok((point, pass)) => {
                files.push((format!("{name}.branch_flow.json"), SolutionDocument::branch_flow(point).to_json()));
                if !pass {
                    rep.warn(format!("branch flow checks exceed the tolerance {}", sci(tol)));
                    code = PF_FAILED;
                }
            }
            Err(e) => return rep.fail(PF_FAILED, e),
        }
    }

    if let Some(dir) = out {
        files.push((format!("{name}.pf.txt"), rep.run.stdout.clone()));
        if let Err(e) = write_outputs(dir, files) {
            return rep.fail(CASE_ERROR, e);
        }
    }
    rep.finish(code)
}

/// Runs the phasor → branch flow checks and prints one line per family.
fn check_branch_flow(
    net: &Network,
    ph: &bim::PhasorSolution,
    tol: &Tolerances,
    rep: &mut Report,
) -> Result<(bfm::BranchFlowPoint, bool), String> {
    let x = equivalence::phi1(net, ph, tol.membership).map_err(|e| e.to_string())?;
    let r = bfm::bfm_residual(net, &x).map_err(|e| e.to_string())?;
    rep.line(format!("branch flow residual, balance: {}", sci(r.max_balance())));
    rep.line(format!("branch flow residual, cones: {}", sci(r.max_cones())));
    rep.line(format!("branch flow residual, drops: {}", sci(r.max_drop())));
    rep.line(format!("branch flow residual, link: {}", sci(r.max_link())));
    let beta = bfm::beta(net, &x).map_err(|e| e.to_string())?;
    let cycles = bfm::cycle_condition(net, &beta, tol.angle).map_err(|e| e.to_string())?;
    if cycles.cycle_sums.is_empty() {
        rep.line("cycle condition: vacuous (radial)");
    } else {
        let worst = cycles.cycle_sums.iter().fold(0.0, |m: f64, s| m.max(s.abs()));
        rep.line(format!("cycle condition: {} cycles, max |sum| {}", cycles.cycle_sums.len(), sci(worst)));
    }
    let rt = equivalence::roundtrip_phasor(net, ph, tol).map_err(|e| e.to_string())?;
    rep.line(format!("round trip: {}", sci(rt.discrepancy)));
    let pass = r.max_abs() <= tol.membership && rt.pass;
    rep.line(format!("branch flow checks: {}", if pass { "pass" } else { "fail" }));
    Ok((x, pass))
}

#[derive(Debug, Clone)]
pub enum CostChoice {
    Loss,
    Generation,
    File(PathBuf, CostSpec),
}

impl CostChoice {
    pub fn parse(arg: &str) -> Result<Self, String> {
        match arg {
            "loss" => Ok(Self::Loss),
            "gen" => Ok(Self::Generation),
            file => {
                let path = PathBuf::from(file);
                let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let spec = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                Ok(Self::File(path, spec))
            }
        }
    }

    fn spec(&self, net: &Network) -> CostSpec {
        match self {
            Self::Loss => CostSpec::loss(net),
            Self::Generation => CostSpec::generation(net),
            Self::File(_, spec) => spec.clone(),
        }
    }

    fn label(&self) -> String {
        match self {
            Self::Loss => "loss".into(),
            Self::Generation => "generation".into(),
            Self::File(p, _) => p.display().to_string(),
        }
    }
}

pub struct OpfOptions {
    pub cost: CostChoice,
    pub certify: bool,
    pub exactness_tol: f64,
    pub single_cone: bool,
    pub export_triplets: bool,
    pub out: Option<PathBuf>,
}

fn opf_exit(e: &OpfError) -> u8 {
    match e {
        OpfError::NotRadial => OUT_OF_SCOPE,
        OpfError::CostViolatesA2(_) | OpfError::Dimension(_) => CASE_ERROR,
        _ => OPF_FAILED,
    }
}

pub fn opf(path: &Path, opts: &OpfOptions) -> CaseRun {
    let mut rep = Report::new(path);
    let case = match load(path, &mut rep) {
        Ok(c) => c,
        Err(e) => return rep.fail(CASE_ERROR, e),
    };
    let net = &case.network;
    let cost = opts.cost.spec(net);
    let bounds = OpfBounds::from_network(net);
    rep.line(format!("cost: {}", opts.cost.label()));
    let program = match opf::build_socp(net, &cost, &bounds, SocpOptions { single_cone: opts.single_cone }) {
        Ok(p) => p,
        Err(e) => return rep.fail(opf_exit(&e), e.to_string()),
    };
    rep.line(format!("program: {} variables, {} cones", program.num_vars(), program.num_cones()));
    let sol = match opf::solve_socp(net, &program, &InteriorPoint::default()) {
        Ok(s) => s,
        Err(e) => return rep.fail(opf_exit(&e), e.to_string()),
    };
    rep.line(format!("solver: {}, {} iterations", sol.solver, sol.iterations));
    rep.line(format!("objective: {}", sci(sol.objective)));
    rep.line(format!("dual objective: {}", sci(sol.dual_objective)));
    rep.line(format!("max KKT residual: {}", sci(sol.kkt.max())));

    let name = stem(path);
    let mut files = vec![
        (format!("{name}.socp.json"), SolutionDocument::socp(sol.clone()).to_json()),
        (format!("{name}.opf_buses.csv"), case_io::point_bus_table(net, &sol.x).to_csv_string()),
        (format!("{name}.opf_ends.csv"), case_io::point_end_table(net, &sol.x).to_csv_string()),
    ];
    if opts.export_triplets {
        let mut buf = Vec::new();
        program.write_triplets(&mut buf).expect("writing to memory");
        files.push((format!("{name}.triplets.txt"), String::from_utf8(buf).expect("triplets are utf-8")));
    }

    if opts.certify {
        let cert = opf::certify_exactness(net, &bounds, &cost, &sol, opts.exactness_tol);
        let verdict = |b: bool| if b { "holds" } else { "fails" };
        rep.line(format!("no injection lower bounds: {}", verdict(cert.c1_holds)));
        rep.line(format!("Re alpha > 0 at both ends: {}", verdict(cert.c2_holds)));
        rep.line(format!("r, x >= 0: {}", verdict(cert.impedance_nonnegative)));
        rep.line(format!("max conic gap: {} (threshold {})", sci(cert.max_gap), sci(cert.threshold)));
        rep.line(format!("max gap asymmetry: {}", sci(cert.max_gap_asymmetry)));
        rep.line(format!("exact: {}", cert.exact));
        if !cert.zero_current_ends.is_empty() {
            rep.line(format!("zero-current ends: {:?}", cert.zero_current_ends));
        }
        if let Some(res) = cert.recovered_residual {
            rep.line(format!("recovered phasors, bus injection residual: {}", sci(res)));
        }
        if let Some(err) = &cert.recovery_error {
            rep.line(format!("phasor recovery failed: {err}"));
        }
        if let Some(w) = &cert.witness {
            rep.line(format!(
                "cheaper feasible point: {}, epsilon {}, cost {} -> {}",
                line_label(net, w.line),
                sci(w.epsilon),
                sci(w.cost_before),
                sci(w.cost_after)
            ));
            files.push((format!("{name}.witness.json"), SolutionDocument::branch_flow(w.point.clone()).to_json()));
        }
        let guaranteed = cert.c1_holds && cert.c2_holds && cert.impedance_nonnegative;
        if guaranteed && !cert.exact {
            rep.warn("relaxation is not exact although its sufficient conditions hold");
        }
        if let Some(ph) = cert.recovered_phasors {
            files.push((format!("{name}.recovered.json"), SolutionDocument::phasor(ph).to_json()));
        }
    }

    if let Some(dir) = &opts.out {
        files.push((format!("{name}.opf.txt"), rep.run.stdout.clone()));
        if let Err(e) = write_outputs(dir, files) {
            return rep.fail(CASE_ERROR, e);
        }
    }
    rep.finish(OK)
}

pub fn lindist(path: &Path, compare: bool, out: Option<&Path>, tol: f64) -> CaseRun {
    let mut rep = Report::new(path);
    let case = match load(path, &mut rep) {
        Ok(c) => c,
        Err(e) => return rep.fail(CASE_ERROR, e),
    };
    let net = &case.network;
    let lin = match lindistflow::solve_lindistflow(net, &case.injection) {
        Ok(l) => l,
        Err(lindistflow::LinDistFlowError::NotRadial) => {
            return rep.fail(OUT_OF_SCOPE, "LinDistFlow needs a radial network")
        }
        Err(e) => return rep.fail(CASE_ERROR, e.to_string()),
    };
    let v_min = lin.v_lin.iter().copied().fold(f64::INFINITY, f64::min);
    rep.line(format!("lindistflow: min v {}", sci(v_min)));

    let mut buses = Table::new(&["bus", "v_lin"]);
    let mut lines = Table::new(&["line", "from", "to", "p_lin", "q_lin"]);
    for (j, bus) in net.buses().iter().enumerate() {
        buses.push(vec![bus.id.to_string(), fmt_f64(lin.v_lin[j])]);
    }
    for l in 0..net.num_lines() {
        let (j, k) = net.line_ends(l);
        lines.push(vec![
            l.to_string(),
            net.buses()[j].id.to_string(),
            net.buses()[k].id.to_string(),
            fmt_f64(lin.s_lin[l].re),
            fmt_f64(lin.s_lin[l].im),
        ]);
    }

    if compare {
        let exact = match bim::solve_pf_newton(net, &case.injection, &NewtonOptions::default()) {
            Ok(s) => s.phasor,
            Err(e) => return rep.fail(PF_FAILED, e.to_string()),
        };
        let r = lindistflow::approximation_report(net, &exact, &lin, case.length_ratio);
        rep.line(format!("max |v_lin - v|: {}", sci(r.max_v_error)));
        rep.line(format!("mean |v_lin - v|: {}", sci(r.mean_v_error)));
        rep.line(format!("max relative v error: {}", sci(r.max_rel_v_error)));
        rep.line(format!("max |S_lin - S|: {}", sci(r.max_flow_error)));
        rep.line(format!("loss fraction: {}", sci(r.loss_fraction)));
        rep.line(format!("series loss (p, q): ({}, {})", sci(r.total_series_loss.re), sci(r.total_series_loss.im)));
        rep.line(format!("shunt loss (p, q): ({}, {})", sci(r.total_shunt_loss.re), sci(r.total_shunt_loss.im)));
        rep.line(format!("energy balance residual: {}", sci(r.energy_balance_residual)));
        rep.line(format!("length ratio: {}", r.length_ratio));
        if r.flagged_lines.is_empty() {
            rep.line("lines outside the advisory shunt and voltage-deviation bands: none");
        } else {
            rep.line(format!("lines outside the advisory shunt and voltage-deviation bands: {:?}", r.flagged_lines));
        }
        if r.energy_balance_residual > tol {
            rep.warn(format!("energy balance residual {} exceeds {}", sci(r.energy_balance_residual), sci(tol)));
        }

        let v_exact: Vec<f64> = exact.voltage.iter().map(|v| v.norm_sqr()).collect();
        let mut cmp_buses = Table::new(&["bus", "v_lin", "v", "abs_error"]);
        for (j, bus) in net.buses().iter().enumerate() {
            cmp_buses.push(vec![
                bus.id.to_string(),
                fmt_f64(lin.v_lin[j]),
                fmt_f64(v_exact[j]),
                fmt_f64((lin.v_lin[j] - v_exact[j]).abs()),
            ]);
        }
        buses = cmp_buses;
        let mut cmp_lines = Table::new(&[
            "line",
            "from",
            "to",
            "p_lin",
            "q_lin",
            "p",
            "q",
            "series_loss_p",
            "series_loss_q",
            "shunt_loss_from_p",
            "shunt_loss_from_q",
            "shunt_loss_to_p",
            "shunt_loss_to_q",
            "shunt_ratio",
            "voltage_deviation",
            "flagged",
        ]);
        for d in &r.lines {
            let l = d.line;
            let (j, k) = net.line_ends(l);
            cmp_lines.push(vec![
                l.to_string(),
                net.buses()[j].id.to_string(),
                net.buses()[k].id.to_string(),
                fmt_f64(lin.s_lin[l].re),
                fmt_f64(lin.s_lin[l].im),
                fmt_f64(exact.power[l].re),
                fmt_f64(exact.power[l].im),
                fmt_f64(d.series_loss.re),
                fmt_f64(d.series_loss.im),
                fmt_f64(d.shunt_loss_from.re),
                fmt_f64(d.shunt_loss_from.im),
                fmt_f64(d.shunt_loss_to.re),
                fmt_f64(d.shunt_loss_to.im),
                fmt_f64(d.shunt_ratio),
                fmt_f64(d.voltage_deviation),
                (!(d.shunt_ratio_advisory && d.voltage_deviation_advisory)).to_string(),
            ]);
        }
        lines = cmp_lines;
    }

    if let Some(dir) = out {
        let name = stem(path);
        let files = vec![
            (format!("{name}.lindist_buses.csv"), buses.to_csv_string()),
            (format!("{name}.lindist_lines.csv"), lines.to_csv_string()),
            (format!("{name}.lindist.txt"), rep.run.stdout.clone()),
        ];
        if let Err(e) = write_outputs(dir, files) {
            return rep.fail(CASE_ERROR, e);
        }
    }
    rep.finish(OK)
}
