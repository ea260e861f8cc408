//! Homogeneous self-dual primal-dual interior-point method with
//! Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
//!
//! The embedding follows the usual ECOS layout: variables `(x, y, z, s, τ, κ)`
//! with `A'y + G'z + cτ = 0`, `Ax = bτ`, `s + Gx = hτ`, `κ = -c'x - b'y - h'z`.
//! Each Newton system is reduced to
//!
//! ```text
//! [ G'W⁻²G   A' ] [dx]
//! [ A        0  ] [dy]
//! ```
//!
//! and factored densely once per iteration.

use nalgebra::{DMatrix, DVector};

use crate::cones::{dot, ConeSet, Scaling};
use crate::problem::{ConicProblem, SparseRows};
use crate::ConicError;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub max_iter: usize,
    /// Relative primal and dual residual tolerance.
    pub tol_feas: f64,
    /// Relative duality gap tolerance.
    pub tol_gap: f64,
    /// Tolerance on infeasibility certificates.
    pub tol_infeas: f64,
    /// If the iteration breaks down, the best iterate seen is accepted as
    /// solved when its residuals and gap are all below this.
    pub tol_reduced: f64,
    pub static_reg: f64,
    pub refine_steps: usize,
    pub step_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            tol_infeas: 1e-9,
            tol_reduced: 1e-8,
            static_reg: 1e-11,
            refine_steps: 6,
            step_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solved,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalError,
}

/// Scaled termination measures at the returned iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// `‖Ax − b‖∞ / (1 + ‖b‖∞)`
    pub primal_eq: f64,
    /// `‖Gx + s − h‖∞ / (1 + ‖h‖∞)`
    pub primal_cone: f64,
    /// `‖A'y + G'z + c‖∞ / (1 + ‖c‖∞)`
    pub dual: f64,
    /// `s'z`
    pub complementarity: f64,
    /// `max(s'z, |c'x + b'y + h'z|) / max(1, min(|c'x|, |b'y + h'z|))`
    pub rel_gap: f64,
}

impl Residuals {
    pub fn max_infeasibility(&self) -> f64 {
        self.primal_eq.max(self.primal_cone).max(self.dual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    /// Equality multipliers.
    pub y: Vec<f64>,
    /// Cone multipliers.
    pub z: Vec<f64>,
    /// Cone slacks `h − Gx`.
    pub s: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub residuals: Residuals,
}

/// Anything that can solve a [`ConicProblem`].
pub trait ConicSolver {
    fn name(&self) -> &str;
    fn solve(&self, problem: &ConicProblem) -> Result<Solution, ConicError>;
}

#[derive(Debug, Clone, Default)]
pub struct InteriorPoint {
    pub settings: Settings,
}

impl InteriorPoint {
    pub fn new(settings: Settings) -> Self {
        Self { settings }
    }
}

impl ConicSolver for InteriorPoint {
    fn name(&self) -> &str {
        "dense-hsde-ipm"
    }

    fn solve(&self, problem: &ConicProblem) -> Result<Solution, ConicError> {
        problem.validate()?;
        Ok(Hsde::new(problem, &self.settings).run())
    }
}

struct Hsde<'a> {
    settings: &'a Settings,
    n: usize,
    p: usize,
    c: Vec<f64>,
    b: Vec<f64>,
    h: Vec<f64>,
    a: SparseRows,
    g: SparseRows,
    cones: ConeSet,
    /// Per cone block: the variables its rows touch and its dense rows of G.
    block_cols: Vec<(Vec<usize>, DMatrix<f64>)>,
}

/// Factored reduced KKT matrix for one scaling.
struct Kkt<'s> {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    scaling: Option<&'s Scaling>,
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    residuals: Residuals,
}

struct Direction {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Hsde<'a> {
    fn new(pr: &ConicProblem, settings: &'a Settings) -> Self {
        let n = pr.num_vars;
        let a = SparseRows::from_triplets(pr.b.len(), n, &pr.a);
        let g = SparseRows::from_triplets(pr.h.len(), n, &pr.g);
        let cones = ConeSet::new(&pr.cones);
        let block_cols = cones
            .blocks
            .iter()
            .map(|blk| {
                let rows = blk.start..blk.start + blk.cone.dim();
                let mut cols: Vec<usize> = rows
                    .clone()
                    .flat_map(|r| g.rows[r].iter().map(|e| e.0))
                    .collect();
                cols.sort_unstable();
                cols.dedup();
                let mut local = DMatrix::zeros(blk.cone.dim(), cols.len());
                for (i, r) in rows.enumerate() {
                    for &(c, v) in &g.rows[r] {
                        let k = cols.binary_search(&c).expect("column collected above");
                        local[(i, k)] = v;
                    }
                }
                (cols, local)
            })
            .collect();
        Self {
            settings,
            n,
            p: pr.b.len(),
            c: pr.c.clone(),
            b: pr.b.clone(),
            h: pr.h.clone(),
            a,
            g,
            cones,
            block_cols,
        }
    }

    fn factor<'s>(&self, scaling: Option<&'s Scaling>) -> Option<Kkt<'s>> {
        let (n, p) = (self.n, self.p);
        let mut m = DMatrix::zeros(n + p, n + p);
        for (k, (cols, local)) in self.block_cols.iter().enumerate() {
            let wi2 = match scaling {
                Some(sc) => sc.w_inv_squared_block(k),
                None => DMatrix::identity(local.nrows(), local.nrows()),
            };
            let prod = local.transpose() * &wi2 * local;
            for (i, &ci) in cols.iter().enumerate() {
                for (j, &cj) in cols.iter().enumerate() {
                    m[(ci, cj)] += prod[(i, j)];
                }
            }
        }
        for (r, row) in self.a.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(n + r, c)] += v;
                m[(c, n + r)] += v;
            }
        }
        let reg = self.settings.static_reg;
        for i in 0..n {
            m[(i, i)] += reg;
        }
        for i in n..n + p {
            m[(i, i)] -= reg;
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Kkt { lu, scaling })
    }

    fn w_inv2(&self, kkt: &Kkt<'_>, v: &[f64]) -> Vec<f64> {
        match kkt.scaling {
            Some(sc) => sc.w_inv(&self.cones, &sc.w_inv(&self.cones, v)),
            None => v.to_vec(),
        }
    }

    /// One pass through the reduced system.
    fn reduced_solve(
        &self,
        kkt: &Kkt<'_>,
        r1: &[f64],
        r2: &[f64],
        r3: &[f64],
    ) -> Option<Direction> {
        let (n, p) = (self.n, self.p);
        let w3 = self.w_inv2(kkt, r3);
        let gw3 = self.g.mul_t(&w3);
        let mut rhs = DVector::zeros(n + p);
        for i in 0..n {
            rhs[i] = r1[i] + gw3[i];
        }
        for i in 0..p {
            rhs[n + i] = r2[i];
        }
        let sol = kkt.lu.solve(&rhs)?;
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let y: Vec<f64> = sol.rows(n, p).iter().copied().collect();
        let gx = self.g.mul(&x);
        let diff: Vec<f64> = gx.iter().zip(r3).map(|(g, r)| g - r).collect();
        let z = self.w_inv2(kkt, &diff);
        Some(Direction { x, y, z })
    }

    /// Solves `[0 A' G'; A 0 0; G 0 -W²] d = (r1, r2, r3)`, refining against
    /// the unreduced system.
    fn solve_kkt(&self, kkt: &Kkt<'_>, r1: &[f64], r2: &[f64], r3: &[f64]) -> Option<Direction> {
        let mut d = self.reduced_solve(kkt, r1, r2, r3)?;
        let scale = inf_norm(r1).max(inf_norm(r2)).max(inf_norm(r3)).max(1e-300);
        for _ in 0..self.settings.refine_steps {
            let aty = self.a.mul_t(&d.y);
            let gtz = self.g.mul_t(&d.z);
            let ax = self.a.mul(&d.x);
            let gx = self.g.mul(&d.x);
            let w2z = match kkt.scaling {
                Some(sc) => sc.w(&self.cones, &sc.w(&self.cones, &d.z)),
                None => d.z.clone(),
            };
            let e1: Vec<f64> = (0..self.n).map(|i| r1[i] - aty[i] - gtz[i]).collect();
            let e2: Vec<f64> = (0..self.p).map(|i| r2[i] - ax[i]).collect();
            let e3: Vec<f64> = (0..r3.len()).map(|i| r3[i] - gx[i] + w2z[i]).collect();
            let err = inf_norm(&e1).max(inf_norm(&e2)).max(inf_norm(&e3));
            if err <= 1e-14 * scale {
                break;
            }
            let c = self.reduced_solve(kkt, &e1, &e2, &e3)?;
            for (a, b) in d.x.iter_mut().zip(&c.x) {
                *a += b;
            }
            for (a, b) in d.y.iter_mut().zip(&c.y) {
                *a += b;
            }
            for (a, b) in d.z.iter_mut().zip(&c.z) {
                *a += b;
            }
        }
        if d.x.iter().chain(&d.y).chain(&d.z).any(|v| !v.is_finite()) {
            return None;
        }
        Some(d)
    }

    fn run(&self) -> Solution {
        let st = self.settings;
        let m = self.cones.dim;
        let nu = self.cones.degree() as f64;
        let zeros_n = vec![0.0; self.n];
        let zeros_p = vec![0.0; self.p];
        let zeros_m = vec![0.0; m];

        let norm_b = inf_norm(&self.b);
        let norm_h = inf_norm(&self.h);
        let norm_c = inf_norm(&self.c);

        // Initial point from two least-squares style solves with W = I.
        let kkt0 = match self.factor(None) {
            Some(k) => k,
            None => return self.failed(Status::NumericalError, 0),
        };
        let Some(primal) = self.solve_kkt(&kkt0, &zeros_n, &self.b, &self.h) else {
            return self.failed(Status::NumericalError, 0);
        };
        let neg_c: Vec<f64> = self.c.iter().map(|v| -v).collect();
        let Some(dual) = self.solve_kkt(&kkt0, &neg_c, &zeros_p, &zeros_m) else {
            return self.failed(Status::NumericalError, 0);
        };
        let mut x = primal.x;
        let mut s: Vec<f64> = primal.z.iter().map(|v| -v).collect();
        self.cones.shift_into_interior(&mut s);
        let mut y = dual.y;
        let mut z = dual.z;
        self.cones.shift_into_interior(&mut z);
        let mut tau = 1.0;
        let mut kappa = 1.0;

        let mut status = Status::MaxIterations;
        let mut iter = 0;
        let mut residuals;
        let mut best: Option<(f64, Iterate)> = None;
        loop {
            // residuals of the embedding
            let ax = self.a.mul(&x);
            let gx = self.g.mul(&x);
            let aty = self.a.mul_t(&y);
            let gtz = self.g.mul_t(&z);
            let rx: Vec<f64> = (0..self.n).map(|i| aty[i] + gtz[i] + self.c[i] * tau).collect();
            let ry: Vec<f64> = (0..self.p).map(|i| -ax[i] + self.b[i] * tau).collect();
            let rz: Vec<f64> = (0..m).map(|i| s[i] + gx[i] - self.h[i] * tau).collect();
            let cx = dot(&self.c, &x);
            let by_hz = dot(&self.b, &y) + dot(&self.h, &z);
            let rtau = kappa + cx + by_hz;

            let sz = dot(&s, &z);
            let pcost = cx / tau;
            let dcost = -by_hz / tau;
            residuals = Residuals {
                primal_eq: inf_norm(&ry) / tau / (1.0 + norm_b),
                primal_cone: inf_norm(&rz) / tau / (1.0 + norm_h),
                dual: inf_norm(&rx) / tau / (1.0 + norm_c),
                complementarity: sz / (tau * tau),
                rel_gap: (sz / (tau * tau)).max((pcost - dcost).abs())
                    / pcost.abs().min(dcost.abs()).max(1.0),
            };

            if residuals.max_infeasibility() <= st.tol_feas && residuals.rel_gap <= st.tol_gap {
                status = Status::Solved;
                break;
            }
            let score = residuals.max_infeasibility().max(residuals.rel_gap);
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                let it = Iterate { x: x.clone(), y: y.clone(), z: z.clone(), s: s.clone(), tau, residuals };
                best = Some((score, it));
            }
            // infeasibility certificates
            if by_hz < 0.0 {
                let cert: f64 = aty
                    .iter()
                    .zip(&gtz)
                    .map(|(a, g)| (a + g).abs())
                    .fold(0.0, f64::max);
                if cert / -by_hz <= st.tol_infeas && tau < kappa {
                    status = Status::PrimalInfeasible;
                    break;
                }
            }
            if cx < 0.0 {
                let res_eq = inf_norm(&ax);
                let res_cone = gx.iter().zip(&s).map(|(g, s)| (g + s).abs()).fold(0.0, f64::max);
                if res_eq.max(res_cone) / -cx <= st.tol_infeas && tau < kappa {
                    status = Status::DualInfeasible;
                    break;
                }
            }
            if iter >= st.max_iter {
                break;
            }
            iter += 1;

            let Some(scaling) = Scaling::new(&self.cones, &s, &z) else {
                status = Status::NumericalError;
                break;
            };
            let Some(kkt) = self.factor(Some(&scaling)) else {
                status = Status::NumericalError;
                break;
            };
            let Some(d1) = self.solve_kkt(&kkt, &neg_c, &self.b, &self.h) else {
                status = Status::NumericalError;
                break;
            };
            let lambda = &scaling.lambda;
            let mu = (sz + tau * kappa) / (nu + 1.0);

            let direction = |eta: f64, ds_target: &[f64], dkappa_target: f64| {
                let lam_div = self.cones.jordan_divide(lambda, ds_target);
                let w_lam_div = scaling.w(&self.cones, &lam_div);
                let r1: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
                let r2: Vec<f64> = ry.iter().map(|v| eta * v).collect();
                let r3: Vec<f64> = (0..m).map(|i| -eta * rz[i] + w_lam_div[i]).collect();
                let d2 = self.solve_kkt(&kkt, &r1, &r2, &r3)?;
                let num = -eta * rtau + dkappa_target / tau
                    - dot(&self.c, &d2.x)
                    - dot(&self.b, &d2.y)
                    - dot(&self.h, &d2.z);
                let den = dot(&self.c, &d1.x) + dot(&self.b, &d1.y) + dot(&self.h, &d1.z)
                    - kappa / tau;
                let dtau = num / den;
                let dx: Vec<f64> = (0..self.n).map(|i| d2.x[i] + dtau * d1.x[i]).collect();
                let dy: Vec<f64> = (0..self.p).map(|i| d2.y[i] + dtau * d1.y[i]).collect();
                let dz: Vec<f64> = (0..m).map(|i| d2.z[i] + dtau * d1.z[i]).collect();
                let wdz = scaling.w(&self.cones, &dz);
                let inner: Vec<f64> = (0..m).map(|i| lam_div[i] + wdz[i]).collect();
                let ds: Vec<f64> = scaling.w(&self.cones, &inner).iter().map(|v| -v).collect();
                let dkappa = -(dkappa_target + kappa * dtau) / tau;
                if !dtau.is_finite() || !dkappa.is_finite() {
                    return None;
                }
                Some((dx, dy, dz, ds, dtau, dkappa))
            };
            let step_to_boundary = |dz: &[f64], ds: &[f64], dtau: f64, dkappa: f64| {
                let mut a = self.cones.max_step(&s, ds, 1e300);
                a = a.min(self.cones.max_step(&z, dz, 1e300));
                if dtau < 0.0 {
                    a = a.min(-tau / dtau);
                }
                if dkappa < 0.0 {
                    a = a.min(-kappa / dkappa);
                }
                a
            };

            // predictor
            let lam_sq = self.cones.jordan_product(lambda, lambda);
            let Some((_, _, dz_a, ds_a, dtau_a, dkappa_a)) = direction(1.0, &lam_sq, tau * kappa)
            else {
                status = Status::NumericalError;
                break;
            };
            let alpha_aff = step_to_boundary(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // corrector
            let wis = scaling.w_inv(&self.cones, &ds_a);
            let wz = scaling.w(&self.cones, &dz_a);
            let corr = self.cones.jordan_product(&wis, &wz);
            let e = self.cones.identity();
            let ds_target: Vec<f64> =
                (0..m).map(|i| lam_sq[i] + corr[i] - sigma * mu * e[i]).collect();
            let dk_target = tau * kappa + dtau_a * dkappa_a - sigma * mu;
            let Some((dx, dy, dz, ds, dtau, dkappa)) = direction(1.0 - sigma, &ds_target, dk_target)
            else {
                status = Status::NumericalError;
                break;
            };
            let alpha = (st.step_fraction * step_to_boundary(&dz, &ds, dtau, dkappa)).min(1.0);
            if alpha < 1e-12 {
                status = Status::NumericalError;
                break;
            }
            for i in 0..self.n {
                x[i] += alpha * dx[i];
            }
            for i in 0..self.p {
                y[i] += alpha * dy[i];
            }
            for i in 0..m {
                z[i] += alpha * dz[i];
                s[i] += alpha * ds[i];
            }
            tau += alpha * dtau;
            kappa += alpha * dkappa;
        }

        if matches!(status, Status::NumericalError | Status::MaxIterations) {
            if let Some((score, it)) = best {
                if score <= st.tol_reduced {
                    status = Status::Solved;
                    (x, y, z, s, tau, residuals) = (it.x, it.y, it.z, it.s, it.tau, it.residuals);
                }
            }
        }

        let (primal_objective, dual_objective) = match status {
            Status::PrimalInfeasible | Status::DualInfeasible => (f64::NAN, f64::NAN),
            _ => (
                dot(&self.c, &x) / tau,
                -(dot(&self.b, &y) + dot(&self.h, &z)) / tau,
            ),
        };
        let unscale = |v: Vec<f64>| -> Vec<f64> {
            match status {
                Status::PrimalInfeasible | Status::DualInfeasible => v,
                _ => v.into_iter().map(|e| e / tau).collect(),
            }
        };
        Solution {
            status,
            x: unscale(x),
            y: unscale(y),
            z: unscale(z),
            s: unscale(s),
            primal_objective,
            dual_objective,
            iterations: iter,
            residuals,
        }
    }

    fn failed(&self, status: Status, iterations: usize) -> Solution {
        Solution {
            status,
            x: vec![f64::NAN; self.n],
            y: vec![f64::NAN; self.p],
            z: vec![f64::NAN; self.cones.dim],
            s: vec![f64::NAN; self.cones.dim],
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations,
            residuals: Residuals::default(),
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
