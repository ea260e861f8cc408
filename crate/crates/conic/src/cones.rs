//! Cone arithmetic: Jordan products, Nesterov-Todd scaling and step lengths
//! for products of nonnegative orthants and second-order cones.

use nalgebra::DMatrix;

use crate::problem::Cone;

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub cone: Cone,
    pub start: usize,
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.cone.dim()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConeSet {
    pub blocks: Vec<Block>,
    pub dim: usize,
}

impl ConeSet {
    pub fn new(cones: &[Cone]) -> Self {
        let mut start = 0;
        let blocks = cones
            .iter()
            .map(|&cone| {
                let b = Block { cone, start };
                start += cone.dim();
                b
            })
            .collect();
        Self { blocks, dim: start }
    }

    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.cone.degree()).sum()
    }

    /// Identity element `e` of the Jordan algebra.
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim];
        for b in &self.blocks {
            match b.cone {
                Cone::NonNegative(d) => e[b.start..b.start + d].fill(1.0),
                Cone::SecondOrder(_) => e[b.start] = 1.0,
            }
        }
        e
    }

    /// Smallest `α` with `v - α e` on the cone boundary, i.e. the minimum
    /// eigenvalue of `v`.
    pub fn min_eigenvalue(&self, v: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        for b in &self.blocks {
            let x = &v[b.range()];
            let m = match b.cone {
                Cone::NonNegative(_) => x.iter().copied().fold(f64::INFINITY, f64::min),
                Cone::SecondOrder(_) => x[0] - norm(&x[1..]),
            };
            lo = lo.min(m);
        }
        lo
    }

    /// Moves `v` into the interior by adding a multiple of `e` if needed.
    pub fn shift_into_interior(&self, v: &mut [f64]) {
        if self.blocks.is_empty() {
            return;
        }
        let alpha = -self.min_eigenvalue(v);
        if alpha >= 0.0 {
            let e = self.identity();
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi += (1.0 + alpha) * ei;
            }
        }
    }

    pub fn jordan_product(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for b in &self.blocks {
            let r = b.range();
            let (u, v, o) = (&u[r.clone()], &v[r.clone()], &mut out[r]);
            match b.cone {
                Cone::NonNegative(_) => {
                    for i in 0..u.len() {
                        o[i] = u[i] * v[i];
                    }
                }
                Cone::SecondOrder(_) => {
                    o[0] = dot(u, v);
                    for i in 1..u.len() {
                        o[i] = u[0] * v[i] + v[0] * u[i];
                    }
                }
            }
        }
        out
    }

    /// Solves `λ ∘ x = d` for `x`.
    pub fn jordan_divide(&self, lambda: &[f64], d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for b in &self.blocks {
            let r = b.range();
            let (l, d, o) = (&lambda[r.clone()], &d[r.clone()], &mut out[r]);
            match b.cone {
                Cone::NonNegative(_) => {
                    for i in 0..l.len() {
                        o[i] = d[i] / l[i];
                    }
                }
                Cone::SecondOrder(_) => {
                    let rho = l[0] * l[0] - dot(&l[1..], &l[1..]);
                    let x0 = (l[0] * d[0] - dot(&l[1..], &d[1..])) / rho;
                    o[0] = x0;
                    for i in 1..l.len() {
                        o[i] = (d[i] - x0 * l[i]) / l[0];
                    }
                }
            }
        }
        out
    }

    /// Largest `α ≥ 0` (capped at `cap`) with `x + α dx` in the cone.
    pub fn max_step(&self, x: &[f64], dx: &[f64], cap: f64) -> f64 {
        let mut alpha = cap;
        for b in &self.blocks {
            let r = b.range();
            let (x, d) = (&x[r.clone()], &dx[r]);
            match b.cone {
                Cone::NonNegative(_) => {
                    for i in 0..x.len() {
                        if d[i] < 0.0 {
                            alpha = alpha.min(-x[i] / d[i]);
                        }
                    }
                }
                Cone::SecondOrder(_) => {
                    alpha = alpha.min(soc_step(x, d));
                }
            }
        }
        alpha.max(0.0)
    }
}

/// First positive root of `(x₀ + α d₀)² − ‖x₁ + α d₁‖² = 0` for `x` interior.
fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = 2.0 * (x[0] * d[0] - dot(&x[1..], &d[1..]));
    let c = (x[0] * x[0] - dot(&x[1..], &x[1..])).max(0.0);
    let mut best = f64::INFINITY;
    let mut consider = |r: f64| {
        if r > 0.0 && r.is_finite() {
            best = best.min(r);
        }
    };
    if a.abs() < 1e-300 {
        if b < 0.0 {
            consider(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            if q != 0.0 {
                consider(q / a);
                consider(c / q);
            } else {
                consider(0.0);
            }
        }
    }
    // the t-component must stay nonnegative along the segment as well
    if d[0] < 0.0 {
        best = best.min(-x[0] / d[0]);
    }
    best
}

/// Nesterov-Todd scaling `W` with `W z = W⁻¹ s = λ`, blockwise.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    blocks: Vec<BlockScaling>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone)]
enum BlockScaling {
    Diagonal { w: Vec<f64> },
    Dense { w: DMatrix<f64>, w_inv: DMatrix<f64> },
}

impl Scaling {
    /// Returns `None` if `s` or `z` is not strictly interior.
    pub fn new(cones: &ConeSet, s: &[f64], z: &[f64]) -> Option<Self> {
        let mut blocks = Vec::with_capacity(cones.blocks.len());
        let mut lambda = vec![0.0; cones.dim];
        for b in &cones.blocks {
            let r = b.range();
            let (sb, zb) = (&s[r.clone()], &z[r.clone()]);
            match b.cone {
                Cone::NonNegative(_) => {
                    if sb.iter().chain(zb).any(|&v| v <= 0.0) {
                        return None;
                    }
                    let w: Vec<f64> = sb.iter().zip(zb).map(|(s, z)| (s / z).sqrt()).collect();
                    for (i, (s, z)) in sb.iter().zip(zb).enumerate() {
                        lambda[b.start + i] = (s * z).sqrt();
                    }
                    blocks.push(BlockScaling::Diagonal { w });
                }
                Cone::SecondOrder(d) => {
                    let s_res = sb[0] * sb[0] - dot(&sb[1..], &sb[1..]);
                    let z_res = zb[0] * zb[0] - dot(&zb[1..], &zb[1..]);
                    if s_res <= 0.0 || z_res <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0 {
                        return None;
                    }
                    let (sn, zn) = (s_res.sqrt(), z_res.sqrt());
                    let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
                    let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
                    let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                    let mut wbar = vec![0.0; d];
                    wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                    for i in 1..d {
                        wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                    }
                    let eta = (sn / zn).sqrt();
                    let w = hyperbolic(&wbar, 1.0) * eta;
                    let w_inv = hyperbolic(&wbar, -1.0) / eta;
                    let lz = &w * nalgebra::DVector::from_column_slice(zb);
                    lambda[r].copy_from_slice(lz.as_slice());
                    blocks.push(BlockScaling::Dense { w, w_inv });
                }
            }
        }
        Some(Self { blocks, lambda })
    }

    fn apply(&self, cones: &ConeSet, v: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (b, sc) in cones.blocks.iter().zip(&self.blocks) {
            let r = b.range();
            match sc {
                BlockScaling::Diagonal { w } => {
                    for (i, wi) in w.iter().enumerate() {
                        let k = b.start + i;
                        out[k] = if inverse { v[k] / wi } else { v[k] * wi };
                    }
                }
                BlockScaling::Dense { w, w_inv } => {
                    let m = if inverse { w_inv } else { w };
                    let x = m * nalgebra::DVector::from_column_slice(&v[r.clone()]);
                    out[r].copy_from_slice(x.as_slice());
                }
            }
        }
        out
    }

    pub fn w(&self, cones: &ConeSet, v: &[f64]) -> Vec<f64> {
        self.apply(cones, v, false)
    }

    pub fn w_inv(&self, cones: &ConeSet, v: &[f64]) -> Vec<f64> {
        self.apply(cones, v, true)
    }

    /// `W⁻²` restricted to block `k`, as a dense matrix.
    pub fn w_inv_squared_block(&self, k: usize) -> DMatrix<f64> {
        match &self.blocks[k] {
            BlockScaling::Diagonal { w } => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    w.len(),
                    w.iter().map(|wi| 1.0 / (wi * wi)),
                ))
            }
            BlockScaling::Dense { w_inv, .. } => w_inv * w_inv,
        }
    }
}

/// `[[w₀, ±w₁ᵀ], [±w₁, I + w₁w₁ᵀ/(1+w₀)]]` for `w` on the unit hyperboloid.
fn hyperbolic(w: &[f64], sign: f64) -> DMatrix<f64> {
    let d = w.len();
    let mut m = DMatrix::zeros(d, d);
    m[(0, 0)] = w[0];
    for i in 1..d {
        m[(0, i)] = sign * w[i];
        m[(i, 0)] = sign * w[i];
        for j in 1..d {
            m[(i, j)] = w[i] * w[j] / (1.0 + w[0]);
        }
        m[(i, i)] += 1.0;
    }
    m
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
