//! Infeasible primal-dual path following with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector, on the reduced conic form of
//! [`presolve`](super::presolve).

use std::time::Instant;

use log::{debug, info};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use super::presolve::{presolve, ConeProblem, Presolved, Reduction};
use super::{Result, SdpError, SdpProblem, SdpSolution, SdpStatus, Sense, Tolerances};

/// Near-optimal means every criterion within this factor of its tolerance.
const NEAR_FACTOR: f64 = 100.0;
/// Upper bound on iterative-refinement rounds per KKT solve.
const REFINE_STEPS: usize = 8;
const KRYLOV_RESTART: usize = 30;
const KRYLOV_CYCLES: usize = 4;
const KRYLOV_RTOL: f64 = 1e-13;
const STALL_ITERS: usize = 10;
const STEP_FRACTION: f64 = 0.99;

/// Element of the cone space `R^l × S^{n1} × ...`.
#[derive(Clone, Debug)]
struct ConeVec {
    lp: Vec<f64>,
    mats: Vec<DMatrix<f64>>,
}

impl ConeVec {
    fn zeros_like(p: &ConeProblem) -> Self {
        ConeVec {
            lp: vec![0.0; p.lp_h.len()],
            mats: p.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        }
    }

    fn dot(&self, o: &ConeVec) -> f64 {
        let lp: f64 = self.lp.iter().zip(&o.lp).map(|(a, b)| a * b).sum();
        lp + self.mats.iter().zip(&o.mats).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, alpha: f64, o: &ConeVec) {
        for (a, b) in self.lp.iter_mut().zip(&o.lp) {
            *a += alpha * b;
        }
        for (a, b) in self.mats.iter_mut().zip(&o.mats) {
            *a += b * alpha;
        }
    }

    fn sub(&self, o: &ConeVec) -> ConeVec {
        let mut r = self.clone();
        r.axpy(-1.0, o);
        r
    }

    /// Smallest eigenvalue over all cone components.
    fn min_eig(&self) -> f64 {
        let lp = self.lp.iter().copied().fold(f64::INFINITY, f64::min);
        self.mats
            .iter()
            .map(|m| sym_eig(m).eigenvalues.min())
            .fold(lp, f64::min)
    }

    /// Adds `t·e` (identity in each block, 1 in the LP part).
    fn add_identity(&mut self, t: f64) {
        for a in self.lp.iter_mut() {
            *a += t;
        }
        for m in self.mats.iter_mut() {
            for i in 0..m.nrows() {
                m[(i, i)] += t;
            }
        }
    }
}

fn sym_eig(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl ConeProblem {
    fn g_mul(&self, x: &[f64]) -> ConeVec {
        let lp = self.lp_g.iter().map(|r| r.dot(x)).collect();
        let mats = self
            .blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.dim, b.dim);
                for k in 0..b.g.len() {
                    let v = b.g[k] * x[b.var[k]];
                    m[(b.row[k], b.col[k])] += v;
                    if b.row[k] != b.col[k] {
                        m[(b.col[k], b.row[k])] += v;
                    }
                }
                m
            })
            .collect();
        ConeVec { lp, mats }
    }

    fn gt_mul(&self, z: &ConeVec) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, zr) in self.lp_g.iter().zip(&z.lp) {
            r.axpy(*zr, &mut out);
        }
        for (b, m) in self.blocks.iter().zip(&z.mats) {
            for k in 0..b.g.len() {
                let (i, j) = (b.row[k], b.col[k]);
                let f = if i == j { 1.0 } else { 2.0 };
                out[b.var[k]] += f * b.g[k] * m[(i, j)];
            }
        }
        out
    }

    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|r| r.dot(x)).collect()
    }

    fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, yr) in self.a.iter().zip(y) {
            r.axpy(*yr, &mut out);
        }
        out
    }

    fn h_vec(&self) -> ConeVec {
        ConeVec {
            lp: self.lp_h.clone(),
            mats: self.blocks.iter().map(|b| b.h.clone()).collect(),
        }
    }

    fn degree(&self) -> usize {
        self.lp_h.len() + self.blocks.iter().map(|b| b.dim).sum::<usize>()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// NT scaling of one PSD block: `W z = rᵀ z r = λ = r⁻¹ s r⁻ᵀ`.
#[derive(Clone, Debug)]
struct BlockScaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lambda: DVector<f64>,
}

#[derive(Clone, Debug)]
struct Scaling {
    /// `W = diag(w)`, `w = sqrt(s/z)`.
    lp_w: Vec<f64>,
    lp_lambda: Vec<f64>,
    blocks: Vec<BlockScaling>,
}

/// Scaling from explicit factors `s = Ls Lsᵀ`, `z = Lz Lzᵀ`.
fn block_scaling_from_factors(ls: &DMatrix<f64>, lz: &DMatrix<f64>) -> Option<BlockScaling> {
    let m = lz.transpose() * ls;
    let svd = SVD::new(m, true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let sv = svd.singular_values;
    if sv.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let isq = sv.map(|x| 1.0 / x.sqrt());
    let mut r = ls * vt.transpose();
    for (j, mut c) in r.column_iter_mut().enumerate() {
        c *= isq[j];
    }
    let mut rinv = u.transpose() * lz.transpose();
    for (i, mut row) in rinv.row_iter_mut().enumerate() {
        row *= isq[i];
    }
    Some(BlockScaling { r, rinv, lambda: sv })
}

fn chol_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    Cholesky::new(sym).map(|c| c.l())
}

impl Scaling {
    fn from_sz(s: &ConeVec, z: &ConeVec) -> Option<Scaling> {
        let mut lp_w = Vec::with_capacity(s.lp.len());
        let mut lp_lambda = Vec::with_capacity(s.lp.len());
        for (&si, &zi) in s.lp.iter().zip(&z.lp) {
            if !(si > 0.0 && zi > 0.0) {
                return None;
            }
            lp_w.push((si / zi).sqrt());
            lp_lambda.push((si * zi).sqrt());
        }
        let mut blocks = Vec::with_capacity(s.mats.len());
        for (sm, zm) in s.mats.iter().zip(&z.mats) {
            let ls = chol_factor(sm)?;
            let lz = chol_factor(zm)?;
            blocks.push(block_scaling_from_factors(&ls, &lz)?);
        }
        Some(Scaling {
            lp_w,
            lp_lambda,
            blocks,
        })
    }

    /// `λ` as a cone element (diagonal blocks).
    fn lambda(&self) -> ConeVec {
        ConeVec {
            lp: self.lp_lambda.clone(),
            mats: self.blocks.iter().map(|b| DMatrix::from_diagonal(&b.lambda)).collect(),
        }
    }

    /// `W⁻¹ v`
    fn apply_w_inv(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lp: v.lp.iter().zip(&self.lp_w).map(|(a, w)| a / w).collect(),
            mats: v
                .mats
                .iter()
                .zip(&self.blocks)
                .map(|(m, b)| b.rinv.transpose() * m * &b.rinv)
                .collect(),
        }
    }

    /// `Wᵀ v`
    fn apply_wt(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lp: v.lp.iter().zip(&self.lp_w).map(|(a, w)| a * w).collect(),
            mats: v
                .mats
                .iter()
                .zip(&self.blocks)
                .map(|(m, b)| &b.r * m * b.r.transpose())
                .collect(),
        }
    }

    /// `W⁻ᵀ v`
    fn apply_wt_inv(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lp: v.lp.iter().zip(&self.lp_w).map(|(a, w)| a / w).collect(),
            mats: v
                .mats
                .iter()
                .zip(&self.blocks)
                .map(|(m, b)| &b.rinv * m * b.rinv.transpose())
                .collect(),
        }
    }
}

/// `λ ∘ u` in the scaled space.
fn lambda_prod(lam: &ConeVec, u: &ConeVec) -> ConeVec {
    ConeVec {
        lp: lam.lp.iter().zip(&u.lp).map(|(a, b)| a * b).collect(),
        mats: lam
            .mats
            .iter()
            .zip(&u.mats)
            .map(|(l, m)| (l * m + m * l) * 0.5)
            .collect(),
    }
}

/// Solves `λ ∘ u = r` for diagonal `λ`.
fn lambda_solve(sc: &Scaling, r: &ConeVec) -> ConeVec {
    ConeVec {
        lp: r.lp.iter().zip(&sc.lp_lambda).map(|(a, l)| a / l).collect(),
        mats: r
            .mats
            .iter()
            .zip(&sc.blocks)
            .map(|(m, b)| {
                let l = &b.lambda;
                DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 2.0 * m[(i, j)] / (l[i] + l[j]))
            })
            .collect(),
    }
}

/// Largest step `α` with `λ + α d ⪰ 0` (infinite when unbounded).
fn max_step(sc: &Scaling, d: &ConeVec) -> f64 {
    let mut a = f64::INFINITY;
    for (di, l) in d.lp.iter().zip(&sc.lp_lambda) {
        if *di < 0.0 {
            a = a.min(-l / di);
        }
    }
    for (m, b) in d.mats.iter().zip(&sc.blocks) {
        let isq = b.lambda.map(|x| 1.0 / x.sqrt());
        let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * isq[i] * isq[j]);
        let e = sym_eig(&scaled).eigenvalues.min();
        if e < 0.0 {
            a = a.min(-1.0 / e);
        }
    }
    a
}

/// Stacked Newton direction `(dx, dy, dzs)`.
#[derive(Clone, Debug)]
struct NewtonVec {
    x: Vec<f64>,
    y: Vec<f64>,
    z: ConeVec,
}

impl NewtonVec {
    fn dot(&self, o: &NewtonVec) -> f64 {
        dot(&self.x, &o.x) + dot(&self.y, &o.y) + self.z.dot(&o.z)
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, alpha: f64, o: &NewtonVec) {
        for (a, b) in self.x.iter_mut().zip(&o.x) {
            *a += alpha * b;
        }
        for (a, b) in self.y.iter_mut().zip(&o.y) {
            *a += alpha * b;
        }
        self.z.axpy(alpha, &o.z);
    }

    fn scale(&mut self, alpha: f64) {
        self.x.iter_mut().for_each(|v| *v *= alpha);
        self.y.iter_mut().for_each(|v| *v *= alpha);
        self.z.lp.iter_mut().for_each(|v| *v *= alpha);
        self.z.mats.iter_mut().for_each(|m| *m *= alpha);
    }
}

/// Restarted flexible GMRES for `op(v) = b` with right preconditioner `prec`.
/// Returns the best iterate, its relative residual and the Krylov step count.
fn fgmres(
    op: &dyn Fn(&NewtonVec) -> NewtonVec,
    prec: &dyn Fn(&NewtonVec) -> NewtonVec,
    b: &NewtonVec,
) -> (NewtonVec, f64, usize) {
    let bnorm = b.norm();
    let mut v = prec(b);
    if bnorm == 0.0 {
        return (v, 0.0, 0);
    }
    let mut r = b.clone();
    r.axpy(-1.0, &op(&v));
    let mut err = r.norm();
    let target = KRYLOV_RTOL * bnorm;
    let mut steps = 0;
    let m = KRYLOV_RESTART;
    for _ in 0..KRYLOV_CYCLES {
        if err <= target {
            break;
        }
        let mut basis = vec![r.clone()];
        basis[0].scale(1.0 / err);
        let mut zs: Vec<NewtonVec> = Vec::with_capacity(m);
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = err;
        let mut k = 0;
        for j in 0..m {
            let zj = prec(&basis[j]);
            let mut w = op(&zj);
            zs.push(zj);
            for (i, vi) in basis.iter().enumerate() {
                hess[i][j] = w.dot(vi);
                w.axpy(-hess[i][j], vi);
            }
            let hn = w.norm();
            hess[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let rr = hess[j][j].hypot(hess[j + 1][j]);
            if rr == 0.0 {
                break;
            }
            cs[j] = hess[j][j] / rr;
            sn[j] = hess[j + 1][j] / rr;
            hess[j][j] = rr;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k = j + 1;
            steps += 1;
            if g[j + 1].abs() <= target || hn == 0.0 {
                break;
            }
            w.scale(1.0 / hn);
            basis.push(w);
        }
        let mut yk = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|l| hess[i][l] * yk[l]).sum();
            yk[i] = (g[i] - s) / hess[i][i];
        }
        let mut cand = v.clone();
        for (yi, zi) in yk.iter().zip(&zs) {
            cand.axpy(*yi, zi);
        }
        let mut rc = b.clone();
        rc.axpy(-1.0, &op(&cand));
        let nerr = rc.norm();
        if !(nerr < err) {
            break;
        }
        (v, r, err) = (cand, rc, nerr);
    }
    (v, err / bnorm, steps)
}

/// Factorization of the reduced KKT system
/// `[H Aᵀ; A 0] [dx; dy] = [r1; r2]`, `H = Gᵀ(WᵀW)⁻¹G`.
struct Kkt {
    h: DMatrix<f64>,
    d: DVector<f64>,
    l: DMatrix<f64>,
    a: DMatrix<f64>,
    s_chol: Option<DMatrix<f64>>,
}

fn assemble_h(p: &ConeProblem, sc: Option<&Scaling>) -> DMatrix<f64> {
    let n = p.n;
    // lower triangle, row-major
    let mut h = vec![0.0; n * n];
    for (k, r) in p.lp_g.iter().enumerate() {
        let q = sc.map(|s| 1.0 / (s.lp_w[k] * s.lp_w[k])).unwrap_or(1.0);
        for (ii, &vi) in r.idx.iter().enumerate() {
            let gi = q * r.val[ii];
            let row = &mut h[vi * n..vi * n + n];
            for (jj, &vj) in r.idx.iter().enumerate() {
                if vj > vi {
                    break;
                }
                row[vj] += gi * r.val[jj];
            }
        }
    }
    for (k, b) in p.blocks.iter().enumerate() {
        let dim = b.dim;
        let q: Vec<f64> = match sc {
            Some(s) => {
                let ri = &s.blocks[k].rinv;
                let qm = ri.transpose() * ri;
                // row-major copy
                (0..dim * dim).map(|t| qm[(t / dim, t % dim)]).collect()
            }
            None => (0..dim * dim)
                .map(|t| if t / dim == t % dim { 1.0 } else { 0.0 })
                .collect(),
        };
        let ne = b.g.len();
        let hv: Vec<f64> = (0..ne)
            .map(|e| b.g[e] * if b.row[e] == b.col[e] { 1.0 } else { 2.0 })
            .collect();
        for e in 0..ne {
            let (v, a, bb) = (b.var[e], b.row[e], b.col[e]);
            let qa = &q[a * dim..a * dim + dim];
            let qb = &q[bb * dim..bb * dim + dim];
            let he = 0.5 * hv[e];
            let row = &mut h[v * n..v * n + n];
            for f in 0..e {
                let (c, d) = (b.row[f], b.col[f]);
                let t = qa[c] * qb[d] + qa[d] * qb[c];
                let w = b.var[f];
                let val = he * hv[f] * t;
                // entries are sorted by variable, so w <= v
                row[w] += if w == v { 2.0 * val } else { val };
            }
            row[v] += he * hv[e] * (qa[a] * qb[bb] + qa[bb] * qb[a]);
        }
    }
    DMatrix::from_fn(n, n, |i, j| if j <= i { h[i * n + j] } else { h[j * n + i] })
}

impl Kkt {
    fn new(p: &ConeProblem, sc: Option<&Scaling>) -> Option<Kkt> {
        let n = p.n;
        let h = assemble_h(p, sc);
        let d = DVector::from_fn(n, |i, _| {
            let v = h[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        });
        let mut reg = 0.0;
        let l = loop {
            let mut ht = DMatrix::from_fn(n, n, |i, j| d[i] * h[(i, j)] * d[j]);
            for i in 0..n {
                ht[(i, i)] += reg;
            }
            if let Some(c) = Cholesky::new(ht) {
                break c.l();
            }
            reg = if reg == 0.0 { 1e-13 } else { reg * 100.0 };
            if reg > 1e-3 {
                return None;
            }
            debug!("KKT Cholesky failed, regularization raised to {reg:e}");
        };
        let m = p.a.len();
        let mut a = DMatrix::zeros(m, n);
        for (i, r) in p.a.iter().enumerate() {
            for (&j, &v) in r.idx.iter().zip(&r.val) {
                a[(i, j)] = v;
            }
        }
        let s_chol = if m > 0 {
            let mut dat = a.transpose();
            for i in 0..n {
                dat.row_mut(i).scale_mut(d[i]);
            }
            let y = l.solve_lower_triangular(&dat)?;
            let s = y.transpose() * &y;
            let sd = DVector::from_fn(m, |i, _| {
                let v = s[(i, i)];
                if v > 0.0 {
                    1.0 / v.sqrt()
                } else {
                    1.0
                }
            });
            let mut reg = 0.0;
            let sl = loop {
                let mut st = DMatrix::from_fn(m, m, |i, j| sd[i] * s[(i, j)] * sd[j]);
                for i in 0..m {
                    st[(i, i)] += reg;
                }
                if let Some(c) = Cholesky::new(st) {
                    let mut l = c.l();
                    // fold the Jacobi scaling back: S ≈ (D⁻¹ L)(D⁻¹ L)ᵀ
                    for i in 0..m {
                        l.row_mut(i).scale_mut(1.0 / sd[i]);
                    }
                    break l;
                }
                reg = if reg == 0.0 { 1e-13 } else { reg * 100.0 };
                if reg > 1e-4 {
                    return None;
                }
            };
            Some(sl)
        } else {
            None
        };
        Some(Kkt { h, d, l, a, s_chol })
    }

    fn h_inv(&self, r: &DVector<f64>) -> DVector<f64> {
        let t = r.component_mul(&self.d);
        let t = self.l.solve_lower_triangular(&t).unwrap();
        let t = self.l.tr_solve_lower_triangular(&t).unwrap();
        t.component_mul(&self.d)
    }

    fn solve_once(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.s_chol {
            None => (self.h_inv(r1), DVector::zeros(0)),
            Some(sl) => {
                let hr = self.h_inv(r1);
                let rhs = &self.a * &hr - r2;
                let t = sl.solve_lower_triangular(&rhs).unwrap();
                let dy = sl.tr_solve_lower_triangular(&t).unwrap();
                let dx = self.h_inv(&(r1 - self.a.transpose() * &dy));
                (dx, dy)
            }
        }
    }

    fn solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r1 = DVector::from_column_slice(r1);
        let r2 = DVector::from_column_slice(r2);
        let (mut dx, mut dy) = self.solve_once(&r1, &r2);
        let residual = |dx: &DVector<f64>, dy: &DVector<f64>| {
            let e1 = &r1 - &self.h * dx - self.a.transpose() * dy;
            let e2 = &r2 - &self.a * dx;
            (e1, e2)
        };
        let (mut e1, mut e2) = residual(&dx, &dy);
        let mut err = e1.norm().max(e2.norm());
        for _ in 0..REFINE_STEPS {
            if err == 0.0 {
                break;
            }
            let (cx, cy) = self.solve_once(&e1, &e2);
            let (nx, ny) = (&dx + cx, &dy + cy);
            let (n1, n2) = residual(&nx, &ny);
            let nerr = n1.norm().max(n2.norm());
            if !(nerr < 0.5 * err) {
                if nerr < err {
                    (dx, dy) = (nx, ny);
                }
                break;
            }
            (dx, dy, e1, e2, err) = (nx, ny, n1, n2, nerr);
        }
        (dx.as_slice().to_vec(), dy.as_slice().to_vec())
    }
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: ConeVec,
}

struct Outcome {
    it: Iterate,
    status: SdpStatus,
    pres: f64,
    dres: f64,
    gap: f64,
    rel_gap: f64,
    iterations: usize,
}

#[derive(Clone, Copy)]
struct Measures {
    pres: f64,
    dres: f64,
    gap: f64,
    rel_gap: f64,
}

impl Measures {
    fn merit(&self, tol: &Tolerances) -> f64 {
        (self.pres / tol.feas)
            .max(self.dres / tol.feas)
            .max(self.rel_gap / tol.gap)
    }
}

fn ipm(p: &ConeProblem, tol: &Tolerances) -> Outcome {
    let n = p.n;
    let h = p.h_vec();
    let b = &p.b;
    let c = &p.c;
    let m_deg = p.degree() as f64;
    let nrm_b = norm(b).max(1.0);
    let nrm_h = h.norm().max(1.0);
    let nrm_c = norm(c).max(1.0);

    let fail = |status| Outcome {
        it: Iterate {
            x: vec![0.0; n],
            y: vec![0.0; p.a.len()],
            z: ConeVec::zeros_like(p),
        },
        status,
        pres: f64::INFINITY,
        dres: f64::INFINITY,
        gap: f64::INFINITY,
        rel_gap: f64::INFINITY,
        iterations: 0,
    };

    // starting point: least-squares primal and least-norm dual
    let Some(kkt0) = Kkt::new(p, None) else {
        return fail(SdpStatus::NumericalFailure);
    };
    let (x0, _) = kkt0.solve(&p.gt_mul(&h), b);
    let mut s0 = h.sub(&p.g_mul(&x0));
    let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
    let (u0, y0) = kkt0.solve(&neg_c, &vec![0.0; p.a.len()]);
    let mut z0 = p.g_mul(&u0);
    for v in [&mut s0, &mut z0] {
        let t = -v.min_eig();
        if t >= -1e-8 * v.norm().max(1.0) {
            v.add_identity(1.0 + t);
        }
    }
    let Some(mut sc) = Scaling::from_sz(&s0, &z0) else {
        return fail(SdpStatus::NumericalFailure);
    };
    let mut x = x0;
    let mut y = y0;
    let (mut s, mut z) = (s0, z0);

    let mut best: Option<(Measures, Iterate)> = None;
    let mut best_iter = 0;
    let mut small_steps = 0;
    let mut status = SdpStatus::IterationLimit;
    let mut iterations = 0;

    for iter in 0..=tol.max_iter {
        iterations = iter;
        let gz = p.gt_mul(&z);
        let aty = p.at_mul(&y);
        let rx: Vec<f64> = (0..n).map(|i| aty[i] + gz[i] + c[i]).collect();
        let ax = p.a_mul(&x);
        let ry: Vec<f64> = ax.iter().zip(b).map(|(a, bb)| a - bb).collect();
        let gx = p.g_mul(&x);
        let mut rz = s.clone();
        rz.axpy(1.0, &gx);
        rz.axpy(-1.0, &h);

        let lam = sc.lambda();
        let gap = lam.dot(&lam);
        let pcost = dot(c, &x);
        let hz = h.dot(&z);
        let by = dot(b, &y);
        let dcost = -hz - by;
        let meas = Measures {
            pres: (norm(&ry) / nrm_b).max(rz.norm() / nrm_h),
            dres: norm(&rx) / nrm_c,
            gap,
            rel_gap: gap / pcost.abs().max(1.0),
        };
        debug!(
            "it {iter:3} pcost {pcost:+.8e} dcost {dcost:+.8e} gap {gap:.2e} pres {:.2e} dres {:.2e}",
            meas.pres, meas.dres
        );
        if best.as_ref().is_none_or(|(bm, _)| meas.merit(tol) <= bm.merit(tol)) {
            best_iter = iter;
            best = Some((
                meas,
                Iterate {
                    x: x.clone(),
                    y: y.clone(),
                    z: z.clone(),
                },
            ));
        }
        if meas.pres <= tol.feas && meas.dres <= tol.feas && meas.rel_gap <= tol.gap {
            status = SdpStatus::Optimal;
            break;
        }
        // certificates of infeasibility, normalized
        let hz_by = hz + by;
        if hz_by < 0.0 && meas.pres > tol.feas {
            let cert: Vec<f64> = (0..n).map(|i| gz[i] + aty[i]).collect();
            if norm(&cert) <= tol.feas * -hz_by && -hz_by > 1e6 * nrm_c {
                status = SdpStatus::Infeasible;
                break;
            }
        }
        if pcost < 0.0 && meas.dres > tol.feas {
            let mut gxs = gx.clone();
            gxs.axpy(1.0, &s);
            if gxs.norm().max(norm(&ax)) <= tol.feas * -pcost && -pcost > 1e6 * nrm_h.max(nrm_b) {
                status = SdpStatus::Unbounded;
                break;
            }
        }
        if iter == tol.max_iter {
            break;
        }
        // stalled after reaching near-optimality: keep the best iterate
        if best.as_ref().is_some_and(|(bm, _)| bm.merit(tol) <= NEAR_FACTOR) && iter >= best_iter + STALL_ITERS {
            debug!("no progress for {STALL_ITERS} iterations, stopping");
            break;
        }

        let Some(kkt) = Kkt::new(p, Some(&sc)) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let mu = gap / m_deg;

        // scaled Newton system in v = (dx, dy, dzs), dzs = W dz:
        //   Aᵀdy + GᵀW⁻¹dzs = bx,  A dx = by,  W⁻ᵀG dx - dzs = bzs
        let newton_op = |v: &NewtonVec| {
            let aty = p.at_mul(&v.y);
            let gz = p.gt_mul(&sc.apply_w_inv(&v.z));
            let mut z = sc.apply_wt_inv(&p.g_mul(&v.x));
            z.axpy(-1.0, &v.z);
            NewtonVec {
                x: (0..n).map(|i| aty[i] + gz[i]).collect(),
                y: p.a_mul(&v.x),
                z,
            }
        };
        // block elimination through the factored reduced system
        let newton_prec = |b: &NewtonVec| {
            let gw = p.gt_mul(&sc.apply_w_inv(&b.z));
            let r1: Vec<f64> = (0..n).map(|i| b.x[i] + gw[i]).collect();
            let (dx, dy) = kkt.solve(&r1, &b.y);
            let mut z = sc.apply_wt_inv(&p.g_mul(&dx));
            z.axpy(-1.0, &b.z);
            NewtonVec { x: dx, y: dy, z }
        };
        let direction = |rc: &ConeVec| {
            let u = lambda_solve(&sc, rc);
            let mut bzs = sc.apply_wt_inv(&rz);
            bzs.axpy(1.0, &u);
            let mut b = NewtonVec {
                x: rx.clone(),
                y: ry.clone(),
                z: bzs,
            };
            b.scale(-1.0);
            let (v, err, its) = fgmres(&newton_op, &newton_prec, &b);
            log::trace!("newton rel err {err:.2e} after {its} krylov steps");
            let dss = u.sub(&v.z);
            (v.x, v.y, dss, v.z)
        };

        let mut lam_sq = lambda_prod(&lam, &lam);
        lam_sq.lp.iter_mut().for_each(|v| *v = -*v);
        lam_sq.mats.iter_mut().for_each(|m| *m *= -1.0);

        // predictor
        let (_, _, dsa, dza) = direction(&lam_sq);
        let alpha_a = max_step(&sc, &dsa).min(max_step(&sc, &dza)).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3);

        // corrector
        let mut rc = lam_sq;
        rc.axpy(-1.0, &lambda_prod(&dsa, &dza));
        rc.add_identity(sigma * mu);
        let (dx, dy, dss, dzs) = direction(&rc);
        let amax = max_step(&sc, &dss).min(max_step(&sc, &dzs));
        let mut alpha = (STEP_FRACTION * amax).min(1.0);

        let ds = sc.apply_wt(&dss);
        let dz = sc.apply_w_inv(&dzs);
        let mut next = None;
        for _ in 0..8 {
            let mut s2 = s.clone();
            s2.axpy(alpha, &ds);
            let mut z2 = z.clone();
            z2.axpy(alpha, &dz);
            if let Some(ns) = Scaling::from_sz(&s2, &z2) {
                next = Some((ns, s2, z2));
                break;
            }
            alpha *= 0.5;
        }
        let Some((ns, s2, z2)) = next else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        sc = ns;
        s = s2;
        z = z2;
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for (yi, di) in y.iter_mut().zip(&dy) {
            *yi += alpha * di;
        }

        if alpha < 1e-8 {
            small_steps += 1;
            if small_steps >= 3 {
                status = SdpStatus::NumericalFailure;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    let (meas, it) = match status {
        SdpStatus::Optimal | SdpStatus::Infeasible | SdpStatus::Unbounded => {
            let gap = sc.lambda().dot(&sc.lambda());
            let pcost = dot(c, &x);
            let gz = p.gt_mul(&z);
            let aty = p.at_mul(&y);
            let rx: Vec<f64> = (0..n).map(|i| aty[i] + gz[i] + c[i]).collect();
            let ry: Vec<f64> = p.a_mul(&x).iter().zip(b).map(|(a, bb)| a - bb).collect();
            let mut rz = s.clone();
            rz.axpy(1.0, &p.g_mul(&x));
            rz.axpy(-1.0, &h);
            (
                Measures {
                    pres: (norm(&ry) / nrm_b).max(rz.norm() / nrm_h),
                    dres: norm(&rx) / nrm_c,
                    gap,
                    rel_gap: gap / pcost.abs().max(1.0),
                },
                Iterate { x, y, z },
            )
        }
        _ => {
            let (m, it) = best.unwrap();
            if m.pres <= NEAR_FACTOR * tol.feas
                && m.dres <= NEAR_FACTOR * tol.feas
                && m.rel_gap <= NEAR_FACTOR * tol.gap
            {
                status = SdpStatus::NearOptimal;
            }
            (m, it)
        }
    };
    Outcome {
        it,
        status,
        pres: meas.pres,
        dres: meas.dres,
        gap: meas.gap,
        rel_gap: meas.rel_gap,
        iterations,
    }
}

/// Every variable was fixed by presolve: only feasibility is left to check.
fn fixed_point(p: &ConeProblem, tol: &Tolerances) -> Outcome {
    let h = p.h_vec();
    let viol = (-h.min_eig()).max(0.0);
    let pres = viol / h.norm().max(1.0);
    Outcome {
        it: Iterate {
            x: Vec::new(),
            y: vec![0.0; p.a.len()],
            z: ConeVec::zeros_like(p),
        },
        status: if pres <= tol.feas {
            SdpStatus::Optimal
        } else {
            SdpStatus::Infeasible
        },
        pres,
        dres: 0.0,
        gap: 0.0,
        rel_gap: 0.0,
        iterations: 0,
    }
}

pub fn solve(problem: &SdpProblem, tol: Tolerances) -> Result<SdpSolution> {
    if !(tol.feas > 0.0 && tol.gap > 0.0 && tol.max_iter > 0) {
        return Err(SdpError::Tolerance(format!("{tol:?}")));
    }
    problem.check()?;
    let start = Instant::now();
    let (cp, red) = match presolve(problem) {
        Presolved::Reduced(cp, red) => (cp, red),
        Presolved::Infeasible(msg) | Presolved::Unbounded(msg) => {
            info!("presolve: {msg}");
            let status = if msg.contains("unconstrained") {
                SdpStatus::Unbounded
            } else {
                SdpStatus::Infeasible
            };
            return Ok(SdpSolution {
                x: vec![0.0; problem.num_vars],
                multipliers: vec![0.0; problem.constraints.len()],
                dual_blocks: problem.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
                primal_objective: f64::NAN,
                dual_objective: f64::NAN,
                status,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                gap: f64::INFINITY,
                relative_gap: f64::INFINITY,
                iterations: 0,
                wall_time: start.elapsed(),
            });
        }
    };
    info!(
        "presolve: {} -> {} variables, {} equalities, {} inequalities, blocks {:?}",
        problem.num_vars,
        cp.n,
        cp.a.len(),
        cp.lp_h.len(),
        cp.blocks.iter().map(|b| b.dim).collect::<Vec<_>>()
    );
    let out = if cp.n == 0 {
        fixed_point(&cp, &tol)
    } else {
        ipm(&cp, &tol)
    };
    Ok(recover(problem, &cp, &red, out, start))
}

fn recover(problem: &SdpProblem, cp: &ConeProblem, red: &Reduction, out: Outcome, start: Instant) -> SdpSolution {
    let mut x: Vec<f64> = red.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    for (k, &v) in red.free.iter().enumerate() {
        x[v] = out.it.x[k];
    }
    let mut mult = vec![0.0; problem.constraints.len()];
    for (k, &(i, f)) in red.eq_rows.iter().enumerate() {
        mult[i] = -out.it.y[k] * f;
    }
    for (k, &(i, f)) in red.lp_rows.iter().enumerate() {
        mult[i] = out.it.z.lp[k] * f;
    }
    let dual_blocks = out.it.z.mats.clone();
    // multipliers of rows used to fix variables, from stationarity in reverse order
    let mut used_fixer = vec![false; problem.constraints.len()];
    for &(i, _) in &red.fixers {
        used_fixer[i] = true;
    }
    let mut blk_grad = vec![0.0; problem.num_vars];
    for (blk, zm) in problem.blocks.iter().zip(&dual_blocks) {
        for e in &blk.entries {
            if let Some(v) = e.var {
                let f = if e.row == e.col { 1.0 } else { 2.0 };
                blk_grad[v] += f * e.value * zm[(e.row, e.col)];
            }
        }
    }
    let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); problem.num_vars];
    for (i, c) in problem.constraints.iter().enumerate() {
        for &(v, a) in &c.coeffs {
            col_rows[v].push((i, a));
        }
    }
    for &(i, v) in red.fixers.iter().rev() {
        let mut rest = blk_grad[v];
        let mut own = 0.0;
        for &(j, a) in &col_rows[v] {
            if j == i {
                own += a;
            } else {
                rest += mult[j] * a;
            }
        }
        if own != 0.0 {
            mult[i] = (problem.objective[v] - rest) / own;
        }
    }
    for (i, c) in problem.constraints.iter().enumerate() {
        if c.sense == Sense::Ge && !used_fixer[i] {
            mult[i] = mult[i].max(0.0);
        }
    }

    let primal_objective = problem.objective_value(&x);
    let dual_objective = -cp.h_vec().dot(&out.it.z) - dot(&cp.b, &out.it.y) + red.objective_offset;
    SdpSolution {
        x,
        multipliers: mult,
        dual_blocks,
        primal_objective,
        dual_objective,
        status: out.status,
        primal_residual: out.pres,
        dual_residual: out.dres,
        gap: out.gap,
        relative_gap: out.rel_gap,
        iterations: out.iterations,
        wall_time: start.elapsed(),
    }
}
