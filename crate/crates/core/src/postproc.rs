//! Christoffel-Darboux graph recovery, quantity-of-interest expectations and
//! moment completion for statistics `f_k(t, x) = ∫ u^k dρ`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::gmp::Rescaling;
use crate::moments::{moment_matrix, monomial_value, MomentError, MomentVector, MonomialBasis};
use crate::poly::{MultiIndex, Polynomial, VariableSpace};
use crate::problem::{BoxDomain, Interval};
use crate::sdp::{self, BlockEntry, LinearConstraint, PsdBlock, SdpProblem, SdpSolution, Sense, Tolerances};

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("regularization must be positive, got {0}")]
    Beta(f64),
    #[error("moment matrix plus regularization is not positive definite")]
    Factorization,
    #[error("point {0:?} lies outside the model domain")]
    OutOfDomain(Vec<f64>),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("statistic order must be at least 1 and at most 2d")]
    Order,
    #[error("completion solve ended with status {0}")]
    Completion(String),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
}

pub type Result<T> = std::result::Result<T, PostprocError>;

/// Relative regularization used when none is given: `β = 1e-6 · Tr(M_d) / dim`.
pub const DEFAULT_BETA_FACTOR: f64 = 1e-6;

/// Regularized inverse Christoffel function
/// `q(w) = b_d(w')ᵀ (M_d(z') + βI)⁻¹ b_d(w')` in rescaled coordinates `w'`.
#[derive(Debug, Clone)]
pub struct ChristoffelModel {
    pub d: u32,
    pub rescaling: Rescaling,
    pub beta: f64,
    basis: Vec<MultiIndex>,
    /// `L⁻¹` for `M_d + βI = L Lᵀ`.
    linv: DMatrix<f64>,
    /// Row `i` holds `L⁻¹` restricted to the basis elements with last exponent `i`,
    /// as (basis position, leading exponents).
    by_last: Vec<Vec<(usize, MultiIndex)>>,
}

impl ChristoffelModel {
    /// `z` holds moments in original coordinates over a box given by `intervals`.
    pub fn build(z: &MomentVector, intervals: &[Interval], d: u32, beta: Option<f64>) -> Result<Self> {
        let rescaling = Rescaling::for_intervals(intervals);
        let zr = rescaling.moments_to_rescaled(z);
        let m = moment_matrix(&zr, d)?.to_dmatrix();
        let dim = m.nrows();
        let beta = beta.unwrap_or(DEFAULT_BETA_FACTOR * m.trace() / dim as f64);
        if !(beta > 0.0) {
            return Err(PostprocError::Beta(beta));
        }
        let reg = &m + DMatrix::identity(dim, dim) * beta;
        let chol = Cholesky::new(reg.clone()).ok_or(PostprocError::Factorization)?;
        let l = chol.l();
        let resid = (&l * l.transpose() - &reg).amax();
        if resid > 1e-10 * reg.amax() {
            return Err(PostprocError::Factorization);
        }
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(dim, dim))
            .ok_or(PostprocError::Factorization)?;
        let nv = z.space().len();
        let basis = MultiIndex::all_up_to(nv, d);
        let mut by_last = vec![Vec::new(); d as usize + 1];
        for (i, a) in basis.iter().enumerate() {
            by_last[a.get(nv - 1) as usize].push((i, MultiIndex::new(a.exps()[..nv - 1].to_vec())));
        }
        Ok(ChristoffelModel {
            d,
            rescaling,
            beta,
            basis,
            linv,
            by_last,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn rescale_checked(&self, w: &[f64]) -> Result<Vec<f64>> {
        let r = self.rescaling.point_to_rescaled(w);
        if r.len() != self.rescaling.scale.len() || r.iter().any(|v| !(v.abs() <= 1.0 + 1e-9)) {
            return Err(PostprocError::OutOfDomain(w.to_vec()));
        }
        Ok(r)
    }

    pub fn eval(&self, w: &[f64]) -> Result<f64> {
        let r = self.rescale_checked(w)?;
        let b = DVector::from_iterator(self.dim(), self.basis.iter().map(|a| monomial_value(a, &r)));
        Ok((&self.linv * b).norm_squared())
    }

    /// `q` as a polynomial in the (rescaled) last variable at fixed leading
    /// variables: coefficients of `y'^0, ..., y'^{2d}`.
    fn last_variable_polynomial(&self, lead: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        let vs: Vec<DVector<f64>> = self
            .by_last
            .iter()
            .map(|items| {
                let mut v = DVector::zeros(dim);
                for (i, a) in items {
                    v.axpy(monomial_value(a, lead), &self.linv.column(*i), 1.0);
                }
                v
            })
            .collect();
        let mut coef = vec![0.0; 2 * self.d as usize + 1];
        for k in 0..vs.len() {
            coef[2 * k] += vs[k].norm_squared();
            for l in 0..k {
                coef[k + l] += 2.0 * vs[k].dot(&vs[l]);
            }
        }
        coef
    }

    /// Index of the value node minimizing `q` at fixed leading variables;
    /// ties within `1e-12` relative slack go to the smallest value.
    pub fn argmin_last(&self, lead: &[f64], values: &[f64]) -> Result<usize> {
        let mut full = lead.to_vec();
        full.push(values[0]);
        let r = self.rescale_checked(&full)?;
        let nv = r.len();
        let coef = self.last_variable_polynomial(&r[..nv - 1]);
        let (s, c) = (self.rescaling.scale[nv - 1], self.rescaling.shift[nv - 1]);
        let q: Vec<f64> = values
            .iter()
            .map(|&y| {
                let yr = (y - c) / s;
                coef.iter().rev().fold(0.0, |acc, a| acc * yr + a)
            })
            .collect();
        let m = q.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(q.iter().position(|&v| v <= m + 1e-12 * m.abs()).unwrap())
    }
}

/// Tensor grid over the leading variables plus a value grid for the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionGrid {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl ReconstructionGrid {
    /// Equispaced nodes including endpoints.
    pub fn uniform(ranges: &[(Interval, usize)], values: (Interval, usize)) -> Result<Self> {
        if ranges.iter().chain([&values]).any(|r| r.1 < 2) {
            return Err(PostprocError::Grid("node counts must be at least 2".into()));
        }
        let lin = |iv: Interval, n: usize| crate::bench::linspace(iv.lo, iv.hi, n);
        Ok(ReconstructionGrid {
            axes: ranges.iter().map(|&(iv, n)| lin(iv, n)).collect(),
            values: lin(values.0, values.1),
        })
    }

    /// Explicit node lists; a single-node axis fixes that variable.
    pub fn from_axes(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.iter().any(|a| a.is_empty()) || values.len() < 2 {
            return Err(PostprocError::Grid("empty axis or fewer than 2 value nodes".into()));
        }
        Ok(ReconstructionGrid { axes, values })
    }

    pub fn num_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// Node `i` in row-major order (last axis fastest).
    pub fn node(&self, mut i: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            w[k] = a[i % a.len()];
            i /= a.len();
        }
        w
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.num_nodes()).map(|i| self.node(i))
    }
}

/// Grid-argmin reconstruction at every node, in node order.
pub fn reconstruct(model: &ChristoffelModel, grid: &ReconstructionGrid) -> Result<Vec<f64>> {
    (0..grid.num_nodes())
        .into_par_iter()
        .map(|i| {
            let w = grid.node(i);
            model.argmin_last(&w, &grid.values).map(|j| grid.values[j])
        })
        .collect()
}

/// `E[Q] ≈ ℓ_z(G)`.
pub fn expectation_qoi(z: &MomentVector, g: &Polynomial) -> Result<f64> {
    Ok(z.riesz(g)?)
}

/// Range of `u^k` for `u ∈ U`.
pub fn statistic_range(u: Interval, k: u32) -> Interval {
    let m = u.lo.abs().max(u.hi.abs()).powi(k as i32);
    Interval::new(u.lo.powi(k as i32).min(0.0), m)
}

/// Completed moments of `dt dx δ_{f_k(t,x)}(df)` and the solver report.
#[derive(Debug, Clone)]
pub struct Completion {
    pub omega: MomentVector,
    pub intervals: Vec<Interval>,
    pub solution: SdpSolution,
}

/// Trace-minimizing completion over the box `T × X × F`: the `f`-free moments
/// are the Lebesgue moments and the `f¹` moments equal `z` at `(α, ξ=0, y=k)`.
pub fn complete_moments(z: &MomentVector, domains: &BoxDomain, k: u32, d: u32, tol: Tolerances) -> Result<Completion> {
    if k == 0 || k > 2 * d || z.degree_bound() < 2 * d {
        return Err(PostprocError::Order);
    }
    let n = domains.n();
    let p = domains.p();
    let mut names = vec!["t".to_string()];
    names.extend((1..=n).map(|i| if n == 1 { "x".to_string() } else { format!("x{i}") }));
    names.push("f".to_string());
    let space = VariableSpace::new(&names);
    let nv = space.len();
    let mut intervals = vec![domains.time()];
    intervals.extend(domains.space.iter().copied());
    intervals.push(statistic_range(domains.u_range(), k));
    let resc = Rescaling::for_intervals(&intervals);
    let basis = MonomialBasis::new(&space, 2 * d);

    // known original moments; unknown ones are left at zero, which the
    // triangular pushforward never mixes into known rescaled entries
    let known = |a: &MultiIndex| -> Option<f64> {
        let e = a.get(nv - 1);
        let lead = &a.exps()[..nv - 1];
        let mut full = lead.to_vec();
        full.extend(std::iter::repeat_n(0, p));
        match e {
            0 => {
                full.push(0);
                Some(z.at(&full))
            }
            1 if a.degree() - 1 <= 2 * d - k => {
                full.push(k);
                Some(z.at(&full))
            }
            _ => None,
        }
    };
    let original = MomentVector::from_fn(basis.clone(), |a| known(a).unwrap_or(0.0));
    let rescaled = resc.moments_to_rescaled(&original);

    let mut constraints = Vec::new();
    for (i, a) in basis.iter().enumerate() {
        if known(a).is_some() {
            constraints.push(LinearConstraint {
                coeffs: vec![(i, 1.0)],
                sense: Sense::Eq,
                rhs: rescaled.values()[i],
            });
        }
    }
    let mut objective = vec![0.0; basis.len()];
    for i in 0..basis.count_up_to(d) {
        let a = basis.get(i);
        objective[basis.index_of(&a.add(a)).unwrap()] += 1.0;
    }
    let mut blocks = vec![psd_block(&basis, d, None)];
    for g in 0..nv {
        blocks.push(psd_block(&basis, d, Some(g)));
    }
    let problem = SdpProblem {
        num_vars: basis.len(),
        objective,
        constraints,
        blocks,
    };
    let solution = sdp::solve(&problem, tol)?;
    if !solution.status.is_solved() {
        return Err(PostprocError::Completion(solution.status.as_str().to_string()));
    }
    let omega = resc.moments_to_original(&MomentVector::new(basis, solution.x.clone()));
    Ok(Completion {
        omega,
        intervals,
        solution,
    })
}

fn psd_block(basis: &MonomialBasis, d: u32, generator: Option<usize>) -> PsdBlock {
    let nv = basis.space().len();
    let rd = if generator.is_some() { d - 1 } else { d };
    let rows = basis.count_up_to(rd);
    let mut entries = Vec::new();
    for i in 0..rows {
        for j in 0..=i {
            let ab = basis.get(i).add(basis.get(j));
            entries.push(BlockEntry {
                var: Some(basis.index_of(&ab).unwrap()),
                row: i,
                col: j,
                value: 1.0,
            });
            if let Some(g) = generator {
                let two = MultiIndex::unit(nv, g).add(&MultiIndex::unit(nv, g));
                entries.push(BlockEntry {
                    var: Some(basis.index_of(&ab.add(&two)).unwrap()),
                    row: i,
                    col: j,
                    value: -1.0,
                });
            }
        }
    }
    PsdBlock { dim: rows, entries }
}

/// Christoffel reconstruction of `f_k` from completed moments on a `(t, x)` grid.
pub fn reconstruct_statistic(
    completion: &Completion,
    d: u32,
    beta: Option<f64>,
    axes: Vec<Vec<f64>>,
    value_nodes: usize,
) -> Result<(ReconstructionGrid, Vec<f64>)> {
    let f = *completion.intervals.last().unwrap();
    let grid = ReconstructionGrid::from_axes(axes, crate::bench::linspace(f.lo, f.hi, value_nodes))?;
    let model = ChristoffelModel::build(&completion.omega, &completion.intervals, d, beta)?;
    let vals = reconstruct(&model, &grid)?;
    Ok((grid, vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{linspace, oracle_moments, AnalyticSolution};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_box(nv: usize) -> Vec<Interval> {
        vec![Interval::new(-1.0, 1.0); nv]
    }

    /// Synthetic vector whose degree-1 moment matrix is the identity.
    fn identity_moments(nv: usize, d: u32) -> MomentVector {
        let sp = VariableSpace::new(&(0..nv).map(|i| format!("w{i}")).collect::<Vec<_>>());
        let basis = MonomialBasis::new(&sp, 2 * d);
        MomentVector::from_fn(basis, |a| {
            let square = a.degree() == 2 && a.exps().iter().any(|&e| e == 2);
            if a.degree() == 0 || square {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identity_moment_matrix_at_origin() {
        let z = identity_moments(2, 1);
        let m = moment_matrix(&z, 1).unwrap().to_dmatrix();
        assert_eq!(m, DMatrix::identity(3, 3));
        let beta = 0.25;
        let model = ChristoffelModel::build(&z, &unit_box(2), 1, Some(beta)).unwrap();
        assert_relative_eq!(
            model.eval(&[0.0, 0.0]).unwrap(),
            1.0 / (1.0 + beta),
            max_relative = 1e-14
        );
    }

    #[test]
    fn atomic_rank_one() {
        // z = δ_{w0}, d = 1: M = b bᵀ, so q(w) = ‖b(w)‖²/β − (b(w)·b0)²/(β(β + ‖b0‖²))
        let sp = VariableSpace::new(&["a", "b"]);
        let w0 = [0.3, -0.2];
        let z = MomentVector::atomic(MonomialBasis::new(&sp, 2), &[(1.0, w0.to_vec())]);
        let beta = 1e-6;
        let model = ChristoffelModel::build(&z, &unit_box(2), 1, Some(beta)).unwrap();
        let b = |w: &[f64]| [1.0, w[0], w[1]];
        let closed = |w: &[f64]| {
            let (bw, b0) = (b(w), b(&w0));
            let nn: f64 = bw.iter().map(|v| v * v).sum();
            let n0: f64 = b0.iter().map(|v| v * v).sum();
            let dot: f64 = bw.iter().zip(&b0).map(|(a, c)| a * c).sum();
            nn / beta - dot * dot / (beta * (beta + n0))
        };
        let at = model.eval(&w0).unwrap();
        assert!(at < 2.0, "{at}");
        assert_relative_eq!(at, closed(&w0), max_relative = 1e-6);
        let off = model.eval(&[-0.5, 0.5]).unwrap();
        assert!(off > 1e4);
        assert_relative_eq!(off, closed(&[-0.5, 0.5]), max_relative = 1e-6);
    }

    #[test]
    fn default_beta_and_domain_check() {
        let s = AnalyticSolution::parametric_initial();
        let z = oracle_moments(&s, &s.domains, 4);
        let ivs = s.domains.occupation_intervals();
        let model = ChristoffelModel::build(&z, &ivs, 2, None).unwrap();
        let zr = model.rescaling.moments_to_rescaled(&z);
        let m = moment_matrix(&zr, 2).unwrap();
        assert_relative_eq!(model.beta, 1e-6 * m.trace() / 15.0, max_relative = 1e-14);
        assert!(matches!(
            model.eval(&[0.6, 0.0, 0.5, 0.5]),
            Err(PostprocError::OutOfDomain(_))
        ));
        assert!(ChristoffelModel::build(&z, &ivs, 2, Some(0.0)).is_err());
    }

    #[test]
    fn argmin_agrees_with_direct_evaluation() {
        let s = AnalyticSolution::parametric_flux();
        let z = oracle_moments(&s, &s.domains, 6);
        let model = ChristoffelModel::build(&z, &s.domains.occupation_intervals(), 3, None).unwrap();
        let values = linspace(0.0, 1.0, 51);
        for lead in [[0.1, -0.2, 0.3], [0.45, 0.1, 0.9], [0.3, 0.07, 0.1]] {
            let j = model.argmin_last(&lead, &values).unwrap();
            let direct: Vec<f64> = values
                .iter()
                .map(|&y| model.eval(&[lead[0], lead[1], lead[2], y]).unwrap())
                .collect();
            let m = direct.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(direct[j] <= m * (1.0 + 1e-9), "{lead:?}");
        }
    }

    fn two_level_moments(d: u32) -> (MomentVector, Vec<Interval>) {
        // u(t, x) = 0.2 for x < 0.1, 0.8 otherwise, on [0,1] × [-1,1]
        let sp = VariableSpace::new(&["t", "x", "y"]);
        let basis = MonomialBasis::new(&sp, 2 * d);
        let z = MomentVector::from_fn(basis, |a| {
            let (i, j, e) = (a.get(0) as i32, a.get(1) as i32, a.get(2) as i32);
            let tt = 1.0 / (i as f64 + 1.0);
            let xl = (0.1f64.powi(j + 1) - (-1f64).powi(j + 1)) / (j as f64 + 1.0);
            let xr = (1.0 - 0.1f64.powi(j + 1)) / (j as f64 + 1.0);
            tt * (0.2f64.powi(e) * xl + 0.8f64.powi(e) * xr)
        });
        (
            z,
            vec![
                Interval::new(0.0, 1.0),
                Interval::new(-1.0, 1.0),
                Interval::new(0.0, 1.0),
            ],
        )
    }

    #[test]
    fn localizes_two_level_function() {
        let (z, ivs) = two_level_moments(3);
        let model = ChristoffelModel::build(&z, &ivs, 3, Some(1e-8)).unwrap();
        // nodes at least two value cells away from the jump in x
        let grid = ReconstructionGrid::from_axes(
            vec![linspace(0.0, 1.0, 7), vec![-0.9, -0.6, -0.3, -0.1, 0.3, 0.6, 0.9]],
            linspace(0.0, 1.0, 11),
        )
        .unwrap();
        let rec = reconstruct(&model, &grid).unwrap();
        for (w, v) in grid.nodes().zip(&rec) {
            let exact = if w[1] < 0.1 { 0.2 } else { 0.8 };
            assert!((v - exact).abs() < 1e-12, "{w:?}: {v}");
        }
    }

    #[test]
    fn constant_graph_reconstructs_exactly() {
        let sp = VariableSpace::new(&["t", "x", "y"]);
        let z = MomentVector::from_fn(MonomialBasis::new(&sp, 6), |a| {
            let (i, j, e) = (a.get(0) as i32, a.get(1) as i32, a.get(2) as i32);
            let xm = if j % 2 == 0 { 2.0 / (j as f64 + 1.0) } else { 0.0 };
            xm / (i as f64 + 1.0) * 0.3f64.powi(e)
        });
        let ivs = vec![
            Interval::new(0.0, 1.0),
            Interval::new(-1.0, 1.0),
            Interval::new(0.0, 1.0),
        ];
        let model = ChristoffelModel::build(&z, &ivs, 3, None).unwrap();
        let grid = ReconstructionGrid::uniform(&[(ivs[0], 5), (ivs[1], 5)], (ivs[2], 11)).unwrap();
        for v in reconstruct(&model, &grid).unwrap() {
            assert_eq!(v, 0.3);
        }
    }

    #[test]
    fn qoi_on_oracle() {
        let s = AnalyticSolution::parametric_initial();
        let z = oracle_moments(&s, &s.domains, 4);
        let sp = z.space().clone();
        let one = Polynomial::constant(&sp, 1.0);
        assert_relative_eq!(expectation_qoi(&z, &one).unwrap(), 0.5, max_relative = 1e-15);
        let y = Polynomial::var(&sp, "y").unwrap();
        assert_relative_eq!(expectation_qoi(&z, &y).unwrap(), 0.25, max_relative = 1e-14);
        assert_relative_eq!(expectation_qoi(&z, &y.pow(2)).unwrap(), 0.25, max_relative = 1e-14);
        // G = t·x·y + ξ² y against midpoint quadrature of the solution
        let g = Polynomial::from_terms(&sp, [(vec![1, 1, 0, 1], 1.0), (vec![0, 0, 2, 1], 1.0)]);
        let m = 200;
        let mut q = 0.0;
        for i in 0..m {
            let t = (i as f64 + 0.5) * 0.5 / m as f64;
            for k in 0..m {
                let xi = (k as f64 + 0.5) / m as f64;
                // exact in x: u = 1 on [-1/2, s)
                let sh = s.shock_at(t, xi);
                let ix = (sh * sh - 0.25) / 2.0;
                let il = sh + 0.5;
                q += (t * ix + xi * xi * il) * (0.5 / m as f64) * (1.0 / m as f64);
            }
        }
        assert!((expectation_qoi(&z, &g).unwrap() - q).abs() < 1e-6);
        assert!(expectation_qoi(&z, &y.pow(5)).is_err());
    }

    #[test]
    fn completion_matches_known_moments() {
        let s = AnalyticSolution::parametric_initial();
        let d = 2;
        let z = oracle_moments(&s, &s.domains, 2 * d);
        let tol = Tolerances::default();
        let c = complete_moments(&z, &s.domains, 1, d, tol).unwrap();
        assert_relative_eq!(c.omega.at(&[0, 0, 0]), 0.5, max_relative = 1e-7);
        assert_relative_eq!(c.omega.at(&[0, 0, 1]), 0.25, max_relative = 1e-6);
        for a in c.omega.basis().iter() {
            let (i, j, e) = (a.get(0), a.get(1), a.get(2));
            if e == 0 {
                assert!((c.omega.at(a.exps()) - z.at(&[i, j, 0, 0])).abs() < 1e-6);
            } else if e == 1 && i + j < 2 * d {
                assert!((c.omega.at(a.exps()) - z.at(&[i, j, 0, 1])).abs() < 1e-6);
            }
        }
        let zr = Rescaling::for_intervals(&c.intervals).moments_to_rescaled(&c.omega);
        assert!(moment_matrix(&zr, d).unwrap().min_eigenvalue() > -1e-6);
        assert!(matches!(
            complete_moments(&z, &s.domains, 0, d, tol),
            Err(PostprocError::Order)
        ));
    }

    #[test]
    fn completion_of_deterministic_graph() {
        // p = 0 variant: u(t, x) = 1 for x < t/2 - 1/4; the true graph moments
        // are feasible, so the trace minimizer is no worse than them
        let d = 2;
        let sp = VariableSpace::new(&["t", "x", "xi", "y"]);
        let sol = AnalyticSolution::parametric_initial();
        let z = MomentVector::from_fn(MonomialBasis::new(&sp, 2 * d), |a| {
            let (i, j, c, e) = (a.get(0) as i32, a.get(1) as i32, a.get(2) as i32, a.get(3));
            // u independent of ξ at ξ = 0; ξ-moments of ρ
            let xiw = 1.0 / (c as f64 + 1.0);
            let m = 400;
            let mut acc = 0.0;
            for k in 0..m {
                let t = (k as f64 + 0.5) * 0.5 / m as f64;
                let sh = sol.shock_at(t, 0.0);
                let full = (0.5f64.powi(j + 1) - (-0.5f64).powi(j + 1)) / (j as f64 + 1.0);
                let left = (sh.powi(j + 1) - (-0.5f64).powi(j + 1)) / (j as f64 + 1.0);
                let xint = if e == 0 { full } else { left };
                acc += t.powi(i) * xint * 0.5 / m as f64;
            }
            acc * xiw
        });
        let c = complete_moments(&z, &sol.domains, 1, d, Tolerances::default()).unwrap();
        let truth = MomentVector::from_fn(c.omega.basis().clone(), |a| {
            // u ∈ {0, 1}, so every positive power of u has the same moments
            z.at(&[a.get(0), a.get(1), 0, a.get(2).min(1)])
        });
        let resc = Rescaling::for_intervals(&c.intervals);
        let tr = |w: &MomentVector| moment_matrix(&resc.moments_to_rescaled(w), d).unwrap().trace();
        assert!(tr(&c.omega) <= tr(&truth) + 1e-6);
    }

    proptest! {
        #[test]
        fn christoffel_lower_bound(a in -1.0..1.0f64, b in -1.0..1.0f64, y in 0.0..1.0f64) {
            let (z, ivs) = two_level_moments(2);
            let model = ChristoffelModel::build(&z, &ivs, 2, None).unwrap();
            let w = [0.5 * (a + 1.0), b, y];
            let zr = model.rescaling.moments_to_rescaled(&z);
            let m = moment_matrix(&zr, 2).unwrap();
            let lmax = m.eigenvalues().into_iter().fold(f64::MIN, f64::max);
            let r = model.rescaling.point_to_rescaled(&w);
            let bb: f64 = MultiIndex::all_up_to(3, 2).iter().map(|al| monomial_value(al, &r).powi(2)).sum();
            let q = model.eval(&w).unwrap();
            prop_assert!(q > 0.0);
            prop_assert!(q >= bb / (lmax + model.beta) * (1.0 - 1e-9));
        }
    }
}
