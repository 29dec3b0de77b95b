//! Truncated moment sequences, the Riesz functional, moment and localizing
//! matrices, and exact moments of the known data measures.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::poly::{MultiIndex, PolyError, Polynomial, VariableSpace};
use crate::problem::{BoxDomain, Face, Interval, ProblemSpec, Side};

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("polynomial degree {degree} exceeds moment degree bound {bound}")]
    DegreeOverflow { degree: u32, bound: u32 },
    #[error("variable spaces differ: {0:?} vs {1:?}")]
    SpaceMismatch(VariableSpace, VariableSpace),
    #[error("moment file: {0}")]
    Format(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MomentError>;

/// All monomials of degree `<= max_degree` in graded-lexicographic order.
#[derive(Debug)]
pub struct MonomialBasis {
    space: VariableSpace,
    max_degree: u32,
    list: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
}

impl MonomialBasis {
    pub fn new(space: &VariableSpace, max_degree: u32) -> Arc<Self> {
        let list = MultiIndex::all_up_to(space.len(), max_degree);
        let index = list.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Arc::new(MonomialBasis {
            space: space.clone(),
            max_degree,
            list,
            index,
        })
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.list[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.list.iter()
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    /// Number of monomials of degree `<= d`, i.e. the prefix length for that degree.
    pub fn count_up_to(&self, d: u32) -> usize {
        self.list.partition_point(|a| a.degree() <= d)
    }
}

/// `z_α = ∫ w^α dν` for all `|α| <= 2d`, stored in basis order.
#[derive(Clone, Debug)]
pub struct MomentVector {
    basis: Arc<MonomialBasis>,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(basis: Arc<MonomialBasis>, values: Vec<f64>) -> Self {
        assert_eq!(basis.len(), values.len(), "moment count mismatch");
        MomentVector { basis, values }
    }

    pub fn from_fn(basis: Arc<MonomialBasis>, mut f: impl FnMut(&MultiIndex) -> f64) -> Self {
        let values = basis.iter().map(&mut f).collect();
        MomentVector { basis, values }
    }

    /// Moments of `Σ weight·δ_point`.
    pub fn atomic(basis: Arc<MonomialBasis>, atoms: &[(f64, Vec<f64>)]) -> Self {
        Self::from_fn(basis, |a| atoms.iter().map(|(w, pt)| w * monomial_value(a, pt)).sum())
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn space(&self) -> &VariableSpace {
        self.basis.space()
    }

    pub fn degree_bound(&self) -> u32 {
        self.basis.max_degree()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.basis.index_of(alpha).map(|i| self.values[i])
    }

    /// Moment by raw exponent vector; panics when out of range.
    pub fn at(&self, exps: &[u32]) -> f64 {
        self.get(&MultiIndex::new(exps.to_vec()))
            .unwrap_or_else(|| panic!("moment {exps:?} outside degree bound"))
    }

    pub fn mass(&self) -> f64 {
        self.values[0]
    }

    /// The Riesz functional `ℓ_z(p) = Σ p_α z_α`.
    pub fn riesz(&self, p: &Polynomial) -> Result<f64> {
        if p.space() != self.space() {
            return Err(MomentError::SpaceMismatch(p.space().clone(), self.space().clone()));
        }
        if p.degree() > self.degree_bound() {
            return Err(MomentError::DegreeOverflow {
                degree: p.degree(),
                bound: self.degree_bound(),
            });
        }
        Ok(p.terms().map(|(a, c)| c * self.get(a).unwrap()).sum())
    }

    /// Moments of the pushforward under `w_k -> scale[k]·w_k + shift[k]`.
    pub fn affine_pushforward(&self, scale: &[f64], shift: &[f64]) -> MomentVector {
        let space = self.space().clone();
        Self::from_fn(self.basis.clone(), |a| {
            let mono = Polynomial::monomial(&space, a.clone(), 1.0);
            self.riesz(&mono.compose_affine(scale, shift)).unwrap()
        })
    }

    /// Restricts to a smaller degree bound.
    pub fn truncate(&self, max_degree: u32) -> MomentVector {
        assert!(max_degree <= self.degree_bound());
        let basis = MonomialBasis::new(self.space(), max_degree);
        let n = basis.len();
        MomentVector::new(basis, self.values[..n].to_vec())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = self
            .space()
            .names()
            .iter()
            .map(|n| format!("alpha_{n}"))
            .chain(std::iter::once("value".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (a, v) in self.basis.iter().zip(&self.values) {
            let exps: Vec<String> = a.exps().iter().map(|e| e.to_string()).collect();
            writeln!(w, "{},{:.16e}", exps.join(","), v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<MomentVector> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| MomentError::Format("empty file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.last() != Some(&"value") {
            return Err(MomentError::Format("last column must be `value`".into()));
        }
        let names: Vec<String> = cols[..cols.len() - 1]
            .iter()
            .map(|c| {
                c.strip_prefix("alpha_")
                    .map(str::to_string)
                    .ok_or_else(|| MomentError::Format(format!("bad column `{c}`")))
            })
            .collect::<Result<_>>()?;
        let space = VariableSpace::new(&names);
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != names.len() + 1 {
                return Err(MomentError::Format(format!("bad row `{line}`")));
            }
            let exps = fields[..names.len()]
                .iter()
                .map(|f| f.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| MomentError::Format(e.to_string()))?;
            let v: f64 = fields[names.len()]
                .parse()
                .map_err(|e: std::num::ParseFloatError| MomentError::Format(e.to_string()))?;
            rows.push((MultiIndex::new(exps), v));
        }
        let max_degree = rows.iter().map(|(a, _)| a.degree()).max().unwrap_or(0);
        let basis = MonomialBasis::new(&space, max_degree);
        let mut values = vec![f64::NAN; basis.len()];
        for (a, v) in rows {
            let i = basis
                .index_of(&a)
                .ok_or_else(|| MomentError::Format(format!("exponent {a:?} out of range")))?;
            values[i] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(MomentError::Format("incomplete moment sequence".into()));
        }
        Ok(MomentVector::new(basis, values))
    }
}

pub(crate) fn monomial_value(a: &MultiIndex, pt: &[f64]) -> f64 {
    a.exps().iter().zip(pt).map(|(&e, &x)| x.powi(e as i32)).product()
}

/// Dense symmetric matrix stored as its packed lower triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    lower: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymmetricMatrix {
            dim,
            lower: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        i * (i + 1) / 2 + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[Self::offset(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.lower[Self::offset(i, j)] = v;
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_dmatrix())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }
}

/// `M_d(z)` with entries `z_{α+β}` over the degree-`d` basis.
pub fn moment_matrix(z: &MomentVector, d: u32) -> Result<SymmetricMatrix> {
    let one = Polynomial::constant(z.space(), 1.0);
    localizing_matrix(z, &one, d)
}

/// `M_{d-d_g}(g z)` with entries `ℓ_z(g w^{α+β})`, `d_g = ceil(deg g / 2)`.
pub fn localizing_matrix(z: &MomentVector, g: &Polynomial, d: u32) -> Result<SymmetricMatrix> {
    if g.space() != z.space() {
        return Err(MomentError::SpaceMismatch(g.space().clone(), z.space().clone()));
    }
    let dg = g.degree().div_ceil(2);
    if dg > d || 2 * (d - dg) + g.degree() > z.degree_bound() {
        return Err(MomentError::DegreeOverflow {
            degree: 2 * d,
            bound: z.degree_bound(),
        });
    }
    let rows = MultiIndex::all_up_to(z.space().len(), d - dg);
    let mut m = SymmetricMatrix::zeros(rows.len());
    for i in 0..rows.len() {
        for j in 0..=i {
            let ab = rows[i].add(&rows[j]);
            let v: f64 = g.terms().map(|(gamma, c)| c * z.get(&gamma.add(&ab)).unwrap()).sum();
            m.set(i, j, v);
        }
    }
    Ok(m)
}

/// `∫_lo^hi s^a ds`.
pub fn interval_moment(iv: Interval, a: u32) -> f64 {
    let k = a as i32 + 1;
    (iv.hi.powi(k) - iv.lo.powi(k)) / k as f64
}

/// Moment of `ρ`, the uniform probability measure on `[0,1]`.
pub fn param_moment(a: u32) -> f64 {
    1.0 / (a as f64 + 1.0)
}

/// `∫ t^{α_t} x^{α_x} ξ^{α_ξ} dt dx dρ(ξ)` for exponents over `(t, x.., xi..)`.
pub fn box_marginal_moment(domains: &BoxDomain, alpha: &[u32]) -> f64 {
    let n = domains.n();
    assert_eq!(alpha.len(), 1 + n + domains.p(), "exponents over (t, x, xi)");
    let mut v = interval_moment(domains.time(), alpha[0]);
    for (i, iv) in domains.space.iter().enumerate() {
        v *= interval_moment(*iv, alpha[1 + i]);
    }
    for &b in &alpha[1 + n..] {
        v *= param_moment(b);
    }
    v
}

/// Integral of an occupation-space polynomial in `xi` alone against `ρ`.
pub(crate) fn integrate_params(p: &Polynomial, first_param: usize, nparams: usize) -> f64 {
    p.terms()
        .map(|(a, c)| {
            c * (first_param..first_param + nparams)
                .map(|k| param_moment(a.get(k)))
                .product::<f64>()
        })
        .sum()
}

/// Moments of `ν₀ = δ_{t=0} dx dρ δ_{u₀(x,ξ)}` over the occupation space,
/// up to `max_degree`.
///
/// For every piece the `x`-integrals are taken in closed form between the
/// piece's (possibly `ξ`-dependent) limits, leaving a polynomial in `ξ` that
/// is integrated exactly against `ρ`.
pub fn graph_measure_moments(spec: &ProblemSpec, max_degree: u32) -> MomentVector {
    let space = spec.space();
    let n = spec.domains.n();
    let p = spec.domains.p();
    let basis = MonomialBasis::new(&space, max_degree);
    let names = space.names().to_vec();
    let y = space.len() - 1;

    // per piece: integration limits per axis and cached powers of the value
    struct PieceData {
        limits: Vec<(Polynomial, Polynomial)>,
        powers: Vec<Polynomial>,
    }
    let pieces: Vec<PieceData> = spec
        .initial
        .pieces
        .iter()
        .map(|piece| {
            let limits = (0..n)
                .map(|i| {
                    let iv = spec.domains.space[i];
                    let mut lo = Polynomial::constant(&space, iv.lo);
                    let mut hi = Polynomial::constant(&space, iv.hi);
                    for c in piece.conditions.iter().filter(|c| c.axis == i) {
                        match c.side {
                            Side::Below => hi = c.breakpoint.clone(),
                            Side::AtOrAbove => lo = c.breakpoint.clone(),
                        }
                    }
                    (lo, hi)
                })
                .collect();
            let mut powers = vec![Polynomial::constant(&space, 1.0)];
            for k in 1..=max_degree as usize {
                let next = powers[k - 1].mul(&piece.value).unwrap();
                powers.push(next);
            }
            PieceData { limits, powers }
        })
        .collect();

    MomentVector::from_fn(basis, |a| {
        if a.get(0) > 0 {
            return 0.0;
        }
        let mut x_xi = a.exps().to_vec();
        x_xi[y] = 0;
        let mono = Polynomial::monomial(&space, MultiIndex::new(x_xi), 1.0);
        pieces
            .iter()
            .map(|pd| {
                let mut f = mono.mul(&pd.powers[a.get(y) as usize]).unwrap();
                for (i, (lo, hi)) in pd.limits.iter().enumerate() {
                    let var = &names[1 + i];
                    let anti = f.antiderivative_at(1 + i);
                    f = anti
                        .substitute(var, hi)
                        .unwrap()
                        .sub(&anti.substitute(var, lo).unwrap())
                        .unwrap();
                }
                integrate_params(&f, 1 + n, p)
            })
            .sum()
    })
}

/// Moments of the boundary measure `dt δ_{x_i = face} dx' dρ δ_{u_B}` over
/// the occupation space.
pub fn boundary_measure_moments(
    value: f64,
    axis: usize,
    face: Face,
    domains: &BoxDomain,
    max_degree: u32,
) -> MomentVector {
    let n = domains.n();
    let space = domains.occupation_space();
    let basis = MonomialBasis::new(&space, max_degree);
    let at = match face {
        Face::Left => domains.space[axis].lo,
        Face::Right => domains.space[axis].hi,
    };
    MomentVector::from_fn(basis, |a| {
        let mut v = interval_moment(domains.time(), a.get(0));
        for i in 0..n {
            v *= if i == axis {
                at.powi(a.get(1 + i) as i32)
            } else {
                interval_moment(domains.space[i], a.get(1 + i))
            };
        }
        for k in 0..domains.p() {
            v *= param_moment(a.get(1 + n + k));
        }
        v * value.powi(a.get(1 + n + domains.p()) as i32)
    })
}
