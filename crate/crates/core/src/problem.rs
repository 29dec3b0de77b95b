//! Problem data: domains, flux, piecewise initial data, entropy family.

use log::{info, warn};
use thiserror::Error;

use crate::poly::{entropy_flux, PolyError, Polynomial, VariableSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("degenerate interval for {name}: [{lo}, {hi}]")]
    DegenerateInterval { name: String, lo: f64, hi: f64 },
    #[error("flux has {got} components, expected {expected}")]
    FluxArity { expected: usize, got: usize },
    #[error("flux component {0} depends on variables other than y and xi")]
    FluxVariables(usize),
    #[error("entropy {index} has odd degree {degree}")]
    OddEntropy { index: usize, degree: u32 },
    #[error("entropy {0} is not a polynomial in y alone")]
    EntropyVariables(usize),
    #[error("entropy {0} is not convex on U")]
    NonConvexEntropy(usize),
    #[error("initial data: {0}")]
    InitialData(String),
    #[error("initial value {value} at (x={x:?}, xi={xi:?}) escapes U=[{lo}, {hi}]")]
    ValueOutOfRange {
        value: f64,
        x: Vec<f64>,
        xi: Vec<f64>,
        lo: f64,
        hi: f64,
    },
    #[error("pieces do not partition X x Xi: {covering} pieces cover (x={x:?}, xi={xi:?})")]
    NotAPartition { covering: usize, x: Vec<f64>, xi: Vec<f64> },
    #[error("boundary trace on face {axis}{side:?} is not constant")]
    NonConstantTrace { axis: usize, side: Side },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(ProblemError::DegenerateInterval {
                name: name.to_string(),
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }
}

/// `T × X × Ξ × U` with `T = [0, T_end]` and `Ξ = [0, 1]^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub t_end: f64,
    pub space: Vec<Interval>,
    pub params: usize,
    /// Filled in by [`ProblemSpec::validate`] when not supplied.
    pub values: Option<Interval>,
}

impl BoxDomain {
    pub fn n(&self) -> usize {
        self.space.len()
    }

    pub fn p(&self) -> usize {
        self.params
    }

    pub fn time(&self) -> Interval {
        Interval::new(0.0, self.t_end)
    }

    pub fn param(&self, _k: usize) -> Interval {
        Interval::new(0.0, 1.0)
    }

    pub fn u_range(&self) -> Interval {
        self.values.expect("value range U unset; validate the problem first")
    }

    /// Interval of every variable of the occupation space `(t, x.., xi.., y)`.
    pub fn occupation_intervals(&self) -> Vec<Interval> {
        let mut v = vec![self.time()];
        v.extend(self.space.iter().copied());
        v.extend((0..self.params).map(|k| self.param(k)));
        v.push(self.u_range());
        v
    }

    /// Intervals of the terminal slice `(x.., xi.., y)`.
    pub fn terminal_intervals(&self) -> Vec<Interval> {
        self.occupation_intervals()[1..].to_vec()
    }

    /// Product of the space sizes `|X|`.
    pub fn space_volume(&self) -> f64 {
        self.space.iter().map(|i| i.width()).product()
    }

    pub fn occupation_space(&self) -> VariableSpace {
        VariableSpace::occupation(self.n(), self.p())
    }
}

/// `{ g_j >= 0 }` with the half-degrees `d_j = ceil(deg g_j / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiAlgebraicSet {
    pub generators: Vec<Polynomial>,
}

impl SemiAlgebraicSet {
    /// Interval factors `(w_k - lo)(hi - w_k)` of a box.
    pub fn from_box(space: &VariableSpace, intervals: &[Interval]) -> Self {
        assert_eq!(space.len(), intervals.len());
        let generators = intervals
            .iter()
            .enumerate()
            .map(|(k, iv)| {
                let w = Polynomial::var(space, &space.names()[k]).unwrap();
                let lo = w.sub(&Polynomial::constant(space, iv.lo)).unwrap();
                let hi = Polynomial::constant(space, iv.hi).sub(&w).unwrap();
                lo.mul(&hi).unwrap()
            })
            .collect();
        SemiAlgebraicSet { generators }
    }

    pub fn half_degrees(&self) -> Vec<u32> {
        self.generators.iter().map(|g| g.degree().div_ceil(2)).collect()
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.generators
            .iter()
            .all(|g| g.eval(point).map(|v| v >= -tol).unwrap_or(false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `x_axis < s(xi)`
    Below,
    /// `x_axis >= s(xi)`
    AtOrAbove,
}

/// One half-space condition on a single space variable.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    /// 0-based index among the space variables.
    pub axis: usize,
    pub side: Side,
    /// Breakpoint polynomial in the parameters (occupation space).
    pub breakpoint: Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialPiece {
    /// Conjunction of half-space conditions, at most one per axis.
    pub conditions: Vec<HalfSpace>,
    /// Value polynomial in `(x, xi)` (occupation space).
    pub value: Polynomial,
}

impl InitialPiece {
    /// `x` and `xi` are the raw coordinates; `space` is the occupation space.
    pub fn contains(&self, x: &[f64], xi: &[f64]) -> bool {
        self.conditions.iter().all(|c| {
            let s = eval_x_xi(&c.breakpoint, x, xi);
            match c.side {
                Side::Below => x[c.axis] < s,
                Side::AtOrAbove => x[c.axis] >= s,
            }
        })
    }

    pub fn value_at(&self, x: &[f64], xi: &[f64]) -> f64 {
        eval_x_xi(&self.value, x, xi)
    }
}

/// Evaluates an occupation-space polynomial that depends on `(x, xi)` only.
pub(crate) fn eval_x_xi(p: &Polynomial, x: &[f64], xi: &[f64]) -> f64 {
    let mut pt = Vec::with_capacity(x.len() + xi.len() + 2);
    pt.push(0.0);
    pt.extend_from_slice(x);
    pt.extend_from_slice(xi);
    pt.push(0.0);
    p.eval(&pt).expect("occupation-space polynomial")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseInitialCondition {
    pub pieces: Vec<InitialPiece>,
}

impl PiecewiseInitialCondition {
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Option<f64> {
        self.pieces
            .iter()
            .find(|p| p.contains(x, xi))
            .map(|p| p.value_at(x, xi))
    }

    /// Riemann data in `x1`: `left` for `x1 < s(xi)`, `right` otherwise.
    pub fn riemann(space: &VariableSpace, breakpoint: Polynomial, left: f64, right: f64) -> Self {
        let cond = |side| HalfSpace {
            axis: 0,
            side,
            breakpoint: breakpoint.clone(),
        };
        PiecewiseInitialCondition {
            pieces: vec![
                InitialPiece {
                    conditions: vec![cond(Side::Below)],
                    value: Polynomial::constant(space, left),
                },
                InitialPiece {
                    conditions: vec![cond(Side::AtOrAbove)],
                    value: Polynomial::constant(space, right),
                },
            ],
        }
    }
}

/// Constant trace of `u0` on one face `x_axis = L` (Left) or `x_axis = R` (Right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceTrace {
    pub axis: usize,
    pub face: Face,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub domains: BoxDomain,
    /// `n` flux components, polynomials in `(y, xi)` over the occupation space.
    pub flux: Vec<Polynomial>,
    pub initial: PiecewiseInitialCondition,
    /// Entropies in `y`; `None` selects the default family `y^{2l}`.
    pub entropies: Option<Vec<Polynomial>>,
    /// Filled in by [`ProblemSpec::validate`].
    pub boundary_traces: Vec<FaceTrace>,
}

/// Samples per axis used by the partition and range checks.
const CHECK_SAMPLES: usize = 41;

impl ProblemSpec {
    pub fn space(&self) -> VariableSpace {
        self.domains.occupation_space()
    }

    /// Checks the invariants and fills in `U` (from the range of `u0` when not
    /// supplied) and the boundary traces. Idempotent.
    pub fn validate(&self) -> Result<ProblemSpec> {
        let dom = &self.domains;
        dom.time().check("T")?;
        for (i, iv) in dom.space.iter().enumerate() {
            iv.check(&format!("X{}", i + 1))?;
        }
        let space = self.space();
        let y = space.len() - 1;

        if self.flux.len() != dom.n() {
            return Err(ProblemError::FluxArity {
                expected: dom.n(),
                got: self.flux.len(),
            });
        }
        for (i, f) in self.flux.iter().enumerate() {
            if f.space() != &space || (0..=dom.n()).any(|k| f.depends_on(k)) {
                return Err(ProblemError::FluxVariables(i));
            }
        }

        self.check_initial_structure(&space)?;
        let (lo, hi) = self.sample_initial_range()?;
        let values = match dom.values {
            Some(u) => {
                u.check("U")?;
                for (value, x, xi) in self.sample_initial_values() {
                    if !u.contains(value, 1e-12) {
                        return Err(ProblemError::ValueOutOfRange {
                            value,
                            x,
                            xi,
                            lo: u.lo,
                            hi: u.hi,
                        });
                    }
                }
                u
            }
            None => {
                if lo < hi {
                    Interval::new(lo, hi)
                } else {
                    warn!(
                        "initial data is constant ({lo}); widening U to [{}, {}]",
                        lo - 0.5,
                        lo + 0.5
                    );
                    Interval::new(lo - 0.5, lo + 0.5)
                }
            }
        };

        if let Some(ents) = &self.entropies {
            for (i, eta) in ents.iter().enumerate() {
                if eta.space() != &space || (0..y).any(|k| eta.depends_on(k)) {
                    return Err(ProblemError::EntropyVariables(i));
                }
                let deg = eta.degree();
                if deg % 2 == 1 {
                    return Err(ProblemError::OddEntropy { index: i, degree: deg });
                }
                let d2 = eta.derivative_at(y).derivative_at(y);
                let scale = d2.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max).max(1.0);
                for k in 0..=100 {
                    let u = values.lo + values.width() * k as f64 / 100.0;
                    let mut pt = vec![0.0; space.len()];
                    pt[y] = u;
                    if d2.eval(&pt)? < -1e-12 * scale {
                        return Err(ProblemError::NonConvexEntropy(i));
                    }
                }
            }
        }

        let mut out = self.clone();
        out.domains.values = Some(values);
        out.boundary_traces = self.compute_traces()?;
        Ok(out)
    }

    fn check_initial_structure(&self, space: &VariableSpace) -> Result<()> {
        let n = self.domains.n();
        let x_or_xi = |p: &Polynomial| p.space() == space && !p.depends_on(0) && !p.depends_on(space.len() - 1);
        if self.initial.pieces.is_empty() {
            return Err(ProblemError::InitialData("no pieces".into()));
        }
        for (k, piece) in self.initial.pieces.iter().enumerate() {
            if !x_or_xi(&piece.value) {
                return Err(ProblemError::InitialData(format!(
                    "piece {k}: value must be a polynomial in (x, xi)"
                )));
            }
            let mut seen = vec![false; n];
            for c in &piece.conditions {
                if c.axis >= n {
                    return Err(ProblemError::InitialData(format!(
                        "piece {k}: axis {} out of range",
                        c.axis
                    )));
                }
                if seen[c.axis] {
                    return Err(ProblemError::InitialData(format!(
                        "piece {k}: two conditions on axis {}",
                        c.axis
                    )));
                }
                seen[c.axis] = true;
                let xi_only = x_or_xi(&c.breakpoint) && (1..=n).all(|j| !c.breakpoint.depends_on(j));
                if !xi_only {
                    return Err(ProblemError::InitialData(format!(
                        "piece {k}: breakpoint must depend on xi only"
                    )));
                }
            }
        }
        // breakpoints must stay inside X for the closed-form integration
        for xi in self.param_samples() {
            for piece in &self.initial.pieces {
                for c in &piece.conditions {
                    let s = eval_x_xi(&c.breakpoint, &vec![0.0; n], &xi);
                    let iv = self.domains.space[c.axis];
                    if !iv.contains(s, 1e-12) {
                        return Err(ProblemError::InitialData(format!(
                            "breakpoint {s} leaves X{} = [{}, {}] at xi={xi:?}",
                            c.axis + 1,
                            iv.lo,
                            iv.hi
                        )));
                    }
                }
            }
        }
        for (x, xi) in self.sample_points() {
            let covering = self.initial.pieces.iter().filter(|p| p.contains(&x, &xi)).count();
            if covering != 1 {
                return Err(ProblemError::NotAPartition { covering, x, xi });
            }
        }
        Ok(())
    }

    fn param_samples(&self) -> Vec<Vec<f64>> {
        grid_points(&vec![Interval::new(0.0, 1.0); self.domains.p()], CHECK_SAMPLES)
    }

    fn sample_points(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let n = self.domains.n();
        let mut ivs = self.domains.space.clone();
        ivs.extend(vec![Interval::new(0.0, 1.0); self.domains.p()]);
        // offset the x samples slightly so they avoid breakpoints on the sample lattice
        grid_points(&ivs, CHECK_SAMPLES)
            .into_iter()
            .map(|mut pt| {
                for (k, v) in pt.iter_mut().enumerate().take(n) {
                    let iv = self.domains.space[k];
                    *v = (*v + 1e-7 * iv.width()).min(iv.hi);
                }
                let xi = pt.split_off(n);
                (pt, xi)
            })
            .collect()
    }

    fn sample_initial_values(&self) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        self.sample_points()
            .into_iter()
            .filter_map(|(x, xi)| self.initial.eval(&x, &xi).map(|v| (v, x, xi)))
            .collect()
    }

    fn sample_initial_range(&self) -> Result<(f64, f64)> {
        let vals = self.sample_initial_values();
        if vals.is_empty() {
            return Err(ProblemError::InitialData("no sample point covered".into()));
        }
        let lo = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        Ok((lo, hi))
    }

    fn compute_traces(&self) -> Result<Vec<FaceTrace>> {
        let n = self.domains.n();
        let mut out = Vec::new();
        for axis in 0..n {
            for face in [Face::Left, Face::Right] {
                let iv = self.domains.space[axis];
                let at = match face {
                    Face::Left => iv.lo,
                    Face::Right => iv.hi - 1e-12 * iv.width(),
                };
                let mut value: Option<f64> = None;
                for (mut x, xi) in self.sample_points() {
                    x[axis] = at;
                    let v = self
                        .initial
                        .eval(&x, &xi)
                        .ok_or_else(|| ProblemError::InitialData("trace point uncovered".into()))?;
                    match value {
                        None => value = Some(v),
                        Some(v0) if (v - v0).abs() > 1e-12 * v0.abs().max(1.0) => {
                            return Err(ProblemError::NonConstantTrace {
                                axis,
                                side: match face {
                                    Face::Left => Side::Below,
                                    Face::Right => Side::AtOrAbove,
                                },
                            })
                        }
                        _ => {}
                    }
                }
                out.push(FaceTrace {
                    axis,
                    face,
                    value: value.unwrap_or(0.0),
                });
            }
        }
        Ok(out)
    }

    pub fn trace(&self, axis: usize, face: Face) -> f64 {
        self.boundary_traces
            .iter()
            .find(|t| t.axis == axis && t.face == face)
            .map(|t| t.value)
            .expect("boundary traces unset; validate the problem first")
    }
}

fn grid_points(ivs: &[Interval], per_axis: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for iv in ivs {
        let mut next = Vec::with_capacity(pts.len() * per_axis);
        for p in &pts {
            for k in 0..per_axis {
                let mut q = p.clone();
                q.push(iv.lo + iv.width() * k as f64 / (per_axis - 1) as f64);
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

/// An entropy pair `(η, q)` with the largest test-function degree that keeps
/// every unknown-measure integrand within the relaxation degree.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyPair {
    pub eta: Polynomial,
    /// One component per space dimension.
    pub q: Vec<Polynomial>,
    pub max_test_degree: u32,
}

/// Truncation rule for the entropy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntropyBudget {
    /// Minimal test-function degree an entropy must leave room for (the
    /// first entropy is always kept as long as constant test functions fit).
    pub reserve: u32,
    /// Cap on the number of pairs.
    pub max_pairs: Option<usize>,
}

impl Default for EntropyBudget {
    fn default() -> Self {
        EntropyBudget {
            reserve: 2,
            max_pairs: None,
        }
    }
}

/// Largest test-function degree `D` such that `∂φ·η`, `∂φ·q` over the unknown
/// occupation measure and `φ·η` over the terminal measure all fit in `2d`.
pub fn max_test_degree(eta_degree: u32, flux_degree: u32, d: u32) -> Option<u32> {
    let two_d = 2 * d as i64;
    let a = two_d - eta_degree as i64;
    let b = two_d + 1 - flux_degree as i64;
    let m = a.min(b);
    (m >= 0).then_some(m as u32)
}

/// The audited entropy family for relaxation order `d` (`d >= 2`).
pub fn default_entropy_family(spec: &ProblemSpec, d: u32, budget: EntropyBudget) -> Result<Vec<EntropyPair>> {
    let space = spec.space();
    let y = Polynomial::var(&space, "y")?;
    let candidates: Vec<Polynomial> = match &spec.entropies {
        Some(e) => e.clone(),
        None => (1..=d).map(|l| y.pow(2 * l)).collect(),
    };
    let mut out = Vec::new();
    for (i, eta) in candidates.into_iter().enumerate() {
        let q: Vec<Polynomial> = spec
            .flux
            .iter()
            .map(|f| entropy_flux(&eta, f))
            .collect::<std::result::Result<_, _>>()?;
        let qdeg = q.iter().map(|p| p.degree()).max().unwrap_or(0);
        let admissible = max_test_degree(eta.degree(), qdeg, d);
        let keep = match admissible {
            Some(deg) => i == 0 || deg >= budget.reserve,
            None => false,
        };
        if !keep {
            info!(
                "dropping entropy {eta} at d={d}: admissible test degree {admissible:?} below reserve {}",
                budget.reserve
            );
            continue;
        }
        if budget.max_pairs.is_some_and(|m| out.len() >= m) {
            break;
        }
        out.push(EntropyPair {
            eta,
            q,
            max_test_degree: admissible.unwrap(),
        });
    }
    Ok(out)
}

/// Burgers flux `y²/2` with the shock position `(xi - 1)/4` as parameter.
pub fn burgers_parametric_initial() -> ProblemSpec {
    let space = VariableSpace::occupation(1, 1);
    let flux = Polynomial::from_terms(&space, [(vec![0, 0, 0, 2], 0.5)]);
    let breakpoint = Polynomial::from_terms(&space, [(vec![0, 0, 1, 0], 0.25), (vec![0, 0, 0, 0], -0.25)]);
    ProblemSpec {
        name: "burgers-ic".into(),
        domains: BoxDomain {
            t_end: 0.5,
            space: vec![Interval::new(-0.5, 0.5)],
            params: 1,
            values: None,
        },
        flux: vec![flux],
        initial: PiecewiseInitialCondition::riemann(&space, breakpoint, 1.0, 0.0),
        entropies: None,
        boundary_traces: Vec::new(),
    }
}

/// Flux `(xi + 1) y² / 4` with a fixed shock at `x = 0`.
pub fn burgers_parametric_flux() -> ProblemSpec {
    let space = VariableSpace::occupation(1, 1);
    let flux = Polynomial::from_terms(&space, [(vec![0, 0, 1, 2], 0.25), (vec![0, 0, 0, 2], 0.25)]);
    ProblemSpec {
        name: "burgers-flux".into(),
        domains: BoxDomain {
            t_end: 0.5,
            space: vec![Interval::new(-0.5, 0.5)],
            params: 1,
            values: None,
        },
        flux: vec![flux],
        initial: PiecewiseInitialCondition::riemann(&space, Polynomial::zero(&space), 1.0, 0.0),
        entropies: None,
        boundary_traces: Vec::new(),
    }
}
