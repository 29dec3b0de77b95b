//! Assembly of the moment problem for entropy measure-valued solutions and
//! its order-`d` semidefinite relaxation.
//!
//! Unknowns are the occupation measure `ν` on `T×X×Ξ×U` and the terminal
//! measure `ν_T` on `X×Ξ×U` (time fixed at `T`). Every variable is mapped
//! affinely onto `[-1, 1]` before any matrix is built; test functions are
//! taken directly in the rescaled coordinates, which spans the same space as
//! the original monomials and Handelman products (the latter up to positive
//! factors).

use std::sync::Arc;

use log::warn;
use thiserror::Error;

use crate::moments::{boundary_measure_moments, graph_measure_moments};
use crate::moments::{MomentError, MomentVector, MonomialBasis};
use crate::poly::{MultiIndex, PolyError, Polynomial, VariableSpace};
use crate::problem::{default_entropy_family, EntropyBudget, EntropyPair, Face, Interval, ProblemError, ProblemSpec};
use crate::sdp::{BlockEntry, LinearConstraint, PsdBlock, SdpProblem, Sense};

#[derive(Debug, Error)]
pub enum GmpError {
    #[error("relaxation order d={0} is below 2")]
    OrderTooSmall(u32),
    #[error("no admissible conservation test function at d={0}")]
    EmptyConservationBudget(u32),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

pub type Result<T> = std::result::Result<T, GmpError>;

/// Affine map `original = scale · rescaled + shift` onto `[-1, 1]` per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaling {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Rescaling {
    pub fn for_intervals(ivs: &[Interval]) -> Self {
        Rescaling {
            scale: ivs.iter().map(|i| 0.5 * i.width()).collect(),
            shift: ivs.iter().map(|i| i.center()).collect(),
        }
    }

    /// `p(scale·w' + shift)`: an original-coordinate polynomial in rescaled variables.
    pub fn poly_to_rescaled(&self, p: &Polynomial) -> Polynomial {
        p.compose_affine(&self.scale, &self.shift)
    }

    pub fn point_to_rescaled(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(self.scale.iter().zip(&self.shift))
            .map(|(x, (s, c))| (x - c) / s)
            .collect()
    }

    pub fn moments_to_rescaled(&self, z: &MomentVector) -> MomentVector {
        let inv: Vec<f64> = self.scale.iter().map(|s| 1.0 / s).collect();
        let sh: Vec<f64> = self.shift.iter().zip(&self.scale).map(|(c, s)| -c / s).collect();
        z.affine_pushforward(&inv, &sh)
    }

    pub fn moments_to_original(&self, z: &MomentVector) -> MomentVector {
        z.affine_pushforward(&self.scale, &self.shift)
    }

    /// Drops one variable.
    pub fn without(&self, k: usize) -> Rescaling {
        let mut r = self.clone();
        r.scale.remove(k);
        r.shift.remove(k);
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureSlot {
    /// Occupation measure (unknown).
    Nu,
    /// Terminal-time measure (unknown).
    NuT,
    /// Initial-time graph measure of `u0` (data).
    Nu0,
    /// Boundary measure on `x_i = L_i` (data).
    NuL(usize),
    /// Boundary measure on `x_i = R_i` (data).
    NuR(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    Conservation,
    Entropy,
    Marginal,
}

/// `ℓ_{z'_ν}(nu) + ℓ_{z'_νT}(nu_t) + constant {=, >=} 0` in rescaled moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentLinearForm {
    pub nu: Polynomial,
    pub nu_t: Polynomial,
    pub constant: f64,
    pub relation: Relation,
    pub kind: FormKind,
}

impl MomentLinearForm {
    /// Value of the left-hand side at rescaled moments.
    pub fn evaluate(&self, nu: &MomentVector, nu_t: &MomentVector) -> f64 {
        nu.riesz(&self.nu).unwrap() + nu_t.riesz(&self.nu_t).unwrap() + self.constant
    }
}

/// Relaxation objective, a trace of rescaled moment matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// `Tr M_d(z'_ν)`.
    #[default]
    TraceOccupation,
    /// `Tr M_d(z'_ν) + Tr M_d(z'_νT)`.
    TraceAll,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::TraceOccupation => "trace-occupation",
            Objective::TraceAll => "trace-all",
        }
    }

    pub fn from_name(s: &str) -> Option<Objective> {
        [Objective::TraceOccupation, Objective::TraceAll]
            .into_iter()
            .find(|o| o.name() == s)
    }
}

/// Known measure with its (rescaled) moments.
#[derive(Debug, Clone)]
pub struct KnownMeasure {
    pub slot: MeasureSlot,
    pub moments: MomentVector,
}

/// Everything the assemblers need for one `(spec, d)`.
#[derive(Debug, Clone)]
pub struct GmpContext {
    pub spec: ProblemSpec,
    pub d: u32,
    pub occ: Rescaling,
    pub term: Rescaling,
    pub occ_space: VariableSpace,
    pub term_space: VariableSpace,
    pub nu_basis: Arc<MonomialBasis>,
    pub nu_t_basis: Arc<MonomialBasis>,
    /// Flux components in rescaled occupation variables.
    pub flux: Vec<Polynomial>,
    /// Entropy pairs in rescaled occupation variables.
    pub entropies: Vec<EntropyPair>,
    pub known: Vec<KnownMeasure>,
    pub objective: Objective,
}

impl GmpContext {
    pub fn new(spec: &ProblemSpec, d: u32, budget: EntropyBudget) -> Result<Self> {
        if d < 2 {
            return Err(GmpError::OrderTooSmall(d));
        }
        let spec = spec.validate()?;
        let dom = &spec.domains;
        let occ_space = spec.space();
        let term_space = occ_space.without("t")?;
        let occ = Rescaling::for_intervals(&dom.occupation_intervals());
        let term = occ.without(0);
        let flux = spec.flux.iter().map(|f| occ.poly_to_rescaled(f)).collect();
        let entropies = default_entropy_family(&spec, d, budget)?
            .into_iter()
            .map(|e| EntropyPair {
                eta: occ.poly_to_rescaled(&e.eta),
                q: e.q.iter().map(|q| occ.poly_to_rescaled(q)).collect(),
                max_test_degree: e.max_test_degree,
            })
            .collect();

        let known_degree = 2 * d + 1;
        let mut known = vec![KnownMeasure {
            slot: MeasureSlot::Nu0,
            moments: occ.moments_to_rescaled(&graph_measure_moments(&spec, known_degree)),
        }];
        for axis in 0..dom.n() {
            for face in [Face::Left, Face::Right] {
                let z = boundary_measure_moments(spec.trace(axis, face), axis, face, dom, known_degree);
                known.push(KnownMeasure {
                    slot: match face {
                        Face::Left => MeasureSlot::NuL(axis),
                        Face::Right => MeasureSlot::NuR(axis),
                    },
                    moments: occ.moments_to_rescaled(&z),
                });
            }
        }
        Ok(GmpContext {
            objective: Objective::default(),
            nu_basis: MonomialBasis::new(&occ_space, 2 * d),
            nu_t_basis: MonomialBasis::new(&term_space, 2 * d),
            spec,
            d,
            occ,
            term,
            occ_space,
            term_space,
            flux,
            entropies,
            known,
        })
    }

    fn n(&self) -> usize {
        self.spec.domains.n()
    }

    fn p(&self) -> usize {
        self.spec.domains.p()
    }

    /// Number of `(t, x, xi)` variables.
    fn txi_vars(&self) -> usize {
        1 + self.n() + self.p()
    }

    fn known(&self, slot: MeasureSlot) -> &MomentVector {
        &self.known.iter().find(|k| k.slot == slot).unwrap().moments
    }

    /// `y` in rescaled coordinates: `scale_y · y' + shift_y`.
    fn y_poly(&self) -> Polynomial {
        let y = self.occ_space.len() - 1;
        Polynomial::from_terms(
            &self.occ_space,
            [
                (
                    MultiIndex::unit(self.occ_space.len(), y).exps().to_vec(),
                    self.occ.scale[y],
                ),
                (vec![0; self.occ_space.len()], self.occ.shift[y]),
            ],
        )
    }

    /// The weak form `∫(∂_tφ a + ∇_xφ·b) dν + ∫φ a dν₀ − ∫φ a dν_T + Σ(∫φ b_i dν_L − ∫φ b_i dν_R)`
    /// with `(a, b) = (y, f)` for conservation and `(η, q)` for entropy.
    fn weak_form(
        &self,
        phi: &Polynomial,
        a: &Polynomial,
        b: &[Polynomial],
        relation: Relation,
        kind: FormKind,
    ) -> MomentLinearForm {
        let n = self.n();
        let mut nu = phi.derivative_at(0).scale(1.0 / self.occ.scale[0]).mul(a).unwrap();
        for i in 0..n {
            let dphi = phi.derivative_at(1 + i).scale(1.0 / self.occ.scale[1 + i]);
            nu = nu.add(&dphi.mul(&b[i]).unwrap()).unwrap();
        }
        let phi_a = phi.mul(a).unwrap();
        // t = T is t' = 1
        let nu_t = phi_a.restrict("t", 1.0).unwrap().scale(-1.0);
        let mut constant = self.known(MeasureSlot::Nu0).riesz(&phi_a).unwrap();
        for (i, bi) in b.iter().enumerate() {
            let phi_b = phi.mul(bi).unwrap();
            constant += self.known(MeasureSlot::NuL(i)).riesz(&phi_b).unwrap();
            constant -= self.known(MeasureSlot::NuR(i)).riesz(&phi_b).unwrap();
        }
        MomentLinearForm {
            nu,
            nu_t,
            constant,
            relation,
            kind,
        }
    }

    /// Largest conservation test degree: `min(2d − 1, 2d + 1 − deg f)`.
    pub fn conservation_degree(&self) -> Option<u32> {
        let fdeg = self.spec.flux.iter().map(|f| f.degree()).max().unwrap_or(0);
        let m = (2 * self.d as i64 - 1).min(2 * self.d as i64 + 1 - fdeg as i64);
        (m >= 0).then_some(m as u32)
    }

    /// Test-function exponents over `(t, x, xi)` embedded in the occupation space.
    fn embed_txi(&self, exps: &[u32]) -> Polynomial {
        let mut e = exps.to_vec();
        e.push(0);
        Polynomial::monomial(&self.occ_space, MultiIndex::new(e), 1.0)
    }

    pub fn conservation_constraints(&self) -> Result<Vec<MomentLinearForm>> {
        let deg = self
            .conservation_degree()
            .ok_or(GmpError::EmptyConservationBudget(self.d))?;
        let y = self.y_poly();
        Ok(MultiIndex::all_up_to(self.txi_vars(), deg)
            .iter()
            .map(|a| {
                let phi = self.embed_txi(a.exps());
                self.weak_form(&phi, &y, &self.flux, Relation::Eq, FormKind::Conservation)
            })
            .collect())
    }

    pub fn entropy_constraints(&self) -> Vec<MomentLinearForm> {
        let k = self.txi_vars();
        let sp = &self.occ_space;
        let max_deg = self.entropies.iter().map(|e| e.max_test_degree).max().unwrap_or(0);
        // (1 + w')^j and (1 - w')^j per (t, x, xi) variable
        let mut plus = Vec::with_capacity(k);
        let mut minus = Vec::with_capacity(k);
        for v in 0..k {
            let w = Polynomial::monomial(sp, MultiIndex::unit(sp.len(), v), 1.0);
            let one = Polynomial::constant(sp, 1.0);
            let p = one.add(&w).unwrap();
            let m = one.sub(&w).unwrap();
            plus.push((0..=max_deg).map(|j| p.pow(j)).collect::<Vec<_>>());
            minus.push((0..=max_deg).map(|j| m.pow(j)).collect::<Vec<_>>());
        }
        let mut out = Vec::new();
        for pair in &self.entropies {
            for h in handelman_exponents(k, pair.max_test_degree) {
                let mut phi = Polynomial::constant(sp, 1.0);
                for v in 0..k {
                    let (a, b) = (h.get(2 * v) as usize, h.get(2 * v + 1) as usize);
                    if a > 0 {
                        phi = phi.mul(&plus[v][a]).unwrap();
                    }
                    if b > 0 {
                        phi = phi.mul(&minus[v][b]).unwrap();
                    }
                }
                out.push(self.weak_form(&phi, &pair.eta, &pair.q, Relation::Ge, FormKind::Entropy));
            }
        }
        if out.is_empty() {
            warn!("entropy budget at d={} admits no test function", self.d);
        }
        out
    }

    /// Fixes the `(t, x, xi)` marginal of `ν` and the `(x, xi)` marginal of `ν_T`.
    pub fn marginal_constraints(&self) -> Vec<MomentLinearForm> {
        let k = self.txi_vars();
        let two_d = 2 * self.d;
        let mut out = Vec::new();
        let zero_t = Polynomial::zero(&self.term_space);
        let zero_nu = Polynomial::zero(&self.occ_space);
        for a in MultiIndex::all_up_to(k, two_d) {
            let mut e = a.exps().to_vec();
            e.push(0);
            out.push(MomentLinearForm {
                nu: Polynomial::monomial(&self.occ_space, MultiIndex::new(e), 1.0),
                nu_t: zero_t.clone(),
                constant: -self.rescaled_box_moment(a.exps(), true),
                relation: Relation::Eq,
                kind: FormKind::Marginal,
            });
        }
        for a in MultiIndex::all_up_to(k - 1, two_d) {
            let mut e = a.exps().to_vec();
            e.push(0);
            out.push(MomentLinearForm {
                nu: zero_nu.clone(),
                nu_t: Polynomial::monomial(&self.term_space, MultiIndex::new(e), 1.0),
                constant: -self.rescaled_box_moment(a.exps(), false),
                relation: Relation::Eq,
                kind: FormKind::Marginal,
            });
        }
        out
    }

    /// `∫ w'^α` against `dt dx dρ` (with time) or `dx dρ` (without), in rescaled variables.
    fn rescaled_box_moment(&self, exps: &[u32], with_time: bool) -> f64 {
        let sym = |a: u32| if a.is_multiple_of(2) { 2.0 / (a as f64 + 1.0) } else { 0.0 };
        let n = self.n();
        let first = if with_time { 0 } else { 1 };
        let mut v = 1.0;
        for (j, &a) in exps.iter().enumerate() {
            let var = first + j;
            let weight = if var <= n { self.occ.scale[var] } else { 0.5 };
            v *= weight * sym(a);
        }
        v
    }

    /// All three constraint families in a fixed order.
    pub fn all_constraints(&self) -> Result<Vec<MomentLinearForm>> {
        let mut v = self.marginal_constraints();
        v.extend(self.conservation_constraints()?);
        v.extend(self.entropy_constraints());
        Ok(v)
    }

    pub fn build_relaxation(&self, forms: &[MomentLinearForm]) -> Relaxation {
        let nnu = self.nu_basis.len();
        let nt = self.nu_t_basis.len();
        let d = self.d;
        let mut objective = vec![0.0; nnu + nt];
        let mut blocks = Vec::new();
        for (basis, offset) in [(&self.nu_basis, 0), (&self.nu_t_basis, nnu)] {
            let nv = basis.space().len();
            if offset == 0 || self.objective == Objective::TraceAll {
                for i in 0..basis.count_up_to(d) {
                    let a = basis.get(i);
                    objective[offset + basis.index_of(&a.add(a)).unwrap()] += 1.0;
                }
            }
            blocks.push(moment_block(basis, offset, d, None));
            for k in 0..nv {
                blocks.push(moment_block(basis, offset, d, Some(k)));
            }
        }
        let constraints = forms
            .iter()
            .map(|f| {
                let mut coeffs: Vec<(usize, f64)> =
                    f.nu.terms()
                        .map(|(a, c)| (self.nu_basis.index_of(a).expect("degree within 2d"), c))
                        .collect();
                coeffs.extend(
                    f.nu_t
                        .terms()
                        .map(|(a, c)| (nnu + self.nu_t_basis.index_of(a).expect("degree within 2d"), c)),
                );
                LinearConstraint {
                    coeffs,
                    sense: match f.relation {
                        Relation::Eq => Sense::Eq,
                        Relation::Ge => Sense::Ge,
                    },
                    rhs: -f.constant,
                }
            })
            .collect();
        Relaxation {
            problem: SdpProblem {
                num_vars: nnu + nt,
                objective,
                constraints,
                blocks,
            },
            nu_len: nnu,
        }
    }

    /// Splits a decision vector into rescaled `(z'_ν, z'_νT)`.
    pub fn split(&self, x: &[f64]) -> (MomentVector, MomentVector) {
        let nnu = self.nu_basis.len();
        (
            MomentVector::new(self.nu_basis.clone(), x[..nnu].to_vec()),
            MomentVector::new(self.nu_t_basis.clone(), x[nnu..].to_vec()),
        )
    }

    /// Decision vector to moments in original coordinates.
    pub fn decode(&self, x: &[f64]) -> (MomentVector, MomentVector) {
        let (nu, nu_t) = self.split(x);
        (self.occ.moments_to_original(&nu), self.term.moments_to_original(&nu_t))
    }

    /// Original-coordinate moments to rescaled ones.
    pub fn encode(&self, nu: &MomentVector, nu_t: &MomentVector) -> (MomentVector, MomentVector) {
        (self.occ.moments_to_rescaled(nu), self.term.moments_to_rescaled(nu_t))
    }
}

/// `M_d(z)` (no generator) or `M_{d-1}((1 − w_k²) z)` over one basis slice.
fn moment_block(basis: &MonomialBasis, offset: usize, d: u32, generator: Option<usize>) -> PsdBlock {
    let nv = basis.space().len();
    let rd = if generator.is_some() { d - 1 } else { d };
    let rows = basis.count_up_to(rd);
    let mut entries = Vec::new();
    for i in 0..rows {
        for j in 0..=i {
            let ab = basis.get(i).add(basis.get(j));
            entries.push(BlockEntry {
                var: Some(offset + basis.index_of(&ab).unwrap()),
                row: i,
                col: j,
                value: 1.0,
            });
            if let Some(k) = generator {
                let ab2 = ab.add(&MultiIndex::unit(nv, k)).add(&MultiIndex::unit(nv, k));
                entries.push(BlockEntry {
                    var: Some(offset + basis.index_of(&ab2).unwrap()),
                    row: i,
                    col: j,
                    value: -1.0,
                });
            }
        }
    }
    PsdBlock { dim: rows, entries }
}

/// Exponents `(a_1, b_1, ..., a_k, b_k)` of the products `Π (1 + w_v)^{a_v} (1 − w_v)^{b_v}`
/// with total degree `<= max_degree`.
pub fn handelman_exponents(vars: usize, max_degree: u32) -> Vec<MultiIndex> {
    MultiIndex::all_up_to(2 * vars, max_degree)
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub problem: SdpProblem,
    pub nu_len: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{oracle_moments, oracle_terminal_moments, AnalyticSolution};
    use crate::problem::{burgers_parametric_flux, burgers_parametric_initial};
    use approx::assert_relative_eq;

    fn ctx(spec: ProblemSpec, d: u32) -> GmpContext {
        GmpContext::new(&spec, d, EntropyBudget::default()).unwrap()
    }

    #[test]
    fn handelman_count() {
        assert_eq!(handelman_exponents(3, 2).len(), 28);
    }

    #[test]
    fn conservation_count_and_mass() {
        let c = ctx(burgers_parametric_flux(), 2);
        assert_eq!(c.conservation_constraints().unwrap().len(), 10);
        let c = ctx(burgers_parametric_initial(), 2);
        let forms = c.conservation_constraints().unwrap();
        // phi = 1: −ℓ_{νT}(y) + 5/8 = 0
        let f = &forms[0];
        assert!(f.nu.is_zero());
        assert_relative_eq!(f.constant, 5.0 / 8.0, max_relative = 1e-14);
        // in rescaled y' (y = (1 + y')/2) the terminal coefficient is −(1 + y')/2
        let one = MultiIndex::zero(3);
        assert_relative_eq!(f.nu_t.coeff(&one), -0.5, max_relative = 1e-15);
    }

    #[test]
    fn zero_flux_transport_constant() {
        let mut spec = burgers_parametric_initial();
        let sp = spec.space();
        spec.flux = vec![Polynomial::zero(&sp)];
        let c0 = 0.3;
        for p in spec.initial.pieces.iter_mut() {
            p.value = Polynomial::constant(&sp, c0);
        }
        spec.domains.values = Some(Interval::new(0.0, 1.0));
        let c = ctx(spec, 2);
        let f = &c.conservation_constraints().unwrap()[0];
        assert_relative_eq!(f.constant, c0 * 1.0, max_relative = 1e-14);
    }

    #[test]
    fn entropy_phi_one_constant() {
        let c = ctx(burgers_parametric_initial(), 2);
        let forms = c.entropy_constraints();
        assert_eq!(forms.len(), 28);
        assert_relative_eq!(forms[0].constant, 3.0 / 8.0 + 0.5 * 2.0 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn marginal_values() {
        let c = ctx(burgers_parametric_initial(), 2);
        let forms = c.marginal_constraints();
        // α = 0: mass 0.5
        assert_relative_eq!(-forms[0].constant, 0.5, max_relative = 1e-15);
        assert_eq!(forms.len(), 35 + 15);
        // check x² marginals through the original coordinates
        let nu_orig = MomentVector::from_fn(c.nu_basis.clone(), |a| {
            if a.get(3) == 0 {
                crate::moments::box_marginal_moment(&c.spec.domains, &a.exps()[..3])
            } else {
                0.0
            }
        });
        let t_orig = MomentVector::from_fn(c.nu_t_basis.clone(), |a| {
            if a.get(2) == 0 {
                crate::moments::interval_moment(c.spec.domains.space[0], a.get(0)) / (a.get(1) as f64 + 1.0)
            } else {
                0.0
            }
        });
        assert_relative_eq!(nu_orig.at(&[0, 2, 0, 0]), 1.0 / 24.0, max_relative = 1e-15);
        assert_relative_eq!(t_orig.at(&[2, 0, 0]), 1.0 / 12.0, max_relative = 1e-15);
        let (zn, zt) = c.encode(&nu_orig, &t_orig);
        for f in &forms {
            assert!(f.evaluate(&zn, &zt).abs() < 1e-14);
        }
    }

    #[test]
    fn relaxation_sizes() {
        let c = ctx(burgers_parametric_initial(), 2);
        let r = c.build_relaxation(&c.all_constraints().unwrap());
        assert_eq!(r.problem.num_vars, 105);
        let c3 = ctx(burgers_parametric_initial(), 3);
        let r3 = c3.build_relaxation(&[]);
        let dims: Vec<usize> = r3.problem.blocks.iter().map(|b| b.dim).collect();
        assert_eq!(dims, vec![35, 15, 15, 15, 15, 20, 10, 10, 10]);
        r3.problem.check().unwrap();
    }

    #[test]
    fn rescaling_roundtrip() {
        let c = ctx(burgers_parametric_initial(), 2);
        let bench = AnalyticSolution::parametric_initial();
        let nu = oracle_moments(&bench, &c.spec.domains, 4);
        let nt = oracle_terminal_moments(&bench, &c.spec.domains, 4);
        let (zn, zt) = c.encode(&nu, &nt);
        let mut x = zn.values().to_vec();
        x.extend_from_slice(zt.values());
        let (bn, bt) = c.decode(&x);
        for (a, b) in bn
            .values()
            .iter()
            .zip(nu.values())
            .chain(bt.values().iter().zip(nt.values()))
        {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn objective_on_graph_measure() {
        // Tr M_d(z') equals the integral of ‖b_d(w')‖² along the graph
        let c = ctx(burgers_parametric_initial(), 2);
        let bench = AnalyticSolution::parametric_initial();
        let nu = oracle_moments(&bench, &c.spec.domains, 4);
        let nt = oracle_terminal_moments(&bench, &c.spec.domains, 4);
        let (zn, zt) = c.encode(&nu, &nt);
        let mut x = zn.values().to_vec();
        x.extend_from_slice(zt.values());
        let trace_nu = crate::moments::moment_matrix(&zn, 2).unwrap().trace();
        let trace_t = crate::moments::moment_matrix(&zt, 2).unwrap().trace();
        let obj = c.build_relaxation(&[]).problem.objective_value(&x);
        assert_relative_eq!(obj, trace_nu, max_relative = 1e-13);
        let mut c = c;
        c.objective = Objective::TraceAll;
        let obj = c.build_relaxation(&[]).problem.objective_value(&x);
        assert_relative_eq!(obj, trace_nu + trace_t, max_relative = 1e-13);
        // quadrature of ‖b_2(w')‖² along the terminal graph, midpoint in x and xi
        let m = 400;
        let mut q = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = -0.5 + (i as f64 + 0.5) / m as f64;
                let xi = (j as f64 + 0.5) / m as f64;
                let u = bench.eval(0.5, x, xi);
                let w = c.term.point_to_rescaled(&[x, xi, u]);
                let b2: f64 = MultiIndex::all_up_to(3, 2)
                    .iter()
                    .map(|a| crate::moments::monomial_value(a, &w).powi(2))
                    .sum();
                q += b2 / (m * m) as f64;
            }
        }
        assert_relative_eq!(trace_t, q, max_relative = 2e-3);
    }

    #[test]
    fn solves_order_two() {
        let c = ctx(burgers_parametric_initial(), 2);
        let r = c.build_relaxation(&c.all_constraints().unwrap());
        let sol = crate::sdp::solve(&r.problem, crate::sdp::Tolerances::default()).unwrap();
        assert!(sol.status.is_solved(), "{:?}", sol.status);
        let (nu, nu_t) = c.decode(&sol.x);
        assert_relative_eq!(nu.mass(), 0.5, max_relative = 1e-6);
        assert!((nu_t.at(&[0, 0, 1]) - 5.0 / 8.0).abs() < 1e-5);
    }

    fn check_oracle_feasible(spec: ProblemSpec, bench: AnalyticSolution, d: u32) {
        let c = ctx(spec, d);
        let nu = oracle_moments(&bench, &c.spec.domains, 2 * d);
        let nt = oracle_terminal_moments(&bench, &c.spec.domains, 2 * d);
        let (zn, zt) = c.encode(&nu, &nt);
        for f in c.all_constraints().unwrap() {
            let v = f.evaluate(&zn, &zt);
            match f.relation {
                Relation::Eq => assert!(v.abs() <= 1e-6, "{:?} residual {v}", f.kind),
                Relation::Ge => assert!(v >= -1e-6, "{:?} slack {v}", f.kind),
            }
        }
    }

    #[test]
    fn oracle_is_feasible() {
        for d in 2..=4 {
            check_oracle_feasible(burgers_parametric_initial(), AnalyticSolution::parametric_initial(), d);
            check_oracle_feasible(burgers_parametric_flux(), AnalyticSolution::parametric_flux(), d);
        }
    }

    #[test]
    fn wrong_signed_flux_violates_entropy() {
        // the oracle of the true problem against a reversed flux: the shock is
        // then an entropy-violating discontinuity
        let mut spec = burgers_parametric_initial();
        spec.flux[0] = spec.flux[0].scale(-1.0);
        let c = ctx(spec, 2);
        let bench = AnalyticSolution::parametric_initial();
        let nu = oracle_moments(&bench, &c.spec.domains, 4);
        let nt = oracle_terminal_moments(&bench, &c.spec.domains, 4);
        let (zn, zt) = c.encode(&nu, &nt);
        let worst = c
            .entropy_constraints()
            .iter()
            .map(|f| f.evaluate(&zn, &zt))
            .fold(f64::INFINITY, f64::min);
        assert!(worst < -1e-3, "{worst}");
    }
}
