//! Sparse multivariate polynomials over an explicit, ordered variable space.
//!
//! Every polynomial carries the [`VariableSpace`] it lives in. Terms are kept
//! in a `BTreeMap` keyed by [`MultiIndex`], whose ordering is graded
//! lexicographic, so iteration order (and therefore every downstream moment
//! layout) is deterministic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable spaces differ: {0} vs {1}")]
    SpaceMismatch(String, String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("point has {got} coordinates, space has {expected} variables")]
    PointLength { expected: usize, got: usize },
    #[error("entropy must be a polynomial in `{var}` only")]
    EntropyNotUnivariate { var: String },
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// Ordered list of variable names.
///
/// The canonical occupation-measure layout is `t, x1..xn, xi1..xip, y`.
/// Other layouts (terminal slice without `t`, completion space `t, x, F`)
/// are built with [`VariableSpace::new`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VariableSpace {
    names: Arc<[String]>,
}

impl VariableSpace {
    /// Panics if names repeat.
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, a) in names.iter().enumerate() {
            assert!(
                !names[..i].contains(a),
                "duplicate variable name `{a}` in variable space"
            );
        }
        VariableSpace { names: names.into() }
    }

    /// `t, x1..xn, xi1..xip, y`
    pub fn occupation(n: usize, p: usize) -> Self {
        let mut names = vec!["t".to_string()];
        names.extend((1..=n).map(|i| format!("x{i}")));
        names.extend((1..=p).map(|i| format!("xi{i}")));
        names.push("y".into());
        Self::new(&names)
    }

    /// `x1..xn, xi1..xip, y`: the support of the terminal-time measure.
    pub fn terminal(n: usize, p: usize) -> Self {
        let mut names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        names.extend((1..=p).map(|i| format!("xi{i}")));
        names.push("y".into());
        Self::new(&names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// Number of space variables (`x1`, `x2`, ...).
    pub fn space_dim(&self) -> usize {
        self.names
            .iter()
            .filter(|n| n.starts_with('x') && !n.starts_with("xi"))
            .count()
    }

    /// Number of parameter variables (`xi1`, ...).
    pub fn param_dim(&self) -> usize {
        self.names.iter().filter(|n| n.starts_with("xi")).count()
    }

    /// The same space with one variable removed.
    pub fn without(&self, name: &str) -> Result<Self> {
        let k = self.index_of(name)?;
        let names: Vec<&String> = self
            .names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, n)| n)
            .collect();
        Ok(Self::new(&names))
    }
}

impl fmt::Debug for VariableSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.names.join(","))
    }
}

/// Exponent vector aligned with a variable space.
///
/// Ordering is graded lexicographic: lower total degree first, then, within a
/// degree, larger exponents on earlier variables first (`t² < t·y < y²` for
/// the space `(t, y)`).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        MultiIndex(exps)
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    pub fn unit(nvars: usize, k: usize) -> Self {
        let mut e = vec![0; nvars];
        e[k] = 1;
        MultiIndex(e)
    }

    pub fn exps(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.len(), other.len());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn get(&self, k: usize) -> u32 {
        self.0[k]
    }

    /// All exponent vectors of `nvars` variables with total degree `<= max_degree`,
    /// in graded-lexicographic order.
    pub fn all_up_to(nvars: usize, max_degree: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for deg in 0..=max_degree {
            let mut cur = vec![0u32; nvars];
            push_exact_degree(&mut cur, 0, deg, &mut out);
        }
        out
    }
}

fn push_exact_degree(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    let n = cur.len();
    if n == 0 {
        if remaining == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e;
        push_exact_degree(cur, pos + 1, remaining - e, out);
    }
    cur[pos] = 0;
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, PartialEq)]
pub struct Polynomial {
    space: VariableSpace,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(space: &VariableSpace) -> Self {
        Polynomial {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: &VariableSpace, c: f64) -> Self {
        let mut p = Self::zero(space);
        p.add_term(MultiIndex::zero(space.len()), c);
        p
    }

    /// The coordinate polynomial `w_k` for the named variable.
    pub fn var(space: &VariableSpace, name: &str) -> Result<Self> {
        let k = space.index_of(name)?;
        Ok(Self::monomial(space, MultiIndex::unit(space.len(), k), 1.0))
    }

    pub fn monomial(space: &VariableSpace, alpha: MultiIndex, c: f64) -> Self {
        assert_eq!(alpha.len(), space.len(), "multi-index length mismatch");
        let mut p = Self::zero(space);
        p.add_term(alpha, c);
        p
    }

    /// Builds from `(exponents, coefficient)` pairs; repeated exponents accumulate.
    pub fn from_terms<I>(space: &VariableSpace, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Self::zero(space);
        for (e, c) in terms {
            assert_eq!(e.len(), space.len(), "multi-index length mismatch");
            p.add_term(MultiIndex(e), c);
        }
        p
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, c)| (a, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| a.degree()).max().unwrap_or(0)
    }

    /// Largest exponent of one variable over all terms.
    pub fn degree_in(&self, k: usize) -> u32 {
        self.terms.keys().map(|a| a.get(k)).max().unwrap_or(0)
    }

    pub fn depends_on(&self, k: usize) -> bool {
        self.terms.keys().any(|a| a.get(k) > 0)
    }

    fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(alpha) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    fn check_space(&self, other: &Polynomial) -> Result<()> {
        if self.space != other.space {
            return Err(PolyError::SpaceMismatch(
                format!("{:?}", self.space),
                format!("{:?}", other.space),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_space(other)?;
        let mut out = self.clone();
        for (a, c) in other.terms() {
            out.add_term(a.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_space(other)?;
        let mut out = self.clone();
        for (a, c) in other.terms() {
            out.add_term(a.clone(), -c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Self::zero(&self.space);
        for (a, c) in self.terms() {
            out.add_term(a.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_space(other)?;
        let mut out = Self::zero(&self.space);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                out.add_term(a.add(b), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Self::constant(&self.space, 1.0);
        for _ in 0..e {
            out = out.mul(self).expect("same space");
        }
        out
    }

    /// Formal partial derivative with respect to the named variable.
    pub fn derivative(&self, var: &str) -> Result<Polynomial> {
        let k = self.space.index_of(var)?;
        Ok(self.derivative_at(k))
    }

    pub fn derivative_at(&self, k: usize) -> Polynomial {
        let mut out = Self::zero(&self.space);
        for (a, c) in self.terms() {
            let e = a.get(k);
            if e == 0 {
                continue;
            }
            let mut b = a.clone();
            b.0[k] -= 1;
            out.add_term(b, c * e as f64);
        }
        out
    }

    /// Formal antiderivative whose value is zero where `var = 0`.
    pub fn antiderivative(&self, var: &str) -> Result<Polynomial> {
        let k = self.space.index_of(var)?;
        Ok(self.antiderivative_at(k))
    }

    pub fn antiderivative_at(&self, k: usize) -> Polynomial {
        let mut out = Self::zero(&self.space);
        for (a, c) in self.terms() {
            let mut b = a.clone();
            b.0[k] += 1;
            out.add_term(b.clone(), c / b.0[k] as f64);
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.space.len() {
            return Err(PolyError::PointLength {
                expected: self.space.len(),
                got: point.len(),
            });
        }
        Ok(self
            .terms()
            .map(|(a, c)| {
                c * a
                    .exps()
                    .iter()
                    .zip(point)
                    .map(|(&e, &x)| x.powi(e as i32))
                    .product::<f64>()
            })
            .sum())
    }

    /// Substitutes `w_k -> scale[k] * w_k + shift[k]` for every variable.
    pub fn compose_affine(&self, scale: &[f64], shift: &[f64]) -> Polynomial {
        let n = self.space.len();
        assert!(scale.len() == n && shift.len() == n);
        // per-variable powers of the affine substitution, expanded in w_k
        let mut out = Self::zero(&self.space);
        for (a, c) in self.terms() {
            // expand prod_k (scale_k w_k + shift_k)^{a_k}
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; n], c)];
            for k in 0..n {
                let e = a.get(k);
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (exps, coef) in &partial {
                    for j in 0..=e {
                        let w = binomial(e, j) * scale[k].powi(j as i32) * shift[k].powi((e - j) as i32);
                        if w == 0.0 {
                            continue;
                        }
                        let mut ex = exps.clone();
                        ex[k] = j;
                        next.push((ex, coef * w));
                    }
                }
                partial = next;
            }
            for (ex, coef) in partial {
                out.add_term(MultiIndex(ex), coef);
            }
        }
        out
    }

    /// Replaces variable `var` with the polynomial `value` (same space).
    pub fn substitute(&self, var: &str, value: &Polynomial) -> Result<Polynomial> {
        self.check_space(value)?;
        let k = self.space.index_of(var)?;
        let max_e = self.degree_in(k);
        let mut powers = vec![Polynomial::constant(&self.space, 1.0)];
        for e in 1..=max_e as usize {
            let next = powers[e - 1].mul(value)?;
            powers.push(next);
        }
        let mut out = Self::zero(&self.space);
        for (a, c) in self.terms() {
            let e = a.get(k) as usize;
            let mut rest = a.clone();
            rest.0[k] = 0;
            for (b, cb) in powers[e].terms() {
                out.add_term(rest.add(b), c * cb);
            }
        }
        Ok(out)
    }

    /// Fixes `var = value` and drops the variable from the space.
    pub fn restrict(&self, var: &str, value: f64) -> Result<Polynomial> {
        let k = self.space.index_of(var)?;
        let space = self.space.without(var)?;
        let mut out = Self::zero(&space);
        for (a, c) in self.terms() {
            let mut e = a.0.clone();
            let p = e.remove(k);
            out.add_term(MultiIndex(e), c * value.powi(p as i32));
        }
        Ok(out)
    }

    /// Re-expresses the polynomial in a space that contains all of its
    /// variables (by name). Variables of `self` that the polynomial does not
    /// depend on may be absent from the target space.
    pub fn embed(&self, target: &VariableSpace) -> Result<Polynomial> {
        let mut map = Vec::with_capacity(self.space.len());
        for (k, name) in self.space.names().iter().enumerate() {
            match target.index_of(name) {
                Ok(j) => map.push(Some(j)),
                Err(e) => {
                    if self.depends_on(k) {
                        return Err(e);
                    }
                    map.push(None);
                }
            }
        }
        let mut out = Self::zero(target);
        for (a, c) in self.terms() {
            let mut e = vec![0; target.len()];
            for (k, m) in map.iter().enumerate() {
                if let Some(j) = m {
                    e[*j] = a.get(k);
                }
            }
            out.add_term(MultiIndex(e), c);
        }
        Ok(out)
    }
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Builds the entropy flux `q` with `∂_y q = η'(y) ∂_y f(y, ξ)` and `q(y=0, ·) = 0`.
///
/// `eta` must depend on `y` only; `f` is one flux component.
pub fn entropy_flux(eta: &Polynomial, f: &Polynomial) -> Result<Polynomial> {
    eta.check_space(f)?;
    let y = eta.space.index_of("y")?;
    for (a, _) in eta.terms() {
        if a.exps().iter().enumerate().any(|(k, &e)| k != y && e > 0) {
            return Err(PolyError::EntropyNotUnivariate { var: "y".into() });
        }
    }
    let integrand = eta.derivative_at(y).mul(&f.derivative_at(y))?;
    Ok(integrand.antiderivative_at(y))
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (a, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (k, &e) in a.exps().iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*{}", self.space.names()[k])?,
                    _ => write!(f, "*{}^{}", self.space.names()[k], e)?,
                }
            }
        }
        Ok(())
    }
}
