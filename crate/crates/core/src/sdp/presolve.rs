//! Reduction of an [`SdpProblem`] to the internal conic form
//!
//! ```text
//! minimize cᵀx  s.t.  Ax = b,  Gx + s = h,  s ∈ R₊^l × S₊^{n₁} × ...
//! ```
//!
//! Singleton equality rows fix their variable, which is substituted
//! everywhere; zero, duplicate and linearly dependent rows are dropped; rows
//! are scaled to unit ∞-norm.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{LinearConstraint, SdpProblem, Sense};

#[derive(Debug, Clone, Default)]
pub(super) struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn axpy(&self, alpha: f64, out: &mut [f64]) {
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            out[i] += alpha * v;
        }
    }
}

/// `s = h - Gx` for one PSD block; `G` stored as lower-triangle entries.
#[derive(Debug, Clone)]
pub(super) struct ConeBlock {
    pub dim: usize,
    pub h: DMatrix<f64>,
    pub var: Vec<usize>,
    pub row: Vec<usize>,
    pub col: Vec<usize>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(super) struct ConeProblem {
    pub n: usize,
    pub c: Vec<f64>,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub lp_g: Vec<SparseRow>,
    pub lp_h: Vec<f64>,
    pub blocks: Vec<ConeBlock>,
}

/// How to map a reduced solution back to the input problem.
#[derive(Debug, Clone)]
pub(super) struct Reduction {
    pub free: Vec<usize>,
    pub fixed: Vec<Option<f64>>,
    /// Input row and scale factor of every reduced equality row.
    pub eq_rows: Vec<(usize, f64)>,
    /// Input row and scale factor of every reduced inequality row.
    pub lp_rows: Vec<(usize, f64)>,
    /// `(row, var)` in fixing order.
    pub fixers: Vec<(usize, usize)>,
    pub objective_offset: f64,
}

pub(super) enum Presolved {
    Reduced(ConeProblem, Reduction),
    Infeasible(String),
    Unbounded(String),
}

const FIX_TOL: f64 = 1e-9;
const DEP_TOL: f64 = 1e-10;

fn merged(c: &LinearConstraint) -> Vec<(usize, f64)> {
    let mut m: Vec<(usize, f64)> = c.coeffs.clone();
    m.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(m.len());
    for (v, a) in m {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += a,
            _ => out.push((v, a)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// Scales to unit ∞-norm; with `canonical_sign` the first coefficient is made positive.
fn normalize(row: &mut [(usize, f64)], rhs: &mut f64, canonical_sign: bool) -> f64 {
    let m = row.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
    let mut f = 1.0 / m;
    if canonical_sign && row[0].1 < 0.0 {
        f = -f;
    }
    for e in row.iter_mut() {
        e.1 *= f;
    }
    *rhs *= f;
    f
}

fn row_key(row: &[(usize, f64)]) -> Vec<(usize, u64)> {
    row.iter().map(|&(v, a)| (v, a.to_bits())).collect()
}

pub(super) fn presolve(p: &SdpProblem) -> Presolved {
    let n = p.num_vars;
    let mut eq: Vec<(usize, Vec<(usize, f64)>, f64)> = Vec::new();
    let mut ge: Vec<(usize, Vec<(usize, f64)>, f64)> = Vec::new();
    for (i, c) in p.constraints.iter().enumerate() {
        let row = merged(c);
        match c.sense {
            Sense::Eq => eq.push((i, row, c.rhs)),
            Sense::Ge => ge.push((i, row, c.rhs)),
        }
    }

    // singleton elimination
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut fixers = Vec::new();
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, (_, row, _)) in eq.iter().enumerate() {
        for &(v, _) in row {
            rows_of[v].push(k);
        }
    }
    let mut queue: Vec<usize> = (0..eq.len()).filter(|&k| eq[k].1.len() == 1).collect();
    let mut qi = 0;
    while qi < queue.len() {
        let k = queue[qi];
        qi += 1;
        if eq[k].1.len() != 1 {
            continue;
        }
        let (v, a) = eq[k].1[0];
        let val = eq[k].2 / a;
        if let Some(prev) = fixed[v] {
            if (prev - val).abs() > FIX_TOL * prev.abs().max(1.0) {
                return Presolved::Infeasible(format!("variable {v} fixed to {prev} and {val}"));
            }
            continue;
        }
        fixed[v] = Some(val);
        fixers.push((eq[k].0, v));
        for &j in &rows_of[v] {
            let (_, row, rhs) = &mut eq[j];
            if let Some(pos) = row.iter().position(|e| e.0 == v) {
                *rhs -= row[pos].1 * val;
                row.remove(pos);
                if row.len() == 1 {
                    queue.push(j);
                }
            }
        }
    }

    // variables that appear nowhere
    let mut used = vec![false; n];
    for (_, row, _) in eq.iter().chain(ge.iter()) {
        for &(v, _) in row {
            used[v] = true;
        }
    }
    for b in &p.blocks {
        for e in &b.entries {
            if let Some(v) = e.var {
                if e.value != 0.0 {
                    used[v] = true;
                }
            }
        }
    }
    for v in 0..n {
        if fixed[v].is_none() && !used[v] {
            if p.objective[v] != 0.0 {
                return Presolved::Unbounded(format!("variable {v} is unconstrained with nonzero cost"));
            }
            fixed[v] = Some(0.0);
        }
    }

    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let mut new_index = vec![usize::MAX; n];
    for (k, &v) in free.iter().enumerate() {
        new_index[v] = k;
    }
    let nf = free.len();

    // equalities: zero rows, scaling, duplicates, dependencies
    let mut eq_rows = Vec::new();
    let mut a_rows: Vec<SparseRow> = Vec::new();
    let mut b = Vec::new();
    let mut seen: HashMap<Vec<(usize, u64)>, f64> = HashMap::new();
    // reduced echelon basis for the dependency check, dense over free variables
    let mut basis: Vec<(Vec<f64>, usize, f64)> = Vec::new();
    for (i, mut row, mut rhs) in eq {
        row.retain(|e| fixed[e.0].is_none());
        if row.is_empty() {
            if rhs.abs() > FIX_TOL * 1f64.max(p.constraints[i].rhs.abs()) {
                return Presolved::Infeasible(format!("equality row {i} reduces to 0 = {rhs}"));
            }
            continue;
        }
        let f = normalize(&mut row, &mut rhs, true);
        let key = row_key(&row);
        if let Some(&r0) = seen.get(&key) {
            if (r0 - rhs).abs() > FIX_TOL * r0.abs().max(1.0) {
                return Presolved::Infeasible(format!("equality row {i} duplicates another with rhs {r0} vs {rhs}"));
            }
            continue;
        }
        seen.insert(key, rhs);
        let mut dense = vec![0.0; nf];
        for &(v, a) in &row {
            dense[new_index[v]] = a;
        }
        let mut r = rhs;
        for (bv, piv, brhs) in &basis {
            let m = dense[*piv];
            if m != 0.0 {
                for (d, x) in dense.iter_mut().zip(bv) {
                    *d -= m * x;
                }
                r -= m * brhs;
            }
        }
        let (piv, pmax) = dense.iter().enumerate().fold(
            (0, 0.0),
            |acc, (k, &v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc },
        );
        if pmax <= DEP_TOL {
            if r.abs() > 1e-7 * rhs.abs().max(1.0) {
                return Presolved::Infeasible(format!("equality row {i} is inconsistent (residual {r})"));
            }
            continue;
        }
        let inv = 1.0 / dense[piv];
        for d in dense.iter_mut() {
            *d *= inv;
        }
        basis.push((dense, piv, r * inv));
        eq_rows.push((i, f));
        a_rows.push(SparseRow {
            idx: row.iter().map(|e| new_index[e.0]).collect(),
            val: row.iter().map(|e| e.1).collect(),
        });
        b.push(rhs);
    }

    // inequalities aᵀx >= r become -aᵀx + s = -r
    let mut lp_rows = Vec::new();
    let mut lp_g = Vec::new();
    let mut lp_h = Vec::new();
    let mut seen_ge: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
    for (i, mut row, mut rhs) in ge {
        for &(v, a) in &row {
            if let Some(val) = fixed[v] {
                rhs -= a * val;
            }
        }
        row.retain(|e| fixed[e.0].is_none());
        if row.is_empty() {
            if rhs > FIX_TOL * 1f64.max(p.constraints[i].rhs.abs()) {
                return Presolved::Infeasible(format!("inequality row {i} reduces to 0 >= {rhs}"));
            }
            continue;
        }
        let f = normalize(&mut row, &mut rhs, false);
        let key = row_key(&row);
        if let Some(&k) = seen_ge.get(&key) {
            // keep the tighter bound
            if -rhs < lp_h[k] {
                lp_h[k] = -rhs;
                lp_rows[k] = (i, f);
            }
            continue;
        }
        seen_ge.insert(key, lp_g.len());
        lp_rows.push((i, f));
        lp_g.push(SparseRow {
            idx: row.iter().map(|e| new_index[e.0]).collect(),
            val: row.iter().map(|e| -e.1).collect(),
        });
        lp_h.push(-rhs);
    }

    let blocks = p
        .blocks
        .iter()
        .map(|blk| {
            let mut h = DMatrix::zeros(blk.dim, blk.dim);
            let mut acc: HashMap<(usize, usize, usize), f64> = HashMap::new();
            let mut order = Vec::new();
            for e in &blk.entries {
                let cst = match e.var {
                    None => Some(e.value),
                    Some(v) => fixed[v].map(|val| e.value * val),
                };
                match cst {
                    Some(c) => {
                        h[(e.row, e.col)] += c;
                        if e.row != e.col {
                            h[(e.col, e.row)] += c;
                        }
                    }
                    None => {
                        let key = (new_index[e.var.unwrap()], e.row, e.col);
                        let slot = acc.entry(key).or_insert_with(|| {
                            order.push(key);
                            0.0
                        });
                        *slot -= e.value;
                    }
                }
            }
            order.sort();
            let mut cb = ConeBlock {
                dim: blk.dim,
                h,
                var: Vec::new(),
                row: Vec::new(),
                col: Vec::new(),
                g: Vec::new(),
            };
            for key in order {
                let g = acc[&key];
                if g != 0.0 {
                    cb.var.push(key.0);
                    cb.row.push(key.1);
                    cb.col.push(key.2);
                    cb.g.push(g);
                }
            }
            cb
        })
        .collect();

    let objective_offset = (0..n).filter_map(|v| fixed[v].map(|val| p.objective[v] * val)).sum();
    let c = free.iter().map(|&v| p.objective[v]).collect();

    Presolved::Reduced(
        ConeProblem {
            n: nf,
            c,
            a: a_rows,
            b,
            lp_g,
            lp_h,
            blocks,
        },
        Reduction {
            free,
            fixed,
            eq_rows,
            lp_rows,
            fixers,
            objective_offset,
        },
    )
}
