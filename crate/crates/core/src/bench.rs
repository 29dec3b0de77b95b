//! Closed-form Riemann solutions of the two Burgers benchmarks, their moments,
//! and the error metrics used to score reconstructions.

use std::fmt::Write as _;

use crate::moments::{interval_moment, MomentVector, MonomialBasis};
use crate::poly::{Polynomial, VariableSpace};
use crate::postproc::ReconstructionGrid;
use crate::problem::{burgers_parametric_flux, burgers_parametric_initial, BoxDomain, ProblemSpec};

/// Parameter values of the per-parameter error.
pub const PARAMETRIC_XI: [f64; 4] = [0.0, 0.2, 0.6, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Shock position depends on the parameter.
    ParametricInitial,
    /// Shock speed depends on the parameter.
    ParametricFlux,
}

impl Example {
    pub fn id(self) -> &'static str {
        match self {
            Example::ParametricInitial => "burgers-ic",
            Example::ParametricFlux => "burgers-flux",
        }
    }

    pub fn from_id(id: &str) -> Option<Example> {
        match id {
            "burgers-ic" => Some(Example::ParametricInitial),
            "burgers-flux" => Some(Example::ParametricFlux),
            _ => None,
        }
    }

    pub fn spec(self) -> ProblemSpec {
        match self {
            Example::ParametricInitial => burgers_parametric_initial(),
            Example::ParametricFlux => burgers_parametric_flux(),
        }
    }

    pub fn solution(self) -> AnalyticSolution {
        match self {
            Example::ParametricInitial => AnalyticSolution::parametric_initial(),
            Example::ParametricFlux => AnalyticSolution::parametric_flux(),
        }
    }
}

/// `u = left` for `x < s(t, ξ)`, `u = right` otherwise.
#[derive(Debug, Clone)]
pub struct AnalyticSolution {
    pub example: Example,
    /// Shock location over `(t, xi)`.
    pub shock: Polynomial,
    pub left: f64,
    pub right: f64,
    pub domains: BoxDomain,
}

impl AnalyticSolution {
    pub fn parametric_initial() -> Self {
        let sp = VariableSpace::new(&["t", "xi"]);
        AnalyticSolution {
            example: Example::ParametricInitial,
            shock: Polynomial::from_terms(&sp, [(vec![0, 0], -0.25), (vec![0, 1], 0.25), (vec![1, 0], 0.5)]),
            left: 1.0,
            right: 0.0,
            domains: burgers_parametric_initial().validate().unwrap().domains,
        }
    }

    pub fn parametric_flux() -> Self {
        let sp = VariableSpace::new(&["t", "xi"]);
        AnalyticSolution {
            example: Example::ParametricFlux,
            shock: Polynomial::from_terms(&sp, [(vec![1, 0], 0.25), (vec![1, 1], 0.25)]),
            left: 1.0,
            right: 0.0,
            domains: burgers_parametric_flux().validate().unwrap().domains,
        }
    }

    pub fn shock_at(&self, t: f64, xi: f64) -> f64 {
        self.shock.eval(&[t, xi]).unwrap()
    }

    pub fn eval(&self, t: f64, x: f64, xi: f64) -> f64 {
        if x < self.shock_at(t, xi) {
            self.left
        } else {
            self.right
        }
    }

    /// `f_k(t, x) = ∫ u(t, x, ξ)^k dρ(ξ)` with `0⁰ = 1`.
    pub fn fk(&self, k: u32, t: f64, x: f64) -> f64 {
        let zero_k = if k == 0 { 1.0 } else { 0.0 };
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        let c = match self.example {
            Example::ParametricInitial => clamp(1.0 - 2.0 * t + 4.0 * x),
            Example::ParametricFlux => {
                if t == 0.0 {
                    return if x < 0.0 { 1.0 } else { zero_k };
                }
                clamp(4.0 * x / t - 1.0)
            }
        };
        1.0 - c + zero_k * c
    }
}

fn powi0(v: f64, e: u32) -> f64 {
    if e == 0 {
        1.0
    } else {
        v.powi(e as i32)
    }
}

/// `∫_T ∫_Ξ t^a ξ^c P(t, ξ) dt dρ(ξ)` for `P` over `(t, xi)`.
fn integrate_t_xi(p: &Polynomial, a: u32, c: u32, t_end: f64) -> f64 {
    p.terms()
        .map(|(m, coef)| {
            let (i, j) = (a + m.get(0), c + m.get(1));
            coef * t_end.powi(i as i32 + 1) / (i as f64 + 1.0) / (j as f64 + 1.0)
        })
        .sum()
}

/// Same at fixed `t`.
fn integrate_xi_at(p: &Polynomial, c: u32, t: f64) -> f64 {
    p.terms()
        .map(|(m, coef)| coef * powi0(t, m.get(0)) / ((c + m.get(1)) as f64 + 1.0))
        .sum()
}

/// `∫_L^s x^b dx` and `∫_s^R x^b dx` as polynomials over `(t, xi)`.
fn x_pieces(sol: &AnalyticSolution, b: u32) -> (Polynomial, Polynomial) {
    let x = sol.domains.space[0];
    let sp = sol.shock.space().clone();
    let sb = sol.shock.pow(b + 1).scale(1.0 / (b as f64 + 1.0));
    let lo = Polynomial::constant(&sp, x.lo.powi(b as i32 + 1) / (b as f64 + 1.0));
    let hi = Polynomial::constant(&sp, x.hi.powi(b as i32 + 1) / (b as f64 + 1.0));
    (sb.sub(&lo).unwrap(), hi.sub(&sb).unwrap())
}

/// Moments `∫ t^a x^b ξ^c u^e dt dx dρ` of the solution graph, by exact
/// piecewise integration (the shock is polynomial in `(t, ξ)` and stays inside `X`).
pub fn oracle_moments(sol: &AnalyticSolution, domains: &BoxDomain, max_degree: u32) -> MomentVector {
    let basis = MonomialBasis::new(&domains.occupation_space(), max_degree);
    let t_end = domains.t_end;
    let pieces: Vec<_> = (0..=max_degree).map(|b| x_pieces(sol, b)).collect();
    MomentVector::from_fn(basis, |al| {
        let (a, b, c, e) = (al.get(0), al.get(1), al.get(2), al.get(3));
        if e == 0 {
            return t_end.powi(a as i32 + 1) / (a as f64 + 1.0) * interval_moment(domains.space[0], b)
                / (c as f64 + 1.0);
        }
        let (l, r) = &pieces[b as usize];
        powi0(sol.left, e) * integrate_t_xi(l, a, c, t_end) + powi0(sol.right, e) * integrate_t_xi(r, a, c, t_end)
    })
}

/// Moments `∫ x^b ξ^c u(T)^e dx dρ` of the terminal graph.
pub fn oracle_terminal_moments(sol: &AnalyticSolution, domains: &BoxDomain, max_degree: u32) -> MomentVector {
    let space = domains.occupation_space().without("t").unwrap();
    let basis = MonomialBasis::new(&space, max_degree);
    let t_end = domains.t_end;
    let pieces: Vec<_> = (0..=max_degree).map(|b| x_pieces(sol, b)).collect();
    MomentVector::from_fn(basis, |al| {
        let (b, c, e) = (al.get(0), al.get(1), al.get(2));
        if e == 0 {
            return interval_moment(domains.space[0], b) / (c as f64 + 1.0);
        }
        let (l, r) = &pieces[b as usize];
        powi0(sol.left, e) * integrate_xi_at(l, c, t_end) + powi0(sol.right, e) * integrate_xi_at(r, c, t_end)
    })
}

/// `n` equispaced nodes including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Midpoints of a uniform `n`-cell partition of `[0, 1]`.
pub fn midpoints(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

/// Node sets for the three error metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSets {
    /// Nodes per axis for the global error (25 in the reference setup).
    pub global_nodes: usize,
    /// Parameter values for the global error.
    pub global_xi: Vec<f64>,
    /// Nodes per axis for the per-parameter and statistic errors.
    pub fine_nodes: usize,
    pub parametric_xi: Vec<f64>,
}

impl Default for TestSets {
    fn default() -> Self {
        TestSets {
            global_nodes: 25,
            global_xi: midpoints(25),
            fine_nodes: 100,
            parametric_xi: PARAMETRIC_XI.to_vec(),
        }
    }
}

impl TestSets {
    pub fn describe(&self) -> String {
        format!(
            "t,x: {} equispaced; xi: {} cell midpoints; per-xi and statistic grids {}x{}",
            self.global_nodes,
            self.global_xi.len(),
            self.fine_nodes,
            self.fine_nodes
        )
    }

    pub fn global_axes(&self, domains: &BoxDomain) -> Vec<Vec<f64>> {
        let x = domains.space[0];
        vec![
            linspace(0.0, domains.t_end, self.global_nodes),
            linspace(x.lo, x.hi, self.global_nodes),
            self.global_xi.clone(),
        ]
    }

    pub fn parametric_axes(&self, domains: &BoxDomain, xi: f64) -> Vec<Vec<f64>> {
        let x = domains.space[0];
        vec![
            linspace(0.0, domains.t_end, self.fine_nodes),
            linspace(x.lo, x.hi, self.fine_nodes),
            vec![xi],
        ]
    }

    pub fn statistic_axes(&self, domains: &BoxDomain) -> Vec<Vec<f64>> {
        let x = domains.space[0];
        vec![
            linspace(0.0, domains.t_end, self.fine_nodes),
            linspace(x.lo, x.hi, self.fine_nodes),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Global,
    Parametric(f64),
    Statistic,
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::Global => "e_g".into(),
            Metric::Parametric(xi) => format!("e_p({xi})"),
            Metric::Statistic => "e_s".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub metric: Metric,
    pub d: u32,
    pub value: f64,
    pub test_set: String,
}

/// `‖exact − approx‖₁ / ‖exact‖₁` as plain sums over nodes.
pub fn relative_l1(approx: &[f64], exact: &[f64]) -> f64 {
    assert_eq!(approx.len(), exact.len(), "grid mismatch");
    let num: f64 = approx.iter().zip(exact).map(|(a, e)| (a - e).abs()).sum();
    let den: f64 = exact.iter().map(|e| e.abs()).sum();
    num / den
}

fn solution_on(grid: &ReconstructionGrid, sol: &AnalyticSolution) -> Vec<f64> {
    grid.nodes().map(|w| sol.eval(w[0], w[1], w[2])).collect()
}

/// Global error on a `(t, x, xi)` grid; `approx` is in grid node order.
pub fn error_global(
    approx: &[f64],
    grid: &ReconstructionGrid,
    sol: &AnalyticSolution,
    d: u32,
    sets: &TestSets,
) -> ErrorReport {
    ErrorReport {
        metric: Metric::Global,
        d,
        value: relative_l1(approx, &solution_on(grid, sol)),
        test_set: sets.describe(),
    }
}

/// Error at one parameter value; the grid's parameter axis holds that single value.
pub fn error_parametric(
    approx: &[f64],
    grid: &ReconstructionGrid,
    sol: &AnalyticSolution,
    d: u32,
    sets: &TestSets,
) -> ErrorReport {
    ErrorReport {
        metric: Metric::Parametric(grid.axes[2][0]),
        d,
        value: relative_l1(approx, &solution_on(grid, sol)),
        test_set: sets.describe(),
    }
}

/// Error of a reconstructed `f_1` on a `(t, x)` grid.
pub fn error_statistic(
    approx: &[f64],
    grid: &ReconstructionGrid,
    sol: &AnalyticSolution,
    d: u32,
    sets: &TestSets,
) -> ErrorReport {
    let exact: Vec<f64> = grid.nodes().map(|w| sol.fk(1, w[0], w[1])).collect();
    ErrorReport {
        metric: Metric::Statistic,
        d,
        value: relative_l1(approx, &exact),
        test_set: sets.describe(),
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableRow {
    pub d: u32,
    pub e_g: Option<f64>,
    pub e_p: Vec<(f64, f64)>,
    pub e_s: Option<f64>,
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub example: String,
    pub rows: Vec<TableRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

impl ErrorTable {
    fn xi_columns(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = Vec::new();
        for r in &self.rows {
            for &(xi, _) in &r.e_p {
                if !xs.contains(&xi) {
                    xs.push(xi);
                }
            }
        }
        xs
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["d".to_string(), "e_g".to_string()];
        h.extend(self.xi_columns().iter().map(|xi| format!("e_p({xi})")));
        h.extend(
            ["e_s", "status", "iterations", "primal_residual", "relative_gap"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    fn cells(&self) -> Vec<Vec<String>> {
        let xs = self.xi_columns();
        self.rows
            .iter()
            .map(|r| {
                let mut c = vec![r.d.to_string(), opt(r.e_g)];
                for xi in &xs {
                    c.push(opt(r.e_p.iter().find(|e| e.0 == *xi).map(|e| e.1)));
                }
                c.push(opt(r.e_s));
                c.push(r.status.clone());
                c.push(r.iterations.to_string());
                c.push(format!("{:.3e}", r.primal_residual));
                c.push(format!("{:.3e}", r.relative_gap));
                c
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header().join(",");
        s.push('\n');
        for row in self.cells() {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Column-aligned plain text.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let cells = self.cells();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| cells.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap())
            .collect();
        let mut s = String::new();
        writeln!(s, "# {}", self.example).unwrap();
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(s, "{}", line(&header)).unwrap();
        for r in &cells {
            writeln!(s, "{}", line(r)).unwrap();
        }
        s
    }

    /// Parses the CSV written by [`ErrorTable::to_csv`].
    pub fn from_csv(example: &str, text: &str) -> Option<ErrorTable> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next()?.split(',').collect();
        let num = |s: &str| -> Option<Option<f64>> {
            if s.is_empty() {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        };
        let mut rows = Vec::new();
        for l in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != header.len() {
                return None;
            }
            let mut r = TableRow {
                d: f[0].parse().ok()?,
                ..Default::default()
            };
            for (h, v) in header.iter().zip(&f).skip(1) {
                match *h {
                    "e_g" => r.e_g = num(v)?,
                    "e_s" => r.e_s = num(v)?,
                    "status" => r.status = v.to_string(),
                    "iterations" => r.iterations = v.parse().ok()?,
                    "primal_residual" => r.primal_residual = v.parse().ok()?,
                    "relative_gap" => r.relative_gap = v.parse().ok()?,
                    other => {
                        let xi: f64 = other.strip_prefix("e_p(")?.strip_suffix(')')?.parse().ok()?;
                        if let Some(val) = num(v)? {
                            r.e_p.push((xi, val));
                        }
                    }
                }
            }
            rows.push(r);
        }
        Some(ErrorTable {
            example: example.to_string(),
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Midpoint rule over `(t, x, xi)` with the x-integral taken exactly
    /// across the jump.
    fn brute_moment(sol: &AnalyticSolution, a: u32, b: u32, c: u32, e: u32, m: usize) -> f64 {
        let d = &sol.domains;
        let (lo, hi) = (d.space[0].lo, d.space[0].hi);
        let ht = d.t_end / m as f64;
        let hx = 1.0 / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            let t = (i as f64 + 0.5) * ht;
            for j in 0..m {
                let xi = (j as f64 + 0.5) * hx;
                let s = sol.shock_at(t, xi).clamp(lo, hi);
                let int = |u: f64, x0: f64, x1: f64| {
                    powi0(u, e) * (x1.powi(b as i32 + 1) - x0.powi(b as i32 + 1)) / (b as f64 + 1.0)
                };
                let xint = int(sol.left, lo, s) + int(sol.right, s, hi);
                acc += powi0(t, a) * powi0(xi, c) * xint * ht * hx;
            }
        }
        acc
    }

    #[test]
    fn analytic_values() {
        let s1 = AnalyticSolution::parametric_initial();
        assert_eq!(s1.eval(0.5, 0.0, 0.0), 0.0);
        assert_eq!(s1.eval(0.5, -0.1, 0.0), 1.0);
        let s2 = AnalyticSolution::parametric_flux();
        assert_eq!(s2.eval(0.4, 0.05, 1.0), 1.0);
        assert_eq!(s1.fk(1, 0.25, 0.0), 0.5);
        assert_eq!(s1.fk(3, 0.0, -0.4), 1.0);
        assert_eq!(s1.fk(1, 0.0, 0.4), 0.0);
        assert_eq!(s2.fk(0, 0.3, 0.1), 1.0);
        assert_eq!(s2.fk(2, 0.0, -0.1), 1.0);
        assert_eq!(s2.fk(2, 0.0, 0.1), 0.0);
    }

    #[test]
    fn fk_independent_of_k() {
        for sol in [
            AnalyticSolution::parametric_initial(),
            AnalyticSolution::parametric_flux(),
        ] {
            for t in linspace(0.0, 0.5, 25) {
                for x in linspace(-0.5, 0.5, 25) {
                    let f1 = sol.fk(1, t, x);
                    assert_eq!(sol.fk(2, t, x), f1);
                    assert_eq!(sol.fk(3, t, x), f1);
                }
            }
        }
    }

    #[test]
    fn fk_matches_parameter_average() {
        for sol in [
            AnalyticSolution::parametric_initial(),
            AnalyticSolution::parametric_flux(),
        ] {
            for t in [0.1, 0.3, 0.5] {
                for x in [-0.3, -0.1, 0.02, 0.07, 0.2] {
                    let m = 20000;
                    let avg: f64 = midpoints(m).iter().map(|&xi| sol.eval(t, x, xi)).sum::<f64>() / m as f64;
                    assert!((avg - sol.fk(1, t, x)).abs() < 1e-3, "{t} {x}");
                }
            }
        }
    }

    #[test]
    fn oracle_mass_values() {
        let s = AnalyticSolution::parametric_initial();
        let z = oracle_moments(&s, &s.domains, 4);
        assert_relative_eq!(z.at(&[0, 0, 0, 0]), 0.5, max_relative = 1e-15);
        // the solution fills 3/8 of X at t = 0 and 5/8 at t = T, linearly in t
        for e in 1..=4 {
            assert_relative_eq!(z.at(&[0, 0, 0, e]), 0.25, max_relative = 1e-14);
        }
        let zt = oracle_terminal_moments(&s, &s.domains, 4);
        assert_relative_eq!(zt.at(&[0, 0, 1]), 5.0 / 8.0, max_relative = 1e-14);
        assert_relative_eq!(brute_moment(&s, 0, 0, 0, 1, 400), 0.25, max_relative = 1e-6);
    }

    #[test]
    fn oracle_matches_quadrature() {
        for s in [
            AnalyticSolution::parametric_initial(),
            AnalyticSolution::parametric_flux(),
        ] {
            let z = oracle_moments(&s, &s.domains, 6);
            for al in z.basis().iter() {
                let (a, b, c, e) = (al.get(0), al.get(1), al.get(2), al.get(3));
                let q = brute_moment(&s, a, b, c, e, 300);
                let scale = z.at(al.exps()).abs().max(1e-3 * 0.5f64.powi(b as i32));
                assert!(
                    (q - z.at(al.exps())).abs() <= 1e-4 * scale,
                    "{al:?}: {q} vs {}",
                    z.at(al.exps())
                );
            }
        }
    }

    #[test]
    fn terminal_oracle_matches_quadrature() {
        let s = AnalyticSolution::parametric_flux();
        let zt = oracle_terminal_moments(&s, &s.domains, 4);
        for (b, c) in [(0, 0), (1, 0), (2, 1), (0, 3)] {
            let m = 4000;
            let q = midpoints(m)
                .iter()
                .map(|&xi| {
                    let sh = s.shock_at(0.5, xi);
                    (sh.powi(b + 1) - (-0.5f64).powi(b + 1)) / (b as f64 + 1.0) * xi.powi(c)
                })
                .sum::<f64>()
                / m as f64;
            assert!((q - zt.at(&[b as u32, c as u32, 1])).abs() < 1e-6);
        }
    }

    #[test]
    fn error_definitions() {
        assert_eq!(relative_l1(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]), 0.0);
        assert_eq!(relative_l1(&[1.0, 1.0, 1.0, 0.0], &[1.0, 0.0, 1.0, 1.0]), 2.0 / 3.0);
        let s = AnalyticSolution::parametric_initial();
        let sets = TestSets::default();
        let grid = ReconstructionGrid::from_axes(sets.global_axes(&s.domains), vec![0.0, 1.0]).unwrap();
        let exact: Vec<f64> = grid.nodes().map(|w| s.eval(w[0], w[1], w[2])).collect();
        assert_eq!(error_global(&exact, &grid, &s, 2, &sets).value, 0.0);
        let m: f64 = exact.iter().sum();
        let mut one_off = exact.clone();
        one_off[7] = 1.0 - one_off[7];
        assert_relative_eq!(error_global(&one_off, &grid, &s, 2, &sets).value, 1.0 / m);
        let g = ReconstructionGrid::from_axes(sets.statistic_axes(&s.domains), vec![0.0, 1.0]).unwrap();
        let f1: Vec<f64> = g.nodes().map(|w| s.fk(1, w[0], w[1])).collect();
        assert_eq!(error_statistic(&f1, &g, &s, 3, &sets).value, 0.0);
    }

    #[test]
    fn table_roundtrip() {
        let t = ErrorTable {
            example: "burgers-ic".into(),
            rows: vec![
                TableRow {
                    d: 2,
                    e_g: Some(0.085),
                    e_p: vec![(0.0, 0.2), (0.6, 0.05)],
                    e_s: None,
                    status: "optimal".into(),
                    iterations: 31,
                    primal_residual: 1e-9,
                    relative_gap: 2e-8,
                },
                TableRow {
                    d: 3,
                    e_g: Some(0.03),
                    e_p: vec![(0.0, 0.1), (0.6, 0.02)],
                    e_s: Some(0.1),
                    status: "optimal".into(),
                    iterations: 40,
                    ..Default::default()
                },
            ],
        };
        let csv = t.to_csv();
        assert!(csv.starts_with("d,e_g,e_p(0),e_p(0.6),e_s,status"));
        let back = ErrorTable::from_csv("burgers-ic", &csv).unwrap();
        assert_eq!(back.to_csv(), csv);
        assert!(t.to_text().lines().count() == 4);
    }

    proptest! {
        #[test]
        fn solution_takes_two_values(t in 0.0..0.5f64, x in -0.5..0.5f64, xi in 0.0..1.0f64) {
            for s in [AnalyticSolution::parametric_initial(), AnalyticSolution::parametric_flux()] {
                let u = s.eval(t, x, xi);
                prop_assert!(u == 0.0 || u == 1.0);
                prop_assert!(s.domains.space[0].contains(s.shock_at(t, xi), 0.0));
            }
        }
    }
}
