use super::*;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn entry(var: Option<usize>, row: usize, col: usize, value: f64) -> BlockEntry {
    BlockEntry { var, row, col, value }
}

fn eq(coeffs: &[(usize, f64)], rhs: f64) -> LinearConstraint {
    LinearConstraint {
        coeffs: coeffs.to_vec(),
        sense: Sense::Eq,
        rhs,
    }
}

fn ge(coeffs: &[(usize, f64)], rhs: f64) -> LinearConstraint {
    LinearConstraint {
        coeffs: coeffs.to_vec(),
        sense: Sense::Ge,
        rhs,
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn assert_certified(p: &SdpProblem, s: &SdpSolution, tol: &Tolerances) {
    assert_eq!(s.status, SdpStatus::Optimal, "{s:?}");
    assert!(s.relative_gap <= tol.gap);
    let scale = s.primal_objective.abs().max(1.0);
    assert!(s.dual_objective <= s.primal_objective + 1e-9 * scale + s.gap);
    assert!((s.primal_objective - s.dual_objective).abs() <= 10.0 * tol.gap * scale);
    for b in &p.blocks {
        assert!(min_eig(&b.value(&s.x)) >= -10.0 * tol.feas);
    }
    for z in &s.dual_blocks {
        assert!(min_eig(z) >= -10.0 * tol.feas);
    }
    assert!(p.max_linear_violation(&s.x) <= 10.0 * tol.feas);
}

fn lp_in_sdp() -> SdpProblem {
    SdpProblem {
        num_vars: 2,
        objective: vec![1.0, 2.0],
        constraints: vec![eq(&[(0, 1.0), (1, 1.0)], 1.0)],
        blocks: vec![PsdBlock {
            dim: 2,
            entries: vec![entry(Some(0), 0, 0, 1.0), entry(Some(1), 1, 1, 1.0)],
        }],
    }
}

#[test]
fn lp_embedded_in_sdp() {
    let p = lp_in_sdp();
    let tol = Tolerances::default();
    let s = solve(&p, tol).unwrap();
    assert_certified(&p, &s, &tol);
    assert!((s.primal_objective - 1.0).abs() < 1e-7);
    assert!((s.x[0] - 1.0).abs() < 1e-6 && s.x[1].abs() < 1e-6, "{:?}", s.x);
}

/// `X = [[x0, x1], [x1, x2]]`
fn two_by_two(constraints: Vec<LinearConstraint>, objective: Vec<f64>) -> SdpProblem {
    SdpProblem {
        num_vars: 3,
        objective,
        constraints,
        blocks: vec![PsdBlock {
            dim: 2,
            entries: vec![
                entry(Some(0), 0, 0, 1.0),
                entry(Some(1), 1, 0, 1.0),
                entry(Some(2), 1, 1, 1.0),
            ],
        }],
    }
}

#[test]
fn forced_psd_completion() {
    let p = two_by_two(
        vec![eq(&[(0, 1.0)], 1.0), eq(&[(2, 1.0)], 1.0), eq(&[(1, 1.0)], 1.0)],
        vec![1.0, 0.0, 1.0],
    );
    let tol = Tolerances::default();
    let s = solve(&p, tol).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert_eq!(s.x, vec![1.0, 1.0, 1.0]);
    assert_eq!(s.primal_objective, 2.0);
    let x = p.blocks[0].value(&s.x);
    assert!(min_eig(&x).abs() < 1e-12);
}

#[test]
fn off_diagonal_maximization() {
    // max X12 with unit diagonal: X = all ones
    let p = two_by_two(vec![eq(&[(0, 1.0)], 1.0), eq(&[(2, 1.0)], 1.0)], vec![0.0, -1.0, 0.0]);
    let tol = Tolerances::default();
    let s = solve(&p, tol).unwrap();
    assert_certified(&p, &s, &tol);
    assert!((s.x[1] - 1.0).abs() < 1e-6);
}

#[test]
fn random_rotated_diagonal_sdps() {
    let mut rng = StdRng::seed_from_u64(20);
    let tol = Tolerances::default();
    for case in 0..20 {
        let k = rng.random_range(2..7);
        let lo: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
        let extra = rng.random_range(0.5..3.0);
        let total: f64 = lo.iter().sum::<f64>() + extra;
        // random orthogonal Q from a QR factorization
        let g = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        // block Qᵀ diag(x - lo) Q
        let mut entries = Vec::new();
        for i in 0..k {
            for j in 0..=i {
                let mut cst = 0.0;
                for v in 0..k {
                    let f = q[(v, i)] * q[(v, j)];
                    entries.push(entry(Some(v), i, j, f));
                    cst -= f * lo[v];
                }
                entries.push(entry(None, i, j, cst));
            }
        }
        let p = SdpProblem {
            num_vars: k,
            objective: c.clone(),
            constraints: vec![eq(&(0..k).map(|v| (v, 1.0)).collect::<Vec<_>>(), total)],
            blocks: vec![PsdBlock { dim: k, entries }],
        };
        // optimum: all excess on the cheapest coordinate
        let cheapest = (0..k).min_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
        let opt: f64 = c.iter().zip(&lo).map(|(a, b)| a * b).sum::<f64>() + c[cheapest] * extra;
        let s = solve(&p, tol).unwrap();
        assert_certified(&p, &s, &tol);
        assert!(
            (s.primal_objective - opt).abs() <= tol.gap * opt.abs().max(1.0),
            "case {case}: {} vs {opt}",
            s.primal_objective
        );
    }
}

#[test]
fn inequality_rows_and_multipliers() {
    // min x0 + x1 s.t. x0 >= 0.3, x1 >= 0.2, x0 + x1 >= 1, [[x0, 0], [0, x1]] ⪰ 0
    let p = SdpProblem {
        num_vars: 2,
        objective: vec![1.0, 1.0],
        constraints: vec![
            ge(&[(0, 1.0)], 0.3),
            ge(&[(1, 1.0)], 0.2),
            ge(&[(0, 2.0), (1, 2.0)], 2.0),
        ],
        blocks: vec![PsdBlock {
            dim: 2,
            entries: vec![entry(Some(0), 0, 0, 1.0), entry(Some(1), 1, 1, 1.0)],
        }],
    };
    let tol = Tolerances::default();
    let s = solve(&p, tol).unwrap();
    assert_certified(&p, &s, &tol);
    assert!((s.primal_objective - 1.0).abs() < 1e-7);
    assert!(s.multipliers.iter().all(|&m| m >= 0.0));
    assert!((s.multipliers[2] - 0.5).abs() < 1e-5, "{:?}", s.multipliers);
}

#[test]
fn detects_infeasibility() {
    let p = SdpProblem {
        num_vars: 1,
        objective: vec![1.0],
        constraints: vec![ge(&[(0, 1.0)], 1.0), ge(&[(0, -1.0)], 0.0)],
        blocks: vec![PsdBlock {
            dim: 1,
            entries: vec![entry(Some(0), 0, 0, 1.0), entry(None, 0, 0, 1.0)],
        }],
    };
    let s = solve(&p, Tolerances::default()).unwrap();
    assert_eq!(s.status, SdpStatus::Infeasible);

    let fixed = two_by_two(
        vec![eq(&[(0, 1.0)], 1.0), eq(&[(2, 1.0)], 1.0), eq(&[(1, 1.0)], 2.0)],
        vec![1.0, 0.0, 1.0],
    );
    assert_eq!(
        solve(&fixed, Tolerances::default()).unwrap().status,
        SdpStatus::Infeasible
    );
}

#[test]
fn detects_unboundedness() {
    let p = SdpProblem {
        num_vars: 2,
        objective: vec![-1.0, 0.0],
        constraints: vec![eq(&[(1, 1.0)], 1.0)],
        blocks: vec![PsdBlock {
            dim: 2,
            entries: vec![entry(Some(0), 0, 0, 1.0), entry(Some(1), 1, 1, 1.0)],
        }],
    };
    let s = solve(&p, Tolerances::default()).unwrap();
    assert_eq!(s.status, SdpStatus::Unbounded);
}

#[test]
fn presolve_drops_dependent_rows() {
    let mut p = lp_in_sdp();
    p.constraints.push(eq(&[(0, 2.0), (1, 2.0)], 2.0));
    p.constraints.push(eq(&[(0, 1.0), (1, 1.0)], 1.0));
    let tol = Tolerances::default();
    let s = solve(&p, tol).unwrap();
    assert_certified(&p, &s, &tol);
    assert!((s.primal_objective - 1.0).abs() < 1e-7);
}

#[test]
fn deterministic() {
    let p = lp_in_sdp();
    let a = solve(&p, Tolerances::default()).unwrap();
    let b = solve(&p, Tolerances::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn rejects_bad_input() {
    let mut p = lp_in_sdp();
    assert!(matches!(
        solve(
            &p,
            Tolerances {
                feas: 0.0,
                ..Default::default()
            }
        ),
        Err(SdpError::Tolerance(_))
    ));
    p.blocks[0].entries.push(entry(Some(5), 0, 0, 1.0));
    assert!(matches!(solve(&p, Tolerances::default()), Err(SdpError::Malformed(_))));
}

#[test]
fn text_format_roundtrip() {
    let mut p = two_by_two(
        vec![eq(&[(0, 1.0)], 1.0), ge(&[(1, 0.1), (2, -3.0)], -0.25)],
        vec![0.0, -1.0, 1.0 / 3.0],
    );
    p.blocks[0].entries.push(entry(None, 1, 1, 0.7));
    let mut buf = Vec::new();
    write_text(&p, &mut buf).unwrap();
    let back = read_text(&buf[..]).unwrap();
    assert_eq!(back, p);
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("VARIABLES 3\n"));
    assert!(text.trim_end().ends_with("END"));
    assert!(
        read_text("VARIABLES 1\nOBJECTIVE 0\nCONSTRAINTS 0\nTRIPLETS 0\nBLOCKS 0\nBLOCKENTRIES 0\n".as_bytes())
            .is_err()
    );
}
