use std::fs;
use std::path::Path;
use std::process::Command;

use mvsos::bench::{oracle_moments, AnalyticSolution, ErrorTable, Example};
use mvsos::harness::{self, HarnessError, RunConfig, RunManifest, Stage};
use mvsos::moments::MomentVector;
use proptest::prelude::*;

fn mvsos(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mvsos"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn invalid_order_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = mvsos(&["run", "--example", "burgers-ic", "--d", "1", "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("d must be at least 2"));
    assert!(!out.exists());
}

#[test]
fn smoke_run_emits_moments_grids_and_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = mvsos(&["run", "--example", "burgers-ic", "--d", "3", "--output", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names = files(&out);
    for f in [
        "config.toml",
        "manifest.toml",
        "moments_nu.csv",
        "moments_nu_t.csv",
        "reconstruction_xi_0.csv",
        "reconstruction_xi_0.6.csv",
        "qoi.csv",
        "completion_k1.csv",
        "statistic_k1.csv",
        "errors.csv",
        "errors.txt",
    ] {
        assert!(names.contains(&f.to_string()), "missing {f}: {names:?}");
    }
    let table = ErrorTable::from_csv("burgers-ic", &fs::read_to_string(out.join("errors.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!(row.d, 3);
    assert_eq!(row.status, "optimal");
    assert!(row.e_g.unwrap() > 0.0 && row.e_g.unwrap() < 0.2);
    assert_eq!(row.e_p.len(), 4);

    let m = RunManifest::load(&out).unwrap();
    assert!(m.verify(&out).unwrap().is_empty());
    let listed: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(listed.len() + 1, names.len());
    assert_eq!(
        m.config_hash,
        harness::sha256_hex(&fs::read(out.join("config.toml")).unwrap())
    );

    let grid = fs::read_to_string(out.join("reconstruction_xi_0.6.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("t,x,u_tilde"));
    assert_eq!(lines.count(), 100 * 100);

    // the shock sits at x = (xi - 1)/4 + t/2, so ∫ u = ∫ (3/8 + t/2) dt over [0, 1/2]
    let qoi = fs::read_to_string(out.join("qoi.csv")).unwrap();
    let ey: f64 = qoi.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((ey - 0.25).abs() < 1e-6, "{ey}");
}

#[test]
fn stage_gating_skips_completion() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = mvsos(&[
        "run",
        "--example",
        "burgers-flux",
        "--d",
        "2",
        "--stages",
        "reconstruct",
        "--output",
        path(&out),
    ]);
    assert!(o.status.success());
    let names = files(&out);
    assert!(names.iter().any(|f| f.starts_with("reconstruction_xi_")));
    for prefix in ["completion", "statistic", "qoi", "errors"] {
        assert!(!names.iter().any(|f| f.starts_with(prefix)), "{prefix}: {names:?}");
    }
    let m = RunManifest::load(&out).unwrap();
    let stages: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(stages, ["assemble", "solve", "moments", "reconstruct"]);
    assert!(m.completions.is_empty() && m.errors.is_none());
}

#[test]
fn solver_failure_is_recorded_and_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = mvsos(&[
        "run",
        "--example",
        "burgers-ic",
        "--d",
        "2",
        "--max-iter",
        "2",
        "--output",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let m = RunManifest::load(&out).unwrap();
    assert!(m.failure.as_deref().unwrap().contains("solve"));
    assert_eq!(m.solver.unwrap().status, "iteration_limit");
    assert!(!out.join("moments_nu.csv").exists());
}

#[test]
fn unwritable_output_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("run");
    let o = mvsos(&["run", "--example", "burgers-ic", "--d", "2", "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    let out = tmp.path().join("run");
    fs::write(
        &cfg,
        "example = \"burgers-ic\"\nd = 2\nstages = [\"qoi\"]\n\n[grids]\nfine_nodes = 7\n",
    )
    .unwrap();
    let o = mvsos(&["run", "--config", path(&cfg), "--d", "3", "--output", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stored = RunConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(stored.d, 3);
    assert_eq!(stored.grids.fine_nodes, 7);
    assert_eq!(stored.stages, vec![Stage::Qoi]);

    fs::write(&cfg, "example = \"burgers-ic\"\nd = 2\nfoo = 1\n").unwrap();
    let o = mvsos(&["run", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inline_problem_runs_without_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = RunConfig::for_example("burgers-ic", 2);
    c.example = None;
    c.problem = Some(harness::InlineProblem::builtin(Example::ParametricInitial));
    c.problem.as_mut().unwrap().name = "custom".into();
    c.output = tmp.path().join("run");
    c.stages = vec![Stage::Qoi, Stage::Tables];
    let m = harness::run(&c).unwrap();
    assert_eq!(m.problem, "custom");
    assert!(m.errors.is_none());
    assert!(!c.output.join("errors.csv").exists());
    let back = RunConfig::load(&c.output.join("config.toml")).unwrap();
    assert_eq!(back, c);
}

#[test]
fn sweep_single_and_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = RunConfig::for_example("burgers-ic", 2);
    c.output = tmp.path().join("sweep");
    c.stages = vec![Stage::Tables];
    assert!(matches!(harness::sweep(&c, &[]), Err(HarnessError::Config(_))));
    assert!(!c.output.exists());
    let report = harness::sweep(&c, &[2]).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.table.rows.len(), 1);
    let csv = fs::read_to_string(c.output.join("sweep.csv")).unwrap();
    assert_eq!(csv, report.table.to_csv());
    assert!(c.output.join("sweep.txt").exists());
}

#[test]
fn sweep_records_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = RunConfig::for_example("burgers-ic", 2);
    c.output = tmp.path().join("sweep");
    c.stages = vec![];
    c.tolerances.max_iter = 15;
    // d=2 converges in 14 iterations, d=3 needs more
    let report = harness::sweep(&c, &[2, 3]).unwrap();
    assert_eq!(report.table.rows.len(), 2);
    assert_eq!(report.table.rows[0].status, "optimal");
    assert_eq!(report.table.rows[1].status, "failed");
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].0, 3);
}

#[test]
fn tables_rerender_matches_stored_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let csv = tmp.path().join("t.csv");
    assert!(
        mvsos(&["run", "--example", "burgers-flux", "--d", "2", "--output", path(&out)])
            .status
            .success()
    );
    let o = mvsos(&["tables", path(&out), "--csv", path(&csv)]);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(&csv).unwrap(),
        fs::read_to_string(out.join("errors.csv")).unwrap()
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("burgers-flux"));
}

#[test]
fn oracle_subcommand_matches_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o.csv");
    let o = mvsos(&[
        "oracle",
        "--example",
        "burgers-ic",
        "--degree",
        "4",
        "--output",
        path(&out),
    ]);
    assert!(o.status.success());
    let z = MomentVector::read_csv(std::io::BufReader::new(fs::File::open(&out).unwrap())).unwrap();
    let s = AnalyticSolution::parametric_initial();
    let exact = oracle_moments(&s, &s.domains, 4);
    assert_eq!(z.values(), exact.values());
    // ∫ u = ∫ (3/8 + t/2) dt over [0, 1/2]
    assert!((z.at(&[0, 0, 0, 1]) - 0.25).abs() < 1e-12);

    let o = mvsos(&["oracle", "--example", "nope", "--degree", "2", "--output", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn manifest_digests_match_files(
        fine in 2usize..12,
        values in 2usize..30,
        xi in proptest::collection::vec(0.0..=1.0f64, 1..3),
        flux in any::<bool>(),
    ) {
        let tmp = tempfile::tempdir().unwrap();
        let id = if flux { "burgers-flux" } else { "burgers-ic" };
        let mut c = RunConfig::for_example(id, 2);
        c.output = tmp.path().join("run");
        c.grids.fine_nodes = fine;
        c.grids.value_nodes = values;
        c.grids.parametric_xi = xi;
        let m = harness::run(&c).unwrap();
        prop_assert!(m.verify(&c.output).unwrap().is_empty());
        prop_assert_eq!(m.files.len() + 1, files(&c.output).len());
    }
}
