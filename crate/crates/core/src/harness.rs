//! Run configuration, pipeline orchestration and artifact persistence.
//!
//! A run assembles the relaxation for one order `d`, solves it, and writes the
//! moment vectors, Christoffel reconstructions, quantity-of-interest values,
//! completed statistics and (for the built-in examples) error tables into an
//! output directory together with a `manifest.toml`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bench::{
    self, error_global, error_parametric, error_statistic, linspace, AnalyticSolution, ErrorTable, Example, TableRow,
    TestSets,
};
use crate::gmp::{GmpContext, Objective};
use crate::moments::MomentVector;
use crate::poly::{Polynomial, VariableSpace};
use crate::postproc::{self, ChristoffelModel, ReconstructionGrid};
use crate::problem::{
    BoxDomain, EntropyBudget, HalfSpace, InitialPiece, Interval, PiecewiseInitialCondition, ProblemError, ProblemSpec,
    Side,
};
use crate::sdp::{self, SdpSolution, Tolerances};

const BURGERS_IC: &str = include_str!("../configs/burgers-ic.toml");
const BURGERS_FLUX: &str = include_str!("../configs/burgers-flux.toml");

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const NU_FILE: &str = "moments_nu.csv";
pub const NU_T_FILE: &str = "moments_nu_t.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
}

impl HarnessError {
    /// 1 for validation, 2 for a failed stage, 3 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Problem(_) => 1,
            HarnessError::Stage { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Read { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `(exponents, coefficient)` pairs over `t, x1..xn, xi1..xip, y`.
pub type Terms = Vec<(Vec<u32>, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InlineSide {
    Below,
    AtOrAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineCondition {
    pub axis: usize,
    pub side: InlineSide,
    pub breakpoint: Terms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlinePiece {
    #[serde(default)]
    pub conditions: Vec<InlineCondition>,
    pub value: Terms,
}

/// Problem written out in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub name: String,
    pub t_end: f64,
    /// One `[lo, hi]` per space dimension.
    pub space: Vec<[f64; 2]>,
    /// Number of parameters, each ranging over `[0, 1]`.
    #[serde(default)]
    pub params: usize,
    /// `U`; derived from the initial data when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<[f64; 2]>,
    pub flux: Vec<Terms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropies: Option<Vec<Terms>>,
    pub initial: Vec<InlinePiece>,
}

impl InlineProblem {
    /// Embedded problem for a built-in example.
    pub fn builtin(example: Example) -> InlineProblem {
        let text = match example {
            Example::ParametricInitial => BURGERS_IC,
            Example::ParametricFlux => BURGERS_FLUX,
        };
        toml::from_str(text).expect("embedded problem parses")
    }

    pub fn space(&self) -> VariableSpace {
        VariableSpace::occupation(self.space.len(), self.params)
    }

    fn poly(&self, space: &VariableSpace, terms: &Terms, what: &str) -> Result<Polynomial> {
        if let Some((e, _)) = terms.iter().find(|(e, _)| e.len() != space.len()) {
            return Err(config_err(format!(
                "{what}: exponent list {e:?} has {} entries, expected {} ({})",
                e.len(),
                space.len(),
                space.names().join(", ")
            )));
        }
        if let Some((_, c)) = terms.iter().find(|(_, c)| !c.is_finite()) {
            return Err(config_err(format!("{what}: non-finite coefficient {c}")));
        }
        Ok(Polynomial::from_terms(space, terms.iter().cloned()))
    }

    /// Builds and validates the in-memory problem.
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let space = self.space();
        let iv = |[lo, hi]: [f64; 2]| Interval::new(lo, hi);
        let flux = self
            .flux
            .iter()
            .enumerate()
            .map(|(i, t)| self.poly(&space, t, &format!("flux[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let entropies = match &self.entropies {
            None => None,
            Some(list) => Some(
                list.iter()
                    .enumerate()
                    .map(|(i, t)| self.poly(&space, t, &format!("entropies[{i}]")))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let mut pieces = Vec::with_capacity(self.initial.len());
        for (i, piece) in self.initial.iter().enumerate() {
            let mut conditions = Vec::with_capacity(piece.conditions.len());
            for c in &piece.conditions {
                if c.axis >= self.space.len() {
                    return Err(config_err(format!("initial[{i}]: axis {} out of range", c.axis)));
                }
                conditions.push(HalfSpace {
                    axis: c.axis,
                    side: match c.side {
                        InlineSide::Below => Side::Below,
                        InlineSide::AtOrAbove => Side::AtOrAbove,
                    },
                    breakpoint: self.poly(&space, &c.breakpoint, &format!("initial[{i}].breakpoint"))?,
                });
            }
            pieces.push(InitialPiece {
                conditions,
                value: self.poly(&space, &piece.value, &format!("initial[{i}].value"))?,
            });
        }
        let spec = ProblemSpec {
            name: self.name.clone(),
            domains: BoxDomain {
                t_end: self.t_end,
                space: self.space.iter().copied().map(iv).collect(),
                params: self.params,
                values: self.values.map(iv),
            },
            flux,
            initial: PiecewiseInitialCondition { pieces },
            entropies,
            boundary_traces: Vec::new(),
        };
        Ok(spec.validate()?)
    }
}

/// Post-processing stages; the solve itself always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Reconstruct,
    Qoi,
    Complete,
    Tables,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Reconstruct, Stage::Qoi, Stage::Complete, Stage::Tables];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Reconstruct => "reconstruct",
            Stage::Qoi => "qoi",
            Stage::Complete => "complete",
            Stage::Tables => "tables",
        }
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub feas: f64,
    pub gap: f64,
    pub max_iter: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let t = Tolerances::default();
        ToleranceConfig {
            feas: t.feas,
            gap: t.gap,
            max_iter: t.max_iter,
        }
    }
}

impl ToleranceConfig {
    pub fn to_tolerances(&self) -> Tolerances {
        Tolerances {
            feas: self.feas,
            gap: self.gap,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Nodes per `t`/`x` axis of the global error grid.
    pub global_nodes: usize,
    /// Number of parameter cell midpoints of the global error grid.
    pub global_xi: usize,
    /// Nodes per `t`/`x` axis of the written reconstructions and statistics.
    pub fine_nodes: usize,
    /// Candidate values per node for the argmin over `y` (or `f`).
    pub value_nodes: usize,
    /// Parameter values of the written slices; each sets every parameter.
    pub parametric_xi: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let t = TestSets::default();
        GridConfig {
            global_nodes: t.global_nodes,
            global_xi: t.global_xi.len(),
            fine_nodes: t.fine_nodes,
            value_nodes: 201,
            parametric_xi: t.parametric_xi,
        }
    }
}

impl GridConfig {
    pub fn test_sets(&self) -> TestSets {
        TestSets {
            global_nodes: self.global_nodes,
            global_xi: bench::midpoints(self.global_xi),
            fine_nodes: self.fine_nodes,
            parametric_xi: self.parametric_xi.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyConfig {
    pub reserve: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_pairs: Option<usize>,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        let b = EntropyBudget::default();
        EntropyConfig {
            reserve: b.reserve,
            max_pairs: b.max_pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoiConfig {
    pub name: String,
    pub terms: Terms,
}

fn default_objective() -> String {
    Objective::default().name().to_string()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn default_k() -> Vec<u32> {
    vec![1]
}

/// Everything a run needs. Exactly one of `example` and `problem` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
    pub d: u32,
    /// Christoffel regularization; scaled to the moment matrix trace when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_objective")]
    pub objective: String,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default = "default_k")]
    pub complete_k: Vec<u32>,
    /// Expectations to report; `E[y]` and `E[y^2]` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qoi: Option<Vec<QoiConfig>>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<InlineProblem>,
}

impl RunConfig {
    /// Defaults for a built-in example.
    pub fn for_example(id: &str, d: u32) -> RunConfig {
        RunConfig {
            example: Some(id.to_string()),
            d,
            beta: None,
            objective: default_objective(),
            output: default_output(),
            stages: default_stages(),
            complete_k: default_k(),
            qoi: None,
            tolerances: ToleranceConfig::default(),
            grids: GridConfig::default(),
            entropy: EntropyConfig::default(),
            problem: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| config_err(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {}", path.display(), e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn wants(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Checks the whole configuration without touching the file system
    /// beyond looking at the output path.
    pub fn validate(&self) -> Result<Plan> {
        if self.d < 2 {
            return Err(config_err(format!("d must be at least 2, got {}", self.d)));
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b > 0.0) {
                return Err(config_err(format!("beta must be positive, got {b}")));
            }
        }
        let objective = Objective::from_name(&self.objective)
            .ok_or_else(|| config_err(format!("unknown objective `{}`", self.objective)))?;
        let t = &self.tolerances;
        if !(t.feas > 0.0 && t.gap > 0.0 && t.max_iter > 0) {
            return Err(config_err("tolerances must be positive"));
        }
        let g = &self.grids;
        if g.global_nodes < 2 || g.fine_nodes < 2 || g.value_nodes < 2 {
            return Err(config_err("grids need at least 2 nodes per axis"));
        }
        if g.global_xi == 0 {
            return Err(config_err("global_xi must be at least 1"));
        }
        if let Some(xi) = g.parametric_xi.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(config_err(format!("parametric xi {xi} outside [0, 1]")));
        }
        if let Some(k) = self.complete_k.iter().find(|&&k| k == 0 || k > 2 * self.d) {
            return Err(config_err(format!("statistic order {k} outside 1..={}", 2 * self.d)));
        }
        let (problem, example) = match (&self.example, &self.problem) {
            (Some(id), None) => {
                let ex = Example::from_id(id).ok_or_else(|| config_err(format!("unknown example `{id}`")))?;
                (InlineProblem::builtin(ex), Some(ex))
            }
            (None, Some(p)) => (p.clone(), None),
            _ => return Err(config_err("set exactly one of `example` and `problem`")),
        };
        let spec = problem.to_spec()?;
        let space = spec.space();
        let qois = match &self.qoi {
            Some(list) => list
                .iter()
                .map(|q| Ok((q.name.clone(), problem.poly(&space, &q.terms, &q.name)?)))
                .collect::<Result<Vec<_>>>()?,
            None => {
                let y = space.len() - 1;
                let mono = |e: u32| {
                    let mut a = vec![0; space.len()];
                    a[y] = e;
                    Polynomial::from_terms(&space, [(a, 1.0)])
                };
                vec![("E[y]".to_string(), mono(1)), ("E[y^2]".to_string(), mono(2))]
            }
        };
        if let Some((name, _)) = qois.iter().find(|(_, p)| p.degree() > 2 * self.d) {
            return Err(config_err(format!("qoi `{name}` has degree above 2d = {}", 2 * self.d)));
        }
        if self.output.is_file() {
            return Err(config_err(format!("output {} is a file", self.output.display())));
        }
        Ok(Plan {
            spec,
            example,
            objective,
            budget: EntropyBudget {
                reserve: self.entropy.reserve,
                max_pairs: self.entropy.max_pairs,
            },
            tol: self.tolerances.to_tolerances(),
            qois,
        })
    }
}

/// Validated form of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Plan {
    pub spec: ProblemSpec,
    pub example: Option<Example>,
    pub objective: Objective,
    pub budget: EntropyBudget,
    pub tol: Tolerances,
    pub qois: Vec<(String, Polynomial)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub status: String,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
}

impl SolverRecord {
    pub fn from_solution(s: &SdpSolution) -> Self {
        SolverRecord {
            status: s.status.as_str().to_string(),
            iterations: s.iterations,
            primal_objective: s.primal_objective,
            dual_objective: s.dual_objective,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            relative_gap: s.relative_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub k: u32,
    pub solver: SolverRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Error metrics of one run against the analytic solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_g: Option<f64>,
    /// `[xi, e_p(xi)]` pairs.
    pub e_p: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the written `config.toml`.
    pub config_hash: String,
    pub problem: String,
    pub d: u32,
    pub objective: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorRecord>,
    pub completions: Vec<CompletionRecord>,
    pub stages: Vec<StageRecord>,
    /// Every emitted file except the manifest itself.
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        toml::from_str(&text).map_err(|e| HarnessError::Read {
            path,
            message: e.message().to_string(),
        })
    }

    /// Names of listed files whose content no longer matches the digest.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            let path = dir.join(&f.name);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if sha256_hex(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
                bad.push(f.name.clone());
            }
        }
        Ok(bad)
    }

    /// Sweep-table row assembled from the stored records.
    pub fn table_row(&self) -> TableRow {
        let mut row = TableRow {
            d: self.d,
            status: match (&self.failure, &self.solver) {
                (Some(_), _) => "failed".to_string(),
                (None, Some(s)) => s.status.clone(),
                (None, None) => "unknown".to_string(),
            },
            primal_residual: f64::NAN,
            relative_gap: f64::NAN,
            ..Default::default()
        };
        if let Some(s) = &self.solver {
            row.iterations = s.iterations;
            row.primal_residual = s.primal_residual;
            row.relative_gap = s.relative_gap;
        }
        if let Some(e) = &self.errors {
            row.e_g = e.e_g;
            row.e_p = e.e_p.iter().map(|&[xi, v]| (xi, v)).collect();
            row.e_s = e.e_s;
        }
        row
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Emitter {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileRecord {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

fn stage_err(stage: &str) -> impl FnOnce(String) -> HarnessError + '_ {
    move |message| HarnessError::Stage {
        stage: stage.to_string(),
        message,
    }
}

fn timed<T>(manifest: &mut RunManifest, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    manifest.stages.push(StageRecord {
        name: name.to_string(),
        seconds: start.elapsed().as_secs_f64(),
        ok: out.is_ok(),
    });
    out
}

fn moments_csv(z: &MomentVector) -> Vec<u8> {
    let mut buf = Vec::new();
    z.write_csv(&mut buf).expect("writing to memory");
    buf
}

fn read_moments(path: &Path) -> Result<MomentVector> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    MomentVector::read_csv(std::io::BufReader::new(file)).map_err(|e| HarnessError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Grid values as CSV: one column per axis, then `value_name`.
pub fn grid_csv(names: &[String], value_name: &str, grid: &ReconstructionGrid, vals: &[f64]) -> String {
    let mut s = names.join(",");
    s.push(',');
    s.push_str(value_name);
    s.push('\n');
    for (node, v) in grid.nodes().zip(vals) {
        for c in &node[..names.len()] {
            write!(s, "{c},").unwrap();
        }
        writeln!(s, "{v}").unwrap();
    }
    s
}

/// Node axes `t, x1..xn` with `fine` points each.
fn tx_axes(dom: &BoxDomain, fine: usize) -> Vec<Vec<f64>> {
    let mut axes = vec![linspace(0.0, dom.t_end, fine)];
    axes.extend(dom.space.iter().map(|iv| linspace(iv.lo, iv.hi, fine)));
    axes
}

fn tx_names(n: usize) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    if n == 1 {
        names.push("x".into());
    } else {
        names.extend((1..=n).map(|i| format!("x{i}")));
    }
    names
}

fn slice_file(p: usize, xi: f64) -> String {
    if p == 0 {
        "reconstruction.csv".to_string()
    } else {
        format!("reconstruction_xi_{xi}.csv")
    }
}

/// Post-processing results shared between stages of one run.
#[derive(Default)]
struct Cache {
    model: Option<ChristoffelModel>,
    slices: BTreeMap<usize, (ReconstructionGrid, Vec<f64>)>,
    statistic: Option<(ReconstructionGrid, Vec<f64>)>,
}

fn christoffel<'a>(
    cache: &'a mut Cache,
    config: &RunConfig,
    dom: &BoxDomain,
    nu: &MomentVector,
) -> std::result::Result<&'a ChristoffelModel, String> {
    if cache.model.is_none() {
        let m = ChristoffelModel::build(nu, &dom.occupation_intervals(), config.d, config.beta)
            .map_err(|e| e.to_string())?;
        cache.model = Some(m);
    }
    Ok(cache.model.as_ref().unwrap())
}

fn slice(
    cache: &mut Cache,
    config: &RunConfig,
    dom: &BoxDomain,
    nu: &MomentVector,
    e: usize,
) -> std::result::Result<(), String> {
    if cache.slices.contains_key(&e) {
        return Ok(());
    }
    let xi = config.grids.parametric_xi.get(e).copied().unwrap_or(0.0);
    let mut axes = tx_axes(dom, config.grids.fine_nodes);
    axes.extend((0..dom.p()).map(|_| vec![xi]));
    let u = dom.u_range();
    let grid = ReconstructionGrid::from_axes(axes, linspace(u.lo, u.hi, config.grids.value_nodes))
        .map_err(|e| e.to_string())?;
    let model = christoffel(cache, config, dom, nu)?;
    let vals = postproc::reconstruct(model, &grid).map_err(|e| e.to_string())?;
    cache.slices.insert(e, (grid, vals));
    Ok(())
}

fn complete(
    config: &RunConfig,
    plan: &Plan,
    nu: &MomentVector,
    k: u32,
) -> std::result::Result<(postproc::Completion, ReconstructionGrid, Vec<f64>), String> {
    let dom = &plan.spec.domains;
    let c = postproc::complete_moments(nu, dom, k, config.d, plan.tol).map_err(|e| e.to_string())?;
    if !c.solution.status.is_solved() {
        return Err(format!(
            "completion k={k} ended with status {}",
            c.solution.status.as_str()
        ));
    }
    let (grid, vals) = postproc::reconstruct_statistic(
        &c,
        config.d,
        config.beta,
        tx_axes(dom, config.grids.fine_nodes),
        config.grids.value_nodes,
    )
    .map_err(|e| e.to_string())?;
    Ok((c, grid, vals))
}

/// Error metrics against the analytic solution, reusing cached grids.
fn error_record(
    cache: &mut Cache,
    config: &RunConfig,
    plan: &Plan,
    sol: &AnalyticSolution,
    nu: &MomentVector,
) -> std::result::Result<ErrorRecord, String> {
    let dom = &plan.spec.domains;
    let d = config.d;
    let sets = config.grids.test_sets();
    let u = dom.u_range();
    let vals = linspace(u.lo, u.hi, config.grids.value_nodes);
    let global = ReconstructionGrid::from_axes(sets.global_axes(dom), vals).map_err(|e| e.to_string())?;
    let model = christoffel(cache, config, dom, nu)?;
    let approx = postproc::reconstruct(model, &global).map_err(|e| e.to_string())?;
    let e_g = error_global(&approx, &global, sol, d, &sets).value;
    let mut e_p = Vec::new();
    for (e, &xi) in config.grids.parametric_xi.iter().enumerate() {
        slice(cache, config, dom, nu, e)?;
        let (grid, vals) = &cache.slices[&e];
        e_p.push([xi, error_parametric(vals, grid, sol, d, &sets).value]);
    }
    if cache.statistic.is_none() {
        let (_, grid, vals) = complete(config, plan, nu, 1)?;
        cache.statistic = Some((grid, vals));
    }
    let (grid, vals) = cache.statistic.as_ref().unwrap();
    let e_s = error_statistic(vals, grid, sol, d, &sets).value;
    Ok(ErrorRecord {
        e_g: Some(e_g),
        e_p,
        e_s: Some(e_s),
    })
}

/// Runs the configured pipeline and writes all artifacts.
///
/// The configuration is validated before anything is written. A failing
/// stage is recorded in the manifest, which is still written, and returned
/// as the error.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    let plan = config.validate()?;
    execute(config, &plan)
}

fn execute(config: &RunConfig, plan: &Plan) -> Result<RunManifest> {
    let mut em = Emitter::new(&config.output)?;
    let config_text = config.to_toml();
    em.emit(CONFIG_FILE, config_text.as_bytes())?;
    let mut manifest = RunManifest {
        config_hash: sha256_hex(config_text.as_bytes()),
        problem: plan.spec.name.clone(),
        d: config.d,
        objective: plan.objective.name().to_string(),
        failure: None,
        solver: None,
        errors: None,
        completions: Vec::new(),
        stages: Vec::new(),
        files: Vec::new(),
    };
    let result = pipeline(config, plan, &mut em, &mut manifest);
    if let Err(e) = &result {
        manifest.failure = Some(e.to_string());
    }
    manifest.files = em.files.clone();
    let text = toml::to_string(&manifest).expect("manifest serializes");
    let path = config.output.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(io_err(&path))?;
    result.map(|()| manifest)
}

fn pipeline(config: &RunConfig, plan: &Plan, em: &mut Emitter, manifest: &mut RunManifest) -> Result<()> {
    let d = config.d;
    let dom = plan.spec.domains.clone();
    let relax = timed(manifest, "assemble", || {
        let mut ctx = GmpContext::new(&plan.spec, d, plan.budget).map_err(|e| stage_err("assemble")(e.to_string()))?;
        ctx.objective = plan.objective;
        let forms = ctx
            .all_constraints()
            .map_err(|e| stage_err("assemble")(e.to_string()))?;
        let relax = ctx.build_relaxation(&forms);
        Ok((ctx, relax))
    })?;
    let (ctx, relax) = relax;
    info!(
        "{} d={d}: {} variables, {} constraints, {} blocks",
        plan.spec.name,
        relax.problem.num_vars,
        relax.problem.constraints.len(),
        relax.problem.blocks.len()
    );

    let sol = timed(manifest, "solve", || {
        sdp::solve(&relax.problem, plan.tol).map_err(|e| stage_err("solve")(e.to_string()))
    })?;
    manifest.solver = Some(SolverRecord::from_solution(&sol));
    if !sol.status.is_solved() {
        let e = stage_err("solve")(format!("solver status {}", sol.status.as_str()));
        manifest.stages.last_mut().unwrap().ok = false;
        return Err(e);
    }
    let (nu, nu_t) = ctx.decode(&sol.x);
    timed(manifest, "moments", || {
        em.emit(NU_FILE, &moments_csv(&nu))?;
        em.emit(NU_T_FILE, &moments_csv(&nu_t))
    })?;

    let mut cache = Cache::default();
    let names = tx_names(dom.n());

    if config.wants(Stage::Reconstruct) {
        timed(manifest, "reconstruct", || {
            let xis: Vec<f64> = if dom.p() == 0 {
                vec![0.0]
            } else {
                config.grids.parametric_xi.clone()
            };
            for (e, &xi) in xis.iter().enumerate() {
                slice(&mut cache, config, &dom, &nu, e).map_err(stage_err("reconstruct"))?;
                let (grid, vals) = &cache.slices[&e];
                em.emit(
                    &slice_file(dom.p(), xi),
                    grid_csv(&names, "u_tilde", grid, vals).as_bytes(),
                )?;
            }
            Ok(())
        })?;
    }

    if config.wants(Stage::Qoi) {
        timed(manifest, "qoi", || {
            let mut s = String::from("name,value\n");
            for (name, g) in &plan.qois {
                let v = postproc::expectation_qoi(&nu, g).map_err(|e| stage_err("qoi")(e.to_string()))?;
                writeln!(s, "{name},{v:.16e}").unwrap();
            }
            em.emit("qoi.csv", s.as_bytes())
        })?;
    }

    if config.wants(Stage::Complete) {
        let mut ks = config.complete_k.clone();
        ks.sort_unstable();
        ks.dedup();
        let mut records = Vec::new();
        let res = timed(manifest, "complete", || {
            for &k in &ks {
                let (c, grid, vals) = complete(config, plan, &nu, k).map_err(stage_err("complete"))?;
                records.push(CompletionRecord {
                    k,
                    solver: SolverRecord::from_solution(&c.solution),
                });
                em.emit(&format!("completion_k{k}.csv"), &moments_csv(&c.omega))?;
                em.emit(
                    &format!("statistic_k{k}.csv"),
                    grid_csv(&names, "f_tilde", &grid, &vals).as_bytes(),
                )?;
                if k == 1 {
                    cache.statistic = Some((grid, vals));
                }
            }
            Ok(())
        });
        manifest.completions = records;
        res?;
    }

    if config.wants(Stage::Tables) {
        if let Some(ex) = plan.example {
            let errors = timed(manifest, "tables", || {
                error_record(&mut cache, config, plan, &ex.solution(), &nu).map_err(stage_err("tables"))
            })?;
            manifest.errors = Some(errors);
            let table = ErrorTable {
                example: ex.id().to_string(),
                rows: vec![manifest.table_row()],
            };
            em.emit("errors.csv", table.to_csv().as_bytes())?;
            em.emit("errors.txt", table.to_text().as_bytes())?;
        } else {
            info!("no analytic solution for `{}`; skipping error tables", plan.spec.name);
        }
    }
    Ok(())
}

/// Result of a sweep over relaxation orders.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub table: ErrorTable,
    /// `(d, message)` for every failed order.
    pub failures: Vec<(u32, String)>,
}

/// One run per `d` in `base.output/d{d}`, in parallel, plus `sweep.csv` and
/// `sweep.txt` in `base.output`. Failed orders become `failed` rows.
pub fn sweep(base: &RunConfig, d_list: &[u32]) -> Result<SweepReport> {
    if d_list.is_empty() {
        return Err(config_err("sweep needs at least one d"));
    }
    if d_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_err(format!("d list {d_list:?} must be strictly ascending")));
    }
    let configs: Vec<RunConfig> = d_list
        .iter()
        .map(|&d| RunConfig {
            d,
            output: base.output.join(format!("d{d}")),
            ..base.clone()
        })
        .collect();
    let plans = configs.iter().map(RunConfig::validate).collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<Result<RunManifest>> = configs
        .par_iter()
        .zip(plans.par_iter())
        .map(|(c, p)| execute(c, p))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cfg, out) in configs.iter().zip(outcomes) {
        match out {
            Ok(m) => rows.push(m.table_row()),
            Err(e) => {
                failures.push((cfg.d, e.to_string()));
                let row = RunManifest::load(&cfg.output)
                    .map(|m| m.table_row())
                    .unwrap_or_else(|_| TableRow {
                        d: cfg.d,
                        status: "failed".into(),
                        primal_residual: f64::NAN,
                        relative_gap: f64::NAN,
                        ..Default::default()
                    });
                rows.push(row);
            }
        }
    }
    let table = ErrorTable {
        example: plans[0].spec.name.clone(),
        rows,
    };
    for (name, text) in [("sweep.csv", table.to_csv()), ("sweep.txt", table.to_text())] {
        let path = base.output.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(SweepReport { table, failures })
}

/// Recomputes the error-table row of a finished run from its stored
/// `config.toml`, `moments_nu.csv` and manifest.
pub fn rerender_row(dir: &Path) -> Result<TableRow> {
    let mut config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    config.output = dir.to_path_buf();
    let plan = config.validate()?;
    let manifest = RunManifest::load(dir)?;
    let mut row = RunManifest {
        errors: None,
        ..manifest
    }
    .table_row();
    if let Some(ex) = plan.example {
        let nu = read_moments(&dir.join(NU_FILE))?;
        let mut cache = Cache::default();
        let e = error_record(&mut cache, &config, &plan, &ex.solution(), &nu).map_err(stage_err("tables"))?;
        row.e_g = e.e_g;
        row.e_p = e.e_p.iter().map(|&[xi, v]| (xi, v)).collect();
        row.e_s = e.e_s;
    }
    Ok(row)
}

/// Consolidated table over several run directories, sorted by `d`.
pub fn rerender_tables(dirs: &[PathBuf]) -> Result<ErrorTable> {
    if dirs.is_empty() {
        return Err(config_err("no run directories given"));
    }
    let mut rows = dirs.iter().map(|d| rerender_row(d)).collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.d);
    let name = RunManifest::load(&dirs[0])?.problem;
    Ok(ErrorTable { example: name, rows })
}

/// Oracle moments of a built-in example up to `degree`, in original coordinates.
pub fn oracle_moments(example: Example, degree: u32, terminal: bool) -> Result<MomentVector> {
    let spec = example.spec().validate()?;
    let sol = example.solution();
    Ok(if terminal {
        bench::oracle_terminal_moments(&sol, &spec.domains, degree)
    } else {
        bench::oracle_moments(&sol, &spec.domains, degree)
    })
}

pub fn write_moments(z: &MomentVector, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, moments_csv(z)).map_err(io_err(path))
}
