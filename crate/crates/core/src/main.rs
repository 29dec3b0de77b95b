use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvsos::bench::Example;
use mvsos::harness::{self, HarnessError, RunConfig, Stage};

#[derive(Parser)]
#[command(
    name = "mvsos",
    version,
    about = "Moment-SOS solver for parametric scalar conservation laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one relaxation and write all artifacts.
    Run(ConfigArgs),
    /// One run per order, with a consolidated table.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Relaxation orders, ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        ds: Vec<u32>,
    },
    /// Recompute error tables from stored run directories.
    Tables {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write oracle moments of a built-in example.
    Oracle {
        #[arg(long)]
        example: String,
        /// Maximal total degree.
        #[arg(long)]
        degree: u32,
        /// Terminal-time measure instead of the occupation measure.
        #[arg(long)]
        terminal: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Flags override the values read from `--config`.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in example id (burgers-ic, burgers-flux).
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    beta: Option<f64>,
    /// trace-occupation or trace-all.
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated subset of reconstruct, qoi, complete, tables.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    stages: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    complete_k: Option<Vec<u32>>,
    #[arg(long)]
    feas: Option<f64>,
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    global_nodes: Option<usize>,
    #[arg(long)]
    global_xi: Option<usize>,
    #[arg(long)]
    fine_nodes: Option<usize>,
    #[arg(long)]
    value_nodes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    parametric_xi: Option<Vec<f64>>,
    #[arg(long)]
    entropy_reserve: Option<u32>,
    #[arg(long)]
    entropy_max_pairs: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self, fallback_d: Option<u32>) -> Result<RunConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let id = self
                    .example
                    .as_deref()
                    .ok_or_else(|| HarnessError::Config("give --config or --example".into()))?;
                let d = self
                    .d
                    .or(fallback_d)
                    .ok_or_else(|| HarnessError::Config("missing --d".into()))?;
                RunConfig::for_example(id, d)
            }
        };
        if let Some(id) = &self.example {
            c.example = Some(id.clone());
            c.problem = None;
        }
        if let Some(d) = self.d {
            c.d = d;
        }
        if self.beta.is_some() {
            c.beta = self.beta;
        }
        if let Some(o) = &self.objective {
            c.objective = o.clone();
        }
        if let Some(o) = &self.output {
            c.output = o.clone();
        }
        if let Some(list) = &self.stages {
            c.stages = list
                .iter()
                .map(|s| Stage::from_name(s).ok_or_else(|| HarnessError::Config(format!("unknown stage `{s}`"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(k) = &self.complete_k {
            c.complete_k = k.clone();
        }
        let t = &mut c.tolerances;
        t.feas = self.feas.unwrap_or(t.feas);
        t.gap = self.gap.unwrap_or(t.gap);
        t.max_iter = self.max_iter.unwrap_or(t.max_iter);
        let g = &mut c.grids;
        g.global_nodes = self.global_nodes.unwrap_or(g.global_nodes);
        g.global_xi = self.global_xi.unwrap_or(g.global_xi);
        g.fine_nodes = self.fine_nodes.unwrap_or(g.fine_nodes);
        g.value_nodes = self.value_nodes.unwrap_or(g.value_nodes);
        if let Some(xi) = &self.parametric_xi {
            g.parametric_xi = xi.clone();
        }
        c.entropy.reserve = self.entropy_reserve.unwrap_or(c.entropy.reserve);
        if self.entropy_max_pairs.is_some() {
            c.entropy.max_pairs = self.entropy_max_pairs;
        }
        Ok(c)
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve(None)?;
            let m = harness::run(&config)?;
            if let Some(s) = &m.solver {
                println!(
                    "{} d={}: {} after {} iterations, objective {:.6e}",
                    m.problem, m.d, s.status, s.iterations, s.primal_objective
                );
            }
            println!("wrote {} files to {}", m.files.len() + 1, config.output.display());
            Ok(())
        }
        Command::Sweep { config, ds } => {
            let config = config.resolve(ds.first().copied())?;
            let report = harness::sweep(&config, &ds)?;
            print!("{}", report.table.to_text());
            for (d, msg) in &report.failures {
                eprintln!("d={d}: {msg}");
            }
            match report.failures.first() {
                None => Ok(()),
                Some((d, msg)) => Err(HarnessError::Stage {
                    stage: format!("sweep d={d}"),
                    message: msg.clone(),
                }),
            }
        }
        Command::Tables { dirs, csv } => {
            let table = harness::rerender_tables(&dirs)?;
            print!("{}", table.to_text());
            if let Some(path) = csv {
                std::fs::write(&path, table.to_csv()).map_err(|source| HarnessError::Io { path, source })?;
            }
            Ok(())
        }
        Command::Oracle {
            example,
            degree,
            terminal,
            output,
        } => {
            let ex = Example::from_id(&example)
                .ok_or_else(|| HarnessError::Config(format!("unknown example `{example}`")))?;
            let z = harness::oracle_moments(ex, degree, terminal)?;
            harness::write_moments(&z, &output)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
