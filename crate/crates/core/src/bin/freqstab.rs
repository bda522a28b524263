use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use freqstab::bench::compare_methods;
use freqstab::config::RunConfig;
use freqstab::criteria::label_dataset;
use freqstab::io::{self, LabeledRow, WriteOptions};
use freqstab::ode::{integrate, IntegrateOptions};
use freqstab::sampler::{augment, generate_initial, DirectionPolicy, Rule};
use freqstab::sensitivity::{extract_gradients, finite_diff_gradients, Direction, Epsilon, FdScheme};
use freqstab::{Error, GainVector, Result};

#[derive(Parser)]
#[command(name = "freqstab", version, about = "Labeled frequency-stability data for VSM load-frequency control")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (defaults to the shipped one).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input CSV of gains (`K11,K12,K21,K22`).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// `flip` or `margin:D`.
    #[arg(long, global = true)]
    rule: Option<Rule>,
    /// `auto`, `stabilize` or `destabilize`.
    #[arg(long, global = true)]
    direction: Option<DirectionPolicy>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    /// Finite-difference step; keeps the configured relative/absolute kind.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Omit the `# generated_unix=` header line.
    #[arg(long, global = true)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Forward,
    Central,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one gain vector and write its trajectory.
    Simulate {
        /// Gains as `K11,K12,K21,K22`; otherwise the first input row, else zero.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        /// Include the eight sensitivity columns.
        #[arg(long)]
        tangents: bool,
    },
    /// Label every gain vector of the input.
    Label,
    /// Tangent gradients against finite differences for one gain vector.
    Grad {
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
    },
    /// Walk seeds (input, or drawn from the configured normal) to the boundary.
    Sample,
    /// Time, memory and accuracy of the configured gradient methods.
    Bench,
    /// Draw normal seeds.
    Gen {
        /// Number of seeds; defaults to the configured count.
        #[arg(long)]
        count: Option<usize>,
    },
}

fn parse_theta(s: &str) -> Result<GainVector> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::Config(format!("--theta needs 4 comma-separated values, got `{s}`")));
    }
    let mut a = [0.0; 4];
    for (v, p) in a.iter_mut().zip(&parts) {
        *v = p
            .parse()
            .map_err(|_| Error::Config(format!("--theta: `{p}` is not a number")))?;
    }
    Ok(GainVector::from_array(a))
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let s = &mut cfg.sampler;
    if let Some(v) = c.seed {
        s.seed = v;
    }
    if let Some(v) = c.alpha {
        s.alpha = v;
    }
    if let Some(v) = c.max_iter {
        s.max_iter = v;
    }
    if let Some(v) = c.batch_size {
        s.batch_size = v;
        cfg.bench.batch_size = v;
    }
    if let Some(v) = c.rule {
        cfg.sampler.rule = v;
    }
    if let Some(v) = c.direction {
        cfg.sampler.direction = v;
    }
    if let Some(v) = c.dt {
        cfg.solver.dt = v;
    }
    if let Some(v) = c.horizon {
        cfg.solver.horizon_t = v;
    }
    if let Some(v) = c.scheme {
        cfg.grad.scheme = match v {
            SchemeArg::Forward => FdScheme::Forward,
            SchemeArg::Central => FdScheme::Central,
        };
    }
    if let Some(v) = c.epsilon {
        cfg.grad.epsilon = match cfg.grad.epsilon {
            Epsilon::Relative(_) => Epsilon::Relative(v),
            Epsilon::Absolute(_) => Epsilon::Absolute(v),
        };
    }
    if c.no_timestamp {
        cfg.output.timestamp = false;
    }
    if c.output.is_some() {
        cfg.output.path = c.output.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => io::write_atomic(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                })
        }
    }
}

fn single_theta(theta: Option<&str>, input: Option<&Path>) -> Result<GainVector> {
    if let Some(s) = theta {
        return parse_theta(s);
    }
    match input {
        Some(path) => io::read_thetas(path)?
            .first()
            .copied()
            .ok_or_else(|| Error::Degenerate(format!("{} has no rows", path.display()))),
        None => Ok(GainVector::ZERO),
    }
}

fn require_input(input: Option<&Path>) -> Result<&Path> {
    input.ok_or_else(|| Error::Config("--input is required".into()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let p = cfg.system_params();
    let opts = WriteOptions {
        timestamp: cfg.output.timestamp,
    };
    let input = cli.common.input.as_deref();
    let out = cfg.output.path.as_deref();

    match cli.command {
        Command::Simulate { theta, tangents } => {
            let theta = single_theta(theta.as_deref(), input)?;
            let tangents = tangents || cfg.output.tangents;
            let iopts = IntegrateOptions {
                with_tangents: tangents,
                ..IntegrateOptions::states_only()
            }
            .with_integrator(cfg.solver.integrator);
            let traj = integrate(&theta, &p, &iopts)?
                .into_trajectory()
                .expect("full storage");
            emit(out, &io::trajectory_to_csv(&traj, tangents, opts)?)
        }
        Command::Label => {
            let thetas = io::read_thetas(require_input(input)?)?;
            let outcomes = label_dataset(&thetas, &p, cfg.criteria);
            let rows: Vec<LabeledRow> = thetas
                .iter()
                .zip(&outcomes)
                .map(|(t, o)| LabeledRow::from_outcome(*t, o))
                .collect();
            emit(out, &io::labeled_to_csv(&rows, opts))
        }
        Command::Grad { theta } => {
            let theta = single_theta(theta.as_deref(), input)?;
            let direction = Direction::Destabilize;
            let summary = integrate(&theta, &p, &IntegrateOptions::augmented().streaming())?.summary();
            let fmad = extract_gradients(&summary, direction)?;
            let fd = finite_diff_gradients(&theta, &p, cfg.grad.epsilon, cfg.grad.scheme, direction)?;
            emit(out, &io::grad_table_to_csv(&fmad, &fd.gradients, opts))
        }
        Command::Sample => {
            let seeds = match input {
                Some(path) => io::read_thetas(path)?,
                None => {
                    let init = &cfg.sampler.initial;
                    generate_initial(init.n, init.mean, init.std, cfg.sampler.seed, &p)?.thetas
                }
            };
            let ds = augment(&seeds, &p, &cfg.sampler_config())?;
            eprintln!(
                "{{\"seeds\":{},\"converged_fraction\":{}}}",
                ds.records.len(),
                ds.converged_fraction()
            );
            match out {
                Some(path) => io::write_dataset(path, &ds, opts),
                None => emit(None, &io::dataset_to_csv(&ds, opts)),
            }
        }
        Command::Bench => {
            let thetas = match input {
                Some(path) => io::read_thetas(path)?,
                None => {
                    let init = &cfg.sampler.initial;
                    generate_initial(cfg.bench.batch_size, init.mean, init.std, cfg.sampler.seed, &p)?.thetas
                }
            };
            let report = compare_methods(
                &thetas,
                &p,
                &cfg.bench.methods,
                cfg.bench.reference,
                cfg.bench.runs,
                Direction::Destabilize,
            )?;
            emit(out, &io::bench_to_csv(&report, opts))
        }
        Command::Gen { count } => {
            let init = &cfg.sampler.initial;
            let n = count.unwrap_or(init.n);
            let draw = generate_initial(n, init.mean, init.std, cfg.sampler.seed, &p)?;
            emit(out, &io::thetas_to_csv(&draw.thetas, opts))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
