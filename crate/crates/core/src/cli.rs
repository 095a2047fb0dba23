//! Command-line front end: `train`, `propagate` and `experiment`.
//!
//! Exit codes: 0 on success, 2 for invalid input or validation failures, 3
//! for numerical failures. `--threads` (or `BLNET_THREADS`) caps the worker
//! pool; outputs do not depend on it.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::emulator::io::read_training_csv;
use crate::emulator::{maximin_lhs, train, Design, FitConfig, RegressionBasis};
use crate::error::{Error, Result};
use crate::network::{load_models, Method, Network, NetworkSpec};
use crate::testbed::{run_experiment, ExperimentConfig, ExperimentName};
use crate::uis::{InputDistribution, SamplingPolicy};

#[derive(Debug, Parser)]
#[command(name = "blnet", version, about = "Bayes linear emulation of simulator networks")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "BLNET_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an emulator from a CSV of runs (columns x1..xp, y1..yq).
    Train(TrainArgs),
    /// Propagate root inputs through a network.
    Propagate(PropagateArgs),
    /// Run a reference experiment and write its diagnostics.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisArg {
    Constant,
    Linear,
}

impl From<BasisArg> for RegressionBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Constant => RegressionBasis::Constant,
            BasisArg::Linear => RegressionBasis::Linear,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Fixed correlation lengths in scaled units (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-8)]
    pub nugget: f64,
    #[arg(long, default_value_t = 0.05)]
    pub theta_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub theta_max: f64,
}

impl FitArgs {
    fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            theta_bounds: (self.theta_min, self.theta_max),
            nugget: self.nugget,
            theta: self.theta.clone(),
            seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = BasisArg::Linear)]
    pub basis: BasisArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Native input bounds as `lo:hi,lo:hi,...`; defaults to the data range.
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    De,
    Uis,
    Uible,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistArg {
    Normal,
    Uniform,
}

#[derive(Debug, Args, Serialize)]
pub struct PropagateArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// CSV of root inputs with a header row, one point per row.
    #[arg(long)]
    pub z_file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// UIS draws per node evaluation.
    #[arg(long, default_value_t = 100)]
    pub v: usize,
    #[arg(long, value_enum, default_value_t = DistArg::Normal)]
    pub dist: DistArg,
    #[arg(long)]
    pub antithetic: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training runs for direct emulation (default 10 per root input).
    #[arg(long)]
    pub de_runs: Option<usize>,
    #[arg(long, value_enum, default_value_t = BasisArg::Linear)]
    pub basis: BasisArg,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub v: usize,
    #[arg(long)]
    pub no_svg: bool,
}

/// Parses arguments, runs the command and returns the process exit code.
/// Messages go to stdout, errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(message) => {
            print!("{message}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command on a pool of `--threads` workers and returns the
/// text to print.
pub fn run(cli: &Cli) -> Result<String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Propagate(a) => cmd_propagate(a),
        Command::Experiment(a) => cmd_experiment(a),
    })
}

fn parse_bounds(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|pair| {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("bound `{pair}` is not lo:hi"))
            })?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("`{s}` is not a number")))
            };
            Ok((parse(lo)?, parse(hi)?))
        })
        .collect()
}

pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let data = read_training_csv(&args.data)?;
    let bounds = match &args.bounds {
        Some(b) => parse_bounds(b)?,
        None => data.data_bounds(),
    };
    let design = Design::from_native(&data.inputs, bounds)?;
    let em = train(design, data.outputs, args.basis.into(), &args.fit.config(args.seed))?;
    em.save(&args.out)?;
    let h = em.hyperparameters();
    let mut s = String::new();
    if let Some(log) = em.fit_log() {
        let _ = writeln!(s, "log-likelihood {}", log.log_likelihood);
    }
    let _ = writeln!(s, "theta {:?}", h.theta);
    let _ = writeln!(s, "sigma2 {:?}", h.sigma2);
    let _ = writeln!(s, "wrote {}", args.out.display());
    Ok(s)
}

fn read_points(path: &Path, p: usize) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::InvalidArgument(format!("cannot read {}: {e}", path.display())),
            _ => Error::Csv(e),
        })?;
    let width = rdr.headers()?.len();
    if width != p {
        return Err(Error::DimensionMismatch {
            context: "z-file columns",
            expected: p,
            actual: width,
        });
    }
    let mut values = Vec::new();
    for record in rdr.records() {
        for field in record?.iter() {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("{field:?} is not a number")))?,
            );
        }
    }
    if values.is_empty() {
        return Err(Error::Empty("z-file"));
    }
    Ok(DMatrix::from_row_slice(values.len() / p, p, &values))
}

#[derive(Serialize)]
struct PropagateConfig<'a> {
    command: &'static str,
    args: &'a PropagateArgs,
    method: Option<Method>,
    fit: FitConfig,
    de_runs: Option<usize>,
}

pub fn cmd_propagate(args: &PropagateArgs) -> Result<String> {
    let spec = NetworkSpec::load(&args.network)?;
    let base = args.network.parent().unwrap_or(Path::new("."));
    let models = load_models(&spec, base)?;
    let net = Network::new(spec, models)?;
    let spec = net.spec();
    let zs = read_points(&args.z_file, spec.root_dim)?;
    if let Some(bounds) = &spec.root_bounds {
        for i in 0..zs.nrows() {
            for (r, (lo, hi)) in bounds.iter().enumerate() {
                let z = zs[(i, r)];
                if z < *lo || z > *hi {
                    return Err(Error::InvalidArgument(format!(
                        "z row {} coordinate {} = {z} is outside the root bounds [{lo}, {hi}]",
                        i + 1,
                        r + 1
                    )));
                }
            }
        }
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let fit = args.fit.config(args.seed);
    let q = spec.terminal_dim();
    let p = spec.root_dim;

    let mut header: Vec<String> = (1..=p).map(|r| format!("z{r}")).collect();
    let suffix = |name: &str, k: usize| if q == 1 { name.to_string() } else { format!("{name}{k}") };
    for k in 1..=q {
        header.push(suffix("mean", k));
        header.push(suffix("variance", k));
    }
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(zs.nrows());
    let mut method_used = None;
    let mut de_runs = None;
    match args.method {
        MethodArg::De => {
            let bounds = spec.root_bounds.clone().ok_or_else(|| {
                Error::InvalidArgument("direct emulation needs root_bounds in the network file".into())
            })?;
            let n = args.de_runs.unwrap_or(10 * p);
            de_runs = Some(n);
            let design = maximin_lhs(n, p, args.seed, 2000)?.with_bounds(bounds)?;
            let em = net.direct_emulate(design, args.basis.into(), &fit)?;
            em.save(&args.out.join("de_emulator.json"))?;
            for i in 0..zs.nrows() {
                let z: Vec<f64> = zs.row(i).iter().cloned().collect();
                let b = em.predict(&z)?;
                let mut row: Vec<String> = z.iter().map(|v| format!("{v}")).collect();
                for k in 0..q {
                    row.push(format!("{}", b.mean[k]));
                    row.push(format!("{}", b.covariance[(k, k)]));
                }
                rows.push(row);
            }
        }
        MethodArg::Uis | MethodArg::Uible => {
            let method = if args.method == MethodArg::Uis {
                Method::Uis(SamplingPolicy {
                    distribution: match args.dist {
                        DistArg::Normal => InputDistribution::Normal,
                        DistArg::Uniform => InputDistribution::Uniform,
                    },
                    v: args.v,
                    seed: args.seed,
                    antithetic: args.antithetic,
                })
            } else {
                Method::Uible
            };
            method_used = Some(method);
            let uis = matches!(method, Method::Uis(_));
            if uis {
                for k in 1..=q {
                    header.push(suffix("var_from_input", k));
                    header.push(suffix("var_from_emulator", k));
                }
            }
            header.push("flags".into());
            let props = net.propagate_many(&zs, &method)?;
            for (i, prop) in props.iter().enumerate() {
                let mut row: Vec<String> = zs.row(i).iter().map(|v| format!("{v}")).collect();
                for k in 0..q {
                    row.push(format!("{}", prop.terminal.mean[k]));
                    row.push(format!("{}", prop.terminal.covariance[(k, k)]));
                }
                if uis {
                    let mut k = 0;
                    for &t in &spec.terminal {
                        let b = &prop.nodes[t - 1];
                        for j in 0..b.dim() {
                            let input = prop.var_from_input[t - 1]
                                .as_ref()
                                .map_or(0.0, |m| m[(j, j)]);
                            let total = prop.terminal.covariance[(k, k)];
                            row.push(format!("{input}"));
                            row.push(format!("{}", total - input));
                            k += 1;
                        }
                    }
                }
                let mut flags = Vec::new();
                flags.extend(prop.extrapolated.iter().map(|n| format!("extrapolated:{n}")));
                flags.extend(prop.sampled_exact.iter().map(|n| format!("sampled_exact:{n}")));
                flags.extend(prop.fell_back.iter().map(|n| format!("normal_fallback:{n}")));
                row.push(flags.join(";"));
                rows.push(row);
            }
        }
    }

    let path = args.out.join("predictions.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(&header)?;
    for row in &rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let config = PropagateConfig {
        command: "propagate",
        args,
        method: method_used,
        fit,
        de_runs,
    };
    let config_path = args.out.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config)? + "\n")
        .map_err(|e| Error::io(&config_path, e))?;
    Ok(format!("wrote {} predictions to {}\n", rows.len(), path.display()))
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<String> {
    let name: ExperimentName = args.name.parse()?;
    let mut config = ExperimentConfig::new(name, args.seed);
    config.v = args.v;
    config.svg = !args.no_svg;
    let result = run_experiment(&config)?;
    result.write(&args.out)?;
    Ok(format!(
        "experiment {} (seed {})\n{}wrote {}\n",
        name.as_str(),
        args.seed,
        result.table(),
        args.out.display()
    ))
}
