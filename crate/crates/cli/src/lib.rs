//! The `synq` command line: `simulate`, `train` and `evaluate`.

pub mod plot;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use synq_core::checkpoint::Checkpoint;
use synq_core::config::RunConfig;
use synq_core::dynamics::RegimeKind;
use synq_core::evaluation::{
    run_evaluation, GreedyPolicy, RandomPolicy, SuppressionReport, TraceRecord, ZeroPolicy, REPORT_CSV_HEADER,
};
use synq_core::training::{derived_seed, train, RANDOM_POLICY_STREAM, TRAIN_LOG_HEADER};
use synq_core::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;

pub const TRACE_CSV_HEADER: &str = "step,time,mean_field,action,reward";
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(name = "synq", version, about = "Learned suppression of collective oscillations in coupled neuron ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Uncontrolled rollout; writes the mean-field trace.
    Simulate(SimulateArgs),
    /// Trains an agent; writes a checkpoint and the evaluation log.
    Train(TrainArgs),
    /// Uncontrolled phase followed by a controlled phase; writes report and trace.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file (`key = value` lines)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.dir`
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overrides `simulate.steps`
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overrides `train.steps`
    #[arg(long)]
    pub steps: Option<usize>,
    /// Checkpoint path [default: <out>/agent.ckpt]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Training log path [default: <out>/train_log.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum PolicyKind {
    #[default]
    Agent,
    Zero,
    Random,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trained checkpoint; required for `--policy agent`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyKind::Agent)]
    pub policy: PolicyKind,
    /// Overrides `eval.pre_steps`
    #[arg(long)]
    pub pre_steps: Option<usize>,
    /// Overrides `eval.post_steps`
    #[arg(long)]
    pub post_steps: Option<usize>,
    /// Overrides `eval.transient`
    #[arg(long)]
    pub transient: Option<usize>,
    /// Also write `plot.svg`
    #[arg(long)]
    pub plot: bool,
}

/// Failure of a command together with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::ConfigParse { .. } | Error::UnknownKey { .. } => EXIT_CONFIG,
        Error::NumericalDivergence { .. } => EXIT_DIVERGENCE,
        Error::CheckpointFormat(_) | Error::CheckpointVersion { .. } | Error::CheckpointMismatch(_) => EXIT_CHECKPOINT,
        _ => EXIT_USAGE,
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure { code: exit_code(&err), message: err.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

type CmdResult<T> = std::result::Result<T, Failure>;

fn resolve_config(common: &CommonArgs, fallback: Option<&RunConfig<f64>>) -> CmdResult<RunConfig<f64>> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => RunConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => Failure { code: EXIT_CONFIG, message: e.to_string() },
            other => other.into(),
        })?,
        (None, Some(cfg)) => cfg.clone(),
        (None, None) => RunConfig::parse("")?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_output(cfg: &RunConfig<f64>) -> Result<()> {
    write_file(&cfg.output_dir.join(CONFIG_ECHO), cfg.to_text())
}

pub fn trace_csv(trace: &[TraceRecord<f64>]) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in trace {
        writeln!(out, "{},{},{},{},{}", r.step, r.time, r.mean_field, r.action, r.reward).unwrap();
    }
    out
}

/// Zero-action rollout of `simulate.steps` steps. Returns the trace path.
pub fn simulate(args: &SimulateArgs) -> CmdResult<PathBuf> {
    let mut cfg = resolve_config(&args.common, None)?;
    if let Some(steps) = args.steps {
        cfg.simulate_steps = steps;
    }
    cfg.validate()?;
    let trace = synq_core::evaluation::rollout(&cfg.env, &mut ZeroPolicy, cfg.simulate_steps, cfg.seed)?;
    prepare_output(&cfg)?;
    let path = cfg.output_dir.join("trace.csv");
    write_file(&path, trace_csv(&trace))?;
    Ok(path)
}

pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

pub fn train_cmd(args: &TrainArgs, mut progress: impl FnMut(&str)) -> CmdResult<TrainOutput> {
    let mut cfg = resolve_config(&args.common, None)?;
    if let Some(steps) = args.steps {
        cfg.train.steps = steps;
    }
    cfg.validate()?;
    prepare_output(&cfg)?;
    let ckpt_path = args.checkpoint.clone().unwrap_or_else(|| cfg.output_dir.join("agent.ckpt"));
    let log_path = args.log.clone().unwrap_or_else(|| cfg.output_dir.join("train_log.csv"));
    let outcome = train(&cfg, cfg.train.steps, |row| progress(&row.csv_row()))?;
    let mut log = String::from(TRAIN_LOG_HEADER);
    log.push('\n');
    for row in &outcome.log {
        log.push_str(&row.csv_row());
        log.push('\n');
    }
    write_file(&log_path, log)?;
    write_file(&ckpt_path, outcome.checkpoint.to_bytes())?;
    Ok(TrainOutput { checkpoint: ckpt_path, log: log_path })
}

pub struct EvaluateOutput {
    pub report: SuppressionReport<f64>,
    pub seed: u64,
    pub regime: RegimeKind,
    pub dir: PathBuf,
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> CmdResult<EvaluateOutput> {
    let checkpoint = match &args.checkpoint {
        Some(path) => Some(Checkpoint::<f64>::load(path).map_err(|e| Failure { code: EXIT_CHECKPOINT, message: e.to_string() })?),
        None if args.policy == PolicyKind::Agent => return Err(usage("--policy agent needs --checkpoint")),
        None => None,
    };
    let mut cfg = resolve_config(&args.common, checkpoint.as_ref().map(|c| &c.config))?;
    let p = &mut cfg.eval;
    let overridden = args.pre_steps.is_some() || args.post_steps.is_some() || args.transient.is_some();
    p.pre_steps = args.pre_steps.unwrap_or(p.pre_steps);
    p.post_steps = args.post_steps.unwrap_or(p.post_steps);
    p.transient = args.transient.unwrap_or(p.transient);
    if overridden {
        p.measure_window = p.measure_window.min(p.pre_steps).min(p.post_steps.saturating_sub(p.transient));
    }
    cfg.validate()?;
    if let (Some(ck), PolicyKind::Agent) = (&checkpoint, args.policy) {
        ck.check_compatible(&cfg)?;
    }

    let (report, trace) = match args.policy {
        PolicyKind::Agent => {
            let agent = &checkpoint.as_ref().unwrap().agent;
            run_evaluation(&cfg.env, &mut GreedyPolicy::new(agent), &cfg.eval, cfg.seed)?
        }
        PolicyKind::Zero => run_evaluation(&cfg.env, &mut ZeroPolicy, &cfg.eval, cfg.seed)?,
        PolicyKind::Random => {
            let mut policy = RandomPolicy::new(cfg.env.a_max, derived_seed(cfg.seed, RANDOM_POLICY_STREAM));
            run_evaluation(&cfg.env, &mut policy, &cfg.eval, cfg.seed)?
        }
    };

    prepare_output(&cfg)?;
    let dir = cfg.output_dir.clone();
    let regime = cfg.env.ensemble.regime;
    write_file(&dir.join("trace.csv"), trace_csv(&trace))?;
    write_file(&dir.join("report.txt"), report.key_values(cfg.seed, regime))?;
    write_file(&dir.join("report.csv"), format!("{REPORT_CSV_HEADER}\n{}\n", report.csv_row(cfg.seed, regime)))?;
    if args.plot {
        write_file(&dir.join("plot.svg"), plot::render_svg(&trace, Some(cfg.eval.pre_steps)))?;
    }
    Ok(EvaluateOutput { report, seed: cfg.seed, regime, dir })
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|path| println!("wrote {}", path.display())),
        Command::Train(a) => train_cmd(a, |row| eprintln!("{row}")).map(|o| {
            println!("wrote {}", o.checkpoint.display());
            println!("wrote {}", o.log.display());
        }),
        Command::Evaluate(a) => evaluate_cmd(a).map(|o| {
            print!("{}", o.report.key_values(o.seed, o.regime));
            println!("wrote {}", o.dir.display());
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
