use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use demo_transfer::config::{ConfigError, Mode, RunConfig};
use demo_transfer::pipeline::{
    plan, run_pipeline, run_sweep, PipelineError, RunSummary, Services, Stage,
};

#[derive(Parser)]
#[command(
    name = "demo-transfer",
    version,
    about = "Synthesize in-context demonstrations by transfer from similar tasks"
)]
struct Cli {
    /// Use deterministic in-process services instead of HTTP endpoints.
    #[arg(long, global = true)]
    mock: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed task definitions and source demonstrations.
    Embed(Opts),
    /// Select source demonstrations for each target task.
    SampleSource(Opts),
    /// Rewrite the sampled demonstrations into each target task.
    Transfer(Opts),
    /// Verify transferred demonstrations.
    Verify(Opts),
    /// Select the final demonstration pool.
    SampleTarget(Opts),
    /// Answer the test questions.
    Infer(Opts),
    /// Score the answers.
    Eval(Opts),
    /// Every stage, resuming where possible.
    RunAll(Opts),
    /// Estimate the run's cost.
    Plan {
        #[command(flatten)]
        opts: Opts,
        /// Cost of one objective evaluation term.
        #[arg(long, default_value_t = 1.0)]
        c_theta: f64,
        /// Cost of one model call.
        #[arg(long, default_value_t = 1.0)]
        c_model: f64,
        /// Source demonstrations considered by the sampler; estimated from
        /// the corpus when omitted.
        #[arg(long)]
        source_pool: Option<u64>,
    },
    /// Expand the config's sweep lists into sibling runs.
    Sweep(Opts),
}

#[derive(Args, Clone)]
struct Opts {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    run_root: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    source_dir: Option<PathBuf>,
    /// Target task file; repeatable.
    #[arg(long = "target")]
    targets: Vec<PathBuf>,
    #[arg(long)]
    category_map: Option<PathBuf>,
    #[arg(long)]
    k_tasks: Option<usize>,
    #[arg(long)]
    n_source: Option<usize>,
    #[arg(long)]
    n_target: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    max_instances: Option<usize>,
    #[arg(long)]
    similarity_rank: Option<usize>,
    #[arg(long)]
    random_source: bool,
    #[arg(long)]
    skip_verify: bool,
    #[arg(long)]
    skip_target_sample: bool,
}

impl Opts {
    fn config(&self) -> Result<RunConfig, ConfigError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set!(
            name => c.name,
            run_root => c.run_root,
            seed => c.seed,
            mode => c.mode,
            source_dir => c.corpus.source_dir,
            k_tasks => c.pipeline.k_tasks,
            n_source => c.pipeline.n_source,
            n_target => c.pipeline.n_target,
            shots => c.pipeline.shots,
            max_instances => c.pipeline.max_instances,
        );
        if self.cache_dir.is_some() {
            c.cache_dir = self.cache_dir.clone();
        }
        if self.category_map.is_some() {
            c.corpus.category_map = self.category_map.clone();
        }
        if self.similarity_rank.is_some() {
            c.pipeline.similarity_rank = self.similarity_rank;
        }
        if !self.targets.is_empty() {
            c.corpus.targets = self.targets.clone();
        }
        c.ablations.random_source |= self.random_source;
        c.ablations.skip_verify |= self.skip_verify;
        c.ablations.skip_target_sample |= self.skip_target_sample;
        c.validate()?;
        Ok(c)
    }
}

fn services(cfg: &RunConfig, mock: bool) -> Result<Services, PipelineError> {
    if mock {
        Services::mock(cfg)
    } else {
        Services::http(cfg)
    }
}

fn print_summary(s: &RunSummary) {
    println!("run directory: {}", s.run_dir.display());
    println!(
        "stages executed: {}, skipped: {}; service calls: chat {}, embedding {}",
        s.executed.len(),
        s.skipped.len(),
        s.chat_calls,
        s.embedding_calls
    );
    if let Some(r) = &s.report {
        let table =
            std::fs::read_to_string(s.run_dir.join("report/report.txt")).unwrap_or_default();
        println!("{table}");
        if r.unscored > 0 {
            println!("{} records without references were not scored", r.unscored);
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let stage_run = |opts: &Opts, until: Stage| -> Result<(), PipelineError> {
        let cfg = opts.config()?;
        let svc = services(&cfg, cli.mock)?;
        print_summary(&run_pipeline(&cfg, &svc, until)?);
        Ok(())
    };
    match &cli.command {
        Command::Embed(o) => stage_run(o, Stage::Embed),
        Command::SampleSource(o) => stage_run(o, Stage::SampleSource),
        Command::Transfer(o) => stage_run(o, Stage::Transfer),
        Command::Verify(o) => stage_run(o, Stage::Verify),
        Command::SampleTarget(o) => stage_run(o, Stage::SampleTarget),
        Command::Infer(o) => stage_run(o, Stage::Infer),
        Command::Eval(o) | Command::RunAll(o) => stage_run(o, Stage::Eval),
        Command::Plan {
            opts,
            c_theta,
            c_model,
            source_pool,
        } => {
            let cfg = match opts.config() {
                Ok(c) => c,
                // Planning needs no target files.
                Err(ConfigError::Invalid(_)) if opts.config.is_none() => RunConfig::default(),
                Err(e) => return Err(e.into()),
            };
            print!("{}", plan(&cfg, *c_theta, *c_model, *source_pool)?.render());
            Ok(())
        }
        Command::Sweep(o) => {
            let cfg = o.config()?;
            for (name, s) in run_sweep(&cfg, |c| services(c, cli.mock))? {
                if let Some(r) = &s.report {
                    println!(
                        "{name}: EM {:.1}  Rouge-L {:.1}",
                        r.overall.em, r.overall.rouge
                    );
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
