//! `vpop`: build a census-grounded virtual population, administer the
//! IPIP-NEO-120 through a chat provider, and compare its age curves with
//! panel-study references.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use vpop_core::pipeline::{
    exit_status, init_run, replay_run, run_elicit, run_enrich, run_evaluate, run_evaluate_reference, run_pipeline,
    run_quiz, run_report, run_sample, run_score, RunConfig, RunContext, StageSummary,
};
use vpop_core::{RunStore, ValueKind};

#[derive(Parser)]
#[command(name = "vpop", version, about = "Census-grounded virtual populations and Big Five age curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create the run (if needed) and draw skeletal personas from the census.
    Sample(NewRun),
    /// Generate a narrative for every stored skeleton.
    Enrich(Existing),
    /// Administer the inventory to every enriched persona.
    Quiz(Existing),
    /// Score stored answer sheets against cohort norms.
    Score(Existing),
    /// Generate personality-conditioned narratives.
    Elicit(Existing),
    /// Build the population curve and measure it against the references.
    Evaluate {
        #[command(flatten)]
        run: Existing,
        /// Evaluate a bundled reference table (for example `glm4`)
        /// instead of the simulated population.
        #[arg(long, value_name = "NAME")]
        replay_reference: Option<String>,
    },
    /// Write report/ (markdown, CSV and SVG) from the stored records.
    Report(Existing),
    /// Run every stage in order and finalize the run.
    Pipeline(NewRun),
    /// Re-run a finished run from its manifest into a new directory.
    Replay {
        /// Run directory whose manifest is replayed.
        #[arg(long)]
        from: PathBuf,
        /// Destination run directory.
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args)]
struct Existing {
    /// Run directory.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("provider_choice").multiple(false))]
struct NewRun {
    /// Run directory. An existing run is resumed with its stored settings.
    #[arg(long)]
    run: PathBuf,
    /// TOML file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `mock`, `mock:<profile.toml>` or `http`.
    #[arg(long, group = "provider_choice")]
    provider: Option<String>,
    /// Shorthand for `--provider mock:<PATH>`.
    #[arg(long, value_name = "PATH", group = "provider_choice")]
    mock: Option<PathBuf>,
    /// Shorthand for `--provider http`.
    #[arg(long, group = "provider_choice")]
    http: bool,
    /// Census file (default: the bundled Adult file).
    #[arg(long)]
    census: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Conditional sampling, e.g. `age >= 40 and sex = Female`.
    #[arg(long)]
    predicate: Option<String>,
    /// Draw rows in proportion to fnlwgt.
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    generations: Option<u32>,
    /// Norm table: ipip-neo-120, unit or mock-latent.
    #[arg(long)]
    norms: Option<String>,
    #[arg(long, value_parser = parse_value_kind)]
    value_kind: Option<ValueKind>,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    reask_cap: Option<usize>,
    /// Reference table to compare with; repeatable.
    #[arg(long = "reference", value_name = "NAME")]
    references: Vec<String>,
    #[arg(long)]
    anomaly_threshold: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    credential_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long)]
    retry_limit: Option<u32>,
    /// Requests per minute; 0 disables the limiter.
    #[arg(long)]
    rate_limit: Option<u32>,
}

fn parse_value_kind(s: &str) -> Result<ValueKind, String> {
    s.parse()
}

impl NewRun {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(p) = &self.provider {
            cfg.provider = p.clone();
        }
        if let Some(p) = &self.mock {
            cfg.provider = format!("mock:{}", p.display());
        }
        if self.http {
            cfg.provider = "http".into();
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { cfg.$($field).+ = v.clone().into(); })*
            };
        }
        set!(
            census => census,
            n => n,
            seed => seed,
            generations => generations,
            norms => norms,
            value_kind => value_kind,
            chunk_size => chunk_size,
            reask_cap => reask_cap,
            anomaly_threshold => anomaly_threshold,
            model => gateway.model_id,
            endpoint => gateway.endpoint,
            credential_env => gateway.credential,
            max_parallel => gateway.max_parallel,
            retry_limit => gateway.retry_limit,
            rate_limit => gateway.rate_limit,
        );
        if self.predicate.is_some() {
            cfg.predicate = self.predicate.clone();
        }
        if self.temperature.is_some() {
            cfg.gateway.temperature = self.temperature;
        }
        if self.weighted {
            cfg.weighted = true;
        }
        if !self.references.is_empty() {
            cfg.references = self.references.clone();
        }
        Ok(cfg)
    }

    /// Open the run if it exists, otherwise create it from the settings.
    fn store(&self) -> anyhow::Result<RunStore> {
        let cfg = self.config()?;
        if self.run.join("manifest.json").exists() {
            eprintln!(
                "resuming {}; settings are taken from its manifest",
                self.run.display()
            );
        }
        Ok(init_run(&self.run, &cfg, true)?)
    }
}

fn open(dir: &Path) -> anyhow::Result<(RunStore, RunContext)> {
    let store = RunStore::open(dir)?;
    let ctx = RunContext::from_manifest(store.manifest())?;
    Ok((store, ctx))
}

fn print(summaries: &[StageSummary]) {
    for s in summaries {
        for line in &s.lines {
            println!("  {line}");
        }
        println!("{}", s.headline());
    }
}

fn run(command: Command) -> anyhow::Result<Vec<StageSummary>> {
    Ok(match command {
        Command::Sample(args) => {
            let mut store = args.store()?;
            let ctx = RunContext::from_manifest(store.manifest())?;
            vec![run_sample(&mut store, &ctx)?]
        }
        Command::Pipeline(args) => {
            let mut store = args.store()?;
            let ctx = RunContext::from_manifest(store.manifest())?;
            run_pipeline(&mut store, &ctx)?
        }
        Command::Enrich(a) => {
            let (mut store, ctx) = open(&a.run)?;
            vec![run_enrich(&mut store, &ctx)?]
        }
        Command::Quiz(a) => {
            let (mut store, ctx) = open(&a.run)?;
            vec![run_quiz(&mut store, &ctx)?]
        }
        Command::Score(a) => {
            let (mut store, ctx) = open(&a.run)?;
            vec![run_score(&mut store, &ctx)?]
        }
        Command::Elicit(a) => {
            let (mut store, ctx) = open(&a.run)?;
            vec![run_elicit(&mut store, &ctx)?]
        }
        Command::Evaluate { run, replay_reference } => {
            let (mut store, ctx) = open(&run.run)?;
            match replay_reference {
                Some(name) => vec![run_evaluate_reference(&mut store, &ctx, &name)?],
                None => vec![run_evaluate(&mut store, &ctx)?],
            }
        }
        Command::Report(a) => {
            let store = RunStore::open(&a.run)?;
            vec![run_report(&store)?]
        }
        Command::Replay { from, run } => {
            let mut store = replay_run(&from, &run)?;
            let ctx = RunContext::from_manifest(store.manifest())?;
            run_pipeline(&mut store, &ctx)?
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(summaries) => {
            print(&summaries);
            ExitCode::from(exit_status(&summaries) as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
