use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use topic_refine::pipeline::{parse_deltas, BackendKind, Overrides, Pipeline, PipelineConfig, Variant};
use topic_refine::{Error, ErrorCategory};

/// Graph-refined topic extraction over an LLM-generated topic pool.
#[derive(Parser)]
#[command(name = "topicrefine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Number of topics to extract.
    #[arg(long, value_name = "N")]
    k: Option<usize>,
    /// Accept upstream artifacts whose hash or checksum does not match.
    #[arg(long)]
    force: bool,
    #[arg(long, value_name = "N")]
    replications: Option<usize>,
    /// `0.01,0.05`, `0.01..0.10` or `0.01..0.10:0.01`.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    deltas: Option<String>,
    #[arg(long, value_parser = ["http", "fixture"])]
    backend: Option<String>,
    /// Embedding space for extraction and evaluation; `run --ablation original`
    /// evaluates both.
    #[arg(long, value_parser = ["original", "refined"])]
    ablation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// All stages from topic generation to best-method selection.
    Run(Common),
    GenerateTopics(Common),
    Embed(Common),
    Similarity(Common),
    BuildGraph(Common),
    Train(Common),
    /// Three topic sets from the saved checkpoint and graph.
    Extract(Common),
    Evaluate(Common),
    /// Replicated extraction and evaluation with t-tests and ANOVA.
    Validate(Common),
    /// Composite scores under perturbed metric weights.
    Sensitivity(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Backend => 3,
        ErrorCategory::Numeric => 4,
        ErrorCategory::Staleness => 5,
        ErrorCategory::Data => 1,
    }
}

fn pipeline(c: &Common) -> Result<Pipeline, Error> {
    let overrides = Overrides {
        seed: c.seed,
        k: c.k,
        backend: c.backend.as_deref().map(str::parse::<BackendKind>).transpose()?,
        replications: c.replications,
        deltas: c.deltas.as_deref().map(parse_deltas).transpose()?,
    };
    let cfg = PipelineConfig::load(&c.config, &overrides)?;
    Pipeline::new(cfg, c.force)
}

fn variant(c: &Common) -> Result<Variant, Error> {
    c.ablation.as_deref().map_or(Ok(Variant::Refined), str::parse)
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run(c) => {
            let p = pipeline(&c)?;
            let s = p.run(c.ablation.as_deref().map(str::parse).transpose()?)?;
            println!("run directory: {}", s.dir.display());
            for mc in &s.composites {
                println!("refined {:<12} composite {:.6}", mc.method.name(), mc.composite);
            }
            if let Some(orig) = &s.ablation {
                for mc in orig {
                    println!("original {:<11} composite {:.6}", mc.method.name(), mc.composite);
                }
            }
            println!("selected method: {}", s.selected.name());
        }
        Command::GenerateTopics(c) => pipeline(&c)?.generate_topics()?,
        Command::Embed(c) => pipeline(&c)?.embed()?,
        Command::Similarity(c) => pipeline(&c)?.similarity()?,
        Command::BuildGraph(c) => pipeline(&c)?.build_graph()?,
        Command::Train(c) => pipeline(&c)?.train()?,
        Command::Extract(c) => pipeline(&c)?.extract(variant(&c)?)?,
        Command::Evaluate(c) => {
            let ev = pipeline(&c)?.evaluate(variant(&c)?)?;
            println!("selected method: {}", ev.selected.name());
        }
        Command::Validate(c) => {
            let v = pipeline(&c)?.validate()?;
            for r in &v.report.descriptive {
                println!("{:<24} mean {:.6} sd {:.6}", r.approach, r.stats.mean, r.stats.std);
            }
        }
        Command::Sensitivity(c) => {
            let s = pipeline(&c)?.sensitivity()?;
            println!("{} rows, {} skipped", s.rows.len(), s.skipped.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
