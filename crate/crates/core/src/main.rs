use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use copb::config::RunConfig;
use copb::dataset::DEFAULT_PER_TYPE;
use copb::pipeline::{self, CliError, EvaluateInputs, Run};

#[derive(Parser)]
#[command(name = "copb", version, about = "Generate, ground and evaluate synthetic daily mobility")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Personas or sequences processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Stop at the first failure instead of isolating it.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory; defaults to the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample personas with homes and workplaces.
    Personas {
        #[arg(short, long, default_value_t = 10)]
        n: usize,
    },
    /// Generate intention sequences and dialogue logs.
    Generate {
        /// Defaults to personas.jsonl in the output directory.
        #[arg(long)]
        personas: Option<PathBuf>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        without_attitude: bool,
        #[arg(long)]
        without_norms: bool,
        #[arg(long)]
        without_pbc: bool,
    },
    /// Ground sequences into POI trajectories.
    Map {
        #[arg(long)]
        personas: Option<PathBuf>,
        #[arg(long)]
        sequences: Option<PathBuf>,
        /// Trajectories per sequence; defaults to the configured count.
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Compare a generated corpus with a reference corpus.
    Evaluate {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        generated_personas: Option<PathBuf>,
        #[arg(long)]
        reference_personas: Option<PathBuf>,
        /// Grid cell size when no grid is configured.
        #[arg(long)]
        cell_km: Option<f64>,
    },
    /// Fit the distance-decay exponent and the intentions-per-day histogram.
    FitGravity {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        min_km: Option<f64>,
        #[arg(long)]
        max_km: Option<f64>,
    },
    /// Build or check a fine-tuning dataset from dialogue logs.
    BuildDataset {
        /// Defaults to dialogues.jsonl in the output directory.
        #[arg(long, num_args = 1..)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PER_TYPE)]
        per_type: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Validate an existing dataset instead of building one.
        #[arg(long)]
        check: Option<PathBuf>,
    },
}

fn print<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = cli.config.as_deref().map(RunConfig::load).transpose()?;
    if let (Command::Generate { without_attitude, without_norms, without_pbc, .. }, Some(c)) =
        (&cli.command, config.as_mut())
    {
        c.ablation.use_attitude &= !without_attitude;
        c.ablation.use_norms &= !without_norms;
        c.ablation.use_pbc &= !without_pbc;
    }
    let run = Run::new(config, cli.seed, cli.jobs, cli.strict, cli.out);
    match cli.command {
        Command::Personas { n } => {
            let personas = pipeline::cmd_personas(&run, n)?;
            eprintln!(
                "wrote {} persona(s) to {}",
                personas.len(),
                run.path(pipeline::PERSONAS_FILE).display()
            );
            Ok(())
        }
        Command::Generate { personas, days, .. } => {
            let personas = personas.unwrap_or_else(|| run.path(pipeline::PERSONAS_FILE));
            let summary = pipeline::cmd_generate(&run, &personas, days)?;
            print(&summary)?;
            summary.outcome()
        }
        Command::Map { personas, sequences, replicas } => {
            let personas = personas.unwrap_or_else(|| run.path(pipeline::PERSONAS_FILE));
            let sequences = sequences.unwrap_or_else(|| run.path(pipeline::SEQUENCES_FILE));
            let summary = pipeline::cmd_map(&run, &personas, &sequences, replicas)?;
            print(&summary)?;
            summary.outcome(run.strict)
        }
        Command::Evaluate { generated, reference, generated_personas, reference_personas, cell_km } => {
            let inputs = EvaluateInputs {
                generated,
                reference,
                generated_personas,
                reference_personas,
                cell_size_km: cell_km,
            };
            print(&pipeline::cmd_evaluate(&run, &inputs)?.metrics)
        }
        Command::FitGravity { trajectories, min_km, max_km } => {
            print(&pipeline::cmd_fit_gravity(&run, &trajectories, min_km, max_km)?)
        }
        Command::BuildDataset { logs, per_type, output, check } => {
            if let Some(path) = check {
                pipeline::check_dataset(&path)?;
                eprintln!("{}: ok", path.display());
                return Ok(());
            }
            let logs = if logs.is_empty() { vec![run.path(pipeline::DIALOGUES_FILE)] } else { logs };
            print(&pipeline::cmd_build_dataset(&run, &logs, per_type, output.as_deref())?.counts)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
