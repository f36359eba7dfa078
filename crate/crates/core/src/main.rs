use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chaoslab::experiments::{catalog, run, verify_dir, CriterionLine, ExperimentConfig, ExperimentId};

#[derive(Parser)]
#[command(name = "chaoslab", version, about = "Run and verify the chaos experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its bundle.
    Run {
        /// E1..E9 or S; falls back to the config file's "experiment"
        #[arg(long)]
        experiment: Option<ExperimentId>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; falls back to the config's "output"
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-evaluate the criteria of a bundle on disk.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Print the experiment catalog.
    List,
}

fn report(lines: &[CriterionLine]) -> ExitCode {
    for l in lines {
        println!("{l}");
    }
    if lines.iter().any(|l| l.failed()) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            for e in catalog() {
                println!("{:<3} {:<26} ~{:<7} {}", e.id.code(), e.title, e.runtime, e.anchor);
            }
            return ExitCode::SUCCESS;
        }
        Command::Verify { bundle } => verify_dir(&bundle).map(|lines| report(&lines)),
        Command::Run { experiment, config, out, replicas, seed } => (|| {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
                None => ExperimentConfig::default(),
            };
            let id = experiment.or(cfg.experiment).ok_or_else(|| chaoslab::Error::Config("no experiment given".into()))?;
            if replicas.is_some() {
                cfg.replicas = replicas;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.or_else(|| cfg.output.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(format!("results/{}", id.code())));
            let bundle = run(id, &cfg)?;
            bundle.write(&dir)?;
            eprintln!("wrote {} ({:.1} s)", dir.display(), bundle.elapsed_seconds);
            Ok(report(&bundle.criteria()))
        })(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
