use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sjsdm::model::FactorModel;
use sjsdm::workflow::{self, Overrides, RunConfig};
use sjsdm::Error;

#[derive(Parser)]
#[command(name = "sjsdm", version, about = "Spatial joint species distribution model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic dataset and its truth
    Simulate,
    /// Run the sampler on the training sites
    Fit,
    /// Predict the held-out sites from fitted draws
    Predict,
    /// Compute held-out metrics
    Evaluate,
    /// Chain diagnostics from fitted draws
    Diagnose,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Spatial,
    Independent,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true, value_enum)]
    variant: Option<Variant>,
    #[arg(long, global = true)]
    holdout_frac: Option<f64>,
    #[arg(long, global = true)]
    min_presence: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::Sampler { block, iteration, .. } = e {
        v["block"] = json!(block);
        v["iteration"] = json!(iteration);
    }
    v
}

fn run(cli: Cli) -> sjsdm::Result<serde_json::Value> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: c.seed,
        chains: c.chains,
        variant: c.variant.map(|v| match v {
            Variant::Spatial => FactorModel::Spatial,
            Variant::Independent => FactorModel::Independent,
        }),
        holdout_frac: c.holdout_frac,
        min_presence: c.min_presence,
        output: c.out.clone(),
    });
    let out = cfg.output.display().to_string();
    Ok(match cli.command {
        Command::Simulate => {
            let t = workflow::run_simulate(&cfg)?;
            json!({ "command": "simulate", "sites": t.sites.len(), "species": t.species.len(), "response": cfg.data.response })
        }
        Command::Fit => {
            let f = workflow::run_fit(&cfg)?;
            json!({ "command": "fit", "output": out, "draws": f.summary.n_draws, "wall_seconds": f.timing.wall_seconds })
        }
        Command::Predict => {
            let (_, s) = workflow::run_predict(&cfg)?;
            json!({ "command": "predict", "output": out, "test_sites": s.n_test })
        }
        Command::Evaluate => {
            let m = workflow::run_evaluate(&cfg)?;
            json!({ "command": "evaluate", "output": out, "pmse": m.pmse, "tjur": m.tjur.map(|t| t.mean), "frobenius_gap": m.frobenius_gap })
        }
        Command::Diagnose => {
            let d = workflow::run_diagnose(&cfg)?;
            json!({ "command": "diagnose", "output": out, "draws": d.n_draws })
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim_end() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
