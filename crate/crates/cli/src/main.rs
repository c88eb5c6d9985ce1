use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use whfdie::harness::{
    estimate_stage, evaluate_stage, gen_data_stage, report_stage, run_pipeline, simulate_stage, synthesize_stage,
    train_stage, ExperimentConfig, PipelineMode, PipelineReport, Run,
};

/// Fault estimation and isolation experiments for a belt-driven two-link arm.
#[derive(Parser)]
#[command(name = "whfdie", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file, or `default` for the built-in one.
    #[arg(long, global = true, default_value = "default")]
    config: PathBuf,

    /// Root output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed for scenario noise and data splits (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Feature set: hybrid, raw or both.
    #[arg(long, global = true, default_value = "both")]
    mode: PipelineMode,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise the fault-estimation filter and write the design.
    Synthesize,
    /// Simulate the training and test grids and write closed-loop logs.
    Simulate,
    /// Simulate and filter both grids and write fault-estimate series.
    Estimate,
    /// Build feature data sets for the selected mode.
    GenData,
    /// Cross-validate and fit the classifier on stored features.
    Train,
    /// Classify the test features with the stored model.
    Evaluate,
    /// Collect stored evaluations into the metrics table and summary.
    Report,
    /// Run every stage in order.
    Run,
    /// Print the effective configuration as TOML.
    Config,
}

fn print_report(r: &PipelineReport) {
    for m in &r.modes {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<7} TDR {}  HMA {}  FDR {}  FAR {}  ({} test windows)",
            m.mode.name(),
            f(m.metrics.tdr),
            f(m.metrics.hma),
            f(m.metrics.fdr),
            f(m.metrics.far),
            m.n_test
        );
    }
    if let Some(d) = r.tdr_delta {
        println!("hybrid - raw TDR: {:+.2} points", 100.0 * d);
    }
}

fn execute(cli: Cli) -> whfdie::Result<()> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.ml.search.seed = seed;
    }
    if let Command::Run = cli.command {
        let report = run_pipeline(&cfg, cli.mode)?;
        print_report(&report);
        return Ok(());
    }
    let run = Run::new(cfg)?;
    run.install(|| -> whfdie::Result<()> {
        match cli.command {
            Command::Synthesize => {
                let d = synthesize_stage(&run)?;
                println!(
                    "wrote {} (lambda {:.4}, gamma {:.4})",
                    run.paths.design_file().display(),
                    d.lambda_bar(),
                    d.gamma_bar()
                );
            }
            Command::Simulate => {
                let n = simulate_stage(&run)?.len();
                println!("wrote {n} runs to {}", run.paths.sim.display());
            }
            Command::Estimate => {
                let n = estimate_stage(&run)?.len();
                println!("wrote {n} estimate series to {}", run.paths.sim.display());
            }
            Command::GenData => {
                let data = gen_data_stage(&run, cli.mode)?;
                for (fm, set, w) in &data.datasets {
                    println!("{} {}: {} windows", fm.name(), set.name(), w.len());
                }
            }
            Command::Train => {
                for fm in cli.mode.feature_modes() {
                    let r = train_stage(&run, fm)?;
                    println!("{}: CV accuracy {:.4} with {:?}", fm.name(), r.cv.accuracy, r.cv.best);
                }
            }
            Command::Evaluate => {
                for fm in cli.mode.feature_modes() {
                    let r = evaluate_stage(&run, fm)?;
                    println!("{}: TDR {:?}", fm.name(), r.metrics.tdr);
                }
            }
            Command::Report => print_report(&report_stage(&run, cli.mode)?),
            Command::Run | Command::Config => unreachable!("handled above"),
        }
        Ok(())
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Config = cli.command {
        return match ExperimentConfig::load(&cli.config).and_then(|c| c.to_toml()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
