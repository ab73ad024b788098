mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::Command;
use settings::{ConfigErrors, FieldError, Settings};

#[derive(Parser, Debug)]
#[command(name = "oec", version, about = "Multi-study ensembles fit jointly with their learners")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML settings file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Replicates of the design calibrated on weekly mortality data
    SimulateDatadriven(Common),
    /// Replicates of the clustered-covariate design
    SimulateGeneral(Common),
    /// Leave-one-country-out forecasting on a weekly mortality CSV
    EvaluateMortality(Common),
    /// Fit one method to a studies CSV and save the model
    Fit(Common),
    /// Cross-validate hyperparameters on a studies CSV
    Tune(Common),
    /// Write a small synthetic input
    MakeFixture(Common),
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

fn report(kind: &str, message: String, fields: Vec<FieldError>) {
    let rec = ErrorRecord { error: kind, message, fields };
    eprintln!("{}", serde_json::to_string(&rec).expect("error record serializes"));
}

fn resolve(common: &Common) -> Result<Settings, ConfigErrors> {
    let doc = match &common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    Ok(doc.overlay(&common.settings))
}

fn configure_threads(jobs: Option<usize>) {
    if let Some(n) = jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OEC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                e.exit();
            }
            let message = e.render().to_string();
            report("config", message.lines().next().unwrap_or("").trim_start_matches("error: ").to_string(), Vec::new());
            return ExitCode::from(2);
        }
    };
    let (command, common) = match &cli.command {
        Sub::SimulateDatadriven(c) => (Command::SimulateDataDriven, c),
        Sub::SimulateGeneral(c) => (Command::SimulateGeneral, c),
        Sub::EvaluateMortality(c) => (Command::EvaluateMortality, c),
        Sub::Fit(c) => (Command::Fit, c),
        Sub::Tune(c) => (Command::Tune, c),
        Sub::MakeFixture(c) => (Command::MakeFixture, c),
    };
    let settings = match resolve(common) {
        Ok(s) => s,
        Err(e) => {
            report("config", e.to_string(), e.0);
            return ExitCode::from(2);
        }
    };
    configure_threads(settings.jobs);
    let run = match command {
        Command::SimulateDataDriven => commands::simulate_data_driven_cmd,
        Command::SimulateGeneral => commands::simulate_general_cmd,
        Command::EvaluateMortality => commands::evaluate_mortality_cmd,
        Command::Fit => commands::fit_cmd,
        Command::Tune => commands::tune_cmd,
        Command::MakeFixture => commands::make_fixture_cmd,
    };
    match run(&settings) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => match e.downcast_ref::<ConfigErrors>() {
            Some(c) => {
                report("config", c.to_string(), c.0.clone());
                ExitCode::from(2)
            }
            None => {
                report("runtime", format!("{e:#}"), Vec::new());
                ExitCode::from(1)
            }
        },
    }
}
