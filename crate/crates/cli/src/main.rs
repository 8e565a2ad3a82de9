use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use thermoguard::certify::{certify, Certificate, ProbeConfig, SearchConfig};
use thermoguard::compare::{parse_controller_list, run_compare, write_comparison};
use thermoguard::control::ControllerVariant;
use thermoguard::convergence::{run_convergence, ConvergenceCase};
use thermoguard::output::write_trajectory;
use thermoguard::scenario::{load_scenario, Scenario};
use thermoguard::simulate::run_scenario;
use thermoguard::solver::Scheme;
use thermoguard::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "thermoguard", version, about = "Boundary-controlled battery thermal simulations and gain certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write trajectory.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (falls back to $THERMOGUARD_OUT).
        #[arg(long, env = "THERMOGUARD_OUT")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Disable process and measurement noise.
        #[arg(long)]
        no_noise: bool,
    },
    /// Certify the scenario's controller gains and print the certificate.
    VerifyGains {
        #[arg(long)]
        config: PathBuf,
        /// Search the design parameters even when the scenario supplies them.
        #[arg(long)]
        search: bool,
        /// Certify another controller's gains from the same scenario.
        #[arg(long)]
        controller: Option<ControllerVariant>,
    },
    /// Run the scenario under several controllers with identical noise.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "oc,stc,stsfc")]
        controllers: String,
        /// Output directory (falls back to $THERMOGUARD_OUT).
        #[arg(long, env = "THERMOGUARD_OUT")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_noise: bool,
    },
    /// Grid-refinement study against a closed-form solution.
    Convergence {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = SchemeArg::CrankNicolson)]
        scheme: SchemeArg,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CaseArg {
    Cosine,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    CrankNicolson,
    BackwardEuler,
}

fn load(config: &Path, seed: Option<u64>, no_noise: bool) -> Result<Scenario> {
    let mut s = load_scenario(config)?;
    if let Some(seed) = seed {
        s = s.with_seed(seed);
    }
    if no_noise {
        s = s.without_noise();
    }
    if !s.profile_covers_horizon {
        warn!("current profile `{}` does not cover the horizon; end values are held", s.profile_source);
    }
    Ok(s)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::io(Path::new("<stdout>"), std::io::Error::other(e)))?;
    println!("{text}");
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.1}"))
}

fn simulate_cmd(config: &Path, out: &Path, seed: Option<u64>, no_noise: bool) -> Result<()> {
    let scenario = load(config, seed, no_noise)?;
    info!("simulating `{}` with {} for {} s", scenario.name, scenario.controller.variant.label(), scenario.horizon);
    let run = run_scenario(&scenario)?;
    let written = write_trajectory(&run, out)?;
    let s = &run.summary;
    println!(
        "{}: {} | max T {:.3} K | first unsafe {} | min coolant {:.3} K",
        s.controller,
        s.classification.as_str(),
        s.max_temperature,
        fmt_opt(s.first_unsafe_time),
        s.min_coolant_temperature
    );
    println!("wrote {} and {}", written.trajectory.display(), written.summary.display());
    Ok(())
}

fn verify_cmd(config: &Path, search: bool, controller: Option<ControllerVariant>) -> Result<Certificate> {
    let scenario = load(config, None, false)?;
    let variant = controller.unwrap_or(scenario.controller.variant);
    let gains = scenario.controller_gains.for_variant(variant);
    let design = if search { None } else { scenario.design.as_ref() };
    let cert = certify(&gains, &scenario.params, design, &SearchConfig::default(), &ProbeConfig::default())?;
    print_json(&cert)?;
    eprintln!("{}: {}", variant.label(), cert.classification.as_str());
    Ok(cert)
}

fn compare_cmd(config: &Path, controllers: &str, out: &Path, seed: Option<u64>, no_noise: bool) -> Result<()> {
    let list = parse_controller_list(controllers)?;
    let scenario = load(config, seed, no_noise)?;
    let bundle = run_compare(&scenario, &list)?;
    let written = write_comparison(&bundle, &scenario, out)?;
    let table = bundle.table(&scenario);
    println!("{:<8} {:<30} {:>10} {:>10} {:>12} {:>12}", "ctrl", "classification", "max T", "max T(m)", "unsafe at", "min coolant");
    for row in &table.rows {
        match &row.error {
            Some(e) => println!("{:<8} failed: {e}", row.label),
            None => println!(
                "{:<8} {:<30} {:>10.3} {:>10.3} {:>12} {:>12.3}",
                row.label,
                row.classification.map_or("", |c| c.as_str()),
                row.max_temperature.unwrap_or(f64::NAN),
                row.max_temperature_mid.unwrap_or(f64::NAN),
                fmt_opt(row.first_unsafe_time),
                row.min_coolant_temperature.unwrap_or(f64::NAN),
            ),
        }
    }
    println!("wrote {}", written.comparison.display());
    match bundle.runs.into_iter().find_map(|r| r.result.err()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn convergence_cmd(case: CaseArg, levels: usize, scheme: SchemeArg) -> Result<()> {
    let case = match case {
        CaseArg::Cosine => ConvergenceCase::Cosine,
        CaseArg::Uniform => ConvergenceCase::Uniform,
    };
    let scheme = match scheme {
        SchemeArg::CrankNicolson => Scheme::CrankNicolson,
        SchemeArg::BackwardEuler => Scheme::BackwardEuler,
    };
    print_json(&run_convergence(case, levels, scheme)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            no_noise,
        } => simulate_cmd(&config, &out, seed, no_noise),
        Command::VerifyGains {
            config,
            search,
            controller,
        } => verify_cmd(&config, search, controller).map(|_| ()),
        Command::Compare {
            config,
            controllers,
            out,
            seed,
            no_noise,
        } => compare_cmd(&config, &controllers, &out, seed, no_noise),
        Command::Convergence { case, levels, scheme } => convergence_cmd(case, levels, scheme),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
