use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clonesel_cli::config::ModelSource;
use clonesel_cli::{parse_config, reproduce, simulate, verify, Check, CliError, Figure, RunConfig, Suite};
use clonesel_core::PresetName;

/// Simulate clonal selection in a structured hematopoiesis model.
#[derive(Parser)]
#[command(name = "clonesel", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one model and write totals, heatmaps and a report.
    Simulate(Common),
    /// Regenerate the data behind one of the figures.
    Reproduce {
        #[arg(long, value_enum)]
        figure: Figure,
        #[command(flatten)]
        common: Common,
    },
    /// Check a run against the analytic results; exits 1 on failure.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named model, overriding the configuration.
    #[arg(long)]
    preset: Option<PresetName>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of grid points.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// 1000 points and dt = 1e-4 unless overridden.
    #[arg(long)]
    paper_fidelity: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(name) = self.preset {
            cfg.model = ModelSource::Preset(name);
        }
        if let Some(dir) = &self.out {
            cfg.output_dir = dir.clone();
        }
        if self.grid.is_some() {
            cfg.grid_points = self.grid;
        }
        if self.dt.is_some() {
            cfg.dt = self.dt;
        }
        if self.horizon.is_some() {
            cfg.horizon = self.horizon;
        }
        cfg.paper_fidelity |= self.paper_fidelity;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_checks(checks: &[Check]) -> Result<(), CliError> {
    for c in checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(common) => {
            let cfg = common.load()?;
            let out = simulate(&cfg)?;
            print!("{}", out.report);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Reproduce { figure, common } => {
            let cfg = common.load()?;
            let out = reproduce(figure, &cfg)?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            print_checks(&out.checks)
        }
        Command::Verify { suite, common } => {
            let cfg = common.load()?;
            print_checks(&verify(suite, &cfg)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
