use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use legmhe::mhe::LoMode;
use legmhe_cli::commands::{self, Overrides};
use legmhe_cli::config::ConfigFile;
use legmhe_cli::log::{read_log, write_log};
use legmhe_cli::CliError;

#[derive(Parser)]
#[command(name = "legmhe", version, about = "Legged-robot state estimation: simulate, estimate, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded sensor log.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the estimator over a log; writes a CSV trace and prints metrics.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Also write the metrics report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write per-tick timing statistics here. Kept apart from the
        /// other outputs since it varies between runs.
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// One estimation run per window size.
    SweepWindow {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
        sizes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Largest relative deviation between the windowed and full-information estimates.
    CompareFif {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_arrival: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    no_vo: bool,
    #[arg(long, value_enum)]
    lo_form: Option<LoFormArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LoFormArg {
    Position,
    Velocity,
    Both,
}

impl Common {
    fn load(&self) -> Result<(Vec<legmhe::pipeline::Tick>, legmhe::pipeline::EstimatorConfig), CliError> {
        let cfg = ConfigFile::load(self.config.as_deref())?;
        let log = read_log(&self.log)?;
        let ov = Overrides {
            window: self.window,
            no_vo: self.no_vo,
            lo_mode: self.lo_form.map(|f| match f {
                LoFormArg::Position => LoMode::Position,
                LoFormArg::Velocity => LoMode::Velocity,
                LoFormArg::Both => LoMode::Both,
            }),
        };
        let est = commands::estimator_config(&cfg, &log.header, &ov, &display(self.config.as_deref()))?;
        Ok((commands::ticks_of(&log), est))
    }
}

fn display(p: Option<&Path>) -> String {
    p.map_or_else(|| "<defaults>".into(), |p| p.display().to_string())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => commands::write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let cfg = ConfigFile::load(config.as_deref())?;
            let log = commands::simulate_log(&cfg, seed, &display(config.as_deref()))?;
            write_log(&log, &out)
        }
        Command::Estimate { common, out, report, timing } => {
            let (ticks, cfg) = common.load()?;
            let n_feet = ticks.first().map_or(0, |t| t.legs.len());
            let run = commands::run_estimator(&ticks, &cfg)?;
            commands::write_file(&out, &commands::trace_csv(&run.estimates, n_feet))?;
            let text = run.metrics().to_text();
            if let Some(r) = report {
                commands::write_file(&r, &text)?;
            }
            print!("{text}");
            if let Some(t) = timing {
                commands::write_file(&t, &run.timing().to_text())?;
            }
            Ok(())
        }
        Command::SweepWindow { common, sizes, out, timing } => {
            let (ticks, cfg) = common.load()?;
            let rows = commands::sweep_window(&ticks, &cfg, &sizes)?;
            if let Some(t) = timing {
                commands::write_file(&t, &commands::sweep_timing_table(&rows))?;
            }
            emit(out.as_deref(), &commands::sweep_table(&rows))
        }
        Command::CompareFif { common, out, corrupt_arrival } => {
            let (ticks, cfg) = common.load()?;
            let cmp = commands::compare_fif(&ticks, &cfg, corrupt_arrival)?;
            emit(out.as_deref(), &cmp.to_text())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", CliError::InvalidArgument(first.to_string()).error_line());
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.error_line());
            ExitCode::FAILURE
        }
    }
}
