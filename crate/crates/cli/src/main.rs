use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use martingality_cli::commands::{self, Command};
use martingality_cli::config::{resolve, Format, Overrides};
use martingality_cli::CliError;

#[derive(Parser)]
#[command(name = "martingality", version, about = "Is a stochastic exponential a true martingale or a strict local martingale?")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,
    /// Catalog preset to start from (see `martingality catalog`).
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<String>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Attach Monte Carlo cross-checks to `classify`.
    #[arg(long, global = true)]
    with_mc: bool,
    /// Evaluation time.
    #[arg(long, global = true)]
    t: Option<f64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Feller-test verdict for a one-dimensional diffusion.
    Classify,
    /// Localized deficit curve 1 - E[Z_t] under the modified dynamics.
    Deficit,
    /// Novikov's functional with a doubling ladder of running means.
    Novikov,
    /// Jump-diffusion diagnostics.
    Jump,
    /// Spectrally truncated Q-Brownian motion.
    Hilbert,
    /// Per-path table of Z_t and level exit times.
    Ensemble,
    /// Run the acceptance suite.
    Selftest,
    /// List the built-in presets.
    Catalog,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Classify => Command::Classify,
            Cmd::Deficit => Command::Deficit,
            Cmd::Novikov => Command::Novikov,
            Cmd::Jump => Command::Jump,
            Cmd::Hilbert => Command::Hilbert,
            Cmd::Ensemble => Command::Ensemble,
            Cmd::Selftest => Command::Selftest,
            Cmd::Catalog => Command::Catalog,
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let text = cli.config.as_deref().map(std::fs::read_to_string).transpose()?;
    let ov = Overrides {
        preset: cli.preset.clone(),
        seed: cli.seed,
        paths: cli.paths,
        t: cli.t,
        output: cli.output.clone(),
        format: cli.format.map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }),
        with_mc: cli.with_mc,
    };
    let cfg = resolve(text.as_deref(), &ov)?;
    let out = commands::run(cli.command.into(), &cfg)?;
    let rendered = out.render(cfg.output.format)?;
    match &cfg.output.path {
        Some(path) => {
            std::fs::write(path, rendered)?;
            print!("{}", out.summary);
        }
        None => print!("{rendered}"),
    }
    for d in &out.report.diagnostics {
        eprintln!("note: {d}");
    }
    Ok(out.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build();
    let result = match pool {
        Ok(pool) => pool.install(|| execute(&cli)),
        Err(e) => Err(CliError::Validation(format!("thread pool: {e}"))),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
