use anyonic::pipeline::{run, Command, ConfigFile, Settings};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "anyonic", version, about = "Fusion-category checks, tube-algebra idempotents and cylinder spectra")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pentagon, involution and braiding checks of the model category.
    Verify(Flags),
    /// Tube algebra, central idempotents and sector labels.
    Tubes(Flags),
    /// Full pipeline: transfer-matrix spectrum with sector projection.
    Spectrum(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["fibonacci", "yang-lee", "su2k"])]
    model: Option<String>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    p: Option<u32>,
    /// Ring length (even, at least 4).
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long, value_parser = ["1", "tau"])]
    flux: Option<String>,
    #[arg(long)]
    n_states: Option<usize>,
    /// Calibration sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hexadecimal RNG seed.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

impl Flags {
    fn into_config(self) -> anyonic::Result<ConfigFile> {
        let base = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            model: self.model,
            k: self.k,
            p: self.p,
            l: self.l,
            flux: self.flux,
            n_states: self.n_states,
            sizes: self.sizes,
            out: self.out,
            seed: self.seed,
            format: self.format,
            ..ConfigFile::default()
        };
        Ok(flags.over(base))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Verify(f) => (Command::Verify, f),
        Cmd::Tubes(f) => (Command::Tubes, f),
        Cmd::Spectrum(f) => (Command::Spectrum, f),
    };
    let outcome = flags
        .into_config()
        .and_then(Settings::resolve)
        .and_then(|s| run(command, &s));
    match outcome {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for p in &summary.files {
                println!("{}", p.display());
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed checks: {}", summary.failed_checks.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
