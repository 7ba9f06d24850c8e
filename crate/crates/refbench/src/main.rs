use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedeval_refbench::bundle::write_bundle;
use fedeval_refbench::cli::{run_cube, CUBE_SUBCOMMANDS};
use fedeval_refbench::site::{write_site, SiteConfig};

#[derive(Parser)]
#[command(
    name = "fedeval-refbench",
    about = "Synthetic reference benchmark and its cube entrypoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one site's raw data.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        #[arg(long, default_value_t = 0.0)]
        label_noise: f64,
        /// Adds a record_id column carrying this marker.
        #[arg(long)]
        sentinel: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the benchmark bundle and the linear model cube.
    Bundle {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if let Some(sub) = args
        .get(1)
        .filter(|s| CUBE_SUBCOMMANDS.contains(&s.as_str()))
    {
        return ExitCode::from(run_cube(sub, &args[2..]) as u8);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            seed,
            n,
            shift,
            label_noise,
            sentinel,
            out,
        } => {
            if n == 0 || !(0.0..=1.0).contains(&shift) || !(0.0..=0.5).contains(&label_noise) {
                eprintln!("need n >= 1, shift in [0, 1], label-noise in [0, 0.5]");
                return ExitCode::from(2);
            }
            let cfg = SiteConfig {
                seed,
                n,
                shift,
                label_noise,
            };
            write_site(&cfg, &out, sentinel.as_deref()).map(|_| ())
        }
        Command::Bundle { out } => {
            write_bundle(&out).map(|p| println!("{}", p.benchmark.display()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
