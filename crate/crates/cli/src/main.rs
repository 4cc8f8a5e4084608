use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use floqnoise_cli::{parse_config, run_pipeline, RunOptions};

/// Phase, amplitude and cross-correlation noise of free-running and coupled
/// oscillators.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analysis described by a TOML configuration file.
    Run {
        config: PathBuf,
        /// Also run the Monte-Carlo reference.
        #[arg(long)]
        mc: bool,
        /// Comma-separated observation nodes, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<String>>,
        /// Output directory, replacing the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit a gnuplot script and an SVG figure.
        #[arg(long)]
        plot: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOQNOISE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            mc,
            nodes,
            out,
            plot,
        } => parse_config(&config).and_then(|mut cfg| {
            if let Some(nodes) = nodes {
                cfg.set_nodes(nodes)?;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if mc {
                cfg.enable_mc();
            }
            run_pipeline(&cfg, RunOptions { plot })
        }),
    };
    match result {
        Ok(out) => {
            print!("{}", out.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
