use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scnn::workloads::{
    capacity_report, density_sweep, emit_report, load_config, load_network, pe_granularity_sweep, render_text,
    run_network, ExperimentConfig, NetworkDescriptor, ReportFormat, RunVariant,
};
use scnn::Error;

/// Sparse CNN accelerator simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a network on the selected machines.
    Run(Common),
    /// Sweep weight and activation density together.
    SweepDensity(Common),
    /// Sweep the PE grid at a fixed multiplier count.
    SweepPe(Common),
    /// Check every sparse layer output against the reference convolution.
    Validate(Common),
    /// Check activation storage against the on-chip RAMs.
    Capacity(Common),
}

#[derive(Args)]
struct Common {
    /// Network descriptor (TOML).
    #[arg(long, short)]
    network: PathBuf,
    /// Experiment configuration (TOML); built-in defaults otherwise.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Seeds; override the configuration.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Machines to run, e.g. `scnn,dcnn,dcnn-opt,oracle`.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<RunVariant>,
    /// Channel scaling applied to the network.
    #[arg(long)]
    scale: Option<f64>,
}

struct Setup {
    cfg: ExperimentConfig,
    net: NetworkDescriptor,
}

fn setup(c: &Common) -> Result<Setup, Error> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if !c.seed.is_empty() {
        cfg.seeds = c.seed.clone();
    }
    if !c.variants.is_empty() {
        cfg.variants = c.variants.clone();
    }
    if let Some(s) = c.scale {
        cfg.channel_scale = s;
    }
    cfg.validate()?;
    for w in cfg.arch.validate()? {
        eprintln!("warning: {w}");
    }
    let net = load_network(&c.network)?.scale_channels(cfg.channel_scale)?;
    Ok(Setup { cfg, net })
}

const FORMATS: [ReportFormat; 2] = [ReportFormat::Csv, ReportFormat::Text];

fn written(paths: Vec<PathBuf>) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run(c) => {
            let Setup { cfg, net } = setup(&c)?;
            let mut rows = Vec::new();
            for &seed in &cfg.seeds {
                let run = run_network(&net, &cfg.arch, &cfg.variants, seed)?;
                if run.oracle_layers > 0 {
                    eprintln!("seed {seed}: {} layers match the reference", run.oracle_layers);
                }
                rows.extend(run.rows());
            }
            print!("{}", render_text(&rows));
            written(emit_report(&rows, &cfg.output_dir, &format!("{}_layers", net.name), &FORMATS)?);
        }
        Command::Validate(c) => {
            let Setup { cfg, net } = setup(&c)?;
            for &seed in &cfg.seeds {
                let run = run_network(&net, &cfg.arch, &[RunVariant::Oracle], seed)?;
                println!("{} seed {seed}: {} layers match the reference", net.name, run.oracle_layers);
            }
        }
        Command::SweepDensity(c) => {
            let Setup { cfg, net } = setup(&c)?;
            let rows = density_sweep(&net, &cfg.arch, &cfg.density_points, &cfg.seeds)?;
            let totals: Vec<_> = rows.iter().filter(|r| r.layer == scnn::workloads::TOTAL).cloned().collect();
            print!("{}", render_text(&totals));
            written(emit_report(&rows, &cfg.output_dir, &format!("{}_density", net.name), &FORMATS)?);
        }
        Command::SweepPe(c) => {
            let Setup { cfg, net } = setup(&c)?;
            let rows = pe_granularity_sweep(&net, &cfg.arch, cfg.total_multipliers, &cfg.pe_grids, &cfg.seeds)?;
            let totals: Vec<_> = rows.iter().filter(|r| r.layer == scnn::workloads::TOTAL).cloned().collect();
            print!("{}", render_text(&totals));
            written(emit_report(&rows, &cfg.output_dir, &format!("{}_pe", net.name), &FORMATS)?);
        }
        Command::Capacity(c) => {
            let Setup { cfg, net } = setup(&c)?;
            let rows = capacity_report(&net, &cfg.arch, cfg.seeds[0])?;
            print!("{}", render_text(&rows));
            let tiled = rows.iter().filter(|r| r.tiled).count();
            println!("{tiled} of {} layers need DRAM tiling", rows.len());
            written(emit_report(&rows, &cfg.output_dir, &format!("{}_capacity", net.name), &FORMATS)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::OracleMismatch { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
