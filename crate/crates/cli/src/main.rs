//! `probe`: batch runner for probe-method experiments.

mod config;
mod run;
mod svg;

use clap::Parser;
use config::{Command, RunConfig, OUTPUT_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

const SCHEMA: &str = "\
Config schema (JSON, unknown keys rejected):
  command      optional; must match the subcommand
  scene        path to a scene JSON (relative to the config) or an inline scene:
               {\"outer\": shape, \"obstacles\": [shape], \"k\": 0.0,
                \"bc\": {\"kind\": \"sound_hard_neumann\"} | {\"kind\": \"conductivity\", \"h\": [..]}}
               shape = {\"type\": \"disc\", \"center\": [x, y], \"radius\": r}
                     | {\"type\": \"polygon\", \"vertices\": [[x, y], ..]}
  k, bc        optional overrides of the scene values
  h            mesh size (default 0.02)
  n_modes      trace modes of the DtN maps (default: largest needle order)
  schedule     {delta0, delta_decay, delta_min, order0, order_step, alpha_rel, n_max}
  thresholds   {burn_in, ratio} divergence rule (default 3, 10)
  needles      [[[x, y], ..], ..] vertex lists from the outer boundary to the tip
  grid         {spacing, margin, window: [[x0, y0], [x1, y1]]} probe lattice
  t_grid       [t, ..] profile parameters in ]0,1[
  ball_grid    {spacing, radius} balls for blowup-set estimates
  n_random     random boundary data for identity and inequality checks (default 10)
  output_dir   output directory (overridden by PROBE_OUTPUT_DIR, then --out)
  seed         seed for random boundary data (default 0)
  workers      worker threads (default: available parallelism)

Exit codes: 0 success, 1 configuration error, 2 numerical failure.";

#[derive(Parser)]
#[command(name = "probe", version, about = "Probe-method experiments on 2-D obstacle scenes", after_help = SCHEMA)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

fn report(e: &anyhow::Error) {
    match e.chain().find_map(|c| c.downcast_ref::<probe_core::Error>()) {
        Some(pe) => eprintln!("error [{}]: {e:#}", pe.code()),
        None => eprintln!("error: {e:#}"),
    }
}

fn numerical(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<probe_core::Error>().is_some_and(|e| e.is_numerical()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let setup = || -> anyhow::Result<_> {
        let (cfg, scene) = RunConfig::load(&cli.config)?;
        let cmd = cfg.resolve_command(cli.command)?;
        let dir = cli
            .out
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let workers = cli.workers.or(cfg.workers).unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
        anyhow::ensure!(workers > 0, "workers must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
        Ok((cfg, scene, cmd, dir))
    };
    let (cfg, scene, cmd, dir) = match setup() {
        Ok(v) => v,
        Err(e) => {
            report(&e);
            return ExitCode::from(1);
        }
    };
    let result = run::Artifacts::new(&dir).and_then(|mut out| {
        run::run(cmd, &cfg, &scene, &mut out)?;
        out.finish()
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(if numerical(&e) { 2 } else { 1 })
        }
    }
}
