//! `advect`: runs the verification, timing, contention and DMA experiments and
//! writes their tables as CSV or markdown.
//!
//! ```sh
//! advect --experiment ladder --dims 128x128x64
//! advect --config configs/dma_overlap.toml --format markdown
//! ```
//!
//! Exit status is 0 when every check in the report passes, 1 when a check
//! fails or the run errors, and 2 for bad arguments or configuration.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use advect_core::pipeline::PipelineVariant;
use advect_core::report::{emit_report, run_experiment, Experiment, ExperimentConfig, Format};
use advect_core::Error;
use clap::Parser;

#[derive(Parser, Debug)]
#[command(
    name = "advect",
    version,
    about = "Advection kernel design-space experiments"
)]
struct Args {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// verify, ladder, kernel_scaling, dma_overlap or gflops.
    #[arg(long)]
    experiment: Option<Experiment>,
    /// Grid as XxYxZ, e.g. 128x128x64.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
    /// Single seed for field generation.
    #[arg(long)]
    seed: Option<u64>,
    /// Designs to run (v1..v7); repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<PipelineVariant>,
    /// Kernel counts; the largest also sets the DMA kernel pool.
    #[arg(long, value_delimiter = ',')]
    kernels: Vec<usize>,
    /// DMA chunk size in cells, rounded down to whole x-slabs.
    #[arg(long)]
    chunk_cells: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or markdown.
    #[arg(long)]
    format: Option<Format>,
    /// Chunk timeline CSV for the last DMA grid.
    #[arg(long)]
    timeline: Option<PathBuf>,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    if parts.len() != 3 {
        return Err(format!("expected XxYxZ, got `{s}`"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .trim()
            .parse()
            .map_err(|e| format!("bad extent `{p}`: {e}"))?;
    }
    Ok(out)
}

fn load_config(args: &Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(e) = args.experiment {
        cfg.experiment = e;
    }
    if let Some(d) = args.dims {
        cfg.dims = d;
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if !args.variant.is_empty() {
        cfg.variants = args.variant.clone();
    }
    if !args.kernels.is_empty() {
        cfg.kernels = args.kernels.clone();
        cfg.dma.num_kernels = *args.kernels.iter().max().expect("non-empty");
    }
    if let Some(c) = args.chunk_cells {
        cfg.dma.chunk_cells = Some(c);
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    if let Some(t) = &args.timeline {
        cfg.timeline = Some(t.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let report = run_experiment(cfg)?;
    let bytes = emit_report(&report, cfg.format)?;
    match &cfg.output {
        Some(path) => fs::write(path, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    if let (Some(path), Some(schedule)) = (&cfg.timeline, &report.timeline) {
        schedule.write_timeline_csv(fs::File::create(path)?)?;
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {}", c.name);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("advect: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) | Err(e @ Error::Domain(_)) => {
            eprintln!("advect: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("advect: {e}");
            ExitCode::from(1)
        }
    }
}
