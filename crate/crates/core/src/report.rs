//! Experiment definitions and table reports.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::advection::{naive_advect, AdvectionCoefficients};
use crate::dma::{
    chunk_cells_for, plan_chunks, simulate_overlap, DmaParams, DmaSchedule, KernelTimeModel,
};
use crate::error::{Error, Result};
use crate::grid::{generate_fields, BoundaryRule, GridDims};
use crate::pipeline::{build_kernel_traces, build_trace, run_staged, Geometry, PipelineVariant};
use crate::timing::{gflops, price_trace, simulate_multikernel, ArchParams, TimingBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Verify,
    Ladder,
    KernelScaling,
    DmaOverlap,
    Gflops,
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "verify" => Ok(Experiment::Verify),
            "ladder" => Ok(Experiment::Ladder),
            "kernel_scaling" => Ok(Experiment::KernelScaling),
            "dma_overlap" => Ok(Experiment::DmaOverlap),
            "gflops" => Ok(Experiment::Gflops),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// Host transfer settings for the DMA and GFLOP/s experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmaSettings {
    pub host_to_card_gbps: f64,
    pub card_to_host_gbps: f64,
    pub full_duplex: bool,
    pub num_kernels: usize,
    pub launch_overhead_s: f64,
    /// Overrides the per-cell kernel time priced from `variant`.
    pub seconds_per_cell: Option<f64>,
    pub variant: PipelineVariant,
    /// Chunks per grid, used unless `chunk_cells` is set.
    pub chunks: usize,
    pub chunk_cells: Option<u64>,
}

impl Default for DmaSettings {
    fn default() -> Self {
        DmaSettings {
            host_to_card_gbps: 7.0,
            card_to_host_gbps: 7.0,
            full_duplex: true,
            num_kernels: 8,
            launch_overhead_s: 0.0,
            seconds_per_cell: None,
            variant: PipelineVariant::V7Wide256Quad,
            chunks: 64,
            chunk_cells: None,
        }
    }
}

impl DmaSettings {
    /// Bandwidth and launch cost fitted to the target overhead envelope: about 5% at 1M cells, about 40% at 67M.
    pub fn calibrated() -> Self {
        DmaSettings {
            host_to_card_gbps: 34.0,
            card_to_host_gbps: 34.0,
            launch_overhead_s: 0.3e-3,
            ..DmaSettings::default()
        }
    }

    pub fn params(&self, arch: &ArchParams) -> Result<DmaParams> {
        let kernel = match self.seconds_per_cell {
            Some(s) => KernelTimeModel {
                seconds_per_cell: s,
                launch_overhead_s: self.launch_overhead_s,
            },
            None => KernelTimeModel::from_timing(
                self.variant,
                &arch.clone().with_variant(self.variant),
                self.launch_overhead_s,
            )?,
        };
        let p = DmaParams {
            host_to_card_gbps: self.host_to_card_gbps,
            card_to_host_gbps: self.card_to_host_gbps,
            full_duplex: self.full_duplex,
            num_kernels: self.num_kernels,
            kernel,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn schedule(&self, dims: GridDims, params: &DmaParams) -> Result<DmaSchedule> {
        let chunk = self
            .chunk_cells
            .unwrap_or_else(|| chunk_cells_for(dims, self.chunks));
        simulate_overlap(&plan_chunks(dims, chunk)?, params)
    }
}

/// Square grids of 64 levels, 1M to 268M cells.
pub fn default_grid_sizes() -> Vec<[usize; 3]> {
    vec![
        [128, 128, 64],
        [256, 256, 64],
        [512, 512, 64],
        [1024, 1024, 64],
        [2048, 2048, 64],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dims: [usize; 3],
    pub seeds: Vec<u64>,
    /// Empty selects every variant (kernel scaling defaults to v5 to v7).
    pub variants: Vec<PipelineVariant>,
    pub kernels: Vec<usize>,
    pub grid_sizes: Vec<[usize; 3]>,
    pub rule: BoundaryRule,
    pub arch: ArchParams,
    pub dma: DmaSettings,
    pub format: Format,
    pub output: Option<PathBuf>,
    /// Side file for the chunk timeline of the last DMA grid.
    pub timeline: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Ladder,
            dims: [128, 128, 64],
            seeds: vec![1],
            variants: Vec::new(),
            kernels: vec![1, 2, 4, 8],
            grid_sizes: default_grid_sizes(),
            rule: BoundaryRule::default(),
            arch: ArchParams::default(),
            dma: DmaSettings::default(),
            format: Format::Csv,
            output: None,
            timeline: None,
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<GridDims> {
        GridDims::new(self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn selected_variants(&self) -> Vec<PipelineVariant> {
        if !self.variants.is_empty() {
            return self.variants.clone();
        }
        match self.experiment {
            Experiment::KernelScaling => vec![
                PipelineVariant::V5DataflowXOpt,
                PipelineVariant::V6Wide256,
                PipelineVariant::V7Wide256Quad,
            ],
            _ => PipelineVariant::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        for g in &self.grid_sizes {
            GridDims::new(g[0], g[1], g[2])?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.kernels.iter().any(|&k| !(1..=12).contains(&k)) {
            return Err(Error::Config(
                "kernel counts must be between 1 and 12".into(),
            ));
        }
        let mut arch = self.arch.clone();
        arch.num_kernels = 1;
        arch.validate()
    }
}

/// Rows of formatted cells under a header.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let parse = |e: csv::Error| Error::Parse(e.to_string());
        let columns = r
            .headers()
            .map_err(parse)?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(parse)?.iter().map(String::from).collect());
        }
        Ok(Table { columns, rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: Experiment,
    pub table: Table,
    pub checks: Vec<Check>,
    pub timeline: Option<DmaSchedule>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(checks: &mut Vec<Check>, name: impl Into<String>, passed: bool) {
    checks.push(Check {
        name: name.into(),
        passed,
    });
}

fn ms(v: f64) -> String {
    format!("{v:.4}")
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Verify => verify(cfg),
        Experiment::Ladder => ladder(cfg),
        Experiment::KernelScaling => kernel_scaling(cfg),
        Experiment::DmaOverlap => dma_overlap(cfg),
        Experiment::Gflops => gflops_table(cfg),
    }
}

fn verify(cfg: &ExperimentConfig) -> Result<Report> {
    let dims = cfg.grid()?;
    let coeff = AdvectionCoefficients::uniform(dims.z);
    let mut table = Table::new(&["variant", "seed", "result"]);
    let mut checks = Vec::new();
    for &seed in &cfg.seeds {
        let [u, v, w] = generate_fields(dims, seed);
        let want = naive_advect(&u, &v, &w, &coeff, cfg.rule)?;
        for variant in cfg.selected_variants() {
            let run = run_staged(&u, &v, &w, &coeff, variant, &Geometry::default(), cfg.rule)?;
            let ok = run.sources.bit_eq(&want);
            table.push(vec![
                variant.tag().into(),
                seed.to_string(),
                if ok { "pass" } else { "fail" }.into(),
            ]);
            check(&mut checks, format!("{variant} seed {seed}"), ok);
        }
    }
    Ok(Report {
        experiment: Experiment::Verify,
        table,
        checks,
        timeline: None,
    })
}

/// Price every variant on `dims` under `arch` (variant defaults applied).
pub fn ladder_rows(
    dims: GridDims,
    variants: &[PipelineVariant],
    arch: &ArchParams,
    rule: BoundaryRule,
) -> Result<Vec<TimingBreakdown>> {
    variants
        .iter()
        .map(|&v| {
            let trace = build_trace(dims, v, &Geometry::default(), rule)?;
            price_trace(&trace, v, &arch.clone().with_variant(v))
        })
        .collect()
}

/// Orderings the optimisation ladder should show; empty unless all seven
/// designs are present.
pub fn ladder_checks(rows: &[TimingBreakdown]) -> Vec<Check> {
    let mut checks = Vec::new();
    let find = |v: PipelineVariant| rows.iter().find(|r| r.variant == v);
    let mut by = Vec::new();
    for v in PipelineVariant::ALL {
        match find(v) {
            Some(r) => by.push(r),
            None => return checks,
        }
    }
    let t: Vec<f64> = by.iter().map(|r| r.total_ms).collect();
    let f: Vec<f64> = by.iter().map(|r| r.compute_fraction).collect();
    check(&mut checks, "v2 faster than v1", t[1] < t[0]);
    check(&mut checks, "v3 under half of v2", t[2] < 0.5 * t[1]);
    check(&mut checks, "v4 slower than v3", t[3] > t[2]);
    check(&mut checks, "v5 faster than v3", t[4] < t[2]);
    check(&mut checks, "v6 under 0.45 of v5", t[5] < 0.45 * t[4]);
    check(&mut checks, "v7 no slower than v6", t[6] <= t[5]);
    check(
        &mut checks,
        "compute fraction rises v1 < v3 < v6 <= v7",
        f[0] < f[2] && f[2] < f[5] && f[5] <= f[6],
    );
    check(
        &mut checks,
        "v7 compute fraction at least 0.75",
        f[6] >= 0.75,
    );
    checks
}

fn ladder(cfg: &ExperimentConfig) -> Result<Report> {
    let rows = ladder_rows(cfg.grid()?, &cfg.selected_variants(), &cfg.arch, cfg.rule)?;
    let mut table = Table::new(&[
        "variant",
        "total_ms",
        "load_ms",
        "compute_ms",
        "write_ms",
        "fraction",
    ]);
    for r in &rows {
        table.push(vec![
            r.variant.tag().into(),
            ms(r.total_ms),
            ms(r.load_ms),
            ms(r.compute_ms),
            ms(r.write_ms),
            ms(r.compute_fraction),
        ]);
    }
    Ok(Report {
        experiment: Experiment::Ladder,
        table,
        checks: ladder_checks(&rows),
        timeline: None,
    })
}

fn kernel_scaling(cfg: &ExperimentConfig) -> Result<Report> {
    let dims = cfg.grid()?;
    let mut table = Table::new(&["variant", "kernels", "aggregate_ms", "wall_ms", "slowdown"]);
    let mut checks = Vec::new();
    for v in cfg.selected_variants() {
        let arch = cfg.arch.clone().with_variant(v);
        let run = |n: usize| -> Result<_> {
            let traces = build_kernel_traces(dims, v, &Geometry::default(), cfg.rule, n)?;
            simulate_multikernel(
                &traces,
                v,
                &ArchParams {
                    num_kernels: n,
                    ..arch.clone()
                },
            )
        };
        let base = run(1)?.aggregate_ms;
        for &n in &cfg.kernels {
            let r = run(n)?;
            table.push(vec![
                v.tag().into(),
                n.to_string(),
                ms(r.aggregate_ms),
                ms(r.wall_ms),
                ms(r.slowdown(base)),
            ]);
            check(
                &mut checks,
                format!("{v} x{n} contended no faster"),
                r.aggregate_ms >= base * (1.0 - 1e-9),
            );
        }
    }
    Ok(Report {
        experiment: Experiment::KernelScaling,
        table,
        checks,
        timeline: None,
    })
}

fn dma_runs(cfg: &ExperimentConfig) -> Result<(DmaParams, Vec<(GridDims, DmaSchedule)>)> {
    let params = cfg.dma.params(&cfg.arch)?;
    let mut out = Vec::new();
    for g in &cfg.grid_sizes {
        let dims = GridDims::new(g[0], g[1], g[2])?;
        out.push((dims, cfg.dma.schedule(dims, &params)?));
    }
    Ok((params, out))
}

fn dma_overlap(cfg: &ExperimentConfig) -> Result<Report> {
    let (_, runs) = dma_runs(cfg)?;
    let mut table = Table::new(&[
        "cells",
        "chunks",
        "total_ms",
        "kernel_only_ms",
        "overhead_ms",
        "overhead_fraction",
    ]);
    let mut checks = Vec::new();
    for (dims, s) in &runs {
        table.push(vec![
            dims.cells().to_string(),
            s.chunks.len().to_string(),
            ms(s.total_s * 1e3),
            ms(s.kernel_only_s * 1e3),
            ms(s.overhead_s * 1e3),
            ms(s.overhead_fraction),
        ]);
        let lower = s
            .transfer_in_s
            .max(s.transfer_out_s)
            .max(s.compute_sum_s / cfg.dma.num_kernels as f64);
        let upper = s.transfer_in_s + s.compute_sum_s + s.transfer_out_s;
        let eps = 1e-12;
        check(
            &mut checks,
            format!("{} cells within envelope", dims.cells()),
            s.total_s + eps >= lower && s.total_s <= upper + eps,
        );
    }
    Ok(Report {
        experiment: Experiment::DmaOverlap,
        table,
        checks,
        timeline: runs.last().map(|(_, s)| s.clone()),
    })
}

fn gflops_table(cfg: &ExperimentConfig) -> Result<Report> {
    let (params, runs) = dma_runs(cfg)?;
    let mut table = Table::new(&[
        "cells",
        "single_kernel_ms",
        "single_kernel_gflops",
        "kernel_only_ms",
        "kernel_gflops",
        "total_ms",
        "total_gflops",
    ]);
    for (dims, s) in &runs {
        let cells = dims.cells() as u64;
        let single = params.kernel.seconds(cells);
        table.push(vec![
            cells.to_string(),
            ms(single * 1e3),
            format!("{:.2}", gflops(cells, single)?),
            ms(s.kernel_only_s * 1e3),
            format!("{:.2}", gflops(cells, s.kernel_only_s)?),
            ms(s.total_s * 1e3),
            format!("{:.2}", gflops(cells, s.total_s)?),
        ]);
    }
    Ok(Report {
        experiment: Experiment::Gflops,
        table,
        checks: Vec::new(),
        timeline: None,
    })
}

/// Renders the report table.
pub fn emit_report(report: &Report, format: Format) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_table(&report.table, format, &mut out)?;
    Ok(out)
}

pub fn write_table<W: Write>(table: &Table, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let io = |e: csv::Error| Error::Io(e.to_string());
            w.write_record(&table.columns).map_err(io)?;
            for row in &table.rows {
                w.write_record(row).map_err(io)?;
            }
            w.flush()?;
        }
        Format::Markdown => {
            writeln!(out, "| {} |", table.columns.join(" | "))?;
            writeln!(out, "|{}", "---|".repeat(table.columns.len()))?;
            for row in &table.rows {
                writeln!(out, "| {} |", row.join(" | "))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        let r = Report {
            experiment: Experiment::Verify,
            table: t.clone(),
            checks: Vec::new(),
            timeline: None,
        };
        assert_eq!(
            Table::from_csv(&emit_report(&r, Format::Csv).unwrap()).unwrap(),
            t
        );
    }

    #[test]
    fn markdown_pipe_table() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        let mut out = Vec::new();
        write_table(&t, Format::Markdown, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "| a | b |\n|---|---|\n| 1 | 2 |\n"
        );
    }

    #[test]
    fn config_from_toml() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            experiment = "kernel_scaling"
            dims = [64, 64, 64]
            variants = ["v6", "v7"]
            [arch]
            bank_channels = 8
            [dma]
            host_to_card_gbps = 12.5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::KernelScaling);
        assert_eq!(
            cfg.variants,
            vec![PipelineVariant::V6Wide256, PipelineVariant::V7Wide256Quad]
        );
        assert_eq!(cfg.arch.bank_channels, 8);
        assert_eq!(cfg.arch.read_req_cycles, 25);
        assert_eq!(cfg.dma.host_to_card_gbps, 12.5);
        assert_eq!(cfg.dma.chunks, 64);
    }
}
