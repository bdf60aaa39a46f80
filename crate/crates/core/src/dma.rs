//! Chunked host/card transfers overlapped with kernel execution.
//!
//! The grid is cut into slab-aligned chunks. Every input transfer is issued
//! up front and completes in chunk order; an arriving chunk goes to the
//! lowest-numbered idle kernel or waits in a FIFO queue, and a finished
//! chunk's results are copied back as soon as the outbound link frees up.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryRule, GridDims};
use crate::pipeline::{build_trace, Geometry, PipelineVariant};
use crate::timing::{price_trace, ArchParams};

/// Three 64-bit fields per cell.
pub const BYTES_PER_CELL: u64 = 24;

/// Contiguous run of x-slabs `x_start..x_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Chunk {
    pub id: usize,
    pub x_start: usize,
    pub x_end: usize,
    pub cells: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

/// Splits `dims` into chunks of whole x-slabs holding at most `chunk_cells`
/// cells each; the last chunk takes the remainder.
pub fn plan_chunks(dims: GridDims, chunk_cells: u64) -> Result<Vec<Chunk>> {
    let slab = (dims.y * dims.z) as u64;
    if chunk_cells < slab {
        return Err(Error::Config(format!(
            "chunk of {chunk_cells} cells is smaller than one {slab}-cell slab"
        )));
    }
    let per_chunk = (chunk_cells / slab) as usize;
    let mut out = Vec::new();
    let mut x = 0;
    while x < dims.x {
        let end = (x + per_chunk).min(dims.x);
        let cells = (end - x) as u64 * slab;
        out.push(Chunk {
            id: out.len(),
            x_start: x,
            x_end: end,
            cells,
            bytes_in: cells * BYTES_PER_CELL,
            bytes_out: cells * BYTES_PER_CELL,
        });
        x = end;
    }
    Ok(out)
}

/// Chunk size giving `count` chunks (or fewer when there are fewer slabs).
pub fn chunk_cells_for(dims: GridDims, count: usize) -> u64 {
    let slabs = dims.x.div_ceil(count.max(1));
    (slabs * dims.y * dims.z) as u64
}

/// Kernel runtime as a function of chunk size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTimeModel {
    pub seconds_per_cell: f64,
    /// Fixed cost of every kernel invocation.
    pub launch_overhead_s: f64,
}

impl KernelTimeModel {
    pub fn seconds(&self, cells: u64) -> f64 {
        self.launch_overhead_s + self.seconds_per_cell * cells as f64
    }

    /// Per-cell rate of one uncontended kernel of `variant`, priced on a
    /// 64-cubed grid.
    pub fn from_timing(
        variant: PipelineVariant,
        arch: &ArchParams,
        launch_overhead_s: f64,
    ) -> Result<Self> {
        let dims = GridDims::new(64, 64, 64)?;
        let trace = build_trace(dims, variant, &Geometry::default(), BoundaryRule::default())?;
        let b = price_trace(&trace, variant, arch)?;
        Ok(KernelTimeModel {
            seconds_per_cell: b.total_ms * 1e-3 / dims.cells() as f64,
            launch_overhead_s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmaParams {
    pub host_to_card_gbps: f64,
    pub card_to_host_gbps: f64,
    /// When false both directions share one link.
    pub full_duplex: bool,
    pub num_kernels: usize,
    pub kernel: KernelTimeModel,
}

impl DmaParams {
    pub fn new(kernel: KernelTimeModel) -> Self {
        DmaParams {
            host_to_card_gbps: 7.0,
            card_to_host_gbps: 7.0,
            full_duplex: true,
            num_kernels: 8,
            kernel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.host_to_card_gbps) || !positive(self.card_to_host_gbps) {
            return Err(Error::Config("transfer bandwidths must be positive".into()));
        }
        if self.num_kernels == 0 {
            return Err(Error::Config("at least one kernel is required".into()));
        }
        let k = self.kernel;
        if !(k.seconds_per_cell.is_finite() && k.seconds_per_cell >= 0.0)
            || !(k.launch_overhead_s.is_finite() && k.launch_overhead_s >= 0.0)
        {
            return Err(Error::Config(
                "kernel time model must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn in_seconds(&self, bytes: u64) -> f64 {
        bytes as f64 / (self.host_to_card_gbps * 1e9)
    }

    fn out_seconds(&self, bytes: u64) -> f64 {
        bytes as f64 / (self.card_to_host_gbps * 1e9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChunkTimeline {
    pub chunk: usize,
    pub cells: u64,
    pub kernel: usize,
    pub in_start: f64,
    pub in_end: f64,
    pub compute_start: f64,
    pub compute_end: f64,
    pub out_start: f64,
    pub out_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmaSchedule {
    pub chunks: Vec<ChunkTimeline>,
    pub full_duplex: bool,
    pub total_s: f64,
    /// Makespan of the same chunks with all data already on the card.
    pub kernel_only_s: f64,
    /// Time at least one kernel was computing.
    pub compute_coverage_s: f64,
    /// Runtime not explained by kernel execution: `total_s - kernel_only_s`.
    pub overhead_s: f64,
    pub overhead_fraction: f64,
    pub transfer_in_s: f64,
    pub transfer_out_s: f64,
    pub compute_sum_s: f64,
}

impl DmaSchedule {
    /// Writes `chunk,phase,resource,start_s,end_s` rows, one per phase.
    pub fn write_timeline_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["chunk", "phase", "resource", "start_s", "end_s"])
            .map_err(io)?;
        let (inbound, outbound) = if self.full_duplex {
            ("h2c", "c2h")
        } else {
            ("link", "link")
        };
        for c in &self.chunks {
            let kernel = format!("kernel{}", c.kernel);
            for (phase, resource, s, e) in [
                ("in", inbound, c.in_start, c.in_end),
                ("compute", kernel.as_str(), c.compute_start, c.compute_end),
                ("out", outbound, c.out_start, c.out_end),
            ] {
                w.write_record([
                    c.chunk.to_string(),
                    phase.into(),
                    resource.into(),
                    format!("{s:.9}"),
                    format!("{e:.9}"),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Greedy assignment of chunks arriving at `ready` times to kernels.
/// Returns (kernel, start, end) per chunk.
fn assign(ready: &[f64], durations: &[f64], kernels: usize) -> Vec<(usize, f64, f64)> {
    let mut free = vec![0.0f64; kernels];
    let mut out = Vec::with_capacity(ready.len());
    for (&a, &d) in ready.iter().zip(durations) {
        // lowest idle kernel, else the first to come free (FIFO queue)
        let k = match free.iter().position(|&f| f <= a) {
            Some(k) => k,
            None => {
                let mut best = 0;
                for (k, &f) in free.iter().enumerate() {
                    if f < free[best] {
                        best = k;
                    }
                }
                best
            }
        };
        let start = a.max(free[k]);
        free[k] = start + d;
        out.push((k, start, start + d));
    }
    out
}

/// Simulates transfer/compute overlap for `chunks`.
pub fn simulate_overlap(chunks: &[Chunk], params: &DmaParams) -> Result<DmaSchedule> {
    params.validate()?;
    if chunks.is_empty() {
        return Err(Error::Config("no chunks to schedule".into()));
    }
    let durations: Vec<f64> = chunks
        .iter()
        .map(|c| params.kernel.seconds(c.cells))
        .collect();

    let mut ins = Vec::with_capacity(chunks.len());
    let mut link = 0.0f64;
    for c in chunks {
        let start = link;
        link += params.in_seconds(c.bytes_in);
        ins.push((start, link));
    }
    let ready: Vec<f64> = ins.iter().map(|&(_, e)| e).collect();
    let runs = assign(&ready, &durations, params.num_kernels);

    // results leave in completion order; a shared link finishes the inbound queue first
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.sort_by(|&a, &b| runs[a].2.total_cmp(&runs[b].2).then(a.cmp(&b)));
    let mut out_link = if params.full_duplex { 0.0 } else { link };
    let mut outs = vec![(0.0, 0.0); chunks.len()];
    for &i in &order {
        let start = out_link.max(runs[i].2);
        out_link = start + params.out_seconds(chunks[i].bytes_out);
        outs[i] = (start, out_link);
    }

    let timeline: Vec<ChunkTimeline> = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| ChunkTimeline {
            chunk: c.id,
            cells: c.cells,
            kernel: runs[i].0,
            in_start: ins[i].0,
            in_end: ins[i].1,
            compute_start: runs[i].1,
            compute_end: runs[i].2,
            out_start: outs[i].0,
            out_end: outs[i].1,
        })
        .collect();
    let total_s = timeline.iter().map(|c| c.out_end).fold(0.0, f64::max);

    let resident = assign(&vec![0.0; chunks.len()], &durations, params.num_kernels);
    let kernel_only_s = resident.iter().map(|r| r.2).fold(0.0, f64::max);

    let mut spans: Vec<(f64, f64)> = timeline
        .iter()
        .map(|c| (c.compute_start, c.compute_end))
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut coverage = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (s, e) in spans {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                coverage += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        coverage += ce - cs;
    }

    let overhead_s = (total_s - kernel_only_s).max(0.0);
    Ok(DmaSchedule {
        full_duplex: params.full_duplex,
        total_s,
        kernel_only_s,
        compute_coverage_s: coverage,
        overhead_s,
        overhead_fraction: if total_s > 0.0 {
            overhead_s / total_s
        } else {
            0.0
        },
        transfer_in_s: chunks.iter().map(|c| params.in_seconds(c.bytes_in)).sum(),
        transfer_out_s: chunks.iter().map(|c| params.out_seconds(c.bytes_out)).sum(),
        compute_sum_s: durations.iter().sum(),
        chunks: timeline,
    })
}
