//! Cycle-level pricing of kernel event traces.

mod engine;
mod work;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use engine::{Category, Segment};

use crate::error::{Error, Result};
use crate::pipeline::{EventTrace, PipelineVariant};

/// Hardware and memory-system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchParams {
    pub clock_mhz: f64,
    /// Latency from issuing a burst read request to its first beat.
    pub read_req_cycles: u64,
    /// Port occupancy per memory beat, in either direction.
    pub read_beat_cycles: u64,
    /// Request plus response overhead added after the last beat of a write burst.
    pub write_req_plus_resp_cycles: u64,
    pub per_access_read_latency_noncontig: u64,
    pub per_access_write_latency_noncontig: u64,
    /// Latency of one access inside a pipelined contiguous loop.
    pub pipelined_access_latency: u64,
    pub port_width_bits: u16,
    /// Extra port occupancy per read beat when the port is narrower than 256 bits.
    pub width_converter_penalty_cycles: u64,
    pub stream_depth: usize,
    pub streams_per_field: usize,
    /// Cycles per iteration of the dataflow compute stage.
    pub compute_ii: f64,
    /// Cycles per iteration of the sequential loop nests.
    pub sequential_compute_ii: f64,
    pub compute_depth: u64,
    pub num_kernels: usize,
    pub dram_banks: usize,
    /// Concurrent transfers each bank serves (shared by all kernels).
    pub bank_channels: usize,
    /// Beats per cycle a kernel can move in each direction.
    pub kernel_link_beats: u32,
    /// Longest run of beats a port may hold a bank channel for.
    pub segment_beats: u32,
}

impl Default for ArchParams {
    fn default() -> Self {
        ArchParams {
            clock_mhz: 310.0,
            read_req_cycles: 25,
            read_beat_cycles: 1,
            write_req_plus_resp_cycles: 36,
            per_access_read_latency_noncontig: 28,
            per_access_write_latency_noncontig: 37,
            pipelined_access_latency: 3,
            port_width_bits: 64,
            width_converter_penalty_cycles: 1,
            stream_depth: 16,
            streams_per_field: 1,
            compute_ii: 1.0,
            sequential_compute_ii: 1.5,
            compute_depth: 70,
            num_kernels: 1,
            dram_banks: 2,
            bank_channels: 12,
            kernel_link_beats: 1,
            segment_beats: 16,
        }
    }
}

impl ArchParams {
    /// Defaults with the port width and stream count of `variant`.
    pub fn for_variant(variant: PipelineVariant) -> Self {
        ArchParams::default().with_variant(variant)
    }

    pub fn with_variant(self, variant: PipelineVariant) -> Self {
        ArchParams {
            port_width_bits: variant.port_width_bits(),
            streams_per_field: variant.streams_per_field(),
            ..self
        }
    }

    pub fn ii_for(&self, variant: PipelineVariant) -> f64 {
        if variant.is_sequential() {
            self.sequential_compute_ii
        } else {
            self.compute_ii
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return bad("clock_mhz must be positive");
        }
        let ii_ok = |ii: f64| ii.is_finite() && ii > 0.0;
        if !ii_ok(self.compute_ii) || !ii_ok(self.sequential_compute_ii) {
            return bad("compute_ii and sequential_compute_ii must be positive");
        }
        if self.port_width_bits != 64 && self.port_width_bits != 256 {
            return bad("port_width_bits must be 64 or 256");
        }
        if self.streams_per_field != 1 && self.streams_per_field != 4 {
            return bad("streams_per_field must be 1 or 4");
        }
        if !(1..=12).contains(&self.num_kernels) {
            return bad("num_kernels must be between 1 and 12");
        }
        if self.stream_depth == 0 || self.dram_banks == 0 || self.bank_channels == 0 {
            return bad("stream_depth, dram_banks and bank_channels must be at least 1");
        }
        if self.kernel_link_beats == 0 || self.segment_beats == 0 {
            return bad("kernel_link_beats and segment_beats must be at least 1");
        }
        Ok(())
    }

    pub fn cycles_to_ms(&self, cycles: u64) -> f64 {
        cycles as f64 / (self.clock_mhz * 1e3)
    }

    /// Latency of one memory access of the given direction and pattern.
    pub fn access_latency(&self, write: bool, contiguous: bool) -> u64 {
        match (write, contiguous) {
            (_, true) => self.pipelined_access_latency,
            (false, false) => self.per_access_read_latency_noncontig,
            (true, false) => self.per_access_write_latency_noncontig,
        }
    }
}

/// Milliseconds per stage for one kernel run.
///
/// `load_ms`, `compute_ms`, `write_ms`, `block_transition_ms` and `idle_ms`
/// partition `total_ms`: every cycle goes to the highest-priority active class
/// (transition, compute, load, write). `busy` holds the non-exclusive time each
/// stage had work in progress.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingBreakdown {
    pub variant: PipelineVariant,
    pub total_cycles: u64,
    pub total_ms: f64,
    pub load_ms: f64,
    pub compute_ms: f64,
    pub write_ms: f64,
    pub block_transition_ms: f64,
    pub idle_ms: f64,
    pub compute_fraction: f64,
    pub busy: StageBusy,
    /// Cycles per exclusive class, in [`Category::ALL`] order.
    pub attribution_cycles: [u64; 5],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageBusy {
    pub read_ms: f64,
    pub prepare_ms: f64,
    pub compute_ms: f64,
    pub write_ms: f64,
}

impl TimingBreakdown {
    fn from_outcome(
        variant: PipelineVariant,
        arch: &ArchParams,
        o: &engine::KernelOutcome,
    ) -> Self {
        let ms = |c: u64| arch.cycles_to_ms(c);
        let [transition, compute, load, write, idle] = o.attribution;
        let total_ms = ms(o.cycles);
        TimingBreakdown {
            variant,
            total_cycles: o.cycles,
            total_ms,
            load_ms: ms(load),
            compute_ms: ms(compute),
            write_ms: ms(write),
            block_transition_ms: ms(transition),
            idle_ms: ms(idle),
            compute_fraction: if o.cycles == 0 {
                0.0
            } else {
                compute as f64 / o.cycles as f64
            },
            busy: StageBusy {
                read_ms: ms(o.busy[0]),
                prepare_ms: ms(o.busy[1]),
                compute_ms: ms(o.busy[2]),
                write_ms: ms(o.busy[3]),
            },
            attribution_cycles: o.attribution,
        }
    }

    pub fn cycles_in(&self, category: Category) -> u64 {
        let idx = Category::ALL
            .iter()
            .position(|c| *c == category)
            .expect("known category");
        self.attribution_cycles[idx]
    }
}

/// Prices one kernel's trace.
pub fn price_trace(
    trace: &EventTrace,
    variant: PipelineVariant,
    arch: &ArchParams,
) -> Result<TimingBreakdown> {
    Ok(price_trace_segments(trace, variant, arch, false)?.0)
}

/// Like [`price_trace`], also returning the category timeline.
pub fn price_trace_segments(
    trace: &EventTrace,
    variant: PipelineVariant,
    arch: &ArchParams,
    record: bool,
) -> Result<(TimingBreakdown, Vec<Segment>)> {
    arch.validate()?;
    let w = work::extract(trace, variant, arch)?;
    let mut out = engine::simulate(std::slice::from_ref(&w), variant, arch, record)?;
    let o = out.pop().expect("one kernel simulated");
    Ok((TimingBreakdown::from_outcome(variant, arch, &o), o.segments))
}

/// Outcome of kernels sharing DRAM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContentionResult {
    pub kernels: Vec<TimingBreakdown>,
    /// Sum of kernel runtimes.
    pub aggregate_ms: f64,
    /// Runtime of the slowest kernel.
    pub wall_ms: f64,
}

impl ContentionResult {
    pub fn per_kernel_ms(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.total_ms).collect()
    }

    /// Aggregate runtime relative to a baseline aggregate (usually one kernel).
    pub fn slowdown(&self, baseline_ms: f64) -> f64 {
        self.aggregate_ms / baseline_ms
    }
}

/// Simulates kernels running concurrently, one trace each.
pub fn simulate_multikernel(
    traces: &[EventTrace],
    variant: PipelineVariant,
    arch: &ArchParams,
) -> Result<ContentionResult> {
    arch.validate()?;
    if traces.is_empty() || traces.len() > 12 {
        return Err(Error::Config(format!(
            "{} kernels requested; 1 to 12 supported",
            traces.len()
        )));
    }
    let works = traces
        .iter()
        .map(|t| work::extract(t, variant, arch))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = engine::simulate(&works, variant, arch, false)?;
    let kernels: Vec<TimingBreakdown> = outcomes
        .iter()
        .map(|o| TimingBreakdown::from_outcome(variant, arch, o))
        .collect();
    Ok(ContentionResult {
        aggregate_ms: kernels.iter().map(|k| k.total_ms).sum(),
        wall_ms: kernels.iter().map(|k| k.total_ms).fold(0.0, f64::max),
        kernels,
    })
}

/// Closed-form compute-stage cycles: `compute_depth + ceil(II * (n - 1))` per
/// contiguous pipelined run. Runs span a slice for drained designs and a
/// block otherwise.
pub fn compute_stage_cycles(
    trace: &EventTrace,
    variant: PipelineVariant,
    arch: &ArchParams,
) -> Result<u64> {
    arch.validate()?;
    let w = work::extract(trace, variant, arch)?;
    let per_slice = matches!(
        engine::barrier_for(variant),
        engine::Barrier::Sequential | engine::Barrier::SliceDrain
    );
    let mut runs: Vec<u64> = Vec::new();
    for (s, slice) in w.slices.iter().enumerate() {
        if per_slice || s == 0 || w.block_of[s] != w.block_of[s - 1] {
            runs.push(0);
        }
        *runs.last_mut().expect("run opened") += u64::from(slice.cells);
    }
    Ok(runs
        .iter()
        .map(|&n| arch.compute_depth + (arch.ii_for(variant) * (n - 1) as f64).ceil() as u64)
        .sum())
}

pub fn compute_stage_ms(
    trace: &EventTrace,
    variant: PipelineVariant,
    arch: &ArchParams,
) -> Result<f64> {
    Ok(arch.cycles_to_ms(compute_stage_cycles(trace, variant, arch)?))
}

/// Sustained double-precision rate for `cells` cells in `runtime_s` seconds.
pub fn gflops(cells: u64, runtime_s: f64) -> Result<f64> {
    if !(runtime_s.is_finite() && runtime_s > 0.0) {
        return Err(Error::Domain(format!(
            "runtime must be positive, got {runtime_s}"
        )));
    }
    Ok(crate::advection::FLOPS_PER_CELL as f64 * cells as f64 / runtime_s / 1e9)
}

/// Writes `variant,total_ms,load_ms,compute_ms,write_ms,fraction` rows.
pub fn write_breakdown_csv<W: Write>(rows: &[TimingBreakdown], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variant",
        "total_ms",
        "load_ms",
        "compute_ms",
        "write_ms",
        "fraction",
    ])
    .map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.variant.tag().to_string(),
            format!("{:.4}", r.total_ms),
            format!("{:.4}", r.load_ms),
            format!("{:.4}", r.compute_ms),
            format!("{:.4}", r.write_ms),
            format!("{:.4}", r.compute_fraction),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
