//! Trace construction from the traversal plan alone, without touching data.
//!
//! Used by the timing experiments on grids too large to execute functionally.
//! Produces the same event totals as a functional run of the same design.

use super::trace::{read_stream, result_stream, EventKind, EventTrace, Stage, STENCIL_STREAM};
use super::{Geometry, KernelPlan, PipelineVariant};
use crate::error::Result;
use crate::grid::{partition_y, BoundaryRule, GridDims};

/// Bits in one stencil record: three fields of 27 doubles.
pub(crate) const STENCIL_BITS: u16 = 3 * 27 * 64;

/// Values of an `n`-value plane routed to stream lane `lane` of `lanes`.
pub(crate) fn lane_share(n: usize, lanes: usize, lane: usize) -> u32 {
    ((n + lanes - 1 - lane) / lanes) as u32
}

pub(crate) fn beats(n: usize, lanes: usize) -> u32 {
    n.div_ceil(lanes) as u32
}

/// Trace of one kernel covering `geometry`.
pub fn build_trace(
    dims: GridDims,
    variant: PipelineVariant,
    geometry: &Geometry,
    rule: BoundaryRule,
) -> Result<EventTrace> {
    let plan = KernelPlan::new(dims, geometry, rule)?;
    Ok(trace_for_plan(&plan, variant))
}

/// Traces of `kernels` kernels splitting the y range into equal partitions.
pub fn build_kernel_traces(
    dims: GridDims,
    variant: PipelineVariant,
    geometry: &Geometry,
    rule: BoundaryRule,
    kernels: usize,
) -> Result<Vec<EventTrace>> {
    partition_y(dims, kernels)?
        .into_iter()
        .map(|r| build_trace(dims, variant, &geometry.with_y_range(r.start, r.end), rule))
        .collect()
}

pub(crate) fn trace_for_plan(plan: &KernelPlan, v: PipelineVariant) -> EventTrace {
    let mut t = EventTrace::new();
    t.set_levels(plan.dims.z as u32);
    let width = v.port_width_bits();
    let lanes = v.lanes();
    let spf = v.streams_per_field();
    for step in &plan.steps {
        let s = step.seq;
        let n = plan.slice_cells(step);
        let planes = step.loads.len() as u32;
        if step.first_in_block {
            t.record(Stage::Control, EventKind::BlockTransition, 0, 0, s, 1);
        }

        // memory reads
        if v.shared_port() {
            for _ in 0..planes {
                for _ in 0..3 {
                    t.record(Stage::Read, EventKind::ReadReq, 0, width, s, 1);
                    t.record(Stage::Read, EventKind::ReadBeat, 0, width, s, n as u32);
                }
            }
        } else if planes > 0 {
            let beat_count = planes * beats(n, lanes);
            let reqs = if v.per_access_requests() {
                beat_count
            } else {
                planes
            };
            for f in 0..3 {
                let port = v.memory_read_port(f);
                t.record(Stage::Read, EventKind::ReadReq, port, width, s, reqs);
                t.record(Stage::Read, EventKind::ReadBeat, port, width, s, beat_count);
            }
        }

        if v.is_sequential() {
            t.record(Stage::Compute, EventKind::ComputeIter, 0, 0, s, n as u32);
        } else {
            for f in 0..3 {
                for lane in 0..spf {
                    let c = planes * lane_share(n, spf, lane);
                    t.record(
                        Stage::Read,
                        EventKind::StreamPush,
                        read_stream(f, lane),
                        64,
                        s,
                        c,
                    );
                    t.record(
                        Stage::Prepare,
                        EventKind::StreamPop,
                        read_stream(f, lane),
                        64,
                        s,
                        c,
                    );
                }
            }
            t.record(Stage::Prepare, EventKind::ComputeIter, 0, 0, s, n as u32);
            t.record(
                Stage::Prepare,
                EventKind::StreamPush,
                STENCIL_STREAM,
                STENCIL_BITS,
                s,
                n as u32,
            );
            t.record(
                Stage::Compute,
                EventKind::StreamPop,
                STENCIL_STREAM,
                STENCIL_BITS,
                s,
                n as u32,
            );
            t.record(Stage::Compute, EventKind::ComputeIter, 0, 0, s, n as u32);
            for f in 0..3 {
                for lane in 0..spf {
                    let c = lane_share(n, spf, lane);
                    t.record(
                        Stage::Compute,
                        EventKind::StreamPush,
                        result_stream(f, lane),
                        64,
                        s,
                        c,
                    );
                    t.record(
                        Stage::Write,
                        EventKind::StreamPop,
                        result_stream(f, lane),
                        64,
                        s,
                        c,
                    );
                }
            }
        }

        // memory writes
        let beat_count = beats(n, lanes);
        let (reqs, resps) = if v.per_access_requests() {
            (beat_count, beat_count)
        } else {
            (1, 1)
        };
        for f in 0..3 {
            let port = v.memory_write_port(f);
            t.record(Stage::Write, EventKind::WriteReq, port, width, s, reqs);
            t.record(
                Stage::Write,
                EventKind::WriteBeat,
                port,
                width,
                s,
                beat_count,
            );
            t.record(Stage::Write, EventKind::WriteResp, port, width, s, resps);
        }
    }
    t
}
