//! Per-slice memory and compute workload recovered from an event trace.

use std::collections::BTreeMap;

use super::ArchParams;
use crate::error::{Error, Result};
use crate::pipeline::{EventKind, EventTrace, PipelineVariant, Stage, STENCIL_STREAM};

/// One memory transaction group on a port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Burst {
    pub beats: u32,
    pub values: u32,
    /// Single-beat access with its own request (non-contiguous pattern).
    pub per_access: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct SliceWork {
    pub first_in_block: bool,
    pub cells: u32,
    /// Planes fetched per field for this slice.
    pub planes: u32,
    /// Bursts per memory port in program order. Port `p` of a split design
    /// carries field `p`; a shared port carries every field in turn.
    pub reads: Vec<Vec<Burst>>,
    pub writes: Vec<Vec<Burst>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Workload {
    pub slices: Vec<SliceWork>,
    /// Block index of every slice.
    pub block_of: Vec<usize>,
    pub levels: u32,
    pub lanes: u32,
}

#[derive(Default)]
struct PortTally {
    req: u32,
    beat: u32,
}

fn bursts(
    variant: PipelineVariant,
    t: &PortTally,
    values_per_plane: u32,
    lanes: u32,
    what: &str,
) -> Result<Vec<Burst>> {
    if t.beat == 0 {
        return if t.req == 0 {
            Ok(Vec::new())
        } else {
            Err(Error::Config(format!("{what} requests without beats")))
        };
    }
    if variant.per_access_requests() {
        if t.req != t.beat {
            return Err(Error::Config(format!(
                "{what}: {} requests for {} per-access beats",
                t.req, t.beat
            )));
        }
        let per_plane = values_per_plane.div_ceil(lanes);
        let mut out = Vec::with_capacity(t.beat as usize);
        for b in 0..t.beat {
            let pos = (b % per_plane) * lanes;
            out.push(Burst {
                beats: 1,
                values: lanes.min(values_per_plane - pos),
                per_access: true,
            });
        }
        return Ok(out);
    }
    if t.req == 0 || !t.beat.is_multiple_of(t.req) {
        return Err(Error::Config(format!(
            "{what}: {} beats do not split into {} bursts",
            t.beat, t.req
        )));
    }
    let beats = t.beat / t.req;
    if beats != values_per_plane.div_ceil(lanes) {
        return Err(Error::Config(format!(
            "{what}: bursts of {beats} beats do not carry {values_per_plane}-value planes"
        )));
    }
    Ok(vec![
        Burst {
            beats,
            values: values_per_plane,
            per_access: false,
        };
        t.req as usize
    ])
}

/// Recovers the per-slice workload and checks it against `arch`.
pub(crate) fn extract(
    trace: &EventTrace,
    variant: PipelineVariant,
    arch: &ArchParams,
) -> Result<Workload> {
    let width = arch.port_width_bits;
    if width != 64 && width != 256 {
        return Err(Error::Config(format!(
            "port width {width} is neither 64 nor 256 bits"
        )));
    }
    let lanes = u32::from(width / 64);
    let mut per_seq: BTreeMap<
        u32,
        (
            SliceWork,
            BTreeMap<u16, PortTally>,
            BTreeMap<u16, PortTally>,
        ),
    > = BTreeMap::new();
    for e in trace.iter() {
        let entry = per_seq.entry(e.seq).or_default();
        match e.kind {
            EventKind::ReadReq
            | EventKind::ReadBeat
            | EventKind::WriteReq
            | EventKind::WriteBeat
            | EventKind::WriteResp => {
                if e.width_bits != width {
                    return Err(Error::Config(format!(
                        "{}-bit {} in trace but the port is {width} bits wide",
                        e.width_bits, e.kind
                    )));
                }
            }
            EventKind::StreamPush | EventKind::StreamPop if e.port != STENCIL_STREAM => {
                let lane = usize::from(e.port % 4);
                if lane >= arch.streams_per_field {
                    return Err(Error::Config(format!(
                            "trace uses stream lane {lane} but only {} streams per field are configured",
                            arch.streams_per_field
                        )));
                }
            }
            _ => {}
        }
        let count = e.count;
        match (e.stage, e.kind) {
            (Stage::Control, EventKind::BlockTransition) => entry.0.first_in_block = true,
            (Stage::Compute, EventKind::ComputeIter) => entry.0.cells += count,
            (_, EventKind::ReadReq) => entry.1.entry(e.port).or_default().req += count,
            (_, EventKind::ReadBeat) => entry.1.entry(e.port).or_default().beat += count,
            (_, EventKind::WriteReq) => entry.2.entry(e.port).or_default().req += count,
            (_, EventKind::WriteBeat) => entry.2.entry(e.port).or_default().beat += count,
            _ => {}
        }
    }
    if per_seq.is_empty() {
        return Err(Error::Config("empty trace".into()));
    }

    let ports = if variant.shared_port() { 1 } else { 3 };
    let mut slices = Vec::with_capacity(per_seq.len());
    let mut block_of = Vec::with_capacity(per_seq.len());
    let mut block = 0usize;
    for (n, (seq, (mut work, reads, writes))) in per_seq.into_iter().enumerate() {
        if seq as usize != n {
            return Err(Error::Config(format!("trace skips slice {n}")));
        }
        if work.cells == 0 {
            return Err(Error::Config(format!(
                "slice {seq} has no compute iterations"
            )));
        }
        if n == 0 && !work.first_in_block {
            return Err(Error::Config(
                "trace does not open with a block transition".into(),
            ));
        }
        if work.first_in_block && n > 0 {
            block += 1;
        }
        block_of.push(block);
        let what = |dir: &str, p: u16| format!("slice {seq} {dir} port {p}");
        work.reads = vec![Vec::new(); ports];
        for (p, tally) in &reads {
            let idx = usize::from(*p);
            if idx >= ports {
                return Err(Error::Config(format!(
                    "read on port {p} in a {ports}-port design"
                )));
            }
            work.reads[idx] = bursts(variant, tally, work.cells, lanes, &what("read", *p))?;
        }
        let first_port = if variant.shared_port() { 0 } else { 3 };
        work.writes = vec![Vec::new(); ports];
        for (p, tally) in &writes {
            let idx = usize::from(p.checked_sub(first_port).unwrap_or(u16::MAX));
            if idx >= ports {
                return Err(Error::Config(format!(
                    "write on port {p} in a {ports}-port design"
                )));
            }
            work.writes[idx] = bursts(variant, tally, work.cells, lanes, &what("write", *p))?;
        }
        let fetched: u32 = work.reads.iter().flatten().map(|b| b.values).sum();
        work.planes = fetched / (3 * work.cells);
        slices.push(work);
    }
    Ok(Workload {
        slices,
        block_of,
        levels: trace.levels(),
        lanes,
    })
}
