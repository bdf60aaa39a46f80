//! Run-length encoded memory/compute event log emitted by kernel executions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

/// Pipeline stage that issued an event. Sequential designs use only the
/// read, compute and write stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Read,
    Prepare,
    Compute,
    Write,
    Control,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Read,
        Stage::Prepare,
        Stage::Compute,
        Stage::Write,
        Stage::Control,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Read => "read",
            Stage::Prepare => "prepare",
            Stage::Compute => "compute",
            Stage::Write => "write",
            Stage::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    ReadReq,
    ReadBeat,
    WriteReq,
    WriteBeat,
    WriteResp,
    ComputeIter,
    StreamPush,
    StreamPop,
    BlockTransition,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::ReadReq => "read_req",
            EventKind::ReadBeat => "read_beat",
            EventKind::WriteReq => "write_req",
            EventKind::WriteBeat => "write_beat",
            EventKind::WriteResp => "write_resp",
            EventKind::ComputeIter => "compute_iter",
            EventKind::StreamPush => "stream_push",
            EventKind::StreamPop => "stream_pop",
            EventKind::BlockTransition => "block_transition",
        }
    }
}

impl EventKind {
    /// Memory transactions on one port share a class so that a request
    /// never merges across an intervening beat; stream and compute events
    /// each merge separately.
    fn merge_class(self) -> u8 {
        match self {
            EventKind::ReadReq
            | EventKind::ReadBeat
            | EventKind::WriteReq
            | EventKind::WriteBeat
            | EventKind::WriteResp => 0,
            other => other as u8 + 1,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Memory port numbering: input fields use 0..3, outputs 3..6. The
/// monolithic design shares port 0 for everything.
pub fn read_port(field: usize) -> u16 {
    field as u16
}

pub fn write_port(field: usize) -> u16 {
    3 + field as u16
}

/// Stream channel numbering. Each field owns four stream slots on the
/// read-to-prepare and compute-to-write links; unused slots stay empty.
pub fn read_stream(field: usize, lane: usize) -> u16 {
    (field * 4 + lane) as u16
}

pub const STENCIL_STREAM: u16 = 12;

pub fn result_stream(field: usize, lane: usize) -> u16 {
    (16 + field * 4 + lane) as u16
}

/// `count` consecutive identical events.
///
/// `seq` is the kernel-global slice ordinal the event belongs to (a read that
/// fetches a plane belongs to the slice iteration that consumes it).
/// `port` is a memory port for memory events and a stream id for stream events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub stage: Stage,
    pub kind: EventKind,
    pub port: u16,
    pub width_bits: u16,
    pub seq: u32,
    pub count: u32,
}

/// Key used to compare traces independently of how concurrent ports interleave.
pub type SummaryKey = (Stage, u32, u16, EventKind, u16);

/// Per-stage ordered event runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    lanes: [Vec<TraceEvent>; 5],
    last_on_port: [HashMap<(u16, u32, u8), usize>; 5],
    levels: u32,
}

impl EventTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `count` events, merging with the previous run on the same
    /// port and slice when the kind and width match.
    pub fn record(
        &mut self,
        stage: Stage,
        kind: EventKind,
        port: u16,
        width_bits: u16,
        seq: u32,
        count: u32,
    ) {
        if count == 0 {
            return;
        }
        let lane = stage as usize;
        let key = (port, seq, kind.merge_class());
        if let Some(&at) = self.last_on_port[lane].get(&key) {
            let prev = &mut self.lanes[lane][at];
            if prev.kind == kind && prev.width_bits == width_bits {
                prev.count += count;
                return;
            }
        }
        self.last_on_port[lane].insert(key, self.lanes[lane].len());
        self.lanes[lane].push(TraceEvent {
            stage,
            kind,
            port,
            width_bits,
            seq,
            count,
        });
    }

    /// Vertical extent of the traced slices; 0 when unknown.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn set_levels(&mut self, z: u32) {
        self.levels = z;
    }

    /// Runs issued by one stage, in program order.
    pub fn stage_events(&self, stage: Stage) -> &[TraceEvent] {
        &self.lanes[stage as usize]
    }

    /// All runs, stage by stage.
    pub fn iter(&self) -> impl Iterator<Item = &TraceEvent> {
        self.lanes.iter().flatten()
    }

    pub fn run_count(&self) -> usize {
        self.lanes.iter().map(Vec::len).sum()
    }

    /// Total events of `kind` (run lengths summed).
    pub fn count(&self, kind: EventKind) -> u64 {
        self.iter()
            .filter(|e| e.kind == kind)
            .map(|e| u64::from(e.count))
            .sum()
    }

    pub fn count_where(&self, pred: impl Fn(&TraceEvent) -> bool) -> u64 {
        self.iter()
            .filter(|e| pred(e))
            .map(|e| u64::from(e.count))
            .sum()
    }

    /// Event totals keyed by (stage, slice, port, kind, width).
    pub fn summary(&self) -> BTreeMap<SummaryKey, u64> {
        let mut out = BTreeMap::new();
        for e in self.iter() {
            *out.entry((e.stage, e.seq, e.port, e.kind, e.width_bits))
                .or_insert(0) += u64::from(e.count);
        }
        out
    }

    /// Number of slices covered by compute-stage events.
    pub fn slice_count(&self) -> u32 {
        self.stage_events(Stage::Compute)
            .iter()
            .map(|e| e.seq + 1)
            .max()
            .unwrap_or(0)
    }

    /// Individual events of one stage in program order. A request run whose
    /// length equals the following beat run on the same port denotes
    /// per-access transactions and is interleaved with it (and with the
    /// matching response run for writes).
    pub fn expand(&self, stage: Stage) -> Vec<TraceEvent> {
        let runs = self.stage_events(stage);
        let mut out = Vec::new();
        let mut skip = vec![false; runs.len()];
        for (n, run) in runs.iter().enumerate() {
            if skip[n] {
                continue;
            }
            let single = TraceEvent { count: 1, ..*run };
            if matches!(run.kind, EventKind::ReadReq | EventKind::WriteReq) && run.count > 1 {
                let beat_kind = if run.kind == EventKind::ReadReq {
                    EventKind::ReadBeat
                } else {
                    EventKind::WriteBeat
                };
                let partner = |kind: EventKind, from: usize| {
                    runs[from..]
                        .iter()
                        .position(|e| e.port == run.port && e.seq == run.seq && e.kind == kind)
                        .map(|p| p + from)
                };
                if let Some(b) = partner(beat_kind, n + 1).filter(|&b| runs[b].count == run.count) {
                    let resp = if run.kind == EventKind::WriteReq {
                        partner(EventKind::WriteResp, b + 1).filter(|&r| runs[r].count == run.count)
                    } else {
                        None
                    };
                    skip[b] = true;
                    if let Some(r) = resp {
                        skip[r] = true;
                    }
                    for _ in 0..run.count {
                        out.push(single);
                        out.push(TraceEvent {
                            count: 1,
                            ..runs[b]
                        });
                        if let Some(r) = resp {
                            out.push(TraceEvent {
                                count: 1,
                                ..runs[r]
                            });
                        }
                    }
                    continue;
                }
            }
            out.extend(std::iter::repeat_n(single, run.count as usize));
        }
        out
    }

    /// Checks per-port request/beat/response ordering in the expanded trace.
    pub fn validate(&self) -> Result<()> {
        for stage in [Stage::Read, Stage::Write] {
            let mut open_read: HashMap<(u16, u32), bool> = HashMap::new();
            let mut open_write: HashMap<(u16, u32), (bool, u32)> = HashMap::new();
            for e in self.expand(stage) {
                let key = (e.port, e.seq);
                match e.kind {
                    EventKind::ReadReq => {
                        open_read.insert(key, true);
                    }
                    EventKind::ReadBeat => {
                        if !open_read.get(&key).copied().unwrap_or(false) {
                            return Err(Error::Defect(format!(
                                "read beat on port {} slice {} without a request",
                                e.port, e.seq
                            )));
                        }
                    }
                    EventKind::WriteReq => {
                        open_write.insert(key, (true, 0));
                    }
                    EventKind::WriteBeat => match open_write.get_mut(&key) {
                        Some((true, beats)) => *beats += 1,
                        _ => {
                            return Err(Error::Defect(format!(
                                "write beat on port {} slice {} outside a burst",
                                e.port, e.seq
                            )))
                        }
                    },
                    EventKind::WriteResp => match open_write.get_mut(&key) {
                        Some(state @ (true, _)) if state.1 > 0 => *state = (false, 0),
                        _ => {
                            return Err(Error::Defect(format!(
                                "write response on port {} slice {} without beats",
                                e.port, e.seq
                            )))
                        }
                    },
                    _ => {}
                }
            }
            if let Some(((port, seq), _)) = open_write.iter().find(|(_, s)| s.0) {
                return Err(Error::Defect(format!(
                    "write burst on port {port} slice {seq} never answered"
                )));
            }
        }
        Ok(())
    }

    /// Writes one line `stage,kind,port,width,seq` per event, where `seq` is
    /// the event's ordinal within its stage.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "stage,kind,port,width,seq")?;
        for stage in Stage::ALL {
            for (n, e) in self.expand(stage).iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    stage.name(),
                    e.kind,
                    e.port,
                    e.width_bits,
                    n
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_runs_per_port() {
        let mut t = EventTrace::new();
        for _ in 0..3 {
            for f in 0..3 {
                t.record(Stage::Read, EventKind::ReadBeat, read_port(f), 64, 0, 1);
            }
        }
        assert_eq!(t.stage_events(Stage::Read).len(), 3);
        assert_eq!(t.count(EventKind::ReadBeat), 9);
        t.record(Stage::Read, EventKind::ReadBeat, read_port(0), 64, 1, 2);
        assert_eq!(t.stage_events(Stage::Read).len(), 4);
    }

    #[test]
    fn expands_per_access_runs() {
        let mut t = EventTrace::new();
        t.record(Stage::Write, EventKind::WriteReq, 3, 64, 0, 2);
        t.record(Stage::Write, EventKind::WriteBeat, 3, 64, 0, 2);
        t.record(Stage::Write, EventKind::WriteResp, 3, 64, 0, 2);
        let kinds: Vec<_> = t.expand(Stage::Write).iter().map(|e| e.kind).collect();
        use EventKind::*;
        assert_eq!(
            kinds,
            vec![WriteReq, WriteBeat, WriteResp, WriteReq, WriteBeat, WriteResp]
        );
        t.validate().unwrap();
    }

    #[test]
    fn validate_flags_orphan_beats() {
        let mut t = EventTrace::new();
        t.record(Stage::Read, EventKind::ReadBeat, 0, 64, 0, 1);
        assert!(t.validate().is_err());

        let mut t = EventTrace::new();
        t.record(Stage::Write, EventKind::WriteReq, 3, 64, 0, 1);
        t.record(Stage::Write, EventKind::WriteBeat, 3, 64, 0, 4);
        assert!(t.validate().is_err());
    }

    #[test]
    fn csv_lists_expanded_events() {
        let mut t = EventTrace::new();
        t.record(Stage::Read, EventKind::ReadReq, 0, 256, 0, 1);
        t.record(Stage::Read, EventKind::ReadBeat, 0, 256, 0, 2);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "stage,kind,port,width,seq\nread,read_req,0,256,0\nread,read_beat,0,256,1\nread,read_beat,0,256,2\n"
        );
    }
}
