//! Block profiler driven by start/end markers against a cycle counter.
//!
//! A kernel writes markers into a command stream; each marker captures the
//! free-running counter and a block's elapsed cycles are added to its running
//! total. Blocks are strictly sequential: nesting is a protocol error.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::timing::{Category, Segment};

pub type BlockId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfilerCommand {
    Init,
    BlockStart(BlockId),
    BlockEnd(BlockId),
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockTotal {
    pub block: BlockId,
    pub count: u64,
    pub cycles: u64,
    pub ms: f64,
}

impl BlockTotal {
    pub fn ns(&self) -> f64 {
        self.ms * 1e6
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProfileReport {
    /// One row per block id, ascending.
    pub blocks: Vec<BlockTotal>,
    /// Cycles spent issuing markers.
    pub marker_overhead_cycles: u64,
}

impl ProfileReport {
    pub fn block(&self, id: BlockId) -> Option<&BlockTotal> {
        self.blocks.iter().find(|b| b.block == id)
    }

    pub fn total_cycles(&self) -> u64 {
        self.blocks.iter().map(|b| b.cycles).sum()
    }

    /// Writes `block,count,cycles,ms` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["block", "count", "cycles", "ms"])
            .map_err(io)?;
        for b in &self.blocks {
            w.write_record([
                b.block.to_string(),
                b.count.to_string(),
                b.cycles.to_string(),
                b.ms.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Profiler {
    clock_mhz: f64,
    marker_cost: u64,
    /// Counter skew accumulated from marker stalls.
    skew: u64,
    last_capture: u64,
    open: Option<(BlockId, u64)>,
    totals: BTreeMap<BlockId, (u64, u64)>,
    markers: u64,
    last_report: Option<ProfileReport>,
}

impl Profiler {
    pub fn new(clock_mhz: f64) -> Result<Self> {
        Self::with_marker_cost(clock_mhz, 0)
    }

    /// `marker_cost` cycles stall the kernel for every start or end marker.
    pub fn with_marker_cost(clock_mhz: f64, marker_cost: u64) -> Result<Self> {
        if !(clock_mhz.is_finite() && clock_mhz > 0.0) {
            return Err(Error::Config(format!(
                "clock must be positive, got {clock_mhz} MHz"
            )));
        }
        Ok(Profiler {
            clock_mhz,
            marker_cost,
            skew: 0,
            last_capture: 0,
            open: None,
            totals: BTreeMap::new(),
            markers: 0,
            last_report: None,
        })
    }

    /// Applies one command at counter value `now_cycles`.
    pub fn record(&mut self, cmd: ProfilerCommand, now_cycles: u64) -> Result<()> {
        match cmd {
            ProfilerCommand::Init => {
                self.skew = 0;
                self.last_capture = 0;
                self.open = None;
                self.totals.clear();
                self.markers = 0;
                self.last_report = None;
            }
            ProfilerCommand::BlockStart(id) => {
                let at = self.capture(now_cycles)?;
                if let Some((open, _)) = self.open {
                    return Err(Error::Protocol(format!(
                        "block {id} started while block {open} is open"
                    )));
                }
                self.open = Some((id, at));
            }
            ProfilerCommand::BlockEnd(id) => {
                let at = self.capture(now_cycles)?;
                match self.open {
                    Some((open, start)) if open == id => {
                        let t = self.totals.entry(id).or_default();
                        t.0 += 1;
                        t.1 += at - start;
                        self.open = None;
                    }
                    Some((open, _)) => {
                        return Err(Error::Protocol(format!(
                            "end of block {id} while block {open} is open"
                        )))
                    }
                    None => {
                        return Err(Error::Protocol(format!(
                            "end of block {id} without a start"
                        )))
                    }
                }
            }
            ProfilerCommand::Report => {
                self.last_report = Some(self.report()?);
            }
        }
        Ok(())
    }

    fn capture(&mut self, now_cycles: u64) -> Result<u64> {
        self.skew += self.marker_cost;
        self.markers += 1;
        let at = now_cycles + self.skew;
        if at < self.last_capture {
            return Err(Error::Protocol(format!(
                "counter went backwards from {} to {at}",
                self.last_capture
            )));
        }
        self.last_capture = at;
        Ok(at)
    }

    pub fn report(&self) -> Result<ProfileReport> {
        if let Some((id, _)) = self.open {
            return Err(Error::Protocol(format!("block {id} still open")));
        }
        let blocks = self
            .totals
            .iter()
            .map(|(&block, &(count, cycles))| BlockTotal {
                block,
                count,
                cycles,
                ms: cycles as f64 / (self.clock_mhz * 1e3),
            })
            .collect();
        Ok(ProfileReport {
            blocks,
            marker_overhead_cycles: self.markers * self.marker_cost,
        })
    }

    /// Report captured by the most recent `Report` command.
    pub fn last_report(&self) -> Option<&ProfileReport> {
        self.last_report.as_ref()
    }
}

/// Block id used for a timing category when replaying a timeline.
pub fn category_block(category: Category) -> BlockId {
    match category {
        Category::Load => 1,
        Category::Compute => 2,
        Category::Write => 3,
        Category::Transition => 4,
        Category::Idle => 0,
    }
}

/// Drives a profiler with one marker pair per non-idle segment of a timing
/// timeline. Idle stretches are left unprofiled.
pub fn replay_segments(segments: &[Segment], clock_mhz: f64) -> Result<ProfileReport> {
    let mut p = Profiler::new(clock_mhz)?;
    p.record(ProfilerCommand::Init, 0)?;
    for s in segments {
        if s.category == Category::Idle {
            continue;
        }
        let id = category_block(s.category);
        p.record(ProfilerCommand::BlockStart(id), s.start)?;
        p.record(ProfilerCommand::BlockEnd(id), s.end)?;
    }
    p.record(
        ProfilerCommand::Report,
        segments.last().map_or(0, |s| s.end),
    )?;
    p.report()
}
