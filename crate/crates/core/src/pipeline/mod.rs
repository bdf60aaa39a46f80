//! Functional execution of the seven kernel designs.
//!
//! Every design computes identical source terms (they all call
//! [`compute_cell`](crate::advection::compute_cell)); they differ in how data
//! moves, which is what the emitted [`EventTrace`] records for the timing
//! model.
//!
//! Traversal: each block is walked along x. Every x plane of a block is read
//! from memory exactly once. The first two planes are loaded before the first
//! slice is computed (the block prologue); wraparound planes needed again at
//! the end of the block are kept on chip.

mod channel;
mod dataflow;
mod sequential;
mod slice;
mod symbolic;
mod trace;
mod wide;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use channel::{StreamChannel, DEFAULT_STREAM_DEPTH};
pub use dataflow::DataflowStats;
pub use slice::{patch_from_buffer, shift_slices, Plane, PlaneSet, SliceBuffer};
pub use symbolic::{build_kernel_traces, build_trace};
pub use trace::{
    read_port, read_stream, result_stream, write_port, EventKind, EventTrace, Stage, SummaryKey,
    TraceEvent, STENCIL_STREAM,
};
pub use wide::{pack_wide, unpack_wide, WideWord, LANES};

use crate::advection::{check_inputs, AdvectionCoefficients, SourceTerms};
use crate::error::{Error, Result};
use crate::grid::{
    decompose_range, BlockSpec, BoundaryRule, Field3, GridDims, DEFAULT_BLOCK_Y,
    DEFAULT_SLICE_CAPACITY,
};
use crate::scalar::Scalar;

/// The kernel designs, in the order they were introduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PipelineVariant {
    /// All fields share one memory port; separate read and write loops per field.
    V1Monolithic,
    /// One memory port per field; one fused read loop and one fused write loop.
    V2SplitPorts,
    /// Four concurrent stages per slice, drained at every slice boundary.
    V3DataflowSlice,
    /// Stages span the x loop; every memory access issues its own request.
    V4DataflowXNaive,
    /// Stages span the x loop with one request per contiguous slice.
    V5DataflowXOpt,
    /// V5 with 256-bit memory beats and one stream per field.
    V6Wide256,
    /// V6 with four streams per field on the memory-facing links.
    V7Wide256Quad,
}

impl PipelineVariant {
    pub const ALL: [PipelineVariant; 7] = [
        PipelineVariant::V1Monolithic,
        PipelineVariant::V2SplitPorts,
        PipelineVariant::V3DataflowSlice,
        PipelineVariant::V4DataflowXNaive,
        PipelineVariant::V5DataflowXOpt,
        PipelineVariant::V6Wide256,
        PipelineVariant::V7Wide256Quad,
    ];

    /// Short tag, `v1` through `v7`.
    pub fn tag(self) -> &'static str {
        match self {
            PipelineVariant::V1Monolithic => "v1",
            PipelineVariant::V2SplitPorts => "v2",
            PipelineVariant::V3DataflowSlice => "v3",
            PipelineVariant::V4DataflowXNaive => "v4",
            PipelineVariant::V5DataflowXOpt => "v5",
            PipelineVariant::V6Wide256 => "v6",
            PipelineVariant::V7Wide256Quad => "v7",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            PipelineVariant::V1Monolithic => "initial version",
            PipelineVariant::V2SplitPorts => "split out memory ports",
            PipelineVariant::V3DataflowSlice => "concurrent load/store via dataflow",
            PipelineVariant::V4DataflowXNaive => "x dimension in dataflow region",
            PipelineVariant::V5DataflowXOpt => "x dimension in dataflow region (optimised)",
            PipelineVariant::V6Wide256 => "256 bit memory ports",
            PipelineVariant::V7Wide256Quad => "256 bit ports, 4 doubles per cycle",
        }
    }

    /// Stages run one after another (no dataflow region).
    pub fn is_sequential(self) -> bool {
        matches!(
            self,
            PipelineVariant::V1Monolithic | PipelineVariant::V2SplitPorts
        )
    }

    pub fn shared_port(self) -> bool {
        self == PipelineVariant::V1Monolithic
    }

    /// Dataflow region covers a single slice and drains after it.
    pub fn drains_per_slice(self) -> bool {
        self == PipelineVariant::V3DataflowSlice
    }

    /// Every memory access carries its own request.
    pub fn per_access_requests(self) -> bool {
        self == PipelineVariant::V4DataflowXNaive
    }

    /// Doubles per memory beat.
    pub fn lanes(self) -> usize {
        if self.port_width_bits() == 256 {
            LANES
        } else {
            1
        }
    }

    pub fn port_width_bits(self) -> u16 {
        match self {
            PipelineVariant::V6Wide256 | PipelineVariant::V7Wide256Quad => 256,
            _ => 64,
        }
    }

    /// Streams per field on the read-to-prepare and compute-to-write links.
    pub fn streams_per_field(self) -> usize {
        if self == PipelineVariant::V7Wide256Quad {
            4
        } else {
            1
        }
    }

    pub fn memory_read_port(self, field: usize) -> u16 {
        if self.shared_port() {
            0
        } else {
            read_port(field)
        }
    }

    pub fn memory_write_port(self, field: usize) -> u16 {
        if self.shared_port() {
            0
        } else {
            write_port(field)
        }
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PipelineVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        PipelineVariant::ALL
            .into_iter()
            .find(|v| v.tag() == t || format!("{v:?}").to_ascii_lowercase() == t)
            .ok_or_else(|| Error::Config(format!("unknown pipeline variant `{s}`")))
    }
}

impl TryFrom<String> for PipelineVariant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PipelineVariant> for String {
    fn from(v: PipelineVariant) -> String {
        v.tag().to_string()
    }
}

/// Block and slice sizing for one kernel, optionally restricted to a y range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub block_y: usize,
    pub slice_capacity: usize,
    /// Half-open y range handled by this kernel; `None` covers the grid.
    pub y_range: Option<(usize, usize)>,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            block_y: DEFAULT_BLOCK_Y,
            slice_capacity: DEFAULT_SLICE_CAPACITY,
            y_range: None,
        }
    }
}

impl Geometry {
    pub fn with_y_range(self, start: usize, end: usize) -> Self {
        Geometry {
            y_range: Some((start, end)),
            ..self
        }
    }
}

/// One x step of a block: which slice is computed and which planes are read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceStep {
    pub seq: u32,
    pub block: usize,
    pub x: usize,
    /// x positions of planes read during this step, in read order.
    pub loads: Vec<usize>,
    pub first_in_block: bool,
}

/// Traversal order for one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPlan {
    pub dims: GridDims,
    pub blocks: Vec<BlockSpec>,
    pub steps: Vec<SliceStep>,
}

impl KernelPlan {
    pub fn new(dims: GridDims, geometry: &Geometry, rule: BoundaryRule) -> Result<Self> {
        let (y0, y1) = geometry.y_range.unwrap_or((0, dims.y));
        let blocks = decompose_range(dims, y0..y1, geometry.block_y, geometry.slice_capacity)?;
        let mut steps = Vec::with_capacity(blocks.len() * dims.x);
        let mut seq = 0u32;
        for (b, block) in blocks.iter().enumerate() {
            for (x, loads) in block_loads(block.x_extent, rule).into_iter().enumerate() {
                steps.push(SliceStep {
                    seq,
                    block: b,
                    x,
                    loads,
                    first_in_block: x == 0,
                });
                seq += 1;
            }
        }
        Ok(KernelPlan {
            dims,
            blocks,
            steps,
        })
    }

    pub fn slice_cells(&self, step: &SliceStep) -> usize {
        self.blocks[step.block].slice_cells()
    }

    pub fn cells(&self) -> usize {
        self.steps.iter().map(|s| self.slice_cells(s)).sum()
    }
}

/// Planes read at each x step of a block so each plane is read once.
fn block_loads(nx: usize, rule: BoundaryRule) -> Vec<Vec<usize>> {
    let mut loads = vec![Vec::new(); nx];
    match rule {
        BoundaryRule::PeriodicXyZeroFloor => {
            loads[0] = vec![nx - 1, 0, 1];
            for (i, l) in loads.iter_mut().enumerate().take(nx - 2).skip(1) {
                *l = vec![i + 1];
            }
        }
        BoundaryRule::Clamp => {
            loads[0] = vec![0, 1];
            for (i, l) in loads.iter_mut().enumerate().take(nx - 1).skip(1) {
                *l = vec![i + 1];
            }
        }
    }
    loads
}

/// Output of a functional run.
#[derive(Debug, Clone)]
pub struct StagedRun<T> {
    pub sources: SourceTerms<T>,
    pub trace: EventTrace,
    /// Stream statistics; `None` for sequential designs.
    pub dataflow: Option<DataflowStats>,
}

/// Executes `variant` on the inputs, returning source terms and the event trace.
///
/// Cells outside `geometry.y_range` are left at zero.
pub fn run_staged<T: Scalar>(
    u: &Field3<T>,
    v: &Field3<T>,
    w: &Field3<T>,
    coeff: &AdvectionCoefficients,
    variant: PipelineVariant,
    geometry: &Geometry,
    rule: BoundaryRule,
) -> Result<StagedRun<T>> {
    let dims = check_inputs(u, v, w, coeff)?;
    let plan = KernelPlan::new(dims, geometry, rule)?;
    let inputs = [u, v, w];
    if variant.is_sequential() {
        let (sources, trace) = sequential::run(&plan, inputs, coeff, variant, rule);
        Ok(StagedRun {
            sources,
            trace,
            dataflow: None,
        })
    } else {
        let (sources, trace, stats) = dataflow::run(&plan, inputs, coeff, variant, rule)?;
        Ok(StagedRun {
            sources,
            trace,
            dataflow: Some(stats),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_plane_read_once_per_block() {
        for rule in [BoundaryRule::PeriodicXyZeroFloor, BoundaryRule::Clamp] {
            for nx in 3..9 {
                let loads = block_loads(nx, rule);
                let mut all: Vec<usize> = loads.iter().flatten().copied().collect();
                all.sort_unstable();
                assert_eq!(all, (0..nx).collect::<Vec<_>>(), "{rule:?} nx={nx}");
                // every plane is read no later than the slice that first needs it
                for (i, _) in loads.iter().enumerate() {
                    let needed = [rule.lateral(i, -1, nx), i, rule.lateral(i, 1, nx)];
                    let read_so_far: Vec<usize> = loads[..=i].iter().flatten().copied().collect();
                    assert!(needed.iter().all(|p| read_so_far.contains(p)));
                }
            }
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(
            "v7".parse::<PipelineVariant>().unwrap(),
            PipelineVariant::V7Wide256Quad
        );
        assert_eq!(
            "V5DataflowXOpt".parse::<PipelineVariant>().unwrap(),
            PipelineVariant::V5DataflowXOpt
        );
        assert!("v8".parse::<PipelineVariant>().is_err());
    }

    #[test]
    fn plan_numbers_slices_across_blocks() {
        let d = GridDims::new(5, 10, 4).unwrap();
        let plan = KernelPlan::new(
            d,
            &Geometry {
                block_y: 4,
                ..Geometry::default()
            },
            BoundaryRule::default(),
        )
        .unwrap();
        assert_eq!(plan.blocks.len(), 3);
        assert_eq!(plan.steps.len(), 15);
        assert!(plan
            .steps
            .iter()
            .enumerate()
            .all(|(n, s)| s.seq as usize == n));
        assert_eq!(plan.cells(), d.cells());
    }
}
