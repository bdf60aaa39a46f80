//! Four-stage dataflow execution: read, prepare, compute and write connected
//! by bounded streams.
//!
//! Stages are stepped round-robin (write first, so space frees up before
//! producers run). A stage may only work on slices up to the current barrier;
//! once the write stage passes it every stream must be empty.

use std::collections::BTreeMap;

use super::channel::{StreamChannel, DEFAULT_STREAM_DEPTH};
use super::slice::{patch_from_buffer, PlaneBank, PlaneSet, SliceBuffer};
use super::symbolic::STENCIL_BITS;
use super::trace::{read_stream, result_stream, EventKind, EventTrace, Stage, STENCIL_STREAM};
use super::wide::{unpack_wide, WideWord};
use super::{KernelPlan, PipelineVariant};
use crate::advection::{compute_cell, AdvectionCoefficients, SourceTerms, StencilPatch};
use crate::error::{Error, Result};
use crate::grid::{BoundaryRule, Field3};
use crate::scalar::Scalar;

/// What the stream network did during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataflowStats {
    /// Scheduler rounds (one step attempt per stage).
    pub rounds: u64,
    /// Barriers passed, including the final one.
    pub barriers: u64,
    /// Peak occupancy per stream id.
    pub high_water: BTreeMap<u16, usize>,
    /// Values pushed through all streams.
    pub transfers: u64,
}

enum PrepPhase {
    Start,
    Load { plane: usize, pos: usize },
    Emit { c: usize },
}

struct Engine<'a, T: Scalar> {
    plan: &'a KernelPlan,
    inputs: [&'a Field3<T>; 3],
    coeff: &'a AdvectionCoefficients,
    variant: PipelineVariant,
    rule: BoundaryRule,
    lanes: usize,
    spf: usize,

    rd: Vec<Vec<StreamChannel<T>>>,
    st: StreamChannel<(usize, StencilPatch<T>)>,
    res: Vec<Vec<StreamChannel<T>>>,
    out: SourceTerms<T>,
    trace: EventTrace,

    r_step: usize,
    r_plane: usize,
    r_pos: usize,
    r_requested: bool,
    r_acc: u32,

    p_step: usize,
    p_phase: PrepPhase,
    p_loaded: Vec<PlaneSet<T>>,
    p_window: Option<SliceBuffer<PlaneSet<T>>>,
    p_buf: Option<SliceBuffer<PlaneSet<T>>>,
    bank: PlaneBank<T>,

    c_step: usize,
    c_pos: usize,

    w_step: usize,
    w_pos: usize,
    w_requested: bool,
    w_acc: u32,
}

pub(super) fn run<T: Scalar>(
    plan: &KernelPlan,
    inputs: [&Field3<T>; 3],
    coeff: &AdvectionCoefficients,
    variant: PipelineVariant,
    rule: BoundaryRule,
) -> Result<(SourceTerms<T>, EventTrace, DataflowStats)> {
    let spf = variant.streams_per_field();
    let lanes_of = || -> Vec<Vec<StreamChannel<T>>> {
        (0..3)
            .map(|_| {
                (0..spf)
                    .map(|_| StreamChannel::new(DEFAULT_STREAM_DEPTH))
                    .collect()
            })
            .collect()
    };
    let mut e = Engine {
        plan,
        inputs,
        coeff,
        variant,
        rule,
        lanes: variant.lanes(),
        spf,
        rd: lanes_of(),
        st: StreamChannel::new(DEFAULT_STREAM_DEPTH),
        res: lanes_of(),
        out: SourceTerms::zeros(plan.dims),
        trace: EventTrace::new(),
        r_step: 0,
        r_plane: 0,
        r_pos: 0,
        r_requested: false,
        r_acc: 0,
        p_step: 0,
        p_phase: PrepPhase::Start,
        p_loaded: Vec::new(),
        p_window: None,
        p_buf: None,
        bank: PlaneBank::new(plan.dims.x, rule),
        c_step: 0,
        c_pos: 0,
        w_step: 0,
        w_pos: 0,
        w_requested: false,
        w_acc: 0,
    };
    e.trace.set_levels(plan.dims.z as u32);
    let stats = e.drive()?;
    Ok((e.out, e.trace, stats))
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn barrier_end(&self, i: usize) -> usize {
        if self.variant.drains_per_slice() {
            i
        } else {
            let step = &self.plan.steps[i];
            i + self.plan.blocks[step.block].x_extent - 1 - step.x
        }
    }

    fn streams(&self) -> impl Iterator<Item = (u16, usize, usize)> + '_ {
        let rd = self.rd.iter().enumerate().flat_map(|(f, ls)| {
            ls.iter()
                .enumerate()
                .map(move |(l, ch)| (read_stream(f, l), ch.len(), ch.high_water()))
        });
        let res = self.res.iter().enumerate().flat_map(|(f, ls)| {
            ls.iter()
                .enumerate()
                .map(move |(l, ch)| (result_stream(f, l), ch.len(), ch.high_water()))
        });
        rd.chain(std::iter::once((
            STENCIL_STREAM,
            self.st.len(),
            self.st.high_water(),
        )))
        .chain(res)
    }

    fn drive(&mut self) -> Result<DataflowStats> {
        let total = self.plan.steps.len();
        let mut stats = DataflowStats::default();
        let mut allowed = self.barrier_end(0);
        loop {
            stats.rounds += 1;
            let mut moved = self.step_write(allowed);
            moved |= self.step_compute(allowed)?;
            moved |= self.step_prepare(allowed);
            moved |= self.step_read(allowed);

            if self.w_step > allowed {
                if let Some((id, len, _)) = self.streams().find(|s| s.1 > 0) {
                    return Err(Error::Defect(format!(
                        "stream {id} holds {len} values at the barrier after slice {allowed}"
                    )));
                }
                stats.barriers += 1;
                if allowed + 1 == total {
                    break;
                }
                allowed = self.barrier_end(allowed + 1);
                continue;
            }
            if !moved {
                return Err(Error::Defect(format!(
                    "dataflow deadlock: read {} prepare {} compute {} write {} (barrier {allowed})",
                    self.r_step, self.p_step, self.c_step, self.w_step
                )));
            }
        }
        for (id, _, hw) in self.streams() {
            stats.high_water.insert(id, hw);
        }
        stats.transfers = self
            .rd
            .iter()
            .chain(&self.res)
            .flatten()
            .map(StreamChannel::pushes)
            .sum::<u64>()
            + self.st.pushes();
        Ok(stats)
    }

    /// Values `pos..pos + k` spread over the lanes of one field.
    fn lane_need(&self, pos: usize, k: usize) -> [usize; 4] {
        let mut need = [0; 4];
        for c in pos..pos + k {
            need[c % self.spf] += 1;
        }
        need
    }

    fn step_read(&mut self, allowed: usize) -> bool {
        if self.r_step > allowed || self.r_step >= self.plan.steps.len() {
            return false;
        }
        let step = &self.plan.steps[self.r_step];
        let block = &self.plan.blocks[step.block];
        let (n, s) = (block.slice_cells(), step.seq);
        if self.r_plane == step.loads.len() {
            self.r_step += 1;
            self.r_plane = 0;
            return true;
        }
        let x = step.loads[self.r_plane];
        let pos = self.r_pos;
        let k = self.lanes.min(n - pos);
        let need = self.lane_need(pos, k);
        let room = self.rd.iter().all(|ls| {
            ls.iter()
                .zip(need)
                .all(|(ch, want)| ch.capacity() - ch.len() >= want)
        });
        if !room {
            return false;
        }
        let width = self.variant.port_width_bits();
        let per_access = self.variant.per_access_requests();
        if !self.r_requested && !per_access {
            for f in 0..3 {
                let port = self.variant.memory_read_port(f);
                self.trace
                    .record(Stage::Read, EventKind::ReadReq, port, width, s, 1);
            }
        }
        self.r_requested = true;
        let base = block.y_start * self.plan.dims.z;
        for f in 0..3 {
            let port = self.variant.memory_read_port(f);
            if !per_access {
                self.trace
                    .record(Stage::Read, EventKind::ReadBeat, port, width, s, 1);
            }
            let src = &self.inputs[f].slice(x)[base + pos..base + pos + k];
            let word = if self.lanes > 1 {
                unpack_wide(WideWord::from_partial(src))
            } else {
                [src[0], T::zero(), T::zero(), T::zero()]
            };
            for (o, &value) in word[..k].iter().enumerate() {
                let lane = (pos + o) % self.spf;
                if self.rd[f][lane].try_push(value).is_err() {
                    unreachable!("room checked above");
                }
                self.trace.record(
                    Stage::Read,
                    EventKind::StreamPush,
                    read_stream(f, lane),
                    64,
                    s,
                    1,
                );
            }
        }
        if per_access {
            self.r_acc += 1;
        }
        self.r_pos += k;
        if self.r_pos == n {
            if per_access {
                for f in 0..3 {
                    let port = self.variant.memory_read_port(f);
                    self.trace
                        .record(Stage::Read, EventKind::ReadReq, port, width, s, self.r_acc);
                    self.trace
                        .record(Stage::Read, EventKind::ReadBeat, port, width, s, self.r_acc);
                }
                self.r_acc = 0;
            }
            self.r_plane += 1;
            self.r_pos = 0;
            self.r_requested = false;
        }
        true
    }

    fn step_prepare(&mut self, allowed: usize) -> bool {
        if self.p_step > allowed || self.p_step >= self.plan.steps.len() {
            return false;
        }
        let step = &self.plan.steps[self.p_step];
        let block = &self.plan.blocks[step.block];
        let (n, s, nz) = (block.slice_cells(), step.seq, self.plan.dims.z);
        match self.p_phase {
            PrepPhase::Start => {
                if step.first_in_block {
                    self.trace
                        .record(Stage::Control, EventKind::BlockTransition, 0, 0, s, 1);
                    self.bank = PlaneBank::new(block.x_extent, self.rule);
                    self.p_buf = None;
                }
                self.p_loaded = step
                    .loads
                    .iter()
                    .map(|&x| PlaneSet::with_halo(self.inputs, x, block, self.rule))
                    .collect();
                self.p_phase = PrepPhase::Load { plane: 0, pos: 0 };
                true
            }
            PrepPhase::Load { plane, pos } => {
                if plane == self.p_loaded.len() {
                    for p in self.p_loaded.drain(..) {
                        self.bank.insert(p);
                    }
                    self.p_window = Some(self.bank.advance(self.p_buf.take(), step.x));
                    self.p_phase = PrepPhase::Emit { c: 0 };
                    return true;
                }
                let lane = pos % self.spf;
                if self.rd.iter().any(|ls| ls[lane].is_empty()) {
                    return false;
                }
                for f in 0..3 {
                    let value = self.rd[f][lane].try_pop().expect("checked non-empty");
                    self.p_loaded[plane].fields[f].set_core(pos, value);
                    self.trace.record(
                        Stage::Prepare,
                        EventKind::StreamPop,
                        read_stream(f, lane),
                        64,
                        s,
                        1,
                    );
                }
                self.p_phase = if pos + 1 == n {
                    PrepPhase::Load {
                        plane: plane + 1,
                        pos: 0,
                    }
                } else {
                    PrepPhase::Load {
                        plane,
                        pos: pos + 1,
                    }
                };
                true
            }
            PrepPhase::Emit { c } => {
                if c == n {
                    self.p_buf = self.p_window.take();
                    self.p_step += 1;
                    self.p_phase = PrepPhase::Start;
                    return true;
                }
                if self.st.is_full() {
                    return false;
                }
                let window = self.p_window.as_ref().expect("window built before emit");
                let patch = patch_from_buffer(window, c / nz, c % nz, self.rule, nz);
                if self.st.try_push((c, patch)).is_err() {
                    unreachable!("checked not full");
                }
                self.trace
                    .record(Stage::Prepare, EventKind::ComputeIter, 0, 0, s, 1);
                self.trace.record(
                    Stage::Prepare,
                    EventKind::StreamPush,
                    STENCIL_STREAM,
                    STENCIL_BITS,
                    s,
                    1,
                );
                self.p_phase = PrepPhase::Emit { c: c + 1 };
                true
            }
        }
    }

    fn step_compute(&mut self, allowed: usize) -> Result<bool> {
        if self.c_step > allowed || self.c_step >= self.plan.steps.len() {
            return Ok(false);
        }
        let step = &self.plan.steps[self.c_step];
        let (n, s, nz) = (self.plan.slice_cells(step), step.seq, self.plan.dims.z);
        if self.c_pos == n {
            self.c_step += 1;
            self.c_pos = 0;
            return Ok(true);
        }
        let lane = self.c_pos % self.spf;
        if self.st.is_empty() || self.res.iter().any(|ls| ls[lane].is_full()) {
            return Ok(false);
        }
        let (c, patch) = self.st.try_pop().expect("checked non-empty");
        if c != self.c_pos {
            return Err(Error::Defect(format!(
                "stencil {c} arrived while computing cell {} of slice {s}",
                self.c_pos
            )));
        }
        let k = c % nz;
        let cell = if self.rule.zero_level(k) {
            [T::zero(); 3]
        } else {
            compute_cell(&patch, self.coeff, k)
        };
        self.trace.record(
            Stage::Compute,
            EventKind::StreamPop,
            STENCIL_STREAM,
            STENCIL_BITS,
            s,
            1,
        );
        self.trace
            .record(Stage::Compute, EventKind::ComputeIter, 0, 0, s, 1);
        for (f, value) in cell.into_iter().enumerate() {
            if self.res[f][lane].try_push(value).is_err() {
                unreachable!("checked not full");
            }
            self.trace.record(
                Stage::Compute,
                EventKind::StreamPush,
                result_stream(f, lane),
                64,
                s,
                1,
            );
        }
        self.c_pos += 1;
        Ok(true)
    }

    fn step_write(&mut self, allowed: usize) -> bool {
        if self.w_step > allowed || self.w_step >= self.plan.steps.len() {
            return false;
        }
        let step = &self.plan.steps[self.w_step];
        let block = &self.plan.blocks[step.block];
        let (n, s) = (block.slice_cells(), step.seq);
        let width = self.variant.port_width_bits();
        let per_access = self.variant.per_access_requests();
        if self.w_pos == n {
            for f in 0..3 {
                let port = self.variant.memory_write_port(f);
                if per_access {
                    self.trace.record(
                        Stage::Write,
                        EventKind::WriteReq,
                        port,
                        width,
                        s,
                        self.w_acc,
                    );
                    self.trace.record(
                        Stage::Write,
                        EventKind::WriteBeat,
                        port,
                        width,
                        s,
                        self.w_acc,
                    );
                    self.trace.record(
                        Stage::Write,
                        EventKind::WriteResp,
                        port,
                        width,
                        s,
                        self.w_acc,
                    );
                } else {
                    self.trace
                        .record(Stage::Write, EventKind::WriteResp, port, width, s, 1);
                }
            }
            self.w_acc = 0;
            self.w_step += 1;
            self.w_pos = 0;
            self.w_requested = false;
            return true;
        }
        let pos = self.w_pos;
        let k = self.lanes.min(n - pos);
        let need = self.lane_need(pos, k);
        let ready = self
            .res
            .iter()
            .all(|ls| ls.iter().zip(need).all(|(ch, want)| ch.len() >= want));
        if !ready {
            return false;
        }
        if !self.w_requested && !per_access {
            for f in 0..3 {
                let port = self.variant.memory_write_port(f);
                self.trace
                    .record(Stage::Write, EventKind::WriteReq, port, width, s, 1);
            }
        }
        self.w_requested = true;
        let dims = self.plan.dims;
        let start = dims.offset(block.x_start + step.x, block.y_start, 0) + pos;
        let mut targets = self.out.fields_mut();
        for (f, target) in targets.iter_mut().enumerate() {
            let mut values = [T::zero(); 4];
            for (o, v) in values[..k].iter_mut().enumerate() {
                let lane = (pos + o) % self.spf;
                *v = self.res[f][lane].try_pop().expect("checked ready");
                self.trace.record(
                    Stage::Write,
                    EventKind::StreamPop,
                    result_stream(f, lane),
                    64,
                    s,
                    1,
                );
            }
            let word = WideWord::from_partial(&values[..k]);
            target.data_mut()[start..start + k].copy_from_slice(&unpack_wide(word)[..k]);
            if !per_access {
                let port = self.variant.memory_write_port(f);
                self.trace
                    .record(Stage::Write, EventKind::WriteBeat, port, width, s, 1);
            }
        }
        if per_access {
            self.w_acc += 1;
        }
        self.w_pos += k;
        true
    }
}
