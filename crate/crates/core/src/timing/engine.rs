//! Cycle-stepped simulation of one or more kernels sharing DRAM.
//!
//! Each kernel runs a read, prepare, compute and write stage. Memory beats
//! need a transfer channel on their bank; a port keeps its channel for up to
//! one segment and gives it back early only when its stage cannot take or
//! supply the next beat. Kernels also have a per-cycle beat budget on their
//! own link to the memory system. When a cycle passes with no state change
//! the clock jumps to the next timer.

use std::collections::VecDeque;

use serde::Serialize;

use super::work::{Burst, Workload};
use super::ArchParams;
use crate::error::{Error, Result};
use crate::pipeline::PipelineVariant;

/// Exclusive per-cycle activity class, highest priority first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Category {
    Transition,
    Compute,
    Load,
    Write,
    Idle,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Transition,
        Category::Compute,
        Category::Load,
        Category::Write,
        Category::Idle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Transition => "transition",
            Category::Compute => "compute",
            Category::Load => "load",
            Category::Write => "write",
            Category::Idle => "idle",
        }
    }
}

/// Contiguous run of cycles `[start, end)` spent in one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub category: Category,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Barrier {
    /// Read, compute and write of a slice run one after another.
    Sequential,
    /// Stages overlap within a slice; the pipeline drains between slices.
    SliceDrain,
    /// Stages overlap across a whole block; drains between blocks.
    BlockDrain,
}

pub(crate) fn barrier_for(v: PipelineVariant) -> Barrier {
    if v.is_sequential() {
        Barrier::Sequential
    } else if v.drains_per_slice() {
        Barrier::SliceDrain
    } else {
        Barrier::BlockDrain
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct KernelOutcome {
    pub cycles: u64,
    /// Cycles per category, indexed like [`Category::ALL`].
    pub attribution: [u64; 5],
    /// Busy cycles of read, prepare, compute and write.
    pub busy: [u64; 4],
    pub segments: Vec<Segment>,
}

const READ: usize = 0;
const WRITE: usize = 1;

#[derive(Debug, Clone, Copy, Default)]
struct Lanes {
    len: [u32; 4],
    pushed: u64,
    popped: u64,
}

impl Lanes {
    fn total(&self) -> u32 {
        self.len.iter().sum()
    }
    fn push_lane(&self, spf: usize) -> usize {
        (self.pushed % spf as u64) as usize
    }
    fn pop_lane(&self, spf: usize) -> usize {
        (self.popped % spf as u64) as usize
    }
    fn can_pop(&self, spf: usize) -> bool {
        self.len[self.pop_lane(spf)] > 0
    }
    fn push(&mut self, spf: usize) {
        let l = self.push_lane(spf);
        self.len[l] += 1;
        self.pushed += 1;
    }
    fn pop(&mut self, spf: usize) {
        let l = self.pop_lane(spf);
        self.len[l] -= 1;
        self.popped += 1;
    }
}

#[derive(Debug, Clone)]
struct Active {
    burst: Burst,
    ready_at: u64,
    beats_left: u32,
    values_left: u32,
    next_beat_at: u64,
    /// Beats left in the current channel grant; 0 when no channel is held.
    grant: u32,
}

impl Active {
    fn beat_values(&self, lanes: u32) -> u32 {
        lanes.min(self.values_left)
    }
}

#[derive(Debug, Clone, Default)]
struct Port {
    queue: VecDeque<Burst>,
    active: Option<Active>,
    /// Read: values received but not yet pushed. Write: values collected
    /// for the next beat.
    staging: u32,
    free_at: u64,
}

impl Port {
    fn idle(&self, now: u64) -> bool {
        self.queue.is_empty() && self.active.is_none() && self.staging == 0 && now >= self.free_at
    }
}

struct Kernel<'w> {
    w: &'w Workload,
    barrier: Barrier,
    dataflow: bool,
    lanes: u32,
    spf: usize,
    depth: u32,
    cap: u32,
    ii: f64,
    fill: u64,
    seg: u32,
    link: u32,
    lat: Latencies,
    block_first: Vec<usize>,

    r: usize,
    r_loaded: bool,
    p: usize,
    p_consumed: [u32; 3],
    p_emitted: u32,
    ci: usize,
    c_issued: u32,
    cd: usize,
    c_completed: u32,
    wsl: usize,
    w_loaded: bool,
    done_r: usize,
    done_w: usize,

    ports: [Vec<Port>; 2],
    rd: [Lanes; 3],
    res: [Lanes; 3],
    stencils: u32,

    pc: u64,
    run: Option<(u64, u64)>,
    inflight: VecDeque<u64>,
    stalled: bool,
    in_transition: bool,
    link_rr: usize,

    finished: bool,
    out: KernelOutcome,
    last: Option<(Category, u64)>,
    cycle_cat: Category,
    cycle_busy: [bool; 4],
    record_segments: bool,
}

#[derive(Debug, Clone, Copy)]
struct Latencies {
    read_req: u64,
    read_beat: u64,
    write_beat: u64,
    write_tail: u64,
    access_read: u64,
    access_write: u64,
}

struct Bank {
    channels: usize,
    in_use: usize,
    rr: usize,
    /// (kernel, direction, port) requesters in arbitration order.
    members: Vec<(usize, usize, usize)>,
}

impl<'w> Kernel<'w> {
    fn new(
        w: &'w Workload,
        variant: PipelineVariant,
        arch: &ArchParams,
        record_segments: bool,
    ) -> Self {
        let ports = w.slices[0].reads.len();
        let spf = arch.streams_per_field;
        let beat = arch.read_beat_cycles
            + if arch.port_width_bits != 256 {
                arch.width_converter_penalty_cycles
            } else {
                0
            };
        let mut block_first = Vec::with_capacity(w.slices.len());
        for (s, b) in w.block_of.iter().enumerate() {
            if s == 0 || w.block_of[s - 1] != *b {
                block_first.push(s);
            } else {
                block_first.push(block_first[s - 1]);
            }
        }
        Kernel {
            w,
            barrier: barrier_for(variant),
            dataflow: !variant.is_sequential(),
            lanes: w.lanes,
            spf,
            depth: arch.stream_depth as u32,
            cap: (arch.stream_depth * spf) as u32,
            ii: arch.ii_for(variant),
            fill: arch.compute_depth.max(1),
            seg: arch.segment_beats,
            link: arch.kernel_link_beats,
            lat: Latencies {
                read_req: arch.read_req_cycles,
                read_beat: beat,
                write_beat: arch.read_beat_cycles.max(1),
                write_tail: arch.write_req_plus_resp_cycles,
                access_read: arch.per_access_read_latency_noncontig,
                access_write: arch.per_access_write_latency_noncontig,
            },
            block_first,
            r: 0,
            r_loaded: false,
            p: 0,
            p_consumed: [0; 3],
            p_emitted: 0,
            ci: 0,
            c_issued: 0,
            cd: 0,
            c_completed: 0,
            wsl: 0,
            w_loaded: false,
            done_r: 0,
            done_w: 0,
            ports: [vec![Port::default(); ports], vec![Port::default(); ports]],
            rd: [Lanes::default(); 3],
            res: [Lanes::default(); 3],
            stencils: 0,
            pc: 0,
            run: None,
            inflight: VecDeque::new(),
            stalled: false,
            in_transition: false,
            link_rr: 0,
            finished: false,
            out: KernelOutcome::default(),
            last: None,
            cycle_cat: Category::Idle,
            cycle_busy: [false; 4],
            record_segments,
        }
    }

    fn slices(&self) -> usize {
        self.w.slices.len()
    }

    /// Whether the barrier lets any stage work on slice `s`.
    fn open(&self, s: usize) -> bool {
        self.open_at(s, self.done_w)
    }

    fn open_at(&self, s: usize, done_w: usize) -> bool {
        match self.barrier {
            Barrier::Sequential | Barrier::SliceDrain => done_w == s,
            Barrier::BlockDrain => done_w >= self.block_first[s],
        }
    }

    fn beat_ready(&self, dir: usize, port: usize, now: u64) -> bool {
        let p = &self.ports[dir][port];
        let Some(a) = &p.active else { return false };
        if now < a.ready_at || now < a.next_beat_at || a.beats_left == 0 {
            return false;
        }
        let need = a.beat_values(self.lanes);
        if !self.dataflow {
            return true;
        }
        if dir == READ {
            self.cap.saturating_sub(self.rd[port].total() + p.staging) >= need
        } else {
            self.res[port].total() + p.staging >= need
        }
    }

    /// Whether a port would take a channel this cycle.
    fn wants(&self, dir: usize, port: usize, now: u64) -> bool {
        let p = &self.ports[dir][port];
        matches!(&p.active, Some(a) if a.grant == 0) && self.beat_ready(dir, port, now)
    }

    fn grant(&mut self, dir: usize, port: usize) {
        let seg = self.seg;
        let a = self.ports[dir][port]
            .active
            .as_mut()
            .expect("granted port is active");
        a.grant = if a.burst.per_access {
            1
        } else {
            seg.min(a.beats_left)
        };
    }

    fn release(&mut self, dir: usize, port: usize, banks: &mut [Bank], bank_of: &[usize; 2]) {
        if let Some(a) = self.ports[dir][port].active.as_mut() {
            if a.grant > 0 {
                a.grant = 0;
                banks[bank_of[dir]].in_use -= 1;
            }
        }
    }

    fn step(&mut self, now: u64, banks: &mut [Bank], bank_of: &[usize; 2]) -> Result<bool> {
        let mut progress = false;
        self.cycle_busy = [false; 4];
        // the cycle a stage completes in is its last occupied cycle
        let (was_loading, was_writing) = (self.r_loaded, self.w_loaded);
        // reads see the barrier as it stood when the cycle began
        let gate = self.done_w;
        let done_r = self.done_r;
        progress |= self.step_write(now, banks, bank_of);
        let computed = self.step_compute()?;
        progress |= computed.0;
        let prepared = if self.dataflow {
            self.step_prepare()
        } else {
            false
        };
        progress |= prepared;
        progress |= self.step_read(now, gate, banks, bank_of);
        self.link_rr = self.link_rr.wrapping_add(1);

        let load_active = was_loading || self.r_loaded || self.done_r != done_r;
        let write_active = was_writing || self.w_loaded;
        let compute_active = computed.1 || prepared;
        self.cycle_busy = [load_active, prepared, computed.1, write_active];
        self.cycle_cat = if self.in_transition {
            Category::Transition
        } else if compute_active {
            Category::Compute
        } else if load_active {
            Category::Load
        } else if write_active {
            Category::Write
        } else {
            Category::Idle
        };
        self.account(now, 1);
        if self.done_w == self.slices() {
            self.finished = true;
            self.out.cycles = now + 1;
            if let Some((cat, start)) = self.last.take() {
                self.push_segment(cat, start, now + 1);
            }
            progress = true;
        }
        Ok(progress)
    }

    fn account(&mut self, now: u64, cycles: u64) {
        let idx = Category::ALL
            .iter()
            .position(|c| *c == self.cycle_cat)
            .expect("known category");
        self.out.attribution[idx] += cycles;
        for (b, on) in self.out.busy.iter_mut().zip(self.cycle_busy) {
            if on {
                *b += cycles;
            }
        }
        match self.last {
            Some((cat, _)) if cat == self.cycle_cat => {}
            Some((cat, start)) => {
                self.push_segment(cat, start, now);
                self.last = Some((self.cycle_cat, now));
            }
            None => self.last = Some((self.cycle_cat, now)),
        }
    }

    fn push_segment(&mut self, category: Category, start: u64, end: u64) {
        if self.record_segments && end > start {
            self.out.segments.push(Segment {
                category,
                start,
                end,
            });
        }
    }

    fn port_order(&self, n: usize) -> impl Iterator<Item = usize> {
        let first = self.link_rr % n;
        (0..n).map(move |i| (first + i) % n)
    }

    fn step_read(
        &mut self,
        now: u64,
        gate: usize,
        banks: &mut [Bank],
        bank_of: &[usize; 2],
    ) -> bool {
        if self.r >= self.slices() || !self.open_at(self.r, gate) {
            return false;
        }
        let mut progress = false;
        if !self.r_loaded {
            let work = &self.w.slices[self.r];
            for (port, bursts) in self.ports[READ].iter_mut().zip(&work.reads) {
                port.queue.extend(bursts.iter().copied());
            }
            if work.first_in_block {
                self.in_transition = true;
            }
            self.r_loaded = true;
            progress = true;
        }
        let mut budget = self.link;
        let n = self.ports[READ].len();
        for pi in self.port_order(n) {
            // hand received values to the streams
            if self.ports[READ][pi].staging > 0 {
                if self.dataflow {
                    let mut lanes_used = 0;
                    while self.ports[READ][pi].staging > 0 && lanes_used < self.spf {
                        let lane = self.rd[pi].push_lane(self.spf);
                        if self.rd[pi].len[lane] >= self.depth {
                            break;
                        }
                        self.rd[pi].push(self.spf);
                        self.ports[READ][pi].staging -= 1;
                        lanes_used += 1;
                        progress = true;
                    }
                } else {
                    self.ports[READ][pi].staging = 0;
                    progress = true;
                }
            }
            let lat = self.lat;
            let port = &mut self.ports[READ][pi];
            if port.active.is_none() && now >= port.free_at {
                if let Some(burst) = port.queue.pop_front() {
                    // a lone access lands its single beat on its final cycle
                    let wait = if burst.per_access {
                        lat.access_read.saturating_sub(1)
                    } else {
                        lat.read_req
                    };
                    port.active = Some(Active {
                        burst,
                        ready_at: now + wait,
                        beats_left: burst.beats,
                        values_left: burst.values,
                        next_beat_at: now + wait,
                        grant: 0,
                    });
                    progress = true;
                }
            }
            let holds = matches!(&self.ports[READ][pi].active, Some(a) if a.grant > 0);
            if !holds {
                continue;
            }
            let ready = self.beat_ready(READ, pi, now);
            let a = self.ports[READ][pi]
                .active
                .as_ref()
                .expect("holding port is active");
            if now < a.ready_at || now < a.next_beat_at {
                continue;
            }
            if !ready {
                // buffer full: hand the channel back
                self.release(READ, pi, banks, bank_of);
                progress = true;
                continue;
            }
            if self.ports[READ][pi].staging > 0 || budget == 0 {
                continue;
            }
            budget -= 1;
            let lanes = self.lanes;
            let beat = if a.burst.per_access { 1 } else { lat.read_beat };
            let port = &mut self.ports[READ][pi];
            let a = port.active.as_mut().expect("holding port is active");
            let vals = a.beat_values(lanes);
            a.values_left -= vals;
            a.beats_left -= 1;
            a.grant -= 1;
            a.next_beat_at = now + beat.max(1);
            if self.dataflow {
                port.staging += vals;
            }
            progress = true;
            let (grant, left, next) = (a.grant, a.beats_left, a.next_beat_at);
            if grant == 0 {
                banks[bank_of[READ]].in_use -= 1;
            }
            if left == 0 {
                if grant > 0 {
                    self.release(READ, pi, banks, bank_of);
                }
                let port = &mut self.ports[READ][pi];
                port.active = None;
                port.free_at = next;
            }
        }
        if self.ports[READ].iter().all(|p| p.idle(now + 1)) {
            self.r_loaded = false;
            self.done_r = self.r + 1;
            self.r += 1;
            progress = true;
        }
        progress
    }

    fn required(&self, s: usize, emitted: u32) -> u32 {
        let work = &self.w.slices[s];
        if work.planes == 0 {
            return 0;
        }
        let n = work.cells;
        let ahead = if self.w.levels == 0 {
            n
        } else {
            n.min(emitted + self.w.levels + 2)
        };
        (work.planes - 1) * n + ahead
    }

    fn step_prepare(&mut self) -> bool {
        if self.p >= self.slices() || !self.open(self.p) {
            return false;
        }
        let work = &self.w.slices[self.p];
        let need = work.planes * work.cells;
        let mut worked = false;
        for f in 0..3 {
            if self.p_consumed[f] < need && self.rd[f].can_pop(self.spf) {
                self.rd[f].pop(self.spf);
                self.p_consumed[f] += 1;
                worked = true;
            }
        }
        let have = self.p_consumed.iter().copied().min().unwrap_or(0);
        if self.p_emitted < work.cells
            && self.stencils < self.depth
            && have >= self.required(self.p, self.p_emitted)
        {
            self.stencils += 1;
            self.p_emitted += 1;
            worked = true;
        }
        if self.p_emitted == work.cells && self.p_consumed.iter().all(|&c| c == need) {
            self.p += 1;
            self.p_consumed = [0; 3];
            self.p_emitted = 0;
        }
        worked
    }

    /// Returns (state changed, stage active).
    fn step_compute(&mut self) -> Result<(bool, bool)> {
        let mut progress = false;
        self.stalled = false;
        let had_inflight = !self.inflight.is_empty();
        if let Some(&ready) = self.inflight.front() {
            if ready <= self.pc {
                let spf = self.spf;
                let depth = self.depth;
                let room =
                    !self.dataflow || self.res.iter().all(|l| l.len[l.push_lane(spf)] < depth);
                if room {
                    self.inflight.pop_front();
                    if self.dataflow {
                        for l in self.res.iter_mut() {
                            l.push(spf);
                        }
                    }
                    self.c_completed += 1;
                    if self.c_completed == self.w.slices[self.cd].cells {
                        self.cd += 1;
                        self.c_completed = 0;
                    }
                    progress = true;
                } else {
                    self.stalled = true;
                }
            }
        }
        let mut issued = false;
        if !self.stalled && self.ci < self.slices() && self.open(self.ci) {
            let input = if self.dataflow {
                self.stencils > 0
            } else {
                self.done_r > self.ci
            };
            if input {
                let due = match self.run {
                    Some((base, k)) => base + (self.ii * k as f64).ceil() as u64,
                    None => self.pc,
                };
                if self.pc >= due {
                    let (base, k) = self.run.unwrap_or((self.pc, 0));
                    self.run = Some((base, k + 1));
                    self.inflight.push_back(self.pc + self.fill - 1);
                    if self.dataflow {
                        self.stencils -= 1;
                    }
                    self.in_transition = false;
                    self.c_issued += 1;
                    if self.c_issued == self.w.slices[self.ci].cells {
                        self.ci += 1;
                        self.c_issued = 0;
                    }
                    issued = true;
                    progress = true;
                }
            } else if self.run.take().is_some() {
                progress = true;
            }
        }
        let active = issued || had_inflight;
        if !self.stalled {
            self.pc += 1;
        }
        if self.inflight.len() > 1 << 20 {
            return Err(Error::Defect("compute pipeline overflow".into()));
        }
        Ok((progress, active))
    }

    fn step_write(&mut self, now: u64, banks: &mut [Bank], bank_of: &[usize; 2]) -> bool {
        if self.wsl >= self.slices() || !self.open(self.wsl) {
            return false;
        }
        if !self.dataflow && self.cd <= self.wsl {
            return false;
        }
        let mut progress = false;
        if !self.w_loaded {
            let work = &self.w.slices[self.wsl];
            for (port, bursts) in self.ports[WRITE].iter_mut().zip(&work.writes) {
                port.queue.extend(bursts.iter().copied());
            }
            self.w_loaded = true;
            progress = true;
        }
        let mut budget = self.link;
        let lat = self.lat;
        let n = self.ports[WRITE].len();
        for pi in self.port_order(n) {
            let port = &mut self.ports[WRITE][pi];
            if port.active.is_none() && now >= port.free_at {
                if let Some(burst) = port.queue.pop_front() {
                    // the request takes one cycle of the request and response overhead
                    port.active = Some(Active {
                        burst,
                        ready_at: now + 1,
                        beats_left: burst.beats,
                        values_left: burst.values,
                        next_beat_at: now + 1,
                        grant: 0,
                    });
                    progress = true;
                }
            }
            let Some(a) = &self.ports[WRITE][pi].active else {
                continue;
            };
            // gather values for the next beat
            let need = a.beat_values(self.lanes);
            if self.dataflow {
                let mut pops = 0;
                while self.ports[WRITE][pi].staging < need
                    && pops < self.spf
                    && self.res[pi].can_pop(self.spf)
                {
                    self.res[pi].pop(self.spf);
                    self.ports[WRITE][pi].staging += 1;
                    pops += 1;
                    progress = true;
                }
            } else if self.ports[WRITE][pi].staging < need {
                self.ports[WRITE][pi].staging = need;
                progress = true;
            }
            let port = &self.ports[WRITE][pi];
            let a = port.active.as_ref().expect("checked active");
            if a.grant == 0 || now < a.next_beat_at {
                continue;
            }
            if port.staging < need {
                if !self.res[pi].can_pop(self.spf) {
                    // nothing left to send: hand the channel back
                    self.release(WRITE, pi, banks, bank_of);
                    progress = true;
                }
                continue;
            }
            if budget == 0 {
                continue;
            }
            budget -= 1;
            let beat = if a.burst.per_access {
                1
            } else {
                lat.write_beat
            };
            let port = &mut self.ports[WRITE][pi];
            let a = port.active.as_mut().expect("checked active");
            port.staging -= need;
            a.values_left -= need;
            a.beats_left -= 1;
            a.grant -= 1;
            a.next_beat_at = now + beat;
            progress = true;
            let (grant, left, per_access) = (a.grant, a.beats_left, a.burst.per_access);
            if grant == 0 {
                banks[bank_of[WRITE]].in_use -= 1;
            }
            if left == 0 {
                if grant > 0 {
                    self.release(WRITE, pi, banks, bank_of);
                }
                let tail = if per_access {
                    lat.access_write.saturating_sub(beat + 1)
                } else {
                    lat.write_tail.saturating_sub(1)
                };
                let port = &mut self.ports[WRITE][pi];
                port.active = None;
                port.free_at = now + beat + tail;
            }
        }
        if self.ports[WRITE].iter().all(|p| p.idle(now + 1)) {
            self.w_loaded = false;
            self.wsl += 1;
            self.done_w = self.wsl;
            progress = true;
        }
        progress
    }

    /// Earliest future cycle at which a timer could change this kernel's state.
    fn next_wake(&self, now: u64) -> Option<u64> {
        let mut best: Option<u64> = None;
        let mut consider = |t: u64| {
            if t > now {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        };
        for dir in [READ, WRITE] {
            for p in &self.ports[dir] {
                consider(p.free_at);
                if let Some(a) = &p.active {
                    consider(a.ready_at);
                    consider(a.next_beat_at);
                }
            }
        }
        // a port whose last response lands at `free_at` completes the slice a cycle earlier
        for p in &self.ports[WRITE] {
            if p.free_at > now + 1 {
                consider(p.free_at - 1);
            }
        }
        if !self.stalled {
            if let Some(&ready) = self.inflight.front() {
                consider(now + ready.saturating_sub(self.pc) + 1);
            }
            if let Some((base, k)) = self.run {
                let due = base + (self.ii * k as f64).ceil() as u64;
                consider(now + due.saturating_sub(self.pc) + 1);
            }
        }
        best
    }

    fn skip(&mut self, from: u64, cycles: u64) {
        self.account(from, cycles);
        if !self.stalled {
            self.pc += cycles;
        }
    }
}

/// Runs `works` concurrently (one kernel each) and returns per-kernel outcomes.
pub(crate) fn simulate(
    works: &[Workload],
    variant: PipelineVariant,
    arch: &ArchParams,
    record_segments: bool,
) -> Result<Vec<KernelOutcome>> {
    let mut kernels: Vec<Kernel> = works
        .iter()
        .map(|w| Kernel::new(w, variant, arch, record_segments))
        .collect();
    let bank_of = if arch.dram_banks >= 2 { [0, 1] } else { [0, 0] };
    let nbanks = bank_of[1] + 1;
    let mut banks: Vec<Bank> = (0..nbanks)
        .map(|b| {
            let mut members = Vec::new();
            for (k, kern) in kernels.iter().enumerate() {
                for dir in [READ, WRITE] {
                    if bank_of[dir] == b {
                        for p in 0..kern.ports[dir].len() {
                            members.push((k, dir, p));
                        }
                    }
                }
            }
            Bank {
                channels: arch.bank_channels,
                in_use: 0,
                rr: 0,
                members,
            }
        })
        .collect();

    let mut now = 0u64;
    loop {
        let mut progress = false;
        for bank in banks.iter_mut() {
            let m = bank.members.len();
            let mut scanned = 0;
            while bank.in_use < bank.channels && scanned < m {
                let (k, dir, p) = bank.members[(bank.rr + scanned) % m];
                scanned += 1;
                if !kernels[k].finished && kernels[k].wants(dir, p, now) {
                    kernels[k].grant(dir, p);
                    bank.in_use += 1;
                    bank.rr = (bank.rr + scanned) % m;
                    scanned = 0;
                    progress = true;
                }
            }
        }
        for k in kernels.iter_mut().filter(|k| !k.finished) {
            progress |= k.step(now, &mut banks, &bank_of)?;
        }
        if kernels.iter().all(|k| k.finished) {
            break;
        }
        if !progress {
            let wake = kernels
                .iter()
                .filter(|k| !k.finished)
                .filter_map(|k| k.next_wake(now))
                .min()
                .ok_or_else(|| {
                    Error::Defect(format!("timing simulation stalled at cycle {now}"))
                })?;
            let gap = wake - now - 1;
            if gap > 0 {
                for k in kernels.iter_mut().filter(|k| !k.finished) {
                    k.skip(now + 1, gap);
                }
            }
            now = wake;
        } else {
            now += 1;
        }
    }
    Ok(kernels.into_iter().map(|k| k.out).collect())
}
