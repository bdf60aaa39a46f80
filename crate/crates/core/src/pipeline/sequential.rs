//! Designs without a dataflow region: read, compute and write run one after
//! another for every slice.

use super::slice::{patch_from_buffer, PlaneBank, PlaneSet};
use super::trace::{EventKind, EventTrace, Stage};
use super::{KernelPlan, PipelineVariant};
use crate::advection::{compute_cell, AdvectionCoefficients, SourceTerms};
use crate::grid::{BoundaryRule, Field3};
use crate::scalar::Scalar;

pub(super) fn run<T: Scalar>(
    plan: &KernelPlan,
    inputs: [&Field3<T>; 3],
    coeff: &AdvectionCoefficients,
    variant: PipelineVariant,
    rule: BoundaryRule,
) -> (SourceTerms<T>, EventTrace) {
    let dims = plan.dims;
    let nz = dims.z;
    let mut out = SourceTerms::zeros(dims);
    let mut trace = EventTrace::new();
    trace.set_levels(nz as u32);
    let mut bank = PlaneBank::new(dims.x, rule);
    let mut buf = None;
    let mut results: [Vec<T>; 3] = Default::default();

    for step in &plan.steps {
        let block = &plan.blocks[step.block];
        let n = block.slice_cells();
        let s = step.seq;
        let base = block.y_start * nz;
        if step.first_in_block {
            trace.record(Stage::Control, EventKind::BlockTransition, 0, 0, s, 1);
            debug_assert!(bank.is_empty());
            bank = PlaneBank::new(block.x_extent, rule);
            buf = None;
        }

        let mut loaded: Vec<PlaneSet<T>> = step
            .loads
            .iter()
            .map(|&x| PlaneSet::with_halo(inputs, x, block, rule))
            .collect();
        if variant.shared_port() {
            // one loop per field, each with its own burst
            for f in 0..3 {
                for plane in loaded.iter_mut() {
                    let src = &inputs[f].slice(plane.x())[base..base + n];
                    trace.record(Stage::Read, EventKind::ReadReq, 0, 64, s, 1);
                    for (c, &value) in src.iter().enumerate() {
                        plane.fields[f].set_core(c, value);
                        trace.record(Stage::Read, EventKind::ReadBeat, 0, 64, s, 1);
                    }
                }
            }
        } else {
            // fused loop: the three ports advance together
            for plane in loaded.iter_mut() {
                let x = plane.x();
                for f in 0..3 {
                    trace.record(
                        Stage::Read,
                        EventKind::ReadReq,
                        variant.memory_read_port(f),
                        64,
                        s,
                        1,
                    );
                }
                for c in 0..n {
                    for f in 0..3 {
                        plane.fields[f].set_core(c, inputs[f].slice(x)[base + c]);
                        trace.record(
                            Stage::Read,
                            EventKind::ReadBeat,
                            variant.memory_read_port(f),
                            64,
                            s,
                            1,
                        );
                    }
                }
            }
        }
        for plane in loaded {
            bank.insert(plane);
        }
        let window = bank.advance(buf.take(), step.x);

        for r in results.iter_mut() {
            r.clear();
        }
        for c in 0..n {
            let (jj, k) = (c / nz, c % nz);
            let cell = if rule.zero_level(k) {
                [T::zero(); 3]
            } else {
                compute_cell(&patch_from_buffer(&window, jj, k, rule, nz), coeff, k)
            };
            for f in 0..3 {
                results[f].push(cell[f]);
            }
            trace.record(Stage::Compute, EventKind::ComputeIter, 0, 0, s, 1);
        }
        buf = Some(window);

        let x = block.x_start + step.x;
        let targets = out.fields_mut();
        for f in 0..3 {
            let port = variant.memory_write_port(f);
            trace.record(Stage::Write, EventKind::WriteReq, port, 64, s, 1);
            let dst = &mut targets[f].data_mut()[dims.offset(x, block.y_start, 0)..][..n];
            for (d, &value) in dst.iter_mut().zip(&results[f]) {
                *d = value;
                trace.record(Stage::Write, EventKind::WriteBeat, port, 64, s, 1);
            }
            trace.record(Stage::Write, EventKind::WriteResp, port, 64, s, 1);
        }
    }
    (out, trace)
}
