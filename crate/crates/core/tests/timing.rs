use advect_core::grid::{BoundaryRule, GridDims};
use advect_core::pipeline::{
    build_kernel_traces, build_trace, EventKind, EventTrace, Geometry, PipelineVariant, Stage,
};
use advect_core::timing::{
    compute_stage_cycles, gflops, price_trace, price_trace_segments, simulate_multikernel,
    write_breakdown_csv, ArchParams, Category,
};

/// Two-slice split-port sequential trace moving one field; each slice reads
/// `planes` planes of `n` values on a port of `width` bits.
fn sequential_trace(n: u32, planes: u32, width: u16) -> EventTrace {
    let beats = n / u32::from(width / 64);
    let mut t = EventTrace::new();
    t.set_levels(64);
    for s in 0..2 {
        if s == 0 {
            t.record(Stage::Control, EventKind::BlockTransition, 0, 0, s, 1);
        }
        for f in 0..1u16 {
            t.record(Stage::Read, EventKind::ReadReq, f, width, s, planes);
            t.record(
                Stage::Read,
                EventKind::ReadBeat,
                f,
                width,
                s,
                planes * beats,
            );
        }
        t.record(Stage::Compute, EventKind::ComputeIter, 0, 0, s, n);
        for f in 3..4u16 {
            t.record(Stage::Write, EventKind::WriteReq, f, width, s, 1);
            t.record(Stage::Write, EventKind::WriteBeat, f, width, s, beats);
            t.record(Stage::Write, EventKind::WriteResp, f, width, s, 1);
        }
    }
    t
}

fn segment_lengths(trace: &EventTrace, arch: &ArchParams, cat: Category) -> Vec<u64> {
    let (_, segs) = price_trace_segments(trace, PipelineVariant::V2SplitPorts, arch, true).unwrap();
    segs.iter()
        .filter(|s| s.category == cat)
        .map(|s| s.end - s.start)
        .collect()
}

#[test]
fn contiguous_slice_read_closed_form() {
    let narrow = ArchParams {
        width_converter_penalty_cycles: 0,
        ..ArchParams::for_variant(PipelineVariant::V2SplitPorts)
    };
    assert_eq!(
        segment_lengths(&sequential_trace(4096, 1, 64), &narrow, Category::Load),
        vec![4121]
    );
    let wide = ArchParams {
        port_width_bits: 256,
        ..ArchParams::for_variant(PipelineVariant::V2SplitPorts)
    };
    assert_eq!(
        segment_lengths(&sequential_trace(4096, 1, 256), &wide, Category::Load),
        vec![1049]
    );
    // the converter sits in front of every narrow beat by default
    let dflt = ArchParams::for_variant(PipelineVariant::V2SplitPorts);
    assert_eq!(
        segment_lengths(&sequential_trace(4096, 1, 64), &dflt, Category::Load),
        vec![25 + 2 * 4096]
    );
    // back-to-back bursts pay the request each time
    assert_eq!(
        segment_lengths(&sequential_trace(4096, 2, 64), &narrow, Category::Load),
        vec![2 * 4121]
    );
}

#[test]
fn single_beat_write_costs_request_and_response() {
    let arch = ArchParams::for_variant(PipelineVariant::V2SplitPorts);
    assert_eq!(
        segment_lengths(&sequential_trace(1, 1, 64), &arch, Category::Write),
        vec![37, 37]
    );
}

fn rule() -> BoundaryRule {
    BoundaryRule::default()
}

fn price(
    dims: GridDims,
    v: PipelineVariant,
    arch: &ArchParams,
) -> advect_core::timing::TimingBreakdown {
    price_trace(
        &build_trace(dims, v, &Geometry::default(), rule()).unwrap(),
        v,
        arch,
    )
    .unwrap()
}

#[test]
fn per_access_latencies_price_every_element() {
    let v = PipelineVariant::V4DataflowXNaive;
    let base = ArchParams::for_variant(v);
    assert_eq!(base.access_latency(false, false), 28);
    assert_eq!(base.access_latency(true, false), 37);
    assert_eq!(base.access_latency(false, true), 3);
    // 3x4x3 periodic: one block, slice 0 fetches 3 planes of 12 cells per field
    let d = GridDims::new(3, 4, 3).unwrap();
    let reads_per_port = 3 * 12;
    let writes_per_port = 3 * 12;
    let cyc = |ms: f64| (ms * base.clock_mhz * 1e3).round() as u64;
    let b0 = price(d, v, &base);
    let slower_read = ArchParams {
        per_access_read_latency_noncontig: 29,
        ..base.clone()
    };
    let b1 = price(d, v, &slower_read);
    assert_eq!(cyc(b1.busy.read_ms) - cyc(b0.busy.read_ms), reads_per_port);
    assert!(cyc(b0.busy.read_ms) >= 28 * reads_per_port);
    let slower_write = ArchParams {
        per_access_write_latency_noncontig: 38,
        ..base.clone()
    };
    let b2 = price(d, v, &slower_write);
    assert_eq!(b2.total_cycles - b0.total_cycles, writes_per_port);
    // hoisted designs never pay per-access latency
    let v5 = PipelineVariant::V5DataflowXOpt;
    let a5 = ArchParams::for_variant(v5);
    let bumped = ArchParams {
        per_access_read_latency_noncontig: 500,
        per_access_write_latency_noncontig: 500,
        ..a5.clone()
    };
    assert_eq!(price(d, v5, &a5), price(d, v5, &bumped));
}

#[test]
fn compute_stage_identity_at_full_scale() {
    let d = GridDims::new(512, 512, 64).unwrap();
    let v = PipelineVariant::V5DataflowXOpt;
    let arch = ArchParams::for_variant(v);
    let t = build_trace(d, v, &Geometry::default(), rule()).unwrap();
    let cycles = compute_stage_cycles(&t, v, &arch).unwrap();
    // eight 64-row blocks, each one pipelined run over 512 slices of 64x64
    let run: u64 = 512 * 64 * 64;
    assert_eq!(cycles, 8 * (70 + run - 1));
    let ms = cycles as f64 / 310e3;
    assert!((ms - 53.88).abs() / 53.88 < 0.02, "{ms}");
}

#[test]
fn gflops_formula() {
    assert!((gflops(16_777_216, 63.49e-3).unwrap() - 14.0).abs() < 0.05);
    assert!((gflops(1, 53e-9).unwrap() - 1.0).abs() < 1e-9);
    let cells = 268_435_456u64;
    let runtime = 53.0 * cells as f64 / 24.4e9;
    assert!((runtime * 1e3 - 582.0).abs() < 2.0);
    assert!((gflops(cells, runtime).unwrap() - 24.4).abs() < 1e-9);
    assert!(gflops(1, 0.0).is_err());
    assert!(gflops(1, -1.0).is_err());
}

#[test]
fn breakdown_invariants_and_determinism() {
    let d = GridDims::new(8, 16, 16).unwrap();
    for v in PipelineVariant::ALL {
        let arch = ArchParams::for_variant(v);
        let b = price(d, v, &arch);
        assert_eq!(b, price(d, v, &arch), "{v}");
        assert_eq!(
            b.attribution_cycles.iter().sum::<u64>(),
            b.total_cycles,
            "{v}"
        );
        let busy = [
            b.busy.read_ms,
            b.busy.prepare_ms,
            b.busy.compute_ms,
            b.busy.write_ms,
        ];
        let eps = 1e-9;
        if v.is_sequential() {
            let parts = b.load_ms + b.compute_ms + b.write_ms + b.block_transition_ms;
            assert!((parts - b.total_ms).abs() < eps, "{v}");
        } else {
            assert!(
                busy.iter().cloned().fold(0.0, f64::max) <= b.total_ms + eps,
                "{v}"
            );
            assert!(b.total_ms <= busy.iter().sum::<f64>() + eps, "{v}");
        }
    }
}

#[test]
fn latencies_never_speed_things_up() {
    let d = GridDims::new(6, 16, 16).unwrap();
    type Bump = fn(&mut ArchParams);
    let bumps: [Bump; 9] = [
        |a| a.read_req_cycles += 7,
        |a| a.read_beat_cycles += 1,
        |a| a.write_req_plus_resp_cycles += 9,
        |a| a.per_access_read_latency_noncontig += 5,
        |a| a.per_access_write_latency_noncontig += 5,
        |a| a.width_converter_penalty_cycles += 1,
        |a| a.compute_depth += 30,
        |a| a.compute_ii += 0.5,
        |a| a.sequential_compute_ii += 0.5,
    ];
    for v in PipelineVariant::ALL {
        let arch = ArchParams::for_variant(v);
        let t = build_trace(d, v, &Geometry::default(), rule()).unwrap();
        let base = price_trace(&t, v, &arch).unwrap().total_cycles;
        for bump in bumps {
            let mut slower = arch.clone();
            bump(&mut slower);
            assert!(
                price_trace(&t, v, &slower).unwrap().total_cycles >= base,
                "{v} {slower:?}"
            );
        }
    }
}

#[test]
fn mismatched_port_width_is_rejected() {
    let d = GridDims::new(4, 8, 8).unwrap();
    let t = build_trace(d, PipelineVariant::V6Wide256, &Geometry::default(), rule()).unwrap();
    let narrow = ArchParams::for_variant(PipelineVariant::V5DataflowXOpt);
    assert!(price_trace(&t, PipelineVariant::V6Wide256, &narrow).is_err());
    let t7 = build_trace(
        d,
        PipelineVariant::V7Wide256Quad,
        &Geometry::default(),
        rule(),
    )
    .unwrap();
    let one_stream = ArchParams::for_variant(PipelineVariant::V6Wide256);
    assert!(price_trace(&t7, PipelineVariant::V7Wide256Quad, &one_stream).is_err());
}

#[test]
fn single_kernel_contention_equals_price_trace() {
    let d = GridDims::new(8, 32, 16).unwrap();
    for v in PipelineVariant::ALL {
        let arch = ArchParams::for_variant(v);
        let traces = build_kernel_traces(d, v, &Geometry::default(), rule(), 1).unwrap();
        let r = simulate_multikernel(&traces, v, &arch).unwrap();
        assert_eq!(r.kernels, vec![price_trace(&traces[0], v, &arch).unwrap()]);
        assert_eq!(r.aggregate_ms, r.wall_ms);
    }
    assert!(
        simulate_multikernel(&[], PipelineVariant::V5DataflowXOpt, &ArchParams::default()).is_err()
    );
}

#[test]
fn contended_kernels_are_never_faster_than_alone() {
    let d = GridDims::new(16, 64, 16).unwrap();
    let v = PipelineVariant::V6Wide256;
    let arch = ArchParams::for_variant(v);
    let traces = build_kernel_traces(d, v, &Geometry::default(), rule(), 4).unwrap();
    let together = simulate_multikernel(&traces, v, &arch).unwrap();
    for (t, k) in traces.iter().zip(&together.kernels) {
        assert!(k.total_cycles >= price_trace(t, v, &arch).unwrap().total_cycles);
    }
}

#[test]
fn breakdown_csv_layout() {
    let d = GridDims::new(4, 8, 8).unwrap();
    let v = PipelineVariant::V3DataflowSlice;
    let b = price(d, v, &ArchParams::for_variant(v));
    let mut out = Vec::new();
    write_breakdown_csv(std::slice::from_ref(&b), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("variant,total_ms,load_ms,compute_ms,write_ms,fraction")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "v3");
    assert_eq!(row[1], format!("{:.4}", b.total_ms));
    assert_eq!(lines.next(), None);
}
