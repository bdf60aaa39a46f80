use advect_core::advection::AdvectionCoefficients;
use advect_core::grid::{generate_fields, BoundaryRule, GridDims};
use advect_core::pipeline::{run_staged, Geometry, PipelineVariant};
use advect_core::profiler::{category_block, replay_segments, Profiler, ProfilerCommand};
use advect_core::timing::{price_trace, price_trace_segments, ArchParams, Category};

#[test]
fn short_block_in_nanoseconds() {
    let mut p = Profiler::new(310.0).unwrap();
    p.record(ProfilerCommand::Init, 0).unwrap();
    p.record(ProfilerCommand::BlockStart(1), 1000).unwrap();
    p.record(ProfilerCommand::BlockEnd(1), 1064).unwrap();
    p.record(ProfilerCommand::Report, 1064).unwrap();
    let r = p.last_report().unwrap();
    assert_eq!(r.blocks.len(), 1);
    // 64 cycles of a 310 MHz clock
    let want_ns = 64.0 / 310e6 * 1e9;
    assert!((r.blocks[0].ns() - want_ns).abs() < 1e-9);
    assert!((r.blocks[0].ns() - 206.45).abs() < 0.005);
}

#[test]
fn empty_session_reports_nothing() {
    let mut p = Profiler::new(310.0).unwrap();
    p.record(ProfilerCommand::Init, 0).unwrap();
    assert!(p.report().unwrap().blocks.is_empty());
    assert!(replay_segments(&[], 310.0).unwrap().blocks.is_empty());
}

#[test]
fn replayed_timeline_matches_attribution() {
    let d = GridDims::new(12, 20, 16).unwrap();
    let [u, v, w] = generate_fields(d, 3);
    let coeff = AdvectionCoefficients::uniform(d.z);
    let variant = PipelineVariant::V5DataflowXOpt;
    let g = Geometry {
        block_y: 8,
        slice_capacity: 4096,
        y_range: None,
    };
    let run = run_staged(&u, &v, &w, &coeff, variant, &g, BoundaryRule::default()).unwrap();
    let arch = ArchParams::for_variant(variant);
    let (b, segs) = price_trace_segments(&run.trace, variant, &arch, true).unwrap();
    // profiling observes without perturbing
    assert_eq!(b, price_trace(&run.trace, variant, &arch).unwrap());
    let report = replay_segments(&segs, arch.clock_mhz).unwrap();
    for cat in [
        Category::Load,
        Category::Compute,
        Category::Write,
        Category::Transition,
    ] {
        let got = report.block(category_block(cat)).map_or(0, |r| r.cycles);
        assert_eq!(got, b.cycles_in(cat), "{cat:?}");
    }
    assert!(report.total_cycles() <= b.total_cycles);
    assert_eq!(
        report.total_cycles() + b.cycles_in(Category::Idle),
        b.total_cycles
    );
}
