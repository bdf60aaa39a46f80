use advect_core::dma::{
    chunk_cells_for, plan_chunks, simulate_overlap, DmaParams, KernelTimeModel, BYTES_PER_CELL,
};
use advect_core::grid::GridDims;

fn model(seconds_per_cell: f64) -> KernelTimeModel {
    KernelTimeModel {
        seconds_per_cell,
        launch_overhead_s: 0.0,
    }
}

#[test]
fn chunk_counts() {
    let d = GridDims::new(512, 512, 64).unwrap();
    let chunks = plan_chunks(d, 2_100_000).unwrap();
    // a slab is 512*64 cells; 2.1M cells hold 64 whole slabs
    let slabs_per_chunk = 2_100_000 / (512 * 64);
    assert_eq!(chunks.len(), 512usize.div_ceil(slabs_per_chunk));
    assert_eq!(chunks.len(), 8);
    assert_eq!(
        chunks.iter().map(|c| c.cells).sum::<u64>(),
        d.cells() as u64
    );
    assert_eq!(plan_chunks(d, d.cells() as u64).unwrap().len(), 1);
    assert!(plan_chunks(d, 512 * 64 - 1).is_err());
}

#[test]
fn full_scale_transfer_volume() {
    let d = GridDims::new(2048, 2048, 64).unwrap();
    assert_eq!(d.cells(), 268_435_456);
    let chunks = plan_chunks(d, chunk_cells_for(d, 64)).unwrap();
    let bytes: u64 = chunks.iter().map(|c| c.bytes_in + c.bytes_out).sum();
    assert_eq!(bytes, 2 * 24 * 268_435_456);
    assert!((bytes as f64 / 1e9 - 12.88).abs() < 0.005);
    assert_eq!(BYTES_PER_CELL, 24);
}

#[test]
fn single_chunk_is_serial() {
    let d = GridDims::new(8, 8, 8).unwrap();
    let chunks = plan_chunks(d, 512).unwrap();
    let p = DmaParams {
        num_kernels: 1,
        ..DmaParams::new(model(1e-6))
    };
    let s = simulate_overlap(&chunks, &p).unwrap();
    let t_in = 512.0 * 24.0 / 7e9;
    let want = t_in + 512.0 * 1e-6 + t_in;
    assert!((s.total_s - want).abs() < 1e-15);
    assert!((s.overhead_s - 2.0 * t_in).abs() < 1e-15);
}

#[test]
fn interior_transfers_hide_behind_compute() {
    let d = GridDims::new(4, 8, 8).unwrap();
    let chunks = plan_chunks(d, 128).unwrap();
    assert_eq!(chunks.len(), 2);
    let p = DmaParams {
        num_kernels: 2,
        ..DmaParams::new(model(1e-3))
    };
    let s = simulate_overlap(&chunks, &p).unwrap();
    let t = 128.0 * 24.0 / 7e9;
    let compute = 128.0 * 1e-3;
    // in(0) [0,t]; in(1) [t,2t]; compute(1) ends 2t+C; out(1) ends 3t+C
    assert!((s.total_s - (2.0 * t + compute + t)).abs() < 1e-12);
    assert_eq!(s.chunks[0].kernel, 0);
    assert_eq!(s.chunks[1].kernel, 1);
}

fn sweep_grid() -> (GridDims, Vec<advect_core::dma::Chunk>) {
    let d = GridDims::new(64, 32, 16).unwrap();
    let chunks = plan_chunks(d, chunk_cells_for(d, 20)).unwrap();
    (d, chunks)
}

#[test]
fn schedule_invariants() {
    let (d, chunks) = sweep_grid();
    for kernels in 1..=12 {
        for full_duplex in [true, false] {
            let p = DmaParams {
                num_kernels: kernels,
                full_duplex,
                kernel: KernelTimeModel {
                    seconds_per_cell: 3e-9,
                    launch_overhead_s: 2e-6,
                },
                ..DmaParams::new(model(0.0))
            };
            let s = simulate_overlap(&chunks, &p).unwrap();
            assert_eq!(
                s.chunks.iter().map(|c| c.cells).sum::<u64>(),
                d.cells() as u64
            );
            for c in &s.chunks {
                assert!(c.in_start <= c.in_end && c.in_end <= c.compute_start);
                assert!(c.compute_start <= c.compute_end && c.compute_end <= c.out_start);
            }
            // one chunk per kernel at a time
            for k in 0..kernels {
                let mut runs: Vec<_> = s.chunks.iter().filter(|c| c.kernel == k).collect();
                runs.sort_by(|a, b| a.compute_start.total_cmp(&b.compute_start));
                for w in runs.windows(2) {
                    assert!(w[0].compute_end <= w[1].compute_start);
                }
            }
            let eps = 1e-12;
            let lower = s
                .transfer_in_s
                .max(s.compute_sum_s / kernels as f64)
                .max(s.transfer_out_s);
            assert!(s.total_s + eps >= lower);
            assert!(s.total_s <= s.transfer_in_s + s.compute_sum_s + s.transfer_out_s + eps);
            assert!(s.compute_coverage_s <= s.total_s + eps);
        }
    }
}

#[test]
fn more_kernels_or_bandwidth_never_slow_down() {
    let (_, chunks) = sweep_grid();
    let base = DmaParams::new(KernelTimeModel {
        seconds_per_cell: 3e-9,
        launch_overhead_s: 2e-6,
    });
    let mut prev = f64::INFINITY;
    for kernels in 1..=12 {
        let s = simulate_overlap(
            &chunks,
            &DmaParams {
                num_kernels: kernels,
                ..base.clone()
            },
        )
        .unwrap();
        assert!(s.total_s <= prev + 1e-15, "{kernels} kernels");
        prev = s.total_s;
    }
    let mut prev = f64::INFINITY;
    for gbps in [1.0, 2.0, 4.0, 7.0, 16.0, 34.0, 100.0] {
        let p = DmaParams {
            host_to_card_gbps: gbps,
            card_to_host_gbps: gbps,
            ..base.clone()
        };
        let s = simulate_overlap(&chunks, &p).unwrap();
        assert!(s.total_s <= prev + 1e-15, "{gbps} GB/s");
        prev = s.total_s;
        let half = simulate_overlap(
            &chunks,
            &DmaParams {
                full_duplex: false,
                ..p
            },
        )
        .unwrap();
        assert!(half.total_s >= s.total_s);
    }
}

#[test]
fn timeline_csv_layout() {
    let d = GridDims::new(4, 8, 8).unwrap();
    let s = simulate_overlap(&plan_chunks(d, 128).unwrap(), &DmaParams::new(model(1e-6))).unwrap();
    let mut out = Vec::new();
    s.write_timeline_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "chunk,phase,resource,start_s,end_s");
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1].starts_with("0,in,h2c,"));
    assert!(lines[2].starts_with("0,compute,kernel0,"));
    assert!(lines[3].starts_with("0,out,c2h,"));
}

#[test]
fn invalid_parameters() {
    let d = GridDims::new(4, 8, 8).unwrap();
    let chunks = plan_chunks(d, 128).unwrap();
    let p = DmaParams::new(model(1e-6));
    assert!(simulate_overlap(
        &chunks,
        &DmaParams {
            num_kernels: 0,
            ..p.clone()
        }
    )
    .is_err());
    assert!(simulate_overlap(
        &chunks,
        &DmaParams {
            host_to_card_gbps: 0.0,
            ..p.clone()
        }
    )
    .is_err());
    assert!(simulate_overlap(&[], &p).is_err());
}
