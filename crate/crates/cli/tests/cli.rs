use std::path::PathBuf;
use std::process::{Command, Output};

fn advect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advect"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("advect-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, body: &str) -> String {
    let path = scratch(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = write_config(
        "scaling.toml",
        "experiment = \"kernel_scaling\"\ndims = [16, 32, 16]\nkernels = [1, 2, 4]\n",
    );
    let a = advect(&["--config", &cfg]);
    let b = advect(&["--config", &cfg]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout)
        .starts_with("variant,kernels,aggregate_ms,wall_ms,slowdown\n"));
}

#[test]
fn verify_passes_and_writes_file() {
    let out = scratch("verify.md");
    let o = advect(&[
        "--experiment",
        "verify",
        "--dims",
        "6x5x4",
        "--seed",
        "9",
        "--variant",
        "v1,v7",
        "--format",
        "markdown",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text,
        "| variant | seed | result |\n|---|---|---|\n| v1 | 9 | pass |\n| v7 | 9 | pass |\n"
    );
}

#[test]
fn dma_timeline_side_file() {
    let timeline = scratch("timeline.csv");
    let o = advect(&[
        "--experiment",
        "dma_overlap",
        "--kernels",
        "4",
        "--chunk-cells",
        "262144",
        "--timeline",
        timeline.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&timeline).unwrap();
    assert!(text.starts_with("chunk,phase,resource,start_s,end_s\n"));
}

#[test]
fn bad_input_is_a_usage_error() {
    assert_eq!(advect(&["--dims", "2x2x2"]).status.code(), Some(2));
    assert_eq!(advect(&["--variant", "v9"]).status.code(), Some(2));
    assert_eq!(advect(&["--experiment", "plot"]).status.code(), Some(2));
    let cfg = write_config("broken.toml", "experiment = 3\n");
    assert_eq!(advect(&["--config", &cfg]).status.code(), Some(2));
    assert_eq!(
        advect(&["--config", "/nonexistent/advect.toml"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn failed_check_sets_exit_status() {
    // a slow compute stage hides every memory optimisation
    let cfg = write_config(
        "slow.toml",
        "experiment = \"ladder\"\ndims = [8, 32, 16]\n[arch]\ncompute_ii = 6.0\n",
    );
    let o = advect(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("check failed"));
}
