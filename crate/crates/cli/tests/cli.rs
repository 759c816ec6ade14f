use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rstmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rstmrf")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn unknown_config_keys_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "size = 8\nlamda = 3\n").unwrap();
    let out = rstmrf(&["run-experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
    assert_eq!(code(&rstmrf(&["run-experiment", "--lamda", "3"])), 2);
}

#[test]
fn invalid_combinations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "rooted = false\nrst = true\nrho_rel = 0.1\nsize = 8\niters = 4\n").unwrap();
    let out = rstmrf(&["run-experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&rstmrf(&["sample-prior", "--rst", "false", "--family", "cauchy"])), 2);
    assert_eq!(code(&rstmrf(&["run-experiment", "--sigma", "-1"])), 2);
    assert_eq!(code(&rstmrf(&["run-experiment", "--experiment", "tomography"])), 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("prior.cfg");
    fs::write(&cfg, "size = 8\nsamples = 5\nfamily = laplace\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = rstmrf(&[
        "sample-prior",
        "--config",
        cfg.to_str().unwrap(),
        "--samples",
        "1",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        files(&out_dir),
        ["depth_0.csv", "depth_0.pgm", "forest_0.csv", "prior_0.csv", "prior_0.pgm"]
    );
    let pgm = fs::read(out_dir.join("prior_0.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n8 8\n65535\n"));
    assert_eq!(pgm.len(), 13 + 2 * 64);
}

#[test]
fn experiment_writes_summary_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exp");
    let out = rstmrf(&[
        "run-experiment",
        "--experiment",
        "inpainting",
        "--size",
        "12",
        "--iters",
        "20",
        "--family",
        "gmrf,lmrf",
        "--lambda",
        "4",
        "--chains",
        "2",
        "--phantom",
        "disk",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let names = files(&out_dir);
    for f in ["truth.pgm", "data.pgm", "mean_rst-gmrf_0.pgm", "std_rst-lmrf_0.csv", "contrast.csv", "runtime.csv"] {
        assert!(names.iter().any(|n| n == f), "missing {f} in {names:?}");
    }
    let csv = fs::read_to_string(out_dir.join("contrast.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("inpainting,rst-gmrf,4,"));
    // 20 iterations, 4 burned in, two chains.
    assert_eq!(rows[2].split(',').nth(7), Some("32"));
}

#[test]
fn benchmark_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = rstmrf(&[
            "benchmark-trees",
            "--sizes",
            "4,8",
            "--kappa",
            "1,100",
            "--rho-rel",
            "0,0.1",
            "--repeats",
            "3",
            "--seed",
            "11",
            "--out-dir",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        fs::read(d.join("tree_benchmark.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 9);
}
