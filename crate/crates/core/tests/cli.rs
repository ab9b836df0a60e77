use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use discount_reach::config::ExperimentConfig;
use discount_reach::grid::{read_field, write_field, Grid, ScalarField};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_discount-reach"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_config(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let config = configs_dir().join(config);
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Relative path -> contents for every file under `dir`.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn bundled_configs_parse_and_validate() {
    let mut names: Vec<String> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["dubins_ra.toml", "dubins_sa.toml", "integrator1d_ra.toml", "integrator1d_sa.toml"]
    );
    for name in names {
        let cfg = ExperimentConfig::load(configs_dir().join(&name)).unwrap();
        cfg.validate().unwrap();
        assert_eq!(format!("{}.toml", cfg.name), name);
    }
}

#[test]
fn integrator_reach_avoid_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run_config("solve-ra", "integrator1d_ra.toml", tmp.path(), &[]));
    let value = read_field(tmp.path().join("ra/value.drfd")).unwrap();
    let grid = value.grid().clone();
    let dx = grid.spacing()[0];
    for (i, v) in value.values().iter().enumerate() {
        let x = grid.node(i)[0];
        let analytic = x > -3.0 && x < 1.0;
        let near_edge = (x - 1.0).abs() <= dx + 1e-9 || (x + 3.0).abs() <= dx + 1e-9;
        assert!(near_edge || (*v < 0.0) == analytic, "x = {x}, V = {v}");
    }
    for f in ["target.drfd", "constraint.drfd", "ra/meta.json", "ra/timing.json", "ra/snapshots/snap_0000.drfd"] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }

    assert_ok(&run_config("simulate", "integrator1d_ra.toml", tmp.path(), &[]));
    let csv = fs::read_to_string(tmp.path().join("traj/ra_0.csv")).unwrap();
    assert!(csv.starts_with("t,x0,u0,d0,value,mode\n"));
    assert_eq!(csv.lines().count(), 1 + 501);
    assert!(tmp.path().join("traj/integrator1d_ra.json").is_file());
}

#[test]
fn integrator_stabilize_avoid_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run_config("solve-sa", "integrator1d_sa.toml", tmp.path(), &[]));
    for f in ["sa/sa.drfd", "sa/target_slot.drfd", "sa/meta.json", "rclvf/shifted.drfd", "rclvf/meta.json"] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
    assert_ok(&run_config("simulate", "integrator1d_sa.toml", tmp.path(), &[]));
    for k in 0..2 {
        let csv = fs::read_to_string(tmp.path().join(format!("traj/sa_{k}.csv"))).unwrap();
        let last = csv.lines().last().unwrap();
        let x: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert!(x.abs() < 0.1, "trajectory {k} ends at {x}");
        assert!(last.ends_with("stabilize_phase"));
    }
}

#[test]
fn unordered_bounds_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("integrator1d_ra.toml"))
        .unwrap()
        .replace("lower = [-3.0]\nupper = [3.0]", "lower = [3.0]\nupper = [-3.0]");
    let path = tmp.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let out = run(&["solve-ra", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid.lower[0]"), "{stderr}");
}

#[test]
fn simulate_before_solve_reports_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config("simulate", "integrator1d_ra.toml", tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn export_writes_one_line_per_node() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = Arc::new(Grid::new(&[(0.0, 1.0)], &[5], &[false]).unwrap());
    let field = ScalarField::from_fn(grid, |x| x[0] * x[0]);
    let path = tmp.path().join("f.drfd");
    write_field(&path, &field).unwrap();
    assert_ok(&run(&["export", "--field", path.to_str().unwrap()]));
    let csv = fs::read_to_string(tmp.path().join("f.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[2], "0.5,0.25");

    let out = run(&["export", "--field", path.to_str().unwrap(), "--format", "parquet"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, threads) in [(a.path(), "1"), (b.path(), "2")] {
        assert_ok(&run_config("solve-sa", "integrator1d_sa.toml", dir, &["--threads", threads]));
        assert_ok(&run_config("simulate", "integrator1d_sa.toml", dir, &["--threads", threads]));
    }
    let strip = |t: BTreeMap<PathBuf, Vec<u8>>| -> BTreeMap<PathBuf, Vec<u8>> {
        t.into_iter().filter(|(p, _)| p.file_name().unwrap() != "timing.json").collect()
    };
    let (ta, tb) = (strip(tree(a.path())), strip(tree(b.path())));
    assert!(ta.len() > 10);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (path, bytes) in &ta {
        assert!(bytes == &tb[path], "{} differs", path.display());
    }
    // overwriting in place gives the same bytes again
    assert_ok(&run_config("solve-sa", "integrator1d_sa.toml", a.path(), &[]));
    assert_eq!(strip(tree(a.path())), ta);
}

#[test]
fn dubins_reach_avoid_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run_config("solve-ra", "dubins_ra.toml", tmp.path(), &[]));
    let value = read_field(tmp.path().join("ra/value.drfd")).unwrap();
    assert_eq!(value.grid().counts(), &[61, 61, 40]);
    let target = read_field(tmp.path().join("target.drfd")).unwrap();
    let constraint = read_field(tmp.path().join("constraint.drfd")).unwrap();
    let inside = value.negative_mask();
    // the target itself is reachable and no obstacle node is
    for i in 0..inside.len() {
        if target.values()[i] < 0.0 && constraint.values()[i] < 0.0 {
            assert!(inside[i]);
        }
        if constraint.values()[i] >= 0.0 {
            assert!(!inside[i]);
        }
    }
    assert_ok(&run_config("simulate", "dubins_ra.toml", tmp.path(), &[]));
    assert!(tmp.path().join("traj/ra_0.csv").is_file());
    assert!(tmp.path().join("traj/dubins_ra.json").is_file());
}
