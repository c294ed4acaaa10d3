//! End-to-end checks of the `vctrl` binary: exit codes, file layout and
//! CSV headers for each subcommand.

use std::path::Path;
use std::process::Command;

fn vctrl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vctrl"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn simulate_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let status = vctrl()
        .args(["simulate", "--tf", "30", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let trajectory = read(&out.join("trajectory.csv"));
    assert!(trajectory.starts_with("t,s_h,i_h,r_h,a_m,s_m,i_m\n"));
    assert_eq!(trajectory.lines().count(), 122); // header + 4/day + endpoint

    let controls = read(&out.join("controls.csv"));
    assert!(controls.starts_with("t,c_A,c_m,alpha\n"));

    let summary = read(&out.join("summary.csv"));
    assert!(summary.starts_with("objective,peak_i_h,peak_time,r0_initial,iterations,converged\n"));
}

#[test]
fn r0_point_reports_baseline_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r0");
    let status = vctrl()
        .args(["r0", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let summary = read(&out.join("summary.csv"));
    let row = summary.lines().nth(1).unwrap();
    let r0: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((r0 - 2.4564).abs() < 5e-4, "r0 = {r0}");
}

#[test]
fn r0_sweep_emits_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let status = vctrl()
        .args([
            "r0",
            "--pair",
            "cm-ca",
            "--resolution",
            "11",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let grid = read(&out.join("r0_grid.csv"));
    let mut lines = grid.lines();
    assert_eq!(
        lines.next().unwrap(),
        "# x_name=c_m,y_name=c_A,fixed_name=alpha,fixed_value=1.000000000"
    );
    assert_eq!(lines.next().unwrap(), "x,y,r0");
    assert_eq!(grid.lines().count(), 2 + 11 * 11);
    // corner of the grid is the no-control reproduction number
    let first = grid.lines().nth(2).unwrap();
    let r0: f64 = first.split(',').nth(2).unwrap().parse().unwrap();
    assert!((r0 - 2.4564).abs() < 5e-4);
}

#[test]
fn interrupted_optimization_exits_with_code_two_but_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("opt");
    let config_path = dir.path().join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "scenario = optimize\nt_f = 20\nsolver.max_iters = 1\noutput_dir = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let status = vctrl()
        .args(["optimize", "--config", config_path.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let summary = read(&out.join("summary.csv"));
    assert!(summary.lines().nth(1).unwrap().ends_with(",false"));
    assert!(out.join("trajectory.csv").exists());
    assert!(out.join("controls.csv").exists());
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.conf");
    std::fs::write(&config_path, "controls.alpha = 0\n").unwrap();
    let output = vctrl()
        .args(["simulate", "--config", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("controls.alpha"), "stderr: {stderr}");
}

#[test]
fn figure_fig1a_emits_grid_and_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1a");
    let config_path = dir.path().join("fig.conf");
    std::fs::write(
        &config_path,
        format!("sweep.resolution = 21\noutput_dir = {}\n", out.display()),
    )
    .unwrap();
    let status = vctrl()
        .args([
            "figure",
            "--which",
            "fig1a",
            "--config",
            config_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("fig1a_grid.csv").exists());
    let threshold = read(&out.join("fig1a_threshold.csv"));
    assert!(threshold.starts_with("c_A,c_m\n"));
    // required adulticide shrinks as larvicide coverage grows
    let rows: Vec<f64> = threshold
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows.len(), 21);
    assert!(rows.windows(2).all(|w| w[1] < w[0]));
    assert!((rows[0] - 0.1332).abs() < 1e-3);
}

#[test]
fn figure_fig2_emits_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2");
    let status = vctrl()
        .args([
            "figure",
            "--which",
            "fig2",
            "--tf",
            "21",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let optimal = read(&out.join("fig2_optimal.csv"));
    let baseline = read(&out.join("fig2_no_control.csv"));
    assert!(optimal.starts_with("t,i_h\n"));
    assert_eq!(optimal.lines().count(), baseline.lines().count());
}

#[test]
fn figure_fig4_emits_one_curve_per_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4");
    let status = vctrl()
        .args([
            "figure",
            "--which",
            "fig4",
            "--tf",
            "14",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["fig4_case_a.csv", "fig4_case_b.csv", "fig4_case_c.csv"] {
        let text = read(&out.join(name));
        assert!(text.starts_with("t,i_h\n"), "{name} header");
        assert_eq!(text.lines().count(), 58); // header + 4/day over 14 days
    }
}

#[test]
fn compare_beats_its_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let status = vctrl()
        .args(["compare", "--tf", "42", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let field = |file: &str, idx: usize| -> f64 {
        read(&out.join(file))
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(idx)
            .unwrap()
            .parse()
            .unwrap()
    };
    let (objective, peak) = (field("summary.csv", 0), field("summary.csv", 1));
    let (base_objective, base_peak) = (
        field("baseline_summary.csv", 0),
        field("baseline_summary.csv", 1),
    );
    assert!(objective <= base_objective);
    assert!(peak < base_peak);
    assert!(out.join("baseline_trajectory.csv").exists());
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let out_serial = dir.path().join("serial");
    let out_parallel = dir.path().join("parallel");
    for (out, threads) in [(&out_serial, "1"), (&out_parallel, "2")] {
        let status = vctrl()
            .env("VCTRL_THREADS", threads)
            .args([
                "optimize",
                "--case",
                "C",
                "--tf",
                "14",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["trajectory.csv", "controls.csv", "summary.csv"] {
        let a = std::fs::read(out_serial.join(name)).unwrap();
        let b = std::fs::read(out_parallel.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between thread counts");
    }
}
