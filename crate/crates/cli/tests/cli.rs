use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
world.sim_time = 10
sweep.node_counts = 10
sweep.group_sizes = 1
sweep.base_node_count = 10
sweep.seeds = 1..2
sweep.protocols = aamrp, flooding
";

fn aamrp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aamrp"))
        .args(args)
        .current_dir(dir)
        .env_remove("AAMRP_SEED_OFFSET")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn empty_scenario_validates_to_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), "").unwrap();
    let out = aamrp(&["validate", "--scenario", "s.txt"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    for line in [
        "world.area_width = 600",
        "world.area_height = 600",
        "world.radio_range = 250",
        "world.max_speed = 10",
        "world.pause_time = 5",
        "world.sim_time = 50",
        "sweep.node_counts = 25, 50, 75, 100",
        "sweep.group_sizes = 1, 2, 3, 4",
        "sweep.seeds = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10",
    ] {
        assert!(stdout.lines().any(|l| l == line), "missing {line:?} in\n{stdout}");
    }
}

#[test]
fn out_of_range_values_are_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), "ants.rho = 1.5\nprotocol.k_hops = 0\n").unwrap();
    let out = aamrp(&["validate", "--scenario", "s.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("ants.rho") && err.contains("(0, 1)"), "{err}");
    assert!(err.contains("protocol.k_hops") && err.contains(">= 1"), "{err}");
}

#[test]
fn parse_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), "# comment\nworld.nonsense = 3\n").unwrap();
    for cmd in ["validate", "run"] {
        let out = aamrp(&[cmd, "--scenario", "s.txt"], dir.path());
        assert_eq!(out.status.code(), Some(1));
        assert!(text(&out.stderr).contains("line 2"), "{}", text(&out.stderr));
    }
    let out = aamrp(&["run", "--scenario", "missing.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_csv_plots_and_traces_that_replay() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), SMALL).unwrap();
    let out = aamrp(&["run", "--scenario", "s.txt", "--jobs", "2", "--out", "res", "--trace", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(out.stdout.is_empty());
    let res = dir.path().join("res");
    let csv = fs::read_to_string(res.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(res.join("plot_nodes_pdf.csv").exists());
    assert!(res.join("plot_groups_overhead.csv").exists());

    let row = csv.lines().find(|l| l.starts_with("aamrp,10,1,1,")).unwrap();
    let overhead = row.split(',').nth(4).unwrap();
    let replayed = aamrp(&["trace", "res/traces/aamrp_n10_g1_s1.trace"], dir.path());
    assert_eq!(replayed.status.code(), Some(0));
    let want = format!("overhead = {}", overhead.trim_end_matches(".00"));
    assert!(text(&replayed.stdout).lines().any(|l| l == want), "{} vs {want}", text(&replayed.stdout));
}

#[test]
fn seed_offset_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aamrp"))
        .args(["run", "--scenario", "s.txt", "--out", "res", "--quiet"])
        .current_dir(dir.path())
        .env("AAMRP_SEED_OFFSET", "100")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("res/metrics.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("flooding,10,1,102,")), "{csv}");

    let bad = Command::new(env!("CARGO_BIN_EXE_aamrp"))
        .args(["run", "--scenario", "s.txt", "--out", "res2"])
        .current_dir(dir.path())
        .env("AAMRP_SEED_OFFSET", "minus one")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn malformed_trace_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.trace"), "garbage\n").unwrap();
    let out = aamrp(&["trace", "t.trace"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 1"));
}

#[test]
fn oracle_subcommand_reports_clean_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = aamrp(&["oracle", "ksp", "--trials", "20"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains("0 mismatches"));
}
