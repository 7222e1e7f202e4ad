use std::fs;

use aamrp::scenario::Scenario;
use aamrp::sweep::{run_keys, run_sweep, SweepOptions};
use aamrp::Protocol;

const SMALL: &str = "\
world.sim_time = 12
sweep.node_counts = 10, 15
sweep.group_sizes = 1, 2
sweep.base_node_count = 10
sweep.seeds = 1..2
output.trace = true
";

fn small() -> Scenario {
    Scenario::parse(SMALL).unwrap()
}

/// Every file under `dir` with its path relative to `dir`.
fn tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn read_dir_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn single_seed_mean_equals_the_run() {
    let mut scn = small();
    scn.sweep.seeds = vec![3];
    let rep = run_sweep(&scn, &SweepOptions::default()).unwrap();
    for (k, m) in &rep.runs {
        assert_eq!(rep.mean(k.protocol, k.n_nodes, k.group_size), Some(m));
    }
    let lines: Vec<&str> = rep.csv.lines().collect();
    // header, then run and mean row per point
    assert_eq!(lines.len(), 1 + 2 * rep.runs.len());
    for pair in lines[1..].chunks(2) {
        let (run, mean) = (pair[0].split_once(",3,").unwrap(), pair[1].split_once(",mean,").unwrap());
        assert_eq!(run, mean);
    }
}

#[test]
fn sweep_covers_every_combination_in_order() {
    let scn = small();
    let keys = run_keys(&scn, 0);
    // (10,1) (10,2) (15,1), two seeds, three protocols
    assert_eq!(keys.len(), 3 * 3 * 2);
    let rep = run_sweep(&scn, &SweepOptions::default()).unwrap();
    let protos: Vec<&str> = rep.csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let mut sorted = protos.clone();
    sorted.sort();
    assert_eq!(protos, sorted);
    assert!(rep.mean(Protocol::Flooding, 15, 1).is_some());
}

#[test]
fn parallel_and_sequential_sweeps_write_identical_files() {
    let scn = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_sweep(&scn, &SweepOptions { jobs: 1, out_dir: Some(a.path().into()), ..Default::default() }).unwrap();
    let rb = run_sweep(&scn, &SweepOptions { jobs: 4, out_dir: Some(b.path().into()), ..Default::default() }).unwrap();
    assert_eq!(ra.csv, rb.csv);
    let (fa, fb) = (tree(a.path()), tree(b.path()));
    // metrics CSV, 8 plot tables, 18 markers, 18 traces
    assert_eq!(fa.len(), 1 + 8 + 18 + 18);
    assert_eq!(fa, fb);
}

#[test]
fn interrupted_sweep_resumes_to_the_same_csv() {
    let scn = small();
    let fresh = tempfile::tempdir().unwrap();
    let full = run_sweep(&scn, &SweepOptions { out_dir: Some(fresh.path().into()), ..Default::default() }).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let opts = SweepOptions { out_dir: Some(dir.path().into()), ..Default::default() };
    run_sweep(&scn, &opts).unwrap();
    // simulate a crash that lost the CSV and every other run
    fs::remove_file(dir.path().join(&scn.output.csv)).unwrap();
    let markers = read_dir_sorted(&dir.path().join("runs"));
    for (name, _) in markers.iter().step_by(2) {
        fs::remove_file(dir.path().join("runs").join(name)).unwrap();
    }
    let resumed = run_sweep(&scn, &opts).unwrap();
    assert_eq!(resumed.resumed, markers.len() / 2);
    assert_eq!(
        fs::read(dir.path().join(&scn.output.csv)).unwrap(),
        fs::read(fresh.path().join(&scn.output.csv)).unwrap()
    );
    assert_eq!(resumed.csv, full.csv);
}

#[test]
fn seed_offset_shifts_every_run() {
    let scn = small();
    let base = run_keys(&scn, 0);
    let shifted = run_keys(&scn, 10);
    assert!(base.iter().zip(&shifted).all(|(a, b)| b.seed == a.seed + 10));
}
