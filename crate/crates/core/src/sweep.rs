//! Runs every (protocol, node count, group size, seed) combination of a
//! scenario and writes the metrics CSV, plot tables and per-run artifacts.
//!
//! Output directory layout:
//!
//! ```text
//! <out>/<output.csv>                  metrics, one row per run plus mean rows
//! <out>/plot_nodes_<metric>.csv       x = n_nodes, one column per protocol
//! <out>/plot_groups_<metric>.csv      x = group_size, one column per protocol
//! <out>/runs/<run>.done               completed-run marker (resume)
//! <out>/traces/<run>.trace            with output.trace
//! <out>/convergence/<run>.csv         with output.convergence
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::metrics::{csv_row, RunMetrics, SeedLabel, CSV_HEADER};
use crate::scenario::Scenario;
use crate::sim::{trace, Protocol, RunOutcome, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub protocol: Protocol,
    pub n_nodes: usize,
    pub group_size: usize,
    pub seed: u64,
}

impl RunKey {
    /// File stem for this run's artifacts.
    pub fn stem(&self) -> String {
        format!("{}_n{}_g{}_s{}", self.protocol, self.n_nodes, self.group_size, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Worker threads; 1 runs inline.
    pub jobs: usize,
    pub out_dir: Option<PathBuf>,
    /// Added to every configured seed.
    pub seed_offset: u64,
    /// Writes traces regardless of `output.trace`.
    pub trace: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { jobs: 1, out_dir: None, seed_offset: 0, trace: false }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("run {run}: invalid configuration: {reason}")]
    Config { run: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SweepError + '_ {
    move |source| SweepError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: Vec<(RunKey, RunMetrics)>,
    /// Mean over seeds per (protocol, n_nodes, group_size).
    pub means: BTreeMap<(Protocol, usize, usize), RunMetrics>,
    pub csv: String,
    /// Runs skipped because a done-marker already existed.
    pub resumed: usize,
}

impl SweepReport {
    pub fn mean(&self, protocol: Protocol, n_nodes: usize, group_size: usize) -> Option<&RunMetrics> {
        self.means.get(&(protocol, n_nodes, group_size))
    }
}

/// Every run of the sweep in CSV order.
pub fn run_keys(scn: &Scenario, seed_offset: u64) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for &protocol in &scn.sweep.protocols {
        for (n_nodes, group_size) in scn.sweep.points() {
            for &s in &scn.sweep.seeds {
                keys.push(RunKey { protocol, n_nodes, group_size, seed: s + seed_offset });
            }
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

fn opt_to_str(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| x.to_string())
}

fn opt_from_str(s: &str) -> Option<Option<f64>> {
    if s == "N/A" {
        Some(None)
    } else {
        s.parse().ok().map(Some)
    }
}

/// Done-marker body: the four metrics at full precision.
fn marker_text(m: &RunMetrics) -> String {
    format!(
        "overhead={}\nload={}\ndelay={}\npdf={}\n",
        m.overhead,
        opt_to_str(m.routing_load),
        opt_to_str(m.avg_delay),
        opt_to_str(m.pdf)
    )
}

fn parse_marker(text: &str) -> Option<RunMetrics> {
    let mut fields = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line.split_once('=')?;
        fields.insert(k, v);
    }
    Some(RunMetrics {
        overhead: fields.get("overhead")?.parse().ok()?,
        routing_load: opt_from_str(fields.get("load")?)?,
        avg_delay: opt_from_str(fields.get("delay")?)?,
        pdf: opt_from_str(fields.get("pdf")?)?,
    })
}

fn execute(scn: &Scenario, key: &RunKey, trace: bool) -> Result<RunOutcome, SweepError> {
    let mut cfg = scn.run_config(key.protocol, key.n_nodes, key.group_size);
    cfg.trace |= trace;
    let sim = Simulation::new(&cfg, key.seed).map_err(|errs| SweepError::Config {
        run: key.stem(),
        reason: errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
    })?;
    Ok(sim.run())
}

fn write_file(path: &Path, body: &str) -> Result<(), SweepError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, body).map_err(io_err(path))
}

/// One run, skipping it when its done-marker exists.
fn run_one(scn: &Scenario, key: &RunKey, opts: &SweepOptions) -> Result<(RunMetrics, bool), SweepError> {
    let marker = opts.out_dir.as_ref().map(|d| d.join("runs").join(format!("{}.done", key.stem())));
    if let Some(m) = marker.as_ref().and_then(|p| fs::read_to_string(p).ok()).and_then(|t| parse_marker(&t)) {
        return Ok((m, true));
    }
    let out = execute(scn, key, opts.trace)?;
    if let Some(dir) = &opts.out_dir {
        if let Some(t) = &out.trace {
            write_file(&dir.join("traces").join(format!("{}.trace", key.stem())), &trace::render(t))?;
        }
        if scn.output.convergence {
            let mut body = String::from("refresh,source,group,iteration,cost\n");
            for r in &out.convergence {
                let _ = writeln!(body, "{},{},{},{},{}", r.refresh, r.source, r.group, r.iteration, r.cost);
            }
            write_file(&dir.join("convergence").join(format!("{}.csv", key.stem())), &body)?;
        }
        // the marker goes last so a crash mid-run never leaves a stale marker behind
        write_file(marker.as_ref().expect("out_dir set"), &marker_text(&out.metrics))?;
    }
    Ok((out.metrics, false))
}

#[cfg(feature = "parallel")]
fn run_all(
    scn: &Scenario,
    keys: &[RunKey],
    opts: &SweepOptions,
) -> Result<Vec<Result<(RunMetrics, bool), SweepError>>, SweepError> {
    use rayon::prelude::*;
    if opts.jobs <= 1 {
        return Ok(keys.iter().map(|k| run_one(scn, k, opts)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    Ok(pool.install(|| keys.par_iter().map(|k| run_one(scn, k, opts)).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_all(
    scn: &Scenario,
    keys: &[RunKey],
    opts: &SweepOptions,
) -> Result<Vec<Result<(RunMetrics, bool), SweepError>>, SweepError> {
    if opts.jobs > 1 {
        log::warn!("built without the parallel feature; running {} jobs sequentially", opts.jobs);
    }
    Ok(keys.iter().map(|k| run_one(scn, k, opts)).collect())
}

/// Runs the whole sweep; outputs are written when `opts.out_dir` is set.
pub fn run_sweep(scn: &Scenario, opts: &SweepOptions) -> Result<SweepReport, SweepError> {
    let keys = run_keys(scn, opts.seed_offset);
    let results = run_all(scn, &keys, opts)?;
    let mut runs = Vec::with_capacity(keys.len());
    let mut resumed = 0;
    for (k, r) in keys.iter().zip(results) {
        let (m, skipped) = r?;
        resumed += usize::from(skipped);
        runs.push((*k, m));
    }

    let mut grouped: BTreeMap<(Protocol, usize, usize), Vec<(u64, RunMetrics)>> = BTreeMap::new();
    for (k, m) in &runs {
        grouped.entry((k.protocol, k.n_nodes, k.group_size)).or_default().push((k.seed, *m));
    }
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut means = BTreeMap::new();
    for (&(p, n, g), per_seed) in &grouped {
        for (seed, m) in per_seed {
            csv.push_str(&csv_row(p.as_str(), n, g, SeedLabel::Seed(*seed), m));
            csv.push('\n');
        }
        let ms: Vec<RunMetrics> = per_seed.iter().map(|(_, m)| *m).collect();
        let mean = RunMetrics::mean(&ms);
        csv.push_str(&csv_row(p.as_str(), n, g, SeedLabel::Mean, &mean));
        csv.push('\n');
        means.insert((p, n, g), mean);
    }

    let report = SweepReport { runs, means, csv, resumed };
    if let Some(dir) = &opts.out_dir {
        write_file(&dir.join(&scn.output.csv), &report.csv)?;
        if scn.output.plots {
            for (name, body) in plot_tables(scn, &report) {
                write_file(&dir.join(name), &body)?;
            }
        }
    }
    Ok(report)
}

const PLOT_METRICS: [&str; 4] = ["overhead", "load", "delay", "pdf"];

fn metric_value(m: &RunMetrics, metric: &str) -> Option<f64> {
    match metric {
        "overhead" => Some(m.overhead),
        "load" => m.routing_load,
        "delay" => m.avg_delay,
        _ => m.pdf,
    }
}

/// Plot-ready tables: metric means against node count and against group size.
pub fn plot_tables(scn: &Scenario, report: &SweepReport) -> Vec<(String, String)> {
    let sw = &scn.sweep;
    let protocols = &sw.protocols;
    let axes: [(&str, &str, Vec<(usize, usize, usize)>); 2] = [
        ("nodes", "n_nodes", sw.node_counts.iter().map(|&n| (n, n, sw.base_group_size)).collect()),
        ("groups", "group_size", sw.group_sizes.iter().map(|&g| (g, sw.base_node_count, g)).collect()),
    ];
    let mut out = Vec::new();
    for (axis, x_name, xs) in axes {
        let mut xs = xs;
        xs.sort_unstable();
        xs.dedup();
        for metric in PLOT_METRICS {
            let mut body = x_name.to_string();
            for p in protocols {
                let _ = write!(body, ",{p}");
            }
            body.push('\n');
            for &(x, n, g) in &xs {
                let _ = write!(body, "{x}");
                for &p in protocols {
                    let v = report.mean(p, n, g).and_then(|m| metric_value(m, metric));
                    match v {
                        Some(v) => {
                            let _ = write!(body, ",{v:.6}");
                        }
                        None => body.push_str(",N/A"),
                    }
                }
                body.push('\n');
            }
            out.push((format!("plot_{axis}_{metric}.csv"), body));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_round_trips_exactly() {
        let m = RunMetrics { overhead: 123.0, routing_load: Some(0.1 + 0.2), avg_delay: None, pdf: Some(97.123456789) };
        assert_eq!(parse_marker(&marker_text(&m)), Some(m));
    }

    #[test]
    fn default_sweep_has_210_runs_in_csv_order() {
        let scn = Scenario::default();
        let keys = run_keys(&scn, 0);
        assert_eq!(keys.len(), 3 * 7 * 10);
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(keys[0].protocol, Protocol::Aamrp);
        assert_eq!(run_keys(&scn, 100)[0].seed, 101);
    }
}
