use std::fs;
use std::io::{self, Write};
use std::path::{Path as FsPath, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use repeater_core::calibration::{calibrate_topology, CalibrationTable};
use repeater_core::experiments::{calibrate_classes, r_squared, run_sweep, PathSet, SweepTable};
use repeater_core::protocol::{plan_for, run_path_simulation, SimConfig};
use repeater_core::routing::{dijkstra, CostMetric};
use repeater_core::{Fidelity, Path, Topology};

#[derive(Parser)]
#[command(name = "qrsim", version, about = "Purify-and-swap repeater path simulator and router")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single-hop runs per link (or per link class) producing a cost table.
    Calibrate(CalibrateArgs),
    /// Least-cost path between two nodes under one metric.
    Route(RouteArgs),
    /// Simulate one path and print its counters.
    SimulatePath(SimulateArgs),
    /// Simulate every path of a path set.
    Sweep(SweepArgs),
    /// Summarize a sweep CSV: R^2 and pairwise ordering per metric.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct SimOpts {
    #[arg(long, default_value_t = 0.98)]
    target_fidelity: f64,
    #[arg(long, default_value_t = 200)]
    teleports: u32,
    /// Simulated seconds before a run is abandoned.
    #[arg(long, default_value_t = 600.0)]
    time_cap: f64,
    #[arg(long, default_value_t = 10)]
    max_rounds: u32,
    #[arg(long)]
    p_ent: Option<f64>,
    #[arg(long)]
    pulse_rate: Option<f64>,
}

impl SimOpts {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig {
            teleports: self.teleports,
            target: Fidelity::new(self.target_fidelity).context("--target-fidelity")?,
            time_cap: self.time_cap,
            max_rounds: self.max_rounds,
            ..SimConfig::default()
        };
        if let Some(p) = self.p_ent {
            cfg.link.p_ent = p;
        }
        if let Some(r) = self.pulse_rate {
            cfg.link.pulse_rate = r;
        }
        if let Err(e) = cfg.link.validate() {
            bail!("invalid link parameters: {e}");
        }
        if cfg.teleports == 0 || cfg.time_cap.is_nan() || cfg.time_cap <= 0.0 {
            bail!("--teleports and --time-cap must be positive");
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    FourHop,
    VariableLength,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SetSource {
    /// Path-set file: `class` lines followed by one composition per line.
    #[arg(long)]
    path_set: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
}

impl SetSource {
    fn load(&self) -> Result<PathSet> {
        match (&self.path_set, self.builtin) {
            (Some(p), _) => Ok(PathSet::parse(&read(p)?)?),
            (None, Some(Builtin::FourHop)) => Ok(PathSet::all_four_hop()),
            (None, Some(Builtin::VariableLength)) => Ok(PathSet::variable_length()),
            (None, None) => unreachable!("clap enforces one source"),
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, conflicts_with_all = ["path_set", "builtin"])]
    topology: Option<PathBuf>,
    #[arg(long)]
    path_set: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Number of seeds; runs use seeds 1..=N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sim: SimOpts,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Calibration CSV; required for the pulse, meas and bellgent metrics.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    metric: CostMetric,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    #[command(flatten)]
    sim: SimOpts,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, requires = "nodes", conflicts_with_all = ["path_set", "builtin", "composition"])]
    topology: Option<PathBuf>,
    /// Comma-separated node ids along the path.
    #[arg(long, value_delimiter = ',')]
    nodes: Vec<String>,
    #[arg(long, requires = "composition")]
    path_set: Option<PathBuf>,
    #[arg(long, value_enum, requires = "composition")]
    builtin: Option<Builtin>,
    /// Class symbols along the path, e.g. SGFS.
    #[arg(long)]
    composition: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    sim: SimOpts,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SetSource,
    /// Class calibration CSV; calibrated with 5 seeds when omitted.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Number of seeds; runs use seeds 1..=N.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sim: SimOpts,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep CSV produced by `sweep`.
    #[arg(long)]
    sweep: PathBuf,
    /// Restrict the report to one metric.
    #[arg(long)]
    metric: Option<CostMetric>,
}

fn read(p: &FsPath) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn seed_list(n: u64) -> Result<Vec<u64>> {
    if n == 0 {
        bail!("--seeds must be at least 1");
    }
    Ok((1..=n).collect())
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn load_calibration(p: &FsPath) -> Result<CalibrationTable> {
    CalibrationTable::read_csv(read(p)?.as_bytes()).with_context(|| format!("parsing {}", p.display()))
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let cfg = a.sim.config()?;
    let seeds = seed_list(a.seeds)?;
    let table = if let Some(t) = &a.topology {
        let topo = Topology::parse(&read(t)?)?;
        let (table, skipped) = calibrate_topology(&topo, &cfg, &seeds)?;
        for s in skipped {
            eprintln!("skipped unusable link {s}");
        }
        table
    } else {
        let set = SetSource {
            path_set: a.path_set,
            builtin: a.builtin.or(Some(Builtin::FourHop)),
        }
        .load()?;
        calibrate_classes(&set, &cfg, &seeds)?
    };
    write_out(&a.out, &table.to_csv_string())
}

fn route(a: RouteArgs) -> Result<()> {
    let cfg = a.sim.config()?;
    let topo = Topology::parse(&read(&a.topology)?)?;
    let cal = match &a.calibration {
        Some(p) => load_calibration(p)?,
        None if a.metric.needs_calibration() => bail!("--metric {} needs --calibration", a.metric.name()),
        None => CalibrationTable::default(),
    };
    let r = dijkstra(&topo, &a.from, &a.to, a.metric, &cal, &cfg.link)?;
    println!("path: {}", r.path);
    println!("hops: {}", r.path.hops());
    println!("cost_{}: {}", a.metric.name(), r.cost);
    Ok(())
}

fn simulate_path(a: SimulateArgs) -> Result<()> {
    let cfg = a.sim.config()?;
    let path = if let Some(t) = &a.topology {
        let topo = Topology::parse(&read(t)?)?;
        let nodes: Vec<&str> = a.nodes.iter().map(String::as_str).collect();
        Path::through(&topo, &nodes)?
    } else {
        let Some(comp) = &a.composition else {
            bail!("give --topology with --nodes, or --composition");
        };
        let set = SetSource {
            path_set: a.path_set,
            builtin: a.builtin.or(Some(Builtin::FourHop)),
        }
        .load()?;
        set.path(comp)?
    };
    let plan = plan_for(&path, &cfg)?;
    let r = run_path_simulation(&path, &plan, &cfg, a.seed)?;
    println!("path: {path}");
    println!("status: {}", r.status);
    println!("seed: {}", r.seed);
    println!("purification_rounds: {}", plan.total_rounds());
    println!("planned_fidelity: {:.6}", plan.root_fidelity().value());
    println!("deliveries: {}", r.deliveries.len());
    match r.fit {
        Some(f) => println!("throughput: {:.3} +/- {:.3}", f.throughput, f.stddev),
        None => println!("throughput: none"),
    }
    println!("pulses: {}", r.pulses);
    println!("measurements: {}", r.measurements);
    println!("purifications: {}/{}", r.purification_successes, r.purification_attempts);
    println!("swaps: {}", r.swaps);
    println!("discarded_pulses: {}", r.discarded_pulses);
    println!("end_time_s: {:.6}", r.end_time);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.sim.config()?;
    let set = a.source.load()?;
    let cal = match &a.calibration {
        Some(p) => load_calibration(p)?,
        None => calibrate_classes(&set, &cfg, &seed_list(5)?)?,
    };
    let table = run_sweep(&set, &cal, &cfg, &seed_list(a.seeds)?)?;
    write_out(&a.out, &table.to_csv_string())
}

fn report(a: ReportArgs) -> Result<()> {
    let table = SweepTable::read_csv(read(&a.sweep)?.as_bytes())?;
    let ok = table.rows.iter().filter(|r| r.is_ok()).count();
    println!("paths: {} ({} ok)", table.rows.len(), ok);
    let metrics: Vec<CostMetric> = match a.metric {
        Some(m) => vec![m],
        None => CostMetric::ALL.to_vec(),
    };
    let meas: Vec<f64> = table.rows.iter().filter(|r| r.is_ok()).map(|r| r.measurements).collect();
    for m in metrics {
        let x: Vec<f64> = table.rows.iter().filter(|r| r.is_ok()).map(|r| r.cost(m)).collect();
        let r2 = r_squared(&x, &meas).map_or_else(|e| e.to_string(), |v| format!("{v:.4}"));
        let o = table.ordering(m);
        println!(
            "{}: r2_measurements={} pairs={} equal_cost={} correct={} incorrect={} incorrect_gap_10pct={} correct_fraction={:.4}",
            m.name(),
            r2,
            o.pairs_total,
            o.pairs_equal_cost,
            o.correct,
            o.incorrect,
            o.incorrect_with_gap_over_10pct,
            o.correct_fraction()
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Calibrate(a) => calibrate(a),
        Cmd::Route(a) => route(a),
        Cmd::SimulatePath(a) => simulate_path(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Report(a) => report(a),
    }
}
