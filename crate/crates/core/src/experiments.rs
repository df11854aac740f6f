//! Path ensembles, sweeps and the statistics reported over them.
//!
//! Path sets are written in link-class symbols. A path-set file declares the
//! classes and then lists one composition per line:
//!
//! ```text
//! class S loss_db=3.4 length_km=20 tx_qubits=25 rx_qubits=25
//! class P loss_db=4.3 length_km=20 tx_qubits=25 rx_qubits=25
//! SPSS
//! PP
//! ```

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{mean, sample_sd, CalibrationTable};
use crate::model::{strip_comment, LinkParams, LinkSpec, ParseError, Path};
use crate::protocol::{simulate, RunStatus, SimConfig, SimRunError};
use crate::routing::{costs_tie, inv_trans, CostMetric, CostVector};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown link class `{0}`")]
    UnknownClass(char),
    #[error("empty composition")]
    EmptyComposition,
    #[error("no calibration entry for class `{0}`")]
    MissingCalibration(char),
    #[error("sweep csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} points, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("x and y differ in length")]
    LengthMismatch,
    #[error("x values are all equal")]
    DegenerateX,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkClass {
    pub symbol: char,
    pub loss_db: f64,
    pub length_km: f64,
    pub tx_qubits: u32,
    pub rx_qubits: u32,
}

impl LinkClass {
    pub fn new(symbol: char, loss_db: f64) -> Self {
        Self {
            symbol,
            loss_db,
            length_km: 20.0,
            tx_qubits: 25,
            rx_qubits: 25,
        }
    }

    pub fn link(&self, a: &str, b: &str) -> LinkSpec {
        LinkSpec::new(a, b, self.loss_db, self.length_km).with_qubits(self.tx_qubits, self.rx_qubits)
    }
}

/// Standard, Good, Fair and Poor 20 km links, best first.
pub fn standard_classes() -> Vec<LinkClass> {
    vec![
        LinkClass::new('S', 3.4),
        LinkClass::new('G', 3.7),
        LinkClass::new('F', 4.0),
        LinkClass::new('P', 4.3),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub classes: Vec<LinkClass>,
    pub paths: Vec<String>,
}

impl PathSet {
    /// All `4^4` four-hop compositions over the standard classes.
    pub fn all_four_hop() -> Self {
        let classes = standard_classes();
        let syms: Vec<char> = classes.iter().map(|c| c.symbol).collect();
        let mut paths = Vec::with_capacity(256);
        for a in &syms {
            for b in &syms {
                for c in &syms {
                    for d in &syms {
                        paths.push([a, b, c, d].into_iter().collect());
                    }
                }
            }
        }
        Self { classes, paths }
    }

    /// Forty-six paths of one to nine hops: homogeneous runs, single weak
    /// links at each position, doubled bottlenecks and a few mixtures.
    pub fn variable_length() -> Self {
        let mut paths: Vec<String> = (1..=9).map(|n| "S".repeat(n)).collect();
        for c in ["G", "F", "P"] {
            paths.push(c.to_string());
            paths.push(c.repeat(2));
            paths.push(c.repeat(4));
        }
        for c in ['G', 'F', 'P'] {
            for pos in 0..4 {
                let mut s: Vec<char> = "SSSS".chars().collect();
                s[pos] = c;
                paths.push(s.into_iter().collect());
            }
        }
        for p in [
            "SPSSSSSS", "FFFFSSSS", "GSSSSSSS", "SSSGSSSS", "SSSSSSSG", "FSSSSSSS", "SSSSFSSS",
            "SSSSSSSP", "SGGS", "SFFS", "SPPS", "GSSG", "SGFP", "PFGS", "SSGSS", "SSPSS",
        ] {
            paths.push(p.to_string());
        }
        Self {
            classes: standard_classes(),
            paths,
        }
    }

    pub fn class(&self, symbol: char) -> Option<&LinkClass> {
        self.classes.iter().find(|c| c.symbol == symbol)
    }

    /// Builds the path `n0-n1-...` for a composition.
    pub fn path(&self, composition: &str) -> Result<Path, ExperimentError> {
        if composition.is_empty() {
            return Err(ExperimentError::EmptyComposition);
        }
        let links = composition
            .chars()
            .enumerate()
            .map(|(i, s)| {
                let c = self.class(s).ok_or(ExperimentError::UnknownClass(s))?;
                Ok(c.link(&format!("n{i}"), &format!("n{}", i + 1)))
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        Ok(Path::new(links).expect("generated chain is a path"))
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut classes: Vec<LinkClass> = Vec::new();
        let mut paths = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut words = strip_comment(raw).split_whitespace();
            let Some(head) = words.next() else { continue };
            if head == "class" {
                let sym = words
                    .next()
                    .ok_or_else(|| ParseError::new(line_no, "`class` needs a symbol"))?;
                let mut chars = sym.chars();
                let (Some(symbol), None) = (chars.next(), chars.next()) else {
                    return Err(ParseError::new(line_no, format!("class symbol `{sym}` must be one character")).into());
                };
                if classes.iter().any(|c| c.symbol == symbol) {
                    return Err(ParseError::new(line_no, format!("class `{symbol}` defined twice")).into());
                }
                let p = LinkParams::parse(words, line_no)?;
                classes.push(LinkClass {
                    symbol,
                    loss_db: p.loss_db,
                    length_km: p.length_km,
                    tx_qubits: p.tx_qubits,
                    rx_qubits: p.rx_qubits,
                });
                continue;
            }
            if let Some(extra) = words.next() {
                return Err(ParseError::new(line_no, format!("unexpected `{extra}` after composition")).into());
            }
            if let Some(bad) = head.chars().find(|s| !classes.iter().any(|c| c.symbol == *s)) {
                return Err(ParseError::new(line_no, format!("unknown link class `{bad}`")).into());
            }
            paths.push(head.to_string());
        }
        Ok(Self { classes, paths })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.classes {
            let p = LinkParams {
                loss_db: c.loss_db,
                length_km: c.length_km,
                tx_qubits: c.tx_qubits,
                rx_qubits: c.rx_qubits,
            };
            out.push_str(&format!("class {} {}\n", c.symbol, p.render()));
        }
        for p in &self.paths {
            out.push_str(p);
            out.push('\n');
        }
        out
    }

    /// Per-class costs, taking calibration entries whose `link` is the class
    /// symbol.
    pub fn class_costs(&self, cal: &CalibrationTable, symbol: char) -> Result<CostVector, ExperimentError> {
        let c = self.class(symbol).ok_or(ExperimentError::UnknownClass(symbol))?;
        let e = cal
            .by_id(&symbol.to_string())
            .ok_or(ExperimentError::MissingCalibration(symbol))?;
        Ok(CostVector {
            loss: c.loss_db,
            inv_trans: inv_trans(c.loss_db),
            pulse: e.pulse_pt,
            meas: e.meas_pt,
            bell_gen_t: e.bellgent_s,
        })
    }

    pub fn path_costs(&self, cal: &CalibrationTable, composition: &str) -> Result<CostVector, ExperimentError> {
        let mut sum = CostVector {
            loss: 0.0,
            inv_trans: 0.0,
            pulse: 0.0,
            meas: 0.0,
            bell_gen_t: 0.0,
        };
        for s in composition.chars() {
            let c = self.class_costs(cal, s)?;
            sum.loss += c.loss;
            sum.inv_trans += c.inv_trans;
            sum.pulse += c.pulse;
            sum.meas += c.meas;
            sum.bell_gen_t += c.bell_gen_t;
        }
        Ok(sum)
    }
}

/// Calibrates each class of a path set; entries are keyed by class symbol.
pub fn calibrate_classes(
    set: &PathSet,
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<CalibrationTable, crate::calibration::CalibrationError> {
    let entries = set
        .classes
        .iter()
        .map(|c| crate::calibration::calibrate_link(&c.link("a", "b"), &c.symbol.to_string(), cfg, seeds))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CalibrationTable::new(entries))
}

/// One simulated path, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub composition: String,
    pub hops: usize,
    pub cost_loss: f64,
    pub cost_invtrans: f64,
    pub cost_pulse: f64,
    pub cost_meas: f64,
    pub cost_bellgent: f64,
    /// Mean fitted throughput over seeds; empty when no seed completed.
    pub throughput: Option<f64>,
    pub throughput_sd: Option<f64>,
    /// Mean over seeds.
    pub pulses: f64,
    pub measurements: f64,
    /// `ok`, `timed_out`, `stalled` or `infeasible`; the first seed that did
    /// not complete decides.
    pub status: String,
}

impl SweepRow {
    pub fn cost(&self, m: CostMetric) -> f64 {
        match m {
            CostMetric::Loss => self.cost_loss,
            CostMetric::InvTrans => self.cost_invtrans,
            CostMetric::Pulse => self.cost_pulse,
            CostMetric::Meas => self.cost_meas,
            CostMetric::BellGenT => self.cost_bellgent,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Completed.as_str()
    }
}

pub const STATUS_INFEASIBLE: &str = "infeasible";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), ExperimentError> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self, ExperimentError> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<Result<Vec<SweepRow>, _>>()?;
        Ok(Self { rows })
    }

    /// `(cost, throughput)` of every row with a throughput.
    pub fn cost_throughput(&self, m: CostMetric) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.throughput.map(|t| (r.cost(m), t)))
            .collect()
    }

    pub fn ordering(&self, m: CostMetric) -> OrderingReport {
        ordering_report(&self.cost_throughput(m))
    }
}

/// Simulates every path of `set` once per seed. Rows are sorted by ascending
/// throughput; paths without a throughput go last. Output depends only on
/// the inputs, not on thread scheduling.
pub fn run_sweep(
    set: &PathSet,
    cal: &CalibrationTable,
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<SweepTable, ExperimentError> {
    let mut rows = set
        .paths
        .par_iter()
        .map(|comp| sweep_row(set, cal, cfg, seeds, comp))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| match (a.throughput, b.throughput) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.composition.cmp(&b.composition)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.composition.cmp(&b.composition),
    });
    Ok(SweepTable { rows })
}

fn sweep_row(
    set: &PathSet,
    cal: &CalibrationTable,
    cfg: &SimConfig,
    seeds: &[u64],
    comp: &str,
) -> Result<SweepRow, ExperimentError> {
    let path = set.path(comp)?;
    let costs = set.path_costs(cal, comp)?;
    let mut row = SweepRow {
        composition: comp.to_string(),
        hops: path.hops(),
        cost_loss: costs.loss,
        cost_invtrans: costs.inv_trans,
        cost_pulse: costs.pulse,
        cost_meas: costs.meas,
        cost_bellgent: costs.bell_gen_t,
        throughput: None,
        throughput_sd: None,
        pulses: 0.0,
        measurements: 0.0,
        status: RunStatus::Completed.as_str().to_string(),
    };
    let runs: Vec<_> = seeds
        .par_iter()
        .map(|&s| simulate(&path, cfg, s))
        .collect();
    let mut results = Vec::with_capacity(runs.len());
    for r in runs {
        match r {
            Ok(r) => results.push(r),
            Err(SimRunError::Plan(_) | SimRunError::BelowTarget { .. }) => {
                row.status = STATUS_INFEASIBLE.to_string();
                return Ok(row);
            }
            Err(e) => {
                row.status = format!("error: {e}");
                return Ok(row);
            }
        }
    }
    if results.is_empty() {
        return Ok(row);
    }
    if let Some(bad) = results.iter().find(|r| r.status != RunStatus::Completed) {
        row.status = bad.status.as_str().to_string();
    }
    let n = results.len() as f64;
    row.pulses = results.iter().map(|r| r.pulses as f64).sum::<f64>() / n;
    row.measurements = results.iter().map(|r| r.measurements as f64).sum::<f64>() / n;
    let fits: Vec<_> = results.iter().filter(|r| r.is_complete()).filter_map(|r| r.fit).collect();
    if !fits.is_empty() {
        let t: Vec<f64> = fits.iter().map(|f| f.throughput).collect();
        row.throughput = Some(mean(&t));
        row.throughput_sd = Some(if t.len() > 1 { sample_sd(&t) } else { fits[0].stddev });
    }
    Ok(row)
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
/// A constant `y` is explained by a flat line and gives 0.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch);
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(StatsError::DegenerateX);
    }
    if syy <= 0.0 {
        return Ok(0.0);
    }
    Ok(sxy * sxy / (sxx * syy))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub pairs_total: u64,
    pub pairs_equal_cost: u64,
    pub correct: u64,
    pub incorrect: u64,
    /// Incorrect pairs whose throughputs differ by more than 10% of the
    /// larger one.
    pub incorrect_with_gap_over_10pct: u64,
}

impl OrderingReport {
    pub fn correct_fraction(&self) -> f64 {
        let n = self.correct + self.incorrect;
        if n == 0 {
            return 0.0;
        }
        self.correct as f64 / n as f64
    }
}

/// Compares every unordered pair of `(cost, throughput)` points. A pair is
/// correct when the cheaper path is strictly faster.
pub fn ordering_report(points: &[(f64, f64)]) -> OrderingReport {
    let mut r = OrderingReport::default();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            r.pairs_total += 1;
            if costs_tie(a.0, b.0) {
                r.pairs_equal_cost += 1;
                continue;
            }
            let (cheap, dear) = if a.0 < b.0 { (a, b) } else { (b, a) };
            if cheap.1 > dear.1 {
                r.correct += 1;
            } else {
                r.incorrect += 1;
                let hi = cheap.1.max(dear.1);
                if hi > 0.0 && (hi - cheap.1.min(dear.1)) / hi > 0.10 {
                    r.incorrect_with_gap_over_10pct += 1;
                }
            }
        }
    }
    r
}

/// Share of the total sum of squares of `values` explained by `groups`
/// (between-group over total).
pub fn variance_explained<K: Ord + Clone>(groups: &[K], values: &[f64]) -> f64 {
    use std::collections::BTreeMap;
    let m = mean(values);
    let total: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut by: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (g, v) in groups.iter().zip(values) {
        by.entry(g.clone()).or_default().push(*v);
    }
    let between: f64 = by
        .values()
        .map(|v| {
            let gm = mean(v);
            v.len() as f64 * (gm - m) * (gm - m)
        })
        .sum();
    between / total
}

/// The worst class in a composition, where classes listed later in
/// `classes` are worse.
pub fn weakest_class(classes: &[LinkClass], composition: &str) -> Option<char> {
    composition
        .chars()
        .max_by_key(|s| classes.iter().position(|c| c.symbol == *s))
}

/// One point of a single-hop loss sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPoint {
    pub loss_db: f64,
    /// `None` when no plan reaches the target.
    pub rounds: Option<u32>,
    pub throughput: Option<f64>,
    pub status: String,
}

/// Simulates a single 20 km hop at each loss, averaging throughput over seeds.
pub fn loss_sweep(losses: &[f64], cfg: &SimConfig, seeds: &[u64]) -> Vec<LossPoint> {
    losses
        .par_iter()
        .map(|&loss| {
            let path = Path::new(vec![LinkSpec::new("a", "b", loss, 20.0)]).expect("one link");
            let plan = match crate::protocol::plan_for(&path, cfg) {
                Ok(p) => p,
                Err(_) => {
                    return LossPoint {
                        loss_db: loss,
                        rounds: None,
                        throughput: None,
                        status: STATUS_INFEASIBLE.to_string(),
                    }
                }
            };
            let mut t = Vec::new();
            let mut status = RunStatus::Completed.as_str().to_string();
            for &s in seeds {
                match crate::protocol::run_path_simulation(&path, &plan, cfg, s) {
                    Ok(r) if r.is_complete() => t.extend(r.throughput()),
                    Ok(r) => status = r.status.as_str().to_string(),
                    Err(e) => status = format!("error: {e}"),
                }
            }
            LossPoint {
                loss_db: loss,
                rounds: Some(plan.total_rounds()),
                throughput: (!t.is_empty()).then(|| mean(&t)),
                status,
            }
        })
        .collect()
}
