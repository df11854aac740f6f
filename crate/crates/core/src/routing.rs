//! Link-cost metrics and shortest-path routing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationTable;
use crate::link::LinkModelParams;
use crate::model::{LinkSpec, ModelError, Path, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("no calibration entry for link {0}")]
    MissingCalibration(String),
    #[error("no usable route from {src} to {dst}")]
    NoRoute { src: String, dst: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown metric `{0}` (expected loss, invtrans, pulse, meas or bellgent)")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostMetric {
    Loss,
    InvTrans,
    Pulse,
    Meas,
    BellGenT,
}

impl CostMetric {
    pub const ALL: [CostMetric; 5] = [
        CostMetric::Loss,
        CostMetric::InvTrans,
        CostMetric::Pulse,
        CostMetric::Meas,
        CostMetric::BellGenT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostMetric::Loss => "loss",
            CostMetric::InvTrans => "invtrans",
            CostMetric::Pulse => "pulse",
            CostMetric::Meas => "meas",
            CostMetric::BellGenT => "bellgent",
        }
    }

    pub fn needs_calibration(self) -> bool {
        matches!(self, CostMetric::Pulse | CostMetric::Meas | CostMetric::BellGenT)
    }
}

impl fmt::Display for CostMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostMetric {
    type Err = RoutingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CostMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| RoutingError::UnknownMetric(s.to_string()))
    }
}

/// Every metric's value for one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    pub loss: f64,
    pub inv_trans: f64,
    pub pulse: f64,
    pub meas: f64,
    /// Raw seconds per pair.
    pub bell_gen_t: f64,
}

impl CostVector {
    pub fn get(&self, m: CostMetric) -> f64 {
        match m {
            CostMetric::Loss => self.loss,
            CostMetric::InvTrans => self.inv_trans,
            CostMetric::Pulse => self.pulse,
            CostMetric::Meas => self.meas,
            CostMetric::BellGenT => self.bell_gen_t,
        }
    }
}

/// Inverse transmittance of a channel with the given loss.
pub fn inv_trans(loss_db: f64) -> f64 {
    10f64.powf(loss_db / 10.0)
}

pub fn cost_vector(link: &LinkSpec, cal: &CalibrationTable) -> Result<CostVector, RoutingError> {
    let e = cal
        .get(link)
        .ok_or_else(|| RoutingError::MissingCalibration(link.key()))?;
    Ok(CostVector {
        loss: link.loss_db,
        inv_trans: inv_trans(link.loss_db),
        pulse: e.pulse_pt,
        meas: e.meas_pt,
        bell_gen_t: e.bellgent_s,
    })
}

pub fn link_cost(
    link: &LinkSpec,
    metric: CostMetric,
    cal: &CalibrationTable,
) -> Result<f64, RoutingError> {
    match metric {
        CostMetric::Loss => Ok(link.loss_db),
        CostMetric::InvTrans => Ok(inv_trans(link.loss_db)),
        _ => Ok(cost_vector(link, cal)?.get(metric)),
    }
}

/// Sum of the link costs along `path`.
pub fn path_cost(path: &Path, metric: CostMetric, cal: &CalibrationTable) -> Result<f64, RoutingError> {
    path.links().iter().map(|l| link_cost(l, metric, cal)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Path,
    pub cost: f64,
}

/// Relative tolerance under which two path costs count as equal.
pub const COST_TIE_EPS: f64 = 1e-9;

pub fn costs_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_TIE_EPS * a.abs().max(b.abs()).max(1.0)
}

/// Orders candidate routes: lower cost, then fewer hops, then node sequence.
pub fn compare_routes(a: (f64, &[&str]), b: (f64, &[&str])) -> Ordering {
    if !costs_tie(a.0, b.0) {
        return a.0.total_cmp(&b.0);
    }
    a.1.len().cmp(&b.1.len()).then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone)]
struct Label<'t> {
    cost: f64,
    nodes: Vec<&'t str>,
}

impl Label<'_> {
    fn cmp_key(&self, other: &Self) -> Ordering {
        compare_routes((self.cost, &self.nodes), (other.cost, &other.nodes))
    }
}

struct HeapItem<'t>(Label<'t>);

impl PartialEq for HeapItem<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem<'_> {}
impl PartialOrd for HeapItem<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.cmp_key(&self.0)
    }
}

/// Minimum-cost path from `src` to `dst`. Links whose fidelity cannot be
/// purified are left out. Equal costs go to fewer hops, then to the
/// lexicographically smaller node sequence.
pub fn dijkstra(
    t: &Topology,
    src: &str,
    dst: &str,
    metric: CostMetric,
    cal: &CalibrationTable,
    params: &LinkModelParams,
) -> Result<Route, RoutingError> {
    for n in [src, dst] {
        if !t.has_node(n) {
            return Err(ModelError::UnknownNode(n.to_string()).into());
        }
    }
    let mut adj: BTreeMap<&str, Vec<(&LinkSpec, f64)>> = BTreeMap::new();
    for l in t.links.iter().filter(|l| params.is_usable(l)) {
        adj.entry(l.a.as_str())
            .or_default()
            .push((l, link_cost(l, metric, cal)?));
    }
    let no_route = || RoutingError::NoRoute {
        src: src.to_string(),
        dst: dst.to_string(),
    };
    if src == dst {
        return Err(no_route());
    }

    let mut best: BTreeMap<&str, Label> = BTreeMap::new();
    let mut settled: BTreeSet<&str> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    let start = Label {
        cost: 0.0,
        nodes: vec![src],
    };
    best.insert(src, start.clone());
    heap.push(HeapItem(start));
    while let Some(HeapItem(label)) = heap.pop() {
        let u = *label.nodes.last().expect("labels are non-empty");
        if settled.contains(u) {
            continue;
        }
        settled.insert(u);
        if u == dst {
            let links = label
                .nodes
                .windows(2)
                .map(|w| t.link(w[0], w[1]).cloned().expect("route follows links"))
                .collect();
            return Ok(Route {
                path: Path::new(links)?,
                cost: label.cost,
            });
        }
        for (l, c) in adj.get(u).map(Vec::as_slice).unwrap_or_default() {
            let v = l.b.as_str();
            if settled.contains(v) || label.nodes.contains(&v) {
                continue;
            }
            let mut nodes = label.nodes.clone();
            nodes.push(v);
            let cand = Label {
                cost: label.cost + c,
                nodes,
            };
            let better = best
                .get(v)
                .is_none_or(|cur| cand.cmp_key(cur) == Ordering::Less);
            if better {
                best.insert(v, cand.clone());
                heap.push(HeapItem(cand));
            }
        }
    }
    Err(no_route())
}
