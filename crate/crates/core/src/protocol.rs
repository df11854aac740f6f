//! Purification and swapping control over a whole path, driven by the event
//! queue, plus the throughput fit used to summarize a run.
//!
//! Every hop runs its own link layer. Pairs climb the plan's swap tree: at
//! each tree node they are purified in symmetric rounds, then either swapped
//! with a pair from the sibling segment or, at the root, used to teleport.
//!
//! Links only generate as many pairs as the remaining workload can use, so a
//! run with `p_ent = 1` and no purification consumes exactly one link pair
//! per teleport.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{classical_latency, EventQueue, RandomStream, SimError};
use crate::link::{Arrival, LinkModelParams, LinkState, PairId, SlotState, WorkCounters};
use crate::model::{LinkSpec, Path};
use crate::pair::{swap_map, Fidelity, PairError};
use crate::plan::{plan_path, PathPlan, PlanError, PlanOptions, DEFAULT_MAX_ROUNDS};

pub const DEFAULT_TELEPORTS: u32 = 200;
pub const DEFAULT_TIME_CAP_S: f64 = 600.0;
pub const DEFAULT_TARGET: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub link: LinkModelParams,
    pub teleports: u32,
    pub target: Fidelity,
    /// Simulated seconds before the run is abandoned.
    pub time_cap: f64,
    pub max_rounds: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            link: LinkModelParams::default(),
            teleports: DEFAULT_TELEPORTS,
            target: Fidelity::new(DEFAULT_TARGET).expect("valid default"),
            time_cap: DEFAULT_TIME_CAP_S,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

impl SimConfig {
    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            max_rounds: self.max_rounds,
            p_ent: self.link.p_ent,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimRunError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Engine(#[from] SimError),
    #[error("plan covers {plan} hops but the path has {path}")]
    PlanMismatch { plan: usize, path: usize },
    #[error("plan delivers fidelity {got:.4}, below the target {target:.4}")]
    BelowTarget { got: f64, target: f64 },
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Hit the simulated-time cap; results are partial.
    TimedOut,
    /// Nothing left to do before the workload finished, typically because
    /// buffers are too small to hold the pairs a purification round needs.
    Stalled,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "ok",
            RunStatus::TimedOut => "timed_out",
            RunStatus::Stalled => "stalled",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    /// Teleport sequence number, from 1.
    pub index: u32,
    pub completed_at: f64,
    pub fidelity_at_delivery: Fidelity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputFit {
    /// Pairs per second.
    pub throughput: f64,
    /// Standard error of the fitted slope.
    pub stddev: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 deliveries to fit, got {0}")]
    TooFew(usize),
    #[error("all deliveries completed at the same instant")]
    Degenerate,
}

/// Least-squares slope of delivery index against completion time.
pub fn fit_throughput(records: &[DeliveryRecord]) -> Result<ThroughputFit, FitError> {
    let n = records.len();
    if n < 3 {
        return Err(FitError::TooFew(n));
    }
    let nf = n as f64;
    let mx = records.iter().map(|r| r.completed_at).sum::<f64>() / nf;
    let my = records.iter().map(|r| r.index as f64).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for r in records {
        let dx = r.completed_at - mx;
        sxx += dx * dx;
        sxy += dx * (r.index as f64 - my);
    }
    if sxx <= 0.0 {
        return Err(FitError::Degenerate);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = records
        .iter()
        .map(|r| {
            let e = r.index as f64 - (intercept + slope * r.completed_at);
            e * e
        })
        .sum();
    Ok(ThroughputFit {
        throughput: slope,
        stddev: (ss_res / (nf - 2.0) / sxx).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub status: RunStatus,
    pub seed: u64,
    pub deliveries: Vec<DeliveryRecord>,
    /// Pulses over all hops.
    pub pulses: u64,
    /// All measurements: link, purification, swap and teleport.
    pub measurements: u64,
    pub link_measurements: u64,
    pub purification_attempts: u64,
    pub purification_successes: u64,
    pub swaps: u64,
    pub teleports: u64,
    pub discarded_pulses: u64,
    /// Entangled link pairs, per hop.
    pub link_pairs_generated: Vec<u64>,
    /// Link pairs used by a purification, swap or teleport, per hop.
    pub link_pairs_consumed: Vec<u64>,
    pub per_link: Vec<WorkCounters>,
    pub end_time: f64,
    pub events: u64,
    /// Transmitter slots still waiting for an acknowledgment at the end.
    pub awaiting_ack_at_end: usize,
    /// Acknowledgments (and pulses in flight) still queued at the end.
    pub pending_acks_at_end: usize,
    pub fit: Option<ThroughputFit>,
}

impl SimResult {
    pub fn throughput(&self) -> Option<f64> {
        self.fit.map(|f| f.throughput)
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Link fidelities for a path under the given model.
pub fn link_fidelities(path: &Path, params: &LinkModelParams) -> Result<Vec<Fidelity>, PairError> {
    path.links().iter().map(|l| params.link_fidelity(l)).collect()
}

/// Plans `path` with the configuration's target and round cap.
pub fn plan_for(path: &Path, cfg: &SimConfig) -> Result<PathPlan, SimRunError> {
    let f = link_fidelities(path, &cfg.link)?;
    Ok(plan_path(&f, cfg.target, &cfg.plan_options())?)
}

/// Plans and simulates `path` in one call.
pub fn simulate(path: &Path, cfg: &SimConfig, seed: u64) -> Result<SimResult, SimRunError> {
    let plan = plan_for(path, cfg)?;
    run_path_simulation(path, &plan, cfg, seed)
}

/// Single 20 km hop at 3.4 dB with the given buffer sizes.
pub fn link_throughput_effect(
    tx_qubits: u32,
    rx_qubits: u32,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimResult, SimRunError> {
    let link = LinkSpec::new("a", "b", 3.4, 20.0).with_qubits(tx_qubits, rx_qubits);
    let path = Path::new(vec![link]).expect("single link is a valid path");
    simulate(&path, cfg, seed)
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    PulseArrival { link: usize, tx_slot: usize },
    AckArrival { link: usize, tx_slot: usize, pair: Option<PairId> },
    PurifyResult { pair: PairId, success: bool },
    SwapNotify { pair: PairId },
    TeleportComplete { rx_slot: usize, fidelity: Fidelity },
}

#[derive(Debug, Clone, Copy)]
struct End {
    link: usize,
    slot: usize,
}

#[derive(Debug, Clone)]
struct Pair {
    node: usize,
    level: u32,
    fidelity: Fidelity,
    left: End,
    right: End,
    /// Straight from the link layer, not yet used by any operation.
    fresh: bool,
}

struct NodeInfo {
    lo: usize,
    hi: usize,
    parent: Option<usize>,
    sibling: Option<usize>,
    is_left: bool,
    rounds: u32,
    success: Vec<f64>,
    /// One-way latency across the node's segment.
    span_latency: f64,
    /// Link-pair units per level-0 pair of this node, for each hop in
    /// `lo..hi`.
    base_weight: Vec<f64>,
    /// Unpaired pair waiting for a partner, per purification level.
    idle: Vec<Option<PairId>>,
    /// Finished pairs waiting for the sibling.
    done: VecDeque<PairId>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    q: EventQueue<Ev>,
    rng: RandomStream,
    links: Vec<LinkState>,
    nodes: Vec<NodeInfo>,
    root: usize,
    pairs: Vec<Option<Pair>>,
    free_ids: Vec<u32>,
    /// Link-pair units currently committed to the workload, per hop.
    committed: Vec<f64>,
    /// Units per delivered pair, per hop.
    full_weight: Vec<f64>,
    teleports_started: u32,
    deliveries: Vec<DeliveryRecord>,
    /// Purification, swap and teleport measurements.
    op_measurements: u64,
    purify_attempts: u64,
    purify_successes: u64,
    swaps: u64,
    generated: Vec<u64>,
    consumed: Vec<u64>,
    events: u64,
}

/// Runs the workload over `path` following `plan`.
pub fn run_path_simulation(
    path: &Path,
    plan: &PathPlan,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimResult, SimRunError> {
    cfg.link.validate().map_err(SimRunError::Params)?;
    if plan.hops() != path.hops() {
        return Err(SimRunError::PlanMismatch {
            plan: plan.hops(),
            path: path.hops(),
        });
    }
    if plan.root_fidelity().value() < cfg.target.value() {
        return Err(SimRunError::BelowTarget {
            got: plan.root_fidelity().value(),
            target: cfg.target.value(),
        });
    }
    let mut sim = Sim::new(path, plan, cfg, seed)?;
    let status = sim.run()?;
    Ok(sim.finish(status, seed))
}

impl<'a> Sim<'a> {
    fn new(path: &Path, plan: &PathPlan, cfg: &'a SimConfig, seed: u64) -> Result<Self, SimRunError> {
        let links = path
            .links()
            .iter()
            .map(|l| LinkState::new(l, &cfg.link))
            .collect::<Result<Vec<_>, _>>()?;
        let lengths: Vec<f64> = path.links().iter().map(|l| l.length_km).collect();
        let tree = &plan.tree;
        let mut nodes: Vec<NodeInfo> = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(v, n)| NodeInfo {
                lo: n.lo,
                hi: n.hi,
                parent: n.parent,
                sibling: tree.sibling(v),
                is_left: n
                    .parent
                    .and_then(|p| tree.nodes()[p].children)
                    .is_some_and(|(l, _)| l == v),
                rounds: plan.schedule.rounds[v],
                success: plan.round_success[v].clone(),
                span_latency: classical_latency(lengths[n.lo..n.hi].iter().sum()),
                base_weight: vec![1.0; n.hops()],
                idle: vec![None; plan.schedule.rounds[v] as usize],
                done: VecDeque::new(),
            })
            .collect();
        // Children follow parents in pre-order.
        for v in (0..nodes.len()).rev() {
            if let Some((l, r)) = tree.nodes()[v].children {
                let mut w = Vec::with_capacity(nodes[v].hi - nodes[v].lo);
                for c in [l, r] {
                    let scale = 2f64.powi(nodes[c].rounds as i32);
                    w.extend(nodes[c].base_weight.iter().map(|x| x * scale));
                }
                nodes[v].base_weight = w;
            }
        }
        let root = tree.root();
        let root_scale = 2f64.powi(nodes[root].rounds as i32);
        let full_weight = nodes[root].base_weight.iter().map(|x| x * root_scale).collect();
        let hops = links.len();
        Ok(Self {
            cfg,
            q: EventQueue::new(),
            rng: RandomStream::new(seed),
            links,
            nodes,
            root,
            pairs: Vec::new(),
            free_ids: Vec::new(),
            committed: vec![0.0; hops],
            full_weight,
            teleports_started: 0,
            deliveries: Vec::new(),
            op_measurements: 0,
            purify_attempts: 0,
            purify_successes: 0,
            swaps: 0,
            generated: vec![0; hops],
            consumed: vec![0; hops],
            events: 0,
        })
    }

    fn run(&mut self) -> Result<RunStatus, SimRunError> {
        for i in 0..self.links.len() {
            self.emit(i)?;
        }
        loop {
            match self.q.peek_time() {
                None => return Ok(RunStatus::Stalled),
                Some(t) if t > self.cfg.time_cap => return Ok(RunStatus::TimedOut),
                Some(_) => {}
            }
            let ev = self.q.pop().expect("peeked").payload;
            self.events += 1;
            self.handle(ev)?;
            if self.deliveries.len() as u32 >= self.cfg.teleports {
                return Ok(RunStatus::Completed);
            }
        }
    }

    fn finish(self, status: RunStatus, seed: u64) -> SimResult {
        let pending_acks_at_end = self
            .q
            .pending()
            .filter(|e| matches!(e.payload, Ev::PulseArrival { .. } | Ev::AckArrival { .. }))
            .count();
        let per_link: Vec<WorkCounters> = self.links.iter().map(|l| l.counters).collect();
        let link_measurements = per_link.iter().map(|c| c.measurements).sum();
        SimResult {
            status,
            seed,
            fit: fit_throughput(&self.deliveries).ok(),
            pulses: per_link.iter().map(|c| c.pulses).sum(),
            measurements: link_measurements + self.op_measurements,
            link_measurements,
            purification_attempts: self.purify_attempts,
            purification_successes: self.purify_successes,
            swaps: self.swaps,
            teleports: self.teleports_started as u64,
            discarded_pulses: self.links.iter().map(|l| l.discarded).sum(),
            link_pairs_generated: self.generated,
            link_pairs_consumed: self.consumed,
            awaiting_ack_at_end: self.links.iter().map(|l| l.awaiting_ack()).sum(),
            pending_acks_at_end,
            per_link,
            end_time: self.q.now(),
            events: self.events,
            deliveries: self.deliveries,
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimRunError> {
        match ev {
            Ev::PulseArrival { link, tx_slot } => self.on_pulse(link, tx_slot),
            Ev::AckArrival { link, tx_slot, pair } => self.on_ack(link, tx_slot, pair),
            Ev::PurifyResult { pair, success } => self.on_purify_result(pair, success),
            Ev::SwapNotify { pair } => {
                self.set_slots(pair, SlotState::Entangled(pair));
                self.pair_ready(pair)
            }
            Ev::TeleportComplete { rx_slot, fidelity } => {
                let last = self.links.len() - 1;
                self.links[last].rx.release(rx_slot);
                let index = self.deliveries.len() as u32 + 1;
                self.deliveries.push(DeliveryRecord {
                    index,
                    completed_at: self.q.now(),
                    fidelity_at_delivery: fidelity,
                });
                Ok(())
            }
        }
    }

    fn demand(&self, link: usize) -> f64 {
        (self.cfg.teleports - self.teleports_started) as f64 * self.full_weight[link]
    }

    /// Fires every free transmitter qubit on `link` the workload still needs.
    fn emit(&mut self, link: usize) -> Result<(), SimRunError> {
        while self.committed[link] < self.demand(link) {
            let now = self.q.now();
            let Some((tx_slot, at)) = self.links[link].start_attempt(now) else {
                break;
            };
            self.committed[link] += 1.0;
            self.q.schedule(at, Ev::PulseArrival { link, tx_slot })?;
        }
        Ok(())
    }

    fn on_pulse(&mut self, link: usize, tx_slot: usize) -> Result<(), SimRunError> {
        let id = self.peek_id();
        let pair = match self.links[link].on_arrival(&mut self.rng, id) {
            Arrival::Entangled { rx_slot } => {
                let leaf = self.leaf_of(link);
                let pid = self.insert(Pair {
                    node: leaf,
                    level: 0,
                    fidelity: self.links[link].fidelity,
                    left: End { link, slot: tx_slot },
                    right: End { link, slot: rx_slot },
                    fresh: true,
                });
                debug_assert_eq!(pid, id);
                self.generated[link] += 1;
                Some(pid)
            }
            Arrival::Failed | Arrival::Discarded => None,
        };
        let ack = self.links[link].latency;
        self.q.schedule_in(ack, Ev::AckArrival { link, tx_slot, pair })?;
        Ok(())
    }

    fn on_ack(&mut self, link: usize, tx_slot: usize, pair: Option<PairId>) -> Result<(), SimRunError> {
        self.links[link].on_ack(tx_slot, pair);
        match pair {
            Some(p) => self.pair_ready(p),
            None => {
                self.committed[link] -= 1.0;
                self.emit(link)
            }
        }
    }

    fn leaf_of(&self, link: usize) -> usize {
        self.nodes
            .iter()
            .position(|n| n.hi - n.lo == 1 && n.lo == link)
            .expect("every hop has a leaf")
    }

    fn pair(&self, id: PairId) -> &Pair {
        self.pairs[id.0 as usize].as_ref().expect("live pair")
    }

    fn pair_mut(&mut self, id: PairId) -> &mut Pair {
        self.pairs[id.0 as usize].as_mut().expect("live pair")
    }

    fn peek_id(&self) -> PairId {
        PairId(self.free_ids.last().copied().unwrap_or(self.pairs.len() as u32))
    }

    fn insert(&mut self, p: Pair) -> PairId {
        match self.free_ids.pop() {
            Some(i) => {
                self.pairs[i as usize] = Some(p);
                PairId(i)
            }
            None => {
                self.pairs.push(Some(p));
                PairId(self.pairs.len() as u32 - 1)
            }
        }
    }

    fn remove(&mut self, id: PairId) -> Pair {
        let p = self.pairs[id.0 as usize].take().expect("live pair");
        self.free_ids.push(id.0);
        p
    }

    fn set_slots(&mut self, id: PairId, state: SlotState) {
        let (l, r) = {
            let p = self.pair(id);
            (p.left, p.right)
        };
        self.links[l.link].tx.set(l.slot, state);
        self.links[r.link].rx.set(r.slot, state);
    }

    fn free_slots(&mut self, p: &Pair) {
        self.links[p.left.link].tx.release(p.left.slot);
        self.links[p.right.link].rx.release(p.right.slot);
    }

    fn mark_consumed(&mut self, id: PairId) {
        let p = self.pair_mut(id);
        if p.fresh {
            p.fresh = false;
            let link = p.left.link;
            self.consumed[link] += 1;
        }
    }

    /// A pair whose endpoints both know its state; decide what to do next.
    fn pair_ready(&mut self, id: PairId) -> Result<(), SimRunError> {
        let (v, level) = {
            let p = self.pair(id);
            (p.node, p.level)
        };
        if level < self.nodes[v].rounds {
            match self.nodes[v].idle[level as usize].take() {
                Some(other) => self.purify(other, id),
                None => {
                    self.nodes[v].idle[level as usize] = Some(id);
                    Ok(())
                }
            }
        } else if v == self.root {
            self.teleport(id)
        } else {
            let sib = self.nodes[v].sibling.expect("non-root has a sibling");
            match self.nodes[sib].done.pop_front() {
                Some(other) if self.nodes[v].is_left => self.swap(id, other),
                Some(other) => self.swap(other, id),
                None => {
                    self.nodes[v].done.push_back(id);
                    Ok(())
                }
            }
        }
    }

    fn purify(&mut self, keep: PairId, sacrifice: PairId) -> Result<(), SimRunError> {
        self.op_measurements += 2;
        self.purify_attempts += 1;
        self.mark_consumed(keep);
        self.mark_consumed(sacrifice);
        let gone = self.remove(sacrifice);
        self.free_slots(&gone);
        self.set_slots(keep, SlotState::Reserved(keep));
        let (v, level) = (gone.node, gone.level);
        let p = self.nodes[v].success[level as usize];
        let success = self.rng.bernoulli(p);
        let rtt = 2.0 * self.nodes[v].span_latency;
        self.q.schedule_in(rtt, Ev::PurifyResult { pair: keep, success })?;
        // Both pairs now live in `keep`: on success its weight doubles with
        // the level, on failure both are written off.
        self.emit(gone.left.link)
    }

    fn on_purify_result(&mut self, id: PairId, success: bool) -> Result<(), SimRunError> {
        if success {
            self.purify_successes += 1;
            let (a, b) = {
                let p = self.pair(id);
                (p.fidelity, p.fidelity)
            };
            let f = crate::pair::purify_map(a, b).new_fidelity;
            let p = self.pair_mut(id);
            p.level += 1;
            p.fidelity = f;
            self.set_slots(id, SlotState::Entangled(id));
            return self.pair_ready(id);
        }
        let gone = self.remove(id);
        self.free_slots(&gone);
        let n = &self.nodes[gone.node];
        let scale = 2.0 * 2f64.powi(gone.level as i32);
        let (lo, hi) = (n.lo, n.hi);
        for i in lo..hi {
            self.committed[i] -= scale * self.nodes[gone.node].base_weight[i - lo];
        }
        for i in lo..hi {
            self.emit(i)?;
        }
        Ok(())
    }

    fn swap(&mut self, left: PairId, right: PairId) -> Result<(), SimRunError> {
        self.op_measurements += 2;
        self.swaps += 1;
        self.mark_consumed(left);
        self.mark_consumed(right);
        let l = self.remove(left);
        let r = self.remove(right);
        let parent = self.nodes[l.node].parent.expect("swapped pairs have a parent");
        self.links[l.right.link].rx.release(l.right.slot);
        self.links[r.left.link].tx.release(r.left.slot);
        let id = self.insert(Pair {
            node: parent,
            level: 0,
            fidelity: swap_map(l.fidelity, r.fidelity),
            left: l.left,
            right: r.right,
            fresh: false,
        });
        self.set_slots(id, SlotState::Reserved(id));
        let delay = self.nodes[l.node].span_latency.max(self.nodes[r.node].span_latency);
        self.q.schedule_in(delay, Ev::SwapNotify { pair: id })?;
        self.emit(r.left.link)
    }

    fn teleport(&mut self, id: PairId) -> Result<(), SimRunError> {
        self.op_measurements += 2;
        self.mark_consumed(id);
        let p = self.remove(id);
        self.teleports_started += 1;
        for i in 0..self.links.len() {
            self.committed[i] -= self.full_weight[i];
        }
        self.links[p.left.link].tx.release(p.left.slot);
        self.links[p.right.link]
            .rx
            .set(p.right.slot, SlotState::Reserved(id));
        let delay = self.nodes[self.root].span_latency;
        self.q.schedule_in(
            delay,
            Ev::TeleportComplete {
                rx_slot: p.right.slot,
                fidelity: p.fidelity,
            },
        )?;
        self.emit(p.left.link)
    }
}
