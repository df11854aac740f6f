//! Entanglement control for a single hop.
//!
//! The transmitter fires one pulse per free qubit at the link clock rate.
//! The receiver takes whichever of its qubits is free when the pulse lands,
//! measures, and acknowledges the outcome back. Until that acknowledgment
//! arrives the transmitter qubit is held and can do nothing useful.

use serde::{Deserialize, Serialize};

use crate::engine::{classical_latency, RandomStream};
use crate::model::LinkSpec;
use crate::pair::{base_fidelity, BaseFidelityModel, Fidelity, PairError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModelParams {
    /// Pulses per second from one transmitter.
    pub pulse_rate: f64,
    /// Probability that a measured pulse leaves the qubits entangled.
    pub p_ent: f64,
    pub fidelity: BaseFidelityModel,
}

impl Default for LinkModelParams {
    fn default() -> Self {
        Self {
            pulse_rate: 1.0e6,
            p_ent: 0.38,
            fidelity: BaseFidelityModel::default(),
        }
    }
}

impl LinkModelParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.p_ent > 0.0 && self.p_ent <= 1.0) {
            return Err(format!("p_ent {} must lie in (0, 1]", self.p_ent));
        }
        if !(self.pulse_rate > 0.0 && self.pulse_rate.is_finite()) {
            return Err(format!("pulse_rate {} must be positive", self.pulse_rate));
        }
        Ok(())
    }

    pub fn link_fidelity(&self, link: &LinkSpec) -> Result<Fidelity, PairError> {
        base_fidelity(link.loss_db, &self.fidelity)
    }

    /// Whether purification can ever lift this link's pairs.
    pub fn is_usable(&self, link: &LinkSpec) -> bool {
        self.link_fidelity(link).is_ok_and(|f| f.is_purifiable())
    }
}

/// Handle to a live pair in the simulation's pair table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Free,
    /// Transmitter qubit whose pulse has not been acknowledged yet.
    AwaitingAck,
    Entangled(PairId),
    /// Held by an operation whose outcome is still travelling.
    Reserved(PairId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitBuffer {
    slots: Vec<SlotState>,
    free: usize,
}

impl QubitBuffer {
    pub fn new(capacity: u32) -> Self {
        Self {
            slots: vec![SlotState::Free; capacity as usize],
            free: capacity as usize,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn free_count(&self) -> usize {
        self.free
    }

    pub fn occupied(&self) -> usize {
        self.slots.len() - self.free
    }

    pub fn state(&self, slot: usize) -> SlotState {
        self.slots[slot]
    }

    pub fn count(&self, pred: impl Fn(SlotState) -> bool) -> usize {
        self.slots.iter().filter(|s| pred(**s)).count()
    }

    /// Claims the lowest-numbered free slot.
    pub fn claim(&mut self, state: SlotState) -> Option<usize> {
        debug_assert!(state != SlotState::Free);
        if self.free == 0 {
            return None;
        }
        let i = self.slots.iter().position(|s| *s == SlotState::Free)?;
        self.slots[i] = state;
        self.free -= 1;
        Some(i)
    }

    pub fn set(&mut self, slot: usize, state: SlotState) {
        let was_free = self.slots[slot] == SlotState::Free;
        let now_free = state == SlotState::Free;
        match (was_free, now_free) {
            (true, false) => self.free -= 1,
            (false, true) => self.free += 1,
            _ => {}
        }
        self.slots[slot] = state;
    }

    pub fn release(&mut self, slot: usize) {
        self.set(slot, SlotState::Free);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    pub pulses: u64,
    pub measurements: u64,
}

/// Outcome of a pulse reaching the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    /// No receiver qubit was free; nothing was measured.
    Discarded,
    Failed,
    Entangled { rx_slot: usize },
}

/// Runtime state of one hop.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub tx: QubitBuffer,
    pub rx: QubitBuffer,
    pub latency: f64,
    pub fidelity: Fidelity,
    pub counters: WorkCounters,
    pub discarded: u64,
    pub successes: u64,
    pulse_interval: f64,
    p_ent: f64,
    emitter_free_at: f64,
}

impl LinkState {
    pub fn new(link: &LinkSpec, params: &LinkModelParams) -> Result<Self, PairError> {
        Ok(Self {
            tx: QubitBuffer::new(link.tx_qubits),
            rx: QubitBuffer::new(link.rx_qubits),
            latency: classical_latency(link.length_km),
            fidelity: params.link_fidelity(link)?,
            counters: WorkCounters::default(),
            discarded: 0,
            successes: 0,
            pulse_interval: 1.0 / params.pulse_rate,
            p_ent: params.p_ent,
            emitter_free_at: 0.0,
        })
    }

    /// Starts an attempt on a free transmitter qubit. Returns the slot and the
    /// time the pulse reaches the receiver.
    pub fn start_attempt(&mut self, now: f64) -> Option<(usize, f64)> {
        let slot = self.tx.claim(SlotState::AwaitingAck)?;
        let emit = now.max(self.emitter_free_at);
        self.emitter_free_at = emit + self.pulse_interval;
        self.counters.pulses += 1;
        Some((slot, emit + self.latency))
    }

    /// Receiver side of an attempt. An entangled receiver slot is marked
    /// with `pair`, which the caller allocates up front.
    pub fn on_arrival(&mut self, rng: &mut RandomStream, pair: PairId) -> Arrival {
        if self.rx.free_count() == 0 {
            self.discarded += 1;
            return Arrival::Discarded;
        }
        self.counters.measurements += 1;
        if rng.bernoulli(self.p_ent) {
            let rx_slot = self
                .rx
                .claim(SlotState::Entangled(pair))
                .expect("free slot checked above");
            self.successes += 1;
            Arrival::Entangled { rx_slot }
        } else {
            Arrival::Failed
        }
    }

    /// Transmitter learns the outcome of the attempt on `tx_slot`.
    pub fn on_ack(&mut self, tx_slot: usize, pair: Option<PairId>) {
        debug_assert_eq!(self.tx.state(tx_slot), SlotState::AwaitingAck);
        match pair {
            Some(p) => self.tx.set(tx_slot, SlotState::Entangled(p)),
            None => self.tx.release(tx_slot),
        }
    }

    pub fn awaiting_ack(&self) -> usize {
        self.tx.count(|s| s == SlotState::AwaitingAck)
    }
}

/// Counts from [`run_link_only`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkOnlyStats {
    pub counters: WorkCounters,
    pub successes: u64,
    pub discarded: u64,
    pub awaiting_ack_at_end: usize,
}

/// Drives a bare link for `pulses` attempts. Entangled pairs are dropped as
/// soon as the transmitter learns of them when `consume` is set, otherwise
/// they stay in the buffers.
pub fn run_link_only(
    link: &LinkSpec,
    params: &LinkModelParams,
    pulses: u64,
    consume: bool,
    seed: u64,
) -> Result<LinkOnlyStats, PairError> {
    use crate::engine::EventQueue;

    enum Ev {
        Arrive(usize),
        Ack(usize, Option<usize>),
    }

    let mut state = LinkState::new(link, params)?;
    let mut rng = RandomStream::new(seed);
    let mut q: EventQueue<Ev> = EventQueue::new();
    let mut issued = 0;
    let fire = |state: &mut LinkState, q: &mut EventQueue<Ev>, issued: &mut u64, now: f64| {
        while *issued < pulses {
            let Some((slot, at)) = state.start_attempt(now) else { break };
            *issued += 1;
            q.schedule(at, Ev::Arrive(slot)).expect("future event");
        }
    };
    fire(&mut state, &mut q, &mut issued, 0.0);
    while let Some(ev) = q.pop() {
        let now = q.now();
        match ev.payload {
            Ev::Arrive(tx_slot) => {
                let pid = PairId(state.successes as u32);
                let rx = match state.on_arrival(&mut rng, pid) {
                    Arrival::Entangled { rx_slot } => Some(rx_slot),
                    _ => None,
                };
                q.schedule_in(state.latency, Ev::Ack(tx_slot, rx))
                    .expect("future event");
            }
            Ev::Ack(tx_slot, rx) => {
                state.on_ack(tx_slot, rx.map(|_| PairId(0)));
                if let (true, Some(rx_slot)) = (consume, rx) {
                    state.tx.release(tx_slot);
                    state.rx.release(rx_slot);
                }
                fire(&mut state, &mut q, &mut issued, now);
            }
        }
    }
    Ok(LinkOnlyStats {
        counters: state.counters,
        successes: state.successes,
        discarded: state.discarded,
        awaiting_ack_at_end: state.awaiting_ack(),
    })
}
