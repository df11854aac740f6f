//! Discrete-event core: virtual clock, ordered event queue, seeded randomness.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Signal speed in fiber, km/s (refractive index about 1.5).
pub const C_FIBER_KM_PER_S: f64 = 2.0e5;

/// One-way classical message delay over `length_km` of fiber.
pub fn classical_latency(length_km: f64) -> f64 {
    length_km / C_FIBER_KM_PER_S
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("event scheduled at {at} s but the clock is already at {now} s")]
    InThePast { at: f64, now: f64 },
    #[error("event time {0} is not finite")]
    BadTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub at: f64,
    pub seq: u64,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; reverse so the earliest (at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .at
            .total_cmp(&self.0.at)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Pending events ordered by `(at, seq)`; popping advances the clock.
pub struct EventQueue<P> {
    heap: BinaryHeap<Entry<P>>,
    now: f64,
    next_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: 0.0,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: f64, payload: P) -> Result<EventId, SimError> {
        if !at.is_finite() {
            return Err(SimError::BadTime(at));
        }
        if at < self.now {
            return Err(SimError::InThePast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event { at, seq, payload }));
        Ok(EventId(seq))
    }

    /// Schedules `delay` seconds after the current time.
    pub fn schedule_in(&mut self, delay: f64, payload: P) -> Result<EventId, SimError> {
        self.schedule(self.now + delay, payload)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.0.at)
    }

    pub fn pop(&mut self) -> Option<Event<P>> {
        let Entry(ev) = self.heap.pop()?;
        debug_assert!(ev.at >= self.now);
        self.now = ev.at;
        Some(ev)
    }

    /// Pending events in no particular order.
    pub fn pending(&self) -> impl Iterator<Item = &Event<P>> {
        self.heap.iter().map(|e| &e.0)
    }
}

/// Seeded random source; one per simulation run.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        self.uniform() < p
    }
}
