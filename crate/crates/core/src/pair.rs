//! Werner-state fidelity algebra.
//!
//! Every pair is tracked by a single fidelity with respect to the target
//! Bell state; states are assumed twirled back to Werner form after each
//! operation, so the scalar is a complete description.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairError {
    #[error("fidelity {0} outside [0.25, 1]")]
    OutOfRange(f64),
    #[error("negative or non-finite loss {0} dB")]
    BadLoss(f64),
}

/// Fidelity of a Werner pair, in `[0.25, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Fidelity(f64);

impl Fidelity {
    pub const PERFECT: Fidelity = Fidelity(1.0);
    pub const MIXED: Fidelity = Fidelity(0.25);
    /// Below or at this value purification cannot raise the fidelity.
    pub const THRESHOLD: f64 = 0.5;

    pub fn new(value: f64) -> Result<Self, PairError> {
        if (0.25..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(PairError::OutOfRange(value))
        }
    }

    /// Clamps rounding overshoot back into range.
    pub(crate) fn clamped(value: f64) -> Self {
        Self(value.clamp(0.25, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_purifiable(self) -> bool {
        self.0 > Self::THRESHOLD
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Link fidelity as a function of channel loss:
/// `F0(loss) = max(0.25, cap - slope * loss^exponent)`.
///
/// The default curve crosses 0.5 at `0.5 / 0.09` dB (about 5.56 dB).
/// `exponent = 1` with `slope = 0.09` is the plain linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseFidelityModel {
    pub cap: f64,
    pub slope: f64,
    pub exponent: f64,
}

/// Loss at which the default model reaches the purification threshold.
pub const DEFAULT_CUTOFF_DB: f64 = 0.5 / 0.09;
pub const DEFAULT_EXPONENT: f64 = 5.0;

impl BaseFidelityModel {
    pub fn linear(cap: f64, slope: f64) -> Self {
        Self {
            cap,
            slope,
            exponent: 1.0,
        }
    }

    /// Curve with the given exponent whose value at `cutoff_db` is exactly 0.5.
    pub fn with_cutoff(cap: f64, cutoff_db: f64, exponent: f64) -> Self {
        Self {
            cap,
            slope: (cap - Fidelity::THRESHOLD) / cutoff_db.powf(exponent),
            exponent,
        }
    }

    /// Loss at which the curve reaches 0.5; links at or beyond it are unusable.
    pub fn cutoff_db(&self) -> f64 {
        ((self.cap - Fidelity::THRESHOLD) / self.slope).powf(1.0 / self.exponent)
    }
}

impl Default for BaseFidelityModel {
    fn default() -> Self {
        Self::with_cutoff(1.0, DEFAULT_CUTOFF_DB, DEFAULT_EXPONENT)
    }
}

pub fn base_fidelity(loss_db: f64, model: &BaseFidelityModel) -> Result<Fidelity, PairError> {
    if !(loss_db.is_finite() && loss_db >= 0.0) {
        return Err(PairError::BadLoss(loss_db));
    }
    let f = model.cap - model.slope * loss_db.powf(model.exponent);
    Ok(Fidelity::clamped(f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurifyOutcome {
    pub success_prob: f64,
    pub new_fidelity: Fidelity,
}

/// One round of the bilateral recurrence protocol on two Werner pairs.
pub fn purify_map(f1: Fidelity, f2: Fidelity) -> PurifyOutcome {
    let (a, b) = (f1.0, f2.0);
    let (ea, eb) = (1.0 - a, 1.0 - b);
    let p = a * b + a * eb / 3.0 + b * ea / 3.0 + 5.0 * ea * eb / 9.0;
    let kept = a * b + ea * eb / 9.0;
    PurifyOutcome {
        success_prob: p,
        new_fidelity: Fidelity::clamped(kept / p),
    }
}

/// Fidelity of the pair produced by a Bell measurement joining two pairs.
pub fn swap_map(f1: Fidelity, f2: Fidelity) -> Fidelity {
    let (a, b) = (f1.0, f2.0);
    Fidelity::clamped(a * b + (1.0 - a) * (1.0 - b) / 3.0)
}

/// Applies `rounds` symmetric rounds starting from `f`; returns the final
/// fidelity and each round's success probability.
pub fn purify_rounds(mut f: Fidelity, rounds: u32) -> (Fidelity, Vec<f64>) {
    let mut probs = Vec::with_capacity(rounds as usize);
    for _ in 0..rounds {
        let out = purify_map(f, f);
        probs.push(out.success_prob);
        f = out.new_fidelity;
    }
    (f, probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounds {
    Reached(u32),
    Unreachable,
}

/// Minimum number of symmetric rounds (`f <- F'(f, f)`) lifting `f0` to `target`.
pub fn rounds_to_reach(f0: Fidelity, target: Fidelity) -> Rounds {
    if f0.0 >= target.0 {
        return Rounds::Reached(0);
    }
    if !f0.is_purifiable() || target.0 >= 1.0 {
        return Rounds::Unreachable;
    }
    // Converges to 1 for any f0 > 0.5; the bound only guards pathological input.
    let mut f = f0;
    for k in 1..=10_000 {
        let next = purify_map(f, f).new_fidelity;
        if next.0 >= target.0 {
            return Rounds::Reached(k);
        }
        if next.0 <= f.0 {
            return Rounds::Unreachable;
        }
        f = next;
    }
    Rounds::Unreachable
}
