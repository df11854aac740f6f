//! Discrete-event simulation of purify-and-swap quantum repeater paths, and
//! link-cost routing built on top of it.

pub mod calibration;
pub mod engine;
pub mod experiments;
pub mod link;
pub mod model;
pub mod pair;
pub mod plan;
pub mod protocol;
pub mod routing;

pub use model::{LinkSpec, NodeSpec, Path, Topology};
pub use pair::{BaseFidelityModel, Fidelity};
