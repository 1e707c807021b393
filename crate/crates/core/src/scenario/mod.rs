//! Concrete problem instances built on the generic core.

pub mod fiveg;
pub mod routing;

pub use fiveg::{FiveGDecision, FiveGParams};
pub use routing::RoutingScenario;
