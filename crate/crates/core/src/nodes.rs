//! Canonical network node identifiers.
//!
//! All stages agree on these names so that factors built in one module can
//! be wired into networks assembled in another.

use crate::bn::VarId;

/// Intensity class node.
pub const INTENSITY: &str = "i";
/// Central-pressure-deficit node.
pub const DP: &str = "dp";
/// Translation-speed node.
pub const VF: &str = "vf";
/// Radius-of-maximum-winds node.
pub const RMAX: &str = "rmax";
/// Heading node.
pub const THETA: &str = "theta";
/// Landfall-location node.
pub const X0: &str = "x0";

/// The five storm-parameter nodes in canonical order (the TCPC axes).
pub const PARAMETERS: [&str; 5] = [DP, VF, RMAX, THETA, X0];

/// Predicted-response node for hazard `h` (0-based): `rhat1`, `rhat2`, ...
pub fn rhat(h: usize) -> VarId {
    VarId::from(format!("rhat{}", h + 1))
}

/// Model-error node for hazard `h`: `eps1`, `eps2`, ...
pub fn epsilon(h: usize) -> VarId {
    VarId::from(format!("eps{}", h + 1))
}

/// Actual-response node for hazard `h`: `r1`, `r2`, ...
pub fn response(h: usize) -> VarId {
    VarId::from(format!("r{}", h + 1))
}

/// Threshold-exceedance indicator node for hazard `h`: `e1`, `e2`, ...
pub fn exceedance(h: usize) -> VarId {
    VarId::from(format!("e{}", h + 1))
}

/// Deterministic response-pairing node over hazards 1 and 2.
pub fn joint_response() -> VarId {
    VarId::from("j12")
}
