use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Throughput figures for the roofline latency model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub flops_per_ms: f64,
    pub bytes_per_ms: f64,
    #[serde(default)]
    pub per_op_overhead_ms: f64,
}

impl DeviceProfile {
    /// Illustrative GPU-like coefficients, not a measurement.
    pub fn t4_like() -> Self {
        serde_json::from_str(include_str!("../../profiles/t4-like.json")).expect("bundled profile parses")
    }

    /// Illustrative CPU-like coefficients, not a measurement.
    pub fn x86_like() -> Self {
        serde_json::from_str(include_str!("../../profiles/x86-like.json")).expect("bundled profile parses")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "t4-like" => Some(Self::t4_like()),
            "x86-like" => Some(Self::x86_like()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.flops_per_ms) {
            return Err(Error::Schema {
                path: "flops_per_ms".into(),
                msg: "must be a positive finite number".into(),
            });
        }
        if !positive(self.bytes_per_ms) {
            return Err(Error::Schema {
                path: "bytes_per_ms".into(),
                msg: "must be a positive finite number".into(),
            });
        }
        if !(self.per_op_overhead_ms.is_finite() && self.per_op_overhead_ms >= 0.0) {
            return Err(Error::Schema {
                path: "per_op_overhead_ms".into(),
                msg: "must be a non-negative finite number".into(),
            });
        }
        Ok(())
    }
}
