use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Cosine decay from `w_start` to `w_end` across stage 1.
    #[default]
    Cosine,
    /// `w_start` throughout stage 1.
    Constant,
}

/// Two-stage distillation weight: distill during stage 1, none in stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSchedule {
    pub stage1_epochs: u32,
    pub stage2_epochs: u32,
    pub w_start: f64,
    pub w_end: f64,
    pub mode: WeightMode,
}

impl Default for DistillSchedule {
    fn default() -> Self {
        Self {
            stage1_epochs: 284,
            stage2_epochs: 16,
            w_start: 0.5,
            w_end: 0.0,
            mode: WeightMode::Cosine,
        }
    }
}

impl DistillSchedule {
    pub fn total_epochs(&self) -> u32 {
        self.stage1_epochs + self.stage2_epochs
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage1_epochs == 0 || self.stage2_epochs == 0 {
            return Err(Error::OutOfRange("both stage durations must be positive".into()));
        }
        if !(self.w_start.is_finite() && self.w_end.is_finite() && self.w_start >= 0.0 && self.w_end >= 0.0) {
            return Err(Error::OutOfRange("schedule weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Distillation weight at a (possibly fractional) epoch. Negative epochs
/// are treated as 0.
pub fn distill_weight(epoch: f64, s: &DistillSchedule) -> f64 {
    let epoch = epoch.max(0.0);
    let stage1 = s.stage1_epochs as f64;
    if epoch >= stage1 {
        return 0.0;
    }
    match s.mode {
        WeightMode::Constant => s.w_start,
        WeightMode::Cosine => s.w_end + 0.5 * (s.w_start - s.w_end) * (1.0 + (PI * epoch / stage1).cos()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_points() {
        let s = DistillSchedule::default();
        assert_eq!(distill_weight(0.0, &s), 0.5);
        assert!((distill_weight(142.0, &s) - 0.25).abs() < 1e-12);
        for e in 284..300 {
            assert_eq!(distill_weight(e as f64, &s), 0.0);
        }
    }

    #[test]
    fn constant_mode_holds_then_drops() {
        let s = DistillSchedule {
            mode: WeightMode::Constant,
            ..Default::default()
        };
        assert_eq!(distill_weight(283.9, &s), 0.5);
        assert_eq!(distill_weight(284.0, &s), 0.0);
    }
}
