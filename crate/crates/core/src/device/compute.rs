use serde::{Deserialize, Serialize};

use super::{invalid, ConfigError};
use crate::analytic::RooflinePoint;
use crate::units::{Bandwidth, Bytes};

/// GPU-like compute unit attached to HBM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeConfig {
    pub sm_count: u32,
    pub threads_per_sm: u32,
    /// Peak arithmetic throughput in operations/second.
    pub peak_ops: u64,
    pub element_size: Bytes,
    pub hbm_bandwidth: Bandwidth,
    pub hbm_capacity: Bytes,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        Self {
            sm_count: 108,
            threads_per_sm: 2048,
            peak_ops: 312_000_000_000_000,
            element_size: Bytes(2),
            hbm_bandwidth: Bandwidth(1_555_000_000_000),
            hbm_capacity: Bytes(40_000_000_000),
        }
    }
}

impl ComputeConfig {
    pub fn total_threads(&self) -> u64 {
        u64::from(self.sm_count) * u64::from(self.threads_per_sm)
    }

    pub fn roofline(&self) -> Result<RooflinePoint, ConfigError> {
        RooflinePoint::new(self.peak_ops, self.hbm_bandwidth, self.element_size)
            .map_err(|e| invalid("compute.peak_ops", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sm_count == 0 {
            return Err(invalid("compute.sm_count", "must be at least 1"));
        }
        if self.threads_per_sm == 0 {
            return Err(invalid("compute.threads_per_sm", "must be at least 1"));
        }
        if self.hbm_capacity.0 == 0 {
            return Err(invalid("compute.hbm_capacity", "must be positive"));
        }
        self.roofline().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_thread_budget() {
        let c = ComputeConfig::default();
        assert_eq!(c.total_threads(), 108 * 2048);
        c.validate().unwrap();
    }

    #[test]
    fn zero_bandwidth_is_invalid() {
        let c = ComputeConfig {
            hbm_bandwidth: Bandwidth(0),
            ..ComputeConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
