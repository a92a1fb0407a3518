//! Hardware models: flash SSDs, point-to-point links, the switch, and the
//! compute unit configuration.

mod compute;
mod fabric;
mod link;
mod ssd;

pub use compute::ComputeConfig;
pub use fabric::{Fabric, FabricStep, Hop, LinkId, TransitId};
pub use link::{Link, LinkConfig, LinkError, LinkStats, SwitchConfig};
pub use ssd::{
    FlashSsd, FlashSsdConfig, Opcode, ReadoutMode, SsdCommand, SsdCompletion, SsdError, SsdPhase,
    SsdProgress, SsdStats, SsdStep,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}
