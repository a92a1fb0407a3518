//! GPU-initiated storage access: ECU threads own NVMe queue pairs in HBM and
//! talk to a controller that checks extent ACLs and stripes over its SSDs.

mod fs;
mod queue;
mod sim;
mod vmap;

pub use fs::{Denial, Extent, FileTable, FsError, Permission};
pub use queue::{CompletionStatus, NvmeCommand, NvmeCompletion, QueueError, QueuePair};
pub use sim::{EruditeSim, ERUDITE_STEPS};
pub use vmap::{PhysRange, VirtualMap};

use serde::{Deserialize, Serialize};

use crate::device::{invalid, ConfigError};
use crate::units::{Bytes, Nanos};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EruditeConfig {
    /// Queue pairs per EPU; thread `t` uses queue `t mod queues`.
    pub queues: u32,
    pub queue_depth: u32,
    /// Pipelined per-command processing latency.
    pub controller_latency: Nanos,
    /// Serialized per-command occupancy of the controller (0 = unbounded rate).
    pub controller_service_time: Nanos,
    pub poll_interval: Nanos,
    /// Blocks per stripe unit.
    pub stripe_width: u64,
    pub backoff_base: Nanos,
    pub backoff_max: Nanos,
    pub sqe_bytes: Bytes,
    pub doorbell_bytes: Bytes,
    /// Threads running on a second EPU whose queues are mapped across the switch.
    pub remote_threads: u32,
}

impl Default for EruditeConfig {
    fn default() -> Self {
        Self {
            queues: 16,
            queue_depth: 1024,
            controller_latency: Nanos(1_000),
            controller_service_time: Nanos(0),
            poll_interval: Nanos(100),
            stripe_width: 4,
            backoff_base: Nanos(100),
            backoff_max: Nanos(12_800),
            sqe_bytes: Bytes(64),
            doorbell_bytes: Bytes(4),
            remote_threads: 0,
        }
    }
}

impl EruditeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.queues == 0 {
            return Err(invalid("erudite.queues", "must be at least 1"));
        }
        if self.queue_depth == 0 {
            return Err(invalid("erudite.queue_depth", "must be at least 1"));
        }
        if self.stripe_width == 0 {
            return Err(invalid("erudite.stripe_width", "must be at least 1"));
        }
        if self.backoff_base.0 == 0 || self.backoff_max < self.backoff_base {
            return Err(invalid(
                "erudite.backoff_base",
                "must be positive and not above backoff_max",
            ));
        }
        Ok(())
    }
}
