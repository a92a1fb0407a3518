use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{invalid, ConfigError};
use crate::kernel::{ps_to_time, transfer_ps, FifoServer, SimTime};
use crate::units::{Bandwidth, Bytes, Nanos};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub bandwidth: Bandwidth,
    pub propagation_latency: Nanos,
    pub header_bytes: Bytes,
    /// Outstanding transactions the link can track.
    pub max_tags: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth(16_000_000_000),
            propagation_latency: Nanos(50),
            header_bytes: Bytes(16),
            max_tags: 65_536,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self, section: &'static str) -> Result<(), ConfigError> {
        if self.bandwidth.0 == 0 {
            return Err(invalid(section, "bandwidth must be positive"));
        }
        if self.max_tags == 0 {
            return Err(invalid(section, "max_tags must be at least 1"));
        }
        Ok(())
    }

    /// Link occupancy for one transfer, in picoseconds.
    pub fn occupancy_ps(&self, payload: u64) -> u64 {
        transfer_ps(payload + self.header_bytes.0, self.bandwidth.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchConfig {
    pub ports: u32,
    /// Per-port link; `None` reuses the scenario's fabric link.
    pub port_link: Option<LinkConfig>,
    pub routing_latency: Nanos,
    pub tag_space: u32,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        Self {
            ports: 2,
            port_link: None,
            routing_latency: Nanos(100),
            tag_space: 1 << 20,
        }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ports == 0 {
            return Err(invalid("switch.ports", "must be at least 1"));
        }
        if self.tag_space == 0 {
            return Err(invalid("switch.tag_space", "must be at least 1"));
        }
        if let Some(l) = &self.port_link {
            l.validate("switch.port_link")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("all {max_tags} tags are in use")]
    TagsExhausted { max_tags: u32 },
    #[error("no route to port {port}")]
    NoRoute { port: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub transfers: u64,
    pub delivered: u64,
    pub payload_bytes: u64,
    pub header_bytes: u64,
    pub tag_stalls: u64,
}

/// One direction of a point-to-point link: a FIFO serializer plus a tag table.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: LinkConfig,
    wire: FifoServer,
    tags_in_use: u32,
    stats: LinkStats,
}

impl Link {
    pub fn new(cfg: LinkConfig) -> Self {
        Self {
            cfg,
            wire: FifoServer::default(),
            tags_in_use: 0,
            stats: LinkStats::default(),
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    pub fn tags_in_use(&self) -> u32 {
        self.tags_in_use
    }

    pub fn has_free_tag(&self) -> bool {
        self.tags_in_use < self.cfg.max_tags
    }

    /// Starts a transfer at `now`; returns the delivery time. The tag stays
    /// held until [`Link::deliver`] is called.
    pub fn transfer(&mut self, now: SimTime, payload: u64) -> Result<SimTime, LinkError> {
        if !self.has_free_tag() {
            self.stats.tag_stalls += 1;
            return Err(LinkError::TagsExhausted {
                max_tags: self.cfg.max_tags,
            });
        }
        self.tags_in_use += 1;
        self.stats.transfers += 1;
        self.stats.payload_bytes += payload;
        self.stats.header_bytes += self.cfg.header_bytes.0;
        let end = self.wire.serve(now, self.cfg.occupancy_ps(payload));
        Ok(ps_to_time(end) + self.cfg.propagation_latency.0)
    }

    pub fn deliver(&mut self) {
        debug_assert!(self.tags_in_use > 0);
        self.tags_in_use -= 1;
        self.stats.delivered += 1;
    }

    /// Total time the wire has spent transmitting, in picoseconds.
    pub fn busy_ps(&self) -> u64 {
        self.wire.busy_total_ps()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare(bw: u64, header: u64, tags: u32) -> Link {
        Link::new(LinkConfig {
            bandwidth: Bandwidth(bw),
            propagation_latency: Nanos(0),
            header_bytes: Bytes(header),
            max_tags: tags,
        })
    }

    #[test]
    fn occupancy_examples() {
        let mut l = bare(16_000_000_000, 0, 4);
        assert_eq!(l.transfer(SimTime::ZERO, 512).unwrap(), SimTime(32));

        let mut h = bare(16_000_000_000, 16, 4);
        assert_eq!(h.transfer(SimTime::ZERO, 64).unwrap(), SimTime(5));
        let eff = 64.0 / 80.0;
        let s = h.stats();
        assert_eq!(s.payload_bytes as f64 / (s.payload_bytes + s.header_bytes) as f64, eff);
    }

    #[test]
    fn transfers_serialize_and_include_propagation() {
        let mut l = Link::new(LinkConfig {
            propagation_latency: Nanos(50),
            header_bytes: Bytes(0),
            ..LinkConfig::default()
        });
        assert_eq!(l.transfer(SimTime::ZERO, 512).unwrap(), SimTime(82));
        assert_eq!(l.transfer(SimTime::ZERO, 512).unwrap(), SimTime(114));
    }

    #[test]
    fn tags_exhaust_and_recover() {
        let mut l = bare(16_000_000_000, 0, 3);
        for _ in 0..3 {
            l.transfer(SimTime::ZERO, 64).unwrap();
        }
        assert_eq!(
            l.transfer(SimTime::ZERO, 64),
            Err(LinkError::TagsExhausted { max_tags: 3 })
        );
        l.deliver();
        assert!(l.transfer(SimTime(10), 64).is_ok());
    }
}
