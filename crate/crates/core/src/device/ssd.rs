//! Flash SSD model.
//!
//! A command is split into array accesses, one per mapping unit it touches.
//! Mapping units are striped over channels first, then chips, then planes.
//! Each access flows through three FIFO resources:
//!
//! * the plane (busy for the array access latency),
//! * the channel (busy for the read-out bytes at channel bandwidth),
//! * the host interface (busy for the requested bytes at the advertised bandwidth).
//!
//! Writes traverse the same resources in reverse order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{invalid, ConfigError};
use crate::kernel::{ps_to_time, transfer_ps, FifoServer, SimTime};
use crate::units::{Bandwidth, Bytes, Nanos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Opcode {
    Read,
    Write,
}

/// How much of the flash array is moved over the channel per access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    /// The whole array row (`array_data_width`).
    Full,
    /// A partial row (`partial_readout`).
    Partial,
    /// Only the touched bytes, rounded up to `min_access_granularity`.
    Fine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlashSsdConfig {
    pub channels: u32,
    pub chips_per_channel: u32,
    pub planes_per_chip: u32,
    pub array_access_latency: Nanos,
    pub array_data_width: Bytes,
    pub partial_readout: Bytes,
    pub readout: ReadoutMode,
    pub channel_bandwidth: Bandwidth,
    pub advertised_bandwidth: Bandwidth,
    pub min_access_granularity: Bytes,
    pub queue_depth: u32,
    pub capacity: Bytes,
    pub write_latency_multiplier: u32,
}

impl Default for FlashSsdConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            chips_per_channel: 8,
            planes_per_chip: 4,
            array_access_latency: Nanos(64_000),
            array_data_width: Bytes(16 * 1024),
            partial_readout: Bytes(8 * 1024),
            readout: ReadoutMode::Fine,
            channel_bandwidth: Bandwidth(1_200_000_000),
            advertised_bandwidth: Bandwidth(6_000_000_000),
            min_access_granularity: Bytes(128),
            queue_depth: 4096,
            capacity: Bytes(1 << 40),
            write_latency_multiplier: 10,
        }
    }
}

impl FlashSsdConfig {
    pub fn units(&self) -> u64 {
        u64::from(self.channels) * u64::from(self.chips_per_channel) * u64::from(self.planes_per_chip)
    }

    /// Bytes read out of the array per access in the configured mode.
    pub fn readout_unit(&self) -> u64 {
        match self.readout {
            ReadoutMode::Full => self.array_data_width.0,
            ReadoutMode::Partial => self.partial_readout.0,
            ReadoutMode::Fine => self.min_access_granularity.0,
        }
    }

    /// Aggregate channel data-out rate, before any read-out waste.
    pub fn raw_channel_bandwidth(&self) -> f64 {
        f64::from(self.channels) * self.channel_bandwidth.0 as f64
    }

    /// Useful bytes/second through the channels for `request_size`-byte reads:
    /// raw rate scaled by `request / max(request, readout unit)`.
    pub fn effective_bandwidth(&self, request_size: u64) -> f64 {
        let request = request_size.max(1);
        let moved = request.max(self.readout_unit());
        self.raw_channel_bandwidth() * request as f64 / moved as f64
    }

    /// Upper bound on random-read throughput under unlimited concurrency:
    /// the least of the interface, the planes and the channels.
    pub fn random_read_bound(&self, request_size: u64) -> f64 {
        let planes = self.units() as f64 * request_size as f64 * 1e9
            / self.array_access_latency.0.max(1) as f64;
        (self.advertised_bandwidth.0 as f64)
            .min(planes)
            .min(self.effective_bandwidth(request_size))
    }

    pub fn validate(&self, block_size: u64) -> Result<(), ConfigError> {
        if self.channels == 0 {
            return Err(invalid("ssd.channels", "must be at least 1"));
        }
        if self.chips_per_channel == 0 {
            return Err(invalid("ssd.chips_per_channel", "must be at least 1"));
        }
        if self.planes_per_chip == 0 {
            return Err(invalid("ssd.planes_per_chip", "must be at least 1"));
        }
        for (field, v) in [
            ("ssd.min_access_granularity", self.min_access_granularity.0),
            ("ssd.array_data_width", self.array_data_width.0),
            ("ssd.partial_readout", self.partial_readout.0),
        ] {
            if !v.is_power_of_two() {
                return Err(invalid(field, format!("{v} is not a power of two")));
            }
        }
        if self.min_access_granularity > self.array_data_width {
            return Err(invalid(
                "ssd.min_access_granularity",
                "must not exceed array_data_width",
            ));
        }
        if self.partial_readout > self.array_data_width
            || self.partial_readout < self.min_access_granularity
        {
            return Err(invalid(
                "ssd.partial_readout",
                "must lie between min_access_granularity and array_data_width",
            ));
        }
        if self.channel_bandwidth.0 == 0 || self.advertised_bandwidth.0 == 0 {
            return Err(invalid("ssd.channel_bandwidth", "bandwidths must be positive"));
        }
        if self.queue_depth == 0 {
            return Err(invalid("ssd.queue_depth", "must be at least 1"));
        }
        if self.write_latency_multiplier == 0 {
            return Err(invalid("ssd.write_latency_multiplier", "must be at least 1"));
        }
        if !block_size.is_multiple_of(self.min_access_granularity.0) {
            return Err(invalid(
                "ssd.min_access_granularity",
                format!("block size {block_size} is not a multiple of it"),
            ));
        }
        let planes = self.units() as f64 * block_size as f64 * 1e9
            / self.array_access_latency.0.max(1) as f64;
        let full = planes.min(self.effective_bandwidth(block_size));
        if full < self.advertised_bandwidth.0 as f64 {
            return Err(invalid(
                "ssd.advertised_bandwidth",
                format!(
                    "{} exceeds what {} planes and {} channels deliver for {block_size}B reads ({:.0} B/s)",
                    self.advertised_bandwidth,
                    self.units(),
                    self.channels,
                    full
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsdCommand {
    pub op: Opcode,
    /// Physical block address on this SSD.
    pub plba: u64,
    pub blocks: u32,
    pub block_size: u64,
    /// Opaque caller token returned on completion.
    pub token: u64,
}

impl SsdCommand {
    pub fn bytes(&self) -> u64 {
        u64::from(self.blocks) * self.block_size
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SsdError {
    #[error("submission queue full ({depth} outstanding)")]
    QueueFull { depth: u32 },
    #[error("access of {bytes}B is not a multiple of the {granularity}B access granularity")]
    MisalignedAccess { bytes: u64, granularity: u64 },
    #[error("zero-length command")]
    EmptyCommand,
    #[error("block range {start}+{blocks} exceeds capacity")]
    OutOfRange { start: u64, blocks: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SsdPhase {
    Array,
    Channel,
    Interface,
}

/// A pending stage of one array access; the owner schedules it and hands it
/// back to [`FlashSsd::advance`] at `at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsdStep {
    pub at: SimTime,
    pub command: u64,
    pub group: u32,
    pub phase: SsdPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsdCompletion {
    pub token: u64,
    pub op: Opcode,
    pub bytes: u64,
    pub submitted_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SsdProgress {
    Continue(SsdStep),
    /// One access finished; the command still has others outstanding.
    Pending,
    Complete(SsdCompletion),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SsdStats {
    pub commands: u64,
    pub array_accesses: u64,
    /// Bytes moved over flash channels (includes read-out waste).
    pub channel_bytes: u64,
    /// Bytes moved over the host interface (requested data only).
    pub interface_bytes: u64,
    pub rejected_full: u64,
}

#[derive(Debug, Clone)]
struct Access {
    unit: usize,
    channel: usize,
    readout_bytes: u64,
    data_bytes: u64,
}

#[derive(Debug)]
struct InflightCommand {
    cmd: SsdCommand,
    submitted_at: SimTime,
    accesses: Vec<Access>,
    remaining: usize,
}

#[derive(Debug)]
pub struct FlashSsd {
    cfg: FlashSsdConfig,
    units: Vec<FifoServer>,
    channels: Vec<FifoServer>,
    interface: FifoServer,
    inflight: HashMap<u64, InflightCommand>,
    next_id: u64,
    stats: SsdStats,
}

impl FlashSsd {
    pub fn new(cfg: FlashSsdConfig) -> Self {
        let units = vec![FifoServer::default(); cfg.units() as usize];
        let channels = vec![FifoServer::default(); cfg.channels as usize];
        Self {
            cfg,
            units,
            channels,
            interface: FifoServer::default(),
            inflight: HashMap::new(),
            next_id: 0,
            stats: SsdStats::default(),
        }
    }

    pub fn config(&self) -> &FlashSsdConfig {
        &self.cfg
    }

    pub fn outstanding(&self) -> usize {
        self.inflight.len()
    }

    pub fn has_free_slot(&self) -> bool {
        self.inflight.len() < self.cfg.queue_depth as usize
    }

    pub fn stats(&self) -> &SsdStats {
        &self.stats
    }

    /// `(plane, channel)` for the mapping unit at byte offset `byte`.
    fn locate(&self, unit_index: u64) -> (usize, usize) {
        let c = u64::from(self.cfg.channels);
        let k = u64::from(self.cfg.chips_per_channel);
        let p = u64::from(self.cfg.planes_per_chip);
        let channel = unit_index % c;
        let chip = (unit_index / c) % k;
        let plane = (unit_index / (c * k)) % p;
        let unit = (channel * k + chip) * p + plane;
        (unit as usize, channel as usize)
    }

    fn plan(&self, cmd: &SsdCommand) -> Vec<Access> {
        let gran = self.cfg.min_access_granularity.0;
        let unit_bytes = self.cfg.readout_unit().max(cmd.block_size);
        let start = cmd.plba * cmd.block_size;
        let end = start + cmd.bytes();
        let mut accesses = Vec::new();
        let mut idx = start / unit_bytes;
        while idx * unit_bytes < end {
            let lo = start.max(idx * unit_bytes);
            let hi = end.min((idx + 1) * unit_bytes);
            let data = hi - lo;
            let readout = match self.cfg.readout {
                ReadoutMode::Fine => data.div_ceil(gran) * gran,
                _ => unit_bytes,
            };
            let (unit, channel) = self.locate(idx);
            accesses.push(Access {
                unit,
                channel,
                readout_bytes: readout,
                data_bytes: data,
            });
            idx += 1;
        }
        accesses
    }

    /// Accepts a command and returns the first stage of each array access.
    pub fn submit(&mut self, now: SimTime, cmd: SsdCommand) -> Result<Vec<SsdStep>, SsdError> {
        if cmd.blocks == 0 {
            return Err(SsdError::EmptyCommand);
        }
        let gran = self.cfg.min_access_granularity.0;
        if !cmd.bytes().is_multiple_of(gran) {
            return Err(SsdError::MisalignedAccess {
                bytes: cmd.bytes(),
                granularity: gran,
            });
        }
        let capacity_blocks = self.cfg.capacity.0 / cmd.block_size;
        if cmd.plba + u64::from(cmd.blocks) > capacity_blocks {
            return Err(SsdError::OutOfRange {
                start: cmd.plba,
                blocks: cmd.blocks,
            });
        }
        if !self.has_free_slot() {
            self.stats.rejected_full += 1;
            return Err(SsdError::QueueFull {
                depth: self.cfg.queue_depth,
            });
        }

        let accesses = self.plan(&cmd);
        let id = self.next_id;
        self.next_id += 1;
        self.stats.commands += 1;

        let mut steps = Vec::with_capacity(accesses.len());
        for (group, access) in accesses.iter().enumerate() {
            let group = group as u32;
            let step = match cmd.op {
                Opcode::Read => {
                    let end = self.units[access.unit]
                        .serve(now, self.cfg.array_access_latency.0 * 1_000);
                    self.stats.array_accesses += 1;
                    SsdStep {
                        at: ps_to_time(end),
                        command: id,
                        group,
                        phase: SsdPhase::Array,
                    }
                }
                Opcode::Write => {
                    let end = self.interface.serve(
                        now,
                        transfer_ps(access.data_bytes, self.cfg.advertised_bandwidth.0),
                    );
                    self.stats.interface_bytes += access.data_bytes;
                    SsdStep {
                        at: ps_to_time(end),
                        command: id,
                        group,
                        phase: SsdPhase::Interface,
                    }
                }
            };
            steps.push(step);
        }
        let remaining = accesses.len();
        self.inflight.insert(
            id,
            InflightCommand {
                cmd,
                submitted_at: now,
                accesses,
                remaining,
            },
        );
        Ok(steps)
    }

    /// Completes `step` at `now` and returns what happens next.
    pub fn advance(&mut self, now: SimTime, step: SsdStep) -> SsdProgress {
        let cfg = &self.cfg;
        let entry = self
            .inflight
            .get_mut(&step.command)
            .expect("SSD step for unknown command");
        let access = entry.accesses[step.group as usize].clone();
        let op = entry.cmd.op;
        let next = match (op, step.phase) {
            (Opcode::Read, SsdPhase::Array) => {
                self.stats.channel_bytes += access.readout_bytes;
                let end = self.channels[access.channel]
                    .serve(now, transfer_ps(access.readout_bytes, cfg.channel_bandwidth.0));
                Some((end, SsdPhase::Channel))
            }
            (Opcode::Read, SsdPhase::Channel) => {
                self.stats.interface_bytes += access.data_bytes;
                let end = self
                    .interface
                    .serve(now, transfer_ps(access.data_bytes, cfg.advertised_bandwidth.0));
                Some((end, SsdPhase::Interface))
            }
            (Opcode::Write, SsdPhase::Interface) => {
                self.stats.channel_bytes += access.readout_bytes;
                let end = self.channels[access.channel]
                    .serve(now, transfer_ps(access.readout_bytes, cfg.channel_bandwidth.0));
                Some((end, SsdPhase::Channel))
            }
            (Opcode::Write, SsdPhase::Channel) => {
                self.stats.array_accesses += 1;
                let latency =
                    cfg.array_access_latency.0 * u64::from(cfg.write_latency_multiplier) * 1_000;
                let end = self.units[access.unit].serve(now, latency);
                Some((end, SsdPhase::Array))
            }
            (Opcode::Read, SsdPhase::Interface) | (Opcode::Write, SsdPhase::Array) => None,
        };
        if let Some((end_ps, phase)) = next {
            return SsdProgress::Continue(SsdStep {
                at: ps_to_time(end_ps),
                command: step.command,
                group: step.group,
                phase,
            });
        }
        entry.remaining -= 1;
        if entry.remaining > 0 {
            return SsdProgress::Pending;
        }
        let done = self.inflight.remove(&step.command).expect("present");
        SsdProgress::Complete(SsdCompletion {
            token: done.cmd.token,
            op: done.cmd.op,
            bytes: done.cmd.bytes(),
            submitted_at: done.submitted_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(plba: u64, blocks: u32, token: u64) -> SsdCommand {
        SsdCommand {
            op: Opcode::Read,
            plba,
            blocks,
            block_size: 512,
            token,
        }
    }

    /// Drives a single SSD to completion, processing steps in time order.
    fn run_to_completion(ssd: &mut FlashSsd, mut steps: Vec<SsdStep>) -> Vec<(u64, SimTime)> {
        let mut done = Vec::new();
        while !steps.is_empty() {
            steps.sort_by_key(|s| (s.at, s.command, s.group));
            let step = steps.remove(0);
            match ssd.advance(step.at, step) {
                SsdProgress::Continue(next) => steps.push(next),
                SsdProgress::Pending => {}
                SsdProgress::Complete(c) => done.push((c.token, step.at)),
            }
        }
        done
    }

    #[test]
    fn isolated_512b_read_latency() {
        let mut ssd = FlashSsd::new(FlashSsdConfig::default());
        let steps = ssd.submit(SimTime::ZERO, read(0, 1, 7)).unwrap();
        let done = run_to_completion(&mut ssd, steps);
        // 64us array + 512B over 1.2GB/s (426.67ns) + 512B over 6GB/s (85.33ns),
        // each stage rounded up to the nanosecond at its event boundary.
        let channel_end = 64_000 + 427;
        let expected = channel_end + 86;
        assert_eq!(done, vec![(7, SimTime(expected))]);
    }

    #[test]
    fn distinct_channels_are_served_in_parallel() {
        let mut ssd = FlashSsd::new(FlashSsdConfig::default());
        let mut steps = ssd.submit(SimTime::ZERO, read(0, 1, 0)).unwrap();
        steps.extend(ssd.submit(SimTime::ZERO, read(1, 1, 1)).unwrap());
        let done = run_to_completion(&mut ssd, steps);
        assert_eq!(done.len(), 2);
        // Both finish within one interface slot of each other, well under 2x latency.
        assert!(done[1].1 .0 < 65_000, "{done:?}");
    }

    #[test]
    fn same_plane_serializes() {
        let mut ssd = FlashSsd::new(FlashSsdConfig::default());
        let units = ssd.config().units();
        let mut steps = ssd.submit(SimTime::ZERO, read(0, 1, 0)).unwrap();
        steps.extend(ssd.submit(SimTime::ZERO, read(units, 1, 1)).unwrap());
        let done = run_to_completion(&mut ssd, steps);
        assert!(done[1].1 .0 >= 128_000);
    }

    #[test]
    fn queue_depth_plus_one_is_rejected_once() {
        let cfg = FlashSsdConfig {
            queue_depth: 8,
            ..FlashSsdConfig::default()
        };
        let mut ssd = FlashSsd::new(cfg);
        let results: Vec<_> = (0..9).map(|i| ssd.submit(SimTime::ZERO, read(i, 1, i))).collect();
        let full = results
            .iter()
            .filter(|r| matches!(r, Err(SsdError::QueueFull { .. })))
            .count();
        assert_eq!(full, 1);
        assert!(results[8].is_err());
    }

    #[test]
    fn misaligned_and_empty_commands() {
        let mut ssd = FlashSsd::new(FlashSsdConfig::default());
        let odd = SsdCommand {
            block_size: 100,
            ..read(0, 1, 0)
        };
        assert!(matches!(
            ssd.submit(SimTime::ZERO, odd),
            Err(SsdError::MisalignedAccess { .. })
        ));
        assert_eq!(ssd.submit(SimTime::ZERO, read(0, 0, 0)), Err(SsdError::EmptyCommand));
    }

    #[test]
    fn full_readout_moves_the_whole_row_over_the_channel() {
        let cfg = FlashSsdConfig {
            readout: ReadoutMode::Full,
            ..FlashSsdConfig::default()
        };
        let mut ssd = FlashSsd::new(cfg);
        let steps = ssd.submit(SimTime::ZERO, read(0, 8, 0)).unwrap();
        assert_eq!(steps.len(), 1);
        run_to_completion(&mut ssd, steps);
        assert_eq!(ssd.stats().channel_bytes, 16 * 1024);
        assert_eq!(ssd.stats().interface_bytes, 4096);
    }

    #[test]
    fn effective_bandwidth_examples() {
        let full = FlashSsdConfig {
            readout: ReadoutMode::Full,
            ..FlashSsdConfig::default()
        };
        let raw = full.raw_channel_bandwidth();
        assert!((full.effective_bandwidth(4096) / raw - 0.25).abs() < 1e-12);

        let fine = FlashSsdConfig::default();
        assert!((fine.effective_bandwidth(512) / raw - 1.0).abs() < 1e-12);

        let partial = FlashSsdConfig {
            readout: ReadoutMode::Partial,
            ..FlashSsdConfig::default()
        };
        assert!((partial.effective_bandwidth(128) / raw - 1.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn default_config_is_valid_and_bound_is_advertised() {
        let cfg = FlashSsdConfig::default();
        cfg.validate(512).unwrap();
        assert_eq!(cfg.random_read_bound(512), 6e9);
    }

    #[test]
    fn validation_catches_bad_geometry() {
        let bad = FlashSsdConfig {
            min_access_granularity: Bytes(96),
            ..FlashSsdConfig::default()
        };
        assert!(bad.validate(512).is_err());
        let slow = FlashSsdConfig {
            planes_per_chip: 1,
            ..FlashSsdConfig::default()
        };
        // 256 planes x 512B / 64us = 2.05 GB/s < 6 GB/s advertised.
        assert!(slow.validate(512).is_err());
    }

    #[test]
    fn writes_take_the_latency_multiplier() {
        let mut ssd = FlashSsd::new(FlashSsdConfig::default());
        let cmd = SsdCommand {
            op: Opcode::Write,
            ..read(0, 1, 3)
        };
        let steps = ssd.submit(SimTime::ZERO, cmd).unwrap();
        let done = run_to_completion(&mut ssd, steps);
        assert!(done[0].1 .0 >= 640_000);
    }
}
