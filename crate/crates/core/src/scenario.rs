//! Scenario description: devices, paths, files, workload and run control.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::HostCpuConfig;
use crate::device::{ComputeConfig, ConfigError, FlashSsdConfig, LinkConfig, Opcode, SwitchConfig};
use crate::erudite::{Extent, EruditeConfig, FileTable, FsError, Permission, VirtualMap};
use crate::kernel::SimTime;
use crate::storage::Storage;
use crate::units::{Bytes, Nanos};
use crate::workload::{GraphError, Workload, WorkloadKind, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Baseline,
    Erudite,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Baseline => "baseline",
            PathKind::Erudite => "erudite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    Baseline,
    Erudite,
    Both,
}

impl PathChoice {
    pub fn paths(self) -> Vec<PathKind> {
        match self {
            PathChoice::Baseline => vec![PathKind::Baseline],
            PathChoice::Erudite => vec![PathKind::Erudite],
            PathChoice::Both => vec![PathKind::Baseline, PathKind::Erudite],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub id: u32,
    /// Allocated first-fit when `extents` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<Bytes>,
    /// Explicit placement in virtual blocks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extents: Vec<Extent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AclSpec {
    pub app: u32,
    pub file: u32,
    pub perm: Permission,
}

/// A bound a run must satisfy; `path` is omitted for cross-path metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub path: PathChoice,
    pub seed: u64,
    pub horizon: Nanos,
    /// Completions before this instant are excluded from rates.
    pub warmup: Nanos,
    /// Period of the in-flight timeline.
    pub sample_interval: Nanos,
    pub block_size: Bytes,
    pub ssd_count: u32,
    pub ssd: FlashSsdConfig,
    pub link: LinkConfig,
    pub switch: SwitchConfig,
    pub compute: ComputeConfig,
    pub baseline: HostCpuConfig,
    pub erudite: EruditeConfig,
    pub workload: WorkloadSpec,
    /// When empty, the workload's file is created to fit its footprint and
    /// the workload's app gets `rw` on it.
    pub files: Vec<FileSpec>,
    pub acl: Vec<AclSpec>,
    pub expect: Vec<Expectation>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            path: PathChoice::Erudite,
            seed: 1,
            horizon: Nanos(10_000_000),
            warmup: Nanos(1_000_000),
            sample_interval: Nanos(100_000),
            block_size: Bytes(512),
            ssd_count: 4,
            ssd: FlashSsdConfig::default(),
            link: LinkConfig::default(),
            switch: SwitchConfig::default(),
            compute: ComputeConfig::default(),
            baseline: HostCpuConfig::default(),
            erudite: EruditeConfig::default(),
            workload: WorkloadSpec::default(),
            files: Vec::new(),
            acl: Vec::new(),
            expect: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("files: {0}")]
    Fs(#[from] FsError),
    #[error("workload.graph: {0}")]
    Graph(#[from] GraphError),
}

impl ScenarioError {
    pub fn field(&self) -> &str {
        match self {
            ScenarioError::Invalid { field, .. } => field,
            ScenarioError::Fs(_) => "files",
            ScenarioError::Graph(_) => "workload.graph",
        }
    }
}

impl From<ConfigError> for ScenarioError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid { field, reason } => ScenarioError::Invalid {
                field: field.to_string(),
                reason,
            },
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl Scenario {
    pub fn horizon_time(&self) -> SimTime {
        SimTime(self.horizon.0)
    }

    pub fn warmup_time(&self) -> SimTime {
        SimTime(self.warmup.0)
    }

    /// Transfer granularity in bytes.
    pub fn granularity(&self) -> u64 {
        self.workload.granularity.map_or(self.block_size.0, |g| g.0)
    }

    pub fn blocks_per_ssd(&self) -> u64 {
        self.ssd.capacity.0 / self.block_size.0
    }

    pub fn virtual_map(&self) -> VirtualMap {
        VirtualMap::new(
            self.erudite.stripe_width,
            (0..self.ssd_count as u16).collect(),
            self.blocks_per_ssd(),
        )
    }

    /// Checks everything that can be checked without building the workload.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bs = self.block_size.0;
        if !bs.is_power_of_two() {
            return Err(bad("block_size", format!("{bs} is not a power of two")));
        }
        if self.ssd_count == 0 || self.ssd_count > u32::from(u16::MAX) {
            return Err(bad("ssd_count", "must be between 1 and 65535"));
        }
        self.ssd.validate(bs)?;
        if self.ssd.capacity.0 < bs * self.erudite.stripe_width.max(1) {
            return Err(bad("ssd.capacity", "smaller than one stripe"));
        }
        self.link.validate("link")?;
        self.switch.validate()?;
        self.compute.validate()?;
        self.baseline.validate(bs)?;
        self.erudite.validate()?;
        if self.sample_interval.0 == 0 {
            return Err(bad("sample_interval", "must be positive"));
        }

        let w = &self.workload;
        if w.request_useful_bytes.0 == 0 {
            return Err(bad("workload.request_useful_bytes", "must be at least 1 byte"));
        }
        let g = self.granularity();
        if !g.is_power_of_two() || !g.is_multiple_of(bs) {
            return Err(bad(
                "workload.granularity",
                format!("{g} must be a power of two and a multiple of the {bs}B block"),
            ));
        }
        let space = self.virtual_map().space_blocks() * bs;
        if w.footprint.0 > space {
            return Err(bad(
                "workload.footprint",
                format!("{} exceeds the {} virtual space", w.footprint, Bytes(space)),
            ));
        }
        match (w.threads, w.rate) {
            (None, None) => {
                return Err(bad("workload.threads", "set threads (closed loop) or rate (open loop)"))
            }
            (Some(0), _) => return Err(bad("workload.threads", "must be at least 1")),
            (_, Some(r)) if r.0 == 0 => return Err(bad("workload.rate", "must be positive")),
            _ => {}
        }
        if self.erudite.remote_threads > w.threads.unwrap_or(u32::MAX) {
            return Err(bad("erudite.remote_threads", "exceeds workload.threads"));
        }
        if self.erudite.remote_threads > 0 && self.switch.ports < 2 {
            return Err(bad(
                "erudite.remote_threads",
                format!("no route: remote queues need 2 switch ports, switch has {}", self.switch.ports),
            ));
        }
        if w.op == Opcode::Write && self.path != PathChoice::Erudite {
            return Err(bad("workload.op", "the baseline path models reads only"));
        }
        if w.kind == WorkloadKind::GraphBfs && w.graph.as_ref().is_some_and(|g| g.vertices == 0 && g.edge_list.is_none()) {
            return Err(bad("workload.graph.vertices", "must be at least 1"));
        }

        let mut ids = std::collections::BTreeSet::new();
        for f in &self.files {
            if !ids.insert(f.id) {
                return Err(bad("files", format!("file {} declared twice", f.id)));
            }
            if f.size.is_none() == f.extents.is_empty() {
                return Err(bad("files", format!("file {} needs exactly one of size or extents", f.id)));
            }
        }
        for a in &self.acl {
            if !ids.contains(&a.file) {
                return Err(bad("acl", format!("entry for app {} names unknown file {}", a.app, a.file)));
            }
        }
        if !self.files.is_empty() {
            if !ids.contains(&w.file) {
                return Err(bad("workload.file", format!("file {} is not declared", w.file)));
            }
            if !self.acl.iter().any(|a| a.app == w.app) {
                return Err(bad("workload.app", format!("app {} has no acl entry", w.app)));
            }
        }
        Ok(())
    }

    /// Materializes the workload (building or loading its graph).
    pub fn build_workload(&self) -> Result<Workload, ScenarioError> {
        Ok(Workload::new(self.workload.clone(), self.seed)?)
    }

    /// Builds the file table and virtual map. `footprint` sizes the implicit
    /// workload file when no files are declared.
    pub fn build_storage(&self, footprint: u64) -> Result<Storage, ScenarioError> {
        let bs = self.block_size.0;
        let vmap = self.virtual_map();
        let mut fs = FileTable::new(vmap.space_blocks());
        if self.files.is_empty() {
            let mut unit = self.granularity().max(bs);
            if self.baseline.mode == crate::baseline::BaselineMode::Pagefault {
                unit = unit.max(self.baseline.page_size.0);
            }
            let bytes = footprint.max(1).div_ceil(unit) * unit;
            fs.create_file(self.workload.file, bytes / bs)?;
            fs.set_acl(self.workload.app, self.workload.file, Permission::READ_WRITE)?;
        } else {
            for f in &self.files {
                if f.extents.is_empty() {
                    let size = f.size.map_or(0, |s| s.0);
                    fs.create_file(f.id, size.div_ceil(bs))?;
                } else {
                    fs.create_file_at(f.id, &f.extents)?;
                }
            }
            for a in &self.acl {
                fs.set_acl(a.app, a.file, a.perm)?;
            }
            let have = fs.file_blocks(self.workload.file).unwrap_or(0) * bs;
            let need = footprint.div_ceil(self.granularity()) * self.granularity();
            if have < need {
                return Err(bad(
                    "workload.footprint",
                    format!("needs {need} bytes but file {} holds {have}", self.workload.file),
                ));
            }
        }
        Ok(Storage {
            fs,
            vmap,
            block_size: bs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Scenario::default().validate().unwrap();
    }

    #[test]
    fn implicit_file_fits_footprint() {
        let s = Scenario::default();
        let st = s.build_storage(1 << 20).unwrap();
        assert_eq!(st.fs.file_blocks(1), Some(2048));
        assert_eq!(st.fs.permission(1, 1), Permission::READ_WRITE);
    }

    #[test]
    fn referential_integrity() {
        let mut s = Scenario {
            files: vec![FileSpec {
                id: 1,
                size: Some(Bytes(1 << 30)),
                extents: vec![],
            }],
            ..Scenario::default()
        };
        assert_eq!(s.validate().unwrap_err().field(), "workload.app");
        s.acl.push(AclSpec {
            app: 1,
            file: 2,
            perm: Permission::READ,
        });
        assert_eq!(s.validate().unwrap_err().field(), "acl");
        s.acl[0].file = 1;
        s.validate().unwrap();
    }

    #[test]
    fn remote_queues_need_a_route() {
        let s = Scenario {
            erudite: EruditeConfig {
                remote_threads: 1,
                ..EruditeConfig::default()
            },
            switch: SwitchConfig {
                ports: 1,
                ..SwitchConfig::default()
            },
            ..Scenario::default()
        };
        assert!(s.validate().unwrap_err().to_string().contains("no route"));
    }
}
