//! Extent-based file table with per-file access control.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::device::Opcode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Extent {
    /// First virtual block.
    pub start: u64,
    pub blocks: u64,
}

impl Extent {
    pub fn end(&self) -> u64 {
        self.start + self.blocks
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Permission {
    pub read: bool,
    pub write: bool,
}

impl Permission {
    pub const NONE: Permission = Permission {
        read: false,
        write: false,
    };
    pub const READ: Permission = Permission {
        read: true,
        write: false,
    };
    pub const WRITE: Permission = Permission {
        read: false,
        write: true,
    };
    pub const READ_WRITE: Permission = Permission {
        read: true,
        write: true,
    };

    pub fn allows(self, op: Opcode) -> bool {
        match op {
            Opcode::Read => self.read,
            Opcode::Write => self.write,
        }
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match (self.read, self.write) {
            (true, true) => "rw",
            (true, false) => "r",
            (false, true) => "w",
            (false, false) => "-",
        };
        f.write_str(s)
    }
}

impl FromStr for Permission {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rw" | "wr" => Ok(Self::READ_WRITE),
            "r" => Ok(Self::READ),
            "w" => Ok(Self::WRITE),
            "-" | "" => Ok(Self::NONE),
            other => Err(format!("permission {other:?} is not one of r, w, rw, -")),
        }
    }
}

impl Serialize for Permission {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Permission {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsError {
    #[error("extent {start}+{blocks} of file {file} overlaps an existing extent or leaves the virtual space")]
    ExtentOverlap { file: u32, start: u64, blocks: u64 },
    #[error("unknown file {0}")]
    UnknownFile(u32),
    #[error("file {0} already exists")]
    DuplicateFile(u32),
    #[error("no space for {blocks} more blocks")]
    NoSpace { blocks: u64 },
}

/// Why the controller refuses a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Denial {
    /// Some block lies outside every extent.
    InvalidLba,
    PermissionDenied,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileTable {
    space_blocks: u64,
    files: BTreeMap<u32, Vec<Extent>>,
    /// Extent start -> (end, owning file).
    index: BTreeMap<u64, (u64, u32)>,
    acl: BTreeMap<(u32, u32), Permission>,
}

impl FileTable {
    pub fn new(space_blocks: u64) -> Self {
        Self {
            space_blocks,
            ..Self::default()
        }
    }

    pub fn space_blocks(&self) -> u64 {
        self.space_blocks
    }

    /// Allocates `blocks` first-fit, possibly as several extents.
    pub fn create_file(&mut self, file: u32, blocks: u64) -> Result<&[Extent], FsError> {
        if self.files.contains_key(&file) {
            return Err(FsError::DuplicateFile(file));
        }
        let mut extents = Vec::new();
        let mut need = blocks;
        let mut cursor = 0;
        for (&start, &(end, _)) in &self.index {
            if need == 0 {
                break;
            }
            if start > cursor {
                let take = need.min(start - cursor);
                extents.push(Extent {
                    start: cursor,
                    blocks: take,
                });
                need -= take;
            }
            cursor = cursor.max(end);
        }
        if need > 0 && cursor < self.space_blocks {
            let take = need.min(self.space_blocks - cursor);
            extents.push(Extent {
                start: cursor,
                blocks: take,
            });
            need -= take;
        }
        if need > 0 {
            return Err(FsError::NoSpace { blocks: need });
        }
        self.insert(file, extents);
        Ok(&self.files[&file])
    }

    /// Places a file at explicit extents.
    pub fn create_file_at(&mut self, file: u32, extents: &[Extent]) -> Result<(), FsError> {
        if self.files.contains_key(&file) {
            return Err(FsError::DuplicateFile(file));
        }
        let mut sorted = extents.to_vec();
        sorted.sort();
        for (i, e) in sorted.iter().enumerate() {
            let clash = e.blocks == 0
                || e.end() > self.space_blocks
                || self.overlaps(*e)
                || sorted[..i].last().is_some_and(|p| p.end() > e.start);
            if clash {
                return Err(FsError::ExtentOverlap {
                    file,
                    start: e.start,
                    blocks: e.blocks,
                });
            }
        }
        self.insert(file, sorted);
        Ok(())
    }

    fn overlaps(&self, e: Extent) -> bool {
        self.index
            .range(..e.end())
            .next_back()
            .is_some_and(|(_, &(end, _))| end > e.start)
    }

    fn insert(&mut self, file: u32, extents: Vec<Extent>) {
        for e in &extents {
            self.index.insert(e.start, (e.end(), file));
        }
        self.files.insert(file, extents);
    }

    pub fn delete_file(&mut self, file: u32) -> Result<(), FsError> {
        let extents = self.files.remove(&file).ok_or(FsError::UnknownFile(file))?;
        for e in extents {
            self.index.remove(&e.start);
        }
        self.acl.retain(|&(_, f), _| f != file);
        Ok(())
    }

    pub fn set_acl(&mut self, app: u32, file: u32, perm: Permission) -> Result<(), FsError> {
        if !self.files.contains_key(&file) {
            return Err(FsError::UnknownFile(file));
        }
        self.acl.insert((app, file), perm);
        Ok(())
    }

    pub fn permission(&self, app: u32, file: u32) -> Permission {
        self.acl.get(&(app, file)).copied().unwrap_or(Permission::NONE)
    }

    pub fn extents(&self, file: u32) -> Option<&[Extent]> {
        self.files.get(&file).map(Vec::as_slice)
    }

    pub fn file_blocks(&self, file: u32) -> Option<u64> {
        self.extents(file).map(|es| es.iter().map(|e| e.blocks).sum())
    }

    pub fn files(&self) -> impl Iterator<Item = (u32, &[Extent])> {
        self.files.iter().map(|(&f, e)| (f, e.as_slice()))
    }

    pub fn acl_entries(&self) -> impl Iterator<Item = ((u32, u32), Permission)> + '_ {
        self.acl.iter().map(|(&k, &p)| (k, p))
    }

    /// File owning virtual block `vlba`, if any.
    pub fn owner(&self, vlba: u64) -> Option<u32> {
        self.index
            .range(..=vlba)
            .next_back()
            .and_then(|(_, &(end, f))| (vlba < end).then_some(f))
    }

    /// Files covering `[vlba, vlba + blocks)`, or `None` if any block is unowned.
    pub fn owners(&self, vlba: u64, blocks: u64) -> Option<Vec<u32>> {
        let end = vlba.checked_add(blocks)?;
        let mut files = Vec::new();
        let mut at = vlba;
        while at < end {
            let (_, &(ext_end, f)) = self.index.range(..=at).next_back()?;
            if at >= ext_end {
                return None;
            }
            if !files.contains(&f) {
                files.push(f);
            }
            at = ext_end;
        }
        Some(files)
    }

    /// The controller's check: every block must belong to some file, and the
    /// app must hold the opcode's permission on each file touched.
    pub fn check(&self, app: u32, op: Opcode, vlba: u64, blocks: u64) -> Result<(), Denial> {
        if blocks == 0 {
            return Err(Denial::InvalidLba);
        }
        let files = self.owners(vlba, blocks).ok_or(Denial::InvalidLba)?;
        if files.iter().all(|&f| self.permission(app, f).allows(op)) {
            Ok(())
        } else {
            Err(Denial::PermissionDenied)
        }
    }

    /// Maps file-relative blocks `[first, first + blocks)` onto virtual
    /// ranges, splitting at extent boundaries.
    pub fn translate(&self, file: u32, first: u64, blocks: u64) -> Option<Vec<(u64, u64)>> {
        crate::storage::translate_extents(self.files.get(&file)?, first, blocks)
    }
}
