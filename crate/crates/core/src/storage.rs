//! What both access paths share: the virtualized SSD array, its file table,
//! and the translation of workload accesses into block-level requests.

use crate::device::Opcode;
use crate::erudite::{Extent, FileTable, VirtualMap};
use crate::workload::{granule_span, AccessStream, GranuleCache};

/// A contiguous range of virtual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub vlba: u64,
    pub blocks: u64,
}

/// One application-level request after granule expansion and file mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IoRequest {
    pub app: u32,
    pub file: u32,
    pub op: Opcode,
    pub useful: u64,
    /// Empty when every granule was already cached.
    pub segments: Vec<Segment>,
}

impl IoRequest {
    pub fn blocks(&self) -> u64 {
        self.segments.iter().map(|s| s.blocks).sum()
    }
}

pub trait RequestSource {
    fn next_request(&mut self) -> Option<IoRequest>;
}

impl<I: Iterator<Item = IoRequest>> RequestSource for I {
    fn next_request(&mut self) -> Option<IoRequest> {
        self.next()
    }
}

#[derive(Debug, Clone)]
pub struct Storage {
    pub fs: FileTable,
    pub vmap: VirtualMap,
    pub block_size: u64,
}

impl Storage {
    /// Virtual range of an SSD-level access, for security audits.
    pub fn virtual_range(&self, slot: usize, plba: u64, blocks: u64) -> impl Iterator<Item = u64> + '_ {
        (0..blocks).map(move |i| self.vmap.inverse(slot, plba + i))
    }
}

/// A device-level access, logged for auditing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsdAccess {
    pub app: u32,
    pub op: Opcode,
    pub slot: usize,
    pub plba: u64,
    pub blocks: u64,
}

/// SSD accesses whose blocks the issuing app had no right to touch.
pub fn audit(storage: &Storage, log: &[SsdAccess]) -> Vec<SsdAccess> {
    log.iter()
        .copied()
        .filter(|a| {
            storage
                .virtual_range(a.slot, a.plba, a.blocks)
                .any(|v| match storage.fs.owner(v) {
                    Some(f) => !storage.fs.permission(a.app, f).allows(a.op),
                    None => true,
                })
        })
        .collect()
}

/// Expands a workload stream into granule-aligned block requests on one file.
pub struct RequestPlanner {
    stream: AccessStream,
    app: u32,
    file: u32,
    extents: Vec<Extent>,
    granularity: u64,
    block_size: u64,
    /// First block past the virtual space; used for unmappable ranges.
    beyond: u64,
    cache: Option<GranuleCache>,
}

impl RequestPlanner {
    pub fn new(
        stream: AccessStream,
        storage: &Storage,
        app: u32,
        file: u32,
        granularity: u64,
        cache_granules: u64,
    ) -> Self {
        assert!(granularity.is_multiple_of(storage.block_size));
        Self {
            stream,
            app,
            file,
            extents: storage.fs.extents(file).map(<[Extent]>::to_vec).unwrap_or_default(),
            granularity,
            block_size: storage.block_size,
            beyond: storage.vmap.space_blocks(),
            cache: (cache_granules > 0).then(|| GranuleCache::new(cache_granules as usize)),
        }
    }

    fn map_blocks(&self, first: u64, blocks: u64, out: &mut Vec<Segment>) {
        match translate_extents(&self.extents, first, blocks) {
            Some(parts) => out.extend(parts.into_iter().map(|(vlba, blocks)| Segment { vlba, blocks })),
            None => out.push(Segment {
                vlba: self.beyond,
                blocks,
            }),
        }
    }
}

impl RequestSource for RequestPlanner {
    fn next_request(&mut self) -> Option<IoRequest> {
        let access = self.stream.next()?;
        let g = self.granularity;
        let per_granule = g / self.block_size;
        let (first, count) = granule_span(access.offset, access.useful, g);
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for granule in first..first + count {
            let hit = self.cache.as_mut().is_some_and(|c| c.touch(granule));
            if hit {
                continue;
            }
            match runs.last_mut() {
                Some((start, len)) if *start + *len == granule => *len += 1,
                _ => runs.push((granule, 1)),
            }
        }
        let mut segments = Vec::new();
        for (start, len) in runs {
            self.map_blocks(start * per_granule, len * per_granule, &mut segments);
        }
        Some(IoRequest {
            app: self.app,
            file: self.file,
            op: access.op,
            useful: access.useful,
            segments,
        })
    }
}

/// File-relative blocks onto virtual ranges through an extent list.
pub fn translate_extents(extents: &[Extent], first: u64, blocks: u64) -> Option<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    let mut skip = first;
    let mut need = blocks;
    for e in extents {
        if need == 0 {
            break;
        }
        if skip >= e.blocks {
            skip -= e.blocks;
            continue;
        }
        let take = need.min(e.blocks - skip);
        match out.last_mut() {
            Some((v, n)) if *v + *n == e.start + skip => *n += take,
            _ => out.push((e.start + skip, take)),
        }
        need -= take;
        skip = 0;
    }
    (need == 0).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::Bytes;
    use crate::workload::{amplification, Workload, WorkloadKind, WorkloadSpec};

    fn storage() -> Storage {
        let vmap = VirtualMap::new(4, vec![0, 1, 2, 3], 1 << 20);
        let mut fs = FileTable::new(vmap.space_blocks());
        fs.create_file(1, 1 << 16).unwrap();
        Storage {
            fs,
            vmap,
            block_size: 512,
        }
    }

    #[test]
    fn planner_fetch_matches_granule_oracle() {
        let s = storage();
        for (g, cache) in [(512, 0), (4096, 0), (4096, 8)] {
            let spec = WorkloadSpec {
                kind: WorkloadKind::UniformRandom,
                request_useful_bytes: Bytes(100),
                footprint: Bytes(1 << 24),
                aligned: false,
                max_requests: Some(2_000),
                ..WorkloadSpec::default()
            };
            let w = Workload::new(spec, 4).unwrap();
            let mut p = RequestPlanner::new(w.stream(), &s, 1, 1, g, cache);
            let mut fetched = 0;
            while let Some(r) = p.next_request() {
                fetched += r.blocks() * 512;
            }
            let mut oracle_cache = (cache > 0).then(|| GranuleCache::new(cache as usize));
            let oracle = amplification(w.stream(), g, oracle_cache.as_mut());
            assert_eq!(fetched, oracle.bytes_fetched, "g={g} cache={cache}");
        }
    }

    #[test]
    fn audit_flags_foreign_blocks() {
        let mut s = storage();
        s.fs.set_acl(7, 1, crate::erudite::Permission::READ).unwrap();
        let ok = SsdAccess {
            app: 7,
            op: Opcode::Read,
            slot: 1,
            plba: 0,
            blocks: 4,
        };
        let bad = SsdAccess { app: 8, ..ok };
        let unowned = SsdAccess {
            plba: 1 << 19,
            ..ok
        };
        assert_eq!(audit(&s, &[ok, bad, unowned]), vec![bad, unowned]);
    }

    #[test]
    fn translate_merges_adjacent_extents() {
        let extents = [Extent { start: 0, blocks: 4 }, Extent { start: 4, blocks: 4 }];
        assert_eq!(translate_extents(&extents, 2, 4), Some(vec![(2, 4)]));
    }
}
