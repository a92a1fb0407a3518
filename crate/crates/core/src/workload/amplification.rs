use std::collections::{BTreeMap, HashMap};

use super::Access;

/// First aligned granule and granule count covering `[offset, offset + useful)`.
pub fn granule_span(offset: u64, useful: u64, granularity: u64) -> (u64, u64) {
    if useful == 0 {
        return (offset / granularity, 0);
    }
    let first = offset / granularity;
    let last = (offset + useful - 1) / granularity;
    (first, last - first + 1)
}

/// Bytes moved versus bytes consumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AmplificationLedger {
    pub bytes_fetched: u64,
    pub bytes_useful: u64,
}

impl AmplificationLedger {
    pub fn record(&mut self, fetched: u64, useful: u64) {
        self.bytes_fetched += fetched;
        self.bytes_useful += useful;
    }

    pub fn amplification(&self) -> f64 {
        if self.bytes_useful == 0 {
            return 1.0;
        }
        self.bytes_fetched as f64 / self.bytes_useful as f64
    }

    pub fn merge(&mut self, other: &AmplificationLedger) {
        self.bytes_fetched += other.bytes_fetched;
        self.bytes_useful += other.bytes_useful;
    }
}

/// LRU set of resident granules.
#[derive(Debug, Clone)]
pub struct GranuleCache {
    capacity: usize,
    stamp: u64,
    by_granule: HashMap<u64, u64>,
    by_stamp: BTreeMap<u64, u64>,
}

impl GranuleCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            stamp: 0,
            by_granule: HashMap::new(),
            by_stamp: BTreeMap::new(),
        }
    }

    /// Touches `granule`; returns true on a hit.
    pub fn touch(&mut self, granule: u64) -> bool {
        self.stamp += 1;
        let hit = match self.by_granule.insert(granule, self.stamp) {
            Some(old) => {
                self.by_stamp.remove(&old);
                true
            }
            None => false,
        };
        self.by_stamp.insert(self.stamp, granule);
        if self.by_granule.len() > self.capacity {
            if let Some((_, victim)) = self.by_stamp.pop_first() {
                self.by_granule.remove(&victim);
            }
        }
        hit
    }
}

/// Replays `accesses` at `granularity` and tallies fetched versus useful bytes.
///
/// Without a cache every request fetches each granule it touches; with one,
/// resident granules are not fetched again.
pub fn amplification<I>(
    accesses: I,
    granularity: u64,
    mut cache: Option<&mut GranuleCache>,
) -> AmplificationLedger
where
    I: IntoIterator<Item = Access>,
{
    let mut ledger = AmplificationLedger::default();
    for a in accesses {
        let (first, count) = granule_span(a.offset, a.useful, granularity);
        let fetched = match cache.as_deref_mut() {
            None => count * granularity,
            Some(c) => (first..first + count).filter(|g| !c.touch(*g)).count() as u64 * granularity,
        };
        ledger.record(fetched, a.useful);
    }
    ledger
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::Opcode;
    use crate::workload::AccessKind;

    fn acc(offset: u64, useful: u64) -> Access {
        Access {
            offset,
            useful,
            op: Opcode::Read,
            kind: AccessKind::Data,
        }
    }

    #[test]
    fn spans() {
        assert_eq!(granule_span(0, 64, 4096), (0, 1));
        assert_eq!(granule_span(4090, 10, 4096), (0, 2));
        assert_eq!(granule_span(8192, 4096, 4096), (2, 1));
    }

    #[test]
    fn small_reads_into_large_granules() {
        let l = amplification((0..100).map(|i| acc(i * 8192, 64)), 4096, None);
        assert_eq!(l.amplification(), 64.0);
        let exact = amplification((0..100).map(|i| acc(i * 512, 512)), 512, None);
        assert_eq!(exact.amplification(), 1.0);
    }

    #[test]
    fn cache_suppresses_refetch() {
        let stream = vec![acc(0, 64), acc(64, 64), acc(4096, 64), acc(0, 64)];
        let mut cache = GranuleCache::new(1);
        let l = amplification(stream.clone(), 4096, Some(&mut cache));
        // 0 miss, 0 hit, 1 miss (evicts 0), 0 miss
        assert_eq!(l.bytes_fetched, 3 * 4096);
        let mut big = GranuleCache::new(16);
        assert_eq!(amplification(stream, 4096, Some(&mut big)).bytes_fetched, 2 * 4096);
    }
}
