//! Striping of the controller's virtual block space over its SSDs.

/// Stripe `s` (of `stripe_width` blocks) lives on SSD `s mod n`, at physical
/// stripe `s / n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualMap {
    stripe_width: u64,
    backing: Vec<u16>,
    blocks_per_ssd: u64,
}

/// A contiguous physical range on one backing SSD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhysRange {
    /// Index into the backing list.
    pub slot: usize,
    pub plba: u64,
    pub blocks: u64,
}

impl VirtualMap {
    /// `blocks_per_ssd` is rounded down to whole stripes.
    pub fn new(stripe_width: u64, backing: Vec<u16>, blocks_per_ssd: u64) -> Self {
        assert!(stripe_width > 0 && !backing.is_empty());
        Self {
            stripe_width,
            blocks_per_ssd: blocks_per_ssd / stripe_width * stripe_width,
            backing,
        }
    }

    pub fn stripe_width(&self) -> u64 {
        self.stripe_width
    }

    pub fn backing(&self) -> &[u16] {
        &self.backing
    }

    pub fn space_blocks(&self) -> u64 {
        self.blocks_per_ssd * self.backing.len() as u64
    }

    /// `(slot, physical block)` for virtual block `vlba`.
    pub fn map(&self, vlba: u64) -> (usize, u64) {
        let n = self.backing.len() as u64;
        let stripe = vlba / self.stripe_width;
        let slot = (stripe % n) as usize;
        let plba = (stripe / n) * self.stripe_width + vlba % self.stripe_width;
        (slot, plba)
    }

    pub fn inverse(&self, slot: usize, plba: u64) -> u64 {
        let n = self.backing.len() as u64;
        let pstripe = plba / self.stripe_width;
        (pstripe * n + slot as u64) * self.stripe_width + plba % self.stripe_width
    }

    /// Splits a virtual range at stripe boundaries and coalesces pieces that
    /// are physically contiguous on the same SSD. Output is ordered by slot.
    pub fn split(&self, vlba: u64, blocks: u64) -> Vec<PhysRange> {
        let mut per_slot: Vec<Option<PhysRange>> = vec![None; self.backing.len()];
        let mut out = Vec::new();
        let mut at = vlba;
        let end = vlba + blocks;
        while at < end {
            let take = (self.stripe_width - at % self.stripe_width).min(end - at);
            let (slot, plba) = self.map(at);
            match &mut per_slot[slot] {
                Some(r) if r.plba + r.blocks == plba => r.blocks += take,
                cur => {
                    if let Some(done) = cur.take() {
                        out.push(done);
                    }
                    *cur = Some(PhysRange {
                        slot,
                        plba,
                        blocks: take,
                    });
                }
            }
            at += take;
        }
        out.extend(per_slot.into_iter().flatten());
        out.sort_by_key(|r| (r.slot, r.plba));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spanning_read_splits_across_two_ssds() {
        let m = VirtualMap::new(2, vec![0, 1], 1 << 20);
        let parts = m.split(0, 4);
        assert_eq!(
            parts,
            vec![
                PhysRange { slot: 0, plba: 0, blocks: 2 },
                PhysRange { slot: 1, plba: 0, blocks: 2 }
            ]
        );
    }

    #[test]
    fn long_ranges_coalesce_per_ssd() {
        let m = VirtualMap::new(4, vec![0, 1, 2, 3], 1 << 20);
        let parts = m.split(0, 2048);
        assert_eq!(parts.len(), 4);
        assert!(parts.iter().all(|p| p.blocks == 512 && p.plba == 0));
    }

    proptest! {
        #[test]
        fn mapping_is_a_bijection(sw in 1u64..16, n in 1usize..9, v in 0u64..100_000) {
            let m = VirtualMap::new(sw, (0..n as u16).collect(), 1 << 20);
            let (slot, plba) = m.map(v);
            prop_assert!(plba < 1 << 20);
            prop_assert_eq!(m.inverse(slot, plba), v);
        }

        #[test]
        fn split_covers_exactly_the_range(sw in 1u64..16, n in 1usize..6, v in 0u64..10_000, len in 1u64..200) {
            let m = VirtualMap::new(sw, (0..n as u16).collect(), 1 << 20);
            let m = &m;
            let mut covered: Vec<u64> = m
                .split(v, len)
                .iter()
                .flat_map(|r| (0..r.blocks).map(move |i| m.inverse(r.slot, r.plba + i)))
                .collect();
            covered.sort_unstable();
            prop_assert_eq!(covered, (v..v + len).collect::<Vec<_>>());
        }
    }
}
