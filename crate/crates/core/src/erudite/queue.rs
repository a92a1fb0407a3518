//! NVMe submission/completion queue pairs living in HBM.

use thiserror::Error;

use crate::device::Opcode;
use crate::kernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NvmeCommand {
    pub opcode: Opcode,
    pub app_id: u32,
    pub queue_id: u32,
    pub tag: u32,
    pub virtual_lba: u64,
    /// Bytes; a whole number of blocks.
    pub length: u64,
    /// HBM buffer the data lands in (opaque).
    pub dest_buffer: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompletionStatus {
    Success,
    PermissionDenied,
    InvalidLba,
    DeviceError,
}

impl CompletionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CompletionStatus::Success => "success",
            CompletionStatus::PermissionDenied => "permission_denied",
            CompletionStatus::InvalidLba => "invalid_lba",
            CompletionStatus::DeviceError => "device_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NvmeCompletion {
    pub tag: u32,
    pub status: CompletionStatus,
    pub completed_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueueError {
    #[error("queue {queue} is full (depth {depth})")]
    QueueFull { queue: u32, depth: u32 },
    #[error("command length {length} is not a positive multiple of the {block_size}B block")]
    BadLength { length: u64, block_size: u64 },
}

/// A submission ring and a completion ring sharing one tag space.
#[derive(Debug, Clone)]
pub struct QueuePair {
    id: u32,
    depth: u32,
    owner_epu: u32,
    sq: Vec<Option<NvmeCommand>>,
    sq_head: u64,
    sq_tail: u64,
    doorbell: u64,
    /// Completions indexed by tag; a tag is reaped by the thread that holds it.
    cq: Vec<Option<NvmeCompletion>>,
    cq_posted: u64,
    cq_reaped: u64,
    free_tags: Vec<u32>,
}

impl QueuePair {
    pub fn new(id: u32, depth: u32, owner_epu: u32) -> Self {
        assert!(depth > 0);
        Self {
            id,
            depth,
            owner_epu,
            sq: vec![None; depth as usize],
            sq_head: 0,
            sq_tail: 0,
            doorbell: 0,
            cq: vec![None; depth as usize],
            cq_posted: 0,
            cq_reaped: 0,
            free_tags: (0..depth).rev().collect(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn owner_epu(&self) -> u32 {
        self.owner_epu
    }

    /// Commands holding a tag (submitted and not yet reaped).
    pub fn in_flight(&self) -> u32 {
        self.depth - self.free_tags.len() as u32
    }

    pub fn sq_occupancy(&self) -> u64 {
        self.sq_tail - self.sq_head
    }

    pub fn doorbell(&self) -> u64 {
        self.doorbell
    }

    pub fn tail(&self) -> u64 {
        self.sq_tail
    }

    /// Writes a command into the ring, assigning it a free tag.
    pub fn enqueue(
        &mut self,
        mut cmd: NvmeCommand,
        block_size: u64,
    ) -> Result<NvmeCommand, QueueError> {
        if cmd.length == 0 || !cmd.length.is_multiple_of(block_size) {
            return Err(QueueError::BadLength {
                length: cmd.length,
                block_size,
            });
        }
        if self.sq_occupancy() == u64::from(self.depth) {
            return Err(self.full());
        }
        let tag = self.free_tags.pop().ok_or_else(|| self.full())?;
        cmd.tag = tag;
        cmd.queue_id = self.id;
        let slot = (self.sq_tail % u64::from(self.depth)) as usize;
        self.sq[slot] = Some(cmd);
        self.sq_tail += 1;
        Ok(cmd)
    }

    fn full(&self) -> QueueError {
        QueueError::QueueFull {
            queue: self.id,
            depth: self.depth,
        }
    }

    /// Publishes the tail; returns how many commands the ring announces.
    pub fn ring_doorbell(&mut self) -> u64 {
        let fresh = self.sq_tail - self.doorbell;
        self.doorbell = self.sq_tail;
        fresh
    }

    /// Controller side: consumes the next announced command.
    pub fn fetch(&mut self) -> Option<NvmeCommand> {
        if self.sq_head == self.doorbell {
            return None;
        }
        let slot = (self.sq_head % u64::from(self.depth)) as usize;
        self.sq_head += 1;
        self.sq[slot].take()
    }

    pub fn post(&mut self, completion: NvmeCompletion) {
        let slot = &mut self.cq[completion.tag as usize];
        debug_assert!(slot.is_none(), "second completion for one tag");
        *slot = Some(completion);
        self.cq_posted += 1;
    }

    /// Thread side: takes the completion for `tag` and frees the tag.
    pub fn reap(&mut self, tag: u32) -> Option<NvmeCompletion> {
        let c = self.cq.get_mut(tag as usize)?.take()?;
        self.cq_reaped += 1;
        self.free_tags.push(tag);
        Some(c)
    }

    pub fn completions_posted(&self) -> u64 {
        self.cq_posted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(vlba: u64) -> NvmeCommand {
        NvmeCommand {
            opcode: Opcode::Read,
            app_id: 1,
            queue_id: 0,
            tag: 0,
            virtual_lba: vlba,
            length: 512,
            dest_buffer: 0,
        }
    }

    #[test]
    fn full_queue_admits_exactly_depth() {
        let mut q = QueuePair::new(0, 8, 0);
        let ok = (0..20).filter(|&i| q.enqueue(cmd(i), 512).is_ok()).count();
        assert_eq!(ok, 8);
        assert_eq!(q.in_flight(), 8);
    }

    #[test]
    fn zero_length_is_rejected() {
        let mut q = QueuePair::new(0, 8, 0);
        let mut c = cmd(0);
        c.length = 0;
        assert!(matches!(q.enqueue(c, 512), Err(QueueError::BadLength { .. })));
    }

    #[test]
    fn ring_indices_wrap_and_doorbell_advances_by_new_entries() {
        let mut q = QueuePair::new(3, 4, 0);
        for round in 0..5u64 {
            let tags: Vec<u32> = (0..3).map(|i| q.enqueue(cmd(round * 3 + i), 512).unwrap().tag).collect();
            assert_eq!(q.ring_doorbell(), 3);
            assert_eq!(q.doorbell(), (round + 1) * 3);
            for i in 0..3 {
                assert_eq!(q.fetch().unwrap().virtual_lba, round * 3 + i);
            }
            assert!(q.fetch().is_none());
            for &t in &tags {
                q.post(NvmeCompletion {
                    tag: t,
                    status: CompletionStatus::Success,
                    completed_at: SimTime::ZERO,
                });
            }
            // Each thread reaps only its own tag.
            for &t in tags.iter().rev() {
                assert_eq!(q.reap(t).unwrap().tag, t);
            }
            assert_eq!(q.in_flight(), 0);
        }
        assert!(q.reap(0).is_none());
    }
}
