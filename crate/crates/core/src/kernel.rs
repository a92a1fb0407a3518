//! Deterministic discrete-event kernel.
//!
//! Virtual time is an integer count of nanoseconds. Events are ordered by
//! `(fire_at, sequence)` where the sequence number is assigned by the kernel
//! in scheduling order, so simultaneous events dispatch FIFO.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated nanoseconds since scenario start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn saturating_sub(self, other: SimTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, ns: u64) -> SimTime {
        SimTime(self.0 + ns)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, other: SimTime) -> u64 {
        self.0 - other.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Identifies the model component an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentId {
    HostCpu,
    Gpu,
    EcuThread(u32),
    QueuePair(u32),
    Controller(u16),
    Ssd(u16),
    Link(u16),
    Switch,
    Harness,
}

impl ComponentId {
    /// Coarse class name used for per-component event accounting.
    pub fn class(&self) -> &'static str {
        match self {
            ComponentId::HostCpu => "host_cpu",
            ComponentId::Gpu => "gpu",
            ComponentId::EcuThread(_) => "ecu_thread",
            ComponentId::QueuePair(_) => "queue_pair",
            ComponentId::Controller(_) => "controller",
            ComponentId::Ssd(_) => "ssd",
            ComponentId::Link(_) => "link",
            ComponentId::Switch => "switch",
            ComponentId::Harness => "harness",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub target: ComponentId,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<P> Eq for Event<P> {}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Event<P> {
    // Reversed so that BinaryHeap (a max-heap) pops the minimum key.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Pending events keyed by `(fire_at, sequence)`.
#[derive(Debug)]
pub struct EventQueue<P> {
    pending: BinaryHeap<Event<P>>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self {
            pending: BinaryHeap::new(),
        }
    }
}

impl<P> EventQueue<P> {
    pub fn push(&mut self, event: Event<P>) {
        self.pending.push(event);
    }

    pub fn pop(&mut self) -> Option<Event<P>> {
        self.pending.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.pending.peek().map(|e| e.fire_at)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// Payloads implement this so traces can label events without formatting them.
pub trait EventLabel {
    fn label(&self) -> &'static str;
}

/// One dispatched event as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub target: ComponentId,
    pub label: &'static str,
}

/// Why `run` returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// The queue drained before the horizon.
    QueueEmpty,
    /// The next pending event lies beyond the horizon.
    HorizonReached,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub stop: StopReason,
    pub clock: SimTime,
    pub dispatched: u64,
}

pub struct Kernel<P> {
    now: SimTime,
    next_sequence: u64,
    queue: EventQueue<P>,
    dispatched: u64,
    per_class: BTreeMap<&'static str, u64>,
    digest: DefaultHasher,
    trace: Option<Vec<TraceRecord>>,
}

impl<P: EventLabel> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: EventLabel> Kernel<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: EventQueue::default(),
            dispatched: 0,
            per_class: BTreeMap::new(),
            digest: DefaultHasher::new(),
            trace: None,
        }
    }

    /// Keep every dispatched event in memory (tests and audits).
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Enqueues `payload` for `target` at absolute time `at`. Returns the assigned sequence.
    pub fn schedule(
        &mut self,
        at: SimTime,
        target: ComponentId,
        payload: P,
    ) -> Result<u64, KernelError> {
        if at < self.now {
            return Err(KernelError::SchedulingInPast { at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Event {
            fire_at: at,
            sequence,
            target,
            payload,
        });
        Ok(sequence)
    }

    /// Schedules relative to the current clock; never fails.
    pub fn schedule_in(&mut self, delay_ns: u64, target: ComponentId, payload: P) -> u64 {
        let at = self.now + delay_ns;
        self.schedule(at, target, payload)
            .expect("relative scheduling cannot be in the past")
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Pops the next event if it fires at or before `until`, advancing the clock.
    pub fn next_event(&mut self, until: SimTime) -> Option<Event<P>> {
        match self.queue.peek_time() {
            Some(t) if t <= until => {}
            _ => return None,
        }
        let event = self.queue.pop()?;
        debug_assert!(event.fire_at >= self.now);
        self.now = event.fire_at;
        self.record(&event);
        Some(event)
    }

    /// Dispatches all events with `fire_at <= until` in order.
    pub fn run<F>(&mut self, until: SimTime, mut handler: F) -> RunSummary
    where
        F: FnMut(&mut Kernel<P>, Event<P>),
    {
        while let Some(event) = self.next_event(until) {
            handler(self, event);
        }
        self.summary(until)
    }

    /// Describes where the last `run` stopped relative to `until`.
    pub fn summary(&self, until: SimTime) -> RunSummary {
        let stop = if self.queue.is_empty() {
            StopReason::QueueEmpty
        } else {
            StopReason::HorizonReached
        };
        RunSummary {
            stop,
            clock: self.now.min(until),
            dispatched: self.dispatched,
        }
    }

    fn record(&mut self, event: &Event<P>) {
        self.dispatched += 1;
        *self.per_class.entry(event.target.class()).or_default() += 1;
        let label = event.payload.label();
        (event.fire_at, event.sequence, event.target, label).hash(&mut self.digest);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                fire_at: event.fire_at,
                sequence: event.sequence,
                target: event.target,
                label,
            });
        }
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Events dispatched per component class.
    pub fn events_by_class(&self) -> &BTreeMap<&'static str, u64> {
        &self.per_class
    }

    pub fn events_for(&self, class: &str) -> u64 {
        self.per_class.get(class).copied().unwrap_or(0)
    }

    /// Order-sensitive digest over every dispatched `(fire_at, sequence, target, label)`.
    pub fn trace_digest(&self) -> u64 {
        self.digest.finish()
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }
}

/// Derives independent per-component RNG streams from one scenario seed.
///
/// Each stream depends only on the scenario seed and the component's name, so
/// adding a component never perturbs the draws of another.
#[derive(Debug, Clone, Copy)]
pub struct SeedSplitter {
    seed: u64,
}

impl SeedSplitter {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn sub_seed(&self, component: &str) -> u64 {
        // FNV-1a over the name, mixed with the scenario seed through splitmix64.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in component.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        splitmix64(self.seed ^ h)
    }

    pub fn stream(&self, component: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.sub_seed(component))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A single FIFO server whose busy horizon is tracked in picoseconds.
///
/// Requests must be offered in non-decreasing arrival order (which holds when
/// they are offered from event handlers), making the schedule FIFO and
/// work-conserving: the server idles only when nothing has arrived.
#[derive(Debug, Clone, Default)]
pub struct FifoServer {
    busy_until_ps: u64,
    busy_total_ps: u64,
    served: u64,
}

impl FifoServer {
    /// Serves a job arriving at `now` for `duration_ps`; returns its finish time in ps.
    pub fn serve(&mut self, now: SimTime, duration_ps: u64) -> u64 {
        let arrival = now.as_ns() * 1_000;
        let start = arrival.max(self.busy_until_ps);
        self.busy_until_ps = start + duration_ps;
        self.busy_total_ps += duration_ps;
        self.served += 1;
        self.busy_until_ps
    }

    /// Time the server becomes idle, in ps.
    pub fn busy_until_ps(&self) -> u64 {
        self.busy_until_ps
    }

    pub fn busy_total_ps(&self) -> u64 {
        self.busy_total_ps
    }

    pub fn served(&self) -> u64 {
        self.served
    }
}

/// Rounds picoseconds up to the next whole nanosecond.
pub fn ps_to_time(ps: u64) -> SimTime {
    SimTime(ps.div_ceil(1_000))
}

/// Transfer time of `bytes` at `bandwidth` bytes/second, in picoseconds (rounded up).
pub fn transfer_ps(bytes: u64, bandwidth: u64) -> u64 {
    if bytes == 0 {
        return 0;
    }
    let num = u128::from(bytes) * 1_000_000_000_000u128;
    num.div_ceil(u128::from(bandwidth)) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Tick(u32);

    impl EventLabel for Tick {
        fn label(&self) -> &'static str {
            "tick"
        }
    }

    fn drain(kernel: &mut Kernel<Tick>, until: SimTime) -> Vec<(u64, u64, u32)> {
        let mut out = Vec::new();
        kernel.run(until, |_, e| out.push((e.fire_at.0, e.sequence, e.payload.0)));
        out
    }

    #[test]
    fn zero_delay_dispatches_before_later_events() {
        let mut k = Kernel::new();
        k.schedule(SimTime(5), ComponentId::Harness, Tick(1)).unwrap();
        k.schedule(SimTime(0), ComponentId::Harness, Tick(0)).unwrap();
        let order: Vec<u32> = drain(&mut k, SimTime::MAX).into_iter().map(|x| x.2).collect();
        assert_eq!(order, vec![0, 1]);
    }

    #[test]
    fn ties_dispatch_in_schedule_order() {
        let mut k = Kernel::new();
        k.schedule(SimTime(10), ComponentId::Harness, Tick(0)).unwrap();
        k.schedule(SimTime(10), ComponentId::Harness, Tick(1)).unwrap();
        k.schedule(SimTime(20), ComponentId::Harness, Tick(2)).unwrap();
        let got = drain(&mut k, SimTime::MAX);
        assert_eq!(got, vec![(10, 0, 0), (10, 1, 1), (20, 2, 2)]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut k = Kernel::new();
        k.schedule(SimTime(10), ComponentId::Harness, Tick(0)).unwrap();
        drain(&mut k, SimTime::MAX);
        assert_eq!(k.now(), SimTime(10));
        let err = k.schedule(SimTime(9), ComponentId::Harness, Tick(1)).unwrap_err();
        assert_eq!(
            err,
            KernelError::SchedulingInPast {
                at: SimTime(9),
                now: SimTime(10)
            }
        );
    }

    #[test]
    fn empty_queue_terminates_at_zero() {
        let mut k: Kernel<Tick> = Kernel::new();
        let summary = k.run(SimTime::from_ms(1), |_, _| unreachable!());
        assert_eq!(summary.stop, StopReason::QueueEmpty);
        assert_eq!(summary.clock, SimTime::ZERO);
        assert_eq!(summary.dispatched, 0);
    }

    #[test]
    fn horizon_stops_dispatch_and_bounds_clock() {
        let mut k = Kernel::new();
        k.schedule(SimTime(10), ComponentId::Harness, Tick(0)).unwrap();
        k.schedule(SimTime(30), ComponentId::Harness, Tick(1)).unwrap();
        let summary = k.run(SimTime(20), |_, _| {});
        assert_eq!(summary.stop, StopReason::HorizonReached);
        assert_eq!(summary.dispatched, 1);
        assert!(summary.clock <= SimTime(20));
    }

    #[test]
    fn handlers_can_schedule_follow_ups_and_digest_is_reproducible() {
        fn build() -> Kernel<Tick> {
            let mut k = Kernel::new().with_trace();
            k.schedule(SimTime(0), ComponentId::Harness, Tick(0)).unwrap();
            k.run(SimTime(1_000), |k, e| {
                if e.payload.0 < 50 {
                    k.schedule_in(7, ComponentId::Ssd(0), Tick(e.payload.0 + 1));
                    k.schedule_in(7, ComponentId::Link(0), Tick(e.payload.0 + 100));
                }
            });
            k
        }
        let a = build();
        let b = build();
        assert_eq!(a.trace_digest(), b.trace_digest());
        assert_eq!(a.trace().unwrap(), b.trace().unwrap());
        // Causality: clock never exceeds an event's own timestamp at dispatch.
        let trace = a.trace().unwrap();
        assert!(trace.windows(2).all(|w| (w[0].fire_at, w[0].sequence) < (w[1].fire_at, w[1].sequence)));
        assert_eq!(a.events_for("ssd"), 50);
    }

    #[test]
    fn seed_splitter_streams_are_independent_of_other_components() {
        use rand::Rng;
        let s = SeedSplitter::new(42);
        let a: u64 = s.stream("workload").gen();
        let b: u64 = SeedSplitter::new(42).stream("workload").gen();
        let c: u64 = s.stream("graph").gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fifo_server_queues_back_to_back() {
        let mut s = FifoServer::default();
        assert_eq!(s.serve(SimTime(0), 32_000), 32_000);
        assert_eq!(s.serve(SimTime(0), 32_000), 64_000);
        assert_eq!(s.serve(SimTime(100), 1_000), 101_000);
    }

    #[test]
    fn transfer_time_is_exact_for_decimal_units() {
        assert_eq!(transfer_ps(512, 16_000_000_000), 32_000);
        assert_eq!(transfer_ps(528, 16_000_000_000), 33_000);
        assert_eq!(transfer_ps(0, 1), 0);
    }
}
