//! The CPU-centric access flow: every request is initiated by the host CPU,
//! read into a pinned host buffer, then copied to GPU memory.
//!
//! Steps per request: open-time permission check, syscall + file-system
//! translation + driver, SSD access, DMA into the host buffer, host-to-GPU
//! copy, GPU access. The CPU initiates requests one at a time at
//! `initiation_rate`; the software overheads after initiation overlap across
//! requests. At most `max_outstanding` requests hold host buffers.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::device::{
    invalid, ConfigError, Fabric, FabricStep, FlashSsd, Hop, LinkId, SsdCommand, SsdError,
    SsdProgress, SsdStep, TransitId,
};
use crate::erudite::{CompletionStatus, Denial};
use crate::kernel::{
    ps_to_time, transfer_ps, ComponentId, EventLabel, FifoServer, Kernel, SimTime, StopReason,
};
use crate::metrics::Collector;
use crate::run::{check_conservation, CommandStatus, PathOutcome, SimError, SimOptions};
use crate::scenario::{PathKind, Scenario};
use crate::storage::{IoRequest, RequestSource, Segment, SsdAccess, Storage};
use crate::units::{Bytes, Nanos, Rate};

pub const BASELINE_STEPS: &[&str] = &[
    "open_check",
    "syscall_fs_driver",
    "ssd_access",
    "dma_to_host",
    "copy_to_gpu",
    "gpu_access",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Explicit read calls per request.
    Read,
    /// GPU page faults served by the driver and OS.
    Pagefault,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HostCpuConfig {
    pub syscall_overhead: Nanos,
    pub fs_translation_overhead: Nanos,
    pub driver_overhead: Nanos,
    pub max_outstanding: u32,
    pub initiation_rate: Rate,
    pub pagefault_overhead: Nanos,
    pub page_size: Bytes,
    pub mode: BaselineMode,
    /// SSD DMA lands in GPU memory directly, skipping the bounce buffer.
    pub gpudirect: bool,
}

impl Default for HostCpuConfig {
    fn default() -> Self {
        Self {
            syscall_overhead: Nanos(1_000),
            fs_translation_overhead: Nanos(2_000),
            driver_overhead: Nanos(1_000),
            max_outstanding: 256,
            initiation_rate: Rate(1_000_000),
            pagefault_overhead: Nanos(20_000),
            page_size: Bytes(4096),
            mode: BaselineMode::Read,
            gpudirect: false,
        }
    }
}

impl HostCpuConfig {
    pub fn validate(&self, block_size: u64) -> Result<(), ConfigError> {
        if self.max_outstanding == 0 {
            return Err(invalid("baseline.max_outstanding", "must be at least 1"));
        }
        if self.initiation_rate.0 == 0 {
            return Err(invalid("baseline.initiation_rate", "must be positive"));
        }
        let p = self.page_size.0;
        if !p.is_power_of_two() || !p.is_multiple_of(block_size) {
            return Err(invalid(
                "baseline.page_size",
                format!("{p} must be a power of two and a multiple of the block size"),
            ));
        }
        Ok(())
    }

    /// Software latency after initiation for an explicit read.
    pub fn read_software_ns(&self) -> u64 {
        self.syscall_overhead.0 + self.fs_translation_overhead.0 + self.driver_overhead.0
    }

    /// Software latency after initiation for a page fault.
    pub fn fault_software_ns(&self) -> u64 {
        self.pagefault_overhead.0 + self.fs_translation_overhead.0 + self.driver_overhead.0
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Arrival,
    Begin(u64),
    CpuDone(u64),
    Ssd(u16, SsdStep),
    Hop(TransitId),
    GpuDone(u64),
    Sample,
}

impl EventLabel for Ev {
    fn label(&self) -> &'static str {
        match self {
            Ev::Arrival => "arrival",
            Ev::Begin(_) => "begin",
            Ev::CpuDone(_) => "cpu",
            Ev::Ssd(..) => "ssd",
            Ev::Hop(_) => "hop",
            Ev::GpuDone(_) => "gpu",
            Ev::Sample => "sample",
        }
    }
}

#[derive(Debug)]
enum Msg {
    ToHost(u64),
    ToGpu(u64),
    Direct(u64),
}

/// One request (or page fault) as the CPU sees it.
#[derive(Debug)]
struct HostIo {
    app: u32,
    op: crate::device::Opcode,
    segments: Vec<Segment>,
    fault_page: Option<u64>,
    waiters: Vec<u64>,
    parts_left: u32,
    landed_bytes: u64,
    rejected: bool,
    holds_buffer: bool,
    sw_done: SimTime,
    ssd_done: SimTime,
    host_done: SimTime,
}

#[derive(Debug)]
struct Job {
    thread: u32,
    seq: u64,
    req: IoRequest,
    pending: u32,
    start: SimTime,
    sw: SimTime,
    ssd: SimTime,
    host: SimTime,
    gpu: SimTime,
    moved: u64,
    any_ok: bool,
    all_ok: bool,
}

#[derive(Debug, Clone, Copy)]
struct Part {
    io: u64,
    ssd: u16,
    slot: usize,
    plba: u64,
    blocks: u64,
}

#[derive(Debug)]
enum PageState {
    Resident,
    Faulting(Vec<u64>),
}

pub struct BaselineSim {
    cfg: HostCpuConfig,
    storage: Storage,
    source: Box<dyn RequestSource>,
    source_done: bool,
    opts: SimOptions,
    horizon: SimTime,
    sample_interval: u64,
    hbm_bandwidth: u64,
    /// Requests may be served from HBM without a fetch.
    reuse: bool,
    open_loop: Option<u64>,
    max_threads: Option<u32>,

    threads: u32,
    idle: VecDeque<u32>,
    backlog: VecDeque<u64>,
    cpu: FifoServer,
    outstanding: u32,
    admit_queue: VecDeque<u64>,
    fabric: Fabric<Msg>,
    host_link: LinkId,
    gpu_link: LinkId,
    ssds: Vec<FlashSsd>,
    ssd_waiting: Vec<VecDeque<u64>>,
    pages: HashMap<u64, PageState>,
    resident: VecDeque<u64>,
    page_capacity: usize,

    jobs: HashMap<u64, Job>,
    ios: HashMap<u64, HostIo>,
    parts: HashMap<u64, Part>,
    next_job: u64,
    next_io: u64,
    next_part: u64,
    arrivals: u64,

    collector: Collector,
    ssd_log: Vec<SsdAccess>,
    statuses: Vec<CommandStatus>,
}

impl BaselineSim {
    pub fn new(
        scenario: &Scenario,
        storage: Storage,
        source: Box<dyn RequestSource>,
        opts: SimOptions,
    ) -> Self {
        let cfg = scenario.baseline.clone();
        let mut fabric = Fabric::default();
        let host_link = fabric.add_link(scenario.link.clone());
        let gpu_link = fabric.add_link(scenario.link.clone());
        let ssds: Vec<FlashSsd> = (0..scenario.ssd_count).map(|_| FlashSsd::new(scenario.ssd.clone())).collect();
        let n = ssds.len();
        let page_capacity = (scenario.compute.hbm_capacity.0 / cfg.page_size.0).max(1) as usize;
        Self {
            storage,
            source,
            source_done: false,
            opts,
            horizon: scenario.horizon_time(),
            sample_interval: scenario.sample_interval.0,
            hbm_bandwidth: scenario.compute.hbm_bandwidth.0,
            reuse: scenario.workload.cache_granules > 0 || scenario.baseline.mode == BaselineMode::Pagefault,
            open_loop: scenario.workload.rate.map(|r| r.interval_ps()),
            max_threads: scenario.workload.threads,
            threads: 0,
            idle: VecDeque::new(),
            backlog: VecDeque::new(),
            cpu: FifoServer::default(),
            outstanding: 0,
            admit_queue: VecDeque::new(),
            fabric,
            host_link,
            gpu_link,
            ssds,
            ssd_waiting: vec![VecDeque::new(); n],
            pages: HashMap::new(),
            resident: VecDeque::new(),
            page_capacity,
            jobs: HashMap::new(),
            ios: HashMap::new(),
            parts: HashMap::new(),
            next_job: 0,
            next_io: 0,
            next_part: 0,
            arrivals: 0,
            collector: Collector::new("baseline", scenario.warmup_time(), BASELINE_STEPS),
            ssd_log: Vec::new(),
            statuses: Vec::new(),
            cfg,
        }
    }

    pub fn run(mut self) -> Result<PathOutcome, SimError> {
        let mut kernel: Kernel<Ev> = Kernel::new();
        if self.opts.trace {
            kernel = kernel.with_trace();
        }
        match self.open_loop {
            Some(_) => {
                kernel.schedule_in(0, ComponentId::Harness, Ev::Arrival);
            }
            None => {
                for _ in 0..self.max_threads.unwrap_or(1) {
                    let t = self.threads;
                    self.threads += 1;
                    self.next_for_thread(&mut kernel, t);
                }
            }
        }
        kernel.schedule_in(0, ComponentId::Harness, Ev::Sample);
        let summary = kernel.run(self.horizon, |k, ev| self.handle(k, ev.payload));
        let quiescent = summary.stop == StopReason::QueueEmpty;
        let end = if quiescent { kernel.now() } else { self.horizon };
        let report = self.collector.finish(end, kernel.events_for("host_cpu"), kernel.events_for("ssd"));
        check_conservation(&report, quiescent, self.reuse)?;
        if self.outstanding > self.cfg.max_outstanding {
            return Err(SimError::Invariant("host buffers over max_outstanding".into()));
        }
        Ok(PathOutcome {
            path: PathKind::Baseline,
            report,
            digest: kernel.trace_digest(),
            events_by_class: kernel.events_by_class().clone(),
            trace: kernel.trace().map(<[_]>::to_vec),
            ssd_log: self.ssd_log,
            statuses: self.statuses,
            storage: self.storage,
        })
    }

    fn active(&self) -> bool {
        !self.jobs.is_empty() || !self.source_done || !self.backlog.is_empty()
    }

    fn handle(&mut self, k: &mut Kernel<Ev>, ev: Ev) {
        let now = k.now();
        match ev {
            Ev::Arrival => self.on_arrival(k),
            Ev::Begin(j) => self.begin(k, j),
            Ev::CpuDone(io) => self.on_cpu_done(k, io),
            Ev::Ssd(i, step) => self.on_ssd(k, i, step),
            Ev::Hop(id) => {
                let steps = self.fabric.hop_done(now, id);
                self.fabric_steps(k, steps);
            }
            Ev::GpuDone(j) => self.finish_job(k, j),
            Ev::Sample => {
                self.collector.sample(now, self.jobs.len() as u64);
                if self.active() {
                    k.schedule_in(self.sample_interval, ComponentId::Harness, Ev::Sample);
                }
            }
        }
    }

    fn pull_request(&mut self) -> Option<IoRequest> {
        if self.source_done {
            return None;
        }
        let r = self.source.next_request();
        self.source_done = r.is_none();
        r
    }

    fn new_job(&mut self, now: SimTime, thread: u32, req: IoRequest) -> u64 {
        let id = self.next_job;
        self.next_job += 1;
        self.jobs.insert(
            id,
            Job {
                thread,
                seq: id,
                req,
                pending: 0,
                start: now,
                sw: now,
                ssd: now,
                host: now,
                gpu: now,
                moved: 0,
                any_ok: false,
                all_ok: true,
            },
        );
        id
    }

    fn on_arrival(&mut self, k: &mut Kernel<Ev>) {
        let now = k.now();
        let Some(req) = self.pull_request() else { return };
        let job = self.new_job(now, u32::MAX, req);
        self.backlog.push_back(job);
        let thread = match self.idle.pop_front() {
            Some(t) => Some(t),
            None if self.max_threads.is_none_or(|m| self.threads < m) => {
                self.threads += 1;
                Some(self.threads - 1)
            }
            None => None,
        };
        if let Some(t) = thread {
            self.next_for_thread(k, t);
        }
        self.arrivals += 1;
        let interval = self.open_loop.expect("open loop");
        let next = ps_to_time((u128::from(self.arrivals) * u128::from(interval)).min(u128::from(u64::MAX)) as u64);
        if next <= self.horizon {
            k.schedule(next.max(now), ComponentId::Harness, Ev::Arrival).expect("forward");
        }
    }

    fn next_for_thread(&mut self, k: &mut Kernel<Ev>, t: u32) {
        let now = k.now();
        let job = if self.open_loop.is_some() {
            self.backlog.pop_front()
        } else {
            self.pull_request().map(|r| self.new_job(now, t, r))
        };
        match job {
            Some(j) => {
                self.jobs.get_mut(&j).expect("job").thread = t;
                k.schedule(now, ComponentId::Gpu, Ev::Begin(j)).expect("now");
            }
            None if self.open_loop.is_some() => self.idle.push_back(t),
            None => {}
        }
    }

    /// Step 1: permission check at open, then hand the work to the CPU.
    fn begin(&mut self, k: &mut Kernel<Ev>, j: u64) {
        let now = k.now();
        let job = self.jobs.get_mut(&j).expect("job");
        let (app, file, op) = (job.req.app, job.req.file, job.req.op);
        if job.req.segments.is_empty() {
            self.schedule_gpu_access(k, j, now);
            return;
        }
        if !self.storage.fs.permission(app, file).allows(op) {
            // The open fails; no command is ever built.
            job.all_ok = false;
            let n = job.req.segments.len() as u64;
            self.collector.injected += n;
            self.collector.rejections += n;
            if self.opts.audit {
                for _ in 0..n {
                    self.statuses.push(CommandStatus {
                        request: job.seq,
                        status: CompletionStatus::PermissionDenied,
                    });
                }
            }
            k.schedule(now, ComponentId::Gpu, Ev::GpuDone(j)).expect("now");
            return;
        }
        match self.cfg.mode {
            BaselineMode::Read => {
                let segments = job.req.segments.clone();
                job.pending = 1;
                self.new_io(k, app, op, segments, None, j);
            }
            BaselineMode::Pagefault => self.fault_in(k, j),
        }
    }

    fn fault_in(&mut self, k: &mut Kernel<Ev>, j: u64) {
        let now = k.now();
        let bs = self.storage.block_size;
        let per_page = self.cfg.page_size.0 / bs;
        let job = self.jobs.get_mut(&j).expect("job");
        let (app, op) = (job.req.app, job.req.op);
        let mut pages: Vec<u64> = Vec::new();
        for s in &job.req.segments {
            for p in s.vlba / per_page..=(s.vlba + s.blocks - 1) / per_page {
                if !pages.contains(&p) {
                    pages.push(p);
                }
            }
        }
        let mut to_fault = Vec::new();
        for p in pages {
            match self.pages.get_mut(&p) {
                Some(PageState::Resident) => {}
                Some(PageState::Faulting(waiters)) => {
                    waiters.push(j);
                    job.pending += 1;
                }
                None => {
                    self.pages.insert(p, PageState::Faulting(vec![j]));
                    job.pending += 1;
                    to_fault.push(p);
                }
            }
        }
        if job.pending == 0 {
            job.any_ok = true;
            self.schedule_gpu_access(k, j, now);
            return;
        }
        for p in to_fault {
            let seg = Segment {
                vlba: p * per_page,
                blocks: per_page,
            };
            self.new_io(k, app, op, vec![seg], Some(p), j);
        }
    }

    fn new_io(
        &mut self,
        k: &mut Kernel<Ev>,
        app: u32,
        op: crate::device::Opcode,
        segments: Vec<Segment>,
        fault_page: Option<u64>,
        waiter: u64,
    ) {
        let id = self.next_io;
        self.next_io += 1;
        let now = k.now();
        self.ios.insert(
            id,
            HostIo {
                app,
                op,
                segments,
                fault_page,
                waiters: vec![waiter],
                parts_left: 0,
                landed_bytes: 0,
                rejected: false,
                holds_buffer: false,
                sw_done: now,
                ssd_done: now,
                host_done: now,
            },
        );
        self.admit_queue.push_back(id);
        self.admit(k);
    }

    /// Starts CPU work for queued I/Os while host buffers are available.
    fn admit(&mut self, k: &mut Kernel<Ev>) {
        let now = k.now();
        while self.outstanding < self.cfg.max_outstanding {
            let Some(id) = self.admit_queue.pop_front() else { break };
            self.outstanding += 1;
            let io = self.ios.get_mut(&id).expect("io");
            io.holds_buffer = true;
            let software = if io.fault_page.is_some() {
                self.cfg.fault_software_ns()
            } else {
                self.cfg.read_software_ns()
            };
            let slot_ps = self.cfg.initiation_rate.interval_ps();
            let initiated = ps_to_time(self.cpu.serve(now, slot_ps));
            self.collector.cpu_busy_ns += slot_ps.div_ceil(1_000) + software;
            k.schedule(initiated + software, ComponentId::HostCpu, Ev::CpuDone(id))
                .expect("future");
        }
    }

    fn release_buffer(&mut self, k: &mut Kernel<Ev>, io: u64) {
        let io = self.ios.get_mut(&io).expect("io");
        if io.holds_buffer {
            io.holds_buffer = false;
            self.outstanding -= 1;
            self.admit(k);
        }
    }

    /// Step 2 done: the command is built; submit to the SSDs.
    fn on_cpu_done(&mut self, k: &mut Kernel<Ev>, id: u64) {
        let now = k.now();
        let io = self.ios.get_mut(&id).expect("io");
        io.sw_done = now;
        io.ssd_done = now;
        io.host_done = now;
        let mut parts = Vec::new();
        let seq = self.jobs.get(&io.waiters[0]).map_or(0, |j| j.seq);
        for s in io.segments.clone() {
            self.collector.injected += 1;
            match self.storage.fs.check(io.app, io.op, s.vlba, s.blocks) {
                Ok(()) => {
                    for r in self.storage.vmap.split(s.vlba, s.blocks) {
                        parts.push((self.storage.vmap.backing()[r.slot], r));
                    }
                    self.collector.completions += 1;
                    if self.opts.audit {
                        self.statuses.push(CommandStatus {
                            request: seq,
                            status: CompletionStatus::Success,
                        });
                    }
                }
                Err(d) => {
                    io.rejected = true;
                    self.collector.rejections += 1;
                    if self.opts.audit {
                        self.statuses.push(CommandStatus {
                            request: seq,
                            status: match d {
                                Denial::InvalidLba => CompletionStatus::InvalidLba,
                                Denial::PermissionDenied => CompletionStatus::PermissionDenied,
                            },
                        });
                    }
                }
            }
        }
        io.parts_left = parts.len() as u32;
        if parts.is_empty() {
            self.release_buffer(k, id);
            self.io_landed(k, id, now);
            return;
        }
        for (ssd, r) in parts {
            let p = self.next_part;
            self.next_part += 1;
            self.parts.insert(
                p,
                Part {
                    io: id,
                    ssd,
                    slot: r.slot,
                    plba: r.plba,
                    blocks: r.blocks,
                },
            );
            let i = ssd as usize;
            if self.ssds[i].has_free_slot() && self.ssd_waiting[i].is_empty() {
                self.issue_to_ssd(k, p);
            } else {
                self.ssd_waiting[i].push_back(p);
            }
        }
    }

    fn issue_to_ssd(&mut self, k: &mut Kernel<Ev>, p: u64) {
        let now = k.now();
        let part = self.parts[&p];
        let io = &self.ios[&part.io];
        let sc = SsdCommand {
            op: io.op,
            plba: part.plba,
            blocks: part.blocks as u32,
            block_size: self.storage.block_size,
            token: p,
        };
        match self.ssds[part.ssd as usize].submit(now, sc) {
            Ok(steps) => {
                if self.opts.audit {
                    self.ssd_log.push(SsdAccess {
                        app: io.app,
                        op: io.op,
                        slot: part.slot,
                        plba: part.plba,
                        blocks: part.blocks,
                    });
                }
                for s in steps {
                    k.schedule(s.at, ComponentId::Ssd(part.ssd), Ev::Ssd(part.ssd, s)).expect("future");
                }
            }
            Err(SsdError::QueueFull { .. }) => self.ssd_waiting[part.ssd as usize].push_front(p),
            Err(e) => panic!("SSD refused a validated command: {e}"),
        }
    }

    fn on_ssd(&mut self, k: &mut Kernel<Ev>, i: u16, step: SsdStep) {
        let now = k.now();
        match self.ssds[i as usize].advance(now, step) {
            SsdProgress::Continue(next) => {
                k.schedule(next.at, ComponentId::Ssd(i), Ev::Ssd(i, next)).expect("future");
            }
            SsdProgress::Pending => {}
            SsdProgress::Complete(done) => {
                while self.ssds[i as usize].has_free_slot() {
                    let Some(w) = self.ssd_waiting[i as usize].pop_front() else { break };
                    self.issue_to_ssd(k, w);
                }
                let p = done.token;
                let io = self.parts[&p].io;
                let h = self.ios.get_mut(&io).expect("io");
                h.ssd_done = h.ssd_done.max(now);
                let (link, msg) = if self.cfg.gpudirect {
                    (self.gpu_link, Msg::Direct(p))
                } else {
                    (self.host_link, Msg::ToHost(p))
                };
                let steps = self.fabric.send(now, vec![Hop::Link(link)], done.bytes, msg);
                self.fabric_steps(k, steps);
            }
        }
    }

    fn fabric_steps(&mut self, k: &mut Kernel<Ev>, steps: Vec<FabricStep<Msg>>) {
        for s in steps {
            match s {
                FabricStep::Schedule { at, id } => {
                    let l = match self.fabric.hop_of(id) {
                        Some(Hop::Link(l)) => l as u16,
                        _ => 0,
                    };
                    k.schedule(at, ComponentId::Link(l), Ev::Hop(id)).expect("future");
                }
                FabricStep::Delivered { token } => self.delivered(k, token),
            }
        }
    }

    fn delivered(&mut self, k: &mut Kernel<Ev>, msg: Msg) {
        let now = k.now();
        match msg {
            Msg::ToHost(p) | Msg::Direct(p) => {
                let part = self.parts.remove(&p).expect("part");
                let io = self.ios.get_mut(&part.io).expect("io");
                io.landed_bytes += part.blocks * self.storage.block_size;
                io.parts_left -= 1;
                if io.parts_left > 0 {
                    return;
                }
                io.host_done = now;
                let bytes = io.landed_bytes;
                // Step 4: host buffer is ready; the buffer is free once copied out.
                self.release_buffer(k, part.io);
                if matches!(msg, Msg::Direct(_)) {
                    self.io_landed(k, part.io, now);
                } else {
                    let steps = self.fabric.send(now, vec![Hop::Link(self.gpu_link)], bytes, Msg::ToGpu(part.io));
                    self.fabric_steps(k, steps);
                }
            }
            Msg::ToGpu(io) => self.io_landed(k, io, now),
        }
    }

    /// Step 5 done: data for `io` is in GPU memory.
    fn io_landed(&mut self, k: &mut Kernel<Ev>, id: u64, now: SimTime) {
        let io = self.ios.remove(&id).expect("io");
        let waiters = match io.fault_page {
            Some(page) => {
                let waiters = match self.pages.remove(&page) {
                    Some(PageState::Faulting(w)) => w,
                    _ => Vec::new(),
                };
                if io.landed_bytes > 0 {
                    self.pages.insert(page, PageState::Resident);
                    self.resident.push_back(page);
                    while self.resident.len() > self.page_capacity {
                        if let Some(old) = self.resident.pop_front() {
                            self.pages.remove(&old);
                        }
                    }
                }
                waiters
            }
            None => io.waiters,
        };
        for (n, j) in waiters.into_iter().enumerate() {
            let Some(job) = self.jobs.get_mut(&j) else { continue };
            job.sw = job.sw.max(io.sw_done);
            job.ssd = job.ssd.max(io.ssd_done);
            job.host = job.host.max(io.host_done);
            job.gpu = job.gpu.max(now);
            // The job that raised a fault is charged for its bytes.
            if n == 0 {
                job.moved += io.landed_bytes;
            }
            job.any_ok |= io.landed_bytes > 0;
            job.all_ok &= !io.rejected;
            job.pending -= 1;
            if job.pending == 0 {
                self.schedule_gpu_access(k, j, now);
            }
        }
    }

    /// Step 6: the GPU reads the data out of HBM.
    fn schedule_gpu_access(&mut self, k: &mut Kernel<Ev>, j: u64, from: SimTime) {
        let useful = self.jobs[&j].req.useful;
        let at = from + ps_to_time(transfer_ps(useful, self.hbm_bandwidth)).as_ns();
        k.schedule(at, ComponentId::Gpu, Ev::GpuDone(j)).expect("future");
    }

    fn finish_job(&mut self, k: &mut Kernel<Ev>, j: u64) {
        let now = k.now();
        let job = self.jobs.remove(&j).expect("job");
        let useful = if job.req.segments.is_empty() {
            job.req.useful
        } else if self.cfg.mode == BaselineMode::Pagefault {
            // Pages may have been brought in by another request.
            if job.any_ok { job.req.useful } else { 0 }
        } else if job.all_ok {
            job.req.useful
        } else {
            job.req.useful.min(job.moved)
        };
        let t1 = job.start;
        let t2 = job.sw.max(t1);
        let t3 = job.ssd.max(t2);
        let t4 = job.host.max(t3);
        let t5 = job.gpu.max(t4);
        let t6 = now.max(t5);
        self.collector
            .request_done(&[job.start, t1, t2, t3, t4, t5, t6], useful, job.moved);
        self.next_for_thread(k, job.thread);
    }
}
