//! Event-driven model of the erudite path.
//!
//! Threads enqueue commands and ring a doorbell; one doorbell write carries
//! every command in the ring at the moment it fires (the SQEs travel inline).
//! The controller processes commands in arrival order, answers refused ones
//! without touching an SSD, and splits the rest per SSD. Read data returns
//! over the data link and the completion entry is written with it. Threads
//! poll their completion queue on a fixed period.

use std::collections::{HashMap, VecDeque};

use crate::device::{
    Fabric, FabricStep, FlashSsd, Hop, LinkId, Opcode, SsdCommand, SsdError, SsdProgress, SsdStep,
    TransitId,
};
use crate::kernel::{
    ps_to_time, transfer_ps, ComponentId, EventLabel, FifoServer, Kernel, SimTime, StopReason,
};
use crate::metrics::Collector;
use crate::run::{check_conservation, next_poll, CommandStatus, PathOutcome, SimError, SimOptions};
use crate::scenario::{PathKind, Scenario};
use crate::storage::{IoRequest, RequestSource, SsdAccess, Storage};

use super::{CompletionStatus, Denial, EruditeConfig, NvmeCommand, NvmeCompletion, PhysRange, QueueError, QueuePair};

pub const ERUDITE_STEPS: &[&str] = &["issue", "controller_and_flash", "transfer_and_poll"];

#[derive(Debug, Clone)]
enum Ev {
    Arrival,
    Retry(u32),
    Doorbell(u32),
    Hop(TransitId),
    CtrlReady(u64),
    Ssd(u16, SsdStep),
    WriteAck(u64),
    ErrorPosted(u64),
    Observe(u64),
    CacheHit(u64),
    Sample,
}

impl EventLabel for Ev {
    fn label(&self) -> &'static str {
        match self {
            Ev::Arrival => "arrival",
            Ev::Retry(_) => "retry",
            Ev::Doorbell(_) => "doorbell",
            Ev::Hop(_) => "hop",
            Ev::CtrlReady(_) => "controller",
            Ev::Ssd(..) => "ssd",
            Ev::WriteAck(_) => "write_ack",
            Ev::ErrorPosted(_) => "error_posted",
            Ev::Observe(_) => "observe",
            Ev::CacheHit(_) => "cache_hit",
            Ev::Sample => "sample",
        }
    }
}

#[derive(Debug)]
enum Msg {
    /// Doorbell write with the announced SQEs inline.
    Doorbell(Vec<u64>),
    /// Read data for one SSD part, controller to HBM.
    Data(u64),
    /// Write data for one SSD part, HBM to controller.
    WriteData(u64),
}

#[derive(Debug, Clone, Copy)]
struct Thread {
    queue: u32,
    job: Option<u64>,
    backoff: u32,
}

#[derive(Debug)]
struct Job {
    thread: u32,
    seq: u64,
    req: IoRequest,
    next_segment: usize,
    outstanding: u32,
    poll_from: SimTime,
    start: SimTime,
    ctrl_at: SimTime,
    flash_at: SimTime,
    moved: u64,
    all_ok: bool,
}

#[derive(Debug)]
struct Cmd {
    job: u64,
    nvme: NvmeCommand,
    parts_left: u32,
    status: CompletionStatus,
}

#[derive(Debug, Clone, Copy)]
struct Part {
    cmd: u64,
    ssd: u16,
    range: PhysRange,
}

#[derive(Debug, Clone)]
struct Routes {
    cmd: Vec<Hop>,
    data: Vec<Hop>,
}

pub struct EruditeSim {
    cfg: EruditeConfig,
    storage: Storage,
    source: Box<dyn RequestSource>,
    source_done: bool,
    opts: SimOptions,
    horizon: SimTime,
    sample_interval: u64,
    sqe_write_ps_per: u64,
    hbm_bandwidth: u64,
    /// Requests may be served from HBM without a fetch.
    reuse: bool,
    open_loop: Option<u64>,
    max_threads: Option<u32>,
    local_threads: u32,

    threads: Vec<Thread>,
    idle: VecDeque<u32>,
    backlog: VecDeque<u64>,
    queues: Vec<QueuePair>,
    bell_pending: Vec<bool>,
    routes: Vec<Routes>,
    fabric: Fabric<Msg>,
    controller: FifoServer,
    ssds: Vec<FlashSsd>,
    ssd_waiting: Vec<VecDeque<u64>>,

    jobs: HashMap<u64, Job>,
    cmds: HashMap<u64, Cmd>,
    by_tag: HashMap<(u32, u32), u64>,
    parts: HashMap<u64, Part>,
    next_job: u64,
    next_cmd: u64,
    next_part: u64,
    arrivals: u64,

    collector: Collector,
    ssd_log: Vec<SsdAccess>,
    statuses: Vec<CommandStatus>,
    invariant: Option<String>,
}

impl EruditeSim {
    pub fn new(
        scenario: &Scenario,
        storage: Storage,
        source: Box<dyn RequestSource>,
        opts: SimOptions,
    ) -> Self {
        let cfg = scenario.erudite.clone();
        let w = &scenario.workload;
        let remote = cfg.remote_threads;

        let mut fabric = Fabric::default();
        let local_cmd = fabric.add_link(scenario.link.clone());
        let local_data = fabric.add_link(scenario.link.clone());
        let mut routes = vec![Routes {
            cmd: vec![Hop::Link(local_cmd)],
            data: vec![Hop::Link(local_data)],
        }];
        if remote > 0 {
            fabric.set_switch(&scenario.switch);
            let port = scenario.switch.port_link.clone().unwrap_or_else(|| scenario.link.clone());
            let ports: Vec<(LinkId, LinkId)> =
                (0..2).map(|_| (fabric.add_link(port.clone()), fabric.add_link(port.clone()))).collect();
            // (out, in) per EPU; the controller sits on EPU 0.
            routes.push(Routes {
                cmd: vec![Hop::Link(ports[1].0), Hop::Switch, Hop::Link(ports[0].1)],
                data: vec![Hop::Link(ports[0].0), Hop::Switch, Hop::Link(ports[1].1)],
            });
        }

        let epus = if remote > 0 { 2 } else { 1 };
        let mut queues = Vec::new();
        for epu in 0..epus {
            for q in 0..cfg.queues {
                queues.push(QueuePair::new(epu * cfg.queues + q, cfg.queue_depth, epu));
            }
        }
        let n_queues = queues.len();
        let ssds: Vec<FlashSsd> = (0..scenario.ssd_count).map(|_| FlashSsd::new(scenario.ssd.clone())).collect();
        let n_ssds = ssds.len();
        let max_threads = w.threads;
        let local_threads = max_threads.map_or(u32::MAX, |t| t - remote);

        Self {
            storage,
            source,
            source_done: false,
            opts,
            horizon: scenario.horizon_time(),
            sample_interval: scenario.sample_interval.0,
            sqe_write_ps_per: transfer_ps(cfg.sqe_bytes.0, scenario.compute.hbm_bandwidth.0),
            hbm_bandwidth: scenario.compute.hbm_bandwidth.0,
            reuse: scenario.workload.cache_granules > 0,
            open_loop: w.rate.map(|r| r.interval_ps()),
            max_threads,
            local_threads,
            threads: Vec::new(),
            idle: VecDeque::new(),
            backlog: VecDeque::new(),
            queues,
            bell_pending: vec![false; n_queues],
            routes,
            fabric,
            controller: FifoServer::default(),
            ssds,
            ssd_waiting: vec![VecDeque::new(); n_ssds],
            jobs: HashMap::new(),
            cmds: HashMap::new(),
            by_tag: HashMap::new(),
            parts: HashMap::new(),
            next_job: 0,
            next_cmd: 0,
            next_part: 0,
            arrivals: 0,
            collector: Collector::new("erudite", scenario.warmup_time(), ERUDITE_STEPS),
            ssd_log: Vec::new(),
            statuses: Vec::new(),
            invariant: None,
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
                    let t = self.spawn_thread();
                    self.pump(&mut kernel, t);
                }
            }
        }
        kernel.schedule_in(0, ComponentId::Harness, Ev::Sample);

        let summary = kernel.run(self.horizon, |k, ev| self.handle(k, ev.payload));
        if let Some(msg) = self.invariant.take() {
            return Err(SimError::Invariant(msg));
        }
        let quiescent = summary.stop == StopReason::QueueEmpty;
        let end = if quiescent { kernel.now() } else { self.horizon };
        let report = self.collector.finish(end, kernel.events_for("host_cpu"), kernel.events_for("ssd"));
        check_conservation(&report, quiescent, self.reuse)?;
        for q in &self.queues {
            if q.in_flight() > q.depth() {
                return Err(SimError::Invariant(format!("queue {} over depth", q.id())));
            }
        }
        Ok(PathOutcome {
            path: PathKind::Erudite,
            report,
            digest: kernel.trace_digest(),
            events_by_class: kernel.events_by_class().clone(),
            trace: kernel.trace().map(<[_]>::to_vec),
            ssd_log: self.ssd_log,
            statuses: self.statuses,
            storage: self.storage,
        })
    }

    fn spawn_thread(&mut self) -> u32 {
        let t = self.threads.len() as u32;
        let queue = if t < self.local_threads {
            t % self.cfg.queues
        } else {
            self.cfg.queues + t % self.cfg.queues
        };
        self.threads.push(Thread {
            queue,
            job: None,
            backoff: 0,
        });
        t
    }

    fn epu_of_queue(&self, q: u32) -> usize {
        self.queues[q as usize].owner_epu() as usize
    }

    fn active(&self) -> bool {
        !self.jobs.is_empty() || !self.source_done || !self.backlog.is_empty()
    }

    fn handle(&mut self, k: &mut Kernel<Ev>, ev: Ev) {
        let now = k.now();
        match ev {
            Ev::Arrival => self.on_arrival(k),
            Ev::Retry(t) => self.pump(k, t),
            Ev::Doorbell(q) => self.on_doorbell(k, q),
            Ev::Hop(id) => {
                let steps = self.fabric.hop_done(now, id);
                self.fabric_steps(k, steps);
            }
            Ev::CtrlReady(c) => self.on_controller(k, c),
            Ev::Ssd(i, step) => self.on_ssd(k, i, step),
            Ev::WriteAck(p) => self.part_done(k, p),
            Ev::ErrorPosted(c) => self.post_completion(k, c),
            Ev::Observe(c) => self.on_observe(k, c),
            Ev::CacheHit(j) => self.finish_job(k, j),
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
                next_segment: 0,
                outstanding: 0,
                poll_from: now,
                start: now,
                ctrl_at: now,
                flash_at: now,
                moved: 0,
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
            None if self.max_threads.is_none_or(|m| (self.threads.len() as u32) < m) => Some(self.spawn_thread()),
            None => None,
        };
        if let Some(t) = thread {
            self.pump(k, t);
        }
        self.arrivals += 1;
        let interval = self.open_loop.expect("open loop");
        let next = ps_to_time(u128::from(self.arrivals).saturating_mul(u128::from(interval)).min(u128::from(u64::MAX)) as u64);
        if next <= self.horizon {
            k.schedule(next.max(now), ComponentId::Harness, Ev::Arrival)
                .expect("arrivals move forward");
        }
    }

    /// Gives thread `t` work and enqueues as much of it as the queue admits.
    fn pump(&mut self, k: &mut Kernel<Ev>, t: u32) {
        let now = k.now();
        let job_id = match self.threads[t as usize].job {
            Some(j) => j,
            None => {
                let job = if self.open_loop.is_some() {
                    self.backlog.pop_front()
                } else {
                    self.pull_request().map(|r| self.new_job(now, t, r))
                };
                let Some(j) = job else {
                    if self.open_loop.is_some() {
                        self.idle.push_back(t);
                    }
                    return;
                };
                let job = self.jobs.get_mut(&j).expect("job");
                job.thread = t;
                job.start = job.start.min(now);
                self.threads[t as usize].job = Some(j);
                if job.req.segments.is_empty() {
                    let at = now + ps_to_time(transfer_ps(job.req.useful, self.hbm_bandwidth)).as_ns().max(1);
                    k.schedule(at, ComponentId::EcuThread(t), Ev::CacheHit(j)).expect("future");
                    return;
                }
                j
            }
        };

        let q = self.threads[t as usize].queue;
        let bs = self.storage.block_size;
        let mut written = 0u64;
        loop {
            let job = self.jobs.get_mut(&job_id).expect("job");
            let Some(seg) = job.req.segments.get(job.next_segment).copied() else { break };
            let nvme = NvmeCommand {
                opcode: job.req.op,
                app_id: job.req.app,
                queue_id: q,
                tag: 0,
                virtual_lba: seg.vlba,
                length: seg.blocks * bs,
                dest_buffer: job_id,
            };
            match self.queues[q as usize].enqueue(nvme, bs) {
                Ok(nvme) => {
                    job.next_segment += 1;
                    job.outstanding += 1;
                    written += 1;
                    let id = self.next_cmd;
                    self.next_cmd += 1;
                    self.by_tag.insert((q, nvme.tag), id);
                    self.cmds.insert(
                        id,
                        Cmd {
                            job: job_id,
                            nvme,
                            parts_left: 0,
                            status: CompletionStatus::Success,
                        },
                    );
                    self.collector.injected += 1;
                    self.threads[t as usize].backoff = 0;
                }
                Err(QueueError::BadLength { .. }) => {
                    // Refused before entering the ring; never reaches the controller.
                    job.next_segment += 1;
                    self.collector.injected += 1;
                    self.collector.rejections += 1;
                    if self.opts.audit {
                        self.statuses.push(CommandStatus {
                            request: job.seq,
                            status: CompletionStatus::InvalidLba,
                        });
                    }
                }
                Err(QueueError::QueueFull { .. }) => {
                    let th = &mut self.threads[t as usize];
                    let delay = (self.cfg.backoff_base.0 << th.backoff.min(20)).min(self.cfg.backoff_max.0);
                    th.backoff += 1;
                    k.schedule_in(delay, ComponentId::EcuThread(t), Ev::Retry(t));
                    break;
                }
            }
        }
        let write_done = now + ps_to_time(written * self.sqe_write_ps_per).as_ns().max(u64::from(written > 0));
        let job = self.jobs.get_mut(&job_id).expect("job");
        if written > 0 {
            job.poll_from = write_done;
            if !self.bell_pending[q as usize] {
                self.bell_pending[q as usize] = true;
                k.schedule(write_done, ComponentId::QueuePair(q), Ev::Doorbell(q)).expect("future");
            }
        }
        if job.outstanding == 0 && job.next_segment == job.req.segments.len() {
            // Every segment was refused at enqueue.
            self.finish_job(k, job_id);
        }
    }

    fn on_doorbell(&mut self, k: &mut Kernel<Ev>, q: u32) {
        self.bell_pending[q as usize] = false;
        let qp = &mut self.queues[q as usize];
        let fresh = qp.ring_doorbell();
        if fresh == 0 {
            return;
        }
        let mut ids = Vec::with_capacity(fresh as usize);
        while let Some(c) = qp.fetch() {
            ids.push(self.by_tag[&(q, c.tag)]);
        }
        let bytes = self.cfg.doorbell_bytes.0 + fresh * self.cfg.sqe_bytes.0;
        let route = self.routes[self.epu_of_queue(q)].cmd.clone();
        let steps = self.fabric.send(k.now(), route, bytes, Msg::Doorbell(ids));
        self.fabric_steps(k, steps);
    }

    fn fabric_steps(&mut self, k: &mut Kernel<Ev>, steps: Vec<FabricStep<Msg>>) {
        for s in steps {
            match s {
                FabricStep::Schedule { at, id } => {
                    let target = match self.fabric.hop_of(id) {
                        Some(Hop::Link(l)) => ComponentId::Link(l as u16),
                        _ => ComponentId::Switch,
                    };
                    k.schedule(at, target, Ev::Hop(id)).expect("hop in the future");
                }
                FabricStep::Delivered { token } => self.delivered(k, token),
            }
        }
    }

    fn delivered(&mut self, k: &mut Kernel<Ev>, msg: Msg) {
        let now = k.now();
        match msg {
            Msg::Doorbell(ids) => {
                for c in ids {
                    let svc = self.cfg.controller_service_time.0 * 1_000;
                    let ready = ps_to_time(self.controller.serve(now, svc)) + self.cfg.controller_latency.0;
                    let job = self.cmds[&c].job;
                    let j = self.jobs.get_mut(&job).expect("job");
                    j.ctrl_at = j.ctrl_at.max(now);
                    k.schedule(ready, ComponentId::Controller(0), Ev::CtrlReady(c)).expect("future");
                }
            }
            Msg::Data(p) => self.part_done(k, p),
            Msg::WriteData(p) => self.submit_part(k, p),
        }
    }

    fn on_controller(&mut self, k: &mut Kernel<Ev>, c: u64) {
        let now = k.now();
        let (app, op, vlba, blocks, job) = {
            let cmd = &self.cmds[&c];
            let n = &cmd.nvme;
            (n.app_id, n.opcode, n.virtual_lba, n.length / self.storage.block_size, cmd.job)
        };
        let j = self.jobs.get_mut(&job).expect("job");
        j.flash_at = j.flash_at.max(now);
        match self.storage.fs.check(app, op, vlba, blocks) {
            Err(denial) => {
                let status = match denial {
                    Denial::InvalidLba => CompletionStatus::InvalidLba,
                    Denial::PermissionDenied => CompletionStatus::PermissionDenied,
                };
                self.cmds.get_mut(&c).expect("cmd").status = status;
                let q = self.cmds[&c].nvme.queue_id;
                let route = &self.routes[self.epu_of_queue(q)].data;
                let at = now + self.fabric.notification_latency(route);
                k.schedule(at, ComponentId::QueuePair(q), Ev::ErrorPosted(c)).expect("future");
            }
            Ok(()) => {
                let ranges = self.storage.vmap.split(vlba, blocks);
                self.cmds.get_mut(&c).expect("cmd").parts_left = ranges.len() as u32;
                let q = self.cmds[&c].nvme.queue_id;
                for range in ranges {
                    let p = self.next_part;
                    self.next_part += 1;
                    let ssd = self.storage.vmap.backing()[range.slot];
                    self.parts.insert(p, Part { cmd: c, ssd, range });
                    match op {
                        Opcode::Read => self.submit_part(k, p),
                        Opcode::Write => {
                            let route = self.routes[self.epu_of_queue(q)].cmd.clone();
                            let bytes = range.blocks * self.storage.block_size;
                            let steps = self.fabric.send(now, route, bytes, Msg::WriteData(p));
                            self.fabric_steps(k, steps);
                        }
                    }
                }
            }
        }
    }

    fn submit_part(&mut self, k: &mut Kernel<Ev>, p: u64) {
        let part = self.parts[&p];
        let i = part.ssd as usize;
        if !self.ssds[i].has_free_slot() || !self.ssd_waiting[i].is_empty() {
            self.ssd_waiting[i].push_back(p);
            return;
        }
        self.issue_to_ssd(k, p);
    }

    fn issue_to_ssd(&mut self, k: &mut Kernel<Ev>, p: u64) {
        let now = k.now();
        let part = self.parts[&p];
        let cmd = &self.cmds[&part.cmd];
        let op = cmd.nvme.opcode;
        let app = cmd.nvme.app_id;
        let Ok(blocks) = u32::try_from(part.range.blocks) else {
            self.fail_part(k, p);
            return;
        };
        let sc = SsdCommand {
            op,
            plba: part.range.plba,
            blocks,
            block_size: self.storage.block_size,
            token: p,
        };
        match self.ssds[part.ssd as usize].submit(now, sc) {
            Ok(steps) => {
                if self.opts.audit {
                    self.ssd_log.push(SsdAccess {
                        app,
                        op,
                        slot: part.range.slot,
                        plba: part.range.plba,
                        blocks: part.range.blocks,
                    });
                }
                for s in steps {
                    k.schedule(s.at, ComponentId::Ssd(part.ssd), Ev::Ssd(part.ssd, s)).expect("future");
                }
            }
            Err(SsdError::QueueFull { .. }) => self.ssd_waiting[part.ssd as usize].push_front(p),
            Err(_) => self.fail_part(k, p),
        }
    }

    fn fail_part(&mut self, k: &mut Kernel<Ev>, p: u64) {
        let c = self.parts[&p].cmd;
        self.cmds.get_mut(&c).expect("cmd").status = CompletionStatus::DeviceError;
        self.part_done(k, p);
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
                let c = self.parts[&p].cmd;
                let (q, job) = (self.cmds[&c].nvme.queue_id, self.cmds[&c].job);
                let j = self.jobs.get_mut(&job).expect("job");
                j.flash_at = j.flash_at.max(now);
                match done.op {
                    Opcode::Read => {
                        let route = self.routes[self.epu_of_queue(q)].data.clone();
                        let steps = self.fabric.send(now, route, done.bytes, Msg::Data(p));
                        self.fabric_steps(k, steps);
                    }
                    Opcode::Write => {
                        let route = &self.routes[self.epu_of_queue(q)].data;
                        let at = now + self.fabric.notification_latency(route);
                        k.schedule(at, ComponentId::QueuePair(q), Ev::WriteAck(p)).expect("future");
                    }
                }
            }
        }
    }

    fn part_done(&mut self, k: &mut Kernel<Ev>, p: u64) {
        let part = self.parts.remove(&p).expect("part");
        let cmd = self.cmds.get_mut(&part.cmd).expect("cmd");
        if cmd.status == CompletionStatus::Success {
            let j = self.jobs.get_mut(&cmd.job).expect("job");
            j.moved += part.range.blocks * self.storage.block_size;
        }
        cmd.parts_left -= 1;
        if cmd.parts_left == 0 {
            self.post_completion(k, part.cmd);
        }
    }

    /// Writes the CQ entry for `c` and schedules the owning thread's poll hit.
    fn post_completion(&mut self, k: &mut Kernel<Ev>, c: u64) {
        let now = k.now();
        let cmd = &self.cmds[&c];
        let q = cmd.nvme.queue_id;
        self.queues[q as usize].post(NvmeCompletion {
            tag: cmd.nvme.tag,
            status: cmd.status,
            completed_at: now,
        });
        if cmd.status == CompletionStatus::Success {
            self.collector.completions += 1;
        } else {
            self.collector.rejections += 1;
        }
        let job = &self.jobs[&cmd.job];
        if self.opts.audit {
            self.statuses.push(CommandStatus {
                request: job.seq,
                status: cmd.status,
            });
        }
        let at = next_poll(job.poll_from, now, self.cfg.poll_interval.0);
        k.schedule(at, ComponentId::EcuThread(job.thread), Ev::Observe(c)).expect("future");
    }

    fn on_observe(&mut self, k: &mut Kernel<Ev>, c: u64) {
        let cmd = self.cmds.remove(&c).expect("cmd");
        let q = cmd.nvme.queue_id;
        self.by_tag.remove(&(q, cmd.nvme.tag));
        let reaped = self.queues[q as usize].reap(cmd.nvme.tag);
        if reaped.is_none_or(|r| r.status != cmd.status) {
            self.invariant
                .get_or_insert_with(|| format!("thread found no matching completion for tag {}", cmd.nvme.tag));
        }
        let job = self.jobs.get_mut(&cmd.job).expect("job");
        job.outstanding -= 1;
        job.all_ok &= cmd.status == CompletionStatus::Success;
        if job.outstanding == 0 && job.next_segment == job.req.segments.len() {
            self.finish_job(k, cmd.job);
        }
    }

    fn finish_job(&mut self, k: &mut Kernel<Ev>, j: u64) {
        let now = k.now();
        let job = self.jobs.remove(&j).expect("job");
        // A partly rejected request delivers no more than what was moved.
        let useful = if job.all_ok {
            job.req.useful
        } else {
            job.req.useful.min(job.moved)
        };
        let ctrl = job.ctrl_at.max(job.start);
        let flash = job.flash_at.max(ctrl);
        let stamps = [job.start, ctrl, flash, now.max(flash)];
        self.collector.request_done(&stamps, useful, job.moved);
        let t = job.thread;
        self.threads[t as usize].job = None;
        self.pump(k, t);
    }
}
