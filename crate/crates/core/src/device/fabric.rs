//! Multi-hop message transport over links and an output-queued switch.
//!
//! A message follows a route of hops. Link hops hold one of the link's tags
//! from transmission start until delivery; the switch hop holds a tag from
//! the switch's tag space until the following egress hop delivers. When a
//! tag table is exhausted the message waits in a FIFO backlog at that hop,
//! so injection is throttled and nothing is dropped.

use std::collections::{HashMap, VecDeque};

use super::link::{Link, LinkConfig, LinkStats, SwitchConfig};
use crate::kernel::SimTime;

pub type LinkId = usize;
pub type TransitId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    Link(LinkId),
    /// Routing through the switch (pure latency plus a switch tag).
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FabricStep<T> {
    /// Schedule a hop completion for transit `id` at `at`.
    Schedule { at: SimTime, id: TransitId },
    Delivered { token: T },
}

#[derive(Debug)]
struct Transit<T> {
    hops: Vec<Hop>,
    current: usize,
    bytes: u64,
    token: T,
    holds_switch_tag: bool,
}

#[derive(Debug)]
struct SwitchState {
    routing_latency: u64,
    tag_space: u32,
    tags_in_use: u32,
    backlog: VecDeque<TransitId>,
    routed: u64,
    stalls: u64,
}

#[derive(Debug)]
pub struct Fabric<T> {
    links: Vec<Link>,
    link_backlog: Vec<VecDeque<TransitId>>,
    switch: Option<SwitchState>,
    transits: HashMap<TransitId, Transit<T>>,
    next_id: TransitId,
    injected: u64,
    delivered: u64,
}

impl<T> Default for Fabric<T> {
    fn default() -> Self {
        Self {
            links: Vec::new(),
            link_backlog: Vec::new(),
            switch: None,
            transits: HashMap::new(),
            next_id: 0,
            injected: 0,
            delivered: 0,
        }
    }
}

impl<T> Fabric<T> {
    pub fn add_link(&mut self, cfg: LinkConfig) -> LinkId {
        self.links.push(Link::new(cfg));
        self.link_backlog.push(VecDeque::new());
        self.links.len() - 1
    }

    pub fn set_switch(&mut self, cfg: &SwitchConfig) {
        self.switch = Some(SwitchState {
            routing_latency: cfg.routing_latency.0,
            tag_space: cfg.tag_space,
            tags_in_use: 0,
            backlog: VecDeque::new(),
            routed: 0,
            stalls: 0,
        });
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn link_stats(&self, id: LinkId) -> &LinkStats {
        self.links[id].stats()
    }

    pub fn injected(&self) -> u64 {
        self.injected
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn in_transit(&self) -> usize {
        self.transits.len()
    }

    pub fn switch_routed(&self) -> u64 {
        self.switch.as_ref().map_or(0, |s| s.routed)
    }

    pub fn switch_stalls(&self) -> u64 {
        self.switch.as_ref().map_or(0, |s| s.stalls)
    }

    /// Hop transit `id` is currently on.
    pub fn hop_of(&self, id: TransitId) -> Option<Hop> {
        self.transits.get(&id).map(|t| t.hops[t.current])
    }

    /// Latency of a zero-occupancy notification along `route`
    /// (propagation plus routing, no serialization).
    pub fn notification_latency(&self, route: &[Hop]) -> u64 {
        route
            .iter()
            .map(|hop| match hop {
                Hop::Link(l) => self.links[*l].config().propagation_latency.0,
                Hop::Switch => self.switch.as_ref().map_or(0, |s| s.routing_latency),
            })
            .sum()
    }

    /// Injects a message of `bytes` payload along `route`.
    pub fn send(&mut self, now: SimTime, route: Vec<Hop>, bytes: u64, token: T) -> Vec<FabricStep<T>> {
        self.injected += 1;
        if route.is_empty() {
            self.delivered += 1;
            return vec![FabricStep::Delivered { token }];
        }
        let id = self.next_id;
        self.next_id += 1;
        self.transits.insert(
            id,
            Transit {
                hops: route,
                current: 0,
                bytes,
                token,
                holds_switch_tag: false,
            },
        );
        let mut out = Vec::new();
        self.start_hop(now, id, &mut out);
        out
    }

    fn start_hop(&mut self, now: SimTime, id: TransitId, out: &mut Vec<FabricStep<T>>) {
        let transit = self.transits.get_mut(&id).expect("live transit");
        match transit.hops[transit.current] {
            Hop::Link(l) => match self.links[l].transfer(now, transit.bytes) {
                Ok(at) => out.push(FabricStep::Schedule { at, id }),
                Err(_) => self.link_backlog[l].push_back(id),
            },
            Hop::Switch => {
                let sw = self.switch.as_mut().expect("route uses a switch but none is configured");
                if sw.tags_in_use < sw.tag_space {
                    sw.tags_in_use += 1;
                    transit.holds_switch_tag = true;
                    out.push(FabricStep::Schedule {
                        at: now + sw.routing_latency,
                        id,
                    });
                } else {
                    sw.stalls += 1;
                    sw.backlog.push_back(id);
                }
            }
        }
    }

    fn release_switch_tag(&mut self, now: SimTime, out: &mut Vec<FabricStep<T>>) {
        let sw = self.switch.as_mut().expect("switch");
        sw.tags_in_use -= 1;
        sw.routed += 1;
        if let Some(waiting) = sw.backlog.pop_front() {
            self.start_hop(now, waiting, out);
        }
    }

    /// Handles the completion of the current hop of transit `id`.
    pub fn hop_done(&mut self, now: SimTime, id: TransitId) -> Vec<FabricStep<T>> {
        let mut out = Vec::new();
        let (hop, is_last, release_switch) = {
            let t = self.transits.get_mut(&id).expect("live transit");
            let hop = t.hops[t.current];
            let is_last = t.current + 1 == t.hops.len();
            // The switch tag is returned once the egress hop after the switch delivers.
            let release = t.holds_switch_tag && (matches!(hop, Hop::Link(_)) || is_last);
            if release {
                t.holds_switch_tag = false;
            }
            (hop, is_last, release)
        };

        if let Hop::Link(l) = hop {
            self.links[l].deliver();
            if let Some(waiting) = self.link_backlog[l].pop_front() {
                self.start_hop(now, waiting, &mut out);
            }
        }
        if release_switch {
            self.release_switch_tag(now, &mut out);
        }

        if is_last {
            let t = self.transits.remove(&id).expect("live transit");
            self.delivered += 1;
            out.push(FabricStep::Delivered { token: t.token });
        } else {
            self.transits.get_mut(&id).expect("live transit").current += 1;
            self.start_hop(now, id, &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{Bandwidth, Bytes, Nanos};

    fn link(prop: u64, tags: u32) -> LinkConfig {
        LinkConfig {
            bandwidth: Bandwidth(16_000_000_000),
            propagation_latency: Nanos(prop),
            header_bytes: Bytes(0),
            max_tags: tags,
        }
    }

    /// Runs the fabric until idle; returns delivery time per token.
    fn drive(f: &mut Fabric<u32>, mut steps: Vec<FabricStep<u32>>) -> Vec<(u32, SimTime)> {
        let mut now = SimTime::ZERO;
        let mut pending: Vec<(SimTime, TransitId)> = Vec::new();
        let mut out = Vec::new();
        loop {
            for s in steps.drain(..) {
                match s {
                    FabricStep::Schedule { at, id } => pending.push((at, id)),
                    FabricStep::Delivered { token } => out.push((token, now)),
                }
            }
            if pending.is_empty() {
                break;
            }
            pending.sort();
            let (at, id) = pending.remove(0);
            now = at;
            steps = f.hop_done(now, id);
        }
        out
    }

    #[test]
    fn switched_path_sums_hops() {
        let mut f = Fabric::default();
        let up = f.add_link(link(50, 16));
        let down = f.add_link(link(50, 16));
        f.set_switch(&SwitchConfig {
            routing_latency: Nanos(100),
            ..SwitchConfig::default()
        });
        let steps = f.send(SimTime::ZERO, vec![Hop::Link(up), Hop::Switch, Hop::Link(down)], 512, 1);
        let got = drive(&mut f, steps);
        // 32+50 ingress, 100 routing, 32+50 egress
        assert_eq!(got, vec![(1, SimTime(264))]);
        assert_eq!(f.notification_latency(&[Hop::Link(up), Hop::Switch, Hop::Link(down)]), 200);
    }

    #[test]
    fn loopback_is_routing_latency_only() {
        let mut f: Fabric<u32> = Fabric::default();
        f.set_switch(&SwitchConfig {
            routing_latency: Nanos(100),
            ..SwitchConfig::default()
        });
        let steps = f.send(SimTime::ZERO, vec![Hop::Switch], 512, 9);
        assert_eq!(drive(&mut f, steps), vec![(9, SimTime(100))]);
    }

    #[test]
    fn exhausted_switch_tags_throttle_without_loss() {
        let mut f = Fabric::default();
        let up = f.add_link(link(0, 1024));
        let down = f.add_link(link(0, 1024));
        f.set_switch(&SwitchConfig {
            routing_latency: Nanos(100),
            tag_space: 2,
            ..SwitchConfig::default()
        });
        let mut steps = Vec::new();
        for token in 0..50 {
            steps.extend(f.send(SimTime::ZERO, vec![Hop::Link(up), Hop::Switch, Hop::Link(down)], 64, token));
        }
        let got = drive(&mut f, steps);
        assert_eq!(got.len(), 50);
        assert_eq!(f.injected(), f.delivered());
        assert!(f.switch_stalls() > 0);
        assert_eq!(f.in_transit(), 0);
    }

    #[test]
    fn link_tag_backlog_is_fifo() {
        let mut f = Fabric::default();
        let l = f.add_link(link(0, 1));
        let mut steps = Vec::new();
        for token in 0..4 {
            steps.extend(f.send(SimTime::ZERO, vec![Hop::Link(l)], 512, token));
        }
        let got = drive(&mut f, steps);
        let order: Vec<u32> = got.iter().map(|g| g.0).collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert_eq!(got[3].1, SimTime(128));
    }
}
