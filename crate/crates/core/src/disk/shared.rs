//! Processor-sharing disk shared by concurrently restoring sessions.
//!
//! Every active request of class `c` and size `s` progresses at
//! `aggregate(c, s, k) / k` where `k` is the number of active requests; if
//! the sum over mixed classes exceeds the device peak all rates are scaled
//! down to it. Rates are recomputed at every arrival and departure. A
//! request never completes earlier than `submit + min_latency`; once its
//! bytes are drained it stops consuming bandwidth while it waits out the
//! floor.

use super::{ReadClass, StorageModel, MIB};

/// A read submitted to the shared disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskRequest {
    pub owner: usize,
    pub bytes: u64,
    pub class: ReadClass,
}

pub type RequestId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub id: RequestId,
    pub owner: usize,
    pub time_us: f64,
}

#[derive(Debug)]
struct Active {
    id: RequestId,
    req: DiskRequest,
    submit: f64,
    remaining: f64,
    // bytes per µs
    rate: f64,
}

#[derive(Debug)]
pub struct SharedDisk<'a> {
    model: &'a StorageModel,
    now: f64,
    next_id: RequestId,
    active: Vec<Active>,
    // (completion time, id, owner) of drained requests waiting out the floor
    waiting: Vec<(f64, RequestId, usize)>,
    bytes_served: f64,
    peak_aggregate: f64,
}

fn bytes_per_us(mbps: f64) -> f64 {
    mbps * MIB / 1e6
}

impl<'a> SharedDisk<'a> {
    pub fn new(model: &'a StorageModel) -> Self {
        SharedDisk {
            model,
            now: 0.0,
            next_id: 0,
            active: Vec::new(),
            waiting: Vec::new(),
            bytes_served: 0.0,
            peak_aggregate: 0.0,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_empty() && self.waiting.is_empty()
    }

    /// Bytes drained so far (integral of the aggregate rate).
    pub fn bytes_served(&self) -> f64 {
        self.bytes_served
    }

    /// Highest aggregate rate observed, in MB/s.
    pub fn peak_aggregate_mbps(&self) -> f64 {
        self.peak_aggregate * 1e6 / MIB
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    /// Submits a request at the current virtual time.
    pub fn submit(&mut self, req: DiskRequest) -> RequestId {
        let id = self.next_id;
        self.next_id += 1;
        if req.bytes == 0 {
            self.waiting.push((self.now + self.model.min_latency_us(), id, req.owner));
        } else {
            self.active.push(Active { id, req, submit: self.now, remaining: req.bytes as f64, rate: 0.0 });
            self.rebalance();
        }
        id
    }

    fn rebalance(&mut self) {
        let k = self.active.len() as u32;
        if k == 0 {
            return;
        }
        let mut total = 0.0;
        for a in &mut self.active {
            a.rate = bytes_per_us(self.model.aggregate(a.req.class, a.req.bytes, k) / k as f64);
            total += a.rate;
        }
        let cap = bytes_per_us(self.model.peak_mbps());
        if total > cap {
            let scale = cap / total;
            for a in &mut self.active {
                a.rate *= scale;
            }
            total = cap;
        }
        self.peak_aggregate = self.peak_aggregate.max(total);
    }

    fn next_drain(&self) -> Option<f64> {
        self.active.iter().map(|a| self.now + a.remaining / a.rate).min_by(f64::total_cmp)
    }

    /// Time of the next completion, if any request is outstanding.
    pub fn next_event(&self) -> Option<f64> {
        let floor = self.waiting.iter().map(|w| w.0).min_by(f64::total_cmp);
        match (self.next_drain(), floor) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Advances virtual time to `t`, which must not pass the next event, and
    /// returns the requests completing exactly at `t` ordered by
    /// (owner, id).
    pub fn advance_to(&mut self, t: f64) -> Vec<Completion> {
        assert!(t >= self.now, "time runs forward");
        if let Some(next) = self.next_event() {
            assert!(t <= next + 1e-6 * next.abs().max(1.0), "advance_to({t}) skips event at {next}");
        }
        let dt = t - self.now;
        let eps = 1e-9 * t.abs().max(1.0);
        let mut drained = Vec::new();
        for a in &mut self.active {
            let drain_at = self.now + a.remaining / a.rate;
            if drain_at <= t + eps {
                self.bytes_served += a.remaining;
                a.remaining = 0.0;
                drained.push(a.id);
            } else {
                let moved = a.rate * dt;
                self.bytes_served += moved;
                a.remaining -= moved;
            }
        }
        self.now = t;
        if !drained.is_empty() {
            let floor = self.model.min_latency_us();
            let (done, still): (Vec<_>, Vec<_>) = std::mem::take(&mut self.active).into_iter().partition(|a| a.remaining == 0.0);
            self.active = still;
            for a in done {
                self.waiting.push(((a.submit + floor).max(t), a.id, a.req.owner));
            }
            self.rebalance();
        }
        let mut out: Vec<Completion> = Vec::new();
        self.waiting.retain(|&(at, id, owner)| {
            if at <= t + eps {
                out.push(Completion { id, owner, time_us: t });
                false
            } else {
                true
            }
        });
        out.sort_by_key(|c| (c.owner, c.id));
        out
    }

    /// Runs until the next completion and returns it (and any simultaneous
    /// ones).
    pub fn run_to_next(&mut self) -> Vec<Completion> {
        match self.next_event() {
            Some(t) => self.advance_to(t),
            None => Vec::new(),
        }
    }
}

/// Schedules a static set of requests with given submission times and
/// returns each request's completion time (µs), in input order.
pub fn shared_schedule(model: &StorageModel, requests: &[(f64, DiskRequest)]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&a, &b| {
        requests[a].0.total_cmp(&requests[b].0).then(requests[a].1.owner.cmp(&requests[b].1.owner)).then(a.cmp(&b))
    });
    let mut disk = SharedDisk::new(model);
    let mut done = vec![f64::NAN; requests.len()];
    let mut id_to_input = Vec::with_capacity(requests.len());
    let mut pending = order.into_iter().peekable();
    let mut remaining = requests.len();
    while remaining > 0 {
        let next_submit = pending.peek().map(|&i| requests[i].0);
        let submit_first = match (next_submit, disk.next_event()) {
            (Some(s), Some(e)) => s <= e,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!("requests outstanding but nothing scheduled"),
        };
        let completed = if submit_first {
            let s = next_submit.unwrap().max(disk.now());
            let completed = disk.advance_to(s);
            while let Some(&i) = pending.peek() {
                if requests[i].0 > s {
                    break;
                }
                pending.next();
                disk.submit(requests[i].1);
                id_to_input.push(i);
            }
            completed
        } else {
            disk.run_to_next()
        };
        for c in completed {
            done[id_to_input[c.id]] = c.time_us;
            remaining -= 1;
        }
    }
    done
}
