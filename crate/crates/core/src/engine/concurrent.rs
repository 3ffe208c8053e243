use super::{Breakdown, Step};
use crate::disk::{DiskRequest, SharedDisk, StorageModel};

/// Per-session outcome of a concurrent replay.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SessionTiming {
    pub breakdown: Breakdown,
    pub finish_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcurrentRun {
    pub sessions: Vec<SessionTiming>,
    pub makespan_us: f64,
    pub bytes_served: f64,
    pub peak_aggregate_mbps: f64,
}

#[derive(Debug, Default)]
struct Cursor {
    idx: usize,
    ready_at: Option<f64>,
    step_start: f64,
    to_submit: u64,
    outstanding: u64,
    timing: SessionTiming,
}

/// Replays the step lists of sessions that all start at time 0 against one
/// shared disk. Events are ordered by (virtual time, session index).
pub fn run_concurrent(storage: &StorageModel, sessions: &[Vec<Step>]) -> ConcurrentRun {
    let mut disk = SharedDisk::new(storage);
    let mut cursors: Vec<Cursor> = sessions.iter().map(|_| Cursor { ready_at: Some(0.0), ..Default::default() }).collect();

    loop {
        let ready = cursors
            .iter()
            .enumerate()
            .filter(|(i, c)| c.idx < sessions[*i].len())
            .filter_map(|(i, c)| c.ready_at.map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let event = disk.next_event();
        let completions = match (ready, event) {
            (None, None) => break,
            (Some((t, _)), Some(e)) if e <= t => disk.run_to_next(),
            (None, Some(_)) => disk.run_to_next(),
            (Some((t, i)), _) => {
                let done = disk.advance_to(t);
                if done.is_empty() {
                    start_step(&mut disk, &mut cursors[i], i, &sessions[i], t);
                }
                done
            }
        };
        for c in completions {
            let cur = &mut cursors[c.owner];
            cur.outstanding -= 1;
            if cur.outstanding > 0 {
                continue;
            }
            match sessions[c.owner][cur.idx] {
                Step::Batch { class, bytes, width, .. } if cur.to_submit > 0 => {
                    let wave = cur.to_submit.min(width.max(1) as u64);
                    for _ in 0..wave {
                        disk.submit(DiskRequest { owner: c.owner, bytes, class });
                    }
                    cur.to_submit -= wave;
                    cur.outstanding = wave;
                }
                step => {
                    cur.timing.breakdown.add(step.component(), c.time_us - cur.step_start);
                    cur.idx += 1;
                    cur.ready_at = Some(c.time_us);
                }
            }
        }
    }

    let sessions: Vec<SessionTiming> = cursors
        .into_iter()
        .map(|c| SessionTiming { finish_us: c.ready_at.unwrap_or(0.0), ..c.timing })
        .collect();
    ConcurrentRun {
        makespan_us: sessions.iter().map(|s| s.finish_us).fold(0.0, f64::max),
        sessions,
        bytes_served: disk.bytes_served(),
        peak_aggregate_mbps: disk.peak_aggregate_mbps(),
    }
}

fn start_step(disk: &mut SharedDisk<'_>, cur: &mut Cursor, owner: usize, steps: &[Step], t: f64) {
    cur.step_start = t;
    match steps[cur.idx] {
        Step::Cpu { us, component } => {
            cur.timing.breakdown.add(component, us);
            cur.idx += 1;
            cur.ready_at = Some(t + us);
        }
        Step::Read { class, bytes, .. } => {
            disk.submit(DiskRequest { owner, bytes, class });
            cur.outstanding = 1;
            cur.ready_at = None;
        }
        Step::Batch { class, bytes, count, width, .. } => {
            let wave = count.min(width.max(1) as u64);
            for _ in 0..wave {
                disk.submit(DiskRequest { owner, bytes, class });
            }
            cur.to_submit = count - wave;
            cur.outstanding = wave;
            cur.ready_at = None;
        }
    }
}
