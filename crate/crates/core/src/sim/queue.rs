use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::reroute::{priority_drop_decision, QueuedFrame};

pub const DEFAULT_QUEUE_FRAMES: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Tail,
    Priority,
    PolicerViolate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EnqueueResult<T> {
    /// Accepted; `evicted` lists queued entries dropped to make room.
    Enqueued { evicted: Vec<T> },
    Dropped(DropReason),
}

/// FIFO of frames waiting for an egress link. The frame being serialized
/// is not counted against the capacity.
#[derive(Clone, Debug)]
pub struct PortQueue<T> {
    capacity: usize,
    entries: VecDeque<(QueuedFrame, T)>,
}

impl<T> PortQueue<T> {
    pub fn new(capacity: usize) -> Self {
        PortQueue { capacity, entries: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn pop(&mut self) -> Option<(QueuedFrame, T)> {
        self.entries.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(QueuedFrame, T)> {
        self.entries.iter()
    }

    /// Appends a frame, or decides what to drop when full. With a
    /// priority floor the arriving frame may evict queued frames below
    /// both the floor and its own priority; otherwise it is tail-dropped.
    pub fn enqueue_or_drop(&mut self, frame: QueuedFrame, payload: T, priority_floor: Option<u8>) -> EnqueueResult<T> {
        if self.entries.len() < self.capacity {
            self.entries.push_back((frame, payload));
            return EnqueueResult::Enqueued { evicted: Vec::new() };
        }
        let Some(floor) = priority_floor else {
            return EnqueueResult::Dropped(DropReason::Tail);
        };
        let snapshot: Vec<QueuedFrame> = self.entries.iter().map(|(q, _)| *q).collect();
        let victims = priority_drop_decision(&snapshot, 1, floor.min(frame.priority));
        if victims.is_empty() {
            return EnqueueResult::Dropped(DropReason::Tail);
        }
        let mut evicted = Vec::with_capacity(victims.len());
        let mut kept = VecDeque::with_capacity(self.entries.len());
        for (q, p) in self.entries.drain(..) {
            if victims.contains(&q.frame_id) {
                evicted.push(p);
            } else {
                kept.push_back((q, p));
            }
        }
        self.entries = kept;
        self.entries.push_back((frame, payload));
        EnqueueResult::Enqueued { evicted }
    }
}
