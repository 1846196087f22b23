//! Virtual clock and event queue for the discrete-event core.
//!
//! All times are integer microseconds since scenario start. The clock only
//! moves forward when [`Scheduler::pop`] hands out the next event; events at
//! equal timestamps fire in insertion order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

/// Microseconds since scenario start.
pub type Micros = u64;

/// Milliseconds to microseconds, rounded to the nearest tick.
pub fn ms_to_us(ms: f64) -> Micros {
    (ms * 1_000.0).round().max(0.0) as Micros
}

pub fn us_to_ms(us: Micros) -> f64 {
    us as f64 / 1_000.0
}

/// The single scenario clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    now: Micros,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    fn advance_to(&mut self, t: Micros) {
        debug_assert!(t >= self.now, "clock moved backwards: {} -> {}", self.now, t);
        self.now = t;
    }
}

/// Handle returned by [`Scheduler::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("cannot schedule at {at}us, clock is already at {now}us")]
    SchedulingInPast { at: Micros, now: Micros },
}

struct Entry<E> {
    at: Micros,
    id: EventId,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.id == other.id
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, insertion) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.cmp(&self.at).then_with(|| other.id.cmp(&self.id))
    }
}

/// An event popped from the queue together with its firing time.
#[derive(Debug, Clone, PartialEq)]
pub struct Fired<E> {
    pub id: EventId,
    pub at: Micros,
    pub event: E,
}

/// Min-heap of pending events plus the clock they drive.
pub struct Scheduler<E> {
    clock: SimClock,
    heap: BinaryHeap<Entry<E>>,
    next_id: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            clock: SimClock::new(),
            heap: BinaryHeap::new(),
            next_id: 0,
        }
    }

    pub fn now(&self) -> Micros {
        self.clock.now()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn is_idle(&self) -> bool {
        self.heap.is_empty()
    }

    /// Queue `event` to fire at absolute time `at`.
    pub fn schedule(&mut self, event: E, at: Micros) -> Result<EventId, ScheduleError> {
        let now = self.clock.now();
        if at < now {
            return Err(ScheduleError::SchedulingInPast { at, now });
        }
        let id = EventId(self.next_id);
        self.next_id += 1;
        self.heap.push(Entry { at, id, event });
        Ok(id)
    }

    /// Queue `event` to fire `delay` microseconds from now.
    pub fn schedule_in(&mut self, event: E, delay: Micros) -> EventId {
        let at = self.clock.now().saturating_add(delay);
        // `at >= now` by construction.
        self.schedule(event, at).expect("relative schedule is never in the past")
    }

    /// Time of the next pending event, if any.
    pub fn peek_time(&self) -> Option<Micros> {
        self.heap.peek().map(|e| e.at)
    }

    /// Remove the next event and advance the clock to its timestamp.
    pub fn pop(&mut self) -> Option<Fired<E>> {
        let Entry { at, id, event } = self.heap.pop()?;
        self.clock.advance_to(at);
        Some(Fired { id, at, event })
    }
}
