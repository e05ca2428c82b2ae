//! Discrete-event core: simulation clock, a cancellable event queue with
//! FIFO tie-breaking, and seeded per-entity random streams.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

/// Simulation time in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn from_secs(secs: f64) -> Result<SimTime> {
        if !(secs >= 0.0) || !secs.is_finite() {
            return contract(format!("invalid simulation time {secs}"));
        }
        Ok(SimTime(secs))
    }

    /// Panics on negative or non-finite input; meant for constants and tests.
    pub fn secs(secs: f64) -> SimTime {
        SimTime::from_secs(secs).expect("non-negative finite time")
    }

    pub fn as_secs(self) -> f64 {
        self.0
    }

    pub fn after(self, delta: f64) -> SimTime {
        debug_assert!(delta >= 0.0);
        SimTime(self.0 + delta.max(0.0))
    }
}

impl Eq for SimTime {}

impl std::hash::Hash for SimTime {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

/// Identifies a scheduled event for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle {
    at: SimTime,
    seq: u64,
}

impl EventHandle {
    pub fn fire_at(&self) -> SimTime {
        self.at
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }
}

/// Event queue ordered by `(fire_at, seq)`.
#[derive(Debug)]
pub struct Scheduler<P> {
    now: SimTime,
    next_seq: u64,
    queue: BTreeMap<(SimTime, u64), P>,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler { now: SimTime::ZERO, next_seq: 0, queue: BTreeMap::new() }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<EventHandle> {
        if fire_at < self.now {
            return contract(format!(
                "event scheduled at {fire_at} but the clock is already {}",
                self.now
            ));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert((fire_at, seq), payload);
        Ok(EventHandle { at: fire_at, seq })
    }

    pub fn schedule_in(&mut self, delay: f64, payload: P) -> Result<EventHandle> {
        if !(delay >= 0.0) {
            return contract(format!("negative or NaN delay {delay}"));
        }
        let at = self.now.after(delay);
        self.schedule(at, payload)
    }

    /// Returns true iff the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.queue.remove(&(handle.at, handle.seq)).is_some()
    }

    /// Removes and returns the next event due at or before `limit`, advancing the clock to it.
    pub fn pop_due(&mut self, limit: SimTime) -> Option<(SimTime, u64, P)> {
        let (&(at, seq), _) = self.queue.first_key_value()?;
        if at > limit {
            return None;
        }
        let payload = self.queue.remove(&(at, seq)).expect("key just observed");
        self.now = at;
        Some((at, seq, payload))
    }

    /// Moves the clock forward without dispatching. Fails if events before `t` are still queued.
    pub fn advance_to(&mut self, t: SimTime) -> Result<()> {
        if t < self.now {
            return contract(format!("cannot move clock back from {} to {t}", self.now));
        }
        if let Some((&(at, _), _)) = self.queue.first_key_value() {
            if at < t {
                return contract(format!("undispatched event at {at} before {t}"));
            }
        }
        self.now = t;
        Ok(())
    }

    /// Dispatches every event with `fire_at <= t_end` in order, then sets the clock to `t_end`.
    /// The handler may schedule further events through the scheduler reference it receives.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<usize>
    where
        F: FnMut(&mut Scheduler<P>, SimTime, P) -> Result<()>,
    {
        if t_end < self.now {
            return contract(format!("run_until({t_end}) is before the clock {}", self.now));
        }
        let mut count = 0;
        while let Some((at, _, payload)) = self.pop_due(t_end) {
            handler(self, at, payload)?;
            count += 1;
        }
        self.now = t_end;
        Ok(count)
    }
}

/// Label of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamId {
    /// Scenario-level draws (random energies, random start times).
    Scenario,
    Node(u32),
    Session(u32),
}

impl StreamId {
    fn word(self) -> u64 {
        match self {
            StreamId::Scenario => 0,
            StreamId::Node(n) => (1 << 32) | u64::from(n),
            StreamId::Session(s) => (2 << 32) | u64::from(s),
        }
    }
}

/// A reproducible random stream: ChaCha8 keyed by the run seed, with the
/// stream label selecting an independent ChaCha stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id.word());
        RngStream { seed, id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return contract(format!("uniform bounds out of order: [{lo}, {hi}]"));
        }
        let u: f64 = self.rng.gen();
        Ok(lo + (hi - lo) * u)
    }

    /// Exponential with the given mean, by inversion of one uniform draw.
    pub fn exponential(&mut self, mean: f64) -> Result<f64> {
        if !(mean > 0.0) {
            return contract(format!("exponential mean must be positive, got {mean}"));
        }
        let u: f64 = self.rng.gen();
        Ok(-mean * (1.0 - u).ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_at_now_is_dispatched() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::ZERO, "a").unwrap();
        let mut seen = vec![];
        s.run_until(SimTime::ZERO, |_, _, p| {
            seen.push(p);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec!["a"]);
    }

    #[test]
    fn equal_times_dispatch_in_insertion_order() {
        let mut s = Scheduler::new();
        for _ in 0..7 {
            s.schedule(SimTime::secs(1.0), 0).unwrap();
        }
        let h7 = s.schedule(SimTime::secs(5.0), 7).unwrap();
        let h8 = s.schedule(SimTime::secs(5.0), 8).unwrap();
        assert_eq!((h7.seq(), h8.seq()), (7, 8));
        let mut order = vec![];
        s.run_until(SimTime::secs(10.0), |_, _, p| {
            order.push(p);
            Ok(())
        })
        .unwrap();
        assert_eq!(&order[7..], &[7, 8]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.advance_to(SimTime::secs(4.0)).unwrap();
        assert!(matches!(s.schedule(SimTime::secs(3.0), ()), Err(crate::SimError::Contract(_))));
    }

    #[test]
    fn cancel_semantics() {
        let mut s = Scheduler::new();
        let a = s.schedule(SimTime::secs(1.0), 1).unwrap();
        let b = s.schedule(SimTime::secs(2.0), 2).unwrap();
        assert!(s.cancel(b));
        assert!(!s.cancel(b));
        let mut fired = vec![];
        s.run_until(SimTime::secs(3.0), |_, _, p| {
            fired.push(p);
            Ok(())
        })
        .unwrap();
        assert_eq!(fired, vec![1]);
        assert!(!s.cancel(a));
    }

    #[test]
    fn run_until_on_empty_queue_sets_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        let n = s.run_until(SimTime::secs(800.0), |_, _, _| Ok(())).unwrap();
        assert_eq!(n, 0);
        assert_eq!(s.now(), SimTime::secs(800.0));
    }

    #[test]
    fn run_until_is_inclusive_of_the_bound() {
        let mut s = Scheduler::new();
        for t in [1.0, 2.0, 3.0] {
            s.schedule(SimTime::secs(t), t).unwrap();
        }
        let n = s.run_until(SimTime::secs(2.0), |_, _, _| Ok(())).unwrap();
        assert_eq!(n, 2);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn events_scheduled_during_dispatch_keep_total_order() {
        // Every dispatched event at t schedules a child at t + 0.5 (earlier than some
        // already-queued events). The dispatch log must equal its own sort by (time, seq).
        let mut s = Scheduler::new();
        for t in [1.0, 2.0, 3.0, 4.0] {
            s.schedule(SimTime::secs(t), 0u32).unwrap();
        }
        let mut log: Vec<(SimTime, u32)> = vec![];
        while let Some((at, seq, depth)) = s.pop_due(SimTime::secs(100.0)) {
            log.push((at, seq as u32));
            if depth < 2 {
                s.schedule(at.after(0.5), depth + 1).unwrap();
            }
        }
        let mut sorted = log.clone();
        sorted.sort();
        assert_eq!(log, sorted);
        assert_eq!(log.len(), 4 * 3);
    }

    #[test]
    fn uniform_degenerate_interval() {
        let mut r = RngStream::new(1, StreamId::Node(0));
        assert_eq!(r.uniform(0.0, 0.0).unwrap(), 0.0);
        assert!(r.uniform(1.0, 0.0).is_err());
    }

    #[test]
    fn exponential_rejects_non_positive_mean() {
        let mut r = RngStream::new(1, StreamId::Node(0));
        assert!(r.exponential(0.0).is_err());
        assert!(r.exponential(-1.0).is_err());
    }

    #[test]
    fn exponential_sample_mean() {
        let mut r = RngStream::new(42, StreamId::Session(3));
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| r.exponential(0.3333).unwrap()).sum();
        let mean = sum / n as f64;
        assert!((mean - 0.3333).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn identical_seed_identical_draws() {
        let mut a = RngStream::new(9, StreamId::Node(4));
        let mut b = RngStream::new(9, StreamId::Node(4));
        let xa: Vec<f64> = (0..100).map(|_| a.uniform(0.0, 1.0).unwrap()).collect();
        let xb: Vec<f64> = (0..100).map(|_| b.uniform(0.0, 1.0).unwrap()).collect();
        assert_eq!(xa, xb);
        let mut c = RngStream::new(9, StreamId::Node(5));
        let xc: Vec<f64> = (0..100).map(|_| c.uniform(0.0, 1.0).unwrap()).collect();
        assert_ne!(xa, xc);
    }
}
