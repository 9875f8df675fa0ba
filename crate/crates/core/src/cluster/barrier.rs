// SPDX-License-Identifier: Apache-2.0

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub(crate) const POLL: Duration = Duration::from_millis(20);

/// Run-wide cancellation flag, set by the first failing worker.
#[derive(Debug, Default)]
pub struct CancelToken(AtomicBool);

impl CancelToken {
    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    pub fn check(&self) -> Result<()> {
        if self.is_cancelled() {
            Err(Error::Cancelled)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug)]
struct State {
    arrived: usize,
    generation: u64,
}

/// Reusable barrier with a watchdog and cancellation.
#[derive(Debug)]
pub struct Barrier {
    name: String,
    parties: usize,
    state: Mutex<State>,
    cv: Condvar,
    timeout: Duration,
}

impl Barrier {
    pub fn new(name: impl Into<String>, parties: usize, timeout: Duration) -> Self {
        assert!(parties > 0);
        Barrier {
            name: name.into(),
            parties,
            state: Mutex::new(State {
                arrived: 0,
                generation: 0,
            }),
            cv: Condvar::new(),
            timeout,
        }
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    /// Blocks until all parties arrive, the run is cancelled, or the
    /// watchdog fires.
    pub fn wait(&self, cancel: &CancelToken) -> Result<()> {
        let mut state = self.state.lock().unwrap();
        let generation = state.generation;
        state.arrived += 1;
        if state.arrived == self.parties {
            state.arrived = 0;
            state.generation += 1;
            self.cv.notify_all();
            return Ok(());
        }
        let start = Instant::now();
        loop {
            let (guard, _) = self.cv.wait_timeout(state, POLL).unwrap();
            state = guard;
            if state.generation != generation {
                return Ok(());
            }
            if cancel.is_cancelled() {
                return Err(Error::Cancelled);
            }
            if start.elapsed() >= self.timeout {
                return Err(Error::Deadlock {
                    what: format!(
                        "barrier `{}` ({} of {} arrived)",
                        self.name, state.arrived, self.parties
                    ),
                    secs: self.timeout.as_secs(),
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn single_party_returns_immediately() {
        let b = Barrier::new("b", 1, Duration::from_secs(1));
        let c = CancelToken::default();
        b.wait(&c).unwrap();
        b.wait(&c).unwrap();
    }

    #[test]
    fn counter_visible_after_barrier() {
        let nc = 4;
        let b = Barrier::new("b", nc, Duration::from_secs(10));
        let c = CancelToken::default();
        let counter = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..nc {
                s.spawn(|| {
                    counter.fetch_add(1, Ordering::SeqCst);
                    b.wait(&c).unwrap();
                    assert_eq!(counter.load(Ordering::SeqCst), nc);
                });
            }
        });
    }

    #[test]
    fn randomized_arrivals_never_leak_pre_barrier_values() {
        use crate::rng::RngStream;
        let workers = 8;
        let b = Barrier::new("stress", workers, Duration::from_secs(30));
        let c = CancelToken::default();
        let slots: Vec<AtomicUsize> = (0..workers).map(|_| AtomicUsize::new(0)).collect();
        std::thread::scope(|s| {
            for w in 0..workers {
                let (b, c, slots) = (&b, &c, &slots);
                s.spawn(move || {
                    let mut rng = RngStream::new(77, w as u64);
                    for trial in 1..=100usize {
                        std::thread::sleep(Duration::from_micros(rng.below(300)));
                        slots[w].store(trial, Ordering::SeqCst);
                        b.wait(c).unwrap();
                        for slot in slots.iter() {
                            assert!(slot.load(Ordering::SeqCst) >= trial);
                        }
                        b.wait(c).unwrap();
                    }
                });
            }
        });
    }

    #[test]
    fn missing_party_trips_watchdog() {
        let b = Barrier::new("lonely", 2, Duration::from_millis(100));
        let c = CancelToken::default();
        assert!(matches!(b.wait(&c), Err(Error::Deadlock { .. })));
    }

    #[test]
    fn cancellation_releases_waiters() {
        let b = Barrier::new("c", 2, Duration::from_secs(30));
        let c = CancelToken::default();
        std::thread::scope(|s| {
            let h = s.spawn(|| b.wait(&c));
            std::thread::sleep(Duration::from_millis(50));
            c.cancel();
            assert!(matches!(h.join().unwrap(), Err(Error::Cancelled)));
        });
    }
}
