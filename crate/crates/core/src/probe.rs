//! Opt-in instrumentation for counting the work done per candidate.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Thread-safe counters. Pass `None` wherever counting is not wanted.
#[derive(Debug, Default)]
pub struct EvalCounters {
    raycasts: AtomicUsize,
    sdsmm_calls: AtomicUsize,
    riccati_updates: AtomicUsize,
}

impl EvalCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raycasts(&self) -> usize {
        self.raycasts.load(Ordering::Relaxed)
    }

    pub fn sdsmm_calls(&self) -> usize {
        self.sdsmm_calls.load(Ordering::Relaxed)
    }

    pub fn riccati_updates(&self) -> usize {
        self.riccati_updates.load(Ordering::Relaxed)
    }
}

pub(crate) fn count_raycast(c: Option<&EvalCounters>) {
    if let Some(c) = c {
        c.raycasts.fetch_add(1, Ordering::Relaxed);
    }
}

pub(crate) fn count_sdsmm(c: Option<&EvalCounters>) {
    if let Some(c) = c {
        c.sdsmm_calls.fetch_add(1, Ordering::Relaxed);
    }
}

pub(crate) fn count_riccati(c: Option<&EvalCounters>) {
    if let Some(c) = c {
        c.riccati_updates.fetch_add(1, Ordering::Relaxed);
    }
}
