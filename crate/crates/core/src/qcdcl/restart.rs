/// Nested restart schedule: the inner limit grows geometrically until it
/// passes the outer limit, at which point the outer limit grows and the inner
/// one starts over from its base.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartScheduler {
    base: f64,
    inner: f64,
    outer: f64,
    growth: f64,
    since_restart: u64,
}

impl RestartScheduler {
    pub fn new(inner: u64, outer: u64, growth: f64) -> RestartScheduler {
        let base = inner.max(1) as f64;
        RestartScheduler {
            base,
            inner: base,
            outer: (outer.max(1) as f64).max(base),
            growth: growth.max(1.0 + f64::EPSILON),
            since_restart: 0,
        }
    }

    /// Learned constraints (conflicts plus solutions) allowed before the next restart.
    pub fn limit(&self) -> u64 {
        self.inner.round() as u64
    }

    pub fn outer(&self) -> u64 {
        self.outer.round() as u64
    }

    /// Counts one learning event; returns `true` when a restart is due.
    pub fn on_learn(&mut self) -> bool {
        self.since_restart += 1;
        self.since_restart >= self.limit()
    }

    pub fn since_restart(&self) -> u64 {
        self.since_restart
    }

    /// Advances the schedule after a restart.
    pub fn on_restart(&mut self) {
        self.since_restart = 0;
        self.inner *= self.growth;
        if self.inner > self.outer {
            self.outer *= self.growth;
            self.inner = self.base;
        }
    }
}
