//! Word and task profiling for run-time prediction.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counter {
    pub count: u64,
    pub steps: u64,
}

impl Counter {
    fn add(&mut self, steps: u64) {
        self.count += 1;
        self.steps += steps;
    }

    /// Rounded mean steps per event.
    pub fn mean(&self) -> Option<u64> {
        (self.count > 0).then(|| (self.steps + self.count / 2) / self.count)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Profile {
    /// Called words by address: executions and steps until return.
    pub words: BTreeMap<u16, Counter>,
    /// Completed task runs by entry address.
    pub runs: BTreeMap<u16, Counter>,
    /// Steps until a scheduling point, by task entry address.
    pub to_suspend: BTreeMap<u16, Counter>,
    /// Slices and steps by task slot.
    pub slices: BTreeMap<u16, Counter>,
}

impl Profile {
    pub fn record_word(&mut self, addr: u16, steps: u64) {
        self.words.entry(addr).or_default().add(steps);
    }

    pub fn record_run(&mut self, entry: u16, steps: u64) {
        self.runs.entry(entry).or_default().add(steps);
    }

    pub fn record_suspension(&mut self, entry: u16, steps: u64) {
        self.to_suspend.entry(entry).or_default().add(steps);
    }

    pub fn record_slice(&mut self, task: u16, steps: u64) {
        self.slices.entry(task).or_default().add(steps);
    }

    /// Predicted steps for the word or task entry at `addr`; `fallback` when
    /// nothing was recorded yet.
    pub fn estimate_runtime(&self, addr: u16, fallback: u64) -> u64 {
        self.words.get(&addr).or(self.runs.get(&addr)).and_then(Counter::mean).unwrap_or(fallback)
    }

    /// Predicted steps until the next scheduling point of a task entry.
    pub fn estimate_to_suspension(&self, entry: u16, fallback: u64) -> u64 {
        self.to_suspend.get(&entry).and_then(Counter::mean).unwrap_or(fallback)
    }
}
