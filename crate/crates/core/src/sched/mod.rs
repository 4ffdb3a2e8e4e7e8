//! Task dispatch: single-tasking, mask-based multi-tasking and energy-aware
//! deadline scheduling.

pub mod energy;
pub mod lsa;
pub mod mask;
pub mod profile;

use crate::vm::{SliceOutcome, Vm, Wake};
use mask::MaskBits;

/// One dispatch decision and its result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dispatch {
    pub task: usize,
    pub wake: Option<Wake>,
    pub outcome: SliceOutcome,
}

/// Single-tasking pass over task `idx`: resume it if its timeout elapsed or
/// its guard holds, then run one slice if it is not suspended.
pub fn schedule_single(vm: &mut Vm, idx: usize) -> Option<SliceOutcome> {
    let t = vm.task(idx)?;
    if !t.is_live() {
        return None;
    }
    if t.pc < 0 {
        let ev = t.event?;
        let w = vm.event_ready(&ev)?;
        vm.wake(idx, w);
    }
    Some(vm.run_slice(idx))
}

/// Multi-tasking dispatcher over the task mask.
///
/// The scan starts after the task that ran last. A task whose awaited event
/// holds is preferred over one whose timeout expired, which is preferred over
/// a plain ready task; within a class the first in scan order wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MultiScheduler {
    pub cur: Option<usize>,
}

impl MultiScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Choose the next task without running it.
    pub fn select(&self, vm: &Vm) -> Option<(usize, Option<Wake>)> {
        if !vm.mask.any() {
            return None;
        }
        let n = vm.tasks.len();
        let first = self.cur.map_or(0, |c| (c + 1) % n);
        let mut timeout = None;
        let mut ready = None;
        for k in 0..n {
            let i = (first + k) % n;
            match vm.mask.get(i) {
                MaskBits::None => {}
                MaskBits::Ready => {
                    if ready.is_none() {
                        let w = vm.task(i).and_then(|t| (t.pc < 0).then_some(Wake::Event));
                        ready = Some((i, w));
                    }
                }
                bits => {
                    let Some(ev) = vm.task(i).and_then(|t| t.event) else { continue };
                    match vm.event_ready(&ev) {
                        Some(Wake::Event) if bits == MaskBits::Event => return Some((i, Some(Wake::Event))),
                        Some(w) if timeout.is_none() => timeout = Some((i, Some(w))),
                        _ => {}
                    }
                }
            }
        }
        timeout.or(ready)
    }

    /// Select, wake and run one slice. When nothing is runnable the clock is
    /// advanced to the earliest pending timeout; `None` means every live task
    /// waits for something only the host can provide (or none is left).
    pub fn step(&mut self, vm: &mut Vm) -> Option<Dispatch> {
        let (task, wake) = match self.select(vm) {
            Some(s) => s,
            None => {
                let at = vm.next_timeout_us()?;
                vm.advance_to_us(at);
                self.select(vm)?
            }
        };
        if let Some(w) = wake {
            vm.wake(task, w);
        }
        self.cur = Some(task);
        let outcome = vm.run_slice(task);
        Some(Dispatch { task, wake, outcome })
    }

    /// Dispatch until no task is runnable or `max_slices` were run.
    pub fn run(&mut self, vm: &mut Vm, max_slices: usize) -> Vec<Dispatch> {
        let mut log = Vec::new();
        while log.len() < max_slices {
            match self.step(vm) {
                Some(d) => log.push(d),
                None => break,
            }
        }
        log
    }
}
