//! Lazy scheduling under energy constraints.
//!
//! Ready tasks are ordered by (deadline, -priority, arrival, id). The head
//! task whose estimated run time fits the predicted system run time `t_s`
//! gets the next slice; its step budget is capped by the energy left. A task
//! still unfinished at its deadline is completed at once by draining its
//! remaining demand from storage.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::energy::{energy_uj, EnergyAccount};
use crate::vm::{SliceEnd, Vm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaTask {
    pub id: usize,
    /// Negative: event-based IO task; positive: greedy computation.
    pub priority: i16,
    pub arrival_us: u64,
    pub deadline_us: u64,
    /// Estimated energy demand `e_i` in µJ.
    pub demand_uj: f64,
    /// Estimated run time `t_j` in µs.
    pub est_us: f64,
    /// IO tasks run to completion once selected.
    pub io: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsaConfig {
    /// Step budget of one VM slice.
    pub slice_steps: u64,
    /// Stop once the time reaches this point.
    pub horizon_us: u64,
}

impl Default for LsaConfig {
    fn default() -> Self {
        LsaConfig { slice_steps: 64, horizon_us: u64::MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceRun {
    pub steps: u64,
    pub finished: bool,
}

/// Runs the work behind a scheduled task.
pub trait SliceExecutor {
    /// Execute up to `max_steps` steps of task `id` starting at `now_us`.
    fn run(&mut self, id: usize, max_steps: u64, now_us: u64) -> SliceRun;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Run,
    /// Completion at the deadline.
    Forced,
    Idle,
}

/// One trace line: state after the record's work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub time_us: u64,
    pub task: Option<usize>,
    pub kind: RecordKind,
    pub steps: u64,
    pub energy_uj: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LsaReport {
    pub trace: Vec<SliceRecord>,
    /// (task, finish time) in completion order.
    pub completed: Vec<(usize, u64)>,
    /// Tasks completed at their deadline.
    pub forced: Vec<usize>,
    /// Forced completions the storage could not cover.
    pub missed: Vec<usize>,
    /// Demand above capacity with no harvest able to carry the drain.
    pub infeasible: Vec<usize>,
    pub end_us: u64,
}

impl LsaReport {
    /// Task ids of run slices, consecutive repeats collapsed.
    pub fn run_order(&self) -> Vec<usize> {
        let mut v: Vec<usize> = Vec::new();
        for r in &self.trace {
            if let (RecordKind::Run, Some(t)) = (r.kind, r.task) {
                if v.last() != Some(&t) {
                    v.push(t);
                }
            }
        }
        v
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.trace {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct Slot {
    task: LsaTask,
    spent_uj: f64,
    ran_us: u64,
    done: bool,
}

fn key(t: &LsaTask, demote: bool) -> (bool, u64, i32, u64, usize) {
    (demote && t.priority > 0, t.deadline_us, -(t.priority as i32), t.arrival_us, t.id)
}

pub fn schedule_lsa(
    tasks: &[LsaTask],
    acct: &mut EnergyAccount,
    exec: &mut dyn SliceExecutor,
    cfg: &LsaConfig,
) -> LsaReport {
    let mut rep = LsaReport::default();
    let mut slots: Vec<Slot> =
        tasks.iter().map(|t| Slot { task: t.clone(), spent_uj: 0.0, ran_us: 0, done: false }).collect();
    let harvest_covers = acct.trace.max_power() >= acct.p_d1;
    for s in &slots {
        if acct.c > 0.0 && s.task.demand_uj > acct.c && !harvest_covers {
            rep.infeasible.push(s.task.id);
        }
    }
    let t1 = acct.t1_us;
    let slice_us = ((cfg.slice_steps as f64 * t1).ceil() as u64).max(1);
    let dur = |steps: u64| (steps as f64 * t1).round() as u64;
    let mut t = slots.iter().map(|s| s.task.arrival_us).min().unwrap_or(0);
    let mut last_t = t;
    // Idle from wherever the account stands up to `t`.
    let sync = |acct: &mut EnergyAccount, last_t: &mut u64, t: u64| {
        if t > *last_t {
            acct.advance(*last_t, t - *last_t, false);
            *last_t = t;
        }
    };

    while t < cfg.horizon_us {
        sync(acct, &mut last_t, t);
        let mut ready: Vec<usize> =
            (0..slots.len()).filter(|&i| !slots[i].done && slots[i].task.arrival_us <= t).collect();

        let demote = acct.c > 0.0 && acct.e < energy_uj(acct.p_d1, slice_us as f64);
        ready.sort_by_key(|&i| key(&slots[i].task, demote));

        // Deadline completions.
        let mut forced_any = false;
        for &i in &ready {
            if t < slots[i].task.deadline_us {
                continue;
            }
            forced_any = true;
            let run = exec.run(slots[i].task.id, u64::MAX, t);
            let need = (slots[i].task.demand_uj - slots[i].spent_uj).max(0.0);
            let cost = energy_uj(acct.p_d1, run.steps as f64 * t1).max(need);
            let short = acct.ledger.shortfall;
            acct.drain(cost);
            let s = &mut slots[i];
            s.spent_uj += cost;
            s.done = true;
            rep.forced.push(s.task.id);
            if acct.ledger.shortfall > short {
                rep.missed.push(s.task.id);
            }
            rep.completed.push((s.task.id, t));
            rep.trace.push(SliceRecord {
                time_us: t,
                task: Some(s.task.id),
                kind: RecordKind::Forced,
                steps: run.steps,
                energy_uj: acct.e,
            });
        }
        if forced_any {
            continue;
        }

        let next_arrival = slots.iter().filter(|s| !s.done && s.task.arrival_us > t).map(|s| s.task.arrival_us).min();
        if ready.is_empty() {
            match next_arrival {
                Some(a) => {
                    t = a.min(cfg.horizon_us);
                    continue;
                }
                None => break,
            }
        }

        let ts = acct.runtime_us(t);
        let pick = ready.iter().copied().find(|&i| {
            let s = &slots[i];
            let tj = (s.task.est_us - s.ran_us as f64).max(t1);
            tj <= ts
        });
        let Some(i) = pick else {
            // Lazy wait: let the storage fill until something changes.
            let next_deadline = ready.iter().map(|&i| slots[i].task.deadline_us).min().unwrap_or(u64::MAX);
            let mut until = (t + slice_us).min(next_deadline);
            if let Some(a) = next_arrival {
                until = until.min(a);
            }
            if let Some(c) = acct.trace.next_change(t) {
                until = until.min(c);
            }
            let until = until.max(t + 1);
            rep.trace.push(SliceRecord { time_us: t, task: None, kind: RecordKind::Idle, steps: 0, energy_uj: acct.e });
            t = until;
            continue;
        };

        let id = slots[i].task.id;
        let mut budget = if slots[i].task.io { u64::MAX } else { cfg.slice_steps };
        if ts.is_finite() {
            budget = budget.min(((ts / t1).floor() as u64).max(1));
        }
        let run = exec.run(id, budget, t);
        let dt = if run.steps == 0 && !run.finished { slice_us } else { dur(run.steps) };
        acct.advance(t, dt, run.steps > 0);
        t += dt;
        last_t = t;
        let s = &mut slots[i];
        s.spent_uj += energy_uj(acct.p_d1, dt as f64);
        s.ran_us += dt;
        rep.trace.push(SliceRecord { time_us: t, task: Some(id), kind: RecordKind::Run, steps: run.steps, energy_uj: acct.e });
        if run.finished {
            s.done = true;
            rep.completed.push((id, t));
        }
    }
    sync(acct, &mut last_t, t.min(cfg.horizon_us));
    rep.end_us = t;
    rep
}

/// Executor over abstract tasks needing a fixed number of steps each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticExecutor {
    pub remaining: Vec<u64>,
}

impl SliceExecutor for SyntheticExecutor {
    fn run(&mut self, id: usize, max_steps: u64, _now_us: u64) -> SliceRun {
        let r = &mut self.remaining[id];
        let steps = (*r).min(max_steps);
        *r -= steps;
        SliceRun { steps, finished: *r == 0 }
    }
}

/// Executor that runs VM tasks; LSA task `id` maps to VM task slot `slots[id]`.
pub struct VmExecutor<'a> {
    pub vm: &'a mut Vm,
    pub slots: Vec<usize>,
}

impl SliceExecutor for VmExecutor<'_> {
    fn run(&mut self, id: usize, max_steps: u64, now_us: u64) -> SliceRun {
        let idx = self.slots[id];
        self.vm.advance_to_us(now_us);
        self.vm.poll_events();
        let mut steps = 0u64;
        loop {
            let chunk = (max_steps - steps).min(u32::MAX as u64) as u32;
            let o = self.vm.run_slice_with(idx, chunk, u64::MAX);
            steps += o.steps as u64;
            match o.end {
                SliceEnd::Finished | SliceEnd::Error(_) => return SliceRun { steps, finished: true },
                SliceEnd::Budget if steps < max_steps => continue,
                _ => return SliceRun { steps, finished: false },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::energy::PowerTrace;

    fn task(id: usize, d: u64, r: i16, a: u64, steps: u64) -> LsaTask {
        LsaTask {
            id,
            priority: r,
            arrival_us: a,
            deadline_us: d,
            demand_uj: energy_uj(1000.0, steps as f64),
            est_us: steps as f64,
            io: false,
        }
    }

    #[test]
    fn single_task_ample_energy() {
        let ts = [task(0, 10_000, 1, 0, 200)];
        let mut acct = EnergyAccount::new(1e3, 1e3, 1000.0, 1.0, PowerTrace::constant(0.0));
        let mut ex = SyntheticExecutor { remaining: vec![200] };
        let rep = schedule_lsa(&ts, &mut acct, &mut ex, &LsaConfig::default());
        assert_eq!(rep.completed, vec![(0, 200)]);
        assert!(rep.forced.is_empty());
        assert!(rep.trace.len() >= 4);
        assert!((acct.e - (1e3 - energy_uj(1000.0, 200.0))).abs() < 1e-9);
    }

    #[test]
    fn zero_capacity_is_edf() {
        let ts = [task(0, 900, 0, 0, 100), task(1, 300, 0, 0, 100), task(2, 500, 5, 50, 100)];
        let mut acct = EnergyAccount::new(0.0, 0.0, 1000.0, 1.0, PowerTrace::constant(10.0));
        let mut ex = SyntheticExecutor { remaining: vec![100; 3] };
        let rep = schedule_lsa(&ts, &mut acct, &mut ex, &LsaConfig::default());
        assert_eq!(rep.run_order(), vec![1, 2, 0]);
    }

    #[test]
    fn lazy_waits_for_energy() {
        // 20 µJ stored, net drain 500 µW: t_s = 40 ms, the task wants 50 ms.
        let ts = [task(0, 1_000_000, 1, 0, 50_000)];
        let mut acct = EnergyAccount::new(20.0, 100.0, 1000.0, 1.0, PowerTrace::constant(500.0));
        let mut ex = SyntheticExecutor { remaining: vec![50_000] };
        let rep = schedule_lsa(&ts, &mut acct, &mut ex, &LsaConfig { slice_steps: 1000, horizon_us: u64::MAX });
        assert_eq!(rep.trace[0].kind, RecordKind::Idle);
        assert_eq!(rep.completed.len(), 1);
        assert!(rep.missed.is_empty());
        assert!(acct.imbalance().abs() < 1e-6);
    }

    #[test]
    fn deadline_forces_completion() {
        let ts = [task(0, 100, 1, 0, 1000)];
        let mut acct = EnergyAccount::new(0.5, 1.0, 1000.0, 1.0, PowerTrace::constant(0.0));
        let mut ex = SyntheticExecutor { remaining: vec![1000] };
        let rep = schedule_lsa(&ts, &mut acct, &mut ex, &LsaConfig::default());
        assert_eq!(rep.forced, vec![0]);
        assert_eq!(rep.missed, vec![0]);
        assert_eq!(acct.e, 0.0);
    }

    #[test]
    fn infeasible_reported() {
        let mut t = task(0, 100, 1, 0, 10);
        t.demand_uj = 50.0;
        let mut acct = EnergyAccount::new(1.0, 10.0, 1000.0, 1.0, PowerTrace::constant(100.0));
        let mut ex = SyntheticExecutor { remaining: vec![10] };
        let rep = schedule_lsa(&[t], &mut acct, &mut ex, &LsaConfig::default());
        assert_eq!(rep.infeasible, vec![0]);
    }

    #[test]
    fn trace_csv() {
        let ts = [task(0, 10_000, 1, 0, 100)];
        let mut acct = EnergyAccount::new(1e3, 1e3, 1000.0, 1.0, PowerTrace::constant(0.0));
        let mut ex = SyntheticExecutor { remaining: vec![100] };
        let rep = schedule_lsa(&ts, &mut acct, &mut ex, &LsaConfig::default());
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("time_us,task,kind,steps,energy_uj"));
        assert_eq!(s.lines().count(), rep.trace.len() + 1);
    }
}
