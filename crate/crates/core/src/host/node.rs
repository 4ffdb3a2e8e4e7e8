//! A simulated sensor node: one VM, the multi-task dispatcher, devices and an
//! optional harvester. On low energy the node checkpoints and powers down;
//! once the storage has recharged it restores and carries on.

use std::sync::Arc;

use thiserror::Error;

use super::checkpoint::{self, CheckpointError};
use super::config::NodeConfig;
use super::device::Devices;
use crate::compiler::CompileError;
use crate::dsp;
use crate::ios::IosError;
use crate::isa::{default_tables, IsaTables};
use crate::sched::energy::EnergyAccount;
use crate::sched::{Dispatch, MultiScheduler};
use crate::vm::{Exception, SliceEnd, Vm, VmError};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Ios(#[from] IosError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("node is powered down")]
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStep {
    Ran(Dispatch),
    /// Nothing runnable; the clock moved to the given time.
    Idle(u64),
    /// Power lost after a checkpoint was taken.
    PowerDown(u64),
    /// Power back and the checkpoint restored.
    PowerUp(u64),
    /// Tasks remain but only external input can wake them.
    Blocked,
    /// No live task.
    Done,
    /// Powered down with no harvest left to restart.
    Dead,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PowerStats {
    pub downs: u64,
    pub ups: u64,
    pub checkpoint_bytes: usize,
}

pub struct Node {
    pub cfg: NodeConfig,
    pub vm: Vm,
    pub sched: MultiScheduler,
    pub devices: Devices,
    pub energy: Option<EnergyAccount>,
    pub power: PowerStats,
    /// Tasks that ended with an uncaught exception: (slot, exception).
    pub errors: Vec<(usize, Exception)>,
    saved: Option<Vec<u8>>,
    off_at: Option<u64>,
    tables: Arc<IsaTables>,
}

impl Node {
    pub fn new(cfg: NodeConfig) -> Result<Self, NodeError> {
        Self::with_tables(cfg, default_tables())
    }

    pub fn with_tables(cfg: NodeConfig, tables: Arc<IsaTables>) -> Result<Self, NodeError> {
        let devices = Devices::new(cfg.adc.clone(), cfg.signal.clone());
        devices.lock().injections = cfg.injections.clone();
        let vm = Self::build_vm(&cfg, &devices, &tables)?;
        let energy = cfg.power.as_ref().map(|p| {
            EnergyAccount::new(p.e0_uj, p.capacity_uj, p.p_d1_uw, cfg.vm.t1_ns as f64 / 1000.0, p.cycle.to_trace())
        });
        Ok(Node {
            cfg,
            vm,
            sched: MultiScheduler::new(),
            devices,
            energy,
            power: PowerStats::default(),
            errors: Vec::new(),
            saved: None,
            off_at: None,
            tables,
        })
    }

    fn build_vm(cfg: &NodeConfig, devices: &Devices, tables: &Arc<IsaTables>) -> Result<Vm, NodeError> {
        let mut vm = Vm::with_tables(cfg.vm.clone(), tables.clone())?;
        if cfg.dsp {
            dsp::library::register(&mut vm.ios)?;
        }
        devices.register(&mut vm.ios)?;
        vm.links.peers = cfg.peers.clone();
        Ok(vm)
    }

    pub fn id(&self) -> i16 {
        self.cfg.node_id
    }

    pub fn is_powered(&self) -> bool {
        self.off_at.is_none()
    }

    /// Node time in µs.
    pub fn now_us(&self) -> u64 {
        self.off_at.unwrap_or_else(|| self.vm.now_us())
    }

    /// Compile a program and start it as a task.
    pub fn load(&mut self, src: &str) -> Result<usize, NodeError> {
        if !self.is_powered() {
            return Err(NodeError::Off);
        }
        let info = self.vm.compile(src)?;
        Ok(self.vm.spawn_frame(info.frame)?)
    }

    fn reserve(&self, acct: &EnergyAccount) -> f64 {
        let p = self.cfg.power.as_ref().expect("energy implies power config");
        p.save_below_uj.unwrap_or_else(|| 2.0 * acct.step_cost() * self.cfg.vm.steps as f64)
    }

    fn idle_to(&mut self, t: u64) {
        let now = self.vm.now_us();
        if let Some(a) = &mut self.energy {
            a.advance(now, t.saturating_sub(now), false);
        }
        self.vm.advance_to_us(t);
    }

    fn power_down(&mut self) -> NodeStep {
        let blob = checkpoint::save(&self.vm);
        self.power.downs += 1;
        self.power.checkpoint_bytes = blob.len();
        self.saved = Some(blob);
        let now = self.vm.now_us();
        self.off_at = Some(now);
        // Volatile state is gone; keep an empty VM in place until restore.
        if let Ok(vm) = Vm::with_tables(self.cfg.vm.clone(), self.tables.clone()) {
            self.vm = vm;
        }
        NodeStep::PowerDown(now)
    }

    /// Harvest until the restart level is reached, then restore.
    fn power_up(&mut self) -> Result<NodeStep, NodeError> {
        let (Some(acct), Some(mut t)) = (self.energy.as_mut(), self.off_at) else { return Err(NodeError::Off) };
        let need = self.cfg.power.as_ref().map_or(0.0, |p| p.restart_uj.min(p.capacity_uj));
        while acct.e < need {
            let ps = acct.trace.power_at(t);
            let next = acct.trace.next_change(t);
            if ps <= 0.0 {
                match next {
                    Some(n) => {
                        acct.advance(t, n - t, false);
                        t = n;
                        continue;
                    }
                    None => {
                        self.off_at = Some(t);
                        return Ok(NodeStep::Dead);
                    }
                }
            }
            let dt = (((need - acct.e) * 1e6 / ps).ceil() as u64).max(1);
            let dt = next.map_or(dt, |n| dt.min(n - t));
            acct.advance(t, dt, false);
            t += dt;
        }
        let blob = self.saved.take().ok_or(NodeError::Off)?;
        let mut vm = Self::build_vm(&self.cfg, &self.devices, &self.tables)?;
        checkpoint::restore_into(&mut vm, &blob)?;
        vm.advance_to_us(t);
        self.vm = vm;
        self.off_at = None;
        self.power.ups += 1;
        Ok(NodeStep::PowerUp(t))
    }

    /// Advance the node by one scheduling decision.
    pub fn step(&mut self) -> NodeStep {
        if !self.is_powered() {
            return self.power_up().unwrap_or(NodeStep::Dead);
        }
        self.devices.tick(&mut self.vm);
        if self.vm.live_tasks().next().is_none() {
            return NodeStep::Done;
        }
        if let Some(a) = &self.energy {
            if a.e < self.reserve(a) {
                return self.power_down();
            }
        }
        if self.sched.select(&self.vm).is_some() {
            let t0 = self.vm.now_us();
            let d = self.sched.step(&mut self.vm).expect("selected task runs");
            let t1 = self.vm.now_us();
            if let Some(a) = &mut self.energy {
                a.advance(t0, t1 - t0, true);
            }
            if let SliceEnd::Error(e) = d.outcome.end {
                self.errors.push((d.task, e));
            }
            if matches!(d.outcome.end, SliceEnd::Finished | SliceEnd::Error(_)) {
                self.vm.reap(d.task);
            }
            return NodeStep::Ran(d);
        }
        let now = self.vm.now_us();
        let next = [self.vm.next_timeout_us(), self.devices.next_event_us()].into_iter().flatten().min();
        match next {
            Some(t) => {
                let t = t.max(now + 1);
                self.idle_to(t);
                NodeStep::Idle(t)
            }
            None => NodeStep::Blocked,
        }
    }

    /// Step until done, blocked, dead or `max_steps` decisions were made.
    pub fn run(&mut self, max_steps: usize) -> NodeStep {
        let mut last = NodeStep::Done;
        for _ in 0..max_steps {
            last = self.step();
            if matches!(last, NodeStep::Done | NodeStep::Blocked | NodeStep::Dead) {
                break;
            }
        }
        last
    }

    /// Run a program to completion and return the console text.
    pub fn run_program(&mut self, src: &str, max_steps: usize) -> Result<String, NodeError> {
        self.load(src)?;
        self.run(max_steps);
        Ok(self.vm.output.take_console())
    }
}
