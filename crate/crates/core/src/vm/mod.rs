//! Bytecode interpreter: tasks, the bounded execution loop, suspension and
//! exception dispatch.

mod ops;
pub mod io;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{self, CompileEnv, CompileError, CompileInfo, CompileOptions};
use crate::ios::{handle_index, Ios};
use crate::isa::{default_tables, IsaTables, LookupMode, Opcodes};
use crate::memory::{Cell, CodeSegment, Dictionary, FrameId, MemError, Stack};
use crate::sched::mask::{MaskBits, TaskMask};
use crate::sched::profile::Profile;
pub use io::{Links, OutItem, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Error, Serialize, Deserialize)]
pub enum Exception {
    #[error("trap")]
    Trap,
    #[error("stack")]
    Stack,
    #[error("interrupt")]
    Interrupt,
    #[error("io")]
    Io,
    #[error("timeout")]
    Timeout,
    #[error("divbyzero")]
    DivByZero,
    #[error("user exception {0}")]
    User(i16),
}

impl Exception {
    pub const USER_MIN: i16 = 16;

    pub fn code(self) -> i16 {
        match self {
            Exception::Trap => 1,
            Exception::Stack => 2,
            Exception::Interrupt => 3,
            Exception::Io => 4,
            Exception::Timeout => 5,
            Exception::DivByZero => 6,
            Exception::User(n) => n,
        }
    }

    pub fn from_code(c: i32) -> Option<Exception> {
        Some(match c {
            1 => Exception::Trap,
            2 => Exception::Stack,
            3 => Exception::Interrupt,
            4 => Exception::Io,
            5 => Exception::Timeout,
            6 => Exception::DivByZero,
            n if (Self::USER_MIN as i32..=i16::MAX as i32).contains(&n) => Exception::User(n as i16),
            _ => return None,
        })
    }
}

impl From<MemError> for Exception {
    fn from(_: MemError) -> Self {
        Exception::Stack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VmConfig {
    /// Code segment bytes.
    pub cs: usize,
    /// Data, return and loop stack cells, shared by all task slots.
    pub ds: usize,
    pub rs: usize,
    pub fs: usize,
    pub max_tasks: usize,
    /// Instruction budget per slice.
    pub steps: u32,
    /// Time budget per slice (µs).
    pub longest_us: u64,
    /// Simulated cost of one instruction (ns).
    pub t1_ns: u64,
    pub max_fios: usize,
    pub max_dios: usize,
    pub dict_capacity: usize,
    /// Cells buffered per outgoing link before senders block.
    pub link_capacity: usize,
    /// Raise `interrupt` in a task whose previous slice was cut by the time budget.
    pub preempt_interrupt: bool,
    pub lookup: LookupMode,
    pub profile: bool,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig {
            cs: 1024,
            ds: 256,
            rs: 128,
            fs: 64,
            max_tasks: 8,
            steps: 64,
            longest_us: 1000,
            t1_ns: 1000,
            max_fios: 32,
            max_dios: 16,
            dict_capacity: 64,
            link_capacity: 64,
            preempt_interrupt: true,
            lookup: LookupMode::Pht,
            profile: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task table full")]
    TaskTableFull,
    #[error("no such task {0}")]
    NoTask(usize),
    #[error("no such frame {0}")]
    NoFrame(FrameId),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Why a suspended task waits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Yield,
    Timeout { at_us: u64 },
    /// Wait for a guarded variable to equal `value`, or until `timeout_at_us`
    /// (`u64::MAX` for none).
    Guard { var: Cell, value: Cell, timeout_at_us: u64 },
    Input,
    Receive { src: Cell },
    Send { dst: Cell, cells: u16 },
}

impl Event {
    pub fn mask_bits(&self) -> MaskBits {
        match self {
            Event::Yield => MaskBits::Ready,
            Event::Timeout { .. } => MaskBits::Timeout,
            _ => MaskBits::Event,
        }
    }
}

/// How a suspended task was woken; consumed by the re-executed blocking op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wake {
    Event,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskState {
    Ready,
    WaitTime,
    WaitEvent,
    Running,
    Finished,
}

impl TaskState {
    pub fn mask_bits(self) -> MaskBits {
        match self {
            TaskState::Ready => MaskBits::Ready,
            TaskState::WaitTime => MaskBits::Timeout,
            TaskState::WaitEvent => MaskBits::Event,
            TaskState::Running | TaskState::Finished => MaskBits::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatchPoint {
    pub pc: u16,
    pub rs: u16,
    pub fs: u16,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    pub steps: u64,
    pub slices: u64,
    pub suspensions: u64,
    /// Steps since the last suspension (or start).
    pub since_suspend: u64,
}

pub(crate) const RS_TASK_END: u16 = 0xffff;
pub(crate) const RS_HANDLER: u16 = 0xfffe;
pub(crate) const RS_NESTED: u16 = 0xfffd;

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: u16,
    pub frame: FrameId,
    /// Resume address; `!addr` (negative) while suspended.
    pub pc: i32,
    pub entry: u16,
    pub ds: Stack,
    pub rs: Stack,
    pub fs: Stack,
    pub state: TaskState,
    pub event: Option<Event>,
    pub wake: Option<Wake>,
    pub catch: Option<CatchPoint>,
    pub pending: Option<Cell>,
    pub in_handler: bool,
    pub preempted: bool,
    pub priority: i16,
    pub deadline_us: u64,
    pub arrival_us: u64,
    pub error: Option<Exception>,
    pub stats: TaskStats,
    /// Profiling shadow of the return stack: (word, steps at entry, rs depth).
    pub calls: Vec<(u16, u64, u16)>,
    ip: usize,
    op_pc: usize,
}

impl Task {
    pub(crate) fn new(id: u16, frame: FrameId, entry: u16, cfg: &VmConfig) -> Self {
        let n = cfg.max_tasks.max(1);
        Task {
            id,
            frame,
            pc: entry as i32,
            entry,
            ds: Stack::new(cfg.ds / n),
            rs: Stack::new(cfg.rs / n),
            fs: Stack::new(cfg.fs / n),
            state: TaskState::Ready,
            event: None,
            wake: None,
            catch: None,
            pending: None,
            in_handler: false,
            preempted: false,
            priority: 0,
            deadline_us: u64::MAX,
            arrival_us: 0,
            error: None,
            stats: TaskStats::default(),
            calls: Vec::new(),
            ip: entry as usize,
            op_pc: entry as usize,
        }
    }

    pub fn is_suspended(&self) -> bool {
        self.pc < 0
    }

    pub fn is_live(&self) -> bool {
        self.state != TaskState::Finished
    }

    /// Resume address regardless of suspension.
    pub fn resume_pc(&self) -> u16 {
        if self.pc < 0 { !self.pc as u16 } else { self.pc as u16 }
    }
}

/// Non-local exits from an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stop {
    Exc(Exception),
    Suspend(Event),
    End,
    NestedReturn,
}

impl From<Exception> for Stop {
    fn from(e: Exception) -> Self {
        Stop::Exc(e)
    }
}

impl From<MemError> for Stop {
    fn from(_: MemError) -> Self {
        Stop::Exc(Exception::Stack)
    }
}

pub(crate) type Handler = fn(&mut Vm, &mut Task) -> Result<(), Stop>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceEnd {
    /// Step budget used up.
    Budget,
    /// Time budget ran out first.
    TimeUp,
    Suspended,
    Finished,
    Error(Exception),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceOutcome {
    pub steps: u32,
    pub end: SliceEnd,
}

pub struct Vm {
    pub cfg: VmConfig,
    pub cs: CodeSegment,
    pub dict: Dictionary,
    pub ios: Ios,
    pub tables: Arc<IsaTables>,
    pub ops: Opcodes,
    dispatch: [Handler; 128],
    pub tasks: Vec<Option<Task>>,
    pub mask: TaskMask,
    pub clock_ns: u64,
    /// Exception code -> handler word address.
    pub handlers: BTreeMap<Cell, u16>,
    pub output: Output,
    pub links: Links,
    pub profile: Profile,
    /// Slot whose task is executing; its entry is taken out meanwhile.
    running: Option<usize>,
}

impl std::fmt::Debug for Vm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Vm")
            .field("cfg", &self.cfg)
            .field("tasks", &self.tasks)
            .field("clock_ns", &self.clock_ns)
            .finish_non_exhaustive()
    }
}

impl Vm {
    pub fn new(cfg: VmConfig) -> Result<Self, VmError> {
        Self::with_tables(cfg, default_tables())
    }

    pub fn with_tables(cfg: VmConfig, tables: Arc<IsaTables>) -> Result<Self, VmError> {
        if cfg.cs == 0 || cfg.cs > 0x8000 {
            return Err(VmError::Config(format!("code segment size {} not in 1..=32768", cfg.cs)));
        }
        if cfg.max_tasks == 0 || cfg.max_tasks > 16 {
            return Err(VmError::Config("max_tasks must be 1..=16".into()));
        }
        if cfg.ds / cfg.max_tasks < 4 || cfg.rs / cfg.max_tasks < 2 || cfg.fs / cfg.max_tasks < 2 {
            return Err(VmError::Config("stack partitions too small for max_tasks".into()));
        }
        if cfg.steps == 0 {
            return Err(VmError::Config("steps must be at least 1".into()));
        }
        let ops = Opcodes::from_wordlist(&tables.wordlist).map_err(|e| VmError::Config(e.to_string()))?;
        let dispatch = ops::build_dispatch(&tables.wordlist);
        Ok(Vm {
            cs: CodeSegment::new(cfg.cs),
            dict: Dictionary::new(cfg.dict_capacity),
            ios: Ios::new(cfg.max_fios, cfg.max_dios),
            tasks: vec![None; cfg.max_tasks],
            mask: TaskMask::default(),
            clock_ns: 0,
            handlers: BTreeMap::new(),
            output: Output::default(),
            links: Links::new(cfg.link_capacity),
            profile: Profile::default(),
            running: None,
            tables,
            ops,
            dispatch,
            cfg,
        })
    }

    pub fn now_us(&self) -> u64 {
        self.clock_ns / 1000
    }

    pub fn advance_to_us(&mut self, us: u64) {
        self.clock_ns = self.clock_ns.max(us.saturating_mul(1000));
    }

    pub fn compile(&mut self, text: &str) -> Result<CompileInfo, CompileError> {
        self.compile_with(text, CompileOptions::default())
    }

    pub fn compile_with(&mut self, text: &str, opts: CompileOptions) -> Result<CompileInfo, CompileError> {
        let mut env = CompileEnv {
            cs: &mut self.cs,
            dict: &mut self.dict,
            ios: &self.ios,
            tables: &self.tables,
            ops: &self.ops,
            mode: self.cfg.lookup,
        };
        compiler::compile_text(&mut env, text, opts)
    }

    pub fn task(&self, idx: usize) -> Option<&Task> {
        self.tasks.get(idx)?.as_ref()
    }

    pub fn task_mut(&mut self, idx: usize) -> Option<&mut Task> {
        self.tasks.get_mut(idx)?.as_mut()
    }

    pub fn live_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().flatten().filter(|t| t.is_live())
    }

    /// Start the program of a compiled frame as a new task.
    pub fn spawn_frame(&mut self, frame: FrameId) -> Result<usize, VmError> {
        let start = self.cs.frame(frame).ok_or(VmError::NoFrame(frame))?.start as u16;
        self.spawn(frame, start, 0, u64::MAX, false)
    }

    /// Create a task at `entry`. A word task ends when its word returns.
    pub fn spawn(
        &mut self,
        frame: FrameId,
        entry: u16,
        priority: i16,
        deadline_us: u64,
        word: bool,
    ) -> Result<usize, VmError> {
        let slot = self
            .tasks
            .iter()
            .enumerate()
            .position(|(i, t)| self.running != Some(i) && t.as_ref().is_none_or(|t| !t.is_live()))
            .ok_or(VmError::TaskTableFull)?;
        let mut t = Task::new(slot as u16, frame, entry, &self.cfg);
        t.priority = priority;
        t.deadline_us = deadline_us;
        t.arrival_us = self.now_us();
        if word {
            t.rs.push(RS_TASK_END as Cell).map_err(|_| VmError::Config("return stack too small".into()))?;
        }
        if let Some(f) = self.cs.frame_mut(frame) {
            f.task = Some(slot as u16);
        }
        self.tasks[slot] = Some(t);
        self.mask.set(slot, MaskBits::Ready);
        Ok(slot)
    }

    /// Remove a finished task's slot contents.
    pub fn reap(&mut self, idx: usize) -> Option<Task> {
        match self.tasks.get(idx)? {
            Some(t) if !t.is_live() => self.tasks[idx].take(),
            _ => None,
        }
    }

    /// Check whether a suspended task's wait condition holds.
    pub fn event_ready(&self, ev: &Event) -> Option<Wake> {
        let now = self.now_us();
        match *ev {
            Event::Yield => Some(Wake::Event),
            Event::Timeout { at_us } => (now >= at_us).then_some(Wake::Timeout),
            Event::Guard { var, value, timeout_at_us } => {
                if self.guard_value(var).is_ok_and(|v| v == value) {
                    Some(Wake::Event)
                } else {
                    (now >= timeout_at_us).then_some(Wake::Timeout)
                }
            }
            Event::Input => (!self.links.input.is_empty()).then_some(Wake::Event),
            Event::Receive { src } => self.links.has_data(src).then_some(Wake::Event),
            Event::Send { dst, cells } => self.links.has_room(dst, cells as usize).then_some(Wake::Event),
        }
    }

    pub(crate) fn guard_value(&self, var: Cell) -> Result<Cell, Exception> {
        if let Some(i) = handle_index(var as i32) {
            let e = self.ios.dios().get(i).ok_or(Exception::Io)?;
            return Ok(e.data[0].clamp(Cell::MIN as i32, Cell::MAX as i32) as Cell);
        }
        self.cell_at(var)
    }

    pub(crate) fn cell_at(&self, addr: Cell) -> Result<Cell, Exception> {
        let a = self.checked_addr(addr)?;
        self.cs.read_cell(a).ok_or(Exception::Io)
    }

    /// A CS cell address inside one allocated frame.
    pub(crate) fn checked_addr(&self, addr: Cell) -> Result<usize, Exception> {
        if addr <= 0 {
            return Err(Exception::Io);
        }
        let a = addr as usize;
        match self.cs.frame_at(a) {
            Some(f) if a + 2 <= f.end() => Ok(a),
            _ => Err(Exception::Io),
        }
    }

    /// Mark a suspended task runnable; the blocking op sees `wake` when re-executed.
    pub fn wake(&mut self, idx: usize, wake: Wake) {
        if let Some(t) = self.tasks[idx].as_mut() {
            if t.pc < 0 {
                t.pc = !t.pc;
            }
            t.event = None;
            t.wake = Some(wake);
            t.state = TaskState::Ready;
            self.mask.set(idx, MaskBits::Ready);
        }
    }

    /// Wake every suspended task whose condition holds (single pass, no priorities).
    pub fn poll_events(&mut self) -> usize {
        let mut n = 0;
        for i in 0..self.tasks.len() {
            let ev = match self.task(i) {
                Some(t) if t.pc < 0 => t.event,
                _ => None,
            };
            if let Some(w) = ev.and_then(|e| self.event_ready(&e)) {
                self.wake(i, w);
                n += 1;
            }
        }
        n
    }

    /// Earliest timeout among waiting tasks.
    pub fn next_timeout_us(&self) -> Option<u64> {
        self.live_tasks()
            .filter_map(|t| match t.event? {
                Event::Timeout { at_us } => Some(at_us),
                Event::Guard { timeout_at_us, .. } if timeout_at_us != u64::MAX => Some(timeout_at_us),
                _ => None,
            })
            .min()
    }

    /// Run one slice of task `idx` with the configured budgets.
    pub fn run_slice(&mut self, idx: usize) -> SliceOutcome {
        self.run_slice_with(idx, self.cfg.steps, self.cfg.longest_us)
    }

    /// Alg.-1 loop: at most `steps` instructions, stopping early once the
    /// simulated clock passes `longest_us` from slice start, or on an event,
    /// error or program end.
    pub fn run_slice_with(&mut self, idx: usize, steps: u32, longest_us: u64) -> SliceOutcome {
        let Some(mut t) = self.tasks.get_mut(idx).and_then(Option::take) else {
            return SliceOutcome { steps: 0, end: SliceEnd::Finished };
        };
        if !t.is_live() {
            self.tasks[idx] = Some(t);
            return SliceOutcome { steps: 0, end: SliceEnd::Finished };
        }
        if t.pc < 0 {
            self.tasks[idx] = Some(t);
            return SliceOutcome { steps: 0, end: SliceEnd::Suspended };
        }
        t.ip = t.pc as usize;
        t.op_pc = t.ip;
        t.state = TaskState::Running;
        self.running = Some(idx);
        self.mask.set(idx, MaskBits::None);
        let deadline = self.clock_ns.saturating_add(longest_us.saturating_mul(1000));
        let mut n = 0u32;
        let mut end = SliceEnd::Budget;
        if std::mem::take(&mut t.preempted) && self.cfg.preempt_interrupt {
            if let Err(e) = self.raise(&mut t, Exception::Interrupt) {
                end = SliceEnd::Error(e);
                n = steps;
            }
        }
        while n < steps {
            if self.clock_ns > deadline {
                end = SliceEnd::TimeUp;
                break;
            }
            n += 1;
            self.clock_ns += self.cfg.t1_ns;
            t.stats.steps += 1;
            if let Err(stop) = self.step(&mut t) {
                match stop {
                    Stop::Exc(e) => match self.raise(&mut t, e) {
                        Ok(()) => continue,
                        Err(e) => {
                            end = SliceEnd::Error(e);
                            break;
                        }
                    },
                    Stop::Suspend(ev) => {
                        t.event = Some(ev);
                        end = SliceEnd::Suspended;
                        break;
                    }
                    Stop::End => {
                        end = SliceEnd::Finished;
                        break;
                    }
                    Stop::NestedReturn => {
                        end = SliceEnd::Error(Exception::Trap);
                        break;
                    }
                }
            }
        }
        t.stats.slices += 1;
        t.stats.since_suspend += n as u64;
        match end {
            SliceEnd::Budget | SliceEnd::TimeUp => {
                t.pc = t.ip as i32;
                t.state = TaskState::Ready;
                t.preempted = end == SliceEnd::TimeUp;
                self.mask.set(idx, MaskBits::Ready);
            }
            SliceEnd::Suspended => {
                let ev = t.event.expect("suspension carries an event");
                t.pc = !(t.op_pc as i32);
                t.state = match ev.mask_bits() {
                    MaskBits::Ready => TaskState::Ready,
                    MaskBits::Timeout => TaskState::WaitTime,
                    _ => TaskState::WaitEvent,
                };
                t.stats.suspensions += 1;
                if self.cfg.profile {
                    self.profile.record_suspension(t.entry, t.stats.since_suspend);
                }
                t.stats.since_suspend = 0;
                self.mask.set(idx, ev.mask_bits());
            }
            SliceEnd::Finished | SliceEnd::Error(_) => {
                t.pc = t.ip as i32;
                if let SliceEnd::Error(e) = end {
                    t.error = Some(e);
                }
                if self.cfg.profile {
                    self.profile.record_run(t.entry, t.stats.steps);
                }
                t.state = TaskState::Finished;
                self.mask.set(idx, MaskBits::None);
            }
        }
        if self.cfg.profile {
            self.profile.record_slice(t.id, n as u64);
        }
        let frame = t.frame;
        let finished = !t.is_live();
        self.tasks[idx] = Some(t);
        self.running = None;
        if finished {
            self.release_frame_if_idle(frame);
        }
        SliceOutcome { steps: n, end }
    }

    /// Reclaim a frame once no live task uses it, unless locked or persistent.
    fn release_frame_if_idle(&mut self, frame: FrameId) {
        if self.live_tasks().any(|t| t.frame == frame) {
            return;
        }
        let Some(f) = self.cs.frame_mut(frame) else { return };
        f.task = None;
        if f.locked || f.persistent {
            return;
        }
        let (start, end) = (f.start, f.end());
        self.handlers.retain(|_, a| !(start..end).contains(&(*a as usize)));
        let _ = self.cs.free_frame(frame);
    }

    /// Drop a frame and its dictionary entries regardless of locks (host action).
    pub fn remove_frame(&mut self, frame: FrameId) -> Result<(), VmError> {
        if self.live_tasks().any(|t| t.frame == frame) {
            return Err(VmError::Config(format!("frame {frame} has live tasks")));
        }
        let f = self.cs.frame_mut(frame).ok_or(VmError::NoFrame(frame))?;
        f.locked = false;
        f.persistent = false;
        f.task = None;
        let (start, end) = (f.start, f.end());
        self.handlers.retain(|_, a| !(start..end).contains(&(*a as usize)));
        self.dict.remove_frame(frame);
        self.cs.free_frame(frame).map_err(|_| VmError::NoFrame(frame))
    }

    #[inline]
    fn step(&mut self, t: &mut Task) -> Result<(), Stop> {
        let pc = t.ip;
        let b = *self.cs.bytes().get(pc).ok_or(Exception::Trap)?;
        t.op_pc = pc;
        t.ip = pc + 1;
        match b {
            0x00..=0x7f => (self.dispatch[b as usize])(self, t),
            0x80..=0xbf => {
                let lo = *self.cs.bytes().get(pc + 1).ok_or(Exception::Trap)?;
                let raw = ((b as u16 & 0x3f) << 8) | lo as u16;
                t.ip = pc + 2;
                t.ds.push(((raw << 2) as i16) >> 2)?;
                Ok(())
            }
            _ => {
                let w = self.cs.bytes().get(pc + 1..pc + 4).ok_or(Exception::Trap)?;
                let raw = ((b as u32 & 0x3f) << 24) | (w[0] as u32) << 16 | (w[1] as u32) << 8 | w[2] as u32;
                t.ip = pc + 4;
                t.ds.push2(((raw << 2) as i32) >> 2)?;
                Ok(())
            }
        }
    }

    /// Route an exception to its bound handler, or fail the task.
    fn raise(&mut self, t: &mut Task, e: Exception) -> Result<(), Exception> {
        if t.in_handler {
            return Err(e);
        }
        let Some(&h) = self.handlers.get(&e.code()) else { return Err(e) };
        let Some(cp) = t.catch else { return Err(e) };
        if cp.rs as usize > t.rs.depth() || cp.fs as usize > t.fs.depth() {
            return Err(e);
        }
        t.rs.push(RS_HANDLER as Cell).map_err(|_| e)?;
        t.pending = Some(e.code());
        t.in_handler = true;
        t.ip = h as usize;
        Ok(())
    }

    /// Execute the word at `addr` to completion on `t`'s stacks (used by `vecmap`).
    pub(crate) fn call_nested(&mut self, t: &mut Task, addr: u16, limit: u64) -> Result<(), Stop> {
        let (saved_ip, saved_op) = (t.ip, t.op_pc);
        t.rs.push(RS_NESTED as Cell)?;
        t.ip = addr as usize;
        let mut n = 0u64;
        let r = loop {
            if n >= limit {
                break Err(Stop::Exc(Exception::Timeout));
            }
            n += 1;
            self.clock_ns += self.cfg.t1_ns;
            t.stats.steps += 1;
            match self.step(t) {
                Ok(()) => {}
                Err(Stop::NestedReturn) => break Ok(()),
                Err(Stop::Suspend(_)) | Err(Stop::End) => break Err(Stop::Exc(Exception::Trap)),
                Err(e) => break Err(e),
            }
        };
        t.ip = saved_ip;
        t.op_pc = saved_op;
        r
    }

    /// Run `idx` until it finishes, errors, or blocks on something no clock
    /// advance can satisfy. Timeouts are served by advancing the clock.
    pub fn run_to_end(&mut self, idx: usize, max_slices: usize) -> Option<SliceEnd> {
        let mut last = None;
        for _ in 0..max_slices {
            let Some(t) = self.task(idx) else { return last };
            if !t.is_live() {
                return last;
            }
            if t.pc < 0 {
                let ev = t.event.expect("suspended task has an event");
                match self.event_ready(&ev) {
                    Some(w) => self.wake(idx, w),
                    None => match self.next_timeout_us() {
                        Some(at) if at > self.now_us() => {
                            self.advance_to_us(at);
                            continue;
                        }
                        _ => return Some(SliceEnd::Suspended),
                    },
                }
            }
            let o = self.run_slice(idx);
            last = Some(o.end);
            if matches!(o.end, SliceEnd::Finished | SliceEnd::Error(_)) {
                return last;
            }
        }
        last
    }

    /// Compile `text`, run it as a single task to completion and return the
    /// console text produced.
    pub fn eval(&mut self, text: &str) -> Result<(String, Option<Exception>), VmError> {
        let info = self.compile(text)?;
        let idx = self.spawn_frame(info.frame)?;
        self.run_to_end(idx, 1_000_000);
        let err = self.task(idx).and_then(|t| t.error);
        self.reap(idx);
        let out = self.output.take_console();
        Ok((out, err))
    }
}
