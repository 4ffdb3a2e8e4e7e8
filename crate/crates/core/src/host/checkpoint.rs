//! VM state snapshots.
//!
//! Layout (little-endian): `"RXCP"`, version u16, section count u16, then one
//! table row per section `(id u8, offset u32, len u32, crc32 u32)`, then the
//! section bodies. Offsets are from the start of the blob.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::ios::wire::{Reader, WireError};
use crate::memory::{Cell, CodeFrame, CodeSegment, FrameState};
use crate::sched::mask::TaskMask;
use crate::sched::profile::{Counter, Profile};
use crate::vm::{CatchPoint, Event, Exception, OutItem, Task, TaskState, TaskStats, Vm, VmConfig, Wake};

pub const MAGIC: &[u8; 4] = b"RXCP";
pub const VERSION: u16 = 1;

const SEC_CONFIG: u8 = 1;
const SEC_CS: u8 = 2;
const SEC_DICT: u8 = 3;
const SEC_TASKS: u8 = 4;
const SEC_REGS: u8 = 5;
const SEC_PROFILE: u8 = 6;
const SEC_IOS: u8 = 7;
const SEC_IO: u8 = 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("section {0} failed its CRC check")]
    Crc(u8),
    #[error("missing section {0}")]
    Missing(u8),
    #[error("malformed section {0}: {1}")]
    Malformed(u8, String),
    #[error("checkpoint does not fit this VM: {0}")]
    Mismatch(String),
}

impl From<WireError> for CheckpointError {
    fn from(_: WireError) -> Self {
        CheckpointError::Truncated
    }
}

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend(v.to_le_bytes());
    }
    fn i16(&mut self, v: i16) {
        self.u16(v as u16);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.u32(v as u32);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }
    fn cells(&mut self, c: &[Cell]) {
        self.u16(c.len() as u16);
        c.iter().for_each(|&v| self.i16(v));
    }
}

fn bytes<'a>(r: &mut Reader<'a>) -> Result<&'a [u8], WireError> {
    let n = r.u32()? as usize;
    r.take(n)
}

fn string(r: &mut Reader) -> Result<String, WireError> {
    Ok(String::from_utf8_lossy(bytes(r)?).into_owned())
}

fn cells(r: &mut Reader) -> Result<Vec<Cell>, WireError> {
    let n = r.u16()? as usize;
    (0..n).map(|_| r.i16()).collect()
}

fn opt<T>(e: &mut Enc, v: Option<T>, f: impl FnOnce(&mut Enc, T)) {
    match v {
        None => e.u8(0),
        Some(x) => {
            e.u8(1);
            f(e, x);
        }
    }
}

fn read_opt<T>(r: &mut Reader, f: impl FnOnce(&mut Reader) -> Result<T, WireError>) -> Result<Option<T>, WireError> {
    Ok(if r.u8()? == 0 { None } else { Some(f(r)?) })
}

fn enc_event(e: &mut Enc, ev: Event) {
    match ev {
        Event::Yield => e.u8(0),
        Event::Timeout { at_us } => {
            e.u8(1);
            e.u64(at_us);
        }
        Event::Guard { var, value, timeout_at_us } => {
            e.u8(2);
            e.i16(var);
            e.i16(value);
            e.u64(timeout_at_us);
        }
        Event::Input => e.u8(3),
        Event::Receive { src } => {
            e.u8(4);
            e.i16(src);
        }
        Event::Send { dst, cells } => {
            e.u8(5);
            e.i16(dst);
            e.u16(cells);
        }
    }
}

fn dec_event(r: &mut Reader) -> Result<Event, CheckpointError> {
    Ok(match r.u8()? {
        0 => Event::Yield,
        1 => Event::Timeout { at_us: r.u64()? },
        2 => Event::Guard { var: r.i16()?, value: r.i16()?, timeout_at_us: r.u64()? },
        3 => Event::Input,
        4 => Event::Receive { src: r.i16()? },
        5 => Event::Send { dst: r.i16()?, cells: r.u16()? },
        t => return Err(CheckpointError::Malformed(SEC_TASKS, format!("event tag {t}"))),
    })
}

const STATES: [TaskState; 5] =
    [TaskState::Ready, TaskState::WaitTime, TaskState::WaitEvent, TaskState::Running, TaskState::Finished];

fn enc_task(e: &mut Enc, t: &Task) {
    e.u16(t.id);
    e.u16(t.frame);
    e.i32(t.pc);
    e.u16(t.entry);
    e.cells(t.ds.as_slice());
    e.cells(t.rs.as_slice());
    e.cells(t.fs.as_slice());
    e.u8(STATES.iter().position(|&s| s == t.state).unwrap() as u8);
    opt(e, t.event, enc_event);
    opt(e, t.wake, |e, w| e.u8(matches!(w, Wake::Timeout) as u8));
    opt(e, t.catch, |e, c| {
        e.u16(c.pc);
        e.u16(c.rs);
        e.u16(c.fs);
    });
    opt(e, t.pending, |e, p| e.i16(p));
    e.u8(t.in_handler as u8);
    e.u8(t.preempted as u8);
    e.i16(t.priority);
    e.u64(t.deadline_us);
    e.u64(t.arrival_us);
    opt(e, t.error, |e, x| e.i16(x.code()));
    for v in [t.stats.steps, t.stats.slices, t.stats.suspensions, t.stats.since_suspend] {
        e.u64(v);
    }
    e.u16(t.calls.len() as u16);
    for &(a, s, d) in &t.calls {
        e.u16(a);
        e.u64(s);
        e.u16(d);
    }
}

fn dec_task(r: &mut Reader, cfg: &VmConfig) -> Result<Task, CheckpointError> {
    let bad = |m: &str| CheckpointError::Malformed(SEC_TASKS, m.to_string());
    let id = r.u16()?;
    let frame = r.u16()?;
    let pc = r.i32()?;
    let entry = r.u16()?;
    let mut t = Task::new(id, frame, entry, cfg);
    t.pc = pc;
    t.ds.restore(&cells(r)?).map_err(|_| bad("data stack"))?;
    t.rs.restore(&cells(r)?).map_err(|_| bad("return stack"))?;
    t.fs.restore(&cells(r)?).map_err(|_| bad("loop stack"))?;
    t.state = *STATES.get(r.u8()? as usize).ok_or_else(|| bad("state"))?;
    t.event = if r.u8()? == 0 { None } else { Some(dec_event(r)?) };
    t.wake = read_opt(r, |r| Ok(if r.u8()? == 1 { Wake::Timeout } else { Wake::Event }))?;
    t.catch = read_opt(r, |r| Ok(CatchPoint { pc: r.u16()?, rs: r.u16()?, fs: r.u16()? }))?;
    t.pending = read_opt(r, |r| r.i16())?;
    t.in_handler = r.u8()? != 0;
    t.preempted = r.u8()? != 0;
    t.priority = r.i16()?;
    t.deadline_us = r.u64()?;
    t.arrival_us = r.u64()?;
    t.error = match read_opt(r, |r| r.i16())? {
        None => None,
        Some(c) => Some(Exception::from_code(c as i32).ok_or_else(|| bad("exception code"))?),
    };
    t.stats = TaskStats { steps: r.u64()?, slices: r.u64()?, suspensions: r.u64()?, since_suspend: r.u64()? };
    let n = r.u16()?;
    t.calls = (0..n).map(|_| Ok((r.u16()?, r.u64()?, r.u16()?))).collect::<Result<_, WireError>>()?;
    Ok(t)
}

fn enc_counters(e: &mut Enc, m: &BTreeMap<u16, Counter>) {
    e.u32(m.len() as u32);
    for (&k, c) in m {
        e.u16(k);
        e.u64(c.count);
        e.u64(c.steps);
    }
}

fn dec_counters(r: &mut Reader) -> Result<BTreeMap<u16, Counter>, WireError> {
    let n = r.u32()?;
    (0..n).map(|_| Ok((r.u16()?, Counter { count: r.u64()?, steps: r.u64()? }))).collect()
}

fn enc_queues(e: &mut Enc, q: &BTreeMap<Cell, VecDeque<Cell>>) {
    e.u16(q.len() as u16);
    for (&k, v) in q {
        e.i16(k);
        e.cells(&v.iter().copied().collect::<Vec<_>>());
    }
}

fn dec_queues(r: &mut Reader) -> Result<BTreeMap<Cell, VecDeque<Cell>>, WireError> {
    let n = r.u16()?;
    (0..n).map(|_| Ok((r.i16()?, cells(r)?.into()))).collect()
}

/// Serialize the VM state. Host callbacks are not part of the snapshot.
pub fn save(vm: &Vm) -> Vec<u8> {
    let mut secs: Vec<(u8, Vec<u8>)> = Vec::new();

    let cfg = serde_json::to_string(&vm.cfg).expect("config serializes");
    let mut e = Enc::default();
    e.str(&cfg);
    secs.push((SEC_CONFIG, e.0));

    let mut e = Enc::default();
    e.bytes(vm.cs.bytes());
    e.u16(vm.cs.next_id());
    let frames: Vec<&CodeFrame> = vm.cs.frames().collect();
    e.u16(frames.len() as u16);
    for f in frames {
        e.u16(f.id);
        e.u32(f.start as u32);
        e.u32(f.len as u32);
        e.u8(matches!(f.state, FrameState::Compiled) as u8);
        e.u8(f.persistent as u8);
        e.u8(f.locked as u8);
        opt(&mut e, f.task, |e, t| e.u16(t));
    }
    e.u16(vm.cs.free_blocks().len() as u16);
    for &(s, l) in vm.cs.free_blocks() {
        e.u32(s as u32);
        e.u32(l as u32);
    }
    secs.push((SEC_CS, e.0));

    let mut e = Enc::default();
    let entries = vm.dict.entries();
    e.u16(entries.len() as u16);
    for d in entries {
        e.str(&d.name);
        e.u16(d.frame);
        e.u16(d.addr);
    }
    secs.push((SEC_DICT, e.0));

    let mut e = Enc::default();
    e.u16(vm.tasks.len() as u16);
    for t in &vm.tasks {
        opt(&mut e, t.as_ref(), enc_task);
    }
    secs.push((SEC_TASKS, e.0));

    let mut e = Enc::default();
    e.u64(vm.clock_ns);
    e.u32(vm.mask.0);
    e.u16(vm.handlers.len() as u16);
    for (&c, &a) in &vm.handlers {
        e.i16(c);
        e.u16(a);
    }
    secs.push((SEC_REGS, e.0));

    let mut e = Enc::default();
    for m in [&vm.profile.words, &vm.profile.runs, &vm.profile.to_suspend, &vm.profile.slices] {
        enc_counters(&mut e, m);
    }
    secs.push((SEC_PROFILE, e.0));

    let mut e = Enc::default();
    e.u16(vm.ios.dios().len() as u16);
    for d in vm.ios.dios() {
        e.str(&d.name);
        e.u8(d.size);
        e.u32(d.data.len() as u32);
        for &v in &d.data {
            match d.size {
                1 => e.u8(v as u8),
                2 => e.i16(v as i16),
                _ => e.i32(v),
            }
        }
    }
    secs.push((SEC_IOS, e.0));

    let mut e = Enc::default();
    let items = vm.output.items();
    e.u32(items.len() as u32);
    for it in items {
        match it {
            OutItem::Text(s) => {
                e.u8(0);
                e.str(s);
            }
            OutItem::Value(v) => {
                e.u8(1);
                e.i16(*v);
            }
        }
    }
    e.cells(&vm.links.peers);
    e.u32(vm.links.capacity as u32);
    enc_queues(&mut e, &vm.links.outbox);
    enc_queues(&mut e, &vm.links.inbox);
    e.cells(&vm.links.input.iter().copied().collect::<Vec<_>>());
    secs.push((SEC_IO, e.0));

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((secs.len() as u16).to_le_bytes());
    let mut off = 8 + 13 * secs.len();
    for (id, body) in &secs {
        out.push(*id);
        out.extend((off as u32).to_le_bytes());
        out.extend((body.len() as u32).to_le_bytes());
        out.extend(crc32fast::hash(body).to_le_bytes());
        off += body.len();
    }
    for (_, body) in secs {
        out.extend(body);
    }
    out
}

fn sections(blob: &[u8]) -> Result<BTreeMap<u8, &[u8]>, CheckpointError> {
    if blob.len() < 8 {
        return Err(if blob.starts_with(&MAGIC[..blob.len().min(4)]) {
            CheckpointError::Truncated
        } else {
            CheckpointError::Magic
        });
    }
    if &blob[..4] != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let mut r = Reader::new(&blob[4..]);
    let ver = r.u16()?;
    if ver != VERSION {
        return Err(CheckpointError::Version(ver));
    }
    let n = r.u16()?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let id = r.u8()?;
        let off = r.u32()? as usize;
        let len = r.u32()? as usize;
        let crc = r.u32()?;
        let body = blob.get(off..off + len).ok_or(CheckpointError::Truncated)?;
        if crc32fast::hash(body) != crc {
            return Err(CheckpointError::Crc(id));
        }
        out.insert(id, body);
    }
    Ok(out)
}

fn section<'a>(s: &BTreeMap<u8, &'a [u8]>, id: u8) -> Result<Reader<'a>, CheckpointError> {
    s.get(&id).map(|b| Reader::new(b)).ok_or(CheckpointError::Missing(id))
}

/// The VM configuration stored in a blob.
pub fn config_of(blob: &[u8]) -> Result<VmConfig, CheckpointError> {
    let s = sections(blob)?;
    let mut r = section(&s, SEC_CONFIG)?;
    serde_json::from_str(&string(&mut r)?).map_err(|e| CheckpointError::Malformed(SEC_CONFIG, e.to_string()))
}

/// Fresh VM (no host functions) rebuilt from a blob.
pub fn restore(blob: &[u8]) -> Result<Vm, CheckpointError> {
    let cfg = config_of(blob)?;
    let mut vm = Vm::new(cfg).map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
    for (name, size, data) in dios_of(blob)? {
        vm.ios.dios_add_data(&name, data, size).map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
    }
    restore_into(&mut vm, blob)?;
    Ok(vm)
}

fn dios_of(blob: &[u8]) -> Result<Vec<(String, u8, Vec<i32>)>, CheckpointError> {
    let s = sections(blob)?;
    let mut r = section(&s, SEC_IOS)?;
    let n = r.u16()?;
    (0..n)
        .map(|_| {
            let name = string(&mut r)?;
            let size = r.u8()?;
            let len = r.u32()?;
            let data = (0..len)
                .map(|_| match size {
                    1 => r.u8().map(|v| v as i8 as i32),
                    2 => r.i16().map(i32::from),
                    _ => r.i32(),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((name, size, data))
        })
        .collect()
}

/// Overwrite `vm`'s state with a blob taken from a VM of the same
/// configuration and DIOS layout. Registered host functions stay in place.
pub fn restore_into(vm: &mut Vm, blob: &[u8]) -> Result<(), CheckpointError> {
    let s = sections(blob)?;
    let cfg = config_of(blob)?;
    if cfg != vm.cfg {
        return Err(CheckpointError::Mismatch("configuration differs".into()));
    }
    let dios = dios_of(blob)?;
    if dios.len() != vm.ios.dios().len()
        || dios.iter().zip(vm.ios.dios()).any(|(a, b)| a.0 != b.name || a.2.len() != b.data.len())
    {
        return Err(CheckpointError::Mismatch("DIOS layout differs".into()));
    }

    let mut r = section(&s, SEC_CS)?;
    let bytes = bytes(&mut r)?.to_vec();
    if bytes.len() != vm.cs.size() {
        return Err(CheckpointError::Mismatch("code segment size differs".into()));
    }
    let next_id = r.u16()?;
    let nf = r.u16()?;
    let mut frames = Vec::new();
    for _ in 0..nf {
        frames.push(CodeFrame {
            id: r.u16()?,
            start: r.u32()? as usize,
            len: r.u32()? as usize,
            state: if r.u8()? == 1 { FrameState::Compiled } else { FrameState::Source },
            persistent: r.u8()? != 0,
            locked: r.u8()? != 0,
            task: read_opt(&mut r, |r| r.u16())?,
        });
    }
    let nb = r.u16()?;
    let free = (0..nb).map(|_| Ok((r.u32()? as usize, r.u32()? as usize))).collect::<Result<_, WireError>>()?;
    let cs = CodeSegment::from_parts(bytes, frames, free, next_id);

    let mut r = section(&s, SEC_DICT)?;
    let nd = r.u16()?;
    let mut dict = crate::memory::Dictionary::new(vm.cfg.dict_capacity);
    for _ in 0..nd {
        let name = string(&mut r)?;
        dict.define(&name, r.u16()?, r.u16()?)
            .map_err(|e| CheckpointError::Malformed(SEC_DICT, e.to_string()))?;
    }

    let mut r = section(&s, SEC_TASKS)?;
    let nt = r.u16()? as usize;
    if nt != vm.tasks.len() {
        return Err(CheckpointError::Mismatch("task table size differs".into()));
    }
    let mut tasks = Vec::with_capacity(nt);
    for _ in 0..nt {
        tasks.push(if r.u8()? == 0 { None } else { Some(dec_task(&mut r, &vm.cfg)?) });
    }

    let mut r = section(&s, SEC_REGS)?;
    let clock_ns = r.u64()?;
    let mask = TaskMask(r.u32()?);
    let nh = r.u16()?;
    let handlers = (0..nh).map(|_| Ok((r.i16()?, r.u16()?))).collect::<Result<_, WireError>>()?;

    let mut r = section(&s, SEC_PROFILE)?;
    let profile = Profile {
        words: dec_counters(&mut r)?,
        runs: dec_counters(&mut r)?,
        to_suspend: dec_counters(&mut r)?,
        slices: dec_counters(&mut r)?,
    };

    let mut r = section(&s, SEC_IO)?;
    let ni = r.u32()?;
    let mut items = Vec::new();
    for _ in 0..ni {
        items.push(match r.u8()? {
            0 => OutItem::Text(string(&mut r)?),
            _ => OutItem::Value(r.i16()?),
        });
    }
    let peers = cells(&mut r)?;
    let capacity = r.u32()? as usize;
    let outbox = dec_queues(&mut r)?;
    let inbox = dec_queues(&mut r)?;
    let input = cells(&mut r)?.into();

    vm.cs = cs;
    vm.dict = dict;
    vm.tasks = tasks;
    vm.clock_ns = clock_ns;
    vm.mask = mask;
    vm.handlers = handlers;
    vm.profile = profile;
    vm.output.restore(items);
    vm.links.peers = peers;
    vm.links.capacity = capacity;
    vm.links.outbox = outbox;
    vm.links.inbox = inbox;
    vm.links.input = input;
    for (d, (_, _, data)) in vm.ios.dios_mut().iter_mut().zip(dios) {
        d.data = data;
    }
    Ok(())
}
