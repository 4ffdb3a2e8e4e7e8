//! Shared oracles and generators for the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rexa::dsp::fixed::fpsigmoid;
use rexa::host::config::NodeConfig;
use rexa::host::node::Node;
use rexa::ios::gate::{MessageClient, Payload, Request, Response};
use rexa::vm::OutItem;

pub const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Random programs

#[derive(Debug, Clone, Copy, Default)]
pub struct GenOpts {
    /// Allow `yield` and `sleep`.
    pub suspend: bool,
    /// Allow comments and strings.
    pub text: bool,
}

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    opts: GenOpts,
    loops: usize,
    budget: usize,
}

const BIN: &[&str] = &["+", "-", "*", "and", "or", "xor", "min", "max", "=", "<", ">", "<>"];
const UN: &[&str] = &["negate", "abs", "1+", "1-", "invert", "not", "0=", "0<"];
const WORDS: &[&str] = &["ab", "x", "peak", "ok", "done", "at", "q7"];

impl Gen<'_> {
    fn lit(&mut self) -> String {
        match self.rng.gen_range(0..10) {
            0 => self.rng.gen_range(-32768..=32767).to_string(),
            1 => self.rng.gen_range(-8193..=-8192).to_string(),
            2 => self.rng.gen_range(8191..=8192).to_string(),
            _ => self.rng.gen_range(-200..=200).to_string(),
        }
    }

    fn expr(&mut self, d: usize) -> String {
        self.budget = self.budget.saturating_sub(1);
        let leaf = d == 0 || self.budget == 0;
        let k = if leaf { self.rng.gen_range(0..4) } else { self.rng.gen_range(0..13) };
        match k {
            0 | 1 => self.lit(),
            2 => format!("v{} @", self.rng.gen_range(0..3)),
            3 if self.loops > 0 => "i".into(),
            3 => format!("{} a0 read", self.rng.gen_range(0..8)),
            4 | 5 => format!("{} {} {}", self.expr(d - 1), self.expr(d - 1), BIN.choose(self.rng).unwrap()),
            6 => format!("{} {} {}", self.expr(d - 1), UN.choose(self.rng).unwrap(), ""),
            7 => {
                let n = *[-9, -3, -1, 1, 2, 7, 13].choose(self.rng).unwrap();
                let op = if self.rng.gen_bool(0.5) { "/" } else { "mod" };
                format!("{} {n} {op}", self.expr(d - 1))
            }
            8 if self.rng.gen_bool(0.5) => format!("{} w0", self.expr(d - 1)),
            8 => format!("{} z", self.expr(d - 1)),
            9 => format!("{} dup +", self.expr(d - 1)),
            10 => format!("{} {} swap -", self.expr(d - 1), self.expr(d - 1)),
            11 => format!("{} {} over * +", self.expr(d - 1), self.expr(d - 1)),
            _ => format!("{} {} {} rot + *", self.expr(d - 1), self.expr(d - 1), self.expr(d - 1)),
        }
        .trim_end()
        .to_string()
    }

    fn stmts(&mut self, n: usize, depth: usize) -> String {
        (0..n).map(|_| self.stmt(depth)).collect::<Vec<_>>().join(" ")
    }

    fn stmt(&mut self, depth: usize) -> String {
        self.budget = self.budget.saturating_sub(1);
        let nest = depth < 2 && self.budget > 0;
        match self.rng.gen_range(0..16) {
            0 | 1 => format!("{} v{} !", self.expr(2), self.rng.gen_range(0..3)),
            2 => format!("{} .", self.expr(2)),
            3 => format!("{} out", self.expr(1)),
            4 => format!("{} {} a0 write", self.expr(1), self.rng.gen_range(0..8)),
            5 => format!("{} v{} +!", self.expr(1), self.rng.gen_range(0..3)),
            6 if nest => {
                let (a, b) = (self.rng.gen_range(1..3), self.rng.gen_range(0..3));
                let (c, s1) = (self.expr(2), self.stmts(a, depth + 1));
                if b == 0 {
                    format!("{c} if {s1} endif")
                } else {
                    format!("{c} if {s1} else {} endif", self.stmts(b, depth + 1))
                }
            }
            7 if nest => {
                let n = self.rng.gen_range(0..6);
                self.loops += 1;
                let k = self.rng.gen_range(1..3);
                let body = self.stmts(k, depth + 1);
                self.loops -= 1;
                format!("{n} 0 do {body} loop")
            }
            8 if nest && depth == 0 => {
                let n = self.rng.gen_range(1..5);
                let k = self.rng.gen_range(1..3);
                let body = self.stmts(k, 2);
                format!("{n} c0 ! begin {body} c0 @ 1- dup c0 ! 0= until")
            }
            9 => {
                let a: i32 = self.rng.gen_range(-(1 << 28)..(1 << 28));
                let b: i32 = self.rng.gen_range(-(1 << 28)..(1 << 28));
                format!("{a}l {b}l d+ d.")
            }
            10 => format!("{} s>d d.", self.expr(1)),
            11 if self.opts.suspend => ["yield", "1 sleep", "0 sleep"].choose(self.rng).unwrap().to_string(),
            12 if self.opts.text => {
                let n = self.rng.gen_range(1..3);
                let w: Vec<&str> = (0..n).map(|_| *WORDS.choose(self.rng).unwrap()).collect();
                format!(".\" {}\"", w.join(" "))
            }
            13 if self.opts.text => format!("( {} )", WORDS.choose(self.rng).unwrap()),
            _ => format!("{} drop", self.expr(2)),
        }
    }
}

/// A stack-balanced program that leaves 1 to 3 cells on the data stack.
pub fn random_program(rng: &mut ChaCha8Rng, opts: GenOpts) -> String {
    let n = rng.gen_range(3..12);
    let mut g = Gen { rng, opts, loops: 0, budget: 120 };
    let init: Vec<String> = (0..8).map(|_| g.rng.gen_range(-50..50).to_string()).collect();
    let body = g.expr(1);
    // Back-to-back one-letter calls grow the code faster than the source.
    let pre = if g.rng.gen_bool(0.3) { "0 z z z z z z z z drop " } else { "" };
    let mut s = format!(
        ": z 1 xor ; {pre}var v0 var v1 var v2 var c0 array a0 {{ {} }} : w0 {body} * 3 + ; \
         {} v0 ! {} v1 ! 0 v2 ! ",
        init.join(" "),
        g.lit(),
        g.lit()
    );
    s.push_str(&g.stmts(n, 0));
    let keep = g.rng.gen_range(1..4);
    for _ in 0..keep {
        s.push(' ');
        s.push_str(&g.expr(1));
    }
    s
}

/// Reference tokenizer: whitespace-separated words, comments and string
/// bodies removed.
pub fn source_tokens(src: &str) -> (Vec<String>, Vec<String>) {
    let mut toks = Vec::new();
    let mut strings = Vec::new();
    let b = src.as_bytes();
    let mut i = 0;
    while i < b.len() {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if i == b.len() {
            break;
        }
        let s = i;
        while i < b.len() && !b[i].is_ascii_whitespace() {
            i += 1;
        }
        let tok = &src[s..i];
        if tok.starts_with('(') {
            i = s + src[s..].find(')').expect("closed comment") + 1;
            continue;
        }
        toks.push(tok.to_string());
        if tok == ".\"" {
            let body = i + 1;
            let close = body + src[body..].find('"').expect("closed string");
            strings.push(src[body..close].to_string());
            i = close + 1;
        }
    }
    (toks, strings)
}

// ---------------------------------------------------------------------------
// ANN reference networks

pub struct Layer {
    pub weights: Vec<i32>,
    pub bias: Vec<i32>,
    pub scale: Vec<i32>,
}

/// The [4,3,2] network of the ANN fixture: input layer (element-wise),
/// hidden layer and output layer.
pub fn ann_layers() -> [Layer; 3] {
    [
        Layer { weights: vec![10, -15, 10, 2], bias: vec![-2, 15, 0, 1], scale: vec![10, -10, 2, 5] },
        Layer {
            weights: vec![10, -5, 4, 2, 0, 1, 1, 0, 5, -2, -2, 0],
            bias: vec![-4, 5, 10],
            scale: vec![-2, 10, -8],
        },
        Layer { weights: vec![2, 5, 9, 6, 1, 0], bias: vec![-1, 1], scale: vec![-2, 10] },
    ]
}

fn sat(v: i128) -> i128 {
    v.clamp(i16::MIN as i128, i16::MAX as i128)
}

fn iscale(v: i128, s: i32) -> i128 {
    match s {
        0 => v,
        s if s > 0 => v * s as i128,
        s => v / (-s) as i128,
    }
}

fn fold_i(x: &[i128], l: &Layer) -> Vec<i128> {
    let n = x.len();
    (0..l.bias.len())
        .map(|j| sat(iscale((0..n).map(|i| x[i] * l.weights[j * n + i] as i128).sum(), l.scale[j])))
        .collect()
}

fn sig_i(v: &[i128]) -> Vec<i128> {
    v.iter().map(|&x| fpsigmoid(x as i16) as i128).collect()
}

fn bias_i(v: &[i128], b: &[i32]) -> Vec<i128> {
    v.iter().zip(b).map(|(&x, &b)| sat(x + b as i128)).collect()
}

/// Wide-integer reference with the same scaling and saturation rules.
pub fn ann_wide(input: &[i32; 4]) -> Vec<i128> {
    let [l0, l1, l2] = ann_layers();
    let x: Vec<i128> = input
        .iter()
        .zip(&l0.weights)
        .zip(&l0.scale)
        .map(|((&x, &w), &s)| sat(iscale(x as i128 * w as i128, s)))
        .collect();
    let x = sig_i(&bias_i(&x, &l0.bias));
    let x = sig_i(&bias_i(&fold_i(&x, &l1), &l1.bias));
    sig_i(&bias_i(&fold_i(&x, &l2), &l2.bias))
}

fn satf(v: f64) -> f64 {
    v.clamp(i16::MIN as f64, i16::MAX as f64)
}

fn fscale(v: f64, s: i32) -> f64 {
    match s {
        0 => v,
        s if s > 0 => v * s as f64,
        s => v / -s as f64,
    }
}

/// Carried error after scaling by `s`.
fn escale(e: f64, s: i32) -> f64 {
    match s {
        0 => e,
        s if s > 0 => e * s as f64,
        s => e / -s as f64 + 1.0,
    }
}

fn sig_f(x: f64) -> f64 {
    1000.0 / (1.0 + (-x / 1000.0).exp())
}

/// Largest deviation of the fixed-point sigmoid from the exact one, in 1:1000
/// output units, measured over the whole cell range.
pub fn sigmoid_lut_error() -> f64 {
    (i16::MIN..=i16::MAX).map(|x| (fpsigmoid(x) as f64 - sig_f(x as f64)).abs()).fold(0.0, f64::max)
}

/// Float network and a per-output bound on `|fixed - float|`.
///
/// The bound is propagated layer by layer: truncating division adds < 1,
/// scaling multiplies the carried error, a weighted sum adds `|w|`-weighted
/// errors, clamping does not grow it, and the sigmoid (slope <= 1/4 at the
/// 1:1000 scale) shrinks it by 4 before adding the table error.
pub fn ann_float(input: &[i32; 4]) -> (Vec<f64>, Vec<f64>) {
    let [l0, l1, l2] = ann_layers();
    let lut = sigmoid_lut_error();
    let sig = |x: &[f64], e: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (x.iter().map(|&v| sig_f(v)).collect(), e.iter().map(|&e| (e / 4.0).min(1000.0) + lut).collect())
    };
    let bias = |x: &[f64], b: &[i32]| -> Vec<f64> { x.iter().zip(b).map(|(&x, &b)| satf(x + b as f64)).collect() };
    let fold = |x: &[f64], e: &[f64], l: &Layer| -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        (0..l.bias.len())
            .map(|j| {
                let s = l.scale[j];
                let v: f64 = (0..n).map(|i| x[i] * l.weights[j * n + i] as f64).sum();
                let err: f64 = (0..n).map(|i| e[i] * (l.weights[j * n + i] as f64).abs()).sum();
                (satf(fscale(v, s)), escale(err, s))
            })
            .unzip()
    };
    let (x, e): (Vec<f64>, Vec<f64>) = input
        .iter()
        .zip(&l0.weights)
        .zip(&l0.scale)
        .map(|((&x, &w), &s)| (satf(fscale(x as f64 * w as f64, s)), escale(0.0, s)))
        .unzip();
    let (x, e) = sig(&bias(&x, &l0.bias), &e);
    let (x, e) = fold(&x, &e, &l1);
    let (x, e) = sig(&bias(&x, &l1.bias), &e);
    let (x, e) = fold(&x, &e, &l2);
    sig(&bias(&x, &l2.bias), &e)
}

// ---------------------------------------------------------------------------
// Gate helpers

pub fn compile(c: &mut MessageClient, src: &str) -> (u16, u16) {
    match c.call(&Request::Compile(src.into())).unwrap() {
        Response::Ok(Payload::Frame { frame, code_len }) => (frame, code_len),
        r => panic!("compile failed: {r:?}"),
    }
}

/// Compile and run `src` through `c`, stepping until the task is done.
pub fn run_via_gate(c: &mut MessageClient, src: &str, steps: u32) -> Vec<OutItem> {
    let (frame, _) = compile(c, src);
    let mut out = match c.call(&Request::Run { frame, steps }).unwrap() {
        Response::Ok(Payload::Output(o)) => return o,
        Response::Suspended { .. } => Vec::new(),
        r => panic!("run failed: {r:?}"),
    };
    for _ in 0..1000 {
        match c.call(&Request::Step(steps)).unwrap() {
            Response::Ok(Payload::Output(o)) => out.extend(o),
            r => panic!("step failed: {r:?}"),
        }
        match c.call(&Request::Status).unwrap() {
            Response::Ok(Payload::Status(s)) if s.live_tasks == 0 => return out,
            _ => {}
        }
    }
    panic!("program did not finish")
}

pub fn node(cfg: NodeConfig) -> Node {
    Node::new(cfg).unwrap()
}

// ---------------------------------------------------------------------------
// ADC job template

pub struct JobParams {
    pub wave: Vec<i32>,
    pub interval_ms: i32,
    pub ampl: i32,
    pub freq: i32,
    pub depth: i32,
    pub gain: i32,
}

pub fn fill_job(tmpl: &str, p: &JobParams) -> String {
    let data: Vec<String> = p.wave.iter().map(i32::to_string).collect();
    tmpl.replace("<waveData>", &data.join(" "))
        .replace("<waveTable>", "wave")
        .replace("<intervalMS>", &p.interval_ms.to_string())
        .replace("<dacDiv>", &p.ampl.to_string())
        .replace("<sampleFreq>", &p.freq.to_string())
        .replace("<device>", "0")
        .replace("<syncMode>", "10")
        .replace("<sampleDepth>", &p.depth.to_string())
        .replace("<gainMode>", &p.gain.to_string())
        .replace("<samples>", &p.depth.to_string())
}

// ---------------------------------------------------------------------------
// Scheduler references

use rexa::sched::energy::{energy_uj, EnergyAccount, PowerPoint, PowerTrace};
use rexa::sched::lsa::{LsaConfig, LsaTask, RecordKind, SliceRecord, SyntheticExecutor, schedule_lsa};
use rexa::sched::MultiScheduler;
use rexa::vm::{Event, TaskState, Vm, VmConfig, Wake};

pub fn random_lsa_tasks(r: &mut ChaCha8Rng) -> (Vec<LsaTask>, Vec<u64>) {
    let n = r.gen_range(1..=6);
    let mut tasks = Vec::new();
    let mut steps = Vec::new();
    for id in 0..n {
        let s: u64 = r.gen_range(1..500);
        let a: u64 = r.gen_range(0..2000);
        tasks.push(LsaTask {
            id,
            priority: r.gen_range(-2..4),
            arrival_us: a,
            deadline_us: a + r.gen_range(1..3000),
            demand_uj: energy_uj(1000.0, s as f64),
            est_us: s as f64,
            io: r.gen_bool(0.15),
        });
        steps.push(s);
    }
    (tasks, steps)
}

/// Plain preemptive EDF at slice granularity (t1 = 1 µs). Ties go to higher
/// priority, then earlier arrival, then lower id. A job still unfinished at
/// its deadline is closed at that instant.
pub fn edf_reference(tasks: &[LsaTask], steps: &[u64], slice: u64) -> (Vec<(usize, u64, u64)>, Vec<(usize, u64)>) {
    let mut rem = steps.to_vec();
    let mut done = vec![false; tasks.len()];
    let mut runs = Vec::new();
    let mut completed = Vec::new();
    let mut t = tasks.iter().map(|x| x.arrival_us).min().unwrap_or(0);
    loop {
        let mut ready: Vec<&LsaTask> = tasks.iter().filter(|x| !done[x.id] && x.arrival_us <= t).collect();
        ready.sort_by_key(|x| (x.deadline_us, -(x.priority as i32), x.arrival_us, x.id));
        let late: Vec<usize> = ready.iter().filter(|x| t >= x.deadline_us).map(|x| x.id).collect();
        if !late.is_empty() {
            for id in late {
                done[id] = true;
                rem[id] = 0;
                completed.push((id, t));
            }
            continue;
        }
        let Some(head) = ready.first() else {
            match tasks.iter().filter(|x| !done[x.id] && x.arrival_us > t).map(|x| x.arrival_us).min() {
                Some(a) => {
                    t = a;
                    continue;
                }
                None => break,
            }
        };
        let id = head.id;
        let k = if head.io { rem[id] } else { rem[id].min(slice) };
        rem[id] -= k;
        t += k;
        runs.push((id, t, k));
        if rem[id] == 0 {
            done[id] = true;
            completed.push((id, t));
        }
    }
    (runs, completed)
}

/// Run LSA with no storage and a live harvester; returns run slices and completions.
pub fn lsa_zero_capacity(tasks: &[LsaTask], steps: &[u64], slice: u64) -> (Vec<(usize, u64, u64)>, Vec<(usize, u64)>) {
    let mut acct = EnergyAccount::new(0.0, 0.0, 1000.0, 1.0, PowerTrace::constant(50.0));
    let mut ex = SyntheticExecutor { remaining: steps.to_vec() };
    let rep = schedule_lsa(tasks, &mut acct, &mut ex, &LsaConfig { slice_steps: slice, horizon_us: u64::MAX });
    let runs = rep
        .trace
        .iter()
        .filter(|r: &&SliceRecord| r.kind == RecordKind::Run)
        .map(|r| (r.task.unwrap(), r.time_us, r.steps))
        .collect();
    (runs, rep.completed)
}

/// Scan-order selection computed from task state alone, without the mask.
pub fn naive_select(vm: &Vm, cur: Option<usize>) -> Option<(usize, Option<Wake>)> {
    let n = vm.tasks.len();
    let first = cur.map_or(0, |c| (c + 1) % n);
    let (mut ev, mut to, mut rd) = (None, None, None);
    for k in 0..n {
        let i = (first + k) % n;
        let Some(t) = vm.task(i) else { continue };
        if matches!(t.state, TaskState::Finished | TaskState::Running) {
            continue;
        }
        if t.pc >= 0 {
            rd = rd.or(Some((i, None)));
            continue;
        }
        match t.event {
            Some(Event::Yield) => rd = rd.or(Some((i, Some(Wake::Event)))),
            Some(e) => match vm.event_ready(&e) {
                Some(Wake::Event) if !matches!(e, Event::Timeout { .. }) => ev = ev.or(Some((i, Some(Wake::Event)))),
                Some(w) => to = to.or(Some((i, Some(w)))),
                None => {}
            },
            None => {}
        }
    }
    ev.or(to).or(rd)
}

fn naive_next_timeout(vm: &Vm) -> Option<u64> {
    vm.tasks
        .iter()
        .flatten()
        .filter(|t| t.state != TaskState::Finished)
        .filter_map(|t| match t.event? {
            Event::Timeout { at_us } => Some(at_us),
            Event::Guard { timeout_at_us, .. } if timeout_at_us != u64::MAX => Some(timeout_at_us),
            _ => None,
        })
        .min()
}

fn random_task_src(r: &mut ChaCha8Rng) -> String {
    match r.gen_range(0..5) {
        0 => format!("{} 0 do i drop yield loop", r.gen_range(1..6)),
        1 => format!("{} sleep 1 . {} sleep", r.gen_range(0..5), r.gen_range(0..3)),
        2 => format!("{} {} flag await drop", r.gen_range(1..8), r.gen_range(0..3)),
        3 => format!("{} sleep {} flag write", r.gen_range(0..6), r.gen_range(0..3)),
        _ => format!("0 {} 0 do i + loop drop", r.gen_range(10..200)),
    }
}

/// Drive one random multi-task trace, comparing every decision of the mask
/// scheduler with [`naive_select`]. Returns the number of decisions checked.
pub fn mask_trace(seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    let cfg = VmConfig { cs: 4096, steps: r.gen_range(3..20), longest_us: u64::MAX, profile: false, ..VmConfig::default() };
    let mut vm = Vm::new(cfg).unwrap();
    vm.ios.dios_add("flag", 1, 2).unwrap();
    for _ in 0..r.gen_range(2..=6) {
        let info = vm.compile(&random_task_src(&mut r)).map_err(|e| e.to_string())?;
        vm.spawn_frame(info.frame).map_err(|e| e.to_string())?;
    }
    let mut s = MultiScheduler::new();
    let mut checked = 0;
    for _ in 0..5000 {
        let want = naive_select(&vm, s.cur);
        let got = s.select(&vm);
        if want != got {
            return Err(format!("seed {seed}: mask picked {got:?}, reference {want:?}"));
        }
        checked += 1;
        if got.is_none() {
            let at = naive_next_timeout(&vm);
            if at != vm.next_timeout_us() {
                return Err(format!("seed {seed}: next timeout differs"));
            }
            if at.is_none() {
                break;
            }
        }
        match s.step(&mut vm) {
            Some(d) if got.is_some_and(|g| g.0 != d.task) => return Err(format!("seed {seed}: dispatched another task")),
            Some(_) => {}
            None => break,
        }
    }
    Ok(checked)
}

/// Drive an energy account through `slices` random slices and instantaneous
/// drains. Returns the worst ledger imbalance and the slice quantum.
pub fn energy_run(seed: u64, slices: usize) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let p_d1 = 3000.0;
    let max_dt = 500u64;
    let mut pts = Vec::new();
    let mut t = 0u64;
    while t < slices as u64 * max_dt {
        pts.push(PowerPoint { time_us: t, p_uw: if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.0..8000.0) } });
        t += r.gen_range(1..20_000);
    }
    let trace = PowerTrace::new(pts).unwrap();
    let mut acct = EnergyAccount::new(50.0, 200.0, p_d1, 1.0, trace.clone());
    let mut t = 0u64;
    let mut worst = 0.0f64;
    for _ in 0..slices {
        let dt = r.gen_range(1..=max_dt);
        acct.advance(t, dt, r.gen_bool(0.6));
        t += dt;
        if r.gen_bool(0.01) {
            acct.drain(r.gen_range(0.0..5.0));
        }
        assert!((0.0..=acct.c).contains(&acct.e));
        worst = worst.max(acct.imbalance().abs());
    }
    let harvest_gap = (acct.ledger.harvested - trace.energy_between(0, t)).abs();
    (worst, harvest_gap, energy_uj(p_d1, max_dt as f64))
}

// ---------------------------------------------------------------------------
// Compiler corpus and checkpoint replay

use rexa::compiler::CompileOptions;
use rexa::host::checkpoint;
use rexa::vm::SliceEnd;

fn corpus_vm() -> Vm {
    Vm::new(VmConfig { cs: 8192, ds: 1024, ..VmConfig::default() }).unwrap()
}

/// Compile one random program: the tokens the compiler read must equal the
/// reference tokenization (nothing was overwritten before it was read), every
/// string body must land intact in the code, and a second compilation in a
/// fresh VM must give identical frame bytes.
pub fn compile_corpus_check(seed: u64) -> Result<usize, String> {
    let src = random_program(&mut rng(seed), GenOpts { suspend: true, text: true });
    let compile = || -> Result<(Vec<u8>, Vec<String>, usize), String> {
        let mut vm = corpus_vm();
        let info = vm
            .compile_with(&src, CompileOptions { trace_tokens: true })
            .map_err(|e| format!("seed {seed}: {e}\n{src}"))?;
        let f = vm.cs.frame(info.frame).unwrap();
        Ok((vm.cs.bytes()[f.start..f.end()].to_vec(), info.tokens, info.shifts))
    };
    let (code, tokens, shifts) = compile()?;
    let (want, strings) = source_tokens(&src);
    if tokens != want {
        return Err(format!("seed {seed}: compiler read corrupted tokens\n{src}"));
    }
    for s in &strings {
        let mut lit = vec![s.len() as u8];
        lit.extend_from_slice(s.as_bytes());
        if !code.windows(lit.len()).any(|w| w == lit) {
            return Err(format!("seed {seed}: string {s:?} not in code"));
        }
    }
    if compile()?.0 != code {
        return Err(format!("seed {seed}: compilation is not deterministic"));
    }
    Ok(shifts)
}

/// Step `idx` by small slices, serving waits like `run_to_end`.
fn run_some(vm: &mut Vm, idx: usize, slices: usize, steps: u32) {
    for _ in 0..slices {
        let Some(t) = vm.task(idx) else { return };
        if !t.is_live() {
            return;
        }
        if t.pc < 0 {
            let ev = t.event.unwrap();
            match vm.event_ready(&ev) {
                Some(w) => vm.wake(idx, w),
                None => match vm.next_timeout_us() {
                    Some(at) if at > vm.now_us() => {
                        vm.advance_to_us(at);
                        continue;
                    }
                    _ => return,
                },
            }
        }
        if matches!(vm.run_slice_with(idx, steps, u64::MAX).end, SliceEnd::Finished | SliceEnd::Error(_)) {
            return;
        }
    }
}

type RunResult = (Vec<i16>, Vec<OutItem>, Option<rexa::vm::Exception>);

fn finish(vm: &mut Vm, idx: usize) -> RunResult {
    vm.run_to_end(idx, 1_000_000);
    let t = vm.task(idx).unwrap();
    let (ds, err) = (t.ds.as_slice().to_vec(), t.error);
    (ds, vm.output.take(), err)
}

/// Save mid-run, restore into a new VM, finish, and compare the data stack,
/// output and error against an uninterrupted run. Returns whether the task
/// was still live at the checkpoint.
pub fn checkpoint_replay(seed: u64) -> Result<bool, String> {
    let mut r = rng(seed ^ 0x5eed);
    let src = random_program(&mut r, GenOpts { suspend: true, text: true });
    let mut a = corpus_vm();
    let f = a.compile(&src).map_err(|e| format!("seed {seed}: {e}"))?.frame;
    let ia = a.spawn_frame(f).unwrap();
    let want = finish(&mut a, ia);

    let mut b = corpus_vm();
    let f = b.compile(&src).unwrap().frame;
    let ib = b.spawn_frame(f).unwrap();
    let cut = r.gen_range(1..40);
    run_some(&mut b, ib, cut, r.gen_range(1..12));
    let live = b.task(ib).is_some_and(|t| t.is_live());
    let blob = checkpoint::save(&b);
    let mut c = checkpoint::restore(&blob).map_err(|e| format!("seed {seed}: {e}"))?;
    let got = finish(&mut c, ib);
    if got != want {
        return Err(format!("seed {seed}: replay differs\n{src}\n{want:?}\n{got:?}"));
    }
    Ok(live)
}

// ---------------------------------------------------------------------------
// Use-case fixtures

use rexa::host::device::Injection;
use rexa::host::signal::{burst, SignalSource, Waveform};
use rexa::ios::gate::vmsys;

/// Noisy sine input with one injected peak of `v` at sample `k`.
pub fn peak_node(k: u32, v: i32) -> NodeConfig {
    let mut cfg = NodeConfig::default();
    cfg.signal = SignalSource::new(Waveform::Sine { freq_hz: 1500.0, amplitude: 40.0 }).with_noise(8.0, 11);
    cfg.injections = vec![Injection { index: k as usize, value: v }];
    cfg
}

pub fn job_cfg() -> NodeConfig {
    NodeConfig::from_toml(&fixture("ex3_node.toml")).unwrap()
}

pub fn job_params(depth: i32) -> JobParams {
    JobParams { wave: burst(32, 3.0, 1000.0), interval_ms: 0, ampl: 100, freq: 10, depth, gain: 0 }
}

/// The same request script through the shared-state gate and the message
/// gate, each on a fresh node.
pub fn gate_transcripts(cfg: &NodeConfig, src: &str) -> (Vec<Response>, Vec<Response>) {
    let reqs = vec![
        Request::Status,
        Request::Install("milli".into()),
        Request::Compile(src.into()),
        Request::Compile("1 2 nosuch".into()),
        Request::Run { frame: 0, steps: 3 },
        Request::Step(5),
        Request::ReadDios("sampled".into()),
        Request::Step(10_000),
        Request::Output,
        Request::ReadDios("sample0".into()),
        Request::WriteDios { name: "sampled".into(), index: 0, value: 9 },
        Request::ReadDios("nosuch".into()),
        Request::Checkpoint,
        Request::Status,
    ];
    let mut shared = node(cfg.clone());
    let a = reqs.iter().map(|r| vmsys(&mut shared, r)).collect();
    let mut msg = MessageClient::new(node(cfg.clone()));
    let b = reqs.iter().map(|r| msg.call(r).unwrap()).collect();
    (a, b)
}

/// Peak detection through the message gate: the reported peak and position must match
/// the injected sample (scaled by the HIGH gain of 2).
pub fn ex1_check(k: u32, v: i32) -> Result<(), String> {
    let mut c = MessageClient::new(node(peak_node(k, v)));
    let text = rexa::vm::io::console_text(&run_via_gate(&mut c, &fixture("ex1_peak.rx"), 10_000));
    let want = format!("Peak: {} at {k} \n", 2 * v);
    (text == want).then_some(()).ok_or(format!("got {text:?}, want {want:?}"))
}

/// ADC job through the message gate: exactly `depth` values streamed, in ring
/// order starting at `sample0`.
pub fn ex3_check(depth: i32) -> Result<Vec<i16>, String> {
    let src = fill_job(&fixture("ex3_job.rx"), &job_params(depth));
    let mut c = MessageClient::new(node(job_cfg()));
    let streamed = rexa::vm::io::out_values(&run_via_gate(&mut c, &src, 10_000));
    let cells = |c: &mut MessageClient, name: &str| match c.call(&Request::ReadDios(name.into())) {
        Ok(Response::Ok(Payload::Cells(v))) => Ok(v),
        r => Err(format!("{name}: {r:?}")),
    };
    let ring = cells(&mut c, "samples")?;
    let s0 = cells(&mut c, "sample0")?[0];
    let want: Vec<i16> = (0..depth).map(|j| ring[((s0 + j) % depth) as usize] as i16).collect();
    if streamed != want {
        return Err(format!("streamed {} values, not the ring of {depth}", streamed.len()));
    }
    Ok(streamed)
}
