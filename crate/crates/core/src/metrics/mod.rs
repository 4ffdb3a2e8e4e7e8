//! Throughput benchmark and the normalized efficiency factor.

use std::time::Instant;

use serde::Serialize;

use crate::vm::{SliceEnd, Vm, VmConfig, VmError};

/// Normalized performance factor `ε = C·M / (A·P)`, rounded to 9 decimals.
/// `None` when the denominator is zero or the result is not finite.
pub fn eff(c: f64, m: f64, a: f64, p: f64) -> Option<f64> {
    let v = c * m / (a * p);
    v.is_finite().then(|| (v * 1e9).round() / 1e9)
}

/// Execution corpus: loop-heavy programs touching arithmetic, stack, memory,
/// calls and nested loops.
pub const EXEC_CORPUS: &[&str] = &[
    ": f 0 100 0 do i + loop drop ; 50 0 do f loop",
    "var x 0 x ! 2000 0 do x @ i + 7 mod x ! loop",
    ": sq dup * ; 0 1000 0 do i sq 255 and + loop drop",
    "0 40 0 do 40 0 do i j * + loop loop drop",
    "array a 64 64 0 do i i a write loop 0 500 0 do i 63 and a read + loop drop",
];

/// Compilation corpus: a mix of definitions, literals, control flow and arrays.
pub const COMPILE_CORPUS: &str = "\
( calibration ) : sq dup * ; : cube dup sq * ; var acc 0 acc ! \
array tab { 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16 } \
: sum 0 16 0 do i tab read + loop ; \
: clamp dup 100 > if drop 100 else dup 0 < if drop 0 endif endif ; \
100 0 do i sq clamp acc @ + acc ! loop acc @ . sum . 300 cube drop \
begin acc @ 1 - dup acc ! 0 = until 70000l 2drop 12 34 swap over rot drop drop drop";

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    /// Million bytecode word executions per second.
    pub mwps: f64,
    /// Million source word compilations per second.
    pub mcps: f64,
    pub ratio: f64,
    /// Measured host time per VM step (µs), usable as `t1`.
    pub t1_us: f64,
    pub steps: u64,
    pub words: u64,
    pub cs: usize,
    pub ds: usize,
    pub rs: usize,
    pub fs: usize,
    pub core_words: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    /// Minimum VM steps per execution sample.
    pub exec_steps: u64,
    /// Minimum source words per compilation sample.
    pub compile_words: u64,
    /// Samples per measurement; the median is reported.
    pub reps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { exec_steps: 3_000_000, compile_words: 300_000, reps: 5 }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn exec_sample(vm: &mut Vm, target: u64) -> Result<(u64, f64), VmError> {
    let frames = EXEC_CORPUS.iter().map(|s| vm.compile(s).map(|i| i.frame)).collect::<Result<Vec<_>, _>>()?;
    for &f in &frames {
        if let Some(f) = vm.cs.frame_mut(f) {
            f.persistent = true;
        }
    }
    let mut steps = 0u64;
    let t0 = Instant::now();
    while steps < target {
        for &f in &frames {
            let idx = vm.spawn_frame(f)?;
            loop {
                let o = vm.run_slice_with(idx, u32::MAX, u64::MAX);
                steps += o.steps as u64;
                match o.end {
                    SliceEnd::Finished => break,
                    SliceEnd::Error(e) => return Err(VmError::Config(format!("bench program failed: {e}"))),
                    _ => {}
                }
            }
            vm.reap(idx);
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    for f in frames {
        vm.remove_frame(f)?;
    }
    Ok((steps, dt))
}

fn compile_sample(vm: &mut Vm, target: u64) -> Result<(u64, f64), VmError> {
    let mut words = 0u64;
    let t0 = Instant::now();
    while words < target {
        let info = vm.compile(COMPILE_CORPUS)?;
        words += info.words as u64;
        vm.remove_frame(info.frame)?;
    }
    Ok((words, t0.elapsed().as_secs_f64()))
}

/// Run the calibration corpus. Wall-clock based; results vary by machine.
pub fn bench(cfg: &BenchConfig) -> Result<BenchReport, VmError> {
    let vcfg = VmConfig { cs: 4096, profile: false, preempt_interrupt: false, ..VmConfig::default() };
    let mut vm = Vm::new(vcfg.clone())?;
    // Warm-up.
    exec_sample(&mut vm, cfg.exec_steps / 10)?;
    compile_sample(&mut vm, cfg.compile_words / 10)?;
    let reps = cfg.reps.max(1);
    let mut exec = Vec::new();
    let mut comp = Vec::new();
    let (mut steps, mut words) = (0, 0);
    for _ in 0..reps {
        let (s, dt) = exec_sample(&mut vm, cfg.exec_steps)?;
        exec.push(s as f64 / dt.max(1e-9) / 1e6);
        steps += s;
        let (w, dt) = compile_sample(&mut vm, cfg.compile_words)?;
        comp.push(w as f64 / dt.max(1e-9) / 1e6);
        words += w;
    }
    let mwps = median(exec);
    let mcps = median(comp);
    Ok(BenchReport {
        mwps,
        mcps,
        ratio: mwps / mcps,
        t1_us: 1.0 / mwps,
        steps,
        words,
        cs: vcfg.cs,
        ds: vcfg.ds,
        rs: vcfg.rs,
        fs: vcfg.fs,
        core_words: vm.tables.wordlist.len(),
    })
}
