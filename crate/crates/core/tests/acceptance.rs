//! Acceptance runner: one PASS/FAIL line per criterion. Every tolerance used
//! below is pinned as a constant here.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use rexa::compiler::bytecode::{decode_literal, encode_literal, Literal, DOUBLE_MAX, DOUBLE_MIN};
use rexa::dsp::fixed::{fpsigmoid, luts};
use rexa::host::config::NodeConfig;
use rexa::isa::{default_tables, LookupMode};
use rexa::metrics::{bench, eff, BenchConfig};

const SIGMOID_MAX_ERR: f64 = 0.01;
const SIGMOID_BUDGET: Duration = Duration::from_secs(1);
const NON_WORDS: usize = 10_000;
const LST_BYTES: (usize, usize) = (525, 875);
const LITERAL_SAMPLES: usize = 100_000;
const SHORT_BOUNDARY: i32 = 8192;
const CORPUS_PROGRAMS: u64 = 500;
const ANN_FRAME_BYTES: (usize, usize) = (237, 450);
const ANN_INPUTS: usize = 200;
const ANN_BUDGET: Duration = Duration::from_secs(1);
const SCHED_SETS: u64 = 1000;
const MASK_TRACES: u64 = 1000;
const ENERGY_SLICES: usize = 100_000;
const CHECKPOINT_PROGRAMS: u64 = 20;
const BENCH_MIN_RATIO: f64 = 5.0;
const BENCH_RUNS: usize = 3;
const BENCH_SPREAD: f64 = 0.20;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_sigmoid() -> Check {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for x in -10_000..=10_000i16 {
        let exact = 1.0 / (1.0 + (-(x as f64) / 1000.0).exp());
        worst = worst.max((fpsigmoid(x) as f64 / 1000.0 - exact).abs());
    }
    let dt = t0.elapsed();
    ensure(worst < SIGMOID_MAX_ERR, || format!("max error {worst:.5}"))?;
    ensure(dt < SIGMOID_BUDGET, || format!("took {dt:?}"))?;
    Ok(format!("max error {worst:.5} in {dt:?}"))
}

fn c2_luts() -> Check {
    let l = luts();
    let sizes = (l.sglut13.len(), l.sglut310.len(), l.log10lut.len());
    ensure(sizes == (24, 6, 100), || format!("sizes {sizes:?}"))?;
    let pts = (fpsigmoid(0), fpsigmoid(10_000), fpsigmoid(-10_000));
    ensure(pts == (500, 1000, 0), || format!("fixed points {pts:?}"))?;
    Ok("24/6/100 entries, sigmoid(0, +-10000) = 500/1000/0".into())
}

fn c3_tables() -> Check {
    let t = default_tables();
    for w in t.wordlist.words() {
        let (p, l) = (t.lookup(&w.name, LookupMode::Pht), t.lookup(&w.name, LookupMode::Lst));
        ensure(p == Some(w.opcode) && l == p, || format!("{}: pht {p:?} lst {l:?}", w.name))?;
    }
    let mut r = rng(0xac3);
    let mut n = 0;
    while n < NON_WORDS {
        let len = r.gen_range(1..=15);
        let s: String = (0..len).map(|_| r.gen_range(b'!'..=b'~') as char).filter(|&c| c != '(').collect();
        if s.is_empty() || t.wordlist.position(&s).is_some() {
            continue;
        }
        n += 1;
        let (p, l) = (t.lookup(&s, LookupMode::Pht), t.lookup(&s, LookupMode::Lst));
        ensure(p.is_none() && l.is_none(), || format!("{s:?}: pht {p:?} lst {l:?}"))?;
    }
    let size = t.lst.size_bytes();
    ensure((LST_BYTES.0..=LST_BYTES.1).contains(&size), || format!("LST {size} bytes"))?;
    Ok(format!("{} words + {NON_WORDS} non-words agree, LST {size} bytes", t.wordlist.len()))
}

fn c4_literals() -> Check {
    let check = |v: i32| -> Result<(), String> {
        let l = encode_literal(v).map_err(|e| e.to_string())?;
        ensure(decode_literal(l.bytes()) == Some((v, l.bytes().len())), || format!("{v} does not round-trip"))?;
        let short = (-SHORT_BOUNDARY..SHORT_BOUNDARY).contains(&v);
        ensure(matches!(l, Literal::Short(_)) == short, || format!("{v} in the wrong form"))
    };
    let edges = [DOUBLE_MIN, DOUBLE_MIN + 1, -SHORT_BOUNDARY - 1, -SHORT_BOUNDARY, -1, 0, SHORT_BOUNDARY - 1, SHORT_BOUNDARY, DOUBLE_MAX - 1, DOUBLE_MAX];
    for v in edges {
        check(v)?;
    }
    let mut r = rng(0xac4);
    for _ in 0..LITERAL_SAMPLES {
        check(r.gen_range(DOUBLE_MIN..=DOUBLE_MAX))?;
    }
    ensure(encode_literal(DOUBLE_MAX + 1).is_err(), || "2^29 accepted".into())?;
    Ok(format!("{} edges + {LITERAL_SAMPLES} random values", edges.len()))
}

fn c5_corpus() -> Check {
    let mut shifts = 0;
    for seed in 0..CORPUS_PROGRAMS {
        shifts += compile_corpus_check(0xac5_0000 + seed)?;
    }
    ensure(shifts > 0, || "corpus never needed a source shift".into())?;
    Ok(format!("{CORPUS_PROGRAMS} programs, {shifts} source shifts, deterministic"))
}

fn c6_ann() -> Check {
    let t0 = Instant::now();
    let src = fixture("ex2_ann.rx");
    let mut cfg = NodeConfig::default();
    cfg.vm.cs = 4096;
    let mut n = node(cfg);
    let info = n.vm.compile(&src).map_err(|e| e.to_string())?;
    let frame = info.code_len + info.data_len;
    ensure((ANN_FRAME_BYTES.0..=ANN_FRAME_BYTES.1).contains(&frame), || format!("frame {frame} bytes"))?;
    n.vm.remove_frame(info.frame).map_err(|e| e.to_string())?;
    let mut r = rng(0xac6);
    let mut slack = f64::INFINITY;
    for _ in 0..ANN_INPUTS {
        let x = [(); 4].map(|_| r.gen_range(-3000..3000));
        let d = n.vm.ios.dios_by_name_mut("samples").unwrap();
        for (i, v) in x.into_iter().enumerate() {
            d.set(100 + i, v).unwrap();
        }
        let text = n.run_program(&src, 10_000).map_err(|e| e.to_string())?;
        let got: Vec<i128> = text.split_whitespace().map(|s| s.parse().unwrap()).collect();
        ensure(got == ann_wide(&x), || format!("{x:?}: {got:?} vs wide reference {:?}", ann_wide(&x)))?;
        let (f, bound) = ann_float(&x);
        for k in 0..2 {
            let dev = (got[k] as f64 - f[k]).abs();
            ensure(dev <= bound[k], || format!("{x:?} output {k}: |{} - {:.2}| > {:.2}", got[k], f[k], bound[k]))?;
            slack = slack.min(bound[k] - dev);
        }
    }
    let dt = t0.elapsed();
    ensure(dt < ANN_BUDGET, || format!("took {dt:?}"))?;
    Ok(format!("frame {frame} bytes, {ANN_INPUTS} inputs exact, min bound slack {slack:.2}, {dt:?}"))
}

fn c7_scheduler() -> Check {
    let mut r = rng(0xac7);
    for i in 0..SCHED_SETS {
        let (tasks, steps) = random_lsa_tasks(&mut r);
        let slice = [8u64, 64, 200][i as usize % 3];
        ensure(lsa_zero_capacity(&tasks, &steps, slice) == edf_reference(&tasks, &steps, slice), || {
            format!("LSA(C=0) differs from EDF on {tasks:?}")
        })?;
    }
    let mut decisions = 0;
    for seed in 0..MASK_TRACES {
        decisions += mask_trace(0xac7_0000 + seed)?;
    }
    let (imbalance, harvest_gap, quantum) = energy_run(0xac7, ENERGY_SLICES);
    ensure(imbalance <= quantum && harvest_gap <= quantum, || {
        format!("ledger off by {imbalance:.3e} / harvest {harvest_gap:.3e} (quantum {quantum})")
    })?;
    Ok(format!(
        "{SCHED_SETS} EDF sets, {MASK_TRACES} mask traces ({decisions} decisions), ledger drift {imbalance:.1e} uJ"
    ))
}

fn c8_checkpoint() -> Check {
    let mut live = 0;
    for seed in 0..CHECKPOINT_PROGRAMS {
        live += checkpoint_replay(0xac8_0000 + seed)? as usize;
    }
    Ok(format!("{CHECKPOINT_PROGRAMS} programs, {live} saved mid-run"))
}

fn c9_fixtures() -> Check {
    for (k, v) in [(0, 900), (333, 700), (1023, 1200)] {
        ex1_check(k, v)?;
    }
    for depth in [16, 64, 100] {
        ex3_check(depth)?;
    }
    let pairs = [
        (peak_node(77, 800), fixture("ex1_peak.rx")),
        (job_cfg(), fill_job(&fixture("ex3_job.rx"), &job_params(32))),
    ];
    for (cfg, src) in &pairs {
        let (a, b) = gate_transcripts(cfg, src);
        ensure(a == b, || "shared and message transcripts differ".into())?;
    }
    Ok("peak detection and ADC ring streams via message gate; transcripts identical".into())
}

fn c10_bench() -> Check {
    let mut ratios = Vec::new();
    for _ in 0..BENCH_RUNS {
        let r = bench(&BenchConfig::default()).map_err(|e| e.to_string())?;
        ensure(r.mwps > 0.0 && r.mcps > 0.0, || "zero throughput".into())?;
        ensure(r.ratio >= BENCH_MIN_RATIO, || format!("ratio {:.2}", r.ratio))?;
        ratios.push(r.ratio);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    ensure(ratios.iter().all(|r| (r - mean).abs() <= BENCH_SPREAD * mean), || format!("unstable ratios {ratios:?}"))?;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
    Ok(format!("MWPS/MCPS ratios {}", shown.join(", ")))
}

fn c11_eff() -> Check {
    let a = eff(16.0, 40.0, 0.25, 2.0);
    let b = eff(12.0, 2.1, 2.1, 4.0);
    ensure(a == Some(1280.0) && b == Some(3.0), || format!("got {a:?} and {b:?}"))?;
    Ok("1280 and 3".into())
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 11] = [
        ("sigmoid accuracy", c1_sigmoid),
        ("sigmoid tables", c2_luts),
        ("PHT/LST lookup", c3_tables),
        ("literal encoding", c4_literals),
        ("compiler corpus", c5_corpus),
        ("ANN [4,3,2]", c6_ann),
        ("scheduler", c7_scheduler),
        ("checkpoint replay", c8_checkpoint),
        ("use-case fixtures", c9_fixtures),
        ("bench", c10_bench),
        ("eff", c11_eff),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        match f() {
            Ok(d) => println!("PASS {:>2} {name}: {d}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {e}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
