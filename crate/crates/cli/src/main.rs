use std::io::{self, BufRead, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rexa::host::checkpoint;
use rexa::host::config::NodeConfig;
use rexa::host::node::Node;
use rexa::ios::gate::{vmsys, MessageClient, MessageGate, Payload, Request, Response};
use rexa::isa::{default_tables, load_wordlist, IsaTables};
use rexa::metrics::{bench, eff, BenchConfig};
use rexa::vm::{Exception, OutItem};

const EXIT_COMPILE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "rexa", version, about = "Stack VM with in-place compiler, node simulator and tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Interactive line-at-a-time compile and run.
    Repl {
        #[arg(long)]
        node: Option<PathBuf>,
        /// Free each line's frame after it ran.
        #[arg(long)]
        transient: bool,
    },
    /// Run a program on a simulated node through the message gate.
    Run {
        file: PathBuf,
        #[arg(long)]
        node: Option<PathBuf>,
        /// Write console.txt, out.csv and dac.csv into this directory.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write `out` values here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000_000)]
        max_steps: u32,
    },
    /// Generate the ISA lookup tables.
    GenIsa {
        /// Word list (JSON array of {name, tag}); defaults to the core list.
        #[arg(long)]
        words: Option<PathBuf>,
        /// Emit Rust source instead of the binary artifact.
        #[arg(long)]
        rust: bool,
        /// Output path; defaults to $REXA_TABLES, or stdout for --rust.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure MWPS and MCPS.
    Bench {
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Efficiency factor C*M/(A*P).
    Eff { c: f64, m: f64, a: f64, p: f64 },
    /// Save or restore VM state.
    Checkpoint {
        #[command(subcommand)]
        op: CheckpointOp,
    },
    /// Serve the message gate on stdio or a TCP address.
    Serve {
        #[arg(long)]
        node: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Subcommand)]
enum CheckpointOp {
    /// Run a script for some scheduling steps, then save the state.
    Save {
        file: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long)]
        node: Option<PathBuf>,
    },
    /// Restore a saved state and run it to completion.
    Restore {
        file: PathBuf,
        #[arg(long)]
        node: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000_000)]
        max_steps: usize,
    },
}

#[derive(Debug)]
struct Fail(u8, String);

type Res<T> = Result<T, Fail>;

fn config_err(e: impl std::fmt::Display) -> Fail {
    Fail(EXIT_CONFIG, e.to_string())
}

fn tables() -> Res<Arc<IsaTables>> {
    match std::env::var_os("REXA_TABLES") {
        Some(p) if Path::new(&p).exists() => {
            let b = std::fs::read(&p).map_err(config_err)?;
            IsaTables::from_bytes(&b).map(Arc::new).map_err(config_err)
        }
        _ => Ok(default_tables()),
    }
}

fn node(cfg: Option<&Path>) -> Res<Node> {
    let cfg = match cfg {
        Some(p) => NodeConfig::load(p).map_err(config_err)?,
        None => NodeConfig::default(),
    };
    Node::with_tables(cfg, tables()?).map_err(config_err)
}

fn exception_name(code: i16) -> String {
    Exception::from_code(code as i32).map_or_else(|| format!("code {code}"), |e| e.to_string())
}

/// Console text goes to `w`; `out` values to `vals` when given, else `w`.
fn emit(items: &[OutItem], w: &mut dyn Write, vals: &mut Option<Vec<i16>>) -> io::Result<()> {
    for it in items {
        match it {
            OutItem::Text(s) => w.write_all(s.as_bytes())?,
            OutItem::Value(v) => match vals {
                Some(vs) => vs.push(*v),
                None => writeln!(w, "{v}")?,
            },
        }
    }
    w.flush()
}

fn repl(cfg: Option<&Path>, transient: bool) -> Res<()> {
    let mut node = node(cfg)?;
    let stdin = io::stdin();
    let mut out = io::stdout();
    let mut none = None;
    for line in stdin.lock().lines() {
        let line = line.map_err(config_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = match vmsys(&mut node, &Request::Compile(line.clone())) {
            Response::Ok(Payload::Frame { frame, .. }) => frame,
            Response::CompileError { pos, msg, .. } => {
                eprintln!("{line}\n{}^ {msg}", " ".repeat(pos as usize));
                continue;
            }
            r => {
                eprintln!("error: {r:?}");
                continue;
            }
        };
        if !transient {
            if let Some(f) = node.vm.cs.frame_mut(frame) {
                f.persistent = true;
            }
        }
        let resp = vmsys(&mut node, &Request::Run { frame, steps: 1_000_000 });
        if let Response::Ok(Payload::Output(items)) = vmsys(&mut node, &Request::Output) {
            let _ = emit(&items, &mut out, &mut none);
        }
        match resp {
            Response::Ok(Payload::Output(items)) => {
                let _ = emit(&items, &mut out, &mut none);
                if !rexa::vm::io::console_text(&items).is_empty() {
                    println!();
                }
            }
            Response::VmError(c) => eprintln!("exception: {}", exception_name(c)),
            Response::Suspended { pc } => eprintln!("task suspended at {pc}"),
            r => eprintln!("error: {r:?}"),
        }
    }
    Ok(())
}

fn run(file: &Path, cfg: Option<&Path>, trace: Option<&Path>, out_file: Option<&Path>, max_steps: u32) -> Res<()> {
    let src = std::fs::read_to_string(file).map_err(config_err)?;
    let mut client = MessageClient::new(node(cfg)?);
    let call = |c: &mut MessageClient, r: &Request| c.call(r).map_err(|e| Fail(EXIT_RUNTIME, e.to_string()));
    let frame = match call(&mut client, &Request::Compile(src.clone()))? {
        Response::Ok(Payload::Frame { frame, .. }) => frame,
        Response::CompileError { pos, msg, .. } => {
            let line = src[..(pos as usize).min(src.len())].lines().count().max(1);
            return Err(Fail(EXIT_COMPILE, format!("{}:{line}: offset {pos}: {msg}", file.display())));
        }
        r => return Err(Fail(EXIT_RUNTIME, format!("{r:?}"))),
    };
    let mut items = Vec::new();
    let first = call(&mut client, &Request::Run { frame, steps: max_steps })?;
    let mut failure = None;
    match first {
        Response::Ok(Payload::Output(o)) => {
            items.extend(o);
            if let Response::Ok(Payload::Output(o)) = call(&mut client, &Request::Step(max_steps))? {
                items.extend(o);
            }
        }
        Response::VmError(c) => failure = Some(format!("uncaught exception: {}", exception_name(c))),
        Response::Suspended { pc } => failure = Some(format!("program did not finish (suspended at {pc})")),
        r => failure = Some(format!("{r:?}")),
    }
    if let Response::Ok(Payload::Output(o)) = call(&mut client, &Request::Output)? {
        items.extend(o);
    }
    if let Some(e) = client.gate.node.errors.first() {
        failure.get_or_insert_with(|| format!("task {} raised {}", e.0, e.1));
    }

    let mut vals = out_file.map(|_| Vec::new());
    emit(&items, &mut io::stdout(), &mut vals).map_err(config_err)?;
    if let (Some(p), Some(vs)) = (out_file, &vals) {
        let text: String = vs.iter().map(|v| format!("{v}\n")).collect();
        std::fs::write(p, text).map_err(config_err)?;
    }
    if let Some(dir) = trace {
        write_trace(dir, &items, &client.gate.node).map_err(config_err)?;
    }
    match failure {
        Some(m) => Err(Fail(EXIT_RUNTIME, m)),
        None => Ok(()),
    }
}

fn write_trace(dir: &Path, items: &[OutItem], node: &Node) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("console.txt"), rexa::vm::io::console_text(items))?;
    let mut out = String::from("index,value\n");
    for (i, v) in rexa::vm::io::out_values(items).iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    std::fs::write(dir.join("out.csv"), out)?;
    let mut dac = String::from("time_us,value\n");
    for (t, v) in &node.devices.lock().capture {
        dac.push_str(&format!("{t},{v}\n"));
    }
    std::fs::write(dir.join("dac.csv"), dac)
}

fn gen_isa(words: Option<&Path>, rust: bool, out: Option<&Path>) -> Res<()> {
    let tables = match words {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(config_err)?;
            let wl = load_wordlist(&text).map_err(config_err)?;
            Arc::new(IsaTables::generate(wl).map_err(config_err)?)
        }
        None => default_tables(),
    };
    let env = std::env::var_os("REXA_TABLES").map(PathBuf::from);
    let out = out.map(Path::to_path_buf).or(if rust { None } else { env });
    let bytes = if rust { tables.to_rust_source().into_bytes() } else { tables.to_bytes() };
    match out {
        Some(p) => {
            std::fs::write(&p, &bytes).map_err(config_err)?;
            eprintln!("wrote {} bytes to {}", bytes.len(), p.display());
        }
        None if rust => print!("{}", String::from_utf8_lossy(&bytes)),
        None => return Err(config_err("binary artifact needs --out or REXA_TABLES")),
    }
    Ok(())
}

fn checkpoint_op(op: CheckpointOp) -> Res<()> {
    match op {
        CheckpointOp::Save { file, script, steps, node: cfg } => {
            let src = std::fs::read_to_string(&script).map_err(config_err)?;
            let mut n = node(cfg.as_deref())?;
            n.load(&src).map_err(|e| Fail(EXIT_COMPILE, e.to_string()))?;
            n.run(steps);
            let blob = checkpoint::save(&n.vm);
            std::fs::write(&file, &blob).map_err(config_err)?;
            emit(&n.vm.output.take(), &mut io::stdout(), &mut None).map_err(config_err)?;
            eprintln!("saved {} bytes to {}", blob.len(), file.display());
            Ok(())
        }
        CheckpointOp::Restore { file, node: cfg, max_steps } => {
            let blob = std::fs::read(&file).map_err(config_err)?;
            let mut n = node(cfg.as_deref())?;
            checkpoint::restore_into(&mut n.vm, &blob).map_err(config_err)?;
            n.run(max_steps);
            emit(&n.vm.output.take(), &mut io::stdout(), &mut None).map_err(config_err)?;
            match n.errors.first() {
                Some((t, e)) => Err(Fail(EXIT_RUNTIME, format!("task {t} raised {e}"))),
                None => Ok(()),
            }
        }
    }
}

fn pump(gate: &mut MessageGate, r: &mut dyn Read, w: &mut dyn Write) -> io::Result<()> {
    let mut buf = [0u8; 4096];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        let reply = gate.handle_bytes(&buf[..n]);
        w.write_all(&reply)?;
        w.flush()?;
    }
}

fn serve(cfg: Option<&Path>, listen: Option<&str>) -> Res<()> {
    let mut gate = MessageGate::new(node(cfg)?);
    match listen {
        None => pump(&mut gate, &mut io::stdin(), &mut io::stdout()).map_err(config_err),
        Some(addr) => {
            let l = TcpListener::bind(addr).map_err(config_err)?;
            eprintln!("listening on {}", l.local_addr().map_err(config_err)?);
            for s in l.incoming() {
                let mut s = s.map_err(config_err)?;
                let mut r = s.try_clone().map_err(config_err)?;
                if let Err(e) = pump(&mut gate, &mut r, &mut s) {
                    eprintln!("connection closed: {e}");
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Repl { node, transient } => repl(node.as_deref(), transient),
        Cmd::Run { file, node, trace, out, max_steps } => {
            run(&file, node.as_deref(), trace.as_deref(), out.as_deref(), max_steps)
        }
        Cmd::GenIsa { words, rust, out } => gen_isa(words.as_deref(), rust, out.as_deref()),
        Cmd::Bench { json, reps } => {
            let cfg = BenchConfig { reps, ..Default::default() };
            bench(&cfg).map_err(|e| Fail(EXIT_RUNTIME, e.to_string())).map(|r| {
                if json {
                    println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
                } else {
                    println!("MWPS {:.3}  MCPS {:.3}  ratio {:.2}", r.mwps, r.mcps, r.ratio);
                    println!("t1 {:.4} us  steps {}  words {}", r.t1_us, r.steps, r.words);
                    println!("CS {} DS {} RS {} FS {}  core words {}", r.cs, r.ds, r.rs, r.fs, r.core_words);
                }
            })
        }
        Cmd::Eff { c, m, a, p } => match eff(c, m, a, p) {
            Some(v) => {
                println!("{v}");
                Ok(())
            }
            None => Err(config_err("A*P must be nonzero")),
        },
        Cmd::Checkpoint { op } => checkpoint_op(op),
        Cmd::Serve { node, listen } => serve(node.as_deref(), listen.as_deref()),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("rexa: {msg}");
            ExitCode::from(code)
        }
    }
}
