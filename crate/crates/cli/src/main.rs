//! `edgesim`: assemble, run and compare EDGE blocks on the reference
//! interpreter and the two timed schedulers.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use edgesim_core::assembler::{assemble, disassemble};
use edgesim_core::binfile::{read_blocks, write_blocks, MAGIC};
use edgesim_core::gen::{random_program, random_state, GenConfig};
use edgesim_core::isa::{Block, NUM_REGS};
use edgesim_core::metrics::{compare, cost_report, cost_table};
use edgesim_core::pipeline::{run_program_timed, CoreConfig, CoreError, TimedOutcome};
use edgesim_core::refinterp::{run_program, ArchState, ProgramOutcome};
use edgesim_core::sched::SchedulerKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "edgesim", version, about = "EDGE block assembler and cycle-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assemble a text program into the binary block format.
    Asm {
        input: PathBuf,
        /// Output path; defaults to the input with an .edgb extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print a binary program as assembly text.
    Disasm {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a program on one engine.
    Run {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Engine::Ref)]
        engine: Engine,
        #[command(flatten)]
        state: StateArgs,
        /// JSON-lines cycle trace (timed engines only).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// JSON statistics (timed engines only).
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        load_latency: u32,
    },
    /// Run a program on all three engines and compare them.
    Compare {
        input: PathBuf,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 2)]
        load_latency: u32,
    },
    /// Published area and timing of a scheduler configuration.
    Cost {
        #[arg(long, value_enum, required_unless_present = "table")]
        scheduler: Option<Sched>,
        #[arg(long, default_value_t = 32)]
        entries: u32,
        #[arg(long, default_value_t = 2)]
        events: u32,
        /// Print both schedulers side by side.
        #[arg(long, conflicts_with = "scheduler")]
        table: bool,
        #[arg(long)]
        json: bool,
    },
    /// Compare the engines on random programs (seed from EDGESIM_SEED).
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        iterations: u32,
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        #[arg(long, env = "EDGESIM_SEED")]
        seed: Option<u64>,
    },
}

#[derive(clap::Args, Debug)]
struct StateArgs {
    /// Initial registers, e.g. R0=2,R7=3.
    #[arg(long, value_delimiter = ',')]
    regs: Vec<String>,
    /// Initial memory words, e.g. 0x100=7,0x104=9.
    #[arg(long, value_delimiter = ',')]
    mem: Vec<String>,
    /// Entry block; defaults to the first block.
    #[arg(long)]
    start: Option<String>,
    #[arg(long, default_value_t = 1000)]
    max_blocks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Engine {
    Ref,
    Parallel,
    Incremental,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Sched {
    Parallel,
    Incremental,
}

impl From<Sched> for SchedulerKind {
    fn from(s: Sched) -> SchedulerKind {
        match s {
            Sched::Parallel => SchedulerKind::Parallel,
            Sched::Incremental => SchedulerKind::Incremental,
        }
    }
}

/// A failure of the simulator itself rather than of its input.
#[derive(Debug)]
struct Internal(String);

impl fmt::Display for Internal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal error: {}", self.0)
    }
}

impl std::error::Error for Internal {}

fn timed_error(e: CoreError) -> anyhow::Error {
    match e {
        CoreError::Internal { .. } | CoreError::LsqOrderViolation { .. } => Internal(e.to_string()).into(),
        e => e.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = std::panic::catch_unwind(|| dispatch(cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) if e.is::<Internal>() => {
            eprintln!("edgesim: {e:#}");
            ExitCode::from(2)
        }
        Ok(Err(e)) => {
            eprintln!("edgesim: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Asm { input, output } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let blocks = assemble(&text).with_context(|| format!("assembling {}", input.display()))?;
            let out = output.unwrap_or_else(|| input.with_extension("edgb"));
            fs::write(&out, write_blocks(&blocks)?).with_context(|| format!("writing {}", out.display()))?;
            let insns: usize = blocks.iter().map(Block::len).sum();
            println!("{}: {} blocks, {insns} instructions", out.display(), blocks.len());
        }
        Command::Disasm { input, output } => {
            let blocks = load(&input)?;
            let text = disassemble(&blocks);
            match output {
                Some(out) => fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Run { input, engine, state, trace, stats, load_latency } => {
            let blocks = load(&input)?;
            let (arch, start) = initial_state(&blocks, &state)?;
            match engine {
                Engine::Ref => {
                    if trace.is_some() || stats.is_some() {
                        bail!("--trace and --stats need a timed engine");
                    }
                    let out = run_program(&blocks, arch, &start, state.max_blocks)?;
                    print_outcome(&out.exits, out.halted, &out.state);
                }
                Engine::Parallel | Engine::Incremental => {
                    let kind =
                        if engine == Engine::Parallel { SchedulerKind::Parallel } else { SchedulerKind::Incremental };
                    let mut cfg = CoreConfig::new(kind);
                    cfg.load_latency = load_latency;
                    if trace.is_some() {
                        cfg = cfg.with_trace();
                    }
                    let out = run_program_timed(&blocks, arch, cfg, &start, state.max_blocks).map_err(timed_error)?;
                    print_outcome(&out.exits, out.halted, &out.state);
                    let s = &out.stats;
                    println!(
                        "cycles={} issues={} ipc={:.3} bank_conflicts={} broadcast_drain_cycles={}",
                        s.cycles, s.issues, s.ipc, s.bank_conflicts, s.broadcast_drain_cycles
                    );
                    if let Some(path) = trace {
                        write_trace(&path, &out)?;
                    }
                    if let Some(path) = stats {
                        let v = sorted(&out.stats)?;
                        fs::write(&path, serde_json::to_string_pretty(&v)? + "\n")
                            .with_context(|| format!("writing {}", path.display()))?;
                    }
                }
            }
        }
        Command::Compare { input, state, load_latency } => {
            let blocks = load(&input)?;
            let (arch, start) = initial_state(&blocks, &state)?;
            compare_engines(&blocks, arch, &start, state.max_blocks, load_latency, true)?;
        }
        Command::Cost { scheduler, entries, events, table, json } => {
            if table {
                print!("{}", cost_table());
                return Ok(());
            }
            let kind = SchedulerKind::from(scheduler.expect("required by clap"));
            let cost = cost_report(kind, entries, events)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&sorted(&cost)?)?);
            } else {
                println!("{cost}");
            }
        }
        Command::Fuzz { iterations, blocks: count, seed } => {
            let seed = seed.unwrap_or_else(|| {
                std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64)
            });
            println!("seed {seed}");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..iterations {
                let blocks = random_program(&mut rng, count.max(1), GenConfig::default());
                let arch = random_state(&mut rng);
                compare_engines(&blocks, arch, &blocks[0].name, 4 * count.max(1), 2, false)
                    .with_context(|| format!("iteration {i}, program:\n{}", disassemble(&blocks)))?;
            }
            println!("{iterations} programs, all engines agree");
        }
    }
    Ok(())
}

/// Reads a binary program, or assembly text if the file lacks the binary
/// magic.
fn load(path: &Path) -> Result<Vec<Block>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        return read_blocks(&bytes).with_context(|| format!("decoding {}", path.display()));
    }
    let text =
        String::from_utf8(bytes).map_err(|_| anyhow!("{}: neither a binary program nor text", path.display()))?;
    assemble(&text).with_context(|| format!("assembling {}", path.display()))
}

fn parse_u32(s: &str) -> Result<u32> {
    let s = s.trim();
    let v = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else if s.starts_with('-') {
        s.parse::<i32>().ok().map(|v| v as u32)
    } else {
        s.parse::<u32>().ok()
    };
    v.ok_or_else(|| anyhow!("bad number {s:?}"))
}

fn initial_state(blocks: &[Block], args: &StateArgs) -> Result<(ArchState, String)> {
    let mut arch = ArchState::default();
    for item in args.regs.iter().filter(|s| !s.is_empty()) {
        let (r, v) = item.split_once('=').ok_or_else(|| anyhow!("expected Rn=value, got {item:?}"))?;
        let r = r.trim();
        let n: usize = r
            .strip_prefix(['R', 'r'])
            .and_then(|n| n.parse().ok())
            .filter(|&n| n < NUM_REGS)
            .ok_or_else(|| anyhow!("bad register {r:?}"))?;
        arch.regs[n] = parse_u32(v)?;
    }
    for item in args.mem.iter().filter(|s| !s.is_empty()) {
        let (a, v) = item.split_once('=').ok_or_else(|| anyhow!("expected addr=value, got {item:?}"))?;
        let addr = parse_u32(a)?;
        if addr % 4 != 0 {
            bail!("memory address {addr:#x} is not word aligned");
        }
        arch.mem.insert(addr, parse_u32(v)?);
    }
    let start = match &args.start {
        Some(s) => s.clone(),
        None => blocks.first().map(|b| b.name.clone()).ok_or_else(|| anyhow!("program has no blocks"))?,
    };
    Ok((arch, start))
}

fn print_outcome(exits: &[String], halted: bool, state: &ArchState) {
    for e in exits {
        println!("exit={e}");
    }
    println!("blocks={} halted={halted}", exits.len());
    let regs: String =
        state.regs.iter().enumerate().filter(|(_, &v)| v != 0).map(|(r, v)| format!(" R{r}={}", *v as i32)).collect();
    println!("regs{regs}");
    if !state.mem.is_empty() {
        let mem: Vec<String> = state.mem.iter().map(|(a, v)| format!("{a:#x}={}", *v as i32)).collect();
        println!("mem {}", mem.join(" "));
    }
}

/// Serializes through `Value` so object keys come out sorted.
fn sorted<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn write_trace(path: &Path, out: &TimedOutcome) -> Result<()> {
    let mut f =
        std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for rec in &out.trace {
        writeln!(f, "{}", serde_json::to_string(&sorted(rec)?)?)?;
    }
    f.flush()?;
    Ok(())
}

fn compare_engines(
    blocks: &[Block],
    arch: ArchState,
    start: &str,
    max_blocks: usize,
    load_latency: u32,
    verbose: bool,
) -> Result<()> {
    let timed = |kind| {
        let mut cfg = CoreConfig::new(kind);
        cfg.load_latency = load_latency;
        run_program_timed(blocks, arch.clone(), cfg, start, max_blocks)
    };
    let (reference, parallel, incremental) = std::thread::scope(|s| {
        let p = s.spawn(|| timed(SchedulerKind::Parallel));
        let i = s.spawn(|| timed(SchedulerKind::Incremental));
        let r = run_program(blocks, arch.clone(), start, max_blocks);
        (r, p.join(), i.join())
    });
    let reference: ProgramOutcome = reference?;
    let mut runs = Vec::new();
    let mut mismatches = Vec::new();
    for (kind, joined) in [(SchedulerKind::Parallel, parallel), (SchedulerKind::Incremental, incremental)] {
        match joined {
            Err(_) => mismatches.push(format!("{kind}: panicked")),
            Ok(Err(e)) => mismatches.push(format!("{kind}: {e}")),
            Ok(Ok(out)) => {
                if out.exits != reference.exits {
                    mismatches.push(format!("{kind}: exits {:?}, reference {:?}", out.exits, reference.exits));
                } else if out.state != reference.state {
                    mismatches.push(format!("{kind}: final state differs from reference"));
                }
                runs.push((kind, out));
            }
        }
    }
    if !mismatches.is_empty() {
        if verbose {
            println!("MISMATCH");
        }
        return Err(Internal(mismatches.join("; ")).into());
    }
    if verbose {
        println!("MATCH");
        println!("blocks={} halted={}", reference.exits.len(), reference.halted);
        for (kind, out) in &runs {
            let s = &out.stats;
            println!(
                "{:<12} cycles={} ipc={:.3} bank_conflicts={} broadcast_drain_cycles={}",
                kind.name(),
                s.cycles,
                s.ipc,
                s.bank_conflicts,
                s.broadcast_drain_cycles
            );
        }
        let [(ka, a), (kb, b)] = [&runs[0], &runs[1]];
        println!("{}", compare((*ka, &a.stats), (*kb, &b.stats)));
    }
    Ok(())
}
