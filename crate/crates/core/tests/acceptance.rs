//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p edgesim-core --test acceptance`.

mod common;

use std::time::Instant;

use common::{
    all_targets, broadcast_block, chain_block, conflict_block, fig1, harness_block, random_instruction, regs, COUNTDOWN,
};
use edgesim_core::assembler::{assemble, disassemble};
use edgesim_core::gen::{random_program, random_state, GenConfig};
use edgesim_core::isa::{Block, Instruction, Opcode};
use edgesim_core::metrics::cost_report;
use edgesim_core::pipeline::{run_block, run_program_timed, CoreConfig};
use edgesim_core::refinterp::{interpret_block, run_program};
use edgesim_core::sched::{
    select_lowest, DecodedEntry, Event, IncrementalScheduler, ParallelScheduler, RdyVec, Scheduler, SchedulerKind,
    Stage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const KINDS: [SchedulerKind; 2] = [SchedulerKind::Parallel, SchedulerKind::Incremental];

fn entry(insn: &Instruction) -> DecodedEntry {
    let (drdys, _) = insn.decoded_ready_state();
    DecodedEntry { drdys, listen: insn.binput, memory: insn.opcode.is_memory() }
}

/// Parallel scheduler state for the two-way branch block with the
/// left-operand READ first, six entries decoded and that READ issued.
const GOLDEN_STATE: [&str; 7] = [
    "00 1 1 1 1 1 1 1 1 1 0",
    "00 1 1 1 1 1 1 1 1 0 1",
    "00 1 1 0 0 1 1 1 0 0 0",
    "00 1 1 0 1 1 1 0 1 0 0",
    "01 0 1 1 1 0 1 1 1 0 0",
    "01 1 0 1 1 1 0 1 1 0 0",
    "00 0 0 x x 0 0 x x x 0",
];

fn parallel_state_golden() -> Outcome {
    let src = "
t:
    READ R7 T[2L]
    READ R0 T[2R]
    ADD T[3L]
    TLEI #5 B[1P]
    BRO.T B1 a
    BRO.F B1 b
a:
    BRO HALT
b:
    BRO HALT
";
    let block = &assemble(src).map_err(|e| e.to_string())?[0];
    let mut s = ParallelScheduler::new();
    for (iid, insn) in block.instructions.iter().enumerate() {
        s.decode(iid as u8, entry(insn));
    }
    s.tick();
    let first = s.select();
    ensure!(first == Some(0), "first issue {first:?}");
    s.post(Event::targeted(2, RdyVec::R0, Stage::IsForward));
    s.tick();
    let dump = s.dump(7);
    let rows: Vec<Vec<&str>> =
        dump.lines().skip(1).map(|l| l.split_whitespace().skip(1).filter(|t| *t != "|").collect()).collect();
    for (i, want) in GOLDEN_STATE.iter().enumerate() {
        let want: Vec<&str> = want.split_whitespace().collect();
        let got = &rows[i];
        let same = want.len() == got.len() && want.iter().zip(got).all(|(w, g)| *w == "x" || w == g);
        ensure!(same, "row {i}: got {got:?}, want {want:?}\n{dump}");
    }
    ensure!(s.select() == Some(1), "second READ not selected next");
    Ok("7 rows bit-exact (x = don't care)".into())
}

fn incremental_walkthrough() -> Outcome {
    let block = &fig1()[0];
    let mut s = IncrementalScheduler::new();
    for pair in block.instructions.chunks(2).enumerate() {
        if pair.0 > 0 {
            s.tick();
        }
        for (k, insn) in pair.1.iter().enumerate() {
            s.decode((2 * pair.0 + k) as u8, entry(insn));
        }
    }
    ensure!(s.dcrdyq() == vec![0, 1], "DCRDYQ {:?}", s.dcrdyq());
    let mut ardys = vec![s.entry(2).drdys.bits()];
    let mut ready = vec![];
    let mut issued = vec![];

    s.tick();
    issued.extend(s.select());
    // READ R0 T[2R]
    s.post(Event::targeted(2, RdyVec::R1, Stage::IsForward));
    s.tick();
    ardys.push(s.entry(2).ardys.bits());
    ready.push(s.ready_outputs()[0] == Some(2));
    issued.extend(s.select());
    // READ R7 T[2L]
    s.post(Event::targeted(2, RdyVec::R0, Stage::IsForward));
    s.tick();
    ardys.push(s.entry(2).ardys.bits());
    ready.push(s.ready_outputs()[0] == Some(2));
    issued.extend(s.select());
    // ADD T[3L]
    s.post(Event::targeted(3, RdyVec::R0, Stage::IsForward));
    s.tick();
    issued.extend(s.select());

    ensure!(ardys == vec![0b1100, 0b1101, 0b1111], "ARDYS {ardys:?}");
    ensure!(ready == vec![false, true], "READY {ready:?}");
    ensure!(issued == vec![0, 1, 2, 3], "issue order {issued:?}");

    let run = run_block(block, &regs(&[(0, 2), (7, 3)]), CoreConfig::new(SchedulerKind::Incremental))
        .map_err(|e| e.to_string())?;
    ensure!(run.issue_order() == vec![0, 1, 2, 3, 4], "core issue order {:?}", run.issue_order());
    Ok("ARDYS 'b1100 -> 'b1101 -> 'b1111, READY on 2nd event, issue 0,1,2,3".into())
}

fn back_to_back() -> Outcome {
    for k in [3, 8, 16] {
        let block = chain_block(k);
        for kind in KINDS {
            let run = run_block(&block, &regs(&[(1, 5)]), CoreConfig::new(kind)).map_err(|e| e.to_string())?;
            let cycles: Vec<u64> = (1..=k as u8).map(|i| run.issue_cycle(i).unwrap()).collect();
            let consecutive = cycles.windows(2).all(|w| w[1] == w[0] + 1);
            ensure!(consecutive, "{kind} k={k}: issue cycles {cycles:?}");
            let want = 5 + (k * (k + 1) / 2) as u32;
            ensure!(run.result.regwrites.get(&2) == Some(&want), "{kind} k={k}: wrong result");
        }
    }
    Ok("k = 3, 8, 16 issue in consecutive cycles on both schedulers".into())
}

fn random_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let cases = 10_000;
    let mut blocks_run = 0;
    for case in 0..cases {
        let count = rng.gen_range(1..=3);
        let blocks = random_program(&mut rng, count, GenConfig::default());
        let state = random_state(&mut rng);
        let want = run_program(&blocks, state.clone(), "b0", 8).map_err(|e| format!("case {case}: {e}"))?;
        blocks_run += want.exits.len();
        for kind in KINDS {
            let got = run_program_timed(&blocks, state.clone(), CoreConfig::new(kind), "b0", 8)
                .map_err(|e| format!("case {case} {kind}: {e}\n{}", disassemble(&blocks)))?;
            ensure!(got.state == want.state, "case {case} {kind}: state differs\n{}", disassemble(&blocks));
            ensure!(got.exits == want.exits, "case {case} {kind}: exits differ\n{}", disassemble(&blocks));
        }
    }
    Ok(format!("{cases} random programs ({blocks_run} block executions), 3 engines agree"))
}

fn broadcast_drain() -> Outcome {
    let mut notes = vec![];
    for k in [2usize, 4, 8] {
        // alternating banks drain two per cycle, one bank drains one per cycle
        let layouts: [(Vec<usize>, u64); 2] =
            [((2..2 + k).collect(), k.div_ceil(2) as u64), ((0..k).map(|j| 2 + 2 * j).collect(), k as u64)];
        for (listeners, predicted) in layouts {
            let block = broadcast_block(&listeners);
            let arch = regs(&[(1, 3), (2, 9)]);
            let want = interpret_block(&block, &arch).map_err(|e| e.to_string())?;
            let p = run_block(&block, &arch, CoreConfig::new(SchedulerKind::Parallel)).map_err(|e| e.to_string())?;
            let i = run_block(&block, &arch, CoreConfig::new(SchedulerKind::Incremental)).map_err(|e| e.to_string())?;
            ensure!(p.result == want && i.result == want, "k={k} {listeners:?}: results differ");
            ensure!(p.stats.broadcast_drain_cycles == 1, "k={k}: parallel took {}", p.stats.broadcast_drain_cycles);
            ensure!(
                i.stats.broadcast_drain_cycles == predicted,
                "k={k} {listeners:?}: incremental drained in {} cycles, predicted {predicted}",
                i.stats.broadcast_drain_cycles
            );
            notes.push(format!("{}", i.stats.broadcast_drain_cycles));
        }
    }
    Ok(format!("parallel 1 cycle; incremental {} (k=2,4,8 split/same bank)", notes.join("/")))
}

fn bank_conflict() -> Outcome {
    let block = conflict_block();
    let arch = regs(&[(1, 21)]);
    let want = interpret_block(&block, &arch).map_err(|e| e.to_string())?;
    let p = run_block(&block, &arch, CoreConfig::new(SchedulerKind::Parallel)).map_err(|e| e.to_string())?;
    let i = run_block(&block, &arch, CoreConfig::new(SchedulerKind::Incremental)).map_err(|e| e.to_string())?;
    ensure!(p.result == want && i.result == want, "results differ");
    ensure!(i.stats.bank_conflicts >= 1, "no incremental stall");
    ensure!(p.stats.bank_conflicts == 0, "parallel stalled");
    for (kind, run) in [("parallel", &p), ("incremental", &i)] {
        ensure!(
            run.stats.events_posted == run.stats.events_delivered,
            "{kind}: {} generated, {} delivered",
            run.stats.events_posted,
            run.stats.events_delivered
        );
    }
    Ok(format!(
        "incremental {} stall(s), parallel 0; {} events generated and delivered",
        i.stats.bank_conflicts, i.stats.events_delivered
    ))
}

fn self_loop_refresh() -> Outcome {
    let blocks = assemble(COUNTDOWN).map_err(|e| e.to_string())?;
    let start = regs(&[(1, 10)]);
    let want = run_program(&blocks, start.clone(), "loop", 100).map_err(|e| e.to_string())?;
    ensure!(want.exits.len() == 10, "reference ran {} iterations", want.exits.len());
    for kind in KINDS {
        let got =
            run_program_timed(&blocks, start.clone(), CoreConfig::new(kind), "loop", 100).map_err(|e| e.to_string())?;
        ensure!(got.state == want.state && got.exits == want.exits, "{kind}: differs from reference");
        ensure!(got.stats.blocks == 10, "{kind}: {} block executions", got.stats.blocks);
        ensure!(got.stats.decodes == blocks[0].len() as u64, "{kind}: {} decodes", got.stats.decodes);
        ensure!(got.stats.refreshes == 9, "{kind}: {} refreshes", got.stats.refreshes);
    }
    Ok("10 iterations, 6 decodes, 9 refreshes, state matches reference".into())
}

fn cost_constants() -> Outcome {
    let p = cost_report(SchedulerKind::Parallel, 32, 2).map_err(|e| e.to_string())?;
    let i = cost_report(SchedulerKind::Incremental, 32, 2).map_err(|e| e.to_string())?;
    ensure!(p.area_core_luts == 288 && p.area_total_luts == Some(340), "parallel area");
    ensure!(p.period_ns == Some(5.0) && p.area_period_product == Some(1700.0), "parallel timing");
    ensure!(i.area_core_luts == 78 && i.area_total_luts == Some(150), "incremental area");
    ensure!(i.period_ns == Some(4.3) && i.area_period_product == Some(645.0), "incremental timing");
    let ratio = p.area_period_product.unwrap() / i.area_period_product.unwrap();
    ensure!((2.6..=2.7).contains(&ratio), "ratio {ratio}");
    Ok(format!("288/340/5.0/1700 vs 78/150/4.3/645, ratio {ratio:.3}"))
}

fn priority_encoder() -> Outcome {
    let scan = |v: u32| (0..32u8).find(|&i| v >> i & 1 == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut inputs: Vec<u32> = (0..100_000).map(|_| rng.gen()).collect();
    inputs.extend((0..100_000).map(|_| rng.gen::<u32>() & rng.gen::<u32>() & rng.gen::<u32>()));
    inputs.extend((0..32).map(|i| 1u32 << i));
    inputs.push(0);
    for v in &inputs {
        ensure!(select_lowest(*v) == scan(*v), "mismatch at {v:#034b}");
    }
    Ok(format!("{} vectors incl. zero and all 32 one-hot", inputs.len()))
}

fn roundtrips() -> Outcome {
    let mut enc = 0;
    let mut asm = 0;
    for op in Opcode::ALL {
        for t in all_targets() {
            let mut insn = Instruction::new(op);
            insn.targets[0] = t;
            if insn.check().is_ok() {
                let w = insn.encode().map_err(|e| e.to_string())?;
                ensure!(Instruction::decode(w) == Ok(insn), "{op} {t:?}: encode/decode");
                enc += 1;
            }
            if let Some(block) = harness_block(op, t) {
                let back = assemble(&disassemble(std::slice::from_ref(&block))).map_err(|e| e.to_string())?;
                ensure!(back == vec![block], "{op} {t:?}: assemble/disassemble");
                asm += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10_000 {
        let insn = random_instruction(&mut rng);
        let w = insn.encode().map_err(|e| e.to_string())?;
        ensure!(Instruction::decode(w) == Ok(insn), "{insn:?}");
    }
    for _ in 0..10_000 {
        let blocks: Vec<Block> = random_program(&mut rng, 1, GenConfig::default());
        let back = assemble(&disassemble(&blocks)).map_err(|e| e.to_string())?;
        ensure!(back == blocks, "{}", disassemble(&blocks));
    }
    Ok(format!("grid: {enc} encodings, {asm} assembled blocks; 10000 random insns and blocks"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("parallel scheduler state golden", parallel_state_golden),
        ("incremental walkthrough replay", incremental_walkthrough),
        ("back-to-back dependent chains", back_to_back),
        ("random block equivalence", random_equivalence),
        ("broadcast drain cycles", broadcast_drain),
        ("bank conflict stall", bank_conflict),
        ("self-loop refresh", self_loop_refresh),
        ("published cost constants", cost_constants),
        ("priority encoder vs scan", priority_encoder),
        ("encoding and assembly round-trips", roundtrips),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} ({ms} ms)", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
