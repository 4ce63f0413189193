//! Timed model of the two-decode, single-issue core.
//!
//! Per cycle, in this order:
//!
//! 1. the scheduler takes in the events and decodes of the previous cycle,
//! 2. IS selects at most one instruction; single-cycle ALU results are
//!    forwarded as ready events straight away,
//! 3. LS completes memory accesses (load results become events),
//! 4. EX evaluates tests (predicate events) and branches,
//! 5. the LSQ releases the next memory instruction in lsid order,
//! 6. DC decodes up to two instructions (one even, one odd IID).
//!
//! Events posted in a cycle are seen by the scheduler in the next one, so a
//! one-cycle producer can wake its consumer for back-to-back issue.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Block, Opcode, ResultClass, Slot, Target};
use crate::metrics::CycleStats;
use crate::refinterp::{alu, find_block, ArchState, BlockEffects, BlockResult, Delivery, InterpError, HALT};
use crate::sched::{DecodedEntry, Event, EventKind, RdyVec, Scheduler, SchedulerKind, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub scheduler: SchedulerKind,
    /// Cycles from issue to a load's result event; at least 2 (IS, EX, LS).
    pub load_latency: u32,
    /// Per-block cycle bound.
    pub max_cycles: u64,
    pub trace: bool,
}

impl CoreConfig {
    pub fn new(scheduler: SchedulerKind) -> CoreConfig {
        CoreConfig { scheduler, load_latency: 2, max_cycles: 10_000, trace: false }
    }

    pub fn with_trace(mut self) -> CoreConfig {
        self.trace = true;
        self
    }
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig::new(SchedulerKind::Parallel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error("block {block}: no branch fired and nothing left to issue")]
    Deadlock { block: String },
    #[error("block {block}: exceeded {limit} cycles")]
    CycleLimitExceeded { block: String, limit: u64 },
    #[error("block {block}: memory access lsid {got} out of order, expected {expected}")]
    LsqOrderViolation { block: String, expected: u8, got: u8 },
    #[error("block {block}: {what}")]
    Internal { block: String, what: String },
    #[error("load latency must be at least 2, got {0}")]
    BadLoadLatency(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iid: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub channel: Option<u8>,
    pub rdys: u8,
}

impl From<&Event> for TraceEvent {
    fn from(e: &Event) -> TraceEvent {
        match e.kind {
            EventKind::Targeted { iid, rdys } => TraceEvent { iid: Some(iid), channel: None, rdys: rdys.bits() },
            EventKind::Broadcast { channel, rdys } => {
                TraceEvent { iid: None, channel: Some(channel), rdys: rdys.bits() }
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stalls {
    pub bank_conflict: u32,
    pub broadcast_drain: bool,
    /// Nothing was ready to issue.
    pub empty: bool,
}

/// One cycle of one block execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub block: String,
    pub cycle: u64,
    pub decoded: Vec<u8>,
    /// Events applied to ready state this cycle.
    pub events: Vec<TraceEvent>,
    pub issued: Option<u8>,
    pub ex: Vec<u8>,
    pub ls: Vec<u8>,
    pub stalls: Stalls,
}

/// Result of a timed block execution: the architectural result, the
/// iids in issue order with their issue cycle, and cycle accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRun {
    pub result: BlockResult,
    pub issues: Vec<(u64, u8)>,
    /// Memory accesses as (cycle, lsid).
    pub memory_trace: Vec<(u64, u8)>,
    pub stats: CycleStats,
}

impl BlockRun {
    pub fn issue_order(&self) -> Vec<u8> {
        self.issues.iter().map(|&(_, i)| i).collect()
    }

    pub fn issue_cycle(&self, iid: u8) -> Option<u64> {
        self.issues.iter().find(|&&(_, i)| i == iid).map(|&(c, _)| c)
    }
}

/// A core instance: scheduler plus the instruction window contents that
/// survive a branch back to the same block.
pub struct Core {
    cfg: CoreConfig,
    sched: Box<dyn Scheduler>,
    resident: Option<String>,
    trace: Vec<TraceRecord>,
}

impl Core {
    pub fn new(cfg: CoreConfig) -> Result<Core, CoreError> {
        if cfg.load_latency < 2 {
            return Err(CoreError::BadLoadLatency(cfg.load_latency));
        }
        Ok(Core { cfg, sched: cfg.scheduler.build(), resident: None, trace: Vec::new() })
    }

    pub fn config(&self) -> &CoreConfig {
        &self.cfg
    }

    pub fn scheduler(&self) -> &dyn Scheduler {
        self.sched.as_ref()
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    /// Executes one block against `arch`. Refreshes the window if the block
    /// is already resident, otherwise resets it and decodes the block.
    pub fn execute(&mut self, block: &Block, arch: &ArchState) -> Result<BlockRun, CoreError> {
        let refresh = self.resident.as_deref() == Some(block.name.as_str());
        self.resident = None;
        if refresh {
            self.sched.refresh();
        } else {
            self.sched.reset();
        }
        let before = self.sched.counters();
        let mut exec = Exec::new(block, arch, self.cfg, refresh);
        let run = exec.run(self.sched.as_mut(), &mut self.trace);
        let after = self.sched.counters();
        let mut run = run?;
        run.stats.events_posted = after.targeted_posted - before.targeted_posted;
        run.stats.events_delivered = after.targeted_delivered - before.targeted_delivered;
        run.stats.update_ipc();
        self.resident = Some(block.name.clone());
        Ok(run)
    }
}

struct Exec<'a> {
    block: &'a Block,
    arch: &'a ArchState,
    cfg: CoreConfig,
    fx: BlockEffects<'a>,
    decoded: usize,
    /// Memory instructions in lsid order.
    mem_order: Vec<u8>,
    ls_released: usize,
    ls_issued: usize,
    next_lsid: u8,
    ex_q: VecDeque<(u64, u8)>,
    ls_q: VecDeque<(u64, u8)>,
    issued: u32,
    run: BlockRun,
}

impl<'a> Exec<'a> {
    fn new(block: &'a Block, arch: &'a ArchState, cfg: CoreConfig, refresh: bool) -> Exec<'a> {
        let mut mem_order: Vec<u8> =
            (0..block.len() as u8).filter(|&i| block.instructions[i as usize].opcode.is_memory()).collect();
        mem_order.sort_by_key(|&i| block.instructions[i as usize].lsid);
        let mut stats = CycleStats { blocks: 1, ..CycleStats::default() };
        if refresh {
            stats.refreshes = 1;
        }
        Exec {
            block,
            arch,
            cfg,
            fx: BlockEffects::new(block),
            decoded: if refresh { block.len() } else { 0 },
            mem_order,
            ls_released: 0,
            ls_issued: 0,
            next_lsid: 0,
            ex_q: VecDeque::new(),
            ls_q: VecDeque::new(),
            issued: 0,
            run: BlockRun { result: BlockResult::default(), issues: Vec::new(), memory_trace: Vec::new(), stats },
        }
    }

    fn internal(&self, what: impl Into<String>) -> CoreError {
        CoreError::Internal { block: self.block.name.clone(), what: what.into() }
    }

    /// Delivers a result to the operand buffers and posts the matching ready
    /// events.
    fn produce(&mut self, sched: &mut dyn Scheduler, iid: u8, d: Delivery, stage: Stage) -> Result<(), CoreError> {
        let insn = self.block.instructions[iid as usize];
        self.fx.deliver(iid, d)?;
        let pred = match d {
            Delivery::Predicate(p) => p,
            Delivery::Value(_) => false,
        };
        for t in insn.live_targets() {
            if let Some((to, slot)) = t.slot() {
                sched.post(Event::targeted(to, slot.rdys(pred), stage));
            }
        }
        if insn.bid != 0 {
            let rdys = match d {
                Delivery::Predicate(_) => Slot::Pred.rdys(pred),
                Delivery::Value(_) => RdyVec::R0,
            };
            sched.post(Event::broadcast(insn.bid, rdys, stage));
        }
        Ok(())
    }

    fn issue(&mut self, sched: &mut dyn Scheduler, now: u64, iid: u8) -> Result<(), CoreError> {
        if iid as usize >= self.decoded {
            return Err(self.internal(format!("issued undecoded instruction {iid}")));
        }
        if self.issued >> iid & 1 == 1 {
            return Err(self.internal(format!("instruction {iid} issued twice")));
        }
        let insn = self.block.instructions[iid as usize];
        // every input the scheduler counted as ready must hold its value
        if !self.fx.operands[iid as usize].ready_for(&insn) {
            return Err(self.internal(format!("instruction {iid} issued before its operands arrived")));
        }
        self.issued |= 1 << iid;
        self.fx.mark_fired(iid);
        self.run.issues.push((now, iid));
        self.run.stats.issues += 1;
        self.ex_q.push_back((now + 1, iid));
        if insn.opcode.is_memory() {
            if self.mem_order.get(self.ls_issued) != Some(&iid) {
                return Err(CoreError::LsqOrderViolation {
                    block: self.block.name.clone(),
                    expected: self.ls_issued as u8,
                    got: insn.lsid,
                });
            }
            self.ls_issued += 1;
            self.ls_q.push_back((now + self.cfg.load_latency as u64, iid));
        } else if insn.opcode.result_class() == ResultClass::Value {
            let ops = self.fx.operands[iid as usize];
            let d = alu(&insn, &ops, &self.arch.regs).expect("value-producing instruction");
            self.produce(sched, iid, d, Stage::IsForward)?;
        }
        Ok(())
    }

    fn memory(&mut self, sched: &mut dyn Scheduler, now: u64, iid: u8) -> Result<(), CoreError> {
        let insn = self.block.instructions[iid as usize];
        if insn.lsid != self.next_lsid {
            return Err(CoreError::LsqOrderViolation {
                block: self.block.name.clone(),
                expected: self.next_lsid,
                got: insn.lsid,
            });
        }
        self.next_lsid += 1;
        self.run.memory_trace.push((now, insn.lsid));
        if let Some(v) = self.fx.memory_access(iid, &self.arch.mem)? {
            self.produce(sched, iid, Delivery::Value(v), Stage::Ls)?;
        }
        Ok(())
    }

    fn execute(&mut self, sched: &mut dyn Scheduler, iid: u8) -> Result<(), CoreError> {
        let insn = self.block.instructions[iid as usize];
        match insn.opcode {
            Opcode::Bro => self.fx.take_branch(iid)?,
            op if op.is_test() => {
                let ops = self.fx.operands[iid as usize];
                let d = alu(&insn, &ops, &self.arch.regs).expect("test result");
                self.produce(sched, iid, d, Stage::Ex)?;
            }
            _ => {}
        }
        Ok(())
    }

    fn run(&mut self, sched: &mut dyn Scheduler, trace: &mut Vec<TraceRecord>) -> Result<BlockRun, CoreError> {
        let len = self.block.len();
        for now in 0.. {
            if now >= self.cfg.max_cycles {
                return Err(CoreError::CycleLimitExceeded {
                    block: self.block.name.clone(),
                    limit: self.cfg.max_cycles,
                });
            }
            let report = sched.tick();
            self.run.stats.bank_conflicts += report.bank_conflicts as u64;
            if report.broadcast {
                self.run.stats.broadcast_drain_cycles += 1;
            }

            let sel = sched.select();
            let mut ls = Vec::new();
            while self.ls_q.front().is_some_and(|&(c, _)| c == now) {
                let (_, iid) = self.ls_q.pop_front().unwrap();
                ls.push(iid);
                self.memory(sched, now, iid)?;
            }
            let mut ex = Vec::new();
            while self.ex_q.front().is_some_and(|&(c, _)| c == now) {
                let (_, iid) = self.ex_q.pop_front().unwrap();
                ex.push(iid);
                self.execute(sched, iid)?;
            }
            if let Some(iid) = sel {
                self.issue(sched, now, iid)?;
            }

            // the LSQ releases memory instructions one at a time, in lsid
            // order, once the previous one has issued
            if let Some(&iid) = self.mem_order.get(self.ls_released) {
                if self.ls_released == self.ls_issued && (iid as usize) < self.decoded {
                    sched.ls_enable(iid);
                    self.ls_released += 1;
                }
            }

            let mut decoded = Vec::new();
            while decoded.len() < 2 && self.decoded < len {
                let iid = self.decoded as u8;
                let insn = &self.block.instructions[iid as usize];
                let (drdys, _) = insn.decoded_ready_state();
                sched.decode(iid, DecodedEntry { drdys, listen: insn.binput, memory: insn.opcode.is_memory() });
                decoded.push(iid);
                self.decoded += 1;
                self.run.stats.decodes += 1;
            }
            // a memory instruction decoded this cycle may be releasable now
            if let Some(&iid) = self.mem_order.get(self.ls_released) {
                if self.ls_released == self.ls_issued && (iid as usize) < self.decoded {
                    sched.ls_enable(iid);
                    self.ls_released += 1;
                }
            }

            if self.cfg.trace {
                trace.push(TraceRecord {
                    block: self.block.name.clone(),
                    cycle: now,
                    decoded,
                    events: report.delivered.iter().map(TraceEvent::from).collect(),
                    issued: sel,
                    ex,
                    ls,
                    stalls: Stalls {
                        bank_conflict: report.bank_conflicts,
                        broadcast_drain: report.broadcast,
                        empty: sel.is_none(),
                    },
                });
            }

            let quiet = self.decoded == len && self.ex_q.is_empty() && self.ls_q.is_empty() && sched.is_idle();
            if quiet {
                self.run.stats.cycles = now + 1;
                if self.fx.exit().is_none() {
                    return Err(CoreError::Deadlock { block: self.block.name.clone() });
                }
                break;
            }
        }
        let fx = std::mem::replace(&mut self.fx, BlockEffects::new(self.block));
        self.run.result = fx.finish()?;
        Ok(self.run.clone())
    }
}

/// Runs one block from a cold window.
pub fn run_block(block: &Block, arch: &ArchState, cfg: CoreConfig) -> Result<BlockRun, CoreError> {
    Core::new(cfg)?.execute(block, arch)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimedOutcome {
    pub state: ArchState,
    pub exits: Vec<String>,
    pub halted: bool,
    pub stats: CycleStats,
    pub trace: Vec<TraceRecord>,
}

/// Executes blocks from `start` until HALT or `max_blocks` blocks have run,
/// committing each block's result before fetching the next.
pub fn run_program_timed(
    blocks: &[Block],
    mut state: ArchState,
    cfg: CoreConfig,
    start: &str,
    max_blocks: usize,
) -> Result<TimedOutcome, CoreError> {
    find_block(blocks, start)?;
    let mut core = Core::new(cfg)?;
    let mut stats = CycleStats::default();
    let mut exits = Vec::new();
    let mut label = start.to_string();
    state.pc = label.clone();
    let mut halted = false;
    for _ in 0..max_blocks {
        let block = find_block(blocks, &label)?;
        let run = core.execute(block, &state)?;
        state.commit(&run.result);
        stats.accumulate(&run.stats);
        exits.push(run.result.exit.clone());
        label = run.result.exit;
        if label == HALT {
            halted = true;
            break;
        }
    }
    Ok(TimedOutcome { state, exits, halted, stats, trace: core.take_trace() })
}

/// Slots an instruction's explicit targets fill, for tests and tooling.
pub fn explicit_slots(block: &Block, iid: u8) -> Vec<(u8, Slot)> {
    block.instructions[iid as usize].live_targets().filter_map(Target::slot).collect()
}
