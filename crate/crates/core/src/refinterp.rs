//! Functional dataflow interpreter: executes a block to its fixpoint with no
//! notion of time. Used as the architectural oracle for the timed core.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Block, Instruction, ListenSlot, Opcode, Slot, Target, NUM_REGS};

/// Exit label that stops a program.
pub const HALT: &str = "HALT";

/// Architectural state visible between blocks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchState {
    pub regs: [u32; NUM_REGS],
    /// Word memory keyed by (4-byte aligned) byte address.
    pub mem: BTreeMap<u32, u32>,
    pub pc: String,
}

impl ArchState {
    pub fn load(&self, addr: u32) -> u32 {
        self.mem.get(&addr).copied().unwrap_or(0)
    }

    /// Applies a block's register writes and stores.
    pub fn commit(&mut self, result: &BlockResult) {
        for (&r, &v) in &result.regwrites {
            self.regs[r as usize] = v;
        }
        for &(addr, v) in &result.stores {
            self.mem.insert(addr, v);
        }
        self.pc = result.exit.clone();
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockResult {
    pub regwrites: BTreeMap<u8, u32>,
    /// Stores in lsid order.
    pub stores: Vec<(u32, u32)>,
    pub exit: String,
    /// Bit i set iff instruction i fired.
    pub issued: u32,
}

impl BlockResult {
    pub fn fired(&self) -> Vec<u8> {
        (0..32).filter(|i| self.issued >> i & 1 == 1).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("block {block}: no branch fired")]
    Deadlock { block: String },
    #[error("block {block}: slot {slot:?} of instruction {iid} delivered twice")]
    DoubleDelivery { block: String, iid: u8, slot: Slot },
    #[error("block {block}: register R{reg} written twice")]
    DoubleRegisterWrite { block: String, reg: u8 },
    #[error("block {block}: more than one branch fired")]
    MultipleBranches { block: String },
    #[error("block {block}: unaligned address {addr:#x}")]
    UnalignedAddress { block: String, addr: u32 },
    #[error("unknown block label `{0}`")]
    UnknownLabel(String),
}

/// Values waiting in one instruction's input slots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Operands {
    pub op0: Option<u32>,
    pub op1: Option<u32>,
    pub pred: Option<bool>,
}

/// What delivering a result puts into a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    Value(u32),
    Predicate(bool),
}

impl Operands {
    /// Fills a slot; returns false when it was already filled.
    pub fn fill(&mut self, slot: Slot, d: Delivery) -> bool {
        let (cell_empty, ok) = match (slot, d) {
            (Slot::Op0, Delivery::Value(v)) => (self.op0.replace(v).is_none(), true),
            (Slot::Op1, Delivery::Value(v)) => (self.op1.replace(v).is_none(), true),
            (Slot::Pred, Delivery::Predicate(p)) => (self.pred.replace(p).is_none(), true),
            _ => (true, false),
        };
        debug_assert!(ok, "{d:?} delivered to {slot:?}");
        cell_empty
    }

    /// All awaited inputs present and the predicate (if any) matches.
    pub fn ready_for(&self, insn: &Instruction) -> bool {
        (!insn.awaits(Slot::Op0) || self.op0.is_some())
            && (!insn.awaits(Slot::Op1) || self.op1.is_some())
            && match insn.predicate.sense() {
                None => true,
                Some(want) => self.pred == Some(want),
            }
    }
}

/// Result of an instruction that does not touch memory.
pub fn alu(insn: &Instruction, ops: &Operands, regs: &[u32; NUM_REGS]) -> Option<Delivery> {
    let a = ops.op0.unwrap_or(0);
    let b = ops.op1.unwrap_or(0);
    let v = match insn.opcode {
        Opcode::Read => regs[insn.reg as usize],
        Opcode::Mov => a,
        Opcode::Add => a.wrapping_add(b),
        Opcode::Sub => a.wrapping_sub(b),
        Opcode::And => a & b,
        Opcode::Or => a | b,
        Opcode::Xor => a ^ b,
        Opcode::Addi => a.wrapping_add(insn.imm as u32),
        Opcode::Tlei => return Some(Delivery::Predicate(a as i32 <= insn.imm)),
        Opcode::Tlt => return Some(Delivery::Predicate((a as i32) < b as i32)),
        Opcode::Teq => return Some(Delivery::Predicate(a == b)),
        Opcode::Nop | Opcode::Bro | Opcode::Ld | Opcode::St => return None,
    };
    Some(Delivery::Value(v))
}

/// Block-local effects accumulated while a block executes; shared by the
/// interpreter and the timed core so both apply identical semantics.
#[derive(Clone, Debug)]
pub struct BlockEffects<'a> {
    pub block: &'a Block,
    pub operands: [Operands; 32],
    pub result: BlockResult,
    exit: Option<u8>,
    /// Stores made so far this block, visible to later loads.
    overlay: HashMap<u32, u32>,
}

impl<'a> BlockEffects<'a> {
    pub fn new(block: &'a Block) -> BlockEffects<'a> {
        BlockEffects {
            block,
            operands: [Operands::default(); 32],
            result: BlockResult::default(),
            exit: None,
            overlay: HashMap::new(),
        }
    }

    fn name(&self) -> String {
        self.block.name.clone()
    }

    pub fn exit(&self) -> Option<u8> {
        self.exit
    }

    /// Delivers a result to every explicit target and broadcast listener.
    /// Returns the (iid, slot) pairs that were filled.
    pub fn deliver(&mut self, iid: u8, d: Delivery) -> Result<Vec<(u8, Slot)>, InterpError> {
        let insn = self.block.instructions[iid as usize];
        let mut filled = Vec::new();
        for t in insn.live_targets() {
            match (t, d) {
                (Target::Reg(r), Delivery::Value(v)) => {
                    if self.result.regwrites.insert(r, v).is_some() {
                        return Err(InterpError::DoubleRegisterWrite { block: self.name(), reg: r });
                    }
                }
                _ => {
                    let (to, slot) = t.slot().expect("intra-block target");
                    self.fill(to, slot, d)?;
                    filled.push((to, slot));
                }
            }
        }
        if insn.bid != 0 {
            let listeners: Vec<(u8, ListenSlot)> = self.block.listeners(insn.bid).collect();
            for (to, slot) in listeners {
                self.fill(to, slot.slot(), d)?;
                filled.push((to, slot.slot()));
            }
        }
        Ok(filled)
    }

    pub fn fill(&mut self, iid: u8, slot: Slot, d: Delivery) -> Result<(), InterpError> {
        if self.operands[iid as usize].fill(slot, d) {
            Ok(())
        } else {
            Err(InterpError::DoubleDelivery { block: self.name(), iid, slot })
        }
    }

    pub fn take_branch(&mut self, iid: u8) -> Result<(), InterpError> {
        if self.exit.is_some() {
            return Err(InterpError::MultipleBranches { block: self.name() });
        }
        self.exit = Some(self.block.instructions[iid as usize].exit);
        Ok(())
    }

    fn address(&self, iid: u8) -> Result<u32, InterpError> {
        let addr = self.operands[iid as usize].op0.unwrap_or(0);
        if !addr.is_multiple_of(4) {
            return Err(InterpError::UnalignedAddress { block: self.name(), addr });
        }
        Ok(addr)
    }

    /// Performs a load or store. Loads see earlier stores of this block.
    pub fn memory_access(&mut self, iid: u8, mem: &BTreeMap<u32, u32>) -> Result<Option<u32>, InterpError> {
        let insn = self.block.instructions[iid as usize];
        let addr = self.address(iid)?;
        match insn.opcode {
            Opcode::Ld => Ok(Some(self.overlay.get(&addr).or_else(|| mem.get(&addr)).copied().unwrap_or(0))),
            Opcode::St => {
                let v = self.operands[iid as usize].op1.unwrap_or(0);
                self.overlay.insert(addr, v);
                self.result.stores.push((addr, v));
                Ok(None)
            }
            _ => unreachable!("not a memory instruction"),
        }
    }

    pub fn mark_fired(&mut self, iid: u8) {
        self.result.issued |= 1 << iid;
    }

    pub fn finish(mut self) -> Result<BlockResult, InterpError> {
        match self.exit {
            Some(e) => {
                self.result.exit = self.block.exits[e as usize].clone();
                Ok(self.result)
            }
            None => Err(InterpError::Deadlock { block: self.name() }),
        }
    }
}

/// Runs a block to its fixpoint, firing the lowest-numbered ready
/// instruction each step.
pub fn interpret_block(block: &Block, state: &ArchState) -> Result<BlockResult, InterpError> {
    interpret_block_with(block, state, |ready| ready[0])
}

/// Runs a block to its fixpoint; `choose` picks which of the currently ready
/// instructions fires next.
pub fn interpret_block_with(
    block: &Block,
    state: &ArchState,
    mut choose: impl FnMut(&[u8]) -> u8,
) -> Result<BlockResult, InterpError> {
    let mut fx = BlockEffects::new(block);
    let mut next_lsid = 0u8;
    loop {
        let ready: Vec<u8> = block
            .instructions
            .iter()
            .enumerate()
            .filter(|&(i, insn)| {
                fx.result.issued >> i & 1 == 0
                    && fx.operands[i].ready_for(insn)
                    && (!insn.opcode.is_memory() || insn.lsid == next_lsid)
            })
            .map(|(i, _)| i as u8)
            .collect();
        if ready.is_empty() {
            break;
        }
        let iid = choose(&ready);
        let insn = block.instructions[iid as usize];
        fx.mark_fired(iid);
        match insn.opcode {
            Opcode::Bro => fx.take_branch(iid)?,
            Opcode::Ld | Opcode::St => {
                next_lsid += 1;
                if let Some(v) = fx.memory_access(iid, &state.mem)? {
                    fx.deliver(iid, Delivery::Value(v))?;
                }
            }
            _ => {
                let ops = fx.operands[iid as usize];
                if let Some(d) = alu(&insn, &ops, &state.regs) {
                    fx.deliver(iid, d)?;
                }
            }
        }
    }
    fx.finish()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramOutcome {
    pub state: ArchState,
    /// Exit label taken by each executed block.
    pub exits: Vec<String>,
    /// Stopped at the HALT label rather than the block limit.
    pub halted: bool,
}

pub fn find_block<'b>(blocks: &'b [Block], label: &str) -> Result<&'b Block, InterpError> {
    blocks.iter().find(|b| b.name == label).ok_or_else(|| InterpError::UnknownLabel(label.to_string()))
}

/// Interprets blocks starting at `start`, committing each, until the HALT
/// label is reached or `max_blocks` blocks have run.
pub fn run_program(
    blocks: &[Block],
    mut state: ArchState,
    start: &str,
    max_blocks: usize,
) -> Result<ProgramOutcome, InterpError> {
    find_block(blocks, start)?;
    state.pc = start.to_string();
    let mut exits = Vec::new();
    while exits.len() < max_blocks {
        if state.pc == HALT {
            break;
        }
        let block = find_block(blocks, &state.pc)?;
        let result = interpret_block(block, &state)?;
        state.commit(&result);
        exits.push(result.exit);
    }
    let halted = state.pc == HALT;
    Ok(ProgramOutcome { state, exits, halted })
}
