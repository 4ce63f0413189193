//! EDGE instruction subset, target-form encoding and instruction blocks.
//!
//! Every instruction is one 32-bit word:
//!
//! ```text
//!  31    25 24  23 22 21 20   18 17      9 8       0
//! | opcode | pred | bid | binput |   t1    |   t0    |
//! ```
//!
//! A 9-bit target field is `kind[8:6] | payload[5:0]`. Opcodes that carry an
//! immediate, a register number, an exit index or an lsid store it in the
//! `t1` field instead of a second target (see [`Form`]).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sched::RdyVec;

/// Instructions per block, and entries in the instruction window.
pub const MAX_BLOCK_INSNS: usize = 32;
/// Global registers.
pub const NUM_REGS: usize = 32;
/// Usable broadcast channels are `1..=MAX_CHANNEL`; 0 means none.
pub const MAX_CHANNEL: u8 = 3;

/// Smallest immediate that fits the 9-bit immediate field.
pub const IMM_MIN: i32 = -256;
/// Largest immediate that fits the 9-bit immediate field.
pub const IMM_MAX: i32 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    Nop = 0,
    Read = 1,
    Mov = 2,
    Add = 3,
    Sub = 4,
    And = 5,
    Or = 6,
    Xor = 7,
    Addi = 8,
    Tlei = 9,
    Tlt = 10,
    Teq = 11,
    Bro = 12,
    Ld = 13,
    St = 14,
}

/// What an instruction produces when it fires.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResultClass {
    Value,
    Predicate,
    Nothing,
}

/// How the `t1` field of the encoded word is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    /// Two targets.
    General,
    /// Signed 9-bit immediate plus one target.
    Immediate,
    /// Global register number plus one target.
    Register,
    /// Exit-table index; no targets.
    Branch,
    /// Load/store sequence id plus one target.
    Memory,
}

impl Opcode {
    pub const ALL: [Opcode; 15] = [
        Opcode::Nop,
        Opcode::Read,
        Opcode::Mov,
        Opcode::Add,
        Opcode::Sub,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Addi,
        Opcode::Tlei,
        Opcode::Tlt,
        Opcode::Teq,
        Opcode::Bro,
        Opcode::Ld,
        Opcode::St,
    ];

    pub fn from_code(code: u8) -> Option<Opcode> {
        Opcode::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Nop => "NOP",
            Opcode::Read => "READ",
            Opcode::Mov => "MOV",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::And => "AND",
            Opcode::Or => "OR",
            Opcode::Xor => "XOR",
            Opcode::Addi => "ADDI",
            Opcode::Tlei => "TLEI",
            Opcode::Tlt => "TLT",
            Opcode::Teq => "TEQ",
            Opcode::Bro => "BRO",
            Opcode::Ld => "LD",
            Opcode::St => "ST",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }

    /// Number of dataflow operands (OP0, then OP1).
    pub fn arity(self) -> u8 {
        match self {
            Opcode::Nop | Opcode::Read | Opcode::Bro => 0,
            Opcode::Mov | Opcode::Addi | Opcode::Tlei | Opcode::Ld => 1,
            Opcode::Add
            | Opcode::Sub
            | Opcode::And
            | Opcode::Or
            | Opcode::Xor
            | Opcode::Tlt
            | Opcode::Teq
            | Opcode::St => 2,
        }
    }

    pub fn result_class(self) -> ResultClass {
        match self {
            Opcode::Tlei | Opcode::Tlt | Opcode::Teq => ResultClass::Predicate,
            Opcode::Nop | Opcode::Bro | Opcode::St => ResultClass::Nothing,
            _ => ResultClass::Value,
        }
    }

    pub fn form(self) -> Form {
        match self {
            Opcode::Addi | Opcode::Tlei => Form::Immediate,
            Opcode::Read => Form::Register,
            Opcode::Bro => Form::Branch,
            Opcode::Ld | Opcode::St => Form::Memory,
            _ => Form::General,
        }
    }

    pub fn is_test(self) -> bool {
        self.result_class() == ResultClass::Predicate
    }

    pub fn is_memory(self) -> bool {
        matches!(self, Opcode::Ld | Opcode::St)
    }

    /// Explicit target fields available to this opcode.
    pub fn max_targets(self) -> usize {
        match self.result_class() {
            ResultClass::Nothing => 0,
            _ if self.form() == Form::General => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    #[default]
    None,
    True,
    False,
}

impl Predicate {
    fn code(self) -> u32 {
        match self {
            Predicate::None => 0,
            Predicate::True => 1,
            Predicate::False => 2,
        }
    }

    /// The predicate value this instruction waits for, if predicated.
    pub fn sense(self) -> Option<bool> {
        match self {
            Predicate::None => None,
            Predicate::True => Some(true),
            Predicate::False => Some(false),
        }
    }
}

/// Input slot of a consuming instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Op0,
    Op1,
    Pred,
}

impl Slot {
    /// Ready bit delivered to this slot. Predicate slots depend on the
    /// delivered value, so callers pass it.
    pub fn rdys(self, predicate_value: bool) -> RdyVec {
        match self {
            Slot::Op0 => RdyVec::R0,
            Slot::Op1 => RdyVec::R1,
            Slot::Pred if predicate_value => RdyVec::RT,
            Slot::Pred => RdyVec::RF,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    #[default]
    None,
    Op0(u8),
    Op1(u8),
    /// Predicate input of an instruction predicated on true.
    PredT(u8),
    /// Predicate input of an instruction predicated on false.
    PredF(u8),
    /// Global register write, applied at block commit.
    Reg(u8),
}

const TK_NONE: u32 = 0;
const TK_OP0: u32 = 1;
const TK_OP1: u32 = 2;
const TK_PRED_T: u32 = 3;
const TK_PRED_F: u32 = 4;
const TK_REG: u32 = 5;

impl Target {
    pub fn is_none(self) -> bool {
        self == Target::None
    }

    /// The (iid, slot) addressed, for intra-block targets.
    pub fn slot(self) -> Option<(u8, Slot)> {
        match self {
            Target::Op0(i) => Some((i, Slot::Op0)),
            Target::Op1(i) => Some((i, Slot::Op1)),
            Target::PredT(i) | Target::PredF(i) => Some((i, Slot::Pred)),
            Target::None | Target::Reg(_) => None,
        }
    }

    fn encode(self) -> u32 {
        let (kind, payload) = match self {
            Target::None => (TK_NONE, 0),
            Target::Op0(i) => (TK_OP0, i),
            Target::Op1(i) => (TK_OP1, i),
            Target::PredT(i) => (TK_PRED_T, i),
            Target::PredF(i) => (TK_PRED_F, i),
            Target::Reg(r) => (TK_REG, r),
        };
        (kind << 6) | (payload as u32 & 0x3f)
    }

    fn decode(field: u32) -> Result<Target, DecodeError> {
        let kind = (field >> 6) & 0x7;
        let payload = (field & 0x3f) as u8;
        if kind != TK_NONE && payload as usize >= MAX_BLOCK_INSNS {
            return Err(DecodeError::TargetPayload(payload));
        }
        Ok(match kind {
            TK_NONE if payload == 0 => Target::None,
            TK_NONE => return Err(DecodeError::TargetPayload(payload)),
            TK_OP0 => Target::Op0(payload),
            TK_OP1 => Target::Op1(payload),
            TK_PRED_T => Target::PredT(payload),
            TK_PRED_F => Target::PredF(payload),
            TK_REG => Target::Reg(payload),
            k => return Err(DecodeError::InvalidTargetKind(k as u8)),
        })
    }
}

/// Slot an instruction listens to on a broadcast channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ListenSlot {
    Pred,
    Op0,
}

impl ListenSlot {
    pub fn slot(self) -> Slot {
        match self {
            ListenSlot::Pred => Slot::Pred,
            ListenSlot::Op0 => Slot::Op0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BroadcastInput {
    pub channel: u8,
    pub slot: ListenSlot,
}

/// A decoded EDGE instruction. Fields that do not apply to the opcode are
/// zero (or `None`) in a well-formed instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub predicate: Predicate,
    /// Broadcast send channel, 0 for none.
    pub bid: u8,
    pub binput: Option<BroadcastInput>,
    /// ADDI/TLEI immediate.
    pub imm: i32,
    /// READ source register.
    pub reg: u8,
    /// BRO index into the block's exit table.
    pub exit: u8,
    /// LD/ST sequence number within the block.
    pub lsid: u8,
    pub targets: [Target; 2],
}

impl Instruction {
    pub fn new(opcode: Opcode) -> Instruction {
        Instruction {
            opcode,
            predicate: Predicate::None,
            bid: 0,
            binput: None,
            imm: 0,
            reg: 0,
            exit: 0,
            lsid: 0,
            targets: [Target::None; 2],
        }
    }

    pub fn nop() -> Instruction {
        Instruction::new(Opcode::Nop)
    }

    pub fn with_targets(mut self, t0: Target, t1: Target) -> Instruction {
        self.targets = [t0, t1];
        self
    }

    pub fn with_predicate(mut self, p: Predicate) -> Instruction {
        self.predicate = p;
        self
    }

    /// Explicit targets that are not `None`.
    pub fn live_targets(&self) -> impl Iterator<Item = Target> + '_ {
        self.targets.iter().copied().filter(|t| !t.is_none())
    }

    /// Whether the given input slot must be delivered before this
    /// instruction can issue.
    pub fn awaits(&self, slot: Slot) -> bool {
        match slot {
            Slot::Op0 => self.opcode.arity() >= 1,
            Slot::Op1 => self.opcode.arity() >= 2,
            Slot::Pred => self.predicate != Predicate::None,
        }
    }

    /// Checks the per-instruction well-formedness rules.
    pub fn check(&self) -> Result<(), InsnError> {
        let op = self.opcode;
        let form = op.form();
        if self.bid > MAX_CHANNEL {
            return Err(InsnError::BadChannel(self.bid));
        }
        if self.bid != 0 && op.result_class() == ResultClass::Nothing {
            return Err(InsnError::BroadcastWithoutResult);
        }
        if let Some(b) = self.binput {
            if b.channel == 0 || b.channel > MAX_CHANNEL {
                return Err(InsnError::BadChannel(b.channel));
            }
            if !self.awaits(b.slot.slot()) {
                return Err(InsnError::ListensToUnusedSlot);
            }
        }
        if form == Form::Immediate {
            if !(IMM_MIN..=IMM_MAX).contains(&self.imm) {
                return Err(InsnError::UnencodableImmediate(self.imm));
            }
        } else if self.imm != 0 {
            return Err(InsnError::StrayField("imm"));
        }
        if form == Form::Register {
            if self.reg as usize >= NUM_REGS {
                return Err(InsnError::BadRegister(self.reg));
            }
        } else if self.reg != 0 {
            return Err(InsnError::StrayField("reg"));
        }
        if form == Form::Branch {
            if self.exit as usize >= MAX_BLOCK_INSNS {
                return Err(InsnError::BadExit(self.exit));
            }
        } else if self.exit != 0 {
            return Err(InsnError::StrayField("exit"));
        }
        if form == Form::Memory {
            if self.lsid as usize >= MAX_BLOCK_INSNS {
                return Err(InsnError::BadLsid(self.lsid));
            }
        } else if self.lsid != 0 {
            return Err(InsnError::StrayField("lsid"));
        }

        let n = self.live_targets().count();
        if n > op.max_targets() || (op.max_targets() < 2 && !self.targets[1].is_none()) {
            return Err(InsnError::TooManyTargets);
        }
        for t in self.live_targets() {
            match t {
                Target::Op0(i) | Target::Op1(i) | Target::PredT(i) | Target::PredF(i)
                    if i as usize >= MAX_BLOCK_INSNS =>
                {
                    return Err(InsnError::TargetOutOfRange(i));
                }
                Target::Reg(r) if r as usize >= NUM_REGS => {
                    return Err(InsnError::BadRegister(r));
                }
                _ => {}
            }
            let predicate_target = matches!(t, Target::PredT(_) | Target::PredF(_));
            if predicate_target != op.is_test() {
                return Err(InsnError::ResultKindMismatch);
            }
        }
        let [a, b] = self.targets;
        if !a.is_none() && a == b {
            return Err(InsnError::DuplicateTarget);
        }
        Ok(())
    }

    /// Decoded ready state `[RT, RF, R0, R1]` and broadcast channel.
    pub fn decoded_ready_state(&self) -> (RdyVec, u8) {
        let mut bits = RdyVec::ALL;
        match self.predicate {
            Predicate::True => bits = bits.without(RdyVec::RT),
            Predicate::False => bits = bits.without(RdyVec::RF),
            Predicate::None => {}
        }
        if self.awaits(Slot::Op0) {
            bits = bits.without(RdyVec::R0);
        }
        if self.awaits(Slot::Op1) {
            bits = bits.without(RdyVec::R1);
        }
        (bits, self.binput.map_or(0, |b| b.channel))
    }

    pub fn encode(&self) -> Result<u32, InsnError> {
        self.check()?;
        let binput = match self.binput {
            None => 0,
            Some(b) => {
                let slot_bit = match b.slot {
                    ListenSlot::Pred => 0,
                    ListenSlot::Op0 => 1,
                };
                ((b.channel as u32) << 1) | slot_bit
            }
        };
        let t1 = match self.opcode.form() {
            Form::General => self.targets[1].encode(),
            Form::Immediate => (self.imm as u32) & 0x1ff,
            Form::Register => self.reg as u32,
            Form::Branch => self.exit as u32,
            Form::Memory => self.lsid as u32,
        };
        Ok(((self.opcode.code() as u32) << 25)
            | (self.predicate.code() << 23)
            | ((self.bid as u32) << 21)
            | (binput << 18)
            | (t1 << 9)
            | self.targets[0].encode())
    }

    pub fn decode(word: u32) -> Result<Instruction, DecodeError> {
        let code = (word >> 25) as u8;
        let opcode = Opcode::from_code(code).ok_or(DecodeError::InvalidOpcode(code))?;
        let predicate = match (word >> 23) & 0x3 {
            0 => Predicate::None,
            1 => Predicate::True,
            2 => Predicate::False,
            _ => return Err(DecodeError::InvalidPredicate),
        };
        let bid = ((word >> 21) & 0x3) as u8;
        let binput_bits = (word >> 18) & 0x7;
        let binput = match (binput_bits >> 1, binput_bits & 1) {
            (0, 0) => None,
            (0, _) => return Err(DecodeError::InvalidBroadcastInput),
            (ch, s) => Some(BroadcastInput {
                channel: ch as u8,
                slot: if s == 0 { ListenSlot::Pred } else { ListenSlot::Op0 },
            }),
        };
        let t1 = (word >> 9) & 0x1ff;
        // out-of-range values stay out of range so check() rejects them
        let small = u8::try_from(t1).unwrap_or(u8::MAX);
        let mut insn = Instruction::new(opcode);
        insn.predicate = predicate;
        insn.bid = bid;
        insn.binput = binput;
        insn.targets[0] = Target::decode(word & 0x1ff)?;
        match opcode.form() {
            Form::General => insn.targets[1] = Target::decode(t1)?,
            // sign-extend the 9-bit field
            Form::Immediate => insn.imm = ((t1 << 23) as i32) >> 23,
            Form::Register => insn.reg = small,
            Form::Branch => insn.exit = small,
            Form::Memory => insn.lsid = small,
        }
        insn.check().map_err(DecodeError::Malformed)?;
        Ok(insn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InsnError {
    #[error("immediate {0} does not fit the 9-bit immediate field")]
    UnencodableImmediate(i32),
    #[error("too many targets for this opcode")]
    TooManyTargets,
    #[error("two identical targets")]
    DuplicateTarget,
    #[error("target iid {0} out of range")]
    TargetOutOfRange(u8),
    #[error("register R{0} out of range")]
    BadRegister(u8),
    #[error("broadcast channel {0} out of range")]
    BadChannel(u8),
    #[error("exit index {0} out of range")]
    BadExit(u8),
    #[error("lsid {0} out of range")]
    BadLsid(u8),
    #[error("field `{0}` is not used by this opcode and must be zero")]
    StrayField(&'static str),
    #[error("broadcast sender produces no result")]
    BroadcastWithoutResult,
    #[error("broadcast listener on a slot the instruction does not await")]
    ListensToUnusedSlot,
    #[error("tests target predicate slots only, other producers operand/register slots only")]
    ResultKindMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("invalid opcode {0}")]
    InvalidOpcode(u8),
    #[error("reserved target kind {0:#05b}")]
    InvalidTargetKind(u8),
    #[error("target payload {0} out of range")]
    TargetPayload(u8),
    #[error("reserved predicate encoding")]
    InvalidPredicate,
    #[error("reserved broadcast input encoding")]
    InvalidBroadcastInput,
    #[error("malformed instruction: {0}")]
    Malformed(InsnError),
}

/// An atomically executed instruction block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub instructions: Vec<Instruction>,
    /// Branch target labels, indexed by `Instruction::exit`.
    pub exits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("block is empty")]
    Empty,
    #[error("block has {0} instructions, limit is 32")]
    TooLarge(usize),
    #[error("instruction {iid}: {err}")]
    Insn { iid: usize, err: InsnError },
    #[error("instruction {iid} targets iid {target}, block has {len} instructions")]
    TargetOutOfRange { iid: usize, target: u8, len: usize },
    #[error("instruction {iid} targets slot {slot:?} of {target}, which it does not await")]
    UnawaitedSlot { iid: usize, target: u8, slot: Slot },
    #[error("instruction {iid} targets the predicate of {target} with the wrong polarity")]
    PredicatePolarity { iid: usize, target: u8 },
    #[error("slot {slot:?} of {iid} is both broadcast-listened and explicitly targeted")]
    SlotConflict { iid: usize, slot: Slot },
    #[error("slot {slot:?} of {iid} is awaited but nothing delivers it")]
    UnreachableSlot { iid: usize, slot: Slot },
    #[error("channel {0} carries both predicate and value broadcasts")]
    MixedChannel(u8),
    #[error("instruction {0}: exit index out of range")]
    BadExit(usize),
    #[error("exit {0} is not referenced by any branch")]
    UnusedExit(usize),
    #[error("lsids are not dense and in program order at instruction {0}")]
    LsidOrder(usize),
    #[error("memory instruction {0} may not fire on every execution")]
    ConditionalMemory(usize),
}

impl Block {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Instruction indices listening on `channel`, in iid order.
    pub fn listeners(&self, channel: u8) -> impl Iterator<Item = (u8, ListenSlot)> + '_ {
        self.instructions
            .iter()
            .enumerate()
            .filter_map(move |(i, insn)| insn.binput.filter(|b| b.channel == channel).map(|b| (i as u8, b.slot)))
    }

    /// Validates every block-level invariant the simulators rely on.
    pub fn validate(&self) -> Result<(), BlockError> {
        let n = self.instructions.len();
        if n == 0 {
            return Err(BlockError::Empty);
        }
        if n > MAX_BLOCK_INSNS {
            return Err(BlockError::TooLarge(n));
        }
        // (producers per awaited slot) from explicit targets
        let mut explicit = vec![[0u8; 3]; n];
        let mut channel_kind: [Option<ResultClass>; 4] = [None; 4];
        let mut senders = [0usize; 4];
        let mut next_lsid = 0u8;
        let mut used_exits = vec![false; self.exits.len()];

        for (iid, insn) in self.instructions.iter().enumerate() {
            insn.check().map_err(|err| BlockError::Insn { iid, err })?;
            for t in insn.live_targets() {
                let Some((target, slot)) = t.slot() else { continue };
                if target as usize >= n {
                    return Err(BlockError::TargetOutOfRange { iid, target, len: n });
                }
                let consumer = &self.instructions[target as usize];
                if !consumer.awaits(slot) {
                    return Err(BlockError::UnawaitedSlot { iid, target, slot });
                }
                let polarity_ok = match t {
                    Target::PredT(_) => consumer.predicate == Predicate::True,
                    Target::PredF(_) => consumer.predicate == Predicate::False,
                    _ => true,
                };
                if !polarity_ok {
                    return Err(BlockError::PredicatePolarity { iid, target });
                }
                explicit[target as usize][slot as usize] += 1;
            }
            if insn.bid != 0 {
                let class = insn.opcode.result_class();
                let ch = insn.bid as usize;
                if channel_kind[ch].is_some_and(|k| k != class) {
                    return Err(BlockError::MixedChannel(insn.bid));
                }
                channel_kind[ch] = Some(class);
                senders[ch] += 1;
            }
            if insn.opcode == Opcode::Bro {
                let e = insn.exit as usize;
                if e >= self.exits.len() {
                    return Err(BlockError::BadExit(iid));
                }
                used_exits[e] = true;
            }
            if insn.opcode.is_memory() {
                if insn.lsid != next_lsid {
                    return Err(BlockError::LsidOrder(iid));
                }
                next_lsid += 1;
            }
        }
        if let Some(e) = used_exits.iter().position(|u| !u) {
            return Err(BlockError::UnusedExit(e));
        }

        for (iid, insn) in self.instructions.iter().enumerate() {
            if let Some(b) = insn.binput {
                let slot = b.slot.slot();
                if explicit[iid][slot as usize] > 0 {
                    return Err(BlockError::SlotConflict { iid, slot });
                }
                let wanted = match b.slot {
                    ListenSlot::Pred => ResultClass::Predicate,
                    ListenSlot::Op0 => ResultClass::Value,
                };
                match channel_kind[b.channel as usize] {
                    None => return Err(BlockError::UnreachableSlot { iid, slot }),
                    Some(k) if k != wanted => return Err(BlockError::MixedChannel(b.channel)),
                    Some(_) => {}
                }
            }
            for slot in [Slot::Op0, Slot::Op1, Slot::Pred] {
                let listened = insn.binput.is_some_and(|b| b.slot.slot() == slot);
                if insn.awaits(slot) && explicit[iid][slot as usize] == 0 && !listened {
                    return Err(BlockError::UnreachableSlot { iid, slot });
                }
            }
        }

        // Memory operations are issued strictly in lsid order, so every one of
        // them has to fire or the later ones would wait forever.
        let always = self.always_fires();
        if let Some(iid) = self
            .instructions
            .iter()
            .enumerate()
            .find(|(i, insn)| insn.opcode.is_memory() && !always[*i])
            .map(|(i, _)| i)
        {
            return Err(BlockError::ConditionalMemory(iid));
        }
        Ok(())
    }

    /// Instructions guaranteed to fire on every execution: unpredicated, with
    /// every awaited slot fed by an instruction that itself always fires.
    pub fn always_fires(&self) -> Vec<bool> {
        let n = self.instructions.len();
        let mut always = vec![false; n];
        loop {
            let mut changed = false;
            for iid in 0..n {
                if always[iid] {
                    continue;
                }
                let insn = &self.instructions[iid];
                if insn.predicate != Predicate::None {
                    continue;
                }
                let fed = |slot: Slot| -> bool {
                    if !insn.awaits(slot) {
                        return true;
                    }
                    if let Some(b) = insn.binput.filter(|b| b.slot.slot() == slot) {
                        return self.instructions.iter().enumerate().any(|(p, s)| s.bid == b.channel && always[p]);
                    }
                    self.instructions
                        .iter()
                        .enumerate()
                        .any(|(p, s)| always[p] && s.live_targets().any(|t| t.slot() == Some((iid as u8, slot))))
                };
                if fed(Slot::Op0) && fed(Slot::Op1) {
                    always[iid] = true;
                    changed = true;
                }
            }
            if !changed {
                return always;
            }
        }
    }
}
