//! Two-pass assembler and disassembler for EDGE target-form text.
//!
//! ```text
//! blk0:
//!     READ R0 T[2R]        ; left/right operand targets: T[iL], T[iR]
//!     READ R7 T[2L]
//!     ADD T[3L]
//!     TLEI #5 B[1P]        ; broadcast the predicate on channel 1
//!     BRO.T B1 blk1        ; listen on channel 1, branch to blk1
//!     BRO.F B1 blk2
//! ```
//!
//! Targets are `T[<iid>L|R|P]`, broadcasts `B[<ch>L|R|P]` and register
//! writes `W[R<n>]`. A listener declares `B<ch>` (predicate slot when the
//! instruction is predicated, operand 0 otherwise) or explicitly `B<ch>P` /
//! `B<ch>L`. Loads and stores get their lsids from program order.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::isa::{
    Block, BlockError, BroadcastInput, Form, Instruction, ListenSlot, Opcode, Predicate, ResultClass, Target,
    MAX_BLOCK_INSNS, MAX_CHANNEL, NUM_REGS,
};
use crate::refinterp::HALT;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: target T[{target}] is outside the block ({len} instructions)")]
    TargetOutOfRange { line: usize, target: u8, len: usize },
    #[error("block `{block}` has {len} instructions, limit is 32")]
    BlockTooLarge { block: String, len: usize },
    #[error("branch to undefined label `{label}`")]
    DanglingLabel { label: String },
    #[error("line {line}: slot is both broadcast-listened and explicitly targeted")]
    SlotConflict { line: usize },
    #[error("block `{block}`: {err}")]
    Invalid { block: String, err: BlockError },
}

fn perr(line: usize, reason: impl Into<String>) -> AsmError {
    AsmError::Parse { line, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SlotRef {
    L,
    R,
    P,
}

#[derive(Clone, Debug)]
enum RawTarget {
    Insn(u8, SlotRef),
    Reg(u8),
}

#[derive(Clone, Debug)]
struct RawInsn {
    line: usize,
    opcode: Opcode,
    predicate: Predicate,
    targets: Vec<RawTarget>,
    send: Option<(u8, SlotRef)>,
    listen: Option<(u8, Option<SlotRef>)>,
    imm: Option<i32>,
    reg: Option<u8>,
    label: Option<String>,
}

struct RawBlock {
    name: String,
    line: usize,
    insns: Vec<RawInsn>,
}

fn parse_slot(c: &str, line: usize) -> Result<SlotRef, AsmError> {
    match c {
        "L" | "l" => Ok(SlotRef::L),
        "R" | "r" => Ok(SlotRef::R),
        "P" | "p" => Ok(SlotRef::P),
        _ => Err(perr(line, format!("bad slot suffix `{c}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, AsmError> {
    s.parse().map_err(|_| perr(line, format!("bad {what} `{s}`")))
}

fn parse_imm(s: &str, line: usize) -> Result<i32, AsmError> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x") {
        i64::from_str_radix(hex, 16).map_err(|_| perr(line, format!("bad immediate `{s}`")))?
    } else {
        parse_num::<i64>(body, line, "immediate")?
    };
    let v = if neg { -v } else { v };
    i32::try_from(v).map_err(|_| perr(line, format!("immediate `{s}` out of range")))
}

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_insn(text: &str, line: usize) -> Result<RawInsn, AsmError> {
    let mut toks = text.split_whitespace();
    let head = toks.next().ok_or_else(|| perr(line, "missing mnemonic"))?;
    let (mn, pred) = match head.split_once('.') {
        Some((m, "T" | "t")) => (m, Predicate::True),
        Some((m, "F" | "f")) => (m, Predicate::False),
        Some((_, p)) => return Err(perr(line, format!("bad predicate suffix `.{p}`"))),
        None => (head, Predicate::None),
    };
    let opcode = Opcode::from_mnemonic(mn).ok_or_else(|| perr(line, format!("unknown mnemonic `{mn}`")))?;
    let mut raw = RawInsn {
        line,
        opcode,
        predicate: pred,
        targets: Vec::new(),
        send: None,
        listen: None,
        imm: None,
        reg: None,
        label: None,
    };
    for tok in toks {
        let bracket = |prefix: &str| -> Option<&str> { tok.strip_prefix(prefix).and_then(|r| r.strip_suffix(']')) };
        if let Some(inner) = bracket("T[") {
            if inner.len() < 2 || !inner.is_char_boundary(inner.len() - 1) {
                return Err(perr(line, format!("bad target `{tok}`")));
            }
            let (num, slot) = inner.split_at(inner.len() - 1);
            let iid: u8 = parse_num(num, line, "target index")?;
            raw.targets.push(RawTarget::Insn(iid, parse_slot(slot, line)?));
        } else if let Some(inner) = bracket("B[") {
            if inner.len() != 2 {
                return Err(perr(line, format!("bad broadcast target `{tok}`")));
            }
            let ch: u8 = parse_num(&inner[..1], line, "channel")?;
            if raw.send.is_some() {
                return Err(perr(line, "more than one broadcast target"));
            }
            raw.send = Some((ch, parse_slot(&inner[1..], line)?));
        } else if let Some(inner) = bracket("W[") {
            let r = inner
                .strip_prefix('R')
                .or_else(|| inner.strip_prefix('r'))
                .ok_or_else(|| perr(line, format!("bad register target `{tok}`")))?;
            raw.targets.push(RawTarget::Reg(parse_num(r, line, "register")?));
        } else if let Some(v) = tok.strip_prefix('#') {
            if raw.imm.replace(parse_imm(v, line)?).is_some() {
                return Err(perr(line, "more than one immediate"));
            }
        } else if opcode == Opcode::Read && (tok.starts_with('R') || tok.starts_with('r')) {
            let r: u8 = parse_num(&tok[1..], line, "register")?;
            if raw.reg.replace(r).is_some() {
                return Err(perr(line, "more than one source register"));
            }
        } else if tok.len() >= 2
            && tok.starts_with('B')
            && tok[1..2].chars().all(|c| c.is_ascii_digit())
            && tok.len() <= 3
        {
            let ch: u8 = parse_num(&tok[1..2], line, "channel")?;
            let slot = match &tok[2..] {
                "" => None,
                s => Some(parse_slot(s, line)?),
            };
            if raw.listen.replace((ch, slot)).is_some() {
                return Err(perr(line, "more than one broadcast input"));
            }
        } else if opcode == Opcode::Bro && is_label(tok) {
            if raw.label.replace(tok.to_string()).is_some() {
                return Err(perr(line, "more than one branch label"));
            }
        } else {
            return Err(perr(line, format!("unexpected operand `{tok}`")));
        }
    }
    Ok(raw)
}

fn parse(src: &str) -> Result<Vec<RawBlock>, AsmError> {
    let mut blocks: Vec<RawBlock> = Vec::new();
    for (idx, raw_line) in src.lines().enumerate() {
        let line = idx + 1;
        let text = raw_line.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(name) = text.strip_suffix(':') {
            let name = name.trim();
            if !is_label(name) {
                return Err(perr(line, format!("bad label `{name}`")));
            }
            if name == HALT {
                return Err(perr(line, "HALT is reserved"));
            }
            if blocks.iter().any(|b| b.name == name) {
                return Err(perr(line, format!("duplicate label `{name}`")));
            }
            blocks.push(RawBlock { name: name.to_string(), line, insns: Vec::new() });
            continue;
        }
        let block = blocks.last_mut().ok_or_else(|| perr(line, "instruction before the first label"))?;
        block.insns.push(parse_insn(text, line)?);
    }
    for b in &blocks {
        if b.insns.is_empty() {
            return Err(perr(b.line, "empty block"));
        }
        if b.insns.len() > MAX_BLOCK_INSNS {
            return Err(AsmError::BlockTooLarge { block: b.name.clone(), len: b.insns.len() });
        }
    }
    Ok(blocks)
}

fn resolve(raw: &RawBlock, labels: &HashSet<&str>) -> Result<Block, AsmError> {
    let len = raw.insns.len();
    let mut exits: Vec<String> = Vec::new();
    let mut lsid = 0u8;
    let mut out = Vec::with_capacity(len);
    for r in &raw.insns {
        let line = r.line;
        let mut insn = Instruction::new(r.opcode);
        insn.predicate = r.predicate;
        match r.opcode.form() {
            Form::Immediate => {
                insn.imm = r.imm.ok_or_else(|| perr(line, "missing immediate"))?;
            }
            Form::Register => {
                let reg = r.reg.ok_or_else(|| perr(line, "missing source register"))?;
                if reg as usize >= NUM_REGS {
                    return Err(perr(line, format!("register R{reg} out of range")));
                }
                insn.reg = reg;
            }
            Form::Branch => {
                let label = r.label.as_deref().ok_or_else(|| perr(line, "missing branch label"))?;
                if label != HALT && !labels.contains(label) {
                    return Err(AsmError::DanglingLabel { label: label.to_string() });
                }
                insn.exit = match exits.iter().position(|e| e == label) {
                    Some(i) => i as u8,
                    None => {
                        exits.push(label.to_string());
                        (exits.len() - 1) as u8
                    }
                };
            }
            Form::Memory => {
                insn.lsid = lsid;
                lsid += 1;
            }
            Form::General => {}
        }
        if r.imm.is_some() && r.opcode.form() != Form::Immediate {
            return Err(perr(line, "immediate not allowed here"));
        }
        if r.label.is_some() && r.opcode != Opcode::Bro {
            return Err(perr(line, "label operand not allowed here"));
        }
        if r.targets.len() > r.opcode.max_targets() {
            return Err(perr(line, format!("{} takes at most {} targets", r.opcode, r.opcode.max_targets())));
        }
        for (k, t) in r.targets.iter().enumerate() {
            insn.targets[k] = match *t {
                RawTarget::Reg(n) => {
                    if n as usize >= NUM_REGS {
                        return Err(perr(line, format!("register R{n} out of range")));
                    }
                    Target::Reg(n)
                }
                RawTarget::Insn(iid, slot) => {
                    if iid as usize >= len {
                        return Err(AsmError::TargetOutOfRange { line, target: iid, len });
                    }
                    match slot {
                        SlotRef::L => Target::Op0(iid),
                        SlotRef::R => Target::Op1(iid),
                        SlotRef::P => match raw.insns[iid as usize].predicate {
                            Predicate::True => Target::PredT(iid),
                            Predicate::False => Target::PredF(iid),
                            Predicate::None => return Err(perr(line, format!("T[{iid}P]: target is not predicated"))),
                        },
                    }
                }
            };
        }
        if insn.targets[0] == insn.targets[1] && !insn.targets[0].is_none() {
            return Err(perr(line, "duplicate target"));
        }
        if let Some((ch, slot)) = r.send {
            if ch == 0 || ch > MAX_CHANNEL {
                return Err(perr(line, format!("broadcast channel {ch} out of range")));
            }
            let ok = match r.opcode.result_class() {
                ResultClass::Predicate => slot == SlotRef::P,
                ResultClass::Value => slot != SlotRef::P,
                ResultClass::Nothing => false,
            };
            if !ok {
                return Err(perr(line, format!("B[{ch}..] does not match what {} produces", r.opcode)));
            }
            insn.bid = ch;
        }
        if let Some((ch, slot)) = r.listen {
            if ch == 0 || ch > MAX_CHANNEL {
                return Err(perr(line, format!("broadcast channel {ch} out of range")));
            }
            let slot = match slot {
                Some(SlotRef::P) => ListenSlot::Pred,
                Some(SlotRef::L) => ListenSlot::Op0,
                Some(SlotRef::R) => return Err(perr(line, "listening on operand 1 is not supported")),
                None if r.predicate != Predicate::None => ListenSlot::Pred,
                None => ListenSlot::Op0,
            };
            insn.binput = Some(BroadcastInput { channel: ch, slot });
        }
        insn.check().map_err(|e| perr(line, e.to_string()))?;
        out.push(insn);
    }

    let block = Block { name: raw.name.clone(), instructions: out, exits };
    block.validate().map_err(|err| match err {
        BlockError::SlotConflict { iid, .. } => AsmError::SlotConflict { line: raw.insns[iid].line },
        err => AsmError::Invalid { block: raw.name.clone(), err },
    })?;
    Ok(block)
}

/// Assembles source text into validated blocks.
pub fn assemble(src: &str) -> Result<Vec<Block>, AsmError> {
    let raw = parse(src)?;
    let labels: HashSet<&str> = raw.iter().map(|b| b.name.as_str()).collect();
    raw.iter().map(|b| resolve(b, &labels)).collect()
}

fn target_text(t: Target) -> String {
    match t {
        Target::None => String::new(),
        Target::Op0(i) => format!("T[{i}L]"),
        Target::Op1(i) => format!("T[{i}R]"),
        Target::PredT(i) | Target::PredF(i) => format!("T[{i}P]"),
        Target::Reg(r) => format!("W[R{r}]"),
    }
}

/// Renders one instruction in assembler syntax.
pub fn format_instruction(insn: &Instruction, exits: &[String]) -> String {
    let mut s = insn.opcode.mnemonic().to_string();
    match insn.predicate {
        Predicate::True => s.push_str(".T"),
        Predicate::False => s.push_str(".F"),
        Predicate::None => {}
    }
    if let Some(b) = insn.binput {
        let default = if insn.predicate != Predicate::None { ListenSlot::Pred } else { ListenSlot::Op0 };
        let _ = write!(s, " B{}", b.channel);
        if b.slot != default {
            s.push(if b.slot == ListenSlot::Pred { 'P' } else { 'L' });
        }
    }
    match insn.opcode.form() {
        Form::Immediate => {
            let _ = write!(s, " #{}", insn.imm);
        }
        Form::Register => {
            let _ = write!(s, " R{}", insn.reg);
        }
        Form::Branch => {
            let label = exits.get(insn.exit as usize).map_or("?", String::as_str);
            let _ = write!(s, " {label}");
        }
        Form::Memory | Form::General => {}
    }
    for t in insn.live_targets() {
        s.push(' ');
        s.push_str(&target_text(t));
    }
    if insn.bid != 0 {
        let kind = if insn.opcode.is_test() { 'P' } else { 'L' };
        let _ = write!(s, " B[{}{kind}]", insn.bid);
    }
    s
}

/// Renders blocks back to source text accepted by [`assemble`].
pub fn disassemble(blocks: &[Block]) -> String {
    let mut s = String::new();
    for (k, b) in blocks.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "{}:", b.name);
        for insn in &b.instructions {
            let _ = writeln!(s, "    {}", format_instruction(insn, &b.exits));
        }
    }
    s
}
