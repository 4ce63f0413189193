#![allow(dead_code)]

use edgesim_core::assembler::assemble;
use edgesim_core::isa::{
    Block, BroadcastInput, Form, Instruction, ListenSlot, Opcode, Predicate, ResultClass, Slot, Target, IMM_MAX,
    IMM_MIN, MAX_BLOCK_INSNS,
};
use edgesim_core::refinterp::{ArchState, HALT};
use rand::seq::SliceRandom;
use rand::Rng;

pub const FIG1: &str = "
blk0:
    READ R0 T[2R]
    READ R7 T[2L]
    ADD T[3L]
    TLEI #5 B[1P]
    BRO.T B1 blk1
    BRO.F B1 blk2
blk1:
    BRO HALT
blk2:
    BRO HALT
";

pub fn fig1() -> Vec<Block> {
    assemble(FIG1).unwrap()
}

pub fn regs(pairs: &[(usize, u32)]) -> ArchState {
    let mut s = ArchState::default();
    for &(r, v) in pairs {
        s.regs[r] = v;
    }
    s
}

/// READ R1 feeding `k` chained ADDIs, the last writing R2.
pub fn chain_block(k: usize) -> Block {
    let mut src = String::from("chain:\n    READ R1 T[1L]\n");
    for i in 1..k {
        src.push_str(&format!("    ADDI #{i} T[{}L]\n", i + 1));
    }
    src.push_str(&format!("    ADDI #{k} W[R2]\n    BRO HALT\n"));
    assemble(&src).unwrap().remove(0)
}

/// READ, a test broadcasting on channel 1, then READ.T listeners at the
/// given iids with NOP padding in between.
pub fn broadcast_block(listeners: &[usize]) -> Block {
    let last = *listeners.iter().max().unwrap();
    let mut lines = vec!["    READ R1 T[1L]".to_string(), "    TLEI #5 B[1P]".to_string()];
    let mut reg = 10;
    for iid in 2..=last {
        if listeners.contains(&iid) {
            lines.push(format!("    READ.T B1 R2 W[R{reg}]"));
            reg += 1;
        } else {
            lines.push("    NOP".to_string());
        }
    }
    lines.push("    BRO HALT".to_string());
    let src = format!("bcast:\n{}\n", lines.join("\n"));
    assemble(&src).unwrap().remove(0)
}

/// MOV sending both operands of an ADD: two events to one bank in one cycle.
pub fn conflict_block() -> Block {
    assemble("conflict:\n    READ R1 T[1L]\n    MOV T[2L] T[2R]\n    ADD W[R2]\n    BRO HALT\n").unwrap().remove(0)
}

pub const COUNTDOWN: &str = "
loop:
    READ R1 T[1L]
    MOV T[2L] T[3L]
    ADDI #-1 W[R1]
    TLEI #1 B[1P]
    BRO.T B1 HALT
    BRO.F B1 loop
";

fn random_target(rng: &mut impl Rng) -> Target {
    let i = rng.gen_range(0..MAX_BLOCK_INSNS as u8);
    match rng.gen_range(0..6) {
        0 => Target::None,
        1 => Target::Op0(i),
        2 => Target::Op1(i),
        3 => Target::PredT(i),
        4 => Target::PredF(i),
        _ => Target::Reg(i),
    }
}

/// A random instruction that passes the per-instruction checks.
pub fn random_instruction(rng: &mut impl Rng) -> Instruction {
    loop {
        let op = *Opcode::ALL.choose(rng).unwrap();
        let mut insn = Instruction::new(op);
        insn.predicate = *[Predicate::None, Predicate::True, Predicate::False].choose(rng).unwrap();
        if op.result_class() != ResultClass::Nothing && rng.gen_bool(0.3) {
            insn.bid = rng.gen_range(1..=3);
        }
        if rng.gen_bool(0.3) {
            let slot = if rng.gen_bool(0.5) { ListenSlot::Pred } else { ListenSlot::Op0 };
            insn.binput = Some(BroadcastInput { channel: rng.gen_range(1..=3), slot });
        }
        match op.form() {
            Form::Immediate => insn.imm = rng.gen_range(IMM_MIN..=IMM_MAX),
            Form::Register => insn.reg = rng.gen_range(0..32),
            Form::Branch => insn.exit = rng.gen_range(0..32),
            Form::Memory => insn.lsid = rng.gen_range(0..32),
            Form::General => {}
        }
        for k in 0..op.max_targets() {
            insn.targets[k] = random_target(rng);
        }
        if insn.targets[0].is_none() {
            insn.targets.swap(0, 1);
        }
        if insn.check().is_ok() {
            return insn;
        }
    }
}

/// Every explicit target value the 9-bit target field can express.
pub fn all_targets() -> Vec<Target> {
    let mut v = vec![Target::None];
    for i in 0..MAX_BLOCK_INSNS as u8 {
        v.extend([Target::Op0(i), Target::Op1(i), Target::PredT(i), Target::PredF(i), Target::Reg(i)]);
    }
    v
}

/// The instruction under test at iid 0 with `target`, a consumer awaiting
/// that slot, and READs feeding every other awaited slot. None when the
/// opcode cannot send to that kind of target.
pub fn harness_block(op: Opcode, target: Target) -> Option<Block> {
    let mut insn = Instruction::new(op);
    match op.form() {
        Form::Immediate => insn.imm = -7,
        Form::Register => insn.reg = 3,
        Form::Memory => insn.lsid = 0,
        _ => {}
    }
    insn.targets[0] = target;
    insn.check().ok()?;
    if matches!(target.slot(), Some((0, _))) {
        return None;
    }
    let consumer_at = target.slot().map_or(1, |(i, _)| i as usize);
    let mut insns = vec![insn];
    while insns.len() <= consumer_at.max(1) {
        insns.push(Instruction::nop());
    }
    if let Some((c, _)) = target.slot() {
        insns[c as usize] = match target {
            Target::Op0(_) => Instruction::new(Opcode::Mov),
            Target::Op1(_) => Instruction::new(Opcode::Add),
            Target::PredT(_) => Instruction::nop().with_predicate(Predicate::True),
            Target::PredF(_) => Instruction::nop().with_predicate(Predicate::False),
            _ => unreachable!(),
        };
    }
    // feed the remaining awaited operand slots from fresh READs
    let mut feeds = Vec::new();
    for (i, x) in insns.iter().enumerate() {
        for (k, slot) in [Slot::Op0, Slot::Op1].into_iter().enumerate() {
            if x.awaits(slot) && target.slot() != Some((i as u8, slot)) {
                feeds.push((i as u8, k));
            }
        }
    }
    for (i, k) in feeds {
        let mut r = Instruction::new(Opcode::Read);
        r.reg = 1;
        r.targets[0] = if k == 0 { Target::Op0(i) } else { Target::Op1(i) };
        insns.push(r);
    }
    let mut exits = Vec::new();
    if op != Opcode::Bro {
        insns.push(Instruction::new(Opcode::Bro));
    }
    exits.push(HALT.to_string());
    if insns.len() > MAX_BLOCK_INSNS {
        return None;
    }
    let block = Block { name: "grid".into(), instructions: insns, exits };
    block.validate().ok()?;
    Some(block)
}
