//! Random well-formed blocks, programs and machine states for differential
//! testing.
//!
//! Blocks are acyclic (every target names a later instruction), every awaited
//! slot has exactly one producer, each register is written at most once per
//! block and memory instructions always fire with word-aligned addresses
//! formed from the base registers.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::isa::{
    Block, BroadcastInput, Instruction, ListenSlot, Opcode, Predicate, ResultClass, Slot, Target, MAX_BLOCK_INSNS,
    MAX_CHANNEL, NUM_REGS,
};
use crate::refinterp::{ArchState, HALT};

/// Registers holding aligned base addresses. Generated blocks read but never
/// write them.
pub const BASE_REGS: RangeInclusive<u8> = 28..=31;
/// Generated memory addresses stay below this bound.
pub const MEM_WINDOW: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub min_insns: usize,
    pub max_insns: usize,
    pub memory: bool,
    pub broadcasts: bool,
    pub predication: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { min_insns: 2, max_insns: MAX_BLOCK_INSNS, memory: true, broadcasts: true, predication: true }
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    always: bool,
    free: usize,
}

struct Builder<'r, R: Rng> {
    rng: &'r mut R,
    cfg: GenConfig,
    insns: Vec<Instruction>,
    nodes: Vec<Node>,
    /// Result class carried by each channel (true = predicate).
    channels: [Option<(u8, bool)>; 4],
    written: Vec<u8>,
    lsid: u8,
}

impl<'r, R: Rng> Builder<'r, R> {
    fn link(&mut self, from: usize, t: Target) {
        let insn = &mut self.insns[from];
        let k = if insn.targets[0].is_none() { 0 } else { 1 };
        insn.targets[k] = t;
        self.nodes[from].free -= 1;
    }

    /// Earlier instructions that can feed one more explicit target of the
    /// given class.
    fn producers(&self, before: usize, predicate: bool, need_always: bool) -> Vec<usize> {
        (0..before)
            .filter(|&p| {
                let op = self.insns[p].opcode;
                self.nodes[p].free > 0
                    && op.is_test() == predicate
                    && op.result_class() != ResultClass::Nothing
                    && (!need_always || self.nodes[p].always)
            })
            .collect()
    }

    /// Feeds `slot` of the instruction about to be pushed at `iid`. Returns
    /// whether the feed always fires, or None if no producer exists.
    fn feed(&mut self, iid: usize, slot: Slot, pred: Predicate, need_always: bool) -> Option<bool> {
        let predicate = slot == Slot::Pred;
        // try a broadcast listen first, sometimes
        if self.cfg.broadcasts && slot != Slot::Op1 && self.rng.gen_bool(0.3) {
            let listen = if predicate { ListenSlot::Pred } else { ListenSlot::Op0 };
            let open: Vec<u8> = (1..=MAX_CHANNEL)
                .filter(|&c| {
                    self.channels[c as usize]
                        .is_some_and(|(s, p)| p == predicate && (!need_always || self.nodes[s as usize].always))
                })
                .collect();
            if let Some(&ch) = open.choose(self.rng) {
                self.insns[iid].binput = Some(BroadcastInput { channel: ch, slot: listen });
                return Some(self.nodes[self.channels[ch as usize].unwrap().0 as usize].always);
            }
            let unused: Vec<u8> = (1..=MAX_CHANNEL).filter(|&c| self.channels[c as usize].is_none()).collect();
            let senders: Vec<usize> = (0..iid)
                .filter(|&p| {
                    let op = self.insns[p].opcode;
                    self.insns[p].bid == 0
                        && op.is_test() == predicate
                        && op.result_class() != ResultClass::Nothing
                        && (!need_always || self.nodes[p].always)
                })
                .collect();
            if let (Some(&ch), Some(&s)) = (unused.first(), senders.choose(self.rng)) {
                self.insns[s].bid = ch;
                self.channels[ch as usize] = Some((s as u8, predicate));
                self.insns[iid].binput = Some(BroadcastInput { channel: ch, slot: listen });
                return Some(self.nodes[s].always);
            }
        }
        let cands = self.producers(iid, predicate, need_always);
        let &p = cands.choose(self.rng)?;
        let t = match slot {
            Slot::Op0 => Target::Op0(iid as u8),
            Slot::Op1 => Target::Op1(iid as u8),
            Slot::Pred if pred == Predicate::True => Target::PredT(iid as u8),
            Slot::Pred => Target::PredF(iid as u8),
        };
        self.link(p, t);
        Some(self.nodes[p].always)
    }

    fn push(&mut self, insn: Instruction, always: bool) {
        let free = insn.opcode.max_targets();
        self.insns.push(insn);
        self.nodes.push(Node { always, free });
    }

    fn read(&mut self, reg: u8) -> usize {
        let mut r = Instruction::new(Opcode::Read);
        r.reg = reg;
        self.push(r, true);
        self.insns.len() - 1
    }

    /// Emits READ base [+ ADDI] feeding the address of the next instruction.
    fn address(&mut self) {
        let base = self.rng.gen_range(BASE_REGS);
        let r = self.read(base);
        if self.rng.gen_bool(0.5) {
            let mut a = Instruction::new(Opcode::Addi);
            a.imm = 4 * self.rng.gen_range(-8..=8);
            let at = self.insns.len();
            self.link(r, Target::Op0(at as u8));
            self.push(a, true);
            self.link(at, Target::Op0(at as u8 + 1));
        } else {
            let at = self.insns.len();
            self.link(r, Target::Op0(at as u8));
        }
    }

    fn memory_op(&mut self) -> bool {
        let load = self.rng.gen_bool(0.5);
        let extra = if load { 2 } else { 3 };
        if self.insns.len() + extra + 2 > self.cfg.max_insns.clamp(2, MAX_BLOCK_INSNS) {
            return false;
        }
        // the store value must come from an always-firing producer; pick it
        // before emitting the address chain so the chain can't be chosen
        let value_src = if load {
            None
        } else {
            let c = self.producers(self.insns.len(), false, true);
            match c.choose(self.rng) {
                Some(&p) => Some(p),
                None => return false,
            }
        };
        self.address();
        let iid = self.insns.len();
        let mut insn = Instruction::new(if load { Opcode::Ld } else { Opcode::St });
        insn.lsid = self.lsid;
        self.lsid += 1;
        if let Some(p) = value_src {
            self.link(p, Target::Op1(iid as u8));
        }
        self.push(insn, true);
        true
    }

    fn body_op(&mut self) {
        const OPS: [Opcode; 11] = [
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
        ];
        if self.cfg.memory && self.rng.gen_bool(0.15) && self.memory_op() {
            return;
        }
        let op = if self.rng.gen_bool(0.03) { Opcode::Nop } else { *OPS.choose(self.rng).unwrap() };
        let iid = self.insns.len();
        let mut insn = Instruction::new(op);
        match op {
            Opcode::Read => insn.reg = self.rng.gen_range(0..NUM_REGS as u8),
            Opcode::Addi => insn.imm = self.rng.gen_range(-256..=255),
            Opcode::Tlei => insn.imm = self.rng.gen_range(-20..=20),
            _ => {}
        }
        if self.cfg.predication && op != Opcode::Read && self.rng.gen_bool(0.25) {
            insn.predicate = if self.rng.gen_bool(0.5) { Predicate::True } else { Predicate::False };
        }
        // place the instruction first so feeds can set its binput
        self.push(insn, true);
        let mut always = true;
        let mut slots = vec![];
        if op.arity() >= 1 {
            slots.push(Slot::Op0);
        }
        if op.arity() >= 2 {
            slots.push(Slot::Op1);
        }
        if insn.predicate != Predicate::None {
            slots.push(Slot::Pred);
        }
        for slot in slots {
            // a slot can be listened only if no other slot already is
            let listening = self.insns[iid].binput.is_some();
            let saved = self.cfg.broadcasts;
            if listening {
                self.cfg.broadcasts = false;
            }
            let fed = self.feed(iid, slot, insn.predicate, false);
            self.cfg.broadcasts = saved;
            match fed {
                Some(a) => always &= a,
                None => {
                    self.undo(iid);
                    let r = self.rng.gen_range(0..NUM_REGS as u8);
                    self.read(r);
                    return;
                }
            }
        }
        self.nodes[iid].always = always && insn.predicate == Predicate::None;
    }

    /// Removes the instruction at `iid` (the last one) and every link into it.
    fn undo(&mut self, iid: usize) {
        let removed = self.insns.pop().unwrap();
        self.nodes.pop();
        for p in 0..self.insns.len() {
            for k in 0..2 {
                if self.insns[p].targets[k].slot().is_some_and(|(to, _)| to as usize == iid) {
                    self.insns[p].targets[k] = Target::None;
                    self.nodes[p].free += 1;
                }
            }
            if self.insns[p].targets[0].is_none() {
                self.insns[p].targets.swap(0, 1);
            }
        }
        if let Some(b) = removed.binput {
            let (s, _) = self.channels[b.channel as usize].unwrap();
            let others = self.insns.iter().any(|i| i.binput.is_some_and(|x| x.channel == b.channel));
            if !others {
                self.insns[s as usize].bid = 0;
                self.channels[b.channel as usize] = None;
            }
        }
    }

    fn branches(&mut self, labels: &[String]) -> Vec<String> {
        let mut exits: Vec<String> = Vec::new();
        let mut exit_of = |l: &String| -> u8 {
            match exits.iter().position(|e| e == l) {
                Some(i) => i as u8,
                None => {
                    exits.push(l.clone());
                    (exits.len() - 1) as u8
                }
            }
        };
        let room = MAX_BLOCK_INSNS - self.insns.len();
        let test = (0..self.insns.len()).filter(|&p| self.insns[p].opcode.is_test() && self.nodes[p].always);
        let by_target: Vec<usize> = test.clone().filter(|&p| self.nodes[p].free >= 2).collect();
        let by_channel: Vec<usize> = if self.channels[1..].iter().any(Option::is_none) {
            test.filter(|&p| self.insns[p].bid == 0).collect()
        } else {
            vec![]
        };
        let two_way = room >= 2 && self.rng.gen_bool(0.7) && !(by_target.is_empty() && by_channel.is_empty());
        if !two_way {
            let mut b = Instruction::new(Opcode::Bro);
            b.exit = exit_of(labels.choose(self.rng).unwrap());
            self.push(b, true);
            return exits;
        }
        let t_iid = self.insns.len() as u8;
        let mut bt = Instruction::new(Opcode::Bro).with_predicate(Predicate::True);
        let mut bf = Instruction::new(Opcode::Bro).with_predicate(Predicate::False);
        bt.exit = exit_of(labels.choose(self.rng).unwrap());
        bf.exit = exit_of(labels.choose(self.rng).unwrap());
        let use_channel = by_target.is_empty() || (!by_channel.is_empty() && self.rng.gen_bool(0.5));
        if use_channel {
            let &s = by_channel.choose(self.rng).unwrap();
            let ch = (1..=MAX_CHANNEL).find(|&c| self.channels[c as usize].is_none()).unwrap();
            self.insns[s].bid = ch;
            self.channels[ch as usize] = Some((s as u8, true));
            bt.binput = Some(BroadcastInput { channel: ch, slot: ListenSlot::Pred });
            bf.binput = Some(BroadcastInput { channel: ch, slot: ListenSlot::Pred });
        } else {
            let &s = by_target.choose(self.rng).unwrap();
            self.link(s, Target::PredT(t_iid));
            self.link(s, Target::PredF(t_iid + 1));
        }
        self.push(bt, false);
        self.push(bf, false);
        exits
    }

    /// Spends leftover targets of value producers on register writes.
    fn register_writes(&mut self) {
        let mut regs: Vec<u8> = (0..NUM_REGS as u8).filter(|r| !BASE_REGS.contains(r)).collect();
        regs.shuffle(self.rng);
        for p in 0..self.insns.len() {
            let op = self.insns[p].opcode;
            if op.is_test() || op.result_class() == ResultClass::Nothing {
                continue;
            }
            if self.nodes[p].free > 0 && self.rng.gen_bool(0.5) {
                if let Some(r) = regs.pop() {
                    self.written.push(r);
                    self.link(p, Target::Reg(r));
                }
            }
        }
    }
}

/// A random block named `name` whose branches go to labels from `labels`.
pub fn random_block<R: Rng>(rng: &mut R, name: &str, labels: &[String], cfg: GenConfig) -> Block {
    assert!(!labels.is_empty());
    let max = cfg.max_insns.clamp(2, MAX_BLOCK_INSNS);
    let min = cfg.min_insns.clamp(1, max);
    let target = rng.gen_range(min..=max);
    let mut b =
        Builder { rng, cfg, insns: Vec::new(), nodes: Vec::new(), channels: [None; 4], written: Vec::new(), lsid: 0 };
    // leave room for up to two branches
    while b.insns.len() + 2 < target {
        b.body_op();
    }
    b.register_writes();
    let exits = b.branches(labels);
    let block = Block { name: name.to_string(), instructions: b.insns, exits };
    if let Err(e) = block.validate() {
        panic!("generator produced an invalid block: {e}\n{block:#?}");
    }
    block
}

/// `count` blocks named `b0`, `b1`, ... branching among themselves and HALT.
pub fn random_program<R: Rng>(rng: &mut R, count: usize, cfg: GenConfig) -> Vec<Block> {
    let names: Vec<String> = (0..count).map(|i| format!("b{i}")).collect();
    let mut labels = names.clone();
    labels.push(HALT.to_string());
    names.iter().map(|n| random_block(rng, n, &labels, cfg)).collect()
}

/// Random registers (aligned base registers) and a sparse random memory.
pub fn random_state<R: Rng>(rng: &mut R) -> ArchState {
    let mut regs = [0u32; NUM_REGS];
    for (r, v) in regs.iter_mut().enumerate() {
        *v = if BASE_REGS.contains(&(r as u8)) {
            // base plus the largest ADDI offset must stay inside the window
            4 * rng.gen_range(8..(MEM_WINDOW / 4 - 8))
        } else if rng.gen_bool(0.5) {
            rng.gen_range(0..16)
        } else {
            rng.gen()
        };
    }
    let mut mem = BTreeMap::new();
    for _ in 0..rng.gen_range(0..16) {
        mem.insert(4 * rng.gen_range(0..MEM_WINDOW / 4), rng.gen());
    }
    ArchState { regs, mem, pc: String::new() }
}
