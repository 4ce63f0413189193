//! Brute-force parallel scheduler.
//!
//! Every entry holds six flip-flops of decoded ready state (DBID, DRT, DRF,
//! DR0, DR1) and six of active ready state (RT, RF, R0, R1, INH, RDY). Each
//! cycle the "next readys" logic re-evaluates all 32 entries against the two
//! target event ports and the broadcast port, and a priority encoder picks the
//! lowest ready IID.

use std::collections::VecDeque;
use std::fmt::Write as _;

use super::{DecodedEntry, Event, EventKind, RdyVec, SchedCounters, Scheduler, SchedulerKind, TickReport};

const N: usize = 32;

/// Lowest set bit of every 5-bit group value (entry 0 is unused).
const LOW5_ROM: [u8; 32] = {
    let mut rom = [0u8; 32];
    let mut v = 1;
    while v < 32 {
        rom[v] = (v as u32).trailing_zeros() as u8;
        v += 1;
    }
    rom
};

/// 16-to-4 priority encoder built from three 5-bit ROM lookups plus the top
/// bit, as one bank's encoder.
fn encode16(input: u16) -> Option<u8> {
    let g0 = (input & 0x1f) as usize;
    let g1 = ((input >> 5) & 0x1f) as usize;
    let g2 = ((input >> 10) & 0x1f) as usize;
    // 3:1 selector over the group outputs; 'b1111 when all groups are zero
    let sel = if g0 != 0 {
        LOW5_ROM[g0]
    } else if g1 != 0 {
        5 + LOW5_ROM[g1]
    } else if g2 != 0 {
        10 + LOW5_ROM[g2]
    } else {
        0b1111
    };
    (input != 0).then_some(sel)
}

fn bank_bits(rdy: u32, parity: u32) -> u16 {
    (0..16).fold(0u16, |acc, k| acc | ((((rdy >> (2 * k + parity)) & 1) as u16) << k))
}

/// Index of the lowest set bit of `rdy`, computed as the hardware does: one
/// encoder per even/odd bank and a comparator picking the smaller global IID.
pub fn select_lowest(rdy: u32) -> Option<u8> {
    let even = encode16(bank_bits(rdy, 0)).map(|k| 2 * k);
    let odd = encode16(bank_bits(rdy, 1)).map(|k| 2 * k + 1);
    match (even, odd) {
        (Some(e), Some(o)) => Some(e.min(o)),
        (e, o) => e.or(o),
    }
}

/// Inputs to one evaluation of the next-readys logic, in the hardware's
/// encoding: `T0`/`T1` are `{input#:1, IID:5}` and `ens` enables which of
/// RT/RF/R0/R1 the target ports may set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepInputs {
    pub t0: Option<u8>,
    pub t1: Option<u8>,
    pub ens: RdyVec,
    pub bid: u8,
    pub b_ens: RdyVec,
    /// Instruction issued in this cycle (INH_EN).
    pub issued: Option<u8>,
}

impl StepInputs {
    /// Packs up to two same-class targeted events and one broadcast.
    pub fn from_events(targeted: &[(u8, RdyVec)], broadcast: Option<(u8, RdyVec)>) -> StepInputs {
        assert!(targeted.len() <= 2, "two target ports");
        if let [(_, a), (_, b)] = targeted {
            assert_eq!(a.is_predicate(), b.is_predicate(), "predicate and operand events mixed");
        }
        let mut s = StepInputs::default();
        for (k, &(iid, rdys)) in targeted.iter().enumerate() {
            // input bit 1 selects RT/R1, 0 selects RF/R0
            let hi = rdys == RdyVec::RT || rdys == RdyVec::R1;
            let port = ((hi as u8) << 5) | iid;
            if k == 0 {
                s.t0 = Some(port);
            } else {
                s.t1 = Some(port);
            }
            s.ens |= rdys;
        }
        if let Some((ch, rdys)) = broadcast {
            s.bid = ch;
            s.b_ens = rdys;
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct ParallelScheduler {
    dbid: [u8; N],
    drdys: [RdyVec; N],
    ardys: [RdyVec; N],
    inh: u32,
    rdy: u32,
    memory: u32,
    ls_ok: u32,
    /// Channels already broadcast this block execution, so that listeners
    /// decoded afterwards still see the result.
    seen: [RdyVec; 4],
    late: [RdyVec; N],
    pending: VecDeque<Event>,
    pending_bcast: VecDeque<Event>,
    last_issued: Option<u8>,
    counters: SchedCounters,
}

impl Default for ParallelScheduler {
    fn default() -> Self {
        ParallelScheduler::new()
    }
}

impl ParallelScheduler {
    pub fn new() -> ParallelScheduler {
        ParallelScheduler {
            dbid: [0; N],
            drdys: [RdyVec::NONE; N],
            ardys: [RdyVec::NONE; N],
            inh: 0,
            rdy: 0,
            memory: 0,
            ls_ok: 0,
            seen: [RdyVec::NONE; 4],
            late: [RdyVec::NONE; N],
            pending: VecDeque::new(),
            pending_bcast: VecDeque::new(),
            last_issued: None,
            counters: SchedCounters::default(),
        }
    }

    pub fn is_decoded(&self, iid: u8) -> bool {
        // DRT | DRF is zero only for undecoded entries
        (self.drdys[iid as usize] & (RdyVec::RT | RdyVec::RF)) != RdyVec::NONE
    }

    pub fn rdy_vector(&self) -> u32 {
        self.rdy
    }

    /// `(DBID, DRT..DR1, RT..R1, INH, RDY)` of one entry.
    pub fn entry(&self, iid: u8) -> (u8, RdyVec, RdyVec, bool, bool) {
        let i = iid as usize;
        (self.dbid[i], self.drdys[i], self.ardys[i], self.inh >> i & 1 == 1, self.rdy >> i & 1 == 1)
    }

    /// Writes an entry's decoded ready state.
    pub fn write_decoded(&mut self, iid: u8, drdys: RdyVec, dbid: u8) {
        self.drdys[iid as usize] = drdys;
        self.dbid[iid as usize] = dbid;
    }

    /// One evaluation of the next-readys logic for all entries, then
    /// selection of the lowest ready IID.
    pub fn step(&mut self, inp: &StepInputs) -> Option<u8> {
        let mut rdy_nxt = 0u32;
        for i in 0..N {
            let t00 = inp.t0 == Some(i as u8);
            let t01 = inp.t0 == Some(i as u8 | N as u8);
            let t10 = inp.t1 == Some(i as u8);
            let t11 = inp.t1 == Some(i as u8 | N as u8);
            // channel 0 means "no broadcast" and never matches
            let b = inp.bid != 0 && inp.bid == self.dbid[i];

            let hi = t01 || t11;
            let lo = t00 || t10;
            let d = self.drdys[i] | self.late[i];
            let a = self.ardys[i];
            let mut nxt = a | d;
            if (inp.ens.contains(RdyVec::RT) && hi) || (inp.b_ens.contains(RdyVec::RT) && b) {
                nxt |= RdyVec::RT;
            }
            if (inp.ens.contains(RdyVec::RF) && lo) || (inp.b_ens.contains(RdyVec::RF) && b) {
                nxt |= RdyVec::RF;
            }
            if (inp.ens.contains(RdyVec::R0) && lo) || (inp.b_ens.contains(RdyVec::R0) && b) {
                nxt |= RdyVec::R0;
            }
            if (inp.ens.contains(RdyVec::R1) && hi) || (inp.b_ens.contains(RdyVec::R1) && b) {
                nxt |= RdyVec::R1;
            }
            let inh_nxt = (self.inh >> i & 1 == 1) || inp.issued == Some(i as u8);
            self.ardys[i] = nxt;
            if inh_nxt {
                self.inh |= 1 << i;
            }
            if nxt.is_all() && !inh_nxt {
                rdy_nxt |= 1 << i;
            }
        }
        self.rdy = rdy_nxt;
        select_lowest(self.selectable())
    }

    fn selectable(&self) -> u32 {
        let mut mask = self.rdy & (!self.memory | self.ls_ok);
        if let Some(i) = self.last_issued {
            mask &= !(1 << i);
        }
        mask
    }

    fn take_inputs(&mut self) -> (StepInputs, TickReport) {
        let mut report = TickReport::default();
        let mut targeted = Vec::with_capacity(2);
        while targeted.len() < 2 {
            let Some(evt) = self.pending.front() else { break };
            let EventKind::Targeted { iid, rdys } = evt.kind else { unreachable!() };
            if let Some(&(_, first)) = targeted.first() {
                let first: RdyVec = first;
                if first.is_predicate() != rdys.is_predicate() {
                    break;
                }
            }
            targeted.push((iid, rdys));
            report.delivered.push(*evt);
            self.pending.pop_front();
        }
        let mut bcast = None;
        if let Some(evt) = self.pending_bcast.pop_front() {
            let EventKind::Broadcast { channel, rdys } = evt.kind else { unreachable!() };
            bcast = Some((channel, rdys));
            self.seen[channel as usize] |= rdys;
            report.delivered.push(evt);
            report.broadcast = true;
            self.counters.broadcast_drain_cycles += 1;
            self.counters.listener_deliveries += self.dbid.iter().filter(|&&d| d == channel).count() as u64;
        }
        self.counters.targeted_delivered += targeted.len() as u64;
        let mut inp = StepInputs::from_events(&targeted, bcast);
        inp.issued = self.last_issued.take();
        (inp, report)
    }
}

impl Scheduler for ParallelScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Parallel
    }

    fn reset(&mut self) {
        let counters = self.counters;
        *self = ParallelScheduler::new();
        self.counters = counters;
    }

    fn refresh(&mut self) {
        self.ardys = [RdyVec::NONE; N];
        self.inh = 0;
        self.rdy = 0;
        self.ls_ok = 0;
        self.seen = [RdyVec::NONE; 4];
        self.late = [RdyVec::NONE; N];
        self.pending.clear();
        self.pending_bcast.clear();
        self.last_issued = None;
    }

    fn decode(&mut self, iid: u8, entry: DecodedEntry) {
        debug_assert!(!self.is_decoded(iid), "double decode of {iid}");
        let dbid = entry.dbid();
        self.write_decoded(iid, entry.drdys, dbid);
        if entry.memory {
            self.memory |= 1 << iid;
        }
        if dbid != 0 {
            self.late[iid as usize] = self.seen[dbid as usize];
        }
    }

    fn post(&mut self, event: Event) {
        match event.kind {
            EventKind::Targeted { .. } => {
                self.counters.targeted_posted += 1;
                self.pending.push_back(event);
            }
            EventKind::Broadcast { .. } => {
                self.counters.broadcasts_posted += 1;
                self.pending_bcast.push_back(event);
            }
        }
    }

    fn ls_enable(&mut self, iid: u8) {
        self.ls_ok |= 1 << iid;
    }

    fn tick(&mut self) -> TickReport {
        let (inp, report) = self.take_inputs();
        self.step(&inp);
        report
    }

    fn select(&mut self) -> Option<u8> {
        let sel = select_lowest(self.selectable());
        debug_assert!(sel.is_none_or(|i| self.is_decoded(i)));
        self.last_issued = sel;
        sel
    }

    fn is_idle(&self) -> bool {
        if !self.pending.is_empty() || !self.pending_bcast.is_empty() {
            return false;
        }
        // readiness the next evaluation would compute, including entries
        // decoded since the last one
        (0..N).all(|i| {
            let issued = self.inh >> i & 1 == 1 || self.last_issued == Some(i as u8);
            let blocked = self.memory >> i & 1 == 1 && self.ls_ok >> i & 1 == 0;
            issued || blocked || !(self.ardys[i] | self.drdys[i] | self.late[i]).is_all()
        })
    }

    fn counters(&self) -> SchedCounters {
        self.counters
    }

    fn dump(&self, entries: usize) -> String {
        let mut s = String::from("IID DBID DRT DRF DR0 DR1 | RT RF R0 R1 INH RDY\n");
        let bit = |v: RdyVec, m: RdyVec| v.contains(m) as u8;
        for i in 0..entries.min(N) {
            let (dbid, d, a, inh, rdy) = self.entry(i as u8);
            let _ = writeln!(
                s,
                "{i:>3}   {dbid:02b}   {}   {}   {}   {} |  {}  {}  {}  {}   {}   {}",
                bit(d, RdyVec::RT),
                bit(d, RdyVec::RF),
                bit(d, RdyVec::R0),
                bit(d, RdyVec::R1),
                bit(a, RdyVec::RT),
                bit(a, RdyVec::RF),
                bit(a, RdyVec::R0),
                bit(a, RdyVec::R1),
                inh as u8,
                rdy as u8,
            );
        }
        s
    }
}
