//! Incremental scheduler.
//!
//! Ready state lives in two interleaved 16-entry banks (even and odd IIDs),
//! each a small RAM that supports one event read-modify-write per cycle. Only
//! the targets of events are re-evaluated; the frontier of ready
//! instructions is kept in FIFO queues:
//!
//! * `DCRDYQ` - zero-input instructions found ready by the decoder,
//! * `ISRDYQ` - the odd loser when both banks wake an instruction at once,
//! * `LSRDYQ` - memory instructions the LSQ has released.
//!
//! Broadcasts are drained iteratively from per-channel listener queues
//! (`BR1Q`..`BR3Q`) into idle bank event slots, at most one per bank per cycle.

use std::collections::VecDeque;
use std::fmt::Write as _;

use super::{
    merge_ready, DecodedEntry, Event, EventKind, RdyVec, SchedCounters, Scheduler, SchedulerKind, Stage, TickReport,
};
use crate::isa::ListenSlot;

const BANK_ENTRIES: usize = 16;
const QUEUE_CAPACITY: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BankEntry {
    pub drdys: RdyVec,
    pub dv: bool,
    pub ardys: RdyVec,
    pub av: bool,
}

/// One 16-entry bank of decoded/active ready state with valid bits.
#[derive(Clone, Debug)]
pub struct SchedulerBank {
    parity: u8,
    entries: [BankEntry; BANK_ENTRIES],
}

impl SchedulerBank {
    pub fn new(parity: u8) -> SchedulerBank {
        SchedulerBank { parity, entries: [BankEntry::default(); BANK_ENTRIES] }
    }

    fn index(&self, iid: u8) -> usize {
        debug_assert_eq!(iid & 1, self.parity, "iid {iid} in wrong bank");
        (iid >> 1) as usize
    }

    pub fn entry(&self, iid: u8) -> BankEntry {
        self.entries[self.index(iid)]
    }

    /// Decoder write of an entry's decoded ready state; returns whether the
    /// entry is ready, taking into account events that arrived earlier.
    pub fn decode_write(&mut self, iid: u8, drdys: RdyVec) -> bool {
        let e = &mut self.entries[(iid >> 1) as usize];
        e.drdys = drdys;
        e.dv = true;
        merge_ready(true, drdys, e.av, e.ardys, RdyVec::NONE).1
    }

    /// Read-modify-write of the target's active ready state.
    pub fn process_event(&mut self, iid: u8, rdys: RdyVec) -> Option<u8> {
        let idx = self.index(iid);
        let e = &mut self.entries[idx];
        let (next, ready) = merge_ready(e.dv, e.drdys, e.av, e.ardys, rdys);
        e.ardys = next;
        e.av = true;
        ready.then_some(iid)
    }

    /// Flash-clear the active valid bits.
    pub fn clear_active(&mut self) {
        for e in &mut self.entries {
            e.av = false;
        }
    }

    /// Flash-clear both valid bit arrays.
    pub fn clear_all(&mut self) {
        for e in &mut self.entries {
            e.av = false;
            e.dv = false;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Drain {
    channel: u8,
    rdys: RdyVec,
    cursor: usize,
}

#[derive(Clone, Debug)]
pub struct IncrementalScheduler {
    banks: [SchedulerBank; 2],
    dcrdyq: VecDeque<u8>,
    isrdyq: VecDeque<u8>,
    lsrdyq: VecDeque<u8>,
    /// BR1Q..BR3Q: listeners in decode order with the slot they listen on.
    brq: [Vec<(u8, ListenSlot)>; 3],
    /// EVT0/EVT1 pending event registers plus their overflow.
    pending: [VecDeque<Event>; 2],
    pending_bcast: VecDeque<Event>,
    drains: VecDeque<Drain>,
    seen: [Option<RdyVec>; 4],
    /// READY outputs of the banks this cycle.
    ready_out: [Option<u8>; 2],
    memory: u32,
    ls_ok: u32,
    /// Memory instructions that are ready but not yet released by the LSQ.
    parked: u32,
    issued: u32,
    decode_writes: [u8; 2],
    counters: SchedCounters,
}

impl Default for IncrementalScheduler {
    fn default() -> Self {
        IncrementalScheduler::new()
    }
}

impl IncrementalScheduler {
    pub fn new() -> IncrementalScheduler {
        IncrementalScheduler {
            banks: [SchedulerBank::new(0), SchedulerBank::new(1)],
            dcrdyq: VecDeque::with_capacity(QUEUE_CAPACITY),
            isrdyq: VecDeque::with_capacity(QUEUE_CAPACITY),
            lsrdyq: VecDeque::with_capacity(QUEUE_CAPACITY),
            brq: Default::default(),
            pending: Default::default(),
            pending_bcast: VecDeque::new(),
            drains: VecDeque::new(),
            seen: [None; 4],
            ready_out: [None; 2],
            memory: 0,
            ls_ok: 0,
            parked: 0,
            issued: 0,
            decode_writes: [0; 2],
            counters: SchedCounters::default(),
        }
    }

    pub fn bank(&self, parity: u8) -> &SchedulerBank {
        &self.banks[parity as usize]
    }

    pub fn entry(&self, iid: u8) -> BankEntry {
        self.banks[(iid & 1) as usize].entry(iid)
    }

    /// READY outputs of the even and odd bank from the last tick.
    pub fn ready_outputs(&self) -> [Option<u8>; 2] {
        self.ready_out
    }

    pub fn dcrdyq(&self) -> Vec<u8> {
        self.dcrdyq.iter().copied().collect()
    }

    pub fn isrdyq(&self) -> Vec<u8> {
        self.isrdyq.iter().copied().collect()
    }

    pub fn lsrdyq(&self) -> Vec<u8> {
        self.lsrdyq.iter().copied().collect()
    }

    pub fn brq(&self, channel: u8) -> &[(u8, ListenSlot)] {
        &self.brq[channel as usize - 1]
    }

    fn push(q: &mut VecDeque<u8>, iid: u8) {
        assert!(q.len() < QUEUE_CAPACITY, "ready queue overflow");
        q.push_back(iid);
    }

    fn became_ready(&mut self, iid: u8) -> Option<u8> {
        if self.memory >> iid & 1 == 1 {
            if self.ls_ok >> iid & 1 == 1 {
                Self::push(&mut self.lsrdyq, iid);
            } else {
                self.parked |= 1 << iid;
            }
            None
        } else {
            Some(iid)
        }
    }

    fn start_drain(&mut self, channel: u8, rdys: RdyVec, cursor: usize) {
        self.drains.push_back(Drain { channel, rdys, cursor });
    }

    /// Moves broadcast listeners into idle banks; at most one per bank, in
    /// queue order.
    fn drain(&mut self, busy: &mut [bool; 2], report: &mut TickReport) {
        while let Some(d) = self.drains.front_mut() {
            let q = &self.brq[d.channel as usize - 1];
            let Some(&(iid, slot)) = q.get(d.cursor) else {
                self.drains.pop_front();
                continue;
            };
            let p = (iid & 1) as usize;
            if busy[p] {
                break;
            }
            busy[p] = true;
            d.cursor += 1;
            let rdys = match slot {
                ListenSlot::Pred => d.rdys,
                ListenSlot::Op0 => RdyVec::R0,
            };
            report.delivered.push(Event::targeted(iid, rdys, Stage::Ex));
            report.broadcast = true;
            self.counters.listener_deliveries += 1;
            if let Some(r) = self.banks[p].process_event(iid, rdys) {
                self.ready_out[p] = self.became_ready(r);
            }
        }
    }
}

impl Scheduler for IncrementalScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Incremental
    }

    fn reset(&mut self) {
        let counters = self.counters;
        *self = IncrementalScheduler::new();
        self.counters = counters;
    }

    fn refresh(&mut self) {
        for b in &mut self.banks {
            b.clear_active();
        }
        self.isrdyq.clear();
        self.lsrdyq.clear();
        self.dcrdyq.clear();
        self.pending = Default::default();
        self.pending_bcast.clear();
        self.drains.clear();
        self.seen = [None; 4];
        self.ready_out = [None; 2];
        self.ls_ok = 0;
        self.parked = 0;
        self.issued = 0;
        for iid in 0..32u8 {
            let e = self.entry(iid);
            if e.dv && e.drdys.is_all() {
                if let Some(r) = self.became_ready(iid) {
                    Self::push(&mut self.dcrdyq, r);
                }
            }
        }
    }

    fn decode(&mut self, iid: u8, entry: DecodedEntry) {
        let p = (iid & 1) as usize;
        debug_assert!(!self.banks[p].entry(iid).dv, "double decode of {iid}");
        self.decode_writes[p] += 1;
        debug_assert!(self.decode_writes[p] <= 1, "two decode writes to bank {p} in one cycle");
        if entry.memory {
            self.memory |= 1 << iid;
        }
        if self.banks[p].decode_write(iid, entry.drdys) {
            if let Some(r) = self.became_ready(iid) {
                Self::push(&mut self.dcrdyq, r);
            }
        }
        if let Some(listen) = entry.listen {
            let ch = listen.channel;
            let q = &mut self.brq[ch as usize - 1];
            q.push((iid, listen.slot));
            let at = q.len() - 1;
            if let Some(rdys) = self.seen[ch as usize] {
                if !self.drains.iter().any(|d| d.channel == ch) {
                    self.start_drain(ch, rdys, at);
                }
            }
        }
    }

    fn post(&mut self, event: Event) {
        match event.kind {
            EventKind::Targeted { iid, .. } => {
                self.counters.targeted_posted += 1;
                self.pending[(iid & 1) as usize].push_back(event);
            }
            EventKind::Broadcast { .. } => {
                self.counters.broadcasts_posted += 1;
                self.pending_bcast.push_back(event);
            }
        }
    }

    fn ls_enable(&mut self, iid: u8) {
        self.ls_ok |= 1 << iid;
        if self.parked >> iid & 1 == 1 {
            self.parked &= !(1 << iid);
            Self::push(&mut self.lsrdyq, iid);
        }
    }

    fn tick(&mut self) -> TickReport {
        let mut report = TickReport::default();
        self.decode_writes = [0; 2];
        for p in 0..2 {
            if let Some(iid) = self.ready_out[p].take() {
                Self::push(&mut self.isrdyq, iid);
            }
        }
        while let Some(evt) = self.pending_bcast.pop_front() {
            let EventKind::Broadcast { channel, rdys } = evt.kind else { unreachable!() };
            self.seen[channel as usize] = Some(rdys);
            self.start_drain(channel, rdys, 0);
        }

        let mut busy = [false; 2];
        for (p, busy) in busy.iter_mut().enumerate() {
            let Some(evt) = self.pending[p].pop_front() else { continue };
            let EventKind::Targeted { iid, rdys } = evt.kind else { unreachable!() };
            *busy = true;
            report.delivered.push(evt);
            self.counters.targeted_delivered += 1;
            if let Some(r) = self.banks[p].process_event(iid, rdys) {
                self.ready_out[p] = self.became_ready(r);
            }
            if !self.pending[p].is_empty() {
                report.bank_conflicts += 1;
            }
        }
        self.drain(&mut busy, &mut report);

        self.counters.bank_conflict_stalls += report.bank_conflicts as u64;
        if report.broadcast {
            self.counters.broadcast_drain_cycles += 1;
        }
        report
    }

    fn select(&mut self) -> Option<u8> {
        let sel = match self.ready_out {
            [Some(even), Some(odd)] => {
                Self::push(&mut self.isrdyq, odd);
                Some(even)
            }
            [Some(i), None] | [None, Some(i)] => Some(i),
            [None, None] => {
                self.isrdyq.pop_front().or_else(|| self.lsrdyq.pop_front()).or_else(|| self.dcrdyq.pop_front())
            }
        };
        self.ready_out = [None; 2];
        if let Some(i) = sel {
            assert!(self.issued >> i & 1 == 0, "iid {i} selected twice");
            self.issued |= 1 << i;
        }
        sel
    }

    fn is_idle(&self) -> bool {
        self.pending.iter().all(VecDeque::is_empty)
            && self.pending_bcast.is_empty()
            && self.drains.is_empty()
            && self.ready_out == [None; 2]
            && self.dcrdyq.is_empty()
            && self.isrdyq.is_empty()
            && self.lsrdyq.is_empty()
    }

    fn counters(&self) -> SchedCounters {
        self.counters
    }

    fn dump(&self, entries: usize) -> String {
        let mut s = String::from("IID BANK DV DRDYS AV ARDYS\n");
        for iid in 0..entries.min(32) as u8 {
            let e = self.entry(iid);
            let _ = writeln!(
                s,
                "{iid:>3}    {}  {} {:04b}   {}  {:04b}",
                iid & 1,
                e.dv as u8,
                e.drdys.bits(),
                e.av as u8,
                e.ardys.bits()
            );
        }
        let _ = writeln!(s, "DCRDYQ {:?}", self.dcrdyq());
        let _ = writeln!(s, "ISRDYQ {:?}", self.isrdyq());
        let _ = writeln!(s, "LSRDYQ {:?}", self.lsrdyq());
        for ch in 1..=3u8 {
            let ids: Vec<u8> = self.brq(ch).iter().map(|&(i, _)| i).collect();
            let _ = writeln!(s, "BR{ch}Q {ids:?}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::BroadcastInput;

    fn plain(drdys: u8) -> DecodedEntry {
        DecodedEntry { drdys: RdyVec::new(drdys), listen: None, memory: false }
    }

    fn listener(drdys: u8, ch: u8) -> DecodedEntry {
        DecodedEntry {
            drdys: RdyVec::new(drdys),
            listen: Some(BroadcastInput { channel: ch, slot: ListenSlot::Pred }),
            memory: false,
        }
    }

    #[test]
    fn bank_event_sequence() {
        let mut b = SchedulerBank::new(0);
        b.decode_write(2, RdyVec::new(0b1100));
        assert_eq!(b.process_event(2, RdyVec::R1), None);
        assert_eq!(b.entry(2).ardys.bits(), 0b1101);
        assert_eq!(b.process_event(2, RdyVec::R0), Some(2));
        assert_eq!(b.entry(2).ardys.bits(), 0b1111);
    }

    #[test]
    fn event_to_undecoded_entry() {
        let mut b = SchedulerBank::new(1);
        assert_eq!(b.process_event(5, RdyVec::R0), None);
        let e = b.entry(5);
        assert_eq!((e.ardys, e.av, e.dv), (RdyVec::R0, true, false));
        // decode afterwards completes it
        assert!(b.decode_write(5, RdyVec::new(0b1101)));
    }

    #[test]
    fn decode_primes_queues() {
        let mut s = IncrementalScheduler::new();
        s.decode(0, plain(0b1111));
        s.decode(1, plain(0b1111));
        assert_eq!(s.dcrdyq(), vec![0, 1]);
        s.tick();
        s.decode(2, plain(0b1100));
        assert_eq!(s.dcrdyq(), vec![0, 1]);
        s.decode(3, plain(0b1101));
        s.tick();
        s.decode(4, listener(0b0111, 1));
        assert_eq!(s.brq(1), &[(4, ListenSlot::Pred)]);
    }

    #[test]
    fn both_banks_ready_even_wins() {
        let mut s = IncrementalScheduler::new();
        s.decode(2, plain(0b1101));
        s.decode(5, plain(0b1110));
        s.post(Event::targeted(2, RdyVec::R0, Stage::IsForward));
        s.post(Event::targeted(5, RdyVec::R1, Stage::IsForward));
        s.tick();
        assert_eq!(s.select(), Some(2));
        assert_eq!(s.isrdyq(), vec![5]);
        s.tick();
        assert_eq!(s.select(), Some(5));
    }

    #[test]
    fn empty_select_is_none() {
        let mut s = IncrementalScheduler::new();
        s.tick();
        assert_eq!(s.select(), None);
        assert!(s.is_idle());
    }

    #[test]
    fn priority_isrdyq_lsrdyq_dcrdyq() {
        let mut s = IncrementalScheduler::new();
        s.decode(0, plain(0b1111));
        s.decode(3, DecodedEntry { drdys: RdyVec::new(0b1101), listen: None, memory: true });
        s.ls_enable(3);
        s.post(Event::targeted(3, RdyVec::R0, Stage::IsForward));
        s.isrdyq.push_back(9);
        s.tick();
        assert_eq!(s.lsrdyq(), vec![3]);
        assert_eq!(s.select(), Some(9));
        s.tick();
        assert_eq!(s.select(), Some(3));
        s.tick();
        assert_eq!(s.select(), Some(0));
    }

    #[test]
    fn same_bank_conflict_is_deferred_not_lost() {
        let mut s = IncrementalScheduler::new();
        s.decode(2, plain(0b1101));
        s.decode(3, plain(0b1101));
        s.tick();
        s.decode(4, plain(0b1101));
        s.post(Event::targeted(2, RdyVec::R0, Stage::IsForward));
        s.post(Event::targeted(4, RdyVec::R0, Stage::IsForward));
        let r = s.tick();
        assert_eq!(r.bank_conflicts, 1);
        assert_eq!(s.select(), Some(2));
        let r = s.tick();
        assert_eq!(r.bank_conflicts, 0);
        assert_eq!(s.select(), Some(4));
        let c = s.counters();
        assert_eq!(c.targeted_posted, c.targeted_delivered);
    }

    #[test]
    fn drain_rate_depends_on_parity() {
        let mut s = IncrementalScheduler::new();
        for (k, iid) in [0u8, 2, 4, 6].into_iter().enumerate() {
            if k > 0 {
                s.tick();
            }
            s.decode(iid, listener(0b0111, 2));
        }
        s.post(Event::broadcast(2, RdyVec::RT, Stage::Ex));
        let mut cycles = 0;
        let mut woken = vec![];
        loop {
            let r = s.tick();
            if !r.broadcast {
                break;
            }
            cycles += 1;
            woken.extend(s.select());
        }
        assert_eq!(cycles, 4);
        assert_eq!(woken, vec![0, 2, 4, 6]);
    }

    #[test]
    fn refresh_reprimes_and_discards_drains() {
        let mut s = IncrementalScheduler::new();
        s.decode(0, plain(0b1111));
        s.decode(1, listener(0b0111, 1));
        s.tick();
        s.decode(2, listener(0b1011, 1));
        s.post(Event::broadcast(1, RdyVec::RT, Stage::Ex));
        s.tick();
        s.refresh();
        assert_eq!(s.dcrdyq(), vec![0]);
        assert!(!s.entry(1).av);
        assert!(s.entry(1).dv);
        assert_eq!(s.brq(1).len(), 2);
        s.tick();
        assert_eq!(s.select(), Some(0));
        s.tick();
        assert_eq!(s.select(), None);
        assert!(s.is_idle());
    }

    #[test]
    fn reset_clears_everything() {
        let mut s = IncrementalScheduler::new();
        s.decode(0, plain(0b1111));
        s.decode(1, listener(0b0111, 3));
        s.reset();
        assert!(s.dcrdyq().is_empty());
        assert!(s.brq(3).is_empty());
        s.tick();
        assert_eq!(s.select(), None);
    }
}
