//! Ready-state algebra, the event vocabulary, and the contract both
//! dataflow schedulers implement.

pub mod incremental;
pub mod parallel;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::isa::BroadcastInput;

pub use incremental::IncrementalScheduler;
pub use parallel::{select_lowest, ParallelScheduler};

/// Four ready bits, MSB to LSB `[RT, RF, R0, R1]`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RdyVec(u8);

impl RdyVec {
    pub const NONE: RdyVec = RdyVec(0b0000);
    pub const RT: RdyVec = RdyVec(0b1000);
    pub const RF: RdyVec = RdyVec(0b0100);
    pub const R0: RdyVec = RdyVec(0b0010);
    pub const R1: RdyVec = RdyVec(0b0001);
    pub const ALL: RdyVec = RdyVec(0b1111);

    pub fn new(bits: u8) -> RdyVec {
        RdyVec(bits & 0xf)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, other: RdyVec) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn without(self, other: RdyVec) -> RdyVec {
        RdyVec(self.0 & !other.0)
    }

    pub fn is_all(self) -> bool {
        self == RdyVec::ALL
    }

    pub fn is_predicate(self) -> bool {
        self.0 & 0b1100 != 0
    }

    pub fn is_single(self) -> bool {
        self.0.count_ones() == 1
    }
}

impl std::ops::BitOr for RdyVec {
    type Output = RdyVec;
    fn bitor(self, rhs: RdyVec) -> RdyVec {
        RdyVec(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for RdyVec {
    fn bitor_assign(&mut self, rhs: RdyVec) {
        self.0 |= rhs.0;
    }
}

impl std::ops::BitAnd for RdyVec {
    type Output = RdyVec;
    fn bitand(self, rhs: RdyVec) -> RdyVec {
        RdyVec(self.0 & rhs.0)
    }
}

impl fmt::Debug for RdyVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "'b{:04b}", self.0)
    }
}

impl fmt::Display for RdyVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One scheduler bank entry's ready logic: combine the decoded state, the
/// accumulated active state and an incoming event.
///
/// Returns the next active state and whether all four bits are set.
pub fn merge_ready(dv: bool, drdys: RdyVec, av: bool, ardys: RdyVec, evt: RdyVec) -> (RdyVec, bool) {
    let next = (if dv { drdys } else { RdyVec::NONE }) | (if av { ardys } else { RdyVec::NONE }) | evt;
    (next, next.is_all())
}

/// Pipeline stage an event was generated in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    IsForward,
    Ex,
    Ls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Targeted { iid: u8, rdys: RdyVec },
    Broadcast { channel: u8, rdys: RdyVec },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub origin: Stage,
}

impl Event {
    pub fn targeted(iid: u8, rdys: RdyVec, origin: Stage) -> Event {
        debug_assert!(rdys.is_single());
        Event { kind: EventKind::Targeted { iid, rdys }, origin }
    }

    pub fn broadcast(channel: u8, rdys: RdyVec, origin: Stage) -> Event {
        debug_assert!(rdys.is_single() && (1..=3).contains(&channel));
        Event { kind: EventKind::Broadcast { channel, rdys }, origin }
    }

    pub fn rdys(&self) -> RdyVec {
        match self.kind {
            EventKind::Targeted { rdys, .. } | EventKind::Broadcast { rdys, .. } => rdys,
        }
    }
}

/// What the decoder hands the scheduler for one instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodedEntry {
    pub drdys: RdyVec,
    pub listen: Option<BroadcastInput>,
    /// Memory instructions only issue once the LSQ enables them.
    pub memory: bool,
}

impl DecodedEntry {
    pub fn dbid(&self) -> u8 {
        self.listen.map_or(0, |b| b.channel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Parallel,
    Incremental,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Parallel => "parallel",
            SchedulerKind::Incremental => "incremental",
        }
    }

    pub fn build(self) -> Box<dyn Scheduler> {
        match self {
            SchedulerKind::Parallel => Box::new(ParallelScheduler::new()),
            SchedulerKind::Incremental => Box::new(IncrementalScheduler::new()),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What happened inside the scheduler at the start of one cycle.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TickReport {
    /// Events applied to ready state this cycle, including broadcast drain
    /// events for the incremental scheduler.
    pub delivered: Vec<Event>,
    /// Banks that had to defer an event because another one used the port.
    pub bank_conflicts: u32,
    /// Whether broadcast wakeup work was done this cycle.
    pub broadcast: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedCounters {
    pub targeted_posted: u64,
    pub targeted_delivered: u64,
    pub broadcasts_posted: u64,
    pub listener_deliveries: u64,
    pub bank_conflict_stalls: u64,
    pub broadcast_drain_cycles: u64,
}

/// Contract shared by both dataflow schedulers.
///
/// One cycle is: [`tick`](Scheduler::tick) (take in events posted during the
/// previous cycle and update ready state), then [`select`](Scheduler::select),
/// then any number of [`post`](Scheduler::post) / [`decode`](Scheduler::decode)
/// / [`ls_enable`](Scheduler::ls_enable) calls that become visible at the
/// next tick.
pub trait Scheduler: Send {
    fn kind(&self) -> SchedulerKind;

    /// Branch to a new block: clear decoded and active state.
    fn reset(&mut self);

    /// Branch back to the same block: clear active state only.
    fn refresh(&mut self);

    fn decode(&mut self, iid: u8, entry: DecodedEntry);

    fn post(&mut self, event: Event);

    /// The LSQ allows memory instruction `iid` to issue.
    fn ls_enable(&mut self, iid: u8);

    fn tick(&mut self) -> TickReport;

    /// Choose at most one instruction to issue this cycle. An iid is never
    /// returned twice between resets/refreshes.
    fn select(&mut self) -> Option<u8>;

    /// No pending events, no broadcast work, nothing left to select.
    fn is_idle(&self) -> bool;

    fn counters(&self) -> SchedCounters;

    /// Human-readable state table for debugging and golden tests.
    fn dump(&self, entries: usize) -> String;
}
