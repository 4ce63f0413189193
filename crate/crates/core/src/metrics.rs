//! Simulation statistics and the published hardware cost figures of the two
//! schedulers.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sched::SchedulerKind;

/// Cycle accounting for one block execution or a whole program.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub cycles: u64,
    pub blocks: u64,
    pub decodes: u64,
    pub issues: u64,
    pub refreshes: u64,
    pub bank_conflicts: u64,
    pub broadcast_drain_cycles: u64,
    /// Targeted ready events generated by the back end.
    pub events_posted: u64,
    /// Targeted ready events applied to scheduler state.
    pub events_delivered: u64,
    pub ipc: f64,
}

impl CycleStats {
    pub fn accumulate(&mut self, other: &CycleStats) {
        self.cycles += other.cycles;
        self.blocks += other.blocks;
        self.decodes += other.decodes;
        self.issues += other.issues;
        self.refreshes += other.refreshes;
        self.bank_conflicts += other.bank_conflicts;
        self.broadcast_drain_cycles += other.broadcast_drain_cycles;
        self.events_posted += other.events_posted;
        self.events_delivered += other.events_delivered;
        self.update_ipc();
    }

    pub fn update_ipc(&mut self) {
        self.ipc = if self.cycles == 0 { 0.0 } else { self.issues as f64 / self.cycles as f64 };
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no published figures for {kind} scheduler with {entries} entries and {events_per_cycle} events/cycle")]
pub struct UnknownConfiguration {
    pub kind: SchedulerKind,
    pub entries: u32,
    pub events_per_cycle: u32,
}

/// Published FPGA cost of one scheduler configuration. Only the baseline
/// configuration (32 entries, 2 events/cycle) has total area and timing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HardwareCost {
    pub kind: SchedulerKind,
    pub entries: u32,
    pub events_per_cycle: u32,
    pub area_core_luts: u32,
    pub area_total_luts: Option<u32>,
    pub period_ns: Option<f64>,
    pub period_pipelined_ns: Option<f64>,
    pub area_period_product: Option<f64>,
    pub broadcast: &'static str,
    pub bank_conflicts: &'static str,
}

pub fn cost_report(
    kind: SchedulerKind,
    entries: u32,
    events_per_cycle: u32,
) -> Result<HardwareCost, UnknownConfiguration> {
    let core = match (kind, entries, events_per_cycle) {
        (SchedulerKind::Parallel, 32, 2) => 288,
        (SchedulerKind::Incremental, 32, 2) => 78,
        (SchedulerKind::Parallel, 32, 4) => 288,
        (SchedulerKind::Incremental, 32, 4) => 156,
        (SchedulerKind::Parallel, 64, 2) => 576,
        (SchedulerKind::Incremental, 64, 2) => 130,
        _ => return Err(UnknownConfiguration { kind, entries, events_per_cycle }),
    };
    let baseline = entries == 32 && events_per_cycle == 2;
    let (total, period, pipelined) = match kind {
        SchedulerKind::Parallel => (340, 5.0, 2.9),
        SchedulerKind::Incremental => (150, 4.3, 2.5),
    };
    let (broadcast, bank_conflicts) = match kind {
        SchedulerKind::Parallel => ("flash", "never"),
        SchedulerKind::Incremental => ("iterative", "sometimes"),
    };
    Ok(HardwareCost {
        kind,
        entries,
        events_per_cycle,
        area_core_luts: core,
        area_total_luts: baseline.then_some(total),
        period_ns: baseline.then_some(period),
        period_pipelined_ns: baseline.then_some(pipelined),
        area_period_product: baseline.then_some(total as f64 * period),
        broadcast,
        bank_conflicts,
    })
}

impl fmt::Display for HardwareCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt<T: fmt::Display>(v: Option<T>) -> String {
            v.map_or_else(|| "-".to_string(), |v| v.to_string())
        }
        writeln!(f, "{} scheduler, {} entries, {} events/cycle", self.kind, self.entries, self.events_per_cycle)?;
        writeln!(f, "  {:<24}{:>8} LUTs", "Area", self.area_core_luts)?;
        writeln!(f, "  {:<24}{:>8} LUTs", "Area, total", opt(self.area_total_luts))?;
        writeln!(f, "  {:<24}{:>8} ns", "Period", opt(self.period_ns.map(|p| format!("{p:.1}"))))?;
        writeln!(f, "  {:<24}{:>8} ns", "Period, pipelined", opt(self.period_pipelined_ns.map(|p| format!("{p:.1}"))))?;
        writeln!(
            f,
            "  {:<24}{:>8} LUT*ns",
            "Area, total * period",
            opt(self.area_period_product.map(|p| format!("{p:.0}")))
        )?;
        writeln!(f, "  {:<24}{:>8}", "Broadcast", self.broadcast)?;
        write!(f, "  {:<24}{:>8}", "Event bank conflicts?", self.bank_conflicts)
    }
}

/// Side-by-side table of both schedulers in their baseline configuration
/// plus the scaled variants.
pub fn cost_table() -> String {
    let p = cost_report(SchedulerKind::Parallel, 32, 2).unwrap();
    let i = cost_report(SchedulerKind::Incremental, 32, 2).unwrap();
    let p4 = cost_report(SchedulerKind::Parallel, 32, 4).unwrap();
    let i4 = cost_report(SchedulerKind::Incremental, 32, 4).unwrap();
    let p64 = cost_report(SchedulerKind::Parallel, 64, 2).unwrap();
    let i64 = cost_report(SchedulerKind::Incremental, 64, 2).unwrap();
    let mut s = String::new();
    let mut row = |name: &str, a: String, b: String, unit: &str| {
        let _ = writeln!(s, "{name:<24}{a:>10}{b:>13}  {unit}");
    };
    row("Metric", "Parallel".into(), "Incremental".into(), "Units");
    row("Area, 32 entries", p.area_core_luts.to_string(), i.area_core_luts.to_string(), "LUTs");
    row(
        "Area, total, 32 entries",
        p.area_total_luts.unwrap().to_string(),
        i.area_total_luts.unwrap().to_string(),
        "LUTs",
    );
    row("Period", format!("{:.1}", p.period_ns.unwrap()), format!("{:.1}", i.period_ns.unwrap()), "ns");
    row(
        "Period, pipelined",
        format!("{:.1}", p.period_pipelined_ns.unwrap()),
        format!("{:.1}", i.period_pipelined_ns.unwrap()),
        "ns",
    );
    row(
        "Area, total * period",
        format!("{:.0}", p.area_period_product.unwrap()),
        format!("{:.0}", i.area_period_product.unwrap()),
        "LUT*ns",
    );
    row("Broadcast", p.broadcast.into(), i.broadcast.into(), "");
    row("Event bank conflicts?", p.bank_conflicts.into(), i.bank_conflicts.into(), "");
    row("Area, 4 events/cycle", p4.area_core_luts.to_string(), i4.area_core_luts.to_string(), "LUTs");
    row("Area, 64 entries", p64.area_core_luts.to_string(), i64.area_core_luts.to_string(), "LUTs");
    s
}

/// Two runs of the same program on different schedulers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub a: SchedulerKind,
    pub b: SchedulerKind,
    /// `b.cycles - a.cycles`.
    pub cycle_delta: i64,
    pub bank_conflict_delta: i64,
    pub broadcast_drain_delta: i64,
    /// Cycle delta not explained by bank conflicts or broadcast draining.
    pub unattributed: i64,
    /// Execution time in ns at each configuration's clock period.
    pub time_ns_a: f64,
    pub time_ns_b: f64,
}

pub fn compare(a: (SchedulerKind, &CycleStats), b: (SchedulerKind, &CycleStats)) -> Comparison {
    let d = |x: u64, y: u64| y as i64 - x as i64;
    let cycle_delta = d(a.1.cycles, b.1.cycles);
    let bank_conflict_delta = d(a.1.bank_conflicts, b.1.bank_conflicts);
    let broadcast_drain_delta = d(a.1.broadcast_drain_cycles, b.1.broadcast_drain_cycles);
    let period = |k| cost_report(k, 32, 2).unwrap().period_ns.unwrap();
    Comparison {
        a: a.0,
        b: b.0,
        cycle_delta,
        bank_conflict_delta,
        broadcast_drain_delta,
        unattributed: cycle_delta - bank_conflict_delta - broadcast_drain_delta,
        time_ns_a: a.1.cycles as f64 * period(a.0),
        time_ns_b: b.1.cycles as f64 * period(b.0),
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} -> {}: {:+} cycles", self.a, self.b, self.cycle_delta)?;
        writeln!(f, "  bank conflict stalls   {:+}", self.bank_conflict_delta)?;
        writeln!(f, "  broadcast drain cycles {:+}", self.broadcast_drain_delta)?;
        writeln!(f, "  unattributed           {:+}", self.unattributed)?;
        write!(f, "  time {:.1} ns vs {:.1} ns", self.time_ns_a, self.time_ns_b)
    }
}
