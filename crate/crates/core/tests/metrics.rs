mod common;

use common::{broadcast_block, chain_block, regs};
use edgesim_core::metrics::{compare, cost_report, cost_table, CycleStats};
use edgesim_core::pipeline::{run_block, CoreConfig};
use edgesim_core::sched::SchedulerKind::{Incremental, Parallel};

#[test]
fn baseline_costs() {
    let p = cost_report(Parallel, 32, 2).unwrap();
    let i = cost_report(Incremental, 32, 2).unwrap();
    assert_eq!((p.area_core_luts, p.area_total_luts), (288, Some(340)));
    assert_eq!((i.area_core_luts, i.area_total_luts), (78, Some(150)));
    assert_eq!((p.period_ns, p.period_pipelined_ns), (Some(5.0), Some(2.9)));
    assert_eq!((i.period_ns, i.period_pipelined_ns), (Some(4.3), Some(2.5)));
    assert_eq!(p.area_period_product, Some(1700.0));
    assert_eq!(i.area_period_product, Some(645.0));
}

#[test]
fn scaled_configurations_report_core_area_only() {
    for (kind, entries, events, luts) in
        [(Parallel, 32, 4, 288), (Incremental, 32, 4, 156), (Parallel, 64, 2, 576), (Incremental, 64, 2, 130)]
    {
        let c = cost_report(kind, entries, events).unwrap();
        assert_eq!(c.area_core_luts, luts);
        assert_eq!(c.area_total_luts, None);
        assert_eq!(c.period_ns, None);
    }
    assert!(cost_report(Parallel, 16, 2).is_err());
    assert!(cost_report(Incremental, 32, 3).is_err());
}

#[test]
fn cost_table_lists_both_schedulers() {
    let t = cost_table();
    for needle in ["288", "78", "340", "150", "5.0", "4.3", "1700", "645", "flash", "iterative"] {
        assert!(t.contains(needle), "{needle} missing:\n{t}");
    }
    let json = serde_json::to_value(cost_report(Incremental, 32, 2).unwrap()).unwrap();
    assert_eq!(json["area_core_luts"], 78);
    assert_eq!(json["kind"], "incremental");
}

#[test]
fn identical_runs_have_zero_deltas() {
    let s = CycleStats { cycles: 40, issues: 20, bank_conflicts: 3, ..Default::default() };
    let c = compare((Parallel, &s), (Parallel, &s));
    assert_eq!((c.cycle_delta, c.bank_conflict_delta, c.broadcast_drain_delta, c.unattributed), (0, 0, 0, 0));
    assert_eq!(c.time_ns_a, 200.0);
}

#[test]
fn chains_take_equal_cycles_on_both_schedulers() {
    let block = chain_block(12);
    let p = run_block(&block, &regs(&[(1, 1)]), CoreConfig::new(Parallel)).unwrap();
    let i = run_block(&block, &regs(&[(1, 1)]), CoreConfig::new(Incremental)).unwrap();
    let c = compare((Parallel, &p.stats), (Incremental, &i.stats));
    assert_eq!(c.cycle_delta, 0, "{c}");
    assert!(c.time_ns_b < c.time_ns_a);
}

#[test]
fn broadcast_draining_bounds_the_slowdown() {
    // eight listeners in one bank drain one per cycle, overlapped with
    // single issue
    let block = broadcast_block(&[2, 4, 6, 8, 10, 12, 14, 16]);
    let arch = regs(&[(1, 9), (2, 4)]);
    let p = run_block(&block, &arch, CoreConfig::new(Parallel)).unwrap();
    let i = run_block(&block, &arch, CoreConfig::new(Incremental)).unwrap();
    assert_eq!(p.result, i.result);
    let c = compare((Parallel, &p.stats), (Incremental, &i.stats));
    assert_eq!(c.broadcast_drain_delta, 7, "{c}");
    assert!(c.cycle_delta >= 0, "{c}");
    assert!(c.cycle_delta <= c.broadcast_drain_delta, "{c}");
}

#[test]
fn stats_accumulate_and_serialize() {
    let a = CycleStats { cycles: 10, issues: 5, blocks: 1, ..Default::default() };
    let mut total = CycleStats::default();
    total.accumulate(&a);
    total.accumulate(&a);
    assert_eq!((total.cycles, total.issues, total.blocks), (20, 10, 2));
    assert_eq!(total.ipc, 0.5);
    let back: CycleStats = serde_json::from_str(&serde_json::to_string(&total).unwrap()).unwrap();
    assert_eq!(back, total);
}
