//! Cycle-level model of a compact out-of-order EDGE core.

pub mod assembler;
pub mod binfile;
pub mod gen;
pub mod isa;
pub mod metrics;
pub mod pipeline;
pub mod refinterp;
pub mod sched;
