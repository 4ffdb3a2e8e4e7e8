pub mod compiler;
pub mod dsp;
pub mod host;
pub mod ios;
pub mod isa;
pub mod memory;
pub mod metrics;
pub mod sched;
pub mod vm;
