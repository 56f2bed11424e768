pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod dmf;
pub mod graph;
pub mod metrics;
pub mod numcore;
pub mod rlagent;
pub mod synth;
pub mod trainer;

#[cfg(test)]
mod testutil;
