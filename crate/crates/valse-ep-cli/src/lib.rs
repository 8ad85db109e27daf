//! Monte Carlo harness for quantized line spectral estimation: scenario
//! generation, trial execution, metric aggregation and file I/O.

pub mod experiment;
pub mod metrics;
pub mod samples;
pub mod scenario;
