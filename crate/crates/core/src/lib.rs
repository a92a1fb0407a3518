//! Discrete-event model of two storage access paths for GPU workloads.
//!
//! The *baseline* path routes every request through the host CPU: system
//! call, file-system translation, driver, bounce buffer and a host-to-GPU
//! copy. The *erudite* path lets GPU threads write NVMe commands straight into
//! queue pairs in HBM; a controller checks permissions against a small
//! extent-based file table and forwards commands to an SSD array.
//!
//! Closed-form models in [`analytic`] serve as oracles for the simulator.

pub mod analytic;
pub mod baseline;
pub mod device;
pub mod erudite;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod run;
pub mod scenario;
pub mod storage;
pub mod units;
pub mod workload;
