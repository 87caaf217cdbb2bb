//! Cycle-accurate model of a pipelined NTT accelerator built from
//! shift-register memories, with exact-arithmetic reference transforms.

pub mod mac;
pub mod memsim;
pub mod modmath;
pub mod phaseclk;
pub mod pipesim;
pub mod reference;
pub mod report;
pub mod scale;

pub use modmath::{IndexOrder, ModError, ModulusContext, Polynomial};
pub use pipesim::{run_pipeline, PipeError, PipelineConfig, PipelineRun};
pub use report::{Clock, CostReport};
