//! Software model of a staged-dataflow FPGA advection kernel.
//!
//! The crate has two halves. The functional half runs the advection stencil
//! through seven kernel designs (from a monolithic loop nest up to a
//! four-stage dataflow pipeline with 256-bit memory ports and replicated
//! streams) and checks each against a naive reference. The timing half prices
//! the memory and compute events each design emits with a cycle-approximate
//! discrete-event simulation, including DRAM contention between kernels and
//! chunked host transfers overlapped with compute.

pub mod advection;
pub mod dma;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod profiler;
pub mod report;
pub mod scalar;
pub mod timing;

pub use error::{Error, Result};
pub use scalar::{Counted, Scalar};

/// Double-precision field, the production storage type.
pub type Field3D = grid::Field3<f64>;
/// Double-precision source terms.
pub type SourceTerms = advection::SourceTerms<f64>;
/// Double-precision stencil neighborhood.
pub type StencilPatch = advection::StencilPatch<f64>;
