//! Power-flow models for networks of Π-circuit lines with terminal shunts.
//!
//! - [`network`]: buses, lines, orientation and graph structure.
//! - [`bim`]: bus injection model and Newton power flow.
//! - [`bfm`]: magnitude-only branch flow points and their equations.
//! - [`equivalence`]: maps between phasor and branch flow points.
//! - [`opf`]: optimal power flow, its conic relaxation and exactness checks.
//! - [`lindistflow`]: linearized radial power flow and error diagnostics.
//! - [`case_io`]: case files, solution documents and CSV tables.

// `!(x <= tol)` is used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bfm;
pub mod bim;
pub mod case_io;
pub mod cases;
pub mod equivalence;
pub mod lindistflow;
pub mod network;
pub mod opf;

pub use network::{Bus, BusId, ComplexValue, End, LineParams, Network, NetworkError};
