//! Multidimensional torus (EBK) quantization through second order in ħ.
//!
//! The crate is layered bottom-up: [`field`] holds phase-space points and
//! differentiable scalar fields, [`diagram`] evaluates J-contracted derivative
//! networks, [`normal_form`] reduces commuting quadratic Hamiltonians,
//! [`chart`] builds action-angle coordinates for central-force and 1D models,
//! [`quantizer`] assembles the second-order eigenvalue formula and
//! [`oracle`] supplies numerically exact reference spectra.

pub mod chart;
pub mod diagram;
pub mod field;
pub mod normal_form;
pub mod oracle;
pub mod quantizer;
pub mod registry;

pub use registry::{Registry, UnknownStrategy};
