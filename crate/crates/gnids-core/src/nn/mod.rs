//! Minimal dense-tensor numeric core with reverse-mode differentiation.
//!
//! Everything runs on 64-bit floats. A [`tape::Tape`] records forward
//! operations; [`tape::Tape::backward`] produces exact reverse-mode
//! gradients. [`gradcheck::grad_check`] verifies them against central
//! finite differences, and [`adam::adam_step`] applies parameter updates.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{dense, gru_cell, Activation, GruIds};
pub use params::{ParameterStore, Param};
pub use tape::{softmax_row, Tape, ValueId};
pub use tensor::Tensor;
