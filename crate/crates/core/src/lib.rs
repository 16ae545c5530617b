//! Desk-scale neural machine translation with guided-alignment training,
//! topic-aware decoding, sub-sentence bootstrapping, placeholder handling,
//! ensembling and domain adaptation.

pub mod data;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numeric;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{ParameterStore, Tensor};
