//! Dataset IO, file formats and parallel drivers for neural pixel
//! composition. The numerical core lives in `npc_core`.

pub mod cache;
pub mod checkpoint;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod ply;
pub mod synth;

pub use error::{Error, Result};
