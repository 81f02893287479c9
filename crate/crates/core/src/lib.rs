//! Neural pixel composition core.
//!
//! Every pixel of a target view is described by an array of candidate
//! samples (color, depth, uncertainty) gathered from posed source views,
//! plus positional encodings of the pixel and camera. A small perceptron
//! turns that array into blending weights and a color correction; the output
//! color is the weighted sum of the candidate colors plus the correction.
//!
//! This crate is `no_std` (it needs `alloc`) and contains no IO. File
//! formats, datasets, parallel drivers and the command line live in the
//! `npc` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod camera;
pub mod composition;
pub mod descriptor;
pub mod error;
pub mod image;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod reconstruction;
pub mod render;
pub mod stereo;
pub mod synth;
pub mod train;

mod math;

/// Sample-array lengths up to this use stack scratch space in hot loops.
pub(crate) const MAX_STACK_N: usize = 64;

pub use camera::{Camera, PixelCoord, Vec3};
pub use error::{Error, Result};
pub use image::{DepthMap, DepthSource, Image, UncertaintyMap, ViewRecord};
pub use model::{AblationFlags, CompositionConfig, MlpModel};
