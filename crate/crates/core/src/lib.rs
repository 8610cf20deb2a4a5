//! Spherical-harmonic-domain multi-output MVDR enhancement for spherical
//! microphone arrays, with a beamforming-and-projection baseline, a room
//! simulator and sound-field evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod enhancer;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod scene;
pub mod signals;
pub mod specfun;
pub mod transforms;
