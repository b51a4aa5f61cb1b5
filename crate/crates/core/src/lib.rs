//! Grasp generation as conditional flow matching with training-free,
//! physics-aware guidance at sampling time.
//!
//! The crate is organised bottom-up:
//!
//! - [`math`]: small fixed-size vector/matrix helpers.
//! - [`rng`]: named deterministic random streams derived from one global seed.
//! - [`hand`]: a parametric claw hand (free pose + one curl joint per finger)
//!   and its forward kinematics.
//! - [`scene`]: analytic signed-distance primitives and surface point clouds.
//! - [`energy`]: differentiable-by-FD energy fields scoring hand/object states
//!   (penetration, proximity, self-collision).
//! - [`flow`]: the velocity-field MLP, linear probability paths, the flow
//!   matching loss and an Adam training loop.
//! - [`guidance`]: Monte-Carlo energy guidance applied to the velocity field
//!   during integration; no gradients of the energy are required.
//! - [`sampler`]: Euler integration of the (optionally guided) ODE.
//! - [`dataset`]: synthetic grasp labels via multi-start energy descent.
//! - [`metrics`]: evaluation proxies and experiment harnesses (NFE sweep,
//!   guidance ablation, hyperparameter sensitivity).
//!
//! Everything here is `no_std + alloc` compatible; file formats and the CLI
//! live in the companion binary crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod energy;
pub mod error;
pub mod flow;
pub mod guidance;
pub mod hand;
pub mod math;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod scene;

pub use error::{Error, Result};
