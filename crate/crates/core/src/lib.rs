//! Diffusion models driven by the Ornstein-Uhlenbeck process.
//!
//! The forward process `dX = -X dt + sqrt(2) dB` is simulated exactly on a
//! discrete grid ([`schedule`], [`forward`]); a small MLP ([`nn`]) is trained
//! to predict the noise that produced a diffused point ([`trainer`]); new
//! samples come from ancestral sampling of the exact Gaussian reverse
//! posterior ([`posterior`], [`sampler`]).

pub mod data;
pub mod error;
pub mod forward;
pub mod model;
pub mod nn;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{Denoiser, NoiseModel};
pub use schedule::{NoiseSchedule, ScheduleParams};
