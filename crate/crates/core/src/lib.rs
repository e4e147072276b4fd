//! Simulation of photonics-assisted analog self-interference cancellation
//! for in-band full-duplex links.
//!
//! The crate models the transmit waveform, the multipath self-interference
//! channel, a dual-parallel Mach-Zehnder modulator front end with optical
//! downconversion to an intermediate frequency, and the three reference
//! construction strategies: exhaustive segmented delay search, genetic
//! search over tap parameters, and least-squares channel estimation.

pub mod channel;
pub mod delay;
pub mod dsp;
pub mod error;
pub mod ga;
pub mod io;
pub mod ls;
pub mod metrics;
pub mod photonic;
pub mod pipeline;
pub mod signal;

pub use error::{Result, SicError};
pub use signal::{ComplexBaseband, OfdmConfig, RealSignal, SoiConfig};
