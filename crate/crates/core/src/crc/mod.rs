//! Complex-valued reservoir computing.
//!
//! A reservoir is a large recurrent layer with fixed sparse random weights.
//! Its state follows the leaky update
//!
//! ```text
//! h' = (1 - γ) ⊙ h + γ ⊙ tanh(w_in u + w_rc h + b)
//! ```
//!
//! where `tanh` acts on the amplitude only and keeps the phase. With complex
//! leak factors `γ` whose phase stays below `arccos(|γ|/2)` each neuron's
//! leak term is still a contraction (`|1 - γ| < 1`) but rotates, so the free
//! response can oscillate instead of decaying. Real mode restricts every
//! quantity to the real line and recovers a standard leaky echo-state network.

mod reservoir;
mod sparse;
mod spectrum;

pub use reservoir::{
    complex_tanh, init_reservoir, phase_upper_bound, readout_real, InputScaling, ReservoirConfig,
    ReservoirMode, ReservoirParams, ReservoirState, PHASE_BOUND_AT_ZERO,
};
pub use sparse::{spectral_radius, spectral_radius_with, CsrMatrix, PowerIterationOptions};
pub use spectrum::{amplitude_spectrum, free_response_spectrum, FreeResponse};
