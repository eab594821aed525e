//! OTFS radar simulation.
//!
//! Random OTFS frames are sent through an integer-tap delay-Doppler channel,
//! target range and velocity are recovered with a matched filter, and the
//! results are compared against a conventional OFDM periodogram radar.
//!
//! * [`grid`]: system parameters, resolutions, target/tap conversion
//! * [`modem`]: frames, (I)SFFT, Heisenberg/Wigner, both channel paths
//! * [`estimator`]: dictionary, matched filters, gain matrix, detection
//! * [`ofdm`]: the OFDM radar baseline
//! * [`metrics`]: profiles, PSLR, image SNR, RMSE sweeps, frame durations
//! * [`trial`]: one seeded Monte-Carlo trial of either radar
//! * [`experiment`]: seeded Monte-Carlo campaigns and their output files
//! * [`plot`]: SVG line charts

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod grid;
pub mod metrics;
pub mod modem;
pub mod ofdm;
pub mod plot;
pub mod trial;

pub use error::{Error, Result};
