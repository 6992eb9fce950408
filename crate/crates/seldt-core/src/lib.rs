//! Anechoic ambisonic scene synthesis, frame-wise MUSIC DOA estimation,
//! Rao-Blackwellized data-association particle filtering and evaluation
//! metrics for sound event localization, detection and tracking.

pub mod geometry;
pub mod io;
pub mod scene;
pub mod sources;
pub mod metrics;
pub mod music;
pub mod tracker;
pub mod spectral;
