//! Aliasing-free neural vocoder: a generator that predicts complex STFT
//! coefficients from a harmonic prior and mel features, toy discriminators,
//! hinge/feature-matching/mel losses and a deterministic training loop.

pub mod config;
pub mod disc;
pub mod generator;
pub mod loss;
pub mod maps;
pub mod stats;
pub mod train;

pub use config::GeneratorConfig;
pub use disc::DiscriminatorBank;
pub use generator::Generator;
