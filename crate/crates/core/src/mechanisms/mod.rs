//! Mechanism builders.

pub mod ba;
pub mod coin;
pub mod exponential;
pub mod lambert;
pub mod samplers;

pub use ba::{ba_iterate, build_ba, tune_ba_b, BaOptions, BaOutcome, BaParams};
pub use coin::{build_coin, optimal_constant_output, CoinParams};
pub use exponential::build_exponential;
pub use lambert::lambert_w_m1;
pub use samplers::{
    discretize, laplace_density, sample_circular, sample_gaussian, sample_laplace, truncate, truncate_discrete, PlanarGaussian,
    PlanarLaplace, SamplerParams, Truncated, UniformDisk, ZeroNoise,
};
