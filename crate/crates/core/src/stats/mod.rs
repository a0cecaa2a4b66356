//! Linear statistics of the zero set, variance oracles, quadrature and
//! Monte Carlo summaries.

pub mod ks;
pub mod linear;
pub mod meanvalue;
pub mod quadrature;
pub mod result;
pub mod testform;
pub mod variance;

pub use ks::{clt_diagnostic, ks_one_sample, ks_two_sample, KsResult, MIN_CLT_SAMPLES};
pub use linear::{
    dphi, expected_statistic, psi_integral, statistic_stokes, statistic_zeros, StokesOptions,
    StokesPlan,
};
pub use meanvalue::{
    epsilon_mean_value, mean_value_inequality_check, mean_value_sides, MeanValueSides,
    MEAN_VALUE_TOL,
};
pub use quadrature::{quadrature, QuadratureOptions, DEFAULT_QUAD_RTOL};
pub use result::{map_trials, ExperimentResult};
pub use testform::{MixedFn, PsiFn, RadialProfile, TestForm};
pub use variance::{
    bipotential_variance, bipotential_variance_with, dphi_energy, predicted_variance,
    zeta_constant, BipotentialOptions, BipotentialRoute,
};
