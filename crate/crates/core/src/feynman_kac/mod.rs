//! Two-point function machinery: pair-chain rates, the truncated-generator
//! oracle and weighted-walk estimators.

pub mod chain;
pub mod fk3;
pub mod gamma;
pub mod ode;
pub mod one_point;
pub mod oracle;
pub mod pair_chain;
pub mod relative_motion;

pub use fk3::{fk3_estimate, fk3_limit, initial_differences, path_sampler, Estimate, Fk3Estimator, Fk3Options, LimitEstimate, PathSampler, PATH_SAMPLERS};
pub use gamma::{gamma_rates, GammaTable, PairMove};
pub use pair_chain::{pair_chain_estimate, sample_pair_difference, PairChain};
pub use one_point::{one_point, one_point_table, OnePointSolution};
pub use oracle::{oracle_two_point, oracle_two_point_with, OracleSolution};
pub use relative_motion::{chi_squared_two_sample, relative_motion_check, relative_motion_check_with, TwoSampleReport};
