//! Statistics: running moments, Gaussian references, test batteries, checks.

pub mod battery;
pub mod checks;
pub mod gaussian;
pub mod moments;

pub use battery::{default_battery, CltProbe, TestFunction};
pub use checks::*;
pub use gaussian::{clipped_second_moment, gaussian_expectation, upper_tail};
pub use moments::RunningStats;
