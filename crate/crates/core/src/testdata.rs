//! Shared fixtures for unit tests.

use crate::series::TimeSeries;

/// 16-point IOPS monitoring sample with an isolated drop at 1-based index 13.
pub fn iops_values() -> Vec<f64> {
    vec![
        25.5, 24.0, 21.0, 26.0, 21.0, 18.5, 14.5, 13.0, 18.5, 17.5, 22.5, 21.5, 7.0, 20.0, 19.5,
        26.0,
    ]
}

pub fn iops_series() -> TimeSeries {
    TimeSeries::new(iops_values()).unwrap()
}
