pub mod distance;
pub mod estimators;
pub mod gibbs;
pub mod histogram;

pub use distance::{
    half_split_sliced_w1, half_split_w1, interleaved_w1, ks_distance, sliced_w1, w1_distance_1d,
    w1_samples_vs_cdf, w2_distance_1d,
};
pub use estimators::{
    bulk_radius, grad_second_moment, invariance_residual, MonteCarloEstimate, SmoothBump,
};
pub use gibbs::{gaussian_approx, gibbs_density, gibbs_sample, GaussianApprox, GibbsDensity};
pub use histogram::{make_histogram, EmpiricalDistribution};
