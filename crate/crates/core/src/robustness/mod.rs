//! Wasserstein distance, ambiguity-set membership and out-of-sample radii.

mod radius;
mod wasserstein;

pub use radius::{
    k4_threshold, radius, radius_compact, radius_infinite_horizon, radius_light_tail, radius_sensitivity,
    solve_log_boundary, RadiusParams, RadiusRegime,
};
pub use wasserstein::{
    assignment_exhaustive, assignment_hungarian, in_ambiguity_set, matching_distance, transport_cost, wasserstein2,
    EXHAUSTIVE_MAX,
};
