//! Analysis objects: stochastic-vector sequences, error metrics, contraction
//! constants, the composite error system and its certificate.

pub mod composite;
pub mod constants;
pub mod metrics;
pub mod report;
pub mod sequences;

pub use composite::{
    build_composite, charpoly_radius, composite_relation_check, delta_certificate,
    spectral_radius, steady_state_bound, step_size_bound, step_size_terms, CompositeCheck,
    CompositeSystem, DeltaCertificate, Margin,
};
pub use constants::{constants_update, GlobalBounds, ProblemConstants, StepConstants, TheoryConstants};
pub use metrics::{
    error_components, error_vector, mean_se, tracking_deviation, weighted_average,
    weighted_norm_sq, ErrorEstimate,
};
pub use report::TheoryReport;
pub use sequences::{
    phi_approx, phi_consistency_residual, pi_update, PhiOptions, SampledSequences, Sequences,
    StochVector,
};
