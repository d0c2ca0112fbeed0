//! Numerical tools for trigonometric approximation of convolution classes on
//! the circle: Fourier multipliers, best approximation in `L_q`, Kolmogorov
//! widths of finite-dimensional balls, and the lower-bound chain that
//! compares trigonometric approximation with optimal widths.

pub mod error;
pub mod fourier;
pub mod ball_widths;
pub mod norms;
pub mod class_approx;
pub mod rates;

pub use error::{Error, Result, SolverDiagnostics};
pub use fourier::{
    analyze, apply_multiplier, apply_multiplier_with, convolution_constant, convolve,
    convolve_poly, synthesize_kernel, ConstantTerm, DecayFamily, GridFunction, MultiplierKernel,
    TrigPoly,
};
pub use norms::{
    best_approx, lp_norm, mz_ratio_stats, mz_sample, poly_lp_norm, BestApproximation,
    DiscretizedPoly, MzStats,
};

pub use ball_widths::{
    ball_width_bruteforce, ball_width_bruteforce_with, coordinate_subspace_bound, phi_gluskin,
    BallWidthInstance, BoundDirection, BruteForceOptions, Exponent, WidthDiagnostics,
    WidthEstimate, WidthMethod,
};
pub use class_approx::{
    en_exact_l2, en_lower_search, lower_bound_pipeline, optimality_gap, projection_constants,
    GapOptions, GapReport, GapRow, GapVerdict, LowerSearch, PipelineReport, ProjectionRecord,
    UpperSource,
};
pub use rates::{
    catalog_entry, en_rate, fit_rate, optimality_verdict, standard_catalog, width_rate,
    CatalogEntry, CatalogRecord, ClassFamily, Optimality, RateFamily, RateFit, RateModel,
    RegimeVerdict,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for independent stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
