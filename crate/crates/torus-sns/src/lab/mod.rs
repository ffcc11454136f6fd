//! Numerical verification lab: brute-force lattice checks of the trilinear
//! and series estimates, quadrature checks of the mild-formulation weight
//! bound, Monte Carlo probes of stopping-time and sup-norm tails, and
//! gradient estimators for the regularized transition semigroup.
//!
//! ```
//! use torus_sns::lab::{trilinear_check, series1, weight_bound_check};
//!
//! // the |k| <= 1 shell of the integer lattice has exactly 6 points
//! assert_eq!(series1(0.0, 1), 6.0);
//!
//! // randomized trilinear-form ratio at an admissible exponent triple
//! let report = trilinear_check(1.0, 1.0, -0.5, 25, 2, 42).unwrap();
//! assert!(report.admissible);
//! assert!(report.empirical_constant.is_finite());
//!
//! // the singular-convolution bound for the algebraic weight, by quadrature
//! let t_grid: Vec<f64> = (1..=50).map(|i| i as f64 * 0.1).collect();
//! let report = weight_bound_check(0.4, 0.6, 1.0, 1.0, &t_grid).unwrap();
//! assert!(report.pass);
//! ```

pub mod bel;
pub mod blowup;
pub mod functionals;
pub mod inequalities;
pub mod semigroup;
pub mod weight;

pub use bel::{bel_gradient, crn_central_difference, BelEstimate};
pub use blowup::{blowup_mc, BlowupParams, BlowupResult};
pub use functionals::TestFunctional;
pub use inequalities::{
    series1, series1_bound_ratio, series2, series2_constraint_holds, smoothing_delta,
    trilinear_check, DeltaBound, InequalityReport,
};
pub use semigroup::{feller_modulus, transition_estimate, ModulusRow, SemigroupEstimate};
pub use weight::{weight_bound_check, WeightBoundReport};
