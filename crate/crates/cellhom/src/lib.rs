//! Effective energy densities of periodic media with constrained integrands.
//!
//! The crate computes, at desk scale, the objects that describe how a
//! rapidly oscillating stored-energy density `W(x/eps, grad u)` averages out:
//!
//! * discretized cell problems `S_xi(kY)` over zero-boundary P1 fields on
//!   scaled unit cubes, and the resulting effective density estimate
//!   ([`homogenize`]);
//! * the unit-cell relaxation operator `Z` with its exact Vitali
//!   energy-transfer construction ([`relaxation`]);
//! * the radial calculus for densities that blow up at the boundary of a
//!   convex constraint set: the modulus `Delta`, radial-limit probes and the
//!   hat (radial liminf) operator together with a brute-force
//!   lower-semicontinuous-envelope oracle ([`ruusc`]);
//! * a concrete 2x2 hyperelastic-style density with a determinant
//!   constraint, plus its automated property suite ([`hyper2d`]);
//! * recovery-sequence experiments that probe the limsup inequality of the
//!   homogenization limit on box domains ([`gamma`]).
//!
//! Densities are extended-real valued ([`ExtReal`]): infinity is a value, not
//! an error, and every minimizer treats it as an intrinsic barrier.

pub mod density;
pub mod extreal;
pub mod gallery;
pub mod gamma;
pub mod homogenize;
pub mod hyper2d;
pub mod matrix;
pub mod mesh;
pub mod optimize;
pub mod relaxation;
pub mod ruusc;

pub use density::{
    classify_point, growth_audit, ConstraintSet, ConvexGauge, EnergyDensity, GrowthAuditReport,
    Integrand, MatrixFn, PeriodicWeight, PointClass, SampleSpec,
};
pub use extreal::ExtReal;
pub use matrix::Matrix;
