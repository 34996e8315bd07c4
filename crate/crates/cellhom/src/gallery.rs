//! Named densities used by the CLI and the test oracles.
//!
//! * `conv_quad` — `|xi|^2`, convex and x-independent; homogenization and
//!   relaxation both leave it alone, which makes it the identity oracle.
//! * `double_well_1d` — `(zeta^2 - 1)^2`; the standard nonconvex relaxation
//!   case whose unit-cell relaxation at 0 is exactly 0 (slopes +-1 laminate).
//!   Not p-coercive at the wells: the stored constant is nominal and the
//!   growth envelope `G = ((zeta^2 - 1)+)^2` is the convex envelope itself.
//! * `twophase1d` — `c(x) zeta^2` with `c = 1` on `[0, 1/2)`, `2` on
//!   `[1/2, 1)`; homogenizes to the harmonic mean `4/3`.
//! * `hyper2d_default` — the 2x2 determinant-constrained example.

use crate::density::{ConstraintSet, ConvexGauge, EnergyDensity};
use crate::extreal::ExtReal;
use crate::hyper2d::{self, Hyper2DConfig};
use crate::matrix::{self, Matrix};

/// Version string embedded in output provenance.
pub const GALLERY_VERSION: &str = "1";

pub const IDS: [&str; 4] = [
    "conv_quad",
    "double_well_1d",
    "twophase1d",
    "hyper2d_default",
];

/// `W(x, xi) = |xi|^2` for any matrix shape.
pub fn conv_quad() -> EnergyDensity {
    let gauge = ConvexGauge::new(
        |xi: &Matrix| ExtReal::new(matrix::frobenius(xi).powi(2)),
        ConstraintSet::full(),
    );
    EnergyDensity::new(
        |_x: &[f64], xi: &Matrix| ExtReal::new(matrix::frobenius(xi).powi(2)),
        false,
        1.0,
        2.0,
        ConstraintSet::full(),
    )
    .with_grad(|_x: &[f64], xi: &Matrix| xi * 2.0)
    .with_growth(1.0, 1.0, gauge)
}

/// `W(zeta) = (zeta^2 - 1)^2`, scalar.
pub fn double_well_1d() -> EnergyDensity {
    let gauge = ConvexGauge::new(
        |xi: &Matrix| {
            let z = xi[(0, 0)];
            ExtReal::new((z * z - 1.0).max(0.0).powi(2))
        },
        ConstraintSet::full(),
    );
    EnergyDensity::new(
        |_x: &[f64], xi: &Matrix| {
            let z = xi[(0, 0)];
            ExtReal::new((z * z - 1.0).powi(2))
        },
        false,
        // Nominal: the density vanishes at |zeta| = 1, so no positive
        // coercivity constant is actually valid.
        1e-9,
        4.0,
        ConstraintSet::full(),
    )
    .with_grad(|_x: &[f64], xi: &Matrix| {
        let z = xi[(0, 0)];
        Matrix::from_row_slice(1, 1, &[4.0 * z * (z * z - 1.0)])
    })
    .with_growth(1.0, 1.0, gauge)
}

/// Coefficient of the two-phase laminate: 1 on the first half cell, 2 on the
/// second, extended 1-periodically.
pub fn twophase_coefficient(x: f64) -> f64 {
    if x.rem_euclid(1.0) < 0.5 {
        1.0
    } else {
        2.0
    }
}

/// `W(x, zeta) = c(x) zeta^2`, the 1D two-phase quadratic.
pub fn twophase1d() -> EnergyDensity {
    let gauge = ConvexGauge::new(
        |xi: &Matrix| ExtReal::new(xi[(0, 0)] * xi[(0, 0)]),
        ConstraintSet::full(),
    );
    EnergyDensity::new(
        |x: &[f64], xi: &Matrix| {
            let z = xi[(0, 0)];
            ExtReal::new(twophase_coefficient(x[0]) * z * z)
        },
        true,
        1.0,
        2.0,
        ConstraintSet::full(),
    )
    .with_grad(|x: &[f64], xi: &Matrix| {
        Matrix::from_row_slice(1, 1, &[2.0 * twophase_coefficient(x[0]) * xi[(0, 0)]])
    })
    .with_growth(1.0, 2.0, gauge)
}

/// The 2x2 determinant-constrained example with default settings.
pub fn hyper2d_default() -> EnergyDensity {
    hyper2d::density(&Hyper2DConfig::default())
}

/// Looks a density up by its id.
pub fn by_name(id: &str) -> Option<EnergyDensity> {
    match id {
        "conv_quad" => Some(conv_quad()),
        "double_well_1d" => Some(double_well_1d()),
        "twophase1d" => Some(twophase1d()),
        "hyper2d_default" => Some(hyper2d_default()),
        _ => None,
    }
}

/// Expected `(m, d)` of a gallery density; `None` entries are shape-generic.
pub fn shape_hint(id: &str) -> Option<(usize, usize)> {
    match id {
        "double_well_1d" | "twophase1d" => Some((1, 1)),
        "hyper2d_default" => Some((2, 2)),
        _ => None,
    }
}
