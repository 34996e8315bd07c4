//! A concrete 2x2 density with a determinant constraint.
//!
//! `W(x, xi) = F(x, xi) + g(xi)` on the open convex set
//! `G = { xi : |I + xi| < tr(I + xi) }` and infinite outside, with
//! `g(xi) = 1 / (tr(I + xi) - |I + xi|)^2` and `h(t) = 1/(2t)` for `t > 0`.
//! Membership in `G` forces `det(I + xi) > 0` through the chain
//! `2 det(I + xi) > (tr(I + xi) - |I + xi|)^2`, so the barrier `g` dominates
//! `h(det(I + xi))`: compressing volume to zero costs unbounded energy.
//!
//! The default bulk term is `F(x, xi) = c(x) |xi|^p` with
//! `c(x) = 1 + sin^2(pi x1) sin^2(pi x2) / 2`, which keeps the growth and
//! radial-modulus constants computable in closed form.

use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

use crate::density::{
    growth_audit, ConstraintSet, ConvexGauge, EnergyDensity, PeriodicWeight, SampleSpec,
};
use crate::extreal::ExtReal;
use crate::matrix::{self, Matrix};
use crate::ruusc;

/// `h(t) = 1/(2t)` for `t > 0`, infinite otherwise.
pub fn h_eval(t: f64) -> ExtReal {
    if t > 0.0 {
        ExtReal::new(1.0 / (2.0 * t))
    } else {
        ExtReal::Infinity
    }
}

/// Membership in `G`: `|I + xi| < tr(I + xi)` (Frobenius norm, strict).
pub fn in_g(xi: &Matrix) -> bool {
    let a = matrix::plus_identity(xi);
    matrix::frobenius(&a) < matrix::trace(&a)
}

/// Barrier `g`: `1 / (tr(I + xi) - |I + xi|)^2` on `G`, infinite otherwise.
pub fn g_eval(xi: &Matrix) -> ExtReal {
    let a = matrix::plus_identity(xi);
    let s = matrix::trace(&a) - matrix::frobenius(&a);
    if s > 0.0 {
        ExtReal::new(1.0 / (s * s))
    } else {
        ExtReal::Infinity
    }
}

/// `g(0) = 1/(2 - sqrt 2)^2`, the barrier value at the identity.
pub fn g_at_zero() -> f64 {
    let s = 2.0 - 2f64.sqrt();
    1.0 / (s * s)
}

/// The constraint set with its certified interior ball: `|xi| <= 3 sqrt 2 - 4`
/// implies membership (`|I + xi| <= sqrt 2 + |xi|` against
/// `tr(I + xi) >= 2 - sqrt 2 |xi|`).
pub fn constraint_set() -> ConstraintSet {
    ConstraintSet::new(|xi: &Matrix| in_g(xi), Some(3.0 * 2f64.sqrt() - 4.0))
}

/// Membership in the determinant-compatible domain:
/// `h(det(I + xi)) <= g(xi) < inf`.
pub fn in_domain_d_gh(xi: &Matrix) -> bool {
    let g = g_eval(xi);
    let ExtReal::Finite(gv) = g else { return false };
    let det = matrix::det2(&matrix::plus_identity(xi));
    match h_eval(det) {
        ExtReal::Finite(hv) => hv <= gv,
        ExtReal::Infinity => false,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Hyper2DError {
    #[error("matrix is not a member of the constraint set")]
    NotInG,
}

/// Both sides of the determinant chain at one member matrix.
#[derive(Clone, Debug, Serialize)]
pub struct DetChain {
    /// `2 det(I + xi)`.
    pub lhs: f64,
    /// `(tr(I + xi) - |I + xi|)^2`.
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates `2 det(I + xi) > (tr(I + xi) - |I + xi|)^2`, which must hold
/// strictly for every member.
pub fn det_inequality_check(xi: &Matrix) -> Result<DetChain, Hyper2DError> {
    if !in_g(xi) {
        return Err(Hyper2DError::NotInG);
    }
    let a = matrix::plus_identity(xi);
    let lhs = 2.0 * matrix::det2(&a);
    let s = matrix::trace(&a) - matrix::frobenius(&a);
    let rhs = s * s;
    Ok(DetChain {
        lhs,
        rhs,
        holds: lhs > rhs,
    })
}

/// Configuration of the example density. The claimed coercivity/growth
/// constants are audited by the property suite, so an inconsistent claim is
/// reported rather than silently trusted.
#[derive(Clone, Debug)]
pub struct Hyper2DConfig {
    /// Growth exponent; must exceed the dimension 2.
    pub exponent_p: f64,
    /// Claimed lower bound of the oscillating coefficient `c(x)`.
    pub coercivity_c: f64,
    /// Claimed upper bound of `c(x)`.
    pub growth_c: f64,
}

impl Default for Hyper2DConfig {
    fn default() -> Self {
        Hyper2DConfig {
            exponent_p: 4.0,
            coercivity_c: 1.0,
            growth_c: 1.5,
        }
    }
}

impl Hyper2DConfig {
    pub fn validate(&self) {
        assert!(self.exponent_p > 2.0, "the exponent must exceed d = 2");
        assert!(self.coercivity_c > 0.0 && self.growth_c > 0.0);
    }
}

/// Oscillating coefficient `c(x) in [1, 1.5]`, 1-periodic. The arguments
/// are reduced mod 1 first, so integer shifts that are exact in f64
/// reproduce the value bit for bit.
pub fn coefficient(x: &[f64]) -> f64 {
    let s1 = (PI * x[0].rem_euclid(1.0)).sin();
    let s2 = (PI * x[1].rem_euclid(1.0)).sin();
    1.0 + 0.5 * s1 * s1 * s2 * s2
}

/// The example density with analytic gradient and growth metadata
/// (`G = |xi|^p + g`, `alpha = min(c, 1)`, `beta = max(C, 1)`).
pub fn density(cfg: &Hyper2DConfig) -> EnergyDensity {
    cfg.validate();
    let p = cfg.exponent_p;
    let alpha = cfg.coercivity_c.min(1.0);
    let beta = cfg.growth_c.max(1.0);
    let gauge = ConvexGauge::new(
        move |xi: &Matrix| match g_eval(xi) {
            ExtReal::Finite(g) => ExtReal::new(matrix::frobenius(xi).powf(p) + g),
            ExtReal::Infinity => ExtReal::Infinity,
        },
        constraint_set(),
    );
    EnergyDensity::new(
        move |x: &[f64], xi: &Matrix| match g_eval(xi) {
            ExtReal::Finite(g) => ExtReal::new(coefficient(x) * matrix::frobenius(xi).powf(p) + g),
            ExtReal::Infinity => ExtReal::Infinity,
        },
        true,
        cfg.coercivity_c,
        p,
        constraint_set(),
    )
    .with_grad(move |x: &[f64], xi: &Matrix| {
        let a = matrix::plus_identity(xi);
        let norm_a = matrix::frobenius(&a);
        let s = matrix::trace(&a) - norm_a;
        let norm_xi = matrix::frobenius(xi);
        // d(c |xi|^p) = c p |xi|^(p-2) xi
        let mut grad = if norm_xi > 0.0 {
            xi * (coefficient(x) * p * norm_xi.powf(p - 2.0))
        } else {
            Matrix::zeros(2, 2)
        };
        // d g = -2 s^-3 (I - (I+xi)/|I+xi|)
        if s > 0.0 && norm_a > 0.0 {
            let mut ds = Matrix::identity(2, 2);
            ds -= &a / norm_a;
            grad += ds * (-2.0 / (s * s * s));
        }
        grad
    })
    .with_growth(alpha, beta, gauge)
}

/// Growth-and-Lipschitz constant of the bulk term: for `F = c(x)|xi|^p` the
/// mean value inequality gives
/// `|F(x, z) - F(x, z')| <= C p |z - z'| (1 + |z|^(p-1) + |z'|^(p-1))`,
/// so `K = C p`.
pub fn lipschitz_growth_k(cfg: &Hyper2DConfig) -> f64 {
    cfg.growth_c * cfg.exponent_p
}

/// `K' = 3 K max(1, 1/c)`: the radial-modulus constant of the bulk term.
pub fn k_prime(cfg: &Hyper2DConfig) -> f64 {
    3.0 * lipschitz_growth_k(cfg) * (1.0f64).max(1.0 / cfg.coercivity_c)
}

/// One item of the property suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Report of the six-item property suite.
#[derive(Clone, Debug, Serialize)]
pub struct PropertySuiteReport {
    pub items: Vec<SuiteItem>,
    pub samples: usize,
    /// Worst sampled modulus quotient per scale, for the CSV output.
    pub modulus_rows: Vec<(f64, f64)>,
}

impl PropertySuiteReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }
}

/// Runs the six checks on sampled points and matrices:
/// coercivity, periodicity, two-sided growth, the radial modulus with
/// weight 2 against `max(K', g(0)) (1 - t)`, finiteness iff positive
/// determinant, and blow-up along paths where the determinant vanishes.
pub fn property_suite(cfg: &Hyper2DConfig, spec: &SampleSpec) -> PropertySuiteReport {
    cfg.validate();
    let w = density(cfg);
    let mut items = Vec::with_capacity(6);
    let mut boundary_spec = spec.clone();
    boundary_spec.push_to_boundary = true;
    boundary_spec.m = 2;
    boundary_spec.d = 2;
    let feasible: Vec<Matrix> = boundary_spec
        .matrices(Some(w.domain()))
        .into_iter()
        .filter(in_g)
        .collect();
    let mut free_spec = spec.clone();
    free_spec.m = 2;
    free_spec.d = 2;
    free_spec.push_to_boundary = false;
    let unfiltered = free_spec.matrices(None);
    let points = spec.points_2d();
    let samples = (feasible.len() + unfiltered.len()) * points.len();

    // (i) p-coercivity on all samples, members or not.
    {
        let mut worst: f64 = 0.0;
        let mut pass = true;
        for x in &points {
            for xi in feasible.iter().chain(unfiltered.iter()) {
                let bound = cfg.coercivity_c * matrix::frobenius(xi).powf(cfg.exponent_p);
                let val = w.eval(x, xi).to_f64();
                if val + 1e-12 * (1.0 + bound) < bound {
                    pass = false;
                    worst = worst.max(bound - val);
                }
            }
        }
        items.push(SuiteItem {
            name: "coercivity".into(),
            pass,
            detail: format!("worst shortfall {worst:.3e}"),
        });
    }

    // (ii) exact 1-periodicity under integer shifts. Sample points are
    // snapped to a dyadic grid so x + z is exactly representable.
    {
        let shifts: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [2.0, -1.0]];
        let snap = |v: f64| (v * 67_108_864.0).round() / 67_108_864.0;
        let mut pass = true;
        for x in &points {
            let x = [snap(x[0]), snap(x[1])];
            for xi in feasible.iter().take(16) {
                let base = w.eval(&x, xi);
                for z in &shifts {
                    let xs = [x[0] + z[0], x[1] + z[1]];
                    if w.eval(&xs, xi) != base {
                        pass = false;
                    }
                }
            }
        }
        items.push(SuiteItem {
            name: "periodicity".into(),
            pass,
            detail: "integer shifts evaluated exactly".into(),
        });
    }

    // (iii) two-sided growth via the audit machinery.
    {
        let mut audit_spec = boundary_spec.clone();
        audit_spec.n_xi = spec.n_xi;
        let report = growth_audit(&w, &audit_spec);
        items.push(SuiteItem {
            name: "growth".into(),
            pass: report.passed(),
            detail: format!(
                "{} violations on {} samples",
                report.violations.len(),
                report.samples
            ),
        });
    }

    // (iv) radial modulus with weight 2 passes and obeys the closed-form
    // bound max(K', g(0)) (1 - t).
    let mut modulus_rows = Vec::new();
    {
        let a = PeriodicWeight::constant(2.0);
        let t_grid = [0.9, 0.99, 0.999];
        let cap = k_prime(cfg).max(g_at_zero());
        let mut pass = true;
        let mut detail = String::new();
        for t in t_grid {
            match ruusc::delta_lower(&w, &a, t, &points, &feasible) {
                Ok(d) => {
                    modulus_rows.push((t, d));
                    let bound = cap * (1.0 - t);
                    if d > bound + 1e-12 {
                        pass = false;
                        detail = format!("delta({t}) = {d:.3e} exceeds {bound:.3e}");
                    }
                }
                Err(e) => {
                    pass = false;
                    detail = e.to_string();
                }
            }
        }
        if detail.is_empty() {
            detail = format!("bound max(K', g(0)) = {cap:.3}");
        }
        items.push(SuiteItem {
            name: "radial_modulus".into(),
            pass,
            detail,
        });
    }

    // (v) finiteness iff det(I + xi) > 0 on members; infinite off members.
    {
        let mut pass = true;
        let x0 = vec![0.25, 0.5];
        for xi in &feasible {
            let finite = w.eval(&x0, xi).is_finite();
            let det = matrix::det2(&matrix::plus_identity(xi));
            if !(finite && det > 0.0) {
                pass = false;
            }
        }
        for xi in unfiltered.iter().filter(|xi| !in_g(xi)) {
            if w.eval(&x0, xi).is_finite() {
                pass = false;
            }
        }
        items.push(SuiteItem {
            name: "finiteness_iff_positive_det".into(),
            pass,
            detail: format!("{} member samples", feasible.len()),
        });
    }

    // (vi) blow-up: W >= h(det(I + xi)) on members, and along the path
    // xi(s) = diag(-1 + s, 0) the energy exceeds 1e3 once s < 5e-4.
    {
        let mut pass = true;
        let x0 = vec![0.25, 0.5];
        for xi in &feasible {
            let det = matrix::det2(&matrix::plus_identity(xi));
            let hv = h_eval(det).to_f64();
            if w.eval(&x0, xi).to_f64() + 1e-12 < hv {
                pass = false;
            }
        }
        for s in [1e-2, 1e-3, 4.9e-4, 1e-5] {
            let xi = Matrix::from_row_slice(2, 2, &[-1.0 + s, 0.0, 0.0, 0.0]);
            let val = w.eval(&x0, &xi).to_f64();
            if val + 1e-12 < h_eval(s).to_f64() {
                pass = false;
            }
            if s < 5e-4 && val <= 1e3 {
                pass = false;
            }
        }
        items.push(SuiteItem {
            name: "determinant_blowup".into(),
            pass,
            detail: "path diag(-1+s, 0), s -> 0".into(),
        });
    }

    PropertySuiteReport {
        items,
        samples,
        modulus_rows,
    }
}

impl SampleSpec {
    /// Points in the unit square for the 2D example.
    pub fn points_2d(&self) -> Vec<Vec<f64>> {
        let mut spec = self.clone();
        spec.d = 2;
        spec.points()
    }
}
