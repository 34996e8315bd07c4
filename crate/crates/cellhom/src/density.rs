//! Extended-real energy densities, convex gauges and constraint sets.
//!
//! A density `W(x, xi)` is periodic (or constant) in `x`, nonnegative, and
//! may be infinite outside a convex set of matrices. The set is only ever
//! available as a membership oracle, so point classification works radially:
//! `0` sits in the interior, and scaling a member toward `0` stays interior.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::extreal::ExtReal;
use crate::matrix::{self, Matrix};

/// Point-and-matrix integrand: the common face of densities and of derived
/// objects (cell-value tables, relaxed densities) that enter integrals.
pub trait Integrand: Send + Sync {
    fn eval(&self, x: &[f64], xi: &Matrix) -> ExtReal;

    /// `dW/dxi` at a point where `eval` is finite. `None` means the caller
    /// falls back to finite differences in `xi`.
    fn grad_xi(&self, _x: &[f64], _xi: &Matrix) -> Option<Matrix> {
        None
    }
}

/// Matrix function `L(xi)` with no point dependence.
pub trait MatrixFn: Send + Sync {
    fn eval(&self, xi: &Matrix) -> ExtReal;

    fn grad(&self, _xi: &Matrix) -> Option<Matrix> {
        None
    }
}

/// Adapter: a matrix function is an integrand that ignores `x`.
pub struct Homogeneous<L: MatrixFn>(pub L);

impl<L: MatrixFn> Integrand for Homogeneous<L> {
    fn eval(&self, _x: &[f64], xi: &Matrix) -> ExtReal {
        self.0.eval(xi)
    }
    fn grad_xi(&self, _x: &[f64], xi: &Matrix) -> Option<Matrix> {
        self.0.grad(xi)
    }
}

/// Closure-backed matrix function.
#[derive(Clone)]
pub struct FnMatrixFn {
    pub f: Arc<dyn Fn(&Matrix) -> ExtReal + Send + Sync>,
}

impl MatrixFn for FnMatrixFn {
    fn eval(&self, xi: &Matrix) -> ExtReal {
        (self.f)(xi)
    }
}

/// Trichotomy of a matrix against a constraint set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PointClass {
    Interior,
    Boundary,
    Exterior,
}

/// Convex effective domain, available as a membership oracle.
///
/// `zero_interior_radius` certifies a ball `|xi| <= r` of members around the
/// origin; the radial classification below leans on that structure.
#[derive(Clone)]
pub struct ConstraintSet {
    member: Arc<dyn Fn(&Matrix) -> bool + Send + Sync>,
    zero_interior_radius: Option<f64>,
}

impl ConstraintSet {
    pub fn new(
        member: impl Fn(&Matrix) -> bool + Send + Sync + 'static,
        zero_interior_radius: Option<f64>,
    ) -> Self {
        if let Some(r) = zero_interior_radius {
            assert!(r > 0.0, "interior radius must be positive");
        }
        ConstraintSet {
            member: Arc::new(member),
            zero_interior_radius,
        }
    }

    /// The whole matrix space (densities finite everywhere).
    pub fn full() -> Self {
        ConstraintSet::new(|_| true, Some(1.0))
    }

    pub fn member(&self, xi: &Matrix) -> bool {
        (self.member)(xi)
    }

    pub fn contains_zero_interior(&self) -> bool {
        self.zero_interior_radius.is_some()
    }

    pub fn zero_interior_radius(&self) -> Option<f64> {
        self.zero_interior_radius
    }

    /// Smallest `r >= 0` on the ray through `dir` with `r * dir` on the
    /// boundary, bisected from the membership oracle; `None` when the whole
    /// ray up to `r_max` is feasible.
    pub fn boundary_radius(&self, dir: &Matrix, r_max: f64, iters: usize) -> Option<f64> {
        if self.member(&(dir.clone() * r_max)) {
            return None;
        }
        let (mut lo, mut hi) = (0.0f64, r_max);
        for _ in 0..iters {
            let mid = 0.5 * (lo + hi);
            if self.member(&(dir.clone() * mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Radial trichotomy: interior iff pushing the point slightly outward stays
/// a member, exterior iff pulling it slightly inward already fails.
/// One-dimensional along the ray through `xi`, which is what the convexity
/// of the set with `0` interior buys.
pub fn classify_point(set: &ConstraintSet, xi: &Matrix, tol: f64) -> PointClass {
    assert!(tol > 0.0, "classification tolerance must be positive");
    if matrix::frobenius(xi) == 0.0 {
        return PointClass::Interior;
    }
    if set.member(&(xi.clone() * (1.0 + tol))) {
        PointClass::Interior
    } else if !set.member(&(xi.clone() * (1.0 - tol))) {
        PointClass::Exterior
    } else {
        PointClass::Boundary
    }
}

/// Convex gauge `G`: finite exactly on its domain, convex along segments.
#[derive(Clone)]
pub struct ConvexGauge {
    eval: Arc<dyn Fn(&Matrix) -> ExtReal + Send + Sync>,
    domain: ConstraintSet,
}

impl ConvexGauge {
    pub fn new(
        eval: impl Fn(&Matrix) -> ExtReal + Send + Sync + 'static,
        domain: ConstraintSet,
    ) -> Self {
        ConvexGauge {
            eval: Arc::new(eval),
            domain,
        }
    }

    pub fn eval(&self, xi: &Matrix) -> ExtReal {
        (self.eval)(xi)
    }

    pub fn domain(&self) -> &ConstraintSet {
        &self.domain
    }
}

/// Two-sided growth envelope `alpha G <= W <= beta (1 + G)`.
#[derive(Clone)]
pub struct GrowthEnvelope {
    pub alpha: f64,
    pub beta: f64,
    pub gauge: ConvexGauge,
}

/// Strictly positive periodic weight with a computable unit-cell mean.
#[derive(Clone)]
pub struct PeriodicWeight {
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl PeriodicWeight {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PeriodicWeight {
            eval: Arc::new(eval),
        }
    }

    pub fn constant(c: f64) -> Self {
        assert!(c > 0.0);
        PeriodicWeight::new(move |_| c)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = (self.eval)(x);
        debug_assert!(v > 0.0, "periodic weight must stay positive");
        v
    }

    /// Unit-cell mean by midpoint quadrature on an `n^d` grid.
    pub fn unit_cell_mean(&self, d: usize, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut sum = 0.0;
        let mut idx = vec![0usize; d];
        let total = n.pow(d as u32);
        let mut x = vec![0.0; d];
        for lin in 0..total {
            let mut rem = lin;
            for a in 0..d {
                idx[a] = rem % n;
                rem /= n;
            }
            for a in 0..d {
                x[a] = (idx[a] as f64 + 0.5) * h;
            }
            sum += self.eval(&x);
        }
        sum / total as f64
    }
}

/// Energy density `W(x, xi)` with its audit metadata.
#[derive(Clone)]
pub struct EnergyDensity {
    eval: Arc<dyn Fn(&[f64], &Matrix) -> ExtReal + Send + Sync>,
    grad: Option<Arc<dyn Fn(&[f64], &Matrix) -> Matrix + Send + Sync>>,
    /// `true`: 1-periodic in `x`. `false`: constant in `x`.
    periodic: bool,
    coercivity_c: f64,
    exponent_p: f64,
    growth: Option<GrowthEnvelope>,
    domain: ConstraintSet,
}

impl EnergyDensity {
    pub fn new(
        eval: impl Fn(&[f64], &Matrix) -> ExtReal + Send + Sync + 'static,
        periodic: bool,
        coercivity_c: f64,
        exponent_p: f64,
        domain: ConstraintSet,
    ) -> Self {
        assert!(coercivity_c > 0.0, "coercivity constant must be positive");
        assert!(exponent_p > 1.0, "growth exponent must exceed 1");
        EnergyDensity {
            eval: Arc::new(eval),
            grad: None,
            periodic,
            coercivity_c,
            exponent_p,
            growth: None,
            domain,
        }
    }

    pub fn with_grad(
        mut self,
        grad: impl Fn(&[f64], &Matrix) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_growth(mut self, alpha: f64, beta: f64, gauge: ConvexGauge) -> Self {
        assert!(alpha > 0.0 && beta > 0.0);
        self.growth = Some(GrowthEnvelope { alpha, beta, gauge });
        self
    }

    pub fn eval(&self, x: &[f64], xi: &Matrix) -> ExtReal {
        (self.eval)(x, xi)
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    pub fn coercivity_c(&self) -> f64 {
        self.coercivity_c
    }

    pub fn exponent_p(&self) -> f64 {
        self.exponent_p
    }

    pub fn growth(&self) -> Option<&GrowthEnvelope> {
        self.growth.as_ref()
    }

    pub fn domain(&self) -> &ConstraintSet {
        &self.domain
    }

    /// Density with the sampling origin shifted by an integer vector; for a
    /// 1-periodic density this changes nothing, which is what the
    /// translation-invariance tests pin down.
    pub fn translated(&self, z: Vec<f64>) -> EnergyDensity {
        let inner = self.clone();
        let zg = z.clone();
        let mut out = EnergyDensity {
            eval: Arc::new(move |x: &[f64], xi: &Matrix| {
                let shifted: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
                inner.eval(&shifted, xi)
            }),
            grad: None,
            periodic: self.periodic,
            coercivity_c: self.coercivity_c,
            exponent_p: self.exponent_p,
            growth: self.growth.clone(),
            domain: self.domain.clone(),
        };
        if let Some(g) = &self.grad {
            let g = g.clone();
            out.grad = Some(Arc::new(move |x: &[f64], xi: &Matrix| {
                let shifted: Vec<f64> = x.iter().zip(&zg).map(|(a, b)| a + b).collect();
                g(&shifted, xi)
            }));
        }
        out
    }
}

impl Integrand for EnergyDensity {
    fn eval(&self, x: &[f64], xi: &Matrix) -> ExtReal {
        (self.eval)(x, xi)
    }
    fn grad_xi(&self, x: &[f64], xi: &Matrix) -> Option<Matrix> {
        self.grad.as_ref().map(|g| g(x, xi))
    }
}

/// Freezes the `x` argument of a density, yielding a matrix function.
pub struct AtPoint<'a> {
    pub density: &'a EnergyDensity,
    pub x: Vec<f64>,
}

impl MatrixFn for AtPoint<'_> {
    fn eval(&self, xi: &Matrix) -> ExtReal {
        self.density.eval(&self.x, xi)
    }
    fn grad(&self, xi: &Matrix) -> Option<Matrix> {
        Integrand::grad_xi(self.density, &self.x, xi)
    }
}

/// Sample plan for audits: how many `(x, xi)` pairs, of which shape, drawn
/// from which seed. Matrices are drawn uniformly in a Frobenius ball; when
/// `push_to_boundary` is set they are instead placed along random rays at
/// radii bisected toward the membership boundary, where growth inequalities
/// are tight.
#[derive(Clone, Debug)]
pub struct SampleSpec {
    pub m: usize,
    pub d: usize,
    pub n_x: usize,
    pub n_xi: usize,
    pub radius: f64,
    pub seed: u64,
    pub push_to_boundary: bool,
}

impl SampleSpec {
    pub fn new(m: usize, d: usize) -> Self {
        SampleSpec {
            m,
            d,
            n_x: 16,
            n_xi: 64,
            radius: 2.0,
            seed: 0,
            push_to_boundary: false,
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x9e37));
        (0..self.n_x)
            .map(|_| (0..self.d).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect()
    }

    /// Matrix samples; with a domain and `push_to_boundary`, radii are the
    /// fractions {0.5, 0.9, 0.99, 0.999} of the ray's boundary radius.
    pub fn matrices(&self, domain: Option<&ConstraintSet>) -> Vec<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.n_xi);
        let fractions = [0.5, 0.9, 0.99, 0.999];
        while out.len() < self.n_xi {
            let raw = matrix::random_matrix(&mut rng, self.m, self.d, 1.0);
            let norm = matrix::frobenius(&raw);
            if norm < 1e-12 {
                continue;
            }
            let dir = raw / norm;
            match (self.push_to_boundary, domain) {
                (true, Some(set)) => match set.boundary_radius(&dir, self.radius * 4.0, 60) {
                    Some(rb) => {
                        for f in fractions {
                            if out.len() == self.n_xi {
                                break;
                            }
                            out.push(dir.clone() * (rb * f));
                        }
                    }
                    None => {
                        let r = rng.gen_range(0.0..self.radius);
                        out.push(dir * r);
                    }
                },
                _ => {
                    let r = rng.gen_range(0.0..self.radius);
                    out.push(dir * r);
                }
            }
        }
        out
    }
}

/// One growth/coercivity violation at a sampled pair.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthViolation {
    pub kind: &'static str,
    pub x: Vec<f64>,
    pub xi_entries: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Result of auditing the two-sided growth bound and coercivity on samples.
#[derive(Clone, Debug, Serialize, Default)]
pub struct GrowthAuditReport {
    pub auditable: bool,
    pub samples: usize,
    pub violations: Vec<GrowthViolation>,
}

impl GrowthAuditReport {
    pub fn passed(&self) -> bool {
        self.auditable && self.violations.is_empty()
    }
}

/// Checks `alpha G <= W <= beta (1 + G)` and `W >= c |xi|^p` on the sampled
/// pairs. A missing growth envelope makes the density unauditable (reported,
/// not a crash). Infinite values obey extended-real comparisons: the lower
/// bound with `G = inf` demands `W = inf`.
pub fn growth_audit(density: &EnergyDensity, spec: &SampleSpec) -> GrowthAuditReport {
    let Some(growth) = density.growth() else {
        return GrowthAuditReport {
            auditable: false,
            samples: 0,
            violations: Vec::new(),
        };
    };
    let points = spec.points();
    let mats = spec.matrices(Some(density.domain()));
    let mut report = GrowthAuditReport {
        auditable: true,
        samples: 0,
        violations: Vec::new(),
    };
    let mut push = |kind: &'static str, x: &[f64], xi: &Matrix, lhs: f64, rhs: f64| {
        report.violations.push(GrowthViolation {
            kind,
            x: x.to_vec(),
            xi_entries: xi.iter().copied().collect(),
            lhs,
            rhs,
        });
    };
    for x in &points {
        for xi in &mats {
            report.samples += 1;
            let w = density.eval(x, xi);
            let g = growth.gauge.eval(xi);
            // alpha G <= W
            let lower = g * growth.alpha;
            if lower.to_f64() > w.to_f64() * (1.0 + 1e-12) + 1e-12 {
                push("lower_growth", x, xi, lower.to_f64(), w.to_f64());
            }
            // W <= beta (1 + G)
            let upper = (ExtReal::new(1.0) + g) * growth.beta;
            if w.to_f64() > upper.to_f64() * (1.0 + 1e-12) + 1e-12 {
                push("upper_growth", x, xi, w.to_f64(), upper.to_f64());
            }
            // W >= c |xi|^p
            let coercive = density.coercivity_c * matrix::frobenius(xi).powf(density.exponent_p);
            if coercive > w.to_f64() * (1.0 + 1e-12) + 1e-12 {
                push("coercivity", x, xi, coercive, w.to_f64());
            }
        }
    }
    report
}
