//! Radial calculus for densities that blow up at the constraint boundary.
//!
//! The central quantity is the modulus
//! `Delta(t) = sup_x sup_xi (L(x, t xi) - L(x, xi)) / (a(x) + L(x, xi))`
//! over feasible `xi`; a density is radially well behaved when the modulus
//! has nonpositive limsup as `t -> 1`. Suprema are replaced by maxima over
//! samples (so every reported value is a lower bound of the true sup), and
//! limits over `t` by a short schedule pushing toward 1: the min/max over
//! the tail bracket the limit, and a linear extrapolation in `1 - t`
//! provides the limit estimate itself.

use serde::Serialize;
use thiserror::Error;

use crate::density::{
    classify_point, ConstraintSet, Integrand, MatrixFn, PeriodicWeight, PointClass,
};
use crate::extreal::ExtReal;
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuUscError {
    /// Every sampled pair had infinite value, so the modulus quotient is
    /// undefined everywhere on the sample.
    #[error("no feasible samples: L(x, xi) was infinite on every sampled pair")]
    NoFeasibleSamples,
}

/// Default scale schedule pushing toward 1.
pub fn default_schedule() -> Vec<f64> {
    vec![0.9, 0.99, 0.999, 0.9999]
}

/// Values of `L` along the ray `t -> L(t xi)` with bracketed and
/// extrapolated limit estimates.
#[derive(Clone, Debug, Serialize)]
pub struct RadialProbe {
    pub t_schedule: Vec<f64>,
    pub values: Vec<ExtReal>,
    /// Min over the tail (last half) of the schedule.
    pub liminf_estimate: ExtReal,
    /// Max over the tail of the schedule.
    pub limsup_estimate: ExtReal,
    /// Linear extrapolation of the last two values to `t = 1`; the limit
    /// estimate proper when the probe converges.
    pub extrapolated: ExtReal,
    /// Tail grows by a factor >= 8 per schedule step: the values diverge.
    pub diverged: bool,
}

const DIVERGENCE_RATIO: f64 = 8.0;

pub fn radial_probe(l: &dyn MatrixFn, xi: &Matrix, schedule: &[f64]) -> RadialProbe {
    assert!(!schedule.is_empty());
    assert!(
        schedule.windows(2).all(|w| w[0] < w[1]) && schedule.iter().all(|t| *t > 0.0 && *t < 1.0),
        "schedule must be strictly increasing inside (0, 1)"
    );
    let values: Vec<ExtReal> = schedule.iter().map(|t| l.eval(&(xi * *t))).collect();
    let tail_start = schedule.len() / 2;
    let tail = &values[tail_start..];
    let liminf = tail
        .iter()
        .copied()
        .fold(ExtReal::Infinity, |a, b| if b < a { b } else { a });
    let limsup = tail
        .iter()
        .copied()
        .fold(ExtReal::ZERO, |a, b| if b > a { b } else { a });

    let n = values.len();
    let diverged = values.iter().any(|v| v.is_infinite())
        || (n >= 2
            && values.windows(2).all(|w| w[0] < w[1])
            && match (values[n - 2].finite(), values[n - 1].finite()) {
                (Some(a), Some(b)) => a > 0.0 && b / a >= DIVERGENCE_RATIO,
                _ => true,
            });

    let extrapolated = if diverged {
        ExtReal::Infinity
    } else if n >= 2 {
        let (ta, tb) = (schedule[n - 2], schedule[n - 1]);
        let (va, vb) = (values[n - 2].to_f64(), values[n - 1].to_f64());
        ExtReal::new((vb + (vb - va) * (1.0 - tb) / (tb - ta)).max(0.0))
    } else {
        values[n - 1]
    };

    RadialProbe {
        t_schedule: schedule.to_vec(),
        values,
        liminf_estimate: liminf,
        limsup_estimate: limsup,
        extrapolated,
        diverged,
    }
}

/// Result of the radial-limit (hat) evaluation at one matrix.
#[derive(Clone, Debug, Serialize)]
pub struct HatResult {
    pub value: ExtReal,
    pub branch: PointClass,
    pub probe: Option<RadialProbe>,
    /// False when the tail bracket disagrees beyond tolerance (the radial
    /// limit did not settle on this schedule); the value is then the liminf
    /// estimate.
    pub converged: bool,
}

/// Radial liminf of `L` at `xi`: interior points return `L(xi)` directly,
/// boundary points probe along the ray, exterior points are infinite.
pub fn hat(
    l: &dyn MatrixFn,
    domain: &ConstraintSet,
    xi: &Matrix,
    schedule: &[f64],
    agree_tol: f64,
) -> HatResult {
    match classify_point(domain, xi, 1e-8) {
        PointClass::Interior => HatResult {
            value: l.eval(xi),
            branch: PointClass::Interior,
            probe: None,
            converged: true,
        },
        PointClass::Exterior => HatResult {
            value: ExtReal::Infinity,
            branch: PointClass::Exterior,
            probe: None,
            converged: true,
        },
        PointClass::Boundary => {
            let probe = radial_probe(l, xi, schedule);
            if probe.diverged {
                return HatResult {
                    value: ExtReal::Infinity,
                    branch: PointClass::Boundary,
                    probe: Some(probe),
                    converged: true,
                };
            }
            let lo = probe.liminf_estimate.to_f64();
            let hi = probe.limsup_estimate.to_f64();
            let converged = hi - lo <= agree_tol * (1.0 + lo.abs());
            let value = if converged {
                probe.extrapolated
            } else {
                probe.liminf_estimate
            };
            HatResult {
                value,
                branch: PointClass::Boundary,
                probe: Some(probe),
                converged,
            }
        }
    }
}

/// Sampled lower bound of the modulus at one scale `t`: the max over the
/// given samples of the quotient, skipping pairs with `L(x, xi) = inf`
/// (they are outside the effective domain the sup ranges over).
pub fn delta_lower(
    l: &dyn Integrand,
    a: &PeriodicWeight,
    t: f64,
    x_samples: &[Vec<f64>],
    xi_samples: &[Matrix],
) -> Result<f64, RuUscError> {
    assert!((0.0..=1.0).contains(&t));
    let mut best: Option<f64> = None;
    for x in x_samples {
        for xi in xi_samples {
            let Some(lx) = l.eval(x, xi).finite() else {
                continue;
            };
            let num = match l.eval(x, &(xi * t)) {
                ExtReal::Finite(v) => v - lx,
                ExtReal::Infinity => f64::INFINITY,
            };
            let q = num / (a.eval(x) + lx);
            best = Some(best.map_or(q, |b: f64| b.max(q)));
        }
    }
    best.ok_or(RuUscError::NoFeasibleSamples)
}

/// Modulus table over a scale grid with the pass/fail verdict.
#[derive(Clone, Debug, Serialize)]
pub struct ModulusReport {
    pub t_grid: Vec<f64>,
    pub delta: Vec<f64>,
    pub n_x: usize,
    pub n_xi: usize,
    /// Max over the last two grid points: the limsup-at-1 estimate.
    pub limsup_estimate: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub const DEFAULT_PASS_THRESHOLD: f64 = 1e-2;

pub fn ru_usc_audit(
    l: &dyn Integrand,
    a: &PeriodicWeight,
    t_grid: &[f64],
    x_samples: &[Vec<f64>],
    xi_samples: &[Matrix],
    threshold: f64,
) -> Result<ModulusReport, RuUscError> {
    assert!(!t_grid.is_empty());
    assert!(t_grid.iter().all(|t| *t > 0.0 && *t <= 1.0));
    let delta: Result<Vec<f64>, RuUscError> = t_grid
        .iter()
        .map(|t| delta_lower(l, a, *t, x_samples, xi_samples))
        .collect();
    let delta = delta?;
    let tail = &delta[delta.len().saturating_sub(2)..];
    let limsup_estimate = tail.iter().fold(f64::NEG_INFINITY, |acc, v| acc.max(*v));
    Ok(ModulusReport {
        t_grid: t_grid.to_vec(),
        delta,
        n_x: x_samples.len(),
        n_xi: xi_samples.len(),
        limsup_estimate,
        threshold,
        pass: limsup_estimate <= threshold,
    })
}

/// Brute-force lower-semicontinuous envelope on a uniform 1D grid: a node is
/// lowered to its punctured-neighborhood minimum only when that minimum
/// undercuts it by more than `jump_tol` (genuine jumps, not continuity
/// drift). `None` picks 20x the largest adjacent finite increment. Test
/// oracle for the radial-limit operator.
pub fn lsc_envelope_oracle_1d(values: &[ExtReal], jump_tol: Option<f64>) -> Vec<ExtReal> {
    let tol = jump_tol.unwrap_or_else(|| auto_jump_tol(values));
    let n = values.len();
    (0..n)
        .map(|i| {
            let mut m = ExtReal::Infinity;
            if i > 0 && values[i - 1] < m {
                m = values[i - 1];
            }
            if i + 1 < n && values[i + 1] < m {
                m = values[i + 1];
            }
            lower_if_jump(values[i], m, tol)
        })
        .collect()
}

/// Same oracle on a rectangular 2D grid (8-neighborhoods), for matrix grids
/// indexed `[row][col]`.
pub fn lsc_envelope_oracle_2d(values: &[Vec<ExtReal>], jump_tol: Option<f64>) -> Vec<Vec<ExtReal>> {
    let flat: Vec<ExtReal> = values.iter().flatten().copied().collect();
    let tol = jump_tol.unwrap_or_else(|| auto_jump_tol(&flat));
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| {
                    let mut m = ExtReal::Infinity;
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            if dr == 0 && dc == 0 {
                                continue;
                            }
                            let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                            if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                                continue;
                            }
                            let v = values[rr as usize][cc as usize];
                            if v < m {
                                m = v;
                            }
                        }
                    }
                    lower_if_jump(values[r][c], m, tol)
                })
                .collect()
        })
        .collect()
}

fn auto_jump_tol(values: &[ExtReal]) -> f64 {
    let mut max_step = 0.0f64;
    for w in values.windows(2) {
        if let (Some(a), Some(b)) = (w[0].finite(), w[1].finite()) {
            max_step = max_step.max((a - b).abs());
        }
    }
    (20.0 * max_step).max(1e-9)
}

fn lower_if_jump(v: ExtReal, neighbor_min: ExtReal, tol: f64) -> ExtReal {
    match (v, neighbor_min) {
        (ExtReal::Infinity, ExtReal::Finite(_)) => neighbor_min,
        (ExtReal::Finite(a), ExtReal::Finite(b)) if a - b > tol => neighbor_min,
        _ => v,
    }
}
