//! Feasible-region minimization of discretized energies.
//!
//! Objectives are extended-real: the integrand is infinite outside its
//! constraint set, so the barrier is intrinsic. The line search simply
//! rejects any step whose objective is infinite, which keeps every iterate
//! feasible without a projection operator. The update is a two-loop L-BFGS
//! direction with Armijo backtracking, falling back to steepest descent
//! whenever curvature information is unusable.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::density::Integrand;
use crate::extreal::ExtReal;
use crate::matrix::Matrix;
use crate::mesh::{self, PwAffineField, QuadratureRule};

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop when the sup-norm of the projected gradient drops below this.
    pub g_tol: f64,
    /// Backtracking shrink factor in (0, 1).
    pub shrink: f64,
    /// Number of multistart runs (zero field plus random fields).
    pub multistart: usize,
    pub seed: u64,
    /// Step for finite-difference density gradients when none is supplied.
    pub h_fd: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 500,
            g_tol: 1e-8,
            shrink: 0.5,
            multistart: 4,
            seed: 0,
            h_fd: 1e-6,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) {
        assert!(self.max_iters >= 1);
        assert!(self.g_tol > 0.0);
        assert!(self.shrink > 0.0 && self.shrink < 1.0);
        assert!(self.multistart >= 1);
        assert!(self.h_fd > 0.0);
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OptimizeError {
    /// The start (or every start) has infinite objective.
    #[error("infeasible start: objective is infinite")]
    InfeasibleStart,
}

/// Outcome of a minimization run. `value` is the objective re-evaluated at
/// `argmin`, so a finite value certifies a feasible minimizer.
#[derive(Clone)]
pub struct MinimizeResult {
    pub value: ExtReal,
    pub argmin: PwAffineField,
    pub iterations: usize,
    pub converged: bool,
    pub best_start: usize,
    pub skipped_starts: usize,
}

/// A differentiable extended-real objective over P1 fields.
pub trait Objective: Sync {
    fn value(&self, u: &PwAffineField) -> ExtReal;

    /// Gradient with respect to every vertex dof (boundary dofs zeroed when
    /// the field carries a zero-boundary mask). Only called at feasible `u`.
    fn gradient(&self, u: &PwAffineField) -> Vec<f64>;
}

/// The discretized integral functional `u -> int W(x[/eps], xi + grad u)`.
pub struct EnergyObjective<'a> {
    pub integrand: &'a dyn Integrand,
    pub xi: Matrix,
    pub eps: Option<f64>,
    pub rule: QuadratureRule,
    pub h_fd: f64,
}

impl<'a> EnergyObjective<'a> {
    pub fn new(integrand: &'a dyn Integrand, xi: Matrix, eps: Option<f64>, h_fd: f64) -> Self {
        let d = xi.ncols();
        EnergyObjective {
            integrand,
            xi,
            eps,
            rule: QuadratureRule::midpoint(d),
            h_fd,
        }
    }
}

/// Central (with one-sided fallback near the barrier) finite differences of
/// the integrand in its matrix argument.
fn fd_grad_xi(integrand: &dyn Integrand, x: &[f64], xi: &Matrix, h: f64) -> Matrix {
    let (m, d) = (xi.nrows(), xi.ncols());
    let base = integrand.eval(x, xi);
    let mut g = Matrix::zeros(m, d);
    let mut probe = xi.clone();
    for c in 0..m {
        for a in 0..d {
            let orig = probe[(c, a)];
            probe[(c, a)] = orig + h;
            let plus = integrand.eval(x, &probe);
            probe[(c, a)] = orig - h;
            let minus = integrand.eval(x, &probe);
            probe[(c, a)] = orig;
            g[(c, a)] = match (plus.finite(), minus.finite(), base.finite()) {
                (Some(p), Some(q), _) => (p - q) / (2.0 * h),
                (Some(p), None, Some(b)) => (p - b) / h,
                (None, Some(q), Some(b)) => (b - q) / h,
                _ => 0.0,
            };
        }
    }
    g
}

impl Objective for EnergyObjective<'_> {
    fn value(&self, u: &PwAffineField) -> ExtReal {
        mesh::energy(self.integrand, &self.xi, u, self.eps, &self.rule)
    }

    fn gradient(&self, u: &PwAffineField) -> Vec<f64> {
        let mesh = &u.mesh;
        let d = mesh.dim();
        let m = u.m;
        let mut g = vec![0.0; mesh.num_vertices() * m];
        let mut x = vec![0.0; d];
        for s in 0..mesh.num_simplices() {
            let sx = mesh.simplex(s);
            let total = &self.xi + u.gradient(s);
            for (bary, w) in &self.rule.points {
                for a in 0..d {
                    x[a] = 0.0;
                }
                for j in 0..=d {
                    let p = mesh.vertex(sx.vertices[j]);
                    for a in 0..d {
                        x[a] += bary[j] * p[a];
                    }
                }
                if let Some(e) = self.eps {
                    for a in 0..d {
                        x[a] /= e;
                    }
                }
                let dw = self
                    .integrand
                    .grad_xi(&x, &total)
                    .unwrap_or_else(|| fd_grad_xi(self.integrand, &x, &total, self.h_fd));
                let scale = sx.volume * w;
                for j in 0..=d {
                    let v = sx.vertices[j];
                    for c in 0..m {
                        let mut acc = 0.0;
                        for a in 0..d {
                            acc += dw[(c, a)] * sx.grads[j][a];
                        }
                        g[v * m + c] += scale * acc;
                    }
                }
            }
        }
        if u.zero_boundary {
            for v in 0..mesh.num_vertices() {
                if mesh.is_boundary_vertex(v) {
                    for c in 0..m {
                        g[v * m + c] = 0.0;
                    }
                }
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

const LBFGS_MEMORY: usize = 8;
const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-18;

/// Two-loop recursion; `history` holds `(s, y, 1/(y.s))`, newest last.
fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y).max(1e-300);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alpha - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Monotone descent from a feasible start. Backtracking rejects both Armijo
/// failures and infinite trial values, so iterates never leave the feasible
/// region. Stops at `g_tol` on the projected gradient or at `max_iters`.
pub fn minimize_feasible(
    objective: &dyn Objective,
    init: &PwAffineField,
    cfg: &OptimizerConfig,
) -> Result<MinimizeResult, OptimizeError> {
    cfg.validate();
    let mut u = init.clone();
    u.enforce_zero_boundary();
    let mut f = match objective.value(&u) {
        ExtReal::Finite(v) => v,
        ExtReal::Infinity => return Err(OptimizeError::InfeasibleStart),
    };
    let mut g = objective.gradient(&u);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = sup_norm(&g) <= cfg.g_tol;

    while !converged && iterations < cfg.max_iters {
        let mut dir = lbfgs_direction(&g, &history);
        let mut slope = dot(&g, &dir);
        // Non-descent (or NaN-contaminated) direction: restart steepest.
        if slope >= 0.0 || slope.is_nan() {
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
            history.clear();
        }
        let mut alpha = if history.is_empty() {
            (1.0 / sup_norm(&dir).max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        while alpha >= MIN_STEP {
            let mut trial = u.clone();
            for (t, d) in trial.values.iter_mut().zip(&dir) {
                *t += alpha * d;
            }
            if let ExtReal::Finite(ft) = objective.value(&trial) {
                if ft <= f + ARMIJO_C1 * alpha * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            alpha *= cfg.shrink;
        }
        let Some((trial, ft)) = accepted else {
            // Line search exhausted: the gradient points nowhere useful at
            // this resolution; report the current iterate.
            break;
        };
        let g_new = objective.gradient(&trial);
        let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        u = trial;
        f = ft;
        g = g_new;
        iterations += 1;
        converged = sup_norm(&g) <= cfg.g_tol;
    }

    // Consistency: the reported value is the objective re-evaluated at the
    // reported argmin.
    let value = objective.value(&u);
    Ok(MinimizeResult {
        value,
        argmin: u,
        iterations,
        converged,
        best_start: 0,
        skipped_starts: 0,
    })
}

/// Best run over a list of starts. Infeasible starts are skipped and
/// counted; ties in value break toward the lowest start index. Runs are
/// independent and execute in parallel, but the reduction is ordered, so the
/// outcome is deterministic for a fixed seed.
pub fn multistart(
    objective: &dyn Objective,
    starts: &[PwAffineField],
    cfg: &OptimizerConfig,
) -> Result<MinimizeResult, OptimizeError> {
    assert!(!starts.is_empty());
    let runs: Vec<Option<MinimizeResult>> = starts
        .par_iter()
        .map(|s| minimize_feasible(objective, s, cfg).ok())
        .collect();
    let skipped = runs.iter().filter(|r| r.is_none()).count();
    let mut best: Option<(usize, MinimizeResult)> = None;
    for (i, run) in runs.into_iter().enumerate() {
        let Some(r) = run else { continue };
        let better = match &best {
            None => true,
            Some((_, b)) => r.value < b.value,
        };
        if better {
            best = Some((i, r));
        }
    }
    match best {
        Some((i, mut r)) => {
            r.best_start = i;
            r.skipped_starts = skipped;
            Ok(r)
        }
        None => Err(OptimizeError::InfeasibleStart),
    }
}

/// Default multistart family: the zero field plus `count - 1` random
/// zero-boundary fields with vertex values uniform in `[-amplitude,
/// amplitude]`. The zero field is feasible whenever the offset matrix is.
pub fn default_starts(
    mesh: &std::sync::Arc<crate::mesh::SimplicialMesh>,
    m: usize,
    count: usize,
    amplitude: f64,
    seed: u64,
) -> Vec<PwAffineField> {
    let mut starts = Vec::with_capacity(count);
    starts.push(PwAffineField::zeros(mesh.clone(), m, true));
    for i in 1..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let mut f = PwAffineField::zeros(mesh.clone(), m, true);
        for v in 0..mesh.num_vertices() {
            if mesh.is_boundary_vertex(v) {
                continue;
            }
            for c in 0..m {
                f.values[v * m + c] = rng.gen_range(-amplitude..=amplitude);
            }
        }
        starts.push(f);
    }
    starts
}
