//! Discretized cell problems and the effective-density estimate.
//!
//! `cell_value` minimizes the mean of `W(x, xi + grad phi)` over
//! zero-boundary P1 fields on the scaled cube `(0, k)^d`; the estimate of
//! the effective density at `xi` is the min of those means over a `(k, n)`
//! grid. Two constructive devices keep the discrete table consistent with
//! the set-function structure: tiling the `k = 1` minimizer periodically
//! seeds every `k > 1` run (so `value(k) <= value(1)` up to float error),
//! and interpolating a coarse minimizer seeds every refinement (so values
//! cannot increase under `n -> 2n` on nested meshes).

use std::sync::Arc;

use dashmap::DashMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{classify_point, EnergyDensity, MatrixFn, PointClass};
use crate::extreal::ExtReal;
use crate::matrix::{self, Matrix};
use crate::mesh::{
    build_box_mesh, build_mesh, energy, BoxSpec, PwAffineField, QuadratureRule, SimplicialMesh,
};
use crate::optimize::{self, EnergyObjective, MinimizeResult, OptimizerConfig};
use crate::ruusc::{self, RadialProbe};

/// Result of one discretized cell problem, normalized per unit volume.
#[derive(Clone)]
pub struct CellResult {
    pub xi: Matrix,
    pub k: usize,
    pub n: usize,
    /// Estimate of the normalized infimum; infinite for exterior offsets or
    /// when no feasible start exists.
    pub value: ExtReal,
    pub argmin: Option<PwAffineField>,
    pub iterations: usize,
    pub converged: bool,
    pub skipped_starts: usize,
}

fn start_amplitude(mesh: &SimplicialMesh, density: &EnergyDensity) -> f64 {
    let r0 = density
        .domain()
        .zero_interior_radius()
        .unwrap_or(1.0)
        .clamp(0.0, 1.0);
    0.1 * mesh.step() * r0
}

fn cell_value_with_extra_starts(
    density: &EnergyDensity,
    xi: &Matrix,
    k: usize,
    n: usize,
    cfg: &OptimizerConfig,
    extra_starts: Vec<PwAffineField>,
) -> CellResult {
    assert!(k >= 1 && n >= 1);
    let d = xi.ncols();
    let m = xi.nrows();
    if classify_point(density.domain(), xi, 1e-8) == PointClass::Exterior {
        return CellResult {
            xi: xi.clone(),
            k,
            n,
            value: ExtReal::Infinity,
            argmin: None,
            iterations: 0,
            converged: true,
            skipped_starts: 0,
        };
    }
    let mesh = Arc::new(build_mesh(d, k, n));
    let objective = EnergyObjective::new(density, xi.clone(), None, cfg.h_fd);
    let mut starts = optimize::default_starts(
        &mesh,
        m,
        cfg.multistart,
        start_amplitude(&mesh, density),
        cfg.seed,
    );
    starts.extend(extra_starts);
    let volume = (k as f64).powi(d as i32);
    match optimize::multistart(&objective, &starts, cfg) {
        Ok(MinimizeResult {
            value,
            argmin,
            iterations,
            converged,
            skipped_starts,
            ..
        }) => CellResult {
            xi: xi.clone(),
            k,
            n,
            value: value * (1.0 / volume),
            argmin: Some(argmin),
            iterations,
            converged,
            skipped_starts,
        },
        Err(_) => CellResult {
            xi: xi.clone(),
            k,
            n,
            value: ExtReal::Infinity,
            argmin: None,
            iterations: 0,
            converged: true,
            skipped_starts: starts.len(),
        },
    }
}

/// Normalized cell value `S_xi((0,k)^d) / k^d` over zero-boundary P1 fields
/// with `n` subdivisions per unit. The zero field is always among the
/// starts, so the value never exceeds the cell mean of `W(., xi)`.
pub fn cell_value(
    density: &EnergyDensity,
    xi: &Matrix,
    k: usize,
    n: usize,
    cfg: &OptimizerConfig,
) -> CellResult {
    cell_value_with_extra_starts(density, xi, k, n, cfg, Vec::new())
}

/// One row of the effective-density table.
#[derive(Clone, Debug, Serialize)]
pub struct CellEntry {
    pub k: usize,
    pub n: usize,
    pub value: ExtReal,
    pub iterations: usize,
    pub converged: bool,
}

/// Table of normalized cell values over a `(k, n)` grid, with its min.
#[derive(Clone)]
pub struct HwEstimate {
    pub xi: Matrix,
    pub classify: PointClass,
    pub table: Vec<CellEntry>,
    pub best: ExtReal,
    /// `value(k) <= value(1) + 1e-9` held for every tabulated `k`.
    pub tiling_bound_ok: bool,
    /// Radial probe toward the boundary, for boundary offsets only.
    pub radial: Option<RadialProbe>,
    /// Best minimizers per `(k, n)`, kept for seeding downstream runs.
    pub argmins: Vec<Option<PwAffineField>>,
}

/// Effective-density estimate at `xi`: interior offsets tabulate the
/// `(k, n)` grid, boundary offsets probe radially (values along `t xi` with
/// the extrapolated limit), exterior offsets are infinite outright.
pub fn hw_estimate(
    density: &EnergyDensity,
    xi: &Matrix,
    k_list: &[usize],
    n_list: &[usize],
    cfg: &OptimizerConfig,
) -> HwEstimate {
    assert!(!k_list.is_empty() && !n_list.is_empty());
    let classify = classify_point(density.domain(), xi, 1e-8);
    match classify {
        PointClass::Exterior => HwEstimate {
            xi: xi.clone(),
            classify,
            table: Vec::new(),
            best: ExtReal::Infinity,
            tiling_bound_ok: true,
            radial: None,
            argmins: Vec::new(),
        },
        PointClass::Boundary => {
            let inner = HwRay {
                density,
                k_list,
                n_list,
                cfg,
            };
            let probe = ruusc::radial_probe(&inner, xi, &ruusc::default_schedule());
            let best = if probe.diverged {
                ExtReal::Infinity
            } else {
                probe.extrapolated
            };
            HwEstimate {
                xi: xi.clone(),
                classify,
                table: Vec::new(),
                best,
                tiling_bound_ok: true,
                radial: Some(probe),
                argmins: Vec::new(),
            }
        }
        PointClass::Interior => {
            let mut table = Vec::new();
            let mut argmins: Vec<Option<PwAffineField>> = Vec::new();
            let mut best = ExtReal::Infinity;
            let mut unit_cell: Vec<(usize, Option<PwAffineField>)> = Vec::new();
            let mut base_value: Option<ExtReal> = None;
            let mut tiling_bound_ok = true;
            for &k in k_list {
                for &n in n_list {
                    let mut extra = Vec::new();
                    // Seed with the tiled k=1 minimizer at matching n.
                    if k > 1 {
                        if let Some((_, Some(unit))) = unit_cell.iter().find(|(un, _)| *un == n) {
                            let mesh = Arc::new(build_mesh(xi.ncols(), k, n));
                            extra.push(unit.periodic_extension(mesh, 1.0));
                        }
                    }
                    // Seed with the interpolated previous (coarser) minimizer.
                    if let Some(Some(prev)) = argmins.last() {
                        let prev_entry: &CellEntry = table.last().unwrap();
                        if prev_entry.k == k {
                            let mesh = Arc::new(build_mesh(xi.ncols(), k, n));
                            let mut interp =
                                PwAffineField::interpolate(mesh, prev.m, |x| prev.eval_at(x));
                            interp.zero_boundary = true;
                            interp.enforce_zero_boundary();
                            extra.push(interp);
                        }
                    }
                    let r = cell_value_with_extra_starts(density, xi, k, n, cfg, extra);
                    if r.value < best {
                        best = r.value;
                    }
                    if k == 1 {
                        unit_cell.push((n, r.argmin.clone()));
                        if base_value.is_none() {
                            base_value = Some(r.value);
                        }
                    } else if let Some(base) = base_value {
                        if r.value.to_f64() > base.to_f64() + 1e-9 {
                            tiling_bound_ok = false;
                        }
                    }
                    table.push(CellEntry {
                        k,
                        n,
                        value: r.value,
                        iterations: r.iterations,
                        converged: r.converged,
                    });
                    argmins.push(r.argmin);
                }
            }
            HwEstimate {
                xi: xi.clone(),
                classify,
                table,
                best,
                tiling_bound_ok,
                radial: None,
                argmins,
            }
        }
    }
}

/// Ray evaluator used by the boundary branch: `t -> min cell value at t xi`.
struct HwRay<'a> {
    density: &'a EnergyDensity,
    k_list: &'a [usize],
    n_list: &'a [usize],
    cfg: &'a OptimizerConfig,
}

impl MatrixFn for HwRay<'_> {
    fn eval(&self, xi: &Matrix) -> ExtReal {
        let mut best = ExtReal::Infinity;
        for &k in self.k_list {
            for &n in self.n_list {
                let r = cell_value(self.density, xi, k, n, self.cfg);
                if r.value < best {
                    best = r.value;
                }
            }
        }
        best
    }
}

/// Memoized effective-density evaluator at fixed `(k, n)` settings, shared
/// across threads. Keys are the offset matrices quantized to `quantum`, and
/// the value is computed at the quantized representative, so install races
/// are harmless.
pub struct HwMemo {
    pub density: EnergyDensity,
    pub k: usize,
    pub n: usize,
    pub cfg: OptimizerConfig,
    pub quantum: f64,
    cache: DashMap<Vec<i64>, (ExtReal, Option<Arc<PwAffineField>>)>,
}

impl HwMemo {
    pub fn new(density: EnergyDensity, k: usize, n: usize, cfg: OptimizerConfig) -> Self {
        HwMemo {
            density,
            k,
            n,
            cfg,
            // Fine enough that relaxation over the memo cannot harvest
            // quantization noise (the attainable undershoot is about
            // |2 xi| * quantum / 2); coarse enough that finite-difference
            // probes still step across distinct keys.
            quantum: 1e-8,
            cache: DashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    /// Value and minimizer at the quantized representative of `xi`.
    pub fn eval_full(&self, xi: &Matrix) -> (ExtReal, Option<Arc<PwAffineField>>) {
        let key = matrix::quantize(xi, self.quantum);
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let rep = Matrix::from_fn(xi.nrows(), xi.ncols(), |r, c| {
            key[c * xi.nrows() + r] as f64 * self.quantum
        });
        let cell = cell_value(&self.density, &rep, self.k, self.n, &self.cfg);
        let entry = (cell.value, cell.argmin.map(Arc::new));
        self.cache.entry(key).or_insert(entry.clone());
        entry
    }
}

impl MatrixFn for HwMemo {
    fn eval(&self, xi: &Matrix) -> ExtReal {
        self.eval_full(xi).0
    }
}

/// The oscillated field `eps * phi_n(x / eps)` on the lattice cells
/// `eps (z + (0, k_n)^d)` contained in the region, zero outside. `phi_n` is
/// the periodic extension of the zero-boundary inner field.
pub struct OscillationField {
    pub inner: PwAffineField,
    pub k_n: usize,
    pub eps: f64,
    pub region: BoxSpec,
    /// Smallest lattice offset per axis (cells step by `k_n`).
    pub z_min: Vec<i64>,
    /// Number of cells per axis.
    pub counts: Vec<usize>,
}

impl OscillationField {
    /// Computes the lattice of cells `eps (z + (0, k_n)^d)` contained in the
    /// region and wraps the inner field over it.
    pub fn build(inner: PwAffineField, k_n: usize, eps: f64, region: BoxSpec) -> Self {
        assert!(eps > 0.0);
        let d = region.dim();
        assert_eq!(inner.mesh.dim(), d);
        let mut z_min = vec![0i64; d];
        let mut counts = vec![0usize; d];
        for a in 0..d {
            let lo = (region.origin[a] / eps - 1e-12).ceil() as i64;
            let hi_edge = region.origin[a] + region.side;
            let mut count = 0usize;
            let mut z = lo;
            while eps * (z + k_n as i64) as f64 <= hi_edge + 1e-12 {
                count += 1;
                z += k_n as i64;
            }
            z_min[a] = lo;
            counts[a] = count;
        }
        OscillationField {
            inner,
            k_n,
            eps,
            region,
            z_min,
            counts,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_side(&self) -> f64 {
        self.eps * self.k_n as f64
    }

    pub fn covered_volume(&self) -> f64 {
        self.num_cells() as f64 * self.cell_side().powi(self.region.dim() as i32)
    }

    pub fn residual_volume(&self) -> f64 {
        (self.region.volume() - self.covered_volume()).max(0.0)
    }

    /// Lattice offsets of all cells, lexicographic.
    pub fn cells(&self) -> Vec<Vec<i64>> {
        let d = self.region.dim();
        let total = self.num_cells();
        let mut out = Vec::with_capacity(total);
        for lin in 0..total {
            let mut rem = lin;
            let mut z = vec![0i64; d];
            for a in 0..d {
                z[a] = self.z_min[a] + self.k_n as i64 * (rem % self.counts[a]) as i64;
                rem /= self.counts[a];
            }
            out.push(z);
        }
        out
    }

    fn cell_of(&self, x: &[f64]) -> Option<Vec<i64>> {
        let d = self.region.dim();
        let mut z = vec![0i64; d];
        for a in 0..d {
            let t = x[a] / self.eps;
            let idx = ((t - self.z_min[a] as f64) / self.k_n as f64).floor() as i64;
            if idx < 0 || idx >= self.counts[a] as i64 {
                return None;
            }
            z[a] = self.z_min[a] + idx * self.k_n as i64;
        }
        Some(z)
    }

    /// Field value at `x`: zero outside the covered cells.
    pub fn eval_at(&self, x: &[f64]) -> Vec<f64> {
        match self.cell_of(x) {
            None => vec![0.0; self.inner.m],
            Some(z) => {
                let y: Vec<f64> = x
                    .iter()
                    .zip(&z)
                    .map(|(xa, za)| (xa / self.eps - *za as f64).clamp(0.0, self.k_n as f64))
                    .collect();
                self.inner
                    .eval_at(&y)
                    .iter()
                    .map(|v| v * self.eps)
                    .collect()
            }
        }
    }
}

/// Both sides of the oscillation energy identity plus the uncovered volume.
#[derive(Clone, Debug, Serialize)]
pub struct OscillationReport {
    /// Integral of `W(x/eps, xi + grad)` over the covered cells, evaluated
    /// cell by cell in physical coordinates.
    pub lhs: ExtReal,
    /// Covered volume times the unit-cell mean of `W(., xi + grad phi)`.
    pub rhs: ExtReal,
    pub covered_volume: f64,
    pub residual_volume: f64,
    pub cells: usize,
}

/// Builds the oscillated field on the region and evaluates the energy
/// identity: per-cell integrals in physical coordinates on one side, the
/// scaled unit-cell mean on the other. For a 1-periodic density the two
/// routes agree to float precision.
pub fn periodic_oscillation(
    inner: &PwAffineField,
    k_n: usize,
    eps: f64,
    region: &BoxSpec,
    density: &EnergyDensity,
    xi: &Matrix,
    rule: &QuadratureRule,
) -> (OscillationField, OscillationReport) {
    assert!(eps > 0.0);
    assert!(
        inner.zero_boundary,
        "the inner field must vanish on the cell boundary"
    );
    let d = region.dim();
    assert_eq!(inner.mesh.dim(), d);
    let field = OscillationField::build(inner.clone(), k_n, eps, region.clone());

    // Independent left-hand side: integrate each covered cell in physical
    // coordinates; the density's own periodicity does the wrapping.
    let mesh = &inner.mesh;
    let mut lhs = ExtReal::ZERO;
    let scale = eps.powi(d as i32);
    let mut x = vec![0.0; d];
    'cells: for z in field.cells() {
        for s in 0..mesh.num_simplices() {
            let sx = mesh.simplex(s);
            let total = xi + inner.gradient(s);
            for (bary, w) in &rule.points {
                for a in 0..d {
                    x[a] = 0.0;
                }
                for j in 0..=d {
                    let p = mesh.vertex(sx.vertices[j]);
                    for a in 0..d {
                        x[a] += bary[j] * p[a];
                    }
                }
                for a in 0..d {
                    x[a] += z[a] as f64;
                }
                let v = density.eval(&x, &total);
                lhs += v * (scale * sx.volume * w);
                if lhs.is_infinite() {
                    break 'cells;
                }
            }
        }
    }

    let unit_mean = energy(density, xi, inner, None, rule) * (1.0 / (k_n as f64).powi(d as i32));
    let rhs = unit_mean * field.covered_volume();
    let report = OscillationReport {
        lhs,
        rhs,
        covered_volume: field.covered_volume(),
        residual_volume: field.residual_volume(),
        cells: field.num_cells(),
    };
    (field, report)
}

/// One scale of the normalized-value trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub eps: f64,
    /// Side of the blown-up domain in unit cells.
    pub k_eps: usize,
    /// Normalized value; `None` when the mesh budget was exceeded.
    pub value: Option<ExtReal>,
    /// `(k^d - (k-2)^d) / k^d`: the boundary-layer fraction that controls
    /// the convergence rate of the normalized values.
    pub counting_bound: f64,
    pub converged: bool,
}

impl TraceEntry {
    pub fn skipped(&self) -> bool {
        self.value.is_none()
    }
}

/// Normalized cell values on blow-ups `(1/eps) Q` against the reference
/// `min_k value(k)`.
#[derive(Clone)]
pub struct ConvergenceTrace {
    pub xi: Matrix,
    pub q: BoxSpec,
    pub entries: Vec<TraceEntry>,
    pub k_ref: Vec<(usize, ExtReal)>,
    pub reference: ExtReal,
}

/// Computes `S_xi((1/eps) Q) / |(1/eps) Q|` along a decreasing schedule of
/// scales, seeding each run with the tiled unit-cell minimizer. Entries
/// whose mesh would exceed `max_vertices` are skipped, not failed.
#[allow(clippy::too_many_arguments)]
pub fn subadditive_trace(
    density: &EnergyDensity,
    xi: &Matrix,
    q: &BoxSpec,
    eps_schedule: &[f64],
    k_ref_list: &[usize],
    n: usize,
    cfg: &OptimizerConfig,
    max_vertices: usize,
) -> ConvergenceTrace {
    assert!(!eps_schedule.is_empty());
    assert!(
        eps_schedule.windows(2).all(|w| w[0] > w[1]) || eps_schedule.len() == 1,
        "the scale schedule must be strictly decreasing"
    );
    assert!(
        classify_point(density.domain(), xi, 1e-8) != PointClass::Exterior,
        "exterior offsets have no finite trace"
    );
    let d = xi.ncols();

    // Reference: min over the k list, with tiled seeding.
    let unit = cell_value(density, xi, 1, n, cfg);
    let mut k_ref = Vec::new();
    let mut reference = ExtReal::Infinity;
    for &k in k_ref_list {
        let value = if k == 1 {
            unit.value
        } else {
            let mut extra = Vec::new();
            if let Some(u) = &unit.argmin {
                let mesh = Arc::new(build_mesh(d, k, n));
                extra.push(u.periodic_extension(mesh, 1.0));
            }
            cell_value_with_extra_starts(density, xi, k, n, cfg, extra).value
        };
        if value < reference {
            reference = value;
        }
        k_ref.push((k, value));
    }

    let entries: Vec<TraceEntry> = eps_schedule
        .par_iter()
        .map(|&eps| {
            let side = q.side / eps;
            let k_eps = (side - 1e-9).ceil().max(1.0) as usize;
            let boundary_frac = {
                let kd = (k_eps as f64).powi(d as i32);
                let inner = ((k_eps as f64 - 2.0).max(0.0)).powi(d as i32);
                (kd - inner) / kd
            };
            let integral = (side - side.round()).abs() < 1e-9;
            let cells = if integral {
                side.round() as usize * n
            } else {
                (side * n as f64).ceil() as usize
            };
            let vertex_count = (cells + 1).pow(d as u32);
            if vertex_count > max_vertices {
                return TraceEntry {
                    eps,
                    k_eps,
                    value: None,
                    counting_bound: boundary_frac,
                    converged: false,
                };
            }
            let (value, converged) = if integral {
                let k = side.round() as usize;
                let mut extra = Vec::new();
                if let Some(u) = &unit.argmin {
                    let mesh = Arc::new(build_mesh(d, k, n));
                    extra.push(u.periodic_extension(mesh, 1.0));
                }
                let r = cell_value_with_extra_starts(density, xi, k, n, cfg, extra);
                (r.value, r.converged)
            } else {
                // Non-integer blow-up: mesh the box directly.
                let mesh = Arc::new(build_box_mesh(d, &vec![0.0; d], side, cells));
                let objective = EnergyObjective::new(density, xi.clone(), None, cfg.h_fd);
                let mut starts = optimize::default_starts(
                    &mesh,
                    xi.nrows(),
                    cfg.multistart,
                    start_amplitude(&mesh, density),
                    cfg.seed,
                );
                if let Some(u) = &unit.argmin {
                    let mut tiled = u.periodic_extension(mesh.clone(), 1.0);
                    tiled.zero_boundary = true;
                    tiled.enforce_zero_boundary();
                    starts.push(tiled);
                }
                match optimize::multistart(&objective, &starts, cfg) {
                    Ok(r) => (r.value * (1.0 / side.powi(d as i32)), r.converged),
                    Err(_) => (ExtReal::Infinity, true),
                }
            };
            TraceEntry {
                eps,
                k_eps,
                value: Some(value),
                counting_bound: boundary_frac,
                converged,
            }
        })
        .collect();

    ConvergenceTrace {
        xi: xi.clone(),
        q: q.clone(),
        entries,
        k_ref,
        reference,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_row_slice(1, 1, &[v])
    }

    fn quick_cfg() -> OptimizerConfig {
        OptimizerConfig {
            max_iters: 800,
            g_tol: 1e-9,
            multistart: 2,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn convex_cell_value_is_pointwise() {
        // Jensen: phi = 0 is optimal for x-independent convex densities.
        let w = gallery::conv_quad();
        let cfg = quick_cfg();
        for (k, n) in [(1, 4), (2, 4), (1, 8)] {
            let r = cell_value(&w, &scalar(0.5), k, n, &cfg);
            assert_relative_eq!(r.value.to_f64(), 0.25, epsilon = 1e-9);
        }
        let xi2 = Matrix::from_row_slice(1, 2, &[0.3, -0.4]);
        let r = cell_value(&w, &xi2, 1, 3, &cfg);
        assert_relative_eq!(r.value.to_f64(), 0.25, epsilon = 1e-9);
    }

    #[test]
    fn twophase_reaches_the_harmonic_mean() {
        // Exact 1D cell solution: constant flux, value (int 1/c)^-1 xi^2.
        let w = gallery::twophase1d();
        let cfg = OptimizerConfig {
            max_iters: 4000,
            g_tol: 1e-7,
            multistart: 1,
            ..OptimizerConfig::default()
        };
        let r = cell_value(&w, &scalar(1.0), 1, 64, &cfg);
        assert!(r.converged);
        assert_relative_eq!(r.value.to_f64(), 4.0 / 3.0, max_relative = 1e-2);
    }

    #[test]
    fn zero_field_bound_holds() {
        let w = gallery::twophase1d();
        let r = cell_value(&w, &scalar(1.0), 1, 16, &quick_cfg());
        // Cell mean of W(., xi) at xi=1 is 1.5.
        assert!(r.value.to_f64() <= 1.5 + 1e-12);
    }

    #[test]
    fn exterior_offset_is_infinite_without_optimization() {
        let w = gallery::hyper2d_default();
        let xi = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        let r = cell_value(&w, &xi, 1, 2, &quick_cfg());
        assert_eq!(r.value, ExtReal::Infinity);
        assert!(r.argmin.is_none());
    }

    #[test]
    fn constrained_cell_value_respects_the_zero_field_bound() {
        // 2x2 determinant-constrained density at xi = 0: the zero field is
        // admissible, so the value cannot exceed the cell mean of W(., 0),
        // which is the barrier value at the identity (the bulk term gives 0).
        let w = gallery::hyper2d_default();
        let r = cell_value(&w, &Matrix::zeros(2, 2), 1, 2, &quick_cfg());
        let bound = crate::hyper2d::g_at_zero();
        assert!(r.value.is_finite());
        assert!(r.value.to_f64() <= bound + 1e-9, "value {}", r.value);
    }

    #[test]
    fn hw_table_and_tiling_bound() {
        let w = gallery::twophase1d();
        let est = hw_estimate(&w, &scalar(1.0), &[1, 2], &[32], &quick_cfg());
        assert_eq!(est.classify, PointClass::Interior);
        assert_eq!(est.table.len(), 2);
        assert!(est.tiling_bound_ok);
        // Period already resolved at k=1: both rows agree.
        let v1 = est.table[0].value.to_f64();
        let v2 = est.table[1].value.to_f64();
        assert_relative_eq!(v1, v2, max_relative = 1e-6);
        assert_eq!(est.best.to_f64(), v1.min(v2));
    }

    #[test]
    fn hw_exterior_is_infinite() {
        let w = gallery::hyper2d_default();
        let xi = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        let est = hw_estimate(&w, &xi, &[1], &[2], &quick_cfg());
        assert_eq!(est.classify, PointClass::Exterior);
        assert_eq!(est.best, ExtReal::Infinity);
    }

    #[test]
    fn refinement_is_monotone_on_nested_meshes() {
        let w = gallery::twophase1d();
        let est = hw_estimate(&w, &scalar(1.0), &[1], &[8, 16, 32], &quick_cfg());
        let vals: Vec<f64> = est.table.iter().map(|e| e.value.to_f64()).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "refinement increased: {vals:?}");
        }
    }

    #[test]
    fn translation_invariance_is_exact() {
        let w = gallery::twophase1d();
        let shifted = w.translated(vec![2.0]);
        let cfg = quick_cfg();
        let a = cell_value(&w, &scalar(1.0), 1, 16, &cfg);
        let b = cell_value(&shifted, &scalar(1.0), 1, 16, &cfg);
        assert_eq!(a.value.to_f64(), b.value.to_f64());
    }

    #[test]
    fn memo_caches_by_quantized_key() {
        let w = gallery::conv_quad();
        let memo = HwMemo::new(w, 1, 4, quick_cfg());
        let a = memo.eval(&scalar(0.5));
        let b = memo.eval(&scalar(0.5 + 1e-9));
        assert_eq!(a, b);
        assert_eq!(memo.len(), 1);
    }

    #[test]
    fn oscillation_exact_tiling_1d() {
        // k_n = 1, A = (0,1), eps = 1/8: 8 cells, residual 0, identity tight.
        let w = gallery::twophase1d();
        let mesh = Arc::new(build_mesh(1, 1, 8));
        let inner =
            PwAffineField::interpolate_zero_boundary(mesh, 1, |x| vec![0.1 * x[0] * (1.0 - x[0])]);
        let region = BoxSpec::unit(1);
        let (field, report) = periodic_oscillation(
            &inner,
            1,
            0.125,
            &region,
            &w,
            &scalar(1.0),
            &QuadratureRule::midpoint(1),
        );
        assert_eq!(field.num_cells(), 8);
        assert!(report.residual_volume < 1e-12);
        assert_relative_eq!(
            report.lhs.to_f64(),
            report.rhs.to_f64(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn oscillation_cell_counts_2d() {
        let w = gallery::conv_quad();
        let mesh = Arc::new(build_mesh(2, 1, 2));
        let inner = PwAffineField::zeros(mesh, 1, true);
        let region = BoxSpec::unit(2);
        let xi = Matrix::from_row_slice(1, 2, &[0.5, 0.0]);
        let rule = QuadratureRule::midpoint(2);
        let (field, report) = periodic_oscillation(&inner, 1, 1.0 / 3.0, &region, &w, &xi, &rule);
        assert_eq!(field.num_cells(), 9);
        assert!(report.residual_volume < 1e-9);

        let (field, report) = periodic_oscillation(&inner, 1, 0.3, &region, &w, &xi, &rule);
        assert_eq!(field.num_cells(), 9);
        assert_relative_eq!(report.residual_volume, 0.19, max_relative = 1e-12);
        // Zero inner field: both sides are covered volume times the mean.
        assert_relative_eq!(
            report.lhs.to_f64(),
            report.rhs.to_f64(),
            max_relative = 1e-12
        );
        assert_relative_eq!(report.lhs.to_f64(), 0.81 * 0.25, max_relative = 1e-12);
    }

    #[test]
    fn oscillation_too_coarse_leaves_everything_residual() {
        let w = gallery::conv_quad();
        let mesh = Arc::new(build_mesh(1, 1, 2));
        let inner = PwAffineField::zeros(mesh, 1, true);
        let region = BoxSpec::unit(1);
        let (field, report) = periodic_oscillation(
            &inner,
            1,
            2.0,
            &region,
            &w,
            &scalar(1.0),
            &QuadratureRule::midpoint(1),
        );
        assert_eq!(field.num_cells(), 0);
        assert_relative_eq!(report.residual_volume, 1.0, max_relative = 1e-12);
        assert_eq!(report.lhs, ExtReal::ZERO);
    }

    #[test]
    fn oscillated_field_evaluates_scaled_copies() {
        let mesh = Arc::new(build_mesh(1, 1, 2));
        let inner =
            PwAffineField::interpolate_zero_boundary(mesh, 1, |x| vec![0.5 - (x[0] - 0.5).abs()]);
        let w = gallery::conv_quad();
        let region = BoxSpec::unit(1);
        let (field, _) = periodic_oscillation(
            &inner,
            1,
            0.25,
            &region,
            &w,
            &Matrix::zeros(1, 1),
            &QuadratureRule::midpoint(1),
        );
        // Peak of each scaled bump: eps * 0.5 at cell midpoints.
        assert_relative_eq!(field.eval_at(&[0.125])[0], 0.125, epsilon = 1e-12);
        assert_relative_eq!(field.eval_at(&[0.625])[0], 0.125, epsilon = 1e-12);
        assert_relative_eq!(field.eval_at(&[0.25])[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn counting_bound_matches_the_arithmetic() {
        // k = 10, d = 2: (100 - 64) / 100.
        let w = gallery::conv_quad();
        let trace = subadditive_trace(
            &w,
            &Matrix::from_row_slice(1, 2, &[0.2, 0.0]),
            &BoxSpec::unit(2),
            &[0.1],
            &[1],
            2,
            &quick_cfg(),
            200_000,
        );
        assert_eq!(trace.entries[0].k_eps, 10);
        assert_relative_eq!(trace.entries[0].counting_bound, 0.36, max_relative = 1e-12);
    }

    #[test]
    fn convex_trace_is_flat() {
        let w = gallery::conv_quad();
        let trace = subadditive_trace(
            &w,
            &scalar(0.5),
            &BoxSpec::unit(1),
            &[0.5, 0.25],
            &[1, 2],
            8,
            &quick_cfg(),
            100_000,
        );
        assert_relative_eq!(trace.reference.to_f64(), 0.25, epsilon = 1e-9);
        for e in &trace.entries {
            assert_relative_eq!(e.value.unwrap().to_f64(), 0.25, epsilon = 1e-8);
        }
    }

    #[test]
    fn budget_cap_skips_entries() {
        let w = gallery::twophase1d();
        let trace = subadditive_trace(
            &w,
            &scalar(1.0),
            &BoxSpec::unit(1),
            &[0.5, 0.25],
            &[1],
            8,
            &quick_cfg(),
            9, // absurdly small vertex budget
        );
        assert!(trace.entries.iter().all(|e| e.skipped()));
    }
}
