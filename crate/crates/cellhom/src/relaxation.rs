//! Unit-cell relaxation and the Vitali energy-transfer construction.
//!
//! `z_value` lowers a matrix function by minimizing its unit-cell average
//! over zero-boundary P1 fields on dyadic meshes: laminate microstructures
//! (alternating slopes) are exactly representable there, which is what
//! realizes the relaxation of double-well densities. `vitali_pack` fills a
//! box with disjoint scaled copies of the unit cell, and `vitali_transfer`
//! copies a unit-cell test field into every cell with an exact mean-energy
//! identity and a sup-norm that shrinks with the cell cap.

use std::sync::Arc;

use serde::Serialize;

use crate::density::{classify_point, EnergyDensity, Homogeneous, MatrixFn, PointClass};
use crate::extreal::ExtReal;
use crate::homogenize::HwMemo;
use crate::matrix::Matrix;
use crate::mesh::{build_box_mesh, build_mesh, energy, BoxSpec, PwAffineField, QuadratureRule};
use crate::optimize::{self, EnergyObjective, OptimizerConfig};
use crate::ruusc;

/// Result of one unit-cell relaxation.
#[derive(Clone)]
pub struct ZResult {
    pub xi: Matrix,
    pub level: usize,
    pub value: ExtReal,
    /// Best zero-boundary witness on the level mesh, when one exists.
    pub witness: Option<PwAffineField>,
}

/// Relaxed value of `L` at `xi` over zero-boundary P1 fields on the unit
/// cell at mesh `n = 2^level`. The zero field is always a start, so the
/// value never exceeds `L(xi)`; an alternating-slope start seeds the
/// laminate branch of double-well shapes.
pub fn z_value(l: &dyn MatrixFn, xi: &Matrix, level: usize, cfg: &OptimizerConfig) -> ZResult {
    let d = xi.ncols();
    let m = xi.nrows();
    let n = 1usize << level;
    let mesh = Arc::new(build_mesh(d, 1, n));
    let integrand = Homogeneous(FnRef(l));
    let objective = EnergyObjective::new(&integrand, xi.clone(), None, cfg.h_fd);
    let mut starts =
        optimize::default_starts(&mesh, m, cfg.multistart, 0.1 * mesh.step(), cfg.seed);
    // Alternating slopes +-1/2 along the first axis: the laminate seed.
    let step = mesh.step();
    starts.push(PwAffineField::interpolate_zero_boundary(
        mesh.clone(),
        m,
        |x| {
            let t = x[0] / step;
            let tri = 0.5 * step * (1.0 - (t.rem_euclid(2.0) - 1.0).abs());
            let mut v = vec![0.0; m];
            // Vanish on the whole cell boundary in higher dimensions.
            let mut bump = 1.0;
            for a in 1..d {
                bump *= 4.0 * x[a] * (1.0 - x[a]);
            }
            v[0] = tri * bump;
            v
        },
    ));
    match optimize::multistart(&objective, &starts, cfg) {
        Ok(r) => ZResult {
            xi: xi.clone(),
            level,
            value: r.value,
            witness: Some(r.argmin),
        },
        Err(_) => ZResult {
            xi: xi.clone(),
            level,
            value: ExtReal::Infinity,
            witness: None,
        },
    }
}

/// Borrow adapter so a `&dyn MatrixFn` can feed the integrand machinery.
struct FnRef<'a>(&'a dyn MatrixFn);

impl MatrixFn for FnRef<'_> {
    fn eval(&self, xi: &Matrix) -> ExtReal {
        self.0.eval(xi)
    }
    fn grad(&self, xi: &Matrix) -> Option<Matrix> {
        self.0.grad(xi)
    }
}

/// Disjoint scaled copies of the unit cell packed into a box.
#[derive(Clone, Debug, Serialize)]
pub struct VitaliCovering {
    pub region_origin: Vec<f64>,
    pub region_side: f64,
    /// `(origin, scale)` per cell: the cell is `origin + scale * (0,1)^d`.
    pub cells: Vec<(Vec<f64>, f64)>,
    pub residual_volume: f64,
    /// False when the residual target was unreachable within the cell cap.
    pub complete: bool,
}

impl VitaliCovering {
    pub fn region(&self) -> BoxSpec {
        BoxSpec::new(self.region_origin.clone(), self.region_side)
    }

    pub fn covered_volume(&self) -> f64 {
        let d = self.region_origin.len() as i32;
        self.cells.iter().map(|(_, a)| a.powi(d)).sum()
    }

    pub fn max_scale(&self) -> f64 {
        self.cells.iter().fold(0.0f64, |acc, (_, a)| acc.max(*a))
    }

    /// Index of the cell containing `x`, if any (cells are disjoint).
    pub fn cell_containing(&self, x: &[f64]) -> Option<usize> {
        self.cells.iter().position(|(o, a)| {
            (0..o.len()).all(|i| x[i] >= o[i] - 1e-14 && x[i] <= o[i] + a + 1e-14)
        })
    }
}

const VITALI_MAX_CELLS: usize = 262_144;
const VITALI_MAX_LEVELS: usize = 40;

/// Greedy dyadic packing: tile with the largest power-of-two cell side
/// strictly below the cap, then refine the uncovered shell level by level
/// until the residual target is met. Deterministic (levels descending in
/// size, cells lexicographic); flagged incomplete when the cap on cell
/// count stops the refinement first.
pub fn vitali_pack(region: &BoxSpec, diameter_cap: f64, residual_tol: f64) -> VitaliCovering {
    assert!(diameter_cap > 0.0 && residual_tol >= 0.0);
    let d = region.dim();
    let total = region.volume();

    // Largest alpha = 2^j with alpha < cap and alpha <= side.
    let mut alpha = 2f64.powi(diameter_cap.log2().floor() as i32);
    if alpha >= diameter_cap {
        alpha /= 2.0;
    }
    while alpha > region.side {
        alpha /= 2.0;
    }

    let mut cells: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut covered = 0.0f64;
    let mut complete = false;
    for _ in 0..VITALI_MAX_LEVELS {
        let per_axis = ((region.side / alpha) + 1e-12).floor() as usize;
        if per_axis > 0 {
            let candidates = count_grid(per_axis, d);
            for lin in 0..candidates {
                let mut rem = lin;
                let mut origin = vec![0.0; d];
                for a in 0..d {
                    origin[a] = region.origin[a] + (rem % per_axis) as f64 * alpha;
                    rem /= per_axis;
                }
                // Skip anything overlapping an already placed (coarser) cell.
                let mut center = origin.clone();
                for c in center.iter_mut() {
                    *c += 0.5 * alpha;
                }
                if cells
                    .iter()
                    .any(|(o, s)| (0..d).all(|a| center[a] > o[a] && center[a] < o[a] + s))
                {
                    continue;
                }
                if !region.contains_box(&origin, alpha, 1e-12) {
                    continue;
                }
                covered += alpha.powi(d as i32);
                cells.push((origin, alpha));
                if cells.len() >= VITALI_MAX_CELLS {
                    break;
                }
            }
        }
        if total - covered <= residual_tol * total + 1e-13 {
            complete = true;
            break;
        }
        if cells.len() >= VITALI_MAX_CELLS {
            break;
        }
        alpha /= 2.0;
    }

    VitaliCovering {
        region_origin: region.origin.clone(),
        region_side: region.side,
        cells,
        residual_volume: (total - covered).max(0.0),
        complete,
    }
}

fn count_grid(per_axis: usize, d: usize) -> usize {
    per_axis.pow(d as u32)
}

/// Both sides of the transfer identity plus the sup-norm bookkeeping.
#[derive(Clone, Debug, Serialize)]
pub struct TransferReport {
    /// Integral of `L(xi + grad)` of the assembled field over the region.
    pub lhs: ExtReal,
    /// `covered * mean_Y L(xi + grad phi) + residual * L(xi)`.
    pub rhs: ExtReal,
    pub covered_volume: f64,
    pub residual_volume: f64,
    pub sup_norm_in: f64,
    pub sup_norm_out: f64,
    /// `sup_norm_out <= max cell scale * sup_norm_in` held.
    pub sup_norm_bound_ok: bool,
}

/// Copies the unit-cell field into every cell of the covering
/// (`x -> alpha phi((x - a)/alpha)`, zero on the residual), assembles it as
/// one P1 field on a fine region mesh, and evaluates the energy identity:
/// the assembled field's energy against the covered-scaled unit-cell mean
/// plus the residual term.
pub fn vitali_transfer(
    phi: &PwAffineField,
    cover: &VitaliCovering,
    l: &dyn MatrixFn,
    xi: &Matrix,
) -> (PwAffineField, TransferReport) {
    assert!(
        phi.zero_boundary,
        "transfer needs a zero-boundary unit-cell field"
    );
    let region = cover.region();
    let d = region.dim();
    assert_eq!(phi.mesh.dim(), d);
    assert_eq!(xi.ncols(), d);
    let n_phi = phi.mesh.cells_per_axis();

    // Fine mesh step: the smallest cell's interior grid. All pack cells are
    // grid-aligned dyadic boxes, so this resolves every breakpoint exactly.
    let min_scale = cover
        .cells
        .iter()
        .fold(region.side, |acc, (_, a)| acc.min(*a));
    let fine_cells = ((region.side / min_scale).round() as usize * n_phi).max(1);
    let fine_mesh = Arc::new(build_box_mesh(d, &region.origin, region.side, fine_cells));

    let phi_ref = phi.clone();
    let cover_ref = cover.clone();
    let mut assembled = PwAffineField::interpolate(fine_mesh, phi.m, move |x| {
        match cover_ref.cell_containing(x) {
            None => vec![0.0; phi_ref.m],
            Some(i) => {
                let (o, alpha) = &cover_ref.cells[i];
                let y: Vec<f64> = x
                    .iter()
                    .zip(o)
                    .map(|(xa, oa)| ((xa - oa) / alpha).clamp(0.0, 1.0))
                    .collect();
                phi_ref.eval_at(&y).iter().map(|v| v * alpha).collect()
            }
        }
    });
    assembled.zero_boundary = true;
    assembled.enforce_zero_boundary();

    let rule = QuadratureRule::midpoint(d);
    let integrand = Homogeneous(FnRef(l));
    let lhs = energy(&integrand, xi, &assembled, None, &rule);
    let unit_mean = energy(&integrand, xi, phi, None, &rule);
    let rhs = unit_mean * cover.covered_volume() + l.eval(xi) * cover.residual_volume;

    let sup_in = phi.sup_norm();
    let sup_out = assembled.sup_norm();
    let report = TransferReport {
        lhs,
        rhs,
        covered_volume: cover.covered_volume(),
        residual_volume: cover.residual_volume,
        sup_norm_in: sup_in,
        sup_norm_out: sup_out,
        sup_norm_bound_ok: sup_out <= cover.max_scale() * sup_in + 1e-12,
    };
    (assembled, report)
}

/// Relaxation of the memoized effective density: interior offsets relax the
/// cell-value table directly; boundary offsets probe radially and report
/// the extrapolated limit; exterior offsets are infinite.
pub fn zh_value(
    density: &EnergyDensity,
    xi: &Matrix,
    level: usize,
    cfg: &OptimizerConfig,
    memo: &HwMemo,
) -> ZResult {
    // Finite differences across the memo must out-step its quantization.
    let mut cfg = cfg.clone();
    cfg.h_fd = cfg.h_fd.max(10.0 * memo.quantum);
    match classify_point(density.domain(), xi, 1e-8) {
        PointClass::Exterior => ZResult {
            xi: xi.clone(),
            level,
            value: ExtReal::Infinity,
            witness: None,
        },
        PointClass::Interior => z_value(memo, xi, level, &cfg),
        PointClass::Boundary => {
            let ray = ZRay {
                memo,
                level,
                cfg: &cfg,
            };
            let probe = ruusc::radial_probe(&ray, xi, &ruusc::default_schedule());
            let value = if probe.diverged {
                ExtReal::Infinity
            } else {
                probe.extrapolated
            };
            let witness =
                z_value(memo, &(xi * *probe.t_schedule.last().unwrap()), level, &cfg).witness;
            ZResult {
                xi: xi.clone(),
                level,
                value,
                witness,
            }
        }
    }
}

struct ZRay<'a> {
    memo: &'a HwMemo,
    level: usize,
    cfg: &'a OptimizerConfig,
}

impl MatrixFn for ZRay<'_> {
    fn eval(&self, xi: &Matrix) -> ExtReal {
        z_value(self.memo, xi, self.level, self.cfg).value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::FnMatrixFn;
    use crate::gallery;
    use crate::matrix;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_row_slice(1, 1, &[v])
    }

    fn quad() -> FnMatrixFn {
        FnMatrixFn {
            f: Arc::new(|xi: &Matrix| ExtReal::new(matrix::frobenius(xi).powi(2))),
        }
    }

    fn double_well() -> FnMatrixFn {
        FnMatrixFn {
            f: Arc::new(|xi: &Matrix| {
                let z = xi[(0, 0)];
                ExtReal::new((z * z - 1.0).powi(2))
            }),
        }
    }

    fn cfg() -> OptimizerConfig {
        OptimizerConfig {
            max_iters: 1500,
            g_tol: 1e-10,
            multistart: 4,
            seed: 2,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn convex_relaxation_changes_nothing() {
        let l = quad();
        for v in [0.0, 0.5, -1.2] {
            let r = z_value(&l, &scalar(v), 2, &cfg());
            assert_relative_eq!(r.value.to_f64(), v * v, epsilon = 1e-6);
        }
    }

    #[test]
    fn double_well_relaxes_to_zero_at_the_origin() {
        let l = double_well();
        let r = z_value(&l, &scalar(0.0), 3, &cfg());
        assert!(r.value.to_f64() <= 1e-3, "value {}", r.value);
        // Laminate oracle: min over two-slope fields with fractions 1/2.
        let oracle = (0..=2000)
            .map(|i| {
                let s = i as f64 * 1e-3;
                (s * s - 1.0f64).powi(2)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((r.value.to_f64() - oracle).abs() <= 1e-3);
    }

    #[test]
    fn well_bottom_is_already_relaxed() {
        let l = double_well();
        let r = z_value(&l, &scalar(1.0), 2, &cfg());
        assert!(r.value.to_f64() <= 1e-9);
    }

    #[test]
    fn z_never_increases() {
        let l = double_well();
        for v in [0.0, 0.3, 0.8, 1.5] {
            let r = z_value(&l, &scalar(v), 2, &cfg());
            let direct = l.eval(&scalar(v)).to_f64();
            assert!(r.value.to_f64() <= direct + 1e-9);
        }
    }

    #[test]
    fn relaxation_is_nonincreasing_in_level() {
        let l = double_well();
        let v2 = z_value(&l, &scalar(0.4), 2, &cfg()).value.to_f64();
        let v3 = z_value(&l, &scalar(0.4), 3, &cfg()).value.to_f64();
        assert!(v3 <= v2 + 1e-9);
    }

    #[test]
    fn pack_single_cell_when_cap_allows() {
        for d in 1..=2usize {
            let c = vitali_pack(&BoxSpec::unit(d), 1.1, 0.0);
            assert_eq!(c.cells.len(), 1);
            assert_relative_eq!(c.cells[0].1, 1.0);
            assert!(c.residual_volume < 1e-12);
            assert!(c.complete);
        }
    }

    #[test]
    fn pack_quarters_under_a_tight_cap() {
        let c = vitali_pack(&BoxSpec::unit(1), 0.3, 0.0);
        assert_eq!(c.cells.len(), 4);
        assert!(c.cells.iter().all(|(_, a)| (*a - 0.25).abs() < 1e-12));
        assert!(c.residual_volume < 1e-12);
    }

    #[test]
    fn pack_contract_on_square() {
        let c = vitali_pack(&BoxSpec::unit(2), 0.6, 0.01);
        assert!(c.complete);
        assert!(c.residual_volume <= 0.01 + 1e-12);
        assert!(c.cells.iter().all(|(_, a)| *a < 0.6));
        // Disjointness: centers of distinct cells never share a cell.
        for (i, (o, a)) in c.cells.iter().enumerate() {
            let center: Vec<f64> = o.iter().map(|v| v + a / 2.0).collect();
            for (j, (o2, a2)) in c.cells.iter().enumerate() {
                if i != j {
                    let inside = (0..2).all(|k| center[k] > o2[k] && center[k] < o2[k] + a2);
                    assert!(!inside, "cells {i} and {j} overlap");
                }
            }
        }
        // Volume bookkeeping.
        assert_relative_eq!(
            c.covered_volume() + c.residual_volume,
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn transfer_of_zero_field_is_the_offset_energy() {
        let phi_mesh = Arc::new(build_mesh(1, 1, 4));
        let phi = PwAffineField::zeros(phi_mesh, 1, true);
        let cover = vitali_pack(&BoxSpec::unit(1), 0.6, 0.0);
        let l = quad();
        let (_, report) = vitali_transfer(&phi, &cover, &l, &scalar(0.7));
        assert_relative_eq!(report.lhs.to_f64(), 0.49, max_relative = 1e-12);
        assert_relative_eq!(report.rhs.to_f64(), 0.49, max_relative = 1e-12);
    }

    #[test]
    fn transfer_identity_zero_residual() {
        let phi_mesh = Arc::new(build_mesh(1, 1, 4));
        let phi =
            PwAffineField::interpolate_zero_boundary(phi_mesh, 1, |x| vec![x[0] * (1.0 - x[0])]);
        let cover = vitali_pack(&BoxSpec::unit(1), 0.3, 0.0);
        let l = double_well();
        let (field, report) = vitali_transfer(&phi, &cover, &l, &scalar(0.2));
        assert!(report.residual_volume < 1e-12);
        assert_relative_eq!(
            report.lhs.to_f64(),
            report.rhs.to_f64(),
            max_relative = 1e-10
        );
        assert!(report.sup_norm_bound_ok);
        assert!(field.boundary_values_vanish());
    }

    #[test]
    fn transfer_identity_with_residual() {
        // Drop cells from a full cover to force a residual; the identity
        // must pick up the explicit residual * L(xi) term.
        let phi_mesh = Arc::new(build_mesh(1, 1, 2));
        let phi = PwAffineField::interpolate_zero_boundary(phi_mesh, 1, |x| {
            vec![0.5 - (x[0] - 0.5).abs()]
        });
        let mut cover = vitali_pack(&BoxSpec::unit(1), 0.3, 0.0);
        cover.cells.truncate(3);
        cover.residual_volume = 0.25;
        let l = quad();
        let xi = scalar(0.5);
        let (_, report) = vitali_transfer(&phi, &cover, &l, &xi);
        assert_relative_eq!(
            report.lhs.to_f64(),
            report.rhs.to_f64(),
            max_relative = 1e-10
        );
        // rhs really contains the residual correction:
        let unit_mean = {
            let rule = QuadratureRule::midpoint(1);
            let integ = Homogeneous(FnRef(&l));
            energy(&integ, &xi, &phi, None, &rule).to_f64()
        };
        assert_relative_eq!(
            report.rhs.to_f64(),
            0.75 * unit_mean + 0.25 * 0.25,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sup_norm_shrinks_with_the_cap() {
        let phi_mesh = Arc::new(build_mesh(1, 1, 2));
        let phi = PwAffineField::interpolate_zero_boundary(phi_mesh, 1, |x| {
            vec![0.5 - (x[0] - 0.5).abs()]
        });
        let l = quad();
        let mut last = f64::INFINITY;
        for cap in [0.6, 0.3, 0.15] {
            let cover = vitali_pack(&BoxSpec::unit(1), cap, 0.0);
            let (_, report) = vitali_transfer(&phi, &cover, &l, &scalar(0.0));
            assert!(report.sup_norm_out <= cap * report.sup_norm_in + 1e-12);
            assert!(report.sup_norm_out <= last);
            last = report.sup_norm_out;
        }
    }

    #[test]
    fn zh_equals_the_density_for_convex_inputs() {
        let w = gallery::conv_quad();
        let memo = HwMemo::new(w.clone(), 1, 4, cfg());
        let r = zh_value(&w, &scalar(0.5), 2, &cfg(), &memo);
        assert_relative_eq!(r.value.to_f64(), 0.25, epsilon = 1e-6);
    }

    #[test]
    fn zh_exterior_is_infinite() {
        let w = gallery::hyper2d_default();
        let memo = HwMemo::new(w.clone(), 1, 2, cfg());
        let xi = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        let r = zh_value(&w, &xi, 1, &cfg(), &memo);
        assert_eq!(r.value, ExtReal::Infinity);
    }

    #[test]
    fn zh_twophase_keeps_the_harmonic_mean() {
        // The effective density of the 1D two-phase quadratic is already
        // convex, so the relaxation step changes nothing.
        let w = gallery::twophase1d();
        let memo = HwMemo::new(w.clone(), 1, 16, cfg());
        let r = zh_value(&w, &scalar(1.0), 2, &cfg(), &memo);
        assert_relative_eq!(r.value.to_f64(), 4.0 / 3.0, max_relative = 2e-2);
    }

    #[test]
    fn relaxed_value_continuity_probe() {
        // Continuity of the relaxed double well near 0: increments scale
        // at most linearly with the step fitted from the coarser step.
        let l = double_well();
        let base = z_value(&l, &scalar(0.0), 3, &cfg()).value.to_f64();
        let coarse = z_value(&l, &scalar(1e-2), 3, &cfg()).value.to_f64();
        let c_fit = ((coarse - base).abs() / 1e-2).max(1e-6);
        let fine = z_value(&l, &scalar(1e-3), 3, &cfg()).value.to_f64();
        assert!(
            (fine - base).abs() <= c_fit * 1e-3 + 1e-9,
            "fine {fine}, base {base}, fitted slope {c_fit}"
        );
    }
}
