//! Kuhn-triangulated box meshes and piecewise-affine (P1) fields.
//!
//! Every mesh covers an axis-aligned box split into equal subcubes, each
//! subcube split into `d!` simplices along the same diagonal. Two properties
//! carry the whole crate: triangulations of the unit cell and of its integer
//! dilations nest exactly under tiling, and dyadic refinements nest exactly
//! as P1 spaces. Gradients of P1 fields are elementwise constant and exact.

use std::sync::Arc;

use crate::density::Integrand;
use crate::extreal::ExtReal;
use crate::matrix::Matrix;

const MAX_D: usize = 3;

/// Lexicographic permutations of `0..d`, the per-subcube simplex order.
fn permutations(d: usize) -> Vec<Vec<usize>> {
    match d {
        1 => vec![vec![0]],
        2 => vec![vec![0, 1], vec![1, 0]],
        3 => vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ],
        _ => panic!("dimension {d} out of the supported range 1..=3"),
    }
}

fn factorial(d: usize) -> usize {
    (1..=d).product()
}

/// One simplex: vertex ids, volume, and exact P1 shape-function gradients.
#[derive(Clone, Debug)]
pub struct Simplex {
    pub vertices: [usize; MAX_D + 1],
    pub volume: f64,
    /// `grads[j]` is the gradient of the shape function of local vertex `j`.
    pub grads: [[f64; MAX_D]; MAX_D + 1],
}

/// Simplicial mesh of an axis-aligned box `[origin, origin + cells*step]^d`.
#[derive(Debug)]
pub struct SimplicialMesh {
    d: usize,
    /// Cube scale label: meshes built by [`build_mesh`] cover `(0,k)^d`.
    k: usize,
    /// Subdivisions per unit length (grid step is `1/n` for cube meshes).
    n: usize,
    cells: usize,
    step: f64,
    origin: Vec<f64>,
    vertices: Vec<f64>,
    simplices: Vec<Simplex>,
    boundary: Vec<bool>,
}

/// Mesh of the scaled unit cube `(0,k)^d` with `n` subdivisions per unit:
/// `(kn)^d` subcubes, each split into `d!` simplices, `(kn+1)^d` vertices.
pub fn build_mesh(d: usize, k: usize, n: usize) -> SimplicialMesh {
    assert!((1..=MAX_D).contains(&d), "dimension {d} not in 1..=3");
    assert!(k >= 1 && n >= 1);
    SimplicialMesh::build(d, k, n, k * n, 1.0 / n as f64, vec![0.0; d])
}

/// Mesh of a general box with `cells` subdivisions per axis.
pub fn build_box_mesh(d: usize, origin: &[f64], side: f64, cells: usize) -> SimplicialMesh {
    assert!((1..=MAX_D).contains(&d));
    assert_eq!(origin.len(), d);
    assert!(side > 0.0 && cells >= 1);
    SimplicialMesh::build(d, 1, cells, cells, side / cells as f64, origin.to_vec())
}

impl SimplicialMesh {
    fn build(d: usize, k: usize, n: usize, cells: usize, step: f64, origin: Vec<f64>) -> Self {
        let nv_axis = cells + 1;
        let nv = nv_axis.pow(d as u32);
        let mut vertices = vec![0.0; nv * d];
        let mut boundary = vec![false; nv];
        let mut idx = vec![0usize; d];
        for v in 0..nv {
            let mut rem = v;
            let mut on_boundary = false;
            for a in 0..d {
                idx[a] = rem % nv_axis;
                rem /= nv_axis;
                vertices[v * d + a] = origin[a] + idx[a] as f64 * step;
                on_boundary |= idx[a] == 0 || idx[a] == cells;
            }
            boundary[v] = on_boundary;
        }

        let perms = permutations(d);
        let n_cells = cells.pow(d as u32);
        let volume = step.powi(d as i32) / factorial(d) as f64;
        let mut simplices = Vec::with_capacity(n_cells * perms.len());
        let stride = |a: usize| nv_axis.pow(a as u32);
        let mut cell_idx = vec![0usize; d];
        for cell in 0..n_cells {
            let mut rem = cell;
            for a in 0..d {
                cell_idx[a] = rem % cells;
                rem /= cells;
            }
            let base: usize = (0..d).map(|a| cell_idx[a] * stride(a)).sum();
            for perm in &perms {
                let mut vs = [0usize; MAX_D + 1];
                let mut grads = [[0.0; MAX_D]; MAX_D + 1];
                let mut acc = base;
                vs[0] = acc;
                for (j, &axis) in perm.iter().enumerate() {
                    acc += stride(axis);
                    vs[j + 1] = acc;
                }
                // Exact shape gradients of the Kuhn chain: the first vertex
                // loses along the first axis walked, interior vertices see
                // the difference of consecutive axes, the last one gains.
                grads[0][perm[0]] = -1.0 / step;
                for j in 1..d {
                    grads[j][perm[j - 1]] = 1.0 / step;
                    grads[j][perm[j]] = -1.0 / step;
                }
                grads[d][perm[d - 1]] = 1.0 / step;
                simplices.push(Simplex {
                    vertices: vs,
                    volume,
                    grads,
                });
            }
        }

        SimplicialMesh {
            d,
            k,
            n,
            cells,
            step,
            origin,
            vertices,
            simplices,
            boundary,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn scale_k(&self) -> usize {
        self.k
    }

    pub fn subdivisions_n(&self) -> usize {
        self.n
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn side(&self) -> f64 {
        self.cells as f64 * self.step
    }

    pub fn num_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertices[v * self.d..(v + 1) * self.d]
    }

    pub fn simplex(&self, s: usize) -> &Simplex {
        &self.simplices[s]
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn num_boundary_vertices(&self) -> usize {
        self.boundary.iter().filter(|b| **b).count()
    }

    pub fn total_volume(&self) -> f64 {
        self.simplices.iter().map(|s| s.volume).sum()
    }

    /// Barycenter of simplex `s` in physical coordinates.
    pub fn barycenter(&self, s: usize) -> Vec<f64> {
        let sx = &self.simplices[s];
        let mut c = vec![0.0; self.d];
        for j in 0..=self.d {
            let p = self.vertex(sx.vertices[j]);
            for a in 0..self.d {
                c[a] += p[a];
            }
        }
        for a in 0..self.d {
            c[a] /= (self.d + 1) as f64;
        }
        c
    }

    /// Locates `x` (clamped into the box) and returns the containing simplex
    /// with barycentric coordinates, by sorting local cell coordinates.
    pub fn locate(&self, x: &[f64]) -> (usize, Vec<f64>) {
        assert_eq!(x.len(), self.d);
        let mut cell = vec![0usize; self.d];
        let mut local = vec![0.0f64; self.d];
        for a in 0..self.d {
            let t = (x[a] - self.origin[a]) / self.step;
            let c = (t.floor() as isize).clamp(0, self.cells as isize - 1) as usize;
            cell[a] = c;
            local[a] = (t - c as f64).clamp(0.0, 1.0);
        }
        // Descending sort of local coordinates picks the Kuhn chain.
        let mut order: Vec<usize> = (0..self.d).collect();
        order.sort_by(|&i, &j| local[j].partial_cmp(&local[i]).unwrap().then(i.cmp(&j)));
        let perms = permutations(self.d);
        let perm_index = perms.iter().position(|p| *p == order).unwrap();
        let cell_lin: usize = {
            let mut lin = 0usize;
            for a in (0..self.d).rev() {
                lin = lin * self.cells + cell[a];
            }
            lin
        };
        let s = cell_lin * perms.len() + perm_index;
        let mut bary = vec![0.0; self.d + 1];
        bary[0] = 1.0 - local[order[0]];
        for j in 1..self.d {
            bary[j] = local[order[j - 1]] - local[order[j]];
        }
        bary[self.d] = local[order[self.d - 1]];
        (s, bary)
    }

    /// Plain-text vertex/simplex listing for debugging.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "mesh d={} cells={} step={}\nvertices {}\n",
            self.d,
            self.cells,
            self.step,
            self.num_vertices()
        ));
        for v in 0..self.num_vertices() {
            let coords: Vec<String> = self.vertex(v).iter().map(|c| format!("{c}")).collect();
            out.push_str(&format!("v {} {}\n", v, coords.join(" ")));
        }
        out.push_str(&format!("simplices {}\n", self.num_simplices()));
        for (i, s) in self.simplices.iter().enumerate() {
            let ids: Vec<String> = s.vertices[..=self.d]
                .iter()
                .map(|v| v.to_string())
                .collect();
            out.push_str(&format!("s {} {}\n", i, ids.join(" ")));
        }
        out
    }
}

/// Axis-aligned box `origin + (0, side)^d`, the target geometry of cell
/// packings, oscillation lattices and recovery domains.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSpec {
    pub origin: Vec<f64>,
    pub side: f64,
}

impl BoxSpec {
    pub fn new(origin: Vec<f64>, side: f64) -> Self {
        assert!(side > 0.0);
        assert!(!origin.is_empty() && origin.len() <= MAX_D);
        BoxSpec { origin, side }
    }

    pub fn unit(d: usize) -> Self {
        BoxSpec::new(vec![0.0; d], 1.0)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    pub fn contains_box(&self, other_origin: &[f64], other_side: f64, tol: f64) -> bool {
        (0..self.dim()).all(|a| {
            other_origin[a] >= self.origin[a] - tol
                && other_origin[a] + other_side <= self.origin[a] + self.side + tol
        })
    }

    pub fn contains_point(&self, x: &[f64], tol: f64) -> bool {
        (0..self.dim())
            .all(|a| x[a] >= self.origin[a] - tol && x[a] <= self.origin[a] + self.side + tol)
    }
}

/// Quadrature rule on the reference simplex: barycentric points and weights
/// that sum to one, so the rule is an average.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<(Vec<f64>, f64)>,
}

impl QuadratureRule {
    /// One-point barycenter rule; exact whenever the integrand is constant
    /// per element, which covers every x-independent density here.
    pub fn midpoint(d: usize) -> Self {
        let p = vec![1.0 / (d + 1) as f64; d + 1];
        QuadratureRule {
            points: vec![(p, 1.0)],
        }
    }

    /// Four-point rule for oscillating coefficients: quarter-interval
    /// midpoints in 1D, centroid plus half-blended vertices in 2D, the
    /// degree-2 rule in 3D. Positive weights, exact on affine integrands.
    pub fn refined(d: usize) -> Self {
        let points = match d {
            1 => [0.125, 0.375, 0.625, 0.875]
                .iter()
                .map(|&x| (vec![1.0 - x, x], 0.25))
                .collect(),
            2 => {
                let mut pts = vec![(vec![1.0 / 3.0; 3], 0.25)];
                for i in 0..3 {
                    let mut p = vec![1.0 / 6.0; 3];
                    p[i] = 2.0 / 3.0;
                    pts.push((p, 0.25));
                }
                pts
            }
            3 => {
                let a = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
                let b = (5.0 - 5f64.sqrt()) / 20.0;
                (0..4)
                    .map(|i| {
                        let mut p = vec![b; 4];
                        p[i] = a;
                        (p, 0.25)
                    })
                    .collect()
            }
            _ => panic!("dimension {d} not in 1..=3"),
        };
        QuadratureRule { points }
    }
}

/// Piecewise-affine vector field on a mesh, vertex values flattened as
/// `values[v * m + c]`.
#[derive(Clone)]
pub struct PwAffineField {
    pub mesh: Arc<SimplicialMesh>,
    pub m: usize,
    pub values: Vec<f64>,
    pub zero_boundary: bool,
}

impl PwAffineField {
    pub fn zeros(mesh: Arc<SimplicialMesh>, m: usize, zero_boundary: bool) -> Self {
        let values = vec![0.0; mesh.num_vertices() * m];
        PwAffineField {
            mesh,
            m,
            values,
            zero_boundary,
        }
    }

    /// Vertex interpolation of a function; no boundary mask.
    pub fn interpolate(
        mesh: Arc<SimplicialMesh>,
        m: usize,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let mut values = vec![0.0; mesh.num_vertices() * m];
        for v in 0..mesh.num_vertices() {
            let fv = f(mesh.vertex(v));
            assert_eq!(fv.len(), m);
            values[v * m..(v + 1) * m].copy_from_slice(&fv);
        }
        PwAffineField {
            mesh,
            m,
            values,
            zero_boundary: false,
        }
    }

    /// Interpolation followed by zeroing of every boundary vertex.
    pub fn interpolate_zero_boundary(
        mesh: Arc<SimplicialMesh>,
        m: usize,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let mut field = Self::interpolate(mesh, m, f);
        field.zero_boundary = true;
        field.enforce_zero_boundary();
        field
    }

    /// The affine field `u(x) = A x`.
    pub fn affine(mesh: Arc<SimplicialMesh>, a: &Matrix) -> Self {
        let m = a.nrows();
        let d = mesh.dim();
        assert_eq!(a.ncols(), d);
        Self::interpolate(mesh, m, |x| {
            (0..m)
                .map(|r| (0..d).map(|c| a[(r, c)] * x[c]).sum())
                .collect()
        })
    }

    pub fn enforce_zero_boundary(&mut self) {
        if !self.zero_boundary {
            return;
        }
        for v in 0..self.mesh.num_vertices() {
            if self.mesh.is_boundary_vertex(v) {
                for c in 0..self.m {
                    self.values[v * self.m + c] = 0.0;
                }
            }
        }
    }

    pub fn boundary_values_vanish(&self) -> bool {
        (0..self.mesh.num_vertices()).all(|v| {
            !self.mesh.is_boundary_vertex(v)
                || (0..self.m).all(|c| self.values[v * self.m + c] == 0.0)
        })
    }

    pub fn vertex_value(&self, v: usize) -> &[f64] {
        &self.values[v * self.m..(v + 1) * self.m]
    }

    /// Constant `m x d` Jacobian on simplex `s`; exact, no differencing.
    pub fn gradient(&self, s: usize) -> Matrix {
        let d = self.mesh.dim();
        let sx = self.mesh.simplex(s);
        assert!(sx.volume > 0.0, "degenerate simplex {s}");
        let mut g = Matrix::zeros(self.m, d);
        for j in 0..=d {
            let val = self.vertex_value(sx.vertices[j]);
            for c in 0..self.m {
                for a in 0..d {
                    g[(c, a)] += val[c] * sx.grads[j][a];
                }
            }
        }
        g
    }

    /// P1 evaluation at an arbitrary point (clamped into the box).
    pub fn eval_at(&self, x: &[f64]) -> Vec<f64> {
        let (s, bary) = self.mesh.locate(x);
        let sx = self.mesh.simplex(s);
        let mut out = vec![0.0; self.m];
        for j in 0..=self.mesh.dim() {
            let val = self.vertex_value(sx.vertices[j]);
            for c in 0..self.m {
                out[c] += bary[j] * val[c];
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// `(integral of |u - v|^p)^(1/p)` by per-element quadrature; both fields
    /// must live on the same mesh.
    pub fn lp_distance(&self, other: &PwAffineField, p: f64, rule: &QuadratureRule) -> f64 {
        assert!(Arc::ptr_eq(&self.mesh, &other.mesh) || same_grid(&self.mesh, &other.mesh));
        let d = self.mesh.dim();
        let mut acc = 0.0;
        for s in 0..self.mesh.num_simplices() {
            let sx = self.mesh.simplex(s);
            for (bary, w) in &rule.points {
                let mut norm2 = 0.0;
                for c in 0..self.m {
                    let mut diff = 0.0;
                    for j in 0..=d {
                        let v = sx.vertices[j];
                        diff +=
                            bary[j] * (self.values[v * self.m + c] - other.values[v * self.m + c]);
                    }
                    norm2 += diff * diff;
                }
                acc += sx.volume * w * norm2.sqrt().powf(p);
            }
        }
        acc.powf(1.0 / p)
    }

    /// Field on `target` sampling this field's periodic extension with the
    /// given period (the values repeat; zero-boundary sources stay
    /// continuous). Exact when grids are nested; the zero-boundary mask
    /// carries over and is re-enforced on the target.
    pub fn periodic_extension(&self, target: Arc<SimplicialMesh>, period: f64) -> PwAffineField {
        let d = self.mesh.dim();
        assert_eq!(target.dim(), d);
        let src = self;
        let mut out = PwAffineField::interpolate(target, self.m, |x| {
            let wrapped: Vec<f64> = x.iter().map(|v| v.rem_euclid(period)).collect();
            src.eval_at(&wrapped)
        });
        out.zero_boundary = self.zero_boundary;
        out.enforce_zero_boundary();
        out
    }
}

fn same_grid(a: &SimplicialMesh, b: &SimplicialMesh) -> bool {
    a.dim() == b.dim()
        && a.cells_per_axis() == b.cells_per_axis()
        && (a.step() - b.step()).abs() < 1e-14
        && a.origin()
            .iter()
            .zip(b.origin())
            .all(|(x, y)| (x - y).abs() < 1e-14)
}

/// Integral of `W(x[/eps], xi + grad u)` over the mesh. Infinity at any
/// quadrature point makes the whole integral infinite. Summation order is
/// fixed (simplex-major) for reproducibility.
pub fn energy(
    integrand: &dyn Integrand,
    xi: &Matrix,
    field: &PwAffineField,
    eps: Option<f64>,
    rule: &QuadratureRule,
) -> ExtReal {
    let mesh = &field.mesh;
    let d = mesh.dim();
    assert_eq!(xi.nrows(), field.m);
    assert_eq!(xi.ncols(), d);
    if let Some(e) = eps {
        assert!(e > 0.0);
    }
    let mut acc = 0.0f64;
    let mut x = vec![0.0; d];
    for s in 0..mesh.num_simplices() {
        let sx = mesh.simplex(s);
        let total = xi + field.gradient(s);
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
            if let Some(e) = eps {
                for a in 0..d {
                    x[a] /= e;
                }
            }
            match integrand.eval(&x, &total) {
                ExtReal::Finite(v) => acc += sx.volume * w * v,
                ExtReal::Infinity => return ExtReal::Infinity,
            }
        }
    }
    ExtReal::new(acc)
}

/// True when the oscillation scale is too coarse for the mesh: fewer than
/// four mesh cells per axis and unit of `1/eps` (the `eps * n * k < 4` rule).
pub fn oscillation_under_resolved(mesh: &SimplicialMesh, eps: f64) -> bool {
    eps * (mesh.cells_per_axis() as f64) < 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{ConstraintSet, EnergyDensity};
    use crate::matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quad_density() -> EnergyDensity {
        EnergyDensity::new(
            |_x: &[f64], xi: &Matrix| ExtReal::new(matrix::frobenius(xi).powi(2)),
            false,
            1.0,
            2.0,
            ConstraintSet::full(),
        )
    }

    #[test]
    fn interval_mesh_counts() {
        let mesh = build_mesh(1, 1, 4);
        assert_eq!(mesh.num_simplices(), 4);
        assert_eq!(mesh.num_vertices(), 5);
        assert_eq!(mesh.num_boundary_vertices(), 2);
    }

    #[test]
    fn unit_square_mesh_counts_and_area() {
        let mesh = build_mesh(2, 1, 2);
        assert_eq!(mesh.num_simplices(), 8);
        assert_eq!(mesh.num_vertices(), 9);
        // Exactly the rim vertices carry the boundary mask.
        assert_eq!(mesh.num_boundary_vertices(), 8);
        assert_relative_eq!(mesh.total_volume(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn scaled_square_mesh_counts_and_area() {
        let mesh = build_mesh(2, 3, 2);
        assert_eq!(mesh.num_simplices(), 72);
        assert_relative_eq!(mesh.total_volume(), 9.0, max_relative = 1e-12);
    }

    #[test]
    fn cube_mesh_tiles() {
        let mesh = build_mesh(3, 1, 2);
        assert_eq!(mesh.num_simplices(), 8 * 6);
        assert_relative_eq!(mesh.total_volume(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn affine_reproduction_exact() {
        for d in 1..=3 {
            let mesh = Arc::new(build_mesh(d, 1, 2));
            let a = Matrix::from_fn(2, d, |r, c| (r + 2 * c) as f64 * 0.5 - 0.7);
            let field = PwAffineField::affine(mesh.clone(), &a);
            for s in 0..mesh.num_simplices() {
                let g = field.gradient(s);
                assert_relative_eq!((g - a.clone()).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hat_function_gradients() {
        // d=1, n=2 hat peaking 0.5 at the midpoint of (0,1).
        let mesh = Arc::new(build_mesh(1, 1, 2));
        let field =
            PwAffineField::interpolate_zero_boundary(mesh, 1, |x| vec![0.5 - (x[0] - 0.5).abs()]);
        let g0 = field.gradient(0);
        let g1 = field.gradient(1);
        assert_relative_eq!(g0[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(g1[(0, 0)], -1.0, max_relative = 1e-12);
    }

    #[test]
    fn energy_of_constant_gradient_field() {
        let density = quad_density();
        for d in 1..=2usize {
            let mesh = Arc::new(build_mesh(d, 2, 3));
            let field = PwAffineField::zeros(mesh.clone(), 1, true);
            let xi = Matrix::from_fn(1, d, |_, c| 0.3 + c as f64);
            let expect = matrix::frobenius(&xi).powi(2) * (2f64).powi(d as i32);
            let e = energy(&density, &xi, &field, None, &QuadratureRule::midpoint(d));
            assert_relative_eq!(e.to_f64(), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn energy_zero_field_zero_offset() {
        let density = quad_density();
        let mesh = Arc::new(build_mesh(1, 1, 8));
        let field = PwAffineField::zeros(mesh, 1, true);
        let e = energy(
            &density,
            &Matrix::zeros(1, 1),
            &field,
            None,
            &QuadratureRule::midpoint(1),
        );
        assert_eq!(e, ExtReal::ZERO);
    }

    #[test]
    fn piecewise_coefficient_integral_by_midpoint() {
        // c = 1 on [0, 1/2), 2 on [1/2, 1), xi = 1, u = 0: integral 1.5.
        let density = EnergyDensity::new(
            |x: &[f64], xi: &Matrix| {
                let c = if x[0].rem_euclid(1.0) < 0.5 { 1.0 } else { 2.0 };
                ExtReal::new(c * xi[(0, 0)] * xi[(0, 0)])
            },
            true,
            1.0,
            2.0,
            ConstraintSet::full(),
        );
        let mesh = Arc::new(build_mesh(1, 1, 8));
        let field = PwAffineField::zeros(mesh, 1, true);
        let e = energy(
            &density,
            &Matrix::from_row_slice(1, 1, &[1.0]),
            &field,
            None,
            &QuadratureRule::midpoint(1),
        );
        assert_relative_eq!(e.to_f64(), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn tiling_energy_identity() {
        // A Y-field tiled periodically onto a matched kY-mesh has exactly
        // k^d times the Y energy for x-independent densities.
        let density = quad_density();
        for d in 1..=2usize {
            let unit = Arc::new(build_mesh(d, 1, 4));
            let hat = PwAffineField::interpolate_zero_boundary(unit.clone(), 1, |x| {
                vec![x.iter().map(|v| v * (1.0 - v)).product()]
            });
            let k = 3usize;
            let tiled_mesh = Arc::new(build_mesh(d, k, 4));
            let tiled = hat.periodic_extension(tiled_mesh, 1.0);
            let xi = Matrix::from_fn(1, d, |_, _| 0.25);
            let rule = QuadratureRule::midpoint(d);
            let e1 = energy(&density, &xi, &hat, None, &rule).to_f64();
            let ek = energy(&density, &xi, &tiled, None, &rule).to_f64();
            assert_relative_eq!(ek, (k as f64).powi(d as i32) * e1, max_relative = 1e-12);
        }
    }

    #[test]
    fn locate_and_eval_roundtrip() {
        let mesh = Arc::new(build_mesh(2, 1, 4));
        let a = Matrix::from_row_slice(1, 2, &[0.7, -0.4]);
        let field = PwAffineField::affine(mesh, &a);
        for x in [[0.1, 0.9], [0.5, 0.5], [0.999, 0.001], [0.0, 1.0]] {
            let v = field.eval_at(&x)[0];
            assert_relative_eq!(v, 0.7 * x[0] - 0.4 * x[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn point_location_roundtrip_in_3d() {
        let mesh = Arc::new(build_mesh(3, 1, 3));
        let a = Matrix::from_row_slice(1, 3, &[0.7, -0.4, 0.2]);
        let field = PwAffineField::affine(mesh, &a);
        for x in [
            [0.1, 0.9, 0.5],
            [0.33, 0.33, 0.34],
            [0.999, 0.001, 0.5],
            [1.0, 1.0, 1.0],
        ] {
            let expect = 0.7 * x[0] - 0.4 * x[1] + 0.2 * x[2];
            assert_relative_eq!(field.eval_at(&x)[0], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for d in 1..=3 {
            for rule in [QuadratureRule::midpoint(d), QuadratureRule::refined(d)] {
                let total: f64 = rule.points.iter().map(|(_, w)| w).sum();
                assert_relative_eq!(total, 1.0, max_relative = 1e-14);
                assert!(rule.points.iter().all(|(_, w)| *w > 0.0));
                for (p, _) in &rule.points {
                    assert_relative_eq!(p.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn export_text_lists_everything() {
        let mesh = build_mesh(1, 1, 2);
        let txt = mesh.export_text();
        assert!(txt.contains("vertices 3"));
        assert!(txt.contains("simplices 2"));
    }

    proptest! {
        #[test]
        fn mesh_volumes_tile_exactly(d in 1usize..=3, k in 1usize..=2, n in 1usize..=3) {
            let mesh = build_mesh(d, k, n);
            let expect = (k as f64).powi(d as i32);
            prop_assert!((mesh.total_volume() - expect).abs() <= 1e-12 * expect);
            prop_assert!(mesh.simplices().iter().all(|s| s.volume > 0.0));
        }

        #[test]
        fn p1_eval_is_exact_on_affine(
            d in 1usize..=2,
            a0 in -2.0..2.0f64,
            a1 in -2.0..2.0f64,
            px in 0.0..1.0f64,
            py in 0.0..1.0f64,
        ) {
            let mesh = Arc::new(build_mesh(d, 1, 3));
            let a = Matrix::from_fn(1, d, |_, c| if c == 0 { a0 } else { a1 });
            let field = PwAffineField::affine(mesh, &a);
            let x: Vec<f64> = [px, py][..d].to_vec();
            let expect: f64 = (0..d).map(|c| a[(0, c)] * x[c]).sum();
            prop_assert!((field.eval_at(&x)[0] - expect).abs() < 1e-12);
        }
    }
}
