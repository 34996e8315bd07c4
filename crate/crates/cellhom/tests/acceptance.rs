//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`). Every
//! tolerance is pinned here; independent oracles (pointwise identity for
//! convex densities, the 1D harmonic mean, laminate enumeration, explicit
//! residual arithmetic) provide the expected values.

use std::sync::Arc;
use std::time::Instant;

use cellhom::density::{AtPoint, Integrand, MatrixFn, PeriodicWeight, SampleSpec};
use cellhom::gallery;
use cellhom::gamma::{limsup_experiment, DomainSpec, RecoveryContext, StageParams};
use cellhom::homogenize::{cell_value, hw_estimate, subadditive_trace, HwMemo};
use cellhom::hyper2d;
use cellhom::mesh::{build_box_mesh, build_mesh, BoxSpec, PwAffineField, QuadratureRule};
use cellhom::optimize::{EnergyObjective, Objective, OptimizerConfig};
use cellhom::relaxation::{vitali_pack, vitali_transfer, z_value, zh_value};
use cellhom::ruusc::{self, lsc_envelope_oracle_1d};
use cellhom::{classify_point, ConstraintSet, EnergyDensity, ExtReal, Matrix, PointClass};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scalar(v: f64) -> Matrix {
    Matrix::from_row_slice(1, 1, &[v])
}

struct Verdict {
    id: usize,
    label: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: usize, label: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict {
        id,
        label,
        pass,
        detail,
    }
}

fn base_cfg(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        max_iters: 2000,
        g_tol: 1e-8,
        multistart: 2,
        seed,
        ..OptimizerConfig::default()
    }
}

fn criterion_1_convex_identity() -> Verdict {
    let start = Instant::now();
    let w = gallery::conv_quad();
    let cfg = base_cfg(1);
    let memo = HwMemo::new(w.clone(), 1, 4, cfg.clone());
    // Dyadic samples round-trip the memo quantization exactly.
    let xis = [
        -1.25, -1.0, -0.75, -0.5, -0.25, 0.0625, 0.25, 0.5, 0.75, 1.25,
    ];
    let mut worst: f64 = 0.0;
    for &v in &xis {
        let xi = scalar(v);
        let expect = v * v;
        let hw = hw_estimate(&w, &xi, &[1], &[4], &cfg).best.to_f64();
        let at = AtPoint {
            density: &w,
            x: vec![0.0],
        };
        let z = z_value(&at, &xi, 2, &cfg).value.to_f64();
        let zh = zh_value(&w, &xi, 2, &cfg, &memo).value.to_f64();
        for got in [hw, z, zh] {
            worst = worst.max((got - expect).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        "convex identity for homogenization and relaxation",
        worst <= 1e-6 && elapsed < 10.0,
        format!("worst |value - W(xi)| = {worst:.3e}, {elapsed:.1}s"),
    )
}

fn criterion_2_harmonic_mean() -> Verdict {
    let start = Instant::now();
    let w = gallery::twophase1d();
    let cfg = OptimizerConfig {
        max_iters: 4000,
        g_tol: 1e-7,
        multistart: 1,
        seed: 2,
        ..OptimizerConfig::default()
    };
    let est = hw_estimate(&w, &scalar(1.0), &[1], &[64], &cfg);
    let got = est.best.to_f64();
    // Oracle: exact 1D cell solution with constant flux, value
    // (integral of 1/c)^-1 xi^2 = 4/3 at xi = 1.
    let oracle = 4.0 / 3.0;
    let rel = (got - oracle).abs() / oracle;
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        2,
        "two-phase homogenization hits the harmonic mean",
        rel <= 0.01 && elapsed < 30.0,
        format!("value {got:.6}, relative error {rel:.2e}, {elapsed:.1}s"),
    )
}

fn criterion_3_subadditive_convergence() -> Verdict {
    let start = Instant::now();
    let w = gallery::twophase1d();
    let cfg = OptimizerConfig {
        max_iters: 4000,
        g_tol: 1e-7,
        multistart: 1,
        seed: 3,
        ..OptimizerConfig::default()
    };
    let oracle = 4.0 / 3.0;
    let trace = subadditive_trace(
        &w,
        &scalar(1.0),
        &BoxSpec::unit(1),
        &[0.5, 0.25, 0.125],
        &[1, 2, 3],
        32,
        &cfg,
        200_000,
    );
    let last = trace.entries.last().unwrap().value.unwrap().to_f64();
    let within = (last - oracle).abs() / oracle <= 0.10;
    // Non-increasing toward the reference along the schedule.
    let vals: Vec<f64> = trace
        .entries
        .iter()
        .map(|e| e.value.unwrap().to_f64())
        .collect();
    let monotone = vals.windows(2).all(|p| p[1] <= p[0] + 1e-6);

    // Tiling bound on nested meshes via the effective-density table.
    let est = hw_estimate(&w, &scalar(1.0), &[1, 2, 3], &[32], &cfg);
    let v1 = est.table[0].value.to_f64();
    let tiling = est.table.iter().all(|e| e.value.to_f64() <= v1 + 1e-6);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        3,
        "blow-up trace converges with the tiling bound",
        within && monotone && tiling && elapsed < 120.0,
        format!(
            "entries {vals:?}, reference {:.6}, tiling ok {tiling}, {elapsed:.1}s",
            trace.reference.to_f64()
        ),
    )
}

fn criterion_4_double_well_relaxation() -> Verdict {
    let start = Instant::now();
    let w = gallery::double_well_1d();
    let cfg = OptimizerConfig {
        max_iters: 2000,
        g_tol: 1e-10,
        multistart: 4,
        seed: 4,
        ..OptimizerConfig::default()
    };
    let at = AtPoint {
        density: &w,
        x: vec![0.0],
    };
    let z = z_value(&at, &scalar(0.0), 3, &cfg).value.to_f64();
    // Laminate oracle: two slopes +-s with equal fractions, s on a grid.
    let oracle = (0..=2000)
        .map(|i| {
            let s = i as f64 * 1e-3;
            (s * s - 1.0f64).powi(2)
        })
        .fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        4,
        "double-well relaxes to the laminate value",
        z <= 1e-3 && (z - oracle).abs() <= 1e-3 && elapsed < 60.0,
        format!("z = {z:.3e}, laminate oracle = {oracle:.3e}, {elapsed:.1}s"),
    )
}

fn criterion_5_vitali_energy_identity() -> Verdict {
    let quad = gallery::conv_quad();
    let dwell = gallery::double_well_1d();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rel: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for case in 0..20 {
        let d = if case % 3 == 2 { 2 } else { 1 };
        let density: &EnergyDensity = if case % 2 == 0 { &quad } else { &dwell };
        let density = if d == 2 { &quad } else { density };
        let level = 2 + (case % 2);
        let mesh = Arc::new(build_mesh(d, 1, 1 << level));
        let mut phi = PwAffineField::zeros(mesh, 1, true);
        for v in 0..phi.mesh.num_vertices() {
            if !phi.mesh.is_boundary_vertex(v) {
                phi.values[v] = rng.gen_range(-0.2..0.2);
            }
        }
        let xi = Matrix::from_fn(1, d, |_, _| rng.gen_range(-0.8..0.8));
        let l = DensityAsMatrixFn { density, d };

        // Zero-residual cover.
        let cover = vitali_pack(&BoxSpec::unit(d), 0.3, 0.0);
        assert!(cover.residual_volume < 1e-12);
        let (_, report) = vitali_transfer(&phi, &cover, &l, &xi);
        let scale = report.rhs.to_f64().abs().max(1e-12);
        worst_rel = worst_rel.max((report.lhs.to_f64() - report.rhs.to_f64()).abs() / scale);

        // Residual cover: drop cells, the correction must be exact.
        let mut partial = cover.clone();
        let dropped = partial.cells.split_off(partial.cells.len() / 2);
        let dvol: f64 = dropped.iter().map(|(_, a)| a.powi(d as i32)).sum();
        partial.residual_volume += dvol;
        let (_, partial_report) = vitali_transfer(&phi, &partial, &l, &xi);
        let scale = partial_report.rhs.to_f64().abs().max(1e-12);
        worst_residual = worst_residual
            .max((partial_report.lhs.to_f64() - partial_report.rhs.to_f64()).abs() / scale);
    }
    verdict(
        5,
        "cell-packing energy identity",
        worst_rel <= 1e-10 && worst_residual <= 1e-10,
        format!("zero-residual gap {worst_rel:.2e}, residual-corrected gap {worst_residual:.2e}"),
    )
}

struct DensityAsMatrixFn<'a> {
    density: &'a EnergyDensity,
    d: usize,
}

impl MatrixFn for DensityAsMatrixFn<'_> {
    fn eval(&self, xi: &Matrix) -> ExtReal {
        self.density.eval(&vec![0.0; self.d], xi)
    }
    fn grad(&self, xi: &Matrix) -> Option<Matrix> {
        self.density.grad_xi(&vec![0.0; self.d], xi)
    }
}

/// Z of a density frozen at x, as a point-dependent integrand.
struct ZOfDensity<'a> {
    density: &'a EnergyDensity,
    level: usize,
    cfg: OptimizerConfig,
}

impl Integrand for ZOfDensity<'_> {
    fn eval(&self, x: &[f64], xi: &Matrix) -> ExtReal {
        let at = AtPoint {
            density: self.density,
            x: x.to_vec(),
        };
        z_value(&at, xi, self.level, &self.cfg).value
    }
}

struct MemoAsIntegrand<'a>(&'a HwMemo);

impl Integrand for MemoAsIntegrand<'_> {
    fn eval(&self, _x: &[f64], xi: &Matrix) -> ExtReal {
        self.0.eval(xi)
    }
}

fn criterion_6_radial_calculus() -> Verdict {
    let start = Instant::now();
    let weight = PeriodicWeight::constant(1.0);
    let cfg = base_cfg(6);
    let densities: Vec<(&str, EnergyDensity)> = vec![
        ("conv_quad", gallery::conv_quad()),
        ("double_well_1d", gallery::double_well_1d()),
        ("twophase1d", gallery::twophase1d()),
        ("hyper2d_default", gallery::hyper2d_default()),
    ];

    // Delta(1) = 0 exactly for every gallery density.
    let mut delta_one_ok = true;
    for (id, w) in &densities {
        let (m, d) = gallery::shape_hint(id).unwrap_or((1, 1));
        let mut spec = SampleSpec::new(m, d);
        spec.n_x = 8;
        spec.n_xi = 32;
        spec.push_to_boundary = true;
        let points = spec.points();
        let mats = spec.matrices(Some(w.domain()));
        let d1 = ruusc::delta_lower(w, &weight, 1.0, &points, &mats).unwrap();
        delta_one_ok &= d1 == 0.0;
    }

    // Modulus transfer under relaxation and homogenization on the 1D gallery.
    let xi_samples: Vec<Matrix> = (-6..=6).map(|i| scalar(i as f64 * 0.25)).collect();
    let x_samples = vec![vec![0.25], vec![0.75]];
    let mut transfer_ok = true;
    let mut transfer_detail = String::new();
    for (id, w) in densities.iter().take(3) {
        let zw = ZOfDensity {
            density: w,
            level: 3,
            cfg: cfg.clone(),
        };
        let memo = HwMemo::new(w.clone(), 1, 16, cfg.clone());
        let hw = MemoAsIntegrand(&memo);
        for t in [0.9, 0.99] {
            let dl = ruusc::delta_lower(w, &weight, t, &x_samples, &xi_samples).unwrap();
            let dz = ruusc::delta_lower(&zw, &weight, t, &x_samples, &xi_samples).unwrap();
            let dh = ruusc::delta_lower(&hw, &weight, t, &x_samples[..1], &xi_samples).unwrap();
            if dz > dl + 5e-2 || dh > dl + 5e-2 {
                transfer_ok = false;
                transfer_detail = format!("{id}: t={t}, dL={dl:.3e}, dZL={dz:.3e}, dHL={dh:.3e}");
            }
        }
    }

    // Radial limits match the brute-force envelope at interior grid nodes
    // of the 1D gallery, and at boundary nodes of the constrained |z| case.
    let mut hat_ok = true;
    let mut worst_hat: f64 = 0.0;
    let step = 1e-3;
    let grid: Vec<f64> = (0..=4000).map(|i| -2.0 + i as f64 * step).collect();
    for (id, w) in densities.iter().take(3) {
        let at = AtPoint {
            density: w,
            x: vec![0.25],
        };
        let values: Vec<ExtReal> = grid.iter().map(|z| at.eval(&scalar(*z))).collect();
        let env = lsc_envelope_oracle_1d(&values, None);
        let full = ConstraintSet::full();
        for (i, z) in grid.iter().enumerate().step_by(40) {
            let h = ruusc::hat(&at, &full, &scalar(*z), &ruusc::default_schedule(), 1e-2);
            let diff = (h.value.to_f64() - env[i].to_f64()).abs();
            worst_hat = worst_hat.max(diff);
            if diff > 1e-6 {
                hat_ok = false;
                eprintln!("hat mismatch for {id} at {z}: {diff:.2e}");
            }
        }
    }
    // Constrained case: |z| on [-1, 1], infinite outside.
    let abs_density = EnergyDensity::new(
        |_x: &[f64], xi: &Matrix| {
            let z = xi[(0, 0)];
            if z.abs() <= 1.0 {
                ExtReal::new(z.abs())
            } else {
                ExtReal::Infinity
            }
        },
        false,
        1e-9,
        2.0,
        ConstraintSet::new(|xi: &Matrix| xi[(0, 0)].abs() <= 1.0, Some(1.0)),
    );
    let at_abs = AtPoint {
        density: &abs_density,
        x: vec![0.0],
    };
    let values: Vec<ExtReal> = grid.iter().map(|z| at_abs.eval(&scalar(*z))).collect();
    let env = lsc_envelope_oracle_1d(&values, None);
    for z in [-1.0, 1.0] {
        let i = ((z + 2.0) / step).round() as usize;
        let h = ruusc::hat(
            &at_abs,
            abs_density.domain(),
            &scalar(z),
            &ruusc::default_schedule(),
            1e-2,
        );
        let diff = (h.value.to_f64() - env[i].to_f64()).abs();
        worst_hat = worst_hat.max(diff);
        hat_ok &= diff <= 1e-6 && h.branch == PointClass::Boundary;
    }

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        6,
        "radial modulus calculus and envelope agreement",
        delta_one_ok && transfer_ok && hat_ok,
        format!(
            "delta(1)=0: {delta_one_ok}, transfer: {transfer_ok} {transfer_detail}, worst hat gap {worst_hat:.2e}, {elapsed:.1}s"
        ),
    )
}

fn criterion_7_hyperelastic_suite() -> Verdict {
    let start = Instant::now();
    let cfg = hyper2d::Hyper2DConfig::default();
    let mut spec = SampleSpec::new(2, 2);
    spec.n_x = 32;
    spec.n_xi = 320;
    spec.seed = 7;
    let report = hyper2d::property_suite(&cfg, &spec);
    let all = report.all_pass();
    let samples_ok = report.samples >= 10_000;

    // The determinant chain on fresh member samples.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let set = hyper2d::constraint_set();
    let mut chain_ok = true;
    let mut found = 0;
    while found < 1000 {
        let raw = cellhom::matrix::random_matrix(&mut rng, 2, 2, 1.0);
        let norm = cellhom::matrix::frobenius(&raw);
        if norm < 1e-9 {
            continue;
        }
        let dir = raw / norm;
        let Some(rb) = set.boundary_radius(&dir, 8.0, 50) else {
            continue;
        };
        let xi = dir * (rb * rng.gen_range(0.01..0.999));
        if !hyper2d::in_g(&xi) {
            continue;
        }
        chain_ok &= hyper2d::det_inequality_check(&xi).unwrap().holds;
        found += 1;
    }

    // Sampled modulus stays under the closed-form cap.
    let cap = hyper2d::k_prime(&cfg).max(hyper2d::g_at_zero());
    let modulus_ok = report
        .modulus_rows
        .iter()
        .all(|(t, q)| *q <= cap * (1.0 - t) + 1e-12);

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        7,
        "2x2 determinant-constrained suite",
        all && samples_ok && chain_ok && modulus_ok && elapsed < 120.0,
        format!(
            "items pass {all}, {} samples, chain {chain_ok}, modulus cap {cap:.2}, {elapsed:.1}s",
            report.samples
        ),
    )
}

fn criterion_8_limsup_recovery() -> Verdict {
    let start = Instant::now();
    let schedule = [
        StageParams {
            t: 0.9,
            n_pa: 8,
            z_level: 2,
            eps: 0.25,
        },
        StageParams {
            t: 0.99,
            n_pa: 16,
            z_level: 3,
            eps: 0.125,
        },
        StageParams {
            t: 0.999,
            n_pa: 32,
            z_level: 4,
            eps: 0.0625,
        },
        StageParams {
            t: 0.9999,
            n_pa: 32,
            z_level: 4,
            eps: 0.03125,
        },
    ];
    let omega = BoxSpec::unit(1);
    let mesh = Arc::new(build_box_mesh(1, &omega.origin, omega.side, 4));
    let target = PwAffineField::affine(mesh, &scalar(1.0));
    let dom = DomainSpec::unit_box(1);

    let w = gallery::twophase1d();
    let ctx = RecoveryContext::new(w.clone(), 16, base_cfg(8));
    let two = limsup_experiment(
        &w,
        &target,
        &omega,
        &dom,
        &schedule,
        &ctx,
        4,
        0.05 * (4.0 / 3.0),
    )
    .unwrap();

    let wq = gallery::conv_quad();
    let ctxq = RecoveryContext::new(wq.clone(), 8, base_cfg(9));
    let conv = limsup_experiment(&wq, &target, &omega, &dom, &schedule, &ctxq, 4, 1e-3).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        8,
        "recovery stages meet the relaxed-homogenized energy",
        two.pass && conv.pass && elapsed < 300.0,
        format!(
            "two-phase gap {:.3e} (ref {:.6}), convex gap {:.3e}, distances decreasing {} {}, {elapsed:.1}s",
            two.gap, two.reference, conv.gap, two.distances_decreasing, conv.distances_decreasing
        ),
    )
}

fn criterion_9_numerical_hygiene() -> Verdict {
    let start = Instant::now();
    // Supplied gradients against central finite differences, 32 random
    // feasible fields per gallery density.
    let mut grad_ok = true;
    let mut worst: f64 = 0.0;
    for id in gallery::IDS {
        let w = gallery::by_name(id).unwrap();
        let (m, d) = gallery::shape_hint(id).unwrap_or((1, 1));
        let mesh = Arc::new(build_mesh(d, 1, if d == 1 { 8 } else { 2 }));
        let xi = Matrix::from_fn(m, d, |r, c| if r == c { 0.1 } else { 0.02 });
        assert!(classify_point(w.domain(), &xi, 1e-8) == PointClass::Interior);
        let obj = EnergyObjective::new(&w, xi, None, 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..32 {
            let mut u = PwAffineField::zeros(mesh.clone(), m, true);
            for v in 0..mesh.num_vertices() {
                if !mesh.is_boundary_vertex(v) {
                    for c in 0..m {
                        u.values[v * m + c] = rng.gen_range(-0.02..0.02);
                    }
                }
            }
            if obj.value(&u).is_infinite() {
                continue;
            }
            let g = obj.gradient(&u);
            let dir: Vec<f64> = (0..u.values.len())
                .map(|i| {
                    if mesh.is_boundary_vertex(i / m) {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            let h = 1e-6;
            let mut up = u.clone();
            let mut um = u.clone();
            for i in 0..dir.len() {
                up.values[i] += h * dir[i];
                um.values[i] -= h * dir[i];
            }
            let fd = (obj.value(&up).to_f64() - obj.value(&um).to_f64()) / (2.0 * h);
            let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let scale = fd.abs().max(an.abs()).max(1e-8);
            let rel = (an - fd).abs() / scale;
            worst = worst.max(rel);
            if rel > 1e-4 {
                grad_ok = false;
                eprintln!("gradient mismatch for {id}: rel {rel:.2e}");
            }
        }
    }

    // Fixed-seed reruns reproduce results bit for bit at the API level
    // (the CLI integration tests additionally compare output bytes).
    let w = gallery::twophase1d();
    let cfg = base_cfg(10);
    let a = cell_value(&w, &scalar(1.0), 1, 32, &cfg);
    let b = cell_value(&w, &scalar(1.0), 1, 32, &cfg);
    let bitwise =
        a.value.to_f64().to_bits() == b.value.to_f64().to_bits() && a.iterations == b.iterations;

    // Quadrature rules stay averages (weights positive, summing to one).
    let mut rules_ok = true;
    for d in 1..=3 {
        for rule in [QuadratureRule::midpoint(d), QuadratureRule::refined(d)] {
            let sum: f64 = rule.points.iter().map(|(_, w)| w).sum();
            rules_ok &= (sum - 1.0).abs() < 1e-14 && rule.points.iter().all(|(_, w)| *w > 0.0);
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        9,
        "gradients, reproducibility, quadrature hygiene",
        grad_ok && bitwise && rules_ok,
        format!("worst gradient rel err {worst:.2e}, bitwise rerun {bitwise}, {elapsed:.1}s"),
    )
}

/// Runs every criterion in order (so wall-clock budgets are honest) and
/// prints one verdict line each before asserting.
#[test]
fn acceptance() {
    let verdicts = [
        criterion_1_convex_identity(),
        criterion_2_harmonic_mean(),
        criterion_3_subadditive_convergence(),
        criterion_4_double_well_relaxation(),
        criterion_5_vitali_energy_identity(),
        criterion_6_radial_calculus(),
        criterion_7_hyperelastic_suite(),
        criterion_8_limsup_recovery(),
        criterion_9_numerical_hygiene(),
    ];
    for v in &verdicts {
        println!(
            "criterion {} {}: {} ({})",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.label,
            v.detail
        );
    }
    let failed: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("criterion {} ({}): {}", v.id, v.label, v.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
