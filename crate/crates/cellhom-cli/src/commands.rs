//! The six batch commands: resolve parameters, run, persist CSV + JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use cellhom::density::{PeriodicWeight, PointClass, SampleSpec};
use cellhom::gallery;
use cellhom::gamma::{limsup_experiment, DomainSpec, RecoveryContext, StageParams};
use cellhom::homogenize::{hw_estimate, subadditive_trace, HwMemo};
use cellhom::hyper2d::{property_suite, Hyper2DConfig};
use cellhom::mesh::{build_box_mesh, BoxSpec, PwAffineField};
use cellhom::optimize::OptimizerConfig;
use cellhom::relaxation::{z_value, zh_value};
use cellhom::ruusc;
use cellhom::{EnergyDensity, ExtReal, Matrix};

use crate::config::{parse_matrix_list, ConfigMap};

pub const SCHEMA_VERSION: &str = "1";

/// Numerical-quality flags surfaced to the exit code under `--strict`.
#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct RunFlags {
    pub nonconverged: bool,
    pub incomplete: bool,
}

#[derive(Serialize)]
struct Summary<R: Serialize> {
    schema_version: &'static str,
    command: String,
    gallery_version: &'static str,
    config: BTreeMap<String, String>,
    results: R,
    flags: RunFlags,
}

fn write_outputs<R: Serialize>(
    out: &Path,
    command: &str,
    echo: BTreeMap<String, String>,
    csv_header: &[&str],
    csv_rows: &[Vec<String>],
    results: R,
    flags: RunFlags,
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join(format!("{command}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    w.write_record(csv_header)?;
    for row in csv_rows {
        w.write_record(row)?;
    }
    w.flush()?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        gallery_version: gallery::GALLERY_VERSION,
        config: echo,
        results,
        flags,
    };
    let json_path = out.join("summary.json");
    let mut buf = serde_json::to_vec_pretty(&summary)?;
    buf.push(b'\n');
    fs::write(&json_path, buf).with_context(|| format!("writing {}", json_path.display()))?;
    Ok(())
}

/// Shared resolution helpers over the merged flag/file configuration.
pub struct Resolver<'a> {
    pub map: &'a ConfigMap,
}

impl Resolver<'_> {
    fn density(&self) -> Result<(String, EnergyDensity)> {
        let id = self
            .map
            .get("density")
            .context("missing required key `density`")?
            .to_string();
        let density =
            gallery::by_name(&id).with_context(|| format!("unknown density id `{id}`"))?;
        Ok((id, density))
    }

    fn optimizer(&self) -> Result<OptimizerConfig> {
        let mut cfg = OptimizerConfig::default();
        if let Some(v) = self.map.get_parsed::<usize>("max_iters")? {
            if v == 0 {
                bail!("max_iters must be at least 1");
            }
            cfg.max_iters = v;
        }
        if let Some(v) = self.map.get_parsed::<f64>("g_tol")? {
            if v <= 0.0 {
                bail!("g_tol must be positive");
            }
            cfg.g_tol = v;
        }
        if let Some(v) = self.map.get_parsed::<usize>("multistart")? {
            if v == 0 {
                bail!("multistart must be at least 1");
            }
            cfg.multistart = v;
        }
        if let Some(v) = self.map.get_parsed::<u64>("seed")? {
            cfg.seed = v;
        }
        Ok(cfg)
    }

    fn xis(&self, density_id: &str) -> Result<Vec<Matrix>> {
        let spec = self.map.get("xi").context("missing required key `xi`")?;
        let mut xis = parse_matrix_list(spec)?;
        for xi in &xis {
            if !(1..=3).contains(&xi.ncols()) {
                bail!(
                    "matrix dimension d = {} outside the supported 1..=3",
                    xi.ncols()
                );
            }
        }
        if let Some((m, d)) = gallery::shape_hint(density_id) {
            for xi in &xis {
                if (xi.nrows(), xi.ncols()) != (m, d) {
                    bail!(
                        "density `{density_id}` expects {m}x{d} matrices, got {}x{}",
                        xi.nrows(),
                        xi.ncols()
                    );
                }
            }
        }
        if let Some(scales) = self.map.get_list::<f64>("xi_scale")? {
            if scales.iter().any(|t| *t <= 0.0) {
                bail!("xi_scale entries must be positive");
            }
            xis = xis
                .iter()
                .flat_map(|xi| scales.iter().map(move |t| xi * *t))
                .collect();
        }
        Ok(xis)
    }
}

fn fmt_matrix(m: &Matrix) -> String {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| format!("{}", m[(r, c)]))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn fmt_list<T: std::fmt::Display>(list: &[T]) -> String {
    list.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub const HOM_KEYS: &[&str] = &[
    "command",
    "density",
    "xi",
    "xi_scale",
    "k",
    "n",
    "seed",
    "max_iters",
    "g_tol",
    "multistart",
    "out",
    "strict",
];

#[derive(Serialize)]
struct HomXiResult {
    xi_id: usize,
    xi: String,
    classify: PointClass,
    best: ExtReal,
    tiling_bound_ok: bool,
}

pub fn run_hom(map: &ConfigMap, out: &Path) -> Result<RunFlags> {
    map.check_schema(HOM_KEYS)?;
    let r = Resolver { map };
    let (id, density) = r.density()?;
    let cfg = r.optimizer()?;
    let xis = r.xis(&id)?;
    let k_list = map.get_list::<usize>("k")?.unwrap_or_else(|| vec![1, 2, 3]);
    let n_list = map.get_list::<usize>("n")?.unwrap_or_else(|| vec![16]);
    if k_list.is_empty() || n_list.is_empty() || k_list.contains(&0) || n_list.contains(&0) {
        bail!("k and n must be nonempty lists of integers >= 1");
    }
    let d = xis.iter().map(|xi| xi.ncols()).max().unwrap_or(1);
    let k_max = *k_list.iter().max().unwrap();
    let n_max = *n_list.iter().max().unwrap();
    if ((k_max.saturating_mul(n_max) + 1) as f64).powi(d as i32) > 2e6 {
        bail!("mesh cap exceeded: (k*n + 1)^d > 2e6 vertices");
    }

    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut flags = RunFlags::default();
    for (xi_id, xi) in xis.iter().enumerate() {
        let est = hw_estimate(&density, xi, &k_list, &n_list, &cfg);
        for e in &est.table {
            flags.nonconverged |= !e.converged;
            rows.push(vec![
                xi_id.to_string(),
                e.k.to_string(),
                e.n.to_string(),
                e.value.to_string(),
                e.iterations.to_string(),
                e.converged.to_string(),
            ]);
        }
        results.push(HomXiResult {
            xi_id,
            xi: fmt_matrix(xi),
            classify: est.classify,
            best: est.best,
            tiling_bound_ok: est.tiling_bound_ok,
        });
    }

    let mut echo = map.echo();
    echo.insert("density".into(), id);
    echo.insert("k".into(), fmt_list(&k_list));
    echo.insert("n".into(), fmt_list(&n_list));
    echo.insert("seed".into(), cfg.seed.to_string());
    echo.insert("max_iters".into(), cfg.max_iters.to_string());
    echo.insert("g_tol".into(), cfg.g_tol.to_string());
    echo.insert("multistart".into(), cfg.multistart.to_string());
    write_outputs(
        out,
        "hom",
        echo,
        &["xi_id", "k", "n", "value", "iters", "converged"],
        &rows,
        results,
        flags,
    )?;
    Ok(flags)
}

pub const RELAX_KEYS: &[&str] = &[
    "command",
    "density",
    "xi",
    "xi_scale",
    "level",
    "mode",
    "hw_k",
    "hw_n",
    "seed",
    "max_iters",
    "g_tol",
    "multistart",
    "out",
    "strict",
];

#[derive(Serialize)]
struct RelaxResult {
    xi_id: usize,
    xi: String,
    level: usize,
    value: ExtReal,
    witness_norm: f64,
}

pub fn run_relax(map: &ConfigMap, out: &Path) -> Result<RunFlags> {
    map.check_schema(RELAX_KEYS)?;
    let r = Resolver { map };
    let (id, density) = r.density()?;
    let cfg = r.optimizer()?;
    let xis = r.xis(&id)?;
    let levels = map.get_list::<usize>("level")?.unwrap_or_else(|| vec![3]);
    if levels.iter().any(|l| *l > 12) {
        bail!("level cap exceeded: levels above 12 (4096 cells per axis) are not supported");
    }
    let mode = map.get("mode").unwrap_or("z");
    if !matches!(mode, "z" | "zh") {
        bail!("mode must be `z` or `zh`");
    }
    let hw_k = map.get_parsed::<usize>("hw_k")?.unwrap_or(1);
    let hw_n = map.get_parsed::<usize>("hw_n")?.unwrap_or(16);
    if hw_k == 0 || hw_n == 0 {
        bail!("hw_k and hw_n must be >= 1");
    }
    let memo = HwMemo::new(density.clone(), hw_k, hw_n, cfg.clone());

    let mut rows = Vec::new();
    let mut results = Vec::new();
    let flags = RunFlags::default();
    for (xi_id, xi) in xis.iter().enumerate() {
        for &level in &levels {
            let zres = match mode {
                "z" => {
                    let at = cellhom::density::AtPoint {
                        density: &density,
                        x: vec![0.0; xi.ncols()],
                    };
                    z_value(&at, xi, level, &cfg)
                }
                _ => zh_value(&density, xi, level, &cfg, &memo),
            };
            let witness_norm = zres.witness.as_ref().map(|w| w.sup_norm()).unwrap_or(0.0);
            rows.push(vec![
                xi_id.to_string(),
                level.to_string(),
                zres.value.to_string(),
                witness_norm.to_string(),
            ]);
            results.push(RelaxResult {
                xi_id,
                xi: fmt_matrix(xi),
                level,
                value: zres.value,
                witness_norm,
            });
        }
    }

    let mut echo = map.echo();
    echo.insert("mode".into(), mode.to_string());
    echo.insert("level".into(), fmt_list(&levels));
    echo.insert("hw_k".into(), hw_k.to_string());
    echo.insert("hw_n".into(), hw_n.to_string());
    echo.insert("seed".into(), cfg.seed.to_string());
    write_outputs(
        out,
        "relax",
        echo,
        &["xi_id", "level", "value", "witness_norm"],
        &rows,
        results,
        flags,
    )?;
    Ok(flags)
}

pub const RUUSC_KEYS: &[&str] = &[
    "command",
    "density",
    "shape",
    "a_const",
    "t",
    "n_x",
    "n_xi",
    "radius",
    "threshold",
    "seed",
    "out",
    "strict",
];

pub fn run_ruusc(map: &ConfigMap, out: &Path) -> Result<RunFlags> {
    map.check_schema(RUUSC_KEYS)?;
    let r = Resolver { map };
    let (id, density) = r.density()?;
    let (m, d) = match map.get_list::<usize>("shape")? {
        Some(v) if v.len() == 2 && v[0] >= 1 && v[1] >= 1 => (v[0], v[1]),
        Some(_) => bail!("shape must be `m,d`"),
        None => gallery::shape_hint(&id).unwrap_or((1, 1)),
    };
    let a_const = map.get_parsed::<f64>("a_const")?.unwrap_or(1.0);
    if a_const <= 0.0 {
        bail!("a_const must be positive");
    }
    let t_grid = map
        .get_list::<f64>("t")?
        .unwrap_or_else(|| vec![0.9, 0.99, 0.999]);
    if t_grid.iter().any(|t| *t <= 0.0 || *t > 1.0) {
        bail!("t grid must lie in (0, 1]");
    }
    let threshold = map
        .get_parsed::<f64>("threshold")?
        .unwrap_or(ruusc::DEFAULT_PASS_THRESHOLD);
    let mut spec = SampleSpec::new(m, d);
    spec.n_x = map.get_parsed::<usize>("n_x")?.unwrap_or(64);
    spec.n_xi = map.get_parsed::<usize>("n_xi")?.unwrap_or(256);
    spec.radius = map.get_parsed::<f64>("radius")?.unwrap_or(2.0);
    spec.seed = map.get_parsed::<u64>("seed")?.unwrap_or(0);
    spec.push_to_boundary = true;

    let weight = PeriodicWeight::constant(a_const);
    let points = spec.points();
    let mats = spec.matrices(Some(density.domain()));
    let report = ruusc::ru_usc_audit(&density, &weight, &t_grid, &points, &mats, threshold)?;

    let rows: Vec<Vec<String>> = report
        .t_grid
        .iter()
        .zip(&report.delta)
        .map(|(t, delta)| {
            vec![
                t.to_string(),
                delta.to_string(),
                (report.n_x * report.n_xi).to_string(),
                (*delta <= threshold).to_string(),
            ]
        })
        .collect();

    let mut echo = map.echo();
    echo.insert("a_const".into(), a_const.to_string());
    echo.insert("t".into(), fmt_list(&t_grid));
    echo.insert("threshold".into(), threshold.to_string());
    echo.insert("n_x".into(), spec.n_x.to_string());
    echo.insert("n_xi".into(), spec.n_xi.to_string());
    let flags = RunFlags {
        nonconverged: !report.pass,
        incomplete: false,
    };
    write_outputs(
        out,
        "ruusc",
        echo,
        &["t", "delta_lower", "n_samples", "pass"],
        &rows,
        report,
        flags,
    )?;
    Ok(flags)
}

pub const CONVERGE_KEYS: &[&str] = &[
    "command",
    "density",
    "xi",
    "eps",
    "k_ref",
    "n",
    "q_side",
    "max_vertices",
    "seed",
    "max_iters",
    "g_tol",
    "multistart",
    "out",
    "strict",
];

#[derive(Serialize)]
struct ConvergeResults {
    reference: ExtReal,
    k_ref: Vec<(usize, ExtReal)>,
}

pub fn run_converge(map: &ConfigMap, out: &Path) -> Result<RunFlags> {
    map.check_schema(CONVERGE_KEYS)?;
    let r = Resolver { map };
    let (id, density) = r.density()?;
    let cfg = r.optimizer()?;
    let xis = r.xis(&id)?;
    if xis.len() != 1 {
        bail!("converge takes exactly one xi");
    }
    let eps = map
        .get_list::<f64>("eps")?
        .unwrap_or_else(|| vec![0.5, 0.25, 0.125]);
    if eps.is_empty() || eps.windows(2).any(|w| w[0] <= w[1]) || eps.iter().any(|e| *e <= 0.0) {
        bail!("eps must be a strictly decreasing list of positive scales");
    }
    let k_ref = map
        .get_list::<usize>("k_ref")?
        .unwrap_or_else(|| vec![1, 2, 3]);
    if k_ref.is_empty() || k_ref.contains(&0) {
        bail!("k_ref must be a nonempty list of integers >= 1");
    }
    let n = map.get_parsed::<usize>("n")?.unwrap_or(32);
    if n == 0 {
        bail!("n must be >= 1");
    }
    let q_side = map.get_parsed::<f64>("q_side")?.unwrap_or(1.0);
    if q_side <= 0.0 {
        bail!("q_side must be positive");
    }
    let max_vertices = map.get_parsed::<usize>("max_vertices")?.unwrap_or(200_000);
    let d = xis[0].ncols();
    let q = BoxSpec::new(vec![0.0; d], q_side);

    let trace = subadditive_trace(&density, &xis[0], &q, &eps, &k_ref, n, &cfg, max_vertices);
    let mut flags = RunFlags::default();
    let rows: Vec<Vec<String>> = trace
        .entries
        .iter()
        .map(|e| {
            flags.incomplete |= e.skipped();
            flags.nonconverged |= !e.skipped() && !e.converged;
            vec![
                e.eps.to_string(),
                e.k_eps.to_string(),
                e.value
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "skipped".into()),
                e.counting_bound.to_string(),
                e.skipped().to_string(),
            ]
        })
        .collect();

    let mut echo = map.echo();
    echo.insert("eps".into(), fmt_list(&eps));
    echo.insert("k_ref".into(), fmt_list(&k_ref));
    echo.insert("n".into(), n.to_string());
    echo.insert("q_side".into(), q_side.to_string());
    echo.insert("max_vertices".into(), max_vertices.to_string());
    write_outputs(
        out,
        "converge",
        echo,
        &["eps", "k_eps", "value", "counting_bound", "skipped"],
        &rows,
        ConvergeResults {
            reference: trace.reference,
            k_ref: trace.k_ref,
        },
        flags,
    )?;
    Ok(flags)
}

pub const GAMMA_KEYS: &[&str] = &[
    "command",
    "density",
    "xi",
    "t",
    "n_pa",
    "z_level",
    "eps",
    "slack",
    "cell_n",
    "seed",
    "max_iters",
    "g_tol",
    "multistart",
    "out",
    "strict",
];

pub fn run_gamma(map: &ConfigMap, out: &Path) -> Result<RunFlags> {
    map.check_schema(GAMMA_KEYS)?;
    let r = Resolver { map };
    let (id, density) = r.density()?;
    let cfg = r.optimizer()?;
    let xis = r.xis(&id)?;
    if xis.len() != 1 {
        bail!("gamma takes exactly one xi (the affine target's gradient)");
    }
    let t = map
        .get_list::<f64>("t")?
        .unwrap_or_else(|| vec![0.9, 0.99, 0.999, 0.9999]);
    let n_pa = map
        .get_list::<usize>("n_pa")?
        .unwrap_or_else(|| vec![8, 16, 32, 32]);
    let z_level = map
        .get_list::<usize>("z_level")?
        .unwrap_or_else(|| vec![2, 3, 4, 4]);
    let eps = map
        .get_list::<f64>("eps")?
        .unwrap_or_else(|| vec![0.25, 0.125, 0.0625, 0.03125]);
    if t.len() != n_pa.len() || t.len() != z_level.len() || t.len() != eps.len() || t.is_empty() {
        bail!("t, n_pa, z_level and eps must be nonempty lists of equal length");
    }
    if t.iter().any(|v| *v <= 0.0 || *v >= 1.0) {
        bail!("stage scales t must lie in (0, 1)");
    }
    let slack = map.get_parsed::<f64>("slack")?.unwrap_or(0.05);
    let cell_n = map.get_parsed::<usize>("cell_n")?.unwrap_or(16);
    if cell_n == 0 {
        bail!("cell_n must be >= 1");
    }

    let d = xis[0].ncols();
    let omega = BoxSpec::unit(d);
    let mesh = std::sync::Arc::new(build_box_mesh(d, &omega.origin, omega.side, 4));
    let target = PwAffineField::affine(mesh, &xis[0]);
    let ctx = RecoveryContext::new(density.clone(), cell_n, cfg.clone());
    let schedule: Vec<StageParams> = (0..t.len())
        .map(|i| StageParams {
            t: t[i],
            n_pa: n_pa[i],
            z_level: z_level[i],
            eps: eps[i],
        })
        .collect();
    let z_level_ref = *z_level.iter().max().unwrap();
    let report = limsup_experiment(
        &density,
        &target,
        &omega,
        &DomainSpec::unit_box(d),
        &schedule,
        &ctx,
        z_level_ref,
        slack,
    )?;

    let rows: Vec<Vec<String>> = report
        .stages
        .iter()
        .map(|s| {
            vec![
                s.t.to_string(),
                s.n_pa.to_string(),
                s.z_level.to_string(),
                s.eps.to_string(),
                s.energy.to_string(),
                s.lp_distance.to_string(),
            ]
        })
        .collect();

    let mut echo = map.echo();
    echo.insert("t".into(), fmt_list(&t));
    echo.insert("n_pa".into(), fmt_list(&n_pa));
    echo.insert("z_level".into(), fmt_list(&z_level));
    echo.insert("eps".into(), fmt_list(&eps));
    echo.insert("slack".into(), slack.to_string());
    echo.insert("cell_n".into(), cell_n.to_string());
    let flags = RunFlags {
        nonconverged: !report.pass,
        incomplete: report.failed_stage.is_some(),
    };
    write_outputs(
        out,
        "gamma",
        echo,
        &["t", "n_pa", "z_level", "eps", "energy", "lp_distance"],
        &rows,
        report,
        flags,
    )?;
    Ok(flags)
}

pub const EXAMPLE2D_KEYS: &[&str] = &[
    "command",
    "suite",
    "n_x",
    "n_xi",
    "p",
    "coercivity_c",
    "growth_c",
    "seed",
    "out",
    "strict",
];

pub fn run_example2d(map: &ConfigMap, out: &Path) -> Result<RunFlags> {
    map.check_schema(EXAMPLE2D_KEYS)?;
    let cfg = Hyper2DConfig {
        exponent_p: map.get_parsed::<f64>("p")?.unwrap_or(4.0),
        coercivity_c: map.get_parsed::<f64>("coercivity_c")?.unwrap_or(1.0),
        growth_c: map.get_parsed::<f64>("growth_c")?.unwrap_or(1.5),
    };
    if cfg.exponent_p <= 2.0 {
        bail!("p must exceed 2");
    }
    let mut spec = SampleSpec::new(2, 2);
    spec.n_x = map.get_parsed::<usize>("n_x")?.unwrap_or(32);
    spec.n_xi = map.get_parsed::<usize>("n_xi")?.unwrap_or(256);
    spec.seed = map.get_parsed::<u64>("seed")?.unwrap_or(0);

    let report = property_suite(&cfg, &spec);
    let rows: Vec<Vec<String>> = report
        .modulus_rows
        .iter()
        .map(|(t, q)| vec![t.to_string(), q.to_string()])
        .collect();

    let mut echo = map.echo();
    echo.insert("p".into(), cfg.exponent_p.to_string());
    echo.insert("coercivity_c".into(), cfg.coercivity_c.to_string());
    echo.insert("growth_c".into(), cfg.growth_c.to_string());
    echo.insert("n_x".into(), spec.n_x.to_string());
    echo.insert("n_xi".into(), spec.n_xi.to_string());
    let flags = RunFlags {
        nonconverged: !report.all_pass(),
        incomplete: false,
    };
    write_outputs(
        out,
        "example2d",
        echo,
        &["t", "worst_quotient"],
        &rows,
        report,
        flags,
    )?;
    Ok(flags)
}
