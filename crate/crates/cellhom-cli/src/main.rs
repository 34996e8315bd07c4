//! `cellhom`: batch runner for cell-problem homogenization experiments.
//!
//! Six subcommands, each configurable by flags, a `key = value` config
//! file, or both (flags win): `hom` tabulates effective-density estimates,
//! `relax` runs unit-cell relaxations, `ruusc` audits the radial modulus,
//! `converge` traces normalized cell values on blow-ups, `gamma` runs the
//! recovery-sequence experiment, and `example2d` checks the 2x2
//! determinant-constrained density's property suite. Every run writes one
//! CSV table and a `summary.json` with the fully resolved configuration;
//! fixed seeds give byte-identical outputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::RunFlags;
use config::ConfigMap;

#[derive(Parser)]
#[command(
    name = "cellhom",
    version,
    about = "Cell-problem homogenization toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Effective-density table over a (k, n) grid of cell problems.
    Hom(HomArgs),
    /// Unit-cell relaxation values (plain or composed with homogenization).
    Relax(RelaxArgs),
    /// Radial upper-semicontinuity modulus audit.
    Ruusc(RuuscArgs),
    /// Normalized cell values on blow-ups against the reference.
    Converge(ConvergeArgs),
    /// Recovery-sequence experiment for the limsup inequality.
    Gamma(GammaArgs),
    /// Property suite of the 2x2 determinant-constrained density.
    Example2d(Example2dArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (`key = value` lines; flags override file values).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gallery density id.
    #[arg(long)]
    density: Option<String>,
    /// Matrix list: rows `;`-separated, entries `,`-separated,
    /// matrices `|`-separated.
    #[arg(long)]
    xi: Option<String>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exit 2 when any nonconverged/incomplete flag is set.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    g_tol: Option<f64>,
    #[arg(long)]
    multistart: Option<usize>,
}

#[derive(Args)]
struct HomArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma list of cube scales.
    #[arg(long)]
    k: Option<String>,
    /// Comma list of subdivisions per unit.
    #[arg(long)]
    n: Option<String>,
    /// Comma list of radial multipliers applied to every xi.
    #[arg(long)]
    xi_scale: Option<String>,
}

#[derive(Args)]
struct RelaxArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma list of dyadic mesh levels.
    #[arg(long)]
    level: Option<String>,
    /// `z` (relax the density) or `zh` (relax the memoized cell values).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    hw_k: Option<usize>,
    #[arg(long)]
    hw_n: Option<usize>,
}

#[derive(Args)]
struct RuuscArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Constant weight in the modulus denominator.
    #[arg(long)]
    a_const: Option<f64>,
    /// Comma list of scales in (0, 1].
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    n_xi: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Matrix shape `m,d` for shape-generic densities.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Strictly decreasing comma list of scales.
    #[arg(long)]
    eps: Option<String>,
    /// Reference cube scales.
    #[arg(long)]
    k_ref: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q_side: Option<f64>,
    #[arg(long)]
    max_vertices: Option<usize>,
}

#[derive(Args)]
struct GammaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Stage scales t (comma list, each in (0,1)).
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    n_pa: Option<String>,
    #[arg(long)]
    z_level: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    slack: Option<f64>,
    #[arg(long)]
    cell_n: Option<usize>,
}

#[derive(Args)]
struct Example2dArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Run the six-item property suite (the default and only mode).
    #[arg(long)]
    suite: bool,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    n_xi: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    coercivity_c: Option<f64>,
    #[arg(long)]
    growth_c: Option<f64>,
}

fn load_map(common: &CommonArgs, command_name: &str) -> Result<ConfigMap> {
    let mut map = match &common.config {
        None => ConfigMap::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let map = ConfigMap::parse(&text)?;
            if let Some(cmd) = map.get("command") {
                if cmd != command_name {
                    bail!("config file names command `{cmd}` but `{command_name}` was invoked");
                }
            }
            map
        }
    };
    map.set("command", command_name);
    if let Some(v) = &common.density {
        map.set("density", v);
    }
    if let Some(v) = &common.xi {
        map.set("xi", v);
    }
    if let Some(v) = common.seed {
        map.set("seed", &v.to_string());
    }
    if let Some(v) = common.max_iters {
        map.set("max_iters", &v.to_string());
    }
    if let Some(v) = common.g_tol {
        map.set("g_tol", &v.to_string());
    }
    if let Some(v) = common.multistart {
        map.set("multistart", &v.to_string());
    }
    if common.strict {
        map.set("strict", "true");
    }
    Ok(map)
}

fn out_dir(common: &CommonArgs, map: &ConfigMap) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| map.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn set_opt<T: ToString>(map: &mut ConfigMap, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        map.set(key, &v.to_string());
    }
}

fn dispatch(cli: Cli) -> Result<(RunFlags, bool)> {
    match cli.command {
        Command::Hom(args) => {
            let mut map = load_map(&args.common, "hom")?;
            set_opt(&mut map, "k", &args.k);
            set_opt(&mut map, "n", &args.n);
            set_opt(&mut map, "xi_scale", &args.xi_scale);
            let out = out_dir(&args.common, &map);
            Ok((
                commands::run_hom(&map, &out)?,
                strict_of(&args.common, &map),
            ))
        }
        Command::Relax(args) => {
            let mut map = load_map(&args.common, "relax")?;
            set_opt(&mut map, "level", &args.level);
            set_opt(&mut map, "mode", &args.mode);
            set_opt(&mut map, "hw_k", &args.hw_k);
            set_opt(&mut map, "hw_n", &args.hw_n);
            let out = out_dir(&args.common, &map);
            Ok((
                commands::run_relax(&map, &out)?,
                strict_of(&args.common, &map),
            ))
        }
        Command::Ruusc(args) => {
            let mut map = load_map(&args.common, "ruusc")?;
            set_opt(&mut map, "a_const", &args.a_const);
            set_opt(&mut map, "t", &args.t);
            set_opt(&mut map, "n_x", &args.n_x);
            set_opt(&mut map, "n_xi", &args.n_xi);
            set_opt(&mut map, "threshold", &args.threshold);
            set_opt(&mut map, "shape", &args.shape);
            set_opt(&mut map, "radius", &args.radius);
            let out = out_dir(&args.common, &map);
            Ok((
                commands::run_ruusc(&map, &out)?,
                strict_of(&args.common, &map),
            ))
        }
        Command::Converge(args) => {
            let mut map = load_map(&args.common, "converge")?;
            set_opt(&mut map, "eps", &args.eps);
            set_opt(&mut map, "k_ref", &args.k_ref);
            set_opt(&mut map, "n", &args.n);
            set_opt(&mut map, "q_side", &args.q_side);
            set_opt(&mut map, "max_vertices", &args.max_vertices);
            let out = out_dir(&args.common, &map);
            Ok((
                commands::run_converge(&map, &out)?,
                strict_of(&args.common, &map),
            ))
        }
        Command::Gamma(args) => {
            let mut map = load_map(&args.common, "gamma")?;
            set_opt(&mut map, "t", &args.t);
            set_opt(&mut map, "n_pa", &args.n_pa);
            set_opt(&mut map, "z_level", &args.z_level);
            set_opt(&mut map, "eps", &args.eps);
            set_opt(&mut map, "slack", &args.slack);
            set_opt(&mut map, "cell_n", &args.cell_n);
            let out = out_dir(&args.common, &map);
            Ok((
                commands::run_gamma(&map, &out)?,
                strict_of(&args.common, &map),
            ))
        }
        Command::Example2d(args) => {
            let mut map = load_map(&args.common, "example2d")?;
            if args.suite {
                map.set("suite", "true");
            }
            set_opt(&mut map, "n_x", &args.n_x);
            set_opt(&mut map, "n_xi", &args.n_xi);
            set_opt(&mut map, "p", &args.p);
            set_opt(&mut map, "coercivity_c", &args.coercivity_c);
            set_opt(&mut map, "growth_c", &args.growth_c);
            let out = out_dir(&args.common, &map);
            Ok((
                commands::run_example2d(&map, &out)?,
                strict_of(&args.common, &map),
            ))
        }
    }
}

fn strict_of(common: &CommonArgs, map: &ConfigMap) -> bool {
    common.strict || map.get("strict") == Some("true")
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CELLHOM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok((flags, strict)) => {
            if strict && (flags.nonconverged || flags.incomplete) {
                eprintln!("numerical-quality flags set: {flags:?}");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
