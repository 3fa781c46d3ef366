//! tentlab: solve higher-order parabolic flows with rough coefficients on
//! periodic grids, evaluate tent / non-tangential / Carleson / BMO
//! functionals, and run the verification experiments.

mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use tentlab_core::deriv::{grad_m_trajectory, Scheme};
use tentlab_core::experiments::{self, CoeffSpec, ExperimentConfig};
use tentlab_core::functionals::{
    bmo_m_norm, bmo_norm, carleson_norm, filter_polynomial, lp_m_norm, nontangential_norm,
    tent_norm, NormReport,
};
use tentlab_core::io;
use tentlab_core::propagator::{Propagator, SolverConfig};
use tentlab_core::semigroup::Semigroup;
use tentlab_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "tentlab",
    version,
    about = "numerical laboratory for higher-order parabolic flows"
)]
struct Cli {
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to TENTLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Emit only the machine-readable JSON error line on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate initial data under a coefficient preset; writes the
    /// trajectory as PTSF1 with `K > 1`.
    Solve {
        /// Coefficient preset, e.g. rough:10:42 or polyharmonic.
        #[arg(long)]
        coeffs: String,
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Final time.
        #[arg(long = "T")]
        t_final: f64,
        #[arg(long)]
        dt: f64,
        /// 1.0 = implicit Euler, 0.5 = trapezoidal.
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Apply the constant-coefficient semigroup at one time.
    Semigroup {
        #[arg(long, default_value = "polyharmonic")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        t: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Evaluate a norm of a stored field or trajectory.
    Norm {
        /// tent | nontan | carleson | bmo | bmom | lpm
        #[arg(long)]
        kind: String,
        /// Integrability exponent where applicable ("inf" allowed).
        #[arg(long, default_value = "2")]
        p: String,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the report as JSON here (also printed to stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Fit and remove the best polynomial of degree < m on the largest
    /// interior ball.
    Project {
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Optional residual field output.
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Run verification experiments and write result.json + curves.csv.
    Verify {
        /// Experiment name, or `--all`.
        experiment: Option<String>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "out", default_value = "results")]
        out: PathBuf,
    },
    /// Print the header of a PTSF1 file.
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

struct Failure {
    kind: String,
    message: String,
    exit: i32,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            kind: "validation".into(),
            message: message.into(),
            exit: 2,
        }
    }

    fn from_core(e: CoreError) -> Self {
        if e.is_numerical() {
            Failure {
                kind: "numerical".into(),
                message: e.to_string(),
                exit: 3,
            }
        } else {
            Failure {
                kind: "validation".into(),
                message: e.to_string(),
                exit: 2,
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("TENTLAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => {}
        Err(f) => {
            let line = json!({"error": {"kind": f.kind, "message": f.message}});
            if cli.json_errors {
                eprintln!("{line}");
            } else {
                eprintln!("error: {}", f.message);
                eprintln!("{line}");
            }
            std::process::exit(f.exit);
        }
    }
}

fn parse_p(p: &str) -> Result<f64, Failure> {
    if p.eq_ignore_ascii_case("inf") || p.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    p.parse::<f64>()
        .map_err(|_| Failure::validation(format!("bad exponent `{p}`")))
}

fn write_manifest(target: &Path, body: serde_json::Value) -> Result<(), Failure> {
    let manifest_path = if target.is_dir() {
        target.join("manifest.json")
    } else {
        let name = target
            .file_name()
            .map(|s| format!("{}.manifest.json", s.to_string_lossy()))
            .unwrap_or_else(|| "manifest.json".into());
        target.with_file_name(name)
    };
    let tmp = manifest_path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&body).unwrap())
        .and_then(|_| std::fs::rename(&tmp, &manifest_path))
        .map_err(|e| Failure::validation(format!("cannot write manifest: {e}")))
}

fn manifest_body(extra: serde_json::Value) -> serde_json::Value {
    let argv: Vec<String> = std::env::args().collect();
    json!({
        "command_line": argv,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "wall_clock_unix_ms": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        "details": extra,
    })
}

fn norm_report_json(rep: &NormReport) -> serde_json::Value {
    json!({
        "name": rep.name,
        "value": rep.value,
        "p": rep.p,
        "m": rep.m,
        "grid": {"n": rep.grid_n, "P": rep.grid_points, "L": rep.grid_box},
        "truncation": {
            "rmin": rep.truncation.rmin,
            "rmax": rep.truncation.rmax,
            "window": rep.truncation.window,
            "truncated_scales": rep.truncation.truncated_scales,
        },
    })
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Info { input } => {
            let header = io::peek_header(input).map_err(Failure::from_core)?;
            println!("PTSF1 file: {}", input.display());
            println!("  n (dimension)     = {}", header.grid.dim());
            println!("  P (points/axis)   = {}", header.grid.points_per_axis());
            println!("  N (components)    = {}", header.components);
            println!("  K (time slices)   = {}", header.times.len());
            println!("  box_length        = {}", header.grid.box_length());
            if let (Some(first), Some(last)) = (header.times.first(), header.times.last()) {
                println!("  times             = [{first}, {last}]");
            }
            Ok(())
        }
        Command::Solve {
            coeffs,
            m,
            t_final,
            dt,
            theta,
            input,
            output,
        } => {
            let (f, t0) = io::read_field(input).map_err(Failure::from_core)?;
            let spec = CoeffSpec::parse(coeffs).map_err(Failure::from_core)?;
            let field = spec
                .build(f.grid(), *m, f.components(), *t_final)
                .map_err(Failure::from_core)?;
            let solver = SolverConfig {
                dt: *dt,
                theta: *theta,
                ..Default::default()
            };
            solver.validate().map_err(Failure::from_core)?;
            let prop = Propagator::new(field, solver).map_err(Failure::from_core)?;
            let traj = prop
                .propagate(t0, t0 + *t_final, &f)
                .map_err(Failure::from_core)?;
            io::write_trajectory(output, &traj).map_err(Failure::from_core)?;
            write_manifest(
                output,
                manifest_body(json!({
                    "coeffs": coeffs, "m": m, "T": t_final, "dt": dt, "theta": theta,
                    "seed": cli.seed,
                })),
            )?;
            println!("wrote {} slices to {}", traj.len(), output.display());
            Ok(())
        }
        Command::Semigroup {
            preset,
            m,
            t,
            input,
            output,
        } => {
            let (f, t0) = io::read_field(input).map_err(Failure::from_core)?;
            let spec = CoeffSpec::parse(preset).map_err(Failure::from_core)?;
            let field = spec
                .build(f.grid(), *m, f.components(), *t)
                .map_err(Failure::from_core)?;
            let sg = Semigroup::new(field).map_err(Failure::from_core)?;
            let u = sg.apply(*t, &f).map_err(Failure::from_core)?;
            io::write_field(output, &u, t0 + *t).map_err(Failure::from_core)?;
            write_manifest(
                output,
                manifest_body(json!({"preset": preset, "m": m, "t": t})),
            )?;
            println!("wrote {}", output.display());
            Ok(())
        }
        Command::Norm {
            kind,
            p,
            m,
            input,
            json: json_out,
        } => {
            let traj = io::read_trajectory(input).map_err(Failure::from_core)?;
            let pval = parse_p(p)?;
            let report = match kind.as_str() {
                "tent" => {
                    let gm = grad_m_trajectory(&traj, *m, Scheme::Spectral)
                        .map_err(Failure::from_core)?;
                    tent_norm(&gm, pval, *m).map_err(Failure::from_core)?
                }
                "nontan" => nontangential_norm(&traj, pval, *m).map_err(Failure::from_core)?,
                "carleson" => carleson_norm(&traj, *m).map_err(Failure::from_core)?,
                "bmo" => bmo_norm(traj.slice(0)).map_err(Failure::from_core)?,
                "bmom" => bmo_m_norm(traj.slice(0), *m).map_err(Failure::from_core)?,
                "lpm" => lp_m_norm(traj.slice(0), *m, pval).map_err(Failure::from_core)?,
                other => return Err(Failure::validation(format!("unknown norm kind `{other}`"))),
            };
            let body = norm_report_json(&report);
            println!("{body}");
            if let Some(path) = json_out {
                std::fs::write(path, serde_json::to_string_pretty(&body).unwrap()).map_err(
                    |e| Failure::validation(format!("cannot write {}: {e}", path.display())),
                )?;
                write_manifest(path, manifest_body(json!({"kind": kind, "p": p, "m": m})))?;
            }
            Ok(())
        }
        Command::Project {
            m,
            input,
            json: json_out,
            output,
        } => {
            let (f, t0) = io::read_field(input).map_err(Failure::from_core)?;
            let (proj, residual) = filter_polynomial(&f, *m).map_err(Failure::from_core)?;
            let coeffs: Vec<serde_json::Value> = proj
                .basis
                .iter()
                .zip(&proj.coeffs)
                .map(|(alpha, c)| json!({"alpha": alpha.entries(), "re": c.re, "im": c.im}))
                .collect();
            let body = json!({
                "degree": proj.degree,
                "ball": {"center": proj.ball.center, "radius": proj.ball.radius},
                "coeffs": coeffs,
                "sup_ratio": proj.sup_ratio,
            });
            println!("{body}");
            if let Some(path) = json_out {
                std::fs::write(path, serde_json::to_string_pretty(&body).unwrap()).map_err(
                    |e| Failure::validation(format!("cannot write {}: {e}", path.display())),
                )?;
            }
            if let Some(path) = output {
                io::write_field(path, &residual, t0).map_err(Failure::from_core)?;
                write_manifest(path, manifest_body(json!({"m": m})))?;
            }
            Ok(())
        }
        Command::Verify {
            experiment,
            all,
            config,
            out,
        } => {
            let names: Vec<String> = if *all {
                experiments::EXPERIMENT_NAMES
                    .iter()
                    .map(|s| s.to_string())
                    .collect()
            } else {
                match experiment {
                    Some(name) => vec![name.clone()],
                    None => {
                        return Err(Failure::validation(
                            "verify needs an experiment name or --all",
                        ))
                    }
                }
            };
            // Configs are resolved up front so validation errors surface
            // before any experiment runs.
            let mut configs: Vec<ExperimentConfig> = Vec::with_capacity(names.len());
            for name in &names {
                let mut cfg: ExperimentConfig = match config {
                    Some(path) => config::parse_config(path, Some(name))
                        .map_err(|e| Failure::validation(e.to_string()))?,
                    None => experiments::default_config(name),
                };
                if let Some(seed) = cli.seed {
                    cfg.seed = seed;
                }
                configs.push(cfg);
            }
            // Independent jobs; results land in distinct directories, so
            // they can run on worker threads.
            use rayon::prelude::*;
            let runs: Vec<Result<experiments::ExperimentResult, tentlab_core::Error>> =
                configs.par_iter().map(experiments::run).collect();
            let mut all_pass = true;
            for ((name, cfg), run_result) in names.iter().zip(&configs).zip(runs) {
                let result = run_result.map_err(Failure::from_core)?;
                let dir = out.join(name);
                std::fs::create_dir_all(&dir).map_err(|e| {
                    Failure::validation(format!("cannot create {}: {e}", dir.display()))
                })?;
                let result_path = dir.join("result.json");
                std::fs::write(&result_path, serde_json::to_string_pretty(&result).unwrap())
                    .map_err(|e| Failure::validation(format!("cannot write result.json: {e}")))?;
                std::fs::write(dir.join("curves.csv"), result.csv())
                    .map_err(|e| Failure::validation(format!("cannot write curves.csv: {e}")))?;
                write_manifest(
                    &dir,
                    manifest_body(json!({
                        "experiment": name,
                        "config_hash": cfg.hash(),
                        "seed": cfg.seed,
                        "grid": cfg.grid,
                        "coeffs": cfg.coeffs,
                        "solver": cfg.solver,
                    })),
                )?;
                for c in &result.criteria {
                    println!(
                        "[{}] {}: {} = {:.6e} {} {:.3e}",
                        if c.pass { "pass" } else { "FAIL" },
                        name,
                        c.name,
                        c.value,
                        c.op,
                        c.threshold
                    );
                }
                println!(
                    "{name}: verdict {} ({} criteria) -> {}",
                    if result.pass { "pass" } else { "FAIL" },
                    result.criteria.len(),
                    result_path.display()
                );
                all_pass &= result.pass;
            }
            if !all_pass {
                // Experiments ran to completion; a failed verdict is its
                // own exit code, distinct from validation (2) and
                // numerical failure (3).
                std::process::exit(1);
            }
            Ok(())
        }
    }
}
