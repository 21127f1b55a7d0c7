//! `omega`: command-line front end for the Omega-clock call solver.
//!
//! Artifacts go to `--out`; their paths are printed on stdout, one per line.
//! Errors are printed on stderr as JSON.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use omega_core::config::{parse_overrides, LoadedConfig};
use omega_core::export::{level_pair, region_json, write_json_file, write_profile_csv_file};
use omega_core::mc::{standard_checks, PathConfig};
use omega_core::thresholds::{find_y_infinity, find_y_tilde, threshold_set};
use omega_core::valuation::{default_grid, value_profile, ValueProfile};
use omega_core::{Context, Error};

/// MC checks with a larger |z| fail `verify-mc`.
const MC_Z_LIMIT: f64 = 4.0;

#[derive(Parser, Debug)]
#[command(name = "omega", version, about = "Perpetual American call under an occupation-time discount")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Martingale class, variation and the sign of u_bar.
    Classify(Common),
    /// Level-independent thresholds.
    Thresholds(Common),
    /// Stopping region and value profile at level_y.
    Region(Common),
    /// Value table at level_y.
    ValueTable(Common),
    /// Monte Carlo check of the analytic values at level_y.
    VerifyMc(Common),
    /// Profiles for y in {2.7, y_tilde, 3} and a summary of all endpoints.
    Figure1(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 20240611)]
    seed: u64,
    /// Comma-separated key=value pairs applied after parsing.
    #[arg(long, default_value = "")]
    overrides: String,
    /// Number of grid points in value tables.
    #[arg(long, default_value_t = 600)]
    grid: usize,
    #[arg(long, default_value_t = 100_000)]
    mc_paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    body: Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidModel(_) => 2,
            Error::RegimeError(_) | Error::BranchingDetected { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            body: json!({ "error": e.kind(), "message": e.to_string() }),
        }
    }
}

type Run = Result<Vec<PathBuf>, Failure>;

struct Session {
    loaded: LoadedConfig,
    ctx: Context,
    args: Common,
}

impl Session {
    fn open(args: &Common) -> Result<Self, Failure> {
        let overrides = parse_overrides(&args.overrides)?;
        let loaded = LoadedConfig::load(&args.config, &overrides)?;
        let ctx = loaded.config.context()?;
        std::fs::create_dir_all(&args.out).map_err(Error::from)?;
        Ok(Session {
            loaded,
            ctx,
            args: args.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.args.out.join(name)
    }

    fn write_json(&self, name: &str, mut body: Value) -> Result<PathBuf, Failure> {
        body["config"] = self.loaded.echo();
        let p = self.path(name);
        write_json_file(&body, &p)?;
        Ok(p)
    }

    fn profile(&self, y: f64) -> Result<ValueProfile, Failure> {
        let grid = default_grid(&self.ctx, y, self.args.grid);
        Ok(value_profile(&self.ctx, y, &grid)?)
    }
}

fn classify(s: &Session) -> Run {
    let report = s.ctx.regime_report()?;
    let body = serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?;
    Ok(vec![s.write_json("classify.json", json!({ "regime": body }))?])
}

fn thresholds(s: &Session) -> Run {
    let ctx = &s.ctx;
    let body = match ctx.class {
        omega_core::levy::MartingaleClass::Martingale => json!({
            "k_under": level_pair(Some(ctx.k_under)),
            "y_inf": level_pair(Some(find_y_infinity(ctx)?)),
        }),
        _ => {
            let t = threshold_set(ctx)?;
            let mut v = serde_json::to_value(&t).map_err(|e| Error::Io(e.to_string()))?;
            v["levels"] = json!({
                "y_bar": level_pair(Some(t.y_bar)),
                "y0": level_pair(t.y0),
                "y_tilde": level_pair(t.y_tilde),
                "y_m": level_pair(Some(t.y_m)),
                "k_under": level_pair(Some(t.k_under)),
                "k_over": level_pair(Some(t.k_over)),
            });
            v
        }
    };
    Ok(vec![s.write_json("thresholds.json", json!({ "thresholds": body }))?])
}

fn region(s: &Session, csv_name: &str) -> Run {
    let y = s.loaded.config.level_y()?;
    let profile = s.profile(y)?;
    let csv = s.path(csv_name);
    write_profile_csv_file(&profile, &csv)?;
    let json = s.write_json("region.json", region_json(&profile))?;
    Ok(vec![csv, json])
}

fn verify_mc(s: &Session) -> Run {
    let y = s.loaded.config.level_y()?;
    let mut cfg = PathConfig::new(s.ctx.r, s.args.mc_paths, s.args.seed);
    cfg.dt = s.args.dt;
    let checks = standard_checks(&s.ctx, y, &cfg)?;
    let csv = s.path("verify_mc.csv");
    let mut w = String::from("check,x,analytic,mc_mean,std_error,z_score,n\n");
    for c in &checks {
        w.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.name, c.x, c.analytic, c.mean, c.std_error, c.z_score, c.n
        ));
    }
    std::fs::write(&csv, w).map_err(Error::from)?;
    let worst = checks.iter().map(|c| c.z_score.abs()).fold(0.0, f64::max);
    let json = s.write_json(
        "verify_mc.json",
        json!({ "y": y, "seed": cfg.seed, "dt": cfg.dt, "n_paths": cfg.n_paths, "max_abs_z": worst, "checks": checks }),
    )?;
    if !(worst <= MC_Z_LIMIT) {
        return Err(Failure {
            code: 4,
            body: json!({
                "error": "McZScore",
                "message": format!("max |z| = {worst} exceeds {MC_Z_LIMIT}"),
                "artifacts": [csv, json],
            }),
        });
    }
    Ok(vec![csv, json])
}

fn figure1(s: &Session) -> Run {
    let ctx = &s.ctx;
    let y_tilde = find_y_tilde(ctx)?;
    let mut paths = Vec::new();
    let mut panels = Vec::new();
    for (tag, y) in [("y_2.7", 2.7), ("y_tilde", y_tilde), ("y_3", 3.0)] {
        let profile = s.profile(y)?;
        let csv = s.path(&format!("figure1_{tag}.csv"));
        write_profile_csv_file(&profile, &csv)?;
        paths.push(csv);
        let mut panel = region_json(&profile);
        panel["panel"] = json!(tag);
        panel["y"] = level_pair(Some(y));
        panel["csv"] = json!(format!("figure1_{tag}.csv"));
        panels.push(panel);
    }
    let t = threshold_set(ctx)?;
    let summary = json!({
        "panels": panels,
        "k_under": level_pair(Some(ctx.k_under)),
        "k_over": level_pair(Some(ctx.k_over)),
        "y_tilde": level_pair(Some(y_tilde)),
        "y_m": level_pair(Some(t.y_m)),
        "u_bar": t.u_bar,
        "psi_1": ctx.psi_1,
    });
    paths.push(s.write_json("figure1_summary.json", summary)?);
    Ok(paths)
}

fn run(verb: &Verb) -> Run {
    let (args, f): (&Common, fn(&Session) -> Run) = match verb {
        Verb::Classify(a) => (a, classify),
        Verb::Thresholds(a) => (a, thresholds),
        Verb::Region(a) => (a, |s| region(s, "profile.csv")),
        Verb::ValueTable(a) => (a, |s| region(s, "value_table.csv")),
        Verb::VerifyMc(a) => (a, verify_mc),
        Verb::Figure1(a) => (a, figure1),
    };
    let session = Session::open(args)?;
    f(&session)
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", Path::new(p).display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.verb) {
        Ok(paths) => {
            print_paths(&paths);
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code)
        }
    }
}
