//! Command-line front end: spectral reports, R-matrix solves, invariant
//! measures, decay-rate sweeps, boundary designs, hitting diagnostics and
//! the validation suite, emitted as schema-conformant JSON (CSV for sweeps).
//!
//! Exit codes: 0 success, 1 validation failure, 2 bad configuration,
//! 3 unstable network, 4 infeasible decay target.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::{OutputFormat, PartialConfig, RunConfig};
use tandem_qbd::model::{Capacity, Regime};
use tandem_qbd::validate::ValidateConfig;
use tandem_qbd::{control, hitting, invariant, model, orthopoly, qbd, validate, Error};

/// Output schema version; the matching JSON Schema ships in
/// `schema/output.schema.json`.
const OUTPUT_VERSION: u64 = 1;

const EXIT_VALIDATION: u8 = 1;
const EXIT_BAD_CONFIG: u8 = 2;
const EXIT_UNSTABLE: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tandem-qbd",
    version,
    about = "Spectral analysis of the two-node tandem queue as a QBD process",
    long_about = "Computes decay rates, rate matrices, invariant measures, level-0 boundary \
                  designs and hitting-probability diagnostics for the two-node tandem queue, \
                  with every analytic result cross-checkable against brute-force oracles.\n\n\
                  Options may also be given in a flat key=value config file (--config); \
                  command-line flags override file values. Config keys: lambda, mu1, mu2, \
                  capacity, tol, phase_cap, level_cap, k_max, m_max, seed, format, out.\n\n\
                  The TANDEM_QBD_OUT_DIR environment variable overrides the directory of the \
                  --out path (and nothing else).\n\n\
                  Exit codes: 0 success, 1 validation failure, 2 bad configuration, \
                  3 unstable network, 4 infeasible decay target."
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Arrival rate at the first queue (events/time) [default: 1.0]
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Service rate of the first queue (events/time) [default: 3.0]
    #[arg(long, global = true)]
    mu1: Option<f64>,
    /// Service rate of the second queue (events/time) [default: 2.0]
    #[arg(long, global = true)]
    mu2: Option<f64>,
    /// First-queue waiting room: a positive integer or 'inf' [default: inf]
    #[arg(long, global = true, value_parser = config::parse_capacity)]
    capacity: Option<Capacity>,
    /// Flat key=value configuration file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Solver tolerance [default: 1e-12]
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Phase cap for finite surrogates of infinite-capacity networks [default: 80]
    #[arg(long, global = true)]
    phase_cap: Option<usize>,
    /// Level cap for truncated-chain solves [default: 80]
    #[arg(long, global = true)]
    level_cap: Option<usize>,
    /// Horizon for hitting-probability products [default: 200]
    #[arg(long, global = true)]
    k_max: Option<usize>,
    /// Largest waiting-room size in sweeps [default: 20]
    #[arg(long, global = true)]
    m_max: Option<usize>,
    /// Random seed for simulation commands [default: 20240607]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format: json or csv (csv applies to sweep tables) [default: json]
    #[arg(long, global = true, value_parser = config::parse_format)]
    format: Option<OutputFormat>,
    /// Write output to this file instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral report: utilizations, eta, z1, regime, feasible decay interval
    Spectral,
    /// Minimal nonnegative solution of the rate-matrix equation
    Rmatrix,
    /// Invariant measure w at a decay rate z, with its classification
    Invariant {
        /// Decay rate z in (-1, 1) \ {0}
        #[arg(long)]
        z: f64,
        /// Number of materialized entries [default: 50]
        #[arg(long, default_value_t = 50)]
        n_terms: usize,
    },
    /// Decay-rate sweep over waiting-room sizes m = 1..=m_max
    SweepZhat,
    /// Level-0 boundary design forcing the target decay rate, with
    /// oracle verification of the induced product form
    Design {
        /// Which boundary modification to construct
        #[arg(long, value_parser = ["arrival", "removal"])]
        kind: String,
        /// Decay rate to force
        #[arg(long)]
        target_z: f64,
    },
    /// Decay diagnostics of the exit probabilities P_1^K(i, j)
    Hitting {
        /// Starting phase i at level 1 [default: 0]
        #[arg(long, default_value_t = 0)]
        start_phase: usize,
        /// Phase j observed at the upper hit [default: 0]
        #[arg(long, default_value_t = 0)]
        target_phase: usize,
    },
    /// Run the validation suite (exit 0 iff every selected criterion passes)
    Validate {
        /// Monte Carlo replications for the simulation cross-check
        #[arg(long, default_value_t = 1_000_000)]
        replications: usize,
        /// Criterion ids to run (comma separated); all nine when omitted
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let flags = PartialConfig {
        lambda: cli.global.lambda,
        mu1: cli.global.mu1,
        mu2: cli.global.mu2,
        capacity: cli.global.capacity,
        tol: cli.global.tol,
        phase_cap: cli.global.phase_cap,
        level_cap: cli.global.level_cap,
        k_max: cli.global.k_max,
        m_max: cli.global.m_max,
        seed: cli.global.seed,
        format: cli.global.format,
        out: cli.global.out.clone(),
    };
    let file_cfg = match &cli.global.config {
        Some(path) => match config::parse_config_file(path) {
            Ok(c) => c,
            Err(msg) => return fail(EXIT_BAD_CONFIG, &msg),
        },
        None => PartialConfig::default(),
    };
    let cfg = config::resolve(flags, file_cfg);

    let result = match &cli.command {
        Command::Spectral => cmd_spectral(&cfg),
        Command::Rmatrix => cmd_rmatrix(&cfg),
        Command::Invariant { z, n_terms } => cmd_invariant(&cfg, *z, *n_terms),
        Command::SweepZhat => cmd_sweep_zhat(&cfg),
        Command::Design { kind, target_z } => cmd_design(&cfg, kind, *target_z),
        Command::Hitting {
            start_phase,
            target_phase,
        } => cmd_hitting(&cfg, *start_phase, *target_phase),
        Command::Validate { replications, only } => return cmd_validate(&cfg, *replications, only),
    };
    match result {
        Ok(rendered) => emit(&cfg, &rendered),
        Err(e) => fail(exit_code_for(&e), &e.to_string()),
    }
}

/// Rendered output: JSON value or a raw CSV table.
enum Rendered {
    Json(Value),
    Csv(String),
}

fn emit(cfg: &RunConfig, rendered: &Rendered) -> ExitCode {
    let text = match rendered {
        Rendered::Json(v) => format!("{:#}\n", v),
        Rendered::Csv(s) => s.clone(),
    };
    match output_path(cfg) {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, &text) {
                return fail(
                    EXIT_BAD_CONFIG,
                    &format!("cannot write {}: {e}", path.display()),
                );
            }
            ExitCode::SUCCESS
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
    }
}

/// The output path, with its directory overridden by TANDEM_QBD_OUT_DIR
/// when that variable is set.
fn output_path(cfg: &RunConfig) -> Option<PathBuf> {
    let out = cfg.out.clone()?;
    match std::env::var_os("TANDEM_QBD_OUT_DIR") {
        Some(dir) => {
            let file = out.file_name().map(PathBuf::from).unwrap_or(out);
            Some(PathBuf::from(dir).join(file))
        }
        None => Some(out),
    }
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) => EXIT_BAD_CONFIG,
        Error::Unstable(_) | Error::NoBracket { .. } => EXIT_UNSTABLE,
        Error::InfeasibleTarget { .. } => EXIT_INFEASIBLE,
        _ => EXIT_VALIDATION,
    }
}

fn regime_str(regime: Regime) -> &'static str {
    match regime {
        Regime::FirstBottleneck => "FirstBottleneck",
        Regime::SecondBottleneck => "SecondBottleneck",
    }
}

fn cmd_spectral(cfg: &RunConfig) -> Result<Rendered, Error> {
    let params = cfg.params()?;
    let report = model::spectral_report(&params, cfg.tol)?;
    Ok(Rendered::Json(json!({
        "command": "spectral",
        "version": OUTPUT_VERSION,
        "lambda": params.lambda,
        "mu1": params.mu1,
        "mu2": params.mu2,
        "rho1": report.rho1,
        "rho2": report.rho2,
        "eta": report.eta,
        "z1": report.z1,
        "regime": regime_str(report.regime),
        "feasible_interval": {
            "lo": report.feasible_decay_interval.0,
            "hi": report.feasible_decay_interval.1,
            "lo_closed": true,
            "hi_closed": false,
        },
    })))
}

fn note_surrogate(capacity: Capacity, m: usize, what: &str) {
    if capacity == Capacity::Infinite {
        eprintln!("note: infinite capacity truncated to a {m}-phase surrogate for {what}");
    }
}

fn cmd_rmatrix(cfg: &RunConfig) -> Result<Rendered, Error> {
    let params = cfg.params()?;
    let m = cfg.surrogate_phase_cap();
    note_surrogate(params.capacity, m, "the rate-matrix solve");
    let finite =
        tandem_qbd::TandemParams::new(params.lambda, params.mu1, params.mu2, Capacity::Finite(m))?;
    let stab = model::stability_check(&finite);
    if !stab.stable {
        return Err(Error::Unstable(format!(
            "{} fails: {} >= {}",
            stab.condition, stab.lhs, stab.rhs
        )));
    }
    let blocks = model::build_blocks(&finite, m)?;
    let sol = qbd::solve_r(&blocks, cfg.tol)?;
    let rows: Vec<Vec<f64>> = (0..sol.r.nrows())
        .map(|i| sol.r.row(i).iter().copied().collect())
        .collect();
    Ok(Rendered::Json(json!({
        "command": "rmatrix",
        "version": OUTPUT_VERSION,
        "phase_cap": m,
        "spectral_radius": sol.spectral_radius,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "r": rows,
    })))
}

fn cmd_invariant(cfg: &RunConfig, z: f64, n_terms: usize) -> Result<Rendered, Error> {
    let params = cfg.params()?;
    let measure = invariant::solve_w(&params, z, n_terms.max(2))?;
    let coeffs = match measure.coeffs {
        invariant::RegimeCoeffs::RealRoots { u1, u2, c1, c2 } => json!({
            "kind": "real_roots", "u1": u1, "u2": u2, "c1": c1, "c2": c2,
        }),
        invariant::RegimeCoeffs::Degenerate { u, c } => json!({
            "kind": "degenerate", "u": u, "c": c,
        }),
        invariant::RegimeCoeffs::Oscillating { u_abs, phi, c } => json!({
            "kind": "oscillating", "u_abs": u_abs, "phi": phi, "c": c,
        }),
    };
    Ok(Rendered::Json(json!({
        "command": "invariant",
        "version": OUTPUT_VERSION,
        "z": measure.z,
        "regime": match measure.regime {
            invariant::MeasureRegime::RealRoots => "RealRoots",
            invariant::MeasureRegime::Degenerate => "Degenerate",
            invariant::MeasureRegime::Oscillating => "Oscillating",
        },
        "in_ell1": measure.in_ell1,
        "positive": measure.positive,
        "feasible": measure.in_ell1 && measure.positive,
        "coefficients": coeffs,
        "w": measure.w,
    })))
}

fn cmd_sweep_zhat(cfg: &RunConfig) -> Result<Rendered, Error> {
    let params_inf = tandem_qbd::TandemParams::infinite(cfg.lambda, cfg.mu1, cfg.mu2)?;
    let regime = params_inf.regime();
    let limit = match regime {
        Regime::FirstBottleneck => model::compute_eta(&params_inf, cfg.tol.min(1e-12))?,
        Regime::SecondBottleneck => params_inf.rho2(),
    };
    let mut rows = Vec::with_capacity(cfg.m_max);
    for m in 1..=cfg.m_max {
        match orthopoly::compute_zhat(&params_inf, m, cfg.tol) {
            Ok(zhat) => rows.push((m, Some(zhat), None)),
            Err(e) => rows.push((m, None, Some(e.to_string()))),
        }
    }
    match cfg.format {
        OutputFormat::Csv => {
            let mut csv = String::from("m,zhat,gap_to_limit,error\n");
            for (m, zhat, err) in &rows {
                match zhat {
                    Some(v) => csv.push_str(&format!("{m},{v:.12},{:.12},\n", limit - v)),
                    None => csv.push_str(&format!(
                        "{m},,,\"{}\"\n",
                        err.as_deref().unwrap_or("unknown")
                    )),
                }
            }
            Ok(Rendered::Csv(csv))
        }
        OutputFormat::Json => {
            let json_rows: Vec<Value> = rows
                .iter()
                .map(|(m, zhat, err)| {
                    json!({
                        "m": m,
                        "zhat": zhat,
                        "gap_to_limit": zhat.map(|v| limit - v),
                        "error": err,
                    })
                })
                .collect();
            Ok(Rendered::Json(json!({
                "command": "sweep_zhat",
                "version": OUTPUT_VERSION,
                "regime": regime_str(regime),
                "limit": limit,
                "rows": json_rows,
            })))
        }
    }
}

fn cmd_design(cfg: &RunConfig, kind: &str, target_z: f64) -> Result<Rendered, Error> {
    if let Capacity::Finite(_) = cfg.capacity {
        return Err(Error::InvalidParameter(
            "boundary designs apply to infinite-capacity networks; drop --capacity".into(),
        ));
    }
    let params = tandem_qbd::TandemParams::infinite(cfg.lambda, cfg.mu1, cfg.mu2)?;
    let phase_cap = cfg.phase_cap;
    let design = match kind {
        "arrival" => control::design_arrival_rates(&params, target_z, phase_cap)?,
        "removal" => control::design_removal_rates(&params, target_z, phase_cap)?,
        _ => unreachable!("clap restricts the kind values"),
    };
    let blocks = control::build_modified_blocks(&params, &design, phase_cap)?;
    let report = control::verify_product_form(&blocks, target_z, &design.w, cfg.level_cap)?;
    Ok(Rendered::Json(json!({
        "command": "design",
        "version": OUTPUT_VERSION,
        "kind": kind,
        "target_z": target_z,
        "phase_cap": phase_cap,
        "level_cap": cfg.level_cap,
        "rates": design.rates,
        "measured_decay": report.measured_decay,
        "decay_error": (report.measured_decay - target_z).abs(),
        "product_form_max_deviation": report.max_rel_deviation,
        "fitted_scale": report.fitted_scale,
        "level_window": [report.level_window.0, report.level_window.1],
    })))
}

fn cmd_hitting(
    cfg: &RunConfig,
    start_phase: usize,
    target_phase: usize,
) -> Result<Rendered, Error> {
    let params = cfg.params()?;
    let m = cfg.surrogate_phase_cap();
    note_surrogate(params.capacity, m, "the hitting-probability ladders");
    let finite =
        tandem_qbd::TandemParams::new(params.lambda, params.mu1, params.mu2, Capacity::Finite(m))?;
    let blocks = model::build_blocks(&finite, m)?;
    let est = hitting::hitting_decay_estimate(&blocks, start_phase, target_phase, cfg.k_max)?;
    let params_inf = tandem_qbd::TandemParams::infinite(cfg.lambda, cfg.mu1, cfg.mu2)?;
    let (ref_kind, ref_value) = match params.capacity {
        Capacity::Finite(_) => ("zhat", orthopoly::compute_zhat(&params_inf, m, 1e-12)?),
        Capacity::Infinite => match params_inf.regime() {
            Regime::FirstBottleneck => ("eta", model::compute_eta(&params_inf, 1e-13)?),
            Regime::SecondBottleneck => ("rho2", params_inf.rho2()),
        },
    };
    let tail: Vec<f64> = est.ratios.iter().rev().take(5).rev().copied().collect();
    Ok(Rendered::Json(json!({
        "command": "hitting",
        "version": OUTPUT_VERSION,
        "start_phase": start_phase,
        "target_phase": target_phase,
        "phase_cap": m,
        "k_max": cfg.k_max,
        "final_ratio": est.final_ratio,
        "log_slope_rate": est.log_slope.exp(),
        "ratios_tail": tail,
        "reference": { "kind": ref_kind, "value": ref_value },
        "reference_gap": (est.final_ratio - ref_value).abs(),
    })))
}

fn cmd_validate(cfg: &RunConfig, replications: usize, only: &[usize]) -> ExitCode {
    let vcfg = ValidateConfig {
        solver_tol: cfg.tol,
        replications,
        seed: cfg.seed,
    };
    let ids: Vec<usize> = if only.is_empty() {
        (1..=validate::CRITERIA_COUNT).collect()
    } else {
        if only
            .iter()
            .any(|&id| !(1..=validate::CRITERIA_COUNT).contains(&id))
        {
            return fail(
                EXIT_BAD_CONFIG,
                &format!("criterion ids must be 1..={}", validate::CRITERIA_COUNT),
            );
        }
        only.to_vec()
    };
    let outcomes: Vec<_> = ids
        .iter()
        .map(|&id| validate::run_criterion(id, &vcfg))
        .collect();
    let all_pass = outcomes.iter().all(|o| o.pass);
    let json_outcomes: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "id": o.id,
                "name": o.name,
                "pass": o.pass,
                "details": o.details,
            })
        })
        .collect();
    let rendered = Rendered::Json(json!({
        "command": "validate",
        "version": OUTPUT_VERSION,
        "all_pass": all_pass,
        "outcomes": json_outcomes,
    }));
    let code = emit(cfg, &rendered);
    if code != ExitCode::SUCCESS {
        return code;
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}
