//! Command line driver: model tables, single solves, flows and audit runs from JSON configs.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::audit::EstimateAudit;
use crate::error::{Error, Result};
use crate::fake::{check_gradient_bound, check_upper_bound_r, fake_distance, FakeDistanceField};
use crate::geom::Domain;
use crate::imcf::{check_limit_formula, check_mean_curvature_bound, run_domain_flow, run_point_flow, FlowResult};
use crate::model::{ModelKernel, ModelManifold};
use crate::psolve::{green_kernel_numeric, PSolveConfig, SolveReport};
use crate::verify::{self, ConstantsRecord, Eta};
pub use config::{AuditKind, Built, GeometrySpec, Perturbation, RunConfig, SCHEMA_VERSION};
use output::{write_csv, write_json};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_SOFT: i32 = 1;
pub const EXIT_MATH: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_AUDIT: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "fakedist", version, about = "Green kernels, fake distances and the p → 1 flow limit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: FAKEDIST_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Halve the mesh size this many times.
    #[arg(long, default_value_t = 0)]
    pub refine: u32,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tables of h, v_h, V_h and the model kernel.
    Model(Common),
    /// Green kernel and fake distance at the configured p.
    Solve(Common),
    /// The p → 1 continuation.
    Flow(Common),
    /// Solve, flow and audit.
    Verify(Common),
    /// Summarize the audits of a previous verify run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match cli.command {
        Command::Model(c) => with_setup(&c, cmd_model),
        Command::Solve(c) => with_setup(&c, cmd_solve),
        Command::Flow(c) => with_setup(&c, cmd_flow),
        Command::Verify(c) => with_setup(&c, cmd_verify),
        Command::Report { out } => cmd_report(&out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_mathematical() {
        EXIT_MATH
    } else {
        EXIT_IO
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("FAKEDIST_THREADS") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| Error::Config(format!("FAKEDIST_THREADS is not a count: {s}"))),
        Err(_) => Ok(None),
    }
}

fn with_setup(c: &Common, f: impl FnOnce(&RunConfig, &Path) -> Result<i32>) -> Result<i32> {
    if let Some(n) = threads(c.threads)? {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.refine(c.refine);
    let out = c.out.clone().or_else(|| cfg.out.clone()).ok_or_else(|| Error::Config("no output directory given".into()))?;
    std::fs::create_dir_all(&out)?;
    f(&cfg, &out)
}

#[derive(Serialize)]
struct ModelMeta<'a> {
    schema: u32,
    seed: u64,
    m: usize,
    profile: &'a crate::model::ProfileSpec,
    p: f64,
    omega: f64,
    tail: crate::model::Tail,
    r_inf: Option<f64>,
    nonparabolic: bool,
}

/// Writes `model.csv` (t, h, v_h, V_h, 𝒢) and `model.json`.
pub fn cmd_model(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let model = cfg.model()?;
    let nonparabolic = model.nonparabolic(cfg.p)?;
    if !nonparabolic {
        return Err(Error::Parabolic { p: cfg.p });
    }
    let kern = ModelKernel::entire(model.clone(), cfg.p)?;
    let t_end = match cfg.geometry {
        GeometrySpec::Radial { t_out, .. } | GeometrySpec::WarpedSurface { t_out, .. } => t_out,
        GeometrySpec::MeshFile { .. } => model.t_max().min(10.0),
    };
    let n = 200;
    let rows = (1..=n)
        .map(|i| {
            let t = t_end * i as f64 / n as f64;
            Ok(vec![t, model.h(t), model.sphere_volume(t)?, model.ball_volume(t)?, kern.value(t)?])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&out.join("model.csv"), &["t", "h", "v_h", "big_v_h", "kernel"], rows)?;
    write_json(
        &out.join("model.json"),
        &ModelMeta {
            schema: SCHEMA_VERSION,
            seed: cfg.seed,
            m: model.dim(),
            profile: &cfg.profile,
            p: cfg.p,
            omega: model.omega(),
            tail: model.tail(),
            r_inf: model.r_inf(),
            nonparabolic,
        },
    )?;
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    schema: u32,
    seed: u64,
    mesh: String,
    mesh_size: f64,
    k_min: Option<f64>,
    p: f64,
    log_capacity: f64,
    residual_weak: f64,
    iterations: usize,
    exhaustion: &'a [crate::psolve::ExhaustionMember],
    monotonicity_defect: f64,
    completed: bool,
    fake_extrapolated: usize,
    fake_round_trip: f64,
}

fn solve_at(built: &Built, cfg: &RunConfig) -> Result<(SolveReport, FakeDistanceField)> {
    let scfg = PSolveConfig { p: cfg.p, ..cfg.solver.clone() };
    let rep = green_kernel_numeric(&built.domain, &scfg, &[])?;
    let fd = fake_distance(&built.domain, &rep, &ModelKernel::entire(built.comparison.clone(), cfg.p)?)?;
    Ok((rep, fd))
}

/// Writes `solve.json` and `field.csv` (vertex, t, r, log 𝒢, ρ).
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let built = config::build(cfg)?;
    let dom = &built.domain;
    let (rep, fd) = solve_at(&built, cfg)?;
    write_json(
        &out.join("solve.json"),
        &SolveSummary {
            schema: SCHEMA_VERSION,
            seed: cfg.seed,
            mesh: dom.id(),
            mesh_size: dom.mesh_size(),
            k_min: built.k_min,
            p: rep.p,
            log_capacity: rep.log_capacity,
            residual_weak: rep.residual_weak,
            iterations: rep.iterations.len(),
            exhaustion: &rep.exhaustion,
            monotonicity_defect: rep.monotonicity_defect,
            completed: rep.completed,
            fake_extrapolated: fd.extrapolated,
            fake_round_trip: fd.round_trip_defect()?,
        },
    )?;
    let (t, r) = (dom.chart_t(), dom.distance());
    write_csv(
        &out.join("field.csv"),
        &["vertex", "t", "r", "log_kernel", "rho"],
        (0..dom.n_vertices()).map(|v| vec![v as f64, t[v], r[v], rep.log_field[v], fd.rho[v]]),
    )?;
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct FlowSummary<'a> {
    schema: u32,
    seed: u64,
    mode: &'a crate::imcf::FlowMode,
    p_list: &'a [f64],
    cauchy_trace: &'a [f64],
    cauchy_decreasing: bool,
    r_i: Option<f64>,
    r_o: Option<f64>,
    mesh: &'a str,
    mesh_size: f64,
    iterations: Vec<usize>,
}

fn flow(built: &mut Built, cfg: &RunConfig) -> Result<FlowResult> {
    match cfg.domain_radius {
        None => run_point_flow(&built.domain, &built.comparison, &cfg.schedule),
        Some(a) => {
            built.domain.tag_ball("omega", a)?;
            run_domain_flow(&built.domain, "omega", &built.comparison, &cfg.schedule)
        }
    }
}

fn write_flow(cfg: &RunConfig, dom: &Domain, fr: &FlowResult, out: &Path) -> Result<()> {
    write_json(
        &out.join("flow.json"),
        &FlowSummary {
            schema: SCHEMA_VERSION,
            seed: cfg.seed,
            mode: &fr.mode,
            p_list: &fr.p_list,
            cauchy_trace: &fr.cauchy_trace,
            cauchy_decreasing: fr.cauchy_decreasing,
            r_i: fr.r_i,
            r_o: fr.r_o,
            mesh: &fr.mesh,
            mesh_size: fr.mesh_size,
            iterations: fr.snapshots.iter().map(|s| s.iterations).collect(),
        },
    )?;
    let r = dom.distance();
    write_csv(
        &out.join("flow.csv"),
        &["vertex", "r", "rho1", "w"],
        (0..dom.n_vertices()).map(|v| vec![v as f64, r[v], fr.rho1[v], fr.w[v]]),
    )
}

/// Writes `flow.json` and `flow.csv` (vertex, r, ρ₁, w).
pub fn cmd_flow(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let mut built = config::build(cfg)?;
    let fr = flow(&mut built, cfg)?;
    write_flow(cfg, &built.domain, &fr, out)?;
    Ok(EXIT_PASS)
}

#[derive(Serialize, Deserialize)]
pub struct AuditReport {
    pub schema: u32,
    pub seed: u64,
    pub mesh: String,
    pub comparison_kappa2: Option<f64>,
    pub audits: Vec<EstimateAuditRecord>,
    pub hard_failures: usize,
    pub soft_failures: usize,
    pub exit: i32,
}

/// The serialized form of an audit.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct EstimateAuditRecord {
    pub name: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub tol: Option<f64>,
    pub pass: bool,
    pub hard: bool,
    pub identity: bool,
    pub location_of_max: Option<usize>,
    pub samples: usize,
    pub p: Option<f64>,
    pub level: Option<f64>,
    pub note: Option<String>,
}

impl From<&EstimateAudit> for EstimateAuditRecord {
    fn from(a: &EstimateAudit) -> Self {
        let fin = |x: f64| x.is_finite().then_some(x);
        EstimateAuditRecord {
            name: a.name.clone(),
            lhs: fin(a.lhs),
            rhs: fin(a.rhs),
            tol: fin(a.tol),
            pass: a.pass,
            hard: a.hard,
            identity: a.identity,
            location_of_max: a.location_of_max,
            samples: a.samples,
            p: a.context.p,
            level: a.context.level,
            note: a.note.clone(),
        }
    }
}

fn audit_exit(audits: &[EstimateAuditRecord]) -> (usize, usize, i32) {
    let hard = audits.iter().filter(|a| a.hard && !a.pass).count();
    let soft = audits.iter().filter(|a| !a.hard && !a.pass).count();
    let code = if hard > 0 {
        EXIT_AUDIT
    } else if soft > 0 {
        EXIT_SOFT
    } else {
        EXIT_PASS
    };
    (hard, soft, code)
}

/// Levels spread over the middle half of `(0, t_end)`.
pub fn mid_levels(t_end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_end * (0.25 + 0.5 * i as f64 / (n - 1) as f64)).collect()
}

/// Six levels spread geometrically over the decade `(t_end/40, t_end/4)`.
pub fn small_levels(t_end: f64) -> Vec<f64> {
    (0..6).map(|i| 0.025 * t_end * 10f64.powf(i as f64 / 5.0)).collect()
}

fn sobolev_for(cfg: &RunConfig, model: &ModelManifold) -> Result<Option<f64>> {
    if cfg.sobolev.is_some() {
        return Ok(cfg.sobolev);
    }
    let flat = matches!(model.profile(), crate::model::CurvatureProfile::Constant { kappa2 } if *kappa2 == 0.0);
    if flat && cfg.p < model.dim() as f64 {
        Ok(Some(verify::flat_sobolev_constant(model.dim(), cfg.p)?))
    } else {
        Ok(None)
    }
}

/// Runs the selected audits and returns them with the level table.
pub fn run_audits(cfg: &RunConfig, built: &mut Built) -> Result<(Vec<EstimateAudit>, Vec<verify::LevelRow>)> {
    let selected = cfg.audits.clone().unwrap_or_else(|| AuditKind::ALL.to_vec());
    let t_end = cfg.outer_radius(&built.domain);
    let levels = mid_levels(t_end, 10);
    let mut audits = Vec::new();
    let need_kernel = selected.iter().any(|k| {
        matches!(k, AuditKind::GradientBound | AuditKind::UpperBoundR | AuditKind::KernelFlux | AuditKind::FluxFunctionals | AuditKind::Decay)
    });
    if need_kernel {
        let (rep, fd) = solve_at(built, cfg)?;
        let dom = &built.domain;
        for k in &selected {
            match k {
                AuditKind::GradientBound => audits.push(check_gradient_bound(dom, &fd)?),
                AuditKind::UpperBoundR => audits.push(check_upper_bound_r(dom, &fd)?),
                AuditKind::KernelFlux => {
                    let kern = ModelKernel::entire(built.comparison.clone(), cfg.p)?;
                    let samples = levels
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| Ok((i, verify::kernel_flux(dom, &rep, kern.log_value(t)?)?, 1.0, 0.01)))
                        .collect::<Result<Vec<_>>>()?;
                    audits.push(EstimateAudit::identity("kernel-flux", samples).with_p(cfg.p).with_mesh(dom.id()));
                }
                AuditKind::FluxFunctionals => {
                    let ones = vec![1.0; dom.n_vertices()];
                    let vals = levels.iter().map(|&t| verify::flux_functionals(dom, &fd, &ones, t)).collect::<Result<Vec<_>>>()?;
                    audits.push(
                        EstimateAudit::identity("flux-area", vals.iter().enumerate().map(|(i, v)| (i, v.0, 1.0, 0.02))).with_p(cfg.p).with_mesh(dom.id()),
                    );
                    audits.push(
                        EstimateAudit::identity("flux-volume", vals.iter().enumerate().map(|(i, v)| (i, v.1, 1.0, 0.02))).with_p(cfg.p).with_mesh(dom.id()),
                    );
                }
                AuditKind::Decay => match sobolev_for(cfg, &built.comparison)? {
                    Some(s) => {
                        let consts = ConstantsRecord::new(cfg.p, dom.dim() as f64, s)?;
                        audits.push(verify::check_decay(dom, &rep, &consts, &Eta::One)?);
                    }
                    // only an explicit request needs the constant
                    None if cfg.audits.is_some() => {
                        return Err(Error::Config("the decay audit needs a Sobolev constant on curved models".into()))
                    }
                    None => {}
                },
                _ => {}
            }
        }
    }
    let mut rows = Vec::new();
    let need_flow = selected.iter().any(|k| matches!(k, AuditKind::LimitFormula | AuditKind::MeanCurvature | AuditKind::Isoperimetric));
    if need_flow {
        let fr = flow(built, cfg)?;
        let dom = &built.domain;
        for k in &selected {
            match k {
                AuditKind::LimitFormula => audits.push(check_limit_formula(dom, &fr, 0.02)?),
                AuditKind::MeanCurvature => audits.extend(check_mean_curvature_bound(dom, &fr)?),
                AuditKind::Isoperimetric => {
                    let mut iso = verify::check_isoperimetric(dom, &fr, &levels, &small_levels(t_end), 2e-3)?;
                    if let Some(trend) = iso.last_mut() {
                        *trend = trend.clone().soft();
                    }
                    audits.extend(iso);
                }
                _ => {}
            }
        }
        rows = verify::level_table(dom, &fr.rho1, 1.0, &built.comparison, &levels)?;
    }
    Ok((audits, rows))
}

/// Writes `audits.json` and `levels.csv` (t, 𝒜₁, 𝒱₁, perimeter, v_h, volume, V_h).
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let mut built = config::build(cfg)?;
    let (audits, rows) = run_audits(cfg, &mut built)?;
    let records: Vec<EstimateAuditRecord> = audits.iter().map(Into::into).collect();
    let (hard, soft, code) = audit_exit(&records);
    let kappa2 = match built.comparison.profile() {
        crate::model::CurvatureProfile::Constant { kappa2 } => Some(*kappa2),
        _ => None,
    };
    let report = AuditReport {
        schema: SCHEMA_VERSION,
        seed: cfg.seed,
        mesh: built.domain.id(),
        comparison_kappa2: kappa2,
        audits: records,
        hard_failures: hard,
        soft_failures: soft,
        exit: code,
    };
    write_json(&out.join("audits.json"), &report)?;
    write_csv(
        &out.join("levels.csv"),
        &["t", "a1", "v1", "perimeter", "v_h", "volume", "big_v_h"],
        rows.iter().map(|r| vec![r.t, r.a1, r.v1, r.perimeter, r.v_h, r.volume, r.big_v_h]),
    )?;
    print_summary(&report);
    Ok(code)
}

fn print_summary(report: &AuditReport) {
    for a in &report.audits {
        let status = match (a.pass, a.hard) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "warn",
        };
        let f = |x: Option<f64>| x.map(output::fmt15).unwrap_or_else(|| "-".into());
        println!("{status:4} {:28} lhs={} rhs={} tol={}", a.name, f(a.lhs), f(a.rhs), f(a.tol));
    }
    println!("{} hard failures, {} warnings", report.hard_failures, report.soft_failures);
}

/// Prints the audits of a previous verify run and returns its exit code.
pub fn cmd_report(out: &Path) -> Result<i32> {
    let text = std::fs::read_to_string(out.join("audits.json"))?;
    let report: AuditReport = serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
    let (hard, soft, code) = audit_exit(&report.audits);
    if hard != report.hard_failures || soft != report.soft_failures {
        return Err(Error::Config("audit counts in audits.json are inconsistent".into()));
    }
    print_summary(&report);
    Ok(code)
}
