//! The CLI subcommands as library functions.
//!
//! Every simulation command runs the matrix `n_list × replications` of
//! coupled runs, writes one CSV row per `(N, replication, t)` and a JSON
//! summary. Distances to the product of nonlinear laws are estimated only
//! through the simulated coupling: `(1/N) Σ f(‖X̄^i − X^i‖)` is an upper
//! bound, averaged over replications.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use meanfield_core::model::{gronwall_moment_bound, validate_assumptions, PotentialModel, ValidationReport};
use meanfield_core::rates::{
    discretization_allowance, omega, sufficient_eta, tabulate_geometry, theorem_bound, upsilon_constant,
    verify_f_inequality, FInequalityReport, ProfileOptions, RateProfile,
};
use meanfield_core::rng::derive_seed;
use meanfield_core::simulate::{run_coupled, MixingFunctions, SummaryRecord};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{AppError, Result};
use crate::output::{write_csv, write_json, ResultRow};
use crate::parallel::{pool, RayonExecutor};
use crate::stats::{fit_scaling, plateau, Estimate, SlopeFit};

pub const PLATEAU_DEFINITION: &str = "mean of the replication-averaged f-distance over outputs with t in [0.75 T, T]";
pub const DISTANCE_NOTE: &str = "f-distances are coupling estimates (1/N) sum_i f(|Xbar^i - X^i|), upper bounds on W_l1(f)(Law(X_t), mu_t^N); no empirical transport in dN dimensions is attempted";

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// What a command reports back to the caller.
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    /// Whether the checks of the command passed.
    pub passed: bool,
    pub out_dir: PathBuf,
}

/// Model, geometry and interaction strength, before any admissibility gate.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub model: PotentialModel,
    /// Geometry with `η = 0`.
    pub geometry: RateProfile,
    pub eta: f64,
    pub out_dir: PathBuf,
}

pub fn prepare(config: &ExperimentConfig, opts: &RunOptions) -> Result<Prepared> {
    if opts.threads == Some(0) {
        return Err(AppError::Config("--threads must be positive".into()));
    }
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    let model = config.build_model()?;
    let geometry = tabulate_geometry(
        &model,
        &ProfileOptions {
            r_max: None,
            cells: config.grid_cells,
            tol: config.quadrature_tol,
        },
    )?;
    let eta = config.eta.unwrap_or_else(|| sufficient_eta(&model, &geometry));
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Prepared {
        config,
        model,
        geometry,
        eta,
        out_dir,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub model: String,
    pub dim: usize,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    pub c: f64,
    pub eta: f64,
    pub decay_rate: f64,
    pub phi_r0: f64,
    pub lip_w: f64,
    pub m_v: f64,
    pub big_m_v: f64,
    pub m_w: Option<f64>,
    pub h: f64,
    pub delta: f64,
    pub omega_delta: f64,
    /// `(ω(δ) + 2c f(δ)) / (2(c − η))`, when `η < c`.
    pub discretization_allowance: Option<f64>,
    /// Second-moment bound for the nonlinear process, when available.
    pub c_moment: Option<f64>,
    /// `(1 + √2)·√C_moment`.
    pub c_emp: Option<f64>,
    pub eta_below_c: bool,
    pub eta_below_half_m_v: bool,
    pub lipschitz_condition: bool,
}

impl Prepared {
    pub fn constants(&self) -> Result<Constants> {
        let g = &self.geometry;
        let delta = self.config.delta();
        let admissible = self.eta < g.c();
        let c_moment = self.moment_bound().ok();
        let allowance = if admissible {
            Some(discretization_allowance(&g.clone().with_eta(self.eta)?, &self.model, delta)?)
        } else {
            None
        };
        Ok(Constants {
            model: self.model.name().to_string(),
            dim: self.model.dim(),
            r0: g.r0(),
            r1: g.r1(),
            c: g.c(),
            eta: self.eta,
            decay_rate: 2.0 * (g.c() - self.eta),
            phi_r0: g.phi_r0(),
            lip_w: self.model.lip_w(),
            m_v: self.model.m_v(),
            big_m_v: self.model.big_m_v(),
            m_w: self.model.m_w(),
            h: self.config.h,
            delta,
            omega_delta: omega(&self.model, delta)?,
            discretization_allowance: allowance,
            c_moment,
            c_emp: c_moment.map(upsilon_constant),
            eta_below_c: admissible,
            eta_below_half_m_v: self.eta < self.model.m_v() / 2.0,
            lipschitz_condition: self.model.lip_w() < g.c() * g.phi_r0() / 2.0,
        })
    }

    /// Bound on `sup_t E‖X̄_t‖²` from the initial law `ν`.
    pub fn moment_bound(&self) -> Result<f64> {
        let nu = self.config.nu.resolve(self.config.dim)?;
        Ok(gronwall_moment_bound(&self.model, self.eta, nu.second_moment())?)
    }

    /// The profile with `η`, or the admissibility error naming `η < c`.
    pub fn admissible_profile(&self) -> Result<RateProfile> {
        self.geometry.clone().with_eta(self.eta).map_err(|e| match e {
            meanfield_core::Error::Inadmissible(msg) => AppError::Admissibility(format!(
                "contraction hypothesis η < c violated: {msg} (lip_W = {}, φ(R₀) = {})",
                self.model.lip_w(),
                self.geometry.phi_r0()
            )),
            other => other.into(),
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

#[derive(Serialize)]
struct RatesSummary<'a> {
    command: &'static str,
    constants: &'a Constants,
    f_inequality: &'a FInequalityReport,
}

pub fn cmd_rates(config: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let prep = prepare(config, opts)?;
    let constants = prep.constants()?;
    let f_report = verify_f_inequality(&prep.geometry, &prep.model)?;
    create_dir(&prep.out_dir)?;
    let profile = prep.admissible_profile();
    let written = match &profile {
        Ok(p) => p,
        Err(_) => &prep.geometry,
    };
    write_json(&prep.out_dir.join("rate_profile.json"), written)?;
    write_json(
        &prep.out_dir.join("summary.json"),
        &RatesSummary {
            command: "rates",
            constants: &constants,
            f_inequality: &f_report,
        },
    )?;
    let summary = format!(
        "model {} (d = {})\nR0 = {:.6}\nR1 = {:.6}\nc = {:.6}\neta = {:.6}\n2(c - eta) = {:.6}\nphi(R0) = {:.6}\n\
         eta < c: {}\neta < m_V/2: {}\nL < c phi(R0)/2: {}\nf-inequality: {} ({} midpoints, max slack {:.3e})",
        constants.model,
        constants.dim,
        constants.r0,
        constants.r1,
        constants.c,
        constants.eta,
        constants.decay_rate,
        constants.phi_r0,
        verdict(constants.eta_below_c),
        verdict(constants.eta_below_half_m_v),
        verdict(constants.lipschitz_condition),
        verdict(f_report.passed()),
        f_report.checked,
        f_report.max_slack,
    );
    profile?;
    Ok(Outcome {
        summary,
        passed: f_report.passed(),
        out_dir: prep.out_dir,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "yes"
    } else {
        "NO"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingCheck {
    pub samples: usize,
    pub max_identity_error: f64,
    pub boundaries_ok: bool,
    pub passed: bool,
}

/// `φ_r² + φ_s² = 1`, `φ_r(δ) = 1` and `φ_r(δ/2) = 0` on a radial grid.
pub fn check_mixing(delta: f64) -> Result<MixingCheck> {
    let mix = MixingFunctions::new(delta)?;
    let samples = 10_001;
    let mut worst = 0.0f64;
    for k in 0..samples {
        let r = 2.0 * delta * k as f64 / (samples - 1) as f64;
        let (pr, ps) = mix.weights(r);
        worst = worst.max((pr * pr + ps * ps - 1.0).abs());
    }
    let boundaries_ok = mix.weights(delta) == (1.0, 0.0) && mix.weights(delta / 2.0) == (0.0, 1.0);
    Ok(MixingCheck {
        samples,
        max_identity_error: worst,
        boundaries_ok,
        passed: worst <= 1e-12 && boundaries_ok,
    })
}

#[derive(Serialize)]
struct ValidateSummary<'a> {
    command: &'static str,
    passed: bool,
    constants: &'a Constants,
    assumptions: &'a ValidationReport,
    f_inequality: &'a FInequalityReport,
    mixing: &'a MixingCheck,
}

pub fn cmd_validate(config: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let prep = prepare(config, opts)?;
    let constants = prep.constants()?;
    let report = validate_assumptions(
        &prep.model,
        &prep.geometry,
        prep.eta,
        prep.config.validation_samples,
        prep.config.seed,
    )?;
    let f_report = verify_f_inequality(&prep.geometry, &prep.model)?;
    let mixing = check_mixing(prep.config.delta())?;
    let passed = report.passed() && f_report.passed() && mixing.passed;
    create_dir(&prep.out_dir)?;
    write_json(
        &prep.out_dir.join("summary.json"),
        &ValidateSummary {
            command: "validate",
            passed,
            constants: &constants,
            assumptions: &report,
            f_inequality: &f_report,
            mixing: &mixing,
        },
    )?;
    let mut lines = Vec::new();
    for check in &report.checks {
        lines.push(format!(
            "{:<28} {:<4} worst slack {:.3e} over {} samples",
            check.name,
            if check.passed { "ok" } else { "FAIL" },
            check.worst_slack,
            check.samples
        ));
    }
    lines.push(format!("{:<28} {}", "eta < c", verdict(report.eta_below_c)));
    lines.push(format!("{:<28} {}", "moment bound hypothesis", verdict(report.moment_bound_applicable)));
    lines.push(format!(
        "{:<28} {:<4} {} midpoints, max slack {:.3e}",
        "f_inequality",
        if f_report.passed() { "ok" } else { "FAIL" },
        f_report.checked,
        f_report.max_slack
    ));
    lines.push(format!(
        "{:<28} {:<4} max |phi_r^2 + phi_s^2 - 1| = {:.1e}",
        "mixing_functions",
        if mixing.passed { "ok" } else { "FAIL" },
        mixing.max_identity_error
    ));
    Ok(Outcome {
        summary: lines.join("\n"),
        passed,
        out_dir: prep.out_dir,
    })
}

/// One coupled run of the experiment matrix.
#[derive(Debug, Clone)]
pub struct Job {
    pub n: usize,
    pub m: usize,
    pub replication: usize,
    pub seed: u64,
    pub records: Vec<SummaryRecord>,
}

/// Runs `n_list × replications` in parallel; output order is `(N, replication)`.
pub fn run_matrix(prep: &Prepared, profile: &RateProfile, threads: Option<usize>) -> Result<Vec<Job>> {
    let config = &prep.config;
    let times = config.output_times();
    let mut specs = Vec::new();
    for &n in &config.n_list {
        for r in 0..config.replications {
            specs.push((n, r, derive_seed(config.seed, &[n as u64, r as u64])));
        }
    }
    let pool = pool(threads)?;
    pool.install(|| {
        specs
            .par_iter()
            .map(|&(n, replication, seed)| {
                let sim = config.sim_config(n, seed)?;
                let mut records = run_coupled(&sim, &prep.model, profile, &RayonExecutor).map_err(|e| match e {
                    meanfield_core::Error::Numerical(msg) => {
                        AppError::Numerical(format!("N = {n}, replication {replication}: {msg}"))
                    }
                    other => other.into(),
                })?;
                if records.len() != times.len() {
                    return Err(AppError::Numerical(format!(
                        "expected {} outputs, got {}",
                        times.len(),
                        records.len()
                    )));
                }
                for (rec, &t) in records.iter_mut().zip(&times) {
                    rec.t = t;
                }
                Ok(Job {
                    n,
                    m: sim.m,
                    replication,
                    seed,
                    records,
                })
            })
            .collect()
    })
}

/// Replication statistics at one `(N, t)`.
#[derive(Debug, Clone, Serialize)]
pub struct TimePoint {
    pub t: f64,
    pub f_distance: Estimate,
    pub euclid_distance: Estimate,
    pub second_moment_nonlinear: Estimate,
    pub second_moment_particles: Estimate,
    pub upsilon: Estimate,
    pub bound_theorem: f64,
    /// `f_distance ≤ bound + 3·std_error`.
    pub within_bound: bool,
    /// `f_distance ≤ bound + 3·std_error + allowance`.
    pub within_bound_with_allowance: bool,
}

/// All replications for one `N`.
pub struct Group<'a> {
    pub n: usize,
    pub m: usize,
    pub jobs: Vec<&'a Job>,
    /// Replication-averaged initial coupling cost.
    pub w0: f64,
    pub points: Vec<TimePoint>,
}

struct Context {
    profile: RateProfile,
    c_moment: f64,
    allowance: f64,
}

fn simulation_context(prep: &Prepared) -> Result<Context> {
    let profile = prep.admissible_profile()?;
    let c_moment = prep.moment_bound().map_err(|e| match e {
        AppError::Admissibility(msg) => AppError::Admissibility(format!("second-moment bound: {msg}")),
        other => other,
    })?;
    let allowance = discretization_allowance(&profile, &prep.model, prep.config.delta())?;
    Ok(Context {
        profile,
        c_moment,
        allowance,
    })
}

fn group_jobs<'a>(prep: &Prepared, ctx: &Context, jobs: &'a [Job]) -> Result<Vec<Group<'a>>> {
    let mut groups = Vec::new();
    for &n in &prep.config.n_list {
        let members: Vec<&Job> = jobs.iter().filter(|j| j.n == n).collect();
        let column = |k: usize, get: fn(&SummaryRecord) -> f64| -> Vec<f64> {
            members.iter().map(|j| get(&j.records[k])).collect()
        };
        let w0 = Estimate::of(&column(0, |r| r.mean_f_distance)).mean;
        let mut points = Vec::new();
        for (k, rec) in members[0].records.iter().enumerate() {
            let f_distance = Estimate::of(&column(k, |r| r.mean_f_distance));
            let bound = theorem_bound(&ctx.profile, w0, ctx.c_moment, n, rec.t)?;
            let slack = bound + 3.0 * f_distance.std_error - f_distance.mean;
            points.push(TimePoint {
                t: rec.t,
                f_distance,
                euclid_distance: Estimate::of(&column(k, |r| r.mean_euclid_distance)),
                second_moment_nonlinear: Estimate::of(&column(k, |r| r.second_moment_nonlinear)),
                second_moment_particles: Estimate::of(&column(k, |r| r.second_moment_particles)),
                upsilon: Estimate::of(&column(k, |r| r.upsilon_estimate)),
                bound_theorem: bound,
                within_bound: slack >= 0.0,
                within_bound_with_allowance: slack + ctx.allowance >= 0.0,
            });
        }
        groups.push(Group {
            n,
            m: members[0].m,
            jobs: members,
            w0,
            points,
        });
    }
    Ok(groups)
}

fn write_rows(dir: &Path, command: &str, profile: &RateProfile, groups: &[Group<'_>]) -> Result<()> {
    let mut rows = Vec::new();
    for g in groups {
        for job in &g.jobs {
            for (rec, point) in job.records.iter().zip(&g.points) {
                rows.push(ResultRow {
                    run_id: format!("{command}-N{}-r{}", job.n, job.replication),
                    seed: job.seed,
                    n: job.n,
                    m: job.m,
                    replication: job.replication,
                    t: rec.t,
                    mean_f_distance: rec.mean_f_distance,
                    mean_euclid_distance: rec.mean_euclid_distance,
                    w1_converted: profile.w1_from_wf(rec.mean_f_distance),
                    bound_theorem: point.bound_theorem,
                    second_moment_particles: rec.second_moment_particles,
                    second_moment_nonlinear: rec.second_moment_nonlinear,
                    upsilon_estimate: rec.upsilon_estimate,
                });
            }
        }
    }
    if let Some(bad) = rows.iter().find(|r| !r.all_finite()) {
        return Err(AppError::Numerical(format!("non-finite value in row {}", bad.run_id)));
    }
    write_csv(&dir.join("results.csv"), &rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonPlateau {
    pub horizon: f64,
    pub plateau: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub plateau: Estimate,
    pub bound_theorem: f64,
    pub within_bound: bool,
    pub within_bound_with_allowance: bool,
    pub horizons: Vec<HorizonPlateau>,
    /// `(max − min)/mean` of the horizon plateaus.
    pub horizon_spread: f64,
    pub rows_over_bound: usize,
    pub rows_over_bound_with_allowance: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSummary {
    pub command: &'static str,
    pub constants: Constants,
    pub plateau_definition: &'static str,
    pub distance_note: &'static str,
    pub t_end: f64,
    pub replications: usize,
    pub per_n: Vec<ScalingRow>,
    /// Log-log slope of the plateau against `N`; absent when a plateau is 0.
    pub slope: Option<SlopeFit>,
}

pub fn cmd_poc_scaling(config: &ExperimentConfig, opts: &RunOptions) -> Result<(Outcome, ScalingSummary)> {
    let prep = prepare(config, opts)?;
    let ns = &prep.config.n_list;
    let (lo, hi) = (ns.iter().min().copied().unwrap_or(0), ns.iter().max().copied().unwrap_or(0));
    let mut distinct = ns.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != ns.len() || ns.len() < 4 || hi < 16 * lo {
        return Err(AppError::Config(format!(
            "poc-scaling needs at least 4 distinct N spanning a factor 16, got {ns:?}"
        )));
    }
    let ctx = simulation_context(&prep)?;
    let jobs = run_matrix(&prep, &ctx.profile, opts.threads)?;
    let groups = group_jobs(&prep, &ctx, &jobs)?;
    create_dir(&prep.out_dir)?;
    write_rows(&prep.out_dir, "poc-scaling", &ctx.profile, &groups)?;

    let t_end = prep.config.t_end;
    let mut per_n = Vec::new();
    let mut plateaus = Vec::new();
    for g in &groups {
        let per_rep: Vec<f64> = g.jobs.iter().map(|j| plateau(&j.records, t_end)).collect();
        let est = Estimate::of(&per_rep);
        let bound = theorem_bound(&ctx.profile, g.w0, ctx.c_moment, g.n, t_end)?;
        let slack = bound + 3.0 * est.std_error - est.mean;
        let horizons: Vec<HorizonPlateau> = prep
            .config
            .plateau_horizons()
            .into_iter()
            .map(|horizon| {
                let v: Vec<f64> = g.jobs.iter().map(|j| plateau(&j.records, horizon)).collect();
                HorizonPlateau {
                    horizon,
                    plateau: Estimate::of(&v),
                }
            })
            .collect();
        let values: Vec<f64> = horizons.iter().map(|h| h.plateau.mean).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        per_n.push(ScalingRow {
            n: g.n,
            m: g.m,
            plateau: est,
            bound_theorem: bound,
            within_bound: slack >= 0.0,
            within_bound_with_allowance: slack + ctx.allowance >= 0.0,
            horizons,
            horizon_spread: if mean > 0.0 { (max - min) / mean } else { 0.0 },
            rows_over_bound: g.points.iter().filter(|p| !p.within_bound).count(),
            rows_over_bound_with_allowance: g.points.iter().filter(|p| !p.within_bound_with_allowance).count(),
        });
        plateaus.push(per_rep);
    }
    let slope = fit_scaling(ns, &plateaus, prep.config.seed);
    let summary = ScalingSummary {
        command: "poc-scaling",
        constants: prep.constants()?,
        plateau_definition: PLATEAU_DEFINITION,
        distance_note: DISTANCE_NOTE,
        t_end,
        replications: prep.config.replications,
        per_n,
        slope,
    };
    write_json(&prep.out_dir.join("summary.json"), &summary)?;
    write_json(&prep.out_dir.join("rate_profile.json"), &ctx.profile)?;

    let mut lines = vec![format!(
        "{:>6} {:>12} {:>10} {:>12} {:>8}",
        "N", "plateau", "std_err", "bound", "within"
    )];
    for row in &summary.per_n {
        lines.push(format!(
            "{:>6} {:>12.5e} {:>10.2e} {:>12.5e} {:>8}",
            row.n,
            row.plateau.mean,
            row.plateau.std_error,
            row.bound_theorem,
            verdict(row.within_bound_with_allowance)
        ));
    }
    match &summary.slope {
        Some(fit) => lines.push(format!(
            "log-log slope {:.4} (95% bootstrap CI [{:.4}, {:.4}])",
            fit.slope, fit.ci_low, fit.ci_high
        )),
        None => lines.push("log-log slope undefined (zero plateau)".into()),
    }
    let passed = summary.per_n.iter().all(|r| r.within_bound_with_allowance);
    Ok((
        Outcome {
            summary: lines.join("\n"),
            passed,
            out_dir: prep.out_dir,
        },
        summary,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionGroup {
    #[serde(rename = "N")]
    pub n: usize,
    pub w0: f64,
    pub points: Vec<TimePoint>,
    /// `−d/dt log E f(‖E_t‖)` by least squares over positive means, `t > 0`.
    pub fitted_decay: Option<f64>,
    pub all_within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionSummary {
    pub command: &'static str,
    pub constants: Constants,
    pub distance_note: &'static str,
    pub envelope: &'static str,
    pub groups: Vec<ContractionGroup>,
}

pub fn cmd_contraction(config: &ExperimentConfig, opts: &RunOptions) -> Result<(Outcome, ContractionSummary)> {
    let prep = prepare(config, opts)?;
    if prep.config.nu == prep.config.mu {
        return Err(AppError::Config("contraction needs distinct initial laws nu and mu".into()));
    }
    let ctx = simulation_context(&prep)?;
    let jobs = run_matrix(&prep, &ctx.profile, opts.threads)?;
    let groups = group_jobs(&prep, &ctx, &jobs)?;
    create_dir(&prep.out_dir)?;
    write_rows(&prep.out_dir, "contraction", &ctx.profile, &groups)?;
    let summary = ContractionSummary {
        command: "contraction",
        constants: prep.constants()?,
        distance_note: DISTANCE_NOTE,
        envelope: "exp(-2(c - eta) t) W0 + C_emp eta / (2(c - eta) sqrt(N)), W0 the initial coupling cost",
        groups: groups
            .iter()
            .map(|g| {
                let fit: Vec<(f64, f64)> = g
                    .points
                    .iter()
                    .filter(|p| p.t > 0.0 && p.f_distance.mean > 0.0)
                    .map(|p| (p.t, p.f_distance.mean.ln()))
                    .collect();
                let fitted_decay = (fit.len() >= 2).then(|| {
                    let (x, y): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
                    -crate::stats::ols(&x, &y).0
                });
                ContractionGroup {
                    n: g.n,
                    w0: g.w0,
                    points: g.points.clone(),
                    fitted_decay,
                    all_within_bound: g.points.iter().all(|p| p.within_bound),
                }
            })
            .collect(),
    };
    write_json(&prep.out_dir.join("summary.json"), &summary)?;
    write_json(&prep.out_dir.join("rate_profile.json"), &ctx.profile)?;
    let mut lines = vec![format!("{:>6} {:>8} {:>12} {:>10} {:>12}", "N", "t", "E f(|E|)", "std_err", "envelope")];
    for g in &summary.groups {
        for p in &g.points {
            lines.push(format!(
                "{:>6} {:>8.3} {:>12.5e} {:>10.2e} {:>12.5e}",
                g.n, p.t, p.f_distance.mean, p.f_distance.std_error, p.bound_theorem
            ));
        }
        if let Some(k) = g.fitted_decay {
            lines.push(format!("N = {}: fitted decay {k:.4} vs 2(c - eta) = {:.4}", g.n, summary.constants.decay_rate));
        }
    }
    let passed = summary.groups.iter().all(|g| g.all_within_bound);
    Ok((
        Outcome {
            summary: lines.join("\n"),
            passed,
            out_dir: prep.out_dir,
        },
        summary,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentGroup {
    #[serde(rename = "N")]
    pub n: usize,
    /// Largest replication-averaged `(1/N)Σ‖X̄^i_t‖²` over the output grid.
    pub sup_nonlinear: Estimate,
    pub argmax_t: f64,
    pub sup_particles: Estimate,
    /// `sup ≤ bound`.
    pub below_bound: bool,
    /// `sup ≤ bound + 3·std_error`.
    pub below_bound_statistical: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentsSummary {
    pub command: &'static str,
    pub constants: Constants,
    pub moment_bound: f64,
    pub initial_second_moment: f64,
    /// `d/(ρ + 2λ)` for the quadratic model.
    pub stationary_second_moment: Option<f64>,
    pub groups: Vec<MomentGroup>,
    pub passed: bool,
}

pub fn cmd_moments(config: &ExperimentConfig, opts: &RunOptions) -> Result<(Outcome, MomentsSummary)> {
    let prep = prepare(config, opts)?;
    let ctx = simulation_context(&prep)?;
    let jobs = run_matrix(&prep, &ctx.profile, opts.threads)?;
    let groups = group_jobs(&prep, &ctx, &jobs)?;
    create_dir(&prep.out_dir)?;
    write_rows(&prep.out_dir, "moments", &ctx.profile, &groups)?;
    let bound = ctx.c_moment;
    let pick_sup = |points: &[TimePoint], get: fn(&TimePoint) -> Estimate| -> (Estimate, f64) {
        points
            .iter()
            .map(|p| (get(p), p.t))
            .fold(None, |best: Option<(Estimate, f64)>, cur| match best {
                Some(b) if b.0.mean >= cur.0.mean => Some(b),
                _ => Some(cur),
            })
            .expect("at least one output")
    };
    let moment_groups: Vec<MomentGroup> = groups
        .iter()
        .map(|g| {
            let (sup, argmax_t) = pick_sup(&g.points, |p| p.second_moment_nonlinear);
            let (sup_particles, _) = pick_sup(&g.points, |p| p.second_moment_particles);
            MomentGroup {
                n: g.n,
                sup_nonlinear: sup,
                argmax_t,
                sup_particles,
                below_bound: sup.mean <= bound,
                below_bound_statistical: sup.mean <= bound + 3.0 * sup.std_error,
            }
        })
        .collect();
    let stationary = match prep.config.model {
        ModelKind::Quadratic if prep.config.rho + 2.0 * prep.config.lambda > 0.0 => {
            Some(prep.config.dim as f64 / (prep.config.rho + 2.0 * prep.config.lambda))
        }
        _ => None,
    };
    let passed = moment_groups.iter().all(|g| g.below_bound_statistical);
    let summary = MomentsSummary {
        command: "moments",
        constants: prep.constants()?,
        moment_bound: bound,
        initial_second_moment: prep.config.nu.resolve(prep.config.dim)?.second_moment(),
        stationary_second_moment: stationary,
        groups: moment_groups,
        passed,
    };
    write_json(&prep.out_dir.join("summary.json"), &summary)?;
    let mut lines = vec![format!("moment bound {bound:.6}")];
    for g in &summary.groups {
        lines.push(format!(
            "N = {}: sup_t E|Xbar_t|^2 = {:.6} ± {:.2e} at t = {:.3} ({})",
            g.n,
            g.sup_nonlinear.mean,
            g.sup_nonlinear.std_error,
            g.argmax_t,
            if g.below_bound {
                "below bound"
            } else if g.below_bound_statistical {
                "below bound + 3 std_err"
            } else {
                "ABOVE bound"
            }
        ));
    }
    Ok((
        Outcome {
            summary: lines.join("\n"),
            passed,
            out_dir: prep.out_dir,
        },
        summary,
    ))
}
