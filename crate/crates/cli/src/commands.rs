//! Subcommand implementations.

use crate::config::{BathKind, RunConfig};
use crate::output::{self, SCHEMA_VERSION};
use crate::{Cli, CliError, Command, ReproTarget, TrapMode};
use serde::Serialize;
use std::path::{Path, PathBuf};
use workmin::bath::{expand_correlation, SpectralDensity};
use workmin::brownian::{self, ImpulseOptimum, Regime, TrapModel};
use workmin::dynamics::{Method, Simulation, SolverConfig};
use workmin::optimize::{
    brute_force_random_restarts, optimize_protocol, survey, AnsatzKind, ProtocolOptimum, SurveyCell, SurveyRow,
};
use workmin::system::TwoLevelModel;
use workmin::thermo::{
    delta_f_uncoupled, free_energy_difference, second_law_check, work, DeltaFCache, WorkReport, SECOND_LAW_TOL,
};

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    workers: usize,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    result: T,
    config: &'a RunConfig,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn summary<T: Serialize>(&self, command: &str, result: T) -> Result<(), CliError> {
        output::write_json(
            &self.path("summary.json"),
            &Summary { schema_version: SCHEMA_VERSION, command, result, config: &self.cfg },
        )
    }

    fn cache(&self) -> Result<DeltaFCache, CliError> {
        Ok(match &self.cfg.delta_f.cache_dir {
            Some(dir) => DeltaFCache::on_disk(dir)?,
            None => DeltaFCache::in_memory(),
        })
    }

    fn simulation(&self) -> Result<Simulation, CliError> {
        let cfg = &self.cfg;
        let spectral = cfg.spectral()?;
        let expansion = expand_correlation(&spectral, cfg.bath.beta, cfg.bath.fit_tol, cfg.bath.k_max)?;
        Ok(Simulation::new(cfg.model()?, spectral, cfg.bath.beta, expansion, cfg.solver()?)?)
    }
}

/// Load the configuration, apply flag overrides and run the subcommand.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(out) = &g.out {
        cfg.output.dir = out.clone();
    }
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if g.dt.is_some() {
        cfg.solver.dt = g.dt;
    }
    if g.depth.is_some() {
        cfg.solver.depth = g.depth;
    }
    if g.workers == 0 {
        return Err(CliError::Config("--workers must be >= 1".into()));
    }
    if !matches!(cli.command, Command::Brownian { .. }) {
        cfg.validate()?;
    }
    let out = cfg.output.dir.clone();
    output::ensure_dir(&out)?;
    let resolved = toml::to_string(&cfg).map_err(|e| CliError::Io(e.to_string()))?;
    output::write_text(&out.join("config.toml"), &resolved)?;
    let ctx = Context { cfg, out, workers: g.workers };
    match &cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Optimize { ansatz } => optimize(&ctx, ansatz.unwrap_or_else(|| ctx.cfg.protocol.ansatz())),
        Command::Sweep => sweep(&ctx),
        Command::Deltaf => deltaf(&ctx),
        Command::Brownian { mode } => trap(&ctx, *mode),
        Command::ValidateBath => validate_bath(&ctx),
        Command::Repro { target } => repro(&ctx, *target),
    }
}

#[derive(Serialize)]
struct SimulateResult {
    report: WorkReport,
    second_law_margin: f64,
    second_law_pass: bool,
    max_trace_error: f64,
    max_hermiticity_error: f64,
    min_eigenvalue: f64,
}

fn simulate(ctx: &Context) -> Result<(), CliError> {
    let sim = ctx.simulation()?;
    let protocol = ctx.cfg.protocol()?;
    let traj = sim.run(&protocol)?;
    let w = work(&traj, &sim.model)?;
    let df = free_energy_difference(&sim, ctx.cfg.delta_f.route(&sim.model), Some(&ctx.cache()?))?;
    let report = WorkReport::new(&sim, &protocol, w, df);
    let law = second_law_check(&report, SECOND_LAW_TOL);
    output::write_trajectory(&ctx.path("trajectory.csv"), &traj)?;
    output::write_protocol(&ctx.path("protocol.csv"), &protocol, sim.solver.dt)?;
    println!("{}: W = {w:.10e}, dF = {df:.10e}, W - dF = {:.10e}", protocol.descriptor(), w - df);
    if !law.pass {
        log::warn!("second-law margin {:.3e} below tolerance", law.margin);
    }
    ctx.summary(
        "simulate",
        SimulateResult {
            report,
            second_law_margin: law.margin,
            second_law_pass: law.pass,
            max_trace_error: traj.diagnostics.max_trace_error,
            max_hermiticity_error: traj.diagnostics.max_hermiticity_error,
            min_eigenvalue: traj.diagnostics.min_eigenvalue,
        },
    )
}

#[derive(Serialize)]
struct OptimizeResult<'a> {
    ansatz: &'a str,
    tau: f64,
    delta: f64,
    work: f64,
    delta_f: f64,
    excess: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    descriptor: String,
    optimum: &'a ProtocolOptimum,
}

fn best_of(a: ProtocolOptimum, b: ProtocolOptimum) -> ProtocolOptimum {
    if b.work < a.work {
        b
    } else {
        a
    }
}

fn optimize(ctx: &Context, kind: AnsatzKind) -> Result<(), CliError> {
    let sim = ctx.simulation()?;
    let p = &ctx.cfg.protocol;
    let opt_cfg = &ctx.cfg.optimizer;
    let mut opt = optimize_protocol(kind, &sim, p.tau, p.delta, opt_cfg)?;
    if kind == AnsatzKind::BruteForce && opt_cfg.restarts > 0 {
        let seed = ctx.cfg.seed.unwrap_or(0);
        for r in brute_force_random_restarts(&sim, p.tau, p.delta, opt_cfg, seed, opt_cfg.restarts)? {
            opt = best_of(opt, r);
        }
    }
    let df = free_energy_difference(&sim, ctx.cfg.delta_f.route(&sim.model), Some(&ctx.cache()?))?;
    let traj = sim.run(&opt.protocol)?;
    output::write_trajectory(&ctx.path("trajectory.csv"), &traj)?;
    output::write_protocol(&ctx.path("protocol.csv"), &opt.protocol, sim.solver.dt)?;
    println!(
        "{}: W* = {:.10e}, W* - dF = {:.10e} ({} iterations)",
        opt.protocol.descriptor(),
        opt.work,
        opt.work - df,
        opt.result.iterations
    );
    ctx.summary(
        "optimize",
        OptimizeResult {
            ansatz: kind.name(),
            tau: p.tau,
            delta: p.delta,
            work: opt.work,
            delta_f: df,
            excess: opt.work - df,
            iterations: opt.result.iterations,
            evaluations: opt.result.evaluations,
            converged: opt.result.converged,
            descriptor: opt.protocol.descriptor(),
            optimum: &opt,
        },
    )?;
    if !opt.result.converged {
        return Err(CliError::NotConverged(format!(
            "{} stopped after {} iterations",
            kind.name(),
            opt.result.iterations
        )));
    }
    Ok(())
}

fn cells_for(cfg: &RunConfig, model: TwoLevelModel, sets: &[(f64, f64, f64)], taus: &[f64]) -> Result<Vec<SurveyCell>, CliError> {
    sets.iter()
        .map(|&(beta, gamma, xi)| {
            let spectral = SpectralDensity::drude(gamma, xi)?;
            let solver = SolverConfig {
                method: cfg.solver.method,
                dt: cfg.solver.dt.unwrap_or_else(|| SolverConfig::default_dt(&model, &spectral)),
                depth: cfg.solver.depth.unwrap_or_else(|| SolverConfig::default_depth(&spectral)),
            };
            Ok(SurveyCell {
                model,
                spectral,
                beta,
                taus: taus.to_vec(),
                solver,
                fit_tol: cfg.bath.fit_tol,
                k_max: cfg.bath.k_max,
                delta: cfg.protocol.delta,
            })
        })
        .collect()
}

fn run_survey(ctx: &Context, cells: &[SurveyCell], kinds: &[AnsatzKind], dir: &Path) -> Result<Vec<SurveyRow>, CliError> {
    let cache = ctx.cache()?;
    let route = ctx.cfg.delta_f.route(&cells.first().map(|c| c.model).unwrap_or(ctx.cfg.model()?));
    let rows = survey(cells, kinds, &ctx.cfg.optimizer, route, Some(&cache), ctx.workers);
    output::write_sweep(&dir.join("sweep.csv"), &rows)?;
    let cell_dir = dir.join("cells");
    output::ensure_dir(&cell_dir)?;
    for r in &rows {
        let name = format!("beta{}_gamma{}_xi{}_tau{}_{}.json", r.beta, r.gamma, r.xi, r.tau, r.ansatz);
        output::write_json(&cell_dir.join(name), &(SCHEMA_VERSION, r))?;
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} sweep rows failed; see the error column", rows.len());
    }
    if !rows.is_empty() && failed == rows.len() {
        return Err(CliError::Numeric("every sweep row failed".into()));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SweepResult {
    rows: usize,
    failed: usize,
    not_converged: usize,
}

fn sweep_result(rows: &[SurveyRow]) -> SweepResult {
    SweepResult {
        rows: rows.len(),
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
        not_converged: rows.iter().filter(|r| r.error.is_none() && !r.converged).count(),
    }
}

fn grid(cfg: &RunConfig) -> Vec<(f64, f64, f64)> {
    let s = &cfg.sweep;
    let mut sets = Vec::new();
    for &b in &s.betas {
        for &g in &s.gammas {
            for &x in &s.xis {
                sets.push((b, g, x));
            }
        }
    }
    sets
}

fn sweep(ctx: &Context) -> Result<(), CliError> {
    if ctx.cfg.bath.kind != BathKind::Drude {
        return Err(CliError::Config("sweeps need a Drude bath".into()));
    }
    let cells = cells_for(&ctx.cfg, ctx.cfg.model()?, &grid(&ctx.cfg), &ctx.cfg.sweep.taus)?;
    let rows = run_survey(ctx, &cells, &ctx.cfg.sweep.kinds, &ctx.out)?;
    let res = sweep_result(&rows);
    println!("{} rows, {} failed, {} not converged", res.rows, res.failed, res.not_converged);
    ctx.summary("sweep", res)
}

#[derive(Serialize)]
struct DeltaFResult {
    delta_f: f64,
    delta_f_uncoupled: f64,
    cache_key: String,
}

fn deltaf(ctx: &Context) -> Result<(), CliError> {
    let sim = ctx.simulation()?;
    let route = ctx.cfg.delta_f.route(&sim.model);
    let df = free_energy_difference(&sim, route, Some(&ctx.cache()?))?;
    let bare = delta_f_uncoupled(&sim.model, sim.beta);
    println!("dF = {df:.12e} (uncoupled {bare:.12e})");
    ctx.summary("deltaf", DeltaFResult { delta_f: df, delta_f_uncoupled: bare, cache_key: workmin::thermo::cache_key(&sim, route) })
}

#[derive(Serialize)]
struct TrapResult {
    mode: &'static str,
    model: TrapModel,
    /// Work from the closed form or quadratic program.
    work: f64,
    /// Work of the same protocol by time-domain propagation.
    work_time_domain: f64,
    slope: Option<f64>,
    intercept: Option<f64>,
    area: Option<f64>,
    peak: Option<f64>,
    step: Option<f64>,
}

fn impulse_result(mode: &'static str, model: TrapModel, opt: &ImpulseOptimum, dt: f64) -> Result<TrapResult, CliError> {
    Ok(TrapResult {
        mode,
        model,
        work: opt.work,
        work_time_domain: brownian::trap_work(&model, &opt.drive(&model)?, dt)?,
        slope: Some(opt.slope),
        intercept: Some(opt.intercept),
        area: Some(opt.impulse),
        peak: None,
        step: None,
    })
}

fn trap(ctx: &Context, mode: TrapMode) -> Result<(), CliError> {
    let t = &ctx.cfg.trap;
    let model = t.model()?;
    let result = match mode {
        TrapMode::Analytic => {
            if t.kind != BathKind::Ohmic {
                return Err(CliError::Config("the analytic optimum needs an Ohmic bath".into()));
            }
            let opt = match t.regime {
                Regime::Underdamped => brownian::analytic_optimal_ohmic(t.zeta, t.epsilon, t.tau, t.lambda_i, t.lambda_f)?,
                Regime::Overdamped => brownian::analytic_optimal_overdamped(t.zeta, t.epsilon, t.tau, t.lambda_i, t.lambda_f)?,
            };
            output::write_protocol(&ctx.path("protocol.csv"), &opt.drive(&model)?.protocol, t.dt)?;
            impulse_result("analytic", model, &opt, t.dt)?
        }
        TrapMode::Imp3 => {
            let opt = brownian::imp3_delta_optimal(&model)?;
            output::write_protocol(&ctx.path("protocol.csv"), &opt.drive(&model)?.protocol, t.dt)?;
            impulse_result("imp3", model, &opt, t.dt)?
        }
        TrapMode::Qp => {
            let opt = brownian::qp_optimal_protocol(&model, t.step)?;
            output::write_nodes(&ctx.path("protocol.csv"), &opt.times, &opt.lambda)?;
            let td = brownian::trap_work(&model, &brownian::nodes_drive(&model, &opt)?, t.dt.min(t.step))?;
            TrapResult {
                mode: "qp",
                model,
                work: opt.work,
                work_time_domain: td,
                slope: None,
                intercept: None,
                area: None,
                peak: Some(opt.peak),
                step: Some(opt.step),
            }
        }
        TrapMode::Work => {
            let drive = brownian::linear_drive(&model);
            output::write_protocol(&ctx.path("protocol.csv"), &drive.protocol, t.dt)?;
            let w = brownian::trap_work(&model, &drive, t.dt)?;
            TrapResult {
                mode: "work",
                model,
                work: w,
                work_time_domain: w,
                slope: None,
                intercept: None,
                area: None,
                peak: None,
                step: None,
            }
        }
    };
    println!("{}: W = {:.10e} (time domain {:.10e})", result.mode, result.work, result.work_time_domain);
    ctx.summary("brownian", result)
}

#[derive(Serialize)]
struct BathResult {
    terms: usize,
    eta: f64,
    fit_error: f64,
    fit_tol: f64,
    max_correlation_deviation: Option<f64>,
    expansion: workmin::bath::ExponentialExpansion,
}

fn validate_bath(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let spectral = cfg.spectral()?;
    let beta = cfg.bath.beta;
    let exp = expand_correlation(&spectral, beta, cfg.bath.fit_tol, cfg.bath.k_max)?;
    let mut deviation = None;
    if let SpectralDensity::Drude { .. } = spectral {
        let mut rows = Vec::new();
        let mut worst = 0.0_f64;
        let scale = exp.smooth_value(0.0).norm().max(f64::MIN_POSITIVE);
        // Terms past the retained ones live in the delta weight; compare
        // only after the slowest of them has decayed.
        let first_dropped = 2.0 * std::f64::consts::PI * exp.len() as f64 / beta;
        let t_min = 10.0 / first_dropped;
        for k in 1..=200 {
            let t = 0.025 * k as f64;
            let exact = spectral.correlation_exact(beta, t)?;
            let series = exp.smooth_value(t);
            if t >= t_min {
                worst = worst.max((exact - series).norm() / scale);
            }
            rows.push(vec![t, exact.re, exact.im, series.re, series.im].iter().map(|v| v.to_string()).collect());
        }
        output::write_table(
            &ctx.path("correlation.csv"),
            &["t", "exact_re", "exact_im", "series_re", "series_im"],
            &rows,
        )?;
        deviation = Some(worst);
    }
    println!(
        "{} terms, eta = {:.6e}, fit residual {:.3e} (tol {:.1e}){}",
        exp.len(),
        exp.eta,
        exp.fit_error,
        cfg.bath.fit_tol,
        deviation.map(|d| format!(", max relative deviation of the correlation function: {d:.3e}")).unwrap_or_default()
    );
    ctx.summary(
        "validate-bath",
        BathResult {
            terms: exp.len(),
            eta: exp.eta,
            fit_error: exp.fit_error,
            fit_tol: cfg.bath.fit_tol,
            max_correlation_deviation: deviation,
            expansion: exp,
        },
    )
}

fn repro(ctx: &Context, target: ReproTarget) -> Result<(), CliError> {
    match target {
        ReproTarget::Fig3 => {
            let model = TwoLevelModel::driven(1.0, 0.0, 1.0)?;
            let sets = [(0.2, 0.2, 1.0), (0.2, 5.0, 1.0), (5.0, 0.2, 1.0), (5.0, 5.0, 1.0)];
            let cells = cells_for(&ctx.cfg, model, &sets, &[0.5, 1.0, 2.0, 5.0])?;
            let rows = run_survey(ctx, &cells, &[AnsatzKind::Linear, AnsatzKind::Imp3, AnsatzKind::Poly3], &ctx.out)?;
            ctx.summary("repro fig3", sweep_result(&rows))
        }
        ReproTarget::Fig4 => {
            let model = TwoLevelModel::tunable(1.0, 1.0, 2.0)?;
            let cells = cells_for(&ctx.cfg, model, &[(5.0, 5.0, 0.2)], &[0.5, 2.0, 5.0, 7.0, 10.0])?;
            let rows = run_survey(ctx, &cells, &[AnsatzKind::Linear, AnsatzKind::Imp3, AnsatzKind::Poly3], &ctx.out)?;
            for r in &rows {
                if let Some(p) = &r.protocol {
                    let name = format!("protocol_{}_tau{}.csv", r.ansatz, r.tau);
                    output::write_protocol(&ctx.path(&name), p, cells[0].solver.dt)?;
                }
            }
            ctx.summary("repro fig4", sweep_result(&rows))
        }
        ReproTarget::Fig5 => repro_methods(ctx),
        ReproTarget::Trap => repro_trap(ctx),
    }
}

fn repro_methods(ctx: &Context) -> Result<(), CliError> {
    let model = TwoLevelModel::driven(1.0, 0.0, 1.0)?;
    let mut rows = Vec::new();
    for method in [Method::Heom, Method::Tcl2, Method::Agksl] {
        let mut cfg = ctx.cfg.clone();
        cfg.solver.method = method;
        let cells = cells_for(&cfg, model, &[(0.2, 5.0, 0.002)], &[0.5, 1.0, 5.0])?;
        let cache = ctx.cache()?;
        let route = cfg.delta_f.route(&model);
        for r in survey(&cells, &[AnsatzKind::Imp3], &cfg.optimizer, route, Some(&cache), ctx.workers) {
            if let Some(e) = &r.error {
                log::warn!("{} tau={}: {e}", method, r.tau);
            }
            rows.push(vec![
                method.to_string(),
                r.tau.to_string(),
                r.work.to_string(),
                r.delta_f.to_string(),
                r.excess.to_string(),
                r.converged.to_string(),
            ]);
        }
    }
    output::write_table(&ctx.path("methods.csv"), &["method", "tau", "work", "delta_f", "excess", "converged"], &rows)?;
    ctx.summary("repro fig5", rows.len())
}

#[derive(Serialize)]
struct GapRow {
    gamma: f64,
    xi: f64,
    tau: f64,
    qp: f64,
    imp3: f64,
    gap: f64,
}

fn repro_trap(ctx: &Context) -> Result<(), CliError> {
    let t = &ctx.cfg.trap;
    let mut rows = Vec::new();
    for gamma in [0.2, 1.0, 5.0] {
        for xi in [0.2, 1.0] {
            for tau in [0.5, 2.0, 15.0] {
                let model = TrapModel::new(t.epsilon, SpectralDensity::drude(gamma, xi)?, 0.0, 1.0, tau, Regime::Underdamped)?;
                let qp = brownian::qp_optimal_protocol(&model, t.step)?;
                let imp = brownian::imp3_delta_optimal(&model)?;
                rows.push(GapRow { gamma, xi, tau, qp: qp.work, imp3: imp.work, gap: (imp.work - qp.work).abs() / qp.work.abs() });
            }
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| [r.gamma, r.xi, r.tau, r.qp, r.imp3, r.gap].iter().map(|v| v.to_string()).collect())
        .collect();
    output::write_table(&ctx.path("gap.csv"), &["gamma", "xi", "tau", "qp", "imp3", "gap"], &table)?;
    for r in &rows {
        println!("gamma={:<4} xi={:<4} tau={:<5} gap={:.3}%", r.gamma, r.xi, r.tau, 100.0 * r.gap);
    }
    ctx.summary("repro trap", rows)
}
