//! Acceptance checks, one line per criterion.
//!
//! `WORKMIN_ACCEPT=1,3` selects criteria; `WORKMIN_SLOW=1` enables the
//! slow suite (brute-force proximity). Exits non-zero if any check fails.

use std::time::Instant;
use workmin::bath::{expand_correlation, BathError, SpectralDensity};
use workmin::brownian::{analytic_optimal_ohmic, imp3_delta_optimal, qp_optimal_protocol, Regime, TrapModel};
use workmin::dynamics::{propagate, Method, Simulation, SolverConfig};
use workmin::optimize::{optimize_brute_force, optimize_imp3, optimize_poly3, OptimizerConfig};
use workmin::protocol::{imp3_initial_guess, Protocol};
use workmin::system::TwoLevelModel;
use workmin::thermo::{evaluate_work, free_energy_difference, DeltaFRoute, SECOND_LAW_TOL};

type Check = Result<String, String>;

const FIT_TOL: f64 = 1e-3;
const DELTA: f64 = 1e-2;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn verdict(pass: bool, detail: String) -> Check {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn drude_sim(model: TwoLevelModel, method: Method, (beta, gamma, xi): (f64, f64, f64)) -> Simulation {
    let j = SpectralDensity::drude(gamma, xi).unwrap();
    let e = expand_correlation(&j, beta, FIT_TOL, 64).unwrap();
    let solver = SolverConfig { method, dt: SolverConfig::default_dt(&model, &j), depth: SolverConfig::default_depth(&j) };
    Simulation::new(model, j, beta, e, solver).unwrap()
}

fn driven() -> TwoLevelModel {
    TwoLevelModel::driven(1.0, 0.0, 1.0).unwrap()
}

fn ohmic_chain() -> Check {
    let m = TrapModel::new(1.0, SpectralDensity::ohmic(1.0, 1.0).unwrap(), 0.0, 1.0, 0.5, Regime::Underdamped).unwrap();
    let exact = analytic_optimal_ohmic(1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
    let step = 5e-3;
    let qp = qp_optimal_protocol(&m, step).map_err(|e| e.to_string())?;
    // Interior line from a least-squares fit away from the ends; the
    // impulse area is the excess of the first interior node over it.
    let n = qp.lambda.len() - 1;
    let pts: Vec<(f64, f64)> = (2..=n - 2).map(|k| (qp.times[k], qp.lambda[k])).collect();
    let len = pts.len() as f64;
    let (mt, ml) = (pts.iter().map(|p| p.0).sum::<f64>() / len, pts.iter().map(|p| p.1).sum::<f64>() / len);
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<f64>() / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let intercept = ml - slope * mt;
    let area = (qp.lambda[1] - (intercept + slope * qp.times[1])) * step;
    let imp = imp3_delta_optimal(&m).map_err(|e| e.to_string())?;
    let imp_gap = [imp.slope - exact.slope, imp.intercept - exact.intercept, imp.impulse - exact.impulse, imp.work - exact.work]
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let errs = [rel(slope, exact.slope), rel(intercept, exact.intercept), rel(area, exact.impulse), rel(qp.work, exact.work)];
    let pass = errs.iter().all(|&e| e <= 0.01) && imp_gap <= 1e-8;
    verdict(
        pass,
        format!(
            "QP slope {slope:.4} intercept {intercept:.4} area {area:.4} W* {:.6} vs analytic {:.6} (rel {:.2}%, {:.2}%, {:.2}%, {:.2}%); IMP3 gap {imp_gap:.1e}",
            qp.work,
            exact.work,
            100.0 * errs[0],
            100.0 * errs[1],
            100.0 * errs[2],
            100.0 * errs[3]
        ),
    )
}

fn impulse_gap() -> Check {
    let gap = |gamma: f64, xi: f64, tau: f64| -> Result<f64, String> {
        let m = TrapModel::new(1.0, SpectralDensity::drude(gamma, xi).unwrap(), 0.0, 1.0, tau, Regime::Underdamped).unwrap();
        let qp = qp_optimal_protocol(&m, 2e-3).map_err(|e| e.to_string())?.work;
        let imp = imp3_delta_optimal(&m).map_err(|e| e.to_string())?.work;
        Ok(rel(imp, qp))
    };
    let headline = gap(5.0, 1.0, 0.5)?;
    let mut worst = (0.0, (0.0, 0.0, 0.0));
    for (gamma, xi) in [(0.2, 0.2), (0.2, 1.0), (1.0, 0.2), (1.0, 1.0), (5.0, 0.2), (5.0, 1.0)] {
        for tau in [0.5, 2.0, 15.0] {
            let g = gap(gamma, xi, tau)?;
            if g > worst.0 {
                worst = (g, (gamma, xi, tau));
            }
        }
    }
    verdict(
        (headline - 0.036).abs() <= 0.01 && worst.0 <= 0.05,
        format!("gap at (5,1) tau=0.5 {:.2}%; worst {:.2}% at (gamma,xi,tau)={:?}", 100.0 * headline, 100.0 * worst.0, worst.1),
    )
}

fn method_triple() -> Check {
    let cfg = OptimizerConfig::default();
    let mut works = Vec::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for (method, paper) in [(Method::Heom, -1.14e-2), (Method::Tcl2, -1.15e-2), (Method::Agksl, -4.11e-3)] {
        let s = drude_sim(driven(), method, (0.2, 0.2, 0.2));
        let w = optimize_imp3(&s, 0.5, DELTA, &cfg).map_err(|e| e.to_string())?.work;
        let r = rel(w, paper);
        pass &= r <= 0.1;
        parts.push(format!("{method} {w:.4e} ({:.1}% off {paper:.2e})", 100.0 * r));
        works.push(w);
    }
    let ratio = works[0] / works[2];
    pass &= !(0.5..=2.0).contains(&ratio);
    parts.push(format!("HEOM/A-GKSL ratio {ratio:.2}"));
    verdict(pass, parts.join("; "))
}

fn weak_coupling() -> Check {
    let cfg = OptimizerConfig::default();
    let heom = drude_sim(driven(), Method::Heom, (0.2, 5.0, 0.002));
    let tcl2 = drude_sim(driven(), Method::Tcl2, (0.2, 5.0, 0.002));
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for tau in [0.5, 1.0, 5.0] {
        let a = optimize_imp3(&heom, tau, DELTA, &cfg).map_err(|e| e.to_string())?.work;
        let b = optimize_imp3(&tcl2, tau, DELTA, &cfg).map_err(|e| e.to_string())?.work;
        worst = worst.max(rel(b, a));
        parts.push(format!("tau={tau}: {a:.5e} vs {b:.5e}"));
    }
    verdict(worst <= 0.02, format!("{}; worst {:.3}%", parts.join(", "), 100.0 * worst))
}

fn ansatz_hierarchy() -> Check {
    let cfg = OptimizerConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (beta, gamma) in [(0.2, 0.2), (0.2, 1.0), (1.0, 0.2), (1.0, 1.0)] {
        let s = drude_sim(driven(), Method::Heom, (beta, gamma, 1.0));
        for tau in [0.5, 5.0] {
            let lin = evaluate_work(&s, &Protocol::linear(s.window(tau).unwrap())).map_err(|e| e.to_string())?;
            let poly = optimize_poly3(&s, tau, &cfg).map_err(|e| e.to_string())?.work;
            let imp = optimize_imp3(&s, tau, DELTA, &cfg).map_err(|e| e.to_string())?.work;
            let ok = imp <= poly && poly <= lin && (tau > 0.5 || imp < lin);
            pass &= ok;
            if !ok {
                parts.push(format!("({beta},{gamma}) tau={tau}: IMP3 {imp:.5e} POLY3 {poly:.5e} linear {lin:.5e}"));
            }
        }
    }
    if parts.is_empty() {
        parts.push("IMP3 <= POLY3 <= linear on all 8 cells".into());
    }
    verdict(pass, parts.join("; "))
}

fn brute_force_proximity() -> Check {
    let s = drude_sim(driven(), Method::Heom, (0.2, 5.0, 1.0));
    let cfg = OptimizerConfig::default();
    let imp = optimize_imp3(&s, 0.5, DELTA, &cfg).map_err(|e| e.to_string())?;
    let bf = optimize_brute_force(&s, &imp.protocol, DELTA, &OptimizerConfig { max_iter: 20_000, ..cfg })
        .map_err(|e| e.to_string())?;
    let r = rel(imp.work, bf.work);
    verdict(
        r <= 0.08,
        format!(
            "IMP3 {:.5e} B-F {:.5e} ({} iterations, converged {}) rel {:.2}%",
            imp.work,
            bf.work,
            bf.result.iterations,
            bf.result.converged,
            100.0 * r
        ),
    )
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
}

/// The tunable benchmark needs a hierarchy far beyond desk scale at the
/// default fit tolerance; report its size instead of attempting it.
fn tunable_crossover() -> Check {
    let j = SpectralDensity::drude(5.0, 0.2).unwrap();
    let depth = SolverConfig::default_depth(&j) as u64;
    let mut sizes = Vec::new();
    for (tol, k_max) in [(FIT_TOL, 64), (1e-2, 64), (3e-2, 64)] {
        let (terms, note) = match expand_correlation(&j, 5.0, tol, k_max) {
            Ok(e) => (e.len() as u64, String::new()),
            Err(BathError::FitFailure { achieved, .. }) => (k_max as u64, format!(" (fit only reaches {achieved:.1e})")),
            Err(e) => return Err(e.to_string()),
        };
        sizes.push(format!("tol {tol:.0e}: {terms} terms, {} blocks{note}", binomial(terms + depth, depth)));
    }
    Err(format!(
        "not attainable: HEOM depth {depth} at (5,5,0.2) needs {}; TCL2 is unbounded below for IMP3 here",
        sizes.join(", ")
    ))
}

fn invariants() -> Check {
    let mut parts = Vec::new();
    let mut pass = true;
    let cfg_sets = [(1.0, 1.0, 0.5), (0.2, 0.2, 0.2)];
    let mut margin = f64::INFINITY;
    let (mut worst_depth, mut worst_dt) = (0.0_f64, 0.0_f64);
    for set in cfg_sets {
        let heom = drude_sim(driven(), Method::Heom, set);
        let guess = imp3_initial_guess(&heom.model, &heom.spectral, heom.beta, 0.5, DELTA).unwrap();
        let w = heom.window(0.5).unwrap();
        let protocols = [Protocol::linear(w), Protocol::imp3(w, guess, DELTA).unwrap()];
        for method in [Method::Heom, Method::Tcl2, Method::Agksl] {
            let s = heom.with_solver(SolverConfig { method, ..heom.solver }).unwrap();
            let df = free_energy_difference(&s, DeltaFRoute::default(), None).map_err(|e| e.to_string())?;
            for p in &protocols {
                let traj = s.run(p).map_err(|e| e.to_string())?;
                let d = traj.diagnostics;
                let ok = d.max_trace_error <= 1e-8
                    && d.max_hermiticity_error <= 1e-10
                    && (method != Method::Agksl || d.min_eigenvalue >= -1e-10);
                if !ok {
                    pass = false;
                    parts.push(format!("{method} {set:?} {}: {d:?}", p.descriptor()));
                }
                margin = margin.min(evaluate_work(&s, p).map_err(|e| e.to_string())? - df);
            }
        }
        // Depth and step refinement move the work by under 0.1%.
        for p in &protocols {
            let base = evaluate_work(&heom, p).map_err(|e| e.to_string())?;
            let deeper = heom.with_solver(SolverConfig { depth: heom.solver.depth + 2, ..heom.solver }).unwrap();
            let finer = heom.with_solver(SolverConfig { dt: heom.solver.dt / 10.0, ..heom.solver }).unwrap();
            let dd = rel(evaluate_work(&deeper, p).map_err(|e| e.to_string())?, base);
            let dt = rel(evaluate_work(&finer, p).map_err(|e| e.to_string())?, base);
            worst_depth = worst_depth.max(dd);
            worst_dt = worst_dt.max(dt);
        }
    }
    pass &= worst_depth <= 1e-3 && worst_dt <= 1e-3;
    parts.push(format!("depth+2 change {worst_depth:.1e}, dt/10 change {worst_dt:.1e}"));
    pass &= margin >= -SECOND_LAW_TOL;
    parts.push(format!("second-law margin {margin:.2e}"));

    // Fourth-order stepping.
    let s = drude_sim(driven(), Method::Heom, (1.0, 1.0, 0.3));
    let g = s.generator();
    let init = g.load(&s.initial_state().unwrap()[0]);
    let p = Protocol::linear(s.window(1.0).unwrap());
    let end = |dt: f64| *propagate(g, &init, &p, dt).unwrap().states.last().unwrap();
    let reference = end(0.02 / 16.0);
    let dist = |a: workmin::op2::Op2| workmin::op2::max_abs(&(a - reference));
    let order = (dist(end(0.02)) / dist(end(0.01))).log2();
    pass &= order >= 3.8;
    parts.push(format!("RK4 order {order:.2}"));

    // Slow driving: excess work vanishes like 1/tau.
    let s = drude_sim(driven(), Method::Tcl2, (1.0, 1.0, 0.5));
    let df = free_energy_difference(&s, DeltaFRoute::default(), None).map_err(|e| e.to_string())?;
    let excess: Vec<f64> =
        [50.0, 500.0].iter().map(|&tau| evaluate_work(&s, &Protocol::linear(s.window(tau).unwrap())).unwrap() - df).collect();
    pass &= excess[1] >= -SECOND_LAW_TOL && excess[1] < 0.15 * excess[0];
    parts.push(format!("quasistatic excess {:.2e} -> {:.2e}", excess[0], excess[1]));

    // Bath expansion.
    let mut worst_resid: f64 = 0.0;
    let mut worst_balance: f64 = 0.0;
    for (gamma, xi, beta) in [(0.2, 0.2, 0.2), (1.0, 1.0, 1.0), (5.0, 1.0, 0.2), (0.2, 1.0, 5.0)] {
        let e = expand_correlation(&SpectralDensity::drude(gamma, xi).unwrap(), beta, FIT_TOL, 200).unwrap();
        worst_resid = worst_resid.max(e.fit_error / FIT_TOL);
        for k in 1..=40 {
            let w = 0.1 * k as f64;
            let (up, down) = (2.0 * e.spectrum(w).re, 2.0 * e.spectrum(-w).re);
            worst_balance = worst_balance.max((down - (-beta * w).exp() * up).abs() / (FIT_TOL * up.abs()));
        }
    }
    pass &= worst_resid <= 1.0 && worst_balance <= 10.0;
    parts.push(format!("residual/tol {worst_resid:.2}, balance/tol {worst_balance:.2}"));
    verdict(pass, parts.join("; "))
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("WORKMIN_ACCEPT")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let slow = std::env::var("WORKMIN_SLOW").is_ok_and(|v| v == "1");
    let criteria: [(usize, &str, fn() -> Check, bool); 8] = [
        (1, "Ohmic oracle chain", ohmic_chain, false),
        (2, "non-Markovian IMP3 gap", impulse_gap, false),
        (3, "method disagreement", method_triple, false),
        (4, "weak-coupling agreement", weak_coupling, false),
        (5, "ansatz hierarchy", ansatz_hierarchy, false),
        (6, "brute-force proximity", brute_force_proximity, true),
        (7, "tunable crossover", tunable_crossover, false),
        (8, "solver invariants", invariants, false),
    ];
    let mut failed = 0;
    for (id, name, check, is_slow) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        if is_slow && !slow {
            println!("criterion {id} SKIP {name}: slow suite, set WORKMIN_SLOW=1");
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id} PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {id} FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
