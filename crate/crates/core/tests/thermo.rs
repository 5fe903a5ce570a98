use proptest::prelude::*;
use std::sync::OnceLock;
use workmin::bath::{expand_correlation, SpectralDensity};
use workmin::dynamics::{Method, Simulation, SolverConfig};
use workmin::optimize::{
    brute_force_random_restarts, optimize_brute_force, optimize_imp3_from, OptimizerConfig,
};
use workmin::protocol::{imp3_initial_guess, Imp3Params, Protocol};
use workmin::system::TwoLevelModel;
use workmin::thermo::{
    cache_key, delta_f_uncoupled, evaluate_work, free_energy_difference, second_law_check, work, work_trapezoid,
    DeltaFCache, DeltaFRoute, WorkReport, SECOND_LAW_TOL,
};

fn sim(model: TwoLevelModel, method: Method, (beta, gamma, xi): (f64, f64, f64), dt: f64) -> Simulation {
    let j = SpectralDensity::drude(gamma, xi).unwrap();
    let e = expand_correlation(&j, beta, 1e-3, 64).unwrap();
    let depth = SolverConfig::default_depth(&j);
    Simulation::new(model, j, beta, e, SolverConfig { method, dt, depth }).unwrap()
}

fn driven() -> TwoLevelModel {
    TwoLevelModel::driven(1.0, 0.0, 1.0).unwrap()
}

#[test]
fn constant_control_costs_nothing() {
    let model = TwoLevelModel::driven(1.0, 0.3, 0.3).unwrap();
    for method in [Method::Heom, Method::Tcl2, Method::Agksl] {
        let s = sim(model, method, (1.0, 1.0, 0.5), 1e-3);
        let p = Protocol::constant(s.window(1.0).unwrap(), 0.3);
        let w = evaluate_work(&s, &p).unwrap();
        assert!(w.abs() < 1e-15, "{method}: {w:e}");
    }
}

#[test]
fn simpson_and_trapezoid_converge_together() {
    let s = sim(driven(), Method::Heom, (1.0, 1.0, 0.5), 1e-2);
    let p = Protocol::poly3(s.window(2.0).unwrap(), 0.3, -0.5, 0.2);
    let gap = |dt: f64| {
        let traj = s.with_solver(SolverConfig { dt, ..s.solver }).unwrap().run(&p).unwrap();
        (work(&traj, &s.model).unwrap() - work_trapezoid(&traj, &s.model).unwrap()).abs()
    };
    let (g1, g2) = (gap(2e-2), gap(1e-2));
    assert!(g1 / g2 > 3.5, "{g1:e} -> {g2:e}");
}

#[test]
fn slow_driving_approaches_free_energy() {
    for model in [driven(), TwoLevelModel::tunable(1.0, 1.0, 2.0).unwrap()] {
        let s = sim(model, Method::Tcl2, (1.0, 1.0, 0.5), 1e-2);
        let df = free_energy_difference(&s, DeltaFRoute::Integration { nodes: 16 }, None).unwrap();
        let excess: Vec<f64> = [5.0, 50.0, 500.0]
            .iter()
            .map(|&tau| evaluate_work(&s, &Protocol::linear(s.window(tau).unwrap())).unwrap() - df)
            .collect();
        assert!(excess.iter().all(|&e| e >= -SECOND_LAW_TOL), "{excess:?}");
        assert!(excess[1] < excess[0] && excess[2] < excess[1], "{excess:?}");
        // Linear response: excess work falls off as 1/tau.
        assert!(excess[2] < 0.15 * excess[1], "{excess:?}");
        let qs = free_energy_difference(&s, DeltaFRoute::Quasistatic { tau: 2000.0 }, None).unwrap();
        assert!((qs - df).abs() < 0.5 * excess[2], "{qs} vs {df}");
    }
}

#[test]
fn weak_coupling_free_energy_is_the_bare_one() {
    let s = sim(driven(), Method::Heom, (0.2, 5.0, 0.002), 1e-3);
    let df = free_energy_difference(&s, DeltaFRoute::default(), None).unwrap();
    let bare = delta_f_uncoupled(&s.model, 0.2);
    assert!((df - bare).abs() < 1e-2 * bare.abs(), "{df} vs {bare}");
}

#[test]
fn cache_round_trips_through_disk() {
    let dir = std::env::temp_dir().join(format!("workmin-cache-{}", std::process::id()));
    let s = sim(driven(), Method::Tcl2, (1.0, 1.0, 0.5), 1e-3);
    let route = DeltaFRoute::default();
    let first = free_energy_difference(&s, route, Some(&DeltaFCache::on_disk(&dir).unwrap())).unwrap();
    let key = cache_key(&s, route);
    assert!(dir.join(format!("{key}.json")).exists());
    // A fresh cache on the same directory serves the stored value.
    let fresh = DeltaFCache::on_disk(&dir).unwrap();
    assert_eq!(fresh.get(&key), Some(first));
    let other = s.with_solver(SolverConfig { method: Method::Agksl, ..s.solver }).unwrap();
    assert_ne!(cache_key(&other, route), key);
    assert_ne!(cache_key(&s, DeltaFRoute::Integration { nodes: 8 }), key);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn benchmark(method: Method) -> &'static (Simulation, f64) {
    static CELLS: OnceLock<Vec<(Simulation, f64)>> = OnceLock::new();
    let cells = CELLS.get_or_init(|| {
        [Method::Heom, Method::Tcl2, Method::Agksl]
            .iter()
            .map(|&m| {
                let s = sim(driven(), m, (1.0, 1.0, 0.5), 1e-3);
                let df = free_energy_difference(&s, DeltaFRoute::default(), None).unwrap();
                (s, df)
            })
            .collect()
    });
    &cells[match method {
        Method::Heom => 0,
        Method::Tcl2 => 1,
        Method::Agksl => 2,
    }]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn second_law_holds_for_exact_dynamics(
        a in prop::array::uniform3(-3.0_f64..3.0),
        h in -100.0_f64..100.0,
        slope in -4.0_f64..4.0,
        intercept in -2.0_f64..2.0,
        tau_steps in 1_usize..20,
    ) {
        let (s, df) = benchmark(Method::Heom);
        let w = s.window(0.1 * tau_steps as f64).unwrap();
        for p in [
            Protocol::poly3(w, a[0], a[1], a[2]),
            Protocol::imp3(w, Imp3Params { h, slope, intercept }, 0.02).unwrap(),
        ] {
            let report = WorkReport::new(s, &p, evaluate_work(s, &p).unwrap(), *df);
            let law = second_law_check(&report, SECOND_LAW_TOL);
            prop_assert!(law.pass, "{}: margin {}", p.descriptor(), law.margin);
        }
    }
}

#[test]
fn optimizer_never_worsens_the_seed() {
    for method in [Method::Heom, Method::Tcl2, Method::Agksl] {
        let (s, _) = benchmark(method);
        let start = imp3_initial_guess(&s.model, &s.spectral, s.beta, 0.5, 0.01).unwrap();
        let (opt, seed_work) = optimize_imp3_from(s, 0.5, 0.01, start, &OptimizerConfig::default()).unwrap();
        assert!(opt.work <= seed_work, "{method}: {} > {seed_work}", opt.work);
        assert!(opt.result.converged);
    }
}

#[test]
fn brute_force_refines_imp3_and_beats_random_starts() {
    let (s, _) = benchmark(Method::Tcl2);
    let (tau, delta) = (0.5, 0.05);
    let cfg = OptimizerConfig::default();
    let start = imp3_initial_guess(&s.model, &s.spectral, s.beta, tau, delta).unwrap();
    let (imp3, _) = optimize_imp3_from(s, tau, delta, start, &cfg).unwrap();
    let bf_cfg = OptimizerConfig { max_iter: 20_000, ..cfg };
    let bf = optimize_brute_force(s, &imp3.protocol, delta, &bf_cfg).unwrap();
    assert!(bf.work <= imp3.work + cfg.fatol, "{} > {}", bf.work, imp3.work);
    let restarts = brute_force_random_restarts(s, tau, delta, &bf_cfg, 11, 10).unwrap();
    assert_eq!(restarts.len(), 10);
    for (k, r) in restarts.iter().enumerate() {
        assert_eq!(r.result.seed, Some(11 + k as u64));
        assert!(r.work >= bf.work - 1e-9, "seed {:?}: {} < {}", r.result.seed, r.work, bf.work);
    }
    let again = brute_force_random_restarts(s, tau, delta, &bf_cfg, 11, 1).unwrap();
    assert_eq!(again[0], restarts[0]);
}
