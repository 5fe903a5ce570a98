use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;
use workmin::bath::{expand_correlation, SpectralDensity};
use workmin::dynamics::{propagate, Generator, Method, Simulation, SolverConfig};
use workmin::op2::{self, Op2};
use workmin::protocol::{imp3_initial_guess, Imp3Params, Protocol, Window};
use workmin::system::TwoLevelModel;
use workmin::thermo::evaluate_work;

const METHODS: [Method; 3] = [Method::Heom, Method::Tcl2, Method::Agksl];

fn sim(method: Method, (beta, gamma, xi): (f64, f64, f64), tol: f64, depth: usize) -> Simulation {
    let model = TwoLevelModel::driven(1.0, 0.0, 1.0).unwrap();
    let j = SpectralDensity::drude(gamma, xi).unwrap();
    let e = expand_correlation(&j, beta, tol, 64).unwrap();
    Simulation::new(model, j, beta, e, SolverConfig { method, dt: 1e-3, depth }).unwrap()
}

fn flatten(state: &[Op2]) -> DVector<Complex64> {
    DVector::from_iterator(state.len() * 4, state.iter().flat_map(|b| [b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]]))
}

fn dense_generator(g: &dyn Generator, lambda: f64) -> DMatrix<Complex64> {
    let n = g.state_len();
    let mut m = DMatrix::zeros(4 * n, 4 * n);
    let mut out = vec![op2::zero(); n];
    for col in 0..4 * n {
        let mut basis = vec![op2::zero(); n];
        basis[col / 4][((col % 4) / 2, col % 2)] = Complex64::new(1.0, 0.0);
        g.rhs(lambda, &basis, &mut out).unwrap();
        m.set_column(col, &flatten(&out));
    }
    m
}

fn excited() -> Op2 {
    op2::from_bloch(1.0, 0.3, 0.2, 0.9) * op2::re(0.5)
}

#[test]
fn fixed_control_matches_matrix_exponential() {
    let lambda = 0.4;
    let tau = 1.0;
    let p = Protocol::constant(Window::new(0.0, 1.0, tau).unwrap(), lambda);
    let t = Complex64::new(tau, 0.0);
    for method in METHODS {
        let s = sim(method, (1.0, 1.0, 0.3), 1e-2, 3);
        let g = s.generator();
        let (init, exact) = if method == Method::Tcl2 {
            // Memory operators at their stationary values stay put, which
            // leaves a linear time-invariant equation for the reduced state.
            let mut init = g.steady_state(lambda).unwrap().unwrap();
            init[0] = excited();
            let mut frozen = init.clone();
            let n = frozen.len();
            let mut out = vec![op2::zero(); n];
            let mut m = DMatrix::zeros(4, 4);
            for col in 0..4 {
                frozen[0] = op2::zero();
                frozen[0][(col / 2, col % 2)] = Complex64::new(1.0, 0.0);
                g.rhs(lambda, &frozen, &mut out).unwrap();
                m.set_column(col, &flatten(&out[..1]));
            }
            g.rhs(lambda, &init, &mut out).unwrap();
            assert!(out[1..].iter().all(|c| op2::max_abs(c) < 1e-13));
            (init.clone(), (m * t).exp() * flatten(&init[..1]))
        } else {
            let init = g.load(&excited());
            let exact = (dense_generator(g, lambda) * t).exp() * flatten(&init);
            (init, exact)
        };
        let traj = propagate(g, &init, &p, 1e-3).unwrap();
        let last = traj.states.last().unwrap();
        for (k, v) in [last[(0, 0)], last[(0, 1)], last[(1, 0)], last[(1, 1)]].iter().enumerate() {
            assert!((v - exact[k]).norm() < 1e-10, "{method}: {v} vs {}", exact[k]);
        }
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    for method in METHODS {
        let s = sim(method, (1.0, 1.0, 0.3), 1e-2, 3);
        let g = s.generator();
        let init = g.load(&excited());
        let p = Protocol::linear(Window::new(0.0, 1.0, 1.0).unwrap());
        let end = |dt: f64| *propagate(g, &init, &p, dt).unwrap().states.last().unwrap();
        let reference = end(0.02 / 16.0);
        let e1 = op2::max_abs(&(end(0.02) - reference));
        let e2 = op2::max_abs(&(end(0.01) - reference));
        let order = (e1 / e2).log2();
        assert!(order >= 3.8, "{method}: observed order {order} ({e1:e}, {e2:e})");
    }
}

fn trace_distance(a: &Op2, b: &Op2) -> f64 {
    let [l0, l1] = op2::hermitian_eigenvalues(&(a - b));
    0.5 * (l0.abs() + l1.abs())
}

#[test]
fn weak_coupling_heom_and_tcl2_agree() {
    let set = (0.2, 5.0, 0.002);
    let heom = sim(Method::Heom, set, 1e-3, 4);
    let tcl2 = sim(Method::Tcl2, set, 1e-3, 4);
    let j = SpectralDensity::drude(5.0, 0.002).unwrap();
    for tau in [0.5, 5.0] {
        let w = heom.window(tau).unwrap();
        let guess = imp3_initial_guess(&heom.model, &j, 0.2, tau, 0.01).unwrap();
        for p in [Protocol::linear(w), Protocol::imp3(w, guess, 0.01).unwrap()] {
            let a = heom.run(&p).unwrap();
            let b = tcl2.run(&p).unwrap();
            let worst = a.states.iter().zip(&b.states).map(|(x, y)| trace_distance(x, y)).fold(0.0, f64::max);
            assert!(worst <= 1e-3, "tau={tau} {}: {worst}", p.descriptor());
        }
    }
}

#[test]
fn deeper_hierarchy_changes_work_less() {
    let set = (0.2, 0.2, 0.2);
    let p = Protocol::linear(Window::new(0.0, 1.0, 0.5).unwrap());
    let w: Vec<f64> = [2, 4, 6].iter().map(|&d| evaluate_work(&sim(Method::Heom, set, 1e-3, d), &p).unwrap()).collect();
    assert!((w[2] - w[1]).abs() <= (w[1] - w[0]).abs(), "{w:?}");
}

#[test]
fn equilibrium_is_stationary_under_fixed_control() {
    for method in METHODS {
        let s = sim(method, (1.0, 1.0, 0.5), 1e-3, 4);
        let p = Protocol::constant(Window::new(0.0, 0.0, 2.0).unwrap(), 0.0);
        let traj = s.run(&p).unwrap();
        let first = traj.states[0];
        for r in &traj.states {
            assert!(op2::max_abs(&(r - first)) < 1e-10, "{method}");
        }
    }
}

fn cached(method: Method) -> &'static Simulation {
    static SIMS: OnceLock<Vec<Simulation>> = OnceLock::new();
    let sims = SIMS.get_or_init(|| METHODS.iter().map(|&m| sim(m, (1.0, 1.0, 0.5), 1e-3, 4)).collect());
    &sims[METHODS.iter().position(|&m| m == method).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectories_stay_physical(
        m in 0_usize..3,
        a in prop::array::uniform3(-3.0_f64..3.0),
        h in -100.0_f64..100.0,
        slope in -4.0_f64..4.0,
        intercept in -2.0_f64..2.0,
    ) {
        let s = cached(METHODS[m]);
        let w = s.window(0.5).unwrap();
        let ps = [
            Protocol::poly3(w, a[0], a[1], a[2]),
            Protocol::imp3(w, Imp3Params { h, slope, intercept }, 0.01).unwrap(),
        ];
        for p in &ps {
            let d = s.run(p).unwrap().diagnostics;
            prop_assert!(d.max_trace_error <= 1e-8, "{}", d.max_trace_error);
            prop_assert!(d.max_hermiticity_error <= 1e-10, "{}", d.max_hermiticity_error);
            if METHODS[m] == Method::Agksl {
                prop_assert!(d.min_eigenvalue >= -1e-10, "{}", d.min_eigenvalue);
            }
        }
    }
}
