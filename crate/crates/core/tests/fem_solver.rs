use gedamage::damage::{uniaxial_stress_path, ReturnMapOptions};
use gedamage::fem::assembly::Execution;
use gedamage::fem::kernel::{element_kernel, ElementState, KappaMode, ELEMENT_DOFS};
use gedamage::fem::mesh::box_mesh;
use gedamage::fem::shape::ElementGeometry;
use gedamage::fem::solver::{ArcLengthConfig, Continuation, Solver, SolverConfig, Termination};
use gedamage::fem::{dof, Problem, Scheme, PHI};
use gedamage::materials::{ClosedFormParams, MaterialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(kappa_d: f64) -> MaterialModel {
    MaterialModel::ClosedForm(ClosedFormParams::from_young(10.0, 0.3, 5.0, kappa_d).with_nonlocal(0.5, 50.0))
}

fn bar(m: MaterialModel, stretch: f64) -> Problem {
    let mut p = Problem::new(box_mesh([1.0; 3], [1, 1, 1]).unwrap(), m).unwrap();
    p.prescribe("x0", 0, 0.0).unwrap();
    p.prescribe("y0", 1, 0.0).unwrap();
    p.prescribe("z0", 2, 0.0).unwrap();
    p.prescribe("x1", 0, stretch - 1.0).unwrap();
    p.monitor("x1", 0).unwrap();
    p
}

#[test]
fn single_element_matches_point_driver() {
    let m = model(0.3);
    let p = bar(m.clone(), 1.6);
    let cfg = SolverConfig { scheme: Scheme::LocalMonolithic, steps: 60, d_max: 1.0, ..Default::default() };
    let traj = Solver::new(&p, cfg).unwrap().load_stepping().unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    let stretches: Vec<f64> = traj.records.iter().map(|r| 1.0 + r.displacement).collect();
    let points = uniaxial_stress_path(&m, &stretches, ReturnMapOptions::default()).unwrap();
    assert!(points.last().unwrap().damage > 0.5);
    for (r, pt) in traj.records.iter().zip(&points) {
        assert!((r.reaction_force - pt.stress).abs() <= 1e-6 * pt.stress.abs().max(1.0), "{r:?} {pt:?}");
        assert!((r.max_kappa - pt.kappa).abs() <= 1e-8 * pt.kappa.max(1.0));
    }
}

#[test]
fn homogeneous_patch_is_reproduced() {
    let m = model(1e6);
    let mut p = Problem::new(box_mesh([2.0, 1.0, 1.5], [2, 2, 2]).unwrap(), m).unwrap();
    let h = [[0.1, 0.02, -0.03], [0.0, -0.05, 0.04], [0.01, 0.0, 0.07]];
    let boundary: Vec<usize> =
        ["x0", "x1", "y0", "y1", "z0", "z1"].iter().flat_map(|s| p.mesh.node_set(s).unwrap().to_vec()).collect();
    for n in boundary {
        let x = p.mesh.nodes[n];
        for (i, row) in h.iter().enumerate() {
            p.prescribe_node(n, i, row[0] * x[0] + row[1] * x[1] + row[2] * x[2]);
        }
    }
    let cfg = SolverConfig { steps: 2, ..Default::default() };
    let traj = Solver::new(&p, cfg).unwrap().load_stepping().unwrap();
    let s = &traj.final_state;
    let center = p.mesh.find_node([1.0, 0.5, 0.75], 1e-9).unwrap();
    let u = s.displacement(center);
    let x = p.mesh.nodes[center];
    for i in 0..3 {
        let exact = h[i][0] * x[0] + h[i][1] * x[1] + h[i][2] * x[2];
        assert!((u[i] - exact).abs() < 1e-10, "{i}: {} vs {exact}", u[i]);
    }
    let phi0 = s.phi(0);
    assert!((0..p.mesh.num_nodes()).all(|n| (s.phi(n) - phi0).abs() < 1e-10 * phi0.abs().max(1.0)));
    let fields = Solver::new(&p, cfg).unwrap().fields(s).unwrap();
    for f in &fields {
        for (a, b) in f.cauchy.iter().zip(&fields[0].cauchy) {
            assert!((a - b).abs() < 1e-8 * fields[0].von_mises);
        }
    }
    let k = s.history.committed[0][0];
    assert!(s.history.committed.iter().flatten().all(|v| (v - k).abs() < 1e-10 * k.max(1.0)));
}

fn random_element(rng: &mut ChaCha8Rng) -> (ElementGeometry, [f64; 24], [f64; 8]) {
    let mut coords = [[0.0; 3]; 8];
    for (a, c) in coords.iter_mut().enumerate() {
        let s = gedamage::fem::shape::NODE_SIGNS[a];
        for i in 0..3 {
            c[i] = 0.5 * (1.0 + s[i]) + rng.random_range(-0.08..0.08);
        }
    }
    let geo = ElementGeometry::new(&coords).unwrap();
    let u = std::array::from_fn(|_| rng.random_range(-0.08..0.08));
    let phi = std::array::from_fn(|_| rng.random_range(0.0..0.3));
    (geo, u, phi)
}

fn check_tangent(mode: KappaMode, kappa_n: [f64; 8], kappa: [f64; 8], seed: u64) {
    let m = model(0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (geo, u, phi) = random_element(&mut rng);
    let eval = |u: &[f64; 24], phi: &[f64; 8], tangent: bool| {
        element_kernel(&ElementState { geo: &geo, u, phi, kappa_n: &kappa_n, kappa: &kappa }, &m, mode, tangent)
            .unwrap()
    };
    let out = eval(&u, &phi, true);
    let k = out.tangent.unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for j in 0..ELEMENT_DOFS {
        let (mut up, mut pp, mut um, mut pm) = (u, phi, u, phi);
        if j < 24 {
            up[j] += h;
            um[j] -= h;
        } else {
            pp[j - 24] += h;
            pm[j - 24] -= h;
        }
        let rp = eval(&up, &pp, false).residual;
        let rm = eval(&um, &pm, false).residual;
        let scale = k.iter().map(|row| row[j].abs()).fold(1e-3, f64::max);
        for i in 0..ELEMENT_DOFS {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            worst = worst.max((fd - k[i][j]).abs() / scale);
        }
    }
    assert!(worst < 1e-6, "tangent error {worst:e}");
}

#[test]
fn frozen_tangent_matches_finite_differences() {
    for seed in 0..4 {
        check_tangent(KappaMode::Frozen, [0.0; 8], [0.1, 0.2, 0.05, 0.3, 0.0, 0.15, 0.25, 0.12], seed);
    }
}

#[test]
fn resolved_tangent_matches_finite_differences() {
    for seed in 0..4 {
        check_tangent(KappaMode::Resolve(ReturnMapOptions { tol: 1e-13, max_iter: 100 }), [0.0; 8], [0.0; 8], seed);
    }
}

fn plate() -> Problem {
    let mut p = Problem::new(box_mesh([2.0, 1.0, 0.2], [4, 2, 1]).unwrap(), model(0.05)).unwrap();
    p.prescribe("x0", 0, 0.0).unwrap();
    p.prescribe("y0", 1, 0.0).unwrap();
    p.prescribe("z0", 2, 0.0).unwrap();
    p.prescribe("x1", 0, 0.3).unwrap();
    p.monitor("x1", 0).unwrap();
    p
}

#[test]
fn sequential_and_parallel_runs_are_identical() {
    let p = plate();
    let run = |execution| {
        let cfg = SolverConfig { steps: 6, execution, ..Default::default() };
        Solver::new(&p, cfg).unwrap().load_stepping().unwrap()
    };
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_state, b.final_state);
}

#[test]
fn failed_increment_is_halved_and_recovers() {
    let p = plate();
    let cfg = SolverConfig { steps: 4, ..Default::default() };
    let mut failures = 0;
    let traj = Solver::new(&p, cfg)
        .unwrap()
        .load_stepping_with(|step, _| {
            let fail = step == 1 && failures == 0;
            failures += fail as usize;
            fail
        })
        .unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    let lf: Vec<f64> = traj.records.iter().map(|r| r.load_factor).collect();
    assert_eq!(lf, vec![0.25, 0.375, 0.625, 0.875, 1.0]);
}

#[test]
fn persistent_failure_aborts_after_max_cuts() {
    let p = plate();
    let cfg = SolverConfig { steps: 4, max_cuts: 3, ..Default::default() };
    let mut attempts = 0;
    let traj = Solver::new(&p, cfg)
        .unwrap()
        .load_stepping_with(|step, _| {
            attempts += (step == 2) as usize;
            step == 2
        })
        .unwrap();
    assert!(traj.aborted());
    assert_eq!(attempts, 4);
    assert_eq!(traj.records.len(), 2);
    assert_eq!(traj.final_state.load_factor, 0.5);
}

#[test]
fn zero_loading_keeps_the_virgin_state() {
    let mut p = plate();
    p.prescribe("x1", 0, 0.0).unwrap();
    for scheme in [Scheme::Monolithic, Scheme::Staggered, Scheme::Local] {
        let cfg = SolverConfig { steps: 3, scheme, ..Default::default() };
        let traj = Solver::new(&p, cfg).unwrap().load_stepping().unwrap();
        assert_eq!(traj.records.len(), 3);
        for r in &traj.records {
            assert_eq!((r.reaction_force, r.max_kappa, r.max_d, r.max_phi), (0.0, 0.0, 0.0, 0.0));
        }
    }
}

#[test]
fn history_never_decreases() {
    let p = plate();
    let cfg = SolverConfig { steps: 8, record_states: true, scheme: Scheme::Staggered, ..Default::default() };
    let traj = Solver::new(&p, cfg).unwrap().load_stepping().unwrap();
    for w in traj.states.windows(2) {
        let (a, b) = (&w[0].history.committed, &w[1].history.committed);
        assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| y >= x));
    }
    assert!(traj.records.last().unwrap().max_kappa > 0.0);
}

#[test]
fn local_schemes_hold_phi_at_zero() {
    let p = plate();
    let cfg = SolverConfig { steps: 4, scheme: Scheme::Local, ..Default::default() };
    let traj = Solver::new(&p, cfg).unwrap().load_stepping().unwrap();
    assert!((0..p.mesh.num_nodes()).all(|n| traj.final_state.x[dof(n, PHI)] == 0.0));
    assert!(traj.records.last().unwrap().max_kappa > 0.0);
}

fn loaded_bar() -> Problem {
    let mut p = Problem::new(box_mesh([1.0; 3], [1, 1, 1]).unwrap(), model(1e6)).unwrap();
    p.prescribe("x0", 0, 0.0).unwrap();
    p.prescribe("y0", 1, 0.0).unwrap();
    p.prescribe("z0", 2, 0.0).unwrap();
    p.load("x1", 0, 1.0).unwrap();
    p.monitor("x1", 0).unwrap();
    p
}

#[test]
fn arc_length_matches_load_stepping_in_hardening() {
    let p = loaded_bar();
    let cfg = SolverConfig {
        continuation: Continuation::ArcLength,
        arc_length: ArcLengthConfig { radius: 0.05, ..Default::default() },
        record_states: true,
        ..Default::default()
    };
    let arc = Solver::new(&p, cfg).unwrap().run().unwrap();
    assert_eq!(arc.termination, Termination::Completed);
    assert!(arc.records.windows(2).all(|w| w[1].load_factor > w[0].load_factor));
    assert!(arc.records.last().unwrap().load_factor >= 1.0);
    let mut direct = Solver::new(&p, SolverConfig::default()).unwrap();
    let mut state = direct.initial_state();
    for s in &arc.states {
        direct.newton(&mut state, s.load_factor).unwrap();
        let err = state.x.iter().zip(&s.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "load factor {}: {err:e}", s.load_factor);
    }
}

#[test]
fn zero_arc_radius_is_rejected() {
    let p = loaded_bar();
    let cfg = SolverConfig {
        continuation: Continuation::ArcLength,
        arc_length: ArcLengthConfig { radius: 0.0, ..Default::default() },
        ..Default::default()
    };
    assert!(Solver::new(&p, cfg).is_err());
}

#[test]
fn elastic_newton_converges_quadratically() {
    let p = loaded_bar();
    let mut solver = Solver::new(&p, SolverConfig { newton_tol: 1e-14, ..Default::default() }).unwrap();
    let mut state = solver.initial_state();
    let report = solver.newton(&mut state, 1.0).unwrap();
    let r = &report.residual_norms;
    assert!(r.len() >= 4, "{r:?}");
    for w in r.windows(2).filter(|w| w[1] > 1e-10) {
        assert!(w[1] / (w[0] * w[0]) < 10.0, "{r:?}");
    }
}

#[test]
fn diagonal_scaling_gives_the_same_solution() {
    let p = plate();
    let run = |diagonal_scaling| {
        let cfg = SolverConfig { steps: 4, diagonal_scaling, ..Default::default() };
        Solver::new(&p, cfg).unwrap().load_stepping().unwrap().final_state
    };
    let (a, b) = (run(false), run(true));
    let err = a.x.iter().zip(&b.x).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err:e}");
}

#[test]
fn arc_length_rejects_prescribed_motion() {
    let p = plate();
    let cfg = SolverConfig { continuation: Continuation::ArcLength, ..Default::default() };
    assert!(Solver::new(&p, cfg).unwrap().run().is_err());
}
