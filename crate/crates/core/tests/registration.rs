mod common;

use cobigicp::correspond::{CorrespondencePair, CorrespondenceSet, GateMode};
use cobigicp::se3::{hat, pose_error, RigidTransform, TangentVector};
use cobigicp::solver::{
    accumulate_normal_equations, register, solve_step, NormalEquations, Objective, RegistrationState, ResidualTerm,
    SigmaInit, SolverConfig, StepStatus,
};
use cobigicp::surface::{PointCloud, SurfaceStat};
use cobigicp::Error;
use cobigicp::baselines::{register_baseline, BaselineKind};
use common::{plane_corner, plane_corner_with, with_stats, Outliers};
use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn identical_clouds_converge_immediately() {
    let scene = plane_corner(1500, 0.0, 0.0, 1);
    let cfg = SolverConfig::default();
    let r = register(&scene.target, &scene.target, &RigidTransform::identity(), &cfg).unwrap();
    assert!(r.converged);
    assert!(r.iterations <= 2, "{} iterations", r.iterations);
    let e = pose_error(&r.transform, &RigidTransform::identity());
    assert!(e.e_trans < 1e-9 && e.e_rot < 1e-9, "{e:?}");
}

#[test]
fn noise_free_recovery() {
    let scene = plane_corner(2000, 0.0, 0.0, 2);
    let r = register(&scene.source, &scene.target, &RigidTransform::identity(), &SolverConfig::default()).unwrap();
    let e = pose_error(&r.transform, &scene.ground_truth);
    assert!(r.converged);
    assert!(r.iterations <= 50);
    assert!(e.e_trans < 1e-6 && e.e_rot < 1e-6, "{e:?}");
    assert!(r.trace.iter().all(|t| t.objective.is_finite()));
}

#[test]
fn noisy_scene_with_outliers() {
    // Outliers on the target side, where every one of them gets a forward match.
    let scene = plane_corner_with(2000, 0.005, 0.2, 3, Outliers::Target);
    let id = RigidTransform::identity();
    let cfg = SolverConfig::default();
    let r = register(&scene.source, &scene.target, &id, &cfg).unwrap();
    let e = pose_error(&r.transform, &scene.ground_truth);
    assert!(e.e_trans < 0.01 && e.e_rot_degrees() < 0.5, "{e:?}");
    assert!(r.trace.iter().all(|t| t.objective.is_finite()));
    let p2pt = register_baseline(BaselineKind::PointToPoint, &scene.source, &scene.target, &id, &cfg).unwrap();
    let e_p2pt = pose_error(&p2pt.transform, &scene.ground_truth);
    assert!(e.e_trans < e_p2pt.e_trans && e.e_rot < e_p2pt.e_rot, "{e:?} vs {e_p2pt:?}");
}

#[test]
fn source_side_outliers_keep_the_error_bound() {
    let scene = plane_corner(2000, 0.005, 0.2, 3);
    let r = register(&scene.source, &scene.target, &RigidTransform::identity(), &SolverConfig::default()).unwrap();
    let e = pose_error(&r.transform, &scene.ground_truth);
    assert!(e.e_trans < 0.01 && e.e_rot_degrees() < 0.5, "{e:?}");
}

fn perturbed_state_scene() -> (common::Scene, RigidTransform) {
    let scene = plane_corner(1200, 0.005, 0.2, 4);
    let start = scene
        .ground_truth
        .retract(&TangentVector::new(Vector3::new(0.02, -0.03, 0.01), Vector3::new(0.05, 0.02, -0.04)));
    (scene, start)
}

#[test]
fn half_quadratic_step_does_not_increase_the_model() {
    let (scene, start) = perturbed_state_scene();
    let cfg = SolverConfig::default();
    let mut state = RegistrationState::new(&scene.source, &scene.target, &start, &cfg, Objective::COBIGICP).unwrap();
    for _ in 0..15 {
        let lin = state.linearize().unwrap();
        let eq = lin.normal_equations(1.0).unwrap();
        let dx = solve_step(&eq.a, &eq.b, cfg.pinv_tolerance).to_vector();
        let model = |d: &Vector6<f64>| -> f64 {
            lin.terms.iter().zip(&lin.weights).map(|(t, w)| t.model_cost(*w, d)).sum()
        };
        let at_zero = model(&Vector6::zeros());
        let at_step = model(&dx);
        assert!(at_step <= at_zero * (1.0 + 1e-12), "{at_step} > {at_zero}");
        // Minimizer: small moves along any axis do not lower the model.
        for k in 0..6 {
            for s in [-1e-4, 1e-4] {
                let mut d = dx;
                d[k] += s;
                assert!(model(&d) >= at_step * (1.0 - 1e-12));
            }
        }
        if state.step().unwrap() != StepStatus::Continue {
            break;
        }
    }
}

#[test]
fn step_is_invariant_to_uniform_weight_scaling() {
    let (scene, start) = perturbed_state_scene();
    let cfg = SolverConfig::default();
    let mut state = RegistrationState::new(&scene.source, &scene.target, &start, &cfg, Objective::COBIGICP).unwrap();
    for _ in 0..20 {
        let lin = state.linearize().unwrap();
        let e1 = lin.normal_equations(1.0).unwrap();
        let e7 = lin.normal_equations(7.0).unwrap();
        let d1 = solve_step(&e1.a, &e1.b, cfg.pinv_tolerance).to_vector();
        let d7 = solve_step(&e7.a, &e7.b, cfg.pinv_tolerance).to_vector();
        assert!((d1 - d7).norm() < 1e-10, "{}", (d1 - d7).norm());
        if state.step().unwrap() != StepStatus::Continue {
            break;
        }
    }
}

#[test]
fn sigma_schedule_is_exact() {
    let scene = plane_corner(1000, 0.01, 0.1, 5);
    let sigma0 = 0.8;
    let cfg = SolverConfig {
        sigma0: SigmaInit::Fixed(sigma0),
        max_iterations: 120,
        translation_tol: 1e-300,
        rotation_tol: 1e-300,
        ..SolverConfig::default()
    };
    let r = register(&scene.source, &scene.target, &RigidTransform::identity(), &cfg).unwrap();
    assert_eq!(r.trace.len(), 120);
    for (n, t) in r.trace.iter().enumerate() {
        let expected = (sigma0 * 0.97f64.powi(n as i32)).max(0.05 * sigma0);
        assert_eq!(t.sigma, expected, "iteration {n}");
    }
    assert_eq!(r.trace.last().unwrap().sigma, 0.05 * sigma0);
}

#[test]
fn auto_sigma_follows_the_schedule_from_the_first_set() {
    let scene = plane_corner(1000, 0.01, 0.1, 6);
    let cfg = SolverConfig {
        max_iterations: 30,
        ..SolverConfig::default()
    };
    let r = register(&scene.source, &scene.target, &RigidTransform::identity(), &cfg).unwrap();
    let s0 = r.trace[0].sigma;
    assert!(s0 >= 1e-3);
    for (n, t) in r.trace.iter().enumerate() {
        assert_eq!(t.sigma, (s0 * 0.97f64.powi(n as i32)).max(0.05 * s0));
    }
}

fn residual(a: &Vector3<f64>, b: &Vector3<f64>, t: &RigidTransform) -> Vector3<f64> {
    a - t.apply(b)
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    for _ in 0..100 {
        let xi = Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5));
        let t = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let pose = RigidTransform::from_axis_angle(&xi, t);
        let a = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let b = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let (v, jac) = cobigicp::solver::linearize(&a, &b, &pose);
        assert!((v - residual(&a, &b, &pose)).norm() < 1e-14);
        let mut numeric = Matrix3x6::zeros();
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = h;
            let plus = residual(&a, &b, &pose.retract(&TangentVector::from_vector(&d)));
            let minus = residual(&a, &b, &pose.retract(&TangentVector::from_vector(&-d)));
            numeric.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        let rel = (numeric - jac).norm() / jac.norm();
        assert!(rel < 1e-5, "relative error {rel}");
    }
}

#[test]
fn linearize_examples() {
    let (v, h) = cobigicp::solver::linearize(&Vector3::zeros(), &Vector3::zeros(), &RigidTransform::identity());
    assert_eq!(v, Vector3::zeros());
    assert_eq!(h.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::zeros());
    assert_eq!(h.fixed_view::<3, 3>(0, 3).into_owned(), -Matrix3::identity());
    let x = Vector3::x();
    let (v, h) = cobigicp::solver::linearize(&x, &x, &RigidTransform::identity());
    assert_eq!(v, Vector3::zeros());
    assert_eq!(h.fixed_view::<3, 3>(0, 0).into_owned(), hat(&x));
}

fn unit_stat(info: Matrix3<f64>) -> SurfaceStat {
    SurfaceStat {
        covariance: info.try_inverse().unwrap(),
        information: info,
        normal: Vector3::z(),
        neighbor_count: 20,
    }
}

#[test]
fn single_pair_normal_equations() {
    let half = unit_stat(Matrix3::identity() * 0.5);
    let target = PointCloud::with_stats(vec![Vector3::zeros()], vec![half.clone()]).unwrap();
    let source = PointCloud::with_stats(vec![Vector3::zeros()], vec![half]).unwrap();
    let set = CorrespondenceSet {
        pairs: vec![CorrespondencePair {
            target_index: 0,
            source_index: 0,
            forward_distance: 0.0,
            gate_distance: 0.0,
        }],
        rejected_count: 0,
        gate: 1.0,
    };
    // Unit weight at r = 0.
    let sigma = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let eq = accumulate_normal_equations(&set, &target, &source, &RigidTransform::identity(), sigma).unwrap();
    let mut expected = Matrix6::zeros();
    expected.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());
    assert!((eq.a - expected).norm() < 1e-15);
    assert_eq!(eq.b, Vector6::zeros());
    assert_eq!(eq.a.rank(1e-12), 3);

    let empty = CorrespondenceSet::default();
    assert_eq!(
        accumulate_normal_equations(&empty, &target, &source, &RigidTransform::identity(), sigma),
        Err(Error::NoCorrespondences)
    );
}

#[test]
fn normal_equations_are_order_independent() {
    let scene = plane_corner(800, 0.005, 0.1, 8);
    let pose = RigidTransform::from_axis_angle(&Vector3::new(0.01, 0.02, -0.01), Vector3::new(0.03, 0.0, 0.02));
    let cfg = SolverConfig::default();
    let state = RegistrationState::new(&scene.source, &scene.target, &pose, &cfg, Objective::COBIGICP).unwrap();
    let mut set = state.correspondences().unwrap();
    let sigma = 0.5;
    let eq = accumulate_normal_equations(&set, &scene.target, &scene.source, &pose, sigma).unwrap();

    // Independent per-pair products.
    let ta = scene.target.stats().unwrap();
    let sb = scene.source.stats().unwrap();
    let r = pose.rotation_matrix();
    let mut reference = NormalEquations::zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    set.pairs.shuffle(&mut rng);
    for p in &set.pairs {
        let a = scene.target.points()[p.target_index];
        let b = scene.source.points()[p.source_index];
        let omega = ta[p.target_index].information + r * sb[p.source_index].information * r.transpose();
        let moved = r * b + pose.translation;
        let v = a - moved;
        let mut h = Matrix3x6::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&moved.cross_matrix());
        h.fixed_view_mut::<3, 3>(0, 3).copy_from(&-Matrix3::identity());
        let r2 = v.dot(&(omega * v));
        let w = (-r2 / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        reference.add(
            &ResidualTerm {
                v,
                h,
                omega,
                r_squared: r2,
            },
            w,
        );
    }
    let scale = eq.a.norm().max(1.0);
    assert!((eq.a - reference.a).norm() / scale < 1e-10);
    assert!((eq.b - reference.b).norm() / scale < 1e-10);
    assert!((eq.a - eq.a.transpose()).norm() == 0.0);
    let min_eig = eq.a.symmetric_eigenvalues().min();
    assert!(min_eig >= -1e-9 * scale);

    let again = accumulate_normal_equations(&set, &scene.target, &scene.source, &pose, sigma).unwrap();
    let shuffled_scale = (again.a - eq.a).norm() / scale;
    assert!(shuffled_scale < 1e-10);
}

#[test]
fn correspondence_collapse_is_reported() {
    let scene = plane_corner(300, 0.0, 0.0, 10);
    let cfg = SolverConfig {
        gate: GateMode::Fixed(0.0),
        ..SolverConfig::default()
    };
    let err = register(&scene.source, &scene.target, &RigidTransform::identity(), &cfg).unwrap_err();
    assert_eq!(err, Error::CorrespondenceCollapse(3));
}

#[test]
fn missing_stats_and_empty_clouds_are_rejected() {
    let bare = PointCloud::new(vec![Vector3::zeros(); 10]).unwrap();
    let full = with_stats((0..30).map(|i| Vector3::new(i as f64, (i * i % 7) as f64, (i % 3) as f64)).collect());
    let cfg = SolverConfig::default();
    let id = RigidTransform::identity();
    assert!(matches!(register(&bare, &full, &id, &cfg), Err(Error::MissingStats(_))));
    assert!(matches!(register(&full, &bare, &id, &cfg), Err(Error::MissingStats(_))));
    let empty = PointCloud::new(vec![]).unwrap();
    assert_eq!(register(&empty, &full, &id, &cfg).unwrap_err(), Error::EmptyCloud);
}
