//! Residual linearization through the retraction and the closed-form
//! weighted least-squares step.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::se3::{hat, RigidTransform, TangentVector};

/// `(r², e)` with `e = a − T b` and `r² = eᵀ Ω e`.
pub fn mahalanobis_residual(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    t: &RigidTransform,
    omega: &Matrix3<f64>,
) -> (f64, Vector3<f64>) {
    let e = a - t.apply(b);
    let r2 = e.dot(&(omega * e)).max(0.0);
    (r2, e)
}

/// First-order model of `a − T' b` for `T' = retract(T, δx)`:
/// `v + H δx` with `v = a − R b − t` and `H = [ (R b + t)^  −I ]`.
pub fn linearize(a: &Vector3<f64>, b: &Vector3<f64>, t: &RigidTransform) -> (Vector3<f64>, Matrix3x6<f64>) {
    let moved = t.apply(b);
    let v = a - moved;
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&moved));
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
    (v, h)
}

/// One weighted residual term of the quadratic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTerm {
    pub v: Vector3<f64>,
    pub h: Matrix3x6<f64>,
    pub omega: Matrix3<f64>,
    pub r_squared: f64,
}

impl ResidualTerm {
    /// Weighted quadratic `w (v + Hδx)ᵀ Ω (v + Hδx)`.
    pub fn model_cost(&self, weight: f64, dx: &Vector6<f64>) -> f64 {
        let e = self.v + self.h * dx;
        weight * e.dot(&(self.omega * e))
    }
}

/// `A = Σ w Hᵀ Ω H`, `b = Σ w Hᵀ Ω v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations {
    pub a: Matrix6<f64>,
    pub b: Vector6<f64>,
}

impl NormalEquations {
    pub fn zeros() -> Self {
        Self {
            a: Matrix6::zeros(),
            b: Vector6::zeros(),
        }
    }

    pub fn add(&mut self, term: &ResidualTerm, weight: f64) {
        let ht_omega = term.h.transpose() * term.omega * weight;
        self.a += ht_omega * term.h;
        self.b += ht_omega * term.v;
    }

    /// Serial accumulation in slice order, so results are reproducible.
    pub fn accumulate(terms: &[ResidualTerm], weights: &[f64]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::NoCorrespondences);
        }
        if terms.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} terms but {} weights",
                terms.len(),
                weights.len()
            )));
        }
        let mut eq = Self::zeros();
        for (t, &w) in terms.iter().zip(weights) {
            eq.add(t, w);
        }
        eq.a = (eq.a + eq.a.transpose()) * 0.5;
        Ok(eq)
    }
}

/// Singular-value summary of a solved system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Number of singular values kept by the pseudoinverse.
    pub rank: usize,
    pub max_singular_value: f64,
    pub min_singular_value: f64,
}

/// `δx = −A† b`.
pub fn solve_step(a: &Matrix6<f64>, b: &Vector6<f64>, pinv_tolerance: f64) -> TangentVector {
    solve_step_with_diagnostics(a, b, pinv_tolerance).0
}

/// As [`solve_step`]; singular values below `pinv_tolerance · σ_max` are
/// treated as zero. An all-zero `A` yields the zero step with rank 0.
///
/// `A` is symmetrized and factored with a symmetric eigendecomposition, whose
/// absolute eigenvalues are its singular values.
pub fn solve_step_with_diagnostics(
    a: &Matrix6<f64>,
    b: &Vector6<f64>,
    pinv_tolerance: f64,
) -> (TangentVector, StepDiagnostics) {
    let sym = (a + a.transpose()) * 0.5;
    if !sym.iter().all(|v| v.is_finite()) || !b.iter().all(|v| v.is_finite()) {
        let nan = f64::NAN;
        let diag = StepDiagnostics {
            rank: 0,
            max_singular_value: nan,
            min_singular_value: nan,
        };
        return (TangentVector::from_vector(&Vector6::repeat(nan)), diag);
    }
    let eig = sym.symmetric_eigen();
    let s = eig.eigenvalues.abs();
    let s_max = s.max();
    let mut diag = StepDiagnostics {
        rank: 0,
        max_singular_value: s_max,
        min_singular_value: s.min(),
    };
    if !(s_max > 0.0) {
        return (TangentVector::zero(), diag);
    }
    let cutoff = pinv_tolerance * s_max;
    let q = &eig.eigenvectors;
    let mut dx = Vector6::zeros();
    for i in 0..6 {
        if s[i] > cutoff {
            let qi = q.column(i);
            dx -= qi * (qi.dot(b) / eig.eigenvalues[i]);
            diag.rank += 1;
        }
    }
    (TangentVector::from_vector(&dx), diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    #[test]
    fn residual_examples() {
        let t = RigidTransform::from_axis_angle(&Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 0.0, 0.0));
        let b = Vector3::new(0.3, -0.2, 0.5);
        let (r2, e) = mahalanobis_residual(&t.apply(&b), &b, &t, &Matrix3::identity());
        assert_eq!(r2, 0.0);
        assert_eq!(e, Vector3::zeros());

        let a = Vector3::new(1.0, 2.0, -1.0);
        let (r2, e) = mahalanobis_residual(&a, &b, &t, &Matrix3::identity());
        assert_relative_eq!(r2, e.norm_squared(), epsilon = 1e-15);

        let omega = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let b = Vector3::new(0.5, 0.5, 0.5);
        let (r2, _) = mahalanobis_residual(&(b + Vector3::repeat(1.0)), &b, &RigidTransform::identity(), &omega);
        assert_relative_eq!(r2, 6.0, epsilon = 1e-15);
    }

    #[test]
    fn linearize_examples() {
        let (v, h) = linearize(&Vector3::zeros(), &Vector3::zeros(), &RigidTransform::identity());
        assert_eq!(v, Vector3::zeros());
        assert_eq!(h.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::zeros());
        assert_eq!(h.fixed_view::<3, 3>(0, 3).into_owned(), -Matrix3::identity());

        let x = Vector3::x();
        let (v, h) = linearize(&x, &x, &RigidTransform::identity());
        assert_eq!(v, Vector3::zeros());
        assert_eq!(h.fixed_view::<3, 3>(0, 0).into_owned(), hat(&x));
    }

    #[test]
    fn linearize_matches_forward_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let t = RigidTransform::from_axis_angle(&random_vec(&mut rng, 2.0), random_vec(&mut rng, 3.0));
            let a = random_vec(&mut rng, 2.0);
            let b = random_vec(&mut rng, 2.0);
            let dir = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let h_step = 1e-6;
            let dx = TangentVector::from_vector(&(dir * h_step));
            let (v, h) = linearize(&a, &b, &t);
            let moved = t.retract(&dx);
            let fd = ((a - moved.apply(&b)) - v) / h_step;
            let model = h * dir;
            assert!((fd - model).norm() < 1e-5 * (1.0 + model.norm()), "{} vs {}", fd, model);
        }
    }

    #[test]
    fn step_examples() {
        let v = Vector6::new(1.0, -2.0, 3.0, 0.5, 0.0, -4.0);
        let dx = solve_step(&Matrix6::identity(), &v, 1e-8);
        assert_relative_eq!(dx.to_vector(), -v, epsilon = 1e-12);

        let a = Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0));
        let dx = solve_step(&a, &Vector6::repeat(1.0), 1e-8);
        assert_relative_eq!(dx.to_vector(), Vector6::new(-1.0, -1.0, -1.0, 0.0, 0.0, 0.0), epsilon = 1e-12);

        let (dx, diag) = solve_step_with_diagnostics(&Matrix6::zeros(), &Vector6::repeat(1.0), 1e-8);
        assert_eq!(dx, TangentVector::zero());
        assert_eq!(diag.rank, 0);
    }

    #[test]
    fn full_rank_step_solves_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let m = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let a = m * m.transpose() + Matrix6::identity() * 0.1;
            let b = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let dx = solve_step(&a, &b, 1e-12).to_vector();
            assert!((a * dx + b).norm() < 1e-9);
        }
    }

    #[test]
    fn empty_accumulation_is_error() {
        assert_eq!(NormalEquations::accumulate(&[], &[]), Err(Error::NoCorrespondences));
    }

    #[test]
    fn single_pair_system() {
        let (v, h) = linearize(&Vector3::zeros(), &Vector3::zeros(), &RigidTransform::identity());
        let term = ResidualTerm { v, h, omega: Matrix3::identity(), r_squared: 0.0 };
        let eq = NormalEquations::accumulate(&[term], &[1.0]).unwrap();
        let mut expected = Matrix6::zeros();
        expected.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());
        assert_eq!(eq.a, expected);
        assert_eq!(eq.a.rank(1e-12), 3);
    }

    #[test]
    fn rank_deficient_step_with_close_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let b = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let q = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0)).qr().q();
            let mut a = Matrix6::zeros();
            let mut expected = Vector6::zeros();
            for k in 0..3 {
                let l: f64 = rng.random_range(0.5..5.0);
                let qk = q.column(k).into_owned();
                a += qk * qk.transpose() * l;
                expected -= qk * (qk.dot(&b) / l);
            }
            let (dx, diag) = solve_step_with_diagnostics(&a, &b, 1e-8);
            assert_eq!(diag.rank, 3);
            assert!((dx.to_vector() - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn non_finite_system_gives_non_finite_step() {
        let mut a = Matrix6::identity();
        a[(0, 0)] = f64::NAN;
        assert!(!solve_step(&a, &Vector6::repeat(1.0), 1e-8).is_finite());
        assert_eq!(solve_step(&Matrix6::zeros(), &Vector6::repeat(1.0), 1e-8), TangentVector::zero());
    }
}
