//! Canonical correlations survive any invertible change of coordinates within
//! each source.

use gjrdf::cvf::conjugate;
use gjrdf::linalg::{self, Matrix};
use gjrdf::model::cvf_covariance;
use gjrdf::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn random_d(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

/// Random invertible matrix, kept well conditioned by a dominant diagonal.
fn random_invertible(rng: &mut impl Rng, n: usize) -> Matrix {
    let mut t = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..n {
        t[(i, i)] += if rng.random_bool(0.5) { 2.5 } else { -2.5 };
    }
    t
}

fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = (a.nrows(), b.nrows());
    let mut t = Matrix::zeros(p + q, p + q);
    t.view_mut((0, 0), (p, p)).copy_from(a);
    t.view_mut((p, p), (q, q)).copy_from(b);
    t
}

fn correlations(q: Matrix, n: usize) -> (CanonicalForm, Matrix) {
    let src = JointGaussianSource::new(q.clone(), n, n, &tol()).unwrap();
    (to_cvf(&src, 1e-9, 1e-9).unwrap(), q)
}

#[test]
fn conjugation_keeps_correlations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=4);
        let d = random_d(&mut rng, n);
        let t = block_diag(&random_invertible(&mut rng, n), &random_invertible(&mut rng, n));
        let q = linalg::symmetrize(&(&t * cvf_covariance(&d) * t.transpose()));
        let (cf, _) = correlations(q, n);
        for (g, w) in cf.d.iter().zip(&d) {
            worst = worst.max((g - w).abs());
        }
    }
    assert!(worst <= 1e-7, "worst deviation {worst:e}");
}

#[test]
fn transforms_bring_q_to_canonical_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(1..=4);
        let d = random_d(&mut rng, n);
        let t = block_diag(&random_invertible(&mut rng, n), &random_invertible(&mut rng, n));
        let q = linalg::symmetrize(&(&t * cvf_covariance(&d) * t.transpose()));
        let (cf, q) = correlations(q, n);
        let scale = 1.0 + linalg::max_abs(&q);
        let dev = linalg::max_abs(&(conjugate(&cf, &q) - cf.q_cvf()));
        assert!(dev <= 1e-8 * scale, "deviation {dev:e} at d = {d:?}");
    }
}

#[test]
fn spectrum_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.random_range(1..=4);
        let d = random_d(&mut rng, n);
        let t = block_diag(&random_invertible(&mut rng, n), &random_invertible(&mut rng, n));
        let q = linalg::symmetrize(&(&t * cvf_covariance(&d) * t.transpose()));
        let (first, _) = correlations(q, n);
        let (second, _) = correlations(first.q_cvf(), n);
        for (a, b) in first.d.iter().zip(&second.d) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert_eq!(first.partition, second.partition);
    }
}

#[test]
fn rate_is_coordinate_free() {
    // The solver rate on the recovered correlations matches the oracle run on
    // the canonical covariance the transforms produce.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let n = rng.random_range(1..=3);
        let d = random_d(&mut rng, n);
        let t = block_diag(&random_invertible(&mut rng, n), &random_invertible(&mut rng, n));
        let q = linalg::symmetrize(&(&t * cvf_covariance(&d) * t.transpose()));
        let (cf, _) = correlations(q, n);
        let delta = DistortionPair::new(rng.random_range(0.1..n as f64), rng.random_range(0.1..n as f64)).unwrap();
        let solver = joint_rdf(&correlated_block(&cf), delta, &tol()).unwrap();
        let oracle = maxdet_solve_cvf(&cf, delta, &OracleOptions::default(), &tol()).unwrap();
        assert!((solver.rate_nats - oracle.rate_nats).abs() <= 1e-4);
    }
}
