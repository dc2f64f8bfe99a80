//! Canonical variable form of a joint Gaussian covariance.
//!
//! Whitening each source and taking the SVD of the whitened cross-covariance
//! yields transforms `S1`, `S2` with `S_i Q_Xi S_i^T = I` and
//! `S1 Q_X1X2 S2^T = D_3` diagonal. The diagonal of `D_3` holds the canonical
//! correlations.

use crate::error::Result;
use crate::linalg::{self, Matrix};
use crate::model::{CanonicalForm, JointGaussianSource, Partition};

/// Transforms `src` into canonical variable form.
///
/// Correlations `>= 1 - eps_one` are classified as identical components and
/// correlations `<= eps_zero` as independent ones.
pub fn to_cvf(src: &JointGaussianSource, eps_one: f64, eps_zero: f64) -> Result<CanonicalForm> {
    let (p1, p2) = (src.p1(), src.p2());
    let e1 = linalg::sym_eig(&src.q_x1())?;
    let e2 = linalg::sym_eig(&src.q_x2())?;

    // D_i^{-1/2} U_i^T
    let whiten = |e: &linalg::SymEigen| {
        let mut w = e.vectors.transpose();
        for (i, &lambda) in e.values.iter().enumerate() {
            w.row_mut(i).scale_mut(1.0 / lambda.sqrt());
        }
        w
    };
    let w1 = whiten(&e1);
    let w2 = whiten(&e2);
    let cross = &w1 * src.q_x1x2() * w2.transpose();
    let dec = linalg::svd(&cross)?;

    let s1 = dec.u.transpose() * w1;
    let s2 = dec.v.transpose() * w2;
    // Roundoff can push a singular value of the whitened block past 1.
    let d: Vec<f64> = dec.s.iter().map(|&x| x.clamp(0.0, 1.0)).collect();

    let identical = d.iter().filter(|&&x| x >= 1.0 - eps_one).count();
    let correlated = d
        .iter()
        .filter(|&&x| x < 1.0 - eps_one && x > eps_zero)
        .count();
    let partition = Partition {
        p11: identical,
        p12: correlated,
        p13: p1 - identical - correlated,
        p21: identical,
        p22: correlated,
        p23: p2 - identical - correlated,
    };
    Ok(CanonicalForm {
        d,
        s1,
        s2,
        partition,
    })
}

/// Canonical correlations strictly inside `(0, 1)`: the block the joint RDF
/// solver works on.
pub fn correlated_block(cf: &CanonicalForm) -> Vec<f64> {
    let start = cf.partition.p11;
    cf.d[start..start + cf.partition.p12].to_vec()
}

/// `blockdiag(S1, S2) Q blockdiag(S1, S2)^T`, which equals `Q_cvf` for a
/// correct transform.
pub fn conjugate(cf: &CanonicalForm, q: &Matrix) -> Matrix {
    let (p1, p2) = (cf.partition.p1(), cf.partition.p2());
    let mut s = Matrix::zeros(p1 + p2, p1 + p2);
    s.view_mut((0, 0), (p1, p1)).copy_from(&cf.s1);
    s.view_mut((p1, p1), (p2, p2)).copy_from(&cf.s2);
    &s * q * s.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cvf_covariance;
    use crate::tolerance::Tolerances;
    use approx::assert_relative_eq;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn independent_sources() {
        let src = JointGaussianSource::new(Matrix::identity(5, 5), 3, 2, &tol()).unwrap();
        let cf = to_cvf(&src, 1e-9, 1e-9).unwrap();
        assert_eq!(cf.d, vec![0.0, 0.0]);
        assert_eq!(cf.partition.p13, 3);
        assert_eq!(cf.partition.p23, 2);
        assert!(correlated_block(&cf).is_empty());
    }

    #[test]
    fn cvf_input_passes_through() {
        let src = JointGaussianSource::from_correlations(&[0.588, 0.271], &tol()).unwrap();
        let cf = to_cvf(&src, 1e-9, 1e-9).unwrap();
        assert_relative_eq!(cf.d[0], 0.588, epsilon = 1e-14);
        assert_relative_eq!(cf.d[1], 0.271, epsilon = 1e-14);
        assert!(cf.transforms_orthogonal(1e-12));
        assert_eq!(correlated_block(&cf).len(), 2);
    }

    #[test]
    fn unsorted_cvf_input_is_sorted() {
        let src = JointGaussianSource::from_correlations(&[0.2, 0.7, 0.4], &tol()).unwrap();
        let cf = to_cvf(&src, 1e-9, 1e-9).unwrap();
        let d = correlated_block(&cf);
        assert_relative_eq!(d[0], 0.7, epsilon = 1e-14);
        assert_relative_eq!(d[2], 0.2, epsilon = 1e-14);
        assert!(cf.transforms_orthogonal(1e-12));
    }

    #[test]
    fn strips_identical_and_independent_parts() {
        // D_3 = blockdiag(I_1, 0.5, 0_1x1)
        let mut q = cvf_covariance(&[1.0, 0.5, 0.0]);
        q[(0, 3)] = 1.0;
        q[(3, 0)] = 1.0;
        let src = JointGaussianSource::new(q, 3, 3, &tol()).unwrap();
        let cf = to_cvf(&src, 1e-9, 1e-9).unwrap();
        assert_eq!(
            cf.partition,
            Partition {
                p11: 1,
                p12: 1,
                p13: 1,
                p21: 1,
                p22: 1,
                p23: 1
            }
        );
        let block = correlated_block(&cf);
        assert_eq!(block.len(), 1);
        assert_relative_eq!(block[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn transform_whitens_general_source() {
        let q = Matrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.3, 0.5, 0.1, //
                0.3, 1.0, 0.2, 0.4, //
                0.5, 0.2, 1.5, -0.2, //
                0.1, 0.4, -0.2, 0.8,
            ],
        );
        let src = JointGaussianSource::new(q.clone(), 2, 2, &tol()).unwrap();
        let cf = to_cvf(&src, 1e-9, 1e-9).unwrap();
        let conj = conjugate(&cf, &q);
        assert!(linalg::max_abs(&(conj - cf.q_cvf())) < 1e-8);
        assert!(!cf.transforms_orthogonal(1e-6));
    }

    #[test]
    fn rectangular_cross_block() {
        let mut q = Matrix::identity(5, 5);
        q[(0, 3)] = 0.3;
        q[(3, 0)] = 0.3;
        q[(1, 4)] = 0.6;
        q[(4, 1)] = 0.6;
        let src = JointGaussianSource::new(q.clone(), 3, 2, &tol()).unwrap();
        let cf = to_cvf(&src, 1e-9, 1e-9).unwrap();
        assert_relative_eq!(cf.d[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(cf.d[1], 0.3, epsilon = 1e-12);
        assert_eq!(cf.partition.p13, 1);
        assert_eq!(cf.partition.p23, 0);
        assert!(linalg::max_abs(&(conjugate(&cf, &q) - cf.q_cvf())) < 1e-10);
    }
}
