//! Domain types: the joint source, its canonical form, distortion budgets,
//! per-component allocations and the assembled error covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::tolerance::Tolerances;

/// Zero-mean jointly Gaussian pair `(X1, X2)` with covariance
/// `[[Q_X1, Q_X1X2], [Q_X1X2^T, Q_X2]]`.
#[derive(Clone, Debug)]
pub struct JointGaussianSource {
    q: Matrix,
    p1: usize,
    p2: usize,
}

impl JointGaussianSource {
    /// Validates `q` and wraps it. Checks, in order: dimensions, symmetry,
    /// PSD-ness of the whole matrix and strict positive definiteness of both
    /// diagonal blocks.
    pub fn new(q: Matrix, p1: usize, p2: usize, tol: &Tolerances) -> Result<Self> {
        validate_source(q, p1, p2, tol)
    }

    /// Source already in canonical variable form, `[[I, D], [D, I]]`.
    pub fn from_correlations(d: &[f64], tol: &Tolerances) -> Result<Self> {
        check_correlations(d)?;
        Self::new(cvf_covariance(d), d.len(), d.len(), tol)
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn q_x1(&self) -> Matrix {
        self.q.view((0, 0), (self.p1, self.p1)).into_owned()
    }

    pub fn q_x2(&self) -> Matrix {
        self.q.view((self.p1, self.p1), (self.p2, self.p2)).into_owned()
    }

    pub fn q_x1x2(&self) -> Matrix {
        self.q.view((0, self.p1), (self.p1, self.p2)).into_owned()
    }
}

pub fn validate_source(q: Matrix, p1: usize, p2: usize, tol: &Tolerances) -> Result<JointGaussianSource> {
    if p1 == 0 || p2 == 0 {
        return Err(Error::DimensionMismatch(format!(
            "block dimensions must be positive, got p1={p1}, p2={p2}"
        )));
    }
    if q.nrows() != p1 + p2 || q.ncols() != p1 + p2 {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{} but p1+p2 = {}",
            q.nrows(),
            q.ncols(),
            p1 + p2
        )));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    if !linalg::is_symmetric(&q, tol) {
        return Err(Error::NotSymmetric {
            asymmetry: linalg::max_asymmetry(&q),
        });
    }
    let q = linalg::symmetrize(&q);
    let eig = linalg::sym_eig(&q)?;
    if eig.min() < -tol.psd_rel * eig.max().abs() {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
        });
    }
    for (block, (start, size)) in [(1, (0, p1)), (2, (p1, p2))] {
        let sub = q.view((start, start), (size, size)).into_owned();
        let e = linalg::sym_eig(&sub)?;
        if e.min() <= tol.psd_rel * e.max().abs() {
            return Err(Error::DiagonalBlockSingular {
                block,
                min_eigenvalue: e.min(),
            });
        }
    }
    Ok(JointGaussianSource { q, p1, p2 })
}

/// Rejects correlation sequences outside `[0, 1)`.
pub fn check_correlations(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(Error::BadCorrelations("empty sequence".into()));
    }
    for (i, &x) in d.iter().enumerate() {
        if !x.is_finite() || !(0.0..1.0).contains(&x) {
            return Err(Error::BadCorrelations(format!(
                "d[{i}] = {x} is outside [0, 1)"
            )));
        }
    }
    Ok(())
}

/// `[[I_n, D], [D, I_n]]` with `D = diag(d)`.
pub fn cvf_covariance(d: &[f64]) -> Matrix {
    let n = d.len();
    let mut q = Matrix::identity(2 * n, 2 * n);
    for (i, &di) in d.iter().enumerate() {
        q[(i, n + i)] = di;
        q[(n + i, i)] = di;
    }
    q
}

/// Component counts of the canonical variable form: `p_i1` identical,
/// `p_i2` correlated and `p_i3` independent components of source `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub p11: usize,
    pub p12: usize,
    pub p13: usize,
    pub p21: usize,
    pub p22: usize,
    pub p23: usize,
}

impl Partition {
    pub fn p1(&self) -> usize {
        self.p11 + self.p12 + self.p13
    }

    pub fn p2(&self) -> usize {
        self.p21 + self.p22 + self.p23
    }
}

/// Output of the canonical variable transformation.
///
/// `d` holds all `min(p1, p2)` singular values of the whitened
/// cross-covariance in descending order; `partition` says which of them are
/// identical (≈1), correlated, or independent (≈0).
#[derive(Clone, Debug)]
pub struct CanonicalForm {
    pub d: Vec<f64>,
    pub s1: Matrix,
    pub s2: Matrix,
    pub partition: Partition,
}

impl CanonicalForm {
    /// The `p1 x p2` cross block `D_3` of the canonical covariance.
    pub fn d3(&self) -> Matrix {
        let (p1, p2) = (self.partition.p1(), self.partition.p2());
        let mut d3 = Matrix::zeros(p1, p2);
        for (i, &di) in self.d.iter().enumerate() {
            d3[(i, i)] = di;
        }
        d3
    }

    /// `[[I, D_3], [D_3^T, I]]`.
    pub fn q_cvf(&self) -> Matrix {
        let (p1, p2) = (self.partition.p1(), self.partition.p2());
        let mut q = Matrix::identity(p1 + p2, p1 + p2);
        let d3 = self.d3();
        q.view_mut((0, p1), (p1, p2)).copy_from(&d3);
        q.view_mut((p1, 0), (p2, p1)).copy_from(&d3.transpose());
        q
    }

    /// True when both transforms are orthogonal within `tol`, i.e. trace
    /// distortions carry over unchanged to the canonical coordinates.
    pub fn transforms_orthogonal(&self, tol: f64) -> bool {
        [&self.s1, &self.s2].into_iter().all(|s| {
            let k = s.nrows();
            linalg::max_abs(&(s * s.transpose() - Matrix::identity(k, k))) <= tol
        })
    }
}

/// Distortion budgets `(Δ1, Δ2)`: total square error allowed per source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionPair {
    pub delta1: f64,
    pub delta2: f64,
}

impl DistortionPair {
    pub fn new(delta1: f64, delta2: f64) -> Result<Self> {
        for (name, v) in [("delta1", delta1), ("delta2", delta2)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::BadDelta(format!("{name} = {v} must be positive and finite")));
            }
        }
        Ok(Self { delta1, delta2 })
    }

    pub fn swapped(self) -> Self {
        Self {
            delta1: self.delta2,
            delta2: self.delta1,
        }
    }
}

/// Which branch of the joint RDF produced an allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    /// Equal split, no reconstruction cross-correlation.
    A,
    /// The `kappa` most correlated components carry cross-correlation.
    B,
    /// Every component carries cross-correlation; `ell` are fully saturated.
    C,
    /// Only the X1 budget binds; the rate equals `R_X1(Δ1)`.
    D,
    /// Only the X2 budget binds; the rate equals `R_X2(Δ2)`.
    E,
}

impl std::fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CaseLabel::A => "A",
            CaseLabel::B => "B",
            CaseLabel::C => "C",
            CaseLabel::D => "D",
            CaseLabel::E => "E",
        };
        f.write_str(s)
    }
}

/// Error variances and cross-correlation of one canonical pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentAllocation {
    pub delta1: f64,
    pub delta2: f64,
    pub dhat: f64,
}

impl ComponentAllocation {
    pub fn saturated(d: f64) -> Self {
        Self {
            delta1: 1.0,
            delta2: 1.0,
            dhat: d,
        }
    }
}

/// Optimal diagonal test channel for a source in canonical variable form.
#[derive(Clone, Debug, Serialize)]
pub struct RdfAllocation {
    /// Canonical correlations the allocation was computed for.
    pub correlations: Vec<f64>,
    pub components: Vec<ComponentAllocation>,
    /// Number of components with nonzero `dhat`.
    pub kappa: usize,
    /// Number of components pinned at `(1, 1, d_i)`.
    pub ell: usize,
    pub case: CaseLabel,
    pub rate_nats: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton: Option<crate::solver::NewtonState>,
}

impl RdfAllocation {
    pub fn total_delta1(&self) -> f64 {
        self.components.iter().map(|c| c.delta1).sum()
    }

    pub fn total_delta2(&self) -> f64 {
        self.components.iter().map(|c| c.delta2).sum()
    }

    pub fn rate_bits(&self) -> f64 {
        self.rate_nats / std::f64::consts::LN_2
    }
}

/// Error covariance `Σ_(E1,E2)` of a test channel.
#[derive(Clone, Debug)]
pub struct ErrorCovariance {
    pub sigma: Matrix,
    pub p1: usize,
}

impl ErrorCovariance {
    pub fn p2(&self) -> usize {
        self.sigma.nrows() - self.p1
    }

    pub fn sigma_e1(&self) -> Matrix {
        self.sigma.view((0, 0), (self.p1, self.p1)).into_owned()
    }

    pub fn sigma_e2(&self) -> Matrix {
        let p2 = self.p2();
        self.sigma.view((self.p1, self.p1), (p2, p2)).into_owned()
    }

    pub fn sigma_e1e2(&self) -> Matrix {
        self.sigma.view((0, self.p1), (self.p1, self.p2())).into_owned()
    }
}

/// Builds the block-diagonal-structured error covariance of an allocation and
/// checks `0 <= Σ <= Q_cvf`.
pub fn assemble_error_covariance(alloc: &RdfAllocation, tol: &Tolerances) -> Result<ErrorCovariance> {
    let n = alloc.components.len();
    if alloc.correlations.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} components but {} correlations",
            n,
            alloc.correlations.len()
        )));
    }
    let mut sigma = Matrix::zeros(2 * n, 2 * n);
    for (i, c) in alloc.components.iter().enumerate() {
        sigma[(i, i)] = c.delta1;
        sigma[(n + i, n + i)] = c.delta2;
        sigma[(i, n + i)] = c.dhat;
        sigma[(n + i, i)] = c.dhat;
    }
    let q = cvf_covariance(&alloc.correlations);
    let slack = tol.feasibility;
    let lower = linalg::sym_eig(&sigma)?.min();
    let upper = linalg::sym_eig(&(&q - &sigma))?.min();
    if lower < -slack {
        return Err(Error::InfeasibleAllocation(format!(
            "Σ has eigenvalue {lower:e} < 0"
        )));
    }
    if upper < -slack {
        return Err(Error::InfeasibleAllocation(format!(
            "Q - Σ has eigenvalue {upper:e} < 0"
        )));
    }
    Ok(ErrorCovariance { sigma, p1: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn identity_source_is_valid() {
        let src = JointGaussianSource::new(Matrix::identity(4, 4), 2, 2, &tol()).unwrap();
        assert_eq!((src.p1(), src.p2()), (2, 2));
    }

    #[test]
    fn singular_block_is_rejected() {
        let mut q = Matrix::identity(4, 4);
        q[(1, 1)] = 0.0;
        let err = JointGaussianSource::new(q, 2, 2, &tol()).unwrap_err();
        assert!(matches!(err, Error::DiagonalBlockSingular { block: 1, .. }));
    }

    #[test]
    fn example_cvf_source_is_valid() {
        let src = JointGaussianSource::from_correlations(&[0.588, 0.271], &tol()).unwrap();
        assert_eq!(src.q_x1x2()[(0, 0)], 0.588);
        assert_eq!(src.q_x1x2()[(1, 1)], 0.271);
    }

    #[test]
    fn asymmetric_and_indefinite_are_rejected() {
        let mut q = Matrix::identity(2, 2);
        q[(0, 1)] = 0.5;
        assert!(matches!(
            JointGaussianSource::new(q, 1, 1, &tol()),
            Err(Error::NotSymmetric { .. })
        ));
        let q = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            JointGaussianSource::new(q, 1, 1, &tol()),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            JointGaussianSource::new(Matrix::identity(3, 3), 2, 2, &tol()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn distortion_pair_must_be_positive() {
        assert!(DistortionPair::new(0.0, 1.0).is_err());
        assert!(DistortionPair::new(1.0, f64::NAN).is_err());
        assert!(DistortionPair::new(0.3, 0.2).is_ok());
    }

    fn allocation(d: &[f64], comps: Vec<ComponentAllocation>) -> RdfAllocation {
        RdfAllocation {
            correlations: d.to_vec(),
            components: comps,
            kappa: 0,
            ell: 0,
            case: CaseLabel::A,
            rate_nats: 0.0,
            newton: None,
        }
    }

    #[test]
    fn assemble_equal_split() {
        let comp = |a, b| ComponentAllocation {
            delta1: a,
            delta2: b,
            dhat: 0.0,
        };
        let alloc = allocation(&[0.588, 0.271], vec![comp(0.15, 0.1), comp(0.15, 0.1)]);
        let sigma = assemble_error_covariance(&alloc, &tol()).unwrap();
        let expected = Matrix::from_diagonal(&nalgebra::dvector![0.15, 0.15, 0.1, 0.1]);
        assert_eq!(sigma.sigma, expected);
        assert_eq!(sigma.sigma_e1e2(), sigma.sigma_e1e2().transpose());
    }

    #[test]
    fn assemble_saturated_equals_q() {
        let d = [0.588, 0.271];
        let alloc = allocation(&d, d.iter().map(|&x| ComponentAllocation::saturated(x)).collect());
        let sigma = assemble_error_covariance(&alloc, &tol()).unwrap();
        assert_eq!(sigma.sigma, cvf_covariance(&d));
    }

    #[test]
    fn assemble_printed_case_two_blocks() {
        let alloc = allocation(
            &[0.588, 0.271],
            vec![
                ComponentAllocation {
                    delta1: 0.5692,
                    delta2: 0.5381,
                    dhat: 0.1414,
                },
                ComponentAllocation {
                    delta1: 0.7308,
                    delta2: 0.6619,
                    dhat: 0.0,
                },
            ],
        );
        // Printed to 4 decimals, so Q - Σ is only PSD up to about 1e-3.
        let loose = Tolerances {
            feasibility: 1e-3,
            ..tol()
        };
        let sigma = assemble_error_covariance(&alloc, &loose).unwrap();
        assert_relative_eq!(sigma.sigma[(0, 2)], 0.1414);
        assert_relative_eq!(sigma.sigma_e1()[(1, 1)], 0.7308);
        assert_relative_eq!(sigma.sigma_e2()[(0, 0)], 0.5381);
    }

    #[test]
    fn assemble_rejects_excess_correlation() {
        // Δ2 = 1 leaves no room for d - dhat != 0.
        let alloc = allocation(
            &[0.5],
            vec![ComponentAllocation {
                delta1: 0.5,
                delta2: 1.0,
                dhat: 0.1,
            }],
        );
        assert!(matches!(
            assemble_error_covariance(&alloc, &tol()),
            Err(Error::InfeasibleAllocation(_))
        ));
    }
}
