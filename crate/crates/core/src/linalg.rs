//! Dense linear-algebra kernels: Jacobi eigendecomposition, one-sided Jacobi
//! SVD, PSD tests and the pseudoinverse-based block PSD test.
//!
//! Both decompositions are cyclic Jacobi methods. They are deterministic, so
//! every result downstream is reproducible bit for bit on a given platform.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

pub type Matrix = DMatrix<f64>;

/// Off-diagonal mass below this fraction of the Frobenius norm ends a sweep loop.
const JACOBI_EPS: f64 = 1e-15;

/// Full singular value decomposition `A = U diag(s) V^T`.
///
/// `u` is `m x m`, `v` is `n x n` and `s` holds the `min(m, n)` singular
/// values in nonincreasing order.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let mut sigma = Matrix::zeros(m, n);
        for (i, &s) in self.s.iter().enumerate() {
            sigma[(i, i)] = s;
        }
        &self.u * sigma * self.v.transpose()
    }
}

/// Eigenpairs of a symmetric matrix, values in descending order.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &value) in self.values.iter().enumerate() {
            let fj = f(value);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.map(|x| x)
    }
}

fn ensure_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn sweep_cap(n: usize) -> usize {
    (10 * n * n).max(10)
}

pub fn max_asymmetry(a: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub fn is_symmetric(a: &Matrix, tol: &Tolerances) -> bool {
    a.is_square() && max_asymmetry(a) <= tol.symmetry_rel * (1.0 + max_abs(a))
}

/// Symmetric eigendecomposition by the cyclic Jacobi method.
///
/// The input is symmetrized before iterating; callers that care about the
/// asymmetry check it with [`is_symmetric`] first.
pub fn sym_eig(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "sym_eig needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "sym_eig input")?;
    let n = a.nrows();
    let mut w = symmetrize(a);
    let mut v = Matrix::identity(n, n);
    let frob = w.norm();
    let cap = sweep_cap(n);
    let mut sweep = 0;
    loop {
        if sweep == cap {
            return Err(Error::NoConvergence {
                routine: "sym_eig",
                iterations: cap,
            });
        }
        sweep += 1;
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += w[(p, q)] * w[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_EPS * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    normalize_signs(&mut vectors, None);
    Ok(SymEigen { values, vectors })
}

/// Flip columns so that the first nonzero entry of each is positive. When
/// `partner` is given, its matching columns are flipped alongside.
fn normalize_signs(u: &mut Matrix, mut partner: Option<&mut Matrix>) {
    for j in 0..u.ncols() {
        let lead = u.column(j).iter().copied().find(|x| x.abs() > 1e-12);
        if matches!(lead, Some(x) if x < 0.0) {
            u.column_mut(j).neg_mut();
            if let Some(p) = partner.as_deref_mut() {
                if j < p.ncols() {
                    p.column_mut(j).neg_mut();
                }
            }
        }
    }
}

/// Completes the leading `filled` orthonormal columns of `u` to an orthonormal
/// basis. Each new column is the standard basis vector with the largest
/// residual after two rounds of Gram-Schmidt.
fn complete_basis(u: &mut Matrix, filled: usize) {
    let m = u.nrows();
    for next in filled..m {
        let mut best: Option<(f64, nalgebra::DVector<f64>)> = None;
        for k in 0..m {
            let mut cand = nalgebra::DVector::<f64>::zeros(m);
            cand[k] = 1.0;
            for _ in 0..2 {
                for j in 0..next {
                    let proj = u.column(j).dot(&cand);
                    cand -= u.column(j) * proj;
                }
            }
            let norm = cand.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("m > 0");
        u.set_column(next, &(cand / norm));
    }
}

/// Full SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Singular vectors are sign-normalized so the first nonzero entry of each
/// left singular vector is positive.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    ensure_finite(a, "svd input")?;
    if a.nrows() < a.ncols() {
        let t = svd_tall(&a.transpose())?;
        let mut out = SvdResult {
            u: t.v,
            s: t.s,
            v: t.u,
        };
        let k = out.s.len();
        // Re-apply the convention to the new left factor.
        for j in 0..out.u.ncols() {
            let lead = out.u.column(j).iter().copied().find(|x| x.abs() > 1e-12);
            if matches!(lead, Some(x) if x < 0.0) {
                out.u.column_mut(j).neg_mut();
                if j < k {
                    out.v.column_mut(j).neg_mut();
                }
            }
        }
        return Ok(out);
    }
    svd_tall(a)
}

fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    let cap = sweep_cap(n);
    let mut sweep = 0;
    loop {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= JACOBI_EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let wi = w[(k, i)];
                    let wj = w[(k, j)];
                    w[(k, i)] = c * wi - s * wj;
                    w[(k, j)] = s * wi + c * wj;
                }
                for k in 0..n {
                    let vi = v[(k, i)];
                    let vj = v[(k, j)];
                    v[(k, i)] = c * vi - s * vj;
                    v[(k, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
        sweep += 1;
        if sweep == cap {
            return Err(Error::NoConvergence {
                routine: "svd",
                iterations: cap,
            });
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let s_max = s.first().copied().unwrap_or(0.0);
    let rank_floor = s_max * f64::EPSILON * (m.max(n) as f64);

    let mut u = Matrix::zeros(m, m);
    let mut v_sorted = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v_sorted.set_column(dst, &v.column(src));
    }
    let mut filled = 0;
    for (dst, &src) in order.iter().enumerate() {
        if s[dst] <= rank_floor || s[dst] == 0.0 {
            break;
        }
        let mut col = w.column(src) / s[dst];
        for j in 0..filled {
            let proj = u.column(j).dot(&col);
            col -= u.column(j) * proj;
        }
        let norm = col.norm();
        u.set_column(dst, &(col / norm));
        filled += 1;
    }
    complete_basis(&mut u, filled);
    normalize_signs(&mut u, Some(&mut v_sorted));
    // Columns of V beyond the paired ones get their own convention.
    if n > m {
        let mut tail = v_sorted.columns(m, n - m).into_owned();
        normalize_signs(&mut tail, None);
        v_sorted.columns_mut(m, n - m).copy_from(&tail);
    }
    Ok(SvdResult { u, s, v: v_sorted })
}

/// Scalar Moore-Penrose pseudoinverse: `1/x`, or 0 when `|x| <= zero_tol`.
pub fn pinv_scalar(x: f64, zero_tol: f64) -> f64 {
    if x.abs() > zero_tol {
        1.0 / x
    } else {
        0.0
    }
}

/// PSD test on the smallest eigenvalue, relative to the largest magnitude.
pub fn is_psd(a: &Matrix, tol: &Tolerances) -> Result<bool> {
    let eig = sym_eig(a)?;
    Ok(psd_margin_ok(&eig, tol))
}

fn psd_margin_ok(eig: &SymEigen, tol: &Tolerances) -> bool {
    let scale = eig.max().abs().max(eig.min().abs());
    eig.min() >= -tol.psd_rel * scale
}

/// Block PSD test through the generalized Schur complement:
/// `[[M, N], [N^T, R]] >= 0` iff `R >= 0`, `(I - R R^+) N^T = 0` and
/// `M - N R^+ N^T >= 0`.
pub fn schur_psd_feasible(m: &Matrix, r: &Matrix, n: &Matrix, tol: &Tolerances) -> Result<bool> {
    if !m.is_square() || !r.is_square() || n.nrows() != m.nrows() || n.ncols() != r.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "blocks M {}x{}, R {}x{}, N {}x{} are not conformable",
            m.nrows(),
            m.ncols(),
            r.nrows(),
            r.ncols(),
            n.nrows(),
            n.ncols()
        )));
    }
    let scale = 1.0_f64.max(max_abs(m)).max(max_abs(r)).max(max_abs(n));
    let zero = tol.psd_rel * scale;

    let r_eig = sym_eig(r)?;
    if r_eig.min() < -zero {
        return Ok(false);
    }
    let r_pinv = r_eig.map(|x| if x > zero { 1.0 / x } else { 0.0 });
    let range = r_eig.map(|x| if x > zero { 1.0 } else { 0.0 });

    let q = r.nrows();
    let leak = (Matrix::identity(q, q) - range) * n.transpose();
    if max_abs(&leak) > zero {
        return Ok(false);
    }
    let complement = m - n * r_pinv * n.transpose();
    let c_eig = sym_eig(&complement)?;
    Ok(c_eig.min() >= -zero)
}

/// `log det A` as the sum of log eigenvalues.
pub fn logdet_psd(a: &Matrix, tol: &Tolerances) -> Result<f64> {
    let eig = sym_eig(a)?;
    logdet_from_eig(&eig, tol)
}

pub(crate) fn logdet_from_eig(eig: &SymEigen, tol: &Tolerances) -> Result<f64> {
    let floor = tol.pinv_zero * eig.max().max(1.0);
    if eig.values.is_empty() {
        return Ok(0.0);
    }
    if eig.min() <= floor {
        return Err(Error::SingularMatrix {
            min_eigenvalue: eig.min(),
        });
    }
    Ok(eig.values.iter().map(|x| x.ln()).sum())
}
