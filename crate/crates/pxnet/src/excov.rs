//! Structured algebra for exchangeable network covariance matrices.
//!
//! Matrices of the form `A = c1*S1 + c2*S2 + c3*S3`, where `S1` is the
//! identity over relations, `S2` indicates ordered relation pairs sharing one
//! actor, and `S3` indicates disjoint pairs (`S1 + S2 + S3` is all ones).
//! The class is closed under inversion, so a 3x3 system recovers the inverse's
//! coefficients, matrix-vector products cost `O(n^2)`, and the eigenvalues are
//! available in closed form. Dense construction exists only as test support.

use crate::error::{PxError, Result};
use crate::relindex::{PairClass, RelationIndex};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

/// Covariance coefficients `(variance, shared-actor covariance, disjoint
/// covariance)` of an exchangeable relation covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchCovParams {
    pub variance: f64,
    pub shared: f64,
    pub disjoint: f64,
}

/// Correlation values are kept strictly inside the positive-definite region.
pub const RHO_CEILING: f64 = 0.5 - 1e-6;

impl ExchCovParams {
    pub fn identity() -> Self {
        Self { variance: 1.0, shared: 0.0, disjoint: 0.0 }
    }

    /// The model covariance `Omega(rho)`: unit variance, correlation `rho`
    /// between relations sharing an actor, zero otherwise.
    pub fn from_rho(rho: f64) -> Result<Self> {
        if !(0.0..=RHO_CEILING).contains(&rho) {
            return Err(PxError::Domain(format!(
                "rho = {rho} outside [0, {RHO_CEILING}]"
            )));
        }
        Ok(Self { variance: 1.0, shared: rho, disjoint: 0.0 })
    }

    pub fn coeffs(&self) -> [f64; 3] {
        [self.variance, self.shared, self.disjoint]
    }

    /// Closed-form spectrum: three distinct values with multiplicities
    /// `1`, `n-1`, and `n(n-3)/2`.
    pub fn eigenvalues(&self, n: usize) -> [(f64, usize); 3] {
        eigenvalues_of(self.coeffs(), n)
    }

    pub fn is_positive_definite(&self, n: usize) -> bool {
        self.eigenvalues(n).iter().all(|&(l, _)| l > 0.0)
    }
}

/// Coefficients of the inverse matrix `Omega^{-1} = p1*S1 + p2*S2 + p3*S3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionParams {
    pub diag: f64,
    pub shared: f64,
    pub disjoint: f64,
}

impl PrecisionParams {
    pub fn coeffs(&self) -> [f64; 3] {
        [self.diag, self.shared, self.disjoint]
    }
}

fn eigenvalues_of(c: [f64; 3], n: usize) -> [(f64, usize); 3] {
    let nf = n as f64;
    [
        (c[0] + 2.0 * (nf - 2.0) * c[1] + 0.5 * (nf - 2.0) * (nf - 3.0) * c[2], 1),
        (c[0] + (nf - 4.0) * c[1] - (nf - 3.0) * c[2], n - 1),
        (c[0] - 2.0 * c[1] + c[2], n * (n - 3) / 2),
    ]
}

/// Apply `c1*S1 + c2*S2 + c3*S3` to a relation vector in `O(n^2)`.
///
/// Uses `(S2 v)_{ij} = r_i + r_j - 2 v_{ij}` with actor sums
/// `r_i = sum_{k != i} v_{ik}`, and `S3 v = (1'v) 1 - v - S2 v`.
pub fn s_apply(coeffs: [f64; 3], v: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    let idx = RelationIndex::new(n)?;
    if v.len() != idx.len() {
        return Err(PxError::Domain(format!(
            "vector length {} != relation count {}",
            v.len(),
            idx.len()
        )));
    }
    let total: f64 = v.sum();
    let mut actor_sums = vec![0.0f64; n];
    for (d, (i, j)) in idx.pairs().enumerate() {
        actor_sums[i] += v[d];
        actor_sums[j] += v[d];
    }
    let mut out = DVector::zeros(idx.len());
    for (d, (i, j)) in idx.pairs().enumerate() {
        let s2 = actor_sums[i] + actor_sums[j] - 2.0 * v[d];
        let s3 = total - v[d] - s2;
        out[d] = coeffs[0] * v[d] + coeffs[1] * s2 + coeffs[2] * s3;
    }
    Ok(out)
}

/// The 3x3 system matrix `C(c)` relating the coefficients of a matrix in the
/// exchangeable class to the coefficients of its inverse: `C(c) q = e1`.
///
/// Rows come from the three distinct row-column products in `A * A^{-1}`:
/// identical, one-shared-actor, and disjoint relation pairs.
pub fn inversion_matrix(c: [f64; 3], n: usize) -> Matrix3<f64> {
    let nf = n as f64;
    let t3 = 0.5 * (nf - 2.0) * (nf - 3.0);
    Matrix3::new(
        c[0],
        2.0 * (nf - 2.0) * c[1],
        t3 * c[2],
        c[1],
        c[0] + (nf - 2.0) * c[1] + (nf - 3.0) * c[2],
        (nf - 3.0) * c[1] + (t3 - nf + 3.0) * c[2],
        c[2],
        4.0 * c[1] + (2.0 * nf - 8.0) * c[2],
        c[0] + (2.0 * nf - 8.0) * c[1] + (t3 - 2.0 * nf + 7.0) * c[2],
    )
}

/// Solve for the inverse's coefficients given positive-definite covariance
/// coefficients.
pub fn invert_params(phi: &ExchCovParams, n: usize) -> Result<PrecisionParams> {
    if n < 4 {
        return Err(PxError::Domain(format!("need n >= 4, got {n}")));
    }
    if !phi.is_positive_definite(n) {
        return Err(PxError::NotPositiveDefinite(format!(
            "eigenvalues {:?} at n = {n}",
            phi.eigenvalues(n)
        )));
    }
    let q = solve_inversion_system(phi.coeffs(), n)?;
    Ok(PrecisionParams { diag: q[0], shared: q[1], disjoint: q[2] })
}

fn solve_inversion_system(c: [f64; 3], n: usize) -> Result<Vector3<f64>> {
    inversion_matrix(c, n)
        .lu()
        .solve(&Vector3::new(1.0, 0.0, 0.0))
        .ok_or_else(|| {
            PxError::NotPositiveDefinite(format!(
                "inversion system singular for coefficients {c:?} at n = {n}"
            ))
        })
}

/// Inverse coefficients for an arbitrary (not necessarily positive-definite)
/// matrix in the exchangeable class, via the same 3x3 system; errs if the
/// matrix is singular.
pub fn invert_coeffs(c: [f64; 3], n: usize) -> Result<[f64; 3]> {
    if eigenvalues_of(c, n).iter().any(|&(l, _)| l.abs() < 1e-14) {
        return Err(PxError::Singular(format!(
            "exchangeable-class matrix {c:?} is singular at n = {n}"
        )));
    }
    let q = solve_inversion_system(c, n)
        .map_err(|_| PxError::Singular(format!("inversion system for {c:?} at n = {n}")))?;
    Ok([q[0], q[1], q[2]])
}

/// Partial derivatives of the covariance coefficients with respect to the
/// precision coefficients: entry `(i, j)` is `d phi_i / d p_j`.
///
/// Differentiating `C(p) phi(p) = e1` and using the linearity
/// `C(p) = sum_j p_j A_j` gives column `j` as
/// `-C(p)^{-1} A_j C(p)^{-1} e1`.
pub fn cov_param_partials(p: &PrecisionParams, n: usize) -> Result<Matrix3<f64>> {
    let c = inversion_matrix(p.coeffs(), n);
    let lu = c.lu();
    let base = lu
        .solve(&Vector3::new(1.0, 0.0, 0.0))
        .ok_or_else(|| PxError::Singular("covariance partials: C(p) singular".into()))?;
    let mut out = Matrix3::zeros();
    for j in 0..3 {
        let mut unit = [0.0; 3];
        unit[j] = 1.0;
        let basis = inversion_matrix(unit, n);
        let col = lu
            .solve(&(basis * base))
            .ok_or_else(|| PxError::Singular("covariance partials: C(p) singular".into()))?;
        out.set_column(j, &(-col));
    }
    Ok(out)
}

/// Dense indicator matrix of a relation-pair class. Test support; refuses
/// networks past n = 64 so it never leaks into the estimator path.
pub fn dense_pair_matrix(class: PairClass, n: usize) -> DMatrix<f64> {
    assert!(n <= 64, "dense pair matrices are test support only (n <= 64)");
    let idx = RelationIndex::new(n).expect("n >= 3");
    let pairs: Vec<_> = idx.pairs().collect();
    let m = pairs.len();
    DMatrix::from_fn(m, m, |r, c| {
        if PairClass::of(pairs[r], pairs[c]) == class {
            1.0
        } else {
            0.0
        }
    })
}

/// Dense `c1*S1 + c2*S2 + c3*S3`. Test support; gated to n <= 64.
pub fn dense_from_coeffs(c: [f64; 3], n: usize) -> DMatrix<f64> {
    assert!(n <= 64, "dense matrices are test support only (n <= 64)");
    let idx = RelationIndex::new(n).expect("n >= 3");
    let pairs: Vec<_> = idx.pairs().collect();
    let m = pairs.len();
    DMatrix::from_fn(m, m, |r, col| match PairClass::of(pairs[r], pairs[col]) {
        PairClass::Identical => c[0],
        PairClass::ShareActor => c[1],
        PairClass::Disjoint => c[2],
    })
}

/// Dense covariance matrix. Test support; gated to n <= 64.
pub fn dense_omega(phi: &ExchCovParams, n: usize) -> DMatrix<f64> {
    dense_from_coeffs(phi.coeffs(), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_vector<R: Rng>(len: usize, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(len, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
    }

    /// Draw covariance coefficients, keeping only positive-definite ones, with
    /// definiteness judged by dense eigendecomposition (independent of the
    /// closed-form spectrum under test).
    fn random_pd_params<R: Rng>(n: usize, rng: &mut R) -> ExchCovParams {
        loop {
            let phi = ExchCovParams {
                variance: rng.random_range(0.5..2.0),
                shared: rng.random_range(-0.3..0.3),
                disjoint: rng.random_range(-0.2..0.2),
            };
            let dense = dense_omega(&phi, n);
            let eig = dense.symmetric_eigenvalues();
            if eig.iter().all(|&l| l > 1e-3) {
                return phi;
            }
        }
    }

    #[test]
    fn s_apply_identity_passthrough() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let v = random_vector(15, &mut rng);
        let out = s_apply([1.0, 0.0, 0.0], &v, 6).unwrap();
        assert_abs_diff_eq!(out.as_slice(), v.as_slice(), epsilon = 0.0);
    }

    #[test]
    fn s_apply_share_actor_unit_vector() {
        // S2 applied to the indicator of relation (0,1) at n=4 lights up
        // exactly the relations sharing actor 0 or 1.
        let idx = RelationIndex::new(4).unwrap();
        let mut v = DVector::zeros(6);
        v[idx.pair_to_index(0, 1).unwrap()] = 1.0;
        let out = s_apply([0.0, 1.0, 0.0], &v, 4).unwrap();
        let mut expected = DVector::zeros(6);
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            expected[idx.pair_to_index(i, j).unwrap()] = 1.0;
        }
        assert_abs_diff_eq!(out.as_slice(), expected.as_slice(), epsilon = 0.0);
    }

    #[test]
    fn s_apply_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for n in 4..=10 {
            let idx = RelationIndex::new(n).unwrap();
            let v = random_vector(idx.len(), &mut rng);
            for coeffs in [[1.0, 0.3, 0.0], [0.7, -0.2, 0.1], [0.0, 1.0, -1.0]] {
                let fast = s_apply(coeffs, &v, n).unwrap();
                let dense = dense_from_coeffs(coeffs, n) * &v;
                for d in 0..idx.len() {
                    assert_abs_diff_eq!(fast[d], dense[d], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn s_apply_rejects_length_mismatch() {
        let v = DVector::zeros(5);
        assert!(s_apply([1.0, 0.0, 0.0], &v, 6).is_err());
    }

    #[test]
    fn quadratic_form_identity() {
        // e'S3 e = (1'e)^2 - e'e - e'S2 e
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for n in [5, 8] {
            let idx = RelationIndex::new(n).unwrap();
            let e = random_vector(idx.len(), &mut rng);
            let s2e = s_apply([0.0, 1.0, 0.0], &e, n).unwrap();
            let s3e = s_apply([0.0, 0.0, 1.0], &e, n).unwrap();
            let total: f64 = e.sum();
            let lhs = e.dot(&s3e);
            let rhs = total * total - e.dot(&e) - e.dot(&s2e);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
        }
    }

    #[test]
    fn inversion_matrix_identity_case() {
        let m = inversion_matrix([1.0, 0.0, 0.0], 7);
        assert_abs_diff_eq!(m[(0, 0)], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!((m - Matrix3::identity()).norm(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn inversion_matrix_first_row() {
        let m = inversion_matrix([1.0, 0.25, 0.0], 5);
        assert_abs_diff_eq!(m[(0, 0)], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(m[(0, 1)], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 2)], 0.0, epsilon = 0.0);
    }

    fn dense_inverse_params(phi: &ExchCovParams, n: usize) -> [f64; 3] {
        let idx = RelationIndex::new(n).unwrap();
        let pairs: Vec<_> = idx.pairs().collect();
        let inv = dense_omega(phi, n).try_inverse().unwrap();
        // Read coefficients off representative entries.
        let d_share = (0..pairs.len())
            .flat_map(|a| (0..pairs.len()).map(move |b| (a, b)))
            .find(|&(a, b)| PairClass::of(pairs[a], pairs[b]) == PairClass::ShareActor)
            .unwrap();
        let d_disj = (0..pairs.len())
            .flat_map(|a| (0..pairs.len()).map(move |b| (a, b)))
            .find(|&(a, b)| PairClass::of(pairs[a], pairs[b]) == PairClass::Disjoint)
            .unwrap();
        [inv[(0, 0)], inv[d_share], inv[d_disj]]
    }

    #[test]
    fn invert_params_identity() {
        let p = invert_params(&ExchCovParams::identity(), 6).unwrap();
        assert_abs_diff_eq!(p.diag, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.shared, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.disjoint, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn invert_params_matches_dense_inverse() {
        let phi = ExchCovParams::from_rho(0.25).unwrap();
        let p = invert_params(&phi, 5).unwrap();
        let dense = dense_inverse_params(&phi, 5);
        assert_abs_diff_eq!(p.diag, dense[0], epsilon = 1e-12);
        assert_abs_diff_eq!(p.shared, dense[1], epsilon = 1e-12);
        assert_abs_diff_eq!(p.disjoint, dense[2], epsilon = 1e-12);
    }

    #[test]
    fn invert_params_near_boundary() {
        let phi = ExchCovParams::from_rho(0.49).unwrap();
        let n = 20;
        let p = invert_params(&phi, n).unwrap();
        let product = dense_omega(&phi, n) * dense_from_coeffs(p.coeffs(), n);
        let m = product.nrows();
        for r in 0..m {
            for c in 0..m {
                let want = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(product[(r, c)], want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn invert_params_random_pd_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for n in 4..=10 {
            for _ in 0..8 {
                let phi = random_pd_params(n, &mut rng);
                let p = invert_params(&phi, n).unwrap();
                let product = dense_omega(&phi, n) * dense_from_coeffs(p.coeffs(), n);
                let m = product.nrows();
                for r in 0..m {
                    for c in 0..m {
                        let want = if r == c { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(product[(r, c)], want, epsilon = 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn invert_params_rejects_non_pd() {
        let phi = ExchCovParams { variance: 1.0, shared: 0.5, disjoint: 0.0 };
        assert!(matches!(
            invert_params(&phi, 10),
            Err(PxError::NotPositiveDefinite(_))
        ));
        assert!(ExchCovParams::from_rho(0.5).is_err());
    }

    #[test]
    fn eigenvalue_formulas_match_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for n in [5usize, 8, 12, 20] {
            let phi = if n <= 12 {
                random_pd_params(n, &mut rng)
            } else {
                ExchCovParams::from_rho(0.25).unwrap()
            };
            let formulas = phi.eigenvalues(n);
            let mult_total: usize = formulas.iter().map(|&(_, m)| m).sum();
            assert_eq!(mult_total, n * (n - 1) / 2);

            let mut dense: Vec<f64> = dense_omega(&phi, n)
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .collect();
            dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut expanded: Vec<f64> = formulas
                .iter()
                .flat_map(|&(l, m)| std::iter::repeat(l).take(m))
                .collect();
            expanded.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (got, want) in dense.iter().zip(&expanded) {
                let scale = want.abs().max(1e-12);
                assert!(
                    (got - want).abs() / scale < 1e-10,
                    "n={n}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn eigenvalue_spec_points() {
        let phi = ExchCovParams::identity();
        for &(l, _) in &phi.eigenvalues(8) {
            assert_abs_diff_eq!(l, 1.0, epsilon = 0.0);
        }
        let phi = ExchCovParams::from_rho(0.25).unwrap();
        assert_abs_diff_eq!(phi.eigenvalues(20)[2].0, 0.5, epsilon = 1e-15);
        // Boundary: rho = 1/2 zeroes the large-multiplicity eigenvalue.
        let phi = ExchCovParams { variance: 1.0, shared: 0.5, disjoint: 0.0 };
        assert_abs_diff_eq!(phi.eigenvalues(9)[2].0, 0.0, epsilon = 0.0);
    }

    /// Central finite differences of phi(p) through the inversion system.
    fn partials_fd(p: &PrecisionParams, n: usize, h: f64) -> Matrix3<f64> {
        let phi_of = |c: [f64; 3]| -> Vector3<f64> { solve_inversion_system(c, n).unwrap() };
        let mut out = Matrix3::zeros();
        for j in 0..3 {
            let mut up = p.coeffs();
            let mut dn = p.coeffs();
            up[j] += h;
            dn[j] -= h;
            out.set_column(j, &((phi_of(up) - phi_of(dn)) / (2.0 * h)));
        }
        out
    }

    #[test]
    fn partials_at_identity() {
        let p = PrecisionParams { diag: 1.0, shared: 0.0, disjoint: 0.0 };
        let m = cov_param_partials(&p, 6).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], -1.0, epsilon = 1e-12);
        let fd = partials_fd(&p, 6, 1e-6);
        for r in 0..3 {
            for c in 0..3 {
                assert_abs_diff_eq!(m[(r, c)], fd[(r, c)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        for (n, rho) in [(10usize, 0.2), (6, 0.35)] {
            let p = invert_params(&ExchCovParams::from_rho(rho).unwrap(), n).unwrap();
            let m = cov_param_partials(&p, n).unwrap();
            let fd = partials_fd(&p, n, 1e-6);
            for r in 0..3 {
                for c in 0..3 {
                    let scale = fd[(r, c)].abs().max(1e-8);
                    assert!(
                        ((m[(r, c)] - fd[(r, c)]) / scale).abs() < 1e-5,
                        "n={n} rho={rho} entry ({r},{c}): {} vs fd {}",
                        m[(r, c)],
                        fd[(r, c)]
                    );
                }
            }
        }
    }
}
