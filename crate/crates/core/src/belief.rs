//! Second-order belief specifications and Bayes linear adjustment.
//!
//! A [`SecondOrderBelief`] carries only a mean vector and a covariance matrix.
//! Adjusting beliefs about `B` by an observation of `D` uses
//!
//! ```text
//! E_D[B]   = E[B] + Cov[B,D] Var[D]^-1 (D - E[D])
//! Var_D[B] = Var[B] - Cov[B,D] Var[D]^-1 Cov[D,B]
//! ```
//!
//! and sequential adjustment applies the same update to already-adjusted
//! quantities.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Mean vector and covariance matrix of an uncertain quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl SecondOrderBelief {
    /// Builds a belief, checking shape, symmetry (to `1e-12` relative) and a
    /// nonnegative diagonal. The stored covariance is exactly symmetrised.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "belief covariance",
                expected: d,
                actual: covariance.nrows().max(covariance.ncols()),
            });
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in (i + 1)..d {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidArgument(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
            if covariance[(i, i)] < 0.0 || !covariance[(i, i)].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "covariance diagonal entry {i} is {}",
                    covariance[(i, i)]
                )));
            }
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("mean has non-finite entries".into()));
        }
        Ok(Self {
            mean,
            covariance: symmetrize(covariance),
        })
    }

    /// A known quantity: zero covariance.
    pub fn point(mean: DVector<f64>) -> Self {
        let d = mean.len();
        Self {
            mean,
            covariance: DMatrix::zeros(d, d),
        }
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    /// Internal constructor for computed results: symmetrises and clamps a
    /// slightly negative diagonal to zero, leaving off-diagonals untouched.
    pub(crate) fn from_computed(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        let mut covariance = symmetrize(covariance);
        clamp_diagonal(&mut covariance);
        Self { mean, covariance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.covariance.diagonal()
    }

    pub fn is_known(&self) -> bool {
        self.covariance.iter().all(|&v| v == 0.0)
    }
}

/// Joint second-order specification over two collections `B` and `D`.
#[derive(Debug, Clone)]
pub struct JointBelief {
    pub b: SecondOrderBelief,
    pub d: SecondOrderBelief,
    /// `Cov[B, D]`, shape `dim(B) x dim(D)`.
    pub cross: DMatrix<f64>,
}

impl JointBelief {
    pub fn new(b: SecondOrderBelief, d: SecondOrderBelief, cross: DMatrix<f64>) -> Result<Self> {
        if cross.nrows() != b.dim() {
            return Err(Error::DimensionMismatch {
                context: "Cov[B,D] rows",
                expected: b.dim(),
                actual: cross.nrows(),
            });
        }
        if cross.ncols() != d.dim() {
            return Err(Error::DimensionMismatch {
                context: "Cov[B,D] columns",
                expected: d.dim(),
                actual: cross.ncols(),
            });
        }
        Ok(Self { b, d, cross })
    }

    /// The full covariance of the stacked vector `(B, D)`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let (nb, nd) = (self.b.dim(), self.d.dim());
        let mut full = DMatrix::zeros(nb + nd, nb + nd);
        full.view_mut((0, 0), (nb, nb)).copy_from(&self.b.covariance);
        full.view_mut((nb, nb), (nd, nd)).copy_from(&self.d.covariance);
        full.view_mut((0, nb), (nb, nd)).copy_from(&self.cross);
        full.view_mut((nb, 0), (nd, nb)).copy_from(&self.cross.transpose());
        full
    }

    /// Smallest eigenvalue of the joint covariance; valid joints have this
    /// at or above `-1e-8`.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.joint_covariance())
    }
}

/// Cholesky factor of a symmetric positive-definite matrix, with additive
/// jitter escalated from `1e-10` to `1e-6` times the mean diagonal when the
/// plain factorization fails.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    jitter: f64,
}

impl SpdFactor {
    pub fn new(matrix: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                actual: matrix.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Empty(context));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular { context });
        }
        if let Some(chol) = matrix.clone().cholesky() {
            return Ok(Self::from_chol(chol, 0.0));
        }
        let mean_diag = matrix.diagonal().mean();
        if !(mean_diag > 0.0) {
            return Err(Error::Singular { context });
        }
        let mut rel = JITTER_START;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * mean_diag;
            let mut m = matrix.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(Self::from_chol(chol, jitter));
            }
            rel *= 10.0;
        }
        Err(Error::Singular { context })
    }

    fn from_chol(chol: Cholesky<f64, Dyn>, jitter: f64) -> Self {
        let lower = chol.l();
        Self {
            chol,
            lower,
            jitter,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Jitter that was added to the diagonal (zero when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `L^-1 rhs` for the lower factor `L`.
    pub fn solve_lower(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// A reusable adjustment of `B` by `D`: the factorization of `Var[D]` and the
/// gain `Cov[B,D] Var[D]^-1` are computed once and shared by every
/// observation.
#[derive(Debug, Clone)]
pub struct AdjustmentContext {
    joint: JointBelief,
    factor: SpdFactor,
    /// `Var[D]^-1 Cov[D,B]`
    gain_t: DMatrix<f64>,
    adjusted_cov: DMatrix<f64>,
}

impl AdjustmentContext {
    pub fn new(joint: JointBelief) -> Result<Self> {
        let factor = SpdFactor::new(&joint.d.covariance, "Var[D]")?;
        let gain_t = factor.solve(&joint.cross.transpose());
        let adjusted_cov = &joint.b.covariance - &joint.cross * &gain_t;
        Ok(Self {
            joint,
            factor,
            gain_t,
            adjusted_cov,
        })
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn adjust(&self, observed: &DVector<f64>) -> Result<SecondOrderBelief> {
        if observed.len() != self.joint.d.dim() {
            return Err(Error::DimensionMismatch {
                context: "observed D",
                expected: self.joint.d.dim(),
                actual: observed.len(),
            });
        }
        let innovation = observed - &self.joint.d.mean;
        let mean = &self.joint.b.mean + self.gain_t.tr_mul(&innovation);
        Ok(SecondOrderBelief::from_computed(
            mean,
            self.adjusted_cov.clone(),
        ))
    }

    /// Adjusted variance of `B`; it does not depend on the observed value.
    pub fn adjusted_variance(&self) -> &DMatrix<f64> {
        &self.adjusted_cov
    }

    /// `Cov_D[B1, B2] = Cov[B1,B2] - Cov[B1,D] Var[D]^-1 Cov[D,B2]`, reusing
    /// this context's factorization of `Var[D]`.
    pub fn adjusted_covariance(
        &self,
        cov_b1_b2: &DMatrix<f64>,
        cov_b1_d: &DMatrix<f64>,
        cov_b2_d: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        adjusted_covariance_with(&self.factor, cov_b1_b2, cov_b1_d, cov_b2_d)
    }
}

/// Adjusted expectation and variance of `B` given an observation of `D`.
pub fn adjust(joint: &JointBelief, observed: &DVector<f64>) -> Result<SecondOrderBelief> {
    AdjustmentContext::new(joint.clone())?.adjust(observed)
}

/// Adjusted covariance between two sub-collections `B1`, `B2` given `D`.
pub fn adjust_covariance(
    cov_b1_b2: &DMatrix<f64>,
    cov_b1_d: &DMatrix<f64>,
    cov_b2_d: &DMatrix<f64>,
    var_d: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let factor = SpdFactor::new(var_d, "Var[D]")?;
    adjusted_covariance_with(&factor, cov_b1_b2, cov_b1_d, cov_b2_d)
}

fn adjusted_covariance_with(
    factor: &SpdFactor,
    cov_b1_b2: &DMatrix<f64>,
    cov_b1_d: &DMatrix<f64>,
    cov_b2_d: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let nd = factor.dim();
    if cov_b1_d.ncols() != nd || cov_b2_d.ncols() != nd {
        return Err(Error::DimensionMismatch {
            context: "Cov[B_i, D] columns",
            expected: nd,
            actual: if cov_b1_d.ncols() != nd {
                cov_b1_d.ncols()
            } else {
                cov_b2_d.ncols()
            },
        });
    }
    if cov_b1_b2.nrows() != cov_b1_d.nrows() || cov_b1_b2.ncols() != cov_b2_d.nrows() {
        return Err(Error::DimensionMismatch {
            context: "Cov[B1, B2]",
            expected: cov_b1_d.nrows(),
            actual: cov_b1_b2.nrows(),
        });
    }
    Ok(cov_b1_b2 - cov_b1_d * factor.solve(&cov_b2_d.transpose()))
}

/// Second step of a sequential adjustment: beliefs about `B` already adjusted
/// by `D` are further adjusted by `A`.
///
/// `b_given_d` and `a_given_d` are `D`-adjusted beliefs and `cov_ba_given_d`
/// is `Cov_D[B, A]` (from [`adjust_covariance`]).
pub fn sequential_adjust(
    b_given_d: &SecondOrderBelief,
    a_given_d: &SecondOrderBelief,
    cov_ba_given_d: &DMatrix<f64>,
    observed_a: &DVector<f64>,
) -> Result<SecondOrderBelief> {
    let joint = JointBelief::new(b_given_d.clone(), a_given_d.clone(), cov_ba_given_d.clone())?;
    adjust(&joint, observed_a)
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn clamp_diagonal(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows().min(m.ncols()) {
        if m[(i, i)] < 0.0 {
            m[(i, i)] = 0.0;
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// A square root `R` with `R R' = m` for a symmetric PSD matrix, from the
/// eigendecomposition with negative eigenvalues set to zero. Diagonal inputs
/// get the exact elementwise square root.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
    if diagonal {
        return DMatrix::from_fn(n, n, |i, j| if i == j { m[(i, i)].max(0.0).sqrt() } else { 0.0 });
    }
    let eig = m.clone().symmetric_eigen();
    let mut r = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        r.column_mut(j).scale_mut(s);
    }
    r
}

/// Projects a symmetric matrix onto the PSD cone by zeroing negative
/// eigenvalues.
pub(crate) fn psd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let r = psd_sqrt(m);
    symmetrize(&r * r.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_joint(var_b: f64, var_d: f64, cov: f64) -> JointBelief {
        JointBelief::new(
            SecondOrderBelief::scalar(0.0, var_b).unwrap(),
            SecondOrderBelief::scalar(0.0, var_d).unwrap(),
            DMatrix::from_element(1, 1, cov),
        )
        .unwrap()
    }

    #[test]
    fn zero_covariance_leaves_prior() {
        let b = SecondOrderBelief::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let d = SecondOrderBelief::scalar(5.0, 3.0).unwrap();
        let joint = JointBelief::new(b.clone(), d, DMatrix::zeros(2, 1)).unwrap();
        let adj = adjust(&joint, &DVector::from_element(1, 11.0)).unwrap();
        assert_eq!(adj, b);
    }

    #[test]
    fn centered_observation_keeps_mean() {
        let joint = scalar_joint(1.0, 1.0, 0.5);
        let adj = adjust(&joint, &DVector::from_element(1, 0.0)).unwrap();
        assert_eq!(adj.mean[0], 0.0);
        assert!(adj.covariance[(0, 0)] < 1.0);
    }

    #[test]
    fn scalar_hand_case() {
        let joint = scalar_joint(1.0, 1.0, 0.5);
        let adj = adjust(&joint, &DVector::from_element(1, 2.0)).unwrap();
        assert!((adj.mean[0] - 1.0).abs() < 1e-15);
        assert!((adj.covariance[(0, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn adjust_covariance_cases() {
        let zero = DMatrix::zeros(1, 1);
        let prior = DMatrix::from_element(1, 1, 0.3);
        let one = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(adjust_covariance(&prior, &zero, &zero, &one).unwrap(), prior);

        let half = DMatrix::from_element(1, 1, 0.5);
        let c = adjust_covariance(&prior, &half, &half, &one).unwrap();
        assert!((c[(0, 0)] - (0.3 - 0.25)).abs() < 1e-15);

        // B1 = B2 reproduces adjust's variance
        let joint = scalar_joint(1.0, 1.0, 0.5);
        let v = adjust(&joint, &DVector::zeros(1)).unwrap().covariance;
        let c = adjust_covariance(&one, &half, &half, &one).unwrap();
        assert!((c[(0, 0)] - v[(0, 0)]).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let joint = scalar_joint(1.0, 1.0, 0.5);
        assert!(matches!(
            adjust(&joint, &DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(JointBelief::new(
            SecondOrderBelief::scalar(0.0, 1.0).unwrap(),
            SecondOrderBelief::scalar(0.0, 1.0).unwrap(),
            DMatrix::zeros(2, 1)
        )
        .is_err());
    }

    #[test]
    fn singular_var_d_errors_and_near_singular_jitters() {
        let d = SecondOrderBelief::new(DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
        let joint = JointBelief::new(
            SecondOrderBelief::scalar(0.0, 1.0).unwrap(),
            d,
            DMatrix::zeros(1, 2),
        )
        .unwrap();
        assert!(matches!(
            adjust(&joint, &DVector::zeros(2)),
            Err(Error::Singular { .. })
        ));

        // rank-one Var[D] needs jitter but stays within budget
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = SpdFactor::new(&v, "test").unwrap();
        assert!(f.jitter() > 0.0 && f.jitter() <= 1e-6);
    }

    #[test]
    fn negative_adjusted_variance_is_clamped() {
        // |Cov| slightly above sqrt(Var B Var D) makes the joint indefinite
        let joint = scalar_joint(1.0, 1.0, 1.0 + 1e-9);
        let adj = adjust(&joint, &DVector::zeros(1)).unwrap();
        assert_eq!(adj.covariance[(0, 0)], 0.0);
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let r = SecondOrderBelief::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]),
        );
        assert!(r.is_err());
    }

    fn random_spd(seed: &[f64], n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    proptest! {
        #[test]
        fn adjusted_variance_is_loewner_dominated(
            entries in prop::collection::vec(-1.0f64..1.0, 36),
            nb in 1usize..4,
            nd in 1usize..3,
        ) {
            let n = nb + nd;
            let full = random_spd(&entries, n);
            let b = SecondOrderBelief::new(DVector::zeros(nb), full.view((0, 0), (nb, nb)).into_owned()).unwrap();
            let d = SecondOrderBelief::new(DVector::zeros(nd), full.view((nb, nb), (nd, nd)).into_owned()).unwrap();
            let joint = JointBelief::new(b.clone(), d, full.view((0, nb), (nb, nd)).into_owned()).unwrap();
            let adj = adjust(&joint, &DVector::from_element(nd, 1.0)).unwrap();
            let diff = &b.covariance - &adj.covariance;
            prop_assert!(min_eigenvalue(&diff) >= -1e-8);
        }

        #[test]
        fn adjust_is_linear_in_observation(
            entries in prop::collection::vec(-1.0f64..1.0, 25),
            d1 in prop::collection::vec(-5.0f64..5.0, 2),
            d2 in prop::collection::vec(-5.0f64..5.0, 2),
            alpha in 0.0f64..1.0,
        ) {
            let full = random_spd(&entries, 5);
            let b = SecondOrderBelief::new(DVector::from_vec(vec![0.5, -1.0, 2.0]), full.view((0, 0), (3, 3)).into_owned()).unwrap();
            let d = SecondOrderBelief::new(DVector::from_vec(vec![0.1, 0.2]), full.view((3, 3), (2, 2)).into_owned()).unwrap();
            let ctx = AdjustmentContext::new(JointBelief::new(b, d, full.view((0, 3), (3, 2)).into_owned()).unwrap()).unwrap();
            let d1 = DVector::from_vec(d1);
            let d2 = DVector::from_vec(d2);
            let mix = &d1 * alpha + &d2 * (1.0 - alpha);
            let lhs = ctx.adjust(&mix).unwrap().mean;
            let rhs = ctx.adjust(&d1).unwrap().mean * alpha + ctx.adjust(&d2).unwrap().mean * (1.0 - alpha);
            for i in 0..3 {
                prop_assert!((lhs[i] - rhs[i]).abs() <= 1e-10 * (1.0 + rhs[i].abs()));
            }
        }
    }
}
