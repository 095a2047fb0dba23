//! Emulation at uncertain inputs in closed form.
//!
//! An input known only through its mean and variance enters the Gaussian
//! correlation through
//!
//! ```text
//! c(X, X') = exp{-sum_r (E[X_r - X'_r]^2 + Var[X_r - X'_r]) / theta_r^2}
//! ```
//!
//! which reduces to the ordinary kernel when both variances vanish. With this
//! kernel and the first two moments of the regressors `g(X)`, the adjusted
//! mean and variance of `f(X)` follow without sampling.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::belief::{min_eigenvalue, psd_project, psd_sqrt, symmetrize, SecondOrderBelief};
use crate::emulator::{
    add_coincident_nugget, check_theta, correlation_from_moments, Design, Emulator, RegressionBasis,
};
use crate::error::{Error, Result};

const PSD_TOL: f64 = 1e-8;
const DIFF_VAR_TOL: f64 = 1e-10;

/// An input described by its expectation and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainInput {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl UncertainInput {
    /// Symmetrizes the covariance and clamps small negative eigenvalues.
    /// Fails when the minimum eigenvalue is below `-1e-8`.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if covariance.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                context: "uncertain input covariance",
                expected: p,
                actual: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "uncertain input moments must be finite".into(),
            ));
        }
        let covariance = symmetrize(covariance);
        let lambda = if p == 0 { 0.0 } else { min_eigenvalue(&covariance) };
        if lambda < -PSD_TOL {
            return Err(Error::InvalidArgument(format!(
                "uncertain input covariance has eigenvalue {lambda:e}"
            )));
        }
        let covariance = if lambda < 0.0 {
            psd_project(&covariance)
        } else {
            covariance
        };
        Ok(Self { mean, covariance })
    }

    /// A point mass at `x`.
    pub fn known(x: &[f64]) -> Self {
        Self {
            mean: DVector::from_column_slice(x),
            covariance: DMatrix::zeros(x.len(), x.len()),
        }
    }

    /// Independent coordinates with the given variances.
    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
        )
    }

    pub fn from_belief(belief: &SecondOrderBelief) -> Self {
        Self {
            mean: belief.mean.clone(),
            covariance: belief.covariance.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_known(&self) -> bool {
        self.covariance.iter().all(|v| *v == 0.0)
    }

    pub fn is_diagonal(&self) -> bool {
        let p = self.dim();
        (0..p).all(|i| (0..p).all(|j| i == j || self.covariance[(i, j)] == 0.0))
    }

    /// The same input expressed in a design's scaled coordinates.
    pub fn scaled_to(&self, design: &Design) -> Self {
        let s = design.scale_factors();
        let p = self.dim();
        Self {
            mean: design.scale_point(self.mean.as_slice()),
            covariance: DMatrix::from_fn(p, p, |i, j| s[i] * self.covariance[(i, j)] * s[j]),
        }
    }
}

/// First two moments of the regressors at an uncertain input.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMoments {
    /// `E[g(X)]`
    pub mean_g: DVector<f64>,
    /// `Var[g(X)]`
    pub var_g: DMatrix<f64>,
    /// `E[g(X) g(X)']`
    pub mean_ggt: DMatrix<f64>,
}

impl BasisMoments {
    /// `E[w(X)]` for `q` outputs: the `q x mq` block matrix `I_q (x) E[g]'`.
    pub fn mean_w(&self, q: usize) -> DMatrix<f64> {
        let m = self.mean_g.len();
        let mut w = DMatrix::zeros(q, m * q);
        for k in 0..q {
            w.view_mut((k, k * m), (1, m)).copy_from(&self.mean_g.transpose());
        }
        w
    }
}

fn diff_moments(
    xi1: &UncertainInput,
    xi2: &UncertainInput,
    cross: Option<&DMatrix<f64>>,
) -> Result<Vec<(f64, f64)>> {
    let p = xi1.dim();
    if xi2.dim() != p {
        return Err(Error::DimensionMismatch {
            context: "uncertain correlation arguments",
            expected: p,
            actual: xi2.dim(),
        });
    }
    if let Some(c) = cross {
        if c.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                context: "cross covariance",
                expected: p,
                actual: c.nrows(),
            });
        }
    }
    (0..p)
        .map(|r| {
            let cov = cross.map_or(0.0, |c| c[(r, r)]);
            let v = xi1.covariance[(r, r)] + xi2.covariance[(r, r)] - 2.0 * cov;
            if v < -DIFF_VAR_TOL {
                return Err(Error::InvalidArgument(format!(
                    "Var[X_{} - X'_{}] = {v:e} is negative",
                    r + 1,
                    r + 1
                )));
            }
            Ok((xi1.mean[r] - xi2.mean[r], v.max(0.0)))
        })
        .collect()
}

/// Correlation between two uncertain inputs. `cross` is `Cov[X, X']`, taken
/// as zero when absent.
pub fn uncertain_correlation(
    xi1: &UncertainInput,
    xi2: &UncertainInput,
    theta: &[f64],
    cross: Option<&DMatrix<f64>>,
) -> Result<f64> {
    check_theta(theta)?;
    if theta.len() != xi1.dim() {
        return Err(Error::DimensionMismatch {
            context: "theta length",
            expected: xi1.dim(),
            actual: theta.len(),
        });
    }
    let diffs = diff_moments(xi1, xi2, cross)?;
    Ok(correlation_from_moments(diffs.into_iter(), theta))
}

/// Correlations between an uncertain input (native units) and each training
/// run of `design`, with `theta` in the design's scaled units. Training runs
/// are known points.
pub fn cross_correlation_vector(
    xi: &UncertainInput,
    design: &Design,
    theta: &[f64],
) -> Result<DVector<f64>> {
    check_theta(theta)?;
    if xi.dim() != design.p() || theta.len() != design.p() {
        return Err(Error::DimensionMismatch {
            context: "uncertain input vs design",
            expected: design.p(),
            actual: if xi.dim() != design.p() { xi.dim() } else { theta.len() },
        });
    }
    Ok(scaled_cross_correlation(&xi.scaled_to(design), design.scaled(), theta))
}

fn scaled_cross_correlation(
    scaled: &UncertainInput,
    points: &DMatrix<f64>,
    theta: &[f64],
) -> DVector<f64> {
    let p = scaled.dim();
    let var: Vec<f64> = (0..p).map(|r| scaled.covariance[(r, r)].max(0.0)).collect();
    DVector::from_iterator(
        points.nrows(),
        (0..points.nrows()).map(|i| {
            correlation_from_moments(
                (0..p).map(|r| (scaled.mean[r] - points[(i, r)], var[r])),
                theta,
            )
        }),
    )
}

/// Moments of `g(X)` for the constant and linear bases. Custom bases have no
/// closed form here; supply moments to [`uible_predict_with_moments`]
/// instead.
pub fn basis_moments(xi: &UncertainInput, basis: &RegressionBasis) -> Result<BasisMoments> {
    let p = xi.dim();
    let (mean_g, var_g) = match basis {
        RegressionBasis::Constant => (DVector::from_element(1, 1.0), DMatrix::zeros(1, 1)),
        RegressionBasis::Linear => {
            let mut mean = DVector::zeros(p + 1);
            mean[0] = 1.0;
            mean.rows_mut(1, p).copy_from(&xi.mean);
            let mut var = DMatrix::zeros(p + 1, p + 1);
            var.view_mut((1, 1), (p, p)).copy_from(&xi.covariance);
            (mean, var)
        }
        RegressionBasis::Custom(_) => {
            return Err(Error::UnsupportedBasis(basis.name().into()));
        }
    };
    let mean_ggt = &var_g + &mean_g * mean_g.transpose();
    Ok(BasisMoments {
        mean_g,
        var_g,
        mean_ggt,
    })
}

/// Adjusted mean and variance of the simulator output at an uncertain input
/// (native units).
pub fn uible_predict(emulator: &Emulator, xi: &UncertainInput) -> Result<SecondOrderBelief> {
    emulator.check_input(xi.dim())?;
    let scaled = xi.scaled_to(emulator.design());
    let moments = basis_moments(&scaled, emulator.basis())?;
    Ok(predict_scaled(emulator, &scaled, &moments))
}

/// As [`uible_predict`], with caller-supplied regressor moments (in the
/// emulator's scaled coordinates). This is the entry point for bases whose
/// moments under the input distribution are known by other means.
pub fn uible_predict_with_moments(
    emulator: &Emulator,
    xi: &UncertainInput,
    moments: &BasisMoments,
) -> Result<SecondOrderBelief> {
    emulator.check_input(xi.dim())?;
    let m = emulator.basis().len(emulator.p());
    if moments.mean_g.len() != m || moments.var_g.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            context: "basis moments",
            expected: m,
            actual: moments.mean_g.len(),
        });
    }
    Ok(predict_scaled(emulator, &xi.scaled_to(emulator.design()), moments))
}

fn predict_scaled(
    emulator: &Emulator,
    scaled: &UncertainInput,
    moments: &BasisMoments,
) -> SecondOrderBelief {
    let theta = &emulator.hyperparameters().theta;
    let points = emulator.design().scaled();
    let mut c = scaled_cross_correlation(scaled, points, theta);
    if scaled.is_known() {
        add_coincident_nugget(points, &scaled.mean, emulator.hyperparameters().nugget, &mut c);
    }
    let var_g = if moments.var_g.iter().all(|v| *v == 0.0) {
        None
    } else {
        Some(&moments.var_g)
    };
    emulator.adjusted_moments(&c, &moments.mean_g, var_g)
}

/// Gram matrix of the uncertain-input kernel over `specs` and its minimum
/// eigenvalue.
#[derive(Debug, Clone)]
pub struct KernelPsdReport {
    pub gram: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

/// Builds the Gram matrix for mutually independent inputs (each diagonal
/// entry is `c(X, X) = 1`) and reports its smallest eigenvalue.
pub fn check_kernel_psd(specs: &[UncertainInput], theta: &[f64]) -> Result<KernelPsdReport> {
    check_kernel_psd_with(specs, theta, |_, _| None)
}

/// As [`check_kernel_psd`], with `cross(i, j)` giving `Cov[X_i, X_j]` for
/// `i < j` where the inputs are dependent.
pub fn check_kernel_psd_with(
    specs: &[UncertainInput],
    theta: &[f64],
    cross: impl Fn(usize, usize) -> Option<DMatrix<f64>>,
) -> Result<KernelPsdReport> {
    let n = specs.len();
    if n == 0 {
        return Err(Error::Empty("kernel Gram matrix"));
    }
    let mut gram = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let cov = cross(i, j);
            let c = uncertain_correlation(&specs[i], &specs[j], theta, cov.as_ref())?;
            gram[(i, j)] = c;
            gram[(j, i)] = c;
        }
    }
    let min_eigenvalue = min_eigenvalue(&gram);
    Ok(KernelPsdReport {
        gram,
        min_eigenvalue,
    })
}

/// Analytic kernel value against a Monte Carlo estimate of the expected
/// Gaussian correlation between independent normal draws of the two inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundReport {
    pub analytic: f64,
    pub mc_estimate: f64,
    pub mc_std_err: f64,
}

pub fn check_lower_bound(
    xi1: &UncertainInput,
    xi2: &UncertainInput,
    theta: &[f64],
    samples: usize,
    seed: u64,
) -> Result<LowerBoundReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 Monte Carlo samples".into()));
    }
    let analytic = uncertain_correlation(xi1, xi2, theta, None)?;
    let p = xi1.dim();
    let r1 = psd_sqrt(&xi1.covariance);
    let r2 = psd_sqrt(&xi2.covariance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z1 = DVector::zeros(p);
    let mut z2 = DVector::zeros(p);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        for r in 0..p {
            z1[r] = StandardNormal.sample(&mut rng);
            z2[r] = StandardNormal.sample(&mut rng);
        }
        let x1 = &xi1.mean + &r1 * &z1;
        let x2 = &xi2.mean + &r2 * &z2;
        let k = correlation_from_moments((0..p).map(|r| (x1[r] - x2[r], 0.0)), theta);
        sum += k;
        sum_sq += k * k;
    }
    let v = samples as f64;
    let mc_estimate = sum / v;
    let var = ((sum_sq - v * mc_estimate * mc_estimate) / (v - 1.0)).max(0.0);
    Ok(LowerBoundReport {
        analytic,
        mc_estimate,
        mc_std_err: (var / v).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::{gaussian_correlation, train, FitConfig};
    use proptest::prelude::*;

    fn scalar(mean: f64, var: f64) -> UncertainInput {
        UncertainInput::diagonal(&[mean], &[var]).unwrap()
    }

    fn f2_emulator() -> Emulator {
        let design = Design::equally_spaced(8, (-0.5, 2.5)).unwrap();
        let y = DMatrix::from_iterator(
            8,
            1,
            design.native().iter().map(|&x| (x / 2.0).exp() - (5.0 * x).sin()),
        );
        train(design, y, RegressionBasis::Linear, &FitConfig::default()).unwrap()
    }

    #[test]
    fn scalar_hand_value() {
        let c = uncertain_correlation(&scalar(0.0, 0.5), &scalar(0.0, 0.5), &[1.0], None).unwrap();
        assert!((c - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn same_variable_has_unit_correlation() {
        let x = UncertainInput::new(
            DVector::from_column_slice(&[0.3, -0.2]),
            DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.2]),
        )
        .unwrap();
        let c = uncertain_correlation(&x, &x, &[0.5, 0.7], Some(&x.covariance)).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn degenerate_inputs_match_gaussian_kernel() {
        let a = [0.1, 0.9];
        let b = [-0.4, 0.2];
        let theta = [0.3, 1.1];
        let u = uncertain_correlation(
            &UncertainInput::known(&a),
            &UncertainInput::known(&b),
            &theta,
            None,
        )
        .unwrap();
        assert_eq!(u, gaussian_correlation(&a, &b, &theta).unwrap());
    }

    #[test]
    fn rejects_bad_theta_and_negative_difference_variance() {
        let x = scalar(0.0, 0.1);
        assert!(uncertain_correlation(&x, &x, &[0.0], None).is_err());
        let cross = DMatrix::from_element(1, 1, 1.0);
        assert!(uncertain_correlation(&x, &x, &[1.0], Some(&cross)).is_err());
    }

    #[test]
    fn cross_vector_hand_values() {
        let design = Design::equally_spaced(3, (0.0, 2.0)).unwrap();
        // scaled points -1, 0, 1; native variance 0.25 is scaled variance 0.25
        let xi = scalar(1.0, 0.25);
        let c = cross_correlation_vector(&xi, &design, &[1.0]).unwrap();
        let expect = [(-1.25f64).exp(), (-0.25f64).exp(), (-1.25f64).exp()];
        for (a, b) in c.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let at_run = cross_correlation_vector(&UncertainInput::known(&[2.0]), &design, &[0.7]).unwrap();
        assert_eq!(at_run[2], 1.0);
    }

    #[test]
    fn inflating_variance_lowers_every_correlation() {
        let design = Design::equally_spaced(5, (0.0, 1.0)).unwrap();
        let lo = cross_correlation_vector(&scalar(0.3, 0.01), &design, &[0.4]).unwrap();
        let hi = cross_correlation_vector(&scalar(0.3, 0.02), &design, &[0.4]).unwrap();
        assert!(lo.iter().zip(hi.iter()).all(|(a, b)| b < a));
    }

    #[test]
    fn linear_basis_moments() {
        let xi = UncertainInput::diagonal(&[0.5, -1.0], &[1.0, 4.0]).unwrap();
        let m = basis_moments(&xi, &RegressionBasis::Linear).unwrap();
        assert_eq!(m.var_g, DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, 1.0, 4.0])));
        assert_eq!(m.mean_g.as_slice(), &[1.0, 0.5, -1.0]);
        let identity = &m.mean_ggt - &m.mean_g * m.mean_g.transpose();
        assert!((identity - &m.var_g).amax() < 1e-10);
        let c = basis_moments(&xi, &RegressionBasis::Constant).unwrap();
        assert_eq!((c.mean_g[0], c.var_g[(0, 0)], c.mean_ggt[(0, 0)]), (1.0, 0.0, 1.0));
        assert!(matches!(
            basis_moments(&xi, &RegressionBasis::Custom(vec![vec![0, 0], vec![2, 0]])),
            Err(Error::UnsupportedBasis(_))
        ));
    }

    #[test]
    fn mean_w_is_block_row() {
        let xi = UncertainInput::known(&[0.2]);
        let m = basis_moments(&xi, &RegressionBasis::Linear).unwrap();
        let w = m.mean_w(2);
        assert_eq!(w, DMatrix::from_row_slice(2, 4, &[1.0, 0.2, 0.0, 0.0, 0.0, 0.0, 1.0, 0.2]));
    }

    #[test]
    fn known_input_matches_predict() {
        let em = f2_emulator();
        for x in [-0.5, 0.13, 1.0, 2.2, 2.5] {
            let a = em.predict(&[x]).unwrap();
            let b = uible_predict(&em, &UncertainInput::known(&[x])).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn variance_grows_with_input_variance() {
        let em = f2_emulator();
        let theta = em.hyperparameters().theta[0];
        // native variance = scaled variance / scale^2, scale = 2/3
        let to_native = 9.0 / 4.0;
        for mean in [0.2, 1.1, 1.9] {
            let mut last = 0.0;
            for f in [0.0, 0.01, 0.1, 1.0] {
                let xi = scalar(mean, f * theta * theta * to_native);
                let v = uible_predict(&em, &xi).unwrap().covariance[(0, 0)];
                assert!(v >= last * (1.0 - 1e-9), "mean {mean}, factor {f}: {v} < {last}");
                last = v;
            }
        }
    }

    #[test]
    fn custom_basis_needs_supplied_moments() {
        let design = Design::equally_spaced(6, (0.0, 1.0)).unwrap();
        let y = DMatrix::from_iterator(6, 1, design.native().iter().map(|x| x * x));
        let basis = RegressionBasis::Custom(vec![vec![0], vec![1]]);
        let em = train(design, y, basis, &FitConfig::default()).unwrap();
        let xi = scalar(0.5, 0.01);
        assert!(matches!(uible_predict(&em, &xi), Err(Error::UnsupportedBasis(_))));
        let moments = basis_moments(&xi.scaled_to(em.design()), &RegressionBasis::Linear).unwrap();
        let supplied = uible_predict_with_moments(&em, &xi, &moments).unwrap();
        assert!(supplied.covariance[(0, 0)] > 0.0);
    }

    #[test]
    fn psd_report_cases() {
        let specs: Vec<_> = [-0.5, 0.0, 0.7].iter().map(|&m| UncertainInput::known(&[m])).collect();
        assert!(check_kernel_psd(&specs, &[0.5]).unwrap().min_eigenvalue > 0.0);
        let x = scalar(0.1, 0.3);
        let twice = [x.clone(), x.clone()];
        let report = check_kernel_psd_with(&twice, &[0.5], |_, _| Some(x.covariance.clone())).unwrap();
        assert!(report.min_eigenvalue.abs() < 1e-12);
    }

    #[test]
    fn lower_bound_cases() {
        let known = check_lower_bound(
            &UncertainInput::known(&[0.2]),
            &UncertainInput::known(&[-0.1]),
            &[0.8],
            10,
            1,
        )
        .unwrap();
        assert_eq!(known.analytic, known.mc_estimate);
        let r = check_lower_bound(&scalar(0.0, 1.0), &scalar(0.0, 1.0), &[1.0], 100_000, 3).unwrap();
        assert!((r.analytic - (-2.0f64).exp()).abs() < 1e-15);
        assert!(r.analytic <= r.mc_estimate);
    }

    #[test]
    fn small_negative_eigenvalues_are_clamped() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 + 1e-9, 1.0 + 1e-9, 1.0]);
        let xi = UncertainInput::new(DVector::zeros(2), cov).unwrap();
        assert!(min_eigenvalue(&xi.covariance) >= -1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(UncertainInput::new(DVector::zeros(2), bad).is_err());
    }

    proptest! {
        #[test]
        fn correlation_is_symmetric(
            m1 in proptest::collection::vec(-1.0f64..1.0, 2),
            m2 in proptest::collection::vec(-1.0f64..1.0, 2),
            v1 in proptest::collection::vec(0.0f64..0.5, 2),
            v2 in proptest::collection::vec(0.0f64..0.5, 2),
            c in -0.1f64..0.1,
            theta in proptest::collection::vec(0.1f64..2.0, 2),
        ) {
            let a = UncertainInput::diagonal(&m1, &v1).unwrap();
            let b = UncertainInput::diagonal(&m2, &v2).unwrap();
            let cross = DMatrix::from_row_slice(2, 2, &[0.0, c, -c, 0.0]);
            let ab = uncertain_correlation(&a, &b, &theta, Some(&cross)).unwrap();
            let ba = uncertain_correlation(&b, &a, &theta, Some(&cross.transpose())).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab > 0.0 && ab <= 1.0);
        }
    }
}
