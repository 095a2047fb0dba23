//! Bayes linear emulators of a single simulator.
//!
//! The simulator output is modelled as `f(x) = g(x)'B + u(x)` with a vague
//! prior on the regression coefficients and a residual process whose
//! covariance is `c(x, x') Sigma`, `c` being the Gaussian correlation. Outputs
//! are treated independently (diagonal `Sigma`) but share one design and one
//! set of correlation lengths.

mod basis;
pub mod design;
mod fit;
pub mod io;
mod kernel;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::{SecondOrderBelief, SpdFactor};
use crate::error::{Error, Result};

pub use basis::RegressionBasis;
pub use design::{maximin_lhs, Design};
pub use fit::{
    fit_hyperparameters, gls_posterior, profile_log_likelihood, FitConfig, FitLog, GlsPosterior,
    ProfileLikelihood,
};
pub use kernel::{correlation_matrix, gaussian_correlation};

pub(crate) use kernel::{
    add_coincident_nugget, check_theta, correlation_from_moments, cross_correlation_known,
};

/// Scale variances (one per output), correlation lengths in scaled input
/// units, and the nugget added to the correlation diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub sigma2: Vec<f64>,
    pub theta: Vec<f64>,
    pub nugget: f64,
}

impl Hyperparameters {
    fn validate(&self, p: usize, q: usize) -> Result<()> {
        if self.theta.len() != p {
            return Err(Error::DimensionMismatch {
                context: "theta length",
                expected: p,
                actual: self.theta.len(),
            });
        }
        if self.sigma2.len() != q {
            return Err(Error::DimensionMismatch {
                context: "sigma2 length",
                expected: q,
                actual: self.sigma2.len(),
            });
        }
        kernel::check_theta(&self.theta)?;
        if let Some(s) = self.sigma2.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {s}")));
        }
        if !(self.nugget >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nugget must be >= 0, got {}",
                self.nugget
            )));
        }
        Ok(())
    }
}

/// A trained emulator. Immutable; prediction is safe from many threads.
#[derive(Debug, Clone)]
pub struct Emulator {
    design: Design,
    basis: RegressionBasis,
    hyper: Hyperparameters,
    outputs: DMatrix<f64>,
    gls: GlsPosterior,
    c_factor: SpdFactor,
    /// `L^-1 G`
    whitened_g: DMatrix<f64>,
    /// `C^-1 (F - G beta)`, one column per output.
    weights: DMatrix<f64>,
    fit_log: Option<FitLog>,
}

/// Trains an emulator: fits (or takes) hyperparameters, then adjusts the
/// regression and residual beliefs by the training runs.
pub fn train(
    design: Design,
    outputs: DMatrix<f64>,
    basis: RegressionBasis,
    config: &FitConfig,
) -> Result<Emulator> {
    check_training_data(&design, &outputs, &basis)?;
    let (hyper, log) = fit_hyperparameters(&design, &outputs, &basis, config)?;
    let mut emulator = Emulator::new(design, outputs, basis, hyper)?;
    emulator.fit_log = Some(log);
    Ok(emulator)
}

fn check_training_data(design: &Design, outputs: &DMatrix<f64>, basis: &RegressionBasis) -> Result<()> {
    basis.validate(design.p())?;
    if outputs.nrows() != design.n() {
        return Err(Error::DimensionMismatch {
            context: "training outputs rows",
            expected: design.n(),
            actual: outputs.nrows(),
        });
    }
    if outputs.ncols() == 0 {
        return Err(Error::InvalidArgument("training data has no outputs".into()));
    }
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training outputs must be finite".into()));
    }
    let m = basis.len(design.p());
    if design.n() <= m {
        return Err(Error::InvalidArgument(format!(
            "{} runs leave no residual degrees of freedom for {m} regression terms",
            design.n()
        )));
    }
    Ok(())
}

impl Emulator {
    /// Builds an emulator from known hyperparameters.
    pub fn new(
        design: Design,
        outputs: DMatrix<f64>,
        basis: RegressionBasis,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        check_training_data(&design, &outputs, &basis)?;
        hyper.validate(design.p(), outputs.ncols())?;
        let c = correlation_matrix(&design, &hyper.theta, hyper.nugget)?;
        let c_factor = SpdFactor::new(&c, "correlation matrix")?;
        let g = basis.regressors(design.scaled());
        let fit = fit::gls_with_factor(&g, &c_factor, &outputs)?;
        let weights = c_factor
            .lower()
            .tr_solve_lower_triangular(&fit.whitened_residual)
            .expect("Cholesky factor has a positive diagonal");
        let mut hyper = hyper;
        hyper.nugget += c_factor.jitter();
        Ok(Self {
            design,
            basis,
            hyper,
            outputs,
            gls: fit.posterior,
            c_factor,
            whitened_g: fit.whitened_g,
            weights,
            fit_log: None,
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn basis(&self) -> &RegressionBasis {
        &self.basis
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn fit_log(&self) -> Option<&FitLog> {
        self.fit_log.as_ref()
    }

    pub(crate) fn set_fit_log(&mut self, log: Option<FitLog>) {
        self.fit_log = log;
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    pub fn q(&self) -> usize {
        self.outputs.ncols()
    }

    /// `m x q` adjusted expectation of the regression coefficients.
    pub fn beta(&self) -> &DMatrix<f64> {
        &self.gls.beta
    }

    /// `(G'C^-1 G)^-1`; multiply by an output's `sigma2` for `Var_F[beta]`.
    pub fn beta_unscaled_cov(&self) -> &DMatrix<f64> {
        &self.gls.unscaled_cov
    }

    /// Adjusted belief over `vec(B)`.
    pub fn beta_belief(&self) -> SecondOrderBelief {
        self.gls.belief(&self.hyper.sigma2)
    }

    /// The correlation matrix of the training design (nugget included).
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        correlation_matrix(&self.design, &self.hyper.theta, self.hyper.nugget)
            .expect("validated at construction")
    }

    pub fn regressors(&self) -> DMatrix<f64> {
        self.basis.regressors(self.design.scaled())
    }

    /// Whether a native-unit input lies outside the training bounds.
    pub fn is_extrapolation(&self, x: &[f64]) -> bool {
        !self.design.contains_scaled(&self.design.scale_point(x))
    }

    /// Adjusted mean and variance of the simulator output at a known input
    /// (native units).
    pub fn predict(&self, x: &[f64]) -> Result<SecondOrderBelief> {
        self.check_input(x.len())?;
        Ok(self.predict_scaled(&self.design.scale_point(x)))
    }

    /// As [`predict`](Self::predict), also flagging extrapolation.
    pub fn predict_flagged(&self, x: &[f64]) -> Result<(SecondOrderBelief, bool)> {
        Ok((self.predict(x)?, self.is_extrapolation(x)))
    }

    pub fn predict_scaled(&self, s: &DVector<f64>) -> SecondOrderBelief {
        let mut c = cross_correlation_known(self.design.scaled(), s, &self.hyper.theta);
        add_coincident_nugget(self.design.scaled(), s, self.hyper.nugget, &mut c);
        let g = self.basis.evaluate(s);
        self.adjusted_moments(&c, &g, None)
    }

    /// Prior predictive variance `sigma2 + g(x)' Var_F[beta] g(x)` per output:
    /// the variance reached far from every training run.
    pub fn prior_predictive_variance(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let g = self.basis.evaluate(&self.design.scale_point(x));
        let quad = (g.transpose() * &self.gls.unscaled_cov * &g)[(0, 0)];
        Ok(self.hyper.sigma2.iter().map(|s| s * (1.0 + quad)).collect())
    }

    pub(crate) fn check_input(&self, len: usize) -> Result<()> {
        if len != self.p() {
            return Err(Error::DimensionMismatch {
                context: "emulator input",
                expected: self.p(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Adjusted moments at an input described by its correlations with the
    /// training runs `c`, the expected regressors `E[g]`, and (for uncertain
    /// inputs) `Var[g]`.
    ///
    /// Per output `k`, with `a = L^-1 c` and `r = E[g] - G'C^-1 c`:
    ///
    /// ```text
    /// mean_k  = E[g]' beta_k + c' C^-1 (F_k - G beta_k)
    /// var_kk  = sigma2_k (1 - a'a + r' U r + tr(U Var[g])) + beta_k' Var[g] beta_k
    /// cov_kl  = beta_k' Var[g] beta_l
    /// ```
    ///
    /// where `U = (G'C^-1 G)^-1`. This groups the seven terms of the adjusted
    /// variance at an uncertain input; with `Var[g] = 0` and a known input
    /// it is the usual known-input update.
    pub(crate) fn adjusted_moments(
        &self,
        c: &DVector<f64>,
        mean_g: &DVector<f64>,
        var_g: Option<&DMatrix<f64>>,
    ) -> SecondOrderBelief {
        let q = self.q();
        let a = self.c_factor.solve_lower_vec(c);
        let r = mean_g - self.whitened_g.tr_mul(&a);
        let u = &self.gls.unscaled_cov;
        let residual_part = 1.0 - a.norm_squared();
        let regression_part = (r.transpose() * u * &r)[(0, 0)];

        let mean = DVector::from_iterator(
            q,
            (0..q).map(|k| mean_g.dot(&self.gls.beta.column(k)) + c.dot(&self.weights.column(k))),
        );
        let mut cov = DMatrix::zeros(q, q);
        match var_g {
            None => {
                for k in 0..q {
                    cov[(k, k)] = self.hyper.sigma2[k] * (residual_part + regression_part);
                }
            }
            Some(vg) => {
                let trace = (u * vg).trace();
                let spread = self.gls.beta.transpose() * vg * &self.gls.beta;
                for k in 0..q {
                    for l in 0..q {
                        cov[(k, l)] = spread[(k, l)];
                    }
                    cov[(k, k)] +=
                        self.hyper.sigma2[k] * (residual_part + regression_part + trace);
                }
            }
        }
        SecondOrderBelief::from_computed(mean, cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f1(x: f64) -> f64 {
        0.2 * x + x.cos()
    }

    fn f1_emulator() -> Emulator {
        let design = Design::equally_spaced(8, (0.0, 10.0)).unwrap();
        let y = DMatrix::from_iterator(8, 1, design.native().iter().map(|&x| f1(x)));
        train(design, y, RegressionBasis::Linear, &FitConfig::default()).unwrap()
    }

    #[test]
    fn interpolates_training_runs() {
        let em = f1_emulator();
        let s2 = em.hyperparameters().sigma2[0];
        let nugget = em.hyperparameters().nugget;
        for i in 0..em.n() {
            let x = em.design().native_row(i);
            let pred = em.predict(&x).unwrap();
            let y = em.outputs()[(i, 0)];
            assert!((pred.mean[0] - y).abs() <= 1e-6 * y.abs().max(1.0));
            assert!(pred.covariance[(0, 0)] <= 2.0 * nugget * s2);
        }
    }

    #[test]
    fn nugget_enters_only_at_coincident_runs() {
        let em = f1_emulator();
        let x = em.design().native_row(3);
        let at = em.predict(&x).unwrap();
        assert!((at.mean[0] - em.outputs()[(3, 0)]).abs() < 1e-12);
        // Just off the run the correlation loses the nugget and the mean
        // moves by nugget * C^-1 (F - G beta) at that run.
        let near = em.predict(&[x[0] + 1e-10]).unwrap();
        let jump = em.hyper.nugget * em.weights[(3, 0)];
        assert!(((at.mean[0] - near.mean[0]) - jump).abs() < 1e-9);
    }

    #[test]
    fn f1_grid_is_accurate_and_calibrated() {
        let em = f1_emulator();
        let mut worst = 0.0f64;
        let mut inside = 0;
        for i in 0..1000 {
            let x = 10.0 * i as f64 / 999.0;
            let pred = em.predict(&[x]).unwrap();
            let err = (pred.mean[0] - f1(x)).abs();
            worst = worst.max(err);
            if err <= 3.0 * pred.covariance[(0, 0)].sqrt() {
                inside += 1;
            }
        }
        assert!(worst < 0.1, "max error {worst}");
        assert!(inside >= 950, "coverage {inside}/1000");
    }

    #[test]
    fn training_is_deterministic() {
        let a = f1_emulator();
        let b = f1_emulator();
        assert_eq!(a.hyperparameters(), b.hyperparameters());
        assert_eq!(a.beta(), b.beta());
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn saturated_regression_rejected() {
        let design = Design::equally_spaced(2, (0.0, 1.0)).unwrap();
        let y = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(train(design, y, RegressionBasis::Linear, &FitConfig::default()).is_err());
    }

    #[test]
    fn constant_outputs_fail_to_fit() {
        let design = Design::equally_spaced(5, (0.0, 1.0)).unwrap();
        let y = DMatrix::from_element(5, 1, 3.0);
        assert!(matches!(
            train(design, y, RegressionBasis::Linear, &FitConfig::default()),
            Err(Error::FitFailed(_))
        ));
    }

    #[test]
    fn far_field_variance_approaches_prior_predictive() {
        let design = Design::equally_spaced(6, (0.0, 1.0)).unwrap();
        let y = DMatrix::from_iterator(6, 1, design.native().iter().map(|x| (3.0 * x).sin()));
        let config = FitConfig {
            theta: Some(vec![0.2]),
            ..FitConfig::default()
        };
        let em = train(design, y, RegressionBasis::Linear, &config).unwrap();
        // scaled distance > 10 * theta from every run
        let x = [1.0 + 0.5 * 2.5];
        let v = em.predict(&x).unwrap().covariance[(0, 0)];
        let prior = em.prior_predictive_variance(&x).unwrap()[0];
        assert!((v - prior).abs() <= 0.05 * prior);
        assert!(em.is_extrapolation(&x));
    }

    #[test]
    fn prediction_is_continuous() {
        let em = f1_emulator();
        let base = em.predict(&[3.3]).unwrap();
        let mut last = f64::INFINITY;
        for d in [1e-2, 1e-4, 1e-6, 1e-8] {
            let near = em.predict(&[3.3 + d]).unwrap();
            let diff = (near.mean[0] - base.mean[0]).abs()
                + (near.covariance[(0, 0)] - base.covariance[(0, 0)]).abs();
            assert!(diff <= last);
            last = diff;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn wrong_input_length_is_an_error() {
        let em = f1_emulator();
        assert!(em.predict(&[1.0, 2.0]).is_err());
    }
}
