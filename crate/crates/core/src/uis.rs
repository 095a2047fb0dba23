//! Propagating an uncertain input through an emulator by sampling.
//!
//! Draws `x_1..x_v` from a distribution with the input's mean and variance,
//! then combines the emulator's adjusted moments at each draw:
//!
//! ```text
//! mean = (1/v) sum_k m_k
//! var  = (1/v) sum_k (m_k - mean)(m_k - mean)'   (from the input)
//!      + (1/v) sum_k V_k                          (from the emulator)
//! ```
//!
//! No simulator runs are needed. Each call owns a counter-based RNG stream,
//! so results do not depend on evaluation order or thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::belief::{psd_sqrt, SecondOrderBelief};
use crate::emulator::Emulator;
use crate::error::{Error, Result};
use crate::uible::UncertainInput;

/// Distribution used to draw inputs with a given mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputDistribution {
    Normal,
    /// Independent uniforms on `mu +- sqrt(3 sigma^2)`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub distribution: InputDistribution,
    /// Number of draws.
    pub v: usize,
    pub seed: u64,
    /// Draw in mirrored pairs (`z, -z` for normal; `u, a + b - u` for uniform).
    pub antithetic: bool,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self {
            distribution: InputDistribution::Normal,
            v: 100,
            seed: 0,
            antithetic: false,
        }
    }
}

impl SamplingPolicy {
    pub fn normal(v: usize, seed: u64) -> Self {
        Self {
            v,
            seed,
            ..Self::default()
        }
    }

    pub fn uniform(v: usize, seed: u64) -> Self {
        Self {
            distribution: InputDistribution::Uniform,
            v,
            seed,
            antithetic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v < 2 {
            return Err(Error::InvalidArgument(format!(
                "sampling needs v >= 2 draws, got {}",
                self.v
            )));
        }
        Ok(())
    }

    /// The RNG for one stream of this policy. Streams are addressed by a
    /// counter (for example a prediction point and node), never by call order.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Stream index for prediction point `point` at network node `node`.
pub fn stream_id(point: usize, node: usize) -> u64 {
    ((point as u64) << 16) | (node as u64 & 0xffff)
}

/// Draws `policy.v` inputs (one per row) on stream 0.
pub fn sample_inputs(xi: &UncertainInput, policy: &SamplingPolicy) -> Result<DMatrix<f64>> {
    sample_inputs_stream(xi, policy, 0)
}

/// Draws `policy.v` inputs on the given stream. Uniform sampling requires a
/// diagonal covariance.
pub fn sample_inputs_stream(
    xi: &UncertainInput,
    policy: &SamplingPolicy,
    stream: u64,
) -> Result<DMatrix<f64>> {
    policy.validate()?;
    let p = xi.dim();
    let v = policy.v;
    let mut rng = policy.rng(stream);
    let mut out = DMatrix::zeros(v, p);
    match policy.distribution {
        InputDistribution::Normal => {
            let root = psd_sqrt(&xi.covariance);
            let mut z = DVector::zeros(p);
            for k in 0..v {
                if policy.antithetic && k % 2 == 1 {
                    z.neg_mut();
                } else {
                    for r in 0..p {
                        z[r] = rng.sample(StandardNormal);
                    }
                }
                let x = &xi.mean + &root * &z;
                out.set_row(k, &x.transpose());
            }
        }
        InputDistribution::Uniform => {
            if !xi.is_diagonal() {
                return Err(Error::InvalidArgument(
                    "uniform sampling needs a diagonal input covariance".into(),
                ));
            }
            let half: Vec<f64> = (0..p).map(|r| (3.0 * xi.covariance[(r, r)]).sqrt()).collect();
            let mut u = vec![0.0; p];
            for k in 0..v {
                if policy.antithetic && k % 2 == 1 {
                    u.iter_mut().for_each(|ur| *ur = 1.0 - *ur);
                } else {
                    u.iter_mut().for_each(|ur| *ur = rng.random::<f64>());
                }
                for r in 0..p {
                    let a = xi.mean[r] - half[r];
                    out[(k, r)] = a + 2.0 * half[r] * u[r];
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of sampling an uncertain input through an emulator.
#[derive(Debug, Clone, PartialEq)]
pub struct UisResult {
    /// Mean and total covariance (`var_from_input + var_from_emulator`).
    pub belief: SecondOrderBelief,
    /// Spread of the per-draw adjusted means.
    pub var_from_input: DMatrix<f64>,
    /// Average of the per-draw adjusted covariances.
    pub var_from_emulator: DMatrix<f64>,
    pub samples: usize,
    /// Draws outside the emulator's training box.
    pub extrapolated: usize,
    /// True when uniform sampling was requested for a correlated input and
    /// normal sampling was used instead.
    pub fell_back: bool,
}

/// Per-draw moments, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct UisDraws {
    pub inputs: DMatrix<f64>,
    /// `v x q` adjusted means.
    pub means: DMatrix<f64>,
    /// `v x q` adjusted variances.
    pub variances: DMatrix<f64>,
}

/// Sampling through an arbitrary second-order model of the downstream
/// simulator: `eval` returns its mean and covariance at a known input.
/// Returns the combined result and the per-draw moments.
pub fn uis_evaluate(
    xi: &UncertainInput,
    policy: &SamplingPolicy,
    stream: u64,
    in_domain: impl Fn(&[f64]) -> bool,
    eval: impl Fn(&[f64]) -> Result<SecondOrderBelief>,
) -> Result<(UisResult, UisDraws)> {
    let mut used = *policy;
    let mut fell_back = false;
    if used.distribution == InputDistribution::Uniform && !xi.is_diagonal() {
        used.distribution = InputDistribution::Normal;
        fell_back = true;
    }
    let inputs = sample_inputs_stream(xi, &used, stream)?;
    let v = used.v;
    let mut beliefs = Vec::with_capacity(v);
    let mut extrapolated = 0;
    for k in 0..v {
        let x: Vec<f64> = inputs.row(k).iter().cloned().collect();
        if !in_domain(&x) {
            extrapolated += 1;
        }
        beliefs.push(eval(&x)?);
    }
    let q = beliefs[0].dim();
    let inv_v = 1.0 / v as f64;

    // Accumulate deviations from the first draw so that identical draws give
    // the first draw's moments exactly.
    let m1 = &beliefs[0].mean;
    let v1 = &beliefs[0].covariance;
    let mut mean_shift = DVector::zeros(q);
    let mut cov_shift = DMatrix::zeros(q, q);
    for b in &beliefs {
        mean_shift += &b.mean - m1;
        cov_shift += &b.covariance - v1;
    }
    let mean = m1 + mean_shift * inv_v;
    let var_from_emulator = v1 + cov_shift * inv_v;
    let mut var_from_input = DMatrix::zeros(q, q);
    for b in &beliefs {
        let d = &b.mean - &mean;
        var_from_input += &d * d.transpose();
    }
    var_from_input *= inv_v;
    let total = &var_from_input + &var_from_emulator;

    let means = DMatrix::from_fn(v, q, |k, j| beliefs[k].mean[j]);
    let variances = DMatrix::from_fn(v, q, |k, j| beliefs[k].covariance[(j, j)]);
    Ok((
        UisResult {
            belief: SecondOrderBelief::from_computed(mean, total),
            var_from_input,
            var_from_emulator,
            samples: v,
            extrapolated,
            fell_back,
        },
        UisDraws {
            inputs,
            means,
            variances,
        },
    ))
}

/// Samples an uncertain input (native units) through an emulator on stream 0.
pub fn uis_predict(
    emulator: &Emulator,
    xi: &UncertainInput,
    policy: &SamplingPolicy,
) -> Result<UisResult> {
    uis_predict_stream(emulator, xi, policy, 0)
}

pub fn uis_predict_stream(
    emulator: &Emulator,
    xi: &UncertainInput,
    policy: &SamplingPolicy,
    stream: u64,
) -> Result<UisResult> {
    Ok(uis_draws(emulator, xi, policy, stream)?.0)
}

fn uis_draws(
    emulator: &Emulator,
    xi: &UncertainInput,
    policy: &SamplingPolicy,
    stream: u64,
) -> Result<(UisResult, UisDraws)> {
    emulator.check_input(xi.dim())?;
    uis_evaluate(
        xi,
        policy,
        stream,
        |x| !emulator.is_extrapolation(x),
        |x| emulator.predict(x),
    )
}

/// Sample variance (divisor `v - 1`) of the per-draw adjusted variances, one
/// value per output.
pub fn uis_variance_of_variance(
    emulator: &Emulator,
    xi: &UncertainInput,
    policy: &SamplingPolicy,
) -> Result<DVector<f64>> {
    let (_, draws) = uis_draws(emulator, xi, policy, 0)?;
    Ok(column_sample_variances(&draws.variances))
}

pub(crate) fn column_sample_variances(m: &DMatrix<f64>) -> DVector<f64> {
    let v = m.nrows() as f64;
    DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|c| {
            let mean = c.mean();
            c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v - 1.0)
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::{train, Design, FitConfig, RegressionBasis};

    fn f2_emulator() -> Emulator {
        let design = Design::equally_spaced(8, (-0.5, 2.5)).unwrap();
        let y = DMatrix::from_iterator(
            8,
            1,
            design.native().iter().map(|&x| (x / 2.0).exp() - (5.0 * x).sin()),
        );
        train(design, y, RegressionBasis::Linear, &FitConfig::default()).unwrap()
    }

    fn scalar(mean: f64, var: f64) -> UncertainInput {
        UncertainInput::diagonal(&[mean], &[var]).unwrap()
    }

    #[test]
    fn known_input_rows_equal_mean() {
        let xi = UncertainInput::known(&[0.3, -2.0]);
        for policy in [SamplingPolicy::normal(7, 1), SamplingPolicy::uniform(7, 1)] {
            let s = sample_inputs(&xi, &policy).unwrap();
            for k in 0..7 {
                assert_eq!(s.row(k).iter().cloned().collect::<Vec<_>>(), vec![0.3, -2.0]);
            }
        }
    }

    #[test]
    fn normal_draws_match_moments() {
        let xi = scalar(1.5, 0.4);
        let s = sample_inputs(&xi, &SamplingPolicy::normal(100_000, 11)).unwrap();
        let mean = s.column(0).mean();
        let var = s.column(0).variance();
        let se = (0.4f64 / 100_000.0).sqrt();
        assert!((mean - 1.5).abs() < 4.0 * se);
        assert!((var - 0.4).abs() < 0.05 * 0.4);
    }

    #[test]
    fn uniform_support_is_moment_matched() {
        let xi = scalar(0.0, 1.0 / 3.0);
        let s = sample_inputs(&xi, &SamplingPolicy::uniform(20_000, 2)).unwrap();
        let (lo, hi) = (s.min(), s.max());
        assert!(lo >= -1.0 && hi <= 1.0);
        assert!(lo < -0.999 && hi > 0.999);
    }

    #[test]
    fn uniform_rejects_correlated_input_but_predict_falls_back() {
        let xi = UncertainInput::new(
            DVector::from_column_slice(&[0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        assert!(sample_inputs(&xi, &SamplingPolicy::uniform(10, 0)).is_err());
        let (r, _) = uis_evaluate(&xi, &SamplingPolicy::uniform(10, 0), 0, |_| true, |x| {
            Ok(SecondOrderBelief::point(DVector::from_element(1, x[0] + x[1])))
        })
        .unwrap();
        assert!(r.fell_back);
    }

    #[test]
    fn known_input_equals_predict() {
        let em = f2_emulator();
        for v in [2, 5, 100] {
            for x in [-0.3, 1.234, 2.5] {
                let r = uis_predict(&em, &UncertainInput::known(&[x]), &SamplingPolicy::normal(v, 4))
                    .unwrap();
                assert_eq!(r.belief, em.predict(&[x]).unwrap());
                assert_eq!(r.var_from_input[(0, 0)], 0.0);
            }
        }
    }

    #[test]
    fn deterministic_and_decomposed() {
        let em = f2_emulator();
        let xi = scalar(1.0, 0.05);
        let policy = SamplingPolicy::normal(200, 42);
        let a = uis_predict(&em, &xi, &policy).unwrap();
        let b = uis_predict(&em, &xi, &policy).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.belief.covariance, &a.var_from_input + &a.var_from_emulator);
        assert!(a.var_from_input[(0, 0)] >= 0.0 && a.var_from_emulator[(0, 0)] >= 0.0);
        let other = uis_predict(&em, &xi, &SamplingPolicy::normal(200, 43)).unwrap();
        assert_ne!(a.belief.mean, other.belief.mean);
    }

    #[test]
    fn streams_are_independent_of_call_order() {
        let xi = scalar(0.0, 1.0);
        let policy = SamplingPolicy::normal(5, 9);
        let s3 = sample_inputs_stream(&xi, &policy, stream_id(3, 1)).unwrap();
        let _ = sample_inputs_stream(&xi, &policy, stream_id(2, 1)).unwrap();
        assert_eq!(s3, sample_inputs_stream(&xi, &policy, stream_id(3, 1)).unwrap());
        assert_ne!(s3, sample_inputs_stream(&xi, &policy, stream_id(3, 2)).unwrap());
    }

    #[test]
    fn antithetic_pairs_mirror() {
        let xi = scalar(2.0, 0.5);
        let mut policy = SamplingPolicy::normal(6, 3);
        policy.antithetic = true;
        let s = sample_inputs(&xi, &policy).unwrap();
        for k in (0..6).step_by(2) {
            assert!((s[(k, 0)] + s[(k + 1, 0)] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn means_converge_with_draws() {
        let em = f2_emulator();
        let xi = scalar(1.0, 0.1);
        let mut wins = 0;
        for seed in 0..10 {
            let mean = |v| {
                uis_predict(&em, &xi, &SamplingPolicy::normal(v, seed)).unwrap().belief.mean[0]
            };
            let (a, b, c) = (mean(100), mean(1000), mean(10_000));
            if (c - b).abs() < (b - a).abs() {
                wins += 1;
            }
        }
        assert!(wins >= 8, "{wins}/10");
    }

    #[test]
    fn seeds_agree_within_monte_carlo_error() {
        let em = f2_emulator();
        let xi = scalar(1.0, 0.1);
        let a = uis_predict(&em, &xi, &SamplingPolicy::normal(10_000, 1)).unwrap();
        let b = uis_predict(&em, &xi, &SamplingPolicy::normal(10_000, 2)).unwrap();
        let se = (a.var_from_input[(0, 0)] / 10_000.0).sqrt();
        assert!((a.belief.mean[0] - b.belief.mean[0]).abs() < 4.0 * se);
    }

    #[test]
    fn variance_of_variance_cases() {
        let em = f2_emulator();
        let policy = SamplingPolicy::normal(50, 5);
        let zero = uis_variance_of_variance(&em, &UncertainInput::known(&[1.0]), &policy).unwrap();
        assert_eq!(zero[0], 0.0);
        let xi = scalar(1.0, 0.2);
        let vv = uis_variance_of_variance(&em, &xi, &policy).unwrap();
        let (_, draws) = uis_draws(&em, &xi, &policy, 0).unwrap();
        let vals: Vec<f64> = draws.variances.column(0).iter().cloned().collect();
        let m = vals.iter().sum::<f64>() / 50.0;
        let oracle = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 49.0;
        assert!((vv[0] - oracle).abs() <= 1e-12 * oracle.max(1e-300));
        // far outside the training box a constant-mean emulator's variance is flat
        let flat = {
            let design = Design::equally_spaced(8, (-0.5, 2.5)).unwrap();
            let y = DMatrix::from_iterator(8, 1, design.native().iter().map(|&x| (5.0 * x).sin()));
            train(design, y, RegressionBasis::Constant, &FitConfig::default()).unwrap()
        };
        let far = uis_variance_of_variance(&flat, &scalar(40.0, 0.01), &policy).unwrap();
        assert!(far[0] < 1e-20);
        assert!(uis_variance_of_variance(&em, &xi, &SamplingPolicy::normal(1, 0)).is_err());
    }

    #[test]
    fn normal_and_uniform_agree_on_the_chain() {
        let em1 = {
            let design = Design::equally_spaced(8, (0.0, 10.0)).unwrap();
            let y = DMatrix::from_iterator(
                8,
                1,
                design.native().iter().map(|&x| 0.2 * x + x.cos()),
            );
            train(design, y, RegressionBasis::Linear, &FitConfig::default()).unwrap()
        };
        let em2 = f2_emulator();
        for i in 0..20 {
            let z = 10.0 * i as f64 / 19.0;
            let x = em1.predict(&[z]).unwrap();
            let xi = UncertainInput::from_belief(&x);
            let n = uis_predict(&em2, &xi, &SamplingPolicy::normal(2000, i as u64)).unwrap();
            let u = uis_predict(&em2, &xi, &SamplingPolicy::uniform(2000, i as u64)).unwrap();
            let pooled = (0.5 * (n.belief.covariance[(0, 0)] + u.belief.covariance[(0, 0)])).sqrt();
            assert!((n.belief.mean[0] - u.belief.mean[0]).abs() < 0.5 * pooled, "z = {z}");
        }
    }
}
