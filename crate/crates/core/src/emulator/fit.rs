//! Generalised least squares for the regression coefficients and maximum
//! (profile) likelihood for the correlation lengths.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::correlation_matrix_unchecked;
use super::{Design, Hyperparameters, RegressionBasis};
use crate::belief::{SecondOrderBelief, SpdFactor};
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;
const CONSTANT_OUTPUT_TOL: f64 = 1e-14;
const SIGMA2_FLOOR: f64 = 1e-12;

/// Posterior of the regression coefficients under a vague prior:
/// `E_F[beta] = (G'C^-1 G)^-1 G'C^-1 F` per output column, and
/// `Var_F[beta] = sigma2 (G'C^-1 G)^-1` per output block.
#[derive(Debug, Clone)]
pub struct GlsPosterior {
    /// `m x q`, one column per output.
    pub beta: DMatrix<f64>,
    /// `(G'C^-1 G)^-1`, shared across outputs.
    pub unscaled_cov: DMatrix<f64>,
}

impl GlsPosterior {
    /// Belief over `vec(B)` (columns stacked), with block-diagonal covariance
    /// `sigma2_k (G'C^-1 G)^-1`.
    pub fn belief(&self, sigma2: &[f64]) -> SecondOrderBelief {
        let (m, q) = self.beta.shape();
        let mean = DVector::from_iterator(m * q, self.beta.iter().cloned());
        let mut cov = DMatrix::zeros(m * q, m * q);
        for (k, s2) in sigma2.iter().enumerate().take(q) {
            cov.view_mut((k * m, k * m), (m, m))
                .copy_from(&(&self.unscaled_cov * *s2));
        }
        SecondOrderBelief::from_computed(mean, cov)
    }
}

/// GLS quantities kept by a trained emulator.
#[derive(Debug, Clone)]
pub(crate) struct GlsFit {
    pub posterior: GlsPosterior,
    /// `L^-1 G` for the Cholesky factor `L` of `C`.
    pub whitened_g: DMatrix<f64>,
    /// `L^-1 (F - G beta)`
    pub whitened_residual: DMatrix<f64>,
    /// Maximum likelihood scale `r'C^-1 r / n` per output.
    pub sigma2_hat: Vec<f64>,
}

/// GLS estimate of the regression coefficients for correlation matrix `c`.
pub fn gls_posterior(
    g: &DMatrix<f64>,
    c: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<GlsPosterior> {
    let factor = SpdFactor::new(c, "correlation matrix")?;
    Ok(gls_with_factor(g, &factor, f)?.posterior)
}

pub(crate) fn gls_with_factor(
    g: &DMatrix<f64>,
    c_factor: &SpdFactor,
    f: &DMatrix<f64>,
) -> Result<GlsFit> {
    let (n, m) = g.shape();
    if f.nrows() != n || c_factor.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "GLS rows",
            expected: n,
            actual: if f.nrows() != n { f.nrows() } else { c_factor.dim() },
        });
    }
    if n < m {
        return Err(Error::InvalidArgument(format!(
            "GLS needs at least as many runs as regression terms ({n} < {m})"
        )));
    }
    let whitened_g = c_factor.solve_lower(g);
    let sv = whitened_g.clone().singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    if !(smin > RANK_TOL * smax) {
        return Err(Error::InvalidArgument(
            "regressor matrix G is rank deficient".into(),
        ));
    }
    let gram = whitened_g.tr_mul(&whitened_g);
    let gram_factor = SpdFactor::new(&gram, "G'C^-1 G")?;
    let whitened_f = c_factor.solve_lower(f);
    let beta = gram_factor.solve(&whitened_g.tr_mul(&whitened_f));
    let whitened_residual = &whitened_f - &whitened_g * &beta;
    let sigma2_hat = whitened_residual
        .column_iter()
        .map(|r| r.norm_squared() / n as f64)
        .collect();
    Ok(GlsFit {
        posterior: GlsPosterior {
            beta,
            unscaled_cov: gram_factor.inverse(),
        },
        whitened_g,
        whitened_residual,
        sigma2_hat,
    })
}

/// Settings for training: hyperparameter search box, nugget and optional
/// fixed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Box for each correlation length, in scaled input units.
    pub theta_bounds: (f64, f64),
    /// Relative diagonal jitter added to the correlation matrix.
    pub nugget: f64,
    /// Fixed correlation lengths; skips the likelihood search.
    pub theta: Option<Vec<f64>>,
    /// Fixed scale variances (one per output); profiled when absent.
    pub sigma2: Option<Vec<f64>>,
    /// Seeding grid points per dimension (grid covers at most three
    /// dimensions; larger inputs use a Latin hypercube of the same size).
    pub grid_points: usize,
    /// Number of best grid points refined by local search.
    pub local_starts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Seed of the seeding Latin hypercube used for more than three inputs.
    #[serde(default)]
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            theta_bounds: (0.05, 10.0),
            nugget: 1e-8,
            theta: None,
            sigma2: None,
            grid_points: 5,
            local_starts: 3,
            max_iterations: 400,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

/// Outcome of the likelihood search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLog {
    pub log_likelihood: f64,
    pub evaluations: usize,
    /// False when the correlation lengths were supplied rather than fitted.
    pub fitted: bool,
}

/// Concentrated log-likelihood at one set of correlation lengths.
#[derive(Debug, Clone)]
pub struct ProfileLikelihood {
    pub log_likelihood: f64,
    pub sigma2: Vec<f64>,
    pub beta: DMatrix<f64>,
}

/// Log-likelihood with `beta` profiled by GLS and each output's scale
/// variance set to its maximum likelihood value `r'C^-1 r / n`:
///
/// ```text
/// l(theta) = -sum_k n/2 (ln(2 pi sigma2_k) + 1) - q/2 ln|C|
/// ```
pub fn profile_log_likelihood(
    design: &Design,
    outputs: &DMatrix<f64>,
    basis: &RegressionBasis,
    theta: &[f64],
    nugget: f64,
) -> Result<ProfileLikelihood> {
    let g = basis.regressors(design.scaled());
    let floors = sigma2_floors(outputs);
    profile_core(design.scaled(), &g, outputs, theta, nugget, &floors)
}

fn profile_core(
    points: &DMatrix<f64>,
    g: &DMatrix<f64>,
    outputs: &DMatrix<f64>,
    theta: &[f64],
    nugget: f64,
    floors: &[f64],
) -> Result<ProfileLikelihood> {
    super::kernel::check_theta(theta)?;
    let c = correlation_matrix_unchecked(points, theta, nugget);
    let factor = SpdFactor::new(&c, "correlation matrix")?;
    let fit = gls_with_factor(g, &factor, outputs)?;
    let n = outputs.nrows() as f64;
    let q = outputs.ncols() as f64;
    let sigma2: Vec<f64> = fit
        .sigma2_hat
        .iter()
        .zip(floors)
        .map(|(s, fl)| s.max(*fl))
        .collect();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let ll = -sigma2
        .iter()
        .map(|s| 0.5 * n * (ln2pi + s.ln() + 1.0))
        .sum::<f64>()
        - 0.5 * q * factor.log_det();
    Ok(ProfileLikelihood {
        log_likelihood: ll,
        sigma2,
        beta: fit.posterior.beta,
    })
}

pub(crate) fn sample_variances(outputs: &DMatrix<f64>) -> Vec<f64> {
    outputs
        .column_iter()
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

fn sigma2_floors(outputs: &DMatrix<f64>) -> Vec<f64> {
    sample_variances(outputs)
        .into_iter()
        .map(|v| SIGMA2_FLOOR * v)
        .collect()
}

/// Maximum likelihood correlation lengths and scale variances.
///
/// The search runs in log-length space over the configured box: a seeding
/// grid of `grid_points^min(p,3)` candidates is evaluated, and the best
/// `local_starts` of them are refined by a bounded Nelder-Mead search. The
/// best refined point wins; on exact ties the earliest start is kept.
pub fn fit_hyperparameters(
    design: &Design,
    outputs: &DMatrix<f64>,
    basis: &RegressionBasis,
    config: &FitConfig,
) -> Result<(Hyperparameters, FitLog)> {
    let p = design.p();
    let m = basis.len(p);
    if design.n() <= m {
        return Err(Error::FitFailed(format!(
            "need more runs than regression terms ({} <= {m})",
            design.n()
        )));
    }
    for (k, v) in sample_variances(outputs).iter().enumerate() {
        if *v < CONSTANT_OUTPUT_TOL {
            return Err(Error::FitFailed(format!(
                "output y{} is constant (sample variance {v:e}); no correlation length is identifiable",
                k + 1
            )));
        }
    }
    let g = basis.regressors(design.scaled());
    let floors = sigma2_floors(outputs);
    let points = design.scaled();
    let eval = |theta: &[f64]| profile_core(points, &g, outputs, theta, config.nugget, &floors);

    if let Some(theta) = &config.theta {
        if theta.len() != p {
            return Err(Error::DimensionMismatch {
                context: "supplied theta",
                expected: p,
                actual: theta.len(),
            });
        }
        let prof = eval(theta)?;
        let sigma2 = config.sigma2.clone().unwrap_or(prof.sigma2);
        return Ok((
            Hyperparameters {
                sigma2,
                theta: theta.clone(),
                nugget: config.nugget,
            },
            FitLog {
                log_likelihood: prof.log_likelihood,
                evaluations: 1,
                fitted: false,
            },
        ));
    }

    let (lo, hi) = config.theta_bounds;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "theta bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    let (ulo, uhi) = (lo.ln(), hi.ln());
    let mut evaluations = 0usize;
    let mut objective = |u: &[f64]| -> f64 {
        evaluations += 1;
        let theta: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        match eval(&theta) {
            Ok(prof) if prof.log_likelihood.is_finite() => -prof.log_likelihood,
            _ => f64::INFINITY,
        }
    };

    let seeds = seed_points(p, config.grid_points.max(2), ulo, uhi, config.seed);
    let mut scored: Vec<(usize, f64)> = seeds
        .iter()
        .enumerate()
        .map(|(i, u)| (i, objective(u)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));

    let step = (uhi - ulo) / (2.0 * (config.grid_points.max(2) - 1) as f64);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(idx, value) in scored.iter().take(config.local_starts.max(1)) {
        if !value.is_finite() {
            continue;
        }
        let (u, v) = nelder_mead(
            &mut objective,
            &seeds[idx],
            step,
            ulo,
            uhi,
            config.max_iterations,
            config.tolerance,
        );
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((u, v));
        }
    }
    let (u, _) = best.ok_or_else(|| {
        Error::FitFailed("no correlation length gave a finite likelihood".into())
    })?;
    let theta: Vec<f64> = u.iter().map(|v| v.exp()).collect();
    let prof = eval(&theta)?;
    Ok((
        Hyperparameters {
            sigma2: config.sigma2.clone().unwrap_or(prof.sigma2),
            theta,
            nugget: config.nugget,
        },
        FitLog {
            log_likelihood: prof.log_likelihood,
            evaluations,
            fitted: true,
        },
    ))
}

fn seed_points(p: usize, per_dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let level = |k: usize| lo + (hi - lo) * k as f64 / (per_dim - 1) as f64;
    if p <= 3 {
        let total = per_dim.pow(p as u32);
        (0..total)
            .map(|mut idx| {
                (0..p)
                    .map(|_| {
                        let k = idx % per_dim;
                        idx /= per_dim;
                        level(k)
                    })
                    .collect()
            })
            .collect()
    } else {
        let count = per_dim.pow(3);
        let lhs = super::design::maximin_lhs(count, p, seed, 20 * count)
            .expect("valid LHS arguments");
        (0..count)
            .map(|i| {
                (0..p)
                    .map(|r| lo + (hi - lo) * (lhs.scaled()[(i, r)] + 1.0) / 2.0)
                    .collect()
            })
            .collect()
    }
}

/// Bounded Nelder-Mead minimisation; vertices are projected onto the box.
fn nelder_mead(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    lo: f64,
    hi: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, f64) {
    let p = start.len();
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.clamp(lo, hi)).collect() };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    let x0 = clamp(start.to_vec());
    let f0 = f(&x0);
    simplex.push((x0.clone(), f0));
    for r in 0..p {
        let mut x = x0.clone();
        // step inward when the start sits on the upper face
        x[r] = if x[r] + step <= hi { x[r] + step } else { x[r] - step };
        let x = clamp(x);
        let fx = f(&x);
        simplex.push((x, fx));
    }

    for _ in 0..max_iter * p.max(1) {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_spread = (simplex[p].1 - simplex[0].1).abs();
        let x_spread = simplex
            .iter()
            .skip(1)
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= tol * (1.0 + simplex[0].1.abs()) && x_spread <= 1e-8 {
            break;
        }
        let centroid: Vec<f64> = (0..p)
            .map(|r| simplex[..p].iter().map(|(x, _)| x[r]).sum::<f64>() / p as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(&simplex[p].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[p - 1].1 {
            simplex[p] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[p].1 {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[p].1.min(fr) {
                simplex[p] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = clamp(
                        best.iter()
                            .zip(&vertex.0)
                            .map(|(b, v)| b + 0.5 * (v - b))
                            .collect(),
                    );
                    let fx = f(&x);
                    *vertex = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_correlation_constant_basis_gives_sample_mean() {
        let g = DMatrix::from_element(4, 1, 1.0);
        let f = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 4.0, 9.0]);
        let post = gls_posterior(&g, &DMatrix::identity(4, 4), &f).unwrap();
        assert!((post.beta[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((post.unscaled_cov[(0, 0)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn identity_correlation_line_through_two_points() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let f = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let post = gls_posterior(&g, &DMatrix::identity(2, 2), &f).unwrap();
        assert!(post.beta[(0, 0)].abs() < 1e-14);
        assert!((post.beta[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_regressors_rejected() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let f = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(gls_posterior(&g, &DMatrix::identity(3, 3), &f).is_err());
    }

    #[test]
    fn belief_is_block_diagonal() {
        let post = GlsPosterior {
            beta: DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]),
            unscaled_cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]),
        };
        let b = post.belief(&[2.0, 10.0]);
        assert_eq!(b.mean.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(b.covariance[(1, 1)], 4.0);
        assert_eq!(b.covariance[(3, 3)], 20.0);
        assert_eq!(b.covariance[(0, 2)], 0.0);
    }

    #[test]
    fn nelder_mead_finds_bounded_quadratic_minimum() {
        let mut f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.2).powi(2);
        let (x, v) = nelder_mead(&mut f, &[1.0, 1.0], 0.5, -2.0, 2.0, 500, 1e-14);
        assert!((x[0] - 0.3).abs() < 1e-5 && (x[1] + 0.2).abs() < 1e-5, "{x:?}");
        assert!(v < 1e-9);
        // minimum outside the box lands on the face
        let mut g = |x: &[f64]| (x[0] - 5.0).powi(2);
        let (x, _) = nelder_mead(&mut g, &[0.0], 0.5, -1.0, 1.0, 500, 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn seeding_grid_size() {
        assert_eq!(seed_points(1, 5, 0.0, 1.0, 0).len(), 5);
        assert_eq!(seed_points(2, 5, 0.0, 1.0, 0).len(), 25);
        assert_eq!(seed_points(3, 5, 0.0, 1.0, 0).len(), 125);
        assert_eq!(seed_points(4, 5, 0.0, 1.0, 0).len(), 125);
    }
}
