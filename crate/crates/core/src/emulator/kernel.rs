//! Gaussian correlation and correlation matrices over a design.

use nalgebra::{DMatrix, DVector};

use super::Design;
use crate::error::{Error, Result};

/// `exp{-sum_r (x_r - x2_r)^2 / theta_r^2}`.
pub fn gaussian_correlation(x: &[f64], x2: &[f64], theta: &[f64]) -> Result<f64> {
    check_theta(theta)?;
    if x.len() != theta.len() || x2.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            context: "correlation arguments",
            expected: theta.len(),
            actual: if x.len() != theta.len() { x.len() } else { x2.len() },
        });
    }
    Ok(correlation_from_moments(
        x.iter().zip(x2).map(|(a, b)| (a - b, 0.0)),
        theta,
    ))
}

/// Shared kernel body: every coordinate contributes
/// `(mean_diff^2 + var_diff) / theta^2`. Known inputs pass `var_diff = 0`.
#[inline]
pub(crate) fn correlation_from_moments(
    diffs: impl Iterator<Item = (f64, f64)>,
    theta: &[f64],
) -> f64 {
    let s: f64 = diffs
        .zip(theta)
        .map(|((d, v), t)| (d * d + v) / (t * t))
        .sum();
    (-s).exp()
}

pub(crate) fn check_theta(theta: &[f64]) -> Result<()> {
    if let Some(t) = theta.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "correlation lengths must be positive, got {t}"
        )));
    }
    Ok(())
}

/// `C_ij = c(x_i, x_j) + nugget * 1{i = j}` over the scaled design points.
pub fn correlation_matrix(design: &Design, theta: &[f64], nugget: f64) -> Result<DMatrix<f64>> {
    check_theta(theta)?;
    if theta.len() != design.p() {
        return Err(Error::DimensionMismatch {
            context: "theta length",
            expected: design.p(),
            actual: theta.len(),
        });
    }
    if !(nugget >= 0.0) {
        return Err(Error::InvalidArgument(format!("nugget must be >= 0, got {nugget}")));
    }
    Ok(correlation_matrix_unchecked(design.scaled(), theta, nugget))
}

pub(crate) fn correlation_matrix_unchecked(
    points: &DMatrix<f64>,
    theta: &[f64],
    nugget: f64,
) -> DMatrix<f64> {
    let n = points.nrows();
    let p = points.ncols();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = 1.0 + nugget;
        for j in 0..i {
            let v = correlation_from_moments(
                (0..p).map(|r| (points[(i, r)] - points[(j, r)], 0.0)),
                theta,
            );
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Correlations between a known scaled point and each design row.
pub(crate) fn cross_correlation_known(
    points: &DMatrix<f64>,
    x: &DVector<f64>,
    theta: &[f64],
) -> DVector<f64> {
    DVector::from_iterator(
        points.nrows(),
        (0..points.nrows()).map(|i| {
            correlation_from_moments((0..x.len()).map(|r| (x[r] - points[(i, r)], 0.0)), theta)
        }),
    )
}

/// Scaled inputs this close to a training run are that run.
const COINCIDENT_TOL: f64 = 1e-12;

/// The nugget is part of the correlation at coincident inputs, so a known
/// input equal to a training run sees that run's full diagonal entry of `C`
/// and the adjusted mean reproduces the run.
pub(crate) fn add_coincident_nugget(
    points: &DMatrix<f64>,
    x: &DVector<f64>,
    nugget: f64,
    c: &mut DVector<f64>,
) {
    let hit = (0..points.nrows())
        .find(|&i| (0..x.len()).all(|r| (x[r] - points[(i, r)]).abs() <= COINCIDENT_TOL));
    if let Some(i) = hit {
        c[i] += nugget;
    }
}
