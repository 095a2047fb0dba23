//! Training designs and space-filling Latin hypercubes.
//!
//! Points are stored in the scaled cube `[-1, 1]^p`; the native bounds are
//! kept alongside so callers can work in native units.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const DUPLICATE_TOL: f64 = 1e-10;
const EDGE_TOL: f64 = 1e-12;

/// An `n x p` design in scaled coordinates with per-dimension native bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: DMatrix<f64>,
    bounds: Vec<(f64, f64)>,
}

impl Design {
    pub fn from_scaled(points: DMatrix<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        validate_bounds(&bounds)?;
        if points.ncols() != bounds.len() {
            return Err(Error::DimensionMismatch {
                context: "design columns vs bounds",
                expected: bounds.len(),
                actual: points.ncols(),
            });
        }
        if points.nrows() == 0 {
            return Err(Error::InvalidDesign("design has no rows".into()));
        }
        let mut points = points;
        for v in points.iter_mut() {
            if !v.is_finite() || v.abs() > 1.0 + EDGE_TOL {
                return Err(Error::InvalidDesign(format!(
                    "scaled coordinate {v} outside [-1, 1]"
                )));
            }
            *v = v.clamp(-1.0, 1.0);
        }
        let design = Self { points, bounds };
        if let Some((i, j, d)) = design.closest_pair() {
            if d <= DUPLICATE_TOL {
                return Err(Error::InvalidDesign(format!(
                    "rows {i} and {j} coincide (distance {d:e})"
                )));
            }
        }
        Ok(design)
    }

    pub fn from_native(points: &DMatrix<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        validate_bounds(&bounds)?;
        if points.ncols() != bounds.len() {
            return Err(Error::DimensionMismatch {
                context: "design columns vs bounds",
                expected: bounds.len(),
                actual: points.ncols(),
            });
        }
        let scaled = DMatrix::from_fn(points.nrows(), points.ncols(), |i, r| {
            scale_coord(points[(i, r)], bounds[r])
        });
        Self::from_scaled(scaled, bounds)
    }

    /// `n` equally spaced points across a one-dimensional interval,
    /// including both end points.
    pub fn equally_spaced(n: usize, bounds: (f64, f64)) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(
                "equally spaced design needs n >= 2".into(),
            ));
        }
        let scaled = DMatrix::from_fn(n, 1, |i, _| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
        Self::from_scaled(scaled, vec![bounds])
    }

    /// `n` points drawn independently and uniformly over the bounds.
    pub fn uniform_random<R: Rng + ?Sized>(
        n: usize,
        bounds: Vec<(f64, f64)>,
        rng: &mut R,
    ) -> Result<Self> {
        let p = bounds.len();
        let scaled = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        Self::from_scaled(scaled, bounds)
    }

    /// Reinterprets the scaled points against new native bounds.
    pub fn with_bounds(self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_scaled(self.points, bounds)
    }

    /// Keeps only the listed columns (in the given order).
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let points = self.points.select_columns(columns);
        let bounds = columns.iter().map(|&c| self.bounds[c]).collect();
        Self::from_scaled(points, bounds)
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn p(&self) -> usize {
        self.points.ncols()
    }

    pub fn scaled(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn native(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.p(), |i, r| {
            unscale_coord(self.points[(i, r)], self.bounds[r])
        })
    }

    pub fn native_row(&self, i: usize) -> Vec<f64> {
        (0..self.p())
            .map(|r| unscale_coord(self.points[(i, r)], self.bounds[r]))
            .collect()
    }

    pub fn scale_point(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.p(),
            x.iter().zip(&self.bounds).map(|(&v, &b)| scale_coord(v, b)),
        )
    }

    /// Multipliers `2 / (hi - lo)` mapping native deviations to scaled ones.
    pub fn scale_factors(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 2.0 / (hi - lo)).collect()
    }

    pub fn contains_scaled(&self, s: &DVector<f64>) -> bool {
        s.iter().all(|v| v.abs() <= 1.0 + EDGE_TOL)
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        self.closest_pair().map_or(f64::INFINITY, |(_, _, d)| d)
    }

    fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                let d = row_distance(&self.points, i, j);
                if best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((i, j, d));
                }
            }
        }
        best
    }
}

pub(crate) fn scale_coord(v: f64, (lo, hi): (f64, f64)) -> f64 {
    2.0 * (v - lo) / (hi - lo) - 1.0
}

pub(crate) fn unscale_coord(s: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (s + 1.0) * (hi - lo) / 2.0
}

fn validate_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::InvalidDesign("design needs at least one input".into()));
    }
    for (r, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidDesign(format!(
                "bounds for input {} are ({lo}, {hi})",
                r + 1
            )));
        }
    }
    Ok(())
}

fn row_distance(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..m.ncols())
        .map(|r| (m[(i, r)] - m[(j, r)]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Minimum pairwise distance and the number of pairs attaining it.
fn maximin_score(m: &DMatrix<f64>) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut count = 0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.nrows() {
            let d = row_distance(m, i, j);
            if d < best {
                best = d;
                count = 1;
            } else if d == best {
                count += 1;
            }
        }
    }
    (best, count)
}

/// A random Latin hypercube in `[-1, 1]^p`: every dimension is cut into `n`
/// equal strata and each stratum holds exactly one point, placed uniformly
/// inside it.
pub fn random_lhs<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, p);
    let width = 2.0 / n as f64;
    for r in 0..p {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            m[(i, r)] = -1.0 + width * (s as f64 + rng.random::<f64>());
        }
    }
    m
}

/// Maximin Latin hypercube of `n` points in `p` dimensions, in scaled
/// coordinates with bounds `[-1, 1]^p`.
///
/// Starts from a random Latin hypercube and, for `iterations` steps, swaps
/// the coordinates of two points along one dimension. A swap is kept when it
/// does not worsen the design: the minimum pairwise distance must not
/// decrease, and at equal distance the number of closest pairs must not grow.
/// Swaps preserve the stratification, so the result is always a Latin
/// hypercube. Deterministic for a given seed.
pub fn maximin_lhs(n: usize, p: usize, seed: u64, iterations: usize) -> Result<Design> {
    if n < 2 || p < 1 {
        return Err(Error::InvalidArgument(format!(
            "maximin LHS needs n >= 2 and p >= 1 (got n = {n}, p = {p})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = random_lhs(n, p, &mut rng);
    let mut score = maximin_score(&m);
    for _ in 0..iterations {
        let r = rng.random_range(0..p);
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        m.swap((i, r), (j, r));
        let candidate = maximin_score(&m);
        if candidate.0 > score.0 || (candidate.0 == score.0 && candidate.1 <= score.1) {
            score = candidate;
        } else {
            m.swap((i, r), (j, r));
        }
    }
    Design::from_scaled(m, vec![(-1.0, 1.0); p])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strata_filled(d: &Design) -> bool {
        let n = d.n();
        (0..d.p()).all(|r| {
            let mut seen = vec![false; n];
            for i in 0..n {
                let s = (((d.scaled()[(i, r)] + 1.0) / 2.0 * n as f64).floor() as usize).min(n - 1);
                seen[s] = true;
            }
            seen.iter().all(|&b| b)
        })
    }

    #[test]
    fn lhs_occupies_every_stratum() {
        for seed in 0..5 {
            let d = maximin_lhs(30, 3, seed, 2000).unwrap();
            assert_eq!((d.n(), d.p()), (30, 3));
            assert!(strata_filled(&d));
        }
    }

    #[test]
    fn optimization_never_reduces_min_distance() {
        for seed in 0..5 {
            let initial = {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                maximin_score(&random_lhs(20, 2, &mut rng)).0
            };
            let d = maximin_lhs(20, 2, seed, 3000).unwrap();
            assert!(d.min_pairwise_distance() >= initial);
        }
    }

    #[test]
    fn maximin_is_deterministic() {
        assert_eq!(
            maximin_lhs(12, 2, 9, 500).unwrap(),
            maximin_lhs(12, 2, 9, 500).unwrap()
        );
        assert_ne!(
            maximin_lhs(12, 2, 9, 500).unwrap(),
            maximin_lhs(12, 2, 10, 500).unwrap()
        );
    }

    #[test]
    fn native_scaling_round_trips() {
        let d = Design::equally_spaced(8, (0.0, 10.0)).unwrap();
        let native = d.native();
        assert_eq!(native[(0, 0)], 0.0);
        assert_eq!(native[(7, 0)], 10.0);
        let again = Design::from_native(&native, vec![(0.0, 10.0)]).unwrap();
        assert!((again.scaled() - d.scaled()).amax() < 1e-15);
    }

    #[test]
    fn duplicate_rows_rejected() {
        let pts = DMatrix::from_row_slice(3, 1, &[0.1, 0.5, 0.1]);
        assert!(matches!(
            Design::from_scaled(pts, vec![(0.0, 1.0)]),
            Err(Error::InvalidDesign(_))
        ));
    }

    #[test]
    fn out_of_cube_rejected() {
        let pts = DMatrix::from_row_slice(2, 1, &[0.0, 1.5]);
        assert!(Design::from_scaled(pts, vec![(0.0, 1.0)]).is_err());
        assert!(Design::from_scaled(DMatrix::zeros(1, 1), vec![(1.0, 1.0)]).is_err());
    }
}
