use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression functions `g(x)` of the emulator mean, evaluated in scaled
/// coordinates. The first term is always the constant `1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "terms", rename_all = "lowercase")]
pub enum RegressionBasis {
    Constant,
    /// `(1, x_1, ..., x_p)`
    Linear,
    /// Monomials given by exponent vectors; `[2, 0]` is `x1^2`, `[1, 1]` is
    /// `x1*x2`. The first term must be all zeros.
    Custom(Vec<Vec<u32>>),
}

impl RegressionBasis {
    pub fn validate(&self, p: usize) -> Result<()> {
        if let RegressionBasis::Custom(terms) = self {
            match terms.first() {
                None => return Err(Error::InvalidArgument("custom basis is empty".into())),
                Some(first) if first.iter().any(|&e| e != 0) => {
                    return Err(Error::InvalidArgument(
                        "first custom basis term must be the constant".into(),
                    ))
                }
                _ => {}
            }
            if let Some(t) = terms.iter().find(|t| t.len() != p) {
                return Err(Error::DimensionMismatch {
                    context: "custom basis exponent vector",
                    expected: p,
                    actual: t.len(),
                });
            }
        }
        Ok(())
    }

    /// Number of regression terms `m` for `p` inputs.
    pub fn len(&self, p: usize) -> usize {
        match self {
            RegressionBasis::Constant => 1,
            RegressionBasis::Linear => p + 1,
            RegressionBasis::Custom(terms) => terms.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegressionBasis::Constant => "constant",
            RegressionBasis::Linear => "linear",
            RegressionBasis::Custom(_) => "custom",
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            RegressionBasis::Constant => DVector::from_element(1, 1.0),
            RegressionBasis::Linear => {
                let mut g = DVector::zeros(x.len() + 1);
                g[0] = 1.0;
                g.rows_mut(1, x.len()).copy_from(x);
                g
            }
            RegressionBasis::Custom(terms) => DVector::from_iterator(
                terms.len(),
                terms.iter().map(|t| {
                    t.iter()
                        .zip(x.iter())
                        .map(|(&e, &v)| v.powi(e as i32))
                        .product::<f64>()
                }),
            ),
        }
    }

    /// The `n x m` regressor matrix over the rows of a scaled design.
    pub fn regressors(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.len(points.ncols());
        let mut g = DMatrix::zeros(points.nrows(), m);
        for i in 0..points.nrows() {
            let row = points.row(i).transpose();
            g.set_row(i, &self.evaluate(&row).transpose());
        }
        g
    }
}

impl std::str::FromStr for RegressionBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(RegressionBasis::Constant),
            "linear" => Ok(RegressionBasis::Linear),
            other => Err(Error::InvalidArgument(format!(
                "unknown basis `{other}` (expected constant or linear)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_values() {
        let x = DVector::from_vec(vec![0.5, -0.25]);
        assert_eq!(RegressionBasis::Constant.evaluate(&x).as_slice(), &[1.0]);
        assert_eq!(
            RegressionBasis::Linear.evaluate(&x).as_slice(),
            &[1.0, 0.5, -0.25]
        );
        let quad = RegressionBasis::Custom(vec![vec![0, 0], vec![2, 0], vec![1, 1]]);
        assert_eq!(quad.len(2), 3);
        assert_eq!(quad.evaluate(&x).as_slice(), &[1.0, 0.25, -0.125]);
    }

    #[test]
    fn custom_basis_must_start_with_constant() {
        assert!(RegressionBasis::Custom(vec![vec![1]]).validate(1).is_err());
        assert!(RegressionBasis::Custom(vec![]).validate(1).is_err());
        assert!(RegressionBasis::Custom(vec![vec![0, 0], vec![1]]).validate(2).is_err());
        assert!(RegressionBasis::Custom(vec![vec![0], vec![3]]).validate(1).is_ok());
    }
}
