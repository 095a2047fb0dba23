//! Training data as CSV and trained emulators as versioned JSON.
//!
//! Training CSV: a header row naming inputs `x1..xp` then outputs `y1..yq`,
//! one run per row. Emulator JSON stores everything needed to rebuild the
//! emulator bit for bit: the scaled design, bounds, basis, hyperparameters
//! and training outputs, plus the adjusted regression belief for reference.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Design, Emulator, FitLog, Hyperparameters, RegressionBasis};
use crate::error::{Error, Result};

pub const FORMAT: &str = "blnet-emulator";
pub const VERSION: u32 = 1;

/// Training runs read from CSV, inputs and outputs in native units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub inputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

impl TrainingData {
    pub fn p(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn q(&self) -> usize {
        self.outputs.ncols()
    }

    /// Per-input `(min, max)` of the runs.
    pub fn data_bounds(&self) -> Vec<(f64, f64)> {
        self.inputs
            .column_iter()
            .map(|c| (c.min(), c.max()))
            .collect()
    }
}

pub fn read_training_csv(path: &Path) -> Result<TrainingData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_training_csv(file)
}

pub fn parse_training_csv<R: Read>(reader: R) -> Result<TrainingData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut p = 0;
    let mut q = 0;
    for (i, name) in header.iter().enumerate() {
        let expected_x = format!("x{}", p + 1);
        let expected_y = format!("y{}", q + 1);
        if q == 0 && name == expected_x {
            p += 1;
        } else if name == expected_y {
            q += 1;
        } else {
            return Err(Error::InvalidArgument(format!(
                "column {} is named {name:?}; expected x1..xp followed by y1..yq",
                i + 1
            )));
        }
    }
    if p == 0 || q == 0 {
        return Err(Error::InvalidArgument(
            "training CSV needs at least one x and one y column".into(),
        ));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidArgument(format!("row {}: {field:?} is not a number", line + 1))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty("training CSV"));
    }
    let all = DMatrix::from_row_slice(rows, p + q, &values);
    Ok(TrainingData {
        inputs: all.columns(0, p).into_owned(),
        outputs: all.columns(p, q).into_owned(),
    })
}

pub fn write_training_csv(path: &Path, inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let header: Vec<String> = (1..=inputs.ncols())
        .map(|r| format!("x{r}"))
        .chain((1..=outputs.ncols()).map(|k| format!("y{k}")))
        .collect();
    w.write_record(&header)?;
    for i in 0..inputs.nrows() {
        let row: Vec<String> = inputs
            .row(i)
            .iter()
            .chain(outputs.row(i).iter())
            .map(|v| format!("{v}"))
            .collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EmulatorFile {
    format: String,
    version: u32,
    bounds: Vec<(f64, f64)>,
    /// Row-major `n x p`, scaled to `[-1, 1]`.
    design: Vec<Vec<f64>>,
    basis: RegressionBasis,
    hyperparameters: Hyperparameters,
    /// Row-major `n x q`.
    training_outputs: Vec<Vec<f64>>,
    /// Row-major `m x q`.
    beta_mean: Vec<Vec<f64>>,
    /// `(G'C^-1 G)^-1`, row-major.
    beta_unscaled_cov: Vec<Vec<f64>>,
    fit_log: Option<FitLog>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("emulator file: {what} is empty")));
    }
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument(format!("emulator file: {what} is ragged")));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

impl Emulator {
    pub fn to_json(&self) -> Result<String> {
        let file = EmulatorFile {
            format: FORMAT.into(),
            version: VERSION,
            bounds: self.design.bounds().to_vec(),
            design: rows(self.design.scaled()),
            basis: self.basis.clone(),
            hyperparameters: self.hyper.clone(),
            training_outputs: rows(&self.outputs),
            beta_mean: rows(&self.gls.beta),
            beta_unscaled_cov: rows(&self.gls.unscaled_cov),
            fit_log: self.fit_log.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Rebuilds an emulator from its JSON form. The stored regression belief
    /// is checked against the rebuilt one.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: EmulatorFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::InvalidArgument(format!(
                "not an emulator file (format {:?})",
                file.format
            )));
        }
        if file.version != VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported emulator file version {}",
                file.version
            )));
        }
        let design = Design::from_scaled(from_rows(&file.design, "design")?, file.bounds)?;
        let outputs = from_rows(&file.training_outputs, "training_outputs")?;
        let mut em = Emulator::new(design, outputs, file.basis, file.hyperparameters)?;
        let stored = from_rows(&file.beta_mean, "beta_mean")?;
        let scale = em.gls.beta.amax().max(1.0);
        if stored.shape() != em.gls.beta.shape() || (&stored - &em.gls.beta).amax() > 1e-6 * scale {
            return Err(Error::InvalidArgument(
                "emulator file is inconsistent: stored beta_mean does not match the training data"
                    .into(),
            ));
        }
        em.set_fit_log(file.fit_log);
        Ok(em)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_json()?.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        BufReader::new(file)
            .read_to_string(&mut text)
            .map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::{train, FitConfig};

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.3, 0.4, 1.0 / 3.0, 0.6]);
        let y = DMatrix::from_row_slice(3, 1, &[1.5, -2.0, 1e-17]);
        write_training_csv(&path, &x, &y).unwrap();
        let data = read_training_csv(&path).unwrap();
        assert_eq!(data.inputs, x);
        assert_eq!(data.outputs, y);
    }

    #[test]
    fn csv_header_is_checked() {
        let bad = "x1,z,y1\n1,2,3\n";
        assert!(parse_training_csv(bad.as_bytes()).is_err());
        let out_of_order = "y1,x1\n1,2\n";
        assert!(parse_training_csv(out_of_order.as_bytes()).is_err());
        let text = "x1, x2 ,y1\n1,2,3\n";
        let data = parse_training_csv(text.as_bytes()).unwrap();
        assert_eq!((data.p(), data.q()), (2, 1));
    }

    #[test]
    fn json_round_trip_predicts_identically() {
        let design = Design::equally_spaced(7, (-0.5, 2.5)).unwrap();
        let y = DMatrix::from_iterator(
            7,
            1,
            design.native().iter().map(|&x| (x / 2.0).exp() - (5.0 * x).sin()),
        );
        let em = train(design, y, RegressionBasis::Linear, &FitConfig::default()).unwrap();
        let again = Emulator::from_json(&em.to_json().unwrap()).unwrap();
        for x in [-0.5, 0.3, 1.7, 2.5] {
            assert_eq!(em.predict(&[x]).unwrap(), again.predict(&[x]).unwrap());
        }
        assert_eq!(em.fit_log(), again.fit_log());
    }

    #[test]
    fn wrong_version_rejected() {
        let design = Design::equally_spaced(4, (0.0, 1.0)).unwrap();
        let y = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.5, 0.2]);
        let em = train(design, y, RegressionBasis::Constant, &FitConfig::default()).unwrap();
        let text = em.to_json().unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(Emulator::from_json(&text).is_err());
    }
}
