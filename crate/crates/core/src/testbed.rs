//! Analytic test simulators and the reference experiments built on them.
//!
//! ```text
//! f1(x) = 0.2 x + cos x                        x in [0, 10]
//! f2(x) = exp(x / 2) - sin 5x                  x in [-0.5, 2.5]
//! f3(x) = sqrt(|x^3|) - 1.6^x                  x in [-4, 6]
//! f4(x) = x1 x3 + x2 / x3 + cos(x1 + x2)       x in [0,4] x [-2,8] x [1,2.5]
//! h_chain(z)   = f2(f1(z))
//! h_network(z) = f4(f2(f1(z1)), f3(z2), z3)
//! ```
//!
//! Experiments:
//!
//! * `chain`: emulators of `f1` and `f2` from 8 equally spaced runs each, a
//!   direct emulator of `h_chain` from 8 equally spaced runs, and linked
//!   predictions by UIS (normal and uniform) and UIBLE on a 1000-point grid.
//! * `network30`: 30-run designs. The composite's 3-D maximin Latin
//!   hypercube also supplies the `f1` (column `z1`) and `f3` (column `z2`)
//!   runs; `f2` gets 30 uniform random runs and `f4` its own 30-run Latin
//!   hypercube. Scored on a 100-point Latin hypercube.
//! * `network120_8`: the direct emulator gets 120 runs, the `f1`-`f3`
//!   emulators 8 equally spaced runs each, and `f4` 30 runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticReport, Summary};
use crate::emulator::{maximin_lhs, train, Design, Emulator, FitConfig, RegressionBasis};
use crate::error::{Error, Result};
use crate::network::{chain_spec, network_spec, Method, Network, NodeModel};
use crate::uis::{InputDistribution, SamplingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinFunction {
    F1,
    F2,
    F3,
    F4,
    HChain,
    HNetwork,
}

pub use BuiltinFunction::{F1, F2, F3, F4, HChain as H_CHAIN, HNetwork as H_NETWORK};

pub fn f1(x: f64) -> f64 {
    0.2 * x + x.cos()
}

pub fn f2(x: f64) -> f64 {
    (x / 2.0).exp() - (5.0 * x).sin()
}

pub fn f3(x: f64) -> f64 {
    x.powi(3).abs().sqrt() - 1.6f64.powf(x)
}

pub fn f4(x1: f64, x2: f64, x3: f64) -> f64 {
    x1 * x3 + x2 / x3 + (x1 + x2).cos()
}

impl BuiltinFunction {
    pub const ALL: [BuiltinFunction; 6] = [F1, F2, F3, F4, H_CHAIN, H_NETWORK];

    pub fn name(self) -> &'static str {
        match self {
            F1 => "f1",
            F2 => "f2",
            F3 => "f3",
            F4 => "f4",
            H_CHAIN => "h_chain",
            H_NETWORK => "h_network",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            F4 | H_NETWORK => 3,
            _ => 1,
        }
    }

    pub fn domain(self) -> Vec<(f64, f64)> {
        match self {
            F1 | H_CHAIN => vec![(0.0, 10.0)],
            F2 => vec![(-0.5, 2.5)],
            F3 => vec![(-4.0, 6.0)],
            F4 => vec![(0.0, 4.0), (-2.0, 8.0), (1.0, 2.5)],
            H_NETWORK => vec![(0.0, 10.0), (-4.0, 6.0), (1.0, 2.5)],
        }
    }

    /// Exact value; `x` must have `input_dim()` entries.
    pub fn evaluate(self, x: &[f64]) -> f64 {
        match self {
            F1 => f1(x[0]),
            F2 => f2(x[0]),
            F3 => f3(x[0]),
            F4 => f4(x[0], x[1], x[2]),
            H_CHAIN => f2(f1(x[0])),
            H_NETWORK => f4(f2(f1(x[0])), f3(x[1]), x[2]),
        }
    }
}

impl FromStr for BuiltinFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown builtin function `{s}`")))
    }
}

/// The three reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Chain,
    Network30,
    #[serde(rename = "network120_8")]
    Network120_8,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Chain => "chain",
            ExperimentName::Network30 => "network30",
            ExperimentName::Network120_8 => "network120_8",
        }
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(ExperimentName::Chain),
            "network30" => Ok(ExperimentName::Network30),
            "network120_8" => Ok(ExperimentName::Network120_8),
            other => Err(Error::InvalidArgument(format!(
                "unknown experiment `{other}` (expected chain, network30 or network120_8)"
            ))),
        }
    }
}

/// Everything that determines an experiment's numbers. Written to
/// `config.json` in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub seed: u64,
    /// UIS draws per node evaluation.
    pub v: usize,
    pub basis: RegressionBasis,
    pub fit: FitConfig,
    /// Swap iterations for every maximin Latin hypercube.
    pub lhs_iterations: usize,
    /// Diagnostic points: grid size for `chain`, Latin hypercube size for
    /// the networks.
    pub diagnostic_points: usize,
    pub svg: bool,
}

impl ExperimentConfig {
    pub fn new(name: ExperimentName, seed: u64) -> Self {
        Self {
            name,
            seed,
            v: 100,
            basis: RegressionBasis::Linear,
            fit: FitConfig::default(),
            lhs_iterations: 2000,
            diagnostic_points: match name {
                ExperimentName::Chain => 1000,
                _ => 100,
            },
            svg: true,
        }
    }

    fn policy(&self, distribution: InputDistribution) -> SamplingPolicy {
        SamplingPolicy {
            distribution,
            v: self.v,
            seed: self.seed,
            antithetic: false,
        }
    }

    /// Independent seed for sub-task `k`.
    fn sub_seed(&self, k: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        rng.next_u64()
    }
}

/// Diagnostic reports of one experiment run, in a fixed method order.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub reports: Vec<(String, DiagnosticReport)>,
    /// Trained component emulators, by name.
    pub emulators: Vec<(String, Emulator)>,
}

impl ExperimentResult {
    pub fn report(&self, label: &str) -> Option<&DiagnosticReport> {
        self.reports.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }

    pub fn summaries(&self) -> BTreeMap<String, Summary> {
        self.reports
            .iter()
            .map(|(l, r)| (l.clone(), r.summary))
            .collect()
    }

    /// A plain-text table of the summary metrics, one row per method.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>10} {:>10} {:>10} {:>9}\n",
            "method", "MASPE", "RMSPE", "MGES", "cover3sd"
        );
        for (label, r) in &self.reports {
            let m = &r.summary;
            s.push_str(&format!(
                "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>9.3}\n",
                label, m.maspe, m.rmspe, m.mges, m.coverage
            ));
        }
        s
    }

    /// Writes `config.json`, `summary.json`, one directory per method with
    /// `diagnostics.csv`, `summary.json` (and `plot.svg`), and the trained
    /// emulators under `emulators/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let config = serde_json::to_string_pretty(&self.config)? + "\n";
        std::fs::write(dir.join("config.json"), config).map_err(|e| Error::io(dir, e))?;
        let summary = serde_json::to_string_pretty(&self.summaries())? + "\n";
        std::fs::write(dir.join("summary.json"), summary).map_err(|e| Error::io(dir, e))?;
        for (label, report) in &self.reports {
            let title = format!("{} {label}", self.config.name.as_str());
            report.emit(&dir.join(label), &title, self.config.svg)?;
        }
        let em_dir = dir.join("emulators");
        std::fs::create_dir_all(&em_dir).map_err(|e| Error::io(&em_dir, e))?;
        for (name, em) in &self.emulators {
            em.save(&em_dir.join(format!("{name}.json")))?;
        }
        Ok(())
    }
}

/// Runs an experiment with the default configuration.
pub fn experiment(name: ExperimentName, seed: u64) -> Result<ExperimentResult> {
    run_experiment(&ExperimentConfig::new(name, seed))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    match config.name {
        ExperimentName::Chain => chain(config),
        ExperimentName::Network30 | ExperimentName::Network120_8 => network(config),
    }
}

/// Trains an emulator of a builtin on the given design (native bounds of
/// the design are used as the emulator's box).
pub fn train_builtin(
    f: BuiltinFunction,
    design: Design,
    basis: &RegressionBasis,
    fit: &FitConfig,
) -> Result<Emulator> {
    let native = design.native();
    let y = DMatrix::from_fn(native.nrows(), 1, |i, _| {
        let x: Vec<f64> = native.row(i).iter().cloned().collect();
        f.evaluate(&x)
    });
    train(design, y, basis.clone(), fit)
}

fn grid(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn emulator_report(em: &Emulator, f: BuiltinFunction, points: &[Vec<f64>]) -> Result<DiagnosticReport> {
    let preds = points
        .par_iter()
        .map(|x| em.predict(x))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<f64> = points.iter().map(|x| f.evaluate(x)).collect();
    let means: Vec<f64> = preds.iter().map(|b| b.mean[0]).collect();
    let vars: Vec<f64> = preds.iter().map(|b| b.covariance[(0, 0)]).collect();
    DiagnosticReport::new(points.to_vec(), &truths, &means, &vars)
}

fn network_report(
    net: &Network,
    method: &Method,
    f: BuiltinFunction,
    points: &[Vec<f64>],
) -> Result<DiagnosticReport> {
    let zs = DMatrix::from_fn(points.len(), points[0].len(), |i, r| points[i][r]);
    let props = net.propagate_many(&zs, method)?;
    let truths: Vec<f64> = points.iter().map(|x| f.evaluate(x)).collect();
    let means: Vec<f64> = props.iter().map(|p| p.terminal.mean[0]).collect();
    let vars: Vec<f64> = props.iter().map(|p| p.terminal.covariance[(0, 0)]).collect();
    DiagnosticReport::new(points.to_vec(), &truths, &means, &vars)
}

fn chain(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let basis = &config.basis;
    let fit = &config.fit;
    let em1 = train_builtin(F1, Design::equally_spaced(8, F1.domain()[0])?, basis, fit)?;
    let em2 = train_builtin(F2, Design::equally_spaced(8, F2.domain()[0])?, basis, fit)?;
    let de = train_builtin(H_CHAIN, Design::equally_spaced(8, H_CHAIN.domain()[0])?, basis, fit)?;
    let net = Network::new(
        chain_spec(),
        vec![NodeModel::Emulator(em1.clone()), NodeModel::Emulator(em2.clone())],
    )?;

    let n = config.diagnostic_points;
    let as_points = |xs: Vec<f64>| xs.into_iter().map(|x| vec![x]).collect::<Vec<_>>();
    let z = as_points(grid(n, H_CHAIN.domain()[0]));
    let reports = vec![
        ("de_f1".to_string(), emulator_report(&em1, F1, &as_points(grid(n, F1.domain()[0])))?),
        ("de_f2".to_string(), emulator_report(&em2, F2, &as_points(grid(n, F2.domain()[0])))?),
        ("de_h".to_string(), emulator_report(&de, H_CHAIN, &z)?),
        (
            "uis_normal".to_string(),
            network_report(&net, &Method::Uis(config.policy(InputDistribution::Normal)), H_CHAIN, &z)?,
        ),
        (
            "uis_uniform".to_string(),
            network_report(&net, &Method::Uis(config.policy(InputDistribution::Uniform)), H_CHAIN, &z)?,
        ),
        ("uible".to_string(), network_report(&net, &Method::Uible, H_CHAIN, &z)?),
    ];
    Ok(ExperimentResult {
        config: config.clone(),
        reports,
        emulators: vec![("f1".into(), em1), ("f2".into(), em2), ("de_h".into(), de)],
    })
}

fn network(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let basis = &config.basis;
    let fit = &config.fit;
    let iters = config.lhs_iterations;
    let root_bounds = H_NETWORK.domain();
    let big = config.name == ExperimentName::Network120_8;

    let de_n = if big { 120 } else { 30 };
    let z_design = maximin_lhs(de_n, 3, config.sub_seed(1), iters)?.with_bounds(root_bounds.clone())?;
    let de = train_builtin(H_NETWORK, z_design.clone(), basis, fit)?;

    let (em1, em2, em3) = if big {
        (
            train_builtin(F1, Design::equally_spaced(8, F1.domain()[0])?, basis, fit)?,
            train_builtin(F2, Design::equally_spaced(8, F2.domain()[0])?, basis, fit)?,
            train_builtin(F3, Design::equally_spaced(8, F3.domain()[0])?, basis, fit)?,
        )
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.sub_seed(2));
        (
            train_builtin(F1, z_design.select_columns(&[0])?, basis, fit)?,
            train_builtin(F2, Design::uniform_random(30, F2.domain(), &mut rng)?, basis, fit)?,
            train_builtin(F3, z_design.select_columns(&[1])?, basis, fit)?,
        )
    };
    let f4_design = maximin_lhs(30, 3, config.sub_seed(3), iters)?.with_bounds(F4.domain())?;
    let em4 = train_builtin(F4, f4_design, basis, fit)?;

    let net = Network::new(
        network_spec(),
        vec![
            NodeModel::Emulator(em1.clone()),
            NodeModel::Emulator(em2.clone()),
            NodeModel::Emulator(em3.clone()),
            NodeModel::Emulator(em4.clone()),
        ],
    )?;
    let diag = maximin_lhs(config.diagnostic_points, 3, config.sub_seed(4), iters)?
        .with_bounds(root_bounds)?;
    let native = diag.native();
    let points: Vec<Vec<f64>> = native
        .row_iter()
        .map(|r| r.iter().cloned().collect())
        .collect();
    let de_label = format!("de{de_n}");
    let reports = vec![
        (de_label.clone(), emulator_report(&de, H_NETWORK, &points)?),
        (
            "uis".to_string(),
            network_report(&net, &Method::Uis(config.policy(InputDistribution::Normal)), H_NETWORK, &points)?,
        ),
        ("uible".to_string(), network_report(&net, &Method::Uible, H_NETWORK, &points)?),
    ];
    Ok(ExperimentResult {
        config: config.clone(),
        reports,
        emulators: vec![
            ("f1".into(), em1),
            ("f2".into(), em2),
            ("f3".into(), em3),
            ("f4".into(), em4),
            (de_label, de),
        ],
    })
}
