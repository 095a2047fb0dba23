//! Validation metrics for predictions carrying a mean and variance.
//!
//! ```text
//! MASPE = (1/n) sum |f - mu| / sqrt(nu)
//! RMSPE = sqrt((1/n) sum (f - mu)^2)
//! MGES  = -(1/n) sum ((f - mu)^2 / nu + ln nu)
//! ```
//!
//! MASPE near `sqrt(2/pi)` (about 0.80) indicates calibrated variances;
//! much lower is underconfident, much higher overconfident. Points with zero
//! predicted variance have no standardized error: they are left out of MASPE
//! and MGES and counted in `excluded`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(truths: &[f64], means: &[f64], variances: Option<&[f64]>) -> Result<()> {
    if truths.is_empty() {
        return Err(Error::Empty("diagnostic metric"));
    }
    if means.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            context: "diagnostic means",
            expected: truths.len(),
            actual: means.len(),
        });
    }
    if let Some(v) = variances {
        if v.len() != truths.len() {
            return Err(Error::DimensionMismatch {
                context: "diagnostic variances",
                expected: truths.len(),
                actual: v.len(),
            });
        }
        if let Some(bad) = v.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "predicted variance {bad} is negative or not a number"
            )));
        }
    }
    Ok(())
}

fn mean_over_positive(
    truths: &[f64],
    means: &[f64],
    variances: &[f64],
    term: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    check_lengths(truths, means, Some(variances))?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((f, mu), nu) in truths.iter().zip(means).zip(variances) {
        if *nu > 0.0 {
            sum += term(f - mu, *nu);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("metric over points with positive variance"));
    }
    Ok(sum / n as f64)
}

/// Mean absolute standardized prediction error over points with `nu > 0`.
pub fn maspe(truths: &[f64], means: &[f64], variances: &[f64]) -> Result<f64> {
    mean_over_positive(truths, means, variances, |r, nu| r.abs() / nu.sqrt())
}

pub fn rmspe(truths: &[f64], means: &[f64]) -> Result<f64> {
    check_lengths(truths, means, None)?;
    let ss: f64 = truths.iter().zip(means).map(|(f, mu)| (f - mu) * (f - mu)).sum();
    Ok((ss / truths.len() as f64).sqrt())
}

/// Mean generalised entropy score over points with `nu > 0`. Larger is
/// better.
pub fn mges(truths: &[f64], means: &[f64], variances: &[f64]) -> Result<f64> {
    mean_over_positive(truths, means, variances, |r, nu| -(r * r / nu + nu.ln()))
}

/// Fraction of points with `|f - mu| <= k sqrt(nu)`.
pub fn coverage(truths: &[f64], means: &[f64], variances: &[f64], k: f64) -> Result<f64> {
    check_lengths(truths, means, Some(variances))?;
    let inside = truths
        .iter()
        .zip(means)
        .zip(variances)
        .filter(|((f, mu), nu)| (*f - *mu).abs() <= k * nu.sqrt())
        .count();
    Ok(inside as f64 / truths.len() as f64)
}

/// Number of points left out of MASPE and MGES.
pub fn excluded_count(variances: &[f64]) -> usize {
    variances.iter().filter(|v| **v == 0.0).count()
}

/// `(f - mu) / sqrt(nu)`; `+inf` for a zero variance with a nonzero residual
/// and `0` when both vanish.
pub fn standardized_error(truth: f64, mean: f64, variance: f64) -> f64 {
    let r = truth - mean;
    if variance > 0.0 {
        r / variance.sqrt()
    } else if r == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub input: Vec<f64>,
    pub truth: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub maspe: f64,
    pub rmspe: f64,
    pub mges: f64,
    /// Fraction of points inside `mean +- 3 sd`.
    pub coverage: f64,
    pub n: usize,
    pub excluded: usize,
}

/// Per-point predictions against truth with summary metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub rows: Vec<DiagnosticRow>,
    pub summary: Summary,
}

impl DiagnosticReport {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        truths: &[f64],
        means: &[f64],
        variances: &[f64],
    ) -> Result<Self> {
        check_lengths(truths, means, Some(variances))?;
        if inputs.len() != truths.len() {
            return Err(Error::DimensionMismatch {
                context: "diagnostic inputs",
                expected: truths.len(),
                actual: inputs.len(),
            });
        }
        let summary = Summary {
            maspe: maspe(truths, means, variances).unwrap_or(f64::NAN),
            rmspe: rmspe(truths, means)?,
            mges: mges(truths, means, variances).unwrap_or(f64::NAN),
            coverage: coverage(truths, means, variances, 3.0)?,
            n: truths.len(),
            excluded: excluded_count(variances),
        };
        let rows = inputs
            .into_iter()
            .zip(truths.iter().zip(means).zip(variances))
            .map(|(input, ((&truth, &mean), &variance))| DiagnosticRow {
                input,
                truth,
                mean,
                variance,
                std_err: standardized_error(truth, mean, variance),
            })
            .collect();
        Ok(Self { rows, summary })
    }

    /// Rebuilds the report (and so the summary) from rows.
    pub fn from_rows(rows: Vec<DiagnosticRow>) -> Result<Self> {
        let truths: Vec<f64> = rows.iter().map(|r| r.truth).collect();
        let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        let variances: Vec<f64> = rows.iter().map(|r| r.variance).collect();
        let inputs = rows.into_iter().map(|r| r.input).collect();
        Self::new(inputs, &truths, &means, &variances)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let p = self.rows.first().map_or(0, |r| r.input.len());
        let mut header: Vec<String> = (1..=p).map(|r| format!("x{r}")).collect();
        header.extend(["truth", "mean", "variance", "std_err"].map(String::from));
        w.write_record(&header)?;
        for row in &self.rows {
            let fields: Vec<String> = row
                .input
                .iter()
                .chain([row.truth, row.mean, row.variance, row.std_err].iter())
                .map(|v| format!("{v}"))
                .collect();
            w.write_record(&fields)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let p = rdr.headers()?.len().checked_sub(4).ok_or_else(|| {
            Error::InvalidArgument("diagnostics CSV needs truth, mean, variance, std_err".into())
        })?;
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let vals: Vec<f64> = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("{s:?} is not a number")))
                })
                .collect::<Result<_>>()?;
            rows.push(DiagnosticRow {
                input: vals[..p].to_vec(),
                truth: vals[p],
                mean: vals[p + 1],
                variance: vals[p + 2],
                std_err: vals[p + 3],
            });
        }
        Self::from_rows(rows)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// SVG plot with one `<circle>` marker per point. One-dimensional inputs
    /// are drawn against the input with a `+-3 sd` band; otherwise predicted
    /// means are drawn against truth with `+-3 sd` whiskers.
    pub fn to_svg(&self, title: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 420.0;
        const M: f64 = 50.0;
        let one_d = self.rows.iter().all(|r| r.input.len() == 1);
        let sd = |r: &DiagnosticRow| 3.0 * r.variance.max(0.0).sqrt();
        let xs: Vec<f64> = self
            .rows
            .iter()
            .map(|r| if one_d { r.input[0] } else { r.truth })
            .collect();
        let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &self.rows {
            for v in [r.truth, r.mean - sd(r), r.mean + sd(r)] {
                if v.is_finite() {
                    ylo = ylo.min(v);
                    yhi = yhi.max(v);
                }
            }
        }
        let (xlo, xhi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
        let px = |x: f64| M + (x - xlo) / span(xlo, xhi) * (W - 2.0 * M);
        let py = |y: f64| H - M - (y - ylo) / span(ylo, yhi) * (H - 2.0 * M);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
            W - 2.0 * M,
            H - 2.0 * M
        );
        if one_d {
            let mut order: Vec<usize> = (0..self.rows.len()).collect();
            order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
            let path = |f: &dyn Fn(&DiagnosticRow) -> f64| {
                order
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let cmd = if k == 0 { 'M' } else { 'L' };
                        format!("{cmd}{:.2},{:.2}", px(xs[i]), py(f(&self.rows[i])))
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            for (f, colour, dash) in [
                (&(|r: &DiagnosticRow| r.mean + sd(r)) as &dyn Fn(&DiagnosticRow) -> f64, "#d62728", "4 3"),
                (&|r: &DiagnosticRow| r.mean - sd(r), "#d62728", "4 3"),
                (&|r: &DiagnosticRow| r.mean, "#1f77b4", "none"),
                (&|r: &DiagnosticRow| r.truth, "#2ca02c", "none"),
            ] {
                let _ = writeln!(
                    s,
                    r#"<path d="{}" fill="none" stroke="{colour}" stroke-dasharray="{dash}" stroke-width="1.2"/>"#,
                    path(f)
                );
            }
        } else {
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#2ca02c"/>"##,
                px(xlo.max(ylo)),
                py(xlo.max(ylo)),
                px(xhi.min(yhi)),
                py(xhi.min(yhi))
            );
            for (r, &x) in self.rows.iter().zip(&xs) {
                let _ = writeln!(
                    s,
                    r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#d62728" stroke-width="0.8"/>"##,
                    px(x),
                    py(r.mean - sd(r)),
                    py(r.mean + sd(r))
                );
            }
        }
        for (r, &x) in self.rows.iter().zip(&xs) {
            let y = if one_d { r.truth } else { r.mean };
            let _ = writeln!(
                s,
                r##"<circle class="point" cx="{:.2}" cy="{:.2}" r="1.8" fill="#333"/>"##,
                px(x),
                py(y)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Writes `diagnostics.csv`, `summary.json` and optionally `plot.svg`
    /// into `dir`.
    pub fn emit(&self, dir: &Path, title: &str, svg: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_csv(&dir.join("diagnostics.csv"))?;
        self.write_summary(&dir.join("summary.json"))?;
        if svg {
            let path = dir.join("plot.svg");
            std::fs::write(&path, self.to_svg(title)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        assert_eq!(maspe(&[2.0], &[1.0], &[4.0]).unwrap(), 0.5);
        assert_eq!(maspe(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(maspe(&[3.0, -1.0], &[1.0, 2.0], &[4.0, 9.0]).unwrap(), 1.0);
        assert!((rmspe(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmspe(&[1.5, 2.5], &[1.0, 2.0]).unwrap(), 0.5);
        assert!((mges(&[0.0], &[0.0], &[std::f64::consts::E]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(mges(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn coverage_cases() {
        assert_eq!(coverage(&[1.0], &[1.0], &[0.0], 3.0).unwrap(), 1.0);
        assert_eq!(coverage(&[4.0, -8.0], &[0.0, 0.0], &[1.0, 4.0], 3.0).unwrap(), 0.0);
        // residuals / sd: 0.5, 3.0 (boundary, inside), 3.5, 1.0
        let c = coverage(
            &[0.5, 3.0, 7.0, -1.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[1.0, 1.0, 4.0, 1.0],
            3.0,
        )
        .unwrap();
        assert_eq!(c, 0.75);
    }

    #[test]
    fn overconfidence_is_penalized() {
        let score = |nu: f64| mges(&[1.0], &[0.0], &[nu]).unwrap();
        assert!(score(1e-3) < score(1e-1));
        assert!(score(1e-6) < score(1e-3));
    }

    #[test]
    fn errors_and_exclusions() {
        assert!(maspe(&[], &[], &[]).is_err());
        assert!(rmspe(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mges(&[1.0], &[1.0], &[-1.0]).is_err());
        let r = DiagnosticReport::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            &[1.0, 2.0, 3.0],
            &[1.0, 1.0, 2.0],
            &[0.0, 0.0, 4.0],
        )
        .unwrap();
        assert_eq!(r.summary.excluded, 2);
        assert_eq!(r.summary.maspe, 0.5);
        assert_eq!(r.rows[0].std_err, 0.0);
        assert_eq!(r.rows[1].std_err, f64::INFINITY);
    }

    #[test]
    fn emitted_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inputs: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 / 7.0, 1.0 / (i as f64 + 3.0)]).collect();
        let truths: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let means: Vec<f64> = (0..25).map(|i| (i as f64).sin() + 0.1 * (i as f64 * 0.3).cos()).collect();
        let vars: Vec<f64> = (0..25).map(|i| 0.01 + i as f64 / 997.0).collect();
        let report = DiagnosticReport::new(inputs, &truths, &means, &vars).unwrap();
        report.emit(dir.path(), "test <plot>", true).unwrap();
        let again = DiagnosticReport::read_csv(&dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(again, report);
        let summary: Summary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary, report.summary);
        let svg = std::fs::read_to_string(dir.path().join("plot.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 25);
        assert!(svg.contains("test &lt;plot&gt;"));
    }

    #[test]
    fn one_dimensional_plot_has_one_marker_per_point() {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let v = vec![1.0; 10];
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let report = DiagnosticReport::new(inputs, &t, &t, &v).unwrap();
        assert_eq!(report.to_svg("line").matches("<circle").count(), 10);
    }

    fn cases() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.01f64..5.0), 1..30)
    }

    proptest! {
        #[test]
        fn metrics_ignore_point_order(mut pts in cases(), seed in any::<u64>()) {
            let summary = |pts: &[(f64, f64, f64)]| {
                let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let m: Vec<f64> = pts.iter().map(|p| p.1).collect();
                let v: Vec<f64> = pts.iter().map(|p| p.2).collect();
                (maspe(&t, &m, &v).unwrap(), rmspe(&t, &m).unwrap(), mges(&t, &m, &v).unwrap(),
                 coverage(&t, &m, &v, 3.0).unwrap())
            };
            let a = summary(&pts);
            let k = (seed as usize) % pts.len();
            pts.rotate_left(k);
            pts.reverse();
            let b = summary(&pts);
            prop_assert!((a.0 - b.0).abs() <= 1e-12 * a.0.abs().max(1.0));
            prop_assert!((a.1 - b.1).abs() <= 1e-12 * a.1.abs().max(1.0));
            prop_assert!((a.2 - b.2).abs() <= 1e-12 * a.2.abs().max(1.0));
            prop_assert_eq!(a.3, b.3);
        }

        #[test]
        fn rmspe_is_translation_invariant(pts in cases(), c in -100.0f64..100.0) {
            let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let m: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let ts: Vec<f64> = t.iter().map(|x| x + c).collect();
            let ms: Vec<f64> = m.iter().map(|x| x + c).collect();
            let a = rmspe(&t, &m).unwrap();
            let b = rmspe(&ts, &ms).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }

        #[test]
        fn mges_decomposes(pts in cases()) {
            let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let m: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let v: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let n = pts.len() as f64;
            let quad = pts.iter().map(|(f, mu, nu)| (f - mu).powi(2) / nu).sum::<f64>() / n;
            let logs = v.iter().map(|x| x.ln()).sum::<f64>() / n;
            let g = mges(&t, &m, &v).unwrap();
            prop_assert!((g - (-quad - logs)).abs() <= 1e-12 * (quad.abs() + logs.abs()).max(1.0));
        }
    }
}
