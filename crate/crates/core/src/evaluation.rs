//! Test-split metrics and the per-product benchmark table.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SeriesStats;
use crate::error::{Error, Result};
use crate::models::{Forecaster, ModelKind};
use crate::numcore::ParamSet;
use crate::windowing::WindowedSample;

fn check_pair(y: &[f64], yhat: &[f64], op: &'static str) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::dim(op, &[y.len()], &[yhat.len()]));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput(op));
    }
    Ok(())
}

/// Mean absolute error `(1/n) Σ |yᵢ − ŷᵢ|`.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, "mae")?;
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / y.len() as f64)
}

/// Mean squared error `(1/n) Σ (yᵢ − ŷᵢ)²`.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat, "mse")?;
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricSpace {
    #[default]
    Normalized,
    RawUnits,
}

impl fmt::Display for MetricSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricSpace::Normalized => "normalized",
            MetricSpace::RawUnits => "raw-units",
        })
    }
}

impl FromStr for MetricSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(MetricSpace::Normalized),
            "raw-units" | "raw" => Ok(MetricSpace::RawUnits),
            _ => Err(Error::Config(format!("unknown metric space {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RowOutcome {
    Metrics { mse: f64, mae: f64 },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub product: String,
    pub model: ModelKind,
    pub space: MetricSpace,
    pub outcome: RowOutcome,
}

impl MetricsRow {
    /// A metrics row. Rejects negative or non-finite values and rows that
    /// break `MAE ≤ √MSE`.
    pub fn new(product: &str, model: ModelKind, space: MetricSpace, mse: f64, mae: f64) -> Result<Self> {
        if !(mse >= 0.0 && mae >= 0.0 && mse.is_finite() && mae.is_finite()) {
            return Err(Error::Contract(format!(
                "metrics must be finite and non-negative (mse {mse}, mae {mae})"
            )));
        }
        if !mae_within_rmse(mse, mae) {
            return Err(Error::Contract(format!("MAE {mae} exceeds √MSE for MSE {mse}")));
        }
        Ok(Self {
            product: product.to_string(),
            model,
            space,
            outcome: RowOutcome::Metrics { mse, mae },
        })
    }

    pub fn failed(product: &str, model: ModelKind, space: MetricSpace, reason: impl Into<String>) -> Self {
        Self {
            product: product.to_string(),
            model,
            space,
            outcome: RowOutcome::Failed(reason.into()),
        }
    }

    pub fn metrics(&self) -> Option<(f64, f64)> {
        match self.outcome {
            RowOutcome::Metrics { mse, mae } => Some((mse, mae)),
            RowOutcome::Failed(_) => None,
        }
    }
}

/// Cauchy–Schwarz bound with a few ulps of slack for rounding when every
/// error has the same magnitude.
fn mae_within_rmse(mse: f64, mae: f64) -> bool {
    mae <= mse.sqrt() * (1.0 + 1e-12) + f64::MIN_POSITIVE
}

/// The same bound for values printed to four decimals.
fn mae_within_rmse_rounded(mse: f64, mae: f64) -> bool {
    const HALF_UNIT: f64 = 5e-5;
    mae - HALF_UNIT <= (mse + HALF_UNIT).sqrt() * (1.0 + 1e-12)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.metrics().is_none()).count()
    }

    /// Rows grouped by product (first appearance order), then MLP, GNN, GCN.
    pub fn sorted_rows(&self) -> Vec<&MetricsRow> {
        let mut order: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !order.contains(&r.product.as_str()) {
                order.push(&r.product);
            }
        }
        let mut rows: Vec<&MetricsRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| (order.iter().position(|p| *p == r.product), r.model));
        rows
    }
}

/// Forecasts the test split and scores it.
///
/// In raw-units space both targets and forecasts are mapped back through the
/// focal series' training statistics before scoring.
pub fn evaluate(
    model: &Forecaster,
    params: &ParamSet,
    test: &[WindowedSample],
    product: &str,
    stats: Option<&SeriesStats>,
    space: MetricSpace,
) -> Result<MetricsRow> {
    if test.is_empty() {
        return Err(Error::EmptyInput("evaluate"));
    }
    let mut pred = model.predict(params, test)?;
    let mut y: Vec<f64> = test.iter().map(|s| s.target).collect();
    if space == MetricSpace::RawUnits {
        let stats = stats.ok_or_else(|| {
            Error::Config("raw-units metrics need the focal series statistics".into())
        })?;
        for v in pred.iter_mut().chain(y.iter_mut()) {
            *v = stats.denormalize(*v);
        }
    }
    MetricsRow::new(product, model.spec.kind, space, mse(&y, &pred)?, mae(&y, &pred)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(Error::Config(format!("unknown table format {s:?}"))),
        }
    }
}

const FAILED: &str = "FAILED";

/// Renders `Product, Model, MSE, MAE, Space` with both metrics to four
/// decimals. Failed rows print `FAILED` in both metric columns.
pub fn render_table(report: &MetricsReport, format: TableFormat) -> String {
    let rows = report.sorted_rows();
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            let (mse, mae) = match r.outcome {
                RowOutcome::Metrics { mse, mae } => {
                    assert!(mae_within_rmse_rounded(mse, mae), "MAE > √MSE in row {r:?}");
                    (format!("{mse:.4}"), format!("{mae:.4}"))
                }
                RowOutcome::Failed(_) => (FAILED.to_string(), FAILED.to_string()),
            };
            [r.product.clone(), r.model.to_string(), mse, mae, r.space.to_string()]
        })
        .collect();
    let header = ["Product", "Model", "MSE", "MAE", "Space"];
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for c in &cells {
                let quoted: Vec<String> = c.iter().map(|s| csv_quote(s)).collect();
                out.push_str(&quoted.join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str("|---|---|---:|---:|---|\n");
            for c in &cells {
                let escaped: Vec<String> = c.iter().map(|s| s.replace('|', "\\|")).collect();
                out.push_str(&format!("| {} |\n", escaped.join(" | ")));
            }
        }
    }
    out
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads a report written by [`render_table`] in CSV form. Values carry the
/// four-decimal precision they were written with.
pub fn parse_report_csv(text: &str) -> Result<MetricsReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(1, 0, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("report is missing column {name}")))
    };
    let (cp, cm, cmse, cmae) = (col("Product")?, col("Model")?, col("MSE")?, col("MAE")?);
    let cs = col("Space").ok();
    let mut report = MetricsReport::default();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |c: usize| rec.get(c).unwrap_or_default();
        let product = get(cp);
        if product.is_empty() {
            return Err(Error::parse(line, cp + 1, "empty product"));
        }
        let model: ModelKind = get(cm)
            .parse()
            .map_err(|_| Error::parse(line, cm + 1, format!("unknown model {:?}", get(cm))))?;
        let space = match cs {
            Some(c) => get(c)
                .parse()
                .map_err(|_| Error::parse(line, c + 1, format!("unknown space {:?}", get(c))))?,
            None => MetricSpace::Normalized,
        };
        let row = if get(cmse) == FAILED {
            MetricsRow::failed(product, model, space, "failed")
        } else {
            let num = |c: usize| -> Result<f64> {
                get(c)
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line, c + 1, format!("bad number {:?}", get(c))))
            };
            let (mse, mae) = (num(cmse)?, num(cmae)?);
            let valid = mse >= 0.0 && mae >= 0.0 && mse.is_finite() && mae.is_finite();
            if !valid || !mae_within_rmse_rounded(mse, mae) {
                return Err(Error::parse(line, cmse + 1, format!("invalid metrics {mse}, {mae}")));
            }
            MetricsRow {
                product: product.to_string(),
                model,
                space,
                outcome: RowOutcome::Metrics { mse, mae },
            }
        };
        report.push(row);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_hand_cases() {
        let y = [1.0, 2.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &[2.0, 4.0]).unwrap(), 1.5);
        assert_eq!(mse(&y, &[2.0, 4.0]).unwrap(), 2.5);
        assert_eq!(mae(&[3.0], &[-1.5]).unwrap(), 4.5);
        let c = 0.75;
        let y: Vec<f64> = (0..9).map(f64::from).collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        assert_eq!(mse(&y, &shifted).unwrap(), c * c);
    }

    #[test]
    fn empty_and_mismatched() {
        assert!(matches!(mae(&[], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(mse(&[], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(mse(&[1.0], &[]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn row_rejects_broken_bound() {
        assert!(MetricsRow::new("P", ModelKind::Mlp, MetricSpace::Normalized, 1.0, 1.5).is_err());
        assert!(MetricsRow::new("P", ModelKind::Mlp, MetricSpace::Normalized, 4.0, 2.0).is_ok());
        assert!(MetricsRow::new("P", ModelKind::Mlp, MetricSpace::Normalized, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn render_empty_and_single() {
        let empty = MetricsReport::default();
        assert_eq!(render_table(&empty, TableFormat::Csv), "Product,Model,MSE,MAE,Space\n");
        assert_eq!(render_table(&empty, TableFormat::Markdown).lines().count(), 2);

        let mut r = MetricsReport::default();
        r.push(MetricsRow::new("POP015K", ModelKind::Mlp, MetricSpace::RawUnits, 60.3381, 5.0).unwrap());
        let csv = render_table(&r, TableFormat::Csv);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "POP015K,MLP,60.3381,5.0000,raw-units");
    }

    #[test]
    fn rows_sorted_by_product_then_model() {
        let mut r = MetricsReport::default();
        for (p, m) in [("B", ModelKind::Gcn), ("A", ModelKind::Mlp), ("B", ModelKind::Mlp), ("B", ModelKind::IdentityGnn)] {
            r.push(MetricsRow::new(p, m, MetricSpace::Normalized, 1.0, 0.5).unwrap());
        }
        r.push(MetricsRow::failed("A", ModelKind::Gcn, MetricSpace::Normalized, "diverged"));
        let csv = render_table(&r, TableFormat::Csv);
        let keys: Vec<String> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join("/"))
            .collect();
        assert_eq!(keys, vec!["B/MLP", "B/GNN", "B/GCN", "A/MLP", "A/GCN"]);
        assert!(csv.contains("A,GCN,FAILED,FAILED"));
        assert_eq!(r.failed_rows(), 1);
    }

    #[test]
    fn csv_parse_render_roundtrip() {
        let mut r = MetricsReport::default();
        r.push(MetricsRow::new("X,1", ModelKind::IdentityGnn, MetricSpace::Normalized, 0.25, 0.4).unwrap());
        r.push(MetricsRow::failed("Y", ModelKind::Gcn, MetricSpace::Normalized, "failed"));
        let text = render_table(&r, TableFormat::Csv);
        let parsed = parse_report_csv(&text).unwrap();
        assert_eq!(parsed, r);
        assert_eq!(render_table(&parsed, TableFormat::Csv), text);
    }

    #[test]
    fn rounding_does_not_break_roundtrip() {
        let mut r = MetricsReport::default();
        r.push(MetricsRow::new("P", ModelKind::Mlp, MetricSpace::Normalized, 1e-5, 0.003).unwrap());
        let text = render_table(&r, TableFormat::Csv);
        assert!(text.contains("P,MLP,0.0000,0.0030"));
        let again = render_table(&parse_report_csv(&text).unwrap(), TableFormat::Csv);
        assert_eq!(again, text);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_report_csv("Product,Model\nA,MLP\n").is_err());
        assert!(parse_report_csv("Product,Model,MSE,MAE\nA,LSTM,1,1\n").is_err());
        assert!(parse_report_csv("Product,Model,MSE,MAE\nA,MLP,x,1\n").is_err());
    }
}
