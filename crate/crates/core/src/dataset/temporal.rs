use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four per-product temporal feature files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    SalesOrder,
    Production,
    Delivery,
    FactoryIssue,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::SalesOrder,
        Feature::Production,
        Feature::Delivery,
        Feature::FactoryIssue,
    ];

    /// Lowercase alphanumeric key used to match file names and CLI values.
    pub fn key(self) -> &'static str {
        match self {
            Feature::SalesOrder => "salesorder",
            Feature::Production => "production",
            Feature::Delivery => "delivery",
            Feature::FactoryIssue => "factoryissue",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Feature::SalesOrder => "SalesOrder",
            Feature::Production => "Production",
            Feature::Delivery => "Delivery",
            Feature::FactoryIssue => "FactoryIssue",
        };
        f.write_str(s)
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(char::is_ascii_alphanumeric)
            .collect::<String>()
            .to_ascii_lowercase();
        Feature::ALL
            .into_iter()
            .find(|f| f.key() == norm)
            .ok_or_else(|| Error::Config(format!("unknown feature {s:?}")))
    }
}

/// Product × date matrix for one temporal feature. Missing cells are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalTable {
    feature: Feature,
    products: Vec<String>,
    dates: Vec<String>,
    values: Vec<Option<f64>>,
}

impl TemporalTable {
    /// Builds a complete table (no missing cells) from per-product rows.
    pub fn from_rows(
        feature: Feature,
        products: Vec<String>,
        dates: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != products.len() || rows.iter().any(|r| r.len() != dates.len()) {
            return Err(Error::Schema(format!(
                "{feature}: rows do not match {} products × {} dates",
                products.len(),
                dates.len()
            )));
        }
        let values = rows.into_iter().flatten().map(Some).collect();
        Ok(Self {
            feature,
            products,
            dates,
            values,
        })
    }

    pub fn feature(&self) -> Feature {
        self.feature
    }

    pub fn products(&self) -> &[String] {
        &self.products
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn num_products(&self) -> usize {
        self.products.len()
    }

    pub fn num_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let n = self.dates.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn product_index(&self, code: &str) -> Option<usize> {
        self.products.iter().position(|p| p == code)
    }

    /// Complete series of a product, or `None` if any cell is missing.
    pub fn series(&self, i: usize) -> Option<Vec<f64>> {
        self.row(i).iter().copied().collect()
    }

    fn retain_rows(&self, keep: &[bool]) -> TemporalTable {
        let mut products = Vec::new();
        let mut values = Vec::new();
        for (i, p) in self.products.iter().enumerate() {
            if keep[i] {
                products.push(p.clone());
                values.extend_from_slice(self.row(i));
            }
        }
        TemporalTable {
            feature: self.feature,
            products,
            dates: self.dates.clone(),
            values,
        }
    }

    /// Restricts the table to `dates` (a subset, in the given order) and
    /// `products` (a subset, in the given order).
    pub(crate) fn select(&self, products: &[String], dates: &[String]) -> TemporalTable {
        let date_idx: Vec<usize> = dates
            .iter()
            .map(|d| self.dates.iter().position(|x| x == d).expect("date subset"))
            .collect();
        let mut values = Vec::with_capacity(products.len() * dates.len());
        for p in products {
            let row = self.row(self.product_index(p).expect("product subset"));
            values.extend(date_idx.iter().map(|&j| row[j]));
        }
        TemporalTable {
            feature: self.feature,
            products: products.to_vec(),
            dates: dates.to_vec(),
            values,
        }
    }

    /// Serializes in the `Product,<date1>,...` layout; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Product");
        for d in &self.dates {
            out.push(',');
            out.push_str(&csv_field(d));
        }
        out.push('\n');
        for (i, p) in self.products.iter().enumerate() {
            out.push_str(&csv_field(p));
            for v in self.row(i) {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const DATE_FORMATS: [&str; 4] = ["%Y-%m-%d", "%m/%d/%Y", "%d-%m-%Y", "%Y/%m/%d"];

fn parse_date(label: &str) -> Option<NaiveDate> {
    DATE_FORMATS
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(label, f).ok())
}

pub(crate) fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.strip_prefix('\u{feff}').unwrap_or(text).as_bytes())
}

pub(crate) fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, 0, err.to_string())
}

/// Parses one temporal feature file laid out as `Product,<date1>,<date2>,...`.
///
/// Empty cells become missing values. Trailing columns with an empty header
/// are ignored, as are cells past the last dated column. Date labels that
/// parse as calendar dates must be strictly increasing; other labels only
/// need to be unique.
pub fn parse_temporal_csv(text: &str, feature: Feature) -> Result<TemporalTable> {
    let mut records = csv_reader(text).into_records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(Error::Schema(format!("{feature}: empty file"))),
    };
    let mut dates: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    while dates.last().is_some_and(String::is_empty) {
        dates.pop();
    }
    if dates.is_empty() {
        return Err(Error::Schema(format!("{feature}: no date columns")));
    }
    let mut seen = HashSet::new();
    for (j, d) in dates.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::Schema(format!(
                "{feature}: empty date header in column {}",
                j + 2
            )));
        }
        if !seen.insert(d.as_str()) {
            return Err(Error::Schema(format!("{feature}: duplicate header {d:?}")));
        }
    }
    let parsed: Option<Vec<NaiveDate>> = dates.iter().map(|d| parse_date(d)).collect();
    if let Some(parsed) = parsed {
        if let Some(w) = parsed.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Schema(format!(
                "{feature}: dates not increasing at {:?} -> {:?}",
                dates[w],
                dates[w + 1]
            )));
        }
    }

    let mut products = Vec::new();
    let mut values = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let code = rec.get(0).unwrap_or_default();
        if code.is_empty() {
            return Err(Error::parse(line, 1, "empty product code"));
        }
        products.push(code.to_string());
        for j in 0..dates.len() {
            let cell = rec.get(j + 1).unwrap_or_default();
            values.push(parse_cell(cell, line, j + 2)?);
        }
    }
    Ok(TemporalTable {
        feature,
        products,
        dates,
        values,
    })
}

fn parse_cell(cell: &str, line: usize, column: usize) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(line, column, format!("non-numeric cell {cell:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, column, format!("non-finite cell {cell:?}")));
    }
    if v < 0.0 {
        return Err(Error::parse(line, column, format!("negative quantity {cell:?}")));
    }
    // normalizes -0
    Ok(Some(v + 0.0))
}

/// Collapses exact duplicate rows to their first occurrence.
///
/// Two rows with the same product code but different values are a
/// [`Error::Conflict`].
pub fn dedup_rows(table: &TemporalTable) -> Result<TemporalTable> {
    let mut first: HashMap<&str, usize> = HashMap::new();
    let mut keep = vec![true; table.num_products()];
    for (j, code) in table.products.iter().enumerate() {
        match first.entry(code.as_str()) {
            Entry::Vacant(e) => {
                e.insert(j);
            }
            Entry::Occupied(e) => {
                if table.row(*e.get()) != table.row(j) {
                    return Err(Error::Conflict(code.clone()));
                }
                keep[j] = false;
            }
        }
    }
    Ok(table.retain_rows(&keep))
}

/// Removes every row with at least one missing cell and lists the removed
/// product codes in roster order.
pub fn drop_missing(table: &TemporalTable) -> (TemporalTable, Vec<String>) {
    let keep: Vec<bool> = (0..table.num_products())
        .map(|i| table.row(i).iter().all(Option::is_some))
        .collect();
    let removed = removed_codes(table, &keep);
    (table.retain_rows(&keep), removed)
}

/// Default fraction of zero cells above which a product is dropped.
pub const DEFAULT_ZERO_FRACTION: f64 = 0.5;

/// Removes rows whose fraction of exact-zero cells exceeds `threshold`.
pub fn filter_low_quality(table: &TemporalTable, threshold: f64) -> (TemporalTable, Vec<String>) {
    let n = table.num_dates() as f64;
    let keep: Vec<bool> = (0..table.num_products())
        .map(|i| {
            let zeros = table.row(i).iter().filter(|v| **v == Some(0.0)).count();
            zeros as f64 / n <= threshold
        })
        .collect();
    let removed = removed_codes(table, &keep);
    (table.retain_rows(&keep), removed)
}

fn removed_codes(table: &TemporalTable, keep: &[bool]) -> Vec<String> {
    table
        .products
        .iter()
        .zip(keep)
        .filter(|(_, &k)| !k)
        .map(|(p, _)| p.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "Product,2023-01-01,2023-01-02,2023-01-03\nA,1,2,3\nB,0,5,0.5\n";

    #[test]
    fn parses_shape_and_values() {
        let t = parse_temporal_csv(SMALL, Feature::SalesOrder).unwrap();
        assert_eq!(t.num_products(), 2);
        assert_eq!(t.num_dates(), 3);
        assert_eq!(t.series(1).unwrap(), vec![0.0, 5.0, 0.5]);
        assert_eq!(t.feature(), Feature::SalesOrder);
    }

    #[test]
    fn blank_cell_is_missing_until_dropped() {
        let t = parse_temporal_csv("Product,d1,d2\nA,1,\nB,2,3\n", Feature::Production).unwrap();
        assert_eq!(t.row(0), &[Some(1.0), None]);
        let (clean, removed) = drop_missing(&t);
        assert_eq!(clean.products(), &["B".to_string()]);
        assert_eq!(removed, vec!["A".to_string()]);
    }

    #[test]
    fn short_rows_are_missing_and_long_rows_truncated() {
        let t = parse_temporal_csv("Product,d1,d2,\nA,1\nB,2,3,9,9\n", Feature::Delivery).unwrap();
        assert_eq!(t.num_dates(), 2);
        assert_eq!(t.row(0), &[Some(1.0), None]);
        assert_eq!(t.row(1), &[Some(2.0), Some(3.0)]);
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let err = parse_temporal_csv("Product,d1,d2\nA,1,2\nB,x,3\n", Feature::SalesOrder)
            .unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_header_is_schema_error() {
        let err = parse_temporal_csv("Product,d1,d1\nA,1,2\n", Feature::SalesOrder);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn dates_must_increase() {
        let err = parse_temporal_csv("Product,2023-01-02,2023-01-01\nA,1,2\n", Feature::SalesOrder);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn negative_and_nan_rejected() {
        assert!(parse_temporal_csv("Product,d1\nA,-1\n", Feature::SalesOrder).is_err());
        assert!(parse_temporal_csv("Product,d1\nA,NaN\n", Feature::SalesOrder).is_err());
    }

    #[test]
    fn dedup_cases() {
        let t = parse_temporal_csv("Product,d1,d2\nA,1,2\nB,3,4\nA,1,2\n", Feature::SalesOrder)
            .unwrap();
        let d = dedup_rows(&t).unwrap();
        assert_eq!(d.products(), &["A".to_string(), "B".to_string()]);
        assert_eq!(dedup_rows(&d).unwrap(), d);

        let clean = parse_temporal_csv(SMALL, Feature::SalesOrder).unwrap();
        assert_eq!(dedup_rows(&clean).unwrap(), clean);

        let bad = parse_temporal_csv("Product,d1\nA,1\nA,2\n", Feature::SalesOrder).unwrap();
        match dedup_rows(&bad) {
            Err(Error::Conflict(code)) => assert_eq!(code, "A"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn drop_missing_degenerate() {
        let t = parse_temporal_csv("Product,d1\nA,\nB,\n", Feature::SalesOrder).unwrap();
        let (clean, removed) = drop_missing(&t);
        assert_eq!(clean.num_products(), 0);
        assert_eq!(removed.len(), 2);
        let full = parse_temporal_csv(SMALL, Feature::SalesOrder).unwrap();
        assert_eq!(drop_missing(&full).0, full);
    }

    #[test]
    fn low_quality_thresholds() {
        let t = parse_temporal_csv(
            "Product,d1,d2,d3,d4,d5\nZ,0,0,0,1,2\nOK,1,1,1,1,0\n",
            Feature::SalesOrder,
        )
        .unwrap();
        let (kept, removed) = filter_low_quality(&t, 0.5);
        assert_eq!(removed, vec!["Z".to_string()]);
        assert_eq!(kept.products(), &["OK".to_string()]);
        assert!(filter_low_quality(&t, 1.0).1.is_empty());
        assert_eq!(filter_low_quality(&t, 0.0).1.len(), 2);
    }

    #[test]
    fn csv_roundtrip() {
        let t = parse_temporal_csv("Product,d1,d2\n\"A,1\",0.1,\nB,2.5e-3,3\n", Feature::SalesOrder)
            .unwrap();
        assert_eq!(parse_temporal_csv(&t.to_csv(), Feature::SalesOrder).unwrap(), t);
    }

    #[test]
    fn feature_names() {
        assert_eq!("Sales Order".parse::<Feature>().unwrap(), Feature::SalesOrder);
        assert_eq!("factory_issue".parse::<Feature>().unwrap(), Feature::FactoryIssue);
        assert!("demand".parse::<Feature>().is_err());
    }
}
