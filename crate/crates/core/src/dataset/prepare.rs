use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::graph::{parse_edges, SupplyGraphTopology};
use super::temporal::{
    csv_error, csv_reader, dedup_rows, drop_missing, filter_low_quality, parse_temporal_csv,
    Feature, TemporalTable,
};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Why a product left the roster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalReason {
    MissingValues,
    LowQuality,
    /// Absent from at least one feature file to begin with.
    NotInAllFeatures,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub product: String,
    pub feature: Option<Feature>,
    pub reason: RemovalReason,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub removals: Vec<Removal>,
    pub dropped_dates: usize,
    pub dropped_edges: usize,
    pub dropped_self_loops: usize,
}

impl RemovalReport {
    /// Distinct removed product codes, first removal first.
    pub fn removed_products(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.removals
            .iter()
            .filter(|r| seen.insert(r.product.as_str()))
            .map(|r| r.product.clone())
            .collect()
    }

    pub fn removed_for(&self, reason: RemovalReason) -> Vec<String> {
        self.removals
            .iter()
            .filter(|r| r.reason == reason)
            .map(|r| r.product.clone())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("product,feature,reason\n");
        for r in &self.removals {
            let f = r.feature.map(|f| f.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{f},{:?}\n", r.product, r.reason));
        }
        out
    }
}

/// Free-form per-node attributes (product group, plant, storage location).
/// Kept alongside the data but not consumed by any model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetadata {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

/// Parses a node attribute file: first column product code, the rest named
/// attributes.
pub fn parse_node_metadata(text: &str) -> Result<NodeMetadata> {
    let mut records = csv_reader(text).into_records();
    let Some(header) = records.next() else {
        return Ok(NodeMetadata::default());
    };
    let header = header.map_err(csv_error)?;
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let code = rec.get(0).filter(|c| !c.is_empty());
        let code = code.ok_or_else(|| Error::parse(line, 1, "empty node code"))?;
        let attrs = (0..columns.len())
            .map(|j| rec.get(j + 1).unwrap_or_default().to_string())
            .collect();
        rows.push((code.to_string(), attrs));
    }
    Ok(NodeMetadata { columns, rows })
}

/// File contents for one dataset.
#[derive(Clone, Debug)]
pub struct RawInputs {
    pub temporal: Vec<(Feature, String)>,
    pub edges: String,
    pub nodes: Option<String>,
}

/// Aligned, cleaned raw values for every surviving product.
#[derive(Clone, Debug, PartialEq)]
pub struct CleanData {
    pub products: Vec<String>,
    pub dates: Vec<String>,
    pub features: Vec<Feature>,
    /// Raw values, shape `[products, features, dates]`.
    pub cube: Tensor,
    pub topology: SupplyGraphTopology,
    pub node_metadata: Option<NodeMetadata>,
    pub report: RemovalReport,
}

impl CleanData {
    pub fn num_timepoints(&self) -> usize {
        self.dates.len()
    }

    pub fn feature_index(&self, feature: Feature) -> Option<usize> {
        self.features.iter().position(|&f| f == feature)
    }

    /// Raw series of one product and feature.
    pub fn series(&self, product: usize, feature: usize) -> &[f64] {
        let (f, t) = (self.features.len(), self.dates.len());
        let start = (product * f + feature) * t;
        &self.cube.data()[start..start + t]
    }

    /// One feature of the cube as a table.
    pub fn table(&self, feature: Feature) -> Option<TemporalTable> {
        let fi = self.feature_index(feature)?;
        let rows = (0..self.products.len())
            .map(|p| self.series(p, fi).to_vec())
            .collect();
        TemporalTable::from_rows(feature, self.products.clone(), self.dates.clone(), rows).ok()
    }
}

/// Cleans every feature table, aligns them on common products and dates and
/// builds the product graph over the survivors.
///
/// Per table: exact duplicate rows are collapsed, rows with missing cells are
/// removed, then rows with a zero fraction above `zero_fraction_threshold`.
/// A product survives only if it survives in every table; dates are the
/// intersection across tables in the order of the first table.
pub fn preprocess(inputs: &RawInputs, zero_fraction_threshold: f64) -> Result<CleanData> {
    if inputs.temporal.is_empty() {
        return Err(Error::Config("no temporal features selected".into()));
    }
    let mut report = RemovalReport::default();
    let mut tables = Vec::with_capacity(inputs.temporal.len());
    let mut all_products: Vec<String> = Vec::new();
    let mut seen_products = HashSet::new();
    for (feature, text) in &inputs.temporal {
        let table = dedup_rows(&parse_temporal_csv(text, *feature)?)?;
        for p in table.products() {
            if seen_products.insert(p.clone()) {
                all_products.push(p.clone());
            }
        }
        let (table, missing) = drop_missing(&table);
        let (table, low) = filter_low_quality(&table, zero_fraction_threshold);
        let tag = |codes: Vec<String>, reason| {
            codes.into_iter().map(move |product| Removal {
                product,
                feature: Some(*feature),
                reason,
            })
        };
        report
            .removals
            .extend(tag(missing, RemovalReason::MissingValues));
        report.removals.extend(tag(low, RemovalReason::LowQuality));
        tables.push(table);
    }

    let removed: HashSet<String> = report.removals.iter().map(|r| r.product.clone()).collect();
    let mut products = Vec::new();
    for p in &all_products {
        let everywhere = tables.iter().all(|t| t.product_index(p).is_some());
        if everywhere {
            products.push(p.clone());
        } else if !removed.contains(p) {
            report.removals.push(Removal {
                product: p.clone(),
                feature: None,
                reason: RemovalReason::NotInAllFeatures,
            });
        }
    }

    let first_dates = tables[0].dates();
    let date_sets: Vec<HashSet<&str>> = tables
        .iter()
        .map(|t| t.dates().iter().map(String::as_str).collect())
        .collect();
    let dates: Vec<String> = first_dates
        .iter()
        .filter(|d| date_sets.iter().all(|s| s.contains(d.as_str())))
        .cloned()
        .collect();
    report.dropped_dates = tables
        .iter()
        .map(|t| t.num_dates() - dates.len())
        .max()
        .unwrap_or(0);

    if products.is_empty() {
        return Err(Error::Config("no products survived preprocessing".into()));
    }
    if dates.is_empty() {
        return Err(Error::Config("feature files share no dates".into()));
    }

    let aligned: Vec<TemporalTable> = tables.iter().map(|t| t.select(&products, &dates)).collect();
    let (n, f, t) = (products.len(), aligned.len(), dates.len());
    let mut cube = Vec::with_capacity(n * f * t);
    for p in 0..n {
        for table in &aligned {
            cube.extend(table.row(p).iter().map(|v| v.expect("missing rows dropped")));
        }
    }
    let topology = parse_edges(&inputs.edges, &products)?;
    report.dropped_edges = topology.dropped_edges;
    report.dropped_self_loops = topology.dropped_self_loops;
    let node_metadata = inputs.nodes.as_deref().map(parse_node_metadata).transpose()?;

    Ok(CleanData {
        products,
        dates,
        features: inputs.temporal.iter().map(|(f, _)| *f).collect(),
        cube: Tensor::new(vec![n, f, t], cube)?,
        topology,
        node_metadata,
        report,
    })
}

/// Paths of the input files found under a data directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputPaths {
    pub temporal: Vec<(Feature, PathBuf)>,
    pub edges: PathBuf,
    pub nodes: Option<PathBuf>,
}

impl InputPaths {
    pub fn read(&self) -> Result<RawInputs> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile(p.display().to_string()),
                _ => Error::Io(e),
            })
        };
        Ok(RawInputs {
            temporal: self
                .temporal
                .iter()
                .map(|(f, p)| Ok((*f, read(p)?)))
                .collect::<Result<_>>()?,
            edges: read(&self.edges)?,
            nodes: self.nodes.as_deref().map(read).transpose()?,
        })
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = self.temporal.iter().map(|(_, p)| p.as_path()).collect();
        v.push(&self.edges);
        v.extend(self.nodes.as_deref());
        v
    }
}

fn stem_key(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy())
        .unwrap_or_default()
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Finds the feature, edge and (optional) node files under `dir`.
///
/// A file matches a feature when its stem, lowercased with punctuation and
/// spaces removed, starts with the feature key (`Sales Order .csv` matches
/// `SalesOrder`). Exact stem matches win, then shallower paths, then paths
/// under a `unit` directory, then lexical order. The edge file is the best
/// match for `edges`; `nodes` is optional.
pub fn locate_inputs(dir: &Path, features: &[Feature]) -> Result<InputPaths> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.display().to_string()));
    }
    let mut csvs = Vec::new();
    collect_csvs(dir, &mut csvs)?;
    csvs.sort();

    let best = |key: &str| -> Option<PathBuf> {
        csvs.iter()
            .filter(|p| stem_key(p).starts_with(key))
            .min_by_key(|p| {
                let rel = p.strip_prefix(dir).unwrap_or(p);
                let unit = rel
                    .to_string_lossy()
                    .to_ascii_lowercase()
                    .contains("unit");
                (stem_key(p) != key, rel.components().count(), !unit, (*p).clone())
            })
            .cloned()
    };
    let temporal = features
        .iter()
        .map(|&f| {
            best(f.key())
                .map(|p| (f, p))
                .ok_or_else(|| Error::MissingFile(format!("{f}.csv")))
        })
        .collect::<Result<_>>()?;
    let edges = best("edges")
        .or_else(|| best("edge"))
        .ok_or_else(|| Error::MissingFile("Edges.csv".into()))?;
    Ok(InputPaths {
        temporal,
        edges,
        nodes: best("nodes"),
    })
}

fn collect_csvs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_csvs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        {
            out.push(path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(sales: &str, other: &str, edges: &str) -> RawInputs {
        RawInputs {
            temporal: vec![
                (Feature::SalesOrder, sales.to_string()),
                (Feature::Production, other.to_string()),
            ],
            edges: edges.to_string(),
            nodes: None,
        }
    }

    #[test]
    fn clean_input_has_no_removals() {
        let s = "Product,d1,d2,d3\nA,1,2,3\nB,4,5,6\n";
        let d = preprocess(&inputs(s, s, "node1,node2\nA,B\n"), 0.5).unwrap();
        assert!(d.report.removals.is_empty());
        assert_eq!(d.cube.shape(), &[2, 2, 3]);
        assert_eq!(d.series(1, 1), &[4.0, 5.0, 6.0]);
        assert_eq!(d.topology.edges().len(), 1);
    }

    #[test]
    fn removals_are_attributed() {
        let sales = "Product,d1,d2,d3,d4,d5\nA,1,2,3,4,5\nZ,0,0,0,1,1\nM,1,,1,1,1\nC,1,1,1,1,1\nX,1,1,1,1,1\n";
        let prod = "Product,d1,d2,d3,d4,d5\nA,1,2,3,4,5\nZ,1,1,1,1,1\nM,1,1,1,1,1\nC,1,1,1,1,1\n";
        let d = preprocess(&inputs(sales, prod, "node1,node2\nA,Z\nA,C\n"), 0.5).unwrap();
        assert_eq!(d.products, vec!["A", "C"]);
        assert_eq!(d.report.removed_for(RemovalReason::LowQuality), vec!["Z"]);
        assert_eq!(d.report.removed_for(RemovalReason::MissingValues), vec!["M"]);
        assert_eq!(d.report.removed_for(RemovalReason::NotInAllFeatures), vec!["X"]);
        assert_eq!(d.report.dropped_edges, 1);
    }

    #[test]
    fn dates_intersect_in_first_file_order() {
        let a = "Product,d1,d2,d3\nA,1,2,3\n";
        let b = "Product,d2,d3,d4\nA,5,6,7\n";
        let d = preprocess(&inputs(a, b, ""), 0.5).unwrap();
        assert_eq!(d.dates, vec!["d2", "d3"]);
        assert_eq!(d.series(0, 0), &[2.0, 3.0]);
        assert_eq!(d.series(0, 1), &[5.0, 6.0]);
        assert_eq!(d.report.dropped_dates, 1);
    }

    #[test]
    fn conflict_propagates() {
        let bad = "Product,d1\nA,1\nA,2\n";
        assert!(matches!(
            preprocess(&inputs(bad, bad, ""), 0.5),
            Err(Error::Conflict(_))
        ));
    }

    #[test]
    fn node_metadata_rows() {
        let m = parse_node_metadata("Node,Group,Plant\nA,S,1101\nB,P\n").unwrap();
        assert_eq!(m.columns, vec!["Group", "Plant"]);
        assert_eq!(m.rows[1], ("B".to_string(), vec!["P".to_string(), String::new()]));
    }
}
