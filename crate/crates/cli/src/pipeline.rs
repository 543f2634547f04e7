//! Load → clean → normalize → window → train → evaluate, per product and model.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use graphcast::config::RunConfig;
use graphcast::dataset::{
    locate_inputs, normalize_adjacency, preprocess, CleanData, NormalizationStats,
    NormalizedAdjacency, RawInputs,
};
use graphcast::evaluation::{evaluate, render_table, MetricsReport, MetricsRow, TableFormat};
use graphcast::models::{save_params, Forecaster, InputLayout, ModelKind, ModelSpec};
use graphcast::numcore::{ParamSet, Tensor};
use graphcast::training::{train, TrainHistory};
use graphcast::windowing::{
    chronological_split, make_windows, random_split, split_sizes, window_count, SplitDataset,
};
use graphcast::{Error, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::manifest::RunManifest;

/// Cleaned data plus everything derived from it that the jobs share.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub clean: CleanData,
    /// Z-scored cube, `[products, features, time]`.
    pub normalized: Tensor,
    pub stats: NormalizationStats,
    pub graph: NormalizedAdjacency,
    /// Index of the target feature in `clean.features`.
    pub target: usize,
    /// Number of leading time steps the statistics were fitted on.
    pub fit_len: usize,
    pub fingerprint: String,
}

/// SHA-256 over every input file, in a fixed order.
pub fn fingerprint(raw: &RawInputs) -> String {
    let mut h = Sha256::new();
    let mut feed = |name: &str, body: &str| {
        h.update(name.as_bytes());
        h.update((body.len() as u64).to_le_bytes());
        h.update(body.as_bytes());
    };
    for (f, body) in &raw.temporal {
        feed(f.key(), body);
    }
    feed("edges", &raw.edges);
    if let Some(nodes) = &raw.nodes {
        feed("nodes", nodes);
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `base + h(code)` where `h` is the first 8 bytes of SHA-256 of the code,
/// so one product's stream does not depend on which others are present.
pub fn product_seed(base: u64, code: &str) -> u64 {
    let digest = Sha256::digest(code.as_bytes());
    let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    base.wrapping_add(h)
}

pub fn prepare(data_dir: &Path, cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let paths = locate_inputs(data_dir, &cfg.features)?;
    log::info!("reading {} input files under {}", paths.all().len(), data_dir.display());
    let raw = paths.read()?;
    let fp = fingerprint(&raw);
    let clean = preprocess(&raw, cfg.zero_fraction_threshold)?;
    prepare_clean(clean, cfg, fp)
}

/// Fits normalization on the training time prefix and builds Â.
///
/// With a chronological split the statistics see time steps up to and
/// including the last training target. A random split has no such prefix,
/// so the whole series is used.
pub fn prepare_clean(clean: CleanData, cfg: &RunConfig, fingerprint: String) -> Result<Prepared> {
    if clean.products.is_empty() {
        return Err(Error::Config("no products survived preprocessing".into()));
    }
    let t = clean.num_timepoints();
    let (w, h) = (cfg.window_size, cfg.horizon);
    let count = window_count(t, w, h).ok_or(Error::InsufficientData {
        required: w + h,
        available: t,
    })?;
    let fit_len = if cfg.random_split {
        t
    } else {
        let (train, val, test) = split_sizes(count);
        if train == 0 || val == 0 || test == 0 {
            return Err(Error::InsufficientData {
                required: w + h + 9,
                available: t,
            });
        }
        w + train + h - 1
    };
    let target = clean
        .feature_index(cfg.target)
        .ok_or_else(|| Error::Config(format!("target {} was not loaded", cfg.target)))?;
    let stats = NormalizationStats::fit_cube(&clean.products, &clean.features, &clean.cube, fit_len)?;
    let normalized = stats.apply_cube(&clean.cube)?;
    let graph = normalize_adjacency(&clean.topology)?;
    Ok(Prepared {
        clean,
        normalized,
        stats,
        graph,
        target,
        fit_len,
        fingerprint,
    })
}

impl Prepared {
    pub fn layout(&self, cfg: &RunConfig) -> InputLayout {
        InputLayout {
            nodes: self.clean.products.len(),
            features: self.clean.features.len(),
            window: cfg.window_size,
        }
    }

    /// Normalized target series of one product.
    pub fn target_series(&self, product: usize) -> &[f64] {
        let (f, t) = (self.clean.features.len(), self.clean.num_timepoints());
        let start = (product * f + self.target) * t;
        &self.normalized.data()[start..start + t]
    }

    pub fn product_index(&self, code: &str) -> Option<usize> {
        self.clean.products.iter().position(|p| p == code)
    }

    pub fn splits(&self, cfg: &RunConfig, product: usize) -> Result<SplitDataset> {
        let samples = make_windows(
            &self.normalized,
            self.target_series(product),
            cfg.window_size,
            cfg.horizon,
        )?;
        if cfg.random_split {
            random_split(samples, cfg.shuffle_seed)
        } else {
            chronological_split(samples)
        }
    }

    pub fn forecaster(&self, cfg: &RunConfig, product: usize, kind: ModelKind) -> Result<Forecaster> {
        let spec = ModelSpec::new(kind, cfg.hidden(kind).to_vec(), self.layout(cfg), product)?;
        Forecaster::new(spec, Some(self.graph.clone()))
    }
}

/// Outcome of training and scoring one product × model pair.
#[derive(Clone, Debug)]
pub struct JobResult {
    pub product: String,
    pub kind: ModelKind,
    pub seed: u64,
    pub row: MetricsRow,
    pub history: Option<TrainHistory>,
    pub params: Option<ParamSet>,
}

/// Trains and evaluates one pair. Failures become a failed report row.
pub fn run_job(prep: &Prepared, cfg: &RunConfig, product: usize, kind: ModelKind) -> JobResult {
    let code = prep.clean.products[product].clone();
    let seed = product_seed(cfg.seed, &code);
    let attempt = || -> Result<(MetricsRow, TrainHistory, ParamSet)> {
        let model = prep.forecaster(cfg, product, kind)?;
        let splits = prep.splits(cfg, product)?;
        let (params, history) = train(&cfg.train_config(seed), &model, &splits)?;
        let stats = prep.stats.get(product, cfg.target);
        let row = evaluate(&model, &params, &splits.test, &code, stats, cfg.metric_space)?;
        Ok((row, history, params))
    };
    match attempt() {
        Ok((row, history, params)) => JobResult {
            product: code,
            kind,
            seed,
            row,
            history: Some(history),
            params: Some(params),
        },
        Err(e) => {
            log::warn!("{code} {kind}: {e}");
            JobResult {
                row: MetricsRow::failed(&code, kind, cfg.metric_space, e.to_string()),
                product: code,
                kind,
                seed,
                history: None,
                params: None,
            }
        }
    }
}

/// Cleaned tables, removal report, statistics and graph files. Returns the
/// written paths relative to `dir`.
pub fn write_preprocessed(prep: &Prepared, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(PathBuf, String)> = prep
        .clean
        .features
        .iter()
        .filter_map(|&f| prep.clean.table(f).map(|t| (format!("{f}.csv").into(), t.to_csv())))
        .collect();
    files.push(("removal_report.csv".into(), prep.clean.report.to_csv()));
    files.push(("normalization_stats.csv".into(), prep.stats.to_csv()));
    files.push(("edges.csv".into(), prep.clean.topology.to_csv()));
    files.push(("adjacency_normalized.csv".into(), prep.graph.to_csv()));
    for (name, body) in &files {
        fs::write(dir.join(name), body)?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub report: MetricsReport,
    pub manifest: RunManifest,
    pub jobs: Vec<JobResult>,
}

pub fn artifact_stem(product: &str, kind: ModelKind) -> String {
    let safe: String = product
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}_{kind}")
}

/// Runs every selected product × model, writes all artifacts under
/// `out_dir` and returns the report.
pub fn benchmark(data_dir: &Path, out_dir: &Path, cfg: &RunConfig, jobs: usize) -> Result<BenchmarkOutcome> {
    let started_at = Utc::now();
    let prep = prepare(data_dir, cfg)?;

    let products: Vec<usize> = match &cfg.products {
        None => (0..prep.clean.products.len()).collect(),
        Some(codes) => {
            let found: Vec<usize> = codes
                .iter()
                .filter_map(|c| {
                    let i = prep.product_index(c);
                    if i.is_none() {
                        log::warn!("product {c} not present after preprocessing");
                    }
                    i
                })
                .collect();
            if found.is_empty() {
                return Err(Error::Config("none of the requested products are available".into()));
            }
            found
        }
    };
    let pairs: Vec<(usize, ModelKind)> = products
        .iter()
        .flat_map(|&p| cfg.models.iter().map(move |&k| (p, k)))
        .collect();
    log::info!("{} jobs on {} worker(s)", pairs.len(), jobs.max(1));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<JobResult> =
        pool.install(|| pairs.par_iter().map(|&(p, k)| run_job(&prep, cfg, p, k)).collect());

    fs::create_dir_all(out_dir)?;
    let mut outputs: Vec<PathBuf> = write_preprocessed(&prep, &out_dir.join("preprocessed"))?
        .into_iter()
        .map(|p| Path::new("preprocessed").join(p))
        .collect();
    let mut report = MetricsReport::default();
    for r in &results {
        let stem = artifact_stem(&r.product, r.kind);
        if let Some(h) = &r.history {
            let rel = Path::new("histories").join(format!("{stem}.csv"));
            fs::create_dir_all(out_dir.join("histories"))?;
            fs::write(out_dir.join(&rel), h.to_csv())?;
            outputs.push(rel);
        }
        if let Some(params) = &r.params {
            save_params(&out_dir.join("params"), &stem, params)?;
            outputs.push(Path::new("params").join(format!("{stem}.shapes")));
            outputs.push(Path::new("params").join(format!("{stem}.bin")));
        }
        report.push(r.row.clone());
    }
    for (name, format) in [("report.csv", TableFormat::Csv), ("report.md", TableFormat::Markdown)] {
        fs::write(out_dir.join(name), render_table(&report, format))?;
        outputs.push(name.into());
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        source_revision: RunManifest::detect_revision(),
        config: cfg.clone(),
        data_dir: data_dir.display().to_string(),
        dataset_fingerprint: prep.fingerprint.clone(),
        products: products.iter().map(|&p| prep.clean.products[p].clone()).collect(),
        seeds: results
            .iter()
            .map(|r| (r.product.clone(), r.seed))
            .collect(),
        failed_rows: report.failed_rows(),
        started_at: started_at.to_rfc3339(),
        finished_at: Utc::now().to_rfc3339(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    manifest.write(out_dir)?;
    Ok(BenchmarkOutcome {
        report,
        manifest,
        jobs: results,
    })
}
