//! Synthetic product graphs and demand series with known dynamics.
//!
//! Noise comes from [`CounterRng`], a SplitMix64 finalizer applied to
//! `key + counter · γ`. The stream is a pure function of `(key, counter)`, so
//! any reimplementation of the mixer reproduces it value for value.

use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_adjacency, Feature, SupplyGraphTopology, TemporalTable};
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based 64-bit generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed),
            counter: 0,
        }
    }

    /// Independent stream derived from this one's key and `stream`.
    pub fn split(&self, stream: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))),
            counter: 0,
        }
    }

    /// Value at an arbitrary counter position.
    pub fn at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (one draw per two uniforms).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    /// `s(t) = ε(t)`.
    IidNoise,
    /// `s(t+1) = φ·s(t) + ε(t)` per product.
    LinearAr,
    /// `s(t+1) = φ·(Â s(t)) + ε(t)` over the product graph.
    GraphDiffusion,
}

impl std::str::FromStr for Process {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid-noise" | "iid" => Ok(Process::IidNoise),
            "linear-ar" | "ar" => Ok(Process::LinearAr),
            "graph-diffusion" | "diffusion" => Ok(Process::GraphDiffusion),
            _ => Err(Error::Config(format!("unknown process {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_products: usize,
    pub num_timepoints: usize,
    pub edge_probability: f64,
    pub seed: u64,
    pub process: Process,
    /// AR / diffusion coefficient φ.
    pub coefficient: f64,
    /// Innovation standard deviation σ.
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_products: 5,
            num_timepoints: 221,
            edge_probability: 0.3,
            seed: 7,
            process: Process::LinearAr,
            coefficient: 0.8,
            noise_sigma: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_products < 2 {
            return Err(Error::Config("synthetic data needs at least 2 products".into()));
        }
        if self.num_timepoints < 2 {
            return Err(Error::Config("synthetic data needs at least 2 time points".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(Error::Config("edge probability must lie in [0,1]".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite() && self.coefficient.is_finite()) {
            return Err(Error::Config("noise σ must be non-negative and finite".into()));
        }
        Ok(())
    }

    pub fn product_codes(&self) -> Vec<String> {
        (0..self.num_products).map(|i| format!("SYN{i:03}")).collect()
    }

    /// Consecutive ISO dates starting 2023-01-01.
    pub fn dates(&self) -> Vec<String> {
        let start = NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date");
        (0..self.num_timepoints)
            .map(|d| (start + Duration::days(d as i64)).format("%Y-%m-%d").to_string())
            .collect()
    }

    /// Stationary standard deviation of the latent AR(1) sales series,
    /// `σ / √(1 − φ²)`; `σ` for the iid process.
    pub fn stationary_std(&self) -> f64 {
        match self.process {
            Process::IidNoise => self.noise_sigma,
            _ if self.coefficient.abs() < 1.0 => {
                self.noise_sigma / (1.0 - self.coefficient * self.coefficient).sqrt()
            }
            _ => self.noise_sigma,
        }
    }
}

/// Erdős–Rényi graph: each unordered pair is an edge with probability `p`.
pub fn gen_topology(cfg: &SynthConfig) -> Result<SupplyGraphTopology> {
    cfg.validate()?;
    let mut rng = CounterRng::new(cfg.seed).split(0);
    let n = cfg.num_products;
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.next_f64() < cfg.edge_probability {
                pairs.push((a, b));
            }
        }
    }
    SupplyGraphTopology::from_pairs(cfg.product_codes(), &pairs)
}

/// The four feature tables for `topo`'s roster.
///
/// Sales follow the configured process. Production tracks sales with extra
/// noise, deliveries lag sales by one step, and factory issues average the
/// two. Each series is then shifted so its minimum is 1, which keeps every
/// value positive without touching the dynamics.
pub fn gen_series(cfg: &SynthConfig, topo: &SupplyGraphTopology) -> Result<Vec<TemporalTable>> {
    cfg.validate()?;
    if topo.num_nodes() != cfg.num_products {
        return Err(Error::Config(format!(
            "topology has {} nodes, config {} products",
            topo.num_nodes(),
            cfg.num_products
        )));
    }
    let (n, t) = (cfg.num_products, cfg.num_timepoints);
    let root = CounterRng::new(cfg.seed);
    let mut noise = root.split(1);
    let mut aux = root.split(2);
    let sigma = cfg.noise_sigma;
    let phi = cfg.coefficient;

    // one extra leading step feeds the lagged delivery series
    let len = t + 1;
    let mut sales = vec![vec![0.0; len]; n];
    let init_std = if sigma > 0.0 { cfg.stationary_std() } else { 1.0 };
    for s in sales.iter_mut() {
        s[0] = init_std * noise.next_gaussian();
    }
    let a_hat = match cfg.process {
        Process::GraphDiffusion => Some(normalize_adjacency(topo)?),
        _ => None,
    };
    for k in 1..len {
        for i in 0..n {
            let eps = sigma * noise.next_gaussian();
            sales[i][k] = match cfg.process {
                Process::IidNoise => eps,
                Process::LinearAr => phi * sales[i][k - 1] + eps,
                Process::GraphDiffusion => {
                    let a = a_hat.as_ref().expect("built above").matrix();
                    let mixed: f64 = (0..n).map(|j| a.at(i, j) * sales[j][k - 1]).sum();
                    phi * mixed + eps
                }
            };
        }
    }

    let mut production = Vec::with_capacity(n);
    let mut delivery = Vec::with_capacity(n);
    let mut issue = Vec::with_capacity(n);
    for s in &sales {
        let p: Vec<f64> = s[1..]
            .iter()
            .map(|v| 0.9 * v + 0.5 * sigma * aux.next_gaussian())
            .collect();
        let d: Vec<f64> = s[..t].to_vec();
        let f: Vec<f64> = s[1..].iter().zip(&p).map(|(a, b)| 0.5 * (a + b)).collect();
        production.push(shift_positive(p));
        delivery.push(shift_positive(d));
        issue.push(shift_positive(f));
    }
    let sales: Vec<Vec<f64>> = sales.into_iter().map(|s| shift_positive(s[1..].to_vec())).collect();

    let (codes, dates) = (cfg.product_codes(), cfg.dates());
    [
        (Feature::SalesOrder, sales),
        (Feature::Production, production),
        (Feature::Delivery, delivery),
        (Feature::FactoryIssue, issue),
    ]
    .into_iter()
    .map(|(f, rows)| TemporalTable::from_rows(f, codes.clone(), dates.clone(), rows))
    .collect()
}

fn shift_positive(mut s: Vec<f64>) -> Vec<f64> {
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;
    for v in &mut s {
        *v += shift;
    }
    s
}

/// Writes `<Feature>.csv` for every table plus `Edges.csv` into `dir`.
pub fn write_dataset(dir: &Path, tables: &[TemporalTable], topo: &SupplyGraphTopology) -> Result<()> {
    fs::create_dir_all(dir)?;
    for t in tables {
        fs::write(dir.join(format!("{}.csv", t.feature())), t.to_csv())?;
    }
    fs::write(dir.join("Edges.csv"), topo.to_csv())?;
    Ok(())
}

/// Topology and series for `cfg`, written to `dir`.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<(SupplyGraphTopology, Vec<TemporalTable>)> {
    let topo = gen_topology(cfg)?;
    let tables = gen_series(cfg, &topo)?;
    write_dataset(dir, &tables, &topo)?;
    Ok((topo, tables))
}
