use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::temporal::{csv_error, csv_reader};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Undirected edge between two roster indices, `a < b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Relation tags seen for this pair, first occurrence first.
    pub relations: Vec<String>,
}

/// Homogeneous product graph over an ordered roster.
#[derive(Clone, Debug, PartialEq)]
pub struct SupplyGraphTopology {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    adjacency: Tensor,
    /// Rows naming a product outside the roster.
    pub dropped_edges: usize,
    /// Rows connecting a product to itself.
    pub dropped_self_loops: usize,
}

impl SupplyGraphTopology {
    /// Graph over `nodes` with the given index pairs. Pairs are made
    /// unordered and deduplicated; self-pairs are dropped.
    pub fn from_pairs(nodes: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut builder = Builder::new(nodes)?;
        for &(a, b) in pairs {
            if a >= builder.n() || b >= builder.n() {
                return Err(Error::Contract(format!("edge ({a},{b}) outside roster")));
            }
            builder.add(a, b, None);
        }
        Ok(builder.finish())
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// Edge list in the `node1,node2,relation` layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node1,node2,relation\n");
        for e in &self.edges {
            let rel = e.relations.first().map_or("", String::as_str);
            out.push_str(&format!("{},{},{rel}\n", self.nodes[e.a], self.nodes[e.b]));
        }
        out
    }

    /// The same graph restricted to `keep` (a subset of the roster, in
    /// roster order). Edges touching removed nodes are dropped.
    pub fn restrict(&self, keep: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = keep
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let mut builder = Builder::new(keep.to_vec())?;
        for e in &self.edges {
            if let (Some(&a), Some(&b)) = (
                index.get(self.nodes[e.a].as_str()),
                index.get(self.nodes[e.b].as_str()),
            ) {
                for r in &e.relations {
                    builder.add(a, b, Some(r.clone()));
                }
                if e.relations.is_empty() {
                    builder.add(a, b, None);
                }
            }
        }
        let mut topo = builder.finish();
        topo.dropped_edges = self.dropped_edges;
        topo.dropped_self_loops = self.dropped_self_loops;
        Ok(topo)
    }
}

struct Builder {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    index: HashMap<(usize, usize), usize>,
    dropped_self_loops: usize,
}

impl Builder {
    fn new(nodes: Vec<String>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("graph roster is empty".into()));
        }
        Ok(Self {
            nodes,
            edges: Vec::new(),
            index: HashMap::new(),
            dropped_self_loops: 0,
        })
    }

    fn n(&self) -> usize {
        self.nodes.len()
    }

    fn add(&mut self, a: usize, b: usize, relation: Option<String>) {
        if a == b {
            self.dropped_self_loops += 1;
            return;
        }
        let key = (a.min(b), a.max(b));
        let slot = *self.index.entry(key).or_insert_with(|| {
            self.edges.push(Edge {
                a: key.0,
                b: key.1,
                relations: Vec::new(),
            });
            self.edges.len() - 1
        });
        if let Some(r) = relation.filter(|r| !r.is_empty()) {
            let rels = &mut self.edges[slot].relations;
            if !rels.contains(&r) {
                rels.push(r);
            }
        }
    }

    fn finish(self) -> SupplyGraphTopology {
        let n = self.nodes.len();
        let mut adjacency = Tensor::zeros(&[n, n]);
        for e in &self.edges {
            adjacency.data_mut()[e.a * n + e.b] = 1.0;
            adjacency.data_mut()[e.b * n + e.a] = 1.0;
        }
        SupplyGraphTopology {
            nodes: self.nodes,
            edges: self.edges,
            adjacency,
            dropped_edges: 0,
            dropped_self_loops: self.dropped_self_loops,
        }
    }
}

/// Parses an edge list with header `node1,node2[,relation]`.
///
/// Columns are located by header name (case-insensitive), so extra columns
/// anywhere are ignored. Edges naming a product outside `roster` are dropped
/// and counted in [`SupplyGraphTopology::dropped_edges`]. An empty file
/// yields an edgeless graph.
pub fn parse_edges(text: &str, roster: &[String]) -> Result<SupplyGraphTopology> {
    let mut builder = Builder::new(roster.to_vec())?;
    let index: HashMap<&str, usize> = roster
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let mut records = csv_reader(text).into_records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Ok(builder.finish()),
    };
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(c1), Some(c2)) = (col("node1"), col("node2")) else {
        return Err(Error::Schema(
            "edge file header must name node1 and node2 columns".into(),
        ));
    };
    let c_rel = col("relation");

    let mut dropped = 0;
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let field = |c: usize| rec.get(c).filter(|s| !s.is_empty());
        let a = field(c1).ok_or_else(|| Error::parse(line, c1 + 1, "missing node1"))?;
        let b = field(c2).ok_or_else(|| Error::parse(line, c2 + 1, "missing node2"))?;
        match (index.get(a), index.get(b)) {
            (Some(&ia), Some(&ib)) => {
                builder.add(ia, ib, c_rel.and_then(field).map(str::to_string))
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} edges referencing products outside the roster");
    }
    let mut topo = builder.finish();
    topo.dropped_edges = dropped;
    Ok(topo)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` where `D̃` holds the row sums of `A + I`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Tensor,
}

impl NormalizedAdjacency {
    /// Normalizes a symmetric, zero-diagonal adjacency matrix.
    pub fn from_adjacency(adj: &Tensor) -> Result<Self> {
        let (n, m) = adj.dims2("normalize_adjacency")?;
        if n != m {
            return Err(Error::dim("normalize_adjacency", adj.shape(), &[n, n]));
        }
        for i in 0..n {
            if adj.at(i, i) != 0.0 {
                return Err(Error::Contract(format!("adjacency has self-loop at {i}")));
            }
            for j in i + 1..n {
                if adj.at(i, j) != adj.at(j, i) {
                    return Err(Error::Contract(format!(
                        "adjacency not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let degree: Vec<f64> = (0..n)
            .map(|i| 1.0 + (0..n).map(|j| adj.at(i, j)).sum::<f64>())
            .collect();
        let mut out = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                let tilde = adj.at(i, j) + if i == j { 1.0 } else { 0.0 };
                if tilde != 0.0 {
                    out.data_mut()[i * n + j] = tilde / (degree[i] * degree[j]).sqrt();
                }
            }
        }
        Ok(Self { matrix: out })
    }

    /// The identity operator, i.e. the normalization of an edgeless graph.
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Tensor::identity(n),
        }
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.shape()[0]
    }

    /// Dense `node,node,...` matrix rows.
    pub fn to_csv(&self) -> String {
        let n = self.num_nodes();
        let mut out = String::new();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| self.matrix.at(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn normalize_adjacency(topo: &SupplyGraphTopology) -> Result<NormalizedAdjacency> {
    NormalizedAdjacency::from_adjacency(topo.adjacency())
}
