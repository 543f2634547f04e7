//! The three forecasters: a dense MLP, a GNN whose adjacency is the
//! identity, and a GCN over the normalized product graph. All share a
//! linear scalar regression head.

mod io;

pub use io::{decode_params, encode_params, load_params, parse_shape_manifest, save_params};

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::NormalizedAdjacency;
use crate::error::{Error, Result};
use crate::numcore::{BoundParams, ParamSet, Tape, Tensor, Var};
use crate::windowing::WindowedSample;

pub const DEFAULT_DENSE_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_GCN_HIDDEN: [usize; 2] = [32, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "GNN")]
    IdentityGnn,
    #[serde(rename = "GCN")]
    Gcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::IdentityGnn, ModelKind::Gcn];

    /// Column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Mlp => "MLP",
            ModelKind::IdentityGnn => "GNN",
            ModelKind::Gcn => "GCN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "gnn" | "identitygnn" | "identity-gnn" => Ok(ModelKind::IdentityGnn),
            "gcn" => Ok(ModelKind::Gcn),
            _ => Err(Error::Config(format!("unknown model {s:?}"))),
        }
    }
}

/// Shape of one input window: `nodes × features × window`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub nodes: usize,
    pub features: usize,
    pub window: usize,
}

impl InputLayout {
    /// Node-feature channels seen by the identity GNN (`nodes · features`).
    pub fn channels(&self) -> usize {
        self.nodes * self.features
    }

    /// Width of the flattened window.
    pub fn flat_width(&self) -> usize {
        self.channels() * self.window
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_widths: Vec<usize>,
    pub layout: InputLayout,
    /// Node whose demand is forecast; read by the GCN head.
    pub focal: usize,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        hidden_widths: Vec<usize>,
        layout: InputLayout,
        focal: usize,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            hidden_widths,
            layout,
            focal,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two hidden layers of 64 for MLP/GNN, two graph layers of 32 for GCN.
    pub fn with_defaults(kind: ModelKind, layout: InputLayout, focal: usize) -> Result<Self> {
        let hidden = match kind {
            ModelKind::Gcn => DEFAULT_GCN_HIDDEN.to_vec(),
            _ => DEFAULT_DENSE_HIDDEN.to_vec(),
        };
        Self::new(kind, hidden, layout, focal)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.layout;
        if self.hidden_widths.is_empty() {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        if self.hidden_widths.contains(&0) || l.nodes == 0 || l.features == 0 || l.window == 0 {
            return Err(Error::Config(format!(
                "layer widths and input layout must be positive: {:?} {l:?}",
                self.hidden_widths
            )));
        }
        if self.focal >= l.nodes {
            return Err(Error::Config(format!(
                "focal node {} outside {} nodes",
                self.focal, l.nodes
            )));
        }
        Ok(())
    }

    /// Parameter names and shapes in initialization order. Weights are
    /// `(out, in)`, biases `(out)`.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut layer = |name: String, fan_in: usize, fan_out: usize| {
            shapes.push((format!("{name}.weight"), vec![fan_out, fan_in]));
            shapes.push((format!("{name}.bias"), vec![fan_out]));
        };
        match self.kind {
            ModelKind::Mlp | ModelKind::IdentityGnn => {
                let mut fan_in = self.layout.flat_width();
                for (l, &w) in self.hidden_widths.iter().enumerate() {
                    layer(format!("fc{l}"), fan_in, w);
                    fan_in = w;
                }
                layer(format!("fc{}", self.hidden_widths.len()), fan_in, 1);
            }
            ModelKind::Gcn => {
                let mut fan_in = self.layout.features * self.layout.window;
                for (l, &w) in self.hidden_widths.iter().enumerate() {
                    layer(format!("gcn{l}"), fan_in, w);
                    fan_in = w;
                }
                layer("head".into(), fan_in, 1);
            }
        }
        shapes
    }
}

/// `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights and zero biases from a seeded ChaCha stream.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (name, shape) in spec.param_shapes() {
        let tensor = if let [fan_out, fan_in] = shape[..] {
            let a = glorot_bound(fan_in, fan_out);
            let dist = Uniform::new_inclusive(-a, a);
            let data = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            Tensor::new(shape, data).expect("shape from spec")
        } else {
            Tensor::zeros(&shape)
        };
        params.push(name, tensor).expect("names from spec are unique");
    }
    params
}

fn count_layers(params: &ParamSet, prefix: &str) -> usize {
    (0..)
        .take_while(|l| params.get(&format!("{prefix}{l}.weight")).is_some())
        .count()
}

fn layer_vars(bound: &BoundParams, name: &str) -> Result<(Var, Var)> {
    Ok((
        bound.var(&format!("{name}.weight"))?,
        bound.var(&format!("{name}.bias"))?,
    ))
}

/// `layers` affine maps `fc0..`, ReLU between them, linear at the end.
fn dense_stack(tape: &mut Tape, bound: &BoundParams, mut h: Var, layers: usize) -> Result<Var> {
    for l in 0..layers {
        let (w, b) = layer_vars(bound, &format!("fc{l}"))?;
        h = tape.affine(h, w, b)?;
        if l + 1 < layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

fn mlp_on_tape(tape: &mut Tape, bound: &BoundParams, x: Var, layers: usize) -> Result<Var> {
    dense_stack(tape, bound, x, layers)
}

/// `x[batch, channels, window]`: aggregate with the identity over the
/// channel axis for every batch item, flatten, then the dense stack.
fn identity_gnn_on_tape(
    tape: &mut Tape,
    bound: &BoundParams,
    x: Var,
    layers: usize,
) -> Result<Var> {
    let [batch, channels, window] = tape.value(x).shape()[..] else {
        return Err(Error::dim("identity_gnn_forward", tape.value(x).shape(), &[]));
    };
    let identity = tape.constant(Tensor::identity(channels));
    let h = tape.batch_matmul(identity, x)?;
    let flat = tape.reshape(h, &[batch, channels * window])?;
    dense_stack(tape, bound, flat, layers)
}

/// `x[batch, nodes, in]`: `layers` rounds of `Â·H` followed by an affine map
/// (ReLU on all but the last), then the head on each item's focal row.
fn gcn_on_tape(
    tape: &mut Tape,
    bound: &BoundParams,
    a_hat: Var,
    x: Var,
    focal: usize,
    layers: usize,
) -> Result<Var> {
    let [batch, nodes, _] = tape.value(x).shape()[..] else {
        return Err(Error::dim("gcn_forward", tape.value(x).shape(), &[]));
    };
    if tape.value(a_hat).shape() != [nodes, nodes] {
        return Err(Error::dim(
            "gcn_forward",
            tape.value(a_hat).shape(),
            tape.value(x).shape(),
        ));
    }
    if focal >= nodes {
        return Err(Error::Config(format!("focal node {focal} outside {nodes} nodes")));
    }
    let mut h = x;
    for l in 0..layers {
        let mixed = tape.batch_matmul(a_hat, h)?;
        let width = tape.value(mixed).shape()[2];
        let rows = tape.reshape(mixed, &[batch * nodes, width])?;
        let (w, b) = layer_vars(bound, &format!("gcn{l}"))?;
        let mut z = tape.affine(rows, w, b)?;
        if l + 1 < layers {
            z = tape.relu(z);
        }
        let out_width = tape.value(z).shape()[1];
        h = tape.reshape(z, &[batch, nodes, out_width])?;
    }
    let width = tape.value(h).shape()[2];
    let rows = tape.reshape(h, &[batch * nodes, width])?;
    let picks: Vec<usize> = (0..batch).map(|b| b * nodes + focal).collect();
    let focal_rows = tape.gather_rows(rows, &picks)?;
    let (w, b) = layer_vars(bound, "head")?;
    tape.affine(focal_rows, w, b)
}

fn eval_single(
    params: &ParamSet,
    build: impl FnOnce(&mut Tape, &BoundParams) -> Result<Var>,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let out = build(&mut tape, &bound)?;
    Ok(tape.value(out).clone())
}

/// Dense forward pass over `x[batch, width]`; returns `[batch, 1]`.
pub fn mlp_forward(params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    let layers = count_layers(params, "fc");
    eval_single(params, |tape, bound| {
        let x = tape.constant(x.clone());
        mlp_on_tape(tape, bound, x, layers)
    })
}

/// Identity-adjacency GNN over `x[batch, channels, window]`; returns
/// `[batch, 1]`.
pub fn identity_gnn_forward(params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    let layers = count_layers(params, "fc");
    eval_single(params, |tape, bound| {
        let x = tape.constant(x.clone());
        identity_gnn_on_tape(tape, bound, x, layers)
    })
}

/// GCN over one graph snapshot `x[nodes, in]`; returns the focal forecast.
pub fn gcn_forward(
    params: &ParamSet,
    a_hat: &NormalizedAdjacency,
    x: &Tensor,
    focal: usize,
) -> Result<f64> {
    let (nodes, width) = x.dims2("gcn_forward")?;
    if nodes != a_hat.num_nodes() {
        return Err(Error::dim("gcn_forward", a_hat.matrix().shape(), x.shape()));
    }
    let layers = count_layers(params, "gcn");
    let out = eval_single(params, |tape, bound| {
        let a = tape.constant(a_hat.matrix().clone());
        let x = tape.constant(x.reshape(&[1, nodes, width])?);
        gcn_on_tape(tape, bound, a, x, focal, layers)
    })?;
    Ok(out.data()[0])
}

/// A model spec together with the graph operator the GCN propagates over.
#[derive(Clone, Debug)]
pub struct Forecaster {
    pub spec: ModelSpec,
    graph: Option<NormalizedAdjacency>,
}

impl Forecaster {
    /// `graph` is required for the GCN and ignored by the other kinds.
    pub fn new(spec: ModelSpec, graph: Option<NormalizedAdjacency>) -> Result<Self> {
        spec.validate()?;
        let graph = match spec.kind {
            ModelKind::Gcn => {
                let g = graph.ok_or_else(|| Error::Config("GCN needs a graph".into()))?;
                if g.num_nodes() != spec.layout.nodes {
                    return Err(Error::dim(
                        "Forecaster::new",
                        g.matrix().shape(),
                        &[spec.layout.nodes],
                    ));
                }
                Some(g)
            }
            _ => None,
        };
        Ok(Self { spec, graph })
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        init_params(&self.spec, seed)
    }

    /// Stacks sample windows into one `[batch, a, b]` tensor whose middle and
    /// last axes depend on the model kind. The underlying data is identical.
    fn stack(&self, samples: &[WindowedSample]) -> Result<Tensor> {
        let l = self.spec.layout;
        let expected = [l.nodes, l.features, l.window];
        let mut data = Vec::with_capacity(samples.len() * l.flat_width());
        for s in samples {
            if s.input.shape() != expected {
                return Err(Error::dim("stack", s.input.shape(), &expected));
            }
            data.extend_from_slice(s.input.data());
        }
        let shape = match self.spec.kind {
            ModelKind::Mlp => vec![samples.len(), l.flat_width()],
            ModelKind::IdentityGnn => vec![samples.len(), l.channels(), l.window],
            ModelKind::Gcn => vec![samples.len(), l.nodes, l.features * l.window],
        };
        Tensor::new(shape, data)
    }

    /// Records the batched forward pass; returns predictions `[batch, 1]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        samples: &[WindowedSample],
    ) -> Result<Var> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("forward"));
        }
        let x = tape.constant(self.stack(samples)?);
        let layers = self.spec.hidden_widths.len() + 1;
        match self.spec.kind {
            ModelKind::Mlp => mlp_on_tape(tape, bound, x, layers),
            ModelKind::IdentityGnn => identity_gnn_on_tape(tape, bound, x, layers),
            ModelKind::Gcn => {
                let graph = self.graph.as_ref().expect("checked in new");
                let a = tape.constant(graph.matrix().clone());
                gcn_on_tape(tape, bound, a, x, self.spec.focal, layers - 1)
            }
        }
    }

    /// Mean squared error of the batch predictions against sample targets.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        samples: &[WindowedSample],
    ) -> Result<Var> {
        let pred = self.forward(tape, bound, samples)?;
        let target = tape.constant(Tensor::vector(samples.iter().map(|s| s.target).collect()));
        tape.mse_loss(pred, target)
    }

    /// Point forecasts for every sample.
    pub fn predict(&self, params: &ParamSet, samples: &[WindowedSample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(256) {
            let mut tape = Tape::new();
            let bound = tape.bind(params);
            let pred = self.forward(&mut tape, &bound, chunk)?;
            out.extend_from_slice(tape.value(pred).data());
        }
        Ok(out)
    }
}
