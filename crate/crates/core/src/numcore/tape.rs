use super::{gemm_acc, GradientRecord, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Affine { x: Var, w: Var, b: Var },
    Relu(Var),
    MseLoss { pred: Var, target: Var },
    Reshape(Var),
    /// `adj[n×m]` applied to each item of `x[batch×m×f]`.
    BatchMatmul { adj: Var, x: Var },
    GatherRows { x: Var, rows: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of a forward computation, replayed in reverse by
/// [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Parameters of a [`ParamSet`] recorded as differentiable leaves.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<(String, Var)>,
}

impl BoundParams {
    /// Leaf handle for a parameter name.
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamSet) -> BoundParams {
        let vars = params
            .iter()
            .map(|(name, t)| (name.to_string(), self.variable(t.clone())))
            .collect();
        BoundParams { vars }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = super::matmul(self.value(a), self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Matmul(a, b), rg))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let value = super::affine(self.value(x), self.value(w), self.value(b))?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, Op::Affine { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = super::relu(self.value(x));
        let rg = self.needs(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    /// Scalar `mean((pred − target)²)`; shapes may differ as long as the
    /// element counts agree.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let value = super::mse_loss(self.value(pred), self.value(target))?;
        let rg = self.needs(&[pred, target]);
        Ok(self.push(Tensor::scalar(value), Op::MseLoss { pred, target }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Multiplies the same `adj[n×m]` into every item of `x[batch×m×f]`,
    /// giving `[batch×n×f]`.
    pub fn batch_matmul(&mut self, adj: Var, x: Var) -> Result<Var> {
        let (a, xs) = (self.value(adj), self.value(x));
        let (n, m) = a.dims2("batch_matmul")?;
        let [batch, m2, f] = xs.shape()[..] else {
            return Err(Error::dim("batch_matmul", a.shape(), xs.shape()));
        };
        if m != m2 {
            return Err(Error::dim("batch_matmul", a.shape(), xs.shape()));
        }
        let mut out = vec![0.0; batch * n * f];
        for b in 0..batch {
            gemm_acc(
                a.data(),
                &xs.data()[b * m * f..(b + 1) * m * f],
                &mut out[b * n * f..(b + 1) * n * f],
                n,
                m,
                f,
            );
        }
        let value = Tensor::new(vec![batch, n, f], out)?;
        let rg = self.needs(&[adj, x]);
        Ok(self.push(value, Op::BatchMatmul { adj, x }, rg))
    }

    /// Selects rows of a matrix, in the given order (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let (r, c) = src.dims2("gather_rows")?;
        if rows.is_empty() {
            return Err(Error::EmptyInput("gather_rows"));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::Contract(format!(
                "row {bad} out of range for {r} rows"
            )));
        }
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            out.extend_from_slice(&src.data()[i * c..(i + 1) * c]);
        }
        let value = Tensor::new(vec![rows.len(), c], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(
            value,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse-mode gradients of a scalar `loss` for every bound parameter.
    /// Parameters that do not influence `loss` get zero gradients.
    pub fn backward(&self, loss: Var, params: &BoundParams) -> Result<GradientRecord> {
        let grads = self.gradients(loss)?;
        let entries = params
            .iter()
            .map(|(name, v)| {
                let g = grads[v.0]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
                (name.to_string(), g)
            })
            .collect();
        Ok(GradientRecord::from_entries(entries))
    }

    fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            for (input, contrib) in self.local_grads(node, &g)? {
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian products of one node for each differentiable input.
    fn local_grads(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    out.push((*a, super::matmul(g, &bv.transpose()?)?));
                }
                if self.wants(*b) {
                    out.push((*b, super::matmul(&av.transpose()?, g)?));
                }
            }
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if self.wants(*x) {
                    out.push((*x, super::matmul(g, wv)?));
                }
                if self.wants(*w) {
                    out.push((*w, super::matmul(&g.transpose()?, xv)?));
                }
                if self.wants(*b) {
                    let (rows, cols) = g.dims2("affine backward")?;
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        for (d, v) in db.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                            *d += v;
                        }
                    }
                    out.push((*b, Tensor::new(vec![cols], db)?));
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                        .collect();
                    out.push((*x, Tensor::new(xv.shape().to_vec(), data)?));
                }
            }
            Op::MseLoss { pred, target } => {
                let (pv, tv) = (self.value(*pred), self.value(*target));
                let scale = 2.0 * g.data()[0] / pv.len() as f64;
                let dp: Vec<f64> = pv
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(p, t)| scale * (p - t))
                    .collect();
                if self.wants(*target) {
                    let dt = dp.iter().map(|v| -v).collect();
                    out.push((*target, Tensor::new(tv.shape().to_vec(), dt)?));
                }
                if self.wants(*pred) {
                    out.push((*pred, Tensor::new(pv.shape().to_vec(), dp)?));
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    out.push((*x, g.reshape(self.value(*x).shape())?));
                }
            }
            Op::BatchMatmul { adj, x } => {
                let (av, xv) = (self.value(*adj), self.value(*x));
                let (n, m) = av.dims2("batch_matmul backward")?;
                let (batch, f) = (xv.shape()[0], xv.shape()[2]);
                if self.wants(*adj) {
                    let mut da = vec![0.0; n * m];
                    for b in 0..batch {
                        let gb = Tensor::new(vec![n, f], g.data()[b * n * f..(b + 1) * n * f].to_vec())?;
                        let xb = Tensor::new(vec![m, f], xv.data()[b * m * f..(b + 1) * m * f].to_vec())?;
                        let contrib = super::matmul(&gb, &xb.transpose()?)?;
                        for (d, c) in da.iter_mut().zip(contrib.data()) {
                            *d += c;
                        }
                    }
                    out.push((*adj, Tensor::new(vec![n, m], da)?));
                }
                if self.wants(*x) {
                    let at = av.transpose()?;
                    let mut dx = vec![0.0; batch * m * f];
                    for b in 0..batch {
                        gemm_acc(
                            at.data(),
                            &g.data()[b * n * f..(b + 1) * n * f],
                            &mut dx[b * m * f..(b + 1) * m * f],
                            m,
                            n,
                            f,
                        );
                    }
                    out.push((*x, Tensor::new(vec![batch, m, f], dx)?));
                }
            }
            Op::GatherRows { x, rows } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let c = xv.shape()[1];
                    let mut dx = Tensor::zeros(xv.shape());
                    for (k, &i) in rows.iter().enumerate() {
                        for j in 0..c {
                            dx.data_mut()[i * c + j] += g.data()[k * c + j];
                        }
                    }
                    out.push((*x, dx));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(pairs: &[(&str, f64)]) -> ParamSet {
        let mut p = ParamSet::new();
        for &(n, v) in pairs {
            p.push(n, Tensor::new(vec![1, 1], vec![v]).unwrap()).unwrap();
        }
        p
    }

    #[test]
    fn chain_rule_scalar_weight() {
        // loss = (w·x − y)², w=1, x=2, y=0 → d/dw = 2(wx − y)x = 8
        let params = scalar_params(&[("w", 1.0)]);
        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let x = tape.constant(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let y = tape.constant(Tensor::scalar(0.0));
        let pred = tape.matmul(x, bound.var("w").unwrap()).unwrap();
        let loss = tape.mse_loss(pred, y).unwrap();
        let grads = tape.backward(loss, &bound).unwrap();
        assert_eq!(grads.get("w").unwrap().data(), &[8.0]);
        assert!(grads.matches(&params));
    }

    #[test]
    fn unused_parameter_gets_zero() {
        let params = scalar_params(&[("w", 3.0), ("p", 7.0)]);
        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let y = tape.constant(Tensor::scalar(1.0));
        let loss = tape.mse_loss(bound.var("w").unwrap(), y).unwrap();
        let grads = tape.backward(loss, &bound).unwrap();
        assert_eq!(grads.get("p").unwrap().data(), &[0.0]);
        assert_eq!(grads.get("w").unwrap().data(), &[4.0]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        // pre-activation w·x = −2 < 0, so nothing flows back to w.
        let params = scalar_params(&[("w", -1.0)]);
        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let x = tape.constant(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let h = tape.matmul(x, bound.var("w").unwrap()).unwrap();
        let a = tape.relu(h);
        let y = tape.constant(Tensor::scalar(5.0));
        let loss = tape.mse_loss(a, y).unwrap();
        let grads = tape.backward(loss, &bound).unwrap();
        assert_eq!(grads.get("w").unwrap().data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let bound = tape.bind(&ParamSet::new());
        let v = tape.variable(Tensor::zeros(&[2]));
        assert!(matches!(
            tape.backward(v, &bound),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn shared_use_accumulates() {
        // loss = mean((w + w)·1 − 0)² over 1 element via matmul twice.
        let params = scalar_params(&[("w", 1.5)]);
        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let w = bound.var("w").unwrap();
        let sq = tape.matmul(w, w).unwrap(); // w²
        let zero = tape.constant(Tensor::scalar(0.0));
        let loss = tape.mse_loss(sq, zero).unwrap(); // w⁴
        let grads = tape.backward(loss, &bound).unwrap();
        let expected = 4.0 * 1.5f64.powi(3);
        assert!((grads.get("w").unwrap().data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn gather_rows_bounds() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(tape.gather_rows(x, &[2]).is_err());
        let g = tape.gather_rows(x, &[1, 1, 0]).unwrap();
        assert_eq!(tape.value(g).shape(), &[3, 3]);
    }
}
