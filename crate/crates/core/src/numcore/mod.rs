//! Dense `f64` tensors, parameter sets and reverse-mode differentiation.
//!
//! Values are row-major and immutable once a tape records them. The
//! [`Tape`] records every differentiable operation during a forward pass and
//! replays it backwards to produce exact gradients for bound parameters.
//! [`finite_diff_check`] is the independent central-difference oracle the
//! analytic gradients are tested against.

mod gradcheck;
mod tape;

pub use gradcheck::{finite_diff_check, GradCheck, DEFAULT_STEP};
pub use tape::{BoundParams, Tape, Var};

use crate::error::{Error, Result};

/// Row-major dense array of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that every dimension is positive and that
    /// `data` holds exactly `product(shape)` values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Contract(format!(
                "tensor shape must have positive dimensions, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor shape must have positive dimensions, got {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// One-dimensional tensor over `data`. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector must be non-empty");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Contract("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element `(i, j)` of a rank-2 tensor.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.len() || shape.contains(&0) {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        matmul(self, rhs)
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::dim(op, &self.shape, &[])),
        }
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `out[m×n] += a[m×k] · b[k×n]` on raw row-major buffers. Zero entries of
/// `a` are skipped, which makes identity and sparse left operands cheap.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// Standard matrix product of `a[m×k]` and `b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm_acc(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(vec![m, n], out)
}

/// `x·wᵀ + b` with the bias broadcast over the rows of `x`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, d_in) = x.dims2("affine")?;
    let (d_out, w_in) = w.dims2("affine")?;
    if w_in != d_in {
        return Err(Error::dim("affine", x.shape(), w.shape()));
    }
    if b.shape() != [d_out] {
        return Err(Error::dim("affine", w.shape(), b.shape()));
    }
    let mut out = vec![0.0; batch * d_out];
    for r in 0..batch {
        let xr = &x.data()[r * d_in..(r + 1) * d_in];
        for o in 0..d_out {
            let wr = &w.data()[o * d_in..(o + 1) * d_in];
            let dot: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            out[r * d_out + o] = dot + b.data()[o];
        }
    }
    Tensor::new(vec![batch, d_out], out)
}

/// Elementwise `max(0, v)`. The subgradient at exactly zero is zero.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Mean squared difference between two equally sized tensors.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim("mse_loss", pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mse_loss"));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Ordered, uniquely named model parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}

/// `∂loss/∂parameter` for every parameter of a [`ParamSet`], in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientRecord {
    entries: Vec<(String, Tensor)>,
}

impl GradientRecord {
    pub(crate) fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    /// All-zero gradients shaped like `params`.
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            entries: params
                .iter()
                .map(|(n, t)| (n.to_string(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when names and shapes match `params` one-to-one, in order.
    pub fn matches(&self, params: &ParamSet) -> bool {
        self.len() == params.len()
            && self
                .iter()
                .zip(params.iter())
                .all(|((gn, gt), (pn, pt))| gn == pn && gt.shape() == pt.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_left() {
        let x = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Tensor::identity(2), &x).unwrap(), x);
    }

    #[test]
    fn matmul_row_by_column() {
        let out = matmul(&t(&[&[1.0, 2.0]]), &t(&[&[3.0], &[4.0]])).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[11.0]);
    }

    #[test]
    fn matmul_zero_left() {
        let b = t(&[&[1.0, -2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let out = matmul(&Tensor::zeros(&[2, 2]), &b).unwrap();
        assert_eq!(out, Tensor::zeros(&[2, 3]));
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn affine_cases() {
        let x = t(&[&[1.0, -4.0], &[0.5, 2.0]]);
        let out = affine(&x, &Tensor::zeros(&[1, 2]), &Tensor::vector(vec![5.0])).unwrap();
        assert_eq!(out.data(), &[5.0, 5.0]);

        let out = affine(
            &t(&[&[1.0, 1.0]]),
            &t(&[&[2.0, 3.0]]),
            &Tensor::vector(vec![1.0]),
        )
        .unwrap();
        assert_eq!(out.data(), &[6.0]);

        let out = affine(&x, &Tensor::identity(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn affine_rejects_bad_bias() {
        let err = affine(
            &Tensor::zeros(&[1, 2]),
            &Tensor::zeros(&[3, 2]),
            &Tensor::zeros(&[2]),
        );
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn relu_cases() {
        assert_eq!(
            relu(&Tensor::vector(vec![-1.0, 0.0, 2.0])).data(),
            &[0.0, 0.0, 2.0]
        );
        assert_eq!(
            relu(&Tensor::vector(vec![-1.0, -3.0])),
            Tensor::zeros(&[2])
        );
        let pos = Tensor::vector(vec![0.1, 3.0]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn mse_cases() {
        let p = Tensor::vector(vec![2.0, 4.0]);
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
        assert_eq!(
            mse_loss(&p, &Tensor::vector(vec![1.0, 2.0])).unwrap(),
            2.5
        );
        assert_eq!(
            mse_loss(&Tensor::scalar(-3.0), &Tensor::scalar(0.0)).unwrap(),
            9.0
        );
        assert!(matches!(
            mse_loss(&p, &Tensor::scalar(0.0)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn param_names_unique() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::scalar(1.0)).unwrap();
        assert!(p.push("w", Tensor::scalar(2.0)).is_err());
        assert_eq!(p.num_values(), 1);
    }
}
