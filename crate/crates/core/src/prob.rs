//! Finite-alphabet probability primitives and information measures.
//!
//! All logarithms are natural; rates and entropies are in nats. Probabilities
//! below [`UNDERFLOW_FLOOR`] are treated as exact zeros before any log, and
//! the `0 log 0 = 0` convention applies throughout. Joints are always built
//! from factorizations, so `p log(p/0)` with `p > 0` cannot occur in
//! well-formed inputs.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Entries at or below this are treated as exact zero before taking logs.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Normalization slack accepted by [`ProbVec::new`].
pub const SUM_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn is_zero(p: f64) -> bool {
    p <= UNDERFLOW_FLOOR
}

/// `ln` with the underflow floor: zeros map to `-inf`, callers must pair with
/// a zero weight.
#[inline]
pub(crate) fn safe_ln(p: f64) -> f64 {
    if is_zero(p) {
        f64::NEG_INFINITY
    } else {
        p.ln()
    }
}

/// Neumaier compensated summation. The solver objective mixes terms of very
/// different magnitude at large distortion multipliers; a plain sum loses the
/// 1e-10 monotonicity slack.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// A probability vector: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSpec("probability vector is empty".into()));
        }
        if entries.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidSpec(
                "probability vector has a negative or NaN entry".into(),
            ));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidSpec(format!(
                "probability vector sums to {sum}, not 1"
            )));
        }
        Ok(Self(entries))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for ProbVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Normalizes a nonnegative vector to a [`ProbVec`].
///
/// Vectors with no mass above the underflow floor fall back to uniform; the
/// returned flag is `true` exactly when that fallback fired (a degenerate
/// row).
pub fn normalize(v: &[f64]) -> (ProbVec, bool) {
    let mut acc = Kahan::default();
    v.iter().filter(|x| !is_zero(**x)).for_each(|&x| acc.add(x));
    let sum = acc.value();
    if is_zero(sum) {
        return (ProbVec::uniform(v.len()), true);
    }
    let entries = if (sum - 1.0).abs() <= SUM_TOL {
        // Already normalized; leaving entries untouched makes normalize
        // exactly idempotent.
        v.iter().map(|&x| if is_zero(x) { 0.0 } else { x }).collect()
    } else {
        v.iter()
            .map(|&x| if is_zero(x) { 0.0 } else { x / sum })
            .collect()
    };
    (ProbVec(entries), false)
}

/// A stochastic kernel: one probability row per flattened condition tuple.
///
/// `cond_sizes` lists the condition axes in row-major order, so the row for
/// conditions `(i, j)` with sizes `(a, b)` sits at index `i * b + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondDist {
    cond_sizes: Vec<usize>,
    out_size: usize,
    data: Vec<f64>,
}

impl CondDist {
    pub fn new(cond_sizes: Vec<usize>, out_size: usize, data: Vec<f64>) -> Result<Self> {
        let rows: usize = cond_sizes.iter().product();
        if rows == 0 || out_size == 0 {
            return Err(Error::InvalidSpec("kernel with a zero-size axis".into()));
        }
        if data.len() != rows * out_size {
            return Err(Error::InvalidSpec(format!(
                "kernel data length {} does not match {} rows x {} outputs",
                data.len(),
                rows,
                out_size
            )));
        }
        for r in 0..rows {
            let row = &data[r * out_size..(r + 1) * out_size];
            ProbVec::new(row.to_vec())
                .map_err(|e| Error::InvalidSpec(format!("kernel row {r}: {e}")))?;
        }
        Ok(Self {
            cond_sizes,
            out_size,
            data,
        })
    }

    /// Builds a kernel by normalizing each row of `raw`; returns the kernel
    /// and the number of degenerate rows that fell back to uniform.
    pub fn from_unnormalized(
        cond_sizes: Vec<usize>,
        out_size: usize,
        raw: &[f64],
    ) -> Result<(Self, usize)> {
        let rows: usize = cond_sizes.iter().product();
        if raw.len() != rows * out_size {
            return Err(Error::InvalidSpec("kernel data length mismatch".into()));
        }
        let mut data = Vec::with_capacity(raw.len());
        let mut degenerate = 0;
        for r in 0..rows {
            let (p, flag) = normalize(&raw[r * out_size..(r + 1) * out_size]);
            if flag {
                degenerate += 1;
            }
            data.extend_from_slice(p.as_slice());
        }
        Ok((
            Self {
                cond_sizes,
                out_size,
                data,
            },
            degenerate,
        ))
    }

    pub fn uniform(cond_sizes: Vec<usize>, out_size: usize) -> Self {
        let rows: usize = cond_sizes.iter().product();
        Self {
            cond_sizes,
            out_size,
            data: vec![1.0 / out_size as f64; rows * out_size],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.cond_sizes.iter().product()
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn cond_sizes(&self) -> &[usize] {
        &self.cond_sizes
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.out_size..(r + 1) * self.out_size]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.out_size..(r + 1) * self.out_size]
    }

    #[inline]
    pub fn at(&self, r: usize, o: usize) -> f64 {
        self.data[r * self.out_size + o]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Checks every row is a valid probability vector within [`SUM_TOL`].
    pub fn validate(&self) -> Result<()> {
        for r in 0..self.n_rows() {
            ProbVec::new(self.row(r).to_vec())
                .map_err(|e| Error::InvalidSpec(format!("row {r}: {e}")))?;
        }
        Ok(())
    }
}

/// A dense joint distribution over labeled finite axes.
#[derive(Debug, Clone)]
pub struct JointTensor {
    dims: Vec<usize>,
    labels: Vec<String>,
    data: Vec<f64>,
}

impl JointTensor {
    /// A full joint: nonnegative and summing to one within 1e-10.
    pub fn new(dims: Vec<usize>, labels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let cells: usize = dims.iter().product();
        if cells == 0 {
            return Err(Error::InvalidSpec("tensor with zero-size axis".into()));
        }
        if cells > crate::max_tensor_cells() {
            return Err(Error::TooLarge(cells, crate::max_tensor_cells()));
        }
        if data.len() != cells {
            return Err(Error::InvalidSpec("tensor data length mismatch".into()));
        }
        if data.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidSpec("tensor has negative or NaN entry".into()));
        }
        let mut sum = Kahan::default();
        data.iter().for_each(|&x| sum.add(x));
        if (sum.value() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidSpec(format!(
                "joint tensor sums to {}, not 1",
                sum.value()
            )));
        }
        let labels = if labels.is_empty() {
            (0..dims.len()).map(|i| format!("axis{i}")).collect()
        } else if labels.len() == dims.len() {
            labels
        } else {
            return Err(Error::InvalidSpec("label count mismatch".into()));
        };
        Ok(Self { dims, labels, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    /// Marginalizes onto the given axes (kept in the order given).
    pub fn marginalize(&self, axes: &[usize]) -> JointTensor {
        let strides = self.strides();
        let out_dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let out_labels: Vec<String> = axes.iter().map(|&a| self.labels[a].clone()).collect();
        let out_cells: usize = out_dims.iter().product();
        let mut out = vec![0.0; out_cells];
        let mut out_strides = vec![1usize; axes.len()];
        for i in (0..axes.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * out_dims[i + 1];
        }
        for (flat, &v) in self.data.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let mut o = 0;
            for (k, &a) in axes.iter().enumerate() {
                let idx = (flat / strides[a]) % self.dims[a];
                o += idx * out_strides[k];
            }
            out[o] += v;
        }
        JointTensor {
            dims: out_dims,
            labels: out_labels,
            data: out,
        }
    }
}

/// Entropy of a nonnegative vector in nats, `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    let mut h = Kahan::default();
    for &x in p {
        if !is_zero(x) {
            h.add(-x * x.ln());
        }
    }
    h.value()
}

/// Mutual information `I(A; B)` between two disjoint axis groups of a joint,
/// in nats. Degenerate cells contribute zero; the result is clamped only by
/// arithmetic, so tiny negatives up to rounding can appear.
pub fn mutual_information(joint: &JointTensor, axes_a: &[usize], axes_b: &[usize]) -> f64 {
    let mut ab: Vec<usize> = axes_a.to_vec();
    ab.extend_from_slice(axes_b);
    let p_ab = joint.marginalize(&ab);
    let p_a = p_ab.marginalize(&(0..axes_a.len()).collect::<Vec<_>>());
    let p_b = p_ab.marginalize(&(axes_a.len()..ab.len()).collect::<Vec<_>>());
    let nb: usize = p_b.dims().iter().product();
    let mut acc = Kahan::default();
    for (flat, &pab) in p_ab.data().iter().enumerate() {
        if is_zero(pab) {
            continue;
        }
        let ia = flat / nb;
        let ib = flat % nb;
        acc.add(pab * (safe_ln(pab) - safe_ln(p_a.data()[ia]) - safe_ln(p_b.data()[ib])));
    }
    acc.value()
}

/// Conditional mutual information `I(A; B | C)` via the chain rule
/// `I(A; B, C) - I(A; C)`.
pub fn conditional_mutual_information(
    joint: &JointTensor,
    axes_a: &[usize],
    axes_b: &[usize],
    axes_c: &[usize],
) -> f64 {
    let mut bc: Vec<usize> = axes_b.to_vec();
    bc.extend_from_slice(axes_c);
    mutual_information(joint, axes_a, &bc) - mutual_information(joint, axes_a, axes_c)
}

/// Expected distortion of a joint over `(s, s_hat)` against a distortion
/// matrix `d[s][s_hat]` stored row-major.
pub fn expected_distortion(joint_s_shat: &JointTensor, d: &[f64]) -> f64 {
    assert_eq!(joint_s_shat.dims().len(), 2, "expected a (s, s_hat) joint");
    let n_shat = joint_s_shat.dims()[1];
    let mut acc = Kahan::default();
    for (flat, &p) in joint_s_shat.data().iter().enumerate() {
        if p > 0.0 {
            acc.add(p * d[flat / n_shat * n_shat + flat % n_shat]);
        }
    }
    acc.value()
}
