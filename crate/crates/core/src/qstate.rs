//! Quantum states and channels: density operators, classical-quantum states,
//! Kraus-form channels and their isometric extensions.
//!
//! All types are immutable after construction and validated on construction.
//! States may be subnormalized (trace in `(0, 1]`).

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::linalg::{eig_cutoff, hermitian_eig, ComplexMatrix};
use crate::{Error, Result};

/// Hard cap on any tensor-product dimension, overridable via the
/// `PRIVMAC_DIM_CAP` environment variable. Fails fast on accidental blowup.
pub fn dim_cap() -> usize {
    static CAP: std::sync::OnceLock<usize> = std::sync::OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("PRIVMAC_DIM_CAP")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(4096)
    })
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > dim_cap() {
        return Err(Error::Capacity(format!(
            "dimension {} outside (0, {}]",
            dim,
            dim_cap()
        )));
    }
    Ok(())
}

/// A (sub)normalized quantum state: Hermitian, positive semidefinite,
/// trace in `(0, 1]` up to small numerical slack.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    dim: usize,
    mat: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Shape("density operator must be square".into()));
        }
        check_dim(mat.rows)?;
        if !mat.is_hermitian(1e-10) {
            return Err(Error::Domain(format!(
                "density operator not Hermitian (defect {:.3e})",
                mat.hermiticity_defect()
            )));
        }
        let eig = hermitian_eig(&mat)?;
        if eig.values[0] < -1e-10 {
            return Err(Error::Domain(format!(
                "density operator not PSD (min eigenvalue {:.3e})",
                eig.values[0]
            )));
        }
        let tr = mat.trace().re;
        if tr <= 0.0 || tr > 1.0 + 1e-10 {
            return Err(Error::Domain(format!(
                "density operator trace {tr} outside (0, 1]"
            )));
        }
        Ok(Self { dim: mat.rows, mat })
    }

    /// The `1x1` state of a trivial (dimension-1) system.
    pub fn trivial() -> Self {
        Self::new(ComplexMatrix::identity(1)).unwrap()
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Self::new(ComplexMatrix::identity(dim).scale_re(1.0 / dim as f64))
    }

    /// Pure state `|v><v|` from a (not necessarily normalized) vector.
    pub fn pure(v: &[Complex64]) -> Result<Self> {
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-14 {
            return Err(Error::Domain("zero vector has no pure state".into()));
        }
        let v: Vec<Complex64> = v.iter().map(|z| z / norm).collect();
        Self::new(ComplexMatrix::outer(&v, &v))
    }

    /// Computational basis state `|k><k|`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::Usage(format!("basis index {k} >= dim {dim}")));
        }
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[k] = Complex64::new(1.0, 0.0);
        Self::pure(&v)
    }

    /// Classical state from a probability vector (entries may sum to <= 1).
    pub fn from_classical(p: &[f64]) -> Result<Self> {
        if p.iter().any(|&x| x < -1e-12) {
            return Err(Error::Domain("negative probability".into()));
        }
        Self::new(ComplexMatrix::from_diag(p))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// Rescale by a positive factor (caller keeps the trace in range).
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        Self::new(self.mat.scale_re(s))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eig(&self.mat)
            .expect("validated on construction")
            .values
    }

    /// Rank with the crate-wide eigenvalue cutoff.
    pub fn rank(&self) -> usize {
        let cut = eig_cutoff(self.dim);
        self.eigenvalues().iter().filter(|&&l| l > cut).count()
    }
}

/// Kronecker product of two states.
pub fn tensor(a: &DensityOperator, b: &DensityOperator) -> Result<DensityOperator> {
    check_dim(
        a.dim()
            .checked_mul(b.dim())
            .ok_or_else(|| Error::Capacity("tensor dimension overflow".into()))?,
    )?;
    DensityOperator::new(a.matrix().kron(b.matrix()))
}

/// Row-major strides for a factor-dimension list.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Partial trace over the factors not in `keep` (0-based factor indices,
/// order preserved).
pub fn partial_trace(
    rho: &DensityOperator,
    dims: &[usize],
    keep: &[usize],
) -> Result<DensityOperator> {
    partial_trace_matrix(rho.matrix(), dims, keep).and_then(DensityOperator::new)
}

/// Partial trace on a raw matrix; used where intermediate results are not
/// valid states (e.g. differences of operators).
pub fn partial_trace_matrix(
    mat: &ComplexMatrix,
    dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if !mat.is_square() || mat.rows != total {
        return Err(Error::Shape(format!(
            "factor dims {:?} do not multiply to matrix dim {}",
            dims, mat.rows
        )));
    }
    let mut sorted = keep.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != keep.len() || keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage(
            "keep indices must be strictly increasing".into(),
        ));
    }
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Usage("keep index out of range".into()));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let keep_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let traced_dim: usize = traced.iter().map(|&t| dims[t]).product();
    let st = strides(dims);

    let keep_strides: Vec<usize> = keep.iter().map(|&k| st[k]).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_strides: Vec<usize> = traced.iter().map(|&t| st[t]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&t| dims[t]).collect();

    // Flat offset of composite index `idx` within the given factor group.
    let offset = |idx: usize, group_dims: &[usize], group_strides: &[usize]| -> usize {
        let mut rem = idx;
        let mut off = 0;
        for gi in (0..group_dims.len()).rev() {
            off += (rem % group_dims[gi]) * group_strides[gi];
            rem /= group_dims[gi];
        }
        off
    };

    let mut out = ComplexMatrix::zeros(keep_dim, keep_dim);
    for i in 0..keep_dim {
        let oi = offset(i, &keep_dims, &keep_strides);
        for j in 0..keep_dim {
            let oj = offset(j, &keep_dims, &keep_strides);
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..traced_dim {
                let ot = offset(t, &traced_dims, &traced_strides);
                acc += mat[(oi + ot, oj + ot)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Reorder tensor factors of a square matrix: factor `perm[k]` of the input
/// becomes factor `k` of the output.
pub fn permute_factors(
    mat: &ComplexMatrix,
    dims: &[usize],
    perm: &[usize],
) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if mat.rows != total || !mat.is_square() {
        return Err(Error::Shape("permute: dims do not match matrix".into()));
    }
    let mut seen = vec![false; dims.len()];
    for &p in perm {
        if p >= dims.len() || seen[p] {
            return Err(Error::Usage("permute: invalid permutation".into()));
        }
        seen[p] = true;
    }
    let st_in = strides(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    // For each output flat index, the corresponding input flat index.
    let mut map = vec![0usize; total];
    for (out_idx, slot) in map.iter_mut().enumerate() {
        let mut rem = out_idx;
        let mut input = 0usize;
        for k in (0..new_dims.len()).rev() {
            let digit = rem % new_dims[k];
            rem /= new_dims[k];
            input += digit * st_in[perm[k]];
        }
        *slot = input;
    }
    Ok(ComplexMatrix::from_fn(total, total, |i, j| {
        mat[(map[i], map[j])]
    }))
}

/// A completely positive trace-preserving map in Kraus form. Inputs factor
/// over the transmitters (`in_dims`), the output is a single system of
/// dimension `out_dim`.
#[derive(Debug, Clone)]
pub struct QuantumChannel {
    pub in_dims: Vec<usize>,
    pub out_dim: usize,
    kraus: Vec<ComplexMatrix>,
}

impl QuantumChannel {
    pub fn new(in_dims: Vec<usize>, out_dim: usize, kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let in_dim: usize = in_dims.iter().product();
        check_dim(in_dim)?;
        check_dim(out_dim)?;
        if kraus.is_empty() {
            return Err(Error::Usage(
                "channel needs at least one Kraus operator".into(),
            ));
        }
        for k in &kraus {
            if k.rows != out_dim || k.cols != in_dim {
                return Err(Error::Shape(format!(
                    "Kraus operator is {}x{}, expected {}x{}",
                    k.rows, k.cols, out_dim, in_dim
                )));
            }
        }
        let mut sum = ComplexMatrix::zeros(in_dim, in_dim);
        for k in &kraus {
            sum = sum.add(&k.dagger().matmul(k));
        }
        let defect = sum.sub(&ComplexMatrix::identity(in_dim)).max_abs();
        if defect > 1e-9 {
            return Err(Error::Domain(format!(
                "channel is not trace preserving (defect {defect:.3e})"
            )));
        }
        Ok(Self {
            in_dims,
            out_dim,
            kraus,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(vec![dim], dim, vec![ComplexMatrix::identity(dim)])
    }

    pub fn in_dim(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// Combine two channels into one acting on the union of their transmitters.
    pub fn tensor_with(&self, other: &QuantumChannel) -> Result<QuantumChannel> {
        let mut in_dims = self.in_dims.clone();
        in_dims.extend_from_slice(&other.in_dims);
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(a.kron(b));
            }
        }
        QuantumChannel::new(in_dims, self.out_dim * other.out_dim, kraus)
    }

    /// Choi matrix `sum_{ij} |i><j| (x) N(|i><j|)` on input (x) output.
    pub fn choi(&self) -> ComplexMatrix {
        let d_in = self.in_dim();
        let d = d_in * self.out_dim;
        let mut out = ComplexMatrix::zeros(d, d);
        for k in &self.kraus {
            // |i><j| (x) K|i><j|K^dagger accumulated for all i, j: equals
            // (vec of K)(vec of K)^dagger in the (input, output) grouping.
            let mut v = Vec::with_capacity(d);
            for i in 0..d_in {
                for b in 0..self.out_dim {
                    v.push(k[(b, i)]);
                }
            }
            out = out.add(&ComplexMatrix::outer(&v, &v));
        }
        out
    }
}

/// `sum_k K rho K^dagger`. Preserves the trace to numerical precision.
pub fn apply_channel(ch: &QuantumChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    apply_channel_matrix(ch, rho.matrix()).and_then(DensityOperator::new)
}

pub fn apply_channel_matrix(ch: &QuantumChannel, mat: &ComplexMatrix) -> Result<ComplexMatrix> {
    if mat.rows != ch.in_dim() || !mat.is_square() {
        return Err(Error::Shape(format!(
            "channel input dim {} but state dim {}",
            ch.in_dim(),
            mat.rows
        )));
    }
    let mut out = ComplexMatrix::zeros(ch.out_dim, ch.out_dim);
    for k in &ch.kraus {
        out = out.add(&k.matmul(mat).matmul(&k.dagger()));
    }
    Ok(out)
}

/// Stinespring dilation built by stacking Kraus operators:
/// `V = sum_k K_k (x) |k>_E`, so `Tr_E[V rho V^dagger]` recovers the channel.
#[derive(Debug, Clone)]
pub struct IsometricExtension {
    pub isometry: ComplexMatrix,
    pub out_dim: usize,
    pub env_dim: usize,
}

pub fn isometric_extension(ch: &QuantumChannel) -> IsometricExtension {
    let env = ch.kraus.len();
    let d_in = ch.in_dim();
    let rows = ch.out_dim * env;
    let mut v = ComplexMatrix::zeros(rows, d_in);
    for (e, k) in ch.kraus.iter().enumerate() {
        for b in 0..ch.out_dim {
            for a in 0..d_in {
                v[(b * env + e, a)] = k[(b, a)];
            }
        }
    }
    IsometricExtension {
        isometry: v,
        out_dim: ch.out_dim,
        env_dim: env,
    }
}

impl IsometricExtension {
    /// `V rho V^dagger` on B (x) E.
    pub fn dilate(&self, mat: &ComplexMatrix) -> Result<ComplexMatrix> {
        if mat.rows != self.isometry.cols || !mat.is_square() {
            return Err(Error::Shape("isometry input dim mismatch".into()));
        }
        Ok(self.isometry.matmul(mat).matmul(&self.isometry.dagger()))
    }

    /// Bob's share `Tr_E[V rho V^dagger]`.
    pub fn to_bob(&self, mat: &ComplexMatrix) -> Result<ComplexMatrix> {
        let joint = self.dilate(mat)?;
        partial_trace_matrix(&joint, &[self.out_dim, self.env_dim], &[0])
    }

    /// The complementary channel output `Tr_B[V rho V^dagger]`.
    pub fn to_env(&self, mat: &ComplexMatrix) -> Result<ComplexMatrix> {
        let joint = self.dilate(mat)?;
        partial_trace_matrix(&joint, &[self.out_dim, self.env_dim], &[1])
    }
}

/// Classical registers with register-conditioned quantum states:
/// `sum_x p(x) |x><x| (x) rho^x` with each `rho^x` trace 1.
///
/// Weights are indexed row-major over the registers.
#[derive(Debug, Clone)]
pub struct CqState {
    reg_sizes: Vec<usize>,
    weights: Vec<f64>,
    cond: Vec<DensityOperator>,
    qdim: usize,
}

impl CqState {
    pub fn new(
        reg_sizes: Vec<usize>,
        weights: Vec<f64>,
        cond: Vec<DensityOperator>,
    ) -> Result<Self> {
        let n: usize = reg_sizes.iter().product();
        if reg_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Usage("empty register alphabet".into()));
        }
        if weights.len() != n || cond.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} weights and conditional states, got {} and {}",
                weights.len(),
                cond.len()
            )));
        }
        if weights.iter().any(|&w| w < -1e-12 || !w.is_finite()) {
            return Err(Error::Domain("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + 1e-10 || total <= 0.0 {
            return Err(Error::Domain(format!(
                "total weight {total} outside (0, 1]"
            )));
        }
        let qdim = cond[0].dim();
        for (i, c) in cond.iter().enumerate() {
            if c.dim() != qdim {
                return Err(Error::Shape(
                    "conditional states differ in dimension".into(),
                ));
            }
            if weights[i] > 1e-12 && (c.trace() - 1.0).abs() > 1e-8 {
                return Err(Error::Domain(format!(
                    "conditional state {i} has trace {} != 1",
                    c.trace()
                )));
            }
        }
        Ok(Self {
            reg_sizes,
            weights,
            cond,
            qdim,
        })
    }

    /// Product-form cq state from per-register (pmf, signal states) pairs and
    /// a map producing the joint conditional state.
    pub fn from_product(
        pmfs: &[Vec<f64>],
        mut cond: impl FnMut(&[usize]) -> Result<DensityOperator>,
    ) -> Result<Self> {
        let reg_sizes: Vec<usize> = pmfs.iter().map(|p| p.len()).collect();
        let n: usize = reg_sizes.iter().product();
        let mut weights = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        let mut digits = vec![0usize; reg_sizes.len()];
        for idx in 0..n {
            decompose_index(idx, &reg_sizes, &mut digits);
            let w: f64 = digits.iter().zip(pmfs).map(|(&d, p)| p[d]).product();
            weights.push(w);
            states.push(cond(&digits)?);
        }
        Self::new(reg_sizes, weights, states)
    }

    pub fn num_registers(&self) -> usize {
        self.reg_sizes.len()
    }

    pub fn reg_sizes(&self) -> &[usize] {
        &self.reg_sizes
    }

    pub fn qdim(&self) -> usize {
        self.qdim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cond_states(&self) -> &[DensityOperator] {
        &self.cond
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_weight() - 1.0).abs() <= 1e-10
    }

    /// Weighted conditional state `p(x) rho^x` as a raw matrix.
    pub fn weighted_state(&self, idx: usize) -> ComplexMatrix {
        self.cond[idx].matrix().scale_re(self.weights[idx])
    }

    /// Quantum marginal `sum_x p(x) rho^x`.
    pub fn quantum_marginal(&self) -> Result<DensityOperator> {
        let mut acc = ComplexMatrix::zeros(self.qdim, self.qdim);
        for i in 0..self.weights.len() {
            if self.weights[i] > 0.0 {
                acc = acc.add(&self.weighted_state(i));
            }
        }
        DensityOperator::new(acc)
    }

    /// Marginal cq state on a subset of the classical registers (strictly
    /// increasing indices), summing the others into the weights and states.
    pub fn classical_marginal(&self, keep: &[usize]) -> Result<CqState> {
        if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= self.reg_sizes.len())
        {
            return Err(Error::Usage("bad register subset".into()));
        }
        let new_sizes: Vec<usize> = keep.iter().map(|&k| self.reg_sizes[k]).collect();
        let n: usize = new_sizes.iter().product::<usize>().max(1);
        let mut weights = vec![0.0f64; n];
        let mut mats = vec![ComplexMatrix::zeros(self.qdim, self.qdim); n];
        let mut digits = vec![0usize; self.reg_sizes.len()];
        for idx in 0..self.weights.len() {
            if self.weights[idx] == 0.0 {
                continue;
            }
            decompose_index(idx, &self.reg_sizes, &mut digits);
            let sub: Vec<usize> = keep.iter().map(|&k| digits[k]).collect();
            let new_idx = compose_index(&sub, &new_sizes);
            weights[new_idx] += self.weights[idx];
            mats[new_idx] = mats[new_idx].add(&self.weighted_state(idx));
        }
        let cond: Vec<DensityOperator> = weights
            .iter()
            .zip(mats)
            .map(|(&w, m)| {
                if w > 1e-14 {
                    DensityOperator::new(m.scale_re(1.0 / w))
                } else {
                    // Zero-weight symbol: any valid placeholder.
                    Ok(DensityOperator::maximally_mixed(self.qdim).unwrap())
                }
            })
            .collect::<Result<_>>()?;
        let sizes = if new_sizes.is_empty() {
            vec![1]
        } else {
            new_sizes
        };
        let weights = if weights.is_empty() {
            vec![1.0]
        } else {
            weights
        };
        CqState::new(sizes, weights, cond)
    }

    /// Apply a map to every conditional quantum state (e.g. a partial trace
    /// splitting B from E).
    pub fn map_quantum(
        &self,
        f: impl Fn(&DensityOperator) -> Result<DensityOperator>,
    ) -> Result<CqState> {
        let cond: Vec<DensityOperator> = self.cond.iter().map(f).collect::<Result<_>>()?;
        CqState::new(self.reg_sizes.clone(), self.weights.clone(), cond)
    }

    /// Flatten to the block-diagonal density operator
    /// `sum_x p(x) |x><x| (x) rho^x` of dimension `prod(reg_sizes) * qdim`.
    pub fn flatten(&self) -> Result<DensityOperator> {
        let n: usize = self.reg_sizes.iter().product();
        let dim = n * self.qdim;
        check_dim(dim)?;
        let mut out = ComplexMatrix::zeros(dim, dim);
        for x in 0..n {
            if self.weights[x] == 0.0 {
                continue;
            }
            let block = self.weighted_state(x);
            for i in 0..self.qdim {
                for j in 0..self.qdim {
                    out[(x * self.qdim + i, x * self.qdim + j)] = block[(i, j)];
                }
            }
        }
        DensityOperator::new(out)
    }

    /// The n-fold product state, regrouped so register `l` of the result
    /// ranges over length-n strings from register `l` of the base state.
    pub fn tensor_power(&self, n: usize) -> Result<CqState> {
        if n == 0 {
            return Err(Error::Usage("tensor power needs n >= 1".into()));
        }
        let l = self.reg_sizes.len();
        let new_sizes: Vec<usize> = self
            .reg_sizes
            .iter()
            .map(|&s| {
                s.checked_pow(n as u32)
                    .ok_or_else(|| Error::Capacity("register power overflow".into()))
            })
            .collect::<Result<_>>()?;
        let total: usize = new_sizes.iter().try_fold(1usize, |acc, &s| {
            acc.checked_mul(s)
                .ok_or_else(|| Error::Capacity("joint alphabet overflow".into()))
        })?;
        let qdim = self
            .qdim
            .checked_pow(n as u32)
            .ok_or_else(|| Error::Capacity("quantum power overflow".into()))?;
        check_dim(qdim)?;
        if total > (1 << 24) {
            return Err(Error::Capacity(format!(
                "joint classical alphabet {total} too large to enumerate"
            )));
        }

        let mut weights = Vec::with_capacity(total);
        let mut cond = Vec::with_capacity(total);
        let mut digits = vec![0usize; l];
        let mut new_digits = vec![0usize; l];
        for idx in 0..total {
            decompose_index(idx, &new_sizes, &mut new_digits);
            // Position i of the string for register l is a base-|X_l| digit.
            let mut w = 1.0f64;
            let mut mat = ComplexMatrix::identity(1);
            for pos in 0..n {
                for reg in 0..l {
                    let shift = self.reg_sizes[reg].pow((n - 1 - pos) as u32);
                    digits[reg] = (new_digits[reg] / shift) % self.reg_sizes[reg];
                }
                let base_idx = compose_index(&digits, &self.reg_sizes);
                w *= self.weights[base_idx];
                mat = mat.kron(self.cond[base_idx].matrix());
            }
            weights.push(w);
            cond.push(DensityOperator::new(mat)?);
        }
        CqState::new(new_sizes, weights, cond)
    }
}

/// Row-major composite index from per-register digits.
pub fn compose_index(digits: &[usize], sizes: &[usize]) -> usize {
    let mut idx = 0;
    for (d, s) in digits.iter().zip(sizes) {
        idx = idx * s + d;
    }
    idx
}

/// Inverse of [`compose_index`], writing into `digits`.
pub fn decompose_index(mut idx: usize, sizes: &[usize], digits: &mut [usize]) {
    for i in (0..sizes.len()).rev() {
        digits[i] = idx % sizes[i];
        idx /= sizes[i];
    }
}

/// Random full-rank density operator (Ginibre ensemble).
pub fn random_density(rng: &mut ChaCha12Rng, dim: usize) -> DensityOperator {
    let data: Vec<Complex64> = (0..dim * dim)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let g = ComplexMatrix::new(dim, dim, data).unwrap();
    let m = g.matmul(&g.dagger());
    let tr = m.trace().re;
    DensityOperator::new(m.scale_re(1.0 / tr)).expect("Ginibre state is valid")
}

/// Random pure-state vector, normalized.
pub fn random_pure_vector(rng: &mut ChaCha12Rng, dim: usize) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}

/// Random probability vector (flat Dirichlet via exponentials).
pub fn random_pmf(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// Random normalized cq state with an arbitrary joint classical distribution.
pub fn random_cq(rng: &mut ChaCha12Rng, reg_sizes: &[usize], qdim: usize) -> CqState {
    let n: usize = reg_sizes.iter().product();
    let weights = random_pmf(rng, n);
    let cond = (0..n).map(|_| random_density(rng, qdim)).collect();
    CqState::new(reg_sizes.to_vec(), weights, cond).expect("random cq state is valid")
}

/// Random normalized cq state whose classical marginal is a product
/// distribution across registers.
pub fn random_cq_product(rng: &mut ChaCha12Rng, reg_sizes: &[usize], qdim: usize) -> CqState {
    let pmfs: Vec<Vec<f64>> = reg_sizes.iter().map(|&s| random_pmf(rng, s)).collect();
    CqState::from_product(&pmfs, |_| Ok(random_density(rng, qdim)))
        .expect("random product cq state is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_norm;

    fn bell_state() -> DensityOperator {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        DensityOperator::pure(&[h, z, z, h]).unwrap()
    }

    #[test]
    fn tensor_identity_and_basis_cases() {
        let half = DensityOperator::maximally_mixed(2).unwrap();
        let quarter = tensor(&half, &half).unwrap();
        assert_eq!(quarter.dim(), 4);
        for i in 0..4 {
            assert!((quarter.matrix()[(i, i)].re - 0.25).abs() < 1e-15);
        }

        let p0 = DensityOperator::basis(2, 0).unwrap();
        let p1 = DensityOperator::basis(2, 1).unwrap();
        let p01 = tensor(&p0, &p1).unwrap();
        assert!((p01.matrix()[(1, 1)].re - 1.0).abs() < 1e-15);

        let a = DensityOperator::from_classical(&[0.75, 0.25]).unwrap();
        let b = DensityOperator::maximally_mixed(2).unwrap();
        let t = tensor(&a, &b).unwrap();
        let expect = [0.375, 0.375, 0.125, 0.125];
        for i in 0..4 {
            assert!((t.matrix()[(i, i)].re - expect[i]).abs() < 1e-15);
        }
        assert!((t.trace() - a.trace() * b.trace()).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_product_and_bell() {
        let p0 = DensityOperator::basis(2, 0).unwrap();
        let p1 = DensityOperator::basis(2, 1).unwrap();
        let p01 = tensor(&p0, &p1).unwrap();
        let first = partial_trace(&p01, &[2, 2], &[0]).unwrap();
        assert!(first.matrix().sub(p0.matrix()).max_abs() < 1e-14);

        let bell = bell_state();
        let red = partial_trace(&bell, &[2, 2], &[0]).unwrap();
        let mixed = DensityOperator::maximally_mixed(2).unwrap();
        assert!(red.matrix().sub(mixed.matrix()).max_abs() < 1e-14);
    }

    /// Independent index-contraction oracle for the partial trace.
    fn naive_keep_second(mat: &ComplexMatrix, d1: usize, d2: usize) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(d2, d2);
        for i in 0..d2 {
            for j in 0..d2 {
                for k in 0..d1 {
                    out[(i, j)] += mat[(k * d2 + i, k * d2 + j)];
                }
            }
        }
        out
    }

    #[test]
    fn partial_trace_against_contraction_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..100 {
            let d1 = 2 + (rng.random::<u32>() % 3) as usize;
            let d2 = 2 + (rng.random::<u32>() % 3) as usize;
            let a = random_density(&mut rng, d1);
            let b = random_density(&mut rng, d2);
            let joint = tensor(&a, &b).unwrap();
            let kept = partial_trace(&joint, &[d1, d2], &[1]).unwrap();
            let oracle = naive_keep_second(joint.matrix(), d1, d2);
            assert!(kept.matrix().sub(&oracle).max_abs() < 1e-12);
            // Equals sigma * trace(rho) here.
            assert!(kept.matrix().sub(&b.matrix().scale_re(a.trace())).max_abs() < 1e-10);
            // And keeping the first factor recovers a * trace(b).
            let first = partial_trace(&joint, &[d1, d2], &[0]).unwrap();
            assert!(
                first
                    .matrix()
                    .sub(&a.matrix().scale_re(b.trace()))
                    .max_abs()
                    < 1e-10
            );
        }
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let rho = DensityOperator::maximally_mixed(4).unwrap();
        assert!(matches!(
            partial_trace(&rho, &[3, 2], &[0]),
            Err(Error::Shape(_))
        ));
    }

    fn depolarizing_qubit() -> QuantumChannel {
        let s = 0.5f64.sqrt();
        let half = ComplexMatrix::identity(2).scale_re(0.5);
        // Four Kraus operators |i><j| / sqrt(2) give the fully depolarizing map.
        let mut kraus = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let mut k = ComplexMatrix::zeros(2, 2);
                k[(i, j)] = Complex64::new(s, 0.0);
                kraus.push(k);
            }
        }
        let ch = QuantumChannel::new(vec![2], 2, kraus).unwrap();
        let out = apply_channel(&ch, &DensityOperator::basis(2, 0).unwrap()).unwrap();
        assert!(out.matrix().sub(&half).max_abs() < 1e-12);
        ch
    }

    #[test]
    fn apply_channel_identity_and_depolarizing() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let id = QuantumChannel::identity(3).unwrap();
        let rho = random_density(&mut rng, 3);
        let out = apply_channel(&id, &rho).unwrap();
        assert!(out.matrix().sub(rho.matrix()).max_abs() < 1e-14);

        depolarizing_qubit();
    }

    #[test]
    fn apply_channel_matches_choi_application() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        // Amplitude-damping-style two-Kraus channel.
        let gamma: f64 = 0.3;
        let mut k0 = ComplexMatrix::identity(2);
        k0[(1, 1)] = Complex64::new((1.0 - gamma).sqrt(), 0.0);
        let mut k1 = ComplexMatrix::zeros(2, 2);
        k1[(0, 1)] = Complex64::new(gamma.sqrt(), 0.0);
        let ch = QuantumChannel::new(vec![2], 2, vec![k0, k1]).unwrap();

        let choi = ch.choi();
        for _ in 0..20 {
            let rho = random_density(&mut rng, 2);
            let direct = apply_channel(&ch, &rho).unwrap();
            // N(rho) = Tr_in[(rho^T (x) I) J].
            let rho_t = ComplexMatrix::from_fn(2, 2, |i, j| rho.matrix()[(j, i)]);
            let lifted = rho_t.kron(&ComplexMatrix::identity(2));
            let prod = lifted.matmul(&choi);
            let out = partial_trace_matrix(&prod, &[2, 2], &[1]).unwrap();
            assert!(out.sub(direct.matrix()).max_abs() < 1e-12);
        }
    }

    #[test]
    fn isometric_extension_identity_and_consistency() {
        let id = QuantumChannel::identity(2).unwrap();
        let ext = isometric_extension(&id);
        assert_eq!(ext.env_dim, 1);
        let vdagv = ext.isometry.dagger().matmul(&ext.isometry);
        assert!(vdagv.sub(&ComplexMatrix::identity(2)).max_abs() < 1e-12);

        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let ch = depolarizing_qubit();
        let ext = isometric_extension(&ch);
        assert_eq!(ext.env_dim, 4);
        let vdagv = ext.isometry.dagger().matmul(&ext.isometry);
        assert!(vdagv.sub(&ComplexMatrix::identity(2)).max_abs() < 1e-12);
        for _ in 0..100 {
            let rho = random_density(&mut rng, 2);
            let via_ext = ext.to_bob(rho.matrix()).unwrap();
            let direct = apply_channel(&ch, &rho).unwrap();
            let diff = via_ext.sub(direct.matrix());
            assert!(trace_norm(&diff).unwrap() < 1e-8);
        }
    }

    #[test]
    fn complement_of_classical_copy_is_classical_copy() {
        // Kraus |x><x| : Bob and the environment both see the input symbol.
        let mut kraus = Vec::new();
        for x in 0..2 {
            let mut k = ComplexMatrix::zeros(2, 2);
            k[(x, x)] = Complex64::new(1.0, 0.0);
            kraus.push(k);
        }
        let ch = QuantumChannel::new(vec![2], 2, kraus).unwrap();
        let ext = isometric_extension(&ch);
        let rho = DensityOperator::from_classical(&[0.7, 0.3]).unwrap();
        let env = ext.to_env(rho.matrix()).unwrap();
        let bob = ext.to_bob(rho.matrix()).unwrap();
        assert!(env.sub(rho.matrix()).max_abs() < 1e-12);
        assert!(bob.sub(rho.matrix()).max_abs() < 1e-12);
    }

    #[test]
    fn channel_trace_preservation_on_basis_states() {
        let ch = depolarizing_qubit();
        for k in 0..2 {
            let rho = DensityOperator::basis(2, k).unwrap();
            let out = apply_channel(&ch, &rho).unwrap();
            assert!((out.trace() - rho.trace()).abs() < 1e-10);
        }
    }

    #[test]
    fn cq_state_flatten_and_marginals() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let s0 = random_density(&mut rng, 2);
        let s1 = random_density(&mut rng, 2);
        let cq = CqState::new(vec![2], vec![0.6, 0.4], vec![s0.clone(), s1.clone()]).unwrap();
        let flat = cq.flatten().unwrap();
        assert_eq!(flat.dim(), 4);
        assert!((flat.trace() - 1.0).abs() < 1e-12);
        // Flattened quantum marginal equals the cq quantum marginal.
        let qm = cq.quantum_marginal().unwrap();
        let from_flat = partial_trace(&flat, &[2, 2], &[1]).unwrap();
        assert!(qm.matrix().sub(from_flat.matrix()).max_abs() < 1e-12);

        let m = cq.classical_marginal(&[]).unwrap();
        assert_eq!(m.num_registers(), 1);
        assert_eq!(m.reg_sizes()[0], 1);
        assert!((m.weights()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cq_tensor_power_regroups_registers() {
        let s0 = DensityOperator::basis(2, 0).unwrap();
        let s1 = DensityOperator::basis(2, 1).unwrap();
        let cq = CqState::new(vec![2], vec![0.9, 0.1], vec![s0, s1]).unwrap();
        let sq = cq.tensor_power(2).unwrap();
        assert_eq!(sq.reg_sizes(), &[4]);
        assert_eq!(sq.qdim(), 4);
        // Weight of string "01" = 0.9 * 0.1; its state is |01><01|.
        let idx = 1; // binary 01
        assert!((sq.weights()[idx] - 0.09).abs() < 1e-12);
        assert!((sq.cond_states()[idx].matrix()[(1, 1)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permute_factors_swaps_tensor_order() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 3);
        let ab = a.matrix().kron(b.matrix());
        let ba = permute_factors(&ab, &[2, 3], &[1, 0]).unwrap();
        assert!(ba.sub(&b.matrix().kron(a.matrix())).max_abs() < 1e-13);
    }

    #[test]
    fn dimension_cap_enforced() {
        let big = DensityOperator::maximally_mixed(64).unwrap();
        let mut cur = big.clone();
        // 64 * 64 = 4096 is allowed, one more factor of 64 is not.
        cur = tensor(&cur, &big).unwrap();
        assert!(matches!(tensor(&cur, &big), Err(Error::Capacity(_))));
    }
}
