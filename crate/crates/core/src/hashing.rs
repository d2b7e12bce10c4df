//! Two-universal hash families over bit strings and exact verification of the
//! distributed leftover-hash bound, per transmitter subset, against quantum
//! side information.
//!
//! Families are explicit and enumerable at desk scale: binary Toeplitz
//! matrices with an additive offset, or the full linear family. The left-hand
//! side of the bound is computed exactly by enumerating the full product
//! family and summing block trace norms; the right-hand side evaluates
//! `sqrt(sum_S 2^(r_S - Hmin(rho_{X_S E} | sigma_E)))` over nonempty subsets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{cq_conditional_entropy, hmin_cq};
use crate::linalg::{trace_norm, ComplexMatrix};
use crate::qstate::{compose_index, decompose_index, CqState, DensityOperator};
use crate::{seeded_rng, Error, Result};

/// Largest joint family size the exact mode will enumerate.
pub const MAX_EXACT_FAMILY: u64 = 1 << 20;

/// Supported two-universal family constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashKind {
    /// `x -> Tx + b` with `T` a random binary Toeplitz matrix and `b` a
    /// random offset.
    Toeplitz,
    /// `x -> Mx` over all binary `r x k` matrices.
    LinearFull,
}

/// A two-universal family `F: {0,1}^input_bits -> {0,1}^output_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFamily {
    pub kind: HashKind,
    pub input_bits: u32,
    pub output_bits: u32,
}

/// One concrete member of a family, indexed by its position in the
/// enumeration order.
#[derive(Debug, Clone)]
pub struct HashMember {
    pub family: HashFamily,
    pub index: u64,
    /// Toeplitz diagonals (length k + r - 1) or the full matrix row-major
    /// (length r * k); empty when `output_bits = 0`.
    matrix_bits: Vec<bool>,
    /// Additive offset (Toeplitz only).
    offset_bits: Vec<bool>,
}

impl HashFamily {
    pub fn new(kind: HashKind, input_bits: u32, output_bits: u32) -> Result<Self> {
        if input_bits == 0 || input_bits > 20 {
            return Err(Error::Capacity(format!(
                "input_bits {input_bits} outside supported range 1..=20"
            )));
        }
        if output_bits > input_bits {
            return Err(Error::Usage(format!(
                "output_bits {output_bits} exceeds input_bits {input_bits}"
            )));
        }
        Ok(Self {
            kind,
            input_bits,
            output_bits,
        })
    }

    /// Number of members. A zero-bit output leaves only the constant function.
    pub fn member_count(&self) -> u64 {
        let (k, r) = (self.input_bits as u64, self.output_bits as u64);
        if r == 0 {
            return 1;
        }
        match self.kind {
            HashKind::Toeplitz => 1u64 << (k + r - 1 + r),
            HashKind::LinearFull => 1u64 << (r * k),
        }
    }

    pub fn member(&self, index: u64) -> Result<HashMember> {
        if index >= self.member_count() {
            return Err(Error::Usage(format!(
                "member index {index} out of range {}",
                self.member_count()
            )));
        }
        let (k, r) = (self.input_bits as usize, self.output_bits as usize);
        if r == 0 {
            return Ok(HashMember {
                family: *self,
                index,
                matrix_bits: Vec::new(),
                offset_bits: Vec::new(),
            });
        }
        let (matrix_len, offset_len) = match self.kind {
            HashKind::Toeplitz => (k + r - 1, r),
            HashKind::LinearFull => (r * k, 0),
        };
        let bit = |pos: usize| (index >> pos) & 1 == 1;
        let matrix_bits = (0..matrix_len).map(bit).collect();
        let offset_bits = (0..offset_len).map(|i| bit(matrix_len + i)).collect();
        Ok(HashMember {
            family: *self,
            index,
            matrix_bits,
            offset_bits,
        })
    }

    /// Uniformly sampled member from a seeded stream.
    pub fn sample(&self, seed: u64) -> HashMember {
        let mut rng = seeded_rng(seed, 0x4841_5348);
        let idx = rand::Rng::random_range(&mut rng, 0..self.member_count());
        self.member(idx).expect("sampled index in range")
    }
}

impl HashMember {
    /// Apply the member to an input value (low `input_bits` of `x`).
    pub fn eval(&self, x: usize) -> usize {
        let (k, r) = (
            self.family.input_bits as usize,
            self.family.output_bits as usize,
        );
        if r == 0 {
            return 0;
        }
        let mut out = 0usize;
        for i in 0..r {
            let mut bit = false;
            for j in 0..k {
                if (x >> j) & 1 == 1 {
                    let m = match self.family.kind {
                        // Constant diagonals: entry (i, j) = bits[i - j + k - 1].
                        HashKind::Toeplitz => self.matrix_bits[i + k - 1 - j],
                        HashKind::LinearFull => self.matrix_bits[i * k + j],
                    };
                    bit ^= m;
                }
            }
            if !self.offset_bits.is_empty() && self.offset_bits[i] {
                bit = !bit;
            }
            if bit {
                out |= 1 << i;
            }
        }
        out
    }

    /// Whether the linear part is the identity map (requires r = k).
    pub fn is_identity(&self) -> bool {
        let k = self.family.input_bits as usize;
        self.family.output_bits as usize == k && (0..1usize << k).all(|x| self.eval(x) == x)
    }
}

/// Exhaustive collision probability `Pr_F[F(x) = F(x')]` over the full family.
pub fn collision_probability(family: &HashFamily, x: usize, x_prime: usize) -> Result<f64> {
    if family.member_count() > MAX_EXACT_FAMILY {
        return Err(Error::Capacity("family too large to enumerate".into()));
    }
    let mut hits = 0u64;
    for idx in 0..family.member_count() {
        let m = family.member(idx)?;
        if m.eval(x) == m.eval(x_prime) {
            hits += 1;
        }
    }
    Ok(hits as f64 / family.member_count() as f64)
}

/// How the joint family is traversed when hashing a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HashMode {
    /// Enumerate every member of the product family.
    ExactFullFamily,
    /// Average over `trials` members sampled from the seeded stream.
    MonteCarlo { seed: u64, trials: u64 },
}

/// The hashed joint operator: outputs `A_L`, side information `E`, and the
/// family label register `F_L`, represented lazily through its source state
/// and family list (blocks are produced member by member).
#[derive(Debug, Clone)]
pub struct HashedJointState {
    source: CqState,
    families: Vec<HashFamily>,
    mode: HashMode,
}

/// Exact or estimated trace distance between the hashed state and the ideal
/// `uniform (x) rho_{E F_L}` state.
#[derive(Debug, Clone, Serialize)]
pub struct LhsEstimate {
    pub value: f64,
    /// Standard error of the Monte-Carlo mean; absent in exact mode.
    pub std_err: Option<f64>,
    pub members_used: u64,
}

/// Build the hashed joint state, validating register/family compatibility.
pub fn build_hashed_state(
    rho: &CqState,
    families: &[HashFamily],
    mode: HashMode,
) -> Result<HashedJointState> {
    if rho.num_registers() != families.len() {
        return Err(Error::Usage(format!(
            "{} registers but {} hash families",
            rho.num_registers(),
            families.len()
        )));
    }
    for (l, fam) in families.iter().enumerate() {
        let expect = 1usize << fam.input_bits;
        if rho.reg_sizes()[l] != expect {
            return Err(Error::Shape(format!(
                "register {l} has alphabet {} but family expects {expect}",
                rho.reg_sizes()[l]
            )));
        }
    }
    let joint: u64 = families.iter().map(|f| f.member_count()).product();
    if matches!(mode, HashMode::ExactFullFamily) && joint > MAX_EXACT_FAMILY {
        return Err(Error::Capacity(format!(
            "joint family size {joint} exceeds exact-mode limit {MAX_EXACT_FAMILY}"
        )));
    }
    Ok(HashedJointState {
        source: rho.clone(),
        families: families.to_vec(),
        mode,
    })
}

impl HashedJointState {
    pub fn families(&self) -> &[HashFamily] {
        &self.families
    }

    pub fn source(&self) -> &CqState {
        &self.source
    }

    /// Decode a joint member index into per-user members (user 0 varies
    /// fastest).
    pub fn joint_member(&self, joint_index: u64) -> Vec<HashMember> {
        let mut rem = joint_index;
        let mut members = Vec::with_capacity(self.families.len());
        for fam in &self.families {
            let count = fam.member_count();
            members.push(fam.member(rem % count).expect("in range"));
            rem /= count;
        }
        members
    }

    fn output_sizes(&self) -> Vec<usize> {
        self.families
            .iter()
            .map(|f| 1usize << f.output_bits)
            .collect()
    }

    fn total_output_bits(&self) -> u32 {
        self.families.iter().map(|f| f.output_bits).sum()
    }

    /// The blocks `rho_E^{f_L, a_L}` for one joint member, indexed by the
    /// composite output symbol.
    pub fn member_blocks(&self, members: &[HashMember]) -> Vec<ComplexMatrix> {
        let out_sizes = self.output_sizes();
        let n_out: usize = out_sizes.iter().product();
        let d = self.source.qdim();
        let mut blocks = vec![ComplexMatrix::zeros(d, d); n_out];
        let sizes = self.source.reg_sizes().to_vec();
        let mut digits = vec![0usize; sizes.len()];
        for (x, &w) in self.source.weights().iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            decompose_index(x, &sizes, &mut digits);
            let out_digits: Vec<usize> = digits
                .iter()
                .zip(members)
                .map(|(&xl, m)| m.eval(xl))
                .collect();
            let a = compose_index(&out_digits, &out_sizes);
            blocks[a] = blocks[a].add(&self.source.weighted_state(x));
        }
        blocks
    }

    /// Hashed state for one joint member as a cq state over the output
    /// register `A_L` (flattened to one register) with quantum part `E`.
    pub fn materialize_member(&self, members: &[HashMember]) -> Result<CqState> {
        let blocks = self.member_blocks(members);
        let d = self.source.qdim();
        let mut weights = Vec::with_capacity(blocks.len());
        let mut cond = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let w = b.trace().re;
            weights.push(w.max(0.0));
            if w > 1e-14 {
                cond.push(DensityOperator::new(b.scale_re(1.0 / w))?);
            } else {
                cond.push(DensityOperator::maximally_mixed(d)?);
            }
        }
        CqState::new(vec![blocks.len()], weights, cond)
    }

    /// Distance contribution of one joint member:
    /// `sum_a || rho_E^{f,a} - 2^(-r_L) rho_E ||_1`.
    fn member_distance(&self, members: &[HashMember], ideal: &ComplexMatrix) -> f64 {
        self.member_blocks(members)
            .iter()
            .map(|b| trace_norm(&b.sub(ideal)).expect("blocks are Hermitian"))
            .sum()
    }

    /// Trace distance between the hashed state and `uniform (x) rho_{E F_L}`.
    ///
    /// The block-diagonal structure over `(a_L, f_L)` makes this an average
    /// over members of per-member block sums. Member values are collected in
    /// index order and summed sequentially, so the result is bit-identical
    /// for any rayon worker count.
    pub fn lhs_distance(&self) -> Result<LhsEstimate> {
        let rho_e = self.source.quantum_marginal()?;
        let scale = 2f64.powi(-(self.total_output_bits() as i32));
        let ideal = rho_e.matrix().scale_re(scale);
        match self.mode {
            HashMode::ExactFullFamily => {
                let total: u64 = self.families.iter().map(|f| f.member_count()).product();
                let values: Vec<f64> = (0..total)
                    .into_par_iter()
                    .map(|j| self.member_distance(&self.joint_member(j), &ideal))
                    .collect();
                let sum: f64 = values.iter().sum();
                Ok(LhsEstimate {
                    value: sum / total as f64,
                    std_err: None,
                    members_used: total,
                })
            }
            HashMode::MonteCarlo { seed, trials } => {
                if trials == 0 {
                    return Err(Error::Usage("Monte Carlo needs trials >= 1".into()));
                }
                let counts: Vec<u64> = self.families.iter().map(|f| f.member_count()).collect();
                let indices: Vec<u64> = (0..trials)
                    .map(|t| {
                        let mut rng = seeded_rng(seed, t);
                        let mut joint = 0u64;
                        let mut stride = 1u64;
                        for &c in &counts {
                            let pick = rand::Rng::random_range(&mut rng, 0..c);
                            joint += pick * stride;
                            stride *= c;
                        }
                        joint
                    })
                    .collect();
                let values: Vec<f64> = indices
                    .into_par_iter()
                    .map(|j| self.member_distance(&self.joint_member(j), &ideal))
                    .collect();
                let mean: f64 = values.iter().sum::<f64>() / trials as f64;
                let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (trials as f64 - 1.0).max(1.0);
                Ok(LhsEstimate {
                    value: mean,
                    std_err: Some((var / trials as f64).sqrt()),
                    members_used: trials,
                })
            }
        }
    }
}

/// Sum of output bits over the subset encoded by `mask`.
fn r_subset(r: &[u32], mask: usize) -> u32 {
    r.iter()
        .enumerate()
        .filter(|(l, _)| mask >> l & 1 == 1)
        .map(|(_, &bits)| bits)
        .sum()
}

/// Evaluate `sqrt(sum_S 2^(r_S - hmin_S))` from precomputed per-subset
/// min-entropies (`hmins[mask]`, nonempty masks only).
pub fn rhs_bound_from_hmins(r: &[u32], hmins: &[f64]) -> f64 {
    let l = r.len();
    let mut sum = 0.0f64;
    for mask in 1..(1usize << l) {
        sum += 2f64.powf(r_subset(r, mask) as f64 - hmins[mask]);
    }
    sum.sqrt()
}

/// Per-subset min-entropies `Hmin(rho_{X_S E} | sigma)` for all nonempty
/// subsets, indexed by bitmask (entry 0 unused).
pub fn subset_hmins(rho: &CqState, sigma: &DensityOperator) -> Result<Vec<f64>> {
    let l = rho.num_registers();
    let mut hmins = vec![0.0f64; 1 << l];
    for mask in 1..(1usize << l) {
        let keep: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let marginal = rho.classical_marginal(&keep)?;
        hmins[mask] = hmin_cq(&marginal, sigma)?;
    }
    Ok(hmins)
}

/// The distributed leftover-hash upper bound on the trace distance:
/// `sqrt(sum over nonempty S of 2^(r_S - Hmin(rho_{X_S E} | sigma)))`.
pub fn rhs_bound(rho: &CqState, r: &[u32], sigma: &DensityOperator) -> Result<f64> {
    if r.len() != rho.num_registers() {
        return Err(Error::Usage(
            "one output length per register required".into(),
        ));
    }
    Ok(rhs_bound_from_hmins(r, &subset_hmins(rho, sigma)?))
}

/// The product-state bound at blocklength `n`:
/// `2 eps + sqrt(sum_S 2^(r_S - n H(X_S|E) + n (delta_S(n) + delta(n))))`
/// with `delta_S(n) = log2(|X_S| d_E + 3) sqrt((2/n)(L + 1 + log2(1/eps)))`
/// and `delta(n) = log2(d_E + 3) sqrt((2/n)(1 + log2(1/eps)))`.
pub fn product_bound(rho: &CqState, n: u32, r: &[u32], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Domain("blocklength must be >= 1".into()));
    }
    if r.len() != rho.num_registers() {
        return Err(Error::Usage(
            "one output length per register required".into(),
        ));
    }
    let l = rho.num_registers();
    let d_e = rho.qdim() as f64;
    let nf = f64::from(n);
    let log_inv_eps = (1.0 / epsilon).log2();
    let delta = (d_e + 3.0).log2() * ((2.0 / nf) * (1.0 + log_inv_eps)).sqrt();
    let mut sum = 0.0f64;
    for mask in 1..(1usize << l) {
        let keep: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let x_s_size: usize = keep.iter().map(|&i| rho.reg_sizes()[i]).product();
        let marginal = rho.classical_marginal(&keep)?;
        let h_cond = cq_conditional_entropy(&marginal)?;
        let delta_s = (x_s_size as f64 * d_e + 3.0).log2()
            * ((2.0 / nf) * (l as f64 + 1.0 + log_inv_eps)).sqrt();
        let exponent = r_subset(r, mask) as f64 - nf * h_cond + nf * (delta_s + delta);
        sum += 2f64.powf(exponent);
    }
    Ok(2.0 * epsilon + sum.sqrt())
}

/// One verification record of the soundness suite.
#[derive(Debug, Clone, Serialize)]
pub struct SoundnessRecord {
    pub seed: u64,
    pub instance: u64,
    pub l: usize,
    pub input_bits: Vec<u32>,
    pub d_e: usize,
    pub r: Vec<u32>,
    pub kinds: Vec<HashKind>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Run `count` seeded random instances of the exact leftover-hash soundness
/// check: full-family LHS against the min-entropy RHS with the fully mixed
/// reference state on the support of `rho_E`.
pub fn soundness_suite(master_seed: u64, count: u64) -> Result<Vec<SoundnessRecord>> {
    (0..count)
        .map(|i| soundness_instance(master_seed, i))
        .collect()
}

fn soundness_instance(master_seed: u64, instance: u64) -> Result<SoundnessRecord> {
    let mut rng = seeded_rng(master_seed, instance);
    use rand::Rng;
    // Redraw until the joint family is comfortably enumerable; the sequence
    // of draws is deterministic in (seed, instance).
    let (l, families, d_e) = loop {
        let l = rng.random_range(1..=3usize);
        let mut families = Vec::with_capacity(l);
        for _ in 0..l {
            let input_bits = rng.random_range(1..=2u32);
            let output_bits = rng.random_range(0..=input_bits.min(2));
            let kind = if rng.random_bool(0.5) {
                HashKind::Toeplitz
            } else {
                HashKind::LinearFull
            };
            families.push(HashFamily::new(kind, input_bits, output_bits)?);
        }
        let d_e = 1usize << rng.random_range(0..=2u32);
        let joint: u64 = families.iter().map(|f| f.member_count()).product();
        if joint <= (1 << 13) {
            break (l, families, d_e);
        }
    };
    let reg_sizes: Vec<usize> = families.iter().map(|f| 1usize << f.input_bits).collect();
    let rho = crate::qstate::random_cq(&mut rng, &reg_sizes, d_e);
    let hashed = build_hashed_state(&rho, &families, HashMode::ExactFullFamily)?;
    let lhs = hashed.lhs_distance()?.value;
    let sigma = crate::entropy::fully_mixed_on_support(&rho.quantum_marginal()?)?;
    let r: Vec<u32> = families.iter().map(|f| f.output_bits).collect();
    let rhs = rhs_bound(&rho, &r, &sigma)?;
    let margin = rhs - lhs;
    Ok(SoundnessRecord {
        seed: master_seed,
        instance,
        l,
        input_bits: families.iter().map(|f| f.input_bits).collect(),
        d_e,
        r,
        kinds: families.iter().map(|f| f.kind).collect(),
        lhs,
        rhs,
        margin,
        pass: lhs <= rhs + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::random_cq;

    #[test]
    fn two_universality_exhaustive() {
        for kind in [HashKind::Toeplitz, HashKind::LinearFull] {
            for k in 1..=4u32 {
                for r in 0..=k.min(3) {
                    let fam = HashFamily::new(kind, k, r).unwrap();
                    let n = 1usize << k;
                    for x in 0..n {
                        for xp in 0..n {
                            if x == xp {
                                continue;
                            }
                            let p = collision_probability(&fam, x, xp).unwrap();
                            assert!(
                                p <= 2f64.powi(-(r as i32)) + 1e-12,
                                "{kind:?} k={k} r={r}: collision({x},{xp}) = {p}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn toeplitz_family_size_matches_construction() {
        // 2 -> 1: 2^(k + r - 1) Toeplitz matrices times 2^r offsets.
        let fam = HashFamily::new(HashKind::Toeplitz, 2, 1).unwrap();
        assert_eq!(fam.member_count(), 8);
        let p = collision_probability(&fam, 0b00, 0b01).unwrap();
        assert!(p <= 0.5 + 1e-12);
    }

    #[test]
    fn linear_full_contains_identity_member() {
        let fam = HashFamily::new(HashKind::LinearFull, 2, 2).unwrap();
        // Matrix bits row-major: identity = rows (1,0), (0,1) -> bits 1,0,0,1.
        let m = fam.member(0b1001).unwrap();
        assert!(m.is_identity());
        for x in 0..4 {
            assert_eq!(m.eval(x), x);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let fam = HashFamily::new(HashKind::Toeplitz, 3, 2).unwrap();
        assert_eq!(fam.sample(99).index, fam.sample(99).index);
    }

    fn uniform_bit_trivial_e() -> CqState {
        let e = DensityOperator::trivial();
        CqState::new(vec![2], vec![0.5, 0.5], vec![e.clone(), e]).unwrap()
    }

    #[test]
    fn hashed_state_identity_member_relabels() {
        let mut rng = crate::seeded_rng(1, 0);
        let rho = random_cq(&mut rng, &[4], 2);
        let fam = HashFamily::new(HashKind::LinearFull, 2, 2).unwrap();
        let hashed = build_hashed_state(&rho, &[fam], HashMode::ExactFullFamily).unwrap();
        let identity = fam.member(0b1001).unwrap();
        let blocks = hashed.member_blocks(&[identity]);
        for (x, b) in blocks.iter().enumerate() {
            assert!(b.sub(&rho.weighted_state(x)).max_abs() < 1e-14);
        }
    }

    #[test]
    fn four_member_family_on_uniform_bit() {
        // k = r = 1 Toeplitz: members x -> tx + b over (t, b).
        let rho = uniform_bit_trivial_e();
        let fam = HashFamily::new(HashKind::Toeplitz, 1, 1).unwrap();
        assert_eq!(fam.member_count(), 4);
        let hashed = build_hashed_state(&rho, &[fam], HashMode::ExactFullFamily).unwrap();
        // Bijective members (t = 1) give exactly uniform outputs: distance 0;
        // constant members (t = 0) give distance 1. Average = 1/2.
        let est = hashed.lhs_distance().unwrap();
        assert!((est.value - 0.5).abs() < 1e-12);
        let ideal = rho.quantum_marginal().unwrap().matrix().scale_re(0.5);
        for idx in 0..4 {
            let m = fam.member(idx).unwrap();
            let d: f64 = hashed
                .member_blocks(std::slice::from_ref(&m))
                .iter()
                .map(|b| trace_norm(&b.sub(&ideal)).unwrap())
                .sum();
            if m.matrix_bits[0] {
                assert!(d < 1e-12, "bijective member should be exactly uniform");
            } else {
                assert!((d - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_hash_has_zero_distance() {
        // r = 0 for every user: a single output symbol, so the hashed state
        // equals uniform (x) rho_E exactly.
        let mut rng = crate::seeded_rng(11, 0);
        let rho = random_cq(&mut rng, &[2, 2], 2);
        let fams = [
            HashFamily::new(HashKind::Toeplitz, 1, 0).unwrap(),
            HashFamily::new(HashKind::LinearFull, 1, 0).unwrap(),
        ];
        let hashed = build_hashed_state(&rho, &fams, HashMode::ExactFullFamily).unwrap();
        assert!(hashed.lhs_distance().unwrap().value < 1e-12);
    }

    #[test]
    fn marginal_recovery_invariant() {
        let mut rng = crate::seeded_rng(2, 0);
        let rho = random_cq(&mut rng, &[2, 2], 2);
        let fams = [
            HashFamily::new(HashKind::Toeplitz, 1, 1).unwrap(),
            HashFamily::new(HashKind::LinearFull, 1, 1).unwrap(),
        ];
        let hashed = build_hashed_state(&rho, &fams, HashMode::ExactFullFamily).unwrap();
        let rho_e = rho.quantum_marginal().unwrap();
        let total: u64 = fams.iter().map(|f| f.member_count()).product();
        for j in 0..total {
            let members = hashed.joint_member(j);
            // Tracing out A_L recovers rho_E for every member.
            let mut acc = ComplexMatrix::zeros(2, 2);
            for b in hashed.member_blocks(&members) {
                acc = acc.add(&b);
            }
            assert!(acc.sub(rho_e.matrix()).max_abs() < 1e-10);
            // The per-member cq state keeps total mass 1.
            let mat = hashed.materialize_member(&members).unwrap();
            assert!((mat.total_weight() - 1.0).abs() < 1e-10);
        }
    }

    /// Monolithic oracle: assemble the full (A_L, F_L, E) difference operator
    /// and take one global trace norm.
    #[test]
    fn lhs_matches_monolithic_trace_norm() {
        let mut rng = crate::seeded_rng(3, 0);
        let rho = random_cq(&mut rng, &[2, 2], 2);
        let fams = [
            HashFamily::new(HashKind::Toeplitz, 1, 1).unwrap(),
            HashFamily::new(HashKind::Toeplitz, 1, 1).unwrap(),
        ];
        let hashed = build_hashed_state(&rho, &fams, HashMode::ExactFullFamily).unwrap();
        let exact = hashed.lhs_distance().unwrap().value;

        let total: u64 = fams.iter().map(|f| f.member_count()).product();
        let d_e = rho.qdim();
        let n_out = 4usize;
        let dim = n_out * d_e * total as usize;
        let mut big = ComplexMatrix::zeros(dim, dim);
        let ideal = rho.quantum_marginal().unwrap().matrix().scale_re(0.25);
        for j in 0..total {
            let blocks = hashed.member_blocks(&hashed.joint_member(j));
            for (a, b) in blocks.iter().enumerate() {
                let diff = b.sub(&ideal).scale_re(1.0 / total as f64);
                let base = (j as usize * n_out + a) * d_e;
                for i in 0..d_e {
                    for jj in 0..d_e {
                        big[(base + i, base + jj)] = diff[(i, jj)];
                    }
                }
            }
        }
        let monolithic = trace_norm(&big).unwrap();
        assert!(
            (exact - monolithic).abs() < 1e-9,
            "blockwise {exact} vs monolithic {monolithic}"
        );
    }

    #[test]
    fn lhs_invariant_under_classical_relabeling() {
        let mut rng = crate::seeded_rng(4, 0);
        let rho = random_cq(&mut rng, &[4], 2);
        let fam = HashFamily::new(HashKind::Toeplitz, 2, 1).unwrap();
        let base = build_hashed_state(&rho, &[fam], HashMode::ExactFullFamily)
            .unwrap()
            .lhs_distance()
            .unwrap()
            .value;
        // Swap symbols 1 and 2 of the register.
        let perm = [0usize, 2, 1, 3];
        let weights: Vec<f64> = (0..4).map(|x| rho.weights()[perm[x]]).collect();
        let cond: Vec<DensityOperator> =
            (0..4).map(|x| rho.cond_states()[perm[x]].clone()).collect();
        let relabeled = CqState::new(vec![4], weights, cond).unwrap();
        let permuted = build_hashed_state(&relabeled, &[fam], HashMode::ExactFullFamily)
            .unwrap()
            .lhs_distance()
            .unwrap()
            .value;
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_converges_to_exact() {
        let mut rng = crate::seeded_rng(5, 0);
        let rho = random_cq(&mut rng, &[2, 2], 2);
        let fams = [
            HashFamily::new(HashKind::Toeplitz, 1, 1).unwrap(),
            HashFamily::new(HashKind::LinearFull, 1, 1).unwrap(),
        ];
        let exact = build_hashed_state(&rho, &fams, HashMode::ExactFullFamily)
            .unwrap()
            .lhs_distance()
            .unwrap()
            .value;
        let mc = build_hashed_state(
            &rho,
            &fams,
            HashMode::MonteCarlo {
                seed: 17,
                trials: 4000,
            },
        )
        .unwrap()
        .lhs_distance()
        .unwrap();
        let se = mc.std_err.unwrap();
        assert!(
            (mc.value - exact).abs() <= 3.0 * se + 1e-9,
            "MC {} vs exact {} (se {})",
            mc.value,
            exact,
            se
        );
    }

    #[test]
    fn rhs_bound_uniform_independent_bit() {
        let mut rng = crate::seeded_rng(6, 0);
        let e = crate::qstate::random_density(&mut rng, 2);
        let rho = CqState::new(vec![2], vec![0.5, 0.5], vec![e.clone(), e.clone()]).unwrap();
        // Hmin = 1, r = 1: bound = sqrt(2^(1-1)) = 1.
        let bound = rhs_bound(&rho, &[1], &e).unwrap();
        assert!((bound - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rhs_bound_zero_rate_instantiation() {
        // r = 0 everywhere: the bound squared is the plain sum of
        // 2^(-Hmin_S) over nonempty subsets.
        let hmins = vec![0.0, 0.9, 1.7, 2.4];
        let b = rhs_bound_from_hmins(&[0, 0], &hmins);
        let expect: f64 = (1..4).map(|s| 2f64.powf(-hmins[s])).sum();
        assert!((b * b - expect).abs() < 1e-12);
    }

    #[test]
    fn rhs_bound_formula_monotonicity() {
        let hmins = vec![0.0, 1.3, 0.7, 2.1];
        let base = rhs_bound_from_hmins(&[1, 1], &hmins);
        // Nondecreasing in each r_l.
        assert!(rhs_bound_from_hmins(&[2, 1], &hmins) >= base);
        assert!(rhs_bound_from_hmins(&[1, 2], &hmins) >= base);
        // Nonincreasing in each Hmin.
        for s in 1..4usize {
            let mut bumped = hmins.clone();
            bumped[s] += 0.25;
            assert!(rhs_bound_from_hmins(&[1, 1], &bumped) <= base + 1e-12);
        }
    }

    #[test]
    fn soundness_on_random_instances() {
        // A shorter in-module run; the acceptance suite runs the full 200.
        let records = soundness_suite(0xABCD, 40).unwrap();
        for rec in &records {
            assert!(
                rec.pass,
                "violation: lhs {} > rhs {} ({rec:?})",
                rec.lhs, rec.rhs
            );
        }
    }

    #[test]
    fn product_bound_dominated_by_epsilon_term() {
        let rho = uniform_bit_trivial_e();
        // Huge r: the sqrt term is enormous but the 2 eps floor remains.
        let b = product_bound(&rho, 4, &[4], 0.25).unwrap();
        assert!(b >= 0.5);
    }

    #[test]
    fn product_bound_frozen_formula_value() {
        // L = 1, |X| = 2, d_E = 1 (trivial side information), uniform bit,
        // n = 8, eps = 0.5, r = 0. Then H(X|E) = 1 and the bound is
        // 2*0.5 + sqrt(2^(8*(delta_S + delta) - 8)) with
        // delta_S = log2(5) sqrt((2/8) * 3), delta = log2(4) sqrt((2/8) * 2).
        let rho = uniform_bit_trivial_e();
        let b = product_bound(&rho, 8, &[0], 0.5).unwrap();
        let delta_s = 5f64.log2() * ((2.0 / 8.0) * 3.0f64).sqrt();
        let delta = 4f64.log2() * ((2.0 / 8.0) * 2.0f64).sqrt();
        let expect = 1.0 + 2f64.powf(0.5 * (8.0 * (delta_s + delta) - 8.0));
        assert!((b - expect).abs() < 1e-12);
        assert!(b > 1.0);
    }

    #[test]
    fn product_bound_tail_decreases_for_rates_below_entropy() {
        let mut rng = crate::seeded_rng(7, 0);
        let e0 = crate::qstate::random_density(&mut rng, 2);
        let rho = CqState::new(vec![2], vec![0.5, 0.5], vec![e0.clone(), e0]).unwrap();
        // H(X|E) = 1 here; total hash output stays at rate 1/4 per copy.
        let b_small = product_bound(&rho, 64, &[16], 0.25).unwrap();
        let b_large = product_bound(&rho, 256, &[64], 0.25).unwrap();
        assert!(
            b_large < b_small,
            "bound should shrink: {b_small} -> {b_large}"
        );
    }

    #[test]
    fn product_bound_rejects_bad_epsilon() {
        let rho = uniform_bit_trivial_e();
        assert!(matches!(
            product_bound(&rho, 4, &[1], 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            product_bound(&rho, 4, &[1], 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exact_mode_rejects_oversized_families() {
        let big = HashFamily::new(HashKind::LinearFull, 4, 4).unwrap();
        let rho = CqState::new(
            vec![16, 16],
            vec![1.0 / 256.0; 256],
            vec![DensityOperator::trivial(); 256],
        )
        .unwrap();
        // 2^16 members per user, 2^32 joint: over the exact-mode limit.
        let err = build_hashed_state(&rho, &[big, big], HashMode::ExactFullFamily);
        assert!(matches!(err, Err(Error::Capacity(_))));
    }
}
