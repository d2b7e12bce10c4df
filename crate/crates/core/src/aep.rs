//! The simultaneous smoothing construction: a subnormalized truncation `q` of
//! a product pmf that keeps variational distance at most `epsilon` while
//! guaranteeing, for every transmitter subset at once, a min-entropy floor on
//! the joint marginal and a max-entropy ceiling on the side-information
//! marginal. Everything here is classical and exact at small blocklengths;
//! the quantum version enters elsewhere through eigenbasis weights.
//!
//! Masks follow the typical-set shape
//! `q(x, y) = 1{(x, y) in A} 1{y in B} p(x, y)` with
//! `A = { forall S: -log p_S(x_S, y) >= H(X_S Y) - n delta_S(n) }` and
//! `B = { -log p_Y(y) <= H(Y^n) + n delta(n) }`.

use serde::Serialize;

use crate::entropy::shannon;
use crate::qstate::{compose_index, decompose_index};
use crate::{Error, Result};

/// Most joint outcomes `(|X_L| |Y|)^n` the builder will enumerate.
pub const MAX_ENUMERATION: u64 = 1 << 24;
/// Largest marginal table kept per strict subset.
const MAX_SUBSET_TABLE: u64 = 1 << 22;

/// Joint pmf of `L` transmitter variables and one side-information variable,
/// row-major over `(x_1, ..., x_L, y)`.
#[derive(Debug, Clone)]
pub struct JointPmf {
    x_sizes: Vec<usize>,
    y_size: usize,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(x_sizes: Vec<usize>, y_size: usize, probs: Vec<f64>) -> Result<Self> {
        let n: usize = x_sizes.iter().product::<usize>() * y_size;
        if x_sizes.iter().any(|&s| s == 0) || y_size == 0 {
            return Err(Error::Usage("empty alphabet".into()));
        }
        if probs.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} probabilities, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Domain("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self {
            x_sizes,
            y_size,
            probs,
        })
    }

    pub fn num_users(&self) -> usize {
        self.x_sizes.len()
    }

    pub fn x_sizes(&self) -> &[usize] {
        &self.x_sizes
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn all_sizes(&self) -> Vec<usize> {
        let mut s = self.x_sizes.clone();
        s.push(self.y_size);
        s
    }

    /// Marginal over `(X_S, Y)` for the subset bitmask, indexed row-major
    /// over the kept factors in increasing user order, then `Y`.
    fn subset_marginal(&self, mask: usize) -> Vec<f64> {
        let l = self.num_users();
        let sizes = self.all_sizes();
        let kept: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let mut out_sizes: Vec<usize> = kept.iter().map(|&i| self.x_sizes[i]).collect();
        out_sizes.push(self.y_size);
        let mut table = vec![0.0f64; out_sizes.iter().product()];
        let mut digits = vec![0usize; sizes.len()];
        for (j, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decompose_index(j, &sizes, &mut digits);
            let mut proj: Vec<usize> = kept.iter().map(|&i| digits[i]).collect();
            proj.push(digits[l]);
            table[compose_index(&proj, &out_sizes)] += p;
        }
        table
    }
}

/// The per-subset deviation `delta_S(n) = log2(|X_S||Y| + 3)
/// sqrt((2/n)(L + 1 + log2(1/eps)))` and the side-information deviation
/// `delta(n) = log2(|Y| + 3) sqrt((2/n)(1 + log2(1/eps)))`.
fn delta_subset(alphabet: f64, n: u32, l: usize, epsilon: f64) -> f64 {
    (alphabet + 3.0).log2()
        * ((2.0 / f64::from(n)) * (l as f64 + 1.0 + (1.0 / epsilon).log2())).sqrt()
}

fn delta_side(y_size: f64, n: u32, epsilon: f64) -> f64 {
    (y_size + 3.0).log2() * ((2.0 / f64::from(n)) * (1.0 + (1.0 / epsilon).log2())).sqrt()
}

/// The truncated, subnormalized function `q` together with everything needed
/// to check the smoothing clauses exactly.
#[derive(Debug, Clone)]
pub struct TruncatedDistribution {
    base: JointPmf,
    n: u32,
    epsilon: f64,
    /// log2 of single-copy subset marginals, indexed `[mask][projected j]`.
    subset_log: Vec<Vec<f64>>,
    subset_sizes: Vec<Vec<usize>>,
    /// Single-copy Shannon entropies `H(X_S Y)` per mask.
    subset_entropy: Vec<f64>,
    delta_s: Vec<f64>,
    delta: f64,
    /// q-marginal tables over length-n projected sequences, per strict-subset
    /// mask; the full mask is tracked by `max_q_full` only.
    q_tables: Vec<Option<Vec<f64>>>,
    max_q_full: f64,
    total_q: f64,
}

/// Build the truncation by exact enumeration of all `(|X_L||Y|)^n` sequences.
pub fn build_truncation(p: &JointPmf, n: u32, epsilon: f64) -> Result<TruncatedDistribution> {
    if n == 0 {
        return Err(Error::Domain("blocklength must be >= 1".into()));
    }
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    let l = p.num_users();
    let single: u64 = p.all_sizes().iter().product::<usize>() as u64;
    let outcomes = single.checked_pow(n).filter(|&o| o <= MAX_ENUMERATION);
    let Some(_) = outcomes else {
        return Err(Error::Capacity(format!(
            "{single}^{n} joint sequences exceed the enumeration limit"
        )));
    };

    let masks = 1usize << l;
    let mut subset_log = Vec::with_capacity(masks);
    let mut subset_sizes = Vec::with_capacity(masks);
    let mut subset_entropy = Vec::with_capacity(masks);
    let mut delta_s = Vec::with_capacity(masks);
    for mask in 0..masks {
        let marg = p.subset_marginal(mask);
        subset_entropy.push(shannon(&marg));
        let kept: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let mut sizes: Vec<usize> = kept.iter().map(|&i| p.x_sizes[i]).collect();
        sizes.push(p.y_size);
        let alphabet: f64 = sizes.iter().product::<usize>() as f64;
        delta_s.push(delta_subset(alphabet, n, l, epsilon));
        subset_log.push(
            marg.iter()
                .map(|&x| if x > 0.0 { x.log2() } else { f64::NEG_INFINITY })
                .collect(),
        );
        subset_sizes.push(sizes);
    }
    let delta = delta_side(p.y_size as f64, n, epsilon);

    // Allocate q-marginal tables for strict subsets (and the Y-only mask 0).
    let mut q_tables: Vec<Option<Vec<f64>>> = Vec::with_capacity(masks);
    for mask in 0..masks {
        if mask == masks - 1 && l > 0 {
            q_tables.push(None); // full joint handled via streaming max
            continue;
        }
        let single_size: u64 = subset_sizes[mask].iter().product::<usize>() as u64;
        let table_len = single_size
            .checked_pow(n)
            .filter(|&t| t <= MAX_SUBSET_TABLE);
        match table_len {
            Some(len) => q_tables.push(Some(vec![0.0f64; len as usize])),
            None => {
                return Err(Error::Capacity(format!(
                    "subset marginal table {single_size}^{n} too large"
                )))
            }
        }
    }

    let mut t = TruncatedDistribution {
        base: p.clone(),
        n,
        epsilon,
        subset_log,
        subset_sizes,
        subset_entropy,
        delta_s,
        delta,
        q_tables,
        max_q_full: 0.0,
        total_q: 0.0,
    };
    t.enumerate();
    Ok(t)
}

impl TruncatedDistribution {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn base(&self) -> &JointPmf {
        &self.base
    }

    fn num_masks(&self) -> usize {
        1 << self.base.num_users()
    }

    /// Projection of a single-copy joint index onto the (X_S, Y) factors.
    fn project(&self, mask: usize, joint: usize) -> usize {
        let l = self.base.num_users();
        let sizes = self.base.all_sizes();
        let mut digits = vec![0usize; sizes.len()];
        decompose_index(joint, &sizes, &mut digits);
        let kept: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let mut proj: Vec<usize> = kept.iter().map(|&i| digits[i]).collect();
        proj.push(digits[l]);
        compose_index(&proj, &self.subset_sizes[mask])
    }

    /// Depth-first enumeration of all sequences with running per-mask
    /// log-probabilities and projected sequence indices.
    fn enumerate(&mut self) {
        let masks = self.num_masks();
        let single: usize = self.base.all_sizes().iter().product();
        // Per single-copy symbol: projected index and log-prob per mask.
        let proj: Vec<Vec<usize>> = (0..masks)
            .map(|m| (0..single).map(|j| self.project(m, j)).collect())
            .collect();
        let logp: Vec<Vec<f64>> = (0..masks)
            .map(|m| {
                (0..single)
                    .map(|j| self.subset_log[m][proj[m][j]])
                    .collect()
            })
            .collect();
        let table_sizes: Vec<usize> = (0..masks)
            .map(|m| self.subset_sizes[m].iter().product::<usize>())
            .collect();

        struct Walk<'a> {
            t: &'a mut TruncatedDistribution,
            proj: &'a [Vec<usize>],
            logp: &'a [Vec<f64>],
            table_sizes: &'a [usize],
            single: usize,
            masks: usize,
        }
        impl Walk<'_> {
            fn descend(&mut self, depth: u32, acc_log: &[f64], acc_idx: &[usize], seq_p: f64) {
                if depth == self.t.n {
                    self.leaf(acc_log, acc_idx, seq_p);
                    return;
                }
                for j in 0..self.single {
                    let p = self.t.base.probs[j];
                    if p == 0.0 {
                        continue;
                    }
                    let mut next_log = acc_log.to_vec();
                    let mut next_idx = acc_idx.to_vec();
                    for m in 0..self.masks {
                        next_log[m] += self.logp[m][j];
                        next_idx[m] = next_idx[m] * self.table_sizes[m] + self.proj[m][j];
                    }
                    self.descend(depth + 1, &next_log, &next_idx, seq_p * p);
                }
            }

            fn leaf(&mut self, acc_log: &[f64], acc_idx: &[usize], seq_p: f64) {
                let t = &mut *self.t;
                let n = f64::from(t.n);
                let full = self.masks - 1;
                // A membership: for every subset, -log p_S >= n H_S - n delta_S.
                let in_a = (0..self.masks)
                    .all(|m| -acc_log[m] >= n * t.subset_entropy[m] - n * t.delta_s[m] - 1e-12);
                // B membership: -log p_Y <= n H(Y) + n delta.
                let in_b = -acc_log[0] <= n * t.subset_entropy[0] + n * t.delta + 1e-12;
                if !(in_a && in_b) {
                    return;
                }
                t.total_q += seq_p;
                if seq_p > t.max_q_full {
                    // The full-mask marginal is q itself only when the
                    // projected index is injective; track via table when
                    // available, else: q values accumulate only in tables.
                }
                for m in 0..self.masks {
                    match &mut t.q_tables[m] {
                        Some(table) => table[acc_idx[m]] += seq_p,
                        None => {
                            debug_assert_eq!(m, full);
                            if seq_p > t.max_q_full {
                                t.max_q_full = seq_p;
                            }
                        }
                    }
                }
            }
        }

        let zero_log = vec![0.0f64; masks];
        let zero_idx = vec![0usize; masks];
        let mut walk = Walk {
            t: self,
            proj: &proj,
            logp: &logp,
            table_sizes: &table_sizes,
            single,
            masks,
        };
        walk.descend(0, &zero_log, &zero_idx, 1.0);
    }

    /// Pointwise `q` at a sequence of single-copy joint symbols, recomputed
    /// from the mask definitions (independent of the enumeration tables).
    pub fn q_at(&self, seq: &[usize]) -> Result<f64> {
        if seq.len() != self.n as usize {
            return Err(Error::Usage("sequence length must equal n".into()));
        }
        let masks = self.num_masks();
        let n = f64::from(self.n);
        let mut p_seq = 1.0f64;
        let mut acc_log = vec![0.0f64; masks];
        for &j in seq {
            if j >= self.base.probs.len() {
                return Err(Error::Usage("symbol out of range".into()));
            }
            p_seq *= self.base.probs[j];
            for m in 0..masks {
                acc_log[m] += self.subset_log[m][self.project(m, j)];
            }
        }
        if p_seq == 0.0 {
            return Ok(0.0);
        }
        let in_a = (0..masks)
            .all(|m| -acc_log[m] >= n * self.subset_entropy[m] - n * self.delta_s[m] - 1e-12);
        let in_b = -acc_log[0] <= n * self.subset_entropy[0] + n * self.delta + 1e-12;
        Ok(if in_a && in_b { p_seq } else { 0.0 })
    }

    /// Whether the projection of a sequence lies in the marginal mask `A_S`.
    pub fn in_a_s(&self, mask: usize, seq: &[usize]) -> Result<bool> {
        if seq.len() != self.n as usize {
            return Err(Error::Usage("sequence length must equal n".into()));
        }
        let n = f64::from(self.n);
        let mut acc = 0.0f64;
        for &j in seq {
            acc += self.subset_log[mask][self.project(mask, j)];
        }
        Ok(-acc >= n * self.subset_entropy[mask] - n * self.delta_s[mask] - 1e-12)
    }

    /// Exact variational distance `V(p, q) = 1 - sum q` (q is `p` masked).
    pub fn v_distance(&self) -> f64 {
        (1.0 - self.total_q).max(0.0)
    }

    /// Classical min-entropy `-log2 max` of the q-marginal for a subset mask.
    pub fn hmin_q(&self, mask: usize) -> f64 {
        let max = match &self.q_tables[mask] {
            Some(table) => table.iter().copied().fold(0.0f64, f64::max),
            None => self.max_q_full,
        };
        if max <= 0.0 {
            f64::INFINITY
        } else {
            -max.log2()
        }
    }

    /// Classical max-entropy `log2 |supp|` of the q-marginal over `Y^n`.
    pub fn hmax_q_y(&self) -> f64 {
        let table = self.q_tables[0].as_ref().expect("Y table always kept");
        let support = table.iter().filter(|&&v| v > 0.0).count();
        if support == 0 {
            0.0
        } else {
            (support as f64).log2()
        }
    }

    /// Check every clause of the smoothing guarantee exactly.
    pub fn verify(&self) -> Lemma2Report {
        let n = f64::from(self.n);
        let masks = self.num_masks();
        let mut hmin_slack = Vec::with_capacity(masks);
        for mask in 0..masks {
            let floor = n * self.subset_entropy[mask] - n * self.delta_s[mask];
            hmin_slack.push(self.hmin_q(mask) - floor);
        }
        let hmin_ok = hmin_slack.iter().all(|&s| s >= -1e-9);
        let hmax_ceiling = n * self.subset_entropy[0] + n * self.delta;
        let hmax_slack = hmax_ceiling - self.hmax_q_y();
        let v = self.v_distance();
        let v_ok = v <= self.epsilon + 1e-12;
        let hmax_ok = hmax_slack >= -1e-9;
        Lemma2Report {
            n: self.n,
            epsilon: self.epsilon,
            v_distance: v,
            v_ok,
            hmin_slack,
            hmin_ok,
            hmax_slack,
            hmax_ok,
            pass: v_ok && hmin_ok && hmax_ok,
        }
    }
}

/// Outcome of checking the three smoothing clauses on a built truncation.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma2Report {
    pub n: u32,
    pub epsilon: f64,
    pub v_distance: f64,
    pub v_ok: bool,
    /// `Hmin(q_S) - (n H(X_S Y) - n delta_S)` per subset bitmask.
    pub hmin_slack: Vec<f64>,
    pub hmin_ok: bool,
    /// `(n H(Y) + n delta) - Hmax(q_Y)`.
    pub hmax_slack: f64,
    pub hmax_ok: bool,
    pub pass: bool,
}

/// Concentration bound `2^(-n delta^2 / (2 log2(|X| + 3)^2))` on the chance
/// that the empirical log-probability of an iid sequence strays `n delta`
/// from its entropy.
pub fn hoeffding_tail(alphabet_size: usize, n: u32, delta: f64) -> Result<f64> {
    if alphabet_size < 2 {
        return Err(Error::Domain(
            "alphabet must have at least 2 symbols".into(),
        ));
    }
    let log_alpha = (alphabet_size as f64).log2();
    if !(0.0..=log_alpha).contains(&delta) {
        return Err(Error::Domain(format!(
            "delta {delta} outside [0, log2 |X|] = [0, {log_alpha}]"
        )));
    }
    let denom = 2.0 * (alphabet_size as f64 + 3.0).log2().powi(2);
    Ok(2f64.powf(-(f64::from(n) * delta * delta) / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn biased_bit(p0: f64) -> JointPmf {
        JointPmf::new(vec![2], 1, vec![p0, 1.0 - p0]).unwrap()
    }

    fn uniform_two_user() -> JointPmf {
        JointPmf::new(vec![2, 2], 2, vec![0.125; 8]).unwrap()
    }

    /// Naive oracle: rebuild q pointwise from scratch and return
    /// (V(p,q), per-mask Hmin, Hmax(q_Y)) by materializing full tables.
    fn naive_oracle(p: &JointPmf, n: u32, eps: f64) -> (f64, Vec<f64>, f64) {
        let t = build_truncation(p, n, eps).unwrap();
        let l = p.num_users();
        let masks = 1usize << l;
        let single: usize = p.probs().len();
        let total = single.pow(n);
        let mut v = 0.0f64;
        let mut tables: Vec<std::collections::HashMap<Vec<usize>, f64>> =
            vec![std::collections::HashMap::new(); masks];
        let sizes = {
            let mut s = p.x_sizes().to_vec();
            s.push(p.y_size());
            s
        };
        for flat in 0..total {
            // Decode the sequence as n base-`single` digits.
            let mut seq = vec![0usize; n as usize];
            let mut rem = flat;
            for pos in (0..n as usize).rev() {
                seq[pos] = rem % single;
                rem /= single;
            }
            let p_seq: f64 = seq.iter().map(|&j| p.probs()[j]).product();
            let q = t.q_at(&seq).unwrap();
            assert!(q == 0.0 || (q - p_seq).abs() < 1e-15, "q must be p or 0");
            v += p_seq - q;
            if q > 0.0 {
                for m in 0..masks {
                    let kept: Vec<usize> = (0..l).filter(|i| m >> i & 1 == 1).collect();
                    let key: Vec<usize> = seq
                        .iter()
                        .map(|&j| {
                            let mut digits = vec![0usize; sizes.len()];
                            decompose_index(j, &sizes, &mut digits);
                            let mut proj: Vec<usize> = kept.iter().map(|&i| digits[i]).collect();
                            proj.push(digits[l]);
                            compose_index(&proj, &{
                                let mut s: Vec<usize> =
                                    kept.iter().map(|&i| p.x_sizes()[i]).collect();
                                s.push(p.y_size());
                                s
                            })
                        })
                        .collect();
                    *tables[m].entry(key).or_insert(0.0) += q;
                }
            }
        }
        let hmins: Vec<f64> = (0..masks)
            .map(|m| {
                let max = tables[m].values().copied().fold(0.0f64, f64::max);
                -max.log2()
            })
            .collect();
        let hmax = (tables[0].len() as f64).log2();
        (v, hmins, hmax)
    }

    #[test]
    fn vacuous_epsilon_keeps_everything() {
        // Large epsilon at n = 1 makes the deviations exceed any log-prob:
        // q = p exactly.
        let p = JointPmf::new(vec![2], 2, vec![0.3, 0.2, 0.25, 0.25]).unwrap();
        let t = build_truncation(&p, 1, 0.9999).unwrap();
        assert!(t.v_distance() < 1e-12);
        assert!(t.verify().pass);
    }

    #[test]
    fn uniform_pmf_is_never_truncated() {
        // -log p is exactly H for every sequence and subset.
        let p = uniform_two_user();
        for n in [1u32, 2, 3] {
            let t = build_truncation(&p, n, 0.1).unwrap();
            assert!(t.v_distance() < 1e-12, "uniform case must keep all mass");
            let report = t.verify();
            assert!(report.pass);
            for &s in &report.hmin_slack {
                assert!(s >= -1e-12);
            }
        }
    }

    #[test]
    fn biased_bit_matches_enumeration_oracle() {
        let p = biased_bit(0.9);
        let t = build_truncation(&p, 6, 0.5).unwrap();
        let (v, hmins, hmax) = naive_oracle(&p, 6, 0.5);
        assert!((t.v_distance() - v).abs() < 1e-12);
        for m in 0..2 {
            assert!((t.hmin_q(m) - hmins[m]).abs() < 1e-12);
        }
        assert!((t.hmax_q_y() - hmax).abs() < 1e-12);
        assert!(t.v_distance() <= 0.5);
        assert!(t.verify().pass);
    }

    #[test]
    fn random_pmfs_match_oracle_and_pass() {
        let mut rng = crate::seeded_rng(31, 0);
        for trial in 0..12 {
            let l = 1 + trial % 2;
            let x_sizes = vec![2usize; l];
            let y = 2usize;
            let total: usize = x_sizes.iter().product::<usize>() * y;
            let probs = crate::qstate::random_pmf(&mut rng, total);
            let p = JointPmf::new(x_sizes, y, probs).unwrap();
            let n = 1 + rng.random_range(0..4u32);
            let eps = 0.1 + 0.8 * rng.random::<f64>();
            let t = build_truncation(&p, n, eps).unwrap();
            let (v, hmins, hmax) = naive_oracle(&p, n, eps);
            assert!((t.v_distance() - v).abs() < 1e-12);
            for m in 0..(1usize << l) {
                assert!((t.hmin_q(m) - hmins[m]).abs() < 1e-12);
            }
            assert!((t.hmax_q_y() - hmax).abs() < 1e-12);
            assert!(t.verify().pass, "smoothing clause failed: {:?}", t.verify());
        }
    }

    #[test]
    fn adversarial_small_epsilon_still_passes() {
        let p = biased_bit(0.8);
        let t = build_truncation(&p, 4, 1e-6).unwrap();
        let report = t.verify();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn mask_nesting_membership() {
        // q > 0 at a sequence implies the projected sequence is in every A_S.
        let mut rng = crate::seeded_rng(32, 0);
        let probs = crate::qstate::random_pmf(&mut rng, 8);
        let p = JointPmf::new(vec![2, 2], 2, probs).unwrap();
        let t = build_truncation(&p, 3, 0.4).unwrap();
        for flat in 0..512usize {
            let mut seq = vec![0usize; 3];
            let mut rem = flat;
            for pos in (0..3).rev() {
                seq[pos] = rem % 8;
                rem /= 8;
            }
            if t.q_at(&seq).unwrap() > 0.0 {
                for mask in 0..4 {
                    assert!(t.in_a_s(mask, &seq).unwrap());
                }
            }
        }
    }

    #[test]
    fn slack_nonnegative_and_hmin_nondecreasing_in_epsilon() {
        // Growing epsilon shrinks both deviations, tightening the masks, so
        // q loses mass pointwise and every marginal min-entropy can only grow.
        let p = biased_bit(0.75);
        let mut prev_hmin = vec![f64::NEG_INFINITY; 2];
        for eps in [0.05f64, 0.2, 0.5, 0.9] {
            let t = build_truncation(&p, 5, eps).unwrap();
            let report = t.verify();
            for &s in &report.hmin_slack {
                assert!(s >= -1e-9, "clause slack must stay nonnegative");
            }
            for (mask, prev) in prev_hmin.iter_mut().enumerate() {
                let h = t.hmin_q(mask);
                assert!(h >= *prev - 1e-9, "Hmin(q) dropped as epsilon grew");
                *prev = h;
            }
        }
    }

    #[test]
    fn enumeration_cap_enforced() {
        let p = JointPmf::new(vec![4, 4], 4, vec![1.0 / 64.0; 64]).unwrap();
        assert!(matches!(
            build_truncation(&p, 8, 0.5),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn hoeffding_examples() {
        assert!((hoeffding_tail(2, 10, 0.0).unwrap() - 1.0).abs() < 1e-12);
        // |X| = 2, n = 100, delta = 0.1: 2^(-100 * 0.01 / (2 log2(5)^2)).
        let b = hoeffding_tail(2, 100, 0.1).unwrap();
        let expect = 2f64.powf(-1.0 / (2.0 * 5f64.log2().powi(2)));
        assert!((b - expect).abs() < 1e-12);
        assert!(matches!(hoeffding_tail(2, 10, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn hoeffding_dominates_empirical_tail() {
        // p = (0.7, 0.3), n = 50: sample 100k sequences and compare the
        // frequency of large deviations of -log p(X^n) with the bound.
        let mut rng = crate::seeded_rng(33, 0);
        let n = 50u32;
        let p = [0.7f64, 0.3];
        let h = shannon(&p);
        let delta = 0.1f64;
        let mut lower_hits = 0u64;
        let mut upper_hits = 0u64;
        let trials = 100_000u64;
        for _ in 0..trials {
            let mut log_p = 0.0f64;
            for _ in 0..n {
                let x = if rng.random::<f64>() < p[0] { 0 } else { 1 };
                log_p += p[x].log2();
            }
            let neg = -log_p;
            if neg <= f64::from(n) * h - f64::from(n) * delta {
                lower_hits += 1;
            }
            if neg >= f64::from(n) * h + f64::from(n) * delta {
                upper_hits += 1;
            }
        }
        let bound = hoeffding_tail(2, n, delta).unwrap();
        let freq_lower = lower_hits as f64 / trials as f64;
        let freq_upper = upper_hits as f64 / trials as f64;
        assert!(
            freq_lower <= bound,
            "lower tail {freq_lower} > bound {bound}"
        );
        assert!(
            freq_upper <= bound,
            "upper tail {freq_upper} > bound {bound}"
        );
    }
    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn q_is_p_masked_pointwise(
                raw in proptest::collection::vec(0.01f64..1.0, 8),
                n in 1u32..4,
                eps in 0.05f64..0.95,
                flat in 0usize..512,
            ) {
                let total: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
                let p = JointPmf::new(vec![2, 2], 2, probs).unwrap();
                let t = build_truncation(&p, n, eps).unwrap();
                // Decode a sequence of n single-copy symbols from `flat`.
                let mut seq = vec![0usize; n as usize];
                let mut rem = flat;
                for pos in (0..n as usize).rev() {
                    seq[pos] = rem % 8;
                    rem /= 8;
                }
                let q = t.q_at(&seq).unwrap();
                let p_seq: f64 = seq.iter().map(|&j| p.probs()[j]).product();
                // q is exactly p or exactly 0, never in between.
                prop_assert!(q == 0.0 || (q - p_seq).abs() < 1e-15);
                // q > 0 implies membership in every marginal mask.
                if q > 0.0 {
                    for mask in 0..4usize {
                        prop_assert!(t.in_a_s(mask, &seq).unwrap());
                    }
                }
                prop_assert!(t.v_distance() <= eps + 1e-12);
            }
        }
    }
}
