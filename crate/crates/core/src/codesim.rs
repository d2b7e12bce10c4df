//! Toy-scale end-to-end coding simulation for cq multiple-access wiretap
//! channels: stochastic hash-inversion encoders feed a source-coding-derived
//! code whose messages index one bin preimage per user; the receiver decodes
//! with a pretty-good measurement over all joint message candidates, and the
//! report carries exact per-message error and leakage plus an expurgation
//! pass.
//!
//! Everything is exact: encoder outputs are averaged states (conditional
//! tables, no sampling), errors are `Tr[(I - PGM_m) omega_B^m]`, leakage is
//! the trace distance of Eve's per-message state from the message-averaged
//! one. Blocklengths stay small enough that the full joint state assembly
//! fits the dimension caps.

use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::hashing::{HashFamily, HashKind, HashMember};
use crate::linalg::{psd_power, trace_norm, ComplexMatrix};
use crate::qstate::{compose_index, decompose_index, partial_trace, CqState, DensityOperator};
use crate::{Error, Result};

/// Exact-mode cap on `(prod |X_l|)^n * d_B^n` for state assembly.
const MAX_STATE_ASSEMBLY: u64 = 1 << 16;
/// Cap on the POVM dimension.
const MAX_POVM_DIM: usize = 1 << 12;

/// A classical-quantum multiple-access wiretap channel: each joint input
/// symbol maps to a normalized state on `B (x) E`.
#[derive(Debug, Clone)]
pub struct CqMacWiretapChannel {
    x_sizes: Vec<usize>,
    d_b: usize,
    d_e: usize,
    states: Vec<DensityOperator>,
}

impl CqMacWiretapChannel {
    pub fn new(
        x_sizes: Vec<usize>,
        d_b: usize,
        d_e: usize,
        states: Vec<DensityOperator>,
    ) -> Result<Self> {
        let joint: usize = x_sizes.iter().product();
        if states.len() != joint {
            return Err(Error::Shape(format!(
                "need {joint} output states, got {}",
                states.len()
            )));
        }
        for (x, s) in states.iter().enumerate() {
            if s.dim() != d_b * d_e {
                return Err(Error::Shape(format!(
                    "state {x} has dim {} but B x E = {}",
                    s.dim(),
                    d_b * d_e
                )));
            }
            if (s.trace() - 1.0).abs() > 1e-8 {
                return Err(Error::Domain(format!("output state {x} is not trace 1")));
            }
        }
        Ok(Self {
            x_sizes,
            d_b,
            d_e,
            states,
        })
    }

    pub fn num_users(&self) -> usize {
        self.x_sizes.len()
    }

    pub fn x_sizes(&self) -> &[usize] {
        &self.x_sizes
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d_b, self.d_e)
    }

    pub fn bob_state(&self, x: usize) -> Result<DensityOperator> {
        partial_trace(&self.states[x], &[self.d_b, self.d_e], &[0])
    }

    pub fn eve_state(&self, x: usize) -> Result<DensityOperator> {
        partial_trace(&self.states[x], &[self.d_b, self.d_e], &[1])
    }

    /// The cq state of `(X_L; B E)` at a product input, for region
    /// computations on the same channel.
    pub fn cq_state(&self, pmfs: &[Vec<f64>]) -> Result<CqState> {
        if pmfs.len() != self.num_users()
            || pmfs.iter().zip(&self.x_sizes).any(|(p, &s)| p.len() != s)
        {
            return Err(Error::Shape("pmf shapes do not match alphabets".into()));
        }
        let states = self.states.clone();
        CqState::from_product(pmfs, |digits| {
            Ok(states[compose_index(digits, &self.x_sizes)].clone())
        })
    }

    /// Wiretap channel whose Bob output is the classical input and whose Eve
    /// output is the pure state `etas[x]`; degradable by construction.
    pub fn degraded_eve(x_sizes: Vec<usize>, etas: &[Vec<Complex64>]) -> Result<Self> {
        let joint: usize = x_sizes.iter().product();
        if etas.len() != joint {
            return Err(Error::Shape("one Eve state per joint symbol".into()));
        }
        let d_e = etas[0].len();
        let mut states = Vec::with_capacity(joint);
        for (x, eta) in etas.iter().enumerate() {
            let bob = DensityOperator::basis(joint, x)?;
            let eve = DensityOperator::pure(eta)?;
            states.push(crate::qstate::tensor(&bob, &eve)?);
        }
        Self::new(x_sizes, joint, d_e, states)
    }

    /// Noiseless-to-Bob channel with a trivial (dimension-1) Eve.
    pub fn noiseless_trivial_eve(x_sizes: Vec<usize>) -> Result<Self> {
        let joint: usize = x_sizes.iter().product();
        let one = vec![Complex64::new(1.0, 0.0)];
        let etas = vec![one; joint];
        Self::degraded_eve(x_sizes, &etas)
    }

    /// Bob sees nothing; Eve receives the classical input.
    pub fn trivial_bob(x_sizes: Vec<usize>) -> Result<Self> {
        let joint: usize = x_sizes.iter().product();
        let mut states = Vec::with_capacity(joint);
        for x in 0..joint {
            let bob = DensityOperator::trivial();
            let eve = DensityOperator::basis(joint, x)?;
            states.push(crate::qstate::tensor(&bob, &eve)?);
        }
        Self::new(x_sizes, 1, joint, states)
    }
}

/// Exact stochastic inversion of one hash member: conditional distributions
/// `p(x^n | f(x^n) = a)` over length-n symbol strings per output value.
#[derive(Debug, Clone)]
pub struct InversionChannel {
    pub output_bits: u32,
    /// Conditional pmf over `|X|^n` strings, one per hash output `a`.
    tables: Vec<Vec<f64>>,
    /// Outputs whose hash preimage carries zero mass.
    pub empty_outputs: Vec<usize>,
}

/// Build the exact conditional tables for `p_{X^n | F(X^n) = a}` from a
/// per-symbol pmf (iid over positions) and a hash member on `n log2|X|` bits.
pub fn build_inversion_channel(p: &[f64], member: &HashMember, n: u32) -> Result<InversionChannel> {
    let alphabet = p.len();
    if !alphabet.is_power_of_two() || alphabet < 2 {
        return Err(Error::Usage(
            "inversion needs a power-of-two alphabet (pad with zero-probability symbols)".into(),
        ));
    }
    let bits_per_symbol = alphabet.trailing_zeros();
    if member.family.input_bits != n * bits_per_symbol {
        return Err(Error::Shape(format!(
            "hash input bits {} but n log2|X| = {}",
            member.family.input_bits,
            n * bits_per_symbol
        )));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-10 || p.iter().any(|&x| x < 0.0) {
        return Err(Error::Domain("per-symbol pmf must sum to 1".into()));
    }
    let domain = alphabet.pow(n);
    if domain > (1 << 16) {
        return Err(Error::Capacity(format!(
            "inversion domain {domain} exceeds 2^16"
        )));
    }
    let r = member.family.output_bits;
    let mut tables = vec![vec![0.0f64; domain]; 1 << r];
    let sizes = vec![alphabet; n as usize];
    let mut digits = vec![0usize; n as usize];
    for x in 0..domain {
        decompose_index(x, &sizes, &mut digits);
        let prob: f64 = digits.iter().map(|&d| p[d]).product();
        if prob > 0.0 {
            tables[member.eval(x)][x] += prob;
        }
    }
    // Outputs with an empty (or zero-mass) preimage are flagged and fall
    // back to the unconditional product distribution; the uniform-output
    // mismatch they cause shows up in the measured leakage, not as a crash.
    let mut empty_outputs = Vec::new();
    let unconditional: Vec<f64> = (0..domain)
        .map(|x| {
            decompose_index(x, &sizes, &mut digits);
            digits.iter().map(|&d| p[d]).product()
        })
        .collect();
    for (a, table) in tables.iter_mut().enumerate() {
        let mass: f64 = table.iter().sum();
        if mass <= 0.0 {
            empty_outputs.push(a);
            table.copy_from_slice(&unconditional);
        } else {
            for v in table.iter_mut() {
                *v /= mass;
            }
        }
    }
    Ok(InversionChannel {
        output_bits: r,
        tables,
        empty_outputs,
    })
}

impl InversionChannel {
    /// Conditional pmf over strings given the hash output `a`.
    pub fn conditional(&self, a: usize) -> &[f64] {
        &self.tables[a]
    }
}

/// A positive operator-valued measure; the last element may be the support
/// complement completing the sum to the identity.
#[derive(Debug, Clone)]
pub struct Povm {
    pub elements: Vec<ComplexMatrix>,
    /// Index of the completion element, if one was appended.
    pub complement: Option<usize>,
}

impl Povm {
    /// Largest deviation of `sum_i Pi_i` from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.elements[0].rows;
        let mut acc = ComplexMatrix::zeros(d, d);
        for e in &self.elements {
            acc = acc.add(e);
        }
        acc.sub(&ComplexMatrix::identity(d)).max_abs()
    }
}

/// Pretty-good measurement for a weighted state ensemble:
/// `Pi_i = S^(-1/2) w_i rho_i S^(-1/2)` with `S = sum w_i rho_i`, completed
/// by the support complement.
pub fn pgm_decoder(states: &[(f64, DensityOperator)]) -> Result<Povm> {
    if states.is_empty() {
        return Err(Error::Usage("PGM needs at least one state".into()));
    }
    let d = states[0].1.dim();
    if d > MAX_POVM_DIM {
        return Err(Error::Capacity(format!("POVM dimension {d} exceeds cap")));
    }
    let mut s = ComplexMatrix::zeros(d, d);
    for (w, rho) in states {
        if *w < 0.0 {
            return Err(Error::Domain("negative ensemble weight".into()));
        }
        if rho.dim() != d {
            return Err(Error::Shape("ensemble states differ in dimension".into()));
        }
        s = s.add(&rho.matrix().scale_re(*w));
    }
    let inv_sqrt = psd_power(&s, -0.5)?;
    let mut elements: Vec<ComplexMatrix> = states
        .iter()
        .map(|(w, rho)| {
            inv_sqrt
                .matmul(&rho.matrix().scale_re(*w))
                .matmul(&inv_sqrt)
        })
        .collect();
    let mut acc = ComplexMatrix::zeros(d, d);
    for e in &elements {
        acc = acc.add(e);
    }
    let complement_mat = ComplexMatrix::identity(d).sub(&acc);
    let complement = if complement_mat.max_abs() > 1e-12 {
        elements.push(complement_mat);
        Some(elements.len() - 1)
    } else {
        None
    };
    Ok(Povm {
        elements,
        complement,
    })
}

/// The combined code skeleton extracted from per-user bin maps: the chosen
/// joint bin, per-user bijective encoders onto its preimages, and message
/// sizes.
#[derive(Debug, Clone)]
pub struct MacCode {
    /// Chosen bin value per user.
    pub chosen_bins: Vec<usize>,
    /// Encoder tables: message index -> hash-output value, one per user.
    pub encoders: Vec<Vec<usize>>,
    /// Fraction of joint bins that met the preimage-size threshold.
    pub qualifying_fraction: f64,
}

impl MacCode {
    pub fn message_sizes(&self) -> Vec<usize> {
        self.encoders.iter().map(|e| e.len()).collect()
    }
}

/// Select a joint bin per user whose preimages are large enough
/// (`|g^-1(c)| >= eps |U| / |C|`), then build bijective encoders onto the
/// preimages. An optional scorer picks among qualifying bins (smaller is
/// better); ties break deterministically on the bin index.
pub fn extract_mac_code(
    bins: &[HashMember],
    epsilon: f64,
    mut score: Option<&mut dyn FnMut(&[usize]) -> f64>,
) -> Result<MacCode> {
    if !(0.0..1.0).contains(&epsilon) || epsilon <= 0.0 {
        return Err(Error::Domain("epsilon must lie in (0, 1)".into()));
    }
    let l = bins.len();
    // Per-user preimage lists.
    let mut preimages: Vec<Vec<Vec<usize>>> = Vec::with_capacity(l);
    for member in bins {
        let domain = 1usize << member.family.input_bits;
        let n_bins = 1usize << member.family.output_bits;
        let mut lists = vec![Vec::new(); n_bins];
        for u in 0..domain {
            lists[member.eval(u)].push(u);
        }
        preimages.push(lists);
    }
    let thresholds: Vec<f64> = bins
        .iter()
        .map(|m| epsilon * 2f64.powi(m.family.input_bits as i32 - m.family.output_bits as i32))
        .collect();
    let bin_counts: Vec<usize> = bins
        .iter()
        .map(|m| 1usize << m.family.output_bits)
        .collect();
    let total_bins: usize = bin_counts.iter().product();
    let mut qualifying = Vec::new();
    let mut digits = vec![0usize; l];
    for joint in 0..total_bins {
        decompose_index(joint, &bin_counts, &mut digits);
        let ok = (0..l).all(|u| preimages[u][digits[u]].len() as f64 >= thresholds[u] - 1e-12);
        if ok {
            qualifying.push(digits.clone());
        }
    }
    let fraction = qualifying.len() as f64 / total_bins as f64;
    if qualifying.is_empty() {
        return Err(Error::Construction(
            "no joint bin meets the preimage-size threshold".into(),
        ));
    }
    let chosen = match score.as_mut() {
        Some(f) => {
            let mut best = 0usize;
            let mut best_score = f64::INFINITY;
            for (i, cand) in qualifying.iter().enumerate() {
                let s = f(cand);
                if s < best_score - 1e-15 {
                    best_score = s;
                    best = i;
                }
            }
            qualifying[best].clone()
        }
        None => {
            // Deterministic default: maximize the smallest preimage.
            let mut best = 0usize;
            let mut best_key = (0usize, usize::MAX);
            for (i, cand) in qualifying.iter().enumerate() {
                let min_size = (0..l)
                    .map(|u| preimages[u][cand[u]].len())
                    .min()
                    .unwrap_or(0);
                let key = (min_size, usize::MAX - i);
                if key > best_key {
                    best_key = key;
                    best = i;
                }
            }
            qualifying[best].clone()
        }
    };
    let encoders: Vec<Vec<usize>> = (0..l).map(|u| preimages[u][chosen[u]].clone()).collect();
    Ok(MacCode {
        chosen_bins: chosen,
        encoders,
        qualifying_fraction: fraction,
    })
}

/// Retain messages whose error and leakage stay below `1/alpha` times the
/// respective averages; by Markov at least a `1 - 2 alpha` fraction survives.
pub fn expurgate(metrics: &[(f64, f64)], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("alpha must lie in (0, 1)".into()));
    }
    let m = metrics.len() as f64;
    let avg_err: f64 = metrics.iter().map(|&(e, _)| e).sum::<f64>() / m;
    let avg_leak: f64 = metrics.iter().map(|&(_, s)| s).sum::<f64>() / m;
    let retained: Vec<usize> = metrics
        .iter()
        .enumerate()
        .filter(|(_, &(e, s))| e <= avg_err / alpha + 1e-15 && s <= avg_leak / alpha + 1e-15)
        .map(|(i, _)| i)
        .collect();
    debug_assert!(retained.len() as f64 >= (1.0 - 2.0 * alpha) * m - 1e-9);
    Ok(retained)
}

/// Per-user rate selection for the simulation: hash output bits (total over
/// the block) and source-code bin bits.
#[derive(Debug, Clone, Serialize)]
pub struct SimRates {
    pub hash_bits: Vec<u32>,
    pub bin_bits: Vec<u32>,
}

/// Simulation knobs.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub n: u32,
    pub rates: SimRates,
    pub seed: u64,
    /// Expurgation parameter.
    pub alpha: f64,
    /// Preimage-size threshold parameter for bin selection.
    pub bin_epsilon: f64,
}

/// Per-message metrics.
#[derive(Debug, Clone, Serialize)]
pub struct MessageMetric {
    pub id: usize,
    pub error: f64,
    pub leakage: f64,
    pub retained: bool,
}

/// Full simulation report.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub n: u32,
    pub seed: u64,
    pub message_sizes: Vec<usize>,
    /// Achieved per-user message rates `log2 |M_l| / n` in bits per channel use.
    pub rates_achieved: Vec<f64>,
    /// Single-copy source-coding floor `H(X_S | B X_Sc)` per subset bitmask:
    /// the bin rates a reliable scheme needs asymptotically.
    pub source_rate_floor: Vec<f64>,
    /// Single-copy hash ceiling `H(X_S | E)` per subset bitmask: the total
    /// hash rates the privacy analysis allows asymptotically. At toy
    /// blocklengths the gap between these bounds and the measured metrics is
    /// reported, not claimed.
    pub hash_rate_ceiling: Vec<f64>,
    pub message_count: usize,
    pub max_error: f64,
    pub avg_error: f64,
    pub max_leakage: f64,
    pub avg_leakage: f64,
    pub retained_fraction: f64,
    pub post_expurgation_max_error: f64,
    pub post_expurgation_max_leakage: f64,
    pub qualifying_fraction: f64,
    pub empty_hash_outputs: usize,
    pub povm_defect: f64,
    pub per_message: Vec<MessageMetric>,
}

impl SimReport {
    fn validate(&self) -> Result<()> {
        let probs_ok = self
            .per_message
            .iter()
            .all(|m| (-1e-9..=1.0 + 1e-9).contains(&m.error));
        let leak_ok = self
            .per_message
            .iter()
            .all(|m| (-1e-9..=2.0 + 1e-9).contains(&m.leakage));
        if !probs_ok || !leak_ok {
            return Err(Error::Domain("metrics left their valid ranges".into()));
        }
        Ok(())
    }
}

/// Kronecker product of per-position states selected by a symbol string.
fn string_state(
    states: &[DensityOperator],
    sizes: &[usize],
    string_digits: &[usize],
) -> ComplexMatrix {
    let mut acc = ComplexMatrix::identity(1);
    for &d in string_digits {
        acc = acc.kron(states[d].matrix());
    }
    let _ = sizes;
    acc
}

/// Run the full coding simulation: seeded hash members and bin maps, exact
/// inversion tables, exact per-message output states, PGM decoding, leakage
/// against the message-averaged Eve state, and an expurgation pass.
pub fn simulate(ch: &CqMacWiretapChannel, pmfs: &[Vec<f64>], cfg: &SimConfig) -> Result<SimReport> {
    let l = ch.num_users();
    if pmfs.len() != l || cfg.rates.hash_bits.len() != l || cfg.rates.bin_bits.len() != l {
        return Err(Error::Usage("per-user pmfs and rates required".into()));
    }
    let n = cfg.n;
    let joint_strings: u64 = ch.x_sizes.iter().map(|&s| (s as u64).pow(n)).product();
    let d_b_n = (ch.d_b as u64).pow(n);
    let d_e_n = (ch.d_e as u64).pow(n);
    if joint_strings.saturating_mul(d_b_n) > MAX_STATE_ASSEMBLY {
        return Err(Error::Capacity(format!(
            "state assembly {joint_strings} x {d_b_n} exceeds 2^16"
        )));
    }

    // Step 1: seeded hash members and exact inversion channels.
    let mut members = Vec::with_capacity(l);
    let mut inversions = Vec::with_capacity(l);
    for u in 0..l {
        let bits_per_symbol = ch.x_sizes[u].trailing_zeros();
        let family = HashFamily::new(
            HashKind::Toeplitz,
            n * bits_per_symbol,
            cfg.rates.hash_bits[u],
        )?;
        let member = family.sample(crate::seeded_rng(cfg.seed, u as u64).next_u64());
        let inv = build_inversion_channel(&pmfs[u], &member, n)?;
        members.push(member);
        inversions.push(inv);
    }
    let empty_hash_outputs: usize = inversions.iter().map(|i| i.empty_outputs.len()).sum();

    // Per-user single-copy Bob/Eve output state caches.
    let joint_x: usize = ch.x_sizes.iter().product();
    let bob_single: Vec<DensityOperator> = (0..joint_x)
        .map(|x| ch.bob_state(x))
        .collect::<Result<_>>()?;
    let eve_single: Vec<DensityOperator> = (0..joint_x)
        .map(|x| ch.eve_state(x))
        .collect::<Result<_>>()?;

    // Output states per joint hash value u_L: averages over the product of
    // per-user conditional string distributions.
    let u_sizes: Vec<usize> = cfg.rates.hash_bits.iter().map(|&r| 1usize << r).collect();
    let joint_u: usize = u_sizes.iter().product();
    let string_sizes: Vec<usize> = ch.x_sizes.iter().map(|&s| s.pow(n)).collect();
    let db_pow = d_b_n as usize;
    let de_pow = d_e_n as usize;

    let per_u: Vec<(ComplexMatrix, ComplexMatrix, f64)> = (0..joint_u)
        .into_par_iter()
        .map(|u_flat| {
            let mut u_digits = vec![0usize; l];
            decompose_index(u_flat, &u_sizes, &mut u_digits);
            let mut bob = ComplexMatrix::zeros(db_pow, db_pow);
            let mut eve = ComplexMatrix::zeros(de_pow, de_pow);
            let mut mass = 0.0f64;
            // Product over users of conditional string pmfs.
            let mut string_digits = vec![0usize; l];
            let total_strings: usize = string_sizes.iter().product();
            let mut per_user_digits = vec![vec![0usize; n as usize]; l];
            for flat in 0..total_strings {
                decompose_index(flat, &string_sizes, &mut string_digits);
                let mut w = 1.0f64;
                for u in 0..l {
                    w *= inversions[u].conditional(u_digits[u])[string_digits[u]];
                    if w == 0.0 {
                        break;
                    }
                }
                if w == 0.0 {
                    continue;
                }
                // Joint per-position symbols.
                for u in 0..l {
                    decompose_index(
                        string_digits[u],
                        &vec![ch.x_sizes[u]; n as usize],
                        &mut per_user_digits[u],
                    );
                }
                let joint_digits: Vec<usize> = (0..n as usize)
                    .map(|pos| {
                        let per_pos: Vec<usize> = (0..l).map(|u| per_user_digits[u][pos]).collect();
                        compose_index(&per_pos, &ch.x_sizes)
                    })
                    .collect();
                bob = bob.add(&string_state(&bob_single, &ch.x_sizes, &joint_digits).scale_re(w));
                eve = eve.add(&string_state(&eve_single, &ch.x_sizes, &joint_digits).scale_re(w));
                mass += w;
            }
            (bob, eve, mass)
        })
        .collect();

    // Step 2: seeded linear bin maps and the extracted code.
    let mut bin_members = Vec::with_capacity(l);
    for u in 0..l {
        let family = HashFamily::new(
            HashKind::LinearFull,
            cfg.rates.hash_bits[u],
            cfg.rates.bin_bits[u],
        )?;
        bin_members.push(family.sample(crate::seeded_rng(cfg.seed, 100 + u as u64).next_u64()));
    }
    // Score candidate joint bins by average PGM error over their messages.
    let bin_counts: Vec<usize> = cfg.rates.bin_bits.iter().map(|&b| 1usize << b).collect();
    let preimage_of = |member: &HashMember, c: usize| -> Vec<usize> {
        (0..1usize << member.family.input_bits)
            .filter(|&u| member.eval(u) == c)
            .collect()
    };
    let mut scorer = |cand: &[usize]| -> f64 {
        let lists: Vec<Vec<usize>> = (0..l)
            .map(|u| preimage_of(&bin_members[u], cand[u]))
            .collect();
        let msg_sizes: Vec<usize> = lists.iter().map(|p| p.len()).collect();
        let count: usize = msg_sizes.iter().product();
        let mut states = Vec::with_capacity(count);
        let mut digits = vec![0usize; l];
        for m in 0..count {
            decompose_index(m, &msg_sizes, &mut digits);
            let u_digits: Vec<usize> = (0..l).map(|u| lists[u][digits[u]]).collect();
            let u_flat = compose_index(&u_digits, &u_sizes);
            match DensityOperator::new(per_u[u_flat].0.clone()) {
                Ok(s) => states.push((1.0 / count as f64, s)),
                Err(_) => return f64::INFINITY,
            }
        }
        match pgm_decoder(&states) {
            Ok(povm) => {
                let mut err = 0.0f64;
                for (i, (w, rho)) in states.iter().enumerate() {
                    err += w
                        * (1.0
                            - povm.elements[i]
                                .matmul(rho.matrix())
                                .trace()
                                .re
                                .clamp(0.0, 1.0));
                }
                err
            }
            Err(_) => f64::INFINITY,
        }
    };
    let code = extract_mac_code(&bin_members, cfg.bin_epsilon, Some(&mut scorer))?;
    let _ = bin_counts;

    // Step 3: per-message states, PGM decode, leakage, expurgation.
    let msg_sizes = code.message_sizes();
    let message_count: usize = msg_sizes.iter().product();
    let mut msg_states = Vec::with_capacity(message_count);
    let mut eve_states = Vec::with_capacity(message_count);
    let mut digits = vec![0usize; l];
    for m in 0..message_count {
        decompose_index(m, &msg_sizes, &mut digits);
        let u_digits: Vec<usize> = (0..l).map(|u| code.encoders[u][digits[u]]).collect();
        let u_flat = compose_index(&u_digits, &u_sizes);
        msg_states.push((
            1.0 / message_count as f64,
            DensityOperator::new(per_u[u_flat].0.clone())?,
        ));
        eve_states.push(per_u[u_flat].1.clone());
    }
    let povm = pgm_decoder(&msg_states)?;
    let povm_defect = povm.completeness_defect();

    let mut avg_eve = ComplexMatrix::zeros(de_pow, de_pow);
    for e in &eve_states {
        avg_eve = avg_eve.add(&e.scale_re(1.0 / message_count as f64));
    }
    let metrics: Vec<(f64, f64)> = (0..message_count)
        .into_par_iter()
        .map(|m| {
            let success = povm.elements[m]
                .matmul(msg_states[m].1.matrix())
                .trace()
                .re
                .clamp(0.0, 1.0);
            let leak = trace_norm(&eve_states[m].sub(&avg_eve)).expect("Hermitian difference");
            (1.0 - success, leak)
        })
        .collect();

    let retained = expurgate(&metrics, cfg.alpha)?;
    let retained_set: std::collections::HashSet<usize> = retained.iter().copied().collect();
    let per_message: Vec<MessageMetric> = metrics
        .iter()
        .enumerate()
        .map(|(id, &(error, leakage))| MessageMetric {
            id,
            error,
            leakage,
            retained: retained_set.contains(&id),
        })
        .collect();
    let fold_max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    let max_error = fold_max(&mut metrics.iter().map(|&(e, _)| e));
    let max_leakage = fold_max(&mut metrics.iter().map(|&(_, s)| s));
    let avg_error = metrics.iter().map(|&(e, _)| e).sum::<f64>() / message_count as f64;
    let avg_leakage = metrics.iter().map(|&(_, s)| s).sum::<f64>() / message_count as f64;
    let post_expurgation_max_error = fold_max(&mut retained.iter().map(|&i| metrics[i].0));
    let post_expurgation_max_leakage = fold_max(&mut retained.iter().map(|&i| metrics[i].1));

    let rates_achieved: Vec<f64> = msg_sizes
        .iter()
        .map(|&m| (m as f64).log2() / f64::from(n))
        .collect();
    // Single-copy entropic bounds of the rate system, for the report only.
    let (source_rate_floor, hash_rate_ceiling) = {
        let cq = ch.cq_state(pmfs)?;
        let w = crate::regions::WiretapCq::new(cq, ch.d_b, ch.d_e)?;
        let bounds = crate::regions::region_bounds(&w)?;
        let floors: Vec<f64> = bounds.g.values().iter().map(|&g| -g + 0.0).collect();
        (floors, bounds.h.values().to_vec())
    };
    let report = SimReport {
        n,
        seed: cfg.seed,
        message_sizes: msg_sizes,
        rates_achieved,
        source_rate_floor,
        hash_rate_ceiling,
        message_count,
        max_error,
        avg_error,
        max_leakage,
        avg_leakage,
        retained_fraction: retained.len() as f64 / message_count as f64,
        post_expurgation_max_error,
        post_expurgation_max_leakage,
        qualifying_fraction: code.qualifying_fraction,
        empty_hash_outputs,
        povm_defect,
        per_message,
    };
    report.validate()?;
    Ok(report)
}
