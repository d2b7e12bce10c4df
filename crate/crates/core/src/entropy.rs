//! Entropic functionals, exact for finite-dimensional states and in bits.
//!
//! Covers the von Neumann entropy and its conditional/mutual/coherent
//! derivatives, the min-entropy of a cq state relative to a reference state
//! (closed form: largest eigenvalue after symmetric scaling by the reference
//! pseudo-inverse square root), the collision entropy, and the rank-based
//! max-entropy.

use serde::Serialize;

use crate::linalg::{eig_cutoff, hermitian_eig, support_projector, ComplexMatrix};
use crate::qstate::{partial_trace_matrix, CqState, DensityOperator};
use crate::{Error, Result};

/// Shannon entropy of a (sub)normalized weight vector, in bits, with the
/// convention `0 log 0 = 0`.
pub fn shannon(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Entropy of the spectrum of a PSD matrix whose trace need not be 1;
/// eigenvalues below the cutoff are dropped.
fn spectrum_entropy(mat: &ComplexMatrix) -> Result<f64> {
    let eig = hermitian_eig(mat)?;
    let cut = eig_cutoff(mat.rows);
    Ok(shannon(
        &eig.values
            .iter()
            .copied()
            .filter(|&l| l > cut)
            .collect::<Vec<_>>(),
    ))
}

/// Von Neumann entropy `-Tr[rho log2 rho]` of a normalized state.
pub fn von_neumann(rho: &DensityOperator) -> Result<f64> {
    check_normalized(rho)?;
    let h = spectrum_entropy(rho.matrix())?;
    Ok(h.max(0.0))
}

fn subsystem_entropy(rho: &DensityOperator, dims: &[usize], keep: &[usize]) -> Result<f64> {
    if keep.len() == dims.len() {
        return spectrum_entropy(rho.matrix()).map(|h| h.max(0.0));
    }
    let reduced = partial_trace_matrix(rho.matrix(), dims, keep)?;
    spectrum_entropy(&reduced).map(|h| h.max(0.0))
}

fn check_normalized(rho: &DensityOperator) -> Result<()> {
    if (rho.trace() - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!(
            "state must be normalized, trace = {}",
            rho.trace()
        )));
    }
    Ok(())
}

fn check_disjoint(parts: &[&[usize]], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for part in parts {
        for &i in *part {
            if i >= n {
                return Err(Error::Usage(format!("subsystem index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Usage("overlapping subsystem partitions".into()));
            }
            seen[i] = true;
        }
    }
    Ok(())
}

fn sorted_union(parts: &[&[usize]]) -> Vec<usize> {
    let mut u: Vec<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    u.sort_unstable();
    u
}

/// `H(A|B) = H(AB) - H(B)` where `B` is the conditioning factor subset and
/// `A` is everything else in the state.
pub fn conditional_entropy(
    rho: &DensityOperator,
    dims: &[usize],
    cond_subset: &[usize],
) -> Result<f64> {
    check_normalized(rho)?;
    check_disjoint(&[cond_subset], dims.len())?;
    let all: Vec<usize> = (0..dims.len()).collect();
    let joint = subsystem_entropy(rho, dims, &all)?;
    let cond = subsystem_entropy(rho, dims, cond_subset)?;
    Ok(joint - cond)
}

/// `I(A;B) = H(A) + H(B) - H(AB)` for disjoint factor subsets.
pub fn mutual_information(
    rho: &DensityOperator,
    dims: &[usize],
    part_a: &[usize],
    part_b: &[usize],
) -> Result<f64> {
    check_normalized(rho)?;
    check_disjoint(&[part_a, part_b], dims.len())?;
    let ha = subsystem_entropy(rho, dims, part_a)?;
    let hb = subsystem_entropy(rho, dims, part_b)?;
    let hab = subsystem_entropy(rho, dims, &sorted_union(&[part_a, part_b]))?;
    Ok(ha + hb - hab)
}

/// `I(A;B|C) = H(AC) + H(BC) - H(ABC) - H(C)` for disjoint factor subsets.
pub fn conditional_mutual_information(
    rho: &DensityOperator,
    dims: &[usize],
    part_a: &[usize],
    part_b: &[usize],
    part_c: &[usize],
) -> Result<f64> {
    check_normalized(rho)?;
    check_disjoint(&[part_a, part_b, part_c], dims.len())?;
    let hac = subsystem_entropy(rho, dims, &sorted_union(&[part_a, part_c]))?;
    let hbc = subsystem_entropy(rho, dims, &sorted_union(&[part_b, part_c]))?;
    let habc = subsystem_entropy(rho, dims, &sorted_union(&[part_a, part_b, part_c]))?;
    let hc = subsystem_entropy(rho, dims, part_c)?;
    Ok(hac + hbc - habc - hc)
}

/// Coherent information `I(A>B) = H(B) - H(AB)`.
pub fn coherent_information(
    rho: &DensityOperator,
    dims: &[usize],
    part_a: &[usize],
    part_b: &[usize],
) -> Result<f64> {
    check_normalized(rho)?;
    check_disjoint(&[part_a, part_b], dims.len())?;
    let hb = subsystem_entropy(rho, dims, part_b)?;
    let hab = subsystem_entropy(rho, dims, &sorted_union(&[part_a, part_b]))?;
    Ok(hb - hab)
}

/// Max-entropy `log2 rank`, with the crate-wide eigenvalue cutoff deciding
/// the rank.
pub fn hmax(rho: &DensityOperator) -> f64 {
    (rho.rank() as f64).log2()
}

/// The fully mixed state on the support of `rho`, the default reference
/// state for the min-entropy and collision-entropy bounds.
pub fn fully_mixed_on_support(rho: &DensityOperator) -> Result<DensityOperator> {
    let proj = support_projector(rho.matrix())?;
    let rank = proj.trace().re.round();
    if rank < 0.5 {
        return Err(Error::Domain("state has empty support".into()));
    }
    DensityOperator::new(proj.scale_re(1.0 / rank))
}

fn check_support_and_scale(
    rho: &CqState,
    sigma: &DensityOperator,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if sigma.dim() != rho.qdim() {
        return Err(Error::Shape(format!(
            "reference state dim {} but cq quantum dim {}",
            sigma.dim(),
            rho.qdim()
        )));
    }
    if (sigma.trace() - 1.0).abs() > 1e-8 {
        return Err(Error::Domain("reference state must be normalized".into()));
    }
    let eig = hermitian_eig(sigma.matrix())?;
    let cut = eig_cutoff(sigma.dim());
    let null_proj = eig.apply_spectral(|l| if l > cut { 0.0 } else { 1.0 });
    for (x, &w) in rho.weights().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let leak = null_proj
            .matmul(rho.cond_states()[x].matrix())
            .matmul(&null_proj)
            .trace()
            .re
            * w;
        if leak > 1e-10 {
            return Err(Error::Support(format!(
                "conditional state {x} has weight {leak:.3e} outside the reference support"
            )));
        }
    }
    let inv_sqrt = eig.apply_spectral(|l| if l > cut { l.powf(-0.5) } else { 0.0 });
    let inv_quart = eig.apply_spectral(|l| if l > cut { l.powf(-0.25) } else { 0.0 });
    Ok((inv_sqrt, inv_quart))
}

/// Min-entropy of a cq state relative to `sigma`: the largest `lambda` with
/// `rho_XE <= 2^(-lambda) I_X (x) sigma`. For block-diagonal cq states this is
/// `-log2 max_x lambda_max(sigma^(-1/2) p(x) rho^x sigma^(-1/2))`.
pub fn hmin_cq(rho: &CqState, sigma: &DensityOperator) -> Result<f64> {
    let (inv_sqrt, _) = check_support_and_scale(rho, sigma)?;
    let mut worst = 0.0f64;
    for (x, &w) in rho.weights().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let scaled = inv_sqrt
            .matmul(&rho.cond_states()[x].matrix().scale_re(w))
            .matmul(&inv_sqrt);
        let eig = hermitian_eig(&scaled)?;
        worst = worst.max(*eig.values.last().unwrap());
    }
    if worst <= 0.0 {
        return Err(Error::Domain("cq state has no mass".into()));
    }
    Ok(-worst.log2())
}

/// Unconditional min-entropy `-log2 lambda_max` of the flattened cq state.
pub fn hmin_cq_unconditional(rho: &CqState) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, &w) in rho.weights().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let eig = hermitian_eig(&rho.cond_states()[x].matrix().scale_re(w))?;
        worst = worst.max(*eig.values.last().unwrap());
    }
    if worst <= 0.0 {
        return Err(Error::Domain("cq state has no mass".into()));
    }
    Ok(-worst.log2())
}

/// Collision entropy of a cq state relative to `sigma`:
/// `-log2( Tr[(rho_XE (I (x) sigma^(-1/2)))^2] / Tr[rho_XE] )`.
pub fn h2_collision(rho: &CqState, sigma: &DensityOperator) -> Result<f64> {
    let (_, inv_quart) = check_support_and_scale(rho, sigma)?;
    let mut num = 0.0f64;
    for (x, &w) in rho.weights().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let scaled = inv_quart
            .matmul(&rho.cond_states()[x].matrix().scale_re(w))
            .matmul(&inv_quart);
        num += scaled.matmul(&scaled).trace().re;
    }
    let den = rho.total_weight();
    if num <= 0.0 {
        return Err(Error::Domain("collision trace vanished".into()));
    }
    Ok(-(num / den).log2())
}

/// Block formula for entropies of cq states: `H = H(p) + sum_x p(x) H(rho^x)`.
/// With `states = None` only the classical part contributes.
pub fn cq_block_entropy(weights: &[f64], states: Option<&[DensityOperator]>) -> Result<f64> {
    let mut h = shannon(weights);
    if let Some(states) = states {
        for (x, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                h += w * spectrum_entropy(states[x].matrix())?;
            }
        }
    }
    Ok(h)
}

/// Conditional entropy `H(X|E)` of a cq state (classical given quantum).
pub fn cq_conditional_entropy(rho: &CqState) -> Result<f64> {
    let joint = cq_block_entropy(rho.weights(), Some(rho.cond_states()))?;
    let marginal = spectrum_entropy(rho.quantum_marginal()?.matrix())?;
    Ok(joint - marginal)
}

/// Named entropic quantity for structured reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    VonNeumann,
    Conditional,
    Mutual,
    ConditionalMutual,
    Coherent,
    HMin,
    HMax,
    H2,
}

/// One computed entropic quantity with its subsystem labels.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub quantity: Quantity,
    pub value: f64,
    pub subsystems: Vec<String>,
}

impl EntropyReport {
    pub fn new(quantity: Quantity, value: f64, subsystems: Vec<String>) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Domain("entropy value is not finite".into()));
        }
        if matches!(quantity, Quantity::VonNeumann | Quantity::HMax) && value < -1e-12 {
            return Err(Error::Domain(format!(
                "{quantity:?} must be nonnegative, got {value}"
            )));
        }
        Ok(Self {
            quantity,
            value,
            subsystems,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{random_cq, random_density, tensor, CqState};
    use num_complex::Complex64;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    const BINARY_ENTROPY_QUARTER: f64 = 0.811_278_124_459_132_8;

    fn bell() -> DensityOperator {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        DensityOperator::pure(&[h, z, z, h]).unwrap()
    }

    fn classical_copy() -> DensityOperator {
        // (|00><00| + |11><11|) / 2
        DensityOperator::from_classical(&[0.5, 0.0, 0.0, 0.5]).unwrap()
    }

    #[test]
    fn von_neumann_examples() {
        let mixed = DensityOperator::maximally_mixed(2).unwrap();
        assert!((von_neumann(&mixed).unwrap() - 1.0).abs() < 1e-12);

        let pure = DensityOperator::basis(4, 2).unwrap();
        assert!(von_neumann(&pure).unwrap().abs() < 1e-12);

        let biased = DensityOperator::from_classical(&[0.75, 0.25]).unwrap();
        assert!((von_neumann(&biased).unwrap() - BINARY_ENTROPY_QUARTER).abs() < 1e-12);

        let sub = DensityOperator::from_classical(&[0.5]).unwrap();
        assert!(matches!(von_neumann(&sub), Err(Error::Domain(_))));
    }

    #[test]
    fn conditional_entropy_examples() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 3);
        let prod = tensor(&a, &b).unwrap();
        let h_cond = conditional_entropy(&prod, &[2, 3], &[1]).unwrap();
        let h_a = von_neumann(&a).unwrap();
        assert!((h_cond - h_a).abs() < 1e-10);

        assert!((conditional_entropy(&bell(), &[2, 2], &[1]).unwrap() + 1.0).abs() < 1e-10);
        assert!(
            conditional_entropy(&classical_copy(), &[2, 2], &[1])
                .unwrap()
                .abs()
                < 1e-10
        );
    }

    #[test]
    fn mutual_information_examples() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 2);
        let prod = tensor(&a, &b).unwrap();
        assert!(
            mutual_information(&prod, &[2, 2], &[0], &[1])
                .unwrap()
                .abs()
                < 1e-10
        );

        assert!((mutual_information(&bell(), &[2, 2], &[0], &[1]).unwrap() - 2.0).abs() < 1e-10);
        assert!((coherent_information(&bell(), &[2, 2], &[0], &[1]).unwrap() - 1.0).abs() < 1e-10);
        assert!(
            (mutual_information(&classical_copy(), &[2, 2], &[0], &[1]).unwrap() - 1.0).abs()
                < 1e-10
        );
    }

    #[test]
    fn partitions_must_be_disjoint() {
        let rho = DensityOperator::maximally_mixed(4).unwrap();
        assert!(matches!(
            mutual_information(&rho, &[2, 2], &[0], &[0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn strong_subadditivity_on_random_tripartite_states() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let rho = random_density(&mut rng, 8);
            let cmi = conditional_mutual_information(&rho, &[2, 2, 2], &[0], &[1], &[2]).unwrap();
            assert!(cmi >= -1e-9, "SSA violated: {cmi}");
        }
    }

    /// Binary-search oracle for the min-entropy: the largest lambda such that
    /// `2^(-lambda) I (x) sigma - rho_XE` stays PSD, checked blockwise through
    /// the smallest eigenvalue.
    fn hmin_oracle(rho: &CqState, sigma: &DensityOperator) -> f64 {
        let feasible = |lam: f64| -> bool {
            let scale = 2.0f64.powf(-lam);
            rho.weights().iter().enumerate().all(|(x, &w)| {
                if w <= 0.0 {
                    return true;
                }
                let diff = sigma
                    .matrix()
                    .scale_re(scale)
                    .sub(&rho.cond_states()[x].matrix().scale_re(w));
                hermitian_eig(&diff).unwrap().values[0] >= -1e-12
            })
        };
        let (mut lo, mut hi) = (-64.0f64, 64.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn hmin_uniform_independent() {
        // Uniform bit independent of E, sigma = rho_E.
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let e = random_density(&mut rng, 2);
        let cq = CqState::new(vec![2], vec![0.5, 0.5], vec![e.clone(), e.clone()]).unwrap();
        let h = hmin_cq(&cq, &e).unwrap();
        assert!((h - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hmin_orthogonal_pointer_states() {
        let p0 = DensityOperator::basis(2, 0).unwrap();
        let p1 = DensityOperator::basis(2, 1).unwrap();
        let cq = CqState::new(vec![2], vec![0.5, 0.5], vec![p0, p1]).unwrap();
        let sigma = DensityOperator::maximally_mixed(2).unwrap();
        let h = hmin_cq(&cq, &sigma).unwrap();
        assert!(h.abs() < 1e-10);
        assert!((hmin_oracle(&cq, &sigma) - h).abs() < 1e-8);
    }

    #[test]
    fn hmin_matches_binary_search_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..25 {
            let cq = random_cq(&mut rng, &[2, 2], 2);
            let sigma = fully_mixed_on_support(&cq.quantum_marginal().unwrap()).unwrap();
            let h = hmin_cq(&cq, &sigma).unwrap();
            assert!((hmin_oracle(&cq, &sigma) - h).abs() < 1e-8);
        }
    }

    #[test]
    fn hmin_at_most_conditional_entropy() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..50 {
            let cq = random_cq(&mut rng, &[2], 3);
            let sigma = cq.quantum_marginal().unwrap();
            let h_min = hmin_cq(&cq, &sigma).unwrap();
            let h_cond = cq_conditional_entropy(&cq).unwrap();
            assert!(h_min <= h_cond + 1e-8, "hmin {h_min} > H(X|E) {h_cond}");
        }
    }

    #[test]
    fn hmin_support_violation_detected() {
        let p0 = DensityOperator::basis(2, 0).unwrap();
        let p1 = DensityOperator::basis(2, 1).unwrap();
        let cq = CqState::new(vec![2], vec![0.5, 0.5], vec![p0.clone(), p1]).unwrap();
        // Reference supported only on |0>.
        assert!(matches!(hmin_cq(&cq, &p0), Err(Error::Support(_))));
    }

    #[test]
    fn hmax_examples() {
        assert!(hmax(&DensityOperator::basis(4, 0).unwrap()).abs() < 1e-12);
        assert!((hmax(&DensityOperator::maximally_mixed(4).unwrap()) - 2.0).abs() < 1e-12);
        let rank2 = DensityOperator::from_classical(&[0.5, 0.5, 0.0]).unwrap();
        assert!((hmax(&rank2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn h2_examples() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let e = random_density(&mut rng, 2);
        let uniform = CqState::new(vec![2], vec![0.5, 0.5], vec![e.clone(), e.clone()]).unwrap();
        assert!((h2_collision(&uniform, &e).unwrap() - 1.0).abs() < 1e-10);

        let p0 = DensityOperator::basis(2, 0).unwrap();
        let p1 = DensityOperator::basis(2, 1).unwrap();
        let pointer = CqState::new(vec![2], vec![0.5, 0.5], vec![p0, p1]).unwrap();
        let sigma = DensityOperator::maximally_mixed(2).unwrap();
        assert!(h2_collision(&pointer, &sigma).unwrap().abs() < 1e-10);
    }

    #[test]
    fn h2_dominates_hmin_on_random_cq_states() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for i in 0..200 {
            let qdim = 1 + (i % 3);
            let cq = random_cq(&mut rng, &[2, 2], qdim);
            let sigma = fully_mixed_on_support(&cq.quantum_marginal().unwrap()).unwrap();
            let h2 = h2_collision(&cq, &sigma).unwrap();
            let hm = hmin_cq(&cq, &sigma).unwrap();
            assert!(h2 >= hm - 1e-8, "H2 {h2} < Hmin {hm}");
        }
    }

    #[test]
    fn hmin_chain_rule_with_fully_mixed_reference() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for i in 0..100 {
            let qdim = 2 + (i % 2);
            let cq = random_cq(&mut rng, &[2], qdim);
            let marginal = cq.quantum_marginal().unwrap();
            let sigma = fully_mixed_on_support(&marginal).unwrap();
            let lhs = hmin_cq_unconditional(&cq).unwrap();
            let rhs = hmin_cq(&cq, &sigma).unwrap() + hmax(&marginal);
            assert!((lhs - rhs).abs() < 1e-8, "chain rule broke: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn commuting_cq_matches_shannon_conditional_entropy() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..30 {
            // Diagonal conditional states commute; H(X|E) must be classical.
            let px = crate::qstate::random_pmf(&mut rng, 2);
            let cond_p: Vec<Vec<f64>> = (0..2)
                .map(|_| crate::qstate::random_pmf(&mut rng, 3))
                .collect();
            let states: Vec<DensityOperator> = cond_p
                .iter()
                .map(|p| DensityOperator::from_classical(p).unwrap())
                .collect();
            let cq = CqState::new(vec![2], px.clone(), states).unwrap();
            let quantum = cq_conditional_entropy(&cq).unwrap();
            // Classical H(X|E) from the joint pmf.
            let mut joint = vec![0.0f64; 6];
            for x in 0..2 {
                for e in 0..3 {
                    joint[x * 3 + e] = px[x] * cond_p[x][e];
                }
            }
            let mut pe = vec![0.0f64; 3];
            for x in 0..2 {
                for e in 0..3 {
                    pe[e] += joint[x * 3 + e];
                }
            }
            let classical = shannon(&joint) - shannon(&pe);
            assert!((quantum - classical).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_report_validation() {
        assert!(EntropyReport::new(Quantity::VonNeumann, -0.5, vec![]).is_err());
        assert!(EntropyReport::new(Quantity::Conditional, -0.5, vec![]).is_ok());
        assert!(EntropyReport::new(Quantity::H2, f64::NAN, vec![]).is_err());
    }
}
