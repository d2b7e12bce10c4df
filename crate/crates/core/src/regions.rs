//! Set functions on subsets of transmitters, submodularity and polymatroid
//! machinery, and the achievable rate region of a cq multiple-access wiretap
//! channel at a fixed product input: per subset `S`,
//! `R_S <= [I(X_S;B|X_{S^c}) - I(X_S;E)]^+`.
//!
//! Everything is exhaustive over the `2^L` subsets (`L <= 8`), which is the
//! point at desk scale.

use serde::Serialize;

use crate::entropy::cq_block_entropy;
use crate::qstate::{partial_trace, CqState};
use crate::{Error, Result};

/// Hard cap on the number of users (tables are `2^L`, corner enumeration
/// is `L!`).
pub const MAX_USERS: usize = 8;

/// Absolute tolerance on rate values for membership and equality checks.
pub const RATE_TOL: f64 = 1e-9;

/// A real-valued function on all subsets of the user set, indexed by bitmask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetFunction {
    l: usize,
    values: Vec<f64>,
}

impl SetFunction {
    pub fn new(l: usize, values: Vec<f64>) -> Result<Self> {
        if l == 0 || l > MAX_USERS {
            return Err(Error::Capacity(format!(
                "user count {l} outside 1..={MAX_USERS}"
            )));
        }
        if values.len() != 1 << l {
            return Err(Error::Shape(format!(
                "need {} subset values, got {}",
                1 << l,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("set function value not finite".into()));
        }
        Ok(Self { l, values })
    }

    pub fn num_users(&self) -> usize {
        self.l
    }

    pub fn full_mask(&self) -> usize {
        (1 << self.l) - 1
    }

    pub fn value(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.values[0].abs() <= RATE_TOL
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= -RATE_TOL)
    }

    pub fn is_nondecreasing(&self) -> bool {
        // Adding one element at a time covers all inclusions.
        (0..self.values.len()).all(|mask| {
            (0..self.l).all(|i| {
                if mask >> i & 1 == 1 {
                    true
                } else {
                    self.values[mask] <= self.values[mask | (1 << i)] + RATE_TOL
                }
            })
        })
    }
}

/// Result of the exhaustive submodularity check.
#[derive(Debug, Clone, Serialize)]
pub struct SubmodularityCheck {
    pub ok: bool,
    /// The pair `(S, T)` with the largest violation, if any.
    pub worst_pair: Option<(usize, usize)>,
    /// `f(S u T) + f(S n T) - f(S) - f(T)` at the worst pair (positive means
    /// violated).
    pub worst_violation: f64,
}

/// Exhaustive check of `f(S u T) + f(S n T) <= f(S) + f(T)` over all pairs.
pub fn is_submodular(f: &SetFunction) -> SubmodularityCheck {
    let n = 1usize << f.l;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair = None;
    for s in 0..n {
        for t in s..n {
            let violation = f.values[s | t] + f.values[s & t] - f.values[s] - f.values[t];
            if violation > worst {
                worst = violation;
                worst_pair = Some((s, t));
            }
        }
    }
    SubmodularityCheck {
        ok: worst <= RATE_TOL,
        worst_pair: if worst > RATE_TOL { worst_pair } else { None },
        worst_violation: worst,
    }
}

/// Monotonization `f*(S) = min over supersets A of S of f(A)`.
///
/// Requires `f` normalized, nonnegative, and submodular; the result is
/// normalized, nondecreasing, submodular, and agrees with `f` on the full
/// set, which the function asserts.
pub fn monotonize(f: &SetFunction) -> Result<SetFunction> {
    if !f.is_normalized() {
        return Err(Error::Domain("monotonize needs f(empty) = 0".into()));
    }
    if !f.is_nonnegative() {
        return Err(Error::Domain(
            "monotonize needs a nonnegative function".into(),
        ));
    }
    if !is_submodular(f).ok {
        return Err(Error::Domain(
            "monotonize needs a submodular function".into(),
        ));
    }
    let n = 1usize << f.l;
    let full = n - 1;
    let mut values = vec![0.0f64; n];
    for (mask, slot) in values.iter_mut().enumerate() {
        let free = full & !mask;
        // Min over supersets = min over subsets of the complement added in.
        let mut best = f.values[mask | free]; // start from the full set
        let mut sub = free;
        loop {
            best = best.min(f.values[mask | sub]);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        *slot = best;
    }
    let out = SetFunction::new(f.l, values)?;
    debug_assert!(out.is_normalized() && out.is_nondecreasing() && is_submodular(&out).ok);
    debug_assert!((out.value(full) - f.value(full)).abs() <= RATE_TOL);
    Ok(out)
}

/// Does the system `-g(S) <= sum_{s in S} x_s <= f(S)` (for all subsets, with
/// `x >= 0`) admit a solution? For submodular `f` and `g` this reduces to
/// `-g(S) <= f(S)` for every subset.
pub fn feasible_sandwich(g: &SetFunction, f: &SetFunction) -> Result<bool> {
    if g.l != f.l {
        return Err(Error::Usage("set functions disagree on user count".into()));
    }
    if !is_submodular(f).ok || !is_submodular(g).ok {
        return Err(Error::Domain(
            "feasibility test needs submodular inputs".into(),
        ));
    }
    Ok((0..1usize << f.l).all(|s| -g.values[s] <= f.values[s] + RATE_TOL))
}

/// The rate region `{R >= 0 : R_S <= bounds(S)}`.
#[derive(Debug, Clone, Serialize)]
pub struct RateRegion {
    pub bounds: SetFunction,
}

impl RateRegion {
    pub fn new(bounds: SetFunction) -> Self {
        Self { bounds }
    }

    pub fn num_users(&self) -> usize {
        self.bounds.num_users()
    }

    /// Membership test with the crate rate tolerance.
    pub fn contains(&self, rates: &[f64]) -> bool {
        if rates.len() != self.num_users() {
            return false;
        }
        if rates.iter().any(|&r| r < -RATE_TOL) {
            return false;
        }
        (1..1usize << self.num_users()).all(|mask| {
            let sum: f64 = rates
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &r)| r)
                .sum();
            sum <= self.bounds.value(mask) + RATE_TOL
        })
    }

    /// Corner points of the dominant face: for each permutation `pi`, the
    /// greedy tuple `R_{pi(k)} = c(pi(1..k)) - c(pi(1..k-1))`, deduplicated.
    /// Requires polymatroid bounds (normalized, nondecreasing, submodular).
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        let c = &self.bounds;
        if !c.is_normalized() || !c.is_nondecreasing() || !is_submodular(c).ok {
            return Err(Error::Domain(
                "corner enumeration needs polymatroid bounds (monotonize first)".into(),
            ));
        }
        let l = c.num_users();
        let mut corners: Vec<Vec<f64>> = Vec::new();
        for perm in permutations(l) {
            let mut rates = vec![0.0f64; l];
            let mut mask = 0usize;
            for &user in &perm {
                let prev = c.value(mask);
                mask |= 1 << user;
                rates[user] = c.value(mask) - prev;
            }
            if !corners
                .iter()
                .any(|r| r.iter().zip(&rates).all(|(a, b)| (a - b).abs() <= RATE_TOL))
            {
                debug_assert!(self.contains(&rates), "greedy corner left the region");
                corners.push(rates);
            }
        }
        Ok(corners)
    }

    /// Ordered boundary polygon for two users, suitable for plotting:
    /// `(0,0) -> (c1, 0) -> dominant-face corners -> (0, c2)`.
    pub fn dominant_polygon(&self) -> Result<Vec<(f64, f64)>> {
        if self.num_users() != 2 {
            return Err(Error::Usage("polygon export is for L = 2".into()));
        }
        let c1 = self.bounds.value(0b01);
        let c2 = self.bounds.value(0b10);
        let c12 = self.bounds.value(0b11);
        let mut poly = vec![(0.0, 0.0), (c1, 0.0)];
        for p in [(c1, c12 - c1), (c12 - c2, c2), (0.0, c2)] {
            if (poly.last().unwrap().0 - p.0).abs() > RATE_TOL
                || (poly.last().unwrap().1 - p.1).abs() > RATE_TOL
            {
                poly.push(p);
            }
        }
        Ok(poly)
    }
}

/// All permutations of `0..l` in lexicographic order.
fn permutations(l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..l).collect();
    loop {
        out.push(current.clone());
        // Next lexicographic permutation.
        let Some(i) = (0..l.saturating_sub(1))
            .rev()
            .find(|&i| current[i] < current[i + 1])
        else {
            break;
        };
        let j = (i + 1..l).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
    out
}

/// Sum rate `f(L)`: after monotonization this is the largest achievable sum
/// over the region, attained on the dominant face.
pub fn sum_rate(f: &SetFunction) -> f64 {
    f.value(f.full_mask())
}

/// A cq state over `(X_1, ..., X_L)` whose quantum part splits as `B (x) E`
/// (receiver first, eavesdropper second).
#[derive(Debug, Clone)]
pub struct WiretapCq {
    state: CqState,
    d_b: usize,
    d_e: usize,
}

impl WiretapCq {
    pub fn new(state: CqState, d_b: usize, d_e: usize) -> Result<Self> {
        if state.qdim() != d_b * d_e {
            return Err(Error::Shape(format!(
                "quantum dim {} does not split as {d_b} x {d_e}",
                state.qdim()
            )));
        }
        if state.num_registers() > MAX_USERS {
            return Err(Error::Capacity(format!(
                "{} users exceeds the cap {MAX_USERS}",
                state.num_registers()
            )));
        }
        Ok(Self { state, d_b, d_e })
    }

    pub fn state(&self) -> &CqState {
        &self.state
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d_b, self.d_e)
    }

    pub fn num_users(&self) -> usize {
        self.state.num_registers()
    }

    /// Largest deviation of the joint classical weights from the product of
    /// their per-register marginals.
    pub fn product_defect(&self) -> f64 {
        let l = self.state.num_registers();
        let sizes = self.state.reg_sizes().to_vec();
        let mut marginals: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
        let mut digits = vec![0usize; l];
        for (idx, &w) in self.state.weights().iter().enumerate() {
            crate::qstate::decompose_index(idx, &sizes, &mut digits);
            for (reg, &d) in digits.iter().enumerate() {
                marginals[reg][d] += w;
            }
        }
        let mut worst = 0.0f64;
        for (idx, &w) in self.state.weights().iter().enumerate() {
            crate::qstate::decompose_index(idx, &sizes, &mut digits);
            let prod: f64 = digits
                .iter()
                .enumerate()
                .map(|(r, &d)| marginals[r][d])
                .product();
            worst = worst.max((w - prod).abs());
        }
        worst
    }

    /// `H(X_T, part)` via the block formula on the classical marginal over
    /// the register subset `mask`, with the quantum part reduced to Bob,
    /// Eve, both, or dropped.
    fn entropy(&self, mask: usize, part: Option<Part>) -> Result<f64> {
        let keep: Vec<usize> = (0..self.num_users())
            .filter(|i| mask >> i & 1 == 1)
            .collect();
        let marginal = self.state.classical_marginal(&keep)?;
        match part {
            None => cq_block_entropy(marginal.weights(), None),
            Some(p) => {
                let keep_q = match p {
                    Part::Bob => vec![0usize],
                    Part::Eve => vec![1usize],
                };
                let reduced = marginal
                    .map_quantum(|rho| partial_trace(rho, &[self.d_b, self.d_e], &keep_q))?;
                cq_block_entropy(reduced.weights(), Some(reduced.cond_states()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Part {
    Bob,
    Eve,
}

/// The region bound tables for one input: the clipped per-subset bounds, the
/// unclipped differences (kept for diagnosis), and the auxiliary functions
/// `g(S) = -H(X_S | B X_{S^c})` and `h(S) = H(X_S | E)` from the rate system.
#[derive(Debug, Clone, Serialize)]
pub struct RegionBounds {
    pub clipped: SetFunction,
    pub raw: SetFunction,
    pub g: SetFunction,
    pub h: SetFunction,
}

/// Compute all region set functions for a product-input wiretap cq state.
///
/// Rejects inputs whose classical marginal is not a product distribution
/// (the region formula requires product inputs).
pub fn region_bounds(w: &WiretapCq) -> Result<RegionBounds> {
    let defect = w.product_defect();
    if defect > 1e-10 {
        return Err(Error::Domain(format!(
            "classical input is not product-form (defect {defect:.3e})"
        )));
    }
    let l = w.num_users();
    let full = (1usize << l) - 1;
    let h_xl = w.entropy(full, None)?;
    let h_xl_b = w.entropy(full, Some(Part::Bob))?;
    let h_e = w.entropy(0, Some(Part::Eve))?;

    let mut raw = vec![0.0f64; 1 << l];
    let mut g = vec![0.0f64; 1 << l];
    let mut h = vec![0.0f64; 1 << l];
    for mask in 0..=full {
        let comp = full & !mask;
        let h_xs = w.entropy(mask, None)?;
        let h_xcomp = w.entropy(comp, None)?;
        let h_xcomp_b = w.entropy(comp, Some(Part::Bob))?;
        let h_xs_e = w.entropy(mask, Some(Part::Eve))?;
        // I(X_S; B | X_{S^c}) = H(X_L) + H(X_{S^c} B) - H(X_L B) - H(X_{S^c}).
        let i_bob = h_xl + h_xcomp_b - h_xl_b - h_xcomp;
        // I(X_S; E) = H(X_S) + H(E) - H(X_S E).
        let i_eve = h_xs + h_e - h_xs_e;
        raw[mask] = i_bob - i_eve;
        g[mask] = h_xcomp_b - h_xl_b; // -H(X_S | B X_{S^c})
        h[mask] = h_xs_e - h_e; // H(X_S | E)
    }
    // Exact zeros on the empty set, whatever the roundoff says.
    raw[0] = 0.0;
    g[0] = 0.0;
    h[0] = 0.0;
    let clipped: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    Ok(RegionBounds {
        clipped: SetFunction::new(l, clipped)?,
        raw: SetFunction::new(l, raw)?,
        g: SetFunction::new(l, g)?,
        h: SetFunction::new(l, h)?,
    })
}

/// The achievable-region set function `S -> [I(X_S;B|X_{S^c}) - I(X_S;E)]^+`.
pub fn region_set_function(w: &WiretapCq) -> Result<SetFunction> {
    Ok(region_bounds(w)?.clipped)
}
