//! Sum-rate optimization for multiple-access wiretap channels: the private
//! sum-rate objective `[I(X_L;B) - I(X_L;E)]^+` over classical-quantum input
//! ensembles, the coherent-information sum rate over per-user pure inputs,
//! numerical degradability checking, and the equality test between the two
//! optima for degradable channels.
//!
//! The optimizers are multi-start local ascent with numerically estimated
//! gradients over unconstrained parametrizations (softmax pmfs, normalized
//! signal vectors), plus an exhaustive grid for binary-alphabet classical
//! signal ensembles. Values are certified global only in grid mode on such
//! instances; everything else is reported as a lower bound.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::cq_block_entropy;
use crate::linalg::{hermitian_eig, psd_power, ComplexMatrix};
use crate::qstate::{
    decompose_index, isometric_extension, partial_trace, CqState, DensityOperator, QuantumChannel,
};
use crate::{seeded_rng, Error, Result};

/// Per-user classical-quantum input: a pmf over the signal alphabet and one
/// signal state per symbol.
#[derive(Debug, Clone)]
pub struct UserEnsemble {
    pub pmf: Vec<f64>,
    pub signals: Vec<DensityOperator>,
}

/// Product input ensemble across transmitters.
#[derive(Debug, Clone)]
pub struct InputEnsemble {
    pub users: Vec<UserEnsemble>,
}

impl InputEnsemble {
    pub fn validate(&self, ch: &QuantumChannel) -> Result<()> {
        if self.users.len() != ch.in_dims.len() {
            return Err(Error::Shape(format!(
                "{} users but channel has {} inputs",
                self.users.len(),
                ch.in_dims.len()
            )));
        }
        for (l, u) in self.users.iter().enumerate() {
            if u.pmf.len() != u.signals.len() || u.pmf.is_empty() {
                return Err(Error::Shape("pmf/signal length mismatch".into()));
            }
            let total: f64 = u.pmf.iter().sum();
            if (total - 1.0).abs() > 1e-10 || u.pmf.iter().any(|&p| p < -1e-12) {
                return Err(Error::Domain(format!("user {l} pmf does not sum to 1")));
            }
            for s in &u.signals {
                if s.dim() != ch.in_dims[l] {
                    return Err(Error::Shape(format!(
                        "user {l} signal dim {} != channel input dim {}",
                        s.dim(),
                        ch.in_dims[l]
                    )));
                }
                if (s.trace() - 1.0).abs() > 1e-8 {
                    return Err(Error::Domain("signal states must have trace 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Computational-basis signal states with the given pmfs.
    pub fn classical(ch: &QuantumChannel, pmfs: Vec<Vec<f64>>) -> Result<Self> {
        let users = pmfs
            .iter()
            .enumerate()
            .map(|(l, pmf)| {
                let d = ch.in_dims[l];
                if pmf.len() > d {
                    return Err(Error::Shape(format!(
                        "user {l}: alphabet {} exceeds input dim {d}",
                        pmf.len()
                    )));
                }
                let signals = (0..pmf.len())
                    .map(|x| DensityOperator::basis(d, x))
                    .collect::<Result<Vec<_>>>()?;
                Ok(UserEnsemble {
                    pmf: pmf.clone(),
                    signals,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ens = Self { users };
        ens.validate(ch)?;
        Ok(ens)
    }
}

/// Per-user pure bipartite inputs `phi_{A_l A'_l}` (reference and channel
/// input of equal dimension), given as unit vectors of length `d_l^2`.
#[derive(Debug, Clone)]
pub struct PureInputEnsemble {
    pub users: Vec<Vec<Complex64>>,
}

impl PureInputEnsemble {
    pub fn validate(&self, ch: &QuantumChannel) -> Result<()> {
        if self.users.len() != ch.in_dims.len() {
            return Err(Error::Shape("user count mismatch".into()));
        }
        for (l, v) in self.users.iter().enumerate() {
            let d = ch.in_dims[l];
            if v.len() != d * d {
                return Err(Error::Shape(format!(
                    "user {l} purification must have length {}",
                    d * d
                )));
            }
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::Domain(format!("user {l} vector norm {norm} != 1")));
            }
        }
        Ok(())
    }

    /// Maximally entangled inputs (maximally mixed channel marginals).
    pub fn maximally_entangled(ch: &QuantumChannel) -> Self {
        let users = ch
            .in_dims
            .iter()
            .map(|&d| {
                let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
                let mut v = vec![Complex64::new(0.0, 0.0); d * d];
                for i in 0..d {
                    v[i * d + i] = amp;
                }
                v
            })
            .collect();
        Self { users }
    }

    /// The channel-input marginal `Tr_A |phi><phi|` of one user.
    fn marginal(&self, l: usize, d: usize) -> Result<DensityOperator> {
        let rho = DensityOperator::pure(&self.users[l])?;
        partial_trace(&rho, &[d, d], &[1])
    }

    /// Joint channel-input state: the tensor product of per-user marginals.
    pub fn input_marginal(&self, ch: &QuantumChannel) -> Result<DensityOperator> {
        let mut acc = ComplexMatrix::identity(1);
        for (l, &d) in ch.in_dims.iter().enumerate() {
            acc = acc.kron(self.marginal(l, d)?.matrix());
        }
        DensityOperator::new(acc)
    }
}

/// Assemble the cq state `rho_{X_L B E}` from a channel and an input
/// ensemble via the channel's isometric extension.
pub fn ensemble_state(
    ch: &QuantumChannel,
    ens: &InputEnsemble,
) -> Result<crate::regions::WiretapCq> {
    ens.validate(ch)?;
    let ext = isometric_extension(ch);
    let sizes: Vec<usize> = ens.users.iter().map(|u| u.pmf.len()).collect();
    let total: usize = sizes.iter().product();
    let mut weights = Vec::with_capacity(total);
    let mut cond = Vec::with_capacity(total);
    let mut digits = vec![0usize; sizes.len()];
    for idx in 0..total {
        decompose_index(idx, &sizes, &mut digits);
        let mut w = 1.0f64;
        let mut input = ComplexMatrix::identity(1);
        for (l, &x) in digits.iter().enumerate() {
            w *= ens.users[l].pmf[x];
            input = input.kron(ens.users[l].signals[x].matrix());
        }
        weights.push(w);
        cond.push(DensityOperator::new(ext.dilate(&input)?)?);
    }
    let state = CqState::new(sizes, weights, cond)?;
    crate::regions::WiretapCq::new(state, ch.out_dim, ext.env_dim)
}

fn spectrum_entropy_of(mat: &ComplexMatrix) -> Result<f64> {
    let eig = hermitian_eig(mat)?;
    let cut = crate::linalg::eig_cutoff(mat.rows);
    Ok(crate::entropy::shannon(
        &eig.values
            .iter()
            .copied()
            .filter(|&l| l > cut)
            .collect::<Vec<_>>(),
    ))
}

/// Unclipped private sum-rate objective `I(X_L;B) - I(X_L;E)`
/// `= H(B) - H(X_L B) + H(X_L E) - H(E)` evaluated exactly.
pub fn p_sum_objective_raw(ch: &QuantumChannel, ens: &InputEnsemble) -> Result<f64> {
    let w = ensemble_state(ch, ens)?;
    let (d_b, d_e) = w.dims();
    let state = w.state();
    let bob = state.map_quantum(|rho| partial_trace(rho, &[d_b, d_e], &[0]))?;
    let eve = state.map_quantum(|rho| partial_trace(rho, &[d_b, d_e], &[1]))?;
    let h_b = spectrum_entropy_of(bob.quantum_marginal()?.matrix())?;
    let h_e = spectrum_entropy_of(eve.quantum_marginal()?.matrix())?;
    let h_xb = cq_block_entropy(bob.weights(), Some(bob.cond_states()))?;
    let h_xe = cq_block_entropy(eve.weights(), Some(eve.cond_states()))?;
    Ok(h_b - h_xb + h_xe - h_e)
}

/// Clipped private sum-rate objective `[I(X_L;B) - I(X_L;E)]^+`.
pub fn p_sum_objective(ch: &QuantumChannel, ens: &InputEnsemble) -> Result<f64> {
    Ok(p_sum_objective_raw(ch, ens)?.max(0.0))
}

/// Coherent-information sum-rate objective `I(A_L > B)` at per-user pure
/// inputs. The global `(A_L, B, E)` state is pure, so this equals
/// `H(N(rho)) - H(N^c(rho))` at the product input marginal, which is how it
/// is evaluated.
pub fn q_sum_objective(ch: &QuantumChannel, ens: &PureInputEnsemble) -> Result<f64> {
    ens.validate(ch)?;
    let rho = ens.input_marginal(ch)?;
    coherent_information_of_input(ch, rho.matrix())
}

/// `H(N(rho)) - H(N^c(rho))` for an input density matrix.
pub fn coherent_information_of_input(ch: &QuantumChannel, rho: &ComplexMatrix) -> Result<f64> {
    let ext = isometric_extension(ch);
    let h_b = spectrum_entropy_of(&ext.to_bob(rho)?)?;
    let h_e = spectrum_entropy_of(&ext.to_env(rho)?)?;
    Ok(h_b - h_e)
}

/// Dense route for the same objective: build the joint pure state on
/// `A_L (x) A'_L`, push `A'_L` through the channel, and take
/// `H(B) - H(A_L B)` directly. Used to cross-check `q_sum_objective`.
pub fn q_sum_objective_dense(ch: &QuantumChannel, ens: &PureInputEnsemble) -> Result<f64> {
    ens.validate(ch)?;
    let l = ch.in_dims.len();
    // Joint vector on (A_1, A'_1, ..., A_L, A'_L).
    let mut v = vec![Complex64::new(1.0, 0.0)];
    let mut dims = Vec::new();
    for (u, &d) in ens.users.iter().zip(&ch.in_dims) {
        let mut next = Vec::with_capacity(v.len() * u.len());
        for a in &v {
            for b in u {
                next.push(a * b);
            }
        }
        v = next;
        dims.push(d);
        dims.push(d);
    }
    let rho = DensityOperator::pure(&v)?;
    // Group references first, channel inputs last.
    let perm: Vec<usize> = (0..l)
        .map(|i| 2 * i)
        .chain((0..l).map(|i| 2 * i + 1))
        .collect();
    let grouped = crate::qstate::permute_factors(rho.matrix(), &dims, &perm)?;
    let d_ref: usize = ch.in_dims.iter().product();
    let d_in: usize = d_ref;
    // Apply the channel on the input factor.
    let mut out = ComplexMatrix::zeros(d_ref * ch.out_dim, d_ref * ch.out_dim);
    for k in ch.kraus() {
        let lifted = ComplexMatrix::identity(d_ref).kron(k);
        out = out.add(&lifted.matmul(&grouped).matmul(&lifted.dagger()));
    }
    let h_ab = spectrum_entropy_of(&out)?;
    let bob = crate::qstate::partial_trace_matrix(&out, &[d_ref, ch.out_dim], &[1])?;
    let h_b = spectrum_entropy_of(&bob)?;
    let _ = d_in;
    Ok(h_b - h_ab)
}

/// Optimizer termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStatus {
    Converged,
    MaxIter,
    GridExact,
}

/// Outcome of a maximization: the best value found (a lower bound on the
/// optimum unless `GridExact` on a classical binary instance), the argument
/// achieving it, and the best-objective trace per restart.
#[derive(Debug, Clone)]
pub struct OptResult<A> {
    pub value: f64,
    pub argument: A,
    /// Objective trace of the winning restart.
    pub trace: Vec<f64>,
    /// Best value reached by each restart, in restart order.
    pub restart_bests: Vec<f64>,
    pub status: OptStatus,
}

/// Optimizer budget knobs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Grid points per pmf axis for the classical-binary refinement.
    pub grid_points: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            restarts: 6,
            max_iters: 160,
            seed: 1,
            grid_points: 201,
        }
    }
}

/// Generic multi-start ascent with central-difference gradients and
/// backtracking line search over an unconstrained parameter vector.
fn ascend(
    eval: &(dyn Fn(&[f64]) -> f64 + Sync),
    start: Vec<f64>,
    max_iters: usize,
) -> (f64, Vec<f64>, Vec<f64>, OptStatus) {
    let mut params = start;
    let mut best = eval(&params);
    let mut trace = vec![best];
    let h = 1e-5;
    let mut status = OptStatus::MaxIter;
    for _ in 0..max_iters {
        let grad: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut up = params.clone();
                up[i] += h;
                let mut dn = params.clone();
                dn[i] -= h;
                (eval(&up) - eval(&dn)) / (2.0 * h)
            })
            .collect();
        let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-9 {
            status = OptStatus::Converged;
            break;
        }
        let mut step = 0.5;
        let mut improved = false;
        for _ in 0..24 {
            let cand: Vec<f64> = params
                .iter()
                .zip(&grad)
                .map(|(p, g)| p + step * g / gnorm)
                .collect();
            let val = eval(&cand);
            if val > best + 1e-12 {
                params = cand;
                best = val;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        trace.push(best);
        if !improved {
            status = OptStatus::Converged;
            break;
        }
    }
    (best, params, trace, status)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / s).collect()
}

fn unit_vector(raw: &[f64]) -> Vec<Complex64> {
    let d = raw.len() / 2;
    let mut v: Vec<Complex64> = (0..d)
        .map(|i| Complex64::new(raw[2 * i], raw[2 * i + 1]))
        .collect();
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        v[0] = Complex64::new(1.0, 0.0);
        return v;
    }
    v.into_iter().map(|z| z / norm).collect()
}

/// Parameter layout for the ensemble search: per user, `|X_l|` pmf logits
/// followed by `|X_l|` signal vectors of `2 d_l` reals each.
fn params_to_ensemble(ch: &QuantumChannel, alphabets: &[usize], params: &[f64]) -> InputEnsemble {
    let mut users = Vec::with_capacity(alphabets.len());
    let mut off = 0usize;
    for (l, &a) in alphabets.iter().enumerate() {
        let d = ch.in_dims[l];
        let pmf = softmax(&params[off..off + a]);
        off += a;
        let mut signals = Vec::with_capacity(a);
        for _ in 0..a {
            let v = unit_vector(&params[off..off + 2 * d]);
            off += 2 * d;
            signals.push(DensityOperator::pure(&v).expect("unit vector"));
        }
        users.push(UserEnsemble { pmf, signals });
    }
    InputEnsemble { users }
}

fn param_len(ch: &QuantumChannel, alphabets: &[usize]) -> usize {
    alphabets
        .iter()
        .enumerate()
        .map(|(l, &a)| a + a * 2 * ch.in_dims[l])
        .sum()
}

/// Exhaustive grid over classical binary ensembles: per-user probability of
/// symbol 0 on a uniform grid, computational-basis signals. Returns the best
/// (value, per-user p0). Applicable when every alphabet is binary.
pub fn classical_binary_grid(
    ch: &QuantumChannel,
    points: usize,
    raw_objective: bool,
) -> Result<(f64, Vec<f64>)> {
    let l = ch.in_dims.len();
    if ch.in_dims.iter().any(|&d| d < 2) {
        return Err(Error::Usage("grid needs input dims >= 2".into()));
    }
    if points < 2 || points.pow(l as u32) > 1 << 22 {
        return Err(Error::Capacity("grid size out of range".into()));
    }
    let total = points.pow(l as u32);
    let evals: Vec<(f64, usize)> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut pmfs = Vec::with_capacity(l);
            for _ in 0..l {
                let i = rem % points;
                rem /= points;
                let p0 = i as f64 / (points - 1) as f64;
                pmfs.push(vec![p0, 1.0 - p0]);
            }
            let ens = InputEnsemble::classical(ch, pmfs).expect("grid ensemble valid");
            let v = if raw_objective {
                p_sum_objective_raw(ch, &ens).expect("objective evaluates")
            } else {
                p_sum_objective(ch, &ens).expect("objective evaluates")
            };
            (v, flat)
        })
        .collect();
    let (mut best_v, mut best_flat) = (f64::NEG_INFINITY, 0usize);
    for &(v, flat) in &evals {
        if v > best_v {
            best_v = v;
            best_flat = flat;
        }
    }
    let mut rem = best_flat;
    let mut arg = Vec::with_capacity(l);
    for _ in 0..l {
        let i = rem % points;
        rem /= points;
        arg.push(i as f64 / (points - 1) as f64);
    }
    Ok((best_v, arg))
}

/// Maximize the private sum-rate objective over product input ensembles.
///
/// `alphabets` fixes the per-user signal alphabet sizes; `None` defaults to
/// `d_l^2` per user. Binary alphabets additionally get an exhaustive
/// classical-signal grid; when the grid attains the overall best, the result
/// is flagged `GridExact` (a certificate only within classical signals).
pub fn maximize_p_sum(
    ch: &QuantumChannel,
    alphabets: Option<&[usize]>,
    cfg: &OptConfig,
) -> Result<OptResult<InputEnsemble>> {
    let default_alpha: Vec<usize> = ch.in_dims.iter().map(|&d| d * d).collect();
    let alphabets: Vec<usize> = match alphabets {
        Some(a) => {
            if a.len() != ch.in_dims.len() {
                return Err(Error::Usage("one alphabet size per user".into()));
            }
            a.to_vec()
        }
        None => default_alpha,
    };
    let n_params = param_len(ch, &alphabets);
    let eval = |params: &[f64]| -> f64 {
        let ens = params_to_ensemble(ch, &alphabets, params);
        p_sum_objective_raw(ch, &ens).unwrap_or(f64::NEG_INFINITY)
    };

    // Seeded restarts: restart 0 starts from uniform pmf and basis-like
    // signals, the rest from random parameter vectors.
    let starts: Vec<Vec<f64>> = (0..cfg.restarts.max(1))
        .map(|rst| {
            let mut rng = seeded_rng(cfg.seed, 0x7073_0000 + rst as u64);
            let mut p = Vec::with_capacity(n_params);
            for (l, &a) in alphabets.iter().enumerate() {
                let d = ch.in_dims[l];
                for _ in 0..a {
                    p.push(0.0);
                }
                for x in 0..a {
                    for i in 0..d {
                        let basis = if rst == 0 {
                            if i == x % d {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            rand::Rng::random::<f64>(&mut rng) - 0.5
                        };
                        p.push(basis);
                        p.push(if rst == 0 {
                            0.0
                        } else {
                            rand::Rng::random::<f64>(&mut rng) - 0.5
                        });
                    }
                }
            }
            p
        })
        .collect();
    let runs: Vec<(f64, Vec<f64>, Vec<f64>, OptStatus)> = starts
        .into_par_iter()
        .map(|s| ascend(&eval, s, cfg.max_iters))
        .collect();
    let restart_bests: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mut best = 0usize;
    for i in 1..runs.len() {
        if runs[i].0 > runs[best].0 {
            best = i;
        }
    }
    let (mut best_val, best_params, trace, mut status) = runs[best].clone();
    let mut argument = params_to_ensemble(ch, &alphabets, &best_params);

    if alphabets.iter().all(|&a| a == 2) && ch.in_dims.len() <= 2 {
        let (grid_val, grid_arg) = classical_binary_grid(ch, cfg.grid_points, true)?;
        if grid_val >= best_val - 1e-9 {
            let pmfs: Vec<Vec<f64>> = grid_arg.iter().map(|&p0| vec![p0, 1.0 - p0]).collect();
            let grid_ens = InputEnsemble::classical(ch, pmfs)?;
            if grid_val > best_val {
                best_val = grid_val;
                argument = grid_ens;
            }
            status = OptStatus::GridExact;
        }
    }

    // Re-evaluate at the reported argument and clip for reporting.
    let value = p_sum_objective(ch, &argument)?;
    debug_assert!((value - best_val.max(0.0)).abs() < 1e-8);
    Ok(OptResult {
        value,
        argument,
        trace,
        restart_bests,
        status,
    })
}

/// Maximize the coherent-information sum rate over per-user pure inputs.
/// `warm_starts` are extra probe points (e.g. a product ansatz built from
/// single-copy optimizers).
pub fn maximize_q_sum(
    ch: &QuantumChannel,
    cfg: &OptConfig,
    warm_starts: &[PureInputEnsemble],
) -> Result<OptResult<PureInputEnsemble>> {
    let dims = ch.in_dims.clone();
    let n_params: usize = dims.iter().map(|&d| 2 * d * d).sum();
    let params_to_ens = move |params: &[f64]| -> PureInputEnsemble {
        let mut users = Vec::with_capacity(dims.len());
        let mut off = 0usize;
        for &d in &dims {
            users.push(unit_vector(&params[off..off + 2 * d * d]));
            off += 2 * d * d;
        }
        PureInputEnsemble { users }
    };
    let eval = |params: &[f64]| -> f64 {
        q_sum_objective(ch, &params_to_ens(params)).unwrap_or(f64::NEG_INFINITY)
    };

    let ens_to_params = |ens: &PureInputEnsemble| -> Vec<f64> {
        let mut p = Vec::with_capacity(n_params);
        for v in &ens.users {
            for z in v {
                p.push(z.re);
                p.push(z.im);
            }
        }
        p
    };

    let mut starts: Vec<Vec<f64>> =
        vec![ens_to_params(&PureInputEnsemble::maximally_entangled(ch))];
    for w in warm_starts {
        w.validate(ch)?;
        starts.push(ens_to_params(w));
    }
    for rst in starts.len()..cfg.restarts.max(starts.len() + 1) {
        let mut rng = seeded_rng(cfg.seed, 0x7173_0000 + rst as u64);
        starts.push(
            (0..n_params)
                .map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5)
                .collect(),
        );
    }
    let runs: Vec<(f64, Vec<f64>, Vec<f64>, OptStatus)> = starts
        .into_par_iter()
        .map(|s| ascend(&eval, s, cfg.max_iters))
        .collect();
    let restart_bests: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mut best = 0usize;
    for i in 1..runs.len() {
        if runs[i].0 > runs[best].0 {
            best = i;
        }
    }
    let (_, best_params, trace, status) = runs[best].clone();
    let argument = params_to_ens(&best_params);
    let value = q_sum_objective(ch, &argument)?;
    Ok(OptResult {
        value,
        argument,
        trace,
        restart_bests,
        status,
    })
}

/// Kraus form of the complementary channel (environment output) derived from
/// the stacked-Kraus isometric extension.
pub fn complementary_channel(ch: &QuantumChannel) -> Result<QuantumChannel> {
    let ext = isometric_extension(ch);
    let d_in = ch.in_dim();
    let mut kraus = Vec::with_capacity(ch.out_dim);
    for b in 0..ch.out_dim {
        let mut k = ComplexMatrix::zeros(ext.env_dim, d_in);
        for e in 0..ext.env_dim {
            for a in 0..d_in {
                k[(e, a)] = ext.isometry[(b * ext.env_dim + e, a)];
            }
        }
        kraus.push(k);
    }
    QuantumChannel::new(ch.in_dims.clone(), ext.env_dim, kraus)
}

/// Composition `d .o. n` (apply `n`, then `d`).
pub fn compose(d: &QuantumChannel, n: &QuantumChannel) -> Result<QuantumChannel> {
    if d.in_dim() != n.out_dim {
        return Err(Error::Shape(format!(
            "composition mismatch: inner output {} vs outer input {}",
            n.out_dim,
            d.in_dim()
        )));
    }
    let mut kraus = Vec::with_capacity(d.kraus().len() * n.kraus().len());
    for a in d.kraus() {
        for b in n.kraus() {
            kraus.push(a.matmul(b));
        }
    }
    QuantumChannel::new(n.in_dims.clone(), d.out_dim, kraus)
}

/// Outcome of the numerical degradability search.
#[derive(Debug, Clone)]
pub struct DegradabilityReport {
    pub degradable: bool,
    /// Frobenius distance between `Choi(D o N)` and `Choi(N^c)` at the best
    /// CPTP `D` found.
    pub residual: f64,
    pub iterations: usize,
    /// Choi matrix of the best degrading map (B input (x) E output grouping).
    pub degrader_choi: ComplexMatrix,
}

/// Hermitian-coordinate helpers: an orthonormal real basis of Hermitian
/// matrices of dimension `m` (length m^2).
fn herm_basis(m: usize) -> Vec<ComplexMatrix> {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(m * m);
    for i in 0..m {
        let mut e = ComplexMatrix::zeros(m, m);
        e[(i, i)] = Complex64::new(1.0, 0.0);
        basis.push(e);
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let mut s = ComplexMatrix::zeros(m, m);
            s[(i, j)] = Complex64::new(inv_sqrt2, 0.0);
            s[(j, i)] = Complex64::new(inv_sqrt2, 0.0);
            basis.push(s);
            let mut a = ComplexMatrix::zeros(m, m);
            a[(i, j)] = Complex64::new(0.0, inv_sqrt2);
            a[(j, i)] = Complex64::new(0.0, -inv_sqrt2);
            basis.push(a);
        }
    }
    basis
}

fn herm_coords(mat: &ComplexMatrix, basis: &[ComplexMatrix]) -> Vec<f64> {
    basis
        .iter()
        .map(|b| b.dagger().matmul(mat).trace().re)
        .collect()
}

fn herm_from_coords(coords: &[f64], basis: &[ComplexMatrix]) -> ComplexMatrix {
    let m = basis[0].rows;
    let mut out = ComplexMatrix::zeros(m, m);
    for (c, b) in coords.iter().zip(basis) {
        if *c != 0.0 {
            out = out.add(&b.scale_re(*c));
        }
    }
    out
}

/// Apply a map given by its Choi matrix: `D(sigma) = Tr_B[(sigma^T (x) I_E) J]`.
fn apply_choi(
    j: &ComplexMatrix,
    sigma: &ComplexMatrix,
    d_in: usize,
    d_out: usize,
) -> ComplexMatrix {
    let sigma_t = ComplexMatrix::from_fn(d_in, d_in, |a, b| sigma[(b, a)]);
    let lifted = sigma_t.kron(&ComplexMatrix::identity(d_out));
    let prod = lifted.matmul(j);
    crate::qstate::partial_trace_matrix(&prod, &[d_in, d_out], &[1]).expect("shape fixed")
}

/// Search for a CPTP `D: B -> E` with `D o N = N^c` by alternating
/// projections between the affine consistency set (in Choi coordinates) and
/// the CPTP set. Declares the channel degradable when the final residual is
/// at most `tolerance`.
pub fn check_degradable(ch: &QuantumChannel, tolerance: f64) -> Result<DegradabilityReport> {
    let comp = complementary_channel(ch)?;
    let d_b = ch.out_dim;
    let d_e = comp.out_dim;
    let d_a = ch.in_dim();
    let m = d_b * d_e;

    let basis_in = herm_basis(m);
    let basis_out = herm_basis(d_a * d_e);
    // Columns of the linear map J_D -> Choi(D o N) in Hermitian coordinates.
    let n_in = m * m;
    let n_out = (d_a * d_e) * (d_a * d_e);
    let mut t = vec![vec![0.0f64; n_in]; n_out];
    for (col, b_in) in basis_in.iter().enumerate() {
        // Choi(D_J o N) = sum_ij |i><j| (x) D_J(N(|i><j|)).
        let mut choi = ComplexMatrix::zeros(d_a * d_e, d_a * d_e);
        for i in 0..d_a {
            for jdx in 0..d_a {
                let mut unit = ComplexMatrix::zeros(d_a, d_a);
                unit[(i, jdx)] = Complex64::new(1.0, 0.0);
                let through = crate::qstate::apply_channel_matrix(ch, &unit)?;
                let out = apply_choi(b_in, &through, d_b, d_e);
                for r in 0..d_e {
                    for c in 0..d_e {
                        choi[(i * d_e + r, jdx * d_e + c)] += out[(r, c)];
                    }
                }
            }
        }
        let coords = herm_coords(&choi, &basis_out);
        for (row, v) in coords.iter().enumerate() {
            t[row][col] = *v;
        }
    }
    let b_target = herm_coords(&comp.choi(), &basis_out);

    // Pseudo-inverse of T via the eigendecomposition of G = T^T T.
    let mut g = ComplexMatrix::zeros(n_in, n_in);
    for i in 0..n_in {
        for j in 0..n_in {
            let mut acc = 0.0f64;
            for row in t.iter() {
                acc += row[i] * row[j];
            }
            g[(i, j)] = Complex64::new(acc, 0.0);
        }
    }
    let g_pinv = psd_power(&g, -1.0)?;

    let apply_t = |x: &[f64]| -> Vec<f64> {
        t.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    };
    let residual_of = |x: &[f64]| -> f64 {
        apply_t(x)
            .iter()
            .zip(&b_target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };

    // Start from the fully depolarizing degrader.
    let mut j = ComplexMatrix::identity(m).scale_re(1.0 / d_e as f64);
    let max_iters = 4000usize;
    let mut last_res = f64::INFINITY;
    let mut iterations = 0usize;
    for it in 0..max_iters {
        iterations = it + 1;
        // Project onto the affine consistency set.
        let x = herm_coords(&j, &basis_in);
        let r: Vec<f64> = apply_t(&x)
            .iter()
            .zip(&b_target)
            .map(|(a, b)| a - b)
            .collect();
        let mut tt_r = vec![0.0f64; n_in];
        for (row, &ri) in t.iter().zip(&r) {
            for (k, slot) in tt_r.iter_mut().enumerate() {
                *slot += row[k] * ri;
            }
        }
        let correction = g_pinv.matvec(
            &tt_r
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect::<Vec<_>>(),
        );
        let x_new: Vec<f64> = x.iter().zip(&correction).map(|(xi, c)| xi - c.re).collect();
        j = herm_from_coords(&x_new, &basis_in);

        // Project onto CPTP: PSD clip, then the trace-preserving affine set,
        // a few alternations.
        for _ in 0..4 {
            let eig = hermitian_eig(&j)?;
            j = eig.apply_spectral(|l| l.max(0.0));
            let tr_e = crate::qstate::partial_trace_matrix(&j, &[d_b, d_e], &[0])?;
            let defect = ComplexMatrix::identity(d_b).sub(&tr_e);
            j = j.add(
                &defect
                    .scale_re(1.0 / d_e as f64)
                    .kron(&ComplexMatrix::identity(d_e)),
            );
        }

        let res = residual_of(&herm_coords(&j, &basis_in));
        if (last_res - res).abs() < 1e-13 && it > 10 {
            last_res = res;
            break;
        }
        last_res = res;
    }

    Ok(DegradabilityReport {
        degradable: last_res <= tolerance,
        residual: last_res,
        iterations,
        degrader_choi: j,
    })
}

/// Theorem-level equality check for degradable channels: maximize both
/// sum-rate expressions and compare.
#[derive(Debug, Clone)]
pub struct Theorem3Report {
    pub p: OptResult<InputEnsemble>,
    pub q: OptResult<PureInputEnsemble>,
    pub gap: f64,
    pub pass: bool,
}

/// Tolerance on the sum-rate coincidence for degradable channels.
pub const THEOREM3_TOL: f64 = 2e-3;

pub fn theorem3_check(
    ch: &QuantumChannel,
    alphabets: Option<&[usize]>,
    cfg: &OptConfig,
) -> Result<Theorem3Report> {
    let p = maximize_p_sum(ch, alphabets, cfg)?;
    let q = maximize_q_sum(ch, cfg, &[])?;
    let gap = (p.value - q.value.max(0.0)).abs();
    Ok(Theorem3Report {
        pass: gap <= THEOREM3_TOL,
        p,
        q,
        gap,
    })
}

/// The n-fold tensor power of a channel with the input factors regrouped so
/// each original transmitter keeps a single (n-fold) input system; supports
/// finite-blocklength region computations on `N^(x n)`.
pub fn tensor_power_channel(ch: &QuantumChannel, n: usize) -> Result<QuantumChannel> {
    if n == 0 {
        return Err(Error::Usage("tensor power needs n >= 1".into()));
    }
    let mut plain = ch.clone();
    for _ in 1..n {
        plain = plain.tensor_with(ch)?;
    }
    if n == 1 {
        return Ok(plain);
    }
    let l = ch.in_dims.len();
    // plain has factor order (copy 0: users 0..l, copy 1: users 0..l, ...);
    // regroup to (user 0: copies 0..n, user 1: copies 0..n, ...).
    let perm: Vec<usize> = (0..l)
        .flat_map(|u| (0..n).map(move |c| c * l + u))
        .collect();
    let plain_dims = plain.in_dims.clone();
    let d_in: usize = plain_dims.iter().product();
    // Column permutation matrix for the factor reordering.
    let strides_in = {
        let mut s = vec![1usize; plain_dims.len()];
        for i in (0..plain_dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * plain_dims[i + 1];
        }
        s
    };
    let new_dims: Vec<usize> = perm.iter().map(|&p| plain_dims[p]).collect();
    let mut col_map = vec![0usize; d_in];
    for (new_col, slot) in col_map.iter_mut().enumerate() {
        let mut rem = new_col;
        let mut old = 0usize;
        for k in (0..new_dims.len()).rev() {
            let digit = rem % new_dims[k];
            rem /= new_dims[k];
            old += digit * strides_in[perm[k]];
        }
        *slot = old;
    }
    let kraus: Vec<ComplexMatrix> = plain
        .kraus()
        .iter()
        .map(|k| ComplexMatrix::from_fn(k.rows, k.cols, |r, c| k[(r, col_map[c])]))
        .collect();
    let merged_dims: Vec<usize> = ch.in_dims.iter().map(|&d| d.pow(n as u32)).collect();
    QuantumChannel::new(merged_dims, plain.out_dim, kraus)
}

/// Channel sending the joint classical input to Bob intact while Eve receives
/// the per-symbol state `etas[x]`: the isometry `|x> -> |x>_B (x) |eta_x>_E`.
/// Degradable by construction; the returned degrading map measures Bob in the
/// computational basis and prepares `|eta_x>`.
pub fn degraded_eve_channel(
    in_dims: Vec<usize>,
    etas: &[Vec<Complex64>],
) -> Result<(QuantumChannel, QuantumChannel)> {
    let d_in: usize = in_dims.iter().product();
    if etas.len() != d_in {
        return Err(Error::Shape(format!(
            "need one Eve state per joint symbol ({d_in}), got {}",
            etas.len()
        )));
    }
    let d_e = etas[0].len();
    let mut unit_etas = Vec::with_capacity(d_in);
    for (x, eta) in etas.iter().enumerate() {
        if eta.len() != d_e {
            return Err(Error::Shape("Eve state dimensions differ".into()));
        }
        let norm: f64 = eta.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Domain(format!("Eve state {x} is zero")));
        }
        unit_etas.push(eta.iter().map(|z| z / norm).collect::<Vec<_>>());
    }
    // N: Kraus K_e = sum_x <e|eta_x> |x><x|.
    let kraus: Vec<ComplexMatrix> = (0..d_e)
        .map(|e| {
            let mut k = ComplexMatrix::zeros(d_in, d_in);
            for (x, eta) in unit_etas.iter().enumerate() {
                k[(x, x)] = eta[e];
            }
            k
        })
        .collect();
    let channel = QuantumChannel::new(in_dims, d_in, kraus)?;
    // D: measure-and-prepare, Kraus M_x = |eta_x><x|.
    let d_kraus: Vec<ComplexMatrix> = (0..d_in)
        .map(|x| {
            let mut k = ComplexMatrix::zeros(d_e, d_in);
            for e in 0..d_e {
                k[(e, x)] = unit_etas[x][e];
            }
            k
        })
        .collect();
    let degrader = QuantumChannel::new(vec![d_in], d_e, d_kraus)?;
    Ok((channel, degrader))
}

/// Channel that writes the (dephased) classical input to both Bob and Eve:
/// Kraus `|x><x|`, so the complementary output equals Bob's output on
/// classical inputs.
pub fn copy_to_both_channel(in_dims: Vec<usize>) -> Result<QuantumChannel> {
    let d: usize = in_dims.iter().product();
    let kraus = (0..d)
        .map(|x| {
            let mut k = ComplexMatrix::zeros(d, d);
            k[(x, x)] = Complex64::new(1.0, 0.0);
            k
        })
        .collect();
    QuantumChannel::new(in_dims, d, kraus)
}

/// Channel discarding the input into the environment: Bob sees a constant
/// (dimension-1) system.
pub fn discard_channel(in_dims: Vec<usize>) -> Result<QuantumChannel> {
    let d: usize = in_dims.iter().product();
    let kraus = (0..d)
        .map(|x| {
            let mut k = ComplexMatrix::zeros(1, d);
            k[(0, x)] = Complex64::new(1.0, 0.0);
            k
        })
        .collect();
    QuantumChannel::new(in_dims, 1, kraus)
}
