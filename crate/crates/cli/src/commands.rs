//! Subcommand implementations. Every command returns whether its checks
//! passed (drives the exit status) and writes one report, JSON records by
//! default or CSV with the manifest as comment lines.

use std::fs;

use privmac_core::aep::{build_truncation, hoeffding_tail, JointPmf};
use privmac_core::codesim::{simulate, SimConfig, SimRates};
use privmac_core::entropy::{
    conditional_entropy, fully_mixed_on_support, h2_collision, hmax, hmin_cq, mutual_information,
    von_neumann, EntropyReport, Quantity,
};
use privmac_core::hashing::soundness_suite;
use privmac_core::optimize::{
    check_degradable, maximize_p_sum, maximize_q_sum, p_sum_objective_raw, OptConfig,
};
use privmac_core::regions::{is_submodular, monotonize, region_bounds, RateRegion, WiretapCq};
use serde::Serialize;
use serde_json::json;

use crate::spec::{from_matrix, ChannelSpec, PmfSpec, RunManifest, SpecKind};

pub struct Output {
    pub out: Option<String>,
    pub format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Records,
    Csv,
}

impl Output {
    fn write(&self, text: &str) -> Result<(), String> {
        match &self.out {
            Some(path) => fs::write(path, text).map_err(|e| format!("write {path}: {e}")),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    /// Emit a JSON report with the manifest embedded, or CSV rows prefixed
    /// by the manifest as comments.
    pub fn emit<T: Serialize>(
        &self,
        manifest: &RunManifest,
        payload: &T,
        csv: impl FnOnce() -> String,
    ) -> Result<(), String> {
        match self.format {
            Format::Records => {
                let body = json!({ "manifest": manifest, "report": payload });
                let mut text = serde_json::to_string_pretty(&body).map_err(|e| e.to_string())?;
                text.push('\n');
                self.write(&text)
            }
            Format::Csv => {
                let mut text = manifest.csv_header();
                text.push_str(&csv());
                self.write(&text)
            }
        }
    }
}

fn read_input(path: &str) -> Result<(String, Vec<u8>), String> {
    let bytes = fs::read(path).map_err(|e| format!("read {path}: {e}"))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| "input is not UTF-8".to_string())?;
    Ok((text, bytes))
}

/// Build the wiretap cq state from either spec kind (Kraus channel plus
/// ensemble, or cq wiretap table plus pmfs).
fn wiretap_state(spec: &ChannelSpec) -> Result<WiretapCq, String> {
    match spec.kind {
        SpecKind::Kraus => {
            let ch = spec.channel()?;
            let ens = spec.input_ensemble(&ch)?;
            privmac_core::optimize::ensemble_state(&ch, &ens).map_err(|e| e.to_string())
        }
        SpecKind::CqWiretap => {
            let ch = spec.cq_wiretap()?;
            let pmfs = &spec
                .ensemble
                .as_ref()
                .ok_or("cq wiretap spec needs an ensemble block with pmfs")?
                .pmfs;
            let state = ch.cq_state(pmfs).map_err(|e| e.to_string())?;
            let (d_b, d_e) = ch.dims();
            WiretapCq::new(state, d_b, d_e).map_err(|e| e.to_string())
        }
        _ => Err("this command needs a channel spec (kraus or cq_wiretap)".into()),
    }
}

pub fn cmd_entropy(
    spec_path: &str,
    split: usize,
    seed: u64,
    tol: f64,
    output: &Output,
) -> Result<bool, String> {
    let (text, bytes) = read_input(spec_path)?;
    let spec = ChannelSpec::parse(&text)?;
    let manifest = RunManifest::new("entropy", seed, tol).with_input(spec_path, &bytes);
    let mut reports: Vec<EntropyReport> = Vec::new();
    match spec.kind {
        SpecKind::State => {
            let (dims, rho) = spec.state()?;
            let split = if split == 0 || split >= dims.len() {
                1
            } else {
                split
            };
            let a: Vec<usize> = (0..split).collect();
            let b: Vec<usize> = (split..dims.len()).collect();
            let err = |e: privmac_core::Error| e.to_string();
            reports.push(
                EntropyReport::new(
                    Quantity::VonNeumann,
                    von_neumann(&rho).map_err(err)?,
                    vec!["AB".into()],
                )
                .map_err(|e| e.to_string())?,
            );
            reports.push(
                EntropyReport::new(
                    Quantity::Conditional,
                    conditional_entropy(&rho, &dims, &b).map_err(|e| e.to_string())?,
                    vec!["A".into(), "B".into()],
                )
                .map_err(|e| e.to_string())?,
            );
            reports.push(
                EntropyReport::new(
                    Quantity::Mutual,
                    mutual_information(&rho, &dims, &a, &b).map_err(|e| e.to_string())?,
                    vec!["A".into(), "B".into()],
                )
                .map_err(|e| e.to_string())?,
            );
            reports.push(
                EntropyReport::new(
                    Quantity::Coherent,
                    privmac_core::entropy::coherent_information(&rho, &dims, &a, &b)
                        .map_err(|e| e.to_string())?,
                    vec!["A".into(), "B".into()],
                )
                .map_err(|e| e.to_string())?,
            );
        }
        SpecKind::CqState => {
            let cq = spec.cq_state()?;
            let marginal = cq.quantum_marginal().map_err(|e| e.to_string())?;
            let sigma = fully_mixed_on_support(&marginal).map_err(|e| e.to_string())?;
            let hm = hmin_cq(&cq, &sigma).map_err(|e| e.to_string())?;
            let h2 = h2_collision(&cq, &sigma).map_err(|e| e.to_string())?;
            reports.push(
                EntropyReport::new(Quantity::HMin, hm, vec!["X".into(), "E".into()])
                    .map_err(|e| e.to_string())?,
            );
            reports.push(
                EntropyReport::new(Quantity::H2, h2, vec!["X".into(), "E".into()])
                    .map_err(|e| e.to_string())?,
            );
            reports.push(
                EntropyReport::new(Quantity::HMax, hmax(&marginal), vec!["E".into()])
                    .map_err(|e| e.to_string())?,
            );
            reports.push(
                EntropyReport::new(
                    Quantity::Conditional,
                    privmac_core::entropy::cq_conditional_entropy(&cq)
                        .map_err(|e| e.to_string())?,
                    vec!["X".into(), "E".into()],
                )
                .map_err(|e| e.to_string())?,
            );
        }
        _ => {
            // Channel spec with ensemble: the wiretap quantities at the full
            // user set. I(X;E) = H(X) - H(X|E); I(X;B) = raw + I(X;E).
            let w = wiretap_state(&spec)?;
            let bounds = region_bounds(&w).map_err(|e| e.to_string())?;
            let full = bounds.raw.full_mask();
            let h_x = privmac_core::entropy::shannon(w.state().weights());
            let i_xe = h_x - bounds.h.value(full);
            let i_xb = bounds.raw.value(full) + i_xe;
            for (q, v, label) in [
                (Quantity::Mutual, i_xb, "X;B"),
                (Quantity::Mutual, i_xe, "X;E"),
                (Quantity::Conditional, bounds.h.value(full), "X|E"),
            ] {
                reports
                    .push(EntropyReport::new(q, v, vec![label.into()]).map_err(|e| e.to_string())?);
            }
        }
    }
    output.emit(&manifest, &reports, || {
        let mut s = String::from("quantity,value,subsystems\n");
        for r in &reports {
            s.push_str(&format!(
                "{:?},{},{}\n",
                r.quantity,
                r.value,
                r.subsystems.join("|")
            ));
        }
        s
    })?;
    Ok(true)
}

#[derive(Serialize)]
struct RegionReport {
    bounds_clipped: Vec<f64>,
    bounds_raw: Vec<f64>,
    monotonized: Option<Vec<f64>>,
    vertices: Vec<Vec<f64>>,
    polygon: Option<Vec<(f64, f64)>>,
    submodular_raw: bool,
}

pub fn cmd_region(spec_path: &str, seed: u64, tol: f64, output: &Output) -> Result<bool, String> {
    let (text, bytes) = read_input(spec_path)?;
    let spec = ChannelSpec::parse(&text)?;
    let manifest = RunManifest::new("region", seed, tol).with_input(spec_path, &bytes);
    let w = wiretap_state(&spec)?;
    let bounds = region_bounds(&w).map_err(|e| e.to_string())?;
    let raw_check = is_submodular(&bounds.raw);
    // Corner enumeration needs polymatroid bounds; monotonize when possible.
    let (monotonized, vertices, polygon) = match monotonize(&bounds.clipped) {
        Ok(m) => {
            let region = RateRegion::new(m.clone());
            let verts = region.vertices().map_err(|e| e.to_string())?;
            let poly = if m.num_users() == 2 {
                Some(region.dominant_polygon().map_err(|e| e.to_string())?)
            } else {
                None
            };
            (Some(m.values().to_vec()), verts, poly)
        }
        Err(_) => (None, Vec::new(), None),
    };
    let report = RegionReport {
        bounds_clipped: bounds.clipped.values().to_vec(),
        bounds_raw: bounds.raw.values().to_vec(),
        monotonized,
        vertices: vertices.clone(),
        polygon: polygon.clone(),
        submodular_raw: raw_check.ok,
    };
    output.emit(&manifest, &report, || {
        let mut s = String::from("section,index,values\n");
        for (mask, v) in report.bounds_clipped.iter().enumerate() {
            s.push_str(&format!("bound,{mask},{v}\n"));
        }
        for (i, v) in vertices.iter().enumerate() {
            let coords: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("vertex,{i},{}\n", coords.join("|")));
        }
        if let Some(poly) = &polygon {
            for (i, (x, y)) in poly.iter().enumerate() {
                s.push_str(&format!("polygon,{i},{x}|{y}\n"));
            }
        }
        s
    })?;
    Ok(true)
}

pub fn cmd_hashlemma(count: u64, seed: u64, tol: f64, output: &Output) -> Result<bool, String> {
    let records = soundness_suite(seed, count).map_err(|e| e.to_string())?;
    let violations = records.iter().filter(|r| !r.pass).count();
    let manifest = RunManifest::new("hashlemma", seed, tol);
    let summary = json!({
        "instances": count,
        "violations": violations,
        "records": records,
    });
    output.emit(&manifest, &summary, || {
        let mut s = String::from("instance,l,d_e,lhs,rhs,margin,pass\n");
        for r in &records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.instance, r.l, r.d_e, r.lhs, r.rhs, r.margin, r.pass
            ));
        }
        s
    })?;
    eprintln!("hashlemma: {count} instances, {violations} violations");
    Ok(violations == 0)
}

pub fn cmd_aep(
    pmf_path: &str,
    n: u32,
    epsilon: f64,
    seed: u64,
    output: &Output,
) -> Result<bool, String> {
    let (text, bytes) = read_input(pmf_path)?;
    let spec = PmfSpec::parse(&text)?;
    let pmf = JointPmf::new(spec.x_sizes, spec.y_size, spec.probs).map_err(|e| e.to_string())?;
    let t = build_truncation(&pmf, n, epsilon).map_err(|e| e.to_string())?;
    let report = t.verify();
    let manifest = RunManifest::new("aep", seed, epsilon).with_input(pmf_path, &bytes);
    output.emit(&manifest, &report, || {
        let mut s = String::from("clause,value,pass\n");
        s.push_str(&format!(
            "v_distance,{},{}\n",
            report.v_distance, report.v_ok
        ));
        for (mask, slack) in report.hmin_slack.iter().enumerate() {
            s.push_str(&format!("hmin_slack_{mask},{slack},{}\n", *slack >= -1e-9));
        }
        s.push_str(&format!(
            "hmax_slack,{},{}\n",
            report.hmax_slack, report.hmax_ok
        ));
        s
    })?;
    Ok(report.pass)
}

/// Hoeffding-style tail evaluation exposed for quick formula checks.
pub fn cmd_tail(alphabet: usize, n: u32, delta: f64) -> Result<bool, String> {
    let v = hoeffding_tail(alphabet, n, delta).map_err(|e| e.to_string())?;
    println!("{v}");
    Ok(true)
}

#[derive(Serialize)]
struct OptimizeReport {
    objective: String,
    value: f64,
    status: privmac_core::optimize::OptStatus,
    trace: Vec<f64>,
    restart_bests: Vec<f64>,
    /// True when no ensemble block fixed the alphabet sizes and the
    /// heuristic default (input dimension squared) was used; a sufficient
    /// alphabet size is not known in general.
    alphabets_defaulted: bool,
    raw_at_argument: Option<f64>,
    argument_pmfs: Option<Vec<Vec<f64>>>,
    argument_signals: Option<Vec<Vec<crate::spec::MatrixSpec>>>,
    argument_purifications: Option<Vec<Vec<[f64; 2]>>>,
}

pub fn cmd_optimize(
    spec_path: &str,
    objective: &str,
    budget: usize,
    restarts: usize,
    grid: usize,
    seed: u64,
    tol: f64,
    output: &Output,
) -> Result<bool, String> {
    let (text, bytes) = read_input(spec_path)?;
    let spec = ChannelSpec::parse(&text)?;
    let ch = spec.channel()?;
    let cfg = OptConfig {
        restarts,
        max_iters: budget,
        seed,
        grid_points: grid,
    };
    let manifest = RunManifest::new("optimize", seed, tol).with_input(spec_path, &bytes);
    let report = match objective {
        "p" => {
            let alphabets = spec
                .ensemble
                .as_ref()
                .map(|e| e.pmfs.iter().map(|p| p.len()).collect::<Vec<_>>());
            let defaulted = alphabets.is_none();
            let res = maximize_p_sum(&ch, alphabets.as_deref(), &cfg).map_err(|e| e.to_string())?;
            let raw = p_sum_objective_raw(&ch, &res.argument).map_err(|e| e.to_string())?;
            OptimizeReport {
                objective: "p_sum".into(),
                value: res.value,
                status: res.status,
                trace: res.trace,
                restart_bests: res.restart_bests,
                alphabets_defaulted: defaulted,
                raw_at_argument: Some(raw),
                argument_pmfs: Some(res.argument.users.iter().map(|u| u.pmf.clone()).collect()),
                argument_signals: Some(
                    res.argument
                        .users
                        .iter()
                        .map(|u| u.signals.iter().map(|s| from_matrix(s.matrix())).collect())
                        .collect(),
                ),
                argument_purifications: None,
            }
        }
        "q" => {
            let res = maximize_q_sum(&ch, &cfg, &[]).map_err(|e| e.to_string())?;
            OptimizeReport {
                objective: "q_sum".into(),
                value: res.value,
                status: res.status,
                trace: res.trace,
                restart_bests: res.restart_bests,
                alphabets_defaulted: false,
                raw_at_argument: None,
                argument_pmfs: None,
                argument_signals: None,
                argument_purifications: Some(
                    res.argument
                        .users
                        .iter()
                        .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                        .collect(),
                ),
            }
        }
        other => return Err(format!("unknown objective {other} (use p or q)")),
    };
    output.emit(&manifest, &report, || {
        let mut s = String::from("field,value\n");
        s.push_str(&format!("objective,{}\n", report.objective));
        s.push_str(&format!("value,{}\n", report.value));
        s.push_str(&format!("status,{:?}\n", report.status));
        s
    })?;
    Ok(true)
}

pub fn cmd_simulate(
    spec_path: &str,
    n: u32,
    hash_bits: Vec<u32>,
    bin_bits: Vec<u32>,
    seed: u64,
    alpha: f64,
    output: &Output,
) -> Result<bool, String> {
    let (text, bytes) = read_input(spec_path)?;
    let spec = ChannelSpec::parse(&text)?;
    let ch = spec.cq_wiretap()?;
    let pmfs = spec
        .ensemble
        .as_ref()
        .ok_or("simulate needs an ensemble block with pmfs")?
        .pmfs
        .clone();
    let cfg = SimConfig {
        n,
        rates: SimRates {
            hash_bits,
            bin_bits,
        },
        seed,
        alpha,
        bin_epsilon: 0.25,
    };
    let report = simulate(&ch, &pmfs, &cfg).map_err(|e| e.to_string())?;
    let manifest = RunManifest::new("simulate", seed, alpha).with_input(spec_path, &bytes);
    output.emit(&manifest, &report, || {
        let mut s = String::from("message,error,leakage,retained\n");
        for m in &report.per_message {
            s.push_str(&format!(
                "{},{},{},{}\n",
                m.id, m.error, m.leakage, m.retained
            ));
        }
        s
    })?;
    Ok(true)
}

pub fn cmd_degradable(
    spec_path: &str,
    tol: f64,
    seed: u64,
    output: &Output,
) -> Result<bool, String> {
    let (text, bytes) = read_input(spec_path)?;
    let spec = ChannelSpec::parse(&text)?;
    let ch = spec.channel()?;
    let rep = check_degradable(&ch, tol).map_err(|e| e.to_string())?;
    let manifest = RunManifest::new("degradable", seed, tol).with_input(spec_path, &bytes);
    let payload = json!({
        "degradable": rep.degradable,
        "residual": rep.residual,
        "iterations": rep.iterations,
    });
    output.emit(&manifest, &payload, || {
        format!(
            "field,value\ndegradable,{}\nresidual,{}\niterations,{}\n",
            rep.degradable, rep.residual, rep.iterations
        )
    })?;
    Ok(rep.degradable)
}
