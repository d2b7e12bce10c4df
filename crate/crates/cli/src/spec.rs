//! On-disk formats: channel/state spec files and the run manifest embedded in
//! every output. One versioned JSON container for everything; complex
//! matrices are nested arrays of `[re, im]` pairs.

use num_complex::Complex64;
use privmac_core::codesim::CqMacWiretapChannel;
use privmac_core::linalg::ComplexMatrix;
use privmac_core::optimize::{InputEnsemble, UserEnsemble};
use privmac_core::qstate::{CqState, DensityOperator, QuantumChannel};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

/// A complex matrix as rows of `[re, im]` pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

pub fn to_matrix(spec: &MatrixSpec) -> Result<ComplexMatrix, String> {
    let rows = spec.len();
    if rows == 0 {
        return Err("matrix has no rows".into());
    }
    let cols = spec[0].len();
    let mut data = Vec::with_capacity(rows * cols);
    for (i, row) in spec.iter().enumerate() {
        if row.len() != cols {
            return Err(format!(
                "row {i} has {} entries, expected {cols}",
                row.len()
            ));
        }
        for &[re, im] in row {
            data.push(Complex64::new(re, im));
        }
    }
    ComplexMatrix::new(rows, cols, data).map_err(|e| e.to_string())
}

pub fn from_matrix(m: &ComplexMatrix) -> MatrixSpec {
    (0..m.rows)
        .map(|i| (0..m.cols).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Optional input-ensemble block: per-user pmfs and signal-state matrices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnsembleSpec {
    pub pmfs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signals: Option<Vec<Vec<MatrixSpec>>>,
}

/// The one spec container. `kind` selects which fields are meaningful.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChannelSpec {
    pub version: u32,
    pub kind: SpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Kraus-form channel fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<MatrixSpec>>,
    /// cq wiretap channel fields: one B (x) E state per joint symbol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_e: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cq_states: Option<Vec<MatrixSpec>>,
    /// Plain density-operator fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSpec>,
    /// cq-state fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond_states: Option<Vec<MatrixSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Kraus,
    CqWiretap,
    State,
    CqState,
}

impl ChannelSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let spec: ChannelSpec =
            serde_json::from_str(text).map_err(|e| format!("parse error: {e}"))?;
        if spec.version != FORMAT_VERSION {
            return Err(format!(
                "unsupported spec version {} (expected {FORMAT_VERSION})",
                spec.version
            ));
        }
        Ok(spec)
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn serialize(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn channel(&self) -> Result<QuantumChannel, String> {
        if self.kind != SpecKind::Kraus {
            return Err("spec is not a Kraus-form channel".into());
        }
        let in_dims = self.in_dims.clone().ok_or("missing in_dims")?;
        let out_dim = self.out_dim.ok_or("missing out_dim")?;
        let kraus = self
            .kraus
            .as_ref()
            .ok_or("missing kraus")?
            .iter()
            .map(to_matrix)
            .collect::<Result<Vec<_>, _>>()?;
        QuantumChannel::new(in_dims, out_dim, kraus).map_err(|e| format!("invalid channel: {e}"))
    }

    pub fn cq_wiretap(&self) -> Result<CqMacWiretapChannel, String> {
        if self.kind != SpecKind::CqWiretap {
            return Err("spec is not a cq wiretap channel".into());
        }
        let x_sizes = self.x_sizes.clone().ok_or("missing x_sizes")?;
        let d_b = self.d_b.ok_or("missing d_b")?;
        let d_e = self.d_e.ok_or("missing d_e")?;
        let states = self
            .cq_states
            .as_ref()
            .ok_or("missing cq_states")?
            .iter()
            .map(|m| to_matrix(m).and_then(|m| DensityOperator::new(m).map_err(|e| e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        CqMacWiretapChannel::new(x_sizes, d_b, d_e, states).map_err(|e| e.to_string())
    }

    pub fn state(&self) -> Result<(Vec<usize>, DensityOperator), String> {
        if self.kind != SpecKind::State {
            return Err("spec is not a state fixture".into());
        }
        let dims = self.dims.clone().ok_or("missing dims")?;
        let m = to_matrix(self.matrix.as_ref().ok_or("missing matrix")?)?;
        let rho = DensityOperator::new(m).map_err(|e| format!("invalid state: {e}"))?;
        if dims.iter().product::<usize>() != rho.dim() {
            return Err("dims do not multiply to the matrix dimension".into());
        }
        Ok((dims, rho))
    }

    pub fn cq_state(&self) -> Result<CqState, String> {
        if self.kind != SpecKind::CqState {
            return Err("spec is not a cq-state fixture".into());
        }
        let reg_sizes = self.reg_sizes.clone().ok_or("missing reg_sizes")?;
        let weights = self.weights.clone().ok_or("missing weights")?;
        let cond = self
            .cond_states
            .as_ref()
            .ok_or("missing cond_states")?
            .iter()
            .map(|m| to_matrix(m).and_then(|m| DensityOperator::new(m).map_err(|e| e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        CqState::new(reg_sizes, weights, cond).map_err(|e| e.to_string())
    }

    /// Build the input ensemble for a Kraus-form channel spec; signal states
    /// default to the computational basis when only pmfs are given.
    pub fn input_ensemble(&self, ch: &QuantumChannel) -> Result<InputEnsemble, String> {
        let ens = self.ensemble.as_ref().ok_or("spec has no ensemble block")?;
        let users = match &ens.signals {
            None => {
                return InputEnsemble::classical(ch, ens.pmfs.clone()).map_err(|e| e.to_string())
            }
            Some(signal_specs) => {
                if signal_specs.len() != ens.pmfs.len() {
                    return Err("ensemble signals/pmfs user count mismatch".into());
                }
                ens.pmfs
                    .iter()
                    .zip(signal_specs)
                    .map(|(pmf, mats)| {
                        let signals = mats
                            .iter()
                            .map(|m| {
                                to_matrix(m).and_then(|m| {
                                    DensityOperator::new(m).map_err(|e| e.to_string())
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(UserEnsemble {
                            pmf: pmf.clone(),
                            signals,
                        })
                    })
                    .collect::<Result<Vec<_>, String>>()?
            }
        };
        let ensemble = InputEnsemble { users };
        ensemble.validate(ch).map_err(|e| e.to_string())?;
        Ok(ensemble)
    }
}

/// Joint pmf file for the smoothing command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmfSpec {
    pub version: u32,
    pub x_sizes: Vec<usize>,
    pub y_size: usize,
    pub probs: Vec<f64>,
}

impl PmfSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let spec: PmfSpec = serde_json::from_str(text).map_err(|e| format!("parse error: {e}"))?;
        if spec.version != FORMAT_VERSION {
            return Err(format!("unsupported pmf version {}", spec.version));
        }
        Ok(spec)
    }
}

/// FNV-1a 64-bit digest of the raw input bytes, for reproducibility records.
pub fn digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Provenance block embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub format_version: u32,
    pub subcommand: String,
    pub seed: u64,
    pub tolerance: f64,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub digest: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, tolerance: f64) -> Self {
        Self {
            tool: "privmac",
            tool_version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            subcommand: subcommand.to_string(),
            seed,
            tolerance,
            inputs: Vec::new(),
        }
    }

    pub fn with_input(mut self, path: &str, bytes: &[u8]) -> Self {
        self.inputs.push(InputDigest {
            path: path.to_string(),
            digest: digest(bytes),
        });
        self
    }

    /// CSV comment header lines.
    pub fn csv_header(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# tool={} version={} format={} subcommand={} seed={} tolerance={}\n",
            self.tool,
            self.tool_version,
            self.format_version,
            self.subcommand,
            self.seed,
            self.tolerance
        ));
        for i in &self.inputs {
            out.push_str(&format!("# input={} digest={}\n", i.path, i.digest));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_spec() -> String {
        serde_json::json!({
            "version": 1,
            "kind": "kraus",
            "note": "identity qubit channel",
            "in_dims": [2],
            "out_dim": 2,
            "kraus": [[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]],
            "ensemble": { "pmfs": [[0.5, 0.5]] }
        })
        .to_string()
    }

    #[test]
    fn parse_and_build_channel() {
        let spec = ChannelSpec::parse(&sample_spec()).unwrap();
        let ch = spec.channel().unwrap();
        assert_eq!(ch.in_dims, vec![2]);
        let ens = spec.input_ensemble(&ch).unwrap();
        assert_eq!(ens.users.len(), 1);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let spec = ChannelSpec::parse(&sample_spec()).unwrap();
        let once = spec.serialize();
        let twice = ChannelSpec::parse(&once).unwrap().serialize();
        assert_eq!(once, twice);
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sample_spec()).unwrap();
        v["version"] = serde_json::json!(99);
        assert!(ChannelSpec::parse(&v.to_string()).is_err());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest(b"abc"), digest(b"abc"));
        assert_ne!(digest(b"abc"), digest(b"abd"));
    }

    #[test]
    fn matrix_shape_errors_are_reported() {
        let bad = vec![vec![[1.0, 0.0]], vec![[1.0, 0.0], [0.0, 0.0]]];
        assert!(to_matrix(&bad).is_err());
    }
}
