//! Measurement records and their on-disk form.
//!
//! `times[k] = (k + 1) dt` closes the interval that sample `k` and increment `k` belong to.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use super::{Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::field::Channel;
use crate::fock::{JointState, StateDump, ORDERING_QUBIT_MAJOR};
use crate::qubit::QubitDM;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: JointState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub scheme: Scheme,
    pub channels: Vec<Channel>,
    pub times: Vec<f64>,
    /// Wiener increments, one vector per channel.
    pub dw: Vec<Vec<f64>>,
    /// Output samples `<X_j> + dW_j / dt`, one vector per channel.
    pub samples: Vec<Vec<f64>>,
    pub initial_qubit: QubitDM,
    /// Reduced qubit state after each step (empty when not recorded).
    pub qubit: Vec<QubitDM>,
    pub snapshots: Vec<Snapshot>,
}

/// JSON sidecar written next to a record CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub config: SimConfig,
    pub record_sha1: String,
    pub columns: Vec<String>,
    pub ordering: String,
    pub conventions: serde_json::Value,
}

/// `sha1("blob <len>\0" || bytes)`, the hash git assigns to a file with these contents.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(40);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Sign and ordering conventions, written next to every data file.
pub fn conventions() -> serde_json::Value {
    serde_json::json!({
        "sigma_z": "+1 on e, -1 on g",
        "rho_ge": "<g|rho|e>",
        "theta_beta": "arg(alpha_e - alpha_g) in (-pi, pi]; pi for a resonant drive from vacuum",
        "times": "t_k = (k+1) dt closes the interval of sample k",
        "ordering": ORDERING_QUBIT_MAJOR,
    })
}

impl TrajectoryRecord {
    pub(crate) fn empty(cfg: &SimConfig) -> Result<Self> {
        let channels = cfg.channels();
        let n = cfg.n_steps();
        let nch = channels.len();
        Ok(Self {
            dt: cfg.dt,
            scheme: cfg.scheme,
            times: Vec::with_capacity(n),
            dw: vec![Vec::with_capacity(n); nch],
            samples: vec![Vec::with_capacity(n); nch],
            channels,
            initial_qubit: cfg.initial_qubit_dm()?,
            qubit: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of samples covering `[0, t]`.
    pub fn steps_until(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if !(k >= 1.0) || (k * self.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::CadenceMismatch(format!("t = {t} is not a multiple of dt = {}", self.dt)));
        }
        let k = k as usize;
        if k > self.len() {
            return Err(Error::CadenceMismatch(format!("t = {t} beyond record end {}", self.len() as f64 * self.dt)));
        }
        Ok(k)
    }

    /// `(1/t_m) int_0^{t_m}` of channel `j`'s output.
    pub fn integrated(&self, channel: usize, t_m: f64) -> Result<f64> {
        let k = self.steps_until(t_m)?;
        let s: f64 = self.samples[channel][..k].iter().sum();
        Ok(s * self.dt / t_m)
    }

    pub fn qubit_at(&self, t: f64) -> Result<QubitDM> {
        if self.qubit.is_empty() {
            return Err(Error::InvalidConfig("record carries no qubit path".into()));
        }
        Ok(self.qubit[self.steps_until(t)? - 1])
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string(), "I".to_string()];
        if self.scheme == Scheme::TwoQuadrature {
            cols.push("Q".into());
        }
        for j in 0..self.n_channels() {
            cols.push(format!("dW{}", j + 1));
        }
        cols
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns())?;
        let nch = self.n_channels();
        let mut row = Vec::with_capacity(1 + 2 * nch);
        for k in 0..self.len() {
            row.clear();
            row.push(self.times[k].to_string());
            for j in 0..nch {
                row.push(self.samples[j][k].to_string());
            }
            for j in 0..nch {
                row.push(self.dw[j][k].to_string());
            }
            w.write_record(&row)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn content_hash(&self) -> Result<String> {
        Ok(git_blob_sha1(&self.to_csv_bytes()?))
    }

    /// Parses a record CSV; the scheme follows from the header, `phi_lo` fixes the single channel.
    pub fn from_csv_bytes(bytes: &[u8], phi_lo: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let scheme = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["t", "I", "dW1"] => Scheme::SingleQuadrature,
            ["t", "I", "Q", "dW1", "dW2"] => Scheme::TwoQuadrature,
            other => return Err(Error::InvalidConfig(format!("unrecognized record header {other:?}"))),
        };
        let channels = scheme.channels(phi_lo);
        let nch = channels.len();
        let mut times = Vec::new();
        let mut samples = vec![Vec::new(); nch];
        let mut dw = vec![Vec::new(); nch];
        for row in r.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64> {
                row.get(i)
                    .ok_or_else(|| Error::InvalidConfig("short record row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("bad number in record: {e}")))
            };
            times.push(num(0)?);
            for j in 0..nch {
                samples[j].push(num(1 + j)?);
                dw[j].push(num(1 + nch + j)?);
            }
        }
        if times.is_empty() {
            return Err(Error::InvalidConfig("empty record".into()));
        }
        let dt = times[0];
        for (k, t) in times.iter().enumerate() {
            if (t - (k + 1) as f64 * dt).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::CadenceMismatch(format!("non-uniform time grid at row {k}")));
            }
        }
        Ok(Self {
            dt,
            scheme,
            channels,
            times,
            dw,
            samples,
            initial_qubit: QubitDM::plus(),
            qubit: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    pub fn read_csv(path: &Path, phi_lo: f64) -> Result<Self> {
        Self::from_csv_bytes(&fs::read(path)?, phi_lo)
    }

    /// Writes `record.csv`, `record.json` (config, hash, conventions) and, when present,
    /// `snapshots.json` into `dir`. Returns the record hash.
    pub fn write_dir(&self, dir: &Path, cfg: &SimConfig) -> Result<String> {
        fs::create_dir_all(dir)?;
        let bytes = self.to_csv_bytes()?;
        let hash = git_blob_sha1(&bytes);
        fs::write(dir.join("record.csv"), &bytes)?;
        let meta = RecordMetadata {
            config: cfg.clone(),
            record_sha1: hash.clone(),
            columns: self.columns(),
            ordering: ORDERING_QUBIT_MAJOR.to_string(),
            conventions: conventions(),
        };
        fs::write(dir.join("record.json"), serde_json::to_string_pretty(&meta)?)?;
        if !self.snapshots.is_empty() {
            let dumps: Vec<serde_json::Value> = self
                .snapshots
                .iter()
                .map(|s| serde_json::json!({"t": s.t, "state": s.state.to_dump()}))
                .collect();
            fs::write(dir.join("snapshots.json"), serde_json::to_string(&dumps)?)?;
        }
        if !self.qubit.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("qubit.csv"))?;
            w.write_record(["t", "rho_gg", "rho_ee", "re_ge", "im_ge"])?;
            for (t, q) in self.times.iter().zip(&self.qubit) {
                w.write_record([t.to_string(), q.rho_gg.to_string(), q.rho_ee.to_string(), q.rho_ge.re.to_string(), q.rho_ge.im.to_string()])?;
            }
            w.flush()?;
        }
        Ok(hash)
    }

    /// Reads back a directory written by [`write_dir`](Self::write_dir), checking the hash.
    pub fn read_dir(dir: &Path) -> Result<(Self, RecordMetadata)> {
        let meta: RecordMetadata = serde_json::from_str(&fs::read_to_string(dir.join("record.json"))?)?;
        let bytes = fs::read(dir.join("record.csv"))?;
        let hash = git_blob_sha1(&bytes);
        if hash != meta.record_sha1 {
            return Err(Error::InvariantViolation(format!("record hash {hash} does not match metadata {}", meta.record_sha1)));
        }
        let mut rec = Self::from_csv_bytes(&bytes, meta.config.params.phi_lo)?;
        rec.initial_qubit = meta.config.initial_qubit_dm()?;
        if dir.join("snapshots.json").exists() {
            let raw: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(dir.join("snapshots.json"))?)?;
            for v in raw {
                let t = v["t"].as_f64().unwrap_or(0.0);
                let dump: StateDump = serde_json::from_value(v["state"].clone())?;
                rec.snapshots.push(Snapshot { t, state: JointState::from_dump(&dump)? });
            }
        }
        Ok((rec, meta))
    }
}
